"""Tables of return probabilities p_m(0) and expected self-intersection counts.

E B_n = sum_{m=1}^{n-1} (n - m) p_m(0).  The p_m are exact (convolution) for
m <= 64, trapezoid quadrature of the characteristic function up to
``EXACT_MAX``, and beyond that a barycentric interpolant of m p_m(0) in the
variable 1/m through quadrature nodes, anchored at the local-limit value
1 / (2 pi sqrt(det Gamma)).  The interpolant is checked against fresh
quadrature at off-node points and the worst relative error is kept on the
table.
"""
import json
import logging
import os

import numpy as np
from scipy.interpolate import BarycentricInterpolator

from .walk import DP_MAX_M, _quadrature_band, return_probabilities_dp

__all__ = [
    "ExpectationTable",
    "expectation_table",
    "expected_silt",
    "expected_silt_asymptotic",
    "clear_tables",
]

log = logging.getLogger(__name__)

EXACT_MAX = 1 << 14
N_CHEB = 28

_TABLES = {}


def _interp_error_checks(dist, fn, m_values):
    exact = np.array([_quadrature_band(dist, [m])[0] for m in m_values])
    approx = fn(np.asarray(m_values)) / np.asarray(m_values)
    return float(np.max(np.abs(approx - exact) / exact))


class ExpectationTable:
    """p_m(0) for m = 0..m_max and the induced E B_n for n = 0..m_max + 1."""

    def __init__(self, dist, p, interp_error=0.0):
        self.dist = dist
        self.p = np.asarray(p, dtype=float)
        self.p.setflags(write=False)
        self.interp_error = interp_error
        m = np.arange(len(self.p))
        c1 = np.concatenate([[0.0], np.cumsum(self.p[1:])])
        c2 = np.concatenate([[0.0], np.cumsum(m[1:] * self.p[1:])])
        # E B_n = n * sum_{m<n} p_m - sum_{m<n} m p_m
        n = np.arange(1, len(self.p) + 1)
        self._eb = np.concatenate([[0.0], n * c1 - c2])
        self._eb.setflags(write=False)

    @property
    def m_max(self):
        return len(self.p) - 1

    def expected(self, n):
        n = np.asarray(n)
        if np.any(n < 0) or np.any(n > self.m_max + 1):
            raise ValueError(f"n outside table range 0..{self.m_max + 1}")
        out = self._eb[n]
        return float(out) if out.ndim == 0 else out

    @classmethod
    def compute(cls, dist, m_max):
        m_max = max(int(m_max), 1)
        p = np.empty(m_max + 1)
        top = min(m_max, DP_MAX_M)
        p[: top + 1] = return_probabilities_dp(dist, top)
        lo = DP_MAX_M + 1
        exact_top = m_max if not dist.strongly_aperiodic else min(m_max, EXACT_MAX)
        while lo <= exact_top:
            hi = min(2 * lo - 1, exact_top)
            p[lo:hi + 1] = _quadrature_band(dist, np.arange(lo, hi + 1))
            lo = hi + 1
        err = 0.0
        if m_max > EXACT_MAX and dist.strongly_aperiodic:
            fn = _large_m_interpolant(dist)
            m = np.arange(EXACT_MAX + 1, m_max + 1)
            p[EXACT_MAX + 1:] = fn(m) / m
            checks = np.unique(np.geomspace(EXACT_MAX * 1.37, max(m_max, EXACT_MAX * 2), 5).astype(int))
            err = _interp_error_checks(dist, fn, checks)
            log.debug("p_m interpolant max relative error %.3g", err)
        return cls(dist, p, err)

    # persisted format: one JSON header line, then raw little-endian float64
    def save(self, path):
        header = {"dist": self.dist.to_config(), "key": self.dist.key, "m_max": self.m_max,
                  "interp_error": self.interp_error, "dtype": "<f8"}
        tmp = f"{path}.tmp"
        with open(tmp, "wb") as fh:
            fh.write((json.dumps(header) + "\n").encode())
            fh.write(self.p.astype("<f8").tobytes())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path, dist):
        with open(path, "rb") as fh:
            header = json.loads(fh.readline())
            if header["key"] != dist.key:
                raise ValueError(f"{path} holds a table for a different distribution")
            p = np.frombuffer(fh.read(), dtype="<f8")
        if len(p) != header["m_max"] + 1:
            raise ValueError(f"{path} is truncated")
        return cls(dist, p.copy(), header.get("interp_error", 0.0))


def _large_m_interpolant(dist):
    # nodes: Chebyshev points of x = EXACT_MAX / m on (0, 1], plus x = 0
    j = np.arange(N_CHEB + 1)
    x = 0.5 * (1 - np.cos(np.pi * j / N_CHEB))
    m_nodes = np.unique(np.round(EXACT_MAX / x[1:]).astype(np.int64))
    vals = m_nodes * np.array([_quadrature_band(dist, [m])[0] for m in m_nodes])
    limit = 1.0 / (2 * np.pi * np.sqrt(dist.det_gamma))
    xs = np.concatenate([[0.0], EXACT_MAX / m_nodes])
    ys = np.concatenate([[limit], vals])
    interp = BarycentricInterpolator(xs, ys)
    return lambda m: interp(EXACT_MAX / np.asarray(m, dtype=float))


def _cache_path(cache_dir, dist):
    return os.path.join(cache_dir, f"eb_{dist.key}.bin")


def expectation_table(dist, n_max, cache_dir=None):
    """Table covering E B_n up to ``n_max``; reuses in-memory and on-disk copies."""
    need = max(int(n_max) - 1, 1)
    tab = _TABLES.get(dist.key)
    if tab is not None and tab.m_max >= need:
        return tab
    if cache_dir is not None:
        path = _cache_path(cache_dir, dist)
        if os.path.exists(path):
            tab = ExpectationTable.load(path, dist)
            if tab.m_max >= need:
                _TABLES[dist.key] = tab
                return tab
    # grow geometrically so repeated small extensions stay cheap
    size = max(need, 2 * tab.m_max if tab is not None else 0, 256)
    tab = ExpectationTable.compute(dist, size)
    _TABLES[dist.key] = tab
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        tab.save(_cache_path(cache_dir, dist))
    return tab


def clear_tables():
    _TABLES.clear()


def expected_silt(dist, n, cache_dir=None):
    """E B_n = sum_{1<=j<k<=n} p_{k-j}(0)."""
    if np.any(np.asarray(n) < 1):
        raise ValueError("n must be positive")
    return expectation_table(dist, np.max(n), cache_dir).expected(n)


def expected_silt_asymptotic(dist, n):
    """Leading-order n log n / (2 pi sqrt(det Gamma))."""
    n = np.asarray(n, dtype=float)
    return n * np.log(n) / (2 * np.pi * np.sqrt(dist.det_gamma))
