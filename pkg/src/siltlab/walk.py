"""Step distributions on the planar lattice, path sampling, and return probabilities.

A walk is described by a finite, symmetric step law on Z^2.  Everything else
in the package (self-intersection counts, expectations, tail experiments)
is driven by a :class:`StepDistribution`.
"""
import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from math import gcd

import numpy as np

from .rng import stream_rng

__all__ = [
    "StepDistribution",
    "Path",
    "build_step_distribution",
    "preset",
    "PRESETS",
    "counterexample_walk",
    "sample_path",
    "sample_steps",
    "characteristic_function",
    "gaussian_bound_constant",
    "return_probability",
    "return_probabilities_dp",
    "return_probability_quadrature",
    "load_distribution",
    "dump_distribution",
    "path_to_csv",
    "path_from_csv",
]

MASS_TOL = 1e-12
APERIODIC_GRID = 512
APERIODIC_TOL = 1e-9
DP_MAX_M = 64
MAX_WINDOW_POINTS = 1 << 13


class AsymmetricLawError(ValueError):
    pass


def _lattice_index(steps):
    """Index of the subgroup of Z^2 generated by ``steps`` (0 if rank < 2)."""
    g = 0
    pts = [tuple(int(v) for v in s) for s in steps]
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            g = gcd(g, abs(pts[i][0] * pts[j][1] - pts[i][1] * pts[j][0]))
    return g


@dataclass(frozen=True, eq=False)
class StepDistribution:
    """Finite symmetric step law on Z^2.

    Use :func:`build_step_distribution` rather than the constructor; it
    validates the law and fills in the derived fields.
    """

    steps: np.ndarray
    probs: np.ndarray
    covariance: np.ndarray
    det_gamma: float
    strongly_aperiodic: bool
    generates_lattice: bool
    symmetric: bool = True
    name: str = "custom"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def atoms(self):
        return [((int(s[0]), int(s[1])), float(p)) for s, p in zip(self.steps, self.probs)]

    @property
    def max_range(self):
        """Largest coordinate magnitude of a single step."""
        return int(np.abs(self.steps).max())

    def phi(self, u1, u2):
        """Real characteristic function evaluated on broadcastable arrays."""
        u1 = np.asarray(u1, dtype=float)
        u2 = np.asarray(u2, dtype=float)
        out = np.zeros(np.broadcast(u1, u2).shape)
        for (dx, dy), p in zip(self.steps, self.probs):
            if dx == 0 and dy == 0:
                out += p
            else:
                out += p * np.cos(dx * u1 + dy * u2)
        return out

    @property
    def key(self):
        """Stable content hash, used for cache file names."""
        if "key" not in self._cache:
            text = json.dumps(self.to_config(), separators=(",", ":"))
            self._cache["key"] = hashlib.sha256(text.encode()).hexdigest()[:16]
        return self._cache["key"]

    def to_config(self):
        return [[int(s[0]), int(s[1]), float(p)] for s, p in zip(self.steps, self.probs)]

    def __eq__(self, other):
        return isinstance(other, StepDistribution) and self.key == other.key

    def __hash__(self):
        return hash(self.key)


def build_step_distribution(spec, name="custom"):
    """Validate a list of ``((dx, dy), mass)`` pairs and build the law.

    ``spec`` may also hold ``[dx, dy, mass]`` triples.  Duplicate points are
    merged.  Asymmetric laws and laws whose masses do not sum to one are
    rejected.  Laws that are not strongly aperiodic are accepted but flagged.
    """
    merged = {}
    for item in spec:
        if len(item) == 2:
            (dx, dy), p = item
        else:
            dx, dy, p = item
        if int(dx) != dx or int(dy) != dy:
            raise ValueError(f"step ({dx}, {dy}) is not a lattice point")
        p = float(p)
        if not p > 0:
            raise ValueError(f"mass at ({dx}, {dy}) must be positive, got {p}")
        key = (int(dx), int(dy))
        merged[key] = merged.get(key, 0.0) + p
    if not merged:
        raise ValueError("empty step distribution")
    total = sum(merged.values())
    if abs(total - 1.0) > MASS_TOL:
        raise ValueError(f"masses sum to {total!r}, not 1")
    for (dx, dy), p in merged.items():
        q = merged.get((-dx, -dy))
        if q is None or abs(q - p) > MASS_TOL:
            raise AsymmetricLawError(f"asymmetric law: ({dx}, {dy}) has no mirror atom of equal mass")

    keys = sorted(merged)
    steps = np.array(keys, dtype=np.int64)
    probs = np.array([merged[k] for k in keys])
    steps.setflags(write=False)
    probs.setflags(write=False)
    cov = (steps.T * probs) @ steps
    cov = 0.5 * (cov + cov.T)
    cov.setflags(write=False)
    det = float(np.linalg.det(cov))
    if not det > 0:
        raise ValueError("degenerate covariance; the law must be genuinely two-dimensional")
    generates = _lattice_index(keys) == 1

    dist = StepDistribution(
        steps=steps,
        probs=probs,
        covariance=cov,
        det_gamma=det,
        strongly_aperiodic=False,
        generates_lattice=generates,
        name=name,
    )
    object.__setattr__(dist, "strongly_aperiodic", generates and _aperiodicity_scan(dist))
    return dist


def _aperiodicity_scan(dist):
    # grid of [-pi, pi)^2 including the origin at index N/2; the 3x3 block of
    # cells around the origin is excluded, the half-period corners are exact
    n = APERIODIC_GRID
    u = -np.pi + 2 * np.pi * np.arange(n) / n
    phi = np.abs(dist.phi(u[:, None], u[None, :]))
    c = n // 2
    phi[c - 1:c + 2, c - 1:c + 2] = 0.0
    if phi.max() >= 1 - APERIODIC_TOL:
        return False
    corners = dist.phi(np.array([np.pi, 0.0, np.pi]), np.array([0.0, np.pi, np.pi]))
    return bool(np.all(np.abs(corners) < 1 - APERIODIC_TOL))


def _lazy():
    return build_step_distribution(
        [((0, 0), 0.5), ((1, 0), 0.125), ((-1, 0), 0.125), ((0, 1), 0.125), ((0, -1), 0.125)],
        name="lazy",
    )


def _simple():
    return build_step_distribution(
        [((1, 0), 0.25), ((-1, 0), 0.25), ((0, 1), 0.25), ((0, -1), 0.25)], name="simple"
    )


def _king():
    return build_step_distribution(
        [((dx, dy), 0.125) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)],
        name="king",
    )


def counterexample_walk(N=10):
    """Walk that jumps by N along an axis with total probability 2/N^2, else stays.

    Its covariance is the identity.  Its support generates N Z^2 rather than
    Z^2, so it is flagged as not strongly aperiodic.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    eps = 2.0 / N**2
    spec = [((0, 0), 1 - eps)] + [((s * N, 0), eps / 4) for s in (1, -1)] + [
        ((0, s * N), eps / 4) for s in (1, -1)
    ]
    return build_step_distribution(spec, name=f"counterexample:{N}")


PRESETS = {"lazy": _lazy, "simple": _simple, "king": _king, "counterexample": counterexample_walk}


def preset(name):
    """Look up a shipped distribution; ``"counterexample:N"`` selects N."""
    base, _, arg = name.partition(":")
    if base not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    if base == "counterexample":
        return counterexample_walk(int(arg) if arg else 10)
    if arg:
        raise KeyError(f"preset {base!r} takes no parameter")
    return PRESETS[base]()


@dataclass(frozen=True)
class Path:
    """Walk positions S_1..S_n (the origin S_0 is not stored)."""

    points: np.ndarray
    seed: int = -1
    stream: int = -1

    @property
    def n(self):
        return len(self.points)

    def __len__(self):
        return len(self.points)


def sample_steps(dist, shape, rng):
    """Draw atom indices of the given shape."""
    cdf = np.cumsum(dist.probs)
    idx = np.searchsorted(cdf, rng.random(shape), side="right")
    return np.minimum(idx, len(cdf) - 1)


def sample_path(dist, n, seed, stream=0):
    """Sample S_1..S_n from the generator keyed by ``(seed, stream)``."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = stream_rng(seed, stream)
    pts = np.cumsum(dist.steps[sample_steps(dist, n, rng)], axis=0)
    pts.setflags(write=False)
    return Path(pts, seed=seed, stream=stream)


def characteristic_function(dist, u):
    """phi(u) = E exp(i u . S_1), summed exactly over the atoms.

    ``u`` is a pair or an array with trailing dimension 2; the result is
    complex.
    """
    u = np.asarray(u, dtype=float)
    phase = u[..., 0, None] * dist.steps[:, 0] + u[..., 1, None] * dist.steps[:, 1]
    return np.sum(dist.probs * np.exp(1j * phase), axis=-1)


def gaussian_bound_constant(dist, grid=APERIODIC_GRID):
    """Largest c with phi(u) <= exp(-c|u|^2) at every point of a grid on [-pi, pi]^2.

    Grid points where phi <= 0 place no constraint.  Returns 0 if the walk
    has a nonzero frequency with phi = 1.
    """
    u = -np.pi + 2 * np.pi * np.arange(grid + 1) / grid
    U1, U2 = np.meshgrid(u, u, indexing="ij")
    r2 = U1**2 + U2**2
    phi = dist.phi(U1, U2)
    mask = (r2 > 0) & (phi > 0)
    with np.errstate(divide="ignore"):
        c = -np.log(phi[mask]) / r2[mask]
    return float(max(0.0, c.min()))


def _abs_decay_constant(dist, peaks, grid=256):
    # c with |phi(u)| <= exp(-c d(u)^2), d = torus distance to the nearest peak
    u = -np.pi + 2 * np.pi * (np.arange(grid) + 0.5) / grid
    U1, U2 = np.meshgrid(u, u, indexing="ij")
    d2 = np.full(U1.shape, np.inf)
    for p1, p2 in peaks:
        e1 = np.abs((U1 - p1 + np.pi) % (2 * np.pi) - np.pi)
        e2 = np.abs((U2 - p2 + np.pi) % (2 * np.pi) - np.pi)
        d2 = np.minimum(d2, e1**2 + e2**2)
    a = np.abs(dist.phi(U1, U2))
    with np.errstate(divide="ignore"):
        c = -np.log(a) / d2
    return float(c.min())


def return_probabilities_dp(dist, m_max):
    """Exact p_m(0) for m = 0..m_max by repeated convolution on the reachable box."""
    R = dist.max_range * m_max
    size = 2 * R + 1
    cur = np.zeros((size, size))
    cur[R, R] = 1.0
    out = np.empty(m_max + 1)
    out[0] = 1.0
    for m in range(1, m_max + 1):
        nxt = np.zeros_like(cur)
        for (dx, dy), p in zip(dist.steps, dist.probs):
            src = cur[max(0, -dx):size - max(0, dx), max(0, -dy):size - max(0, dy)]
            nxt[max(0, dx):size - max(0, -dx), max(0, dy):size - max(0, -dy)] += p * src
        cur = nxt
        out[m] = cur[R, R]
    return out


def _peaks(dist):
    corners = [(0.0, 0.0), (np.pi, 0.0), (0.0, np.pi), (np.pi, np.pi)]
    vals = dist.phi(np.array([c[0] for c in corners]), np.array([c[1] for c in corners]))
    return [c for c, v in zip(corners, vals) if abs(v) > 1 - 1e-12]


def _log_abs_phi(dist, u1, u2):
    # log|phi| with phi - 1 = -2 sum p sin^2(x.u / 2) kept exact near phi = 1
    phi_m1 = np.zeros(np.broadcast(u1, u2).shape)
    for (dx, dy), p in zip(dist.steps, dist.probs):
        if dx or dy:
            phi_m1 -= 2 * p * np.sin(0.5 * (dx * u1 + dy * u2)) ** 2
    phi = 1.0 + phi_m1
    with np.errstate(divide="ignore", invalid="ignore"):
        logabs = np.where(phi > 0.5, np.log1p(phi_m1), np.log(np.abs(phi)))
    return logabs.ravel(), (phi < 0).ravel()


def _pow(logabs, neg, m):
    m = np.asarray(m, dtype=float)[:, None]
    with np.errstate(under="ignore"):
        mag = np.exp(m * logabs[None, :])
    odd = (m % 2 == 1)
    return np.where(neg[None, :] & odd, -mag, mag)


def _chunk(npoints, budget=1 << 22):
    return max(1, budget // npoints)


def _quad_periodic(dist, ms, N):
    u = -np.pi + 2 * np.pi * np.arange(N) / N
    logabs, neg = _log_abs_phi(dist, u[:, None], u[None, :])
    out = np.empty(len(ms))
    step = _chunk(len(logabs))
    for i in range(0, len(ms), step):
        out[i:i + step] = _pow(logabs, neg, ms[i:i + step]).mean(axis=1)
    return out


def _quad_window(dist, ms, peaks, w, npts):
    s = np.linspace(-w, w, npts)
    h = s[1] - s[0]
    wts = np.full(npts, h)
    wts[[0, -1]] *= 0.5
    W = (wts[:, None] * wts[None, :]).ravel()
    out = np.zeros(len(ms))
    for p1, p2 in peaks:
        logabs, neg = _log_abs_phi(dist, p1 + s[:, None], p2 + s[None, :])
        step = _chunk(len(logabs))
        for i in range(0, len(ms), step):
            out[i:i + step] += _pow(logabs, neg, ms[i:i + step]) @ W
    return out / (4 * np.pi**2)


def _converged(cur, prev, tol, rtol, floor=1e-16):
    # the floor sits at roundoff level so exact zeros (odd m on bipartite walks) converge
    return bool(np.all(np.abs(cur - prev) <= np.maximum(np.minimum(tol, rtol * np.abs(cur)), floor)))


def _quadrature_band(dist, ms, tol=1e-10, rtol=1e-11):
    """Trapezoid quadrature of (2pi)^-2 int phi^m over the torus, refined by doubling.

    For lattice-generating walks whose integrand is negligible away from the
    points where |phi| = 1, the integral is restricted to windows around
    those points.  The resolution is settled on the extreme and middle m of
    the band, then applied to every m in it.
    """
    ms = np.asarray(ms, dtype=np.int64)
    m_lo, m_hi = int(ms.min()), int(ms.max())
    probe = np.unique([m_lo, (m_lo + m_hi) // 2, m_hi])
    K = 46.0  # exp(-46) ~ 1e-20
    peaks = _peaks(dist) if dist.generates_lattice else []
    w = np.inf
    if peaks:
        c = dist._cache.get("abs_decay")
        if c is None:
            c = dist._cache["abs_decay"] = _abs_decay_constant(dist, peaks)
        if c > 0:
            w = np.sqrt(K / (c * m_lo))
    if w < np.pi / 2:
        lam = float(np.linalg.eigvalsh(dist.covariance).max())
        npts = int(np.ceil(2 * w * np.sqrt(m_hi * lam))) + 1
        prev = _quad_window(dist, probe, peaks, w, npts)
        while True:
            npts = 2 * npts - 1
            if npts > MAX_WINDOW_POINTS:
                raise ArithmeticError(f"quadrature did not converge for m in [{m_lo}, {m_hi}]")
            cur = _quad_window(dist, probe, peaks, w, npts)
            if _converged(cur, prev, tol, rtol):
                return _quad_window(dist, ms, peaks, w, npts)
            prev = cur
    # full torus; exact once N exceeds the trigonometric degree R*m
    N = 64
    exact_N = dist.max_range * m_hi + 1
    if N < exact_N:
        prev = _quad_periodic(dist, probe, N)
        while True:
            N *= 2
            if N >= exact_N:
                break
            cur = _quad_periodic(dist, probe, N)
            if _converged(cur, prev, tol, rtol):
                break
            prev = cur
    return _quad_periodic(dist, ms, N)


def return_probability_quadrature(dist, m):
    return float(_quadrature_band(dist, [m])[0])


def return_probability(dist, m, method="auto"):
    """p_m(0) = P(S_m = 0).

    ``method`` is ``"dp"`` (exact convolution, m <= 64), ``"quadrature"``
    (trapezoid rule on the characteristic function) or ``"auto"``.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    if m == 0:
        return 1.0
    if method == "auto":
        method = "dp" if m <= DP_MAX_M else "quadrature"
    if method == "dp":
        if m > DP_MAX_M:
            raise ValueError(f"dp route limited to m <= {DP_MAX_M}")
        table = dist._cache.get("dp")
        if table is None or len(table) <= m:
            table = dist._cache["dp"] = return_probabilities_dp(dist, DP_MAX_M)
        return float(table[m])
    if method == "quadrature":
        return return_probability_quadrature(dist, m)
    raise ValueError(f"unknown method {method!r}")


def load_distribution(text, name="custom"):
    """Parse a JSON list of ``[dx, dy, mass]`` triples (or a preset name)."""
    data = json.loads(text) if isinstance(text, str) else text
    if isinstance(data, str):
        return preset(data)
    return build_step_distribution(data, name=name)


def dump_distribution(dist):
    return json.dumps(dist.to_config())


def path_to_csv(path):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "x", "y"])
    for k, (x, y) in enumerate(path.points, start=1):
        w.writerow([k, int(x), int(y)])
    return buf.getvalue()


def path_from_csv(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    pts = np.array([[int(r["x"]), int(r["y"])] for r in rows], dtype=np.int64).reshape(-1, 2)
    return Path(pts)
