"""Mollifiers on the lattice and the smoothed occupation functional.

A :class:`Mollifier` is a symmetric probability density f on R^2 together
with its Fourier transform.  ``lattice(r)`` samples f_r(x) = r^-2 f(x / r) at
the points of Z^2.  The band-limited family is a product of powers of sinc,
whose transform is a product of cardinal B-splines supported strictly
inside (-pi, pi)^2; for such kernels and r >= 1 the lattice transform of
f_r (*) f_r equals fhat(r lambda)^2 exactly, which
:func:`fourier_identity_error` checks numerically.
"""
import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline
from scipy.signal import convolve2d, fftconvolve

from .silt import _points

__all__ = [
    "Kernel2D",
    "Mollifier",
    "SincPowerMollifier",
    "GaussianMollifier",
    "DeltaMollifier",
    "lattice_self_convolution",
    "fourier_identity_error",
    "mollified_l2",
    "kernel_to_text",
    "kernel_from_text",
]

TRUNCATION = 1e-12
MEMORY_BUDGET = 1 << 26  # float64 cells


@dataclass(frozen=True)
class Kernel2D:
    """Samples on a centred square grid of odd side; ``values[c, c]`` is the origin."""

    values: np.ndarray
    h: float = 1.0
    radius: float = 1.0

    @property
    def size(self):
        return self.values.shape[0]

    @property
    def half(self):
        return self.size // 2

    @property
    def mass(self):
        return float(self.values.sum() * self.h**2)

    def at(self, x, y):
        c = self.half
        x, y = np.asarray(x), np.asarray(y)
        inside = (np.abs(x) <= c) & (np.abs(y) <= c)
        out = np.zeros(np.broadcast(x, y).shape)
        out[inside] = self.values[(x + c)[inside], (y + c)[inside]]
        return out


class Mollifier:
    """Separable mollifier f(x) = g(x1) g(x2); subclasses sample g on Z."""

    band_limited = False

    def profile_lattice(self, r):
        raise NotImplementedError

    def lattice(self, r):
        g = self.profile_lattice(r)
        return Kernel2D(np.outer(g, g), 1.0, r)

    def fourier(self, l1, l2):
        raise NotImplementedError


class DeltaMollifier(Mollifier):
    """Point mass at the origin; every scaling is the lattice delta."""

    def profile_lattice(self, r):
        return np.ones(1)

    def fourier(self, l1, l2):
        return np.ones(np.broadcast(np.asarray(l1), np.asarray(l2)).shape)


class SincPowerMollifier(Mollifier):
    """f(x) = g(x1) g(x2), g(t) = a sinc(a t)^p / M_p(0), with p even.

    ``M_p`` is the density of a sum of p uniforms on (-1/2, 1/2), so
    ghat(w) = M_p(w / (2 pi a)) / M_p(0), supported on |w| <= p pi a.
    """

    band_limited = True

    def __init__(self, power=8, bandwidth=0.9):
        if power % 2 or power < 2:
            raise ValueError("power must be even and >= 2")
        if not 0 < bandwidth < 1:
            raise ValueError("bandwidth must lie in (0, 1) so the transform sits inside (-pi, pi)")
        self.power = power
        self.a = bandwidth / power
        self._spline = BSpline.basis_element(np.arange(power + 1) - power / 2, extrapolate=False)
        self._m0 = float(self._spline(0.0))

    def _bspline(self, x):
        v = self._spline(np.asarray(x, dtype=float))
        return np.nan_to_num(v, nan=0.0)

    def profile_1d(self, t):
        return self.a * np.sinc(self.a * np.asarray(t, dtype=float)) ** self.power / self._m0

    def fourier_1d(self, w):
        return self._bspline(np.asarray(w, dtype=float) / (2 * np.pi * self.a)) / self._m0

    def fourier(self, l1, l2):
        return self.fourier_1d(l1) * self.fourier_1d(l2)

    def _radius(self, r):
        # sinc^p(s) <= (pi s)^-p bounds the tail; start well beyond the cut
        p = self.power
        s = (1e-16 * (p - 1) * self._m0 * np.pi**p) ** (-1.0 / (p - 1))
        return int(np.ceil(s * r / self.a))

    def profile_lattice(self, r):
        T = self._radius(r)
        t = np.arange(-T, T + 1)
        g = self.profile_1d(t / r) / r
        # beyond[K] = sum_{t > K} g(t); the 2D tail outside the square is ~ 4 beyond[K]
        beyond = np.concatenate([np.cumsum(g[T + 1:][::-1])[::-1], [0.0]])
        keep = int(np.argmax(4 * beyond <= TRUNCATION))
        return g[T - keep:T + keep + 1]


class GaussianMollifier(Mollifier):
    """Standard Gaussian, sampled on the lattice and renormalized to unit lattice mass."""

    def profile_lattice(self, r):
        T = int(np.ceil(r * np.sqrt(2 * np.log(1 / TRUNCATION)))) + 1
        t = np.arange(-T, T + 1)
        g = np.exp(-0.5 * (t / r) ** 2)
        g = g[g >= g.max() * TRUNCATION]
        return g / g.sum()

    def fourier(self, l1, l2):
        return np.exp(-0.5 * (np.asarray(l1) ** 2 + np.asarray(l2) ** 2))


def _check_r(r, check_regime):
    if not r > 0:
        raise ValueError("r must be positive")
    if check_regime and r < 1:
        raise ValueError(f"r={r} is below mollifier validity regime (r >= 1)")


def _profile_self_convolution(kernel, r):
    g = kernel.profile_lattice(r)
    c = np.convolve(g, g)
    return 0.5 * (c + c[::-1])


def lattice_self_convolution(kernel, r, check_regime=True):
    """f_r (*) f_r on Z^2, computed as the outer product of 1D convolutions.

    ``r < 1`` is refused unless ``check_regime`` is turned off; the Fourier
    identity for band-limited kernels needs r >= 1.
    """
    _check_r(r, check_regime)
    c = _profile_self_convolution(kernel, r)
    return Kernel2D(np.outer(c, c), 1.0, r)


def fourier_identity_error(kernel, r, n_grid=64):
    """max over a grid of lambda in [-pi, pi]^2 of |sum_y e^{-i lambda y} F(y) - fhat(r lambda)^2|."""
    F = lattice_self_convolution(kernel, r).values
    c = F.shape[0] // 2
    y = np.arange(-c, c + 1)
    lam = np.linspace(-np.pi, np.pi, n_grid)
    E = np.exp(-1j * np.outer(lam, y))
    lhs = E @ F @ E.T
    rhs = kernel.fourier(r * lam[:, None], r * lam[None, :]) ** 2
    return float(np.max(np.abs(lhs - rhs)))


def mollified_l2(path, kernel, eps, b_n, memory_budget=MEMORY_BUDGET):
    """sum_x l(n, x, eps)^2 = sum_{j,k} (f_r (*) f_r)(S_k - S_j), r = eps (n / b_n)^(1/2)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if b_n < 1:
        raise ValueError("b_n must be >= 1")
    pts = _points(path)
    n = len(pts)
    r = eps * np.sqrt(n / b_n)
    _check_r(r, kernel.band_limited)
    c = _profile_self_convolution(kernel, r)
    lo = pts.min(axis=0)
    span = pts.max(axis=0) - lo + 1
    need = int((span[0] + len(c)) * (span[1] + len(c)))
    if need > memory_budget:
        raise MemoryError(f"kernel support needs {need} grid cells (budget {memory_budget})")
    occ = np.zeros(tuple(span))
    np.add.at(occ, tuple((pts - lo).T), 1.0)
    if len(c) == 1:
        return float(c[0] ** 2 * np.sum(occ * occ))
    # separable smoothing: convolve along each axis in turn
    conv = fftconvolve if len(c) > 64 else convolve2d
    smoothed = conv(conv(occ, c[:, None], mode="same"), c[None, :], mode="same")
    return float(np.sum(occ * smoothed))


def kernel_to_text(kernel):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["h", "size"])
    w.writerow([repr(float(kernel.h)), kernel.size])
    for row in kernel.values:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def kernel_from_text(text, radius=1.0):
    rows = list(csv.reader(io.StringIO(text)))
    if rows[0] != ["h", "size"]:
        raise ValueError("kernel file must start with header 'h,size'")
    h, size = float(rows[1][0]), int(rows[1][1])
    values = np.array([[float(v) for v in row] for row in rows[2:2 + size]])
    if values.shape != (size, size):
        raise ValueError(f"expected a {size}x{size} grid, got {values.shape}")
    return Kernel2D(values, h, radius)
