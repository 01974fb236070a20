"""Self-intersection local times, block decompositions and two-walk intersection counts.

Index conventions follow B_n = sum_{1 <= j < k <= n} delta(S_j, S_k): times are
1-based and the starting point S_0 never enters a pair.  Index windows are
half-open on the left, ``(lo, hi]``, matching the block notation
``(m, n]^2_<``.
"""
import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .expectation import expected_silt

__all__ = [
    "pack_points",
    "SiltAccumulator",
    "silt_update",
    "silt_exact",
    "silt_value",
    "silt_trajectory",
    "silt_batch",
    "renormalized_silt",
    "Rect",
    "Tri",
    "BlockSpec",
    "block_silt",
    "equal_block_partition",
    "dyadic_decomposition",
    "binary_decomposition",
    "CrossIntersectionResult",
    "cross_intersections",
    "occupation_field",
    "occupation_to_csv",
]

EXACT_LIMIT = 100_000
_SHIFT = np.int64(1) << np.int64(32)


def pack_points(points):
    """Map lattice points (..., 2) to int64 keys, injective for |coords| < 2^31."""
    pts = np.asarray(points, dtype=np.int64)
    return pts[..., 0] * _SHIFT + pts[..., 1]


def _points(path):
    return path.points if hasattr(path, "points") else np.asarray(path, dtype=np.int64).reshape(-1, 2)


class SiltAccumulator:
    """Occupation field l(n, x) with the running count B_n.

    Adding a point that has already been visited c times adds c new
    coincident pairs, so the update is O(1) amortized.
    """

    def __init__(self, dist=None, debug=False):
        self.occupation = {}
        self.n = 0
        self.b_value = 0
        self.dist = dist
        self.debug = debug

    def update(self, point):
        key = (int(point[0]), int(point[1]))
        c = self.occupation.get(key, 0)
        self.b_value += c
        self.occupation[key] = c + 1
        self.n += 1
        if self.debug:
            self.check_invariants()
        return self

    def extend(self, points):
        occ = self.occupation
        b = self.b_value
        for x, y in np.asarray(points).tolist():
            c = occ.get((x, y), 0)
            b += c
            occ[(x, y)] = c + 1
        self.n += len(points)
        self.b_value = b
        if self.debug:
            self.check_invariants()
        return self

    @property
    def sum_squares(self):
        return sum(c * c for c in self.occupation.values())

    def check_invariants(self):
        counts = self.occupation.values()
        assert sum(counts) == self.n, "occupation does not sum to n"
        assert sum(c * (c - 1) // 2 for c in counts) == self.b_value, "B_n != sum C(l, 2)"
        assert self.sum_squares == self.n + 2 * self.b_value, "sum l^2 != n + 2 B_n"


def silt_update(acc, next_point):
    return acc.update(next_point)


def silt_exact(path):
    """Brute-force pair count over 1 <= j < k <= n (O(n^2); n <= 100000)."""
    keys = pack_points(_points(path))
    n = len(keys)
    if n > EXACT_LIMIT:
        raise ValueError(f"silt_exact is an O(n^2) oracle; n={n} exceeds {EXACT_LIMIT}")
    total = 0
    block = 1024
    for start in range(0, n, block):
        a = keys[start:start + block]
        m = len(a)
        # pairs inside the block square are counted twice there, plus m diagonal hits
        square = np.count_nonzero(a[:, None] == a[None, :])
        later = np.count_nonzero(a[:, None] == keys[None, start + m:])
        total += int(later + (square - m) // 2)
    return total


def silt_trajectory(points):
    """B_1, ..., B_n for one path, via the number of earlier visits at each time."""
    keys = pack_points(_points(points))
    n = len(keys)
    order = np.argsort(keys, kind="stable")
    s = keys[order]
    idx = np.arange(n)
    new_run = np.ones(n, dtype=bool)
    new_run[1:] = s[1:] != s[:-1]
    run_start = np.maximum.accumulate(np.where(new_run, idx, 0))
    previous = np.empty(n, dtype=np.int64)
    previous[order] = idx - run_start
    return np.cumsum(previous)


def silt_value(points):
    keys = np.sort(pack_points(_points(points)))
    _, counts = np.unique(keys, return_counts=True)
    return int(np.sum(counts * (counts - 1) // 2))


def silt_batch(points):
    """B_n for each row of an array of paths shaped (trials, n, 2)."""
    keys = np.sort(pack_points(points), axis=1)
    T, n = keys.shape
    if n < 2:
        return np.zeros(T, dtype=np.int64)
    idx = np.broadcast_to(np.arange(n), keys.shape)
    new_run = np.ones(keys.shape, dtype=bool)
    new_run[:, 1:] = keys[:, 1:] != keys[:, :-1]
    run_start = np.maximum.accumulate(np.where(new_run, idx, 0), axis=1)
    return np.sum(idx - run_start, axis=1)


def renormalized_silt(path, dist, cache_dir=None):
    """gamma_n = B_n - E B_n."""
    pts = _points(path)
    return silt_value(pts) - expected_silt(dist, len(pts), cache_dir)


@dataclass(frozen=True)
class Rect:
    """Pairs (j, k) with j in (a0, a1] and k in (b0, b1], a1 <= b0."""

    a0: int
    a1: int
    b0: int
    b1: int


@dataclass(frozen=True)
class Tri:
    """Pairs j < k inside (lo, hi]."""

    lo: int
    hi: int


@dataclass(frozen=True)
class BlockSpec:
    parts: tuple = field(default_factory=tuple)

    def validate(self, n):
        for p in self.parts:
            if isinstance(p, Rect):
                if not (0 <= p.a0 <= p.a1 <= p.b0 <= p.b1 <= n):
                    raise ValueError(f"malformed rectangle {p}: need 0 <= a0 <= a1 <= b0 <= b1 <= {n}")
            elif isinstance(p, Tri):
                if not (0 <= p.lo <= p.hi <= n):
                    raise ValueError(f"malformed triangle {p} for n={n}")
            else:
                raise TypeError(f"unknown block part {p!r}")

    def pair_count(self):
        total = 0
        for p in self.parts:
            if isinstance(p, Rect):
                total += (p.a1 - p.a0) * (p.b1 - p.b0)
            else:
                m = p.hi - p.lo
                total += m * (m - 1) // 2
        return total


def _window_counts(keys, lo, hi):
    return np.unique(keys[lo:hi], return_counts=True)


def _overlap(ka, ca, kb, cb):
    common, ia, ib = np.intersect1d(ka, kb, assume_unique=True, return_indices=True)
    return int(np.sum(ca[ia] * cb[ib]))


def block_silt(path, block):
    """B(A) for A a union of rectangles and triangles."""
    keys = pack_points(_points(path))
    block.validate(len(keys))
    total = 0
    for p in block.parts:
        if isinstance(p, Rect):
            total += _overlap(*_window_counts(keys, p.a0, p.a1), *_window_counts(keys, p.b0, p.b1))
        else:
            _, c = _window_counts(keys, p.lo, p.hi)
            total += int(np.sum(c * (c - 1) // 2))
    return total


def equal_block_partition(n, l):
    """D_i^* triangles plus D_j x D_k rectangles for l consecutive blocks of (0, n]."""
    if not 1 <= l <= n:
        raise ValueError("need 1 <= l <= n")
    edges = [round(i * n / l) for i in range(l + 1)]
    parts = [Tri(edges[i], edges[i + 1]) for i in range(l)]
    parts += [
        Rect(edges[j], edges[j + 1], edges[k], edges[k + 1]) for j in range(l) for k in range(j + 1, l)
    ]
    return BlockSpec(tuple(parts))


def dyadic_decomposition(levels, depth=None):
    """Rectangles of the binary splitting of (0, 2^levels].

    At level j the interval is cut into 2^j pieces of length 2^(levels-j) and
    each adjacent (left, right) pair of siblings contributes one rectangle.
    With ``depth < levels`` the recursion stops early and the 2^depth leaf
    blocks contribute their triangles.
    """
    depth = levels if depth is None else depth
    if not 0 <= depth <= levels:
        raise ValueError("need 0 <= depth <= levels")
    parts = []
    for j in range(1, depth + 1):
        w = 1 << (levels - j)
        for k in range(1, (1 << (j - 1)) + 1):
            parts.append(Rect((2 * k - 2) * w, (2 * k - 1) * w, (2 * k - 1) * w, 2 * k * w))
    w = 1 << (levels - depth)
    if w > 1:
        parts += [Tri(i * w, (i + 1) * w) for i in range(1 << depth)]
    return BlockSpec(tuple(parts))


def binary_decomposition(n):
    """Split (0, n] along the binary digits of n: within-block triangles plus tail rectangles."""
    if n < 1:
        raise ValueError("n must be positive")
    edges = [0]
    for bit in reversed(range(n.bit_length())):
        if n >> bit & 1:
            edges.append(edges[-1] + (1 << bit))
    parts = [Tri(edges[i - 1], edges[i]) for i in range(1, len(edges))]
    parts += [Rect(edges[i - 1], edges[i], edges[i], n) for i in range(1, len(edges) - 1)]
    return BlockSpec(tuple(parts))


@dataclass(frozen=True)
class CrossIntersectionResult:
    m: int
    n: int
    y: tuple
    count: int


def cross_intersections(path1, path2, m=None, n=None, y=(0, 0)):
    """I_{m,n}(y) = #{(j, k) <= (m, n): S_j = S'_k + y}."""
    p1, p2 = _points(path1), _points(path2)
    m = len(p1) if m is None else m
    n = len(p2) if n is None else n
    if m > len(p1) or n > len(p2) or m < 0 or n < 0:
        raise ValueError("window longer than path")
    shifted = p2[:n] + np.asarray(y, dtype=np.int64)
    k1, c1 = np.unique(pack_points(p1[:m]), return_counts=True)
    k2, c2 = np.unique(pack_points(shifted), return_counts=True)
    return CrossIntersectionResult(m, n, tuple(int(v) for v in y), _overlap(k1, c1, k2, c2))


def occupation_field(path):
    """Distinct visited sites and their visit counts l(n, x)."""
    pts = _points(path)
    sites, counts = np.unique(pts, axis=0, return_counts=True)
    return sites, counts


def occupation_to_csv(path):
    sites, counts = occupation_field(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "count"])
    for (x, y), c in zip(sites.tolist(), counts.tolist()):
        w.writerow([x, y, c])
    return buf.getvalue()
