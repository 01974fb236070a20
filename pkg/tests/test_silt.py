import numpy as np
import pytest

from siltlab.expectation import expected_silt
from siltlab.silt import (
    BlockSpec,
    Rect,
    SiltAccumulator,
    Tri,
    binary_decomposition,
    block_silt,
    cross_intersections,
    dyadic_decomposition,
    equal_block_partition,
    occupation_field,
    occupation_to_csv,
    renormalized_silt,
    silt_batch,
    silt_exact,
    silt_trajectory,
    silt_update,
    silt_value,
)
from siltlab.walk import sample_path


def brute(points):
    pts = [tuple(p) for p in np.asarray(points).tolist()]
    return sum(pts[j] == pts[k] for j in range(len(pts)) for k in range(j + 1, len(pts)))


def stream(points, debug=True):
    acc = SiltAccumulator(debug=debug)
    for p in points:
        silt_update(acc, p)
    return acc


def test_small_hand_cases():
    acc = silt_update(SiltAccumulator(debug=True), (3, 4))
    assert acc.b_value == 0
    assert stream([(1, 0), (0, 0), (1, 0)]).b_value == 1
    assert silt_exact([(1, 0), (0, 0), (1, 0), (0, 0)]) == 2
    assert silt_exact([(i, 0) for i in range(20)]) == 0
    n = 37
    assert stream([(2, -5)] * n).b_value == n * (n - 1) // 2


def test_engines_agree_with_brute_force(lazy):
    for s in range(20):
        p = sample_path(lazy, 150, seed=s).points
        b = brute(p)
        assert silt_exact(p) == b
        assert silt_value(p) == b
        assert stream(p).b_value == b
        assert silt_trajectory(p)[-1] == b
    batch = np.stack([sample_path(lazy, 150, seed=s).points for s in range(20)])
    assert silt_batch(batch).tolist() == [brute(x) for x in batch]


def test_trajectory_prefixes(lazy):
    p = sample_path(lazy, 300, seed=9).points
    traj = silt_trajectory(p)
    for k in (1, 2, 10, 77, 300):
        assert traj[k - 1] == silt_exact(p[:k])


def test_accumulator_invariants(lazy):
    acc = SiltAccumulator(debug=True).extend(sample_path(lazy, 2000, seed=2).points)
    occ = list(acc.occupation.values())
    assert sum(occ) == acc.n
    assert acc.sum_squares == acc.n + 2 * acc.b_value


def test_exact_refuses_huge_n():
    with pytest.raises(ValueError, match="O\\(n\\^2\\)"):
        silt_exact(np.zeros((100_001, 2), dtype=np.int64))


def test_renormalized(lazy):
    p = np.zeros((100, 2), dtype=np.int64)
    assert renormalized_silt(p, lazy) == pytest.approx(4950 - expected_silt(lazy, 100))
    assert renormalized_silt(np.array([[1, 0]]), lazy) == 0.0


def test_renormalized_mean_zero(lazy):
    from siltlab.deviations import sample_renormalized

    g = sample_renormalized(lazy, 512, 10_000, seed=4)
    assert abs(g.mean()) < 3 * g.std(ddof=1) / np.sqrt(len(g))


def test_full_triangle_and_partitions(lazy):
    for s in range(100):
        p = sample_path(lazy, 256, seed=100 + s).points
        b = silt_exact(p)
        assert block_silt(p, BlockSpec((Tri(0, 256),))) == b
        assert block_silt(p, equal_block_partition(256, 4)) == b
        assert block_silt(p, dyadic_decomposition(8)) == b
        assert block_silt(p, dyadic_decomposition(8, depth=3)) == b
    p = sample_path(lazy, 1000, seed=7).points
    assert block_silt(p, binary_decomposition(1000)) == silt_exact(p)


def test_partitions_cover_pair_set():
    n = 256
    for spec in (equal_block_partition(n, 4), dyadic_decomposition(8), binary_decomposition(200)):
        m = 200 if spec == binary_decomposition(200) else n
        assert spec.pair_count() == m * (m - 1) // 2


def test_malformed_rectangle():
    with pytest.raises(ValueError, match="malformed"):
        BlockSpec((Rect(5, 10, 8, 12),)).validate(20)


def test_cross_intersections(lazy):
    a = np.zeros((30, 2), dtype=np.int64)
    assert cross_intersections(a, a).count == 900
    left = np.column_stack([-np.arange(1, 51), np.zeros(50, dtype=np.int64)])
    right = np.column_stack([np.arange(1, 51), np.zeros(50, dtype=np.int64)])
    assert cross_intersections(left, right).count == 0
    p1 = sample_path(lazy, 200, seed=1).points
    p2 = sample_path(lazy, 200, seed=2).points
    for y in [(0, 0), (1, -2), (3, 3)]:
        direct = sum(
            tuple(u) == (v[0] + y[0], v[1] + y[1]) for u in p1.tolist() for v in p2.tolist()
        )
        r = cross_intersections(p1, p2, 200, 200, y)
        assert r.count == direct <= 200 * 200
        assert cross_intersections(p2, p1, 200, 200, (-y[0], -y[1])).count == direct


def test_cross_intersection_first_moment(lazy):
    # E I_n / n stays bounded across n (ratio of extremes below 3)
    ratios = []
    for n in (2**8, 2**10, 2**12):
        counts = [
            cross_intersections(sample_path(lazy, n, 1, 2 * t), sample_path(lazy, n, 1, 2 * t + 1)).count
            for t in range(400)
        ]
        ratios.append(np.mean(counts) / n)
    assert max(ratios) / min(ratios) < 3


def test_occupation_csv(lazy):
    p = sample_path(lazy, 300, seed=8)
    sites, counts = occupation_field(p)
    assert counts.sum() == 300
    assert np.sum(counts * (counts - 1) // 2) == silt_exact(p)
    lines = occupation_to_csv(p).splitlines()
    assert lines[0] == "x,y,count" and len(lines) == len(sites) + 1
