import itertools

import numpy as np
import pytest

from siltlab.walk import (
    AsymmetricLawError,
    build_step_distribution,
    characteristic_function,
    counterexample_walk,
    dump_distribution,
    gaussian_bound_constant,
    load_distribution,
    path_from_csv,
    path_to_csv,
    preset,
    return_probabilities_dp,
    return_probability,
    sample_path,
)


def test_lazy_covariance_and_aperiodicity(lazy):
    np.testing.assert_allclose(lazy.covariance, np.diag([0.25, 0.25]), atol=1e-15)
    assert lazy.det_gamma == pytest.approx(1 / 16, abs=1e-15)
    assert lazy.strongly_aperiodic
    assert lazy.phi(np.pi, np.pi) == pytest.approx(0.0, abs=1e-15)


def test_simple_walk_is_periodic(simple):
    np.testing.assert_allclose(simple.covariance, np.diag([0.5, 0.5]), atol=1e-15)
    assert not simple.strongly_aperiodic
    assert characteristic_function(simple, (np.pi, np.pi)) == pytest.approx(-1.0)


def test_asymmetric_law_rejected():
    with pytest.raises(AsymmetricLawError, match="asymmetric"):
        build_step_distribution([((1, 0), 1.0)])


def test_mass_validation():
    with pytest.raises(ValueError, match="sum"):
        build_step_distribution([((1, 0), 0.3), ((-1, 0), 0.3), ((0, 0), 0.3)])
    with pytest.raises(ValueError, match="positive"):
        build_step_distribution([((0, 0), 1.0), ((1, 0), 0.0)])


def test_counterexample_walk_flagged():
    d = counterexample_walk(10)
    # support generates 10 Z^2, so phi = 1 at u = (2 pi / 10, 0)
    assert not d.generates_lattice
    assert not d.strongly_aperiodic
    assert d.phi(2 * np.pi / 10, 0.0) == pytest.approx(1.0)
    np.testing.assert_allclose(d.covariance, np.eye(2), atol=1e-12)


def test_king_walk_generates_lattice():
    d = preset("king")
    assert d.generates_lattice and d.strongly_aperiodic


def test_sample_path_determinism(lazy):
    a = sample_path(lazy, 10, seed=1, stream=0)
    b = sample_path(lazy, 10, seed=1, stream=0)
    c = sample_path(lazy, 10, seed=1, stream=1)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)


def test_path_increments_are_atoms(lazy):
    p = sample_path(lazy, 500, seed=3)
    inc = np.diff(np.vstack([[0, 0], p.points]), axis=0)
    atoms = {tuple(s) for s in lazy.steps.tolist()}
    assert all(tuple(s) in atoms for s in inc.tolist())
    one = sample_path(lazy, 1, seed=4)
    assert tuple(one.points[0]) in atoms


def test_covariance_clt(lazy):
    # n = 100, 1e5 paths: E S_n S_n^T / n = Gamma
    from siltlab.rng import stream_rng
    from siltlab.walk import sample_steps

    rng = stream_rng(11, 0)
    n, T = 100, 100_000
    ends = np.zeros((T, 2))
    for a in range(0, T, 10_000):
        idx = sample_steps(lazy, (10_000, n), rng)
        ends[a:a + 10_000] = lazy.steps[idx].sum(axis=1)
    for i, j in [(0, 0), (1, 1), (0, 1)]:
        x = ends[:, i] * ends[:, j] / n
        assert abs(x.mean() - lazy.covariance[i, j]) < 3 * x.std() / np.sqrt(T)


def test_characteristic_function_properties(lazy):
    assert characteristic_function(lazy, (0.0, 0.0)) == pytest.approx(1.0)
    u = np.random.default_rng(0).uniform(-np.pi, np.pi, size=(2000, 2))
    for d in (lazy, preset("simple"), preset("king"), counterexample_walk(5)):
        v = characteristic_function(d, u)
        assert np.max(np.abs(v.imag)) < 1e-12
        assert np.all(np.abs(v) <= 1 + 1e-12)
        np.testing.assert_allclose(characteristic_function(d, -u), v, atol=1e-14)
    inside = np.linalg.norm(u, axis=1) > 1e-3
    assert np.all(np.abs(characteristic_function(lazy, u[inside])) < 1)


def test_gaussian_bound(lazy):
    c = gaussian_bound_constant(lazy)
    assert c > 0
    g = np.linspace(-np.pi, np.pi, 201)
    U1, U2 = np.meshgrid(g, g)
    assert np.max(lazy.phi(U1, U2) - np.exp(-c * (U1**2 + U2**2))) <= 1e-12


def test_small_return_probabilities(simple, lazy):
    hits = sum(
        np.array_equal(np.add(a, b), [0, 0])
        for a, b in itertools.product(simple.steps.tolist(), repeat=2)
    )
    assert hits / 16 == pytest.approx(0.25)
    assert return_probability(simple, 2) == pytest.approx(0.25, abs=1e-15)
    assert return_probability(lazy, 1) == pytest.approx(0.5, abs=1e-15)


def test_dp_and_quadrature_agree():
    for d in (preset("lazy"), preset("king"), preset("simple"), counterexample_walk(4)):
        dp = return_probabilities_dp(d, 64)
        for m in (1, 2, 5, 17, 40, 64):
            assert abs(return_probability(d, m, "quadrature") - dp[m]) < 1e-9


def test_local_limit(lazy):
    m = 4096
    assert m * return_probability(lazy, m) == pytest.approx(2 / np.pi, rel=0.01)


def test_lazy_return_nonincreasing(lazy):
    from siltlab.expectation import expectation_table

    p = expectation_table(lazy, 4097).p[1:4097]
    assert np.all(np.diff(p) <= 0)


def test_distribution_round_trip(lazy):
    text = dump_distribution(lazy)
    assert load_distribution(text).key == lazy.key
    assert load_distribution('"king"').name == "king"


def test_path_csv_round_trip(lazy):
    p = sample_path(lazy, 50, seed=5)
    assert np.array_equal(path_from_csv(path_to_csv(p)).points, p.points)
