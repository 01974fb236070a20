import numpy as np
import pytest

from siltlab.expectation import (
    ExpectationTable,
    clear_tables,
    expectation_table,
    expected_silt,
    expected_silt_asymptotic,
)
from siltlab.walk import return_probability


def test_trivial_values(lazy, simple):
    assert expected_silt(lazy, 1) == 0.0
    # 2 p_1 + p_2 = 0 + 1/4
    assert expected_silt(simple, 3) == pytest.approx(0.25, abs=1e-15)


def test_brute_force_sum(lazy):
    n = 40
    direct = sum(return_probability(lazy, k - j) for j in range(1, n + 1) for k in range(j + 1, n + 1))
    assert expected_silt(lazy, n) == pytest.approx(direct, rel=1e-13)


def test_leading_order(lazy):
    n = 1 << 14
    assert expected_silt(lazy, n) / expected_silt_asymptotic(lazy, n) == pytest.approx(1.0, rel=0.10)
    ns = 2 ** np.arange(10, 15)
    d = np.abs(expected_silt(lazy, ns) - expected_silt_asymptotic(lazy, ns)) / ns
    assert d.max() / d.min() < 2


def test_persisted_table_round_trip(lazy, tmp_path):
    clear_tables()
    t = expectation_table(lazy, 300, cache_dir=tmp_path)
    files = list(tmp_path.iterdir())
    assert len(files) == 1
    loaded = ExpectationTable.load(files[0], lazy)
    assert np.array_equal(loaded.p, t.p)
    clear_tables()
    again = expectation_table(lazy, 200, cache_dir=tmp_path)
    assert again.expected(200) == t.expected(200)


def test_table_rejects_other_distribution(lazy, simple, tmp_path):
    t = ExpectationTable.compute(lazy, 70)
    t.save(tmp_path / "t.bin")
    with pytest.raises(ValueError, match="different distribution"):
        ExpectationTable.load(tmp_path / "t.bin", simple)


def test_large_m_interpolant(lazy):
    t = expectation_table(lazy, 1 << 16)
    assert t.interp_error < 1e-8
    m = np.array([20000, 40000, 65000])
    np.testing.assert_allclose(m * t.p[m], 2 / np.pi, rtol=2e-4)
