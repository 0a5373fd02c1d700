import numpy as np
import pytest
from scipy import stats

from maxstab import DepParams, DomainError
from maxstab.dependence import delta
from maxstab.gaussian import CovMatrix, PointSet, build_cov, make_rng, sample_mvn, spawn

FLORIDA = DepParams([0.6, 0.75, 4.8], [0.95, 0.95, 0.2])


def test_single_origin_point():
    cov = build_cov(FLORIDA, PointSet([[0, 0, 0]]))
    np.testing.assert_array_equal(cov.entries, [[0.0]])


def test_two_points_with_origin():
    cov = build_cov(FLORIDA, PointSet([[0, 0, 0], [2, 1, 3]]))
    dl = delta(FLORIDA, [2, 1], 3)
    np.testing.assert_allclose(cov.entries, [[0, 0], [0, 2 * dl]], rtol=1e-15)


def test_variogram_identity(rng):
    pts = PointSet(rng.integers(-5, 6, size=(10, 3)).astype(float) + np.arange(10)[:, None] * 100)
    cov = build_cov(FLORIDA, pts).entries
    for i in range(10):
        j = (i + 3) % 10
        lag = pts.coords[i] - pts.coords[j]
        var = cov[i, i] + cov[j, j] - 2 * cov[i, j]
        assert var == pytest.approx(2 * delta(FLORIDA, lag[:2], lag[2]), rel=1e-12)


def test_exact_symmetry(rng):
    pts = PointSet(rng.normal(size=(40, 3)) * 3)
    e = build_cov(FLORIDA, pts).entries
    assert np.array_equal(e, e.T)


@pytest.mark.parametrize("seed", range(5))
def test_jitter_bound_on_grids(seed):
    r = np.random.default_rng(seed)
    p = DepParams(r.uniform(0.1, 5, 3), r.uniform(0.1, 1.9, 3))
    cov = build_cov(p, PointSet.grid(12, 2, 4))
    assert cov.jitter <= 1e-8 * np.max(np.diag(cov.entries))


def test_duplicate_points_rejected():
    with pytest.raises(DomainError):
        PointSet([[0, 0], [0, 0]])


def test_zero_covariance_gives_zero_vector():
    cov = CovMatrix(np.zeros((3, 3)))
    np.testing.assert_array_equal(sample_mvn(cov, 1), np.zeros(3))


def test_empirical_covariance():
    pts = PointSet([[1, 0, 0], [1, 0, 1], [2, 3, 2]])
    cov = build_cov(DepParams([1, 0.5, 0.8], [1, 1.5, 0.7]), pts)
    x = sample_mvn(cov, 7, size=100_000)
    emp = np.cov(x, rowvar=False, bias=True)
    # standard error of a sample covariance: sqrt((S_ii S_jj + S_ij^2) / n)
    s = cov.entries
    se = np.sqrt((np.outer(np.diag(s), np.diag(s)) + s**2) / x.shape[0])
    assert cov.jitter == 0.0
    assert np.all(np.abs(emp - s) <= 3 * se)


def test_determinism():
    cov = build_cov(FLORIDA, PointSet.grid(3, 2, 3))
    a = sample_mvn(cov, 123)
    b = sample_mvn(cov, 123)
    assert np.array_equal(a, b)


def test_identity_ks():
    x = sample_mvn(CovMatrix(np.eye(1)), 2024, size=10_000)[:, 0]
    assert stats.kstest(x, "norm").pvalue > 0.01


def test_spawn_streams_independent_and_reproducible():
    a = [g.standard_normal(3) for g in spawn(5, 3)]
    b = [g.standard_normal(3) for g in spawn(5, 3)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(a[0], a[1])
    g = make_rng(9)
    assert make_rng(g) is g
