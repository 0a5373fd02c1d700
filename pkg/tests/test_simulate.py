import warnings

import numpy as np
import pytest
from scipy import stats

from maxstab import ConfigError, DataError, DepParams
from maxstab.dependence import chi, extremal_coefficient
from maxstab.gaussian import PointSet
from maxstab.simulate import (
    Realization,
    SimConfig,
    TruncationWarning,
    empirical_chi,
    empirical_extremal_coefficient,
    simulate_br,
    simulate_cube,
    simulate_grid,
)

FLORIDA = DepParams([0.6, 0.75, 4.8], [0.95, 0.95, 0.2])
D2 = DepParams([2.0, 1.0], [1.0, 1.0])  # delta = 2 at spatial lag 1 (d = 1)


def pair(params, reps, seed):
    return simulate_br(params, PointSet([[0, 0], [1, 0]]), SimConfig(replicates=reps, seed=seed))


def test_single_point_frechet_cdf():
    r = simulate_br(D2, PointSet([[0, 0]]), SimConfig(replicates=20_000, seed=11))
    assert np.mean(r.values[:, 0] <= 1.0) == pytest.approx(np.exp(-1), abs=0.01)
    assert np.all(r.values > 0)


def test_pair_extremal_coefficient():
    r = pair(D2, 20_000, 12)
    assert empirical_extremal_coefficient(r, 0, 1) == pytest.approx(
        extremal_coefficient(2.0), abs=0.03
    )


def test_threshold_extremal_coefficient_close():
    r = pair(D2, 20_000, 13)
    y = np.quantile(r.values.max(axis=1), 0.9)
    assert empirical_extremal_coefficient(r, 0, 1, y) == pytest.approx(1.683, abs=0.06)


def test_empirical_chi_cases():
    r = pair(D2, 20_000, 14)
    assert empirical_chi(r, 0, 0, 0.95) == 1.0
    assert empirical_chi(r, 0, 1, 0.98) == pytest.approx(chi(D2, [1], 0), abs=0.06)


def test_empirical_chi_independence():
    q, n = 0.95, 20_000
    r = pair(DepParams([400.0, 1.0], [1.0, 1.0]), n, 15)
    se = np.sqrt(q * (1 - q) / (n * (1 - q)))
    assert abs(empirical_chi(r, 0, 1, q) - (1 - q)) <= 3 * se


def test_empirical_chi_guards():
    small = Realization(np.ones((10, 2)), PointSet([[0, 0], [1, 0]]))
    with pytest.raises(DataError):
        empirical_chi(small, 0, 1, 0.9)
    r = pair(D2, 1000, 1)
    with pytest.raises(ValueError):
        empirical_chi(r, 0, 1, 0.5)


def test_max_stability_closure():
    pts = PointSet.grid(2, 1, 2)
    k, n = 50, 4000
    one = simulate_br(D2, pts, SimConfig(replicates=n, seed=21)).values
    many = simulate_br(D2, pts, SimConfig(replicates=n * k, seed=22)).values
    mx = many.reshape(n, k, -1).max(axis=1) / k
    for j in range(pts.n):
        assert stats.ks_2samp(one[:, j], mx[:, j]).pvalue > 0.01


def test_exact_matches_truncated():
    p = DepParams([1, 1, 1], [1, 1, 1])
    pts = PointSet.grid(2, 2, 2)
    a = simulate_br(p, pts, SimConfig(replicates=3000, seed=3)).values
    with pytest.warns(TruncationWarning):
        b = simulate_br(
            p, pts, SimConfig("truncated_spectral", n_poisson_max=2000, replicates=3000, seed=4)
        ).values
    for j in range(pts.n):
        assert stats.ks_2samp(a[:, j], b[:, j]).pvalue > 0.01


def test_determinism_and_batches():
    pts = PointSet.grid(2, 1, 2)
    a = simulate_br(D2, pts, SimConfig(replicates=5000, seed=9))
    b = simulate_br(D2, pts, SimConfig(replicates=5000, seed=9))
    assert np.array_equal(a.values, b.values)
    assert a.values.shape == (5000, 4)


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(method="bogus")
    with pytest.raises(ConfigError):
        SimConfig(method="truncated_spectral", n_poisson_max=50)
    with pytest.raises(ConfigError):
        simulate_br(D2, PointSet.grid(30, 1, 20), SimConfig())


def test_grid_shapes_and_determinism():
    a = simulate_grid(FLORIDA, 4, 6, seed=3)
    b = simulate_grid(FLORIDA, 4, 6, seed=3)
    assert a.shape == (4, 4, 6) and np.all(a > 0)
    assert np.array_equal(a, b)
    cube = simulate_cube(FLORIDA, 3, 5, seed=1)
    assert cube.margin == "frechet" and cube.values.shape == (3, 3, 5)


def test_grid_truncated_runs():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        v = simulate_grid(FLORIDA, 3, 4, seed=2, method="truncated_spectral", n_poisson_max=200)
    assert v.shape == (3, 3, 4) and np.all(v > 0)


def test_grid_margins_and_dependence():
    # many small independent grids: margins Frechet, lag-1 EC matches theory
    p = DepParams([1.0, 0.5], [1.0, 1.5])
    vals = np.stack([simulate_grid(p, 3, 3, seed=s) for s in range(3000)])
    assert stats.kstest(vals[:, 1, 1], stats.invweibull(1).cdf).pvalue > 0.01
    mx = np.maximum(vals[:, 0, 0], vals[:, 1, 0])
    assert mx.size / np.sum(1 / mx) == pytest.approx(extremal_coefficient(1.0), abs=0.05)
    mx = np.maximum(vals[:, 0, 0], vals[:, 0, 2])
    assert mx.size / np.sum(1 / mx) == pytest.approx(
        extremal_coefficient(0.5 * 2**1.5), abs=0.05
    )


def test_chi_decreases_along_transect():
    pts = PointSet([[j, 0] for j in range(5)])
    r = simulate_br(DepParams([0.5, 1.0], [1.0, 1.0]), pts, SimConfig(replicates=20_000, seed=5))
    ch = [empirical_chi(r, 0, j, 0.95) for j in range(1, 5)]
    se = np.sqrt(0.25 / (20_000 * 0.05))
    assert all(b <= a + se for a, b in zip(ch, ch[1:]))
