"""Model diagnostics: a graphical max-stability check, an order-statistics
goodness-of-fit check, conditional exceedance fields and a tail integral.

Max-stability check
-------------------
The time axis is cut into ``R`` blocks of ``b1`` time points separated by
gaps of ``b2``.  For a subset ``D`` of ``k`` space-time coordinates inside
a block (the same relative coordinates in every block) the maxima
``eta_D`` over ``R`` blocks are i.i.d.  Under max-stability with standard
Gumbel margins they are Gumbel with unit scale and location
``mu_D = log V_D(1, ..., 1)`` in ``[0, log k]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from ._errors import ConfigError, DataError
from .cube import ObsCube
from .dependence import DepParams, delta, exponent_v
from .gaussian import PointSet, make_rng, spawn
from .marginals import MarginFits, _saturation_check, gumbel_cdf, gumbel_quantile
from .reports import Table
from .simulate import SimConfig, simulate_br

BAND_PASS = 0.9


@dataclass(frozen=True)
class GroupSpec:
    """Subset size ``k``, block length ``b1``, gap ``b2``, number of subsets ``m``."""

    k: int
    b1: int
    b2: int = 1
    m: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.b1 < 1 or self.b2 < 0:
            raise ConfigError(f"need k >= 1, b1 >= 1, b2 >= 0; got {self.k}, {self.b1}, {self.b2}")

    def r_blocks(self, t_len: int) -> int:
        return t_len // (self.b1 + self.b2)

    def n_subsets(self, m: int, d: int, t_len: int) -> int:
        """Requested ``m``, or ``min(R, C(b1 M^d, k))`` when unset; validated."""
        cap = min(self.r_blocks(t_len), math.comb(self.b1 * m**d, self.k))
        n = cap if self.m is None else int(self.m)
        if n < 1 or n > cap:
            raise ConfigError(
                f"number of subsets must lie in [1, {cap}] "
                f"(min of R and C(b1 M^d, k)), got {n}"
            )
        return n


@dataclass(frozen=True, eq=False)
class GroupMaxima:
    values: np.ndarray  # (m, R)
    subsets: np.ndarray  # (m, k) flat indices into a block of shape (M,)*d + (b1,)
    k: int

    @property
    def r_blocks(self) -> int:
        return self.values.shape[1]


def _sample_subsets(n_coords: int, k: int, m: int, rng) -> np.ndarray:
    if k > n_coords:
        raise ConfigError(f"k = {k} exceeds the {n_coords} coordinates of a block")
    seen, out = set(), []
    while len(out) < m:
        pick = tuple(sorted(rng.choice(n_coords, size=k, replace=False).tolist()))
        if pick not in seen:
            seen.add(pick)
            out.append(pick)
    return np.array(out, dtype=int)


def block_values(cube: ObsCube, b1: int, b2: int) -> np.ndarray:
    """Array ``(R, M^d b1)`` of each block's values, flattened with time fastest."""
    step = b1 + b2
    r = cube.t_len // step
    if r < 1:
        raise ConfigError(f"T = {cube.t_len} is shorter than one block of {step} time points")
    v = cube.values[..., : r * step].reshape(cube.values.shape[:-1] + (r, step))[..., :b1]
    v = np.moveaxis(v, -2, 0)
    return v.reshape(r, -1)


def group_maxima(cube: ObsCube, spec: GroupSpec) -> GroupMaxima:
    if cube.margin != "gumbel":
        raise DataError(f"group maxima need gumbel margins, cube is {cube.margin!r}")
    m = spec.n_subsets(cube.m, cube.d, cube.t_len)
    blocks = block_values(cube, spec.b1, spec.b2)
    subsets = _sample_subsets(blocks.shape[1], spec.k, m, make_rng(spec.seed))
    return GroupMaxima(blocks[:, subsets].max(axis=2).T, subsets, spec.k)


def mu_bias(r: int) -> float:
    """Bias of the unit-scale Gumbel location MLE from ``r`` observations.

    ``exp(-(X - mu))`` is standard exponential, so the MLE equals
    ``mu - log(G / r)`` with ``G ~ Gamma(r)`` and has bias ``log r - psi(r)``
    whatever ``mu`` is.  A parametric bootstrap estimates the same constant.
    """
    return float(np.log(r) - special.digamma(r))


def fit_mu(x: np.ndarray, k: int) -> np.ndarray:
    """Bias-corrected unit-scale Gumbel location along the last axis, clipped to ``[0, log k]``."""
    x = np.asarray(x, dtype=float)
    r = x.shape[-1]
    # -log mean exp(-x), shifted for stability
    low = x.min(axis=-1, keepdims=True)
    mle = low[..., 0] - np.log(np.mean(np.exp(-(x - low)), axis=-1))
    return np.clip(mle - mu_bias(r), 0.0, np.log(k))


def circular_block_indices(r: int, reps: int, rng, block_len: int | None = None) -> np.ndarray:
    """``(reps, r)`` circular block bootstrap resamples of ``range(r)``."""
    block_len = block_len or math.ceil(r ** (1.0 / 3.0))
    n_blocks = math.ceil(r / block_len)
    starts = rng.integers(0, r, size=(reps, n_blocks))
    idx = (starts[:, :, None] + np.arange(block_len)) % r
    return idx.reshape(reps, -1)[:, :r]


@dataclass(eq=False)
class MaxStableCheck:
    k: int
    mu_hat: np.ndarray
    table: Table

    @property
    def fraction_inside(self) -> float:
        return float(np.mean(self.table["inside"]))

    @property
    def n_outside(self) -> int:
        return int(np.sum(~self.table["inside"].astype(bool)))

    @property
    def passed(self) -> bool:
        return self.fraction_inside >= BAND_PASS

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "n_subsets": int(self.mu_hat.size),
            "mu_hat_mean": float(np.mean(self.mu_hat)),
            "n_points": len(self.table),
            "n_outside": self.n_outside,
            "fraction_inside": self.fraction_inside,
            "passed": self.passed,
        }


def _pooled_quantiles(x: np.ndarray, k: int, probs: np.ndarray) -> np.ndarray:
    resid = x - fit_mu(x, k)[..., None]
    pooled = resid.reshape(resid.shape[:-2] + (-1,))
    return np.quantile(pooled, probs, axis=-1, method="hazen").T


def maxstable_check(
    cube: ObsCube,
    spec: GroupSpec,
    bootstrap_reps: int = 1000,
    n_quantiles: int = 200,
    level: float = 0.95,
) -> MaxStableCheck:
    """Pooled ``eta_D - mu_D`` quantiles against the standard Gumbel, with bands.

    Quantiles are taken on the probability grid ``(i - 1/2) / n_quantiles``.
    Bands are pointwise ``level`` basic bootstrap intervals from a circular
    block bootstrap over the ``R`` block indices, refitting ``mu_D`` on
    every resample.  The blocks are treated as independent; strong temporal
    persistence narrows the pooled residual law and shows up as band exits.
    """
    gm = group_maxima(cube, spec)
    x = gm.values
    probs = (np.arange(1, n_quantiles + 1) - 0.5) / n_quantiles
    mu = fit_mu(x, spec.k)
    emp = _pooled_quantiles(x, spec.k, probs)
    rng = spawn(spec.seed, 2)[1]
    idx = circular_block_indices(gm.r_blocks, bootstrap_reps, rng)
    boot = np.empty((bootstrap_reps, n_quantiles))
    chunk = max(1, 2_000_000 // x.size)
    for lo in range(0, bootstrap_reps, chunk):
        xb = np.moveaxis(x[:, idx[lo : lo + chunk]], 1, 0)
        boot[lo : lo + chunk] = _pooled_quantiles(xb, spec.k, probs)
    tail = (1.0 - level) / 2.0
    # basic (reflected) intervals: the clipped location fit is biased near
    # log k and percentile intervals would carry that bias twice
    lower = 2.0 * emp - np.quantile(boot, 1.0 - tail, axis=0)
    upper = 2.0 * emp - np.quantile(boot, tail, axis=0)
    theo = gumbel_quantile(probs)
    table = Table(
        prob=probs,
        theoretical=theo,
        empirical=emp,
        lower=lower,
        upper=upper,
        inside=(theo >= lower) & (theo <= upper),
    )
    return MaxStableCheck(spec.k, mu, table)


def gof_orderstats(
    cube: ObsCube,
    theta: DepParams,
    locations,
    b1: int,
    m_sims: int = 100,
    b2: int = 1,
    seed: int = 0,
    method: str = "exact_extremal",
    level: float = 0.95,
) -> Table:
    """Observed order statistics of ``eta_D`` against simulated ones.

    ``D`` is ``locations`` (0-based spatial indices) times the first ``b1``
    time points of each block.  ``m_sims * R`` copies of the fitted process
    on ``D`` give ``m_sims`` ordered samples of size ``R``; their rank-wise
    mean and ``level`` quantiles form the reference curve and band.
    """
    if cube.margin != "gumbel":
        raise DataError(f"order-statistics check needs gumbel margins, cube is {cube.margin!r}")
    locs = [tuple(int(i) for i in np.atleast_1d(s)) for s in locations]
    if not locs:
        raise ConfigError("need at least one location")
    for s in locs:
        if len(s) != cube.d or min(s) < 0 or max(s) >= cube.m:
            raise ConfigError(f"location {s} outside the {cube.m}^{cube.d} grid")
    step = b1 + b2
    r = cube.t_len // step
    if r < 2:
        raise ConfigError(f"T = {cube.t_len} gives fewer than two blocks of {step}")
    obs = np.empty(r)
    for i in range(r):
        t0 = i * step
        obs[i] = max(cube.values[s + (slice(t0, t0 + b1),)].max() for s in locs)
    obs.sort()
    pts = PointSet(np.array([s + (t,) for s in locs for t in range(b1)], dtype=float))
    cfg = SimConfig(method=method, seed=seed, replicates=m_sims * r)
    sims = np.log(simulate_br(theta, pts, cfg).values.max(axis=1)).reshape(m_sims, r)
    sims.sort(axis=1)
    tail = (1.0 - level) / 2.0
    lower = np.quantile(sims, tail, axis=0)
    upper = np.quantile(sims, 1.0 - tail, axis=0)
    return Table(
        rank=np.arange(1, r + 1),
        observed=obs,
        simulated=sims.mean(axis=0),
        lower=lower,
        upper=upper,
        inside=(obs >= lower) & (obs <= upper),
    )


def _frechet_level(z, mu, sigma, what):
    lam = np.asarray(gumbel_cdf(z, mu, sigma), dtype=float)
    _saturation_check(np.atleast_1d(lam), what)
    return lam, -1.0 / np.log(lam)


def cond_exceedance(z, z_ref, fit_pred, fit_ref, delta_value):
    """``P(eta_p > z | eta_ref > z_ref)`` for Gumbel margins ``(mu, sigma)``.

    ``delta_value = 0`` means the two points coincide; the exponent
    measure then reduces to ``max(1 / y_p, 1 / y_ref)``.
    """
    lam_p, y_p = _frechet_level(z, fit_pred[0], fit_pred[1], "prediction point")
    lam_r, y_r = _frechet_level(z_ref, fit_ref[0], fit_ref[1], "reference point")
    dl = np.asarray(delta_value, dtype=float)
    scalar = np.ndim(y_p) == np.ndim(y_r) == dl.ndim == 0
    y_p, y_r, dl = np.broadcast_arrays(*np.atleast_1d(y_p, y_r, dl))
    lam_p = np.broadcast_to(lam_p, y_p.shape)
    v = np.maximum(1.0 / y_p, 1.0 / y_r)
    pos = dl > 0
    if np.any(pos):
        v[pos] = exponent_v(y_p[pos], y_r[pos], dl[pos])
    joint = 1.0 - lam_r - lam_p + np.exp(-v)
    out = np.clip(joint / (1.0 - lam_r), 0.0, 1.0)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class CondFieldSpec:
    """Reference point ``(s*, t*)`` (0-based) and the levels ``z`` and ``z*``."""

    ref: tuple
    z_ref: float
    z_pred: float


def cond_prob_field(
    spec: CondFieldSpec,
    theta: DepParams,
    fits: MarginFits,
    grid=None,
) -> Table:
    """Conditional exceedance probabilities at prediction points.

    ``grid`` is a sequence of space-time points (0-based spatial indices,
    time last); by default every location of the fitted grid at the
    reference time.
    """
    d = fits.mu.ndim
    ref = tuple(int(x) for x in spec.ref)
    if len(ref) != d + 1:
        raise ConfigError(f"reference point needs {d + 1} coordinates, got {len(ref)}")
    m = fits.mu.shape[0]
    if min(ref[:-1]) < 0 or max(ref[:-1]) >= m:
        raise ConfigError(f"reference location {ref[:-1]} outside the fitted grid")
    if grid is None:
        grid = [loc + (ref[-1],) for loc in np.ndindex(*fits.mu.shape)]
    pts = np.array(grid, dtype=int).reshape(-1, d + 1)
    if pts.size and (pts[:, :-1].min() < 0 or pts[:, :-1].max() >= m):
        raise ConfigError("prediction points must lie on the fitted grid")
    lag = pts - np.array(ref)
    dl = np.atleast_1d(delta(theta, lag[:, :-1], lag[:, -1]))
    spatial = tuple(pts[:, j] for j in range(d))
    mu_p, sig_p = fits.mu[spatial], fits.sigma[spatial]
    ref_fit = (float(fits.mu[ref[:-1]]), float(fits.sigma[ref[:-1]]))
    prob = cond_exceedance(spec.z_pred, spec.z_ref, (mu_p, sig_p), ref_fit, dl)
    cols = {f"s{j + 1}": pts[:, j] + 1 for j in range(d)}
    cols["t"] = pts[:, -1] + 1
    cols["probability"] = np.atleast_1d(prob)
    return Table(cols)


def tail_integral(y: float, r: float, alpha: float, c: float) -> float:
    """``int_y^inf u^r exp(-c u^alpha) du`` by adaptive quadrature.

    The integrand is divided by its value at ``y`` so the quadrature works
    on a function of order one.
    """
    if not (y > 0 and r >= 1 and 0 < alpha <= 2 and c > 0):
        raise ConfigError("tail_integral needs y > 0, r >= 1, 0 < alpha <= 2, c > 0")
    ya = y**alpha

    def f(u):
        return math.exp(r * math.log(u / y) - c * (u**alpha - ya))

    head, _ = integrate.quad(f, y, 2 * y, epsabs=0.0, epsrel=1e-13, limit=200)
    tail, _ = integrate.quad(f, 2 * y, np.inf, epsabs=0.0, epsrel=1e-13, limit=200)
    return (head + tail) * math.exp(r * math.log(y) - c * ya)


def tail_integral_asymptotic(y: float, r: float, alpha: float, c: float) -> float:
    """Leading term ``y^(r - alpha + 1) exp(-c y^alpha) / (c alpha)``."""
    return math.exp((r - alpha + 1) * math.log(y) - c * y**alpha) / (c * alpha)


def tail_ratio(y: float, r: float, alpha: float, c: float) -> float:
    return tail_integral(y, r, alpha, c) / tail_integral_asymptotic(y, r, alpha, c)
