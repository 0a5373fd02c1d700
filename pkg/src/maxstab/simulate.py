"""Simulation of Brown-Resnick space-time processes with standard Frechet margins.

Two methods are available.

``exact_extremal``
    The extremal-functions construction.  Locations are visited in order;
    at location ``x_n`` Poisson points ``zeta`` are generated in decreasing
    order (reciprocals of partial sums of unit exponentials) while
    ``zeta > Z(x_n)``.  For each, a spectral function is drawn from the law
    normalised at ``x_n``,

        Y(x) = exp(W(x) - W(x_n) - delta(x - x_n)),   Y(x_n) = 1,

    and ``zeta * Y`` is merged into ``Z`` only if it stays strictly below
    ``Z`` at every earlier location (otherwise it was already accounted for
    when that location was visited).  The result is an exact draw.

``truncated_spectral``
    ``max_{j <= n} xi_j exp(W_j(x) - delta(x))`` with ``xi_j = 1 / Gamma_j``.
    Biased downwards in the upper tail because Poisson points beyond the
    cap are dropped.

On regular grids the additive variogram makes ``W`` a sum of independent
one-dimensional processes, one per axis, each with variogram
``C_k |.|^alpha_k``.  :func:`simulate_grid` uses that to avoid any
covariance larger than the longest axis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numba
import numpy as np

from ._errors import ConfigError, DataError, DomainError
from .cube import ObsCube
from .dependence import DepParams, delta
from .gaussian import PointSet, build_cov, cholesky_jitter, spawn

METHODS = ("exact_extremal", "truncated_spectral")
DEFAULT_MAX_POINTS = 512
DEFAULT_N_POISSON = 1000
# replicates per RNG substream; fixed so results do not depend on scheduling
REPLICATE_BATCH = 4096


class TruncationWarning(UserWarning):
    """The truncated spectral method underestimates upper-tail dependence."""


@dataclass(frozen=True)
class SimConfig:
    method: str = "exact_extremal"
    n_poisson_max: int = DEFAULT_N_POISSON
    seed: int | None = 0
    replicates: int = 1
    max_points: int = DEFAULT_MAX_POINTS

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown simulation method {self.method!r}; expected {METHODS}")
        if self.replicates < 1:
            raise ConfigError("replicates must be positive")
        if self.method == "truncated_spectral" and self.n_poisson_max < 100:
            raise ConfigError("n_poisson_max must be at least 100 for the truncated method")


@dataclass(frozen=True, eq=False)
class Realization:
    """``values[r, i]`` is replicate ``r`` at point ``pts.coords[i]``."""

    values: np.ndarray
    pts: PointSet
    margin: str = "frechet"

    @property
    def replicates(self) -> int:
        return self.values.shape[0]


def simulate_br(params: DepParams, pts: PointSet, cfg: SimConfig = SimConfig()) -> Realization:
    """Draw ``cfg.replicates`` realisations of the process on ``pts``.

    Replicates are produced in fixed-size batches, each from its own
    child stream of ``cfg.seed``.
    """
    if pts.d != params.d:
        raise DomainError(f"point set has d={pts.d}, parameters have d={params.d}")
    if cfg.method == "exact_extremal" and pts.n > cfg.max_points:
        raise ConfigError(
            f"exact simulation on {pts.n} points exceeds the cap of {cfg.max_points}; "
            "use simulate_grid for regular grids"
        )
    if cfg.method == "truncated_spectral":
        warnings.warn(
            "truncated spectral simulation is biased low in the upper tail", TruncationWarning,
            stacklevel=2,
        )
    cov = build_cov(params, pts)
    chol = cov.chol
    x = pts.coords
    diff = x[:, None, :] - x[None, :, :]
    dd = np.asarray(delta(params, diff[..., :-1], diff[..., -1])).reshape(pts.n, pts.n)
    d0 = np.asarray(delta(params, x[:, :-1], x[:, -1])).reshape(-1)
    n_batches = -(-cfg.replicates // REPLICATE_BATCH)
    rngs = spawn(cfg.seed, n_batches)
    out = []
    for b, rng in enumerate(rngs):
        size = min(REPLICATE_BATCH, cfg.replicates - b * REPLICATE_BATCH)
        if cfg.method == "exact_extremal":
            out.append(_exact_batch(chol, dd, size, rng))
        else:
            out.append(_truncated_batch(chol, d0, size, cfg.n_poisson_max, rng))
    return Realization(np.concatenate(out, axis=0), pts)


def _exact_batch(chol, dd, size, rng):
    n = chol.shape[0]
    log_z = np.full((size, n), -np.inf)
    for k in range(n):
        inv_zeta = rng.standard_exponential(size)
        if k == 0:
            active = np.arange(size)
        else:
            active = np.flatnonzero(-np.log(inv_zeta) > log_z[:, k])
        while active.size:
            w = rng.standard_normal((active.size, n)) @ chol.T
            cand = (w - w[:, [k]] - dd[k]) - np.log(inv_zeta[active])[:, None]
            if k == 0:
                ok = np.ones(active.size, dtype=bool)
            else:
                ok = np.all(cand[:, :k] < log_z[active, :k], axis=1)
            rows = active[ok]
            log_z[rows] = np.maximum(log_z[rows], cand[ok])
            if k == 0:
                break
            inv_zeta[active] += rng.standard_exponential(active.size)
            active = active[-np.log(inv_zeta[active]) > log_z[active, k]]
    return np.exp(log_z)


def _truncated_batch(chol, d0, size, n_poisson, rng):
    n = chol.shape[0]
    log_z = np.full((size, n), -np.inf)
    gamma = np.zeros(size)
    chunk = max(1, min(n_poisson, 2_000_000 // max(1, size * n)))
    done = 0
    while done < n_poisson:
        k = min(chunk, n_poisson - done)
        gam = gamma[:, None] + np.cumsum(rng.standard_exponential((size, k)), axis=1)
        gamma = gam[:, -1]
        w = rng.standard_normal((size, k, n)) @ chol.T
        cand = w - d0 - np.log(gam)[:, :, None]
        log_z = np.maximum(log_z, cand.max(axis=1))
        done += k
    return np.exp(log_z)


# --------------------------------------------------------------------------
# separable grid path


class _AxisProcess:
    """One-dimensional Gaussian process with variogram ``c |.|^alpha`` on ``0..n-1``.

    ``B(0) = 0``; draws are produced in pools by a single matrix product.
    """

    def __init__(self, c: float, alpha: float, n: int, rng, pool: int = 1024):
        self.n = n
        self.rng = rng
        self.pool = pool
        lags = np.abs(np.subtract.outer(np.arange(n), np.arange(n))).astype(float)
        self.vario = c * lags**alpha
        if n > 1:
            s = np.arange(1, n, dtype=float)
            cov = c * (s[:, None] ** alpha + s[None, :] ** alpha) - self.vario[1:, 1:]
            self.chol, _ = cholesky_jitter(cov)
        else:
            self.chol = np.zeros((0, 0))
        self._buf = np.empty((0, n))
        self._pos = 0

    def draws(self, k: int) -> np.ndarray:
        """``k`` independent paths, shape ``(k, n)``."""
        out = np.empty((k, self.n))
        filled = 0
        while filled < k:
            if self._pos >= self._buf.shape[0]:
                z = self.rng.standard_normal((self.pool, self.n - 1))
                self._buf = np.concatenate([np.zeros((self.pool, 1)), z @ self.chol.T], axis=1)
                self._pos = 0
            take = min(k - filled, self._buf.shape[0] - self._pos)
            out[filled:filled + take] = self._buf[self._pos:self._pos + take]
            self._pos += take
            filled += take
        return out


@numba.njit(cache=True)
def _try_merge(log_z, n, log_zeta, comp, idx):
    """Merge ``log_zeta + sum_k comp[k, idx[k, f]]`` into ``log_z`` if it is
    strictly below ``log_z`` at every flat index ``f < n``."""
    n_axes = comp.shape[0]
    for f in range(n - 1, -1, -1):
        s = log_zeta
        for k in range(n_axes):
            s += comp[k, idx[k, f]]
        if s >= log_z[f]:
            return False
    for f in range(log_z.shape[0]):
        s = log_zeta
        for k in range(n_axes):
            s += comp[k, idx[k, f]]
        log_z[f] = max(log_z[f], s)
    return True


@numba.njit(cache=True)
def _merge_all(log_z, log_xi, comp, idx):
    n_axes = comp.shape[0]
    for f in range(log_z.shape[0]):
        s = log_xi
        for k in range(n_axes):
            s += comp[k, idx[k, f]]
        log_z[f] = max(log_z[f], s)


def simulate_grid(
    params: DepParams,
    m: int,
    t_len: int,
    seed=0,
    method: str = "exact_extremal",
    n_poisson_max: int = DEFAULT_N_POISSON,
) -> np.ndarray:
    """One realisation on ``{0..m-1}^d x {0..t_len-1}``, array shape ``(m,)*d + (t_len,)``.

    Uses the axis decomposition of ``W``, so there is no size cap.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown simulation method {method!r}")
    if m < 1 or t_len < 1:
        raise ConfigError("grid sizes must be positive")
    d = params.d
    sizes = [m] * d + [t_len]
    rngs = spawn(seed, d + 2)
    axes = [
        _AxisProcess(params.c[k], params.alpha[k], sizes[k], rngs[k]) for k in range(d + 1)
    ]
    rng = rngs[-1]
    shape = tuple(sizes)
    n_total = int(np.prod(shape))
    idx = np.stack([g.ravel() for g in np.indices(shape)]).astype(np.int64)
    longest = max(sizes)
    comp = np.zeros((d + 1, longest))
    log_z = np.full(n_total, -np.inf)

    if method == "truncated_spectral":
        if n_poisson_max < 100:
            raise ConfigError("n_poisson_max must be at least 100 for the truncated method")
        warnings.warn(
            "truncated spectral simulation is biased low in the upper tail", TruncationWarning,
            stacklevel=2,
        )
        paths = [ax.draws(n_poisson_max) for ax in axes]
        gamma = np.cumsum(rng.standard_exponential(n_poisson_max))
        for j in range(n_poisson_max):
            for k, ax in enumerate(axes):
                comp[k, : ax.n] = paths[k][j] - ax.vario[0]
            _merge_all(log_z, -np.log(gamma[j]), comp, idx)
        return np.exp(log_z).reshape(shape)

    for n in range(n_total):
        loc = idx[:, n]
        inv_zeta = rng.standard_exponential()
        while n == 0 or -np.log(inv_zeta) > log_z[n]:
            for k, ax in enumerate(axes):
                path = ax.draws(1)[0]
                comp[k, : ax.n] = path - path[loc[k]] - ax.vario[loc[k]]
            _try_merge(log_z, n, -np.log(inv_zeta), comp, idx)
            if n == 0:
                break
            inv_zeta += rng.standard_exponential()
    return np.exp(log_z).reshape(shape)


def simulate_cube(params: DepParams, m: int, t_len: int, seed=0, **kwargs) -> ObsCube:
    """Frechet-margin :class:`ObsCube` drawn with :func:`simulate_grid`."""
    return ObsCube(simulate_grid(params, m, t_len, seed, **kwargs), "frechet")


# --------------------------------------------------------------------------
# empirical dependence summaries

MIN_REPLICATES = 1000


def empirical_chi(real: Realization, i: int, j: int, q: float) -> float:
    """Empirical ``P(eta_i > u_i | eta_j > u_j)`` at marginal ``q``-quantiles."""
    if real.replicates < MIN_REPLICATES:
        raise DataError(
            f"empirical_chi needs at least {MIN_REPLICATES} replicates, got {real.replicates}"
        )
    if not 0.8 < q < 1.0:
        raise DomainError("quantile level must lie in (0.8, 1)")
    if i == j:
        return 1.0
    x, y = real.values[:, i], real.values[:, j]
    ex = x > np.quantile(x, q)
    ey = y > np.quantile(y, q)
    return float(np.sum(ex & ey) / np.sum(ey))


def empirical_extremal_coefficient(real: Realization, i: int, j: int, y: float | None = None):
    """Pairwise extremal coefficient from standard Frechet replicates.

    With ``y`` given, returns ``-y log P(eta_i <= y, eta_j <= y)``.  Without
    it, uses ``max(eta_i, eta_j) ~ Frechet(scale=theta)`` and returns the
    maximum likelihood estimate ``n / sum(1 / max)``, which is unbiased in
    its reciprocal and far less noisy.
    """
    mx = np.maximum(real.values[:, i], real.values[:, j])
    if y is None:
        return float(mx.size / np.sum(1.0 / mx))
    p = np.mean(mx <= y)
    return float(-y * np.log(p))
