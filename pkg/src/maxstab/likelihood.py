"""Pairwise log-likelihood over a space-time design mask and its maximiser.

For a mask with maximal lags ``(r, p)`` the objective is the sum of
``log g_theta`` over all pairs ``((s, t), (s + h, t + u))`` with
``0 <= h <= r`` componentwise, ``0 <= u <= p``, ``(h, u) != 0`` and both
endpoints inside the observed window.  Only nonnegative spatial lags enter.

Because ``delta`` is constant along a lag, the pair data are cached per lag
and the gradient reduces to one scalar per lag times ``d delta / d theta``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from ._errors import ConfigError, DataError, IdentifiabilityError
from .cube import ObsCube
from .dependence import (
    MIN_DELTA,
    DepParams,
    delta_grad,
    log_density_from_logs,
)
from .gaussian import make_rng


@dataclass(frozen=True)
class DesignMask:
    """Maximal spatial lags ``r`` (one per axis) and maximal temporal lag ``p``."""

    r: tuple
    p: int

    def __post_init__(self):
        r = tuple(int(x) for x in np.atleast_1d(self.r))
        p = int(self.p)
        if any(x < 0 for x in r) or p < 0:
            raise ConfigError(f"mask lags must be nonnegative, got r={r}, p={p}")
        if not r:
            raise ConfigError("mask needs at least one spatial axis")
        if all(x == 0 for x in r) and p == 0:
            raise ConfigError("mask (0, ..., 0; 0) contains no lag pairs")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "p", p)

    @classmethod
    def parse(cls, text: str) -> DesignMask:
        """``"4,4,2"`` -> ``r=(4, 4), p=2``."""
        try:
            vals = [int(x) for x in str(text).split(",")]
        except ValueError as exc:
            raise ConfigError(f"cannot parse mask {text!r}; expected integers like 4,4,2") from exc
        if len(vals) < 2:
            raise ConfigError(f"mask {text!r} needs d spatial lags and one temporal lag")
        return cls(tuple(vals[:-1]), vals[-1])

    @property
    def d(self) -> int:
        return len(self.r)

    @property
    def max_lags(self) -> tuple:
        return self.r + (self.p,)

    def lags(self):
        """``(h, u)`` pairs in lexicographic order, zero lag excluded."""
        ranges = [range(x + 1) for x in self.max_lags]
        for lag in itertools.product(*ranges):
            if any(lag):
                yield lag[:-1], lag[-1]

    def n_pairs(self, m: int, t_len: int) -> int:
        """Pairs with both endpoints in ``{1..m}^d x {1..t_len}``; lags beyond the extent add none."""
        return sum(
            math.prod(max(m - hj, 0) for hj in h) * max(t_len - u, 0) for h, u in self.lags()
        )

    def free(self) -> np.ndarray:
        """Identifiable coordinates of ``theta``.

        An axis whose lags only take the values 0 and 1 sees ``|h|^alpha``
        at 0 and 1 only, so its alpha is not identifiable; an axis with no
        lag identifies nothing.
        """
        lags = np.array(self.max_lags)
        return np.concatenate([lags >= 1, lags >= 2])

    def check(self, cube: ObsCube) -> None:
        if cube.margin != "frechet":
            raise DataError(f"pairwise likelihood needs frechet margins, cube is {cube.margin!r}")
        if cube.d != self.d:
            raise ConfigError(f"mask has d={self.d}, cube has d={cube.d}")
        if max(self.r) >= cube.m or self.p >= cube.t_len:
            raise ConfigError(
                f"mask lags {self.max_lags} must be below the cube extent "
                f"(M={cube.m}, T={cube.t_len})"
            )


class PairSet:
    """Log pair data of ``cube`` grouped by lag, for repeated evaluation."""

    def __init__(self, cube: ObsCube, mask: DesignMask):
        mask.check(cube)
        self.mask = mask
        logv = np.log(cube.values)
        m, t = cube.m, cube.t_len
        self.lags = []
        self.first = []
        self.second = []
        for h, u in mask.lags():
            lo = tuple(slice(0, m - hj) for hj in h) + (slice(0, t - u),)
            hi = tuple(slice(hj, m) for hj in h) + (slice(u, t),)
            self.lags.append((np.array(h, dtype=float), float(u)))
            self.first.append(logv[lo].ravel())
            self.second.append(logv[hi].ravel())
        self.n_pairs = int(sum(x.size for x in self.first))

    def _deltas(self, params: DepParams):
        if params.d != self.mask.d:
            raise ConfigError(f"parameters have d={params.d}, mask has d={self.mask.d}")
        lag = np.array([np.append(h, u) for h, u in self.lags])
        return np.sum(params.c * lag**params.alpha, axis=1), lag

    def value(self, params: DepParams) -> float:
        """Pair sum with exactly rounded (``math.fsum``) accumulation."""
        deltas, _ = self._deltas(params)
        parts = []
        for dl, a, b in zip(deltas, self.first, self.second):
            logg, _ = log_density_from_logs(a, b, max(dl, MIN_DELTA))
            parts.append(math.fsum(logg))
        return math.fsum(parts)

    def value_and_grad(self, params: DepParams, exact: bool = False):
        deltas, lag = self._deltas(params)
        parts = []
        score = np.empty(len(deltas))
        for i, (dl, a, b) in enumerate(zip(deltas, self.first, self.second)):
            logg, dd = log_density_from_logs(a, b, max(dl, MIN_DELTA), True)
            parts.append(math.fsum(logg) if exact else float(np.sum(logg)))
            score[i] = np.sum(dd)
        grad = score @ delta_grad(params, lag[:, :-1], lag[:, -1])
        return (math.fsum(parts) if exact else float(np.sum(parts))), grad

    def lag_values(self, params: DepParams) -> dict:
        """Per-lag sums, keyed by ``(h, u)``."""
        deltas, _ = self._deltas(params)
        out = {}
        for (h, u), dl, a, b in zip(self.lags, deltas, self.first, self.second):
            logg, _ = log_density_from_logs(a, b, max(dl, MIN_DELTA))
            out[(tuple(int(x) for x in h), int(u))] = math.fsum(logg)
        return out


def pl_objective(cube: ObsCube, mask: DesignMask, params: DepParams) -> float:
    """Pairwise log-likelihood over interior pairs."""
    return PairSet(cube, mask).value(params)


def pl_gradient(cube: ObsCube, mask: DesignMask, params: DepParams) -> np.ndarray:
    """Gradient of :func:`pl_objective` in ``theta = (C, alpha)``."""
    return PairSet(cube, mask).value_and_grad(params)[1]


def boundary_set_size(m: int, d: int, t_len: int, h, u: int) -> int:
    """Number of ``(s, t)`` in the window whose partner ``(s + h, t + u)`` leaves it."""
    h = tuple(int(x) for x in np.atleast_1d(h))
    if len(h) != d:
        raise ConfigError(f"lag has {len(h)} spatial components, expected {d}")
    inside = math.prod(max(m - abs(x), 0) for x in h) * max(t_len - abs(int(u)), 0)
    return m**d * t_len - inside


def boundary_bound(m: int, d: int, t_len: int, mask: DesignMask) -> int:
    """``K (M^(d-1) T + M^d)`` with ``K = max(sum(r), p)``."""
    k2 = max(sum(mask.r), mask.p)
    return k2 * (m ** (d - 1) * t_len + m**d)


def _q_and_boundary(big: ObsCube, mask: DesignMask, params: DepParams, window):
    m, t = window
    if big.margin != "frechet":
        raise DataError("boundary diagnostics need a frechet cube")
    if big.d != mask.d or params.d != mask.d:
        raise ConfigError("dimension mismatch between cube, mask and parameters")
    if big.m < m + max(mask.r) or big.t_len < t + mask.p:
        raise ConfigError("enlarged cube must extend the window by the mask lags")
    logv = np.log(big.values)
    q_parts, r_parts = [], []
    for h, u in mask.lags():
        dl = float(np.sum(params.c * np.abs(np.append(h, u)) ** params.alpha))
        lo = tuple(slice(0, m) for _ in h) + (slice(0, t),)
        hi = tuple(slice(hj, hj + m) for hj in h) + (slice(u, u + t),)
        logg, _ = log_density_from_logs(logv[lo], logv[hi], max(dl, MIN_DELTA))
        inside = np.ones(logg.shape, dtype=bool)
        for axis, hj in enumerate(h):
            idx = [None] * logg.ndim
            idx[axis] = slice(None)
            inside &= (np.arange(m) + hj < m)[tuple(idx)]
        inside &= np.arange(t) + u < t
        q_parts.append(math.fsum(logg.ravel()))
        r_parts.append(math.fsum(logg[~inside]))
    return math.fsum(q_parts), math.fsum(r_parts)


def q_sum(big: ObsCube, mask: DesignMask, params: DepParams, window) -> float:
    """Full-rectangle sum: every ``(s, t)`` of the ``window = (M, T)`` paired at every lag.

    Partners outside the window are read from the enlarged cube ``big``.
    """
    return _q_and_boundary(big, mask, params, window)[0]


def boundary_term(big: ObsCube, mask: DesignMask, params: DepParams, window) -> float:
    """Sum over pairs whose partner leaves the ``(M, T)`` window.

    A diagnostic only: it needs data beyond the window, so it is evaluated
    on an enlarged (typically simulated) cube and never used in fitting.
    """
    return _q_and_boundary(big, mask, params, window)[1]


@dataclass
class FitOptions:
    restarts: int = 3
    seed: int = 0
    max_iter: int = 500
    gtol: float = 1e-6
    init: str = "default"  # or "chi"
    perturb: float = 0.5


@dataclass(eq=False)
class FitResult:
    theta_hat: DepParams
    objective: float
    n_pairs: int
    converged: bool
    trace: list = field(default_factory=list)
    frozen: np.ndarray | None = None
    mask: tuple | None = None

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat.to_dict(),
            "objective": self.objective,
            "n_pairs": self.n_pairs,
            "converged": bool(self.converged),
            "frozen": None if self.frozen is None else [bool(x) for x in self.frozen],
            "mask": None if self.mask is None else [list(x) for x in self.mask],
            "trace": self.trace,
        }


def _to_phi(theta: np.ndarray, k: int) -> np.ndarray:
    c, alpha = theta[:k], theta[k:]
    alpha = np.clip(alpha, 1e-9, 2.0 - 1e-9)
    return np.concatenate([np.log(c), special.logit(alpha / 2.0)])


def _from_phi(phi: np.ndarray, k: int) -> np.ndarray:
    return np.concatenate([np.exp(phi[:k]), 2.0 * special.expit(phi[k:])])


def chi_init(cube: ObsCube, mask: DesignMask) -> DepParams:
    """Moment-style start: invert the pairwise extremal coefficient at unit lags.

    For standard Frechet pairs ``1 / max(Y1, Y2)`` is exponential with rate
    equal to the extremal coefficient ``2 Phi(sqrt(delta / 2))``; the rate
    estimate is inverted for ``delta`` and used as ``C_j`` with ``alpha_j = 1``.
    """
    mask.check(cube)
    k = mask.d + 1
    c = np.ones(k)
    v = cube.values
    for axis, lag in enumerate(mask.max_lags):
        if lag < 1:
            continue
        a = np.take(v, range(v.shape[axis] - 1), axis=axis)
        b = np.take(v, range(1, v.shape[axis]), axis=axis)
        ec = a.size / np.sum(1.0 / np.maximum(a, b))
        ec = float(np.clip(ec, 1.0 + 1e-6, 2.0 - 1e-6))
        c[axis] = 2.0 * special.ndtri(ec / 2.0) ** 2
    return DepParams(c, np.ones(k))


def fit_pmle(
    cube: ObsCube,
    mask: DesignMask,
    init: DepParams | None = None,
    opts: FitOptions | None = None,
    pairs: PairSet | None = None,
) -> FitResult:
    """Maximise the pairwise log-likelihood.

    Free coordinates are optimised in ``(log C, logit(alpha / 2))`` by BFGS
    on the per-pair objective with the analytic gradient; a failed line
    search is retried once and then handed to Nelder-Mead.  Non-identifiable
    coordinates (see :meth:`DesignMask.free`) stay at their initial values.
    """
    opts = opts or FitOptions()
    pairs = pairs or PairSet(cube, mask)
    k = mask.d + 1
    if init is None:
        init = chi_init(cube, mask) if opts.init == "chi" else DepParams(np.ones(k), np.ones(k))
    if init.d != mask.d:
        raise ConfigError(f"initial parameters have d={init.d}, mask has d={mask.d}")
    free = mask.free()
    if not free.any():
        raise IdentifiabilityError("mask leaves no identifiable parameter")
    phi0 = _to_phi(init.vector(), k)
    n = pairs.n_pairs

    def full(x):
        phi = phi0.copy()
        phi[free] = x
        return phi

    def fun(x):
        theta = _from_phi(full(x), k)
        try:
            val, grad = pairs.value_and_grad(DepParams.from_vector(theta))
        except (ValueError, ArithmeticError):
            return np.inf, np.zeros_like(x)
        if not np.isfinite(val):
            return np.inf, np.zeros_like(x)
        # chain rule into (log C, logit(alpha / 2))
        jac = np.concatenate([theta[:k], theta[k:] * (1.0 - theta[k:] / 2.0)])
        return -val / n, -(grad * jac)[free] / n

    def grad_ok(x):
        _, g = fun(x)
        return bool(np.all(np.isfinite(g)) and np.max(np.abs(g)) <= 10 * opts.gtol)

    rng = make_rng(opts.seed)
    starts = [phi0[free]]
    for _ in range(opts.restarts):
        starts.append(phi0[free] + opts.perturb * rng.standard_normal(int(free.sum())))

    trace = []
    best = None
    for i, x0 in enumerate(starts):
        res = optimize.minimize(
            fun, x0, jac=True, method="BFGS",
            options={"gtol": opts.gtol, "maxiter": opts.max_iter},
        )
        n_iter, method = res.nit, "BFGS"
        if not res.success and not grad_ok(res.x):
            res2 = optimize.minimize(
                fun, res.x, jac=True, method="BFGS",
                options={"gtol": opts.gtol, "maxiter": opts.max_iter},
            )
            n_iter += res2.nit
            res = res2 if res2.fun <= res.fun else res
            if not res.success and not grad_ok(res.x):
                res3 = optimize.minimize(
                    lambda x: fun(x)[0], res.x, method="Nelder-Mead",
                    options={"maxiter": opts.max_iter * 4, "xatol": 1e-8, "fatol": 1e-12},
                )
                method = "BFGS+Nelder-Mead"
                n_iter += res3.nit
                res = res3 if res3.fun <= res.fun else res
        ok = bool(np.isfinite(res.fun) and (res.success or grad_ok(res.x)))
        trace.append(
            {"start": i, "method": method, "iterations": int(n_iter),
             "objective": float(-res.fun * n), "converged": ok}
        )
        if best is None or res.fun < best[0].fun:
            best = (res, ok)

    res, ok = best
    theta_hat = DepParams.from_vector(_from_phi(full(res.x), k))
    return FitResult(
        theta_hat=theta_hat,
        objective=pairs.value(theta_hat),
        n_pairs=n,
        converged=ok,
        trace=trace,
        frozen=~free,
        mask=(mask.max_lags,),
    )


def axis_mask(d: int, axis: int, lag: int) -> DesignMask:
    lags = [0] * (d + 1)
    lags[axis] = lag
    return DesignMask(tuple(lags[:-1]), lags[-1])


def separated_fit(
    cube: ObsCube,
    max_lags,
    init: DepParams | None = None,
    opts: FitOptions | None = None,
) -> FitResult:
    """One likelihood fit per axis with the other axes' lags set to 0.

    ``objective`` and ``n_pairs`` are totals over the sub-fits; axes with
    max lag 0 keep their initial parameters and are flagged as frozen.
    """
    max_lags = tuple(int(x) for x in max_lags)
    d = cube.d
    if len(max_lags) != d + 1:
        raise ConfigError(f"need {d + 1} per-axis max lags, got {len(max_lags)}")
    if not any(max_lags):
        raise IdentifiabilityError("all per-axis max lags are 0; nothing to fit")
    k = d + 1
    init = init or DepParams(np.ones(k), np.ones(k))
    c, alpha = init.c.copy(), init.alpha.copy()
    frozen = np.ones(2 * k, dtype=bool)
    objective, n_pairs, converged, trace, masks = [], 0, True, [], []
    for axis, lag in enumerate(max_lags):
        if lag == 0:
            continue
        mask = axis_mask(d, axis, lag)
        sub = fit_pmle(cube, mask, init, opts)
        c[axis], alpha[axis] = sub.theta_hat.c[axis], sub.theta_hat.alpha[axis]
        frozen[[axis, k + axis]] = sub.frozen[[axis, k + axis]]
        objective.append(sub.objective)
        n_pairs += sub.n_pairs
        converged &= sub.converged
        trace.append({"axis": axis, "max_lag": lag, "runs": sub.trace})
        masks.append(mask.max_lags)
    return FitResult(
        theta_hat=DepParams(c, alpha),
        objective=math.fsum(objective),
        n_pairs=n_pairs,
        converged=converged,
        trace=trace,
        frozen=frozen,
        mask=tuple(masks),
    )
