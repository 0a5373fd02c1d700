"""Closed-form dependence quantities of the anisotropic Brown-Resnick model.

The dependence function is the additive power variogram

    delta(h, u) = sum_j C_j |h_j|^alpha_j + C_{d+1} |u|^alpha_{d+1}

and every bivariate quantity (tail dependence, exponent measure, pair
density) depends on a lag only through ``delta``.  The bivariate exponent
measure is of Huesler-Reiss type with argument ``a = sqrt(2 delta)``.

Write ``L = log(y2 / y1)``, ``w = L / a + a / 2`` and ``v = a - w``.  Then

    V    = Phi(w) / y1 + Phi(v) / y2
    V_1  = -Phi(w) / y1**2                      (uses phi(w)/y1 == phi(v)/y2)
    V_2  = -Phi(v) / y2**2
    V_12 = -phi(w) / (a y1**2 y2)
    g    = exp(-V) (V_1 V_2 - V_12)
         = exp(-V) [Phi(w) Phi(v) + y2 phi(w) / a] / (y1 y2)**2

Derivatives in ``a`` use ``dw/da = v/a``, ``dv/da = w/a`` and
``dV/da = phi(w) / y1``; ``d/d delta = (1/a) d/da``.  Everything is
evaluated in log space so that tails of the normal law do not underflow.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import special

from ._errors import DegenerateLagError, DomainError

#: Smallest dependence value accepted by bivariate operations.
MIN_DELTA = 1e-10

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def norm_cdf(x):
    """Standard normal CDF (``erfc`` based, accurate in both tails)."""
    return special.ndtr(x)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x - _LOG_SQRT_2PI)


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


@dataclass(frozen=True, eq=False)
class DepParams:
    """Parameters ``(C_1..C_{d+1}, alpha_1..alpha_{d+1})`` of ``delta``.

    The last entry of each vector is the temporal one.  ``alpha`` is
    validated on the half-open interval ``(0, 2]``.
    """

    c: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=float).ravel()
        alpha = np.array(self.alpha, dtype=float).ravel()
        if c.size != alpha.size or c.size < 2:
            raise DomainError(
                f"c and alpha must both have length d+1 >= 2, got {c.size} and {alpha.size}"
            )
        if not np.all(np.isfinite(c)) or np.any(c <= 0):
            raise DomainError(f"all C_j must be positive and finite, got {c.tolist()}")
        if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0) or np.any(alpha > 2):
            raise DomainError(f"all alpha_j must lie in (0, 2], got {alpha.tolist()}")
        c.flags.writeable = False
        alpha.flags.writeable = False
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "alpha", alpha)

    @property
    def d(self) -> int:
        """Spatial dimension."""
        return self.c.size - 1

    @property
    def n_params(self) -> int:
        return 2 * self.c.size

    def vector(self) -> np.ndarray:
        """``theta = (C_1, ..., C_{d+1}, alpha_1, ..., alpha_{d+1})``."""
        return np.concatenate([self.c, self.alpha])

    @classmethod
    def from_vector(cls, theta: Sequence[float]) -> DepParams:
        theta = np.asarray(theta, dtype=float)
        if theta.size % 2:
            raise DomainError("theta must have even length 2(d+1)")
        k = theta.size // 2
        return cls(theta[:k], theta[k:])

    def replace_axis(self, axis: int, c: float, alpha: float) -> DepParams:
        cc, aa = self.c.copy(), self.alpha.copy()
        cc[axis], aa[axis] = c, alpha
        return DepParams(cc, aa)

    def to_dict(self) -> dict:
        return {"c": self.c.tolist(), "alpha": self.alpha.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> DepParams:
        return cls(obj["c"], obj["alpha"])

    def __eq__(self, other):
        if not isinstance(other, DepParams):
            return NotImplemented
        return np.array_equal(self.c, other.c) and np.array_equal(self.alpha, other.alpha)

    def __repr__(self):
        return f"DepParams(c={self.c.tolist()}, alpha={self.alpha.tolist()})"


def _lag_array(params: DepParams, h, u) -> np.ndarray:
    """Stack ``(h, u)`` into an array of shape ``(..., d+1)``."""
    h = np.asarray(h, dtype=float)
    u = np.asarray(u, dtype=float)
    if h.ndim == 0:
        h = h[None]
    if h.shape[-1] != params.d:
        raise DomainError(f"spatial lag must have {params.d} components, got shape {h.shape}")
    u = np.broadcast_to(u, h.shape[:-1])
    return np.concatenate([h, u[..., None]], axis=-1)


def delta(params: DepParams, h, u):
    """Dependence function ``delta(h, u)``; vectorised over leading axes of ``h``."""
    lag = np.abs(_lag_array(params, h, u))
    return _scalar(np.sum(params.c * lag**params.alpha, axis=-1))


def delta_grad(params: DepParams, h, u) -> np.ndarray:
    """Gradient of ``delta`` in ``theta``, shape ``(..., 2(d+1))``.

    The alpha component is ``C_j |h_j|^alpha_j log|h_j|``, extended by 0 at
    ``h_j = 0`` (the limit of ``x^a log x`` as ``x -> 0+``).
    """
    lag = np.abs(_lag_array(params, h, u))
    powered = lag**params.alpha
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(lag > 0, np.log(np.where(lag > 0, lag, 1.0)), 0.0)
    return np.concatenate([powered, params.c * powered * logs], axis=-1)


def chi(params: DepParams, h, u):
    """Tail dependence coefficient ``2 (1 - Phi(sqrt(delta / 2)))``."""
    dl = np.asarray(delta(params, h, u), dtype=float)
    # 2 (1 - Phi(x)) == 2 Phi(-x), evaluated without cancellation
    return _scalar(2.0 * norm_cdf(-np.sqrt(dl / 2.0)))


def _check_bivariate(y1, y2, dl, min_delta=MIN_DELTA):
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    dl = np.asarray(dl, dtype=float)
    if np.any(~(y1 > 0)) or np.any(~(y2 > 0)):
        raise DomainError("exponent measure arguments must be strictly positive")
    if not min_delta and np.any(~(dl > 0)):
        raise DomainError("dependence value must be positive")
    if min_delta and np.any(~(dl >= min_delta)):
        raise DegenerateLagError(
            f"dependence value below {MIN_DELTA:g}; coincident pairs are not admissible"
        )
    return y1, y2, dl


def exponent_v(y1, y2, delta_value):
    """Bivariate exponent measure ``V(y1, y2)`` for dependence ``delta_value > 0``.

    Unlike the density, ``V`` stays well conditioned as ``delta -> 0+``, so
    only positivity is required here.
    """
    y1, y2, dl = _check_bivariate(y1, y2, delta_value, min_delta=0.0)
    a = np.sqrt(2.0 * dl)
    lr = np.log(y2) - np.log(y1)
    w = lr / a + a / 2.0
    return _scalar(norm_cdf(w) / y1 + norm_cdf(a - w) / y2)


def extremal_coefficient(delta_value):
    """``V(1, 1) = 2 Phi(sqrt(delta / 2))``; equals ``2 - chi``."""
    dl = np.asarray(delta_value, dtype=float)
    return _scalar(2.0 * norm_cdf(np.sqrt(dl / 2.0)))


def _log_density_parts(y1, y2, dl, want_grad):
    return log_density_from_logs(np.log(y1), np.log(y2), dl, want_grad)


def log_density_from_logs(ly1, ly2, dl, want_grad=False):
    """``log g`` and optionally ``d log g / d delta`` from ``log y1, log y2``.

    No argument checking; callers guarantee ``dl >= MIN_DELTA``.  Used by
    the likelihood, which caches the logs of its pair data.
    """
    a = np.sqrt(2.0 * dl)
    lr = ly2 - ly1
    w = lr / a + a / 2.0
    v = a - w
    lcw, lcv = special.log_ndtr(w), special.log_ndtr(v)
    lpw = -0.5 * w * w - _LOG_SQRT_2PI
    la = np.log(a)
    t1 = lcw + lcv
    t2 = ly2 + lpw - la
    ls = np.logaddexp(t1, t2)
    vv = np.exp(lcw - ly1) + np.exp(lcv - ly2)
    logg = -vv - 2.0 * (ly1 + ly2) + ls
    if not want_grad:
        return logg, None
    lpv = -0.5 * v * v - _LOG_SQRT_2PI
    dv_da = np.exp(lpw - ly1)
    ds_da = (
        (np.exp(lpw + lcv - ls) * v + np.exp(lcw + lpv - ls) * w) / a
        - np.exp(t2 - ls) * (w * v + 1.0) / a
    )
    return logg, (ds_da - dv_da) / a


def log_pair_density(y1, y2, delta_value):
    """``log g(y1, y2)`` for standard Frechet margins."""
    y1, y2, dl = _check_bivariate(y1, y2, delta_value)
    return _scalar(_log_density_parts(y1, y2, dl, False)[0])


def pair_density(y1, y2, delta_value):
    """Bivariate density ``g = exp(-V) (V_1 V_2 - V_12)``."""
    return _scalar(np.exp(log_pair_density(y1, y2, delta_value)))


def log_density_and_ddelta(y1, y2, delta_value):
    """Return ``(log g, d log g / d delta)`` elementwise."""
    y1, y2, dl = _check_bivariate(y1, y2, delta_value)
    logg, dd = _log_density_parts(y1, y2, dl, True)
    return _scalar(logg), _scalar(dd)


def log_density_grad_theta(y1, y2, params: DepParams, h, u) -> np.ndarray:
    """Gradient of ``log g_theta(y1, y2)`` at lag ``(h, u)`` in ``theta``.

    Chain rule through ``delta``; see :func:`delta_grad` for the alpha
    convention at zero and unit lags.
    """
    lag = _lag_array(params, h, u)
    if np.any(np.all(lag == 0, axis=-1)):
        raise DegenerateLagError("the zero lag (h, u) = (0, 0) has no bivariate density")
    dl = delta(params, h, u)
    _, dd = log_density_and_ddelta(y1, y2, dl)
    return np.asarray(dd)[..., None] * delta_grad(params, h, u)
