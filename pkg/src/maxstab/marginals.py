"""Per-location Gumbel fits and the Gumbel / Frechet margin transformations.

With fitted ``(mu, sigma)`` at a location,

    eta_1 = (x - mu) / sigma                 standard Gumbel
    eta_2 = -1 / log Lambda_{mu,sigma}(x)    standard Frechet

and since ``Lambda(x) = exp(-exp(-eta_1))`` the second is ``exp(eta_1)``.
Seasonal adjustment is not performed: inputs are assumed to be stationary
block maxima.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._errors import ConvergenceError, DataError, SaturationError
from .cube import ObsCube
from .reports import Table

MIN_SERIES = 30
SHAPE_WARN = 0.1


class ShapeWarning(UserWarning):
    """A GEV shape estimate is far enough from 0 to question the Gumbel model."""


@dataclass(frozen=True)
class GumbelParams:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DataError(f"Gumbel scale must be positive, got {self.sigma}")


def _check_series(series) -> np.ndarray:
    x = np.asarray(series, dtype=float).ravel()
    if x.size < MIN_SERIES:
        raise DataError(f"need at least {MIN_SERIES} observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DataError("series contains non-finite values")
    return x


def fit_gumbel(series, max_iter: int = 200, tol: float = 1e-12) -> GumbelParams:
    """Maximum likelihood Gumbel fit.

    The scale solves the profile equation

        sigma - mean(x) + sum(x w) / sum(w) = 0,   w = exp(-x / sigma),

    whose left side is strictly increasing in ``sigma``.  Newton steps are
    safeguarded by bisection on ``[1e-6, 10]`` times the sample spread;
    the location then follows in closed form.
    """
    x = _check_series(series)
    centre = x.mean()
    spread = x.std()
    if not spread > 0 or np.ptp(x) == 0:
        raise DataError("constant series: the Gumbel scale estimate degenerates to 0")
    z = (x - centre) / spread
    zmin = z.min()

    def profile(s):
        w = np.exp(-(z - zmin) / s)
        sw = w.sum()
        m1 = (z * w).sum() / sw
        m2 = (z * z * w).sum() / sw
        return s + m1, 1.0 + (m2 - m1 * m1) / (s * s)

    lo, hi = 1e-6, 10.0
    if profile(lo)[0] > 0 or profile(hi)[0] < 0:
        raise ConvergenceError("Gumbel profile equation has no root in the search bracket")
    s = np.sqrt(6.0) / np.pi  # moment estimate in standardised units
    for _ in range(max_iter):
        h, dh = profile(s)
        if h > 0:
            hi = s
        else:
            lo = s
        step = s - h / dh
        s_new = step if lo < step < hi else 0.5 * (lo + hi)
        if abs(s_new - s) <= tol * s_new:
            s = s_new
            break
        s = s_new
    else:
        raise ConvergenceError(f"Gumbel scale did not converge in {max_iter} iterations")
    mu_z = zmin - s * np.log(np.mean(np.exp(-(z - zmin) / s)))
    return GumbelParams(mu=float(centre + spread * mu_z), sigma=float(spread * s))


def gumbel_loglik(series, mu: float, sigma: float) -> float:
    z = (np.asarray(series, dtype=float) - mu) / sigma
    return float(-z.size * np.log(sigma) - np.sum(z) - np.sum(np.exp(-z)))


def gev_shape_estimate(series) -> float:
    """L-moment estimate of the GEV shape (``xi > 0`` heavy tailed).

    Uses Hosking's rational approximation in the sample L-skewness; cheap
    and adequate as a check that a Gumbel (``xi = 0``) model is reasonable.
    """
    x = np.sort(_check_series(series))
    n = x.size
    i = np.arange(n)
    b0 = x.mean()
    b1 = np.sum(i * x) / (n * (n - 1))
    b2 = np.sum(i * (i - 1) * x) / (n * (n - 1) * (n - 2))
    l2 = 2 * b1 - b0
    l3 = 6 * b2 - 6 * b1 + b0
    if l2 <= 0:
        raise DataError("constant series has no L-scale")
    t3 = l3 / l2
    c = 2.0 / (3.0 + t3) - np.log(2) / np.log(3)
    return float(-(7.8590 * c + 2.9554 * c * c))


@dataclass(frozen=True, eq=False)
class MarginFits:
    """Location/scale arrays of shape ``(M,)*d`` and the GEV shape diagnostic."""

    mu: np.ndarray
    sigma: np.ndarray
    shape: np.ndarray | None = None

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if mu.shape != sigma.shape:
            raise DataError("mu and sigma arrays differ in shape")
        if np.any(~(sigma > 0)):
            raise DataError("all Gumbel scales must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        if self.shape is not None:
            object.__setattr__(self, "shape", np.asarray(self.shape, dtype=float))

    def at(self, loc) -> GumbelParams:
        loc = tuple(loc)
        return GumbelParams(float(self.mu[loc]), float(self.sigma[loc]))

    def to_dict(self) -> dict:
        out = {"mu": self.mu.tolist(), "sigma": self.sigma.tolist()}
        if self.shape is not None:
            out["gev_shape"] = self.shape.tolist()
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> MarginFits:
        if "mu" not in obj or "sigma" not in obj:
            raise DataError("margin fits need 'mu' and 'sigma' arrays")
        return cls(obj["mu"], obj["sigma"], obj.get("gev_shape"))


def fit_margins(cube: ObsCube) -> MarginFits:
    """Gumbel fit at every location, plus the GEV shape diagnostic."""
    grid = (cube.m,) * cube.d
    mu, sigma, shape = np.empty(grid), np.empty(grid), np.empty(grid)
    for loc in cube.locations():
        series = cube.series(loc)
        fit = fit_gumbel(series)
        mu[loc], sigma[loc] = fit.mu, fit.sigma
        shape[loc] = gev_shape_estimate(series)
    bad = np.abs(shape) >= SHAPE_WARN
    if bad.any():
        warnings.warn(
            f"{int(bad.sum())} location(s) have |GEV shape| >= {SHAPE_WARN}; "
            "a Gumbel margin may be inadequate there",
            ShapeWarning,
            stacklevel=2,
        )
    return MarginFits(mu, sigma, shape)


def _check_fits(cube: ObsCube, fits: MarginFits):
    if fits.mu.shape != (cube.m,) * cube.d:
        raise DataError(
            f"margin fits cover grid {fits.mu.shape}, cube grid is {(cube.m,) * cube.d}"
        )
    return fits.mu[..., None], fits.sigma[..., None]


def to_standard_gumbel(cube: ObsCube, fits: MarginFits) -> ObsCube:
    mu, sigma = _check_fits(cube, fits)
    return ObsCube((cube.values - mu) / sigma, "gumbel")


def from_standard_gumbel(cube: ObsCube, fits: MarginFits) -> ObsCube:
    """Inverse of :func:`to_standard_gumbel`."""
    mu, sigma = _check_fits(cube, fits)
    return ObsCube(cube.values * sigma + mu, "raw")


def gumbel_cdf(x, mu=0.0, sigma=1.0):
    return np.exp(-np.exp(-(np.asarray(x, dtype=float) - mu) / sigma))


def _saturation_check(lam: np.ndarray, what: str):
    bad = (lam <= 0.0) | (lam >= 1.0)
    if bad.any():
        where = tuple(int(i) + 1 for i in np.argwhere(bad)[0])
        raise SaturationError(
            f"Gumbel CDF saturates to {float(lam[bad][0])!r} at {what} {where} "
            f"({int(bad.sum())} cell(s) affected)"
        )


def to_standard_frechet(cube: ObsCube, fits: MarginFits) -> ObsCube:
    """``-1 / log Lambda(x)``; raises :class:`SaturationError` where ``Lambda`` is 0 or 1."""
    mu, sigma = _check_fits(cube, fits)
    z = (cube.values - mu) / sigma
    with np.errstate(over="ignore"):
        _saturation_check(np.exp(-np.exp(-z)), "(location..., time)")
    return ObsCube(np.exp(z), "frechet")


def as_margin(cube: ObsCube, target: str, fits: MarginFits | None = None) -> ObsCube:
    """Bring ``cube`` to ``target`` margins, fitting Gumbel margins if raw and no fits given."""
    if cube.margin == target:
        return cube
    if cube.margin == "raw":
        fits = fits if fits is not None else fit_margins(cube)
        if target == "gumbel":
            return to_standard_gumbel(cube, fits)
        return to_standard_frechet(cube, fits)
    if cube.margin == "gumbel" and target == "frechet":
        return ObsCube(np.exp(cube.values), "frechet")
    if cube.margin == "frechet" and target == "gumbel":
        return ObsCube(np.log(cube.values), "gumbel")
    raise DataError(f"cannot convert {cube.margin} margins to {target}")


def gumbel_quantile(p):
    return -np.log(-np.log(np.asarray(p, dtype=float)))


def qq_report(series, dist: str = "standard_gumbel", level: float = 0.95) -> Table:
    """Sample versus standard Gumbel quantiles with Kolmogorov-Smirnov bands.

    Plotting positions are ``(i - 1/2) / n``.  The band at ``p`` is
    ``[Q(p - k_n), Q(p + k_n)]`` with ``k_n`` the ``level`` quantile of the
    one-sample KS statistic; outside ``(0, 1)`` the bound is infinite.
    """
    if dist != "standard_gumbel":
        raise DataError(f"unsupported reference distribution {dist!r}")
    x = np.sort(_check_series(series))
    n = x.size
    p = (np.arange(1, n + 1) - 0.5) / n
    kn = stats.kstwo.ppf(level, n)
    lo_p, hi_p = p - kn, p + kn
    with np.errstate(divide="ignore", invalid="ignore"):
        lower = np.where(lo_p > 0, gumbel_quantile(np.clip(lo_p, 1e-300, 1)), -np.inf)
        upper = np.where(hi_p < 1, gumbel_quantile(np.clip(hi_p, 0, 1 - 1e-16)), np.inf)
    theo = gumbel_quantile(p)
    return Table(
        empirical=x,
        theoretical=theo,
        lower=lower,
        upper=upper,
        inside=(x >= lower) & (x <= upper),
    )
