"""Subsampling quantiles and the Bonferroni isotropy test for ``d = 2``.

The statistic is refitted on every overlapping block of a block scheme;
the empirical law of ``tau_b |theta_b - theta|`` with ``tau_b`` the square
root of the block volume approximates the sampling law of the rescaled
full-window estimate.

Two scalings are offered.  Under increasing domain the full-window rate is
``sqrt(M^d T)``; with the spatial window held fixed it is ``sqrt(T)`` and
the rejection threshold is divided by ``M``.  The two give the same
decision.  Taking spatial blocks of full side ``M`` matches the fixed
domain theory; smaller spatial blocks, as often used in practice, are
accepted but sit outside it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._errors import ConfigError, ConvergenceError, MaxstabError
from .cube import ObsCube
from .dependence import DepParams
from .likelihood import FitOptions, FitResult, separated_fit

REGIMES = ("increasing_domain", "fixed_domain")
MAX_DROPPED = 0.05


@dataclass(frozen=True)
class BlockScheme:
    """Block lengths ``b``, steps ``e`` and block counts ``q`` per axis (time last)."""

    b: tuple
    e: tuple
    q: tuple

    @property
    def n_blocks(self) -> int:
        return math.prod(self.q)

    @property
    def volume(self) -> int:
        return math.prod(self.b)

    def to_dict(self) -> dict:
        return {"b": list(self.b), "e": list(self.e), "q": list(self.q)}


def default_blocks(m: int, d: int, t_len: int) -> tuple:
    """Full spatial side and ``max(floor(0.8 T), 50)`` time points (capped at ``T``)."""
    return (m,) * d + (min(max(int(0.8 * t_len), 50), t_len),)


def make_blocks(m: int, t_len: int, b, e, d: int | None = None):
    """Block scheme and the list of block slices, in lexicographic block order."""
    b = tuple(int(x) for x in b)
    e = tuple(int(x) for x in e)
    d = len(b) - 1 if d is None else d
    if len(b) != d + 1 or len(e) != d + 1:
        raise ConfigError(f"blocks and overlaps need {d + 1} entries, got {b} and {e}")
    extent = (m,) * d + (t_len,)
    if any(x < 1 for x in b + e):
        raise ConfigError("block lengths and steps must be positive")
    if any(bj > nj for bj, nj in zip(b, extent)):
        raise ConfigError(f"block lengths {b} exceed the window {extent}")
    q = tuple((nj - bj) // ej + 1 for nj, bj, ej in zip(extent, b, e))
    slices = []
    for idx in np.ndindex(*q):
        slices.append(tuple(slice(i * ej, i * ej + bj) for i, bj, ej in zip(idx, b, e)))
    return BlockScheme(b, e, q), slices


ESTIMATORS = {
    "C": lambda th: float(th.c[1] - th.c[0]),
    "alpha": lambda th: float(th.alpha[1] - th.alpha[0]),
}


def quantile_index(level: float, n: int) -> int:
    """0-based index of ``inf{x : L(x) >= level}`` among ``n`` sorted points."""
    if not 0.0 < level <= 1.0:
        raise ConfigError(f"quantile level must lie in (0, 1], got {level}")
    # guard against level * n landing a hair above an integer
    return max(math.ceil(level * n - 1e-9), 1) - 1


@dataclass(frozen=True, eq=False)
class SubsampleDistribution:
    """Empirical law ``L`` of ``tau_b |theta_b - theta|`` over the kept blocks."""

    values: np.ndarray
    tau_b: float
    n_dropped: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", np.sort(np.asarray(self.values, dtype=float)))

    @property
    def n(self) -> int:
        return self.values.size

    def cdf(self, x):
        return np.searchsorted(self.values, x, side="right") / self.n

    def quantile(self, level: float) -> float:
        return float(self.values[quantile_index(level, self.n)])


def _block_fit(cube, sl, max_lags, init, opts):
    try:
        return separated_fit(cube.sub(sl), max_lags, init=init, opts=opts)
    except (MaxstabError, ValueError, ArithmeticError):
        return None


def block_fits(
    cube: ObsCube,
    max_lags,
    scheme_slices,
    full: FitResult,
    opts: FitOptions | None = None,
    threads: int = 1,
):
    """Refit on every block, warm-started at the full-window estimate.

    Returns the kept estimates and the number of dropped (failed or
    non-converged) blocks; more than 5% dropped is an error.
    """
    opts = replace(opts or FitOptions(), restarts=0)
    init = full.theta_hat
    args = [(cube, sl, max_lags, init, opts) for sl in scheme_slices]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            fits = list(ex.map(lambda a: _block_fit(*a), args))
    else:
        fits = [_block_fit(*a) for a in args]
    kept = [f.theta_hat for f in fits if f is not None and f.converged]
    dropped = len(fits) - len(kept)
    if dropped > MAX_DROPPED * len(fits):
        raise ConvergenceError(
            f"{dropped} of {len(fits)} block fits failed or did not converge "
            f"(limit {MAX_DROPPED:.0%})"
        )
    return kept, dropped


def subsample_distribution(
    cube: ObsCube,
    max_lags,
    scheme: BlockScheme,
    slices,
    estimator: str = "C",
    full: FitResult | None = None,
    opts: FitOptions | None = None,
    threads: int = 1,
) -> SubsampleDistribution:
    if estimator not in ESTIMATORS:
        raise ConfigError(f"unknown estimator {estimator!r}; expected one of {list(ESTIMATORS)}")
    full = full or separated_fit(cube, max_lags, opts=opts)
    kept, dropped = block_fits(cube, max_lags, slices, full, opts, threads)
    return _distribution(kept, dropped, full.theta_hat, ESTIMATORS[estimator], scheme)


def _distribution(kept, dropped, theta, est, scheme) -> SubsampleDistribution:
    tau_b = math.sqrt(scheme.volume)
    ref = est(theta)
    vals = np.array([tau_b * abs(est(th) - ref) for th in kept])
    return SubsampleDistribution(vals, tau_b, dropped)


@dataclass(frozen=True)
class HypothesisResult:
    estimate: float
    tau: float
    statistic: float
    rejection_bound: float
    ci: tuple
    reject: bool

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "tau": self.tau,
            "statistic": self.statistic,
            "rejection_bound": self.rejection_bound,
            "ci": list(self.ci),
            "reject": self.reject,
        }


def tau_full(m: int, d: int, t_len: int, regime: str) -> float:
    if regime == "increasing_domain":
        return math.sqrt(m**d * t_len)
    if regime == "fixed_domain":
        return math.sqrt(t_len)
    raise ConfigError(f"unknown regime {regime!r}; expected one of {REGIMES}")


def decide(estimate: float, quantile: float, tau: float, scale: float = 1.0) -> HypothesisResult:
    """Reject when ``|tau * estimate| > quantile / scale``; CI is ``estimate +- bound / tau``."""
    bound = quantile / scale
    stat = tau * estimate
    half = bound / tau
    return HypothesisResult(
        estimate=float(estimate),
        tau=float(tau),
        statistic=float(stat),
        rejection_bound=float(bound),
        ci=(float(estimate - half), float(estimate + half)),
        reject=bool(abs(stat) > bound),
    )


@dataclass(eq=False)
class TestReport:
    regime: str
    beta: float
    c: HypothesisResult
    alpha: HypothesisResult
    scheme: BlockScheme | None = None
    theta_hat: DepParams | None = None
    n_blocks: int = 0
    n_dropped: int = 0
    extra: dict = field(default_factory=dict)
    scale: float = 1.0
    # subsampling laws behind the decisions; not serialised
    distributions: dict = field(default_factory=dict, repr=False)

    __test__ = False  # not a pytest class

    @property
    def theta_c_hat(self) -> float:
        return self.c.estimate

    @property
    def theta_alpha_hat(self) -> float:
        return self.alpha.estimate

    @property
    def tau(self) -> float:
        return self.c.tau

    @property
    def reject_c(self) -> bool:
        return self.c.reject

    @property
    def reject_alpha(self) -> bool:
        return self.alpha.reject

    @property
    def reject_overall(self) -> bool:
        return self.c.reject or self.alpha.reject

    def interval(self, which: str = "C", level: float = 0.95) -> tuple:
        """Subsampling interval for ``which`` at confidence ``level`` from the stored law."""
        if which not in self.distributions:
            raise ConfigError(f"no subsampling distribution stored for {which!r}")
        res = self.c if which == "C" else self.alpha
        q = self.distributions[which].quantile(level)
        return decide(res.estimate, q, res.tau, self.scale).ci

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "beta": self.beta,
            "overall_level": 2 * self.beta,
            "hypotheses": {"C2-C1": self.c.to_dict(), "alpha2-alpha1": self.alpha.to_dict()},
            "reject_overall": self.reject_overall,
            "scheme": None if self.scheme is None else self.scheme.to_dict(),
            "theta_hat": None if self.theta_hat is None else self.theta_hat.to_dict(),
            "n_blocks": self.n_blocks,
            "n_dropped": self.n_dropped,
            "scale": self.scale,
            **self.extra,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> TestReport:
        def hyp(h):
            return HypothesisResult(
                h["estimate"], h["tau"], h["statistic"], h["rejection_bound"],
                tuple(h["ci"]), h["reject"],
            )

        sch = obj.get("scheme")
        th = obj.get("theta_hat")
        return cls(
            regime=obj["regime"],
            beta=obj["beta"],
            c=hyp(obj["hypotheses"]["C2-C1"]),
            alpha=hyp(obj["hypotheses"]["alpha2-alpha1"]),
            scheme=None if sch is None else BlockScheme(tuple(sch["b"]), tuple(sch["e"]), tuple(sch["q"])),
            theta_hat=None if th is None else DepParams.from_dict(th),
            n_blocks=obj.get("n_blocks", 0),
            n_dropped=obj.get("n_dropped", 0),
            scale=obj.get("scale", 1.0),
        )


def isotropy_test(
    cube: ObsCube,
    max_lags,
    b=None,
    e=None,
    regime: str = "fixed_domain",
    beta: float = 0.025,
    opts: FitOptions | None = None,
    threads: int = 1,
) -> TestReport:
    """Test ``C_1 = C_2`` and ``alpha_1 = alpha_2``, each at level ``beta``.

    ``max_lags`` are the per-axis maximal lags of the separated fit used
    on the full window and on every block.  ``H0`` is rejected at level
    ``2 beta`` when either sub-hypothesis is.
    """
    if cube.d != 2:
        raise ConfigError(f"the isotropy test is defined for d = 2, cube has d = {cube.d}")
    if not 0.0 < beta < 0.5:
        raise ConfigError(f"beta must lie in (0, 0.5), got {beta}")
    if regime not in REGIMES:
        raise ConfigError(f"unknown regime {regime!r}; expected one of {REGIMES}")
    b = tuple(b) if b is not None else default_blocks(cube.m, cube.d, cube.t_len)
    e = tuple(e) if e is not None else (1,) * (cube.d + 1)
    scheme, slices = make_blocks(cube.m, cube.t_len, b, e, cube.d)
    full = separated_fit(cube, max_lags, opts=opts)
    kept, dropped = block_fits(cube, max_lags, slices, full, opts, threads)
    tau = tau_full(cube.m, cube.d, cube.t_len, regime)
    scale = cube.m ** (cube.d / 2) if regime == "fixed_domain" else 1.0
    hyps, dists = {}, {}
    for name, est in ESTIMATORS.items():
        dist = dists[name] = _distribution(kept, dropped, full.theta_hat, est, scheme)
        hyps[name] = decide(est(full.theta_hat), dist.quantile(1.0 - beta), tau, scale)
    return TestReport(
        regime=regime,
        beta=beta,
        c=hyps["C"],
        alpha=hyps["alpha"],
        scheme=scheme,
        theta_hat=full.theta_hat,
        n_blocks=scheme.n_blocks,
        n_dropped=dropped,
        scale=scale,
        distributions=dists,
    )


def asymptotic_ci(report: TestReport, which: str = "C") -> tuple:
    """Interval ``estimate +- bound / tau`` for ``C2 - C1`` or ``alpha2 - alpha1``."""
    if which not in ("C", "alpha"):
        raise ConfigError(f"which must be 'C' or 'alpha', got {which!r}")
    return (report.c if which == "C" else report.alpha).ci
