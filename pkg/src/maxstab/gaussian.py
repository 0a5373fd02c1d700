"""Covariance of the underlying Gaussian process and multivariate normal sampling.

``W`` has ``W(0, 0) = 0`` and covariance

    Cov[W(p), W(q)] = delta(p) + delta(q) - delta(p - q),

so that ``Var[W(p) - W(q)] = 2 delta(p - q)``.  Random streams are
counter-based (Philox) and split through :class:`numpy.random.SeedSequence`,
which keeps every Monte Carlo run reproducible from a single integer seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._errors import DecompositionError, DomainError
from .dependence import DepParams, delta

JITTER_LEVELS = (0.0, 1e-12, 1e-10, 1e-8)


def make_rng(seed=None) -> np.random.Generator:
    """Philox generator from an int, a SeedSequence or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def spawn(seed, n: int) -> list[np.random.Generator]:
    """``n`` independent child streams of ``seed``."""
    if isinstance(seed, np.random.Generator):
        seqs = seed.bit_generator.seed_seq.spawn(n)
    elif isinstance(seed, np.random.SeedSequence):
        seqs = seed.spawn(n)
    else:
        seqs = np.random.SeedSequence(seed).spawn(n)
    return [make_rng(s) for s in seqs]


@dataclass(frozen=True)
class PointSet:
    """Ordered, distinct space-time points; ``coords[:, :-1]`` is space, ``coords[:, -1]`` time."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.array(self.coords, dtype=float)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 2:
            raise DomainError("a point set needs shape (n, d+1) with n >= 1 and d >= 1")
        if np.unique(c, axis=0).shape[0] != c.shape[0]:
            raise DomainError("points of a PointSet must be distinct")
        c.flags.writeable = False
        object.__setattr__(self, "coords", c)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[1] - 1

    @classmethod
    def grid(cls, m: int, d: int, t_len: int, origin: int = 0) -> PointSet:
        """All points of ``{origin..origin+m-1}^d x {origin..origin+t_len-1}``, time fastest."""
        axes = [np.arange(m)] * d + [np.arange(t_len)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return cls(np.stack([x.ravel() for x in mesh], axis=1) + origin)


@dataclass(frozen=True, eq=False)
class CovMatrix:
    """Symmetric covariance with a lazily computed, jittered Cholesky factor."""

    entries: np.ndarray
    _chol: list = field(default_factory=list, repr=False)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def jitter(self) -> float:
        _ = self.chol  # force factorisation
        return self._chol[1]

    @property
    def chol(self) -> np.ndarray:
        if not self._chol:
            self._chol.extend(cholesky_jitter(self.entries))
        return self._chol[0]


def cholesky_jitter(a: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor with escalating diagonal jitter.

    Jitter levels are relative to the largest diagonal entry and stop at
    ``1e-8``; anything larger would visibly distort the variogram.
    Returns the factor and the absolute jitter used.
    """
    a = np.asarray(a, dtype=float)
    scale = float(np.max(np.diag(a))) if a.size else 0.0
    if scale <= 0.0:
        if np.any(a != 0):
            raise DecompositionError("covariance has non-positive diagonal but nonzero entries")
        return np.zeros_like(a), 0.0
    eye = np.eye(a.shape[0])
    for level in JITTER_LEVELS:
        try:
            return np.linalg.cholesky(a + level * scale * eye), level * scale
        except np.linalg.LinAlgError:
            continue
    raise DecompositionError(
        f"covariance of size {a.shape[0]} is not positive semidefinite after jitter "
        f"{JITTER_LEVELS[-1]:g} x max diagonal (duplicated points or invalid parameters?)"
    )


def build_cov(params: DepParams, pts: PointSet) -> CovMatrix:
    """Covariance of ``W`` on ``pts``; exactly symmetric by construction."""
    if pts.d != params.d:
        raise DomainError(f"point set has d={pts.d}, parameters have d={params.d}")
    x = pts.coords
    d0 = np.asarray(delta(params, x[:, :-1], x[:, -1]), dtype=float).reshape(-1)
    diff = x[:, None, :] - x[None, :, :]
    dd = np.asarray(delta(params, diff[..., :-1], diff[..., -1]), dtype=float).reshape(pts.n, pts.n)
    # dd is symmetric because delta is even; average anyway so entries match bit for bit
    dd = 0.5 * (dd + dd.T)
    return CovMatrix(d0[:, None] + d0[None, :] - dd)


def sample_mvn(cov: CovMatrix, rng, size: int | None = None) -> np.ndarray:
    """Draw ``L z`` with ``z`` i.i.d. standard normal.

    ``size=None`` returns one vector of length ``n``; otherwise an array of
    shape ``(size, n)``.
    """
    rng = make_rng(rng)
    chol = cov.chol
    if size is None:
        return chol @ rng.standard_normal(cov.n)
    return rng.standard_normal((size, cov.n)) @ chol.T
