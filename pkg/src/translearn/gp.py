"""Exact joint-Gaussian beliefs over a finite domain.

The belief is the full mean vector and covariance matrix over all domain
points, maintained in closed form under conditioning.  Entropies and
mutual information are computed from Cholesky factors of sub-covariances,
with an escalating jitter ladder as the numerical floor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.linalg.blas import dger

__all__ = [
    "FiniteDomain",
    "NoiseModel",
    "Observation",
    "GaussianBelief",
    "NumericsError",
    "prior_belief",
    "condition",
    "rank_one_condition",
    "entropy",
    "mutual_information",
    "chol_with_jitter",
    "logdet_psd",
]

# Relative jitter ladder: scaled by trace(K)/m before being added to the
# diagonal.  The first entry attempts an unjittered factorization.
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)

LOG_2PI_E = float(np.log(2.0 * np.pi * np.e))


class NumericsError(RuntimeError):
    """A matrix stayed numerically singular after jitter escalation."""


@dataclass(frozen=True)
class FiniteDomain:
    """Indexed set of points; indices 0..m-1 are the canonical identity."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points)
        if pts.dtype != np.float32:  # keep float32 embeddings as-is
            pts = pts.astype(float, copy=False)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("domain requires a nonempty (m, d) point array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("domain points must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class NoiseModel:
    """Per-index observation-noise variances rho^2(x), strictly positive."""

    variances: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.variances, dtype=float)
        if v.ndim != 1:
            raise ValueError("noise variances must be a 1d array")
        if not np.all(np.isfinite(v)) or not np.all(v > 0):
            raise ValueError("noise variances must be finite and strictly positive")
        object.__setattr__(self, "variances", v)

    @classmethod
    def homoscedastic(cls, size: int, variance: float) -> "NoiseModel":
        return cls(np.full(size, float(variance)))

    def at(self, indices) -> np.ndarray:
        return self.variances[np.asarray(indices, dtype=int)]


@dataclass(frozen=True)
class Observation:
    """A noisy observation y = f(x_index) + eps, eps ~ N(0, noise_var)."""

    index: int
    value: float
    noise_var: float

    def __post_init__(self):
        if not self.noise_var > 0:
            raise ValueError("noise_var must be positive")
        if not np.isfinite(self.value):
            raise ValueError("observation value must be finite")


@dataclass(frozen=True)
class GaussianBelief:
    """Immutable joint Gaussian over f at all domain points."""

    mean: np.ndarray
    cov: np.ndarray
    domain: FiniteDomain = field(repr=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        m = self.domain.size
        if mean.shape != (m,) or cov.shape != (m, m):
            raise ValueError("mean/cov shapes inconsistent with domain size")
        if not np.all(np.isfinite(mean)):
            raise ValueError("belief mean must be finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def size(self) -> int:
        return self.domain.size

    def variances(self, indices=None) -> np.ndarray:
        d = np.diagonal(self.cov)
        return d.copy() if indices is None else d[np.asarray(indices, dtype=int)]


def chol_with_jitter(K: np.ndarray, ladder: Sequence[float] = JITTER_LADDER) -> np.ndarray:
    """Lower Cholesky factor of K, escalating relative jitter on failure."""
    K = np.asarray(K, dtype=float)
    scale = float(np.trace(K)) / K.shape[0] if K.shape[0] else 1.0
    if scale <= 0:
        scale = 1.0
    for lam in ladder:
        try:
            if lam == 0.0:
                return np.linalg.cholesky(K)
            return np.linalg.cholesky(K + (lam * scale) * np.eye(K.shape[0]))
        except np.linalg.LinAlgError:
            continue
    eigs = np.linalg.eigvalsh(K)
    cond = abs(eigs[-1] / eigs[0]) if eigs[0] != 0 else np.inf
    raise NumericsError(
        f"matrix singular after jitter escalation (min eig {eigs[0]:.3e}, "
        f"condition estimate {cond:.3e})"
    )


def logdet_psd(K: np.ndarray) -> float:
    """log det of a PSD matrix via its (jittered) Cholesky factor."""
    L = chol_with_jitter(K)
    return 2.0 * float(np.sum(np.log(np.diagonal(L))))


def tri_solve(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve L X = B for lower-triangular L."""
    return solve_triangular(L, B, lower=True, check_finite=False)


def _rank_one_downdate(cov: np.ndarray, col: np.ndarray, denom: float) -> np.ndarray:
    """cov - outer(col, col) / denom via an in-place BLAS update on a copy."""
    out = cov.copy()
    res = dger(-1.0 / denom, col, col, a=out.T, overwrite_a=1)
    return res.T


def sample_factor(cov: np.ndarray) -> np.ndarray:
    """A factor L with L L' ~= cov, for drawing joint Gaussian samples.

    Falls back to a clipped eigendecomposition when the jittered Cholesky
    fails (smooth-kernel covariances on fine grids are rank deficient).
    """
    try:
        return chol_with_jitter(cov)
    except NumericsError:
        w, V = np.linalg.eigh(cov)
        return V * np.sqrt(np.maximum(w, 0.0))[None, :]


def prior_belief(
    domain: FiniteDomain,
    kernel,
    mean_fn: Callable[[np.ndarray], float] | None = None,
) -> GaussianBelief:
    """Prior belief with cov = kernel matrix over the domain (symmetrized)."""
    from .kernels import kernel_matrix

    cov = kernel_matrix(kernel, domain.points)
    if mean_fn is None:
        mean = np.zeros(domain.size)
    else:
        mean = np.array([float(mean_fn(p)) for p in domain.points])
    return GaussianBelief(mean=mean, cov=cov, domain=domain)


def _validate_indices(belief: GaussianBelief, indices) -> np.ndarray:
    ix = np.asarray(indices, dtype=int)
    if ix.ndim != 1:
        ix = ix.reshape(-1)
    if ix.size and (ix.min() < 0 or ix.max() >= belief.size):
        raise IndexError(f"index out of range for domain of size {belief.size}")
    return ix


def condition(belief: GaussianBelief, observations: Sequence[Observation]) -> GaussianBelief:
    """Posterior belief after a batch of noisy observations.

    Repeated indices are treated as independent observations of the same
    point (multiset semantics).  Uses the closed-form joint-Gaussian update
    with noise matrix P = diag(noise_var).
    """
    if len(observations) == 0:
        return belief
    ix = _validate_indices(belief, [o.index for o in observations])
    y = np.array([o.value for o in observations])
    p = np.array([o.noise_var for o in observations])

    if len(observations) == 1:
        # Rank-one fast path, skipping the symmetrization pass.  The row is
        # the column (symmetric matrix) but contiguous in memory.
        j = int(ix[0])
        denom = belief.cov[j, j] + p[0]
        col = belief.cov[j, :].copy()
        mean = belief.mean + col * ((y[0] - belief.mean[j]) / denom)
        cov = _rank_one_downdate(belief.cov, col, denom)
        np.fill_diagonal(cov, np.maximum(np.diagonal(cov), 0.0))
        return GaussianBelief(mean=mean, cov=cov, domain=belief.domain)

    K_x = belief.cov[np.ix_(ix, ix)] + np.diag(p)
    L = chol_with_jitter(K_x)
    cross = belief.cov[:, ix]  # (m, n)
    resid = y - belief.mean[ix]
    alpha = solve_triangular(L.T, tri_solve(L, resid), lower=False, check_finite=False)
    mean = belief.mean + cross @ alpha
    V = tri_solve(L, cross.T)  # (n, m)
    cov = belief.cov - V.T @ V
    cov = 0.5 * (cov + cov.T)
    np.fill_diagonal(cov, np.maximum(np.diagonal(cov), 0.0))
    return GaussianBelief(mean=mean, cov=cov, domain=belief.domain)


def rank_one_condition(belief: GaussianBelief, index: int, noise_var: float) -> GaussianBelief:
    """Covariance-only conditioning on a single observation location.

    The mean is left unchanged: the Gaussian posterior covariance depends
    only on where observations are made, not on their values, so decision
    rules that need only variances can hallucinate observations this way.
    """
    ix = int(index)
    if ix < 0 or ix >= belief.size:
        raise IndexError(f"index {ix} out of range for domain of size {belief.size}")
    denom = belief.cov[ix, ix] + noise_var
    if not denom > 0:
        raise ValueError("Var(index) + noise_var must be positive")
    col = belief.cov[ix, :].copy()
    cov = _rank_one_downdate(belief.cov, col, denom)
    np.fill_diagonal(cov, np.maximum(np.diagonal(cov), 0.0))
    return GaussianBelief(mean=belief.mean, cov=cov, domain=belief.domain)


def entropy(belief: GaussianBelief, A) -> float:
    """Differential entropy of f_A: |A|/2 log(2 pi e) + 1/2 log det cov[A, A]."""
    ix = _validate_indices(belief, A)
    if ix.size == 0:
        raise ValueError("entropy requires a nonempty index set")
    sub = belief.cov[np.ix_(ix, ix)]
    return 0.5 * ix.size * LOG_2PI_E + 0.5 * logdet_psd(sub)


def mutual_information(belief: GaussianBelief, A, X, noise: NoiseModel) -> float:
    """Information gain I(f_A; y_X) under the belief.

    Computed as 1/2 (logdet(K_XX + P) - logdet(K_XX - K_XA K_AA^-1 K_AX + P)).
    X may be a multiset (repeated observations).
    """
    a = _validate_indices(belief, A)
    x = _validate_indices(belief, X)
    if a.size == 0 or x.size == 0:
        raise ValueError("mutual information requires nonempty index sets")
    P = np.diag(noise.at(x))
    K_xx = belief.cov[np.ix_(x, x)]
    K_aa = belief.cov[np.ix_(a, a)]
    K_ax = belief.cov[np.ix_(a, x)]
    L_a = chol_with_jitter(K_aa)
    W = tri_solve(L_a, K_ax)  # (a, x)
    cond_xx = K_xx - W.T @ W
    val = 0.5 * (logdet_psd(K_xx + P) - logdet_psd(cond_xx + P))
    return max(val, 0.0)
