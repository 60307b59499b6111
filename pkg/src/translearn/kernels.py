"""Kernel functions and PSD kernel-matrix construction.

All kernels are stateless callables over coordinate (or embedding) vectors.
Supported variants: Gaussian, Laplace (l1 metric), Matern with
nu in {1/2, 3/2, 5/2}, Linear, and Embedding (phi(x)' Sigma phi(x')).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Kernel", "kernel_value", "kernel_matrix", "kernel_from_config"]

_MATERN_NUS = (0.5, 1.5, 2.5)


@dataclass(frozen=True)
class Kernel:
    """Tagged kernel description.

    ``kind`` is one of ``gaussian``, ``laplace``, ``matern``, ``linear``,
    ``embedding``.  ``lengthscale`` applies to the stationary variants,
    ``nu`` to Matern only, and ``sigma_weight`` (a PSD weight matrix over
    embedding coordinates) to the embedding kernel; ``sigma_weight=None``
    means the identity weight.
    """

    kind: str
    lengthscale: float = 1.0
    nu: float = 1.5
    output_scale: float = 1.0
    sigma_weight: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("gaussian", "laplace", "matern", "linear", "embedding"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind in ("gaussian", "laplace", "matern") and not self.lengthscale > 0:
            raise ValueError("lengthscale must be positive")
        if self.kind == "matern" and self.nu not in _MATERN_NUS:
            raise ValueError(f"matern nu must be one of {_MATERN_NUS}, got {self.nu}")
        if not self.output_scale > 0:
            raise ValueError("output_scale must be positive")


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input coordinates")
    return x


def _stationary(kernel: Kernel, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    h = kernel.lengthscale
    if kernel.kind == "laplace":
        # l1 metric, matching exp(-||x - x'||_1 / h)
        d1 = np.abs(X[:, None, :] - Y[None, :, :]).sum(axis=2)
        return np.exp(-d1 / h)
    # Euclidean metric for gaussian / matern.  The difference form is exact
    # at zero distance (eval(x, x) must equal the output scale); fall back
    # to the inner-product identity only for high-dimensional points.
    if X.shape[1] <= 8:
        diff = X[:, None, :] - Y[None, :, :]
        sq = (diff * diff).sum(axis=2)
    else:
        sq = (
            (X * X).sum(axis=1)[:, None]
            + (Y * Y).sum(axis=1)[None, :]
            - 2.0 * X @ Y.T
        )
        sq = np.maximum(sq, 0.0)
    if kernel.kind == "gaussian":
        return np.exp(-sq / (2.0 * h * h))
    r = np.sqrt(sq) / h
    if kernel.nu == 0.5:
        return np.exp(-r)
    if kernel.nu == 1.5:
        s = np.sqrt(3.0) * r
        return (1.0 + s) * np.exp(-s)
    s = np.sqrt(5.0) * r
    return (1.0 + s + s * s / 3.0) * np.exp(-s)


def kernel_matrix(kernel: Kernel, X, Y=None) -> np.ndarray:
    """Kernel matrix K[i, j] = k(X[i], Y[j]).

    When ``Y`` is omitted the result is the self-kernel matrix over ``X``,
    symmetrized as (K + K') / 2 to remove floating-point asymmetry before
    any downstream Cholesky factorization.
    """
    X = _as_points(X)
    self_kernel = Y is None
    Y = X if self_kernel else _as_points(Y)
    if X.shape[0] == 0 or Y.shape[0] == 0:
        raise ValueError("point lists must be nonempty")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(
            f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}"
        )

    if kernel.kind in ("gaussian", "laplace", "matern"):
        K = _stationary(kernel, X, Y)
    elif kernel.kind == "linear":
        K = X @ Y.T
    else:  # embedding
        if kernel.sigma_weight is None:
            K = X @ Y.T
        else:
            W = np.asarray(kernel.sigma_weight, dtype=float)
            if W.shape != (X.shape[1], X.shape[1]):
                raise ValueError(
                    f"sigma_weight shape {W.shape} incompatible with embedding dim {X.shape[1]}"
                )
            K = X @ W @ Y.T

    K = kernel.output_scale * K
    if self_kernel:
        K = 0.5 * (K + K.T)
    return K


def kernel_value(kernel: Kernel, x, y) -> float:
    """Evaluate k(x, x') for a single pair of points."""
    return float(kernel_matrix(kernel, _as_points(x), _as_points(y))[0, 0])


def kernel_from_config(spec: dict) -> Kernel:
    """Build a kernel from a tagged record, e.g. {type: "gaussian", lengthscale: 1.0}."""
    spec = dict(spec)
    try:
        kind = spec.pop("type")
    except KeyError:
        raise ValueError("kernel config requires a 'type' key") from None
    allowed = {"lengthscale", "nu", "output_scale", "sigma_weight"}
    unknown = set(spec) - allowed
    if unknown:
        raise ValueError(f"unknown kernel config keys: {sorted(unknown)}")
    if "sigma_weight" in spec and spec["sigma_weight"] is not None:
        spec["sigma_weight"] = np.asarray(spec["sigma_weight"], dtype=float)
    return Kernel(kind=kind, **spec)
