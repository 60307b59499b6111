"""Built-in synthetic safe-optimization tasks.

Both tasks use the function value itself (1d) or a separate constraint
surface (2d) as the safety signal; everything is evaluated on the config's
grid so the ground truth, the oracle Lipschitz constants, and the safe
seed are all derived from the same closed-form expressions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .gp import FiniteDomain
from .safebo import GroundTruth

__all__ = ["SafeTask", "build_safe_task", "TASK_NAMES"]

TASK_NAMES = ("ridge-1d", "island-2d")


@dataclass(frozen=True)
class SafeTask:
    name: str
    truth: GroundTruth
    seed_index: int
    objective_mean: Callable[[np.ndarray], float]
    constraint_means: tuple
    oracle_lipschitz: np.ndarray

    @property
    def regret_region(self) -> np.ndarray:
        return np.flatnonzero(self.truth.safe_mask)


def _grid_lipschitz(domain: FiniteDomain, values: np.ndarray) -> float:
    """Max finite-difference slope between near neighbors (the oracle constant)."""
    pts = domain.points
    k = min(3, pts.shape[0] - 1)
    tree = cKDTree(pts)
    dist, idx = tree.query(pts, k=k + 1)
    slopes = np.abs(values[idx[:, 1:]] - values[:, None]) / np.maximum(dist[:, 1:], 1e-12)
    return float(slopes.max())


def _ridge_values(x: np.ndarray) -> np.ndarray:
    """Safe corridor with a modest bump at the seed and the optimum at the
    far end; the edges of the domain are unsafe.  Discovering the optimum
    requires expanding the safe set across the whole corridor."""
    main = 0.78 * np.exp(-((x - 0.55) ** 2) / (2 * 0.12**2))
    seed_bump = 0.43 * np.exp(-((x + 0.6) ** 2) / (2 * 0.10**2))
    edges = 2.2 * np.exp(-((x - 1.15) ** 2) / (2 * 0.12**2)) + 2.2 * np.exp(
        -((x + 1.15) ** 2) / (2 * 0.12**2)
    )
    return 0.22 + main + seed_bump - edges


def _island_constraint(pts: np.ndarray) -> np.ndarray:
    # Safe interior: disk of radius 0.75 around the origin.
    return 0.5625 - (pts**2).sum(axis=1)


def _island_objective(pts: np.ndarray) -> np.ndarray:
    target = np.array([0.45, 0.45])
    return np.exp(-((pts - target) ** 2).sum(axis=1) / (2 * 0.25**2))


def build_safe_task(name: str, domain: FiniteDomain) -> SafeTask:
    if name == "ridge-1d":
        if domain.dim != 1:
            raise ValueError("ridge-1d requires a 1d domain")
        x = domain.points[:, 0]
        values = _ridge_values(x)
        truth = GroundTruth(objective=values, constraints=values[None, :])
        seed_index = int(np.argmin(np.abs(x + 0.6)))
        if values[seed_index] <= 0:
            raise ValueError("ridge-1d seed is not truly safe on this grid")
        lip = _grid_lipschitz(domain, values)
        return SafeTask(
            name=name,
            truth=truth,
            seed_index=seed_index,
            objective_mean=lambda p: 0.0,
            constraint_means=(lambda p: 0.0,),
            oracle_lipschitz=np.array([lip]),
        )
    if name == "island-2d":
        if domain.dim != 2:
            raise ValueError("island-2d requires a 2d domain")
        g = _island_constraint(domain.points)
        f = _island_objective(domain.points)
        truth = GroundTruth(objective=f, constraints=g[None, :])
        seed_index = int(np.argmin((domain.points**2).sum(axis=1)))
        if g[seed_index] <= 0:
            raise ValueError("island-2d seed is not truly safe on this grid")
        lip = _grid_lipschitz(domain, g)
        return SafeTask(
            name=name,
            truth=truth,
            seed_index=seed_index,
            objective_mean=lambda p: 0.0,
            constraint_means=(lambda p: -0.5,),
            oracle_lipschitz=np.array([lip]),
        )
    raise ValueError(f"unknown task {name!r}; expected one of {TASK_NAMES}")
