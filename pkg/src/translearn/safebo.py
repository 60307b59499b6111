"""Safe Bayesian optimization on a finite domain.

One statistical model per function (the objective and each constraint),
intersected confidence intervals, pessimistic/optimistic safe sets, and
the potential-maximizer / potential-expander target spaces.  The kernel
methods restrict sampling to the pessimistic safe set; the SafeOpt-family
baselines expand a Lipschitz-based safe set and uncertainty-sample within
their maximizers and expanders.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .acquisition import DecisionRule, scores_for_rule
from .gp import (
    FiniteDomain,
    GaussianBelief,
    NoiseModel,
    Observation,
    condition,
    sample_factor,
)

__all__ = [
    "GroundTruth",
    "ConfidenceState",
    "SafeBoState",
    "update_confidence",
    "compute_sets",
    "thompson_targets",
    "safebo_step",
    "safeopt_step",
    "simple_regret",
    "estimate_lipschitz",
]

TARGET_MODES = ("maximizers", "expanders", "thompson")
SAFEOPT_VARIANTS = ("oracle", "estimated", "heuristic")


@dataclass(frozen=True)
class GroundTruth:
    """True objective and constraint values, used for feedback and telemetry."""

    objective: np.ndarray
    constraints: np.ndarray  # (q, m)

    def __post_init__(self):
        f = np.asarray(self.objective, dtype=float)
        g = np.atleast_2d(np.asarray(self.constraints, dtype=float))
        if g.shape[1] != f.shape[0]:
            raise ValueError("constraints must share the objective's domain size")
        object.__setattr__(self, "objective", f)
        object.__setattr__(self, "constraints", g)

    @property
    def safe_mask(self) -> np.ndarray:
        return np.all(self.constraints >= 0.0, axis=0)

    @property
    def safe_optimum(self) -> float:
        mask = self.safe_mask
        if not mask.any():
            raise ValueError("ground truth has an empty safe set")
        return float(self.objective[mask].max())


@dataclass(frozen=True)
class ConfidenceState:
    """Intersected confidence bounds; row 0 is the objective, rows 1.. the constraints."""

    lower: np.ndarray
    upper: np.ndarray
    beta: float

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @classmethod
    def unbounded(cls, n_functions: int, m: int, beta: float) -> "ConfidenceState":
        return cls(
            lower=np.full((n_functions, m), -np.inf),
            upper=np.full((n_functions, m), np.inf),
            beta=beta,
        )


def update_confidence(
    state: ConfidenceState, beliefs: list[GaussianBelief], beta: float | None = None
) -> ConfidenceState:
    """Intersect the running bounds with mu_n +- beta sigma_n per function."""
    beta = state.beta if beta is None else float(beta)
    lower = state.lower.copy()
    upper = state.upper.copy()
    for i, belief in enumerate(beliefs):
        sd = np.sqrt(np.maximum(belief.variances(), 0.0))
        lower[i] = np.maximum(lower[i], belief.mean - beta * sd)
        upper[i] = np.minimum(upper[i], belief.mean + beta * sd)
    return ConfidenceState(lower=lower, upper=upper, beta=beta)


@dataclass
class SafeBoState:
    """Mutable per-trajectory state (single owner; one instance per seed)."""

    domain: FiniteDomain
    beliefs: list[GaussianBelief]  # [objective, constraint_1, ...]
    noises: list[NoiseModel]
    truth: GroundTruth
    conf: ConfidenceState
    rng: np.random.Generator
    round: int = 0
    sampled: list[int] = field(default_factory=list)
    telemetry: list[dict] = field(default_factory=list)
    safeopt_safe: np.ndarray | None = None  # Lipschitz-based safe set, lazily seeded
    _pairwise: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.domain.size

    @property
    def n_constraints(self) -> int:
        return len(self.beliefs) - 1

    def pairwise_distances(self) -> np.ndarray:
        if self._pairwise is None:
            pts = self.domain.points
            sq = (
                (pts * pts).sum(axis=1)[:, None]
                + (pts * pts).sum(axis=1)[None, :]
                - 2.0 * pts @ pts.T
            )
            self._pairwise = np.sqrt(np.maximum(sq, 0.0))
        return self._pairwise

    @classmethod
    def create(
        cls,
        beliefs: list[GaussianBelief],
        noises: list[NoiseModel],
        truth: GroundTruth,
        beta: float,
        rng: np.random.Generator,
        seed_index: int,
        seed_observations: int = 1,
    ) -> "SafeBoState":
        """Bootstrap a trajectory from repeated observations of one safe seed."""
        domain = beliefs[0].domain
        state = cls(
            domain=domain,
            beliefs=list(beliefs),
            noises=list(noises),
            truth=truth,
            conf=ConfidenceState.unbounded(len(beliefs), domain.size, beta),
            rng=rng,
        )
        for _ in range(seed_observations):
            _observe(state, int(seed_index))
        state.conf = update_confidence(state.conf, state.beliefs)
        return state


def compute_sets(state: SafeBoState):
    """Pessimistic / optimistic safe sets, potential maximizers and expanders.

    With an empty pessimistic set the maximizer threshold is -inf, i.e. all
    optimistically safe points remain potential maximizers.
    """
    l_g = state.conf.lower[1:]
    u_g = state.conf.upper[1:]
    safe = np.all(l_g >= 0.0, axis=0)
    opt = np.all(u_g >= 0.0, axis=0)
    threshold = state.conf.lower[0][safe].max() if safe.any() else -np.inf
    maximizers = opt & (state.conf.upper[0] >= threshold)
    expanders = opt & ~safe
    return safe, opt, maximizers, expanders


def thompson_targets(state: SafeBoState, K: int) -> list[int]:
    """Stochastic target multiset: safe argmax of K joint posterior samples.

    Each draw samples every function jointly over the grid; its sampled-safe
    set is intersected with the optimistic safe set, and an empty draw
    contributes nothing.  An empty result signals the caller to fall back
    to the potential maximizers.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    _, opt, _, _ = compute_sets(state)
    factors = [sample_factor(b.cov) for b in state.beliefs]
    targets: list[int] = []
    m = state.size
    for _ in range(K):
        draws = [
            b.mean + L @ state.rng.standard_normal(m)
            for b, L in zip(state.beliefs, factors)
        ]
        sampled_safe = np.all(np.asarray(draws[1:]) >= 0.0, axis=0) & opt
        if not sampled_safe.any():
            continue
        f_draw = np.where(sampled_safe, draws[0], -np.inf)
        targets.append(int(np.argmax(f_draw)))
    return targets


def _observe(state: SafeBoState, index: int) -> tuple[float, list[float]]:
    """Query the ground truth at index and condition every belief."""
    values = [float(state.truth.objective[index])] + [
        float(g[index]) for g in state.truth.constraints
    ]
    observed = []
    for i, (belief, noise) in enumerate(zip(state.beliefs, state.noises)):
        rho2 = float(noise.at([index])[0])
        y = values[i] + state.rng.normal(0.0, np.sqrt(rho2))
        state.beliefs[i] = condition(belief, [Observation(index, y, rho2)])
        observed.append(y)
    state.sampled.append(int(index))
    return observed[0], observed[1:]


def simple_regret(state: SafeBoState, truth: GroundTruth, region, safe_mask=None) -> float:
    """Regret of the reported point (best pessimistic lower bound in S_n)."""
    if safe_mask is None:
        safe_mask, _, _, _ = compute_sets(state)
    if not safe_mask.any():
        raise ValueError("simple regret undefined: pessimistic safe set is empty")
    region = np.asarray(region, dtype=int).reshape(-1)
    l_f = np.where(safe_mask, state.conf.lower[0], -np.inf)
    reported = int(np.argmax(l_f))
    return float(truth.objective[region].max() - truth.objective[reported])


def _record(state: SafeBoState, chosen: int, y_f: float, y_g: list[float],
            safe_mask: np.ndarray, opt_mask: np.ndarray, maxi_mask: np.ndarray,
            regret_region) -> None:
    violation = bool(np.any(state.truth.constraints[:, chosen] < 0.0))
    row = {
        "round": state.round,
        "chosen": int(chosen),
        "y_f": y_f,
        "y_g": list(y_g),
        "safe_size": int(safe_mask.sum()),
        "optimistic_size": int(opt_mask.sum()),
        "maximizer_size": int(maxi_mask.sum()),
        "regret": simple_regret(state, state.truth, regret_region, safe_mask=safe_mask),
        "violation": violation,
    }
    state.telemetry.append(row)


def safebo_step(
    state: SafeBoState,
    rule: DecisionRule,
    target_mode: str = "maximizers",
    thompson_k: int = 5,
    target_subsample: int = 0,
    regret_region=None,
) -> int:
    """One round of kernel-based safe exploration.

    Builds the target space per ``target_mode``, scores candidates in the
    pessimistic safe set with the rule summed across all function models,
    observes the truth at the winner, and refreshes bounds and telemetry.
    ``target_subsample`` > 0 draws that many targets uniformly per round
    (the Monte Carlo shortcut for large target spaces).
    """
    if target_mode not in TARGET_MODES:
        raise ValueError(f"unknown target mode {target_mode!r}")
    safe, opt, maximizers, expanders = compute_sets(state)
    if not safe.any():
        raise RuntimeError("no safe seed: pessimistic safe set is empty")

    if target_mode == "thompson":
        targets = thompson_targets(state, thompson_k)
        if not targets:
            targets = list(np.flatnonzero(maximizers))
    elif target_mode == "expanders":
        targets = list(np.flatnonzero(expanders)) or list(np.flatnonzero(maximizers))
    else:
        targets = list(np.flatnonzero(maximizers))
    if not targets:
        targets = list(np.flatnonzero(safe))
    targets = np.asarray(targets, dtype=int)
    if target_subsample and targets.size > target_subsample:
        targets = np.sort(state.rng.choice(targets, size=target_subsample, replace=False))

    candidates = np.flatnonzero(safe)
    if rule.name == "random":
        chosen = int(candidates[state.rng.integers(candidates.size)])
    else:
        total = np.zeros(candidates.size)
        for belief, noise in zip(state.beliefs, state.noises):
            total += scores_for_rule(rule, belief, candidates, targets, noise)
        chosen = int(candidates[total >= total.max()].min())

    y_f, y_g = _observe(state, chosen)
    state.conf = update_confidence(state.conf, state.beliefs)
    state.round += 1
    safe, opt, maximizers, _ = compute_sets(state)
    region = regret_region if regret_region is not None else np.flatnonzero(state.truth.safe_mask)
    _record(state, chosen, y_f, y_g, safe, opt, maximizers, region)
    return chosen


def estimate_lipschitz(domain: FiniteDomain, mean: np.ndarray, safety_factor: float = 1.5) -> float:
    """Slope estimate from posterior-mean finite differences between near neighbors."""
    pts = domain.points
    k = min(3, pts.shape[0] - 1)
    if k < 1:
        return 1.0
    tree = cKDTree(pts)
    dist, idx = tree.query(pts, k=k + 1)
    slopes = np.abs(mean[idx[:, 1:]] - mean[:, None]) / np.maximum(dist[:, 1:], 1e-12)
    return float(safety_factor * slopes.max())


def _lipschitz_safe_update(state: SafeBoState, lipschitz: np.ndarray) -> np.ndarray:
    """One application of the reachability expansion of the SafeOpt safe set."""
    D = state.pairwise_distances()
    prev = state.safeopt_safe
    source = np.flatnonzero(prev)
    if source.size == 0:
        return prev
    new_safe = np.ones(state.size, dtype=bool)
    for i in range(state.n_constraints):
        reach = state.conf.lower[i + 1][source][:, None] - lipschitz[i] * D[source, :]
        new_safe &= reach.max(axis=0) >= 0.0
    return prev | new_safe


def _heuristic_expanders(state: SafeBoState, safe: np.ndarray) -> np.ndarray:
    """Safe points whose optimistic observation would grow the safe set."""
    expanders = np.zeros(state.size, dtype=bool)
    unsafe = ~safe
    if not unsafe.any():
        return expanders
    for x in np.flatnonzero(safe):
        grows = np.ones(state.size, dtype=bool)
        for i in range(state.n_constraints):
            belief = state.beliefs[i + 1]
            noise = float(state.noises[i + 1].at([x])[0])
            denom = belief.cov[x, x] + noise
            col = belief.cov[x, :]
            mu = belief.mean + col * ((state.conf.upper[i + 1][x] - belief.mean[x]) / denom)
            var = np.maximum(belief.variances() - col * col / denom, 0.0)
            low = np.maximum(state.conf.lower[i + 1], mu - state.conf.beta * np.sqrt(var))
            grows &= low >= 0.0
        if bool((grows & unsafe).any()):
            expanders[x] = True
    return expanders


def safeopt_expanders(state: SafeBoState, safe: np.ndarray, lipschitz: np.ndarray) -> np.ndarray:
    """Safe points from which some unsafe point is optimistically reachable
    under the Lipschitz bound, for every constraint."""
    expanders = np.zeros(state.size, dtype=bool)
    unsafe_ix = np.flatnonzero(~safe)
    safe_ix = np.flatnonzero(safe)
    if unsafe_ix.size and safe_ix.size:
        D = state.pairwise_distances()[np.ix_(safe_ix, unsafe_ix)]
        ok = np.ones((safe_ix.size, unsafe_ix.size), dtype=bool)
        for i in range(state.n_constraints):
            ok &= (state.conf.upper[i + 1][safe_ix][:, None] - lipschitz[i] * D) >= 0.0
        expanders[safe_ix[ok.any(axis=1)]] = True
    return expanders


def safeopt_expanding_points(state: SafeBoState, safe: np.ndarray, lipschitz: np.ndarray) -> np.ndarray:
    """Unsafe points optimistically reachable from some safe point."""
    reachable = np.zeros(state.size, dtype=bool)
    unsafe_ix = np.flatnonzero(~safe)
    safe_ix = np.flatnonzero(safe)
    if unsafe_ix.size and safe_ix.size:
        D = state.pairwise_distances()[np.ix_(safe_ix, unsafe_ix)]
        ok = np.ones((safe_ix.size, unsafe_ix.size), dtype=bool)
        for i in range(state.n_constraints):
            ok &= (state.conf.upper[i + 1][safe_ix][:, None] - lipschitz[i] * D) >= 0.0
        reachable[unsafe_ix[ok.any(axis=0)]] = True
    return reachable


def safeopt_step(
    state: SafeBoState,
    lipschitz=None,
    variant: str = "oracle",
    regret_region=None,
) -> int:
    """One round of the SafeOpt-family baselines.

    oracle/estimated expand a Lipschitz reachability safe set (the constant
    either given or estimated from posterior-mean slopes); heuristic reuses
    the kernel pessimistic safe set and tests one-step growth under a
    hallucinated optimistic observation.  Selection is uncertainty sampling
    (largest interval width across models) within maximizers u expanders,
    falling back to the full safe set when that union is empty.
    """
    if variant not in SAFEOPT_VARIANTS:
        raise ValueError(f"unknown safeopt variant {variant!r}")

    if variant == "heuristic":
        safe, _, _, _ = compute_sets(state)
        expanders = _heuristic_expanders(state, safe)
        L = None
    else:
        if variant == "oracle":
            if lipschitz is None:
                raise ValueError("oracle variant requires Lipschitz constants")
            L = np.broadcast_to(
                np.asarray(lipschitz, dtype=float), (state.n_constraints,)
            ).astype(float)
        else:
            L = np.array([
                estimate_lipschitz(state.domain, state.beliefs[i + 1].mean)
                for i in range(state.n_constraints)
            ])
        if not np.all(L > 0):
            raise ValueError("Lipschitz constants must be positive")
        if state.safeopt_safe is None:
            kernel_safe, _, _, _ = compute_sets(state)
            state.safeopt_safe = kernel_safe.copy()
        # Exactly one application of the reachability operator per round.
        state.safeopt_safe = _lipschitz_safe_update(state, L)
        safe = state.safeopt_safe
        expanders = safeopt_expanders(state, safe, L)

    if not safe.any():
        raise RuntimeError("no safe seed: safe set is empty")
    threshold = state.conf.lower[0][safe].max()
    maximizers = safe & (state.conf.upper[0] >= threshold)
    pool = maximizers | expanders
    if not pool.any():
        pool = safe  # the selection sets can die out; fall back to plain US within safe
    widths = state.conf.widths.max(axis=0)
    scores = np.where(pool, widths, -np.inf)
    best = scores.max()
    chosen = int(np.flatnonzero(pool & (scores >= best)).min())

    y_f, y_g = _observe(state, chosen)
    state.conf = update_confidence(state.conf, state.beliefs)
    state.round += 1
    _, opt2, _, _ = compute_sets(state)
    if variant == "heuristic":
        report_safe, _, _, _ = compute_sets(state)
    else:
        report_safe = state.safeopt_safe
    threshold2 = state.conf.lower[0][report_safe].max() if report_safe.any() else -np.inf
    maxi2 = report_safe & (state.conf.upper[0] >= threshold2)
    region = regret_region if regret_region is not None else np.flatnonzero(state.truth.safe_mask)
    _record(state, chosen, y_f, y_g, report_safe, opt2, maxi2, region)
    return chosen
