"""Theory instruments: information capacity, irreducible uncertainty,
information ratio, task complexity, approximate Markov boundaries, and
empirical verification of the variance-convergence bound.

Exact capacities are only enumerated on tiny instances; everywhere else
the greedy curve is the exported object (a (1 - 1/e) lower bound whenever
the information-gain objective is submodular).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .acquisition import DecisionRule, itl_scores, select_next
from .gp import (
    GaussianBelief,
    NoiseModel,
    Observation,
    chol_with_jitter,
    condition,
    mutual_information,
    rank_one_condition,
    tri_solve,
)

__all__ = [
    "CapacityCurve",
    "GainHistory",
    "Trajectory",
    "VarianceBoundReport",
    "greedy_capacity",
    "exact_capacity",
    "irreducible_uncertainty",
    "information_ratio",
    "task_complexity",
    "approx_markov_boundary",
    "run_trajectory",
    "verify_variance_bound",
]

EXACT_CAPACITY_MAX_S = 12
EXACT_CAPACITY_MAX_N = 4

# Jitter floor for the noise-free solves below (irreducible uncertainty is
# defined through conditioning on latent values, so no noise matrix exists
# to regularize the system).
_NOISELESS_LADDER = (1e-10, 1e-8)


def condition_on_locations(belief: GaussianBelief, indices, noise: NoiseModel) -> GaussianBelief:
    """Condition only the covariance on observation locations.

    Observation values are irrelevant to every information quantity, so the
    posterior mean is pinned at the prior mean (dummy values).
    """
    ix = np.asarray(indices, dtype=int).reshape(-1)
    obs = [
        Observation(index=int(i), value=float(belief.mean[int(i)]), noise_var=float(noise.at([i])[0]))
        for i in ix
    ]
    return condition(belief, obs)


@dataclass(frozen=True)
class CapacityCurve:
    """Greedy information-capacity curve: values[n-1] = I(f_A; y of first n picks)."""

    values: np.ndarray
    picks: list[int]
    gains: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size and (v[0] < -1e-12 or np.any(np.diff(v) < -1e-8)):
            raise ValueError("capacity curve must be nonnegative and non-decreasing")
        object.__setattr__(self, "values", v)


def greedy_capacity(
    belief: GaussianBelief,
    A,
    S,
    noise: NoiseModel,
    N: int,
) -> CapacityCurve:
    """Greedy lower bound of the information capacity, N rounds of itl picks.

    Picks form a multiset: re-observing an informative point is allowed,
    exactly as the sequential decision rule would.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    a = np.asarray(A, dtype=int).reshape(-1)
    s = np.asarray(S, dtype=int).reshape(-1)
    picks: list[int] = []
    values = np.empty(N)
    gains = np.empty(N)
    work = belief
    total = 0.0
    for n in range(N):
        scores = itl_scores(work, a, s, noise)
        best = scores.max()
        chosen = int(s[scores >= best].min())
        picks.append(chosen)
        gains[n] = best
        total += best
        values[n] = total
        work = rank_one_condition(work, chosen, float(noise.at([chosen])[0]))
    return CapacityCurve(values=values, picks=picks, gains=gains)


def exact_capacity(belief: GaussianBelief, A, S, noise: NoiseModel, n: int) -> float:
    """Exhaustive max of I(f_A; y_X) over subsets X of S with |X| <= n."""
    s = np.unique(np.asarray(S, dtype=int))
    if s.size > EXACT_CAPACITY_MAX_S or n > EXACT_CAPACITY_MAX_N:
        raise ValueError(
            f"exact capacity is limited to |S| <= {EXACT_CAPACITY_MAX_S}, "
            f"n <= {EXACT_CAPACITY_MAX_N}"
        )
    best = 0.0
    for k in range(1, n + 1):
        for X in combinations(s.tolist(), k):
            best = max(best, mutual_information(belief, A, list(X), noise))
    return best


def irreducible_uncertainty(belief: GaussianBelief, S, x: int) -> float:
    """Variance of f_x given perfect (noiseless) knowledge of f on S."""
    s = np.asarray(S, dtype=int).reshape(-1)
    xi = int(x)
    if s.size == 0:
        return float(belief.cov[xi, xi])
    K_ss = belief.cov[np.ix_(s, s)]
    L = chol_with_jitter(K_ss, ladder=_NOISELESS_LADDER)
    w = tri_solve(L, belief.cov[s, xi])
    return float(max(belief.cov[xi, xi] - w @ w, 0.0))


@dataclass
class GainHistory:
    """Per-round maximal marginal gains with the running minimum tracked online."""

    gains: list[float] = field(default_factory=list)

    def record(self, gamma: float) -> None:
        if gamma < 0:
            raise ValueError("marginal gains must be nonnegative")
        self.gains.append(float(gamma))

    @property
    def running_min(self) -> float:
        if not self.gains:
            raise ValueError("no gains recorded")
        return min(self.gains)


def task_complexity(history: GainHistory) -> float:
    """Ratio of the latest gain to the smallest gain observed so far.

    Equals 1 exactly when gains are non-increasing (the submodular case);
    values above 1 certify downstream synergies.
    """
    gains = np.asarray(history.gains, dtype=float)
    if gains.size == 0:
        raise ValueError("no gains recorded")
    latest = gains[-1]
    ratios = [latest / g if g > 0 else (1.0 if latest == 0 else np.inf) for g in gains]
    return float(max(ratios))


def approx_markov_boundary(
    belief: GaussianBelief,
    S,
    x: int,
    epsilon: float,
    noise: NoiseModel,
    max_picks: int | None = None,
) -> list[int]:
    """Greedily grow a multiset B within S until Var(f_x | y_B) <= eta^2 + eps.

    Picks follow the undirected rule within S (maximal total information
    gain 1/2 log(1 + var/rho^2) under the running covariance), which is the
    construction whose size admits an n-free bound.  Raises if the target
    is not reached within ``max_picks`` picks (default |S|), which signals
    either numerical failure or an epsilon below the noise floor of |S|
    single observations.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    s = np.asarray(S, dtype=int).reshape(-1)
    xi = int(x)
    target = irreducible_uncertainty(belief, s, xi) + epsilon
    if belief.cov[xi, xi] <= target:
        return []
    limit = int(max_picks) if max_picks is not None else s.size
    work = belief
    picks: list[int] = []
    for _ in range(limit):
        var_s = work.cov[s, s]
        gains = 0.5 * np.log1p(np.maximum(var_s, 0.0) / noise.at(s))
        best = gains.max()
        chosen = int(s[gains >= best].min())
        picks.append(chosen)
        work = rank_one_condition(work, chosen, float(noise.at([chosen])[0]))
        if work.cov[xi, xi] <= target:
            return picks
    raise RuntimeError(
        f"no approximate Markov boundary within {limit} picks "
        f"(residual {work.cov[xi, xi]:.3e} > target {target:.3e}); "
        "epsilon may be below the reachable noise floor"
    )


def information_ratio(belief: GaussianBelief, X, D, A, noise: NoiseModel) -> float:
    """Sum of individual gains over the joint gain of X, both given y_D.

    Values above 1 indicate redundancy, below 1 synergy.  Returns 1 in the
    degenerate case of a zero joint gain.
    """
    x = np.asarray(X, dtype=int).reshape(-1)
    if x.size == 0:
        raise ValueError("X must be nonempty")
    d = np.asarray(D, dtype=int).reshape(-1)
    base = condition_on_locations(belief, d, noise) if d.size else belief
    joint = mutual_information(base, A, x, noise)
    if joint <= 0.0:
        return 1.0
    singles = sum(mutual_information(base, A, [int(xi)], noise) for xi in x)
    return float(singles / joint)


@dataclass(frozen=True)
class Trajectory:
    """A rollout of a decision rule: chosen indices and per-round variances."""

    prior: GaussianBelief
    rule: DecisionRule
    sample_space: np.ndarray
    chosen: list[int]
    variance_history: np.ndarray  # (rounds + 1, m); row 0 is the prior


def run_trajectory(
    belief: GaussianBelief,
    rule: DecisionRule,
    S,
    A,
    noise: NoiseModel,
    rounds: int,
) -> Trajectory:
    """Roll a rule forward, conditioning the covariance on each pick.

    Posterior variances do not depend on observed values, so the rollout
    needs no samples of the ground truth.
    """
    s = np.asarray(S, dtype=int).reshape(-1)
    work = belief
    chosen: list[int] = []
    history = np.empty((rounds + 1, belief.size))
    history[0] = work.variances()
    for n in range(rounds):
        report = select_next(rule, work, s, A, noise)
        chosen.append(report.chosen)
        work = rank_one_condition(work, report.chosen, float(noise.at([report.chosen])[0]))
        history[n + 1] = work.variances()
    return Trajectory(
        prior=belief, rule=rule, sample_space=s, chosen=chosen, variance_history=history
    )


@dataclass(frozen=True)
class VarianceBoundReport:
    """Excess-variance curves sigma_n^2(x) - eta_S^2(x) for x in A."""

    targets: np.ndarray
    eta2: np.ndarray
    excess: np.ndarray  # (rounds + 1, |A|)
    nonnegative: bool
    monotone: bool
    below_threshold: bool
    threshold_frac: float

    @property
    def ok(self) -> bool:
        return self.nonnegative and self.monotone and self.below_threshold


def verify_variance_bound(
    trajectory: Trajectory,
    A,
    S,
    threshold_frac: float = 0.05,
    nonneg_tol: float = 1e-8,
    monotone_tol: float = 1e-6,
) -> VarianceBoundReport:
    """Check the empirical variance-convergence behaviour of a trajectory.

    Asserts that at every round and target the posterior variance never
    falls below the irreducible floor (up to ``nonneg_tol``), decays
    monotonically (up to ``monotone_tol``), and ends below
    ``threshold_frac`` of the prior variance in excess of the floor.
    """
    a = np.asarray(A, dtype=int).reshape(-1)
    s = np.asarray(S, dtype=int).reshape(-1)
    eta2 = np.array([irreducible_uncertainty(trajectory.prior, s, int(x)) for x in a])
    excess = trajectory.variance_history[:, a] - eta2[None, :]
    nonnegative = bool(excess.min() >= -nonneg_tol)
    monotone = bool(np.all(np.diff(excess, axis=0) <= monotone_tol))
    prior_var = trajectory.prior.variances(a)
    below = bool(np.all(excess[-1] <= threshold_frac * prior_var + nonneg_tol))
    return VarianceBoundReport(
        targets=a,
        eta2=eta2,
        excess=excess,
        nonnegative=nonnegative,
        monotone=monotone,
        below_threshold=below,
        threshold_frac=threshold_frac,
    )
