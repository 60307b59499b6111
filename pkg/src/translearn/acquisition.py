"""Single-point decision rules for transductive active learning.

All rules are scored so that the next sample is the (lowest-index) argmax
over the sample space.  Scores are computed by the backward method: one
factorization of the target-space covariance per round, then O(1) work per
candidate on top of the shared cross-covariance solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gp import GaussianBelief, NoiseModel, chol_with_jitter, tri_solve

__all__ = [
    "DecisionRule",
    "ScoreReport",
    "rule_from_string",
    "itl_score",
    "vtl_score",
    "ctl_score",
    "mmitl_score",
    "unsa_score",
    "itl_scores",
    "vtl_scores",
    "ctl_scores",
    "mmitl_scores",
    "unsa_scores",
    "select_next",
]

RULE_NAMES = ("itl", "vtl", "ctl", "mmitl", "unsa", "random")

# Posterior variances at or below this floor are treated as deterministic:
# correlations to such points are defined to contribute zero.
VAR_FLOOR = 1e-15


@dataclass
class DecisionRule:
    """A named decision rule.

    ``random`` carries a fixed seed; its generator state advances across
    calls so a trajectory is reproducible from the seed.  ``stabilized``
    applies to itl only and conditions on noisy target observations
    (adding rho^2 to the target covariance diagonal before inversion)
    instead of the latent targets; it is the numerically robust choice for
    near-singular embedding kernels and multiset target spaces.
    """

    name: str
    seed: int | None = None
    stabilized: bool = False
    _rng: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.name not in RULE_NAMES:
            raise ValueError(f"unknown rule {self.name!r}; expected one of {RULE_NAMES}")
        if self.name == "random" and self.seed is None:
            raise ValueError("random rule requires a seed")

    @property
    def rng(self) -> np.random.Generator:
        if self._rng is None:
            self._rng = np.random.default_rng(self.seed)
        return self._rng


def rule_from_string(spec: str, seed: int | None = None, stabilized: bool = False) -> DecisionRule:
    return DecisionRule(name=spec.strip().lower(), seed=seed, stabilized=stabilized)


@dataclass(frozen=True)
class ScoreReport:
    """Per-candidate scores plus the chosen domain index."""

    scores: np.ndarray
    chosen: int
    rule: DecisionRule


def _targets(belief: GaussianBelief, A) -> np.ndarray:
    a = np.asarray(A, dtype=int).reshape(-1)
    if a.size == 0:
        raise ValueError("target space A must be nonempty")
    if a.min() < 0 or a.max() >= belief.size:
        raise IndexError("target index out of range")
    return a


def _candidates(belief: GaussianBelief, S) -> np.ndarray:
    s = np.asarray(S, dtype=int).reshape(-1)
    if s.min(initial=0) < 0 or s.max(initial=-1) >= belief.size:
        raise IndexError("candidate index out of range")
    return s


def itl_scores(
    belief: GaussianBelief,
    A,
    candidates,
    noise: NoiseModel,
    stabilized: bool = False,
) -> np.ndarray:
    """Information gained about the targets per candidate observation.

    Backward form: 1/2 log((var(x) + rho^2(x)) / (var_hat(x) + rho^2(x)))
    where var_hat(x) is the variance of f_x conditioned on the targets
    (latent f_A, or noisy y_A when ``stabilized``).
    """
    a = _targets(belief, A)
    s = _candidates(belief, candidates)
    var_s = belief.cov[s, s]
    rho2 = noise.at(s)
    K_aa = belief.cov[np.ix_(a, a)]
    if stabilized:
        K_aa = K_aa + np.diag(noise.at(a))
    L = chol_with_jitter(K_aa)
    W = tri_solve(L, belief.cov[np.ix_(a, s)])
    reduction = np.einsum("ij,ij->j", W, W)
    var_hat = np.maximum(var_s - reduction, 0.0)
    scores = 0.5 * (np.log(var_s + rho2) - np.log(var_hat + rho2))
    return np.maximum(scores, 0.0)


def vtl_scores(belief: GaussianBelief, A, candidates, noise: NoiseModel) -> np.ndarray:
    """Negative posterior total variance over the targets after observing x.

    Stored negated so the uniform argmax convention applies.
    """
    a = _targets(belief, A)
    s = _candidates(belief, candidates)
    denom = belief.cov[s, s] + noise.at(s)
    cross = belief.cov[np.ix_(a, s)]
    reduction = (cross * cross).sum(axis=0) / denom
    total_prior = float(belief.cov[a, a].sum())
    return -(total_prior - reduction)


def ctl_scores(belief: GaussianBelief, A, candidates) -> np.ndarray:
    """Sum of posterior correlations from each candidate to the targets.

    Targets (or candidates) with numerically zero variance contribute 0.
    """
    a = _targets(belief, A)
    s = _candidates(belief, candidates)
    var_a = belief.cov[a, a]
    var_s = belief.cov[s, s]
    cross = belief.cov[np.ix_(a, s)]
    sd_a = np.sqrt(np.maximum(var_a, VAR_FLOOR))
    sd_s = np.sqrt(np.maximum(var_s, VAR_FLOOR))
    corr = cross / sd_a[:, None] / sd_s[None, :]
    corr[var_a <= VAR_FLOOR, :] = 0.0
    corr[:, var_s <= VAR_FLOOR] = 0.0
    return corr.sum(axis=0)


def mmitl_scores(belief: GaussianBelief, A, candidates, noise: NoiseModel) -> np.ndarray:
    """Sum over targets of the marginal information gains I(f_x'; y_x)."""
    a = _targets(belief, A)
    s = _candidates(belief, candidates)
    var_a = belief.cov[a, a]
    denom = belief.cov[s, s] + noise.at(s)
    cross = belief.cov[np.ix_(a, s)]
    # Var(f_x' | y_x) = var_a - cross^2 / (var_s + rho^2)
    post = var_a[:, None] - (cross * cross) / denom[None, :]
    ratio = var_a[:, None] / np.maximum(post, VAR_FLOOR)
    ratio = np.maximum(ratio, 1.0)
    gains = 0.5 * np.log(ratio)
    gains[var_a <= VAR_FLOOR, :] = 0.0
    return gains.sum(axis=0)


def unsa_scores(belief: GaussianBelief, candidates) -> np.ndarray:
    """Posterior marginal variance per candidate (uncertainty sampling)."""
    s = _candidates(belief, candidates)
    return belief.cov[s, s].copy()


def itl_score(belief, A, x, noise, stabilized: bool = False) -> float:
    return float(itl_scores(belief, A, [int(x)], noise, stabilized=stabilized)[0])


def vtl_score(belief, A, x, noise) -> float:
    return float(vtl_scores(belief, A, [int(x)], noise)[0])


def ctl_score(belief, A, x) -> float:
    return float(ctl_scores(belief, A, [int(x)])[0])


def mmitl_score(belief, A, x, noise) -> float:
    return float(mmitl_scores(belief, A, [int(x)], noise)[0])


def unsa_score(belief, x) -> float:
    return float(unsa_scores(belief, [int(x)])[0])


def scores_for_rule(
    rule: DecisionRule,
    belief: GaussianBelief,
    S,
    A,
    noise: NoiseModel,
) -> np.ndarray:
    if rule.name == "itl":
        return itl_scores(belief, A, S, noise, stabilized=rule.stabilized)
    if rule.name == "vtl":
        return vtl_scores(belief, A, S, noise)
    if rule.name == "ctl":
        return ctl_scores(belief, A, S)
    if rule.name == "mmitl":
        return mmitl_scores(belief, A, S, noise)
    if rule.name == "unsa":
        return unsa_scores(belief, S)
    raise ValueError(f"rule {rule.name!r} has no score operation")


def select_next(
    rule: DecisionRule,
    belief: GaussianBelief,
    S,
    A,
    noise: NoiseModel,
) -> ScoreReport:
    """Score every candidate in S and pick the lowest-index argmax.

    The random rule ignores scores and draws uniformly from S using its
    own seeded generator; its report carries an indicator score vector.
    """
    s = np.asarray(S, dtype=int).reshape(-1)
    if s.size == 0:
        raise ValueError("sample space S must be nonempty")

    if rule.name == "random":
        pos = int(rule.rng.integers(s.size))
        scores = np.zeros(s.size)
        scores[pos] = 1.0
        return ScoreReport(scores=scores, chosen=int(s[pos]), rule=rule)

    scores = scores_for_rule(rule, belief, s, A, noise)
    best = scores.max()
    chosen = int(s[scores >= best].min())
    return ScoreReport(scores=scores, chosen=chosen, rule=rule)
