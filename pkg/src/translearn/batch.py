"""Batch selection over coordinate or embedding domains.

Greedy conditional batch construction conditions the covariance on each
pick before scoring the next one (no labels exist inside a batch, so the
update is covariance-only), which enforces within-batch diversity.  The
top-b mode ranks all candidates once under the round's belief.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .acquisition import DecisionRule, scores_for_rule
from .gp import GaussianBelief, NoiseModel, rank_one_condition

__all__ = ["BatchRequest", "select_batch", "cosine_similarity_scores"]

# Candidates whose hallucinated posterior variance falls below this are
# already fully determined within the batch; the rank-one update would
# degenerate, so they are excluded from later picks.
DEGENERATE_VAR = 1e-12


@dataclass(frozen=True)
class BatchRequest:
    rule: DecisionRule
    batch_size: int
    S: np.ndarray
    A: np.ndarray
    mode: str = "bace"

    def __post_init__(self):
        if self.mode not in ("bace", "topb"):
            raise ValueError(f"unknown batch mode {self.mode!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        object.__setattr__(self, "S", np.asarray(self.S, dtype=int).reshape(-1))
        object.__setattr__(self, "A", np.asarray(self.A, dtype=int).reshape(-1))


def _pick(candidates: np.ndarray, scores: np.ndarray) -> int:
    best = scores.max()
    return int(candidates[scores >= best].min())


def select_batch(
    belief: GaussianBelief,
    req: BatchRequest,
    noise: NoiseModel,
    return_scores: bool = False,
):
    """Select a batch of distinct indices from req.S.

    bace: pick i maximizes the rule score under the belief conditioned
    (covariance-only) on picks 1..i-1.  topb: the b best scores under the
    unconditioned round belief.  Sampling is without replacement.  With
    ``return_scores`` the per-pick score at selection time is returned too.
    """
    S = np.unique(req.S)
    b = req.batch_size
    if b > S.size:
        raise ValueError(f"batch size {b} exceeds sample space size {S.size}")

    if req.rule.name == "random":
        picks = [int(i) for i in req.rule.rng.choice(S, size=b, replace=False)]
        return (picks, [0.0] * b) if return_scores else picks

    if req.mode == "topb":
        scores = scores_for_rule(req.rule, belief, S, req.A, noise)
        # Highest score first; ties resolved toward the lower index.
        order = np.lexsort((S, -scores))
        picks = [int(S[i]) for i in order[:b]]
        if return_scores:
            return picks, [float(scores[i]) for i in order[:b]]
        return picks

    picks: list[int] = []
    pick_scores: list[float] = []
    work = belief
    remaining = S.copy()
    for _ in range(b):
        live = remaining[work.cov[remaining, remaining] >= DEGENERATE_VAR]
        if live.size == 0:
            raise ValueError(
                "all remaining candidates are numerically determined; "
                f"cannot fill batch of size {b}"
            )
        scores = scores_for_rule(req.rule, work, live, req.A, noise)
        chosen = _pick(live, scores)
        picks.append(chosen)
        pick_scores.append(float(scores[live == chosen][0]))
        work = rank_one_condition(work, chosen, float(noise.at([chosen])[0]))
        remaining = remaining[remaining != chosen]
    return (picks, pick_scores) if return_scores else picks


def cosine_similarity_scores(embeddings: np.ndarray, A, S) -> np.ndarray:
    """Mean cosine similarity of each candidate embedding to the targets."""
    E = np.asarray(embeddings, dtype=float)
    a = np.asarray(A, dtype=int).reshape(-1)
    s = np.asarray(S, dtype=int).reshape(-1)
    if a.size == 0 or s.size == 0:
        raise ValueError("A and S must be nonempty")
    norms = np.linalg.norm(E, axis=1)
    for label, ix in (("target", a), ("candidate", s)):
        bad = ix[norms[ix] == 0.0]
        if bad.size:
            raise ValueError(f"zero-norm embedding at {label} index {int(bad[0])}")
    unit = E / norms[:, None]
    return (unit[s] @ unit[a].T).mean(axis=1)
