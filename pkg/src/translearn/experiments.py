"""Experiment runner: GP-experiment suite, safe-BO suite, theory
instruments, and the embedding retrieval mode.

All runs are deterministic functions of (config, seed): per-seed random
streams are spawned from the seed alone, results are reduced in seed
order, and CSVs are written with fixed float formatting, so output bytes
do not depend on the worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .acquisition import DecisionRule, rule_from_string, select_next
from .batch import BatchRequest, cosine_similarity_scores, select_batch
from .config import GpExperimentConfig, SafeBoConfig, TheoryConfig
from .csvio import write_csv
from .embeddings import load_embeddings
from .gp import (
    FiniteDomain,
    GaussianBelief,
    NoiseModel,
    Observation,
    chol_with_jitter,
    condition,
    entropy,
    prior_belief,
    rank_one_condition,
    sample_factor,
    tri_solve,
)
from .kernels import Kernel
from .safebo import SafeBoState, safebo_step, safeopt_step
from .tasks import build_safe_task
from .theory import (
    GainHistory,
    greedy_capacity,
    run_trajectory,
    task_complexity,
    verify_variance_bound,
)

__all__ = [
    "subsample_targets",
    "run_gp_experiment",
    "run_safebo_experiment",
    "run_theory",
    "retrieve",
]

SAFEBO_BASELINES = {"oracle-safeopt": "oracle", "safeopt": "estimated", "heuristic-safeopt": "heuristic"}


def subsample_targets(A_full, m: int, rng) -> np.ndarray:
    """Uniform subsample of the target set, without replacement.

    ``rng`` may be a Generator or an integer seed.  With m >= |A| the full
    set is returned unchanged; callers resample every round.
    """
    a = np.asarray(A_full, dtype=int).reshape(-1)
    if m < 1:
        raise ValueError("subsample size must be >= 1")
    if m >= a.size:
        return a
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return np.sort(rng.choice(a, size=m, replace=False))


def _eta2_for_targets(belief: GaussianBelief, S: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Irreducible uncertainty for every target, one factorization of K_SS."""
    eta2 = np.zeros(A.size)
    outside = ~np.isin(A, S)
    if outside.any():
        K_ss = belief.cov[np.ix_(S, S)]
        L = chol_with_jitter(K_ss, ladder=(1e-10, 1e-8))
        cols = A[outside]
        W = tri_solve(L, belief.cov[np.ix_(S, cols)])
        eta2[outside] = np.maximum(
            belief.cov[cols, cols] - np.einsum("ij,ij->j", W, W), 0.0
        )
    return eta2


@dataclass
class _GpContext:
    config: GpExperimentConfig
    domain: FiniteDomain
    prior: GaussianBelief
    noise: NoiseModel
    S: np.ndarray
    A: np.ndarray
    eta2: np.ndarray
    truth_factor: np.ndarray
    original_index: np.ndarray


def _gp_context(config: GpExperimentConfig) -> _GpContext:
    """Problem instance shared by every seed.

    The belief is restricted to S u A: every recorded quantity marginalizes
    over the rest of the grid, so dropping unused points is exact and keeps
    the per-round covariance update quadratic in the points that matter.
    """
    full_domain = config.domain.build()
    if full_domain.size > config.max_points:
        raise ValueError(
            f"domain size {full_domain.size} exceeds max_points={config.max_points}"
        )
    S_full = config.sample_space.indices(full_domain)
    A_full = config.target_space.indices(full_domain)
    universe = np.union1d(S_full, A_full)
    domain = FiniteDomain(points=full_domain.points[universe])
    prior = prior_belief(domain, config.kernel)
    noise = NoiseModel(config.noise.build(full_domain).variances[universe])
    S = np.searchsorted(universe, S_full)
    A = np.searchsorted(universe, A_full)
    eta2 = _eta2_for_targets(prior, S, A)
    factor = sample_factor(prior.cov)
    return _GpContext(config, domain, prior, noise, S, A, eta2, factor, universe)


def _metrics_row(ctx: _GpContext, belief: GaussianBelief, seed: int, rnd: int, rule: str):
    var_a = np.maximum(belief.variances(ctx.A), 0.0)
    ent = entropy(belief, ctx.A)
    mean_std = float(np.sqrt(var_a).mean())
    max_excess = float((var_a - ctx.eta2).max())
    return (seed, rnd, rule, ent, mean_std, max_excess)


def _run_gp_seed(ctx: _GpContext, seed: int):
    """All rules for one seed; same prior-sampled truth across rules."""
    cfg = ctx.config
    root = np.random.SeedSequence(seed)
    truth_ss, *rule_ss = root.spawn(1 + len(cfg.rules))
    z = np.random.default_rng(truth_ss).standard_normal(ctx.domain.size)
    truth = ctx.prior.mean + ctx.truth_factor @ z

    metrics = {r: [] for r in cfg.rules}
    selections = {r: [] for r in cfg.rules}
    timings = []
    for rule_name, ss in zip(cfg.rules, rule_ss):
        rng = np.random.default_rng(ss)
        rule = rule_from_string(
            rule_name,
            seed=int(rng.integers(2**63)) if rule_name == "random" else None,
        )
        start = time.perf_counter()
        belief = ctx.prior
        metrics[rule_name].append(_metrics_row(ctx, belief, seed, 0, rule_name))
        for rnd in range(1, cfg.rounds + 1):
            targets = ctx.A
            if cfg.target_space.subsample:
                targets = subsample_targets(ctx.A, cfg.target_space.subsample, rng)
            if cfg.batch_size == 1:
                picks = [select_next(rule, belief, ctx.S, targets, ctx.noise).chosen]
            else:
                req = BatchRequest(
                    rule=rule, batch_size=cfg.batch_size, S=ctx.S, A=targets,
                    mode=cfg.batch_mode,
                )
                picks = select_batch(belief, req, ctx.noise)
            obs = []
            for pos, ix in enumerate(picks):
                rho2 = float(ctx.noise.at([ix])[0])
                y = float(truth[ix] + rng.normal(0.0, np.sqrt(rho2)))
                obs.append(Observation(ix, y, rho2))
                selections[rule_name].append(
                    (seed, rnd, pos, int(ctx.original_index[ix]))
                )
            belief = condition(belief, obs)
            metrics[rule_name].append(_metrics_row(ctx, belief, seed, rnd, rule_name))
        timings.append((seed, rule_name, time.perf_counter() - start))
    return metrics, selections, timings


def _map_seeds(fn, seeds, workers: int):
    if workers <= 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seeds))


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    if values.size < 2:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / np.sqrt(values.size))


def _running_average(values: np.ndarray, window: int = 5) -> np.ndarray:
    out = np.empty_like(values, dtype=float)
    for i in range(values.size):
        out[i] = values[max(0, i - window + 1) : i + 1].mean()
    return out


def run_gp_experiment(config: GpExperimentConfig, output_dir=None, workers: int = 1) -> dict:
    """Run every seed x rule and emit one metrics CSV per rule plus a summary.

    Returns the in-memory results keyed by rule: per-seed metric arrays of
    shape (rounds + 1, 3) for entropy, mean marginal std, and max excess.
    """
    ctx = _gp_context(config)
    results = _map_seeds(lambda s: _run_gp_seed(ctx, s), config.seeds, workers)

    out = Path(output_dir or config.output_dir or f"out/{config.name}")
    summary_rows = []
    memory = {}
    timings = []
    for metrics, selections, times in results:
        timings.extend(times)
    for rule in config.rules:
        rows = []
        sel_rows = []
        for metrics, selections, _ in results:
            rows.extend(metrics[rule])
            sel_rows.extend(selections[rule])
        rows.sort(key=lambda r: (r[0], r[1]))
        sel_rows.sort(key=lambda r: (r[0], r[1], r[2]))
        write_csv(
            out / f"metrics_{rule}.csv",
            ["seed", "round", "rule", "entropy", "mean_marginal_std", "max_excess"],
            rows,
        )
        write_csv(
            out / f"selections_{rule}.csv",
            ["seed", "round", "position", "chosen"],
            sel_rows,
        )
        per_seed = {
            seed: np.array(
                [[r[3], r[4], r[5]] for r in rows if r[0] == seed], dtype=float
            )
            for seed in config.seeds
        }
        memory[rule] = {"metrics": per_seed, "selections": sel_rows}
        stacked = np.stack([per_seed[s] for s in config.seeds])  # (seeds, rounds+1, 3)
        smoothed = _running_average(stacked[:, :, 0].mean(axis=0))
        for rnd in range(config.rounds + 1):
            e_m, e_se = _mean_se(stacked[:, rnd, 0])
            s_m, s_se = _mean_se(stacked[:, rnd, 1])
            x_m, x_se = _mean_se(stacked[:, rnd, 2])
            summary_rows.append(
                (rule, rnd, e_m, e_se, smoothed[rnd], s_m, s_se, x_m, x_se)
            )
    write_csv(
        out / "summary.csv",
        [
            "rule", "round", "entropy_mean", "entropy_se", "entropy_smoothed",
            "mean_marginal_std_mean", "mean_marginal_std_se",
            "max_excess_mean", "max_excess_se",
        ],
        summary_rows,
    )
    write_csv(out / "timings.csv", ["seed", "rule", "wall_time_s"], timings)
    return memory


def _safebo_rule(method: str, rng: np.random.Generator) -> DecisionRule:
    seed = int(rng.integers(2**63))
    return rule_from_string(method, seed=seed, stabilized=True)


def _run_safebo_seed(config: SafeBoConfig, domain, task, priors, seed: int):
    noise = config.noise.build(domain)
    q = task.truth.constraints.shape[0]
    rows_by_method = {}
    timings = []
    root = np.random.SeedSequence(seed)
    streams = root.spawn(len(config.methods))
    prior_f, *priors_g = priors
    for method, ss in zip(config.methods, streams):
        rng = np.random.default_rng(ss)
        start = time.perf_counter()
        state = SafeBoState.create(
            beliefs=[prior_f] + list(priors_g),
            noises=[noise] * (q + 1),
            truth=task.truth,
            beta=config.beta,
            rng=rng,
            seed_index=task.seed_index,
            seed_observations=config.seed_observations,
        )
        if method in SAFEBO_BASELINES:
            variant = SAFEBO_BASELINES[method]
            for _ in range(config.rounds):
                safeopt_step(
                    state,
                    lipschitz=task.oracle_lipschitz if variant == "oracle" else None,
                    variant=variant,
                    regret_region=task.regret_region,
                )
        else:
            rule = _safebo_rule(method, rng)
            for _ in range(config.rounds):
                safebo_step(
                    state,
                    rule,
                    target_mode=config.target_mode,
                    thompson_k=config.thompson_samples,
                    target_subsample=config.target_subsample,
                    regret_region=task.regret_region,
                )
        rows = []
        for row in state.telemetry:
            rows.append(
                (seed, row["round"], row["chosen"], row["y_f"], *row["y_g"],
                 row["safe_size"], row["optimistic_size"], row["maximizer_size"],
                 row["regret"], row["violation"])
            )
        rows_by_method[method] = rows
        timings.append((seed, method, time.perf_counter() - start))
    return rows_by_method, timings


def run_safebo_experiment(config: SafeBoConfig, output_dir=None, workers: int = 1) -> dict:
    """Safe-BO suite: telemetry CSV per method plus a regret/violation summary."""
    domain = config.domain.build()
    task = build_safe_task(config.task, domain)
    priors = [prior_belief(domain, config.kernel, task.objective_mean)] + [
        prior_belief(domain, config.kernel, mf) for mf in task.constraint_means
    ]
    results = _map_seeds(
        lambda s: _run_safebo_seed(config, domain, task, priors, s),
        config.seeds,
        workers,
    )
    q = task.truth.constraints.shape[0]
    out = Path(output_dir or config.output_dir or f"out/{config.name}")
    header = (
        ["seed", "round", "chosen", "y_f"]
        + [f"y_g{i}" for i in range(q)]
        + ["safe_size", "optimistic_size", "maximizer_size", "regret", "violation"]
    )
    memory = {}
    summary_rows = []
    timing_rows = []
    # row layout: seed, round, chosen, y_f, y_g..., safe, optimistic, maximizer, regret, violation
    col_safe, col_regret = 4 + q, 7 + q
    for method in config.methods:
        rows = []
        for by_method, _ in results:
            rows.extend(by_method[method])
        rows.sort(key=lambda r: (r[0], r[1]))
        write_csv(out / f"telemetry_{method}.csv", header, rows)
        memory[method] = rows
        arr = np.array(
            [[r[1], r[col_regret], r[col_safe]] for r in rows], dtype=float
        )
        violations = sum(int(r[-1]) for r in rows)
        for rnd in sorted(set(int(v) for v in arr[:, 0])):
            sel = arr[arr[:, 0] == rnd]
            r_m, r_se = _mean_se(sel[:, 1])
            s_m, _ = _mean_se(sel[:, 2])
            summary_rows.append((method, rnd, r_m, r_se, s_m, violations))
    for _, times in results:
        timing_rows.extend(times)
    write_csv(
        out / "summary_safebo.csv",
        ["method", "round", "regret_mean", "regret_se", "safe_size_mean", "total_violations"],
        summary_rows,
    )
    write_csv(out / "timings.csv", ["seed", "method", "wall_time_s"], timing_rows)
    return memory


def run_theory(config: TheoryConfig, output_dir=None, workers: int = 1) -> dict:
    """Emit the greedy capacity curve and the excess-variance trajectory."""
    domain = config.domain.build()
    prior = prior_belief(domain, config.kernel)
    noise = config.noise.build(domain)
    S = config.sample_space.indices(domain)
    A = config.target_space.indices(domain)
    out = Path(output_dir or config.output_dir or f"out/{config.name}")

    curve = greedy_capacity(prior, A, S, noise, config.capacity_rounds)
    history = GainHistory()
    cap_rows = []
    for n, (value, pick, gain) in enumerate(
        zip(curve.values, curve.picks, curve.gains), start=1
    ):
        history.record(gain)
        cap_rows.append((n, value, pick, gain, task_complexity(history)))
    write_csv(
        out / "capacity.csv",
        ["n", "greedy_information", "pick", "marginal_gain", "task_complexity"],
        cap_rows,
    )

    rule = DecisionRule(name="itl")
    traj = run_trajectory(prior, rule, S, A, noise, config.rounds)
    report = verify_variance_bound(traj, A, S, threshold_frac=config.excess_threshold)
    excess_rows = []
    for rnd in range(report.excess.shape[0]):
        for j, target in enumerate(report.targets):
            excess_rows.append((rnd, int(target), report.excess[rnd, j]))
    write_csv(out / "excess.csv", ["round", "target", "excess_variance"], excess_rows)
    print(
        f"variance bound: nonnegative={report.nonnegative} "
        f"monotone={report.monotone} below_threshold={report.below_threshold}"
    )
    return {"capacity": curve, "report": report}


def retrieve(
    candidates_path,
    targets_path,
    rule: str = "itl",
    batch_size: int = 10,
    rounds: int = 1,
    noise_var: float = 1.0,
    mode: str = "bace",
    output_path=None,
    max_points: int = 4096,
) -> list[tuple]:
    """Embedding retrieval: select per-round batches of candidates that are
    informative about (or similar to) the targets.

    Builds an embedding-kernel belief over candidates + targets and runs
    conditional batch selection per round, conditioning on everything
    selected so far.  ``rule='cosine'`` ranks by mean cosine similarity
    instead.  Returns (round, position, candidate_row, id, score) rows.
    """
    cand_domain, cand_ids = load_embeddings(candidates_path)
    targ_domain, _ = load_embeddings(targets_path)
    if cand_domain.dim != targ_domain.dim:
        raise ValueError(
            f"embedding dims differ: {cand_domain.dim} vs {targ_domain.dim}"
        )
    n_c = cand_domain.size
    vectors = np.vstack([
        np.asarray(cand_domain.points, dtype=float),
        np.asarray(targ_domain.points, dtype=float),
    ])
    if vectors.shape[0] > max_points:
        raise ValueError(
            f"{vectors.shape[0]} embeddings exceed max_points={max_points}"
        )
    domain = FiniteDomain(points=vectors)
    S = np.arange(n_c)
    A = np.arange(n_c, domain.size)
    total = rounds * batch_size
    if total > n_c:
        raise ValueError(f"{total} picks requested from {n_c} candidates")

    rows = []
    if rule == "cosine":
        scores = cosine_similarity_scores(vectors, A, S)
        order = np.lexsort((S, -scores))
        for k in range(total):
            ix = int(S[order[k]])
            rows.append((k // batch_size + 1, k % batch_size, ix, cand_ids[ix], float(scores[ix])))
    else:
        kernel = Kernel(kind="embedding")
        belief = prior_belief(domain, kernel)
        noise = NoiseModel.homoscedastic(domain.size, noise_var)
        decision = rule_from_string(rule, seed=0, stabilized=True)
        remaining = S.copy()
        for rnd in range(1, rounds + 1):
            req = BatchRequest(rule=decision, batch_size=batch_size, S=remaining, A=A, mode=mode)
            picks, scores = select_batch(belief, req, noise, return_scores=True)
            for pos, (ix, sc) in enumerate(zip(picks, scores)):
                rows.append((rnd, pos, int(ix), cand_ids[int(ix)], float(sc)))
            for ix in picks:
                belief = rank_one_condition(belief, ix, noise_var)
            remaining = remaining[~np.isin(remaining, picks)]
    if output_path is not None:
        write_csv(
            output_path,
            ["round", "position", "candidate_row", "id", "score"],
            rows,
        )
    return rows
