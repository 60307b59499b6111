import hashlib
from pathlib import Path

import numpy as np
import pytest

from translearn.cli import main
from translearn.config import ConfigError, SpaceSpec, load_config
from translearn.embeddings import (
    EmbeddingFormatError,
    load_embeddings,
    write_embeddings_binary,
)
from translearn.experiments import (
    retrieve,
    run_gp_experiment,
    run_safebo_experiment,
    run_theory,
    subsample_targets,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _hash_outputs(directory):
    out = {}
    for p in sorted(Path(directory).rglob("*.csv")):
        if p.name == "timings.csv":  # wall times are not reproducible
            continue
        out[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


class TestConfig:
    def test_smoke_configs_parse(self):
        for name, kind in (
            ("smoke_gp.toml", "gp"),
            ("smoke_safebo.toml", "safebo"),
            ("gp_directed.toml", "gp"),
            ("gp_extrapolation.toml", "gp"),
            ("gp_heteroscedastic.toml", "gp"),
            ("gp_laplace.toml", "gp"),
            ("safebo_ridge.toml", "safebo"),
            ("safebo_island.toml", "safebo"),
            ("theory_excess.toml", "theory"),
        ):
            load_config(CONFIGS / name, kind)

    def test_unknown_key_rejected_with_path(self, tmp_path):
        cfg = tmp_path / "bad.toml"
        cfg.write_text(
            (CONFIGS / "smoke_gp.toml").read_text().replace(
                'kind = "gp"', 'kind = "gp"\nbogus_flag = 1'
            )
        )
        with pytest.raises(ConfigError, match="bogus_flag"):
            load_config(cfg)

    def test_unknown_nested_key_has_field_path(self, tmp_path):
        cfg = tmp_path / "bad.toml"
        cfg.write_text(
            (CONFIGS / "smoke_gp.toml").read_text().replace(
                'kind = "homoscedastic"', 'kind = "homoscedastic"\ncolor = "red"'
            )
        )
        with pytest.raises(ConfigError, match="noise"):
            load_config(cfg)

    def test_domain_memory_cap(self, tmp_path):
        text = (CONFIGS / "smoke_gp.toml").read_text().replace(
            "resolution = 10", "resolution = 200"
        )
        cfg = tmp_path / "big.toml"
        cfg.write_text(text)
        with pytest.raises(ConfigError, match="max_points"):
            load_config(cfg)

    def test_empty_seeds_rejected(self, tmp_path):
        text = (CONFIGS / "smoke_gp.toml").read_text().replace(
            "seeds = [0, 1, 2]", "seeds = []"
        )
        cfg = tmp_path / "noseeds.toml"
        cfg.write_text(text)
        with pytest.raises(ConfigError, match="seeds"):
            load_config(cfg)

    def test_kind_mismatch(self):
        with pytest.raises(ConfigError, match="kind"):
            load_config(CONFIGS / "smoke_gp.toml", "safebo")

    def test_space_predicates(self):
        cfg = load_config(CONFIGS / "smoke_gp.toml")
        domain = cfg.domain.build()
        all_ix = SpaceSpec(kind="all").indices(domain)
        assert all_ix.size == domain.size
        disk = SpaceSpec(kind="disk", center=(0.0, 0.0), radius=1.0).indices(domain)
        assert 0 < disk.size < domain.size
        half = SpaceSpec(kind="halfspace", axis=1, op="ge", value=0.0).indices(domain)
        assert np.all(domain.points[half, 1] >= 0.0)
        listed = SpaceSpec(kind="indices", values=(3, 1, 3)).indices(domain)
        np.testing.assert_array_equal(listed, [1, 3])
        with pytest.raises(ConfigError, match="selects no points"):
            SpaceSpec(kind="box", lower=(9.0, 9.0), upper=(10.0, 10.0)).indices(domain)

    def test_region_noise_build(self):
        cfg = load_config(CONFIGS / "gp_heteroscedastic.toml")
        domain = cfg.domain.build()
        noise = cfg.noise.build(domain)
        inside = np.all(np.abs(domain.points) <= 0.5, axis=1)
        assert np.all(noise.variances[inside] == 1.0)
        assert np.all(noise.variances[~inside] == 0.01)


class TestSubsampleTargets:
    def test_full_size_is_identity(self):
        A = np.array([4, 7, 9])
        out = subsample_targets(A, 3, np.random.default_rng(0))
        np.testing.assert_array_equal(out, A)

    def test_singleton_sample_makes_rules_coincide(self):
        from translearn.acquisition import DecisionRule, select_next
        from translearn.gp import NoiseModel

        from instances import random_belief

        rng = np.random.default_rng(1)
        b = random_belief(rng, 8)
        noise = NoiseModel.homoscedastic(8, 0.3)
        A = subsample_targets(np.arange(8), 1, rng)
        assert A.size == 1
        picks = {
            name: select_next(DecisionRule(name), b, np.arange(8), A, noise).chosen
            for name in ("itl", "vtl", "mmitl")
        }
        assert len(set(picks.values())) == 1

    def test_uniformity_chi_square(self):
        from scipy.stats import chi2

        rng = np.random.default_rng(2)
        A = np.arange(20)
        counts = np.zeros(20)
        draws = 10_000
        for _ in range(draws):
            for ix in subsample_targets(A, 3, rng):
                counts[ix] += 1
        expected = draws * 3 / 20
        stat = ((counts - expected) ** 2 / expected).sum()
        p = chi2.sf(stat, df=19)
        assert p > 0.001

    def test_invalid_size(self):
        with pytest.raises(ValueError):
            subsample_targets(np.arange(5), 0, np.random.default_rng(0))


class TestEmbeddings:
    def test_identity_csv(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("id,e0,e1\na,1.0,0.0\nb,0.0,1.0\n")
        domain, ids = load_embeddings(p)
        assert ids == ["a", "b"]
        np.testing.assert_array_equal(domain.points, np.eye(2, dtype=np.float32))

    def test_binary_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        vec = rng.normal(size=(3, 5)).astype(np.float32)
        p = tmp_path / "e.bin"
        write_embeddings_binary(p, vec)
        domain, ids = load_embeddings(p)
        np.testing.assert_array_equal(domain.points, vec)
        assert ids == ["0", "1", "2"]
        # writing the loaded vectors reproduces the file byte for byte
        p2 = tmp_path / "e2.bin"
        write_embeddings_binary(p2, domain.points)
        assert p.read_bytes() == p2.read_bytes()

    def test_bad_magic_reports_byte_offset(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"XEMB" + b"\x00" * 16)
        with pytest.raises(EmbeddingFormatError, match="byte 0"):
            load_embeddings(p)

    def test_truncated_payload_reports_offset(self, tmp_path):
        import struct

        p = tmp_path / "trunc.bin"
        p.write_bytes(b"TEMB" + struct.pack("<II", 2, 2) + b"\x00" * 8)
        with pytest.raises(EmbeddingFormatError, match="truncated at byte 20"):
            load_embeddings(p)

    def test_nan_payload_reports_byte_offset(self, tmp_path):
        import struct

        p = tmp_path / "nan.bin"
        data = np.array([[1.0, 2.0], [np.nan, 4.0]], dtype="<f4")
        p.write_bytes(b"TEMB" + struct.pack("<II", 2, 2) + data.tobytes())
        with pytest.raises(EmbeddingFormatError, match=f"byte {12 + 2 * 4}"):
            load_embeddings(p)

    def test_csv_width_mismatch_reports_line(self, tmp_path):
        p = tmp_path / "w.csv"
        p.write_text("id,e0,e1\na,1.0,2.0\nb,3.0\n")
        with pytest.raises(EmbeddingFormatError, match="line 3"):
            load_embeddings(p)

    def test_csv_non_numeric_reports_line(self, tmp_path):
        p = tmp_path / "n.csv"
        p.write_text("id,e0\na,1.0\nb,squid\n")
        with pytest.raises(EmbeddingFormatError, match="line 3"):
            load_embeddings(p)

    def test_large_file_loads_as_float32(self, tmp_path):
        count, dim = 200_000, 32
        rng = np.random.default_rng(4)
        vec = rng.normal(size=(count, dim)).astype(np.float32)
        p = tmp_path / "big.bin"
        write_embeddings_binary(p, vec)
        domain, _ = load_embeddings(p)
        assert domain.points.dtype == np.float32
        assert domain.points.nbytes == count * dim * 4


class TestGpExperiment:
    def test_zero_rounds_emits_prior_metrics_only(self, tmp_path):
        import dataclasses

        cfg = dataclasses.replace(load_config(CONFIGS / "smoke_gp.toml"), rounds=0)
        run_gp_experiment(cfg, output_dir=tmp_path)
        lines = (tmp_path / "metrics_itl.csv").read_text().splitlines()
        assert len(lines) == 1 + len(cfg.seeds)  # header + one row per seed
        assert all(line.split(",")[1] == "0" for line in lines[1:])

    def test_selections_stay_inside_sample_space(self, tmp_path):
        cfg = load_config(CONFIGS / "smoke_gp.toml")
        run_gp_experiment(cfg, output_dir=tmp_path)
        domain = cfg.domain.build()
        S = set(cfg.sample_space.indices(domain).tolist())
        for rule in cfg.rules:
            rows = (tmp_path / f"selections_{rule}.csv").read_text().splitlines()[1:]
            assert rows, rule
            assert all(int(r.split(",")[3]) in S for r in rows)

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = load_config(CONFIGS / "smoke_gp.toml")
        run_gp_experiment(cfg, output_dir=tmp_path / "a", workers=1)
        run_gp_experiment(cfg, output_dir=tmp_path / "b", workers=2)
        h1, h2 = _hash_outputs(tmp_path / "a"), _hash_outputs(tmp_path / "b")
        assert h1 and h1 == h2

    def test_batched_run(self, tmp_path):
        import dataclasses

        cfg = dataclasses.replace(
            load_config(CONFIGS / "smoke_gp.toml"),
            rules=("itl",), batch_size=3, rounds=3, seeds=(0,),
        )
        run_gp_experiment(cfg, output_dir=tmp_path)
        rows = (tmp_path / "selections_itl.csv").read_text().splitlines()[1:]
        assert len(rows) == 9
        per_round = {}
        for r in rows:
            seed, rnd, pos, chosen = r.split(",")
            per_round.setdefault(rnd, []).append(chosen)
        for picks in per_round.values():
            assert len(picks) == len(set(picks)) == 3


class TestAblationGates:
    def test_heteroscedastic_noise_is_avoided_by_itl(self):
        import dataclasses

        from translearn.acquisition import DecisionRule
        from translearn.experiments import _gp_context
        from translearn.theory import run_trajectory

        cfg = dataclasses.replace(
            load_config(CONFIGS / "gp_heteroscedastic.toml"), seeds=(0, 1)
        )
        ctx = _gp_context(cfg)
        inside = np.all(np.abs(ctx.domain.points) <= 0.5, axis=1)
        fractions = {}
        for rule in ("itl", "unsa"):
            traj = run_trajectory(
                ctx.prior, DecisionRule(rule), ctx.S, ctx.A, ctx.noise, cfg.rounds
            )
            fractions[rule] = np.mean([inside[c] for c in traj.chosen])
        assert fractions["itl"] < fractions["unsa"]

    def test_laplace_itl_coincides_with_local_uncertainty_sampling(self):
        from collections import Counter

        from translearn.acquisition import DecisionRule
        from translearn.experiments import _gp_context
        from translearn.theory import run_trajectory

        cfg = load_config(CONFIGS / "gp_laplace.toml")
        ctx = _gp_context(cfg)
        itl = run_trajectory(
            ctx.prior, DecisionRule("itl"), ctx.S, ctx.A, ctx.noise, cfg.rounds
        )
        local_unsa = run_trajectory(
            ctx.prior, DecisionRule("unsa"), ctx.A, ctx.A, ctx.noise, cfg.rounds
        )
        assert Counter(itl.chosen) == Counter(local_unsa.chosen)


class TestSafeBoExperiment:
    def test_smoke_run_and_rerun_identical(self, tmp_path):
        cfg = load_config(CONFIGS / "smoke_safebo.toml")
        res = run_safebo_experiment(cfg, output_dir=tmp_path / "a", workers=1)
        run_safebo_experiment(cfg, output_dir=tmp_path / "b", workers=3)
        assert _hash_outputs(tmp_path / "a") == _hash_outputs(tmp_path / "b")
        for method, rows in res.items():
            assert len(rows) == cfg.rounds * len(cfg.seeds)
            assert all(r[-1] in (False, True) for r in rows)

    def test_telemetry_header_and_columns(self, tmp_path):
        cfg = load_config(CONFIGS / "smoke_safebo.toml")
        run_safebo_experiment(cfg, output_dir=tmp_path)
        head = (tmp_path / "telemetry_itl.csv").read_text().splitlines()[0]
        assert head == (
            "seed,round,chosen,y_f,y_g0,safe_size,optimistic_size,"
            "maximizer_size,regret,violation"
        )


class TestTheoryRunner:
    def test_emits_capacity_and_excess(self, tmp_path):
        cfg = load_config(CONFIGS / "theory_excess.toml")
        out = run_theory(cfg, output_dir=tmp_path)
        assert (tmp_path / "capacity.csv").exists()
        assert (tmp_path / "excess.csv").exists()
        assert out["report"].ok
        cap_rows = (tmp_path / "capacity.csv").read_text().splitlines()
        assert len(cap_rows) == 1 + cfg.capacity_rounds


class TestRetrieve:
    def _write_sets(self, tmp_path, cand, targ):
        write_embeddings_binary(tmp_path / "c.bin", np.asarray(cand, dtype=np.float32))
        write_embeddings_binary(tmp_path / "t.bin", np.asarray(targ, dtype=np.float32))
        return tmp_path / "c.bin", tmp_path / "t.bin"

    def test_duplicated_target_picked_first_by_ctl(self, tmp_path):
        rng = np.random.default_rng(5)
        cand = rng.normal(size=(10, 4))
        targ = cand[[7]]  # the target is candidate 7 itself
        c, t = self._write_sets(tmp_path, cand, targ)
        rows = retrieve(c, t, rule="ctl", batch_size=1, rounds=1)
        assert rows[0][2] == 7

    def test_itl_batch_spans_at_least_as_many_clusters_as_cosine(self, tmp_path):
        rng = np.random.default_rng(6)
        centers = rng.normal(size=(3, 8)) * 3
        cand = np.vstack([c + 0.2 * rng.normal(size=(30, 8)) for c in centers])
        targ = np.vstack([c + 0.2 * rng.normal(size=(2, 8)) for c in centers])
        c, t = self._write_sets(tmp_path, cand, targ)
        itl_rows = retrieve(c, t, rule="itl", batch_size=6, rounds=1)
        cos_rows = retrieve(c, t, rule="cosine", batch_size=6, rounds=1)
        clusters = lambda rows: len(set(r[2] // 30 for r in rows))
        assert clusters(itl_rows) >= clusters(cos_rows)
        assert clusters(itl_rows) == 3

    def test_rules_agree_for_single_nonnegative_target(self, tmp_path):
        rng = np.random.default_rng(7)
        cand = np.abs(rng.normal(size=(12, 5)))
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        targ = np.abs(rng.normal(size=(1, 5)))
        targ /= np.linalg.norm(targ)
        c, t = self._write_sets(tmp_path, cand, targ)
        picks = {
            rule: retrieve(c, t, rule=rule, batch_size=1, rounds=1)[0][2]
            for rule in ("itl", "vtl", "ctl", "cosine")
        }
        assert len(set(picks.values())) == 1

    def test_rounds_condition_across_batches(self, tmp_path):
        rng = np.random.default_rng(8)
        cand = rng.normal(size=(20, 6))
        targ = rng.normal(size=(3, 6))
        c, t = self._write_sets(tmp_path, cand, targ)
        rows = retrieve(c, t, rule="vtl", batch_size=4, rounds=3)
        picked = [r[2] for r in rows]
        assert len(picked) == 12 and len(set(picked)) == 12

    def test_dimension_mismatch_rejected(self, tmp_path):
        c, _ = self._write_sets(tmp_path, np.zeros((3, 4)) + 1.0, np.ones((2, 4)))
        write_embeddings_binary(tmp_path / "t5.bin", np.ones((2, 5), dtype=np.float32))
        with pytest.raises(ValueError, match="dims differ"):
            retrieve(c, tmp_path / "t5.bin", rule="itl", batch_size=1, rounds=1)


class TestCli:
    def test_gp_exp_subcommand(self, tmp_path):
        rc = main(["gp-exp", str(CONFIGS / "smoke_gp.toml"), "--output", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "summary.csv").exists()

    def test_retrieve_subcommand(self, tmp_path):
        rng = np.random.default_rng(9)
        write_embeddings_binary(tmp_path / "c.bin", rng.normal(size=(8, 3)).astype(np.float32))
        write_embeddings_binary(tmp_path / "t.bin", rng.normal(size=(2, 3)).astype(np.float32))
        out = tmp_path / "sel.csv"
        rc = main([
            "retrieve", "--candidates", str(tmp_path / "c.bin"),
            "--targets", str(tmp_path / "t.bin"), "--rule", "itl",
            "--batch", "2", "--rounds", "1", "--output", str(out),
        ])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "round,position,candidate_row,id,score"
        assert len(lines) == 3

    def test_config_error_returns_nonzero(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("kind = 'gp'\n")
        assert main(["gp-exp", str(bad)]) == 2
