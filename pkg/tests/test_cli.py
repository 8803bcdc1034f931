"""The command-line surface: files, determinism, exit codes."""

import csv
import json
import os
import types

import numpy as np
import pytest

from markovorder import MarkovModel, cli, sample_path
from markovorder.diagnostics import mc as mc_mod
from markovorder.model import write_model_file
from markovorder.rng import PHI64, derive_seed

TWO_STATE = MarkovModel([[0.7, 0.3], [0.2, 0.8]])
MASK = 0xFFFFFFFFFFFFFFFF


def make_config(tmp_path, out_name="out", extra="", model=TWO_STATE, n_grid="256 1024", reps=3):
    write_model_file(model, tmp_path / "chain.model")
    cfg = tmp_path / "exp.ini"
    cfg.write_text(
        "[model]\n"
        "file = chain.model\n"
        "[experiment]\n"
        f"n_grid = {n_grid}\n"
        f"replications = {reps}\n"
        "seed = 4242\n"
        f"out = {tmp_path / out_name}\n"
        "[penalty]\n"
        "spec = loglog C=5\n"
        "specs = loglog C=5, bic\n"
        "[cutoff]\n"
        "spec = sublog\n" + extra
    )
    return cfg


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def tree_bytes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in files:
            full = os.path.join(dirpath, name)
            out[os.path.relpath(full, root)] = open(full, "rb").read()
    return out


class TestSimulate:
    def test_writes_paths_and_manifest(self, tmp_path):
        cfg = make_config(tmp_path, reps=2, n_grid="64 100")
        assert cli.main(["simulate", "--config", str(cfg)]) == 0
        out = tmp_path / "out"
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["replications"] == 2 and manifest["n"] == 100
        first = (out / manifest["paths"][0]["file"]).read_text()
        symbols = first.splitlines()[-1].split(":")[1].split()
        assert len(symbols) == 100

    def test_manifest_seeds_follow_documented_derivation(self, tmp_path):
        cfg = make_config(tmp_path, reps=4, n_grid="64")
        cli.main(["simulate", "--config", str(cfg)])
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())

        def scramble_reference(i):
            z = ((i + 1) * PHI64) & MASK
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK
            z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK
            return (z ^ (z >> 31)) & MASK

        for entry in manifest["paths"]:
            assert entry["seed"] == 4242 ^ scramble_reference(entry["replication"])

    def test_path_files_match_library_sampler(self, tmp_path):
        cfg = make_config(tmp_path, reps=2, n_grid="80")
        cli.main(["simulate", "--config", str(cfg)])
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        for entry in manifest["paths"]:
            text = (tmp_path / "out" / entry["file"]).read_text()
            stored = np.array(text.splitlines()[-1].split(":")[1].split(), dtype=int)
            direct = sample_path(TWO_STATE, 80, entry["seed"]).symbols
            assert np.array_equal(stored, direct)


class TestEstimate:
    def test_constant_path_model_chooses_zero(self, tmp_path):
        model = MarkovModel([[1.0, 0.0], [1.0, 0.0]], initial=[1.0, 0.0])
        cfg = make_config(tmp_path, model=model, n_grid="64 256", reps=2)
        assert cli.main(["estimate", "--config", str(cfg)]) == 0
        rows = read_csv(tmp_path / "out" / "estimates.csv")
        assert rows[0] == list(cli.ESTIMATE_HEADER)
        assert all(row[4] == "0" for row in rows[1:])

    def test_uses_simulated_paths_when_present(self, tmp_path):
        cfg = make_config(tmp_path, n_grid="128 512", reps=2)
        cli.main(["simulate", "--config", str(cfg)])
        cli.main(["estimate", "--config", str(cfg)])
        inline_dir = tmp_path / "fresh"
        cli.main(["estimate", "--config", str(cfg), "--out", str(inline_dir)])
        a = read_csv(tmp_path / "out" / "estimates.csv")
        b = read_csv(inline_dir / "estimates.csv")
        assert a == b  # stored paths reproduce the inline sampling exactly

    def test_jobs_flag_keeps_output_identical(self, tmp_path):
        cfg = make_config(tmp_path, n_grid="128 512", reps=4)
        cli.main(["estimate", "--config", str(cfg), "--out", str(tmp_path / "a")])
        cli.main(["estimate", "--config", str(cfg), "--out", str(tmp_path / "b"), "--jobs", "2"])
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_reproduces_library_experiment(self, tmp_path):
        from markovorder import LogLogPenalty, SubLogCutoff, consistency_experiment

        cfg = make_config(tmp_path, n_grid="256 1024", reps=5)
        cli.main(["estimate", "--config", str(cfg)])
        rows = read_csv(tmp_path / "out" / "estimates.csv")[1:]
        result = consistency_experiment(
            TWO_STATE, LogLogPenalty(5.0), SubLogCutoff(), [256, 1024], 5, seed=4242
        )
        by_key = {(row.n, row.replication): row for row in result.rows}
        assert len(rows) == len(result.rows)
        for raw in rows:
            row = by_key[(int(raw[0]), int(raw[3]))]
            assert int(raw[4]) == row.chosen_order
            assert int(raw[7]) == row.seed
            assert float(raw[6]) == pytest.approx(row.lil_stat, rel=1e-11)
        recovery = read_csv(tmp_path / "out" / "recovery.csv")[1:]
        for raw, summary in zip(recovery, result.summary):
            assert int(raw[0]) == summary.n
            assert float(raw[4]) == pytest.approx(summary.recovery)


class TestSweep:
    def test_rows_match_single_estimates(self, tmp_path):
        cfg = make_config(tmp_path, n_grid="256", reps=1)
        cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "sw")])
        cli.main(["estimate", "--config", str(cfg), "--out", str(tmp_path / "est")])
        sweep_rows = read_csv(tmp_path / "sw" / "sweep.csv")[1:]
        est_rows = read_csv(tmp_path / "est" / "estimates.csv")[1:]
        loglog_rows = [r for r in sweep_rows if r[0].startswith("loglog")]
        # sweep rows are penalty-first; estimates are n-first
        assert [[r[1], r[0]] + r[2:] for r in loglog_rows] == est_rows

    def test_penalty_value_columns_ordered(self, tmp_path):
        cfg = make_config(tmp_path, n_grid="4096", reps=1)
        cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "sw")])
        rows = read_csv(tmp_path / "sw" / "sweep_scores.csv")[1:]
        by_key = {}
        for row in rows:
            by_key[(row[0].split("(")[0], int(row[3]))] = float(row[5])
        # at n = 4096, 5 log log n < 0.5 log n fails, so compare r >= 1 gaps:
        for r in (1, 2):
            assert by_key[("loglog", r)] < by_key[("bic", r)] or True
        # direct arithmetic claim on the stored values
        import math

        for r in (0, 1, 2):
            ll, bic = by_key[("loglog", r)], by_key[("bic", r)]
            expected = (5 * math.log(math.log(4096))) < (0.5 * math.log(4096))
            assert (ll < bic) == expected

    def test_needs_two_penalties(self, tmp_path):
        write_model_file(TWO_STATE, tmp_path / "chain.model")
        cfg = tmp_path / "exp.ini"
        cfg.write_text(
            "[model]\nfile = chain.model\n"
            "[experiment]\nn_grid = 256\nseed = 1\n"
            f"out = {tmp_path / 'out'}\n"
            "[penalty]\nspec = bic\n"
        )
        assert cli.main(["sweep", "--config", str(cfg)]) == 1

    def test_sorted_deterministic_rows(self, tmp_path):
        cfg = make_config(tmp_path, n_grid="256 1024 4096", reps=2)
        cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "sw")])
        rows = read_csv(tmp_path / "sw" / "sweep.csv")[1:]
        keys = [(r[0], int(r[3]), int(r[1])) for r in rows]
        # blocks ordered by (penalty as configured, replication), n rising inside
        penalty_rank = {"loglog(C=5)": 0, "bic": 1}
        ranked = [(penalty_rank[p], rep, n) for p, rep, n in keys]
        assert ranked == sorted(ranked)


VERIFY_EXTRA = (
    "[verify]\n"
    "checks = norm-bound bernstein\n"
    "instances = 10\n"
    "bernstein_replications = 10000\n"
    "bernstein_n = 64\n"
)


class TestVerify:
    def test_passes_and_writes_report(self, tmp_path):
        cfg = make_config(tmp_path, extra=VERIFY_EXTRA)
        assert cli.main(["verify", "--config", str(cfg)]) == 0
        report = json.loads((tmp_path / "out" / "verification.json").read_text())
        assert report["all_gating_passed"] is True
        names = {c["name"] for c in report["checks"]}
        assert names == {"norm-bound", "bernstein"}
        for check in report["checks"]:
            assert set(check) == {"name", "gating", "passed", "detail"}
        assert (tmp_path / "out" / "bernstein.csv").exists()

    def test_fault_injection_fails_gating_check(self, tmp_path, monkeypatch):
        def broken_mixture(candidate, truth, r):
            # the halving is "forgotten": rows sum to 2
            from markovorder.model import lift_kernel

            table = lift_kernel(candidate.kernel, truth.m, r) + lift_kernel(
                truth.kernel, truth.m, r
            )
            return types.SimpleNamespace(order=r, m=truth.m, table=table)

        monkeypatch.setattr(mc_mod, "mixture_kernel", broken_mixture)
        cfg = make_config(
            tmp_path,
            extra="[verify]\nchecks = norm-bound\ninstances = 10\n",
        )
        assert cli.main(["verify", "--config", str(cfg)]) == 1
        report = json.loads((tmp_path / "out" / "verification.json").read_text())
        assert report["all_gating_passed"] is False

    def test_empty_selection_rejected(self, tmp_path):
        cfg = make_config(tmp_path, extra="[verify]\nchecks =\n")
        assert cli.main(["verify", "--config", str(cfg)]) == 1

    def test_explicit_candidate_file(self, tmp_path):
        cand = MarkovModel([[0.5, 0.5], [0.4, 0.6]])
        write_model_file(cand, tmp_path / "cand.model")
        cfg = make_config(
            tmp_path,
            extra=(
                "[verify]\nchecks = bernstein\n"
                "bernstein_replications = 10000\nbernstein_n = 64\n"
                "candidate_file = cand.model\n"
            ),
        )
        assert cli.main(["verify", "--config", str(cfg)]) == 0

    def test_unknown_check_named_in_error(self, tmp_path, capsys):
        cfg = make_config(tmp_path, extra="[verify]\nchecks = lemmas\n")
        assert cli.main(["verify", "--config", str(cfg)]) == 1
        assert "verify.checks" in capsys.readouterr().err


class TestExitCodesAndDeterminism:
    def test_missing_config_is_io_failure(self, tmp_path):
        assert cli.main(["estimate", "--config", str(tmp_path / "nope.ini")]) == 2

    def test_missing_model_names_field(self, tmp_path, capsys):
        cfg = tmp_path / "exp.ini"
        cfg.write_text("[model]\nfile = ghost.model\n[experiment]\nn_grid = 64\n")
        assert cli.main(["estimate", "--config", str(cfg)]) == 1
        assert "model.file" in capsys.readouterr().err

    def test_bad_grid_names_field(self, tmp_path, capsys):
        write_model_file(TWO_STATE, tmp_path / "chain.model")
        cfg = tmp_path / "exp.ini"
        cfg.write_text("[model]\nfile = chain.model\n[experiment]\nn_grid = 64 32\n")
        assert cli.main(["estimate", "--config", str(cfg)]) == 1
        assert "n_grid" in capsys.readouterr().err

    @pytest.mark.parametrize("command", ["simulate", "estimate", "sweep", "verify"])
    def test_byte_identical_across_runs(self, tmp_path, command):
        extra = VERIFY_EXTRA if command == "verify" else ""
        cfg = make_config(tmp_path, n_grid="256 512", reps=2, extra=extra)
        cli.main([command, "--config", str(cfg), "--out", str(tmp_path / "r1")])
        cli.main([command, "--config", str(cfg), "--out", str(tmp_path / "r2")])
        assert tree_bytes(tmp_path / "r1") == tree_bytes(tmp_path / "r2")

    def test_seed_override_changes_outputs(self, tmp_path):
        cfg = make_config(tmp_path, n_grid="256", reps=1)
        cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "s1")])
        cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "s2"), "--seed", "7"])
        assert tree_bytes(tmp_path / "s1") != tree_bytes(tmp_path / "s2")
