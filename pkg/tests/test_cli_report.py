"""Report emission, byte determinism, CLI entry points and exit codes."""

import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

from smccv.cli import execute_run, main
from smccv.config import parse_config_text
from smccv.report import emit_report, render_json

CONJ_RUN = """
[run]
seed = 5
particles = 120
threads = 1
estimator = "asmc"

[model]
kind = "conjugate"

[data.synthetic]
groups = 3
group_size = 4

[scheme]
kind = "lgo"

[kernel]
iterations = 1

[baseline]
iterations = 500
burn_in = 140
thin = 3
"""


def run_and_emit(text, out_dir, **overrides):
    from dataclasses import replace

    cfg = parse_config_text(text)
    if overrides:
        cfg = replace(cfg, **overrides)
    bundle = execute_run(cfg)
    return cfg, bundle, emit_report(bundle, out_dir)


class TestRenderJson:
    def test_seventeen_digit_floats(self):
        out = render_json({"x": 0.1})
        assert "0.1" in out
        assert render_json(1 / 3) == format(1 / 3, ".17g")

    def test_non_finite_as_strings(self):
        assert render_json(math.inf) == '"inf"'
        assert render_json(-math.inf) == '"-inf"'
        assert render_json(math.nan) == '"nan"'

    def test_valid_json_structure(self):
        doc = {"a": [1, 2.5, "x"], "b": {"c": None, "d": True}}
        parsed = json.loads(render_json(doc))
        assert parsed == {"a": [1, 2.5, "x"], "b": {"c": None, "d": True}}


class TestReportEmission:
    def test_byte_identical_reports_same_seed(self, tmp_path):
        _, _, paths1 = run_and_emit(CONJ_RUN, tmp_path / "a")
        _, _, paths2 = run_and_emit(CONJ_RUN, tmp_path / "b")
        assert paths1["report"].read_bytes() == paths2["report"].read_bytes()
        assert paths1["traces"].read_bytes() == paths2["traces"].read_bytes()

    def test_byte_identical_across_thread_counts(self, tmp_path, monkeypatch):
        # parallelism comes from the environment override so the config
        # (and its echo in the report) is literally identical
        outs = []
        for threads in (1, 4, 8):
            monkeypatch.setenv("SMCCV_THREADS", str(threads))
            _, _, paths = run_and_emit(CONJ_RUN, tmp_path / str(threads))
            outs.append(paths["report"].read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_different_seed_changes_report(self, tmp_path):
        _, _, a = run_and_emit(CONJ_RUN, tmp_path / "a")
        _, _, b = run_and_emit(CONJ_RUN, tmp_path / "b", seed=6)
        assert a["report"].read_bytes() != b["report"].read_bytes()

    def test_traces_row_count_is_steps_plus_baseline(self, tmp_path):
        _, bundle, paths = run_and_emit(CONJ_RUN, tmp_path / "t")
        lines = paths["traces"].read_text().strip().splitlines()
        folds = bundle.report["estimates"]["asmc"]["folds"]
        expected = sum(f["n_steps"] + 1 for f in folds)
        assert len(lines) - 1 == expected  # header excluded

    def test_config_echo_round_trips(self, tmp_path):
        cfg, bundle, _ = run_and_emit(CONJ_RUN, tmp_path / "echo")
        echoed = bundle.report["config"]["toml"]
        assert parse_config_text(echoed) == cfg

    def test_comparison_block_for_estimator_all(self, tmp_path):
        text = CONJ_RUN.replace('estimator = "asmc"', 'estimator = "all"')
        _, bundle, paths = run_and_emit(text, tmp_path / "all")
        report = json.loads(paths["report"].read_text())
        assert set(report["estimates"]) == {"asmc", "psis", "mcmc_refit"}
        comp = report["comparison"]
        assert comp["reference"] == "mcmc-refit"
        for row in comp["folds"]:
            assert set(row) >= {"abs_error_asmc", "abs_error_psis", "rel_error_asmc", "rel_error_psis"}

    def test_timings_in_sidecar_not_report(self, tmp_path):
        _, _, paths = run_and_emit(CONJ_RUN, tmp_path / "tm")
        report = paths["report"].read_text()
        assert "wall" not in report and "seconds" not in report
        timings = json.loads(paths["timings"].read_text())
        assert timings["total_seconds"] > 0

    def test_leo_traces_have_checkpoint_rows(self, tmp_path):
        text = """
[run]
seed = 5
particles = 100
[model]
kind = "dns"
[data.synthetic]
months = 5
[scheme]
kind = "leo"
t_min = 2
[kernel]
iterations = 2
[baseline]
iterations = 380
burn_in = 80
thin = 3
"""
        cfg, bundle, paths = run_and_emit(text, tmp_path / "leo")
        report = json.loads(paths["report"].read_text())
        checkpoints = report["estimates"]["asmc"]["folds"][0]["checkpoints"]
        assert [c for c, _ in checkpoints] == [1, 2, 3]
        rows = paths["traces"].read_text().strip().splitlines()[1:]
        flags = [r.split(",")[-1] for r in rows]
        assert flags.count("1") == 3


class TestCliCommands:
    def test_run_exit_zero(self, tmp_path, capsys):
        cfg_path = tmp_path / "run.toml"
        cfg_path.write_text(CONJ_RUN)
        code = main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "out")])
        assert code == 0
        assert (tmp_path / "out" / "report.json").exists()
        assert "aggregate log predictive" in capsys.readouterr().out

    def test_config_error_exit_one(self, tmp_path):
        cfg_path = tmp_path / "bad.toml"
        cfg_path.write_text(CONJ_RUN.replace("seed = 5", "seed = 5\ness_ratio = 2.0"))
        assert main(["run", "--config", str(cfg_path)]) == 1

    def test_data_error_exit_two(self, tmp_path):
        cfg_path = tmp_path / "run.toml"
        cfg_path.write_text(
            CONJ_RUN.replace("[data.synthetic]\ngroups = 3\ngroup_size = 4", "[data]\npath = \"missing.csv\"")
        )
        assert main(["run", "--config", str(cfg_path)]) == 2

    def test_synth_writes_csv(self, tmp_path):
        out = tmp_path / "synth.csv"
        code = main(
            ["synth", "--model", "conjugate", "--shape", "groups=3,group_size=4", "--out", str(out)]
        )
        assert code == 0
        header = out.read_text().splitlines()[0]
        assert header == "y,group"

    def test_synth_dns_shape(self, tmp_path):
        out = tmp_path / "dns.csv"
        assert main(["synth", "--model", "dns", "--shape", "months=4", "--out", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("date,y_tau2")
        assert len(lines) == 5

    def test_selftest_passes(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_thread_env_override(self, tmp_path, monkeypatch):
        cfg_path = tmp_path / "run.toml"
        cfg_path.write_text(CONJ_RUN)
        monkeypatch.setenv("SMCCV_THREADS", "2")
        assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 0
