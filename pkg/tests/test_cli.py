"""End-to-end tests for the command-line interface.

Each test drives ``ddinfer.cli.main`` with an argv list and inspects the JSON
report on stdout, the exit code, and any files written under ``--out``.
Numerical payloads are compared bitwise against the library calls the
subcommands wrap, since JSON serialization uses shortest round-trip decimals.
"""

import json
import os

import numpy as np
import pytest

from ddinfer.cli import main
from ddinfer.config import parse_config, parse_config_file, truss_from_config
from ddinfer.datasets import DatasetFile, parse_dataset
from ddinfer.geometry import Metric
from ddinfer.harness import qoi_displacement
from ddinfer.inference import (
    LocalQuadrature,
    expect_det_loading,
    expect_random_loading,
    qoi_coordinate,
)
from ddinfer.measures import (
    EmpiricalMeasure,
    ThermalizationParams,
    kl_divergence,
    thermalize_discrete,
)
from ddinfer.solver import dd_solve_exact
from ddinfer.truss import build_constraint_set, gaussian_truss_oracle, truss_metric


CHAIN_CFG = """
truss.nodes = 0,0; 1,0; 2,0; 3,0
truss.bars = 0-1; 1-2; 2-3
truss.moduli = 2.0, 1.0, 1.5
truss.areas = 1, 1, 1
truss.supports = 0:x; 0:y; 1:y; 2:y; 3:x; 3:y
truss.loads = 1:x:4.0; 2:x:2.0
truss.strain_offsets = 0.05, -0.1, 0.2
"""


@pytest.fixture(scope="module")
def chain_cfg(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "chain.cfg"
    path.write_text(CHAIN_CFG)
    return str(path)


@pytest.fixture(scope="module")
def chain_truss(chain_cfg):
    return truss_from_config(parse_config_file(chain_cfg))


@pytest.fixture(scope="module")
def material_csv(tmp_path_factory, chain_truss):
    rng = np.random.default_rng(3)
    n = 40
    strains = chain_truss.strain_offsets + 0.6 * rng.normal(size=(n, 3))
    stresses = chain_truss.moduli * strains + 0.3 * rng.normal(size=(n, 3))
    points = np.concatenate([strains, stresses], axis=1)
    weights = rng.uniform(0.5, 1.5, size=n)
    measure = EmpiricalMeasure.from_weights(points, weights)
    path = tmp_path_factory.mktemp("cli-data") / "material.csv"
    DatasetFile.from_measure(measure).write(path)
    return str(path)


@pytest.fixture(scope="module")
def paired_csv(tmp_path_factory):
    rng = np.random.default_rng(4)
    n = 30
    y = rng.normal(size=(n, 2))
    z = y + 0.3 * rng.normal(size=(n, 2))
    weights = np.ones(n)
    measure = EmpiricalMeasure.from_weights(y, weights, pair_points=z)
    path = tmp_path_factory.mktemp("cli-pairs") / "paired.csv"
    DatasetFile.from_measure(measure).write(path)
    return str(path)


def run_cli(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestValidateSchedule:
    def test_default_schedule_is_valid(self, capsys):
        code, out, err = run_cli(capsys, ["validate-schedule"])
        payload = json.loads(out)
        assert code == 0
        assert payload["valid"] is True
        assert payload["limit_estimate"] == 0.0
        assert err == ""

    def test_fast_quench_fails_with_message(self, capsys):
        code, out, err = run_cli(capsys, ["validate-schedule", "--exponent", "4"])
        payload = json.loads(out)
        assert code == 1
        assert payload["valid"] is False
        assert payload["limit_estimate"] == float("inf")
        assert "quench too fast" in err

    def test_short_horizon_is_a_domain_error(self, capsys):
        code, out, err = run_cli(capsys, ["validate-schedule", "--horizon", "2"])
        assert code == 1
        assert err.startswith("error:")
        assert "at least 3" in err

    def test_schedule_read_from_config_file(self, capsys, tmp_path):
        cfg = tmp_path / "fast.cfg"
        cfg.write_text("schedule.exponent = 4.0\nschedule.horizon = 6\n")
        code, out, err = run_cli(capsys, ["validate-schedule", "--config", str(cfg)])
        assert code == 1
        assert "quench too fast" in err

    def test_out_directory_receives_the_report(self, capsys, tmp_path):
        out_dir = tmp_path / "report"
        code, out, _ = run_cli(capsys, ["validate-schedule", "--out", str(out_dir)])
        assert code == 0
        assert (out_dir / "report.json").read_text() == out


class TestOracle:
    def test_payload_matches_library_oracle(self, capsys, chain_cfg, chain_truss):
        code, out, _ = run_cli(capsys, ["oracle", "truss", "--file", chain_cfg])
        payload = json.loads(out)
        assert code == 0
        oracle = gaussian_truss_oracle(chain_truss)
        np.testing.assert_array_equal(payload["mean_u"], oracle.mean_u)
        np.testing.assert_array_equal(payload["mean_v"], oracle.mean_v)
        np.testing.assert_array_equal(payload["stiffness"], np.atleast_2d(oracle.stiffness))
        assert payload["normalization"] == oracle.normalization
        assert payload["likelihood_mass"] == oracle.likelihood_mass

    def test_report_file_equals_stdout(self, capsys, chain_cfg, tmp_path):
        out_dir = tmp_path / "oracle"
        code, out, _ = run_cli(
            capsys, ["oracle", "truss", "--file", chain_cfg, "--out", str(out_dir)]
        )
        assert code == 0
        assert (out_dir / "report.json").read_text() == out

    def test_missing_file_is_a_domain_error(self, capsys, tmp_path):
        code, _, err = run_cli(
            capsys, ["oracle", "truss", "--file", str(tmp_path / "absent.cfg")]
        )
        assert code == 1
        assert err.startswith("error:")


class TestDdSolve:
    def test_payload_matches_library_solution(
        self, capsys, chain_cfg, chain_truss, material_csv
    ):
        code, out, _ = run_cli(
            capsys, ["dd-solve", "--truss", chain_cfg, "--data", material_csv]
        )
        payload = json.loads(out)
        assert code == 0
        metric = truss_metric(chain_truss)
        subspace = build_constraint_set(chain_truss)
        measure = parse_dataset(material_csv, expected_dim=metric.dim)
        solution = dd_solve_exact(measure.points, subspace, metric)
        np.testing.assert_array_equal(payload["material_state"], solution.y_star.values)
        np.testing.assert_array_equal(payload["admissible_state"], solution.z_star.values)
        assert payload["distance"] == solution.distance
        assert payload["index"] == solution.index

    def test_dimension_mismatch_is_a_domain_error(self, capsys, chain_cfg, paired_csv):
        code, _, err = run_cli(
            capsys, ["dd-solve", "--truss", chain_cfg, "--data", paired_csv]
        )
        assert code == 1
        assert "column mismatch" in err

    def test_out_directory_echoes_the_dataset(
        self, capsys, chain_cfg, material_csv, tmp_path
    ):
        out_dir = tmp_path / "solve"
        code, _, _ = run_cli(
            capsys,
            ["dd-solve", "--truss", chain_cfg, "--data", material_csv, "--out", str(out_dir)],
        )
        assert code == 0
        echoed = parse_dataset(out_dir / "data.csv")
        original = parse_dataset(material_csv)
        np.testing.assert_array_equal(echoed.points, original.points)
        np.testing.assert_array_equal(echoed.log_weights, original.log_weights)


class TestInfer:
    def test_deterministic_mode_matches_library(
        self, capsys, chain_cfg, chain_truss, material_csv
    ):
        code, out, err = run_cli(
            capsys,
            [
                "infer",
                "--mode",
                "deterministic",
                "--data",
                material_csv,
                "--beta",
                "0.5",
                "--truss",
                chain_cfg,
                "--qoi",
                "displacement:0",
            ],
        )
        payload = json.loads(out)
        metric = truss_metric(chain_truss)
        expected = expect_det_loading(
            parse_dataset(material_csv),
            build_constraint_set(chain_truss),
            qoi_displacement(chain_truss, 0),
            ThermalizationParams(beta=0.5, beta0=1.0),
            metric,
            LocalQuadrature(order=8),
        )
        assert payload["expectation"] == expected.expectation
        assert payload["effective_sample_size"] == expected.effective_sample_size
        assert payload["total_variation"] == expected.total_variation
        assert payload["degenerate"] is False
        assert code == 0

    def test_random_mode_matches_library(self, capsys, paired_csv):
        code, out, _ = run_cli(
            capsys,
            [
                "infer",
                "--mode",
                "random",
                "--data",
                paired_csv,
                "--beta",
                "3.0",
                "--qoi",
                "coordinate:1",
            ],
        )
        payload = json.loads(out)
        assert code == 0
        expected = expect_random_loading(
            parse_dataset(paired_csv),
            qoi_coordinate(1),
            ThermalizationParams(beta=3.0, beta0=1.0),
            Metric.euclidean(2),
        )
        assert payload["expectation"] == expected.expectation
        assert payload["effective_sample_size"] == expected.effective_sample_size
        assert payload["beta"] == 3.0

    def test_empty_dataset_reports_and_exits_one(self, capsys, chain_cfg, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("c,y_1,y_2,y_3,y_4,y_5,y_6\n")
        code, _, err = run_cli(
            capsys,
            [
                "infer",
                "--mode",
                "deterministic",
                "--data",
                str(empty),
                "--beta",
                "2.0",
                "--truss",
                chain_cfg,
            ],
        )
        assert code == 1
        assert "empty data set" in err

    def test_deterministic_mode_rejects_paired_data(self, capsys, chain_cfg, paired_csv):
        code, _, err = run_cli(
            capsys,
            [
                "infer",
                "--mode",
                "deterministic",
                "--data",
                paired_csv,
                "--beta",
                "2.0",
                "--truss",
                chain_cfg,
            ],
        )
        assert code == 1
        assert err.startswith("error:")

    def test_random_mode_rejects_material_only_data(self, capsys, material_csv):
        code, _, err = run_cli(
            capsys,
            ["infer", "--mode", "random", "--data", material_csv, "--beta", "2.0"],
        )
        assert code == 1
        assert "paired" in err

    def test_displacement_observable_requires_truss(self, capsys, paired_csv):
        code, _, err = run_cli(
            capsys,
            [
                "infer",
                "--mode",
                "random",
                "--data",
                paired_csv,
                "--beta",
                "2.0",
                "--qoi",
                "displacement:0",
            ],
        )
        assert code == 1
        assert "--truss" in err

    def test_unknown_observable_is_a_domain_error(self, capsys, paired_csv):
        code, _, err = run_cli(
            capsys,
            [
                "infer",
                "--mode",
                "random",
                "--data",
                paired_csv,
                "--beta",
                "2.0",
                "--qoi",
                "entropy:0",
            ],
        )
        assert code == 1
        assert "unknown quantity of interest" in err

    def test_degenerate_thermalization_exits_one(self, capsys, paired_csv):
        code, out, err = run_cli(
            capsys,
            ["infer", "--mode", "random", "--data", paired_csv, "--beta", "1e8"],
        )
        payload = json.loads(out)
        assert payload["degenerate"] is True
        assert code == 1
        assert "degenerate" in err


class TestKl:
    def test_identical_datasets_have_zero_divergence(self, capsys, material_csv):
        code, out, _ = run_cli(
            capsys, ["kl", "--data", material_csv, "--reference", material_csv]
        )
        payload = json.loads(out)
        assert code == 0
        assert payload["kl_divergence"] == 0.0

    def test_thermalized_reference_matches_library(self, capsys, paired_csv):
        code, out, _ = run_cli(
            capsys,
            ["kl", "--data", paired_csv, "--reference", paired_csv, "--beta", "4.0"],
        )
        payload = json.loads(out)
        assert code == 0
        assert payload["beta"] == 4.0
        mu = parse_dataset(paired_csv)
        tempered = thermalize_discrete(
            mu, ThermalizationParams(beta=4.0, beta0=1.0), Metric.euclidean(2)
        )
        assert payload["kl_divergence"] == kl_divergence(mu, tempered)

    def test_out_directory_echoes_both_datasets(
        self, capsys, material_csv, paired_csv, tmp_path
    ):
        out_dir = tmp_path / "kl"
        code, _, _ = run_cli(
            capsys,
            [
                "kl",
                "--data",
                material_csv,
                "--reference",
                material_csv,
                "--out",
                str(out_dir),
            ],
        )
        assert code == 0
        echo = (out_dir / "data.csv").read_text()
        assert (out_dir / "reference.csv").read_text() == echo
        assert DatasetFile.from_text(echo).to_text() == echo


class TestStudyCommand:
    def sliding_cfg(self, tmp_path):
        cfg = tmp_path / "sliding.cfg"
        cfg.write_text("schedule.horizon = 3\nstudy.box = 4.0\n")
        return str(cfg)

    def test_sliding_study_reports_and_writes_artifacts(self, capsys, tmp_path):
        out_dir = tmp_path / "run"
        code, out, _ = run_cli(
            capsys,
            ["study", "sliding", "--config", self.sliding_cfg(tmp_path), "--out", str(out_dir)],
        )
        payload = json.loads(out)
        assert code == 0
        assert payload["kind"] == "sliding"
        assert len(payload["levels"]) == 3
        assert payload["summary"]["reference"] == 2.0
        assert payload["config"]["sliding.theta"] == "1.5707963267948966"
        assert (out_dir / "report.json").read_text() == out
        assert (out_dir / "levels.csv").exists()
        assert (out_dir / "config.cfg").exists()

    def test_rerun_from_embedded_config_is_bit_identical(self, capsys, tmp_path):
        first = tmp_path / "first"
        second = tmp_path / "second"
        code, _, _ = run_cli(
            capsys,
            ["study", "sliding", "--config", self.sliding_cfg(tmp_path), "--out", str(first)],
        )
        assert code == 0
        code, _, _ = run_cli(
            capsys,
            ["study", "sliding", "--config", str(first / "config.cfg"), "--out", str(second)],
        )
        assert code == 0
        for name in ("report.json", "levels.csv", "config.cfg"):
            assert (second / name).read_bytes() == (first / name).read_bytes()

    def test_seed_flag_overrides_config(self, capsys, tmp_path):
        code, out, _ = run_cli(
            capsys,
            ["study", "sliding", "--config", self.sliding_cfg(tmp_path), "--seed", "5"],
        )
        payload = json.loads(out)
        assert code == 0
        assert payload["seed"] == 5
        assert payload["config"]["study.seed"] == "5"

    def test_environment_seed_beats_flag(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv("DDINFER_SEED", "9")
        code, out, _ = run_cli(
            capsys,
            ["study", "sliding", "--config", self.sliding_cfg(tmp_path), "--seed", "5"],
        )
        payload = json.loads(out)
        assert code == 0
        assert payload["seed"] == 9

    def test_truss_convergence_study_runs_from_config(self, capsys, chain_truss, tmp_path):
        cfg = tmp_path / "converge.cfg"
        cfg.write_text(CHAIN_CFG + "schedule.horizon = 3\n")
        code, out, _ = run_cli(capsys, ["study", "converge", "--config", str(cfg)])
        payload = json.loads(out)
        assert code == 0
        assert payload["kind"] == "converge"
        assert len(payload["levels"]) == 3
        oracle = gaussian_truss_oracle(chain_truss)
        assert payload["summary"]["reference"] == oracle.mean_u[0]
        assert payload["seed"] == 15

    def test_shifting_study_runs_from_config(self, capsys, tmp_path):
        cfg = tmp_path / "shift.cfg"
        cfg.write_text("schedule.horizon = 3\nstudy.box = 4.0\n")
        code, out, _ = run_cli(capsys, ["study", "shifting", "--config", str(cfg)])
        payload = json.loads(out)
        assert code == 0
        assert payload["kind"] == "shifting"
        assert payload["summary"]["verdict"] == "converging"

    def test_aligned_sliding_model_is_a_domain_error(self, capsys, tmp_path):
        cfg = tmp_path / "aligned.cfg"
        cfg.write_text("sliding.theta = 0.0\nschedule.horizon = 3\n")
        code, _, err = run_cli(capsys, ["study", "shifting", "--config", str(cfg)])
        assert code == 1
        assert err.startswith("error:")

    def test_missing_truss_keys_are_a_domain_error(self, capsys):
        code, _, err = run_cli(capsys, ["study", "converge"])
        assert code == 1
        assert "missing configuration key" in err


class TestUsageErrors:
    def test_no_arguments_is_a_usage_error(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main([])
        assert excinfo.value.code == 2

    def test_unknown_subcommand_is_a_usage_error(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["simulate"])
        assert excinfo.value.code == 2

    def test_unknown_flag_is_a_usage_error(self, capsys, chain_cfg):
        with pytest.raises(SystemExit) as excinfo:
            main(["oracle", "truss", "--file", chain_cfg, "--plot"])
        assert excinfo.value.code == 2

    def test_unknown_study_kind_is_a_usage_error(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["study", "anneal"])
        assert excinfo.value.code == 2
