import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from netspectra.cli import cli


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def config_path(tmp_path):
    cfg = {"M": 3, "S": 4, "theta": {"diag": 0.9, "next": 0.8}, "alpha": 1.0}
    path = tmp_path / "model.json"
    path.write_text(json.dumps(cfg))
    return str(path)


FAST_DENSITY = ["--grid", "41x41", "--nodes", "80", "--seed", "1"]


def run_density(runner, config_path, out, extra=()):
    return runner.invoke(cli, ["density", "--config", config_path,
                               "--out", str(out), *FAST_DENSITY, *extra])


class TestValidate:
    def test_cyclic_model_passes(self, runner, config_path):
        result = runner.invoke(cli, ["validate", "--config", config_path])
        assert result.exit_code == 0, result.output
        assert "PASS theta_cyclic_invariant" in result.output

    def test_two_block_fails_with_reason(self, runner, tmp_path):
        cfg = {"M": 2, "S": 4, "theta": [[0.5, 0.3], [0.1, 0.5]],
               "alpha": 1.0}
        path = tmp_path / "m.json"
        path.write_text(json.dumps(cfg))
        result = runner.invoke(cli, ["validate", "--config", str(path)])
        assert result.exit_code == 1
        assert "FAIL theta_cyclic_invariant" in result.output

    def test_non_normal_theta_fails(self, runner, tmp_path):
        cfg = {"M": 2, "S": 4, "theta": [[0.5, 0.3], [0.0, 0.5]],
               "alpha": 1.0}
        path = tmp_path / "m.json"
        path.write_text(json.dumps(cfg))
        result = runner.invoke(cli, ["validate", "--config", str(path)])
        assert result.exit_code == 1
        assert "FAIL theta_normal" in result.output

    def test_report_file(self, runner, config_path, tmp_path):
        out = tmp_path / "v"
        result = runner.invoke(cli, ["validate", "--config", config_path,
                                     "--out", str(out)])
        assert result.exit_code == 0
        report = json.loads((out / "validation.json").read_text())
        assert report["passed"] is True


class TestConfigErrors:
    def test_missing_config_exits_2(self, runner):
        result = runner.invoke(cli, ["density", "--config", "/nope.json"])
        assert result.exit_code == 2

    def test_malformed_json_exits_2(self, runner, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        result = runner.invoke(cli, ["density", "--config", str(path)])
        assert result.exit_code == 2

    def test_invalid_probability_exits_2(self, runner, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"M": 1, "S": 4, "theta": [[1.7]],
                                    "alpha": 1.0}))
        result = runner.invoke(cli, ["density", "--config", str(path)])
        assert result.exit_code == 2

    def test_bad_grid_exits_2(self, runner, config_path, tmp_path):
        result = run_density(runner, config_path, tmp_path / "o",
                             extra=["--grid", "banana"])
        assert result.exit_code == 2

    def test_unsupported_model_exits_2(self, runner, tmp_path):
        cfg = {"M": 2, "S": 4, "theta": [[0.5, 0.3], [0.1, 0.5]],
               "alpha": 1.0}
        path = tmp_path / "m.json"
        path.write_text(json.dumps(cfg))
        result = runner.invoke(cli, ["density", "--config", str(path)])
        assert result.exit_code == 2


class TestDensityCommand:
    def test_outputs(self, runner, config_path, tmp_path):
        out = tmp_path / "out"
        result = run_density(runner, config_path, out)
        assert result.exit_code == 0, result.output
        for name in ("density_scaled.csv", "density_scaled.json",
                     "density_iteration.csv", "density_iteration.json",
                     "density_scaled.png", "density_iteration.png",
                     "manifest.json"):
            assert (out / name).exists(), name
        meta = json.loads((out / "density_iteration.json").read_text())
        assert meta["scale"] == "iteration"
        assert 0.5 < meta["mass"] < 1.1

    def test_alpha_below_one_shifts_grid(self, runner, tmp_path):
        cfg = {"M": 3, "S": 4, "theta": {"diag": 0.9, "next": 0.8},
               "alpha": 0.5}
        path = tmp_path / "m.json"
        path.write_text(json.dumps(cfg))
        out = tmp_path / "o"
        result = run_density(runner, str(path), out)
        assert result.exit_code == 0, result.output
        scaled = json.loads((out / "density_scaled.json").read_text())
        iteration = json.loads((out / "density_iteration.json").read_text())
        want = 1.0 + 0.5 * (scaled["t_min"] - 1.0)
        assert abs(iteration["t_min"] - want) < 1e-12


class TestEmpiricalCommand:
    def test_outputs(self, runner, config_path, tmp_path):
        out = tmp_path / "emp"
        result = runner.invoke(cli, ["empirical", "--config", config_path,
                                     "--trials", "3", "--seed", "2",
                                     "--grid", "31x31", "--out", str(out)])
        assert result.exit_code == 0, result.output
        lines = (out / "empirical.csv").read_text().strip().split("\n")
        assert lines[0] == "t,s,density"
        assert len(lines) == 1 + 31 * 31


class TestDesignCommand:
    def test_consumes_density_output(self, runner, config_path, tmp_path):
        dens = tmp_path / "dens"
        assert run_density(runner, config_path, dens).exit_code == 0
        out = tmp_path / "design"
        result = runner.invoke(cli, [
            "design", "--density", str(dens / "density_iteration.csv"),
            "--degrees", "1,2", "--out", str(out)])
        assert result.exit_code == 0, result.output
        for d in (1, 2):
            meta = json.loads((out / f"filter_d{d}.json").read_text())
            assert meta["degree"] == d
            assert abs(sum(meta["coefficients"]) - 1.0) < 1e-9
            assert (out / f"response_d{d}.png").exists()

    def test_empty_region_exits_1(self, runner, config_path, tmp_path):
        dens = tmp_path / "dens"
        assert run_density(runner, config_path, dens).exit_code == 0
        result = runner.invoke(cli, [
            "design", "--density", str(dens / "density_iteration.csv"),
            "--degrees", "1", "--tau", "rel:2.0", "--out",
            str(tmp_path / "d")])
        assert result.exit_code == 1

    def test_missing_density_exits_2(self, runner, tmp_path):
        result = runner.invoke(cli, ["design", "--density",
                                     str(tmp_path / "nope.csv")])
        assert result.exit_code == 2


class TestSimulateCommand:
    def test_pipeline(self, runner, config_path, tmp_path):
        out = tmp_path / "sim"
        result = runner.invoke(cli, [
            "simulate", "--config", config_path, "--methods",
            "trivial,proposed,oracle", "--degrees", "1,2", "--trials", "4",
            "--seed", "3", *FAST_DENSITY, "--out", str(out)])
        assert result.exit_code == 0, result.output
        rates = (out / "rates.csv").read_text().strip().split("\n")
        assert rates[0] == "trial,method,degree,rate"
        assert len(rates) == 1 + 4 * 3 * 2
        summary = (out / "summary.csv").read_text().strip().split("\n")
        assert summary[0] == "method,degree,median,q25,q75,excluded_trials"
        assert (out / "rates.png").exists()

    def test_reuses_density_file(self, runner, config_path, tmp_path):
        dens = tmp_path / "dens"
        assert run_density(runner, config_path, dens).exit_code == 0
        out = tmp_path / "sim"
        result = runner.invoke(cli, [
            "simulate", "--config", config_path, "--methods", "proposed",
            "--degrees", "2", "--trials", "2", "--seed", "0",
            "--density", str(dens / "density_iteration.csv"),
            "--out", str(out)])
        assert result.exit_code == 0, result.output


class TestDeterminism:
    def _tree(self, root):
        return {p.name: p.read_bytes() for p in sorted(Path(root).iterdir())}

    def test_density_reruns_byte_identical(self, runner, config_path,
                                           tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_density(runner, config_path, a).exit_code == 0
        assert run_density(runner, config_path, b).exit_code == 0
        ta, tb = self._tree(a), self._tree(b)
        assert ta.keys() == tb.keys()
        for name in ta:
            assert ta[name] == tb[name], f"{name} differs between reruns"

    def test_simulate_reruns_byte_identical(self, runner, config_path,
                                            tmp_path):
        args = ["simulate", "--config", config_path, "--methods",
                "trivial,oracle", "--degrees", "1", "--trials", "3",
                "--seed", "11", "--no-figures"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert runner.invoke(cli, args + ["--out", str(a)]).exit_code == 0
        assert runner.invoke(cli, args + ["--out", str(b)]).exit_code == 0
        assert self._tree(a) == self._tree(b)


class TestWorkersEnv:
    def test_env_variable_used(self, runner, config_path, tmp_path,
                               monkeypatch):
        monkeypatch.setenv("NETSPECTRA_WORKERS", "2")
        out = tmp_path / "o"
        result = run_density(runner, config_path, out)
        assert result.exit_code == 0, result.output
        meta = json.loads((out / "manifest.json").read_text())
        assert meta["params"]["workers"] == 2

    def test_flag_wins_over_env(self, runner, config_path, tmp_path,
                                monkeypatch):
        monkeypatch.setenv("NETSPECTRA_WORKERS", "4")
        out = tmp_path / "o"
        result = run_density(runner, config_path, out,
                             extra=["--workers", "1"])
        assert result.exit_code == 0, result.output
        meta = json.loads((out / "manifest.json").read_text())
        assert meta["params"]["workers"] == 1
