"""Config parsing, CLI subcommands, exports, and byte-level determinism."""

import json
from pathlib import Path

import numpy as np
import pytest

from mzbohm import cli, runner
from mzbohm.errors import ConfigError
from mzbohm.scenario import ScenarioKind, parse_config

MINIMAL = """\
[run]
scenario = simple
seed = 42
"""

FULL = """\
[run]
scenario = ww
seed = 7
n = 24
workers = 1
oracle = false

[geometry]
sigma0 = 1.0
wavevector = 10.0
arm_length = 20.0

[tolerances]
tol_step = 1e-8
"""


def write(tmp_path, text, name="scenario.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestParseConfig:
    def test_minimal_gets_defaults(self, tmp_path):
        cfg, defaults = parse_config(write(tmp_path, MINIMAL))
        assert cfg.scenario is ScenarioKind.SIMPLE
        assert cfg.seed == 42
        assert cfg.n == 200 and "n" in defaults
        assert cfg.sigma0 == 1.0 and "sigma0" in defaults
        assert "seed" not in defaults and "scenario" not in defaults

    def test_full_file(self, tmp_path):
        cfg, defaults = parse_config(write(tmp_path, FULL))
        assert cfg.scenario is ScenarioKind.WW
        assert cfg.n == 24 and cfg.oracle is False
        assert "n" not in defaults

    def test_seed_required(self, tmp_path):
        with pytest.raises(ConfigError, match="seed"):
            parse_config(write(tmp_path, "[run]\nscenario = simple\n"))

    def test_negative_sigma_names_field(self, tmp_path):
        text = MINIMAL + "\n[geometry]\nsigma0 = -1.0\n"
        with pytest.raises(ConfigError, match="sigma0"):
            parse_config(write(tmp_path, text))

    def test_unknown_key_strict(self, tmp_path):
        text = MINIMAL + "\n[geometry]\nsigma = 1.0\n"
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(write(tmp_path, text))

    def test_unknown_section_strict(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config(write(tmp_path, MINIMAL + "\n[extras]\nfoo = 1\n"))

    def test_bad_value_diagnosed(self, tmp_path):
        with pytest.raises(ConfigError, match="bad value"):
            parse_config(write(tmp_path, "[run]\nscenario = simple\nseed = soon\n"))

    def test_overrides(self, tmp_path):
        cfg, _ = parse_config(
            write(tmp_path, MINIMAL),
            overrides={"seed": 9, "n": 10, "oracle": False},
        )
        assert (cfg.seed, cfg.n, cfg.oracle) == (9, 10, False)


def run_cli(args):
    return cli.main(args)


class TestRunCommand:
    def test_run_writes_artifacts_and_passes(self, tmp_path):
        cfg = write(tmp_path, MINIMAL)
        out = tmp_path / "out"
        rc = run_cli(["run", str(cfg), "--n", "16", "--no-oracle", "--out", str(out)])
        assert rc == 0
        assert (out / "manifest.json").exists()
        assert (out / "summary.json").exists()
        trajs = sorted((out / "trajectories").glob("traj_*.tsv"))
        assert len(trajs) == 16
        plots = {p.name for p in (out / "plots").glob("*.svg")}
        assert {"trajectories.svg", "sheets.svg"} <= plots
        summary = json.loads((out / "summary.json").read_text())
        assert all(c["passed"] for c in summary["checks"])
        manifest = json.loads((out / "manifest.json").read_text())
        assert "sigma0" in manifest["defaults_applied"]
        assert "workers" not in manifest["config"]

    def test_failed_check_gives_nonzero_exit(self, tmp_path):
        text = MINIMAL + "\n[geometry]\nunbalance_r = 1.1\n"
        cfg = write(tmp_path, text)
        rc = run_cli(["check", str(cfg), "--n", "8", "--no-oracle"])
        assert rc == 1

    def test_check_writes_nothing(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write(tmp_path, MINIMAL)
        rc = run_cli(["check", str(cfg), "--n", "8", "--no-oracle"])
        assert rc == 0
        assert not (tmp_path / "runs").exists()

    def test_config_error_exit_code(self, tmp_path):
        cfg = write(tmp_path, "[run]\nscenario = simple\n")
        assert run_cli(["run", str(cfg)]) == 2

    def test_out_root_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MZBOHM_OUT_ROOT", str(tmp_path / "root"))
        cfg = write(tmp_path, MINIMAL)
        rc = run_cli(["run", str(cfg), "--n", "4", "--no-oracle"])
        assert rc == 0
        assert (tmp_path / "root" / "runs" / "simple-seed42" / "manifest.json").exists()


def _tree(path: Path) -> dict:
    return {
        str(p.relative_to(path)): p.read_bytes()
        for p in sorted(path.rglob("*"))
        if p.is_file()
    }


class TestDeterminism:
    def test_reruns_and_worker_counts_byte_identical(self, tmp_path):
        cfg = write(tmp_path, MINIMAL)
        outs = []
        for i, workers in enumerate((1, 1, 2)):
            out = tmp_path / f"out{i}"
            rc = run_cli(
                ["run", str(cfg), "--n", "16", "--no-oracle", "--out", str(out),
                 "--workers", str(workers)]
            )
            assert rc == 0
            outs.append(_tree(out))
        assert outs[0] == outs[1]
        assert outs[0] == outs[2]

    def test_empty_ensemble_manifest_only(self, tmp_path):
        cfg = write(tmp_path, MINIMAL)
        out = tmp_path / "empty"
        rc = run_cli(["run", str(cfg), "--n", "0", "--no-oracle", "--out", str(out)])
        assert rc == 0
        assert (out / "manifest.json").exists()
        assert list((out / "trajectories").glob("*.tsv")) == []

    def test_trajectory_roundtrip(self, tmp_path):
        cfg = write(tmp_path, MINIMAL)
        out = tmp_path / "rt"
        run_cli(["run", str(cfg), "--n", "6", "--no-oracle", "--out", str(out)])
        for p in sorted((out / "trajectories").glob("traj_*.tsv")):
            tr = runner.read_trajectory_file(p)
            assert len(tr.times) > 10
            assert np.all(np.diff(tr.times) > 0)


class TestPlotCommand:
    def test_plot_regenerates_identical_svgs(self, tmp_path):
        cfg = write(tmp_path, MINIMAL)
        out = tmp_path / "plotrun"
        run_cli(["run", str(cfg), "--n", "12", "--no-oracle", "--out", str(out)])
        originals = {p.name: p.read_bytes() for p in (out / "plots").glob("*.svg")}
        rc = run_cli(["plot", str(out)])
        assert rc == 0
        for p in (out / "plots").glob("*.svg"):
            if p.name == "fringes.svg":
                continue
            assert p.read_bytes() == originals[p.name]

    def test_plot_requires_manifest(self, tmp_path):
        assert run_cli(["plot", str(tmp_path)]) == 2
