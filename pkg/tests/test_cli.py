import json
import os

import numpy as np
import pytest

from locfuse.cli import main, parse_config
from locfuse.experiment import ConfigError


@pytest.fixture()
def tiny_config(tmp_path):
    doc = {
        "run": {"duration_s": 8.0, "burn_in_s": 2.0, "seed": 5,
                "monte_carlo_runs": 2},
        "filter": {"anchor_prior_sigma_m": 0.3},
        "layout": {"anchors": 4},
        "targets": {"count": 1},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return path


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestParseConfig:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "nope.json")

    def test_malformed_json_names_line(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"run": }')
        with pytest.raises(ConfigError, match="line"):
            parse_config(p)

    def test_unknown_key_diagnostic(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"measurements": {"sigma_toa_feet": 1}}))
        with pytest.raises(ConfigError, match="measurements.sigma_toa_feet"):
            parse_config(p)

    def test_parse_serialize_parse_identity(self, tiny_config):
        from locfuse.experiment import config_from_dict, config_to_dict
        cfg = parse_config(tiny_config)
        again = config_from_dict(config_to_dict(cfg))
        assert config_to_dict(again) == config_to_dict(cfg)


class TestCalibrate:
    def test_prints_expected_sigma(self, capsys):
        assert main(["calibrate", "--p", "0.95", "--bound", "0.2"]) == 0
        out = capsys.readouterr().out.strip()
        assert out == "0.10204"

    def test_angle_bound(self, capsys):
        assert main(["calibrate", "--p", "0.95", "--bound", "2"]) == 0
        assert capsys.readouterr().out.strip() == "1.0204"


class TestSimulate:
    def test_outputs_and_determinism(self, tiny_config, tmp_path):
        out1 = tmp_path / "o1"
        out2 = tmp_path / "o2"
        args = ["simulate", "--config", str(tiny_config), "--no-figures"]
        assert main(args + ["--out-dir", str(out1)]) == 0
        assert main(args + ["--out-dir", str(out2)]) == 0
        for name in ("summary.json", "cdf.csv", "trace.csv", "manifest.json"):
            assert (out1 / name).exists()
            assert read(out1 / name) == read(out2 / name)

    def test_manifest_rerun_byte_identical(self, tiny_config, tmp_path):
        out1 = tmp_path / "o1"
        out2 = tmp_path / "o2"
        assert main(["simulate", "--config", str(tiny_config),
                     "--out-dir", str(out1), "--no-figures"]) == 0
        assert main(["simulate", "--config", str(out1 / "manifest.json"),
                     "--out-dir", str(out2), "--no-figures"]) == 0
        for name in ("summary.json", "cdf.csv", "trace.csv"):
            assert read(out1 / name) == read(out2 / name)

    def test_seed_flag_beats_file(self, tiny_config, tmp_path):
        out1 = tmp_path / "o1"
        out2 = tmp_path / "o2"
        assert main(["simulate", "--config", str(tiny_config),
                     "--out-dir", str(out1), "--no-figures"]) == 0
        assert main(["simulate", "--config", str(tiny_config), "--seed", "99",
                     "--out-dir", str(out2), "--no-figures"]) == 0
        assert read(out1 / "trace.csv") != read(out2 / "trace.csv")
        manifest = json.loads((out2 / "manifest.json").read_text())
        assert manifest["seed"] == 99
        assert manifest["config"]["run"]["seed"] == 99

    def test_figures_rendered_by_default(self, tiny_config, tmp_path):
        out = tmp_path / "o"
        assert main(["simulate", "--config", str(tiny_config),
                     "--out-dir", str(out)]) == 0
        assert (out / "cdf.png").exists()
        assert (out / "trace.png").exists()

    def test_manifest_lists_outputs(self, tiny_config, tmp_path):
        out = tmp_path / "o"
        assert main(["simulate", "--config", str(tiny_config),
                     "--out-dir", str(out), "--no-figures"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest["outputs"]) == {"summary.json", "cdf.csv", "trace.csv"}
        assert manifest["command"] == "simulate"


class TestSweepCommand:
    def test_row_count_and_schema(self, tiny_config, tmp_path):
        out = tmp_path / "sw"
        assert main(["sweep", "--config", str(tiny_config),
                     "--out-dir", str(out), "--anchors", "2,3",
                     "--targets", "1,2", "--runs-per-cell", "1",
                     "--no-figures"]) == 0
        lines = (out / "sweep.csv").read_text().strip().splitlines()
        assert lines[0] == "anchors,targets,p_sub1m_3d,runs"
        assert len(lines) == 1 + 4

    def test_determinism(self, tiny_config, tmp_path):
        args = ["sweep", "--config", str(tiny_config), "--anchors", "2",
                "--targets", "1", "--runs-per-cell", "2", "--no-figures"]
        assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
        assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
        assert read(tmp_path / "a" / "sweep.csv") == read(tmp_path / "b" / "sweep.csv")


class TestGeometryCompare:
    def test_outputs(self, tiny_config, tmp_path):
        out = tmp_path / "gc"
        assert main(["geometry-compare", "--config", str(tiny_config),
                     "--out-dir", str(out), "--measurements", "toa",
                     "--runs", "2", "--no-figures"]) == 0
        lines = (out / "geometry_compare.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 2 * 3 * 3  # kinds x node classes x error classes
        assert (out / "summary.json").exists()


class TestMeasureBench:
    def test_outputs(self, tiny_config, tmp_path):
        out = tmp_path / "mb"
        assert main(["measure-bench", "--config", str(tiny_config),
                     "--out-dir", str(out), "--trials", "40",
                     "--no-figures"]) == 0
        rows = (out / "measure_bench.csv").read_text().strip().splitlines()
        assert rows[0] == "benchmark,metric,value"
        names = {line.split(",")[0] for line in rows[1:]}
        assert names == {"aoa_sweep", "ofdm_single_path", "ofdm_two_path"}


class TestErrorPath:
    def test_missing_config_exits_nonzero(self, tmp_path, capsys):
        rc = main(["simulate", "--config", str(tmp_path / "none.json"),
                   "--out-dir", str(tmp_path / "o"), "--no-figures"])
        assert rc == 2
        err = capsys.readouterr().err
        assert "LOCFUSE-ERROR" in err
        payload = json.loads(err.split("LOCFUSE-ERROR:", 1)[1])
        assert payload["type"] == "ConfigError"

    def test_partial_outputs_removed_on_failure(self, tmp_path, capsys, monkeypatch):
        # force a failure after some outputs exist by making the sweep axes bad
        doc = {"run": {"duration_s": 4.0, "burn_in_s": 1.0, "seed": 1,
                       "monte_carlo_runs": 1},
               "layout": {"anchors": 2}}
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(doc))
        out = tmp_path / "o"
        rc = main(["sweep", "--config", str(cfg), "--out-dir", str(out),
                   "--anchors", "1", "--targets", "1", "--runs-per-cell", "1",
                   "--no-figures"])
        assert rc == 2
        assert not (out / "sweep.csv").exists()
        assert not (out / "manifest.json").exists()
