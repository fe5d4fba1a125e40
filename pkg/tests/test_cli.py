import json
import os

import numpy as np
import pytest

from boundaryflow.cli import main


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def quick_config(tmp_path, **overrides):
    cfg = {
        "window": [0.0, 10.0],
        "sample_pairs": 64,
        "normals": 32,
        "horizon": 12.0,
        "depth": 2.0,
        "t0": -12.0,
        "times": [0.0],
        "trajectories": 8,
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


class TestStability:
    def test_constant_minus_identity(self, tmp_path):
        rc = main([
            "stability", "--system", "constant", "--matrix", "[[-1,0],[0,-1]]",
            "--config", quick_config(tmp_path), "--out", str(tmp_path),
        ])
        assert rc == 0
        cert = json.loads((tmp_path / "certificate.json").read_text())
        assert cert["K"] == pytest.approx(1.0, abs=0.02)
        assert cert["gamma"] == pytest.approx(1.0, abs=0.02)
        assert cert["margin"] == pytest.approx(1.0)

    def test_paper_example_window(self, tmp_path):
        rc = main([
            "stability", "--system", "paper-example", "--window", "-50:50",
            "--out", str(tmp_path),
        ])
        assert rc == 0
        cert = json.loads((tmp_path / "certificate.json").read_text())
        assert cert["gamma"] > 0.0
        assert cert["margin"] > 0.0

    def test_unstable_exits_2(self, tmp_path):
        rc = main([
            "stability", "--system", "constant", "--matrix", "[[1,0],[0,1]]",
            "--config", quick_config(tmp_path), "--out", str(tmp_path),
        ])
        assert rc == 2


class TestBoundary:
    def test_circle_file(self, tmp_path):
        rc = main([
            "boundary", "--system", "constant", "--matrix", "[[-1,0],[0,-1]]",
            "--config", quick_config(tmp_path, horizon=30.0), "--out", str(tmp_path),
        ])
        assert rc == 0
        data = np.loadtxt(tmp_path / "fibre_tau=0.csv", delimiter=",", skiprows=1)
        assert data.shape == (32, 6)
        radii = np.linalg.norm(data[:, 2:4], axis=1)
        assert np.abs(radii - 1.0).max() <= 1e-6

    def test_empty_times_is_config_error(self, tmp_path):
        rc = main([
            "boundary", "--system", "diagonal", "--matrix", "[-1,-2]",
            "--times", "", "--out", str(tmp_path),
        ])
        assert rc == 1

    def test_csv_round_trips_doubles(self, tmp_path):
        rc = main([
            "boundary", "--system", "diagonal", "--matrix", "[-1,-2]",
            "--config", quick_config(tmp_path), "--out", str(tmp_path),
        ])
        assert rc == 0
        rc = main([
            "boundary", "--system", "diagonal", "--matrix", "[-1,-2]",
            "--config", quick_config(tmp_path), "--out", str(tmp_path / "again"),
        ])
        assert rc == 0
        a = read_bytes(tmp_path / "fibre_tau=0.csv")
        b = read_bytes(tmp_path / "again" / "fibre_tau=0.csv")
        assert a == b

    def test_json_format(self, tmp_path):
        rc = main([
            "boundary", "--system", "diagonal", "--matrix", "[-1,-2]",
            "--format", "json", "--config", quick_config(tmp_path), "--out", str(tmp_path),
        ])
        assert rc == 0
        rows = json.loads((tmp_path / "fibre_tau=0.json").read_text())
        assert len(rows) == 32
        assert set(rows[0]) == {"index", "tau", "x1", "x2", "n1", "n2"}


class TestCloud:
    def test_single_noise_free_trajectory(self, tmp_path):
        rc = main([
            "cloud", "--system", "diagonal", "--matrix", "[-1,-2]", "--rho", "1e-12",
            "--trajectories", "1", "--t0", "0", "--times", "5",
            "--config", quick_config(tmp_path), "--out", str(tmp_path),
        ])
        assert rc == 0
        data = np.loadtxt(tmp_path / "cloud_t=5.csv", delimiter=",", skiprows=1)
        np.testing.assert_allclose(data[2:4], [0.0, 0.0], atol=1e-10)
        meta = json.loads((tmp_path / "cloud_meta.json").read_text())
        assert meta["trajectory_count"] == 1

    def test_seed_reproducibility(self, tmp_path):
        args = [
            "cloud", "--system", "diagonal", "--matrix", "[-1,-2]",
            "--seed", "7", "--config", quick_config(tmp_path),
        ]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        assert read_bytes(tmp_path / "a" / "cloud_t=0.csv") == read_bytes(
            tmp_path / "b" / "cloud_t=0.csv"
        )

    def test_integration_failure_exits_3(self, tmp_path):
        with np.errstate(over="ignore", invalid="ignore"):
            rc = main([
                "cloud", "--system", "constant", "--matrix", "[[5,0],[0,5]]",
                "--trajectories", "2", "--t0", "0", "--times", "150",
                "--out", str(tmp_path),
            ])
        assert rc == 3


class TestVerify:
    def test_closed_form_suite_passes(self, tmp_path):
        rc = main([
            "verify", "--system", "diagonal", "--matrix", "[-1,-2]",
            "--config", quick_config(tmp_path, normals=64, horizon=16.0),
            "--out", str(tmp_path),
        ])
        assert rc == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report and all(r["passed"] for r in report)

    def test_corrupted_fibre_fails_with_4(self, tmp_path):
        cfg = quick_config(tmp_path, normals=64, horizon=16.0)
        rc = main([
            "boundary", "--system", "diagonal", "--matrix", "[-1,-2]",
            "--config", cfg, "--out", str(tmp_path),
        ])
        assert rc == 0
        # translate every boundary point: breaks origin symmetry
        path = tmp_path / "fibre_tau=0.csv"
        lines = path.read_text().splitlines()
        rows = []
        for ln in lines[1:]:
            vals = ln.split(",")
            vals[2] = repr(float(vals[2]) + 0.05)
            rows.append(",".join(vals))
        path.write_text("\n".join([lines[0]] + rows) + "\n")
        rc = main([
            "verify", "--system", "diagonal", "--matrix", "[-1,-2]",
            "--config", cfg, "--out", str(tmp_path),
        ])
        assert rc == 4
        report = json.loads((tmp_path / "report.json").read_text())
        sym = [r for r in report if r["name"] == "symmetry"]
        assert any(not r["passed"] for r in sym)


class TestConfigHandling:
    def test_flags_override_config_file(self, tmp_path):
        cfg = quick_config(tmp_path, normals=16)
        rc = main([
            "boundary", "--system", "diagonal", "--matrix", "[-1,-2]",
            "--normals", "24", "--config", cfg, "--out", str(tmp_path),
        ])
        assert rc == 0
        data = np.loadtxt(tmp_path / "fibre_tau=0.csv", delimiter=",", skiprows=1)
        assert data.shape[0] == 24

    def test_unknown_config_key_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"no_such_knob": 1}))
        rc = main(["boundary", "--config", str(path), "--out", str(tmp_path)])
        assert rc == 1

    def test_custom_expression_matrix(self, tmp_path):
        rc = main([
            "boundary", "--system", "custom",
            "--matrix", '[["-2-sin(t)", "0"], ["0", "-3"]]',
            "--config", quick_config(tmp_path), "--out", str(tmp_path),
        ])
        assert rc == 0
        data = np.loadtxt(tmp_path / "fibre_tau=0.csv", delimiter=",", skiprows=1)
        assert data.shape == (32, 6)
        assert np.isfinite(data).all()
