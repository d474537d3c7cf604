import csv
import json

import numpy as np
import pytest

from covdesign import cli


def write_config(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def run(tmp_path, command, payload, out="out", extra=()):
    cfg = write_config(tmp_path / f"{command}.json", payload)
    out_dir = tmp_path / out
    rc = cli.main([command, "--config", cfg, "--out", str(out_dir), *extra])
    return rc, out_dir


class TestBound:
    def test_pixel_defaults(self, tmp_path):
        rc, out = run(tmp_path, "bound", {"model": "pixel", "bound": {}})
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        pos = np.array(report["bound_pixel_position"])
        assert np.allclose(np.diag(pos), 54.891, atol=0.01)
        spatial = np.array(report["bound_spatial_position"])
        assert np.allclose(np.diag(spatial), [2.703e-3, 4.862e-3], atol=1e-5)
        ideal = np.array(report["bound_pixel_idealized"])
        assert np.allclose(np.diag(ideal)[:2], 50.1998, atol=1e-3)

    def test_zero_process_noise_warns(self, tmp_path):
        payload = {"model": {"F": np.eye(4).tolist(),
                             "H": [[1, 0, 0, 0], [0, 1, 0, 0]],
                             "Q": np.zeros((4, 4)).tolist()},
                   "bound": {}}
        rc, out = run(tmp_path, "bound", payload)
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert any("stabilizability" in w or "zero-noise" in w
                   for w in report["warnings"])

    def test_missing_observation_matrix(self, tmp_path, capsys):
        payload = {"model": {"F": np.eye(4).tolist(),
                             "Q": np.eye(4).tolist()}, "bound": {}}
        rc, _ = run(tmp_path, "bound", payload)
        assert rc == 2
        assert "model.H" in capsys.readouterr().err


class TestUtility:
    def test_published_scenario(self, tmp_path):
        payload = {"model": "pixel",
                   "utility": {"target": {"position_scale": 1.5}, "W": 1.0}}
        rc, out = run(tmp_path, "utility", payload)
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        ups = np.array(report["upsilon_opt"])
        assert np.allclose(np.diag(ups), 0.660, rtol=0.05)
        R = np.array(report["R_opt"])
        assert np.allclose(np.diag(R), 1.515, rtol=0.05)

    def test_loose_target_is_cheap(self, tmp_path):
        payload = {"model": "pixel",
                   "utility": {"target": {"position_scale": 10.0}}}
        rc, out = run(tmp_path, "utility", payload)
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert np.trace(np.array(report["upsilon_opt"])) < 1.32

    def test_scale_one_is_marginal_or_warned(self, tmp_path):
        payload = {"model": "pixel",
                   "utility": {"target": {"position_scale": 1.0}}}
        rc, out = run(tmp_path, "utility", payload)
        assert rc in (0, 4)
        if rc == 0:
            report = json.loads((out / "report.json").read_text())
            assert report["warnings"] or \
                report["certificate"]["relaxation_eta"] > 0

    def test_below_bound_exits_infeasible(self, tmp_path, capsys):
        payload = {"model": "pixel",
                   "utility": {"target": {"position_scale": 0.5}}}
        rc, _ = run(tmp_path, "utility", payload)
        assert rc == 4
        assert "bound" in capsys.readouterr().err

    def test_trace_file_written(self, tmp_path):
        payload = {"model": "pixel",
                   "utility": {"target": {"position_scale": 1.5}}}
        rc, out = run(tmp_path, "utility", payload,
                      extra=("--trace", "sdp_trace.log"))
        assert rc == 0
        log = (out / "sdp_trace.log").read_text()
        assert "phase2" in log and "gap_bound" in log


class TestPrivacy:
    def test_published_reconstruction(self, tmp_path):
        payload = {"model": "pixel",
                   "privacy": {"sigma_prior": {"use": "noiseless_steady_state"},
                               "R_s": 0.0,
                               "sigma_d_next": {"position_diag": [54.891, 54.891]},
                               "W": 1.0}}
        rc, out = run(tmp_path, "privacy", payload)
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        rp = np.array(report["R_p_opt"])
        assert np.allclose(np.diag(rp), 1.0, atol=5e-3)
        achieved = np.array(report["achieved_sigma_next"])
        floor = np.array(report["sigma_d_next"])
        assert np.linalg.eigvalsh(achieved - floor)[0] >= -1e-6

    def test_zero_floor_zero_noise(self, tmp_path):
        payload = {"model": "pixel",
                   "privacy": {"sigma_prior": {"use": "noiseless_steady_state"},
                               "sigma_d_next": np.zeros((4, 4)).tolist()}}
        rc, out = run(tmp_path, "privacy", payload)
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert np.trace(np.array(report["R_p_opt"])) <= 1e-6

    def test_floor_above_open_loop_infeasible(self, tmp_path):
        payload = {"model": "pixel",
                   "privacy": {"sigma_prior": {"use": "noiseless_steady_state"},
                               "sigma_d_next": (1e4 * np.eye(4)).tolist()}}
        rc, _ = run(tmp_path, "privacy", payload)
        assert rc == 4


class TestSimulate:
    def test_csv_and_report(self, tmp_path):
        payload = {"model": "pixel",
                   "simulate": {"R": 1.515, "runs": 50, "seed": 42,
                                "frames": 120}}
        rc, out = run(tmp_path, "simulate", payload)
        assert rc == 0
        with (out / "mc.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["frame", "rmse", "emp_cov_11", "emp_cov_12",
                           "emp_cov_22", "filt_cov_11", "filt_cov_12",
                           "filt_cov_22"]
        assert len(rows) == 121
        report = json.loads((out / "report.json").read_text())
        assert report["runs"] == 50
        assert len(report["rmse_per_frame"]) == 120

    def test_seed_flag_overrides_config(self, tmp_path):
        payload = {"model": "pixel",
                   "simulate": {"R": 1.515, "runs": 5, "seed": 1, "frames": 40}}
        _, out1 = run(tmp_path, "simulate", payload, out="a",
                      extra=("--seed", "7"))
        _, out2 = run(tmp_path, "simulate", payload, out="b",
                      extra=("--seed", "7"))
        _, out3 = run(tmp_path, "simulate", payload, out="c")
        assert (out1 / "mc.csv").read_bytes() == (out2 / "mc.csv").read_bytes()
        assert (out1 / "mc.csv").read_bytes() != (out3 / "mc.csv").read_bytes()

    def test_waypoint_mode_shows_mismatch_peaks(self, tmp_path):
        payload = {"model": "pixel",
                   "simulate": {"R": 1.513, "runs": 60, "seed": 11,
                                "frames": 300, "waypoint_mode": True}}
        rc, out = run(tmp_path, "simulate", payload)
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        rmse = np.array(report["rmse_per_frame"])
        assert rmse[20:].max() >= 2.0 * np.median(rmse)

    def test_json_round_trip(self, tmp_path):
        payload = {"model": "pixel",
                   "simulate": {"R": 2.0, "runs": 5, "seed": 3, "frames": 30}}
        rc, out = run(tmp_path, "simulate", payload)
        assert rc == 0
        text = (out / "report.json").read_text()
        parsed = json.loads(text)
        assert json.dumps(cli._round9(parsed), indent=2, sort_keys=True) + "\n" == text


class TestDeterminism:
    def test_byte_identical_outputs(self, tmp_path):
        cases = {
            "bound": {"model": "pixel", "bound": {}},
            "utility": {"model": "pixel",
                        "utility": {"target": {"position_scale": 1.5}}},
            "privacy": {"model": "pixel",
                        "privacy": {"sigma_prior": {"use": "noiseless_steady_state"},
                                    "sigma_d_next": {"position_diag": [54.891, 54.891]}}},
            "simulate": {"model": "pixel",
                         "simulate": {"R": 1.515, "runs": 30, "seed": 5,
                                      "frames": 60}},
        }
        for command, payload in cases.items():
            _, out1 = run(tmp_path, command, payload, out=f"{command}_1")
            _, out2 = run(tmp_path, command, payload, out=f"{command}_2")
            assert (out1 / "report.json").read_bytes() == \
                (out2 / "report.json").read_bytes(), command
            if command == "simulate":
                assert (out1 / "mc.csv").read_bytes() == \
                    (out2 / "mc.csv").read_bytes()


def test_invalid_json_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    rc = cli.main(["bound", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "JSON" in capsys.readouterr().err
