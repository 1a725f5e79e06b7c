"""Command-line surface: verbs, report files, determinism, exit codes."""

import csv
import json
import sys

import numpy as np
import pytest

from regcert.cli import main
from regcert.config import config_from_dict, load_config
from regcert.errors import ConfigError

BASE_CFG = {
    "grid": {"min": -1, "max": 5},
    "sigma": 0.23, "n": 500, "target_p": 0.8, "alpha": 0.001,
    "eps_y": 6.0, "bounds": {"lower": 0.0, "upper": 35.0},
    "mode": "base", "seed": 11,
    "validation": {"trials": 20, "directions": 4},
}


def _write_cfg(tmp_path, overrides=None, name="cfg.json"):
    cfg = dict(BASE_CFG)
    cfg.update(overrides or {})
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_grid_expands_to_interior_integers(self):
        cfg = config_from_dict(dict(BASE_CFG))
        assert cfg.points.shape == (25, 2)
        assert cfg.points.min() == 0.0 and cfg.points.max() == 4.0

    def test_unknown_field_named(self, tmp_path):
        path = _write_cfg(tmp_path, {"sigmaa": 1.0})
        with pytest.raises(ConfigError, match="sigmaa"):
            load_config(path)

    def test_bad_target_p_named(self, tmp_path):
        path = _write_cfg(tmp_path, {"target_p": 1.5})
        with pytest.raises(ConfigError, match="target_p"):
            load_config(path)

    def test_points_and_grid_conflict(self):
        with pytest.raises(ConfigError, match="points or grid"):
            config_from_dict({**BASE_CFG, "points": [[0, 0]]})

    def test_defaults_mirror_synthetic_experiment(self):
        cfg = config_from_dict({})
        assert (cfg.sigma, cfg.n, cfg.target_p) == (0.23, 10000, 0.8)
        assert cfg.eps_y[0] == 6.0 and cfg.tau == 0.0
        assert cfg.bounds.lower[0] == 0.0 and cfg.bounds.upper[0] == 35.0

    def test_not_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("sigma = 0.23")
        with pytest.raises(ConfigError, match="JSON"):
            load_config(str(path))


class TestCertifyCommand:
    def test_writes_reports(self, tmp_path, capsys):
        cfg = _write_cfg(tmp_path)
        out = tmp_path / "run"
        assert main(["certify", "--config", cfg, "--out", str(out)]) == 0
        rows = _read_rows(out / "certificates.csv")
        assert len(rows) == 25
        assert (out / "certificates.json").exists()
        assert (out / "certificates_radius.png").exists()
        with open(out / "certificates.json") as fh:
            jrows = json.load(fh)
        for r_csv, r_json in zip(rows, jrows):
            if r_csv["radius"] == "ABSTAIN":
                assert r_json["radius"] == "ABSTAIN"
            else:
                assert float(r_csv["radius"]) == r_json["radius"]

    def test_deterministic_across_runs_and_workers(self, tmp_path):
        cfg = _write_cfg(tmp_path)
        outs = []
        for name, workers in (("a", "1"), ("b", "1"), ("c", "3")):
            out = tmp_path / name
            assert main(["certify", "--config", cfg, "--out", str(out),
                         "--workers", workers, "--no-figures"]) == 0
            outs.append((out / "certificates.csv").read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_seed_changes_output(self, tmp_path):
        cfg = _write_cfg(tmp_path)
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        main(["certify", "--config", cfg, "--out", str(out1), "--no-figures"])
        main(["certify", "--config", cfg, "--out", str(out2), "--seed", "999",
              "--no-figures"])
        assert (out1 / "certificates.csv").read_bytes() != \
            (out2 / "certificates.csv").read_bytes()

    def test_all_abstain_when_target_unreachable(self, tmp_path):
        # With n = 100 the acceptance lower bound cannot exceed
        # (alpha/2)^(1/100) ~= 0.96, so P = 0.995 abstains everywhere.
        cfg = _write_cfg(tmp_path, {"n": 100, "target_p": 0.995, "alpha": 0.05,
                                    "points": [[1.0, 1.0], [2.0, 2.0]]})
        del_grid = json.loads(open(cfg).read())
        del del_grid["grid"]
        open(cfg, "w").write(json.dumps(del_grid))
        out = tmp_path / "run"
        assert main(["certify", "--config", cfg, "--out", str(out),
                     "--no-figures"]) == 0
        rows = _read_rows(out / "certificates.csv")
        assert all(r["radius"] == "ABSTAIN" for r in rows)

    def test_missing_model_command_fails_loudly(self, tmp_path, capsys):
        cfg = _write_cfg(tmp_path, {
            "model": {"kind": "subprocess", "input_dim": 2, "output_dim": 1,
                      "command": ["/no/such/model"]}})
        assert main(["certify", "--config", cfg, "--out", str(tmp_path / "x"),
                     "--no-figures"]) == 1
        assert "failed to start" in capsys.readouterr().err

    def test_mode_flag_overrides(self, tmp_path):
        cfg = _write_cfg(tmp_path, {"eps_y": 2.0, "sigma": 0.05, "beta": 1.5,
                                    "points": [[1.0, 1.0]], "grid": None})
        raw = json.loads(open(cfg).read())
        del raw["grid"]
        open(cfg, "w").write(json.dumps(raw))
        out = tmp_path / "run"
        assert main(["certify", "--config", cfg, "--out", str(out),
                     "--mode", "smoothed-discounted", "--no-figures"]) == 0
        rows = _read_rows(out / "certificates.csv")
        assert rows[0]["mode"] == "smoothed-discounted"
        assert rows[0]["phat"] != ""


class TestValidateCommand:
    @pytest.fixture()
    def certified(self, tmp_path):
        cfg = _write_cfg(tmp_path)
        out = tmp_path / "run"
        main(["certify", "--config", cfg, "--out", str(out), "--no-figures"])
        return cfg, out

    def test_all_pass(self, tmp_path, certified):
        cfg, out = certified
        code = main(["validate", "--config", cfg, "--out", str(out),
                     "--certificates", str(out / "certificates.csv"),
                     "--no-figures"])
        assert code == 0
        rows = _read_rows(out / "validation.csv")
        assert rows and all(r["passed"] == "1" for r in rows)

    def test_tampered_radius_fails(self, tmp_path, certified):
        cfg, out = certified
        with open(out / "certificates.json") as fh:
            rows = json.load(fh)
        for row in rows:
            if row["radius"] != "ABSTAIN":
                row["radius"] = row["radius"] * 10.0
        tampered = tmp_path / "tampered.json"
        tampered.write_text(json.dumps(rows))
        code = main(["validate", "--config", cfg, "--out", str(tmp_path / "v"),
                     "--certificates", str(tampered), "--no-figures"])
        assert code == 1

    def test_mismatched_config_refused(self, tmp_path, certified):
        cfg, out = certified
        other = _write_cfg(tmp_path, {"sigma": 0.5}, name="other.json")
        code = main(["validate", "--config", other, "--out", str(tmp_path / "v"),
                     "--certificates", str(out / "certificates.csv"),
                     "--no-figures"])
        assert code == 2

    def test_empty_certificates_refused(self, tmp_path, certified):
        cfg, out = certified
        empty = tmp_path / "empty.json"
        empty.write_text("[]")
        code = main(["validate", "--config", cfg, "--out", str(tmp_path / "v"),
                     "--certificates", str(empty), "--no-figures"])
        assert code == 2

    def test_validation_deterministic(self, tmp_path, certified):
        cfg, out = certified
        outs = []
        for name in ("v1", "v2"):
            vout = tmp_path / name
            main(["validate", "--config", cfg, "--out", str(vout),
                  "--certificates", str(out / "certificates.csv"), "--no-figures"])
            outs.append((vout / "validation.csv").read_bytes())
        assert outs[0] == outs[1]
        assert (tmp_path / "v1" / "validation.json").exists()

    def test_validate_discounted_certificates_against_their_region(self, tmp_path):
        # Discounted-mode rows must be re-checked against the widened region
        # they actually certify, and the smoothed average lives deep inside
        # it, so the run passes.
        cfg = _write_cfg(tmp_path, {"eps_y": 2.0, "sigma": 0.05, "beta": 1.5,
                                    "n": 500, "mode": "smoothed-discounted",
                                    "points": [[1.0, 1.0], [3.0, 2.0]], "grid": None,
                                    "validation": {"trials": 5, "directions": 2}})
        out = tmp_path / "run"
        assert main(["certify", "--config", cfg, "--out", str(out),
                     "--no-figures"]) == 0
        assert main(["validate", "--config", cfg, "--out", str(out),
                     "--certificates", str(out / "certificates.csv"),
                     "--no-figures"]) == 0
        rows = _read_rows(out / "validation.csv")
        assert all(r["passed"] == "1" for r in rows)

    def test_error_curves_when_grid_configured(self, tmp_path):
        cfg = _write_cfg(tmp_path, {
            "points": [[1.0, 1.0]], "n": 200,
            "validation": {"trials": 5, "directions": 3,
                           "radius_grid": [0.0, 0.01, 1.0], "penalty_k": 150.0}})
        raw = json.loads(open(cfg).read())
        del raw["grid"]
        open(cfg, "w").write(json.dumps(raw))
        out = tmp_path / "run"
        main(["certify", "--config", cfg, "--out", str(out), "--no-figures"])
        main(["validate", "--config", cfg, "--out", str(out),
              "--certificates", str(out / "certificates.csv")])
        curves = _read_rows(out / "error_curves.csv")
        assert [float(r["radius"]) for r in curves] == [0.0, 0.01, 1.0]
        # Probe radius 1.0 far exceeds any certificate here: +K applies.
        assert float(curves[-1]["mean_error"]) > 100.0
        assert (out / "validation_error_curves.png").exists()
        assert (out / "validation_frequencies.png").exists()


class TestProvenance:
    def test_radius_reproducible_from_row_alone(self, tmp_path):
        # Any emitted radius must be recomputable from its own row: the row
        # carries x, the region, every certificate parameter, and the
        # per-point stream seed.
        cfg = _write_cfg(tmp_path, {"n": 400})
        out = tmp_path / "run"
        main(["certify", "--config", cfg, "--out", str(out), "--no-figures"])
        with open(out / "certificates.json") as fh:
            rows = json.load(fh)
        from regcert.certify import CertRequest, certify_point
        from regcert.estimation import ConfidenceSpec
        from regcert.models import ModelSpec, OutputBounds
        from regcert.region import AcceptRegion
        from regcert.sampling import NoiseConfig
        spec = ModelSpec(kind="synthetic-sine", input_dim=2, output_dim=1)
        for row in rows[::5]:
            req = CertRequest(
                x=np.array(row["x"]),
                region=AcceptRegion(y=np.array(row["y_ref"]),
                                    eps_y=np.array(row["eps_y"])),
                noise=NoiseConfig(row["sigma"], row["n"], row["point_seed"]),
                target_p=row["target_p"], conf=ConfidenceSpec(row["alpha"]),
                bounds=OutputBounds(row["bounds_lower"], row["bounds_upper"]),
                tau=row["tau"], beta=row["beta"], mode=row["mode"])
            cert = certify_point(spec, req)
            if row["radius"] == "ABSTAIN":
                assert cert.abstain
            else:
                assert cert.radius == row["radius"]


class TestSweepCommand:
    def test_p_sweep_monotone_single_point(self, tmp_path):
        cfg = _write_cfg(tmp_path, {"points": [[4.0, 2.0]], "n": 2000})
        raw = json.loads(open(cfg).read())
        del raw["grid"]
        open(cfg, "w").write(json.dumps(raw))
        out = tmp_path / "run"
        assert main(["sweep", "--config", cfg, "--out", str(out),
                     "--parameter", "P", "--values", "0.5,0.6,0.7,0.8,0.9,0.95",
                     "--no-figures"]) == 0
        rows = _read_rows(out / "sweep.csv")
        radii = [float(r["radius_min"]) for r in rows]
        assert all(r2 <= r1 for r1, r2 in zip(radii, radii[1:]))
        assert radii[-1] < radii[0]

    def test_beta_sweep_bound_non_decreasing(self, tmp_path):
        cfg = _write_cfg(tmp_path, {"points": [[1.0, 1.0]], "eps_y": 2.0,
                                    "sigma": 0.05, "n": 1000,
                                    "mode": "smoothed-discounted"})
        raw = json.loads(open(cfg).read())
        del raw["grid"]
        open(cfg, "w").write(json.dumps(raw))
        out = tmp_path / "run"
        assert main(["sweep", "--config", cfg, "--out", str(out),
                     "--parameter", "beta", "--values", "0,0.5,1,1.5,2",
                     "--no-figures"]) == 0
        rows = _read_rows(out / "sweep.csv")
        bounds = [float(r["bound_min"]) for r in rows]
        assert all(b2 >= b1 for b1, b2 in zip(bounds, bounds[1:]))

    def test_sigma_sweep_direction(self, tmp_path):
        # At a gently varying point the acceptance stays ~1 for every probed
        # sigma, so the radius tracks the linear sigma factor (direction-only
        # check: pa is re-estimated per sigma).
        cfg = _write_cfg(tmp_path, {"points": [[4.0, 2.0]], "n": 1000, "grid": None})
        out = tmp_path / "run"
        assert main(["sweep", "--config", cfg, "--out", str(out),
                     "--parameter", "sigma", "--values", "0.05,0.1,0.2",
                     "--no-figures"]) == 0
        rows = _read_rows(out / "sweep.csv")
        radii = [float(r["radius_min"]) for r in rows]
        assert radii[0] < radii[1] < radii[2]

    def test_unknown_parameter(self, tmp_path, capsys):
        cfg = _write_cfg(tmp_path)
        assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "x"),
                     "--parameter", "gamma", "--values", "1,2",
                     "--no-figures"]) == 1
        assert "gamma" in capsys.readouterr().err


class TestOneShotVerbs:
    def test_prob_bounded(self, capsys):
        assert main(["prob", "--kind", "bounded", "--fx", "15", "--lb", "9",
                     "--ub", "21", "--lower", "0", "--upper", "35",
                     "--n", "10", "--p", "0.9"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["a"] == [7] and out["b"] == [4]
        assert out["bound"] == pytest.approx(0.9872048016, abs=1e-10)

    def test_prob_discounted(self, capsys):
        assert main(["prob", "--kind", "discounted", "--fx", "15", "--lb", "9",
                     "--ub", "21", "--lower", "0", "--upper", "35",
                     "--n", "10", "--p", "0.9", "--beta", "1.5"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["bound"] == pytest.approx(0.9999987516, abs=1e-9)

    def test_prob_asymptotic(self, capsys):
        assert main(["prob", "--kind", "asymptotic", "--mean", "0", "--cov", "1",
                     "--lb", "-0.2", "--ub", "0.2", "--n", "100"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["value"] == pytest.approx(0.9544997361036416, abs=1e-12)

    def test_cp_bound(self, capsys):
        assert main(["cp-bound", "--successes", "10", "--trials", "10",
                     "--alpha", "0.05"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["lower_bound"] == pytest.approx(0.025 ** 0.1, abs=1e-9)

    def test_prob_geometry_error(self, capsys):
        # beta pushing the discounted region outside the hard bounds is a
        # domain error reported on stderr.
        assert main(["prob", "--kind", "discounted", "--fx", "15", "--lb", "9",
                     "--ub", "21", "--lower", "0", "--upper", "35",
                     "--n", "10", "--p", "0.9", "--beta", "3.0"]) == 1
        assert "output 0" in capsys.readouterr().err


class TestSubprocessEndToEnd:
    def test_certify_with_mock_model(self, tmp_path):
        cfg_dict = {
            "model": {"kind": "subprocess", "input_dim": 2, "output_dim": 3,
                      "command": [sys.executable, "-m", "regcert.mockmodel",
                                  "--kind", "bounded3"]},
            "points": [[0.3, 1.0], [0.8, 1.5]],
            "sigma": 0.1, "n": 200, "target_p": 0.8, "alpha": 0.05,
            "eps_y": 4.0, "bounds": {"lower": 0.0, "upper": 35.0},
            "mode": "smoothed-discounted", "beta": 1.5, "seed": 3,
        }
        cfg = tmp_path / "sub.json"
        cfg.write_text(json.dumps(cfg_dict))
        out = tmp_path / "run"
        assert main(["certify", "--config", str(cfg), "--out", str(out),
                     "--no-figures"]) == 0
        rows = _read_rows(out / "certificates.csv")
        assert len(rows) == 2
        assert all(r["radius"] != "ABSTAIN" and float(r["radius"]) > 0 for r in rows)
