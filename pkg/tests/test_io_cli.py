import json
import os

import numpy as np
import pytest

from fjlab.cli import run
from fjlab.config import load_config
from fjlab.dynamics import simulate
from fjlab.errors import (
    ConfigError,
    InvariantViolation,
    ParseError,
    SchemaVersionUnsupported,
)
from fjlab.io import (
    atomic_write_json,
    format_cell,
    load_trajectories,
    params_from_dict,
    params_to_dict,
    save_trajectories,
    write_csv,
)
from fjlab.model import FJParameters


def sample_params(n=3):
    rng = np.random.default_rng(0)
    w = rng.uniform(0.1, 1.0, (n, n))
    np.fill_diagonal(w, 0.0)
    w /= w.sum(axis=1, keepdims=True)
    return FJParameters(
        gamma=rng.uniform(0.2, 0.8, n),
        alpha=rng.uniform(0.2, 0.8, n),
        w=w,
        mask=FJParameters.complete_mask(n),
    )


def sample_trajs(count=2, rounds=3):
    params = sample_params()
    rng = np.random.default_rng(1)
    out = []
    for k in range(count):
        innate = rng.dirichlet(np.ones(4), size=3)
        out.append(
            simulate(
                params,
                innate,
                rounds,
                sample_id=f"s{k}",
                correct_label=int(rng.integers(4)),
                metadata={"pool": "0", "label_names": json.dumps(["a", "b", "c", "d"])},
            )
        )
    return out


class TestTrajectoryFiles:
    def test_round_trip(self, tmp_path):
        path = str(tmp_path / "t.json")
        trajs = sample_trajs()
        save_trajectories(path, trajs)
        back = load_trajectories(path)
        assert len(back) == len(trajs)
        for orig, loaded in zip(trajs, back):
            assert loaded.sample_id == orig.sample_id
            assert loaded.correct_label == orig.correct_label
            np.testing.assert_allclose(loaded.snapshots, orig.snapshots, atol=1e-15)
            assert loaded.metadata["pool"] == "0"
            assert json.loads(loaded.metadata["label_names"]) == ["a", "b", "c", "d"]

    def test_bad_json_and_schema(self, tmp_path):
        path = str(tmp_path / "bad.json")
        with open(path, "w") as fh:
            fh.write("{not json")
        with pytest.raises(ParseError):
            load_trajectories(path)
        atomic_write_json(path, {"schema_version": "9", "samples": []})
        with pytest.raises(SchemaVersionUnsupported):
            load_trajectories(path)
        atomic_write_json(path, {"samples": []})
        with pytest.raises(ParseError):
            load_trajectories(path)

    def _write_one(self, path, rounds, **overrides):
        sample = {
            "sample_id": "x",
            "n": 2,
            "d": 2,
            "rounds": rounds,
            "correct_label": 0,
            "metadata": {},
        }
        sample.update(overrides)
        atomic_write_json(path, {"schema_version": "1", "samples": [sample]})

    def test_ingest_locates_bad_cell(self, tmp_path):
        path = str(tmp_path / "neg.json")
        self._write_one(path, [[[0.5, 0.5], [1.2, -0.2]]])
        with pytest.raises(InvariantViolation) as err:
            load_trajectories(path)
        msg = str(err.value)
        assert "sample 'x'" in msg and "round 0" in msg and "agent 1" in msg

    def test_ingest_rejects_bad_row_sum(self, tmp_path):
        path = str(tmp_path / "sum.json")
        self._write_one(path, [[[0.5, 0.5], [0.6, 0.6]]])
        with pytest.raises(InvariantViolation):
            load_trajectories(path)

    def test_ingest_renormalizes_small_drift(self, tmp_path):
        path = str(tmp_path / "drift.json")
        self._write_one(path, [[[0.5, 0.5 + 2e-7], [0.3, 0.7]]])
        traj = load_trajectories(path)[0]
        np.testing.assert_allclose(traj.snapshots.sum(axis=2), 1.0, atol=1e-15)
        assert float(traj.metadata["ingest_max_drift"]) >= 2e-7

    def test_ingest_rejects_unknown_keys(self, tmp_path):
        path = str(tmp_path / "keys.json")
        self._write_one(path, [[[0.5, 0.5], [0.3, 0.7]]], extra_field=1)
        with pytest.raises(ParseError):
            load_trajectories(path)

    def test_ingest_rejects_duplicate_ids(self, tmp_path):
        path = str(tmp_path / "dup.json")
        sample = {
            "sample_id": "x",
            "n": 2,
            "d": 2,
            "rounds": [[[0.5, 0.5], [0.3, 0.7]]],
            "correct_label": None,
            "metadata": {},
        }
        atomic_write_json(path, {"schema_version": "1", "samples": [sample, sample]})
        with pytest.raises(ParseError):
            load_trajectories(path)

    def test_ingest_rejects_bool_label(self, tmp_path):
        path = str(tmp_path / "bool.json")
        self._write_one(path, [[[0.5, 0.5], [0.3, 0.7]]], correct_label=True)
        with pytest.raises(ParseError):
            load_trajectories(path)


class TestParamsDict:
    def test_round_trip(self):
        params = sample_params()
        back = params_from_dict(params_to_dict(params))
        np.testing.assert_array_equal(back.gamma, params.gamma)
        np.testing.assert_array_equal(back.w, params.w)
        np.testing.assert_array_equal(back.mask, params.mask)

    def test_missing_key(self):
        with pytest.raises(ParseError):
            params_from_dict({"gamma": [0.5]})


class TestCSV:
    def test_format_cell(self):
        assert format_cell(None) == ""
        assert format_cell(True) == "true"
        assert format_cell(False) == "false"
        assert format_cell(3) == "3"
        assert format_cell(0.25) == "0.25"
        assert format_cell(float("nan")) == ""
        assert format_cell("x") == "x"

    def test_write_csv_crlf(self, tmp_path):
        path = str(tmp_path / "t.csv")
        write_csv(path, ["a", "b"], [[1, None], [0.5, True]])
        raw = open(path, "rb").read()
        assert raw == b"a,b\r\n1,\r\n0.5,true\r\n"


class TestConfig:
    def test_defaults_without_file(self):
        cfg = load_config(None)
        assert cfg.simulate.mode == "random"
        assert cfg.fit.objective == "kl"
        assert cfg.verify.checks == "all"

    def test_parses_sections(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text(
            "[simulate]\nmode = scenario\nsamples = 12\nepsilon = 0.2\n"
            "[fit]\nglobal = yes\nreg_lambda = 0.0\n"
            "[verify]\nchecks = ambiguity_identity, diversity_forms\n"
        )
        cfg = load_config(str(path))
        assert cfg.simulate.mode == "scenario"
        assert cfg.simulate.samples == 12
        assert cfg.simulate.epsilon == pytest.approx(0.2)
        assert cfg.fit.global_fit is True
        assert cfg.fit.reg_lambda == 0.0
        assert cfg.verify.check_names() == ("ambiguity_identity", "diversity_forms")

    def test_rejects_unknown_section(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[nope]\nx = 1\n")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_rejects_unknown_key(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[simulate]\nnot_a_key = 1\n")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_rejects_bad_value(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[simulate]\nsamples = many\n")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/no/such/file.ini")

    def test_seed_override(self):
        cfg = load_config(None).with_seed(42)
        assert cfg.simulate.seed == 42
        assert cfg.fit.seed == 42
        assert cfg.verify.seed == 42


class TestCLI:
    def _simulate(self, out, extra=()):
        return run(
            [
                "--output-dir",
                out,
                "--seed",
                "5",
                "--quiet",
                "simulate",
                "--pools",
                "2",
                "--samples",
                "2",
                "--agents",
                "3",
                "--labels",
                "3",
                "--rounds",
                "3",
                *extra,
            ]
        )

    def test_pipeline_and_artifacts(self, tmp_path):
        out = str(tmp_path)
        assert self._simulate(out) == 0
        assert (
            run(
                [
                    "--output-dir", out, "--seed", "5", "--quiet",
                    "fit", "--max-iters", "120", "--restarts", "1", "--global",
                ]
            )
            == 0
        )
        assert run(["--output-dir", out, "--quiet", "analyze"]) == 0
        assert run(["--output-dir", out, "--quiet", "compare"]) == 0
        for name in (
            "trajectories.json",
            "fits.json",
            "agents.csv",
            "system.csv",
            "analyze_summary.json",
            "compare.csv",
            "compare.json",
        ):
            assert os.path.exists(os.path.join(out, name)), name
        fits = json.load(open(os.path.join(out, "fits.json")))
        assert len(fits["per_sample"]) == 4
        assert len(fits["global"]) == 2
        assert "variability" in fits and "aggregate" in fits
        summary = json.load(open(os.path.join(out, "analyze_summary.json")))
        assert summary["n_samples"] == 4

    def test_params_mode(self, tmp_path):
        out = str(tmp_path)
        params = sample_params()
        doc = params_to_dict(params)
        doc["innate"] = np.random.default_rng(3).dirichlet(np.ones(3), size=3).tolist()
        doc["correct_label"] = 1
        pfile = os.path.join(out, "params.json")
        atomic_write_json(pfile, doc)
        rc = run(
            [
                "--output-dir", out, "--quiet",
                "simulate", "--mode", "params", "--params-file", pfile, "--rounds", "4",
            ]
        )
        assert rc == 0
        trajs = load_trajectories(os.path.join(out, "trajectories.json"))
        assert len(trajs) == 1
        assert trajs[0].rounds == 4
        assert trajs[0].correct_label == 1

    def test_scenario_mode_with_confidence_gamma(self, tmp_path):
        out = str(tmp_path)
        rc = run(
            [
                "--output-dir", out, "--seed", "7", "--quiet",
                "simulate", "--mode", "scenario", "--scenario", "imperfect",
                "--agents", "5", "--labels", "4", "--samples", "3",
                "--rounds", "2", "--gamma-mode", "confidence",
            ]
        )
        assert rc == 0
        trajs = load_trajectories(os.path.join(out, "trajectories.json"))
        assert len(trajs) == 3
        assert trajs[0].metadata["scenario"] == "imperfect"

    def test_exit_code_bad_args(self, capsys):
        assert run(["no-such-command"]) == 1
        assert run(["--config", "/no/such.ini", "verify"]) == 1
        capsys.readouterr()

    def test_exit_code_missing_fits(self, tmp_path, capsys):
        out = str(tmp_path)
        assert self._simulate(out) == 0
        assert run(["--output-dir", out, "--quiet", "analyze"]) == 1
        capsys.readouterr()

    def test_exit_code_unknown_check(self, tmp_path, capsys):
        assert (
            run(["--output-dir", str(tmp_path), "--quiet", "verify", "--checks", "nope"])
            == 1
        )
        capsys.readouterr()

    def test_verify_small_run_writes_reports(self, tmp_path):
        out = str(tmp_path)
        rc = run(
            [
                "--output-dir", out, "--quiet",
                "verify", "--checks", "ambiguity_identity,diversity_forms",
                "--identity-draws", "50",
            ]
        )
        assert rc == 0
        text = open(os.path.join(out, "verify_report.txt")).read()
        assert "[PASS] ambiguity_identity" in text
        report = json.load(open(os.path.join(out, "verify_report.json")))
        assert report["all_passed"] is True
        assert len(report["checks"]) == 2

    def test_verify_failure_exits_two(self, tmp_path, monkeypatch):
        import fjlab.cli as cli_mod
        from fjlab.verify import CheckResult

        def fake_checks(**kwargs):
            return [CheckResult(name="stub", passed=False, detail="forced")]

        monkeypatch.setattr(cli_mod, "run_all_checks", fake_checks)
        rc = run(["--output-dir", str(tmp_path), "--quiet", "verify"])
        assert rc == 2
        report = json.load(
            open(os.path.join(str(tmp_path), "verify_report.json"))
        )
        assert report["all_passed"] is False

    def test_compare_needs_global_fits(self, tmp_path, capsys):
        out = str(tmp_path)
        assert self._simulate(out) == 0
        assert (
            run(
                [
                    "--output-dir", out, "--seed", "5", "--quiet",
                    "fit", "--max-iters", "40", "--restarts", "1",
                ]
            )
            == 0
        )
        assert run(["--output-dir", out, "--quiet", "compare"]) == 1
        capsys.readouterr()

    def test_config_file_drives_pipeline(self, tmp_path):
        out = str(tmp_path)
        ini = tmp_path / "run.ini"
        ini.write_text(
            "[simulate]\nmode = random\npools = 1\nsamples = 2\nagents = 3\n"
            "labels = 2\nrounds = 2\nseed = 9\n"
            "[fit]\nmax_iters = 40\nrestarts = 1\n"
        )
        assert run(["--config", str(ini), "--output-dir", out, "--quiet", "simulate"]) == 0
        assert run(["--config", str(ini), "--output-dir", out, "--quiet", "fit"]) == 0
        trajs = load_trajectories(os.path.join(out, "trajectories.json"))
        assert len(trajs) == 2
        assert trajs[0].d == 2
