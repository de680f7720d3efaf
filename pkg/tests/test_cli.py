import hashlib
import json
import subprocess
import sys

import pytest

from bridgelab.cli import emit_reports, main, validate_config
from bridgelab.errors import ValidationError

FORCING4 = {"cable": [1.0, 0, 0, 0], "deck": [0.5, 0, 0, 0]}

SMALL = {
    "simulate": {"numerics": {"N": 4, "dt": 0.01, "T": 0.5, "snapshot_times": [0.0, 0.25]},
                 "initial": {"kind": "random", "seed": 1}},
    "decay": {"numerics": {"N": 4, "dt": 0.01, "T": 5.0},
              "initial": {"kind": "mode", "j": 0, "slot": "a", "value": 1.0}},
    "spectrum": {"numerics": {"N": 8}},
    "resolvent-sweep": {"numerics": {"N": 6, "lam_max": 10.0, "n_grid": 40}},
    "f-xi": {"numerics": {"samples_per_period": 2000}},
    "characteristics": {"params": {"k": 0.0, "xi": {"num": 1, "den": 3}},
                        "numerics": {"M": 30, "T": 0.5, "N": 8}, "initial": {"kind": "smooth"}},
    "cross-validate": {"params": {"k": 0.0, "xi": {"num": 1, "den": 3}},
                       "numerics": {"N": 8, "M": 30, "T": 0.5}},
    "decompose": {"nonlinearity": {"family": "OneSidedSpring", "k": 1.0, "forcing": FORCING4},
                  "numerics": {"N": 4, "dt": 0.01, "T": 1.0}, "initial": {"kind": "random", "seed": 2}},
    "absorbing": {"nonlinearity": {"family": "OneSidedSpring", "k": 1.0, "forcing": FORCING4},
                  "numerics": {"N": 4, "dt": 0.01, "T": 5.0, "R": 2.0, "ensemble_size": 3, "seed": 3}},
    "attractor": {"nonlinearity": {"family": "OneSidedSpring", "k": 1.0, "forcing": FORCING4},
                  "numerics": {"N": 4, "dt": 0.01, "T": 5.0, "R": 1.0, "ensemble_size": 3, "seed": 4,
                               "t_star": 1.0}},
}


def make_config(tmp_path, tag, name="cfg.json", out="out", **override):
    cfg = {"experiment": tag, "output_dir": str(tmp_path / out),
           "params": {"xi": {"num": 1, "den": 3}}}
    cfg.update(json.loads(json.dumps(SMALL[tag])))
    cfg.update(override)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path, cfg


def run_cli(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def manifest_hashes(directory):
    m = json.loads((directory / "manifest.json").read_text())
    return {f["path"]: f["sha256"] for f in m["files"]}


class TestRunEveryExperiment:
    @pytest.mark.parametrize("tag", sorted(SMALL))
    def test_smoke(self, tmp_path, capsys, tag):
        path, cfg = make_config(tmp_path, tag)
        code, out, err = run_cli(["run", path], capsys)
        assert code == 0, err
        result = json.loads(out)
        assert result["experiment"] == tag
        out_dir = tmp_path / "out"
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["schema"] == "bridgelab.manifest/1" and manifest["files"]
        for entry in manifest["files"]:
            data = (out_dir / entry["path"]).read_bytes()
            assert hashlib.sha256(data).hexdigest() == entry["sha256"]
            assert len(data) == entry["bytes"]
            text = data.decode()
            if entry["path"].endswith(".csv"):
                assert text.startswith("#")
            else:
                assert json.loads(text)["schema"].startswith("bridgelab.")

    def test_deterministic_rerun(self, tmp_path, capsys):
        path, _ = make_config(tmp_path, "absorbing")
        assert run_cli(["run", path, "--output-dir", tmp_path / "a"], capsys)[0] == 0
        assert run_cli(["run", path, "--output-dir", tmp_path / "b"], capsys)[0] == 0
        assert manifest_hashes(tmp_path / "a") == manifest_hashes(tmp_path / "b")

    def test_threads_do_not_change_outputs(self, tmp_path, capsys, monkeypatch):
        numerics = dict(SMALL["attractor"]["numerics"], ensemble_size=20)
        path, _ = make_config(tmp_path, "attractor", numerics=numerics)
        assert run_cli(["run", path, "--output-dir", tmp_path / "a"], capsys)[0] == 0
        monkeypatch.setenv("BRIDGELAB_THREADS", "3")
        assert run_cli(["run", path, "--output-dir", tmp_path / "b"], capsys)[0] == 0
        assert manifest_hashes(tmp_path / "a") == manifest_hashes(tmp_path / "b")

    def test_module_entry_point(self, tmp_path):
        path, _ = make_config(tmp_path, "spectrum")
        proc = subprocess.run([sys.executable, "-m", "bridgelab", "validate", str(path)],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["valid"] is True


class TestValidation:
    def test_collects_every_error(self, tmp_path):
        raw = {"experiment": "simulate", "output_dir": "x", "params": {"gamma": -1.0, "xi": 2.0},
               "numerics": {"N": 0, "dt": 0.01}, "initial": {"kind": "random", "seed": 0}}
        with pytest.raises(ValidationError) as err:
            validate_config(raw)
        paths = {e["path"] for e in err.value.errors}
        assert {"params.gamma", "params.xi", "numerics.N", "numerics.T"} <= paths

    def test_xi_outside_names_field(self, tmp_path, capsys):
        path, _ = make_config(tmp_path, "spectrum", params={"xi": 1.2})
        code, _, err = run_cli(["run", path], capsys)
        assert code == 2
        payload = json.loads(err)
        assert payload["schema"] == "bridgelab.error/1"
        assert any(e["path"] == "params.xi" for e in payload["errors"])

    def test_unknown_experiment_lists_allowed(self, tmp_path, capsys):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"experiment": "plot", "output_dir": "o"}))
        code, _, err = run_cli(["validate", path], capsys)
        assert code == 2
        msg = json.loads(err)["errors"][0]["message"]
        assert "simulate" in msg and "attractor" in msg

    def test_ensemble_needs_seed(self):
        raw = {"experiment": "absorbing", "output_dir": "o",
               "nonlinearity": {"family": "OneSidedSpring", "k": 1.0},
               "numerics": {"N": 4, "dt": 0.01, "T": 1.0, "R": 1.0, "ensemble_size": 3}}
        with pytest.raises(ValidationError) as err:
            validate_config(raw)
        assert any(e["path"] == "numerics.seed" for e in err.value.errors)

    def test_malformed_json(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        code, _, err = run_cli(["run", path], capsys)
        assert code == 2 and json.loads(err)["error"] == "ParseError"

    def test_bad_thread_env(self, tmp_path, capsys, monkeypatch):
        path, _ = make_config(tmp_path, "spectrum")
        monkeypatch.setenv("BRIDGELAB_THREADS", "many")
        code, _, err = run_cli(["run", path], capsys)
        assert code == 2
        assert json.loads(err)["errors"][0]["path"] == "env.BRIDGELAB_THREADS"


class TestExitCodes:
    def test_numerical_failure(self, tmp_path, capsys):
        path, _ = make_config(tmp_path, "decay", initial={"kind": "mode", "j": 0, "value": 0.0})
        code, _, err = run_cli(["run", path], capsys)
        assert code == 3 and json.loads(err)["error"] == "ZeroEnergy"

    def test_fixed_point_divergence(self, tmp_path, capsys):
        path, _ = make_config(tmp_path, "simulate", nonlinearity={"family": "OneSidedSpring", "k": 1e6},
                              numerics={"N": 4, "dt": 0.5, "T": 1.0})
        code, _, err = run_cli(["run", path], capsys)
        payload = json.loads(err)
        assert code == 3 and payload["error"] == "FixedPointDivergence"
        assert payload["contraction"] >= 1.0

    def test_non_empty_output_dir(self, tmp_path, capsys):
        path, _ = make_config(tmp_path, "spectrum")
        (tmp_path / "out").mkdir()
        (tmp_path / "out" / "keep.txt").write_text("x")
        code, _, _ = run_cli(["run", path], capsys)
        assert code == 4
        assert (tmp_path / "out" / "keep.txt").read_text() == "x"


class TestSweep:
    def test_rational_xi_sweep(self, tmp_path, capsys):
        path, _ = make_config(tmp_path, "spectrum")
        code, out, err = run_cli(["sweep", path, "--param", "xi", "--values", "1/3", "2/3"], capsys)
        assert code == 0, err
        sweep = json.loads((tmp_path / "out" / "sweep.json").read_text())
        assert [r["value"] for r in sweep["runs"]] == ["1/3", "2/3"]
        tags = [r["summary"]["classification"]["tag"] for r in sweep["runs"]]
        assert tags == ["ExponentialAdmissible", "UndampedModeExists"]
        for r in sweep["runs"]:
            assert (tmp_path / "out" / r["output_dir"] / "manifest.json").exists()

    def test_invalid_value_reported_before_running(self, tmp_path, capsys):
        path, _ = make_config(tmp_path, "spectrum")
        code, _, err = run_cli(["sweep", path, "--param", "gamma", "--values", "1.0", "-2"], capsys)
        assert code == 2
        assert any("gamma=-2" in e["path"] for e in json.loads(err)["errors"])
        assert not (tmp_path / "out").exists()


class TestEmit:
    def test_empty_report(self, tmp_path):
        assert emit_reports({}, tmp_path / "e") == []
        manifest = json.loads((tmp_path / "e" / "manifest.json").read_text())
        assert manifest["files"] == []
