import json

import numpy as np
import pytest

from sparse_pce.cli import main
from sparse_pce.elliptic_model import load_samples


@pytest.fixture
def samples(tmp_path):
    out = tmp_path / "s.csv"
    rc = main(["gen", "--problem", "synthetic_decay", "--d", "4", "--q", "3", "--N", "30",
               "--seed", "2", "--out", str(out), "--truth-out", str(tmp_path / "truth.csv")])
    assert rc == 0
    return out


class TestGen:
    def test_files(self, samples, tmp_path):
        xi, u, header = load_samples(samples)
        assert xi.shape == (30, 4) and u.shape == (30,)
        assert header["config"]["d"] == 4
        man = json.loads((tmp_path / "s.manifest.json").read_text())
        assert man["command"] == "gen" and "numpy" in man["versions"]
        assert (tmp_path / "truth.csv").exists()

    def test_deterministic(self, samples, tmp_path):
        other = tmp_path / "t.csv"
        main(["gen", "--problem", "synthetic_decay", "--d", "4", "--q", "3", "--N", "30",
              "--seed", "2", "--out", str(other)])
        assert other.read_text() == samples.read_text()


class TestSolve:
    @pytest.mark.parametrize("method", ["l1", "reweighted_l1"])
    def test_methods(self, samples, tmp_path, method):
        out = tmp_path / "r.json"
        assert main(["solve", "--samples", str(samples), "--method", method, "--out", str(out)]) == 0
        res = json.loads(out.read_text())
        assert len(res["c"]) == 35 and "cv" in res

    @pytest.mark.parametrize("method", ["weighted_l1", "wls"])
    def test_weighted(self, samples, tmp_path, method):
        out = tmp_path / "r.json"
        rc = main(["solve", "--samples", str(samples), "--method", method, "--epsilon", "0.01",
                   "--weights", str(tmp_path / "truth.csv"), "--out", str(out)])
        assert rc == 0 and (tmp_path / "r.manifest.json").exists()

    def test_missing_weights(self, samples, tmp_path):
        rc = main(["solve", "--samples", str(samples), "--method", "weighted_l1", "--out",
                   str(tmp_path / "r.json")])
        assert rc == 1

    def test_infeasible_is_numeric_failure(self, samples, tmp_path):
        # a basis with only the constant cannot fit the data to 1e-8
        rc = main(["solve", "--samples", str(samples), "--d", "4", "--q", "0", "--epsilon", "1e-8",
                   "--out", str(tmp_path / "r.json")])
        assert rc == 2


def test_cv(samples, tmp_path):
    out = tmp_path / "cv.json"
    assert main(["cv", "--samples", str(samples), "--out", str(out)]) == 0
    cv = json.loads(out.read_text())
    assert cv["epsilon"] == pytest.approx(np.sqrt(30 / 24) * cv["epsilon_star"])


@pytest.mark.parametrize("source", ["elliptic_bound", "taylor_bound"])
def test_weights(tmp_path, source):
    out = tmp_path / "w.csv"
    extra = ["--gk-samples", "60", "--mesh-n", "64"] if source == "elliptic_bound" else ["--mc-samples", "2000"]
    assert main(["weights", "--source", source, "--d", "3", "--q", "2", "--C0", "2.0",
                 "--out", str(out)] + extra) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "j,bound" and len(lines) == 11
    assert float(lines[1].split(",")[1]) == pytest.approx(2.0)


def test_theory(tmp_path, capsys):
    out = tmp_path / "t.json"
    assert main(["theory", "--alpha", "3", "--out", str(out)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["beta"] == pytest.approx(1.5, abs=1e-10)
    assert json.loads(out.read_text()) == rep


def test_experiment(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"d": 4, "q": 2, "N_list": [20], "replications": 2}))
    assert main(["experiment", "--config", str(cfg), "--out-dir", str(tmp_path / "o")]) == 0
    for name in ("report.csv", "report.json", "manifest.json"):
        assert (tmp_path / "o" / name).exists()


class TestUsage:
    @pytest.mark.parametrize("argv", [[], ["gen", "--bogus"], ["solve"]])
    def test_parser_errors_exit_one(self, argv):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 1

    def test_missing_file(self, tmp_path):
        assert main(["cv", "--samples", str(tmp_path / "none.csv"), "--out", str(tmp_path / "o")]) == 1

    def test_bad_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"nope": 1}')
        assert main(["experiment", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 1
