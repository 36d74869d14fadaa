import csv
import io
import json
import subprocess
import sys

import pytest

from mdcc.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, EXIT_VERDICT, main
from mdcc.codes import MDP_EXPERIMENT_COLUMNS, Codebook
from mdcc.errors import NoConvergence
from mdcc.exponents import EXPONENT_COLUMNS
from mdcc.bounds import BOUND_COLUMNS


def _write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


@pytest.fixture
def bsc_file(tmp_path):
    return _write(tmp_path, "bsc.json", {"matrix": [[0.9, 0.1], [0.1, 0.9]]})


def run(capsys, *argv):
    try:
        code = main(list(argv))
    except SystemExit as e:
        code = e.code
    out, err = capsys.readouterr()
    return code, out, err


def _csv(text):
    return list(csv.reader(io.StringIO(text)))


class TestExitCodes:
    def test_missing_seed(self, capsys, bsc_file):
        code, _, err = run(capsys, "analyze", "--channel", bsc_file)
        assert code == EXIT_USAGE and json.loads(err.splitlines()[-1])["error"] == "UsageError"

    def test_malformed_json(self, capsys, tmp_path):
        bad = _write(tmp_path, "bad.json", "{not json")
        code, _, err = run(capsys, "exponents", "--channel", bad)
        assert code == EXIT_USAGE and "error" in json.loads(err)

    def test_non_stochastic(self, capsys, tmp_path):
        bad = _write(tmp_path, "bad.json", {"matrix": [[0.5, 0.4], [0.1, 0.9]]})
        code, _, err = run(capsys, "exponents", "--channel", bad)
        assert code == EXIT_USAGE and json.loads(err)["error"] == "NonStochasticRow"

    def test_bad_schedule(self, capsys, bsc_file):
        code, _, err = run(capsys, "mdp", "--channel", bsc_file, "--seed", "0", "--schedule", "1,0.6")
        assert code == EXIT_USAGE

    def test_identity_mdp_refused(self, capsys, tmp_path):
        ident = _write(tmp_path, "id.json", {"matrix": [[1, 0], [0, 1]]})
        code, _, err = run(capsys, "mdp", "--channel", ident, "--seed", "0")
        assert code == EXIT_USAGE and json.loads(err)["error"] == "ZeroDispersion"

    def test_numeric_failure(self, capsys, bsc_file, monkeypatch):
        def boom(*a, **k):
            raise NoConvergence("stalled", payload={"iterations": 3})
        monkeypatch.setattr("mdcc.cli.capacity", boom)
        code, _, err = run(capsys, "analyze", "--channel", bsc_file, "--seed", "0")
        rec = json.loads(err)
        assert code == EXIT_NUMERIC and rec["payload"]["iterations"] == 3

    def test_verdict_failure(self, capsys, tmp_path, bsc_file, monkeypatch):
        cb = _write(tmp_path, "cb.json", Codebook([[0, 0, 1, 1], [1, 1, 0, 0]]).to_dict())

        def fake(*a, **k):
            return {"strong_converse": {"verdict": "FAIL"}, "change_of_measure": []}
        monkeypatch.setattr("mdcc.cli._verify_instance", fake)
        code, _, _ = run(capsys, "verify", "--channel", bsc_file, "--codebook", cb, "--seed", "0")
        assert code == EXIT_VERDICT

    def test_entry_point(self, bsc_file):
        r = subprocess.run([sys.executable, "-m", "mdcc.cli", "exponents", "--channel", bsc_file,
                            "--points", "3"], capture_output=True, text=True)
        assert r.returncode == EXIT_OK and r.stdout.startswith(",".join(EXPONENT_COLUMNS))


class TestAnalyze:
    def test_bsc(self, capsys, bsc_file):
        code, out, _ = run(capsys, "analyze", "--channel", bsc_file, "--seed", "0")
        rep = json.loads(out)
        assert code == EXIT_OK
        assert rep["C"] == pytest.approx(0.3680642071684971, abs=1e-10)
        assert rep["sigma_sq"] == pytest.approx(0.4345016, abs=1e-7)
        assert rep["A_certified"] == "heuristic" and "warning" not in rep

    def test_identity_warning(self, capsys, tmp_path):
        ident = _write(tmp_path, "id.json", {"matrix": [[1, 0, 0], [0, 1, 0], [0, 0, 1]]})
        code, out, _ = run(capsys, "analyze", "--channel", ident, "--seed", "0")
        rep = json.loads(out)
        assert code == EXIT_OK and rep["warning"] == "zero-dispersion" and rep["no_critical_rate"]

    def test_round_trip(self, capsys, tmp_path):
        raw = _write(tmp_path, "raw.json", {"matrix": [[0.7, 0.0, 0.3], [0.2, 0.0, 0.8]]})
        _, out1, _ = run(capsys, "analyze", "--channel", raw, "--seed", "0")
        rep1 = json.loads(out1)
        assert rep1["removed_columns"] == [1]
        echo = _write(tmp_path, "echo.json", rep1["channel"])
        _, out2, _ = run(capsys, "analyze", "--channel", echo, "--seed", "0")
        rep2 = json.loads(out2)
        for key in ("C", "sigma_sq", "R_cr", "A", "M"):
            assert rep2[key] == rep1[key]

    def test_out_file(self, capsys, tmp_path, bsc_file):
        dest = tmp_path / "rep.json"
        run(capsys, "analyze", "--channel", bsc_file, "--seed", "0", "--out", str(dest))
        assert "C" in json.loads(dest.read_text())


class TestTables:
    def test_exponents_csv(self, capsys, bsc_file):
        code, out, _ = run(capsys, "exponents", "--channel", bsc_file, "--rates", "0.1,0.2,0.3")
        rows = _csv(out)
        assert code == EXIT_OK and rows[0] == EXPONENT_COLUMNS and len(rows) == 4

    def test_exponents_json(self, capsys, bsc_file):
        _, out, _ = run(capsys, "exponents", "--channel", bsc_file, "--points", "5", "--format", "json")
        pts = json.loads(out)
        assert len(pts) == 5 and pts[-1]["E_r"] == pytest.approx(0.0, abs=1e-9)

    def test_mdp_csv(self, capsys, bsc_file):
        code, out, _ = run(capsys, "mdp", "--channel", bsc_file, "--seed", "0", "--n-grid", "1000,10000")
        rows = _csv(out)
        assert code == EXIT_OK and len(rows) == 3 and "upper_norm" in rows[0]

    def test_bounds_csv(self, capsys, bsc_file):
        code, out, _ = run(capsys, "bounds", "--channel", bsc_file, "--seed", "0", "--n-grid", "1000,10000")
        rows = _csv(out)
        assert code == EXIT_OK and rows[0] == BOUND_COLUMNS
        assert rows[1][-1] == "0" and rows[2][-1] == "1"
        assert float(rows[1][5]) == pytest.approx(0.34135065, abs=1e-8)


class TestSimulate:
    def test_codebook(self, capsys, tmp_path, bsc_file):
        cb = _write(tmp_path, "cb.json", Codebook([[0, 0, 0], [1, 1, 1]]).to_dict())
        code, out, _ = run(capsys, "simulate", "--channel", bsc_file, "--codebook", cb, "--seed", "1",
                           "--trials", "20000")
        rep = json.loads(out)
        assert code == EXIT_OK and rep["exact"]["average"] == pytest.approx(0.028, abs=1e-15)
        mc = rep["monte_carlo"]
        assert mc["ci_low"] <= 0.028 <= mc["ci_high"]

    def test_experiment_columns(self, capsys, tmp_path):
        ch = _write(tmp_path, "b.json", {"matrix": [[0.95, 0.05], [0.05, 0.95]]})
        _, out, _ = run(capsys, "simulate", "--channel", ch, "--seed", "2", "--n-grid", "50",
                        "--trials", "200", "--max-messages", "64")
        assert _csv(out)[0] == MDP_EXPERIMENT_COLUMNS

    def test_seed_and_threads(self, capsys, tmp_path):
        ch = _write(tmp_path, "b.json", {"matrix": [[0.9, 0.1], [0.1, 0.9]]})
        base = ["simulate", "--channel", ch, "--n-grid", "40", "--trials", "300", "--max-messages", "32"]
        a = run(capsys, *base, "--seed", "5", "--threads", "1")[1]
        b = run(capsys, *base, "--seed", "5", "--threads", "3")[1]
        assert a == b

    def test_seed_changes_estimate(self, capsys, tmp_path, bsc_file):
        cb = _write(tmp_path, "cb.json", Codebook([[0, 0, 0], [1, 1, 1]]).to_dict())
        base = ["simulate", "--channel", bsc_file, "--codebook", cb, "--trials", "2000"]
        a = run(capsys, *base, "--seed", "5", "--threads", "1")[1]
        b = run(capsys, *base, "--seed", "5", "--threads", "2")[1]
        c = run(capsys, *base, "--seed", "6", "--threads", "1")[1]
        assert a == b and a != c


def test_verify_corpus(capsys):
    code, out, _ = run(capsys, "verify", "--seed", "0", "--corpus-size", "20")
    rep = json.loads(out)
    assert code == EXIT_OK and set(rep["summary"]) == {"PASS"} and len(rep["instances"]) == 20


def test_verify_codebook_needs_channel(capsys, tmp_path):
    cb = _write(tmp_path, "cb.json", Codebook([[0, 1], [1, 0]]).to_dict())
    code, _, _ = run(capsys, "verify", "--codebook", cb, "--seed", "0")
    assert code == EXIT_USAGE
