import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from mellin_deconv.cli import build_parser, main, run_checks
from mellin_deconv.estimator import log_kde
from mellin_deconv.experiment import load_report
from mellin_deconv.kernel import make_kernel
from mellin_deconv.series import read_series


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def gamma_iid_csv(tmp_path):
    rng = np.random.default_rng(3)
    path = tmp_path / "gamma.csv"
    path.write_text("value\n" + "\n".join(repr(float(v)) for v in rng.gamma(2.0, 1.0, 400)) + "\n")
    return path


class TestSimulate:
    ARGS = ["simulate", "--generator", "cir", "--theta1", "1", "--theta2", "0.5", "--theta3", "1",
            "--n", "2000", "--seed", "7"]

    def test_cir_rows_and_determinism(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(self.ARGS + ["-o", str(a)]) == 0
        assert main(self.ARGS + ["-o", str(b)]) == 0
        assert len(a.read_text().splitlines()) == 2001
        assert a.read_bytes() == b.read_bytes()
        assert a.with_suffix(".json").read_bytes() == b.with_suffix(".json").read_bytes()
        side = json.loads(a.with_suffix(".json").read_text())
        assert side["n"] == 2000 and side["seed"] == 7 and side["generator"] == "cir"

    def test_zero_length(self, tmp_path):
        assert main(["simulate", "--n", "0", "-o", str(tmp_path / "x.csv")]) == 2

    def test_feller_violation(self, tmp_path):
        assert main(["simulate", "--theta1", "0.1", "-o", str(tmp_path / "x.csv")]) == 2

    def test_contaminated(self, tmp_path):
        out = tmp_path / "y.csv"
        assert main(["simulate", "--generator", "m_dependent", "--noise", "b21", "--n", "50",
                     "--seed", "3", "-o", str(out)]) == 0
        assert read_series(out).n == 50

    def test_unwritable(self, tmp_path):
        assert main(["simulate", "--n", "5", "-o", str(tmp_path / "nope" / "x.csv")]) == 3

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"n": 25, "seed": 4, "output": str(tmp_path / "s.csv")}))
        assert main(["simulate", "--config", str(cfg)]) == 0
        assert read_series(tmp_path / "s.csv").n == 25

    def test_config_typo_rejected(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"nn": 25}))
        assert main(["simulate", "--config", str(cfg)]) == 2

    def test_missing_config(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "none.json")]) == 3


class TestEstimate:
    def test_degenerate_matches_log_kde(self, gamma_iid_csv, tmp_path):
        out = tmp_path / "est.csv"
        assert main(["estimate", "-i", str(gamma_iid_csv), "--noise", "degenerate", "--bandwidth", "0.3",
                     "-o", str(out)]) == 0
        rows = read_rows(out)
        assert [float(r["x"]) for r in rows] == [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5]
        y = read_series(gamma_iid_csv)
        kde = log_kde(y, [float(r["x"]) for r in rows], 0.3, make_kernel(2))
        np.testing.assert_allclose([float(r["f_hat"]) for r in rows], kde, atol=1e-6, rtol=0)
        for r in rows:
            assert float(r["ci_lo"]) <= float(r["f_hat"]) <= float(r["ci_hi"])

    def test_uniform_noise_with_ci(self, tmp_path):
        series = tmp_path / "y.csv"
        assert main(["simulate", "--noise", "u01", "--n", "800", "--seed", "7", "-o", str(series)]) == 0
        out = tmp_path / "est.csv"
        assert main(["estimate", "-i", str(series), "--noise", "u01", "--x-grid", "1,2", "-o", str(out)]) == 0
        rows = read_rows(out)
        assert len(rows) == 2
        assert all(float(r["ci_hi"]) > float(r["ci_lo"]) for r in rows)

    def test_clamp(self, tmp_path):
        series = tmp_path / "y.csv"
        main(["simulate", "--noise", "u01", "--n", "60", "--seed", "1", "-o", str(series)])
        out = tmp_path / "est.csv"
        assert main(["estimate", "-i", str(series), "--noise", "u01", "--bandwidth", "0.3",
                     "--x-grid", "0.05:12:0.2", "--clamp", "-o", str(out)]) == 0
        assert all(float(r["f_hat"]) >= 0 and float(r["ci_lo"]) >= 0 for r in read_rows(out))

    def test_nonpositive_row(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("value\n1.0\n0.0\n")
        assert main(["estimate", "-i", str(bad), "--noise", "u01", "-o", str(tmp_path / "o.csv")]) == 2

    def test_empty_input(self, tmp_path, capsys):
        empty = tmp_path / "empty.csv"
        empty.write_text("value\n")
        assert main(["estimate", "-i", str(empty), "--noise", "u01", "-o", str(tmp_path / "o.csv")]) == 2
        assert "no observations" in capsys.readouterr().err

    def test_missing_input(self, tmp_path):
        assert main(["estimate", "-i", str(tmp_path / "nope.csv"), "--noise", "u01"]) == 3

    def test_unknown_noise(self, gamma_iid_csv):
        assert main(["estimate", "-i", str(gamma_iid_csv), "--noise", "cauchy"]) == 2


class TestVerify:
    def test_uniform_passes(self, capsys):
        assert main(["verify", "--kernel-order", "2", "--noise", "u01"]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out and out.count("PASS") == 4

    def test_forced_kappa_fails(self):
        assert main(["verify", "--noise", "u01", "--kappa", "2"]) == 1

    def test_beta22_passes(self, tmp_path):
        out = tmp_path / "v.json"
        assert main(["verify", "--noise", "b22", "--kappa", "2", "--json", "-o", str(out)]) == 0
        result = json.loads(out.read_text())
        assert result["passed"] and result["kappa"] == 2.0

    def test_run_checks_contents(self):
        res = run_checks(3, "b21")
        names = [c["check"] for c in res["checks"]]
        assert names == ["kernel_moments", "ft_integrability", "ordinary_smooth", "decay_constants"]
        dc = res["checks"][-1]
        assert dc["C1"] == pytest.approx(2.0, rel=0.02)


class TestExperiment:
    def test_table1_smoke(self, tmp_path):
        prefix = tmp_path / "t1"
        assert main(["experiment", "--preset", "table1", "--noise", "u01", "--seed", "7",
                     "--replications", "1", "--n", "300", "-o", str(prefix)]) == 0
        rows = read_rows(prefix.with_suffix(".csv"))
        assert [float(r["x"]) for r in rows] == [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5]
        assert list(rows[0]) == ["x", "noise_family", "n", "replications", "mse", "bias", "variance"]
        report = load_report(prefix.with_suffix(".json"))
        assert report.spec["master_seed"] == 7

    def test_table2_grid(self, tmp_path):
        prefix = tmp_path / "t2"
        assert main(["experiment", "--preset", "table2", "--noise", "b22", "--replications", "1",
                     "--n", "300", "-o", str(prefix)]) == 0
        rows = read_rows(prefix.with_suffix(".csv"))
        assert [float(r["x"]) for r in rows] == [0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]

    def test_threads_do_not_change_output(self, tmp_path):
        outs = []
        for threads in ("1", "2"):
            prefix = tmp_path / f"t{threads}"
            assert main(["experiment", "--preset", "table1", "--replications", "3", "--n", "200",
                         "--threads", threads, "-o", str(prefix)]) == 0
            outs.append(prefix.with_suffix(".json").read_bytes())
        assert outs[0] == outs[1]

    def test_spec_file(self, tmp_path):
        from mellin_deconv.experiment import load_preset

        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps(load_preset("table1").with_(n=200, replications=1).to_dict()))
        assert main(["experiment", "--spec", str(spec), "-o", str(tmp_path / "s")]) == 0
        data = json.loads(spec.read_text())
        data["replicatons"] = 3
        spec.write_text(json.dumps(data))
        assert main(["experiment", "--spec", str(spec), "-o", str(tmp_path / "s")]) == 2

    def test_needs_one_source(self, tmp_path):
        assert main(["experiment", "-o", str(tmp_path / "x")]) == 2

    def test_failure_is_exit_one(self, tmp_path, monkeypatch):
        import mellin_deconv.experiment as emod
        from mellin_deconv.errors import DomainError

        def boom(spec, r):
            raise DomainError("synthetic")

        monkeypatch.setattr(emod, "simulate_observations", boom)
        assert main(["experiment", "--preset", "table1", "--replications", "1", "-o", str(tmp_path / "x")]) == 1


class TestReport:
    def test_prints_table_with_reference(self, tmp_path, capsys):
        prefix = tmp_path / "t1"
        main(["experiment", "--preset", "table1", "--replications", "1", "--n", "300", "-o", str(prefix)])
        capsys.readouterr()
        flat = tmp_path / "flat.csv"
        assert main(["report", str(prefix.with_suffix(".json")), "--reference", "table1", "--csv", str(flat)]) == 0
        out = capsys.readouterr().out
        assert "ratio" in out and "0.0114744" in out
        assert flat.read_text() == prefix.with_suffix(".csv").read_text()

    def test_malformed_report(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{\n  oops\n}\n")
        assert main(["report", str(bad)]) == 2
        assert "line 2" in capsys.readouterr().err


def test_help_lists_flags(capsys):
    parser = build_parser()
    sub = [a for a in parser._actions if a.__class__.__name__ == "_SubParsersAction"][0]
    for name, sp in sub.choices.items():
        text = sp.format_help()
        for action in sp._actions:
            for opt in action.option_strings:
                assert opt in text, f"{name} help misses {opt}"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mellin_deconv.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "0.1.0" in proc.stdout
