"""Command-line interface: subcommands, flags, and exit codes."""

import json

from exactpen.cli import main


def write_config(tmp_path, **kw):
    cfg = {"problem": "lq-scalar", "N": 30, "solver": {"max_inner": 500}}
    cfg.update(kw)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


class TestList:
    def test_lists_catalog(self, capsys):
        assert main(["list"]) == 0
        out = capsys.readouterr().out
        for pid in ("lq-scalar", "double-integrator", "logistic-harvest",
                    "inclusion-ball"):
            assert pid in out


class TestSolve:
    def test_success_exit_zero(self, tmp_path, capsys):
        code = main(["solve", write_config(tmp_path), "--out", str(tmp_path / "o")])
        assert code == 0
        assert (tmp_path / "o" / "report.json").exists()
        assert (tmp_path / "o" / "trajectory.csv").exists()
        assert "feasible-stationary" in capsys.readouterr().out

    def test_infeasible_exit_two(self, tmp_path):
        cfg = write_config(
            tmp_path,
            solver={"lambda_init": 1e-4, "lambda_max": 1e-4, "tol_feas": 1e-10},
        )
        assert main(["solve", cfg]) == 2

    def test_missing_config_exit_one(self, tmp_path):
        assert main(["solve", str(tmp_path / "absent.json")]) == 1

    def test_malformed_config_exit_one(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["solve", str(path)]) == 1

    def test_unknown_problem_exit_one(self, tmp_path):
        assert main(["solve", write_config(tmp_path, problem="nope")]) == 1

    def test_grid_flag_overrides(self, tmp_path):
        out = tmp_path / "o"
        code = main([
            "solve", write_config(tmp_path), "--grid", "17", "--out", str(out),
        ])
        assert code == 0
        lines = (out / "trajectory.csv").read_text().strip().split("\n")
        assert len(lines) == 19  # header + 18 node rows

    def test_lambda_flag_overrides(self, tmp_path):
        out = tmp_path / "o"
        code = main([
            "solve", write_config(tmp_path), "--lambda", "32.0", "--out", str(out),
        ])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["config"]["solver"]["lambda_init"] == 32.0


class TestCertify:
    def test_writes_certificate(self, tmp_path, capsys):
        out = tmp_path / "o"
        code = main(["certify", write_config(tmp_path), "--out", str(out)])
        assert code == 0
        cert = json.loads((out / "certificate.json").read_text())
        assert cert["lambda_star"] > 0
        assert "lambda_star" in capsys.readouterr().out

    def test_seed_flag_reproduces(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        cfg = write_config(tmp_path)
        main(["certify", cfg, "--seed", "9", "--out", str(out1)])
        main(["certify", cfg, "--seed", "9", "--out", str(out2)])
        c1 = json.loads((out1 / "certificate.json").read_text())
        c2 = json.loads((out2 / "certificate.json").read_text())
        assert c1 == c2


class TestPlateau:
    def test_runs_sweep(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path,
            N=20,
            plateau_lambdas=[1.0, 10.0, 100.0],
            solver={"max_inner": 400},
        )
        out = tmp_path / "o"
        assert main(["plateau", cfg, "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert len(report["plateau"]["entries"]) == 3
