import json
import subprocess
import sys

import pytest

from riverguard.cli import run
from riverguard.lpformat import parse_lp
from riverguard.model import load_instance


@pytest.fixture
def work(tmp_path, tiny):
    (tmp_path / "tiny.json").write_text(tiny.to_json())
    (tmp_path / "null.json").write_text(json.dumps({"policy": {"v": 0}}))
    (tmp_path / "repair.json").write_text(json.dumps({"policy": {"v": 1}}))
    return tmp_path


@pytest.fixture
def generated(tmp_path):
    path = tmp_path / "inst.json"
    assert run(["gen", "--n", "22", "--beta", "0.3", "--seed", "7", "-o", str(path)]) == 0
    return path


class TestGen:
    def test_writes_valid_instance(self, generated):
        inst = load_instance(str(generated))
        assert inst.n_nodes == 22

    def test_stdout_and_file_agree(self, generated, capsys):
        assert run(["gen", "--n", "22", "--beta", "0.3", "--seed", "7"]) == 0
        assert capsys.readouterr().out == generated.read_text()

    def test_invalid_config(self, capsys):
        assert run(["gen", "--n", "0"]) == 1
        assert "n must be at least 1" in capsys.readouterr().err


class TestSolve:
    def test_mrr_epsilon(self, generated, tmp_path):
        out = tmp_path / "res.json"
        assert run(["solve-mrr", str(generated), "--epsilon", "0.1", "-o", str(out)]) == 0
        data = json.loads(out.read_text())
        assert data["converged"]
        assert data["objective"] == "ratio"
        assert data["trace"] and data["scenarios"]
        assert data["adversary"]["epsilon"] == 0.1
        assert data["lower"] <= data["upper"] + 1e-12

    def test_mrr_exact_closes_gap(self, generated, tmp_path):
        out = tmp_path / "res.json"
        assert run(["solve-mrr", str(generated), "--exact", "--threshold", "1e-3", "-o", str(out)]) == 0
        data = json.loads(out.read_text())
        assert data["status"] in ("converged", "duplicate_scenario")
        assert data["upper"] - data["lower"] <= 1e-3

    def test_extra_cuts(self, generated, capsys):
        assert run(["solve-mrr", str(generated), "--exact", "--threshold", "0", "--extra-cuts", "3"]) == 0
        data = json.loads(capsys.readouterr().out)
        assert data["extra_cuts"] == 3
        assert data["upper"] == pytest.approx(data["lower"], abs=1e-9)
        assert run(["solve-mr", str(generated), "--exact", "--extra-cuts", "-1"]) == 1
        assert "--extra-cuts" in capsys.readouterr().err

    def test_mr_tiny(self, work, capsys):
        assert run(["solve-mr", str(work / "tiny.json"), "--exact", "--threshold", "0"]) == 0
        data = json.loads(capsys.readouterr().out)
        assert data["policy"] == {"v": 1}
        assert data["upper"] == pytest.approx(0.0, abs=1e-12)

    def test_non_convergence_exit_code(self, generated, capsys):
        code = run(["solve-mrr", str(generated), "--exact", "--threshold", "0", "--max-iterations", "1"])
        captured = capsys.readouterr()
        assert code == 2
        assert json.loads(captured.out)["status"] == "max_iterations"
        assert "not converged" in captured.err

    def test_epsilon_and_k_are_exclusive(self, work, capsys):
        assert run(["solve-mrr", str(work / "tiny.json"), "--epsilon", "0.1", "-K", "0.5"]) == 1
        assert "not allowed" in capsys.readouterr().err

    def test_constant_k(self, work, capsys):
        assert run(["solve-mrr", str(work / "tiny.json"), "-K", "0.05"]) == 0
        assert json.loads(capsys.readouterr().out)["adversary"]["mode"] == "constant"


class TestAdversary:
    def test_tiny_null_policy(self, work, capsys):
        assert run(["adversary", str(work / "tiny.json"), "--policy", str(work / "null.json"), "--exact"]) == 0
        data = json.loads(capsys.readouterr().out)
        assert data["value"] == pytest.approx(0.6)
        assert data["objective"] == "ratio"
        assert {"objective", "value", "cost", "policy", "params"} <= set(data)

    def test_regret(self, work, capsys):
        argv = ["adversary", str(work / "tiny.json"), "--policy", str(work / "null.json"), "--objective", "regret"]
        assert run(argv) == 0
        assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(0.8)

    def test_policy_for_other_instance(self, work, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"policy": {"w": 1}}))
        assert run(["adversary", str(work / "tiny.json"), "--policy", str(bad)]) == 1
        assert capsys.readouterr().err.strip()


class TestBaselineAndEval:
    @pytest.mark.parametrize("kind", ["midpoint", "worst", "random"])
    def test_baseline(self, work, capsys, kind):
        assert run(["baseline", str(work / "tiny.json"), "--kind", kind, "--seed", "3"]) == 0
        data = json.loads(capsys.readouterr().out)
        assert data["kind"] == kind
        assert set(data["policy"]) == {"v"}

    def test_eval_csv(self, work, tmp_path, capsys):
        acc = tmp_path / "acc.csv"
        argv = ["eval", str(work / "tiny.json"), "--policy", str(work / "null.json"),
                "--policy", str(work / "repair.json"), "--accessibility", str(acc)]
        assert run(argv) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("policy,cost,robust_ratio,regret")
        null_row, repair_row = (ln.split(",") for ln in lines[1:])
        assert float(null_row[2]) == pytest.approx(0.6)
        assert float(null_row[3]) == pytest.approx(0.8)
        assert float(repair_row[2]) == pytest.approx(1.0)
        assert acc.read_text().splitlines()[0] == "edge,decision_accessibility,adversary_accessibility"


class TestExport:
    def test_from_solve_result(self, work, tmp_path):
        res = tmp_path / "c.json"
        model = tmp_path / "model.lp"
        assert run(["solve-mrr", str(work / "tiny.json"), "--exact", "-o", str(res)]) == 0
        assert run(["export-milp", str(work / "tiny.json"), "--scenarios", str(res), "-o", str(model)]) == 0
        text = model.read_text()
        body = [ln for ln in text.splitlines() if not ln.startswith("\\")]
        assert body[0] == "Maximize"
        assert "M" in parse_lp(text).variables

    def test_malformed_scenarios(self, work, tmp_path, capsys):
        bad = tmp_path / "c.json"
        bad.write_text(json.dumps({"scenarios": [{"policy": {"v": 0}}]}))
        assert run(["export-milp", str(work / "tiny.json"), "--scenarios", str(bad)]) == 1
        assert "malformed" in capsys.readouterr().err


class TestBench:
    def test_csv(self, capsys):
        argv = ["bench", "--n", "10", "--beta", "0.1,0.3", "--budget-fraction", "0.2", "--seeds", "0",
                "--random-runs", "2", "--threads", "1"]
        assert run(argv) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "seed,n,beta,budget_fraction,policy_kind,robust_ratio,regret,wall_ms"
        assert len(lines) == 1 + 2 * 5

    def test_unknown_policy(self, capsys):
        assert run(["bench", "--policies", "oracle", "--threads", "1"]) == 1


class TestInputErrors:
    def test_missing_file(self, tmp_path, capsys):
        assert run(["solve-mrr", str(tmp_path / "nope.json")]) == 1
        assert "nope.json" in capsys.readouterr().err

    def test_invalid_instance_lists_violations(self, tmp_path, capsys):
        path = tmp_path / "cycle.json"
        path.write_text(json.dumps({
            "root": "s", "budget": 1, "nodes": [{"id": "s", "reward": 1}, {"id": "v", "reward": 1}],
            "edges": [
                {"parent": "s", "child": "v", "actions": [{"cost": 0, "p_low": 0.1, "p_high": 0.2}]},
                {"parent": "v", "child": "s", "actions": [{"cost": 0, "p_low": 0.1, "p_high": 0.2}]},
            ],
        }))
        assert run(["solve-mrr", str(path)]) == 1
        assert "cycle detected at v" in capsys.readouterr().err

    def test_bad_json(self, tmp_path, capsys):
        path = tmp_path / "x.json"
        path.write_text("{not json")
        assert run(["solve-mrr", str(path)]) == 1

    def test_unknown_flag(self, capsys):
        assert run(["gen", "--colour", "blue"]) == 1
        assert "unrecognized" in capsys.readouterr().err

    def test_module_entry_point(self, work):
        proc = subprocess.run(
            [sys.executable, "-m", "riverguard", "adversary", str(work / "tiny.json"),
             "--policy", str(work / "null.json")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["value"] == pytest.approx(0.6)
