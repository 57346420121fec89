import csv
import json
import math

import numpy as np
import pytest

from harmopt.ambiguity import MadAmbiguity
from harmopt.core import DecisionSpace, PiecewiseAffineLoss, SampleSet
from harmopt.harness import ExperimentConfig, approximation_error, derive_seed, out_of_sample, run_experiment
from harmopt.harness.cli import main
from harmopt.problems import PortfolioInstance, generate_lotsizing_instance, portfolio_problem, sample_demands
from harmopt.reformulation import HOInstance


def test_approximation_error():
    assert approximation_error(110.0, 100.0) == pytest.approx(10.0)
    assert approximation_error(-90.0, -100.0) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        approximation_error(1.0, 0.0)


def test_out_of_sample_dispatch():
    loss = PiecewiseAffineLoss.linear([2.0])
    assert out_of_sample(loss, [0.0], [[1.0], [3.0]]) == pytest.approx(4.0)
    inst = generate_lotsizing_instance(2, 0)
    x = inst.upper.copy()
    assert out_of_sample(inst, x, sample_demands(inst, 10, 1)) == pytest.approx(inst.storage_cost @ x)
    prob = portfolio_problem(PortfolioInstance(m=2))
    val = out_of_sample(prob, np.array([0.5, 0.5, 0.0]), [[0.1, 0.2], [0.0, -0.1]])
    assert math.isfinite(val)
    with pytest.raises(TypeError):
        out_of_sample(object(), [0.0], [[1.0]])


def test_seed_derivation_is_stable_and_key_sensitive():
    assert derive_seed(0, "a", 1) == derive_seed(0, "a", 1)
    assert derive_seed(0, "a", 1) != derive_seed(0, "a", 2)
    assert derive_seed(0, "a", 1) != derive_seed(1, "a", 1)
    assert 0 <= derive_seed(5, "x") < 2 ** 64


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(problem="other", n_values=(10,))
    with pytest.raises(ValueError):
        ExperimentConfig(problem="portfolio", n_values=(10,), methods=("random",))
    with pytest.raises(ValueError):
        ExperimentConfig(problem="lotsizing", n_values=(10,))
    with pytest.raises(ValueError):
        ExperimentConfig(problem="portfolio", n_values=(10,), replications=0)
    cfg = ExperimentConfig(problem="portfolio", n_values=(50, 25))
    assert cfg.n_values == (25, 50) and "wasserstein" in cfg.methods


def test_portfolio_experiment_counts_estimation_once(tmp_path):
    cfg = ExperimentConfig(problem="portfolio", n_values=(20, 30), methods=("saa", "ho_fixed", "ho_crossval"),
                           replications=2, test_samples=500, out_dir=str(tmp_path), figures=False)
    table = run_experiment(cfg)
    assert table.estimation_calls == 1
    assert table.failures == 0
    assert len(table.records) == 2 * 2 * 3
    row = table.cell("ho_fixed", 20, ambiguity="mad")
    assert row["lambda_mean"] == pytest.approx(1.0) and row["constant_mean"] == pytest.approx(5.0)
    data = json.loads((tmp_path / "results.json").read_text())
    assert data["estimation_calls"] == 1 and "prep_time" not in data["records"][0]
    with open(tmp_path / "results.csv") as fh:
        header = next(csv.reader(fh))
    assert header[0] == "schema_version" and not any("time" in h for h in header)


def test_lotsizing_experiment_reference_error_zero(tmp_path):
    cfg = ExperimentConfig(problem="lotsizing", n_values=(30,), m_values=(5,), replications=1, dim=3,
                           test_samples=300, out_dir=str(tmp_path), figures=True)
    table = run_experiment(cfg)
    assert table.cell("saa_full", 30, 30)["error_mean"] == 0.0
    for method in ("ho_reduction", "random", "local_search"):
        assert table.cell(method, 30, 5)["error_mean"] >= 0.0
    assert (tmp_path / "figures" / "lotsizing_error.png").stat().st_size > 0


def _instance_file(tmp_path):
    loss = PiecewiseAffineLoss.linear([1.0])
    inst = HOInstance(loss, DecisionSpace.point([0.0]), SampleSet([[0.0], [1.0]]),
                      MadAmbiguity(-1.0, 0.5, 2.0, 0.3), 0.5)
    path = tmp_path / "inst.json"
    path.write_text(json.dumps(inst.to_dict()))
    return path


def test_cli_solve(tmp_path, capsys):
    path = _instance_file(tmp_path)
    assert main(["--out", str(tmp_path / "o"), "solve", str(path)]) == 0
    out = capsys.readouterr().out
    assert "status optimal" in out
    sol = json.loads((tmp_path / "o" / "solution.json").read_text())
    assert sol["objective"] == pytest.approx(0.5, abs=1e-7)


def test_cli_solve_bad_input(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert main(["solve", str(bad), "--out", str(tmp_path)]) == 1


def test_cli_usage_error_exits_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bench", "portfolio", "--n-values", "ten"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1


def test_cli_reduce(tmp_path, capsys):
    rng = np.random.default_rng(0)
    SampleSet(rng.normal(size=(20, 2))).to_csv(tmp_path / "s.csv")
    for method in ("ho", "random", "local_search"):
        out = tmp_path / method
        assert main(["reduce", str(tmp_path / "s.csv"), "--size", "4", "--method", method, "--out", str(out)]) == 0
        rows = (out / "reduced.csv").read_text().splitlines()
        assert rows[0] == "index,x1,x2,omega" and len(rows) == 5
    assert main(["reduce", str(tmp_path / "s.csv"), "--size", "40", "--out", str(tmp_path)]) == 1


def test_cli_estimate_fixed(tmp_path, capsys):
    assert main(["estimate", "--method", "fixed", "--m0", "25", "--n", "100", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "estimate.json").read_text())
    assert data["C"] == 5.0 and data["lambda"] == pytest.approx(0.5)


def test_cli_global_flags_either_side(tmp_path, capsys):
    args = ["bench", "portfolio", "--n-values", "15", "--reps", "1", "--methods", "saa", "--no-figures"]
    assert main(["--seed", "4", "--test-samples", "200", "--out", str(tmp_path / "a")] + args) == 0
    assert main(args + ["--seed", "4", "--test-samples", "200", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()
    cfg = json.loads((tmp_path / "a" / "results.json").read_text())["config"]
    assert cfg["seed"] == 4 and cfg["test_samples"] == 200
