"""End-to-end CLI flows: every subcommand plus error exit codes."""

import json
import subprocess
import sys

import numpy as np

from abstainkit.cli import main
from abstainkit.experiments import write_predictions


def test_simulate_then_abstain_then_evaluate(tmp_path, capsys):
    config = tmp_path / "sim.json"
    config.write_text(json.dumps({
        "positive_prior": 0.1, "mu_pos": 2.0, "mu_neg": -1.0,
        "sigma_pos": 1.0, "sigma_neg": 2.0, "n": 800, "seed": 0,
    }))
    data = tmp_path / "data.csv"
    assert main(["simulate", "--config", str(config), "--output", str(data)]) == 0

    abstain_out = tmp_path / "abstain.json"
    code = main([
        "abstain", "--input", str(data), "--method", "sens_window",
        "--metric", "sens_at_spec", "--target-specificity", "0.9",
        "--budget", "0.3", "--mc-samples", "20", "--seed", "0",
        "--output", str(abstain_out),
    ])
    assert code == 0
    payload = json.loads(abstain_out.read_text())
    assert payload["abstained"] == 240
    assert len(payload["indices"]) == 240

    capsys.readouterr()
    code = main([
        "evaluate", "--input", str(data), "--metric", "sens_at_spec",
        "--target-specificity", "0.9", "--abstain-file", str(abstain_out),
    ])
    assert code == 0
    result = json.loads(capsys.readouterr().out)
    assert result["n"] == 560
    assert 0.0 <= result["value"] <= 1.0

    # abstention should not hurt the estimated metric on this easy setup
    capsys.readouterr()
    main(["evaluate", "--input", str(data), "--metric", "sens_at_spec",
          "--target-specificity", "0.9"])
    baseline = json.loads(capsys.readouterr().out)
    assert result["value"] >= baseline["value"]


def test_multiclass_simulate_and_kappa_abstain(tmp_path, capsys):
    config = tmp_path / "sim.json"
    config.write_text(json.dumps({
        "priors": [0.4, 0.3, 0.2, 0.1], "means": [-8, -3, 3, 4],
        "sigmas": [4, 3, 3, 2], "n": 600, "seed": 1,
    }))
    data = tmp_path / "mc.csv"
    assert main(["simulate", "--config", str(config), "--output", str(data)]) == 0
    capsys.readouterr()
    code = main([
        "abstain", "--input", str(data), "--method", "kappa_marginal_det",
        "--metric", "weighted_kappa", "--budget", "0.2",
    ])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["abstained"] == 120


def test_calibrate_apply_adapt_flow(tmp_path, capsys):
    rng = np.random.default_rng(3)
    scores = rng.normal(0, 2, 2000)
    labels = (rng.random(2000) < 1 / (1 + np.exp(-scores))).astype(int)
    raw = tmp_path / "raw.csv"
    with open(raw, "w") as fh:
        fh.write("id,label,score\n")
        for i, (s, y) in enumerate(zip(scores, labels)):
            fh.write(f"{i},{y},{float(s)!r}\n")
    cal_path = tmp_path / "cal.json"
    assert main(["calibrate", "--input", str(raw), "--kind", "platt", "--output", str(cal_path)]) == 0
    saved = json.loads(cal_path.read_text())
    assert set(saved) == {"kind", "scale", "offset"}

    calibrated = tmp_path / "calibrated.csv"
    assert main(["apply-calibrator", "--input", str(raw), "--calibrator", str(cal_path),
                 "--output", str(calibrated)]) == 0

    capsys.readouterr()
    adapted = tmp_path / "adapted.csv"
    code = main(["adapt", "--input", str(calibrated), "--train-priors", "0.5,0.5",
                 "--output", str(adapted)])
    assert code == 0
    out = capsys.readouterr().out
    info = json.loads(out.splitlines()[0])
    assert info["converged"]
    assert abs(sum(info["test_priors"]) - 1.0) < 1e-9


def test_experiment_and_compare(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "task": "figure1",
        "methods": ["sens_window", "js_divergence", "max_class_prob"],
        "budgets": [0.3],
        "seeds": list(range(6)),
        "metric": {"name": "sens_at_spec", "target_specificity": 0.9},
        "mc_samples": 20,
        "sim": {"n": 400},
        "output": str(tmp_path / "exp"),
    }))
    assert main(["experiment", "--spec", str(spec)]) == 0
    results = tmp_path / "exp" / "results.csv"
    capsys.readouterr()
    code = main(["compare", "--input", str(results), "--column", "post"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert len(payload["methods"]) == 3
    assert len(payload["p_values"]) == 3


def test_errors_exit_nonzero(tmp_path, capsys):
    code = main(["abstain", "--input", str(tmp_path / "missing.csv"),
                 "--method", "sens_window", "--budget", "0.3"])
    assert code == 1
    err = capsys.readouterr().err
    assert err.startswith("error: InputNotFound:")

    data = tmp_path / "data.csv"
    write_predictions(data, np.linspace(0.01, 0.99, 20), np.ones(20, dtype=int))
    code = main(["evaluate", "--input", str(data), "--metric", "auroc"])
    assert code == 1
    assert "NoNegatives" in capsys.readouterr().err


def test_console_script_help():
    proc = subprocess.run(
        [sys.executable, "-m", "abstainkit.cli", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "simulate" in proc.stdout and "compare" in proc.stdout
