"""Command-line entry point.

Subcommands mirror the pipeline stages: `simulate` emits a dataset CSV,
`calibrate` fits and saves a calibrator, `adapt` applies label-shift EM,
`abstain` scores and selects an abstention set, `evaluate` recomputes a
metric on retained examples, `experiment` runs a full grid from a spec JSON,
and `compare` builds a signed-rank p-value matrix from a results CSV.

Exit code is 0 on success; failures print one `error: <Type>: <message>`
line to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .calibration import Calibrator, PriorEstimate, adapt_label_shift_em, apply_calibrator, fit_calibrator
from .errors import AbstainkitError, InputNotFound, SchemaError
from .experiments import (
    ExperimentSpec,
    MethodSpec,
    MetricSpec,
    abstain_indices,
    evaluate_metric,
    read_predictions,
    run_experiment,
    write_predictions,
)
from .metrics import ProbabilityMatrix
from .scoring import MonteCarloConfig
from .simulate import BinarySimConfig, MulticlassSimConfig, simulate_binary, simulate_multiclass
from .stats import compare_methods


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputNotFound(path) from None


def _parse_priors(text: str) -> PriorEstimate:
    return PriorEstimate(np.array([float(v) for v in text.split(",")]))


def _metric_spec(args) -> MetricSpec:
    return MetricSpec(name=args.metric, target_specificity=args.target_specificity)


def _cmd_simulate(args) -> int:
    payload = _load_json(args.config)
    if "positive_prior" in payload:
        cfg = BinarySimConfig(**payload)
        probs, labels, _ = simulate_binary(cfg)
    elif "priors" in payload:
        cfg = MulticlassSimConfig(
            priors=tuple(payload["priors"]), means=tuple(payload["means"]),
            sigmas=tuple(payload["sigmas"]), n=int(payload["n"]), seed=int(payload["seed"]),
        )
        probs, labels = simulate_multiclass(cfg)
    else:
        raise SchemaError("config must carry BinarySimConfig or MulticlassSimConfig fields")
    write_predictions(args.output, probs, labels)
    print(f"wrote {args.output}")
    return 0


def _read_raw_scores(path):
    """Raw-score CSV: `id,label,score` (binary) or `id,label,z_0..z_{C-1}`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if header[:2] != ["id", "label"]:
        raise SchemaError(f"{path}: header must start with id,label")
    labels = np.array([int(r[1]) for r in rows], dtype=np.int64)
    values = np.asarray([[float(v) for v in r[2:]] for r in rows], dtype=float)
    return labels, values[:, 0] if header[2:] == ["score"] else values


def _cmd_calibrate(args) -> int:
    try:
        labels, scores = _read_raw_scores(args.input)
    except FileNotFoundError:
        raise InputNotFound(args.input) from None
    cal = fit_calibrator(args.kind, scores, labels)
    cal.to_json(args.output)
    print(f"wrote {args.output}")
    return 0


def _cmd_apply(args) -> int:
    cal = Calibrator.from_json(args.calibrator)
    try:
        labels, scores = _read_raw_scores(args.input)
    except FileNotFoundError:
        raise InputNotFound(args.input) from None
    write_predictions(args.output, apply_calibrator(cal, scores), labels)
    print(f"wrote {args.output}")
    return 0


def _cmd_adapt(args) -> int:
    _, labels, probs = read_predictions(args.input)
    matrix = ProbabilityMatrix.from_binary(probs) if probs.ndim == 1 else ProbabilityMatrix(probs)
    result = adapt_label_shift_em(
        matrix, _parse_priors(args.train_priors), tol=args.tol, max_iter=args.max_iter
    )
    adapted = result.adapted_probs.entries
    write_predictions(args.output, adapted[:, 1] if probs.ndim == 1 else adapted, labels)
    print(json.dumps({
        "test_priors": result.test_priors.priors.tolist(),
        "iterations": result.iterations,
        "converged": result.converged,
    }))
    return 0


def _cmd_abstain(args) -> int:
    _, labels, probs = read_predictions(args.input)
    mc = MonteCarloConfig(samples=args.mc_samples, seed=args.seed, smooth=args.smooth)
    priors = _parse_priors(args.priors) if args.priors else None
    if priors is None and labels is not None:
        count = 2 if probs.ndim == 1 else probs.shape[1]
        priors = PriorEstimate.from_labels(labels, count)
    indices, estimate = abstain_indices(
        MethodSpec(name=args.method), probs, args.budget, _metric_spec(args), mc,
        labels=labels, priors=priors,
    )
    payload = {
        "method": args.method,
        "budget": args.budget,
        "abstained": int(indices.size),
        "indices": indices.tolist(),
        "estimated_metric": estimate,
    }
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(payload, fh)
            fh.write("\n")
        print(f"wrote {args.output}")
    else:
        print(json.dumps(payload))
    return 0


def _cmd_evaluate(args) -> int:
    _, labels, probs = read_predictions(args.input)
    if labels is None:
        raise SchemaError("evaluate needs labeled predictions")
    keep = np.arange(labels.size)
    abstained = 0
    if args.abstain_file:
        payload = _load_json(args.abstain_file)
        dropped = np.asarray(payload["indices"], dtype=np.int64)
        keep = np.setdiff1d(keep, dropped)
        abstained = int(dropped.size)
    probs_arr = probs[keep]
    value = evaluate_metric(_metric_spec(args), probs_arr, labels[keep])
    print(json.dumps({"metric": args.metric, "value": value, "n": int(keep.size), "abstained": abstained}))
    return 0


def _cmd_experiment(args) -> int:
    spec = ExperimentSpec.from_json(args.spec)
    if args.output:
        spec = ExperimentSpec.from_dict({**spec.to_dict(), "output": args.output})
    paths = run_experiment(spec)
    print(json.dumps(paths))
    return 0


def _cmd_compare(args) -> int:
    with open(args.input, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise SchemaError(f"{args.input}: no rows")
    by_method: dict[str, list] = {}
    for row in rows:
        if args.budget is not None and float(row["budget"]) != args.budget:
            continue
        by_method.setdefault(row["method"], []).append(
            (int(row["seed"]), float(row["budget"]), float(row[args.column]))
        )
    values = {
        name: np.array([v for _, _, v in sorted(entries)])
        for name, entries in sorted(by_method.items())
    }
    result = compare_methods(values)
    payload = {
        "methods": list(result.method_names),
        "p_values": result.p_values.tolist(),
        "significant": result.significant.tolist(),
    }
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        print(f"wrote {args.output}")
    else:
        print(json.dumps(payload))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="abstainkit", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="emit a dataset CSV from a config JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("calibrate", help="fit a calibrator and save it as JSON")
    p.add_argument("--input", required=True, help="raw-score CSV (id,label,score or id,label,z_0..)")
    p.add_argument("--kind", default="platt", choices=["platt", "temperature", "bias_corrected_temperature"])
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("apply-calibrator", help="apply a saved calibrator to raw scores")
    p.add_argument("--input", required=True)
    p.add_argument("--calibrator", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_apply)

    p = sub.add_parser("adapt", help="label-shift adaptation of calibrated predictions")
    p.add_argument("--input", required=True)
    p.add_argument("--train-priors", required=True, help="comma-separated class priors")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_adapt)

    p = sub.add_parser("abstain", help="score + select an abstention set")
    p.add_argument("--input", required=True)
    p.add_argument("--method", required=True)
    p.add_argument("--metric", default="sens_at_spec", choices=["sens_at_spec", "auroc", "weighted_kappa"])
    p.add_argument("--budget", type=float, required=True, help="abstention fraction in [0, 1)")
    p.add_argument("--target-specificity", type=float, default=0.9)
    p.add_argument("--mc-samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--smooth", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--priors", default=None, help="comma-separated class priors for the JS baseline")
    p.add_argument("--output", default=None)
    p.set_defaults(func=_cmd_abstain)

    p = sub.add_parser("evaluate", help="recompute a metric on retained examples")
    p.add_argument("--input", required=True)
    p.add_argument("--metric", default="sens_at_spec", choices=["sens_at_spec", "auroc", "weighted_kappa"])
    p.add_argument("--target-specificity", type=float, default=0.9)
    p.add_argument("--abstain-file", default=None, help="JSON produced by the abstain subcommand")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("experiment", help="run a full grid from an ExperimentSpec JSON")
    p.add_argument("--spec", required=True)
    p.add_argument("--output", default=None, help="override the spec's output directory")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("compare", help="signed-rank p-value matrix from a results CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--column", default="post")
    p.add_argument("--budget", type=float, default=None, help="restrict to one budget fraction")
    p.add_argument("--output", default=None)
    p.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (AbstainkitError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
