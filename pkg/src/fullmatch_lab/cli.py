"""Command-line entry point: train, ablate, gradcheck, export.

Every run directory is self-describing: a manifest holding the exact config
snapshot, seed, timestamps, and output paths, next to the metrics log and
final checkpoint.  Rerunning with the same config and seed reproduces the
metrics file byte for byte (wall-clock timings live in their own file).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, gradcheck, metrics
from .data import export_dataset, import_dataset
from .model import save_checkpoint
from .trainer import (
    ConfigError,
    ExperimentConfig,
    TrainingDivergenceError,
    build_dataset,
    config_to_text,
    load_config,
    parse_config_text,
    train,
)

MANIFEST_NAME = "manifest.json"
METRICS_NAME = "metrics.csv"
TIMINGS_NAME = "timings.csv"
SUMMARY_NAME = "summary.json"
CHECKPOINT_NAME = "final_params.txt"

ABLATION_METHOD_CELLS = [
    ("fixmatch", {"method": "fixmatch"}),
    ("eml_ce", {"method": "fixmatch+eml", "eml_variant": "ce"}),
    ("eml_bce", {"method": "fixmatch+eml", "eml_variant": "bce"}),
    ("anl_with_pl", {"method": "fixmatch+anl", "anl_scope": "with_pl"}),
    ("anl_without_pl", {"method": "fixmatch+anl", "anl_scope": "without_pl"}),
    ("anl_all", {"method": "fixmatch+anl", "anl_scope": "all"}),
    ("fullmatch", {"method": "fullmatch"}),
]
ABLATION_WEIGHT_GRID = (0.5, 1.0, 2.0)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _run_once(config: ExperimentConfig, out_dir: Path) -> dict:
    """Train one configuration and write the run directory."""
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema": 1,
        "code_version": __version__,
        "seed": config.seed,
        "config_text": config_to_text(config),
        "metrics_schema_version": metrics.METRICS_SCHEMA_VERSION,
        "entropy_bin_edges": [float(e) for e in metrics.default_entropy_bin_edges(config.data.num_classes)],
        "started_at": _now(),
        "outputs": {
            "metrics": METRICS_NAME,
            "timings": TIMINGS_NAME,
            "summary": SUMMARY_NAME,
            "checkpoint": CHECKPOINT_NAME,
        },
    }
    result = train(config, checkpoint_dir=str(out_dir))
    manifest["ended_at"] = _now()

    topk_list = config.topk_list()
    num_bins = metrics.default_entropy_bin_edges(config.data.num_classes).size - 1
    metrics.write_metrics_csv(out_dir / METRICS_NAME, result.metrics, topk_list, num_bins)
    metrics.write_timings_csv(out_dir / TIMINGS_NAME, result.metrics)
    save_checkpoint(result.params, out_dir / CHECKPOINT_NAME)

    accs = [rec.test_accuracy for rec in result.metrics]
    summary = {
        "final_test_accuracy": accs[-1] if accs else None,
        "mean_last10_test_accuracy": float(np.mean(accs[-10:])) if accs else None,
        "evaluations": len(accs),
        "method": config.method,
        "seed": config.seed,
    }
    with open(out_dir / SUMMARY_NAME, "w", encoding="ascii") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    with open(out_dir / MANIFEST_NAME, "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return summary


def cmd_train(config_path: str, out_dir: str, seed: int | None = None) -> int:
    path = Path(config_path)
    if not path.is_file():
        print(f"error: config file not found: {path}", file=sys.stderr)
        return 2
    try:
        config = load_config(path)
        if seed is not None:
            config.seed = seed
            config.validate()
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2
    try:
        summary = _run_once(config, Path(out_dir))
    except TrainingDivergenceError as exc:
        dump_path = Path(out_dir) / "divergence_dump.json"
        dump_path.parent.mkdir(parents=True, exist_ok=True)
        with open(dump_path, "w", encoding="ascii") as fh:
            json.dump(exc.dump, fh, indent=2)
        print(f"error: training diverged: {exc} (dump at {dump_path})", file=sys.stderr)
        return 3
    print(
        f"run complete: final test accuracy {summary['final_test_accuracy']}, "
        f"outputs in {out_dir}"
    )
    return 0


def _ablation_cells(base: ExperimentConfig) -> list[tuple[str, dict]]:
    cells = list(ABLATION_METHOD_CELLS)
    for alpha in ABLATION_WEIGHT_GRID:
        for beta in ABLATION_WEIGHT_GRID:
            cells.append(
                (f"fullmatch_a{alpha}_b{beta}", {"method": "fullmatch", "alpha": alpha, "beta": beta})
            )
    return cells


def cmd_ablate(config_path: str, out_dir: str, seeds: int) -> int:
    path = Path(config_path)
    if not path.is_file():
        print(f"error: config file not found: {path}", file=sys.stderr)
        return 2
    if seeds < 1:
        print("error: --seeds must be >= 1", file=sys.stderr)
        return 2
    try:
        base = load_config(path)
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed_list = [base.seed + i for i in range(seeds)]
    run_rows = []
    table_rows = []
    for name, overrides in _ablation_cells(base):
        cell_accs = []
        for seed in seed_list:
            config = dataclasses.replace(
                base,
                augment=dataclasses.replace(base.augment),
                data=dataclasses.replace(base.data),
                seed=seed,
                **overrides,
            )
            config.validate()
            result = train(config)
            acc = result.metrics[-1].test_accuracy if result.metrics else float("nan")
            cell_accs.append(acc)
            run_rows.append((name, seed, acc))
        cfg_view = dict(overrides)
        table_rows.append(
            {
                "cell": name,
                "method": cfg_view.get("method", base.method),
                "eml_variant": cfg_view.get("eml_variant", base.eml_variant),
                "anl_scope": cfg_view.get("anl_scope", base.anl_scope),
                "alpha": cfg_view.get("alpha", base.alpha),
                "beta": cfg_view.get("beta", base.beta),
                "mean_accuracy": float(np.mean(cell_accs)),
                "accuracies": cell_accs,
            }
        )
        print(f"{name:>22}: mean accuracy {np.mean(cell_accs):.4f} over {seeds} seed(s)")

    with open(out / "runs.csv", "w", encoding="ascii") as fh:
        fh.write("cell,seed,final_test_accuracy\n")
        for name, seed, acc in run_rows:
            fh.write(f"{name},{seed},{acc!r}\n")
    with open(out / "ablation.csv", "w", encoding="ascii") as fh:
        fh.write("cell,method,eml_variant,anl_scope,alpha,beta,mean_accuracy,per_seed_accuracies\n")
        for row in table_rows:
            per_seed = ";".join(repr(a) for a in row["accuracies"])
            fh.write(
                f"{row['cell']},{row['method']},{row['eml_variant']},{row['anl_scope']},"
                f"{row['alpha']},{row['beta']},{row['mean_accuracy']!r},{per_seed}\n"
            )
    print(f"ablation table written to {out / 'ablation.csv'}")
    return 0


def cmd_gradcheck(seed: int = 0, instances: int = 100) -> int:
    ok = True
    for result in gradcheck.run_loss_checks(seed, instances):
        status = "PASS" if result.passed else "FAIL"
        ok = ok and result.passed
        print(
            f"{result.family:>24}: max relative error {result.max_rel_error:.3e} "
            f"(tol {result.tolerance:.0e}, {result.instances} instances) {status}"
        )
    closed = gradcheck.run_closed_form_checks(seed, instances)
    status = "PASS" if closed.passed else "FAIL"
    ok = ok and closed.passed
    print(
        f"{closed.family:>24}: max relative error {closed.max_rel_error:.3e} "
        f"(tol {closed.tolerance:.0e}) {status}"
    )
    uniform_worst = max(gradcheck.uniform_row_closed_form_error(c) for c in (3, 10, 100))
    uniform_ok = uniform_worst <= 1e-12
    ok = ok and uniform_ok
    print(
        f"{'uniform_row_exact':>24}: max relative error {uniform_worst:.3e} "
        f"(tol 1e-12) {'PASS' if uniform_ok else 'FAIL'}"
    )
    negative, total = gradcheck.sign_report(seed)
    sign_ok = negative == total and total > 0
    ok = ok and sign_ok
    print(
        f"{'target_gradient_sign':>24}: {negative}/{total} negative when non-targets "
        f"below 0.5 {'PASS' if sign_ok else 'FAIL'}"
    )
    model_result = gradcheck.run_model_checks(seed)
    status = "PASS" if model_result.passed else "FAIL"
    ok = ok and model_result.passed
    print(
        f"{model_result.family:>24}: max relative error {model_result.max_rel_error:.3e} "
        f"(tol {model_result.tolerance:.0e}, {model_result.instances} networks) {status}"
    )
    return 0 if ok else 1


def cmd_export(run_dir: str, what: str) -> int:
    run = Path(run_dir)
    manifest_path = run / MANIFEST_NAME
    if not run.is_dir() or not manifest_path.is_file():
        print(f"error: {run} is not a completed run directory", file=sys.stderr)
        return 2
    if what == "curves":
        src = run / METRICS_NAME
        if not src.is_file():
            print(f"error: no metrics file in {run}", file=sys.stderr)
            return 2
        dest = run / "curves.csv"
        dest.write_bytes(src.read_bytes())
        print(f"curves written to {dest}")
        return 0
    if what == "dataset":
        with open(manifest_path, "r", encoding="ascii") as fh:
            manifest = json.load(fh)
        config = parse_config_text(manifest["config_text"])
        dataset = build_dataset(config)
        dest = run / "dataset.txt"
        export_dataset(dataset, dest)
        # Confirm the documented round-trip property before reporting success.
        reimported = import_dataset(dest)
        assert reimported.num_samples == dataset.num_samples
        print(f"dataset written to {dest}")
        return 0
    print(f"error: unknown export target {what!r}", file=sys.stderr)
    return 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fullmatch-lab",
        description="Desk-scale semi-supervised learning experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training configuration")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--seed", type=int, default=None)

    p_ablate = sub.add_parser("ablate", help="run the method and weight grids")
    p_ablate.add_argument("--config", required=True)
    p_ablate.add_argument("--out", required=True)
    p_ablate.add_argument("--seeds", type=int, required=True)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--instances", type=int, default=100)

    p_export = sub.add_parser("export", help="emit artifacts from a finished run")
    p_export.add_argument("--run", required=True)
    p_export.add_argument("--what", required=True, choices=["curves", "dataset"])

    args = parser.parse_args(argv)
    if args.command == "train":
        return cmd_train(args.config, args.out, args.seed)
    if args.command == "ablate":
        return cmd_ablate(args.config, args.out, args.seeds)
    if args.command == "gradcheck":
        return cmd_gradcheck(args.seed, args.instances)
    if args.command == "export":
        return cmd_export(args.run, args.what)
    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
