"""Command-line entry point: ``gnnplus train|eval|ablate|gradcheck|gen-data``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .config import RunSpec, load_run_spec
from .errors import DatasetError, GNNPlusError, SchemaError
from .graph import (
    Dataset,
    dataset_summary,
    generate_regression_task,
    generate_sbm_node_task,
    load_dataset,
    save_dataset,
)
from .model import GNNPlus, build_model, load_checkpoint, save_checkpoint
from .rwse import attach_rwse
from .training import TrainResult, evaluate, make_batches, train

logger = logging.getLogger("gnnplus")

LOG_FIELDS = ("epoch", "lr", "train_loss", "val_metric", "test_metric")
ABLATIONS = (
    ("base", None),
    ("(-) Edge", "use_edge_features"),
    ("(-) Norm", "use_norm"),
    ("(-) Dropout", "dropout_rate"),
    ("(-) RC", "use_residual"),
    ("(-) FFN", "use_ffn"),
    ("(-) PE", "use_pe"),
)


# ---------------------------------------------------------------------------
# shared run logic

@dataclass
class RunOutcome:
    model: GNNPlus
    result: TrainResult
    dataset: Dataset
    wall_seconds: float

    def summary(self) -> dict:
        r = self.result
        return {"metric": r.metric, "test_metric": r.test_metric, "val_metric": r.val_metric,
                "epoch_of_best": r.best_epoch, "num_parameters": self.model.num_parameters(),
                "wall_seconds": self.wall_seconds}


def run_spec(spec: RunSpec, dataset: Dataset | None = None, verbose: bool = False) -> RunOutcome:
    """Build the model described by ``spec`` and train it."""
    dataset = spec.data.load() if dataset is None else dataset
    model = build_model(spec.model, dataset.meta)
    start = time.perf_counter()
    result = train(model, dataset, spec.train, verbose=verbose)
    return RunOutcome(model, result, dataset, time.perf_counter() - start)


def _fmt(v) -> str:
    # repr round-trips floats exactly, which keeps logs byte-comparable
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def log_to_csv(log: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_FIELDS)
    for row in log:
        w.writerow([_fmt(row[k]) for k in LOG_FIELDS])
    return buf.getvalue()


def write_run(outcome: RunOutcome, spec: RunSpec, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "log.csv").write_text(log_to_csv(outcome.result.log), encoding="utf-8")
    r = outcome.result
    save_checkpoint(out_dir / "checkpoint.bin", outcome.model, r.best_state,
                    extra={"train": spec.train.to_json(), "epoch_of_best": r.best_epoch,
                           "metric": r.metric})
    summary = outcome.summary()
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
    return summary


# ---------------------------------------------------------------------------
# commands

def _spec_from_args(args) -> RunSpec:
    spec = load_run_spec(args.config)
    if args.seed is not None:
        spec = spec.with_seed(args.seed)
    if args.out is not None:
        spec = replace(spec, out_dir=Path(args.out))
    return spec


def cmd_train(args) -> int:
    spec = _spec_from_args(args)
    outcome = run_spec(spec, verbose=args.verbose)
    summary = write_run(outcome, spec, spec.out_dir)
    print(json.dumps(summary, sort_keys=True))
    return 0


def _eval_dataset(args) -> Dataset:
    if args.data is not None:
        return load_dataset(args.data)
    if args.config is not None:
        return load_run_spec(args.config).data.load()
    raise DatasetError("eval needs --data or --config to locate the dataset")


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    dataset = _eval_dataset(args)
    if dataset.meta != model.meta:
        raise SchemaError(f"checkpoint schema {model.meta.to_json()} does not match "
                          f"dataset schema {dataset.meta.to_json()}")
    if args.split not in dataset.splits:
        raise DatasetError(f"unknown split {args.split!r}; "
                           f"available: {sorted(dataset.splits)}")
    graphs = dataset.split(args.split)
    if model.config.flags.use_pe:
        attach_rwse(graphs, model.config.pe_steps)
    metrics = evaluate(model, make_batches(graphs, dataset.task))
    print(json.dumps(metrics, sort_keys=True))
    return 0


def _flag_active(flags, name: str) -> bool:
    value = getattr(flags, name)
    return value > 0 if name == "dropout_rate" else bool(value)


def ablation_rows(spec: RunSpec, dataset: Dataset, verbose: bool = False) -> list[dict]:
    """Base run plus one run per disabled technique, in a fixed order."""
    rows = []
    base = None
    for label, flag in ABLATIONS:
        if flag is None:
            outcome = run_spec(spec, dataset, verbose)
            status = "base"
        elif not _flag_active(spec.model.flags, flag):
            outcome, status = base, "not active"
        else:
            off = 0.0 if flag == "dropout_rate" else False
            outcome = run_spec(spec.with_flags(**{flag: off}), dataset, verbose)
            status = "run"
        if base is None:
            base = outcome
        r, b = outcome.result, base.result
        delta = r.test_metric - b.test_metric
        rel = delta / abs(b.test_metric) * 100.0 if b.test_metric else float("nan")
        rows.append({"variant": label, "status": status, "metric": r.metric,
                     "val_metric": r.val_metric, "test_metric": r.test_metric,
                     "delta": delta, "delta_pct": rel, "epoch_of_best": r.best_epoch})
    return rows


ABLATION_FIELDS = ("variant", "status", "metric", "val_metric", "test_metric", "delta",
                   "delta_pct", "epoch_of_best")


def ablation_text(rows: list[dict]) -> str:
    header = ["variant", "status", "metric", "val", "test", "delta", "delta %"]
    body = [[r["variant"], r["status"], r["metric"], f"{r['val_metric']:.4f}",
             f"{r['test_metric']:.4f}", f"{r['delta']:+.4f}", f"{r['delta_pct']:+.2f}%"]
            for r in rows]
    widths = [max(len(str(x)) for x in col) for col in zip(header, *body)]
    lines = ["  ".join(str(x).ljust(w) for x, w in zip(line, widths)).rstrip()
             for line in [header, *body]]
    return "\n".join(lines) + "\n"


def cmd_ablate(args) -> int:
    spec = _spec_from_args(args)
    dataset = spec.data.load()
    rows = ablation_rows(spec, dataset, args.verbose)
    out = spec.out_dir
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ABLATION_FIELDS)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in ABLATION_FIELDS])
    (out / "ablation.csv").write_text(buf.getvalue(), encoding="utf-8")
    text = ablation_text(rows)
    (out / "ablation.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_gradcheck(args) -> int:
    from . import gradcheck as gc

    failing = []
    print("per-op checks")
    for res in gc.check_ops(args.seed or 0):
        mark = "ok" if res.passed else "FAIL"
        print(f"  {res.name:<14} worst rel err {res.error:.3e}  {mark}")
        if not res.passed:
            failing.append(res.name)
    backbones = args.backbones.split(",") if args.backbones else gc.BACKBONES
    print("model checks (flags: E=edge N=norm D=dropout R=residual F=ffn P=pe)")
    bad_models = []

    def progress(res):
        mark = "ok" if res.passed else "FAIL"
        print(f"  {res.name:<22} worst rel err {res.error:.3e} ({res.worst_tensor})  {mark}")
        if not res.passed:
            bad_models.append(res.name)

    results = gc.check_models(backbones, seed=args.seed or 0, progress=progress)
    worst = max(results, key=lambda r: r.error)
    print(f"{len(results)} model combinations, worst {worst.error:.3e} in {worst.name}")
    if failing or bad_models:
        if failing:
            print("failing ops: " + ", ".join(failing), file=sys.stderr)
        if bad_models:
            print(f"failing model combinations: {len(bad_models)} "
                  f"(first: {bad_models[0]})", file=sys.stderr)
        return 1
    print("all gradient checks passed")
    return 0


def cmd_gen_data(args) -> int:
    seed = 0 if args.seed is None else args.seed
    if args.kind == "sbm":
        ds = generate_sbm_node_task(args.num_graphs, args.nodes, args.blocks, args.p_intra,
                                    args.p_inter, args.noise, rng=seed)
    else:
        ds = generate_regression_task(args.num_graphs, (args.min_nodes, args.max_nodes),
                                      rng=seed, edge_prob=args.edge_prob)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out)
    s = dataset_summary(ds)
    print(f"{'# graphs':>10}  {'Avg. # nodes':>12}  {'Avg. # edges':>12}  task")
    print(f"{s['graphs']:>10}  {s['avg_nodes']:>12.1f}  {s['avg_edges']:>12.1f}  {s['task']}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="override every seed in the run")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS/OpenMP threads")
    p.add_argument("--out", default=None, help="output directory (or file for gen-data)")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gnnplus", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one configuration")
    p.add_argument("--config", required=True)
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", default=None, help="JSON Lines dataset")
    p.add_argument("--config", default=None, help="run file whose [data] section to use")
    p.add_argument("--split", default="test")
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="base run plus one run per removed technique")
    p.add_argument("--config", required=True)
    _common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of all backward rules")
    p.add_argument("--backbones", default=None, help="comma-separated subset")
    _common(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("gen-data", help="write a synthetic dataset")
    p.add_argument("--kind", choices=("sbm", "regression"), required=True)
    p.add_argument("--num-graphs", type=int, default=100)
    p.add_argument("--nodes", type=int, default=40, help="sbm: nodes per graph")
    p.add_argument("--blocks", type=int, default=4, help="sbm: number of blocks")
    p.add_argument("--p-intra", type=float, default=0.3)
    p.add_argument("--p-inter", type=float, default=0.05)
    p.add_argument("--noise", type=float, default=0.5, help="sbm: feature masking rate")
    p.add_argument("--min-nodes", type=int, default=6, help="regression: smallest graph")
    p.add_argument("--max-nodes", type=int, default=14, help="regression: largest graph")
    p.add_argument("--edge-prob", type=float, default=0.3)
    _common(p)
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "gen-data" and args.out is None:
        parser.error("gen-data needs --out")
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except (GNNPlusError, OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"gnnplus {args.command}: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
