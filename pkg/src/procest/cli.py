"""Command-line entry point: ``procest simulate | train | eval | infer``.

Every command accepts ``--config FILE`` (JSON); explicit flags override
values from the file. The resolved configuration is written next to the
outputs so a run can be repeated from that file alone.

Exit codes: 0 success, 1 usage or configuration, 2 data, 3 numeric.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, ProcestError, UsageError
from .gmm import LossWeights, fit_gmm
from .inference import RHO_MIN, OnlineEstimator, ProgressReport, remaining_time
from .metrics import classification_report, completeness_error, remaining_time_error, two_set_many
from .model import ModelConfig, ProgressRegressor, load_model, save_model
from .simulator import (
    RESUSCITATION_MEANS,
    RESUSCITATION_PHASES,
    RESUSCITATION_STDS,
    SimulatorConfig,
    generate_dataset,
)
from .trace import FeatureFrame, ProcessTrace, label_completeness, load_dataset, parse_frame, parse_header
from .trace import save_dataset, split_dataset
from .training import TrainConfig, train

log = logging.getLogger("procest")

ALPHA_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


# -- configuration -------------------------------------------------------------


def _read_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"config {path} is not valid JSON: {e.msg}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return doc


def _section(cls, doc: dict, overrides: dict):
    """Build dataclass ``cls`` from ``doc`` with non-None ``overrides`` on top."""
    names = {f.name for f in fields(cls) if f.init}
    unknown = set(doc) - names
    if unknown:
        raise UsageError(f"unknown {cls.__name__} keys: {', '.join(sorted(unknown))}")
    merged = dict(doc)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls(**merged)
    except TypeError as e:
        raise UsageError(str(e)) from None


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UsageError(f"cannot create output directory {out}: {e.strerror}") from None
    return out


def threads() -> int:
    """Worker cap for evaluation, from ``PROCEST_THREADS`` (default 1)."""
    raw = os.environ.get("PROCEST_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"PROCEST_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("PROCEST_THREADS must be >= 1")
    return n


# -- simulate --------------------------------------------------------------------


def simulator_config(args) -> SimulatorConfig:
    doc = _read_config(args.config).get("simulator", {})
    if args.preset == "resuscitation":
        doc = {
            "num_phases": 6,
            "phase_names": list(RESUSCITATION_PHASES),
            "phase_duration_means": list(RESUSCITATION_MEANS),
            "phase_duration_stds": list(RESUSCITATION_STDS),
            "boundary_start": True,
            "boundary_end": True,
            **doc,
        }
    return _section(SimulatorConfig, doc, {
        "seed": args.seed,
        "num_traces": args.cases,
        "num_phases": args.phases,
        "feature_dim": args.features,
        "frame_rate": args.frame_rate,
        "emission_separation": args.separation,
        "noise_std": args.noise,
        "boundary_start": args.boundary_start,
        "boundary_end": args.boundary_end,
    })


def cmd_simulate(args) -> int:
    cfg = simulator_config(args)
    out = _out_dir(args.out)
    traces = generate_dataset(cfg)
    paths = save_dataset(traces, out)
    _write_json(out / "config.json", {"simulator": cfg.to_dict()})
    _write_json(out / "manifest.json", {
        "num_traces": len(traces),
        "feature_dim": cfg.feature_dim,
        "phases": list(cfg.phase_names),
        "traces": [{"id": t.id, "file": p.name, "frames": len(t), "duration_s": t.duration}
                   for t, p in zip(traces, paths)],
    })
    log.info("wrote %d traces to %s", len(traces), out)
    return 0


# -- train -----------------------------------------------------------------------


def run_configs(args, feature_dim: int) -> tuple[ModelConfig, TrainConfig, LossWeights, dict]:
    """Model, training, loss and split settings from ``--config`` plus flags."""
    doc = _read_config(args.config)
    seed = args.seed
    model_doc = {"feature_dim": feature_dim, **doc.get("model", {})}
    mcfg = _section(ModelConfig, model_doc, {"activation": args.activation, "seed": seed})
    tcfg = _section(TrainConfig, doc.get("train", {}), {
        "seed": seed, "max_epochs": args.max_epochs, "learning_rate": args.lr,
    })
    wdoc = doc.get("loss", {})
    weights = _section(LossWeights, wdoc, {"alpha": args.alpha, "beta": args.beta})
    split = {"test_fraction": 0.2, "equal_variance": True, "seed": tcfg.seed, **doc.get("split", {})}
    if args.test_fraction is not None:
        split["test_fraction"] = args.test_fraction
    if args.equal_variance is not None:
        split["equal_variance"] = args.equal_variance
    return mcfg, tcfg, weights, split


def _load(path) -> list[ProcessTrace]:
    p = Path(path)
    if not p.is_dir():
        raise DataError(f"dataset directory {p} does not exist")
    return load_dataset(p)


def fit_and_train(traces, mcfg, tcfg, weights, split):
    """Split, fit the phase mixture on the train part and train a fresh model."""
    train_set, test_set = split_dataset(traces, split["test_fraction"], split["seed"])
    gmm = fit_gmm(train_set, equal_variance=split["equal_variance"])
    model = ProgressRegressor(mcfg)
    model, history = train(model, train_set, gmm, tcfg, weights)
    return model, gmm, history, train_set, test_set


def cmd_train(args) -> int:
    traces = _load(args.data)
    mcfg, tcfg, weights, split = run_configs(args, traces[0].feature_dim)
    out = _out_dir(args.out)
    model, gmm, history, train_set, test_set = fit_and_train(traces, mcfg, tcfg, weights, split)
    resolved = {"model": asdict(mcfg), "train": asdict(tcfg), "loss": asdict(weights), "split": split}
    # the model file holds no paths, so reruns elsewhere produce identical bytes
    save_model(out / "model.json", model, gmm, resolved)
    _write_json(out / "config.json", {"data": str(args.data), **resolved})
    _write_json(out / "split.json", {"train": [t.id for t in train_set], "test": [t.id for t in test_set]})
    with open(out / "train_log.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "active_cases", "loss_c", "loss_p", "total"])
        for r in history:
            w.writerow([r.epoch, r.active_cases, repr(r.loss_c), repr(r.loss_p), repr(r.total)])
    log.info("trained %d epochs; model written to %s", len(history), out / "model.json")
    return 0


# -- eval ------------------------------------------------------------------------


def oracle_reports(trace: ProcessTrace, rho_min: float = RHO_MIN) -> list[ProgressReport]:
    """Reports that pass ground truth straight through (a perfect model)."""
    labels = label_completeness(trace)
    phases = trace.phase_per_frame()
    tau = trace.times - trace.times[0]
    return [
        ProgressReport(float(t), float(c), trace.schema.phases[p], int(p), remaining_time(float(c), float(e), rho_min))
        for t, c, p, e in zip(trace.times, labels, phases, tau)
    ]


def model_reports(model, gmm, trace: ProcessTrace) -> list[ProgressReport]:
    return OnlineEstimator(model, gmm).run(trace.frames)


def evaluate(traces: Sequence[ProcessTrace], report_fn, n_threads: int = 1) -> dict:
    """Run ``report_fn(trace)`` on every trace and compute the full metric set.

    Traces may be processed concurrently; results are merged in input order.
    """
    if not traces:
        raise DataError("nothing to evaluate")
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            reports = list(pool.map(report_fn, traces))
    else:
        reports = [report_fn(t) for t in traces]
    gt_ph = [t.phase_per_frame() for t in traces]
    pr_ph = [np.array([r.phase_index for r in rs]) for rs in reports]
    labels = np.concatenate([label_completeness(t) for t in traces])
    est = np.concatenate([[r.completeness for r in rs] for rs in reports])
    cls = classification_report(np.concatenate(gt_ph), np.concatenate(pr_ph))
    seg = two_set_many(gt_ph, pr_ph)
    comp = completeness_error(labels, est, np.concatenate(gt_ph),
                              np.concatenate([t.normalized_time() for t in traces]))
    rem = remaining_time_error(traces, [[r.remaining_s for r in rs] for rs in reports])
    jumps = int(sum(np.count_nonzero(np.abs(np.diff(p)) > 1) for p in pr_ph))
    return {
        "traces": len(traces),
        "frames": int(labels.size),
        "classification": cls.to_dict(),
        "segments": seg.to_dict(),
        "nonadjacent_jumps": jumps,
        "completeness": comp.to_dict(),
        "remaining_time": rem.to_dict(),
    }


def report_text(rep: dict) -> str:
    c = rep["classification"]
    s = rep["segments"]
    r = rep["remaining_time"]
    rem = "n/a" if r["overall_s"] is None else f"{r['overall_s']:.2f} s"
    lines = [
        f"traces            {rep['traces']}",
        f"frames            {rep['frames']}",
        f"completeness MAE  {rep['completeness']['overall']:.4f}",
        f"accuracy          {c['accuracy']:.4f}",
        f"precision         {c['precision']:.4f}",
        f"recall            {c['recall']:.4f}",
        f"F1                {c['f1']:.4f}",
        f"informedness      {c['informedness']:.4f}",
        f"markedness        {c['markedness']:.4f}",
        f"MCC               {c['mcc']:.4f}",
        f"fragmentation     {s['fragmentation']:.6f}",
        f"under-fill        {s['under_fill']:.6f}",
        f"over-fill         {s['over_fill']:.6f}",
        f"non-adjacent      {rep['nonadjacent_jumps']}",
        f"remaining error   {rem} ({r['excluded']} frames unknown)",
    ]
    return "\n".join(lines) + "\n"


def _select(traces, split_file: Optional[str], which: str):
    if split_file is None:
        return traces
    try:
        ids = json.loads(Path(split_file).read_text(encoding="utf-8"))[which]
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise DataError(f"cannot read {which!r} ids from {split_file}: {e}") from None
    by_id = {t.id: t for t in traces}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise DataError(f"split lists traces not in the dataset: {', '.join(missing[:5])}")
    return [by_id[i] for i in ids]


def cmd_eval(args) -> int:
    traces = _load(args.data)
    out = _out_dir(args.out)
    n_threads = threads()
    if args.sweep_alpha_beta:
        mcfg, tcfg, _, split = run_configs(args, traces[0].feature_dim)
        rows = []
        for a in ALPHA_GRID:
            weights = LossWeights(a, round(1.0 - a, 10))
            model, gmm, _, _, test_set = fit_and_train(traces, mcfg, tcfg, weights, split)
            rep = evaluate(test_set, lambda t: model_reports(model, gmm, t), n_threads)
            rows.append({"alpha": weights.alpha, "beta": weights.beta,
                         "mae": rep["completeness"]["overall"],
                         "accuracy": rep["classification"]["accuracy"],
                         "f1": rep["classification"]["f1"]})
        _write_json(out / "config.json", {"model": asdict(mcfg), "train": asdict(tcfg), "split": split,
                                          "alpha_grid": list(ALPHA_GRID)})
        _write_json(out / "sweep.json", rows)
        text = "alpha  beta   MAE     accuracy  F1\n" + "".join(
            f"{r['alpha']:.1f}    {r['beta']:.1f}    {r['mae']:.4f}  {r['accuracy']:.4f}    {r['f1']:.4f}\n" for r in rows
        )
        (out / "sweep.txt").write_text(text, encoding="utf-8")
        sys.stdout.write(text)
        return 0

    selected = _select(traces, args.split, args.subset)
    if args.oracle:
        rep = evaluate(selected, oracle_reports, n_threads)
        source = "oracle"
    else:
        if args.model is None:
            raise UsageError("eval needs --model (or --oracle / --sweep-alpha-beta)")
        model, gmm = load_model(args.model)
        if gmm.schema != selected[0].schema:
            raise DataError("model phase schema does not match the dataset")
        if model.config.feature_dim != selected[0].feature_dim:
            raise DataError(
                f"model expects {model.config.feature_dim} features, dataset has {selected[0].feature_dim}"
            )
        rep = evaluate(selected, lambda t: model_reports(model, gmm, t), n_threads)
        source = str(args.model)
    _write_json(out / "config.json", {"model": source, "data": str(args.data), "split": args.split,
                                      "subset": args.subset if args.split else None, "threads": n_threads})
    _write_json(out / "report.json", rep)
    text = report_text(rep)
    (out / "report.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


# -- infer -----------------------------------------------------------------------


def cmd_infer(args) -> int:
    model, gmm = load_model(args.model)
    est = OnlineEstimator(model, gmm)
    dim = model.config.feature_dim
    stream = sys.stdin
    out = sys.stdout
    for lineno, line in enumerate(stream, 1):
        if not line.strip():
            continue
        if lineno == 1 and args.header:
            head = parse_header(line, lineno)
            if head["feature_dim"] != dim:
                raise DataError(f"line 1: trace has {head['feature_dim']} features, model expects {dim}")
            continue
        t, x = parse_frame(line, dim, lineno)
        try:
            rep = est.step(FeatureFrame(t, np.asarray(x)))
        except DataError as e:
            raise DataError(f"line {lineno}: {e}") from None
        out.write(json.dumps(rep.to_dict(), allow_nan=False) + "\n")
        out.flush()
    return 0


# -- argument parsing ------------------------------------------------------------


def _bool_flag(p, name: str, help: str):
    p.add_argument(f"--{name}", dest=name.replace("-", "_"), action=argparse.BooleanOptionalAction,
                   default=None, help=help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="procest", description="Progress estimation for sequential processes.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="JSON file with a 'simulator' section")
    p.add_argument("--preset", choices=["resuscitation"], help="phase layout preset")
    p.add_argument("--seed", type=int)
    p.add_argument("--cases", type=int, help="number of traces")
    p.add_argument("--phases", type=int, help="number of phases")
    p.add_argument("--features", type=int, help="feature dimension")
    p.add_argument("--frame-rate", type=float, help="frames per second")
    p.add_argument("--separation", type=float, help="distance between phase emission means")
    p.add_argument("--noise", type=float, help="per-feature noise std")
    _bool_flag(p, "boundary-start", "first phase is a pre-start phase")
    _bool_flag(p, "boundary-end", "last phase is an end phase")
    p.set_defaults(func=cmd_simulate)

    def training_flags(p):
        p.add_argument("--config", help="JSON file with model/train/loss/split sections")
        p.add_argument("--seed", type=int)
        p.add_argument("--alpha", type=float, help="weight of the completeness loss (default 0.6)")
        p.add_argument("--beta", type=float, help="weight of the phase loss (default 0.4)")
        p.add_argument("--activation", choices=["rtanh", "sigmoid"])
        p.add_argument("--max-epochs", type=int)
        p.add_argument("--lr", type=float, help="Adam learning rate")
        p.add_argument("--test-fraction", type=float, help="share of traces held out (default 0.2)")
        _bool_flag(p, "equal-variance", "share one std and weight across mixture kernels (default on)")

    p = sub.add_parser("train", help="fit the phase mixture and train the regressor")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output directory")
    training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a dataset")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--model", help="model file")
    p.add_argument("--split", help="split.json written by train")
    p.add_argument("--subset", choices=["train", "test"], default="test", help="part of the split to use")
    p.add_argument("--oracle", action="store_true", help="score ground truth passed through as the estimate")
    p.add_argument("--sweep-alpha-beta", action="store_true",
                   help="train and evaluate one model per alpha in 0, 0.2, ..., 1 with beta = 1 - alpha")
    training_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="stream frame lines from stdin, write one report per line")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--header", action="store_true", help="first input line is a trace header")
    p.set_defaults(func=cmd_infer)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ProcestError as e:
        print(f"procest: error: {e}", file=sys.stderr)
        return e.exit_code
    except BrokenPipeError:
        # the reader went away (e.g. piped into head); silence the final flush
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0


if __name__ == "__main__":
    sys.exit(main())
