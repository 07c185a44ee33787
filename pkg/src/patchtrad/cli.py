"""Command-line entry point: ``patchtrad {train,score,eval,ablate,bench,synth}``.

Every command validates its configuration before touching the output
directory. Failures print one line ``error: <Class>: <detail>`` to stderr
and exit with the error family's code (2 config, 3 data, 4 numeric, 5 I/O).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .ablation import DEFAULT_GRID, parse_grid, run_ablation, write_ablation
from .bench import bench_latency
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, from_dict, load_config
from .detector import read_scores, write_scores
from .errors import ConfigError, DataError, PatchTradError
from .ingest import LabeledTimeSeries, load_csv, write_csv
from .metrics import EvalReport, evaluate, macro_average, roc_curve, write_report
from .pipeline import entries, fit, load_train, output_dir, run_dataset, score
from .synthetic import spike_benchmark

log = logging.getLogger("patchtrad")

IO_EXIT = 5


def _config(args, need_data: bool = True) -> RunConfig:
    if args.config is None:
        cfg = from_dict({}, args.set or ())
    else:
        cfg = load_config(args.config, args.set or ())
    return cfg.validate(need_data=need_data)


def _outdir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_loss_csv(path: Path, losses) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        for i, v in enumerate(losses, start=1):
            w.writerow([i, repr(float(v))])


def _roc(report: EvalReport, scores) -> tuple[np.ndarray, np.ndarray, float]:
    fpr, tpr = roc_curve(scores.score, scores.label)
    return fpr, tpr, report.auc


def cmd_train(args) -> int:
    cfg = _config(args)
    name, todo = entries(cfg)
    out = _outdir(output_dir(cfg, args.out))
    for entry in todo:
        target = _outdir(out / entry.name) if len(todo) > 1 else out
        result = fit(cfg, load_train(entry))
        save_checkpoint(result.state, target / "checkpoint.ptad", cfg.train.to_dict())
        write_loss_csv(target / "loss.csv", result.epoch_losses)
        plotting.plot_loss(result.epoch_losses, target / "loss.png")
        print(f"{entry.name}: trained {len(result.epoch_losses)} epochs, "
              f"final loss {result.epoch_losses[-1]:.6f} -> {target / 'checkpoint.ptad'}")
    return 0


def cmd_score(args) -> int:
    state = load_checkpoint(args.checkpoint)
    test = load_csv(args.test, label_column=args.label_column, ignore_columns=args.ignore_column or ())
    scores = score(state, test, args.batch_size)
    out = _outdir(Path(args.out))
    write_scores(out / "scores.csv", scores)
    plotting.plot_scores(scores, out / "scores.png")
    print(f"scored {len(scores)} observations -> {out / 'scores.csv'}")
    return 0


def cmd_eval(args) -> int:
    curves = {}
    if args.scores:
        reports = []
        for path in args.scores:
            s = read_scores(path)
            if s.label is None:
                raise DataError(f"{path}: score file has no label column")
            r = evaluate(Path(path).stem, s)
            reports.append(r)
            curves[r.dataset_name] = _roc(r, s)
        report = macro_average(reports, args.name) if len(reports) > 1 else reports[0]
    elif args.checkpoint:
        if not args.test:
            raise ConfigError("--checkpoint needs --test")
        state = load_checkpoint(args.checkpoint)
        test = load_csv(args.test, label_column=args.label_column, ignore_columns=args.ignore_column or ())
        if not isinstance(test, LabeledTimeSeries):
            raise DataError("evaluation needs a label column")
        s = score(state, test, args.batch_size)
        report = evaluate(args.name or Path(args.test).stem, s)
        curves[report.dataset_name] = _roc(report, s)
    else:
        cfg = _config(args)
        report, runs = run_dataset(cfg)
        for r in runs:
            curves[r.report.dataset_name] = _roc(r.report, r.scores)
        if args.out is None:
            args.out = str(output_dir(cfg))
    out = _outdir(Path(args.out or "."))
    write_report(report, out)
    plotting.plot_roc(curves, out / "roc.png")
    sys.stdout.write(report.to_text())
    return 0


def cmd_ablate(args) -> int:
    cfg = _config(args)
    grid = parse_grid(args.grid) if args.grid else (cfg.ablate.grid or DEFAULT_GRID)
    out = _outdir(output_dir(cfg, args.out))
    rows = run_ablation(cfg, grid)
    write_ablation(rows, out / "ablation.csv")
    plotting.plot_ablation(rows, out / "ablation.png")
    for r in rows:
        auc = "-" if r["auc"] is None else f"{r['auc']:.4f}"
        print(f"P_len={r['p_len']:>3} S={r['stride']:>3} auc={auc} {r['status']}")
    return 0


def cmd_bench(args) -> int:
    cfg = _config(args, need_data=False)
    windows = [int(w) for w in args.windows.split(",")] if args.windows else list(cfg.bench.window_sizes)
    batch = args.batch_size or cfg.bench.batch_size
    m = args.modalities or cfg.bench.n_modalities or 1
    patches = [cfg.patch_config(window=w) for w in windows]
    model_cfg = cfg.model_config(m)
    out = _outdir(output_dir(cfg, args.out))
    rows = bench_latency(model_cfg, [p.window_w for p in patches], batch, cfg.bench.warmup,
                         cfg.bench.iters, cfg.train.seed)
    with (out / "bench.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["window", "median_ms", "p90_ms"])
        for r in rows:
            w.writerow([r["window"], f"{r['median_ms']:.4f}", f"{r['p90_ms']:.4f}"])
    plotting.plot_bench(rows, out / "bench.png")
    for r in rows:
        print(f"w={r['window']:>4} median={r['median_ms']:.3f} ms p90={r['p90_ms']:.3f} ms flops={r['flops']}")
    return 0


def cmd_synth(args) -> int:
    train, test = spike_benchmark(args.train_len, args.test_len, args.modalities, args.spikes,
                                  args.magnitude, args.seed)
    out = _outdir(Path(args.out))
    write_csv(out / "train.csv", train)
    write_csv(out / "test.csv", test)
    print(f"wrote {out / 'train.csv'} ({train.T} rows) and {out / 'test.csv'} ({test.T} rows, "
          f"{test.n_pos} anomalies)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="patchtrad", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p, out_required=False):
        p.add_argument("--config", type=Path, help="YAML run configuration")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key, e.g. train.epochs=5 (repeatable)")
        p.add_argument("--out", required=out_required, help="output directory")

    def with_test(p):
        p.add_argument("--test", type=Path, help="test CSV")
        p.add_argument("--label-column", default=None)
        p.add_argument("--ignore-column", action="append", help="non-numeric column to drop (repeatable)")
        p.add_argument("--batch-size", type=int, default=256)

    p = sub.add_parser("train", help="train a model per dataset entry")
    with_config(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="write last-patch anomaly scores for a test CSV")
    p.add_argument("--checkpoint", type=Path, required=True)
    with_test(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="ROC-AUC report from score CSVs, a checkpoint, or a config")
    with_config(p)
    p.add_argument("--scores", action="append", type=Path, help="score CSV with labels (repeatable)")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--name", default=None, help="dataset name in the report")
    with_test(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="sweep (patch_len, stride) cells")
    with_config(p)
    p.add_argument("--grid", help="cells as P_LEN:STRIDE,...; default is the 14-cell reference grid")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench", help="inference latency per window size")
    with_config(p)
    p.add_argument("--windows", help="comma-separated window sizes")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--modalities", type=int, default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="write a synthetic multi-sine train/test pair with spikes")
    p.add_argument("--out", required=True)
    p.add_argument("--train-len", type=int, default=5000)
    p.add_argument("--test-len", type=int, default=2000)
    p.add_argument("--modalities", type=int, default=3)
    p.add_argument("--spikes", type=int, default=25)
    p.add_argument("--magnitude", type=float, default=8.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PatchTradError as exc:
        detail = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {detail}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: IOError: {exc}", file=sys.stderr)
        return IO_EXIT


if __name__ == "__main__":
    sys.exit(main())
