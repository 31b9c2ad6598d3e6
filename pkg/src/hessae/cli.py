"""Command line entry point: ``hessae {train,evaluate,ablate,compare,selftest}``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from . import persist, pipeline, selftest
from .config import (ABLATION_STAGES, ALL_STAGES, AUTOENCODER_STAGES, ConfigError,
                     ExperimentConfig, dump_config, load_config, preset)
from .dataset import load_table


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = preset(args.preset)
    else:
        cfg = ExperimentConfig()
    over = {}
    if args.dataset:
        over["dataset"] = args.dataset
    if args.label_col is not None:
        over["label_col"] = args.label_col
    if args.seed is not None:
        over["seed"] = args.seed
    if args.repeats is not None:
        over["repeats"] = args.repeats
    if args.epochs is not None:
        over["hessae"] = replace(cfg.hessae, epochs=args.epochs, finetune_epochs=None)
    cfg = replace(cfg, **over)
    if not cfg.dataset:
        raise ConfigError("no dataset: pass --dataset, --preset or a config file")
    return cfg


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--preset", help="built-in settings: pendigits, statlog, urban, ad")
    p.add_argument("--dataset", help="CSV file (or surrogate:ad)")
    p.add_argument("--label-col", help="label column: 0-based index, negative from the end, or name")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--repeats", type=int, help="number of hold-out repeats")
    p.add_argument("--epochs", type=int, help="override autoencoder epochs (quick runs)")
    p.add_argument("-v", "--verbose", action="store_true")


def _progress(r, stage, acc, dt):
    shown = "failed" if acc is None else f"{100 * acc:.2f}%"
    print(f"  repeat {r} {stage:<6} {shown:>8}  ({dt:.1f}s)", file=sys.stderr, flush=True)


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    stage = args.stage or "full"
    pipe, test = pipeline.train_pipeline(cfg, stage)
    acc = float(np.mean(pipeline.predict(pipe, test.features) == test.labels))
    out = args.out or "model.hsm"
    persist.save_model(out, pipe, cfg.to_dict(), cfg.seed)
    print(f"stage {stage}: hold-out accuracy {100 * acc:.2f}% ; model written to {out}")
    return 0


def cmd_evaluate(args) -> int:
    pipe, header = persist.load_model(args.model)
    label_col = args.label_col if args.label_col is not None else \
        (header.get("config") or {}).get("label_col", -1)
    if not args.dataset:
        raise ConfigError("evaluate needs --dataset")
    data = load_table(args.dataset, label_col)
    pred = pipeline.predict(pipe, data.features)
    acc = float(np.mean(pred == data.labels))
    print(f"stage {pipe.stage}: accuracy {100 * acc:.2f}% on {data.n_samples} rows")
    if args.out:
        np.savetxt(args.out, pred, fmt="%d")
    return 0


def _run(args, stages) -> int:
    cfg = _config_from_args(args)
    if args.stage:
        stages = tuple(args.stage)
    cfg = replace(cfg, stages=stages)
    report = pipeline.run_experiment(cfg, progress=_progress)
    print(report.to_text(), end="")
    if args.out:
        for p in report.write(args.out):
            print(f"wrote {p}")
    return 0 if all(s.failed == 0 for s in report.stages) else 1


def cmd_selftest(args) -> int:
    results = selftest.run_all(args.check or None)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hessae", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit one stage on a hold-out split and save the model")
    _common(p)
    p.add_argument("--stage", choices=ALL_STAGES, help="stage to fit (default full)")
    p.add_argument("--out", help="model file path (default model.hsm)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a saved model on a labelled CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset")
    p.add_argument("--label-col")
    p.add_argument("--out", help="write predicted labels, one per line")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    for name, stages, text in (("ablate", ABLATION_STAGES, "OF / DF / HF / HF&L1 / full table"),
                               ("compare", AUTOENCODER_STAGES, "SAE / SSAE / HESSAE / HESAE table")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--stage", action="append", choices=ALL_STAGES,
                       help="run these stages instead (repeatable)")
        p.add_argument("--out", help="report path prefix (.csv, .txt and .json are written)")
        p.set_defaults(func=lambda a, s=stages: _run(a, s))

    p = sub.add_parser("selftest", help="run the property suite")
    p.add_argument("--check", action="append", choices=list(selftest.CHECKS))
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("show-config", help="print the resolved configuration as YAML")
    _common(p)
    p.set_defaults(func=lambda a: print(dump_config(_config_from_args(a)), end="") or 0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, persist.ModelFileError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
