"""Command-line entry point: ``nextclick <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .exceptions import ConfigError, NextClickError

log = logging.getLogger("nextclick")

LOG_ENV = "NEXTCLICK_LOG_LEVEL"
SUBCOMMANDS = ("ingest", "synth", "train", "predict", "eval", "ablate", "baseline", "run")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--config", help="run-config file (JSON or YAML)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--threads", type=int, help="torch intra-op threads (overrides the config)")
    p.add_argument("--out", required=out_required, help="output file or directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="nextclick", description="Next-click prediction toolkit.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="{" + ",".join(SUBCOMMANDS) + "}")

    p = sub.add_parser("ingest", help="flatten raw view-hierarchy click logs into canonical JSONL")
    p.add_argument("--in", dest="in_dir", required=True, help="directory of raw *.json / *.jsonl logs")
    _common(p)

    p = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    _common(p)

    p = sub.add_parser("train", help="train the neural model on a corpus")
    p.add_argument("--data", required=True, help="canonical events JSONL")
    p.add_argument("--max-steps", type=int, help="override training.max_steps")
    _common(p)

    p = sub.add_parser("predict", help="emit per-event probability/rank records")
    p.add_argument("--model", required=True, help="trained model directory")
    p.add_argument("--data", required=True, help="canonical events JSONL")
    p.add_argument("--split", choices=("train", "valid", "test", "all"), default="all")
    p.add_argument("--no-probabilities", action="store_true", help="omit probability vectors")
    _common(p)

    p = sub.add_parser("eval", help="score prediction records")
    p.add_argument("--predictions", nargs="+", required=True, help="record files, optionally NAME=PATH")
    p.add_argument("--dump-events", action="store_true", help="also write per-event outcomes")
    _common(p)

    p = sub.add_parser("ablate", help="train (if needed) and evaluate ablation variants")
    p.add_argument("--data", required=True, help="canonical events JSONL")
    p.add_argument("--variants", nargs="*", help="variant names (default: all)")
    p.add_argument("--eval-only", action="store_true", help="only evaluate existing checkpoints")
    _common(p)

    p = sub.add_parser("baseline", help="fit and evaluate reference predictors")
    p.add_argument("--data", required=True, help="canonical events JSONL")
    p.add_argument("--which", nargs="*", help="baselines (default: config eval.baselines)")
    _common(p)

    p = sub.add_parser("run", help="synth, train, fit baselines and compare, end to end")
    _common(p)
    return parser


def _load_config(args):
    from .config import RunConfig

    config = RunConfig.load(args.config) if args.config else RunConfig()
    return config.with_overrides(seed=args.seed, threads=args.threads)


def _splits(config, data_path):
    from .data import split
    from .types import read_jsonl

    corpus = read_jsonl(data_path)
    if not corpus:
        raise ConfigError(f"no events in {data_path}")
    return corpus, split(corpus, config.split_spec())


def _write_reports(reports: dict, out: Path) -> None:
    from .metrics import reports_to_csv

    out.mkdir(parents=True, exist_ok=True)
    reports_to_csv(reports, out / "report.csv")
    (out / "report.json").write_text(
        json.dumps({k: v.to_dict() for k, v in reports.items()}, indent=1, sort_keys=True) + "\n", "utf-8"
    )


def cmd_ingest(args, config) -> None:
    from .ingest import ingest_directory

    seqs = ingest_directory(args.in_dir, args.out)
    log.info("wrote %d sequences (%d events) to %s", len(seqs), sum(len(s) for s in seqs), args.out)


def cmd_synth(args, config) -> None:
    from .pipeline import write_run_manifest
    from .synth import cross_app_fraction, generate_corpus, write_corpus

    world, users = generate_corpus(config.world_config())
    out = write_corpus(world, users, args.out)
    write_run_manifest(out, config, "synth", {"cross_app_fraction": round(cross_app_fraction([u.sequence for u in users]), 6)})


def cmd_train(args, config) -> None:
    import torch

    from .pipeline import write_run_manifest
    from .predictor import ClickPredictor

    torch.set_num_threads(config.threads)
    _, (train, valid, _) = _splits(config, args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = config.estimator_params()
    if args.max_steps is not None:
        params["max_steps"] = args.max_steps
    est = ClickPredictor(**params, log_path=str(out / "train_log.csv")).fit(train, valid=valid)
    est.save(out)
    write_run_manifest(out, config, "train", {"data": str(args.data), "best_step": est.best_step_})


def cmd_predict(args, config) -> None:
    from .metrics import write_records
    from .predictor import ClickPredictor

    est = ClickPredictor.load(args.model)
    corpus, parts = _splits(config, args.data)
    data = corpus if args.split == "all" else parts[("train", "valid", "test").index(args.split)]
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_records(est.predict_records(data, with_probabilities=not args.no_probabilities), args.out)


def cmd_eval(args, config) -> None:
    from .metrics import evaluate_records, outcome_of, read_records

    reports = {}
    out = Path(args.out)
    for spec in args.predictions:
        name, _, path = spec.rpartition("=")
        name = name or Path(path).stem
        records = read_records(path)
        reports[name] = evaluate_records(records)
        if args.dump_events:
            out.mkdir(parents=True, exist_ok=True)
            with open(out / f"{name}.events.jsonl", "w", encoding="utf-8") as fh:
                for r in records:
                    o = outcome_of(r)
                    fh.write(json.dumps({"user_id": r.user_id, "event_index": r.event_index,
                                         "target_rank": o.target_rank, "n_candidates": o.n_candidates,
                                         "spatial_rank": o.spatial_rank, "app_id": o.app_id,
                                         "cross_app": o.cross_app}) + "\n")
    _write_reports(reports, out)


def cmd_ablate(args, config) -> None:
    from .ablation import ablation_variants, run_ablations, train_ablations
    from .pipeline import write_run_manifest

    _, (train, valid, test) = _splits(config, args.data)
    variants = ablation_variants(config.estimator_params())
    names = args.variants or list(config.eval_config().ablations) or list(variants)
    unknown = [n for n in names if n not in variants]
    if unknown:
        raise ConfigError(f"unknown ablation variants: {unknown}; choose from {sorted(variants)}")
    out = Path(args.out)
    if not args.eval_only:
        todo = [n for n in names if not (out / n / "model.ckpt").exists()]
        train_ablations(train, valid, variants, out, todo)
    reports = run_ablations(test, {n: out / n for n in names})
    _write_reports(reports, out)
    write_run_manifest(out, config, "ablate", {"variants": names})


def cmd_baseline(args, config) -> None:
    from .metrics import evaluate_records, write_records
    from .pipeline import make_baseline

    _, (train, _, test) = _splits(config, args.data)
    names = args.which or list(config.eval_config().baselines)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = {}
    for name in names:
        if name not in ("recency", "frequency", "global_frequency", "lr", "nb"):
            raise ConfigError(f"unknown baseline {name!r}")
        records = list(make_baseline(name, config).fit(train).predict_records(test))
        write_records(records, out / f"{name}.jsonl")
        reports[name] = evaluate_records(records)
    _write_reports(reports, out)


def cmd_run(args, config) -> None:
    from .pipeline import end_to_end

    end_to_end(config, args.out)


COMMANDS = {
    "ingest": cmd_ingest, "synth": cmd_synth, "train": cmd_train, "predict": cmd_predict,
    "eval": cmd_eval, "ablate": cmd_ablate, "baseline": cmd_baseline, "run": cmd_run,
}


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get(LOG_ENV, "WARNING").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("nextclick: error: a subcommand is required")
    except UsageError as exc:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        print(exc, file=sys.stderr)
        return 1
    try:
        config = _load_config(args)
        COMMANDS[args.command](args, config)
    except (NextClickError, OSError, ValueError, KeyError) as exc:
        print(f"nextclick {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
