"""End-to-end runs: synthesize, split, train, fit baselines, evaluate, compare."""

from __future__ import annotations

import json
import logging
import platform
import time
from pathlib import Path

import numpy as np
import torch

from .baselines import FrequencyRanker, LogisticRegressionRanker, NaiveBayesRanker, RecencyRanker
from .config import RunConfig
from .data import split
from .metrics import MetricsReport, evaluate_records, reports_to_csv, write_records
from .predictor import ClickPredictor
from .synth import OracleRanker, generate_corpus, write_corpus

log = logging.getLogger(__name__)

MODEL_NAME = "our_model"
DISPLAY_NAMES = {
    "recency": "Recency",
    "frequency": "Frequency",
    "global_frequency": "Global Frequency",
    "lr": "LR",
    "nb": "NB",
    MODEL_NAME: "Our Model",
    "oracle": "Bayes Oracle",
}


def package_version() -> str:
    from importlib.metadata import PackageNotFoundError, version

    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def make_baseline(name: str, config: RunConfig):
    seed = config.seed
    ev = config.eval_config()
    factories = {
        "recency": lambda: RecencyRanker(),
        "frequency": lambda: FrequencyRanker("personal"),
        "global_frequency": lambda: FrequencyRanker("global"),
        "lr": lambda: LogisticRegressionRanker(seed=seed, max_train_events=ev.lr_max_train_events),
        "nb": lambda: NaiveBayesRanker(seed=seed, max_train_events=ev.lr_max_train_events),
    }
    return factories[name]()


def write_run_manifest(out_dir: Path, config: RunConfig, command: str, extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "config": config.to_dict(),
        "config_digest": config.digest(),
        "seed": config.seed,
        "threads": config.threads,
        "version": package_version(),
        "python": platform.python_version(),
        "torch": torch.__version__,
        "numpy": np.__version__,
        **(extra or {}),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8")


def comparison_table(reports: dict[str, MetricsReport]) -> list[dict]:
    rows = []
    for name, rep in reports.items():
        rows.append({
            "model": DISPLAY_NAMES.get(name, name),
            "top1": round(rep.top1, 4),
            "top3": round(rep.top3, 4),
            "absolute_ranking": round(rep.absolute_ranking, 4),
            "relative_ranking": round(rep.relative_ranking, 4),
            "n_events": rep.n_events,
        })
    return rows


def end_to_end(config: RunConfig, out_dir) -> Path:
    """Run the whole comparison and write every artifact under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.set_num_threads(config.threads)
    t0 = time.perf_counter()
    world, users = generate_corpus(config.world_config())
    write_corpus(world, users, out / "corpus")
    train, valid, test = split([u.sequence for u in users], config.split_spec())
    ev = config.eval_config()

    predictions = out / "predictions"
    predictions.mkdir(exist_ok=True)
    reports: dict[str, MetricsReport] = {}
    for name in ev.baselines:
        log.info("fitting baseline %s", name)
        records = list(make_baseline(name, config).fit(train).predict_records(test))
        write_records(records, predictions / f"{name}.jsonl")
        reports[name] = evaluate_records(records)

    log.info("training the neural model")
    est = ClickPredictor(**config.estimator_params(), log_path=str(out / "train_log.csv"))
    est.fit(train, valid=valid)
    est.save(out / "model")
    records = list(est.predict_records(test))
    write_records(records, predictions / f"{MODEL_NAME}.jsonl")
    reports[MODEL_NAME] = evaluate_records(records)
    reports["oracle"] = evaluate_records(OracleRanker(users).predict_records(test))

    reports_to_csv(reports, out / "report.csv")
    (out / "report.json").write_text(
        json.dumps({k: v.to_dict() for k, v in reports.items()}, indent=1, sort_keys=True) + "\n", "utf-8"
    )
    table = comparison_table(reports)
    (out / "comparison.json").write_text(json.dumps(table, indent=1) + "\n", "utf-8")
    write_run_manifest(out, config, "run", {"elapsed_s": round(time.perf_counter() - t0, 1)})
    return out
