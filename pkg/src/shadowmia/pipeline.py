"""End-to-end experiment: data -> victim -> shadow -> attack -> report.

Every stage reads and writes fixed file names inside one output directory,
so a run can be resumed or inspected stage by stage.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

from . import attack as atk
from .config import ExperimentConfig
from .dataset import Dataset, DatasetSplit, generate_synthetic, load_csv, split_three_way, write_csv
from .errors import ConfigError, DataError, tag_stage
from .metrics import AttackReport, build_report
from .model import Architecture, ModelParams, evaluate_accuracy, init_params, train

logger = logging.getLogger(__name__)

VICTIM_TRAIN = "victim_train.csv"
VICTIM_TEST = "victim_test.csv"
SHADOW_POOL = "shadow_pool.csv"
VICTIM_PARAMS = "victim_params.json"
VICTIM_METRICS = "victim_metrics.json"
SHADOW_PARAMS = "shadow_params.json"
ATTACK_MODEL = "attack_model.json"
ATTACK_TRAIN = "attack_train.csv"
MEMBERSHIP = "membership.csv"
REPORT = "report.json"
PER_CLASS = "per_class.csv"
CONFIG = "config.json"
SWEEP_SUMMARY = "sweep.csv"


class _stage:
    """Context manager that tags any error escaping it with a stage name."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        logger.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None:
            tag_stage(exc, self.name)
        return False


def load_data(config: ExperimentConfig) -> Dataset:
    d = config.data
    if d.synthetic is not None:
        return generate_synthetic(d.synthetic)
    return load_csv(d.csv_path, class_count=d.class_count)


def shadow_partition(pool: Dataset, in_fraction: float = 0.5):
    """First ``round(in_fraction * n)`` rows of the (already shuffled) pool train
    the shadow; the rest are its held-out "out" rows."""
    n_in = int(round(in_fraction * len(pool)))
    if not 0 < n_in < len(pool):
        raise DataError(f"shadow pool of {len(pool)} cannot be split with in_fraction={in_fraction}")
    return pool.subset(range(n_in)), pool.subset(range(n_in, len(pool)))


def victim_architecture(config: ExperimentConfig, data: Dataset) -> Architecture:
    return Architecture(data.feature_dim, config.victim.hidden_sizes, data.class_count, config.victim.activation)


def stage_data(config: ExperimentConfig) -> DatasetSplit:
    with _stage("gen-data"):
        return split_three_way(load_data(config), config.data.split)


def stage_victim(config: ExperimentConfig, split: DatasetSplit):
    """Train the victim from scratch; returns ``(params, metrics)``."""
    with _stage("train-victim"):
        arch = victim_architecture(config, split.victim_train)
        params, history = train(
            arch, init_params(arch, config.victim.init_seed), split.victim_train, config.victim.train
        )
        metrics = {
            "train_accuracy": evaluate_accuracy(params, split.victim_train),
            "test_accuracy": evaluate_accuracy(params, split.victim_test),
            "history": history.to_dict(),
        }
        logger.info("victim train=%.4f test=%.4f", metrics["train_accuracy"], metrics["test_accuracy"])
        return params, metrics


def stage_shadow(config: ExperimentConfig, victim: ModelParams, shadow_pool: Dataset) -> ModelParams:
    with _stage("train-shadow"):
        shadow_in, _ = shadow_partition(shadow_pool, config.shadow.in_fraction)
        if config.shadow.shadow_init == "victim":
            start = victim
        else:
            start = init_params(victim.architecture, config.shadow.init_seed)
        params, _ = train(victim.architecture, start, shadow_in, config.shadow.train)
        return params


def stage_attack(config, shadow, shadow_pool, victim, victim_train, victim_test):
    """Fit the attack SVM on shadow records and score the victim.

    Returns ``(attack_model, shadow_results, victim_results)``.
    """
    with _stage("attack"):
        shadow_in, shadow_out = shadow_partition(shadow_pool, config.shadow.in_fraction)
        records = atk.build_attack_dataset(shadow, shadow_in, shadow_out)
        model = atk.train_attack_classifier(records, config.attack)
        shadow_results = list(zip(records, atk.predict_membership(model, records)))
        victim_results = atk.attack_victim(
            victim, victim_train, victim_test, model,
            balance=config.evaluation.balance, seed=config.evaluation.seed,
        )
        return model, shadow_results, victim_results


def stage_report(config, victim_metrics, victim_results) -> AttackReport:
    with _stage("report"):
        return build_report(
            victim_metrics["train_accuracy"],
            victim_metrics["test_accuracy"],
            victim_results,
            config_fingerprint=config.fingerprint(),
            seed=config.seed,
        )


def _out_dir(config, out_dir):
    out = out_dir if out_dir is not None else config.output_dir
    if out is None:
        raise ConfigError("no output directory given (config 'output_dir' or --out)")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_json(doc, path):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- file-backed stages, used by the CLI and by run_pipeline ------------------

def gen_data(config: ExperimentConfig, out_dir=None) -> DatasetSplit:
    out = _out_dir(config, out_dir)
    split = stage_data(config)
    config.save(out / CONFIG)
    write_csv(split.victim_train, out / VICTIM_TRAIN)
    write_csv(split.victim_test, out / VICTIM_TEST)
    write_csv(split.shadow_pool, out / SHADOW_POOL)
    return split


def _read_split(config, out) -> DatasetSplit:
    C = config.data.synthetic.class_count if config.data.synthetic is not None else config.data.class_count
    parts = {}
    for name, fname in (("victim_train", VICTIM_TRAIN), ("victim_test", VICTIM_TEST), ("shadow_pool", SHADOW_POOL)):
        parts[name] = load_csv(out / fname, class_count=C)
    if C is None:
        # without a declared class count, the union of parts fixes it
        C = max(p.class_count for p in parts.values())
        parts = {k: Dataset(p.features, p.labels, C) for k, p in parts.items()}
    return DatasetSplit(**parts)


def train_victim(config: ExperimentConfig, out_dir=None):
    out = _out_dir(config, out_dir)
    split = _read_split(config, out)
    params, metrics = stage_victim(config, split)
    params.save(out / VICTIM_PARAMS)
    _dump_json(metrics, out / VICTIM_METRICS)
    return params, metrics


def train_shadow(config: ExperimentConfig, out_dir=None) -> ModelParams:
    out = _out_dir(config, out_dir)
    split = _read_split(config, out)
    victim = ModelParams.load(out / VICTIM_PARAMS)
    shadow = stage_shadow(config, victim, split.shadow_pool)
    shadow.save(out / SHADOW_PARAMS)
    return shadow


def run_attack(config: ExperimentConfig, out_dir=None):
    out = _out_dir(config, out_dir)
    split = _read_split(config, out)
    victim = ModelParams.load(out / VICTIM_PARAMS)
    shadow = ModelParams.load(out / SHADOW_PARAMS)
    model, shadow_results, victim_results = stage_attack(
        config, shadow, split.shadow_pool, victim, split.victim_train, split.victim_test
    )
    model.save(out / ATTACK_MODEL)
    atk.write_records_csv(shadow_results, out / ATTACK_TRAIN)
    atk.write_records_csv(victim_results, out / MEMBERSHIP)
    return model, victim_results


def make_report(config: ExperimentConfig, out_dir=None, membership=None) -> AttackReport:
    """Re-score the dumped membership CSV; needs nothing but files on disk."""
    out = _out_dir(config, out_dir)
    with _stage("report"):
        metrics_path = out / VICTIM_METRICS
        if not metrics_path.is_file():
            raise DataError(f"victim metrics not found: {metrics_path}")
        metrics = json.loads(metrics_path.read_text(encoding="utf-8"))
        results = atk.read_records_csv(membership or out / MEMBERSHIP)
        if any(p is None for _, p in results):
            raise DataError(f"{out / MEMBERSHIP}: rows without a prediction")
    report = stage_report(config, metrics, results)
    report.save(out / REPORT)
    report.write_class_csv(out / PER_CLASS)
    return report


def run_pipeline(config: ExperimentConfig, out_dir=None) -> AttackReport:
    """Run every stage in memory, writing each stage's artifacts as it goes."""
    out = _out_dir(config, out_dir)
    split = gen_data(config, out)
    victim, metrics = stage_victim(config, split)
    victim.save(out / VICTIM_PARAMS)
    _dump_json(metrics, out / VICTIM_METRICS)
    shadow = stage_shadow(config, victim, split.shadow_pool)
    shadow.save(out / SHADOW_PARAMS)
    model, shadow_results, victim_results = stage_attack(
        config, shadow, split.shadow_pool, victim, split.victim_train, split.victim_test
    )
    model.save(out / ATTACK_MODEL)
    atk.write_records_csv(shadow_results, out / ATTACK_TRAIN)
    atk.write_records_csv(victim_results, out / MEMBERSHIP)
    report = stage_report(config, metrics, victim_results)
    report.save(out / REPORT)
    report.write_class_csv(out / PER_CLASS)
    return report


def sweep_overfitting(config: ExperimentConfig, epoch_levels, out_dir=None):
    """Re-run the pipeline at each epoch budget (victim and shadow alike).

    Each level writes into ``<out>/epochs_<n>/``; a summary goes to
    ``<out>/sweep.csv``. Returns ``[(epochs, report), ...]``.
    """
    levels = [int(e) for e in epoch_levels]
    if len(levels) < 2:
        raise ConfigError("sweep needs at least two epoch levels")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError(f"epoch levels must be strictly increasing, got {levels}")
    if levels[0] < 1:
        raise ConfigError("epoch levels must be >= 1")
    out = _out_dir(config, out_dir)
    results = []
    for e in levels:
        results.append((e, run_pipeline(config.with_epochs(e), out / f"epochs_{e}")))
    with (out / SWEEP_SUMMARY).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epochs", "gap", "attack_accuracy", "attack_precision"])
        for e, rep in results:
            p = rep.overall_precision
            writer.writerow([e, repr(rep.generalization_gap), repr(rep.overall_accuracy), "" if p is None else repr(p)])
    return results
