"""Command-line entry point.

Exit codes: 0 success, 1 config error, 2 data error, 3 training failure,
4 evaluation failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ExperimentConfig
from .errors import ConfigError, ShadowMiaError

log = logging.getLogger("shadowmia")

CONFIG_DIR = Path(__file__).parent / "configs"


def bundled_config_path(name: str) -> Path:
    """Path of a config shipped with the package, e.g. ``"highgap"``."""
    path = CONFIG_DIR / f"{name}.cfg"
    if not path.is_file():
        raise ConfigError(f"no bundled config named {name!r}")
    return path


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _parse_levels(text: str):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ConfigError.exit_code, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shadowmia", description="White-box shadow-model membership inference lab.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", required=True, help="experiment config (JSON); a bundled name like 'highgap' also works")
        p.add_argument("--out", help="output directory (overrides the config's output_dir)")
        p.add_argument("--seed", type=int, help="master seed; re-derives every stage seed")
        p.add_argument("--balance", type=_parse_bool, help="balance the victim evaluation set (true/false)")
        return p

    common(sub.add_parser("gen-data", help="generate or load data and write the three splits"))
    common(sub.add_parser("train-victim", help="train the victim on victim_train.csv"))
    common(sub.add_parser("train-shadow", help="fine-tune the shadow from victim_params.json"))
    common(sub.add_parser("attack", help="fit the attack SVM and score the victim"))
    p = common(sub.add_parser("report", help="re-score membership.csv into report.json"))
    p.add_argument("--membership", help="membership CSV to score (default <out>/membership.csv)")
    common(sub.add_parser("run", help="run the full pipeline"))
    p = common(sub.add_parser("sweep", help="run the pipeline at several epoch budgets"))
    p.add_argument("--epochs", type=_parse_levels, default=[5, 20, 80], help="comma-separated, strictly increasing")
    return parser


def load_config(args) -> ExperimentConfig:
    path = Path(args.config)
    if not path.is_file() and (CONFIG_DIR / f"{args.config}.cfg").is_file():
        path = bundled_config_path(args.config)
    cfg = ExperimentConfig.load(path)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg = cfg.with_seed(args.seed)
    if args.balance is not None:
        cfg = dataclasses.replace(cfg, evaluation=dataclasses.replace(cfg.evaluation, balance=args.balance))
    if args.out is not None:
        cfg = dataclasses.replace(cfg, output_dir=args.out)
    return cfg


def _print_report(rep):
    p = rep.overall_precision
    print(f"victim train/test accuracy: {rep.victim_train_accuracy:.4f} / {rep.victim_test_accuracy:.4f}"
          f" (gap {rep.generalization_gap:+.4f})")
    print(f"attack accuracy: {rep.overall_accuracy:.4f}  precision: {'undefined' if p is None else f'{p:.4f}'}")
    for k, v in rep.per_class_precision.items():
        print(f"  class {k}: precision {'undefined' if v is None else f'{v:.4f}'}"
              f"  accuracy {rep.per_class_accuracy[k]:.4f}  n={rep.per_class_counts[k].evaluated}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = load_config(args)
        out = cfg.output_dir
        if args.command == "gen-data":
            split = pipeline.gen_data(cfg, out)
            print(f"wrote {len(split.victim_train)}/{len(split.victim_test)}/{len(split.shadow_pool)} rows to {out}")
        elif args.command == "train-victim":
            _, m = pipeline.train_victim(cfg, out)
            print(f"victim train/test accuracy: {m['train_accuracy']:.4f} / {m['test_accuracy']:.4f}")
        elif args.command == "train-shadow":
            pipeline.train_shadow(cfg, out)
            print(f"wrote {Path(out) / pipeline.SHADOW_PARAMS}")
        elif args.command == "attack":
            _, results = pipeline.run_attack(cfg, out)
            print(f"scored {len(results)} victim records")
        elif args.command == "report":
            _print_report(pipeline.make_report(cfg, out, membership=args.membership))
        elif args.command == "run":
            _print_report(pipeline.run_pipeline(cfg, out))
        elif args.command == "sweep":
            for e, rep in pipeline.sweep_overfitting(cfg, args.epochs, out):
                p = rep.overall_precision
                print(f"epochs={e:4d} gap={rep.generalization_gap:+.4f} attack_accuracy={rep.overall_accuracy:.4f}"
                      f" precision={'undefined' if p is None else f'{p:.4f}'}")
    except ShadowMiaError as exc:
        print(f"shadowmia: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"shadowmia: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
