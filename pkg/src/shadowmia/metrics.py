"""Attack scoring and the experiment report.

Precision is undefined when nothing is predicted "in"; that case is
represented by ``None`` (``null`` in JSON), never by 0 or NaN.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Optional, Sequence

from .attack import Membership
from .errors import EvaluationError

REPORT_FORMAT = "shadowmia.report/v1"


def _as_membership(v) -> Membership:
    return v if isinstance(v, Membership) else Membership(v)


def _pairs(results):
    pairs = [(_as_membership(t), _as_membership(p)) for t, p in results]
    if not pairs:
        raise EvaluationError("no attack results to score")
    return pairs


def confusion_counts(results) -> dict:
    """Counts of (evaluated, predicted_member, true_positive, correct)."""
    pairs = _pairs(results)
    pred_in = sum(p is Membership.IN for _, p in pairs)
    tp = sum(p is Membership.IN and t is Membership.IN for t, p in pairs)
    correct = sum(p is t for t, p in pairs)
    return {"evaluated": len(pairs), "predicted_member": pred_in, "true_positive": tp, "correct": correct}


def precision(results) -> Optional[float]:
    """Share of predicted members that are true members, or ``None`` if none predicted."""
    c = confusion_counts(results)
    if c["predicted_member"] == 0:
        return None
    return c["true_positive"] / c["predicted_member"]


def attack_accuracy(results) -> float:
    c = confusion_counts(results)
    return c["correct"] / c["evaluated"]


def _truth_pred(records_with_predictions):
    return [(rec.membership, pred) for rec, pred in records_with_predictions]


def _by_class(records_with_predictions) -> dict:
    groups: dict = {}
    for rec, pred in records_with_predictions:
        groups.setdefault(rec.true_class, []).append((rec.membership, pred))
    if not groups:
        raise EvaluationError("no attack results to score")
    return dict(sorted(groups.items()))


def per_class_precision(records_with_predictions) -> dict:
    """Precision within each true class present in the input."""
    return {k: precision(v) for k, v in _by_class(records_with_predictions).items()}


def per_class_accuracy(records_with_predictions) -> dict:
    return {k: attack_accuracy(v) for k, v in _by_class(records_with_predictions).items()}


@dataclass
class ClassCounts:
    evaluated: int
    predicted_member: int
    true_positive: int


@dataclass
class AttackReport:
    overall_precision: Optional[float]
    overall_accuracy: float
    per_class_precision: dict
    per_class_accuracy: dict
    per_class_counts: dict
    victim_train_accuracy: float
    victim_test_accuracy: float
    generalization_gap: float
    config_fingerprint: str
    seed: int

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "overall_precision": self.overall_precision,
            "overall_accuracy": self.overall_accuracy,
            "per_class_precision": {str(k): v for k, v in self.per_class_precision.items()},
            "per_class_accuracy": {str(k): v for k, v in self.per_class_accuracy.items()},
            "per_class_counts": {
                str(k): {
                    "evaluated": c.evaluated,
                    "predicted_member": c.predicted_member,
                    "true_positive": c.true_positive,
                }
                for k, c in self.per_class_counts.items()
            },
            "victim_train_accuracy": self.victim_train_accuracy,
            "victim_test_accuracy": self.victim_test_accuracy,
            "generalization_gap": self.generalization_gap,
            "config_fingerprint": self.config_fingerprint,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AttackReport":
        if doc.get("format") != REPORT_FORMAT:
            raise EvaluationError(f"unsupported report format {doc.get('format')!r}")
        return cls(
            overall_precision=doc["overall_precision"],
            overall_accuracy=doc["overall_accuracy"],
            per_class_precision={int(k): v for k, v in doc["per_class_precision"].items()},
            per_class_accuracy={int(k): v for k, v in doc["per_class_accuracy"].items()},
            per_class_counts={int(k): ClassCounts(**v) for k, v in doc["per_class_counts"].items()},
            victim_train_accuracy=doc["victim_train_accuracy"],
            victim_test_accuracy=doc["victim_test_accuracy"],
            generalization_gap=doc["generalization_gap"],
            config_fingerprint=doc["config_fingerprint"],
            seed=doc["seed"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "AttackReport":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AttackReport":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def write_class_csv(self, path) -> None:
        """One row per class: precision, accuracy and the underlying counts."""
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["class", "precision", "accuracy", "evaluated", "predicted_member", "true_positive"])
            for k, c in self.per_class_counts.items():
                p = self.per_class_precision[k]
                writer.writerow([
                    k, "" if p is None else repr(p), repr(self.per_class_accuracy[k]),
                    c.evaluated, c.predicted_member, c.true_positive,
                ])

    def __eq__(self, other):
        if not isinstance(other, AttackReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def generalization_gap(train_acc: float, test_acc: float) -> float:
    """``train_acc - test_acc`` taken on the shortest decimal forms, so that
    0.9664 - 0.7681 gives 0.1983 rather than 0.19830000000000003."""
    return float(Decimal(repr(float(train_acc))) - Decimal(repr(float(test_acc))))


def build_report(
    victim_train_acc: float,
    victim_test_acc: float,
    attack_results: Sequence,
    config_fingerprint: str = "",
    seed: int = 0,
) -> AttackReport:
    """Assemble an :class:`AttackReport` from ``(MembershipRecord, predicted)`` pairs."""
    attack_results = list(attack_results)
    if not attack_results:
        raise EvaluationError("no attack results to report")
    for name, v in (("victim_train_acc", victim_train_acc), ("victim_test_acc", victim_test_acc)):
        if not 0.0 <= v <= 1.0:
            raise EvaluationError(f"{name} must lie in [0, 1], got {v}")
    pairs = _truth_pred(attack_results)
    counts = {}
    for k, group in _by_class(attack_results).items():
        c = confusion_counts(group)
        counts[k] = ClassCounts(c["evaluated"], c["predicted_member"], c["true_positive"])
    return AttackReport(
        overall_precision=precision(pairs),
        overall_accuracy=attack_accuracy(pairs),
        per_class_precision=per_class_precision(attack_results),
        per_class_accuracy=per_class_accuracy(attack_results),
        per_class_counts=counts,
        victim_train_accuracy=float(victim_train_acc),
        victim_test_accuracy=float(victim_test_acc),
        generalization_gap=generalization_gap(victim_train_acc, victim_test_acc),
        config_fingerprint=config_fingerprint,
        seed=int(seed),
    )


def precision_spread(report: AttackReport) -> Optional[float]:
    """max - min of the defined per-class precisions."""
    vals = [v for v in report.per_class_precision.values() if v is not None]
    if not vals:
        return None
    return max(vals) - min(vals)
