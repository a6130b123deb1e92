"""Shadow-posterior membership inference.

An attack classifier is a linear soft-margin SVM fitted on posteriors the
shadow model assigns to its own training rows ("in") and to held-out rows
("out"). It is then applied unchanged to the victim's posteriors.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Dataset, make_rng
from .errors import ConfigError, DataError, EvaluationError
from .model import ModelParams, forward_posterior

ATTACK_FORMAT = "shadowmia.attack-model/v1"

FEATURE_MODES = ("posterior", "posterior_sorted", "posterior_plus_label")


class Membership(str, Enum):
    IN = "in"
    OUT = "out"


class Source(str, Enum):
    SHADOW = "shadow"
    VICTIM = "victim"


@dataclass(frozen=True, eq=False)
class MembershipRecord:
    posterior: np.ndarray
    true_class: int
    membership: Membership
    source: Source = Source.SHADOW

    def __post_init__(self):
        p = np.array(self.posterior, dtype=np.float64).reshape(-1)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
            raise DataError(f"posterior is not on the simplex (sum={p.sum()!r})")
        if not 0 <= int(self.true_class) < p.shape[0]:
            raise DataError(f"true_class {self.true_class} out of range for {p.shape[0]} classes")
        p.setflags(write=False)
        object.__setattr__(self, "posterior", p)
        object.__setattr__(self, "true_class", int(self.true_class))
        object.__setattr__(self, "membership", Membership(self.membership))
        object.__setattr__(self, "source", Source(self.source))

    @property
    def class_count(self) -> int:
        return self.posterior.shape[0]

    def __eq__(self, other):
        if not isinstance(other, MembershipRecord):
            return NotImplemented
        return (
            np.array_equal(self.posterior, other.posterior)
            and self.true_class == other.true_class
            and self.membership is other.membership
            and self.source is other.source
        )


@dataclass(frozen=True)
class SvmConfig:
    """Hyper-parameters of the attack SVM.

    The step size at iteration ``t`` is ``1 / (regularization * t)``; each of
    the ``epochs`` iterations is one full pass over the records in their
    given order.
    """

    regularization: float = 1e-3
    epochs: int = 2000
    seed: int = 0
    feature_mode: str = "posterior"
    learning_rate_schedule: str = "inverse_lambda_t"

    def __post_init__(self):
        if not (self.regularization > 0 and math.isfinite(self.regularization)):
            raise ConfigError(f"regularization must be > 0, got {self.regularization}")
        if int(self.epochs) < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.feature_mode not in FEATURE_MODES:
            raise ConfigError(f"feature_mode must be one of {FEATURE_MODES}, got {self.feature_mode!r}")
        if self.learning_rate_schedule != "inverse_lambda_t":
            raise ConfigError(f"unknown learning_rate_schedule {self.learning_rate_schedule!r}")


def feature_dim(mode: str, class_count: int) -> int:
    return 2 * class_count if mode == "posterior_plus_label" else class_count


def attack_features(posteriors, true_classes, mode: str) -> np.ndarray:
    """Map posteriors (n, C) to the attack feature matrix for ``mode``."""
    P = np.atleast_2d(np.asarray(posteriors, dtype=np.float64))
    if mode == "posterior":
        return P.copy()
    if mode == "posterior_sorted":
        return -np.sort(-P, axis=1)
    if mode == "posterior_plus_label":
        onehot = np.zeros_like(P)
        onehot[np.arange(P.shape[0]), np.asarray(true_classes, dtype=np.int64)] = 1.0
        return np.hstack([P, onehot])
    raise ConfigError(f"unknown feature_mode {mode!r}")


def records_features(records: Sequence[MembershipRecord], mode: str) -> np.ndarray:
    P = np.stack([r.posterior for r in records])
    return attack_features(P, [r.true_class for r in records], mode)


def hinge_objective(w, b, X, y, regularization, bias_scale) -> float:
    """``lambda/2 (|w|^2 + (b/bias_scale)^2) + mean(max(0, 1 - y (Xw + b)))``."""
    margins = y * (X @ w + b)
    reg = 0.5 * regularization * (float(w @ w) + (b / bias_scale) ** 2)
    return reg + float(np.mean(np.maximum(0.0, 1.0 - margins)))


def bias_scale_for(X) -> float:
    """Root-mean-square row norm, the magnitude of the implicit constant feature."""
    r = math.sqrt(float(np.mean(np.sum(X * X, axis=1)))) if X.size else 0.0
    return r if r > 0 else 1.0


def fit_linear_svm(X, y, regularization: float, epochs: int):
    """Soft-margin linear SVM by full-batch subgradient descent.

    Minimises :func:`hinge_objective` with steps ``1/(regularization * t)``
    followed by projection onto the ball of radius ``1/sqrt(regularization)``.
    The bias is the weight of a constant feature whose value is the RMS row
    norm of ``X``, so rescaling ``X`` by ``c`` together with
    ``regularization`` by ``c**2`` leaves every decision unchanged. The
    iterate with the lowest objective (the zero start included) is returned.

    Parameters
    ----------
    X : array (n, k)
    y : array (n,) of +1 / -1
    regularization : float
    epochs : int

    Returns
    -------
    w : array (k,)
    b : float
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, k = X.shape
    lam = float(regularization)
    R = bias_scale_for(X)
    Xa = np.hstack([X, np.full((n, 1), R)])
    v = np.zeros(k + 1)
    radius = 1.0 / math.sqrt(lam)
    best, best_obj = v, math.inf
    for t in range(1, int(epochs) + 2):
        margins = y * (Xa @ v)
        obj = 0.5 * lam * float(v @ v) + float(np.mean(np.maximum(0.0, 1.0 - margins)))
        # subgradient steps are not monotone; keep the best iterate seen
        if obj < best_obj:
            best, best_obj = v, obj
        if t > epochs:
            break
        viol = margins < 1.0
        g = lam * v
        if viol.any():
            g = g - (y[viol] @ Xa[viol]) / n
        v = v - (1.0 / (lam * t)) * g
        norm = math.sqrt(float(v @ v))
        if norm > radius:
            v = v * (radius / norm)
    return best[:k].copy(), float(best[k] * R)


@dataclass(eq=False)
class AttackModel:
    weights: np.ndarray
    bias: float
    feature_mode: str = "posterior"
    config: SvmConfig = field(default_factory=SvmConfig)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        self.bias = float(self.bias)
        if self.feature_mode not in FEATURE_MODES:
            raise ConfigError(f"unknown feature_mode {self.feature_mode!r}")
        if not (np.all(np.isfinite(self.weights)) and math.isfinite(self.bias)):
            raise EvaluationError("attack model has non-finite parameters")

    def __eq__(self, other):
        if not isinstance(other, AttackModel):
            return NotImplemented
        return (
            np.array_equal(self.weights, other.weights)
            and self.bias == other.bias
            and self.feature_mode == other.feature_mode
            and self.config == other.config
            and self.metadata == other.metadata
        )

    def decision_function(self, records: Sequence[MembershipRecord]) -> np.ndarray:
        X = records_features(records, self.feature_mode)
        if X.shape[1] != self.weights.shape[0]:
            raise DataError(
                f"attack model expects {self.weights.shape[0]} features, records give {X.shape[1]}"
            )
        return X @ self.weights + self.bias

    def to_dict(self) -> dict:
        return {
            "format": ATTACK_FORMAT,
            "feature_mode": self.feature_mode,
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "svm_config": asdict(self.config),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AttackModel":
        if doc.get("format") != ATTACK_FORMAT:
            raise ConfigError(f"unsupported attack model format {doc.get('format')!r}")
        return cls(
            weights=doc["weights"],
            bias=doc["bias"],
            feature_mode=doc["feature_mode"],
            config=SvmConfig(**doc["svm_config"]),
            metadata=dict(doc.get("metadata", {})),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AttackModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _posterior_records(params, data, membership, source):
    if len(data) == 0:
        raise DataError(f"empty {membership.value} dataset")
    P = forward_posterior(params, data.features)
    return [MembershipRecord(p, int(c), membership, source) for p, c in zip(P, data.labels)]


def build_attack_dataset(shadow: ModelParams, shadow_train: Dataset, shadow_holdout: Dataset):
    """Label the shadow's posteriors: its training rows "in", held-out rows "out"."""
    return _posterior_records(shadow, shadow_train, Membership.IN, Source.SHADOW) + _posterior_records(
        shadow, shadow_holdout, Membership.OUT, Source.SHADOW
    )


def build_attack_dataset_multi(shadows) -> list:
    """Concatenate records from several ``(params, train, holdout)`` shadow triples."""
    records = []
    for params, train, holdout in shadows:
        records.extend(build_attack_dataset(params, train, holdout))
    return records


def train_attack_classifier(records: Sequence[MembershipRecord], config: SvmConfig) -> AttackModel:
    if not records:
        raise DataError("no attack training records")
    y = np.array([1.0 if r.membership is Membership.IN else -1.0 for r in records])
    if np.all(y > 0) or np.all(y < 0):
        raise DataError("attack training records hold a single membership class")
    X = records_features(records, config.feature_mode)
    w, b = fit_linear_svm(X, y, config.regularization, config.epochs)
    degenerate = bool(np.all(X == X[0]))
    R = bias_scale_for(X)
    metadata = {
        "degenerate_features": degenerate,
        "n_records": len(records),
        "objective": hinge_objective(w, b, X, y, config.regularization, R),
    }
    return AttackModel(w, b, config.feature_mode, config, metadata)


def infer_membership(model: AttackModel, record: MembershipRecord) -> Membership:
    """``in`` when the score is strictly positive, ``out`` otherwise."""
    score = float(model.decision_function([record])[0])
    return Membership.IN if score > 0 else Membership.OUT


def predict_membership(model: AttackModel, records: Sequence[MembershipRecord]) -> list:
    scores = model.decision_function(records)
    return [Membership.IN if s > 0 else Membership.OUT for s in scores]


def attack_victim(
    victim: ModelParams,
    victim_train: Dataset,
    victim_test: Dataset,
    model: AttackModel,
    balance: bool = True,
    seed: int = 0,
):
    """Score the victim's own training rows ("in") and test rows ("out").

    With ``balance`` the larger side is subsampled (seeded, order-preserving)
    to the size of the smaller one. Returns ``[(record, predicted), ...]``
    with all "in" records first.
    """
    ins = _posterior_records(victim, victim_train, Membership.IN, Source.VICTIM)
    outs = _posterior_records(victim, victim_test, Membership.OUT, Source.VICTIM)
    if balance and len(ins) != len(outs):
        rng = make_rng(seed)
        if len(ins) > len(outs):
            keep = np.sort(rng.choice(len(ins), size=len(outs), replace=False))
            ins = [ins[i] for i in keep]
        else:
            keep = np.sort(rng.choice(len(outs), size=len(ins), replace=False))
            outs = [outs[i] for i in keep]
    records = ins + outs
    return list(zip(records, predict_membership(model, records)))


def write_records_csv(results, path) -> None:
    """Dump ``(record, predicted)`` pairs; ``predicted`` may be None."""
    results = list(results)
    C = results[0][0].class_count if results else 0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"p{i}" for i in range(C)] + ["true_class", "membership", "source", "predicted"])
        for rec, pred in results:
            writer.writerow(
                [repr(float(v)) for v in rec.posterior]
                + [rec.true_class, rec.membership.value, rec.source.value, "" if pred is None else Membership(pred).value]
            )


def read_records_csv(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"membership file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-4:] != ["true_class", "membership", "source", "predicted"]:
            raise DataError(f"{path}: unexpected header")
        C = len(header) - 4
        out = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != C + 4:
                raise DataError(f"{path}: row {lineno} has {len(row)} fields, expected {C + 4}")
            try:
                rec = MembershipRecord(
                    np.array([float(v) for v in row[:C]]), int(row[C]), row[C + 1], row[C + 2]
                )
                pred = Membership(row[C + 3]) if row[C + 3] else None
            except ValueError as exc:
                raise DataError(f"{path}: row {lineno}: {exc}") from None
            out.append((rec, pred))
    return out
