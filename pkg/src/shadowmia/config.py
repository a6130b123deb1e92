"""Experiment configuration: one JSON document, loaded strictly.

Unknown keys are rejected so that a typo cannot silently fall back to a
default and still produce a fingerprinted report.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .attack import SvmConfig
from .dataset import SplitSpec, SynthConfig
from .errors import ConfigError, ShadowMiaError
from .model import ACTIVATIONS, TrainConfig

SHADOW_INITS = ("victim", "fresh")


def _build(cls, doc, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object, got {type(doc).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**doc)
    except ShadowMiaError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class DataSection:
    split: SplitSpec
    synthetic: Optional[SynthConfig] = None
    csv_path: Optional[str] = None
    class_count: Optional[int] = None

    def __post_init__(self):
        if (self.synthetic is None) == (self.csv_path is None):
            raise ConfigError("data: give exactly one of 'synthetic' or 'csv_path'")


@dataclass(frozen=True)
class VictimSection:
    train: TrainConfig
    hidden_sizes: tuple = ()
    activation: str = "relu"
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if any(h < 1 for h in self.hidden_sizes):
            raise ConfigError(f"victim: hidden sizes must be >= 1, got {self.hidden_sizes}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"victim: activation must be one of {ACTIVATIONS}")


@dataclass(frozen=True)
class ShadowSection:
    train: TrainConfig
    shadow_init: str = "victim"
    in_fraction: float = 0.5
    init_seed: int = 0

    def __post_init__(self):
        if self.shadow_init not in SHADOW_INITS:
            raise ConfigError(f"shadow: shadow_init must be one of {SHADOW_INITS}")
        if not 0.0 < self.in_fraction < 1.0:
            raise ConfigError(f"shadow: in_fraction must lie in (0, 1), got {self.in_fraction}")


@dataclass(frozen=True)
class EvaluationSection:
    balance: bool = True
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataSection
    victim: VictimSection
    shadow: ShadowSection
    attack: SvmConfig = field(default_factory=SvmConfig)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    output_dir: Optional[str] = None
    seed: int = 0

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        # tuples come back as lists from JSON; normalise so round-trips compare equal
        return json.loads(json.dumps(doc))

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        doc = dict(doc)
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - allowed
        if unknown:
            raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
        for key in ("data", "victim", "shadow"):
            if key not in doc:
                raise ConfigError(f"missing section {key!r}")

        data = dict(doc["data"])
        if "split" not in data:
            raise ConfigError("data: missing 'split'")
        data["split"] = _build(SplitSpec, data["split"], "data.split")
        if data.get("synthetic") is not None:
            data["synthetic"] = _build(SynthConfig, data["synthetic"], "data.synthetic")

        victim = dict(doc["victim"])
        victim["train"] = _build(TrainConfig, victim.get("train", {}), "victim.train")
        shadow = dict(doc["shadow"])
        shadow["train"] = _build(TrainConfig, shadow.get("train", {}), "shadow.train")

        return cls(
            data=_build(DataSection, data, "data"),
            victim=_build(VictimSection, victim, "victim"),
            shadow=_build(ShadowSection, shadow, "shadow"),
            attack=_build(SvmConfig, doc.get("attack", {}), "attack"),
            evaluation=_build(EvaluationSection, doc.get("evaluation", {}), "evaluation"),
            output_dir=doc.get("output_dir"),
            seed=int(doc.get("seed", 0)),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        cfg = cls.from_dict(doc)
        # relative CSV paths are taken relative to the config file
        if cfg.data.csv_path and not Path(cfg.data.csv_path).is_absolute():
            cfg = dataclasses.replace(
                cfg, data=dataclasses.replace(cfg.data, csv_path=str(path.parent / cfg.data.csv_path))
            )
        return cfg

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def fingerprint(self) -> str:
        """SHA-256 of the canonical JSON form, excluding ``output_dir``."""
        doc = self.to_dict()
        doc.pop("output_dir", None)
        canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Re-derive every stage seed from one master seed."""
        seed = int(seed)
        r = dataclasses.replace
        data = self.data
        if data.synthetic is not None:
            data = r(data, synthetic=r(data.synthetic, seed=seed))
        data = r(data, split=r(data.split, seed=seed + 1))
        return r(
            self,
            seed=seed,
            data=data,
            victim=r(self.victim, init_seed=seed + 2, train=r(self.victim.train, seed=seed + 3)),
            shadow=r(self.shadow, init_seed=seed + 4, train=r(self.shadow.train, seed=seed + 5)),
            attack=r(self.attack, seed=seed + 6),
            evaluation=r(self.evaluation, seed=seed + 7),
        )

    def with_epochs(self, epochs: int) -> "ExperimentConfig":
        r = dataclasses.replace
        return r(
            self,
            victim=r(self.victim, train=r(self.victim.train, max_epochs=int(epochs))),
            shadow=r(self.shadow, train=r(self.shadow.train, max_epochs=int(epochs))),
        )
