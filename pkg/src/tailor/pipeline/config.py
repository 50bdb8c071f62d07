"""Experiment configuration: a single versioned JSON document.

Unknown keys are rejected with field-level errors; every stage receives
the same validated snapshot plus the global seed.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}.{sorted(unknown)[0]}: unknown key")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass
class WorldSection:
    image_size: int = 32
    n_train: int = 1200
    n_test: int = 400
    silver_fraction: float = 0.35
    silver_flip_rate: float = 0.02
    tail_test_per_class: int = 60
    overrides: dict = field(default_factory=dict)

    def validate(self):
        if self.n_train < 10 or self.n_test < 10:
            raise ConfigError("world.n_train/n_test: need at least 10 lesions")
        if not 0 <= self.silver_fraction <= 1:
            raise ConfigError("world.silver_fraction: outside [0, 1]")


@dataclass
class GeneratorSection:
    T: int = 200
    base_channels: int = 16
    emb_dim: int = 64
    pretrain_steps: int = 2000
    batch_size: int = 16
    lr: float = 5e-4
    cond_dropout: float = 0.1
    lora_rank: int = 4
    fine_tune_steps: int = 800
    fine_tune_lr: float = 1e-3
    # gentle jitter: the phantom world's pathology cue is an absolute
    # brightness offset, which wide jitter would erase from the conditional
    fine_tune_jitter: list = field(default_factory=lambda: [0.9, 1.1])
    tail_oversample: int = 4

    def validate(self):
        if self.T < 2:
            raise ConfigError("generator.T: need at least 2 steps")
        if self.lr <= 0 or self.fine_tune_lr <= 0:
            raise ConfigError("generator.lr: must be positive")


@dataclass
class SamplingSection:
    guidance_w: float = 1.8
    sampler: str = "dpm2"
    steps: int = 50
    batch_size: int = 128
    base_count: int = 2400
    tail_count: int = 700

    def validate(self):
        if self.sampler not in ("ancestral", "dpm1", "dpm2"):
            raise ConfigError(f"sampling.sampler: unknown sampler {self.sampler!r}")
        if self.steps < 2:
            raise ConfigError("sampling.steps: need at least 2")


@dataclass
class CleaningSection:
    k: int = 5
    mode: str = "fraction"
    fraction: float = 0.10
    threshold: float = 0.5
    filter_epochs: float = 4.0

    def validate(self):
        if self.mode not in ("fraction", "threshold"):
            raise ConfigError(f"cleaning.mode: unknown mode {self.mode!r}")
        if not 0 <= self.fraction < 1:
            raise ConfigError("cleaning.fraction: outside [0, 1)")


@dataclass
class DiagnosisSection:
    channels: list = field(default_factory=lambda: [16, 32, 64, 128])
    base_epochs: float = 3.0
    expert_epochs: float = 3.0
    baseline_epochs: float = 3.0
    lr: float = 1e-3
    expert_lr: float = 1e-3
    batch_size: int = 32
    negatives_per_tail: int = 700

    def validate(self):
        if len(self.channels) != 4:
            raise ConfigError("diagnosis.channels: the backbone has 4 conv stages")


@dataclass
class EnsembleSection:
    thresholds: dict = field(default_factory=lambda: {"ncm": 0.9, "cal": 0.9, "dcis": 0.9})
    weights: dict = field(default_factory=lambda: {"ncm": 2.0, "cal": 2.0, "dcis": 1.0})
    crossval_grid: list = field(default_factory=lambda: [
        {"thresholds": {"ncm": t, "cal": t, "dcis": t},
         "weights": {"ncm": 2.0, "cal": 2.0, "dcis": 1.0}}
        for t in (0.5, 0.7, 0.9)
    ])

    def validate(self):
        for kind in ("ncm", "cal", "dcis"):
            if kind not in self.thresholds or kind not in self.weights:
                raise ConfigError(f"ensemble: missing {kind} threshold or weight")
            if not 0 < self.thresholds[kind] < 1:
                raise ConfigError(f"ensemble.thresholds.{kind}: outside (0, 1)")


@dataclass
class EvaluationSection:
    bootstrap: int = 1000
    permutations: int = 10000
    fixed_sensitivity: float = 0.98
    ci_level: float = 0.95

    def validate(self):
        if self.bootstrap < 100:
            raise ConfigError("evaluation.bootstrap: need at least 100 replications")


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    out_root: str = "runs/default"
    world: WorldSection = field(default_factory=WorldSection)
    generator: GeneratorSection = field(default_factory=GeneratorSection)
    sampling: SamplingSection = field(default_factory=SamplingSection)
    cleaning: CleaningSection = field(default_factory=CleaningSection)
    diagnosis: DiagnosisSection = field(default_factory=DiagnosisSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)

    SECTIONS = {"world": WorldSection, "generator": GeneratorSection,
                "sampling": SamplingSection, "cleaning": CleaningSection,
                "diagnosis": DiagnosisSection, "ensemble": EnsembleSection,
                "evaluation": EvaluationSection}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: expected a JSON object")
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version: unsupported version {version}")
        known = {"schema_version", "seed", "out_root", *cls.SECTIONS}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown key")
        kwargs = {"schema_version": version,
                  "seed": data.get("seed", 0),
                  "out_root": data.get("out_root", "runs/default")}
        for name, section_cls in cls.SECTIONS.items():
            kwargs[name] = _build(section_cls, data.get(name, {}), name)
        config = cls(**kwargs)
        config.validate()
        return config

    def validate(self):
        if not isinstance(self.seed, int):
            raise ConfigError("seed: must be an integer")
        for name in self.SECTIONS:
            getattr(self, name).validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def load(cls, path: Path | str) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})") from None
        return cls.from_dict(data)

    @property
    def out(self) -> Path:
        return Path(self.out_root)
