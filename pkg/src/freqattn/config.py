"""Experiment configuration: versioned JSON with fail-fast key checking."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .backbones import BackboneConfig

SCHEMA_VERSION = 1


def _strict(section: str, d: dict, cls):
    known = set(cls.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown {section} config key(s): {sorted(unknown)}")
    return cls(**d)


@dataclass
class CorpusParams:
    n_speakers: int = 20
    utts_per_speaker: int = 10
    duration_s: float = 1.0
    sample_rate: int = 16000
    train_fraction: float = 0.8


@dataclass
class TrainingParams:
    lr: float = 1e-4
    batch_size: int = 8
    epochs: int = 30

    def __post_init__(self):
        if self.lr < 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("invalid training parameters")


@dataclass
class TrialParams:
    n_target: int = 60
    n_nontarget: int = 300


@dataclass
class NoiseSweepParams:
    distributions: tuple[str, ...] = ("gaussian", "uniform")
    snrs_db: tuple[float, ...] = (20.0, 50.0, 100.0)

    def __post_init__(self):
        self.distributions = tuple(self.distributions)
        self.snrs_db = tuple(float(s) for s in self.snrs_db)
        for d in self.distributions:
            if d not in ("gaussian", "uniform"):
                raise ValueError(f"unknown noise distribution in sweep: {d!r}")


@dataclass
class ExperimentConfig:
    seed: int
    out_dir: str
    corpus: CorpusParams = field(default_factory=CorpusParams)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    training: TrainingParams = field(default_factory=TrainingParams)
    trials: TrialParams = field(default_factory=TrialParams)
    noise_sweep: NoiseSweepParams = field(default_factory=NoiseSweepParams)
    eval_workers: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        version = d.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ValueError(
                f"config schema_version must be {SCHEMA_VERSION}, got {version!r}"
            )
        if "seed" not in d:
            raise ValueError("config is missing the mandatory 'seed'")
        if "out_dir" not in d:
            raise ValueError("config is missing 'out_dir'")
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config key(s): {sorted(unknown)}")
        kwargs = {
            "seed": int(d["seed"]),
            "out_dir": str(d["out_dir"]),
            "eval_workers": int(d.get("eval_workers", 1)),
        }
        if "corpus" in d:
            kwargs["corpus"] = _strict("corpus", d["corpus"], CorpusParams)
        if "backbone" in d:
            kwargs["backbone"] = BackboneConfig.from_dict(d["backbone"])
        if "training" in d:
            kwargs["training"] = _strict("training", d["training"], TrainingParams)
        if "trials" in d:
            kwargs["trials"] = _strict("trials", d["trials"], TrialParams)
        if "noise_sweep" in d:
            kwargs["noise_sweep"] = _strict(
                "noise_sweep", d["noise_sweep"], NoiseSweepParams
            )
        return cls(**kwargs)

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "corpus": asdict(self.corpus),
            "backbone": self.backbone.to_dict(),
            "training": asdict(self.training),
            "trials": asdict(self.trials),
            "noise_sweep": {
                "distributions": list(self.noise_sweep.distributions),
                "snrs_db": list(self.noise_sweep.snrs_db),
            },
            "eval_workers": self.eval_workers,
        }
        return d


def load_config(path) -> ExperimentConfig:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return ExperimentConfig.from_dict(raw)


def save_config(path, cfg: ExperimentConfig):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
