"""Experiment configuration: one JSON-serializable object holding every knob
and seed a run needs, so a saved snapshot reproduces the run byte-for-byte."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from semtrack.degrade import DEFAULT_CHAIN_SPEC, DegradationChain
from semtrack.quality import QualityRanges
from semtrack.student import StudentConfig
from semtrack.tracker import TrackerConfig
from semtrack.training import TrainConfig


@dataclass(frozen=True)
class SceneParams:
    width: int = 128
    height: int = 96
    num_frames: int = 32
    num_targets: int = 3
    motion_jitter: float = 0.0


@dataclass(frozen=True)
class DetectorParams:
    jitter_sigma: float = 0.6
    fp_rate: float = 0.1
    fn_rate: float = 0.05


@dataclass(frozen=True)
class DswrParams:
    clarity_range: tuple[float, float] = (0.0, 0.02)
    noise_range: tuple[float, float] = (0.0, 0.1)
    contrast_range: tuple[float, float] = (0.0, 0.35)
    w_init: float = -4.0
    b_init: float = 2.0

    def ranges(self) -> QualityRanges:
        return QualityRanges(clarity=tuple(self.clarity_range),
                             noise=tuple(self.noise_range),
                             contrast=tuple(self.contrast_range))


@dataclass(frozen=True)
class Seeds:
    scenes: int = 100
    detector: int = 200
    teacher: int = 300
    model: int = 400
    degradation: int = 500
    partition: int = 600


@dataclass(frozen=True)
class ExperimentConfig:
    scene: SceneParams = SceneParams()
    detector: DetectorParams = DetectorParams()
    degradation_chain: tuple[dict, ...] = tuple(
        {k: v for k, v in spec.items()} for spec in DEFAULT_CHAIN_SPEC)
    student: dict = field(default_factory=lambda: {
        "input_dim": 256, "hidden_dim": 256, "num_layers": 3, "num_heads": 4,
        "ff_dim": 1024, "output_dim": 256, "residual_projection": False})
    temperature: float = 2.0
    alpha: float = 0.4
    dswr: DswrParams = DswrParams()
    training: dict = field(default_factory=lambda: {
        "epochs": 12, "learning_rate": 5e-3, "decay_factor": 0.1,
        "decay_at": 2.0 / 3.0, "contrastive_temperature": 0.1,
        "box_loss_weight": 1.0})
    tracker: dict = field(default_factory=lambda: {
        "match_gate": 0.7, "iou_weight": 0.5, "birth_confidence": 0.6,
        "propagate_confidence": 0.5, "max_age": 3, "miss_decay": 0.7,
        "fixed_fusion_weight": 0.5})
    ratio: tuple[int, int] = (2, 1)
    num_train_scenes: int = 6
    num_eval_scenes: int = 8
    seeds: Seeds = Seeds()
    output_dir: str = "runs/default"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")

    # -- derived module configs --

    def student_config(self) -> StudentConfig:
        return StudentConfig(**self.student)

    def chain(self) -> DegradationChain:
        return DegradationChain.from_spec(list(self.degradation_chain),
                                          master_seed=self.seeds.degradation)

    def tracker_config(self) -> TrackerConfig:
        return TrackerConfig(quality_ranges=self.dswr.ranges(), **self.tracker)

    def train_config(self, alpha: float | None = None) -> TrainConfig:
        return TrainConfig(alpha=self.alpha if alpha is None else alpha,
                           teacher_seed=self.seeds.teacher, **self.training)

    # -- serialization --

    def to_dict(self) -> dict:
        raw = asdict(self)
        raw["degradation_chain"] = [dict(s) for s in self.degradation_chain]
        return raw

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)

        def tup(value):
            return tuple(value) if isinstance(value, list) else value

        if "scene" in raw:
            raw["scene"] = SceneParams(**raw["scene"])
        if "detector" in raw:
            raw["detector"] = DetectorParams(**raw["detector"])
        if "dswr" in raw:
            dswr = dict(raw["dswr"])
            for key in ("clarity_range", "noise_range", "contrast_range"):
                if key in dswr:
                    dswr[key] = tup(dswr[key])
            raw["dswr"] = DswrParams(**dswr)
        if "seeds" in raw:
            raw["seeds"] = Seeds(**raw["seeds"])
        if "degradation_chain" in raw:
            raw["degradation_chain"] = tuple(dict(s) for s in raw["degradation_chain"])
        if "ratio" in raw:
            raw["ratio"] = tup(raw["ratio"])
        return cls(**raw)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def with_alpha(self, alpha: float) -> "ExperimentConfig":
        return replace(self, alpha=alpha)

    def with_ratio(self, ratio: tuple[int, int]) -> "ExperimentConfig":
        return replace(self, ratio=ratio)
