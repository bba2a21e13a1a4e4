"""Query-propagation tracker over synthetic detections.

Each detection becomes a proposal query: a 70-value descriptor (normalized
box geometry, an 8x8 appearance patch, and the patch mean/std) mapped through
a learned embedding to 256 features. Track queries carry over from the
previous frame while their confidence stays above 0.5. The optional student
encoder turns the stacked queries into semantic features which are fused
back into the queries, with a fixed ratio or a quality-driven one. Fused
track and proposal features are associated one-to-one per frame by Hungarian
assignment on cosine-plus-IoU cost.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from semtrack import autodiff as ad
from semtrack.autodiff import Matrix, Parameter
from semtrack.distill import DcsdHead
from semtrack.frames import resize
from semtrack.quality import DswrHead, QualityRanges, assess_quality
from semtrack.scenes import Detection
from semtrack.student import StudentConfig, StudentModel
from semtrack.tracks import TrackRecord, TrackSet, box_iou

PATCH = 8
DESCRIPTOR_DIM = 4 + PATCH * PATCH + 2
FEATURE_DIM = 256


@dataclass(frozen=True)
class TrackerConfig:
    match_gate: float = 0.7
    iou_weight: float = 0.5
    birth_confidence: float = 0.6
    propagate_confidence: float = 0.5   # strictly-greater propagation threshold
    max_age: int = 3
    miss_decay: float = 0.7
    fixed_fusion_weight: float = 0.5    # used when the student runs without DSWR
    quality_ranges: QualityRanges = QualityRanges()


def box_descriptor(frame: np.ndarray, box: tuple[float, float, float, float]
                   ) -> np.ndarray:
    """1 x 70 proposal descriptor: geometry, 8x8 patch, patch mean/std."""
    height, width = frame.shape
    l, t, w, h = box
    c0 = min(max(int(math.floor(l)), 0), width - 1)
    r0 = min(max(int(math.floor(t)), 0), height - 1)
    c1 = min(max(int(math.ceil(l + w)), c0 + 1), width)
    r1 = min(max(int(math.ceil(t + h)), r0 + 1), height)
    region = frame[r0:r1, c0:c1]
    patch = resize(region, PATCH, PATCH, "bilinear")
    geometry = np.array([l / width, t / height, w / width, h / height])
    return np.concatenate([geometry, patch.reshape(-1),
                           [patch.mean(), patch.std()]]).reshape(1, -1)


class TrackerModel:
    """Learnable tracker pieces: query embedding, box head, optional student,
    distillation head and fusion head."""

    def __init__(self, use_student: bool = True, use_dswr: bool = True,
                 train_loss_weights: bool = True,
                 student_config: StudentConfig = StudentConfig(), seed: int = 0):
        rng = np.random.default_rng(seed)
        bound = 1.0 / math.sqrt(DESCRIPTOR_DIM)
        self.embed_weight = Parameter(
            rng.uniform(-bound, bound, (DESCRIPTOR_DIM, FEATURE_DIM)),
            name="embed.weight")
        self.embed_bias = Parameter(rng.uniform(-bound, bound, (1, FEATURE_DIM)),
                                    name="embed.bias")
        bound = 1.0 / math.sqrt(FEATURE_DIM)
        self.box_weight = Parameter(rng.uniform(-bound, bound, (FEATURE_DIM, 4)),
                                    name="box_head.weight")
        self.box_bias = Parameter(rng.uniform(-bound, bound, (1, 4)),
                                  name="box_head.bias")
        self.student = StudentModel(student_config, seed=seed + 1) if use_student else None
        self.dcsd = DcsdHead(seed=seed + 2) if use_student else None
        if self.dcsd is not None and not train_loss_weights:
            self.dcsd.loss_logits.trainable = False
            self.dcsd.loss_logits.value.requires_grad = False
        self.dswr = DswrHead() if (use_student and use_dswr) else None
        self.use_student = use_student
        self.use_dswr = use_student and use_dswr
        self.train_loss_weights = train_loss_weights
        self.seed = seed

    # -- parameter plumbing --

    def tracker_parameters(self) -> list[Parameter]:
        """Parameters of the bare tracker (no student / distillation / DSWR)."""
        return [self.embed_weight, self.embed_bias, self.box_weight, self.box_bias]

    def parameters(self) -> list[Parameter]:
        params = self.tracker_parameters()
        if self.student is not None:
            params += self.student.parameters()
        if self.dcsd is not None:
            params += self.dcsd.parameters()
        if self.dswr is not None:
            params += self.dswr.parameters()
        return params

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def step(self, learning_rate: float) -> None:
        for p in self.parameters():
            p.step(learning_rate)

    def tracker_parameter_count(self) -> int:
        return sum(p.value.rows * p.value.cols for p in self.tracker_parameters())

    def added_parameter_count(self) -> int:
        """Scalars added by the student, distillation head and DSWR."""
        total = 0
        if self.student is not None:
            total += self.student.parameter_count()
        if self.dcsd is not None:
            total += self.dcsd.parameter_count()
        if self.dswr is not None:
            total += self.dswr.parameter_count()
        return total

    # -- differentiable building blocks (shared by inference and training) --

    def embed_descriptors(self, descriptors: np.ndarray) -> Matrix:
        return ad.add_bias(ad.matmul(Matrix(descriptors), self.embed_weight.value),
                           self.embed_bias.value)

    def fusion_weight(self, frame: np.ndarray, config: TrackerConfig) -> Matrix:
        if self.dswr is not None:
            q = assess_quality(frame, config.quality_ranges).q
            return self.dswr.semantic_weight(q)
        return Matrix([[config.fixed_fusion_weight]])

    def encode_queries(self, x: Matrix, frame: np.ndarray,
                       config: TrackerConfig) -> Matrix:
        """Queries -> fused features (identity for the bare tracker)."""
        if self.student is None:
            return x
        semantic = self.student(x)
        weight = self.fusion_weight(frame, config)
        one_minus = ad.sub(Matrix([[1.0]]), weight)
        return ad.add(ad.scalar_mul(weight, semantic), ad.scalar_mul(one_minus, x))

    def predict_boxes(self, features: Matrix) -> Matrix:
        return ad.add_bias(ad.matmul(features, self.box_weight.value), self.box_bias.value)

    # -- persistence --

    def save(self, path: str | Path) -> None:
        named: dict[str, Parameter] = {p.name: p for p in self.tracker_parameters()}
        if self.student is not None:
            for name, p in self.student.named_parameters().items():
                named[f"student.{name}"] = p
        if self.dcsd is not None:
            for p in self.dcsd.parameters():
                named[p.name] = p
        if self.dswr is not None:
            for p in self.dswr.parameters():
                named[p.name] = p
        entries = []
        offset = 0
        blobs = []
        for name in sorted(named):
            value = named[name].value
            raw = np.ascontiguousarray(value.data, dtype="<f8").tobytes()
            entries.append({"name": name, "rows": value.rows, "cols": value.cols,
                            "offset": offset})
            offset += len(raw)
            blobs.append(raw)
        sc = self.student.config if self.student is not None else StudentConfig()
        header = {
            "format": "semtrack-tracker-v1",
            "use_student": self.use_student,
            "use_dswr": self.use_dswr,
            "train_loss_weights": self.train_loss_weights,
            "seed": self.seed,
            "student_config": {
                "input_dim": sc.input_dim, "hidden_dim": sc.hidden_dim,
                "num_layers": sc.num_layers, "num_heads": sc.num_heads,
                "ff_dim": sc.ff_dim, "output_dim": sc.output_dim,
                "residual_projection": sc.residual_projection,
            },
            "params": entries,
        }
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
            fh.write(b"\n")
            for raw in blobs:
                fh.write(raw)

    @classmethod
    def load(cls, path: str | Path) -> "TrackerModel":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode("utf-8"))
            blob = fh.read()
        if header.get("format") != "semtrack-tracker-v1":
            raise ValueError(f"{path}: not a tracker model file")
        model = cls(use_student=header["use_student"], use_dswr=header["use_dswr"],
                    train_loss_weights=header["train_loss_weights"],
                    student_config=StudentConfig(**header["student_config"]),
                    seed=header.get("seed", 0))
        named: dict[str, Parameter] = {p.name: p for p in model.tracker_parameters()}
        if model.student is not None:
            for name, p in model.student.named_parameters().items():
                named[f"student.{name}"] = p
        if model.dcsd is not None:
            for p in model.dcsd.parameters():
                named[p.name] = p
        if model.dswr is not None:
            for p in model.dswr.parameters():
                named[p.name] = p
        for entry in header["params"]:
            name = entry["name"]
            if name not in named:
                raise ValueError(f"{path}: unknown parameter {name!r}")
            count = entry["rows"] * entry["cols"]
            values = np.frombuffer(blob, dtype="<f8", count=count,
                                   offset=entry["offset"])
            target = named[name]
            trainable = target.trainable
            fresh = Parameter(values.reshape(entry["rows"], entry["cols"]).copy(),
                              trainable=trainable, name=name)
            _assign_parameter(model, name, fresh)
        return model


def _assign_parameter(model: TrackerModel, name: str, parameter: Parameter) -> None:
    if name.startswith("student."):
        model.student._params[name[len("student."):]] = parameter
    elif name == "embed.weight":
        model.embed_weight = parameter
    elif name == "embed.bias":
        model.embed_bias = parameter
    elif name == "box_head.weight":
        model.box_weight = parameter
    elif name == "box_head.bias":
        model.box_bias = parameter
    elif name == "dcsd.teacher_proj.weight":
        model.dcsd.teacher_weight = parameter
    elif name == "dcsd.teacher_proj.bias":
        model.dcsd.teacher_bias = parameter
    elif name == "dcsd.loss_logits":
        model.dcsd.loss_logits = parameter
    elif name == "dswr.w":
        model.dswr.w = parameter
    elif name == "dswr.b":
        model.dswr.b = parameter
    else:  # pragma: no cover
        raise ValueError(f"unknown parameter name {name!r}")


@dataclass
class _ActiveTrack:
    track_id: int
    feature: np.ndarray            # 1 x 256 fused feature
    box: tuple[float, float, float, float]
    confidence: float
    misses: int = 0


def _cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    an = a / np.maximum(np.linalg.norm(a, axis=1, keepdims=True), 1e-12)
    bn = b / np.maximum(np.linalg.norm(b, axis=1, keepdims=True), 1e-12)
    return an @ bn.T


def track_sequence(frames: list[np.ndarray], detections: list[Detection],
                   model: TrackerModel,
                   config: TrackerConfig = TrackerConfig()) -> TrackSet:
    """Run the tracker over a frame sequence; returns per-frame records."""
    per_frame: dict[int, list[Detection]] = {}
    for det in detections:
        if det.frame < 0 or det.frame >= len(frames):
            raise ValueError(f"detection frame {det.frame} outside sequence "
                             f"of {len(frames)} frames")
        per_frame.setdefault(det.frame, []).append(det)

    output = TrackSet()
    active: list[_ActiveTrack] = []
    next_id = 1
    for frame_index, frame in enumerate(frames):
        dets = per_frame.get(frame_index, [])
        carried = [trk for trk in active
                   if trk.confidence > config.propagate_confidence]
        if not dets and not carried:
            for trk in active:
                trk.misses += 1
                trk.confidence *= config.miss_decay
            active = [t for t in active if t.misses <= config.max_age]
            continue

        rows: list[np.ndarray] = [trk.feature for trk in carried]
        descriptors = [box_descriptor(frame, det.box) for det in dets]
        n_carried = len(rows)
        if descriptors:
            embedded = model.embed_descriptors(np.concatenate(descriptors, axis=0))
            rows.extend(embedded.data[i:i + 1] for i in range(len(descriptors)))
        x = Matrix(np.concatenate(rows, axis=0)) if rows else None
        fused = model.encode_queries(x, frame, config).data if x is not None else None

        track_feats = fused[:n_carried] if fused is not None else np.zeros((0, FEATURE_DIM))
        prop_feats = (fused[n_carried:] if fused is not None
                      else np.zeros((0, FEATURE_DIM)))

        matched_tracks: set[int] = set()
        matched_props: set[int] = set()
        if carried and dets:
            cost = (1.0 - _cosine(track_feats, prop_feats)
                    + config.iou_weight * (1.0 - np.array(
                        [[box_iou(trk.box, det.box) for det in dets]
                         for trk in carried])))
            gated = np.where(cost <= config.match_gate, cost, 1e9)
            rows_idx, cols_idx = linear_sum_assignment(gated)
            for r, c in zip(rows_idx, cols_idx):
                if cost[r, c] <= config.match_gate:
                    trk = carried[r]
                    trk.box = dets[c].box
                    trk.feature = prop_feats[c:c + 1].copy()
                    trk.confidence = dets[c].confidence
                    trk.misses = 0
                    matched_tracks.add(id(trk))
                    matched_props.add(c)
                    output.add(TrackRecord(frame=frame_index, track_id=trk.track_id,
                                           box=dets[c].box,
                                           confidence=dets[c].confidence))

        newborn: set[int] = set()
        for c, det in enumerate(dets):
            if c in matched_props or det.confidence < config.birth_confidence:
                continue
            track = _ActiveTrack(track_id=next_id, feature=prop_feats[c:c + 1].copy(),
                                 box=det.box, confidence=det.confidence)
            next_id += 1
            active.append(track)
            newborn.add(id(track))
            output.add(TrackRecord(frame=frame_index, track_id=track.track_id,
                                   box=det.box, confidence=det.confidence))

        # age everything that neither matched nor was born this frame
        survivors = []
        for trk in active:
            if id(trk) in matched_tracks or id(trk) in newborn:
                survivors.append(trk)
                continue
            trk.misses += 1
            trk.confidence *= config.miss_decay
            if trk.misses <= config.max_age:
                survivors.append(trk)
        active = survivors
    return output
