"""Training loop: Adam on the detection/adapter/classifier parameters.

Frozen feature stacks are consumed read-only; only the model parameters
move. Epoch shuffling draws from a generator seeded once per run, so a
given (config, seed, dataset) triple replays bit-identically. No learning
rate schedule and no early stopping.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import detector as detector_mod
from . import metrics as metrics_mod
from .adapter import AdapterConfig, Topology
from .detector import DetectorConfig, ModelConfig, Sample, build_params
from .diffengine import Adam, ParamSet, backward, no_grad

__all__ = [
    "TrainConfig",
    "TrainLog",
    "EpochStats",
    "TrainingDivergedError",
    "train",
    "predict_scores",
    "stack_fingerprint",
    "config_to_dict",
    "config_from_dict",
    "config_hash",
]


class TrainingDivergedError(RuntimeError):
    """Loss left the finite domain; carries where it happened."""


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    lr: float = 1e-4
    weight_decay: float = 5e-5
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    deterministic: bool = True  # numpy backend is always deterministic; kept as a contract knob

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    val: dict | None
    wall_time_s: float

    def jsonable(self, with_time: bool = True) -> dict:
        d = {"epoch": self.epoch, "mean_loss": self.mean_loss, "val": self.val}
        if with_time:
            d["wall_time_s"] = self.wall_time_s
        return d


@dataclass
class TrainLog:
    epochs: list[EpochStats] = field(default_factory=list)
    total_wall_time_s: float = 0.0

    def mean_losses(self) -> list[float]:
        return [e.mean_loss for e in self.epochs]

    def final_loss(self) -> float:
        if not self.epochs:
            raise ValueError("no epochs recorded")
        return self.epochs[-1].mean_loss

    def deterministic_fields(self) -> list[dict]:
        """Everything except wall times, for run-to-run comparison."""
        return [e.jsonable(with_time=False) for e in self.epochs]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.jsonable()) + "\n" for e in self.epochs)


def _batches(n: int, batch_size: int, order: np.ndarray):
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def train(config: TrainConfig, train_samples: Sequence[Sample],
          val_samples: Sequence[Sample] | None = None) -> tuple[ParamSet, TrainLog]:
    """Run the loop; returns the trained parameters and the log.

    The last partial batch of each epoch is kept. Validation metrics, when
    a validation set is given, are computed at the validation set's own
    equal-error threshold after each epoch.
    """
    if not train_samples:
        raise ValueError("empty training dataset")
    train_samples = list(train_samples)
    params = build_params(config.model, config.seed)
    opt = Adam(params, lr=config.lr, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    log = TrainLog()
    t_run = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        t_epoch = time.perf_counter()
        order = rng.permutation(len(train_samples))
        losses = []
        for bi, idx in enumerate(_batches(len(train_samples), config.batch_size, order)):
            batch = [train_samples[i] for i in idx]
            params.zero_grad()
            loss = detector_mod.loss(batch, params, config.model)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"non-finite loss {value} at epoch {epoch}, batch {bi}; "
                    "lower the learning rate or check the inputs")
            backward(loss)
            opt.step()
            losses.append(value)
        val_report = None
        if val_samples:
            scores = predict_scores(params, val_samples, config.model)
            ev = metrics_mod.evaluate(scores)
            val_report = {"hter": ev["hter"], "auc": ev["auc"]}
        log.epochs.append(EpochStats(
            epoch=epoch,
            mean_loss=float(np.mean(losses)),
            val=val_report,
            wall_time_s=time.perf_counter() - t_epoch,
        ))
    log.total_wall_time_s = time.perf_counter() - t_run
    return params, log


def predict_scores(params: ParamSet, samples: Sequence[Sample], model: ModelConfig,
                   batch_size: int = 64) -> metrics_mod.ScoreSet:
    """Bona-fide probability per sample, order-preserving."""
    samples = list(samples)
    if not samples:
        raise ValueError("empty dataset")
    scores = np.empty(len(samples), dtype=np.float64)
    with no_grad():
        for start in range(0, len(samples), batch_size):
            chunk = samples[start : start + batch_size]
            logits = detector_mod.batch_logits(chunk, params, model)
            scores[start : start + len(chunk)] = detector_mod.bonafide_scores(logits.data)
    labels = np.array([s.label for s in samples], dtype=np.int64)
    ids = [f"{s.dataset_id}:{i}" for i, s in enumerate(samples)]
    return metrics_mod.ScoreSet(scores, labels, sample_ids=ids,
                                dataset_ids=[s.dataset_id for s in samples])


def stack_fingerprint(samples: Sequence[Sample]) -> str:
    """SHA-256 over every feature-stack byte; training must not change it."""
    h = hashlib.sha256()
    for s in samples:
        for lv in s.feature_stack.levels:
            h.update(lv.tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# config (de)serialization, shared by the harness and the CLI

def config_to_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    d["model"]["topology"] = config.model.topology.value
    return d


def _take(d: dict, key: str, path: str):
    if not isinstance(d, dict):
        raise ValueError(f"{path}: expected an object")
    return d.get(key)


def config_from_dict(data: dict, path: str = "train") -> TrainConfig:
    """Build a TrainConfig from plain JSON data; unknown keys are errors.

    Raises ValueError whose message carries the offending key path.
    """
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected an object")
    data = dict(data)
    model_data = data.pop("model", {})
    if not isinstance(model_data, dict):
        raise ValueError(f"{path}.model: expected an object")
    model_data = dict(model_data)

    det_data = model_data.pop("detector", {})
    ada_data = model_data.pop("adapter", {})
    try:
        det_data = dict(det_data)
        if "input_dims" in det_data:
            det_data["input_dims"] = tuple(det_data["input_dims"])
        if "channels" in det_data:
            det_data["channels"] = tuple(det_data["channels"])
        detector_cfg = DetectorConfig(**det_data)
    except TypeError as err:
        raise ValueError(f"{path}.model.detector: {err}") from None
    try:
        ada_data = dict(ada_data)
        if "level_dims" in ada_data:
            ada_data["level_dims"] = tuple(tuple(d) for d in ada_data["level_dims"])
        adapter_cfg = AdapterConfig(**ada_data)
    except TypeError as err:
        raise ValueError(f"{path}.model.adapter: {err}") from None
    try:
        if "topology" in model_data:
            model_data["topology"] = Topology(model_data["topology"])
    except ValueError:
        raise ValueError(f"{path}.model.topology: unknown topology "
                         f"{model_data['topology']!r}") from None
    try:
        model_cfg = ModelConfig(detector=detector_cfg, adapter=adapter_cfg, **model_data)
    except TypeError as err:
        raise ValueError(f"{path}.model: {err}") from None
    try:
        return TrainConfig(model=model_cfg, **data)
    except TypeError as err:
        raise ValueError(f"{path}: {err}") from None


def config_hash(config: TrainConfig) -> str:
    blob = json.dumps(config_to_dict(config), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]
