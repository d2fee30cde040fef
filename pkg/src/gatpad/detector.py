"""Main detection branch and head.

A small CNN turns the raw image into a detection feature vector; when the
adapter is enabled its output is concatenated on, and a single linear
layer produces two logits. The bona-fide score is the softmax probability
of class 1, everywhere: higher means more likely live.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import adapter as adapter_mod
from .adapter import AdapterConfig, FeatureStack, GraphSpec, Topology
from .diffengine import ParamSet, Tensor, glorot_uniform, ops, zeros
from .diffengine.tensor import ShapeError

__all__ = [
    "ATTACK",
    "BONAFIDE",
    "Sample",
    "DetectorConfig",
    "ModelConfig",
    "init_detector_params",
    "init_classifier_params",
    "build_params",
    "detect_features",
    "fuse",
    "classify",
    "batch_logits",
    "loss",
    "bonafide_scores",
]

ATTACK = 0
BONAFIDE = 1


@dataclass
class Sample:
    """One labeled input: raw image plus its frozen feature stack."""

    raw_input: np.ndarray
    feature_stack: FeatureStack
    label: int
    dataset_id: str = "default"

    def __post_init__(self):
        self.raw_input = np.asarray(self.raw_input, dtype=np.float32)
        if self.raw_input.ndim != 3:
            raise ValueError(f"raw input must be (channels, h, w), got {self.raw_input.shape}")
        if self.label not in (ATTACK, BONAFIDE):
            raise ValueError(f"label must be 0 (attack) or 1 (bona fide), got {self.label}")


@dataclass(frozen=True)
class DetectorConfig:
    """Shape of the CNN branch: conv/relu/halving-pool blocks, then a
    global average pool and a linear map to ``feature_dim``."""

    input_dims: tuple[int, int, int] = (3, 32, 32)
    channels: tuple[int, ...] = (8, 16, 32)
    feature_dim: int = 64

    def __post_init__(self):
        h, w = self.input_dims[1], self.input_dims[2]
        if h % (2 ** len(self.channels)) or w % (2 ** len(self.channels)):
            raise ValueError(
                f"input {h}x{w} must be divisible by 2^{len(self.channels)} for the pooling stack")


@dataclass(frozen=True)
class ModelConfig:
    """Everything needed to build and run the full model."""

    detector: DetectorConfig = field(default_factory=DetectorConfig)
    adapter: AdapterConfig = field(default_factory=AdapterConfig)
    adapter_enabled: bool = True
    topology: Topology = Topology.STEP_BY_STEP
    self_loops: bool = True

    def graph_spec(self) -> GraphSpec:
        return GraphSpec(self.topology, n=self.adapter.n_levels, self_loops=self.self_loops)

    @property
    def fused_dim(self) -> int:
        if self.adapter_enabled:
            return self.detector.feature_dim + self.adapter.out_dim
        return self.detector.feature_dim


def init_detector_params(cfg: DetectorConfig, rng: np.random.Generator,
                         params: ParamSet | None = None, prefix: str = "detector") -> ParamSet:
    params = ParamSet() if params is None else params
    c_in = cfg.input_dims[0]
    for i, c_out in enumerate(cfg.channels):
        params.add(f"{prefix}.conv{i}.w",
                   glorot_uniform(rng, (c_out, c_in, 3, 3), fan_in=c_in * 9, fan_out=c_out * 9))
        params.add(f"{prefix}.conv{i}.b", zeros((c_out,)))
        c_in = c_out
    params.add(f"{prefix}.fc.w",
               glorot_uniform(rng, (cfg.feature_dim, c_in), fan_in=c_in, fan_out=cfg.feature_dim))
    params.add(f"{prefix}.fc.b", zeros((cfg.feature_dim,)))
    return params


def init_classifier_params(in_dim: int, rng: np.random.Generator,
                           params: ParamSet | None = None, prefix: str = "cls") -> ParamSet:
    params = ParamSet() if params is None else params
    params.add(f"{prefix}.w", glorot_uniform(rng, (2, in_dim), fan_in=in_dim, fan_out=2))
    params.add(f"{prefix}.b", zeros((2,)))
    return params


def build_params(cfg: ModelConfig, seed: int) -> ParamSet:
    """All trainable parameters of the configured model, seeded."""
    rng = np.random.default_rng(seed)
    params = init_detector_params(cfg.detector, rng)
    if cfg.adapter_enabled:
        adapter_mod.init_adapter_params(cfg.adapter, rng, params=params)
    init_classifier_params(cfg.fused_dim, rng, params=params)
    return params


def detect_features(x: Tensor | np.ndarray, params: ParamSet, cfg: DetectorConfig,
                    prefix: str = "detector") -> Tensor:
    """CNN branch feature: [c, h, w] -> [feature_dim], batched if 4-D."""
    if not isinstance(x, Tensor):
        x = Tensor(x)
    single = x.ndim == 3
    if single:
        x = ops.reshape(x, (1,) + x.shape)
    if x.shape[1:] != cfg.input_dims:
        raise ShapeError(f"detector input {x.shape[1:]} != configured {cfg.input_dims}")
    y = x
    for i in range(len(cfg.channels)):
        y = ops.conv2d(y, params[f"{prefix}.conv{i}.w"], params[f"{prefix}.conv{i}.b"], stride=1)
        y = ops.relu(y)
        y = ops.adaptive_avg_pool(y, (y.shape[-2] // 2, y.shape[-1] // 2))
    y = ops.adaptive_avg_pool(y, (1, 1))
    y = ops.reshape(y, (y.shape[0], y.shape[1]))
    y = ops.linear(y, params[f"{prefix}.fc.w"], params[f"{prefix}.fc.b"])
    return ops.take_row(y, 0) if single else y


def fuse(f_p: Tensor, f_t: Tensor) -> Tensor:
    """Concatenate detection and adapter features (suffix is the adapter's)."""
    if f_p.ndim != f_t.ndim:
        raise ShapeError(f"fuse: rank mismatch {f_p.shape} vs {f_t.shape}")
    return ops.concat([f_p, f_t], axis=f_p.ndim - 1)


def classify(f_h: Tensor, params: ParamSet, prefix: str = "cls") -> Tensor:
    """Two logits; index 1 is the bona-fide class."""
    return ops.linear(f_h, params[f"{prefix}.w"], params[f"{prefix}.b"])


def _stacked_levels(samples: list[Sample]) -> list[Tensor]:
    n = samples[0].feature_stack.n
    for s in samples:
        if s.feature_stack.n != n:
            raise ShapeError("samples carry stacks with differing level counts")
    return [
        Tensor(np.stack([s.feature_stack.levels[i] for s in samples]))
        for i in range(n)
    ]


def batch_logits(samples: list[Sample], params: ParamSet, cfg: ModelConfig) -> Tensor:
    """Forward the whole pipeline for a batch; returns [batch, 2] logits."""
    if not samples:
        raise ValueError("empty batch")
    raws = Tensor(np.stack([s.raw_input for s in samples]))
    f_p = detect_features(raws, params, cfg.detector)
    if cfg.adapter_enabled:
        levels = _stacked_levels(samples)
        f_t = adapter_mod.adapt_batch(levels, params, cfg.graph_spec(), cfg.adapter)
        f_h = fuse(f_p, f_t)
    else:
        f_h = f_p
    return classify(f_h, params)


def loss(samples: list[Sample], params: ParamSet, cfg: ModelConfig) -> Tensor:
    """Mean cross-entropy of the fused classifier over the batch."""
    logits = batch_logits(samples, params, cfg)
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return ops.cross_entropy(logits, labels)


def bonafide_scores(logits: np.ndarray) -> np.ndarray:
    """Softmax probability of the bona-fide class, numerically stable."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    return p[..., BONAFIDE].astype(np.float64)
