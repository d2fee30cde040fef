"""Dataset providers: binary feature containers and synthetic generators.

Container layout (all integers little-endian, floats 32-bit little-endian,
row-major):

    magic           4 bytes  b"FSTK"
    version         u16      must be 1
    sample_count    u32
    level_count     u8
    level dims      level_count x (c u16, h u16, w u16)
    per sample:
        label           u8   0 attack / 1 bona fide
        dataset_id      u16 length + UTF-8 bytes
        raw dims        c u16, h u16, w u16
        raw data        c*h*w f32
        level data      per level, c*h*w f32 (dims from header)

A JSON sidecar manifest (counts, dims, per-dataset tallies) is written
next to saved containers for human inspection. Model checkpoints reuse
the same envelope idiom under magic b"PSET" with an embedded JSON config
blob.

Synthetic datasets plant a class-conditional rank-1 pattern (sign follows
the label) into the feature levels and/or the raw image; the pattern is
drawn from ``signal_seed`` so several datasets can share one signal while
differing in sampling noise and per-dataset raw-channel offsets.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .adapter import FeatureStack
from .detector import Sample
from .diffengine import ParamSet, Tensor

__all__ = [
    "ContainerFormatError",
    "write_container",
    "read_container",
    "save_container",
    "load_container",
    "container_manifest",
    "samples_equal",
    "SynthSpec",
    "generate_synthetic",
    "params_to_bytes",
    "params_from_bytes",
    "save_checkpoint",
    "load_checkpoint",
]

_MAGIC = b"FSTK"
_VERSION = 1
_PSET_MAGIC = b"PSET"


class ContainerFormatError(ValueError):
    """Malformed container bytes (bad magic, truncation, version, sizes)."""


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ContainerFormatError(
                f"truncated payload: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def done(self) -> bool:
        return self.pos == len(self.data)


def _f32_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def write_container(samples: Sequence[Sample]) -> bytes:
    """Serialize samples bit-exactly; empty input gives a header-only file."""
    out = bytearray()
    out += struct.pack("<4sHI", _MAGIC, _VERSION, len(samples))
    if samples:
        level_dims = samples[0].feature_stack.level_dims()
    else:
        level_dims = ()
    try:
        out += struct.pack("<B", len(level_dims))
        for c, h, w in level_dims:
            out += struct.pack("<HHH", c, h, w)
    except struct.error as err:
        raise ContainerFormatError(f"header field exceeds its range ({err})") from None
    for i, s in enumerate(samples):
        if s.feature_stack.level_dims() != level_dims:
            raise ContainerFormatError(f"sample {i}: level dims differ from sample 0")
        ident = s.dataset_id.encode("utf-8")
        try:
            out += struct.pack("<BH", s.label, len(ident))
            out += ident
            out += struct.pack("<HHH", *s.raw_input.shape)
        except struct.error as err:
            raise ContainerFormatError(f"sample {i}: field exceeds the u16 header range "
                                       f"({err})") from None
        out += _f32_bytes(s.raw_input)
        for lv in s.feature_stack.levels:
            out += _f32_bytes(lv)
    return bytes(out)


def read_container(data: bytes) -> list[Sample]:
    """Parse container bytes back into samples; never crashes on garbage."""
    r = _Reader(data)
    magic, version, count = r.unpack("<4sHI")
    if magic != _MAGIC:
        raise ContainerFormatError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    if version != _VERSION:
        raise ContainerFormatError(f"unsupported container version {version}")
    (level_count,) = r.unpack("<B")
    level_dims = [r.unpack("<HHH") for _ in range(level_count)]
    for j, (c, h, w) in enumerate(level_dims):
        if c * h * w == 0:
            raise ContainerFormatError(f"level {j}: zero-sized dims {(c, h, w)}")
    samples = []
    for i in range(count):
        label, id_len = r.unpack("<BH")
        if label not in (0, 1):
            raise ContainerFormatError(f"sample {i}: label {label} not in {{0, 1}}")
        try:
            dataset_id = r.take(id_len).decode("utf-8")
        except UnicodeDecodeError as err:
            raise ContainerFormatError(f"sample {i}: dataset id is not UTF-8") from err
        rc, rh, rw = r.unpack("<HHH")
        if rc * rh * rw == 0:
            raise ContainerFormatError(f"sample {i}: zero-sized raw dims {(rc, rh, rw)}")
        raw = np.frombuffer(r.take(rc * rh * rw * 4), dtype="<f4").reshape(rc, rh, rw)
        levels = [
            np.frombuffer(r.take(c * h * w * 4), dtype="<f4").reshape(c, h, w)
            for c, h, w in level_dims
        ]
        samples.append(Sample(
            raw_input=raw.copy(),
            feature_stack=FeatureStack([lv.copy() for lv in levels], source_tag="container"),
            label=int(label),
            dataset_id=dataset_id,
        ))
    if not r.done():
        raise ContainerFormatError(
            f"{len(data) - r.pos} trailing bytes after {count} declared samples")
    return samples


def container_manifest(path: str | Path, samples: Sequence[Sample]) -> dict:
    per_dataset: dict[str, int] = {}
    for s in samples:
        per_dataset[s.dataset_id] = per_dataset.get(s.dataset_id, 0) + 1
    labels = [s.label for s in samples]
    return {
        "file": Path(path).name,
        "version": _VERSION,
        "sample_count": len(samples),
        "level_dims": [list(d) for d in (samples[0].feature_stack.level_dims() if samples else ())],
        "raw_dims": list(samples[0].raw_input.shape) if samples else [],
        "datasets": per_dataset,
        "labels": {"attack": labels.count(0), "bonafide": labels.count(1)},
    }


def save_container(path: str | Path, samples: Sequence[Sample], manifest: bool = True) -> Path:
    path = Path(path)
    path.write_bytes(write_container(samples))
    if manifest:
        side = path.with_name(path.name + ".manifest.json")
        side.write_text(json.dumps(container_manifest(path, samples), indent=2) + "\n")
    return path


def load_container(path: str | Path) -> list[Sample]:
    return read_container(Path(path).read_bytes())


def samples_equal(a: Sample, b: Sample) -> bool:
    """Bitwise equality of every serialized field."""
    return (
        a.label == b.label
        and a.dataset_id == b.dataset_id
        and a.raw_input.shape == b.raw_input.shape
        and a.raw_input.tobytes() == b.raw_input.tobytes()
        and a.feature_stack.level_dims() == b.feature_stack.level_dims()
        and all(x.tobytes() == y.tobytes()
                for x, y in zip(a.feature_stack.levels, b.feature_stack.levels))
    )


# ---------------------------------------------------------------------------
# synthetic datasets

@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one seeded synthetic dataset.

    ``signal_target`` picks where the class-dependent pattern lives: in the
    feature levels only (raw is pure noise, so the image branch alone is
    uninformative), in the raw image only, or in both. ``domain_shift``
    offsets the raw channel means, modelling dataset-specific nuisance.
    ``signal_seed`` fixes the pattern itself so independent datasets can
    share the same class signal.
    """

    count_per_class: int = 100
    level_dims: tuple[tuple[int, int, int], ...] = (
        (4, 16, 16), (8, 8, 8), (16, 4, 4), (32, 4, 4),
    )
    raw_dims: tuple[int, int, int] = (3, 32, 32)
    signal_target: str = "both"
    dataset_id: str = "synth"
    domain_shift: tuple[float, ...] = (0.0, 0.0, 0.0)
    noise_std: float = 1.0
    signal_amplitude: float = 3.0
    seed: int = 0
    signal_seed: int = 777

    def __post_init__(self):
        if self.count_per_class <= 0:
            raise ValueError(f"count_per_class must be positive, got {self.count_per_class}")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.signal_target not in ("raw_only", "features_only", "both"):
            raise ValueError(f"unknown signal_target: {self.signal_target!r}")
        if len(self.domain_shift) != self.raw_dims[0]:
            raise ValueError("domain_shift must have one offset per raw channel")


def _rank1_pattern(rng: np.random.Generator, dims: tuple[int, int, int]) -> np.ndarray:
    c, h, w = dims
    p = np.einsum("i,j,k->ijk", rng.standard_normal(c), rng.standard_normal(h),
                  rng.standard_normal(w))
    rms = np.sqrt((p * p).mean())
    return (p / max(rms, 1e-12)).astype(np.float32)


def generate_synthetic(spec: SynthSpec) -> list[Sample]:
    """Deterministic labeled samples: attacks first, then bona fide."""
    rng = np.random.default_rng(spec.seed)
    pattern_rng = np.random.default_rng(spec.signal_seed)
    level_patterns = [_rank1_pattern(pattern_rng, d) for d in spec.level_dims]
    raw_pattern = _rank1_pattern(pattern_rng, spec.raw_dims)

    n = 2 * spec.count_per_class
    labels = np.repeat([0, 1], spec.count_per_class)
    signs = np.where(labels == 1, 1.0, -1.0).astype(np.float32)
    std = np.float32(spec.noise_std)
    amp = np.float32(spec.signal_amplitude)
    shift = np.asarray(spec.domain_shift, dtype=np.float32)[:, None, None]

    raws = rng.standard_normal((n,) + spec.raw_dims, dtype=np.float32) * std + shift
    if spec.signal_target in ("raw_only", "both"):
        raws += signs[:, None, None, None] * amp * raw_pattern
    level_data = []
    for dims, pat in zip(spec.level_dims, level_patterns):
        lv = rng.standard_normal((n,) + dims, dtype=np.float32) * std
        if spec.signal_target in ("features_only", "both"):
            lv += signs[:, None, None, None] * amp * pat
        level_data.append(lv)

    samples = []
    for i in range(n):
        stack = FeatureStack([lv[i] for lv in level_data], source_tag="synthetic")
        samples.append(Sample(raw_input=raws[i], feature_stack=stack,
                              label=int(labels[i]), dataset_id=spec.dataset_id))
    return samples


# ---------------------------------------------------------------------------
# checkpoints (ParamSet in the same envelope idiom)

def params_to_bytes(params: ParamSet, config: dict | None = None) -> bytes:
    cfg_blob = json.dumps(config or {}, sort_keys=True).encode("utf-8")
    out = bytearray()
    out += struct.pack("<4sHI", _PSET_MAGIC, _VERSION, len(params))
    out += struct.pack("<I", len(cfg_blob))
    out += cfg_blob
    for name, t in params.items():
        nb = name.encode("utf-8")
        out += struct.pack("<H", len(nb))
        out += nb
        out += struct.pack("<BB", 1 if t.requires_grad else 0, t.data.ndim)
        out += struct.pack(f"<{t.data.ndim}I", *t.data.shape)
        out += _f32_bytes(t.data)
    return bytes(out)


def params_from_bytes(data: bytes) -> tuple[ParamSet, dict]:
    r = _Reader(data)
    magic, version, count = r.unpack("<4sHI")
    if magic != _PSET_MAGIC:
        raise ContainerFormatError(f"bad checkpoint magic {magic!r}")
    if version != _VERSION:
        raise ContainerFormatError(f"unsupported checkpoint version {version}")
    (cfg_len,) = r.unpack("<I")
    try:
        config = json.loads(r.take(cfg_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ContainerFormatError("corrupt checkpoint config blob") from err
    params = ParamSet()
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        trainable, ndim = r.unpack("<BB")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        arr = np.frombuffer(r.take(size * 4), dtype="<f4").reshape(shape)
        params.add(name, Tensor(arr.copy()), trainable=bool(trainable))
    if not r.done():
        raise ContainerFormatError("trailing bytes after checkpoint payload")
    return params, config


def save_checkpoint(path: str | Path, params: ParamSet, config: dict | None = None) -> Path:
    path = Path(path)
    path.write_bytes(params_to_bytes(params, config))
    return path


def load_checkpoint(path: str | Path) -> tuple[ParamSet, dict]:
    return params_from_bytes(Path(path).read_bytes())
