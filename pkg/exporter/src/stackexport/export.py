"""Export pipeline: images -> frozen backbone -> feature container.

The manifest is the source of truth: a CSV with header
``file,label[,dataset_id]`` listing every image to export, paths
relative to the image directory. Images in the directory that the
manifest does not label are an error, as are manifest rows whose file is
missing or unreadable. Inference runs single-threaded under no_grad with
a seeded weight init, so two runs of the same spec produce byte-identical
containers.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .backbones import DEFAULT_LAYERS, build_backbone, tap_layers
from .container import ExportRecord, encode_container

__all__ = ["ExportSpec", "ManifestError", "read_manifest", "export"]

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".webp"}


class ManifestError(ValueError):
    """Manifest and image directory disagree (missing file or label)."""


@dataclass
class ExportSpec:
    backbone: str = "resnet18"
    layers: list[str] = field(default_factory=list)  # empty = backbone default
    image_dir: str | Path = "."
    manifest: str | Path = "manifest.csv"
    out_path: str | Path = "features.fstk"
    resize: int = 256
    seed: int = 0
    checkpoint: str | None = None
    dataset_id: str = "export"

    def __post_init__(self):
        if not self.layers:
            self.layers = list(DEFAULT_LAYERS.get(self.backbone, []))
        if len(self.layers) < 2:
            raise ValueError(f"need at least 2 tapped layers, got {self.layers}")
        if self.resize < 16:
            raise ValueError(f"resize target too small: {self.resize}")


def read_manifest(path: str | Path) -> list[dict]:
    rows = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"file", "label"} <= set(reader.fieldnames):
            raise ManifestError(f"{path}: manifest needs 'file' and 'label' columns")
        for i, row in enumerate(reader):
            try:
                label = int(row["label"])
            except (TypeError, ValueError):
                raise ManifestError(f"{path}: row {i}: bad label {row.get('label')!r}") from None
            if label not in (0, 1):
                raise ManifestError(f"{path}: row {i}: label must be 0 or 1, got {label}")
            rows.append({"file": row["file"], "label": label,
                         "dataset_id": (row.get("dataset_id") or "").strip()})
    return rows


def _load_image(path: Path, resize: int) -> np.ndarray:
    """RGB, bilinear resize to (resize, resize), scaled to [-1, 1]."""
    try:
        with Image.open(path) as img:
            img = img.convert("RGB").resize((resize, resize), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float32) / 255.0
    except OSError as err:
        raise ManifestError(f"unreadable image {path}: {err}") from None
    return ((arr - 0.5) / 0.5).transpose(2, 0, 1)


def _check_unlabeled(image_dir: Path, listed: set[str]) -> None:
    on_disk = {p.name for p in image_dir.iterdir()
               if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES}
    unlabeled = sorted(on_disk - listed)
    if unlabeled:
        raise ManifestError(f"images without a manifest label: {unlabeled}")


def export(spec: ExportSpec) -> Path:
    """Run every manifest image through the frozen backbone, write the container.

    Also writes a ``<out>.manifest.json`` sidecar with counts and dims.
    Returns the container path.
    """
    image_dir = Path(spec.image_dir)
    rows = read_manifest(spec.manifest)
    _check_unlabeled(image_dir, {r["file"] for r in rows})

    torch.set_num_threads(1)  # bitwise-stable reductions across runs
    model = build_backbone(spec.backbone, seed=spec.seed, checkpoint=spec.checkpoint)
    storage, handles = tap_layers(model, spec.layers)

    records = []
    with torch.no_grad():
        for row in rows:
            path = image_dir / row["file"]
            if not path.is_file():
                raise ManifestError(f"manifest names missing image {path}")
            raw = _load_image(path, spec.resize)
            storage.clear()
            model(torch.from_numpy(raw[None]))
            levels = [storage[name][0].numpy().astype(np.float32, copy=True)
                      for name in spec.layers]
            records.append(ExportRecord(
                raw_input=raw,
                levels=levels,
                label=row["label"],
                dataset_id=row["dataset_id"] or spec.dataset_id,
            ))
    for h in handles:
        h.remove()

    out_path = Path(spec.out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(encode_container(records))
    sidecar = {
        "file": out_path.name,
        "backbone": spec.backbone,
        "layers": spec.layers,
        "resize": spec.resize,
        "seed": spec.seed,
        "sample_count": len(records),
        "level_dims": [list(lv.shape) for lv in records[0].levels] if records else [],
    }
    out_path.with_name(out_path.name + ".manifest.json").write_text(
        json.dumps(sidecar, indent=2) + "\n")
    return out_path
