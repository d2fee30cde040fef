"""Bridge from pretrained image backbones to FSTK feature containers."""

from .backbones import BACKBONES, DEFAULT_LAYERS, build_backbone, tap_layers
from .container import ExportRecord, encode_container
from .export import ExportSpec, ManifestError, export, read_manifest

__version__ = "0.1.0"

__all__ = [
    "BACKBONES",
    "DEFAULT_LAYERS",
    "build_backbone",
    "tap_layers",
    "ExportRecord",
    "encode_container",
    "ExportSpec",
    "ManifestError",
    "export",
    "read_manifest",
    "__version__",
]
