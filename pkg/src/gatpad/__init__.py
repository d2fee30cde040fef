"""Graph-attention boosted presentation-attack detection, desk scale.

A small numpy library in five layers: a reverse-mode autodiff engine
(``diffengine``), a graph-attention feature adapter (``adapter``), a CNN
detector with fusion head (``detector``), data providers with a binary
feature-container format (``providers``), and training, biometric
metrics, and a cross-dataset protocol harness (``trainer``, ``metrics``,
``harness``). The CLI lives in ``cli``; ``verification`` holds the
finite-difference gradient suite.
"""

from . import adapter, detector, diffengine, harness, metrics, providers, trainer, verification
from .adapter import AdapterConfig, FeatureStack, GraphSpec, Topology
from .detector import DetectorConfig, ModelConfig, Sample
from .metrics import ScoreSet
from .providers import SynthSpec, generate_synthetic, load_container, save_container
from .trainer import TrainConfig, predict_scores, train

__version__ = "0.1.0"

__all__ = [
    "adapter",
    "detector",
    "diffengine",
    "harness",
    "metrics",
    "providers",
    "trainer",
    "verification",
    "AdapterConfig",
    "FeatureStack",
    "GraphSpec",
    "Topology",
    "DetectorConfig",
    "ModelConfig",
    "Sample",
    "ScoreSet",
    "SynthSpec",
    "generate_synthetic",
    "load_container",
    "save_container",
    "TrainConfig",
    "predict_scores",
    "train",
    "__version__",
]
