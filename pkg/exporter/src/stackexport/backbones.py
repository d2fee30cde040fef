"""Frozen backbone registry and layer tapping.

Residual classification backbones stand in for face recognition and
expression networks; a four-block strided-conv discriminator stands in
for an attribute-editing model. Without a checkpoint the weights are a
seeded random init (the exact trained checkpoints are interchangeable
as far as the export pipeline is concerned); pass ``--checkpoint`` to
load real ones. Models are always frozen: eval mode, requires_grad off,
inference under no_grad.
"""

from __future__ import annotations

from collections import OrderedDict

import torch
from torch import nn
from torchvision import models

__all__ = ["BACKBONES", "DEFAULT_LAYERS", "build_backbone", "tap_layers"]


class EditingDiscriminator(nn.Module):
    """PatchGAN-style discriminator trunk: four downsampling conv blocks."""

    def __init__(self, channels=(32, 64, 128, 256)):
        super().__init__()
        c_in = 3
        for i, c_out in enumerate(channels, start=1):
            block = nn.Sequential(
                nn.Conv2d(c_in, c_out, kernel_size=4, stride=2, padding=1),
                nn.LeakyReLU(0.01, inplace=True),
            )
            self.add_module(f"down{i}", block)
            c_in = c_out
        self.head = nn.Conv2d(c_in, 1, kernel_size=3, stride=1, padding=1)

    def forward(self, x):
        for i in range(1, 5):
            x = getattr(self, f"down{i}")(x)
        return self.head(x)


BACKBONES = {
    "resnet18": lambda: models.resnet18(weights=None),
    "resnet34": lambda: models.resnet34(weights=None),
    "resnet50": lambda: models.resnet50(weights=None),
    "editing_disc": EditingDiscriminator,
}

DEFAULT_LAYERS = {
    "resnet18": ["layer1", "layer2", "layer3", "layer4"],
    "resnet34": ["layer1", "layer2", "layer3", "layer4"],
    "resnet50": ["layer1", "layer2", "layer3", "layer4"],
    "editing_disc": ["down1", "down2", "down3", "down4"],
}


def build_backbone(name: str, seed: int = 0, checkpoint: str | None = None) -> nn.Module:
    """Construct, optionally load, and freeze a backbone."""
    if name not in BACKBONES:
        raise ValueError(f"unknown backbone {name!r}; choices: {sorted(BACKBONES)}")
    torch.manual_seed(seed)
    model = BACKBONES[name]()
    if checkpoint is not None:
        state = torch.load(checkpoint, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def tap_layers(model: nn.Module, layer_names: list[str]):
    """Register forward hooks that capture each named layer's output.

    Returns (storage, handles): after a forward pass ``storage`` maps the
    layer name to its activation tensor. Unknown names raise ValueError.
    """
    modules = dict(model.named_modules())
    missing = [n for n in layer_names if n not in modules]
    if missing:
        raise ValueError(f"layer names not in backbone: {missing}")
    storage: "OrderedDict[str, torch.Tensor]" = OrderedDict()
    handles = []
    for name in layer_names:
        def hook(_module, _inputs, output, _name=name):
            storage[_name] = output.detach()
        handles.append(modules[name].register_forward_hook(hook))
    return storage, handles
