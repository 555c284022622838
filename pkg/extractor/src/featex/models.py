"""Backbone registry: each model yields penultimate-layer image features.

"vgg19" uses the torchvision ImageNet weights and emits the output of the
second fully-connected classifier layer (4096-dim); it is a hard failure
when the weights are not available locally. "seeded-cnn" is a small
convolutional net whose weights are generated from a fixed seed, so it is
always available and fully deterministic; it exists for offline pipelines
and tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

SEEDED_CNN = "seeded-cnn"
VGG19 = "vgg19"
MODEL_NAMES = (SEEDED_CNN, VGG19)

_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


class ModelUnavailableError(Exception):
    """The requested backbone (or its weights) cannot be loaded locally."""


@dataclass
class Backbone:
    name: str
    module: nn.Module
    input_size: int
    feature_dim: int
    mean: tuple
    std: tuple


def _seeded_cnn(seed: int = 1234) -> nn.Module:
    trunk = nn.Sequential(
        nn.Conv2d(3, 16, 3, stride=2, padding=1), nn.ReLU(),
        nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.ReLU(),
        nn.Conv2d(32, 64, 3, stride=2, padding=1), nn.ReLU(),
        nn.AdaptiveAvgPool2d(1), nn.Flatten(),
        nn.Linear(64, 128), nn.ReLU(),
        nn.Linear(128, 64), nn.ReLU(),
    )
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for param in trunk.parameters():
            param.copy_(torch.empty_like(param).normal_(0.0, 0.05, generator=gen))
    return trunk


def _vgg19_fc2() -> nn.Module:
    try:
        from torchvision.models import VGG19_Weights, vgg19
        net = vgg19(weights=VGG19_Weights.IMAGENET1K_V1)
    except Exception as exc:
        raise ModelUnavailableError(
            f"vgg19 weights are not available locally: {exc}") from exc
    # keep the classifier through the second fully-connected layer + relu
    net.classifier = nn.Sequential(*list(net.classifier.children())[:5])
    return net


def load_backbone(name: str) -> Backbone:
    if name == SEEDED_CNN:
        module = _seeded_cnn()
        spec = Backbone(name, module, input_size=64, feature_dim=64,
                        mean=(0.5, 0.5, 0.5), std=(0.5, 0.5, 0.5))
    elif name == VGG19:
        module = _vgg19_fc2()
        spec = Backbone(name, module, input_size=224, feature_dim=4096,
                        mean=_IMAGENET_MEAN, std=_IMAGENET_STD)
    else:
        raise ModelUnavailableError(
            f"unknown model {name!r}, expected one of {MODEL_NAMES}")
    spec.module.eval()
    return spec
