"""Reference model and preprocessing used to generate golden fixtures.

Everything here stays inside the training framework (torchvision model,
PIL-backed transforms): fixture values produced on this path are the oracle
the shipped pipeline is checked against.
"""

from __future__ import annotations

import numpy as np
import torch
from PIL import Image
from torchvision.models import densenet121
from torchvision.transforms import functional as TF

SEEDED_INIT_SEED = 20240501
CROP_THRESHOLD = 10
TARGET_SIZE = 512

MEME_INDICES = [71, 109, 121, 53, 55, 123, 29, 133, 84]
MEME_WEIGHTS = [-1411.32, 517.09, 342.41, -707.9, 1442.09, -23.25, -541.64, -8.44, 5.44]
MEME_BIAS = 5.18


def build_reference_model(weights_mode: str = "seeded") -> torch.nn.Module:
    """Headless densenet121 in eval mode.

    "pretrained" loads the ImageNet checkpoint (needs network or a local
    cache); "seeded" deterministically initializes from a fixed seed so the
    whole fixture chain is reproducible in offline environments.
    """
    if weights_mode == "pretrained":
        from torchvision.models import DenseNet121_Weights

        model = densenet121(weights=DenseNet121_Weights.IMAGENET1K_V1)
    elif weights_mode == "seeded":
        torch.manual_seed(SEEDED_INIT_SEED)
        model = densenet121(weights=None)
    else:
        raise ValueError(f"weights_mode must be 'pretrained' or 'seeded', got {weights_mode!r}")
    model.classifier = torch.nn.Identity()
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def reference_preprocess(image: Image.Image) -> torch.Tensor:
    """Crop black border, pad to square, resize to 512, normalize to [-1, 1]."""
    rgb = image.convert("RGB")
    arr = np.asarray(rgb)
    mask = arr.max(axis=2) >= CROP_THRESHOLD
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size:
        rgb = rgb.crop((int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1))
    w, h = rgb.size
    if w != h:
        side = max(w, h)
        canvas = Image.new("RGB", (side, side), (0, 0, 0))
        canvas.paste(rgb, ((side - w) // 2, (side - h) // 2))
        rgb = canvas
    rgb = TF.resize(rgb, TARGET_SIZE, interpolation=TF.InterpolationMode.BILINEAR)
    tensor = TF.to_tensor(rgb)
    return TF.normalize(tensor, [0.5] * 3, [0.5] * 3)


def reference_features(model: torch.nn.Module, tensor: torch.Tensor) -> torch.Tensor:
    with torch.no_grad():
        return model(tensor.unsqueeze(0)).squeeze(0)


def reference_meme_prediction(features: torch.Tensor) -> float:
    w = torch.tensor(MEME_WEIGHTS)
    b = torch.tensor([MEME_BIAS])
    feats = features.reshape(1, -1)[:, MEME_INDICES]
    return float(torch.sigmoid(feats @ w + b))
