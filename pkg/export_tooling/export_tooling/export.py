"""Backbone export with a mandatory parity gate."""

from __future__ import annotations

import hashlib
from pathlib import Path

from .onnx_writer import OPSET_VERSION, build_densenet_onnx
from .reference import build_reference_model
from .verify import parity_check


def export_backbone(out_path, weights_mode: str = "seeded",
                    parity_tensors: int = 5, parity_tol: float = 1e-4) -> dict:
    """Write the serialized backbone; abort (and remove the file) on parity failure.

    Returns the manifest entry for the exported file.
    """
    model = build_reference_model(weights_mode)
    model_bytes = build_densenet_onnx(model.state_dict())

    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(model_bytes)
    try:
        worst = parity_check(model_bytes, model, n_tensors=parity_tensors, tol=parity_tol)
    except Exception:
        out.unlink(missing_ok=True)
        raise
    return {
        "file": out.name,
        "sha256": hashlib.sha256(model_bytes).hexdigest(),
        "opset": OPSET_VERSION,
        "input": "input (batch, 3, 512, 512) float32",
        "output": "features (batch, 1024) float32",
        "feature_dim": 1024,
        "parity_max_abs_deviation": worst,
        "source_checkpoint": (
            "densenet121 ImageNet pretrained" if weights_mode == "pretrained"
            else "densenet121 seeded deterministic initialization"
        ),
    }
