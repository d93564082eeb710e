"""Golden-fixture image synthesis and blob generation.

Eight curated images cover the preprocessing branches and both score
extremes: six synthetic fundus-like JPEGs of graded visual quality (with
black borders and one non-square frame) plus an all-black and an all-white
control image. For each image the reference pipeline produces a preprocessed
tensor (.qqt), a feature vector (.feat) and a built-in-head score (.pred);
manifest.json records a SHA-256 per artifact.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch
from PIL import Image, ImageDraw, ImageFilter

from .reference import (
    build_reference_model,
    reference_features,
    reference_meme_prediction,
    reference_preprocess,
)

IMAGE_SEED = 1337


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_qqt(path: Path, tensor: np.ndarray) -> None:
    arr = np.ascontiguousarray(tensor, dtype="<f4")
    with open(path, "wb") as f:
        f.write(b"QQT1")
        f.write(struct.pack("<III", *arr.shape))
        f.write(arr.tobytes())


def _write_feat(path: Path, values: np.ndarray) -> None:
    arr = np.ascontiguousarray(values, dtype="<f4").reshape(-1)
    with open(path, "wb") as f:
        f.write(b"QQF1")
        f.write(struct.pack("<I", arr.size))
        f.write(arr.tobytes())


def _write_pred(path: Path, value: float) -> None:
    with open(path, "wb") as f:
        f.write(b"QQP1")
        f.write(struct.pack("<f", value))


def _fundus_like(rng: np.random.Generator, size: tuple[int, int], border: int,
                 brightness: float, blur: float, noise: float, vignette: float) -> Image.Image:
    """Draw a circular retina-like disc with vessel strokes on black."""
    w, h = size
    img = Image.new("RGB", (w, h), (0, 0, 0))
    draw = ImageDraw.Draw(img)
    cx, cy = w // 2, h // 2
    radius = min(w, h) // 2 - border

    base = tuple(int(c * brightness) for c in (168, 74, 42))
    draw.ellipse([cx - radius, cy - radius, cx + radius, cy + radius], fill=base)

    # optic disc
    od_r = radius // 6
    od_x = cx + int(radius * 0.45)
    disc = tuple(min(int(c * brightness * 1.9), 255) for c in (200, 150, 80))
    draw.ellipse([od_x - od_r, cy - od_r, od_x + od_r, cy + od_r], fill=disc)

    # vessel arcs
    vessel = tuple(int(c * brightness) for c in (110, 30, 25))
    for _ in range(14):
        start = rng.uniform(0, 2 * np.pi)
        span = rng.uniform(0.5, 1.6)
        r0 = rng.uniform(0.15, 0.9) * radius
        points = []
        for s in np.linspace(0, span, 24):
            rr = r0 * (1 - 0.3 * s / span)
            points.append((od_x + rr * np.cos(start + s) - (od_x - cx) * s / span,
                           cy + rr * np.sin(start + s)))
        draw.line(points, fill=vessel, width=max(2, radius // 90))

    if vignette > 0:
        yy, xx = np.mgrid[0:h, 0:w]
        dist = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2) / radius
        factor = np.clip(1.0 - vignette * dist**2, 0.0, 1.0)
        arr = (np.asarray(img).astype(np.float32) * factor[..., None]).astype(np.uint8)
        img = Image.fromarray(arr)

    if blur > 0:
        img = img.filter(ImageFilter.GaussianBlur(blur))

    if noise > 0:
        arr = np.asarray(img).astype(np.float32)
        arr += rng.normal(0.0, noise * 255.0, arr.shape).astype(np.float32)
        img = Image.fromarray(np.clip(arr, 0, 255).astype(np.uint8))

    # reinstate a hard black border so the crop step has work to do
    mask = Image.new("L", (w, h), 0)
    ImageDraw.Draw(mask).ellipse([cx - radius, cy - radius, cx + radius, cy + radius], fill=255)
    black = Image.new("RGB", (w, h), (0, 0, 0))
    return Image.composite(img, black, mask)


def synthesize_images(out_dir) -> list[Path]:
    """Write the 8 curated fixture images; deterministic for a fixed seed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(IMAGE_SEED)
    specs = [
        ("fixture_01", dict(size=(800, 800), border=60, brightness=1.0, blur=0.0, noise=0.01, vignette=0.1)),
        ("fixture_02", dict(size=(960, 720), border=40, brightness=0.95, blur=0.5, noise=0.01, vignette=0.15)),
        ("fixture_03", dict(size=(780, 780), border=70, brightness=0.8, blur=2.5, noise=0.02, vignette=0.45)),
        ("fixture_04", dict(size=(700, 860), border=50, brightness=0.7, blur=1.5, noise=0.06, vignette=0.3)),
        ("fixture_05", dict(size=(820, 820), border=55, brightness=0.75, blur=9.0, noise=0.01, vignette=0.2)),
        ("fixture_06", dict(size=(760, 760), border=45, brightness=0.25, blur=3.0, noise=0.04, vignette=0.8)),
    ]
    paths = []
    for name, spec in specs:
        img = _fundus_like(rng, **spec)
        path = out / f"{name}.jpg"
        img.save(path, "JPEG", quality=90)
        paths.append(path)

    black = Image.new("RGB", (600, 600), (0, 0, 0))
    path = out / "fixture_07.png"
    black.save(path, "PNG")
    paths.append(path)

    white = Image.new("RGB", (640, 480), (255, 255, 255))
    path = out / "fixture_08.png"
    white.save(path, "PNG")
    paths.append(path)
    return paths


def generate_fixtures(image_dir, out_dir, model: torch.nn.Module) -> list[dict]:
    """Per fixture image: .qqt tensor, .feat vector, .pred score + hash entries."""
    images = sorted(Path(image_dir).glob("fixture_*"))
    if not images:
        raise FileNotFoundError(f"no fixture images found in {image_dir}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for img_path in images:
        with Image.open(img_path) as img:
            tensor = reference_preprocess(img)
        feats = reference_features(model, tensor)
        pred = reference_meme_prediction(feats)

        stem = img_path.stem
        qqt = out / f"{stem}.qqt"
        feat = out / f"{stem}.feat"
        predf = out / f"{stem}.pred"
        _write_qqt(qqt, tensor.numpy())
        _write_feat(feat, feats.numpy())
        _write_pred(predf, pred)
        entries.append({
            "name": stem,
            "image": img_path.name,
            "image_sha256": _sha256(img_path),
            "qqt_sha256": _sha256(qqt),
            "feat_sha256": _sha256(feat),
            "pred_sha256": _sha256(predf),
            "pred_value": pred,
        })
    return entries


def write_manifest(path, backbone_entry: dict, fixture_entries: list[dict], weights_source: str) -> None:
    doc = {
        "schema_version": 1,
        "weights_source": weights_source,
        "backbone": backbone_entry,
        "fixtures": fixture_entries,
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")
