import hashlib
import json
import math
import struct
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from export_tooling.fixtures import generate_fixtures, synthesize_images
from export_tooling.reference import (
    MEME_BIAS,
    MEME_INDICES,
    MEME_WEIGHTS,
    reference_preprocess,
)

REPO_ROOT = Path(__file__).resolve().parent.parent.parent
COMMITTED_FIXTURES = REPO_ROOT / "tests" / "fixtures"


def read_feat(path):
    data = Path(path).read_bytes()
    assert data[:4] == b"QQF1"
    (n,) = struct.unpack_from("<I", data, 4)
    return np.frombuffer(data, dtype="<f4", count=n, offset=8)


def read_pred(path):
    data = Path(path).read_bytes()
    assert data[:4] == b"QQP1"
    return struct.unpack_from("<f", data, 4)[0]


def read_qqt(path):
    data = Path(path).read_bytes()
    assert data[:4] == b"QQT1"
    c, h, w = struct.unpack_from("<III", data, 4)
    return np.frombuffer(data, dtype="<f4", count=c * h * w, offset=16).reshape(c, h, w)


def test_synthesized_images_deterministic(tmp_path):
    a = synthesize_images(tmp_path / "a")
    b = synthesize_images(tmp_path / "b")
    assert [p.name for p in a] == [p.name for p in b]
    assert len(a) == 8
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_reference_preprocess_contract(tmp_path):
    synthesize_images(tmp_path)
    for path in sorted(tmp_path.glob("fixture_*")):
        with Image.open(path) as img:
            tensor = reference_preprocess(img)
        assert tuple(tensor.shape) == (3, 512, 512)
        assert tensor.min() >= -1.0 and tensor.max() <= 1.0


def test_black_fixture_tensor_is_all_minus_one(tmp_path, reference_model):
    black_dir = tmp_path / "imgs"
    black_dir.mkdir()
    Image.new("RGB", (600, 600), (0, 0, 0)).save(black_dir / "fixture_black.png")
    entries = generate_fixtures(black_dir, tmp_path / "out", reference_model)
    tensor = read_qqt(tmp_path / "out" / "fixture_black.qqt")
    assert (tensor == -1.0).all()
    assert len(entries) == 1


def test_pred_satisfies_closed_form(tmp_path, reference_model):
    imgs = tmp_path / "imgs"
    synthesize_images(imgs)
    entries = generate_fixtures(imgs, tmp_path / "out", reference_model)
    for entry in entries:
        feats = read_feat(tmp_path / "out" / f"{entry['name']}.feat").astype(np.float64)
        z = float(np.dot(np.asarray(MEME_WEIGHTS), feats[MEME_INDICES]) + MEME_BIAS)
        expected = 1.0 / (1.0 + math.exp(-z)) if z > -700 else 0.0
        assert read_pred(tmp_path / "out" / f"{entry['name']}.pred") == pytest.approx(expected, abs=1e-6)


def test_rerun_hash_identical(tmp_path, reference_model):
    imgs = tmp_path / "imgs"
    synthesize_images(imgs)
    first = generate_fixtures(imgs, tmp_path / "one", reference_model)
    second = generate_fixtures(imgs, tmp_path / "two", reference_model)
    for a, b in zip(first, second):
        assert a["qqt_sha256"] == b["qqt_sha256"]
        assert a["feat_sha256"] == b["feat_sha256"]
        assert a["pred_sha256"] == b["pred_sha256"]


def test_missing_image_dir_errors(tmp_path, reference_model):
    with pytest.raises(FileNotFoundError):
        generate_fixtures(tmp_path / "nowhere", tmp_path / "out", reference_model)


@pytest.mark.skipif(not (COMMITTED_FIXTURES / "manifest.json").exists(),
                    reason="committed fixtures not present")
def test_regenerated_fixtures_match_committed_manifest(tmp_path, reference_model):
    """Against the pinned checkpoint, regeneration reproduces the committed hashes."""
    manifest = json.loads((COMMITTED_FIXTURES / "manifest.json").read_text())
    regenerated = generate_fixtures(COMMITTED_FIXTURES / "images", tmp_path / "regen", reference_model)
    by_name = {e["name"]: e for e in regenerated}
    mismatches = []
    for committed in manifest["fixtures"]:
        fresh = by_name[committed["name"]]
        for key in ("qqt_sha256", "feat_sha256", "pred_sha256"):
            if committed[key] != fresh[key]:
                mismatches.append((committed["name"], key))
    assert not mismatches, mismatches
    # committed blobs themselves still hash to the manifest entries
    for committed in manifest["fixtures"]:
        for suffix, key in ((".qqt", "qqt_sha256"), (".feat", "feat_sha256"), (".pred", "pred_sha256")):
            blob = COMMITTED_FIXTURES / f"{committed['name']}{suffix}"
            assert hashlib.sha256(blob.read_bytes()).hexdigest() == committed[key]
    print(f"[PASS] regenerated fixtures hash-identical to committed ({len(manifest['fixtures'])} fixtures)")
