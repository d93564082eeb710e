import numpy as np
import pytest
import torch

from export_tooling.export import export_backbone
from export_tooling.verify import VerifyError, parity_check, run_graph


def test_roundtrip_small_input(reference_model, model_bytes):
    # the writer->reader->executor chain must reproduce the in-framework
    # forward; small spatial input keeps this quick
    torch.manual_seed(0)
    x = torch.rand(2, 3, 64, 64) * 2 - 1
    with torch.no_grad():
        want = reference_model(x).numpy()
    got = run_graph(model_bytes, x.numpy())
    assert got.shape == (2, 1024)
    assert np.max(np.abs(got - want)) < 1e-4


def test_export_parity_criterion(tmp_path, reference_model):
    entry = export_backbone(tmp_path / "backbone.onnx", weights_mode="seeded",
                            parity_tensors=5, parity_tol=1e-4)
    assert (tmp_path / "backbone.onnx").exists()
    assert entry["feature_dim"] == 1024
    assert entry["parity_max_abs_deviation"] < 1e-4
    print(f"[PASS] export parity (max abs deviation "
          f"{entry['parity_max_abs_deviation']:.2e} < 1e-4 on 5 random tensors)")


def test_tampered_weights_fail_parity(reference_model, model_bytes):
    tampered = bytearray(model_bytes)
    # flip bytes deep inside the initializer payloads
    for offset in range(len(tampered) // 2, len(tampered) // 2 + 64):
        tampered[offset] ^= 0xFF
    corrupted = bytes(tampered)
    with pytest.raises((VerifyError, Exception)):
        parity_check(corrupted, reference_model, n_tensors=1, size=64)


def test_export_aborts_and_removes_file_on_parity_failure(tmp_path, monkeypatch, reference_model):
    import export_tooling.export as export_module

    def failing_parity(*args, **kwargs):
        raise VerifyError("forced failure")

    monkeypatch.setattr(export_module, "parity_check", failing_parity)
    out = tmp_path / "broken.onnx"
    with pytest.raises(VerifyError):
        export_backbone(out, weights_mode="seeded")
    assert not out.exists()


def test_graph_interface_names(reference_model, model_bytes):
    from export_tooling.verify import load_graph

    nodes, weights, input_name, output_name = load_graph(model_bytes)
    assert input_name == "input"
    assert output_name == "features"
    ops = {op for op, *_ in nodes}
    assert ops == {"Conv", "BatchNormalization", "Relu", "MaxPool",
                   "AveragePool", "Concat", "GlobalAveragePool", "Flatten"}
    expected = [k for k in reference_model.state_dict() if "num_batches_tracked" not in k]
    assert sorted(weights) == sorted(expected)
