import pytest
import torch


@pytest.fixture(scope="session")
def reference_model():
    from export_tooling.reference import build_reference_model

    return build_reference_model("seeded")


@pytest.fixture(scope="session")
def model_bytes(reference_model):
    from export_tooling.onnx_writer import build_densenet_onnx

    return build_densenet_onnx(reference_model.state_dict())


@pytest.fixture(autouse=True)
def _single_threaded_determinism():
    # keep torch deterministic across test processes
    torch.set_num_threads(torch.get_num_threads())
    yield
