"""Serialize the densenet121 feature extractor as an ONNX model file.

The graph is emitted explicitly from the known architecture (initial 7x7
conv, four dense blocks with bottleneck layers and transitions, final batch
norm, relu, global average pooling) with all parameters taken from the
torchvision state dict. Opset 13, single dynamic-batch input "input"
(N, 3, 512, 512) and single output "features" (N, 1024).
"""

from __future__ import annotations

import numpy as np

from . import protowriter as pw

OPSET_VERSION = 13
IR_VERSION = 8
PRODUCER = "quickqual-export"
BLOCK_CONFIG = (6, 12, 24, 16)
BN_EPS = 1e-5

# AttributeProto.AttributeType
ATTR_FLOAT, ATTR_INT, ATTR_INTS = 1, 2, 7
# TensorProto.DataType
FLOAT32 = 1


def _attr_int(name: str, value: int) -> bytes:
    return pw.string_field(1, name) + pw.varint_field(3, value) + pw.varint_field(20, ATTR_INT)


def _attr_ints(name: str, values) -> bytes:
    return pw.string_field(1, name) + pw.packed_varints(7, values) + pw.varint_field(20, ATTR_INTS)


def _attr_float(name: str, value: float) -> bytes:
    return pw.string_field(1, name) + pw.float_field(2, value) + pw.varint_field(20, ATTR_FLOAT)


def _node(op_type: str, inputs, outputs, name: str, attrs=()) -> bytes:
    msg = b"".join(pw.string_field(1, i) for i in inputs)
    msg += b"".join(pw.string_field(2, o) for o in outputs)
    msg += pw.string_field(3, name)
    msg += pw.string_field(4, op_type)
    msg += b"".join(pw.message_field(5, a) for a in attrs)
    return msg


def _tensor(name: str, array: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(array, dtype="<f4")
    msg = pw.packed_varints(1, arr.shape)
    msg += pw.varint_field(2, FLOAT32)
    msg += pw.string_field(8, name)
    msg += pw.bytes_field(9, arr.tobytes())
    return msg


def _value_info(name: str, dims) -> bytes:
    shape = b""
    for d in dims:
        if isinstance(d, str):
            dim = pw.string_field(2, d)
        else:
            dim = pw.varint_field(1, int(d))
        shape += pw.message_field(1, dim)
    tensor_type = pw.varint_field(1, FLOAT32) + pw.message_field(2, shape)
    type_proto = pw.message_field(1, tensor_type)
    return pw.string_field(1, name) + pw.message_field(2, type_proto)


class _GraphBuilder:
    def __init__(self, params: dict):
        self.params = params
        self.nodes: list[bytes] = []
        self.initializers: list[bytes] = []
        self.counter = 0

    def _fresh(self, hint: str) -> str:
        self.counter += 1
        return f"{hint}_{self.counter}"

    def _param(self, key: str) -> str:
        tensor = self.params[key]
        self.initializers.append(_tensor(key, tensor))
        return key

    def conv(self, x: str, weight_key: str, stride: int, pad: int, name: str) -> str:
        out = self._fresh(name)
        kernel = self.params[weight_key].shape[2]
        attrs = [
            _attr_ints("dilations", [1, 1]),
            _attr_int("group", 1),
            _attr_ints("kernel_shape", [kernel, kernel]),
            _attr_ints("pads", [pad, pad, pad, pad]),
            _attr_ints("strides", [stride, stride]),
        ]
        self.nodes.append(_node("Conv", [x, self._param(weight_key)], [out], name, attrs))
        return out

    def batch_norm(self, x: str, prefix: str, name: str) -> str:
        out = self._fresh(name)
        inputs = [
            x,
            self._param(f"{prefix}.weight"),
            self._param(f"{prefix}.bias"),
            self._param(f"{prefix}.running_mean"),
            self._param(f"{prefix}.running_var"),
        ]
        self.nodes.append(_node("BatchNormalization", inputs, [out], name, [_attr_float("epsilon", BN_EPS)]))
        return out

    def relu(self, x: str, name: str) -> str:
        out = self._fresh(name)
        self.nodes.append(_node("Relu", [x], [out], name))
        return out

    def max_pool(self, x: str, kernel: int, stride: int, pad: int, name: str) -> str:
        out = self._fresh(name)
        attrs = [
            _attr_int("ceil_mode", 0),
            _attr_ints("kernel_shape", [kernel, kernel]),
            _attr_ints("pads", [pad, pad, pad, pad]),
            _attr_ints("strides", [stride, stride]),
        ]
        self.nodes.append(_node("MaxPool", [x], [out], name, attrs))
        return out

    def avg_pool(self, x: str, kernel: int, stride: int, name: str) -> str:
        out = self._fresh(name)
        attrs = [
            _attr_int("ceil_mode", 0),
            _attr_int("count_include_pad", 1),
            _attr_ints("kernel_shape", [kernel, kernel]),
            _attr_ints("pads", [0, 0, 0, 0]),
            _attr_ints("strides", [stride, stride]),
        ]
        self.nodes.append(_node("AveragePool", [x], [out], name, attrs))
        return out

    def concat(self, xs: list[str], name: str) -> str:
        if len(xs) == 1:
            return xs[0]
        out = self._fresh(name)
        self.nodes.append(_node("Concat", xs, [out], name, [_attr_int("axis", 1)]))
        return out

    def global_avg_pool(self, x: str, name: str) -> str:
        out = self._fresh(name)
        self.nodes.append(_node("GlobalAveragePool", [x], [out], name))
        return out

    def flatten(self, x: str, output_name: str, name: str) -> str:
        self.nodes.append(_node("Flatten", [x], [output_name], name, [_attr_int("axis", 1)]))
        return output_name


def build_densenet_onnx(state_dict, input_size: int = 512, feature_dim: int = 1024) -> bytes:
    """Serialized ONNX model bytes for the headless densenet121 graph."""
    params = {k: v.detach().cpu().numpy() for k, v in state_dict.items() if "num_batches_tracked" not in k}
    g = _GraphBuilder(params)

    x = g.conv("input", "features.conv0.weight", stride=2, pad=3, name="conv0")
    x = g.batch_norm(x, "features.norm0", "norm0")
    x = g.relu(x, "relu0")
    x = g.max_pool(x, kernel=3, stride=2, pad=1, name="pool0")

    for block_idx, n_layers in enumerate(BLOCK_CONFIG, start=1):
        collected = [x]
        for layer_idx in range(1, n_layers + 1):
            prefix = f"features.denseblock{block_idx}.denselayer{layer_idx}"
            tag = f"b{block_idx}l{layer_idx}"
            cat = g.concat(collected, f"{tag}_concat")
            h = g.batch_norm(cat, f"{prefix}.norm1", f"{tag}_norm1")
            h = g.relu(h, f"{tag}_relu1")
            h = g.conv(h, f"{prefix}.conv1.weight", stride=1, pad=0, name=f"{tag}_conv1")
            h = g.batch_norm(h, f"{prefix}.norm2", f"{tag}_norm2")
            h = g.relu(h, f"{tag}_relu2")
            h = g.conv(h, f"{prefix}.conv2.weight", stride=1, pad=1, name=f"{tag}_conv2")
            collected.append(h)
        x = g.concat(collected, f"block{block_idx}_out")
        if block_idx < len(BLOCK_CONFIG):
            prefix = f"features.transition{block_idx}"
            x = g.batch_norm(x, f"{prefix}.norm", f"t{block_idx}_norm")
            x = g.relu(x, f"t{block_idx}_relu")
            x = g.conv(x, f"{prefix}.conv.weight", stride=1, pad=0, name=f"t{block_idx}_conv")
            x = g.avg_pool(x, kernel=2, stride=2, name=f"t{block_idx}_pool")

    x = g.batch_norm(x, "features.norm5", "norm5")
    x = g.relu(x, "final_relu")
    x = g.global_avg_pool(x, "global_pool")
    g.flatten(x, "features", "flatten")

    graph = b"".join(pw.message_field(1, n) for n in g.nodes)
    graph += pw.string_field(2, "densenet121_features")
    graph += b"".join(pw.message_field(5, t) for t in g.initializers)
    graph += pw.message_field(11, _value_info("input", ["batch", 3, input_size, input_size]))
    graph += pw.message_field(12, _value_info("features", ["batch", feature_dim]))

    opset = pw.string_field(1, "") + pw.varint_field(2, OPSET_VERSION)
    model = pw.varint_field(1, IR_VERSION)
    model += pw.string_field(2, PRODUCER)
    model += pw.message_field(7, graph)
    model += pw.message_field(8, opset)
    return model
