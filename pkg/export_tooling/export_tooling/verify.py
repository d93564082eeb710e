"""Execute an exported model file back, independently of the writer.

Used as the parity gate after export: the file is re-parsed from bytes and
run node by node; its features must match the in-framework reference forward
pass. Only the op set emitted by the writer is supported.
"""

from __future__ import annotations

import struct

import numpy as np
import torch


class VerifyError(Exception):
    pass


def _decode_fields(data: bytes):
    pos = 0
    end = len(data)
    while pos < end:
        key = 0
        shift = 0
        while True:
            byte = data[pos]
            pos += 1
            key |= (byte & 0x7F) << shift
            if not byte & 0x80:
                break
            shift += 7
        number, wire = key >> 3, key & 7
        if wire == 0:
            value = 0
            shift = 0
            while True:
                byte = data[pos]
                pos += 1
                value |= (byte & 0x7F) << shift
                if not byte & 0x80:
                    break
                shift += 7
            yield number, wire, value
        elif wire == 2:
            length = 0
            shift = 0
            while True:
                byte = data[pos]
                pos += 1
                length |= (byte & 0x7F) << shift
                if not byte & 0x80:
                    break
                shift += 7
            yield number, wire, data[pos : pos + length]
            pos += length
        elif wire == 5:
            yield number, wire, struct.unpack_from("<f", data, pos)[0]
            pos += 4
        elif wire == 1:
            yield number, wire, struct.unpack_from("<d", data, pos)[0]
            pos += 8
        else:
            raise VerifyError(f"unexpected wire type {wire}")


def _varint_list(data: bytes) -> list[int]:
    out = []
    pos = 0
    while pos < len(data):
        value = 0
        shift = 0
        while True:
            byte = data[pos]
            pos += 1
            value |= (byte & 0x7F) << shift
            if not byte & 0x80:
                break
            shift += 7
        out.append(value)
    return out


def _read_attr(data: bytes):
    name = ""
    value = None
    for number, wire, v in _decode_fields(data):
        if number == 1:
            name = v.decode()
        elif number == 2:
            value = float(v)
        elif number == 3:
            value = int(v)
        elif number == 7:
            value = _varint_list(v) if wire == 2 else [int(v)]
    return name, value


def _read_node(data: bytes):
    inputs, outputs, attrs = [], [], {}
    op = ""
    for number, _wire, v in _decode_fields(data):
        if number == 1:
            inputs.append(v.decode())
        elif number == 2:
            outputs.append(v.decode())
        elif number == 4:
            op = v.decode()
        elif number == 5:
            k, av = _read_attr(v)
            attrs[k] = av
    return op, inputs, outputs, attrs


def _read_initializer(data: bytes):
    dims, name, raw = [], "", b""
    for number, wire, v in _decode_fields(data):
        if number == 1:
            dims.extend(_varint_list(v) if wire == 2 else [int(v)])
        elif number == 8:
            name = v.decode()
        elif number == 9:
            raw = v
    return name, np.frombuffer(raw, dtype="<f4").reshape(dims).copy()


def load_graph(model_bytes: bytes):
    nodes, weights = [], {}
    input_name = output_name = None
    for number, _wire, value in _decode_fields(model_bytes):
        if number != 7:
            continue
        for gnum, _gw, gval in _decode_fields(value):
            if gnum == 1:
                nodes.append(_read_node(gval))
            elif gnum == 5:
                name, arr = _read_initializer(gval)
                weights[name] = torch.from_numpy(arr)
            elif gnum in (11, 12):
                for vnum, _vw, vval in _decode_fields(gval):
                    if vnum == 1:
                        if gnum == 11:
                            input_name = vval.decode()
                        else:
                            output_name = vval.decode()
    if input_name is None or output_name is None:
        raise VerifyError("graph is missing input or output declarations")
    return nodes, weights, input_name, output_name


def run_graph(model_bytes: bytes, batch: np.ndarray) -> np.ndarray:
    nodes, weights, input_name, output_name = load_graph(model_bytes)
    values = dict(weights)
    values[input_name] = torch.from_numpy(np.ascontiguousarray(batch, dtype=np.float32))
    with torch.no_grad():
        for op, inputs, outputs, attrs in nodes:
            args = [values[i] for i in inputs]
            if op == "Conv":
                out = torch.nn.functional.conv2d(
                    args[0], args[1],
                    stride=tuple(attrs["strides"]),
                    padding=tuple(attrs["pads"][:2]),
                    dilation=tuple(attrs["dilations"]),
                    groups=attrs["group"],
                )
            elif op == "BatchNormalization":
                out = torch.nn.functional.batch_norm(
                    args[0], args[3], args[4], weight=args[1], bias=args[2],
                    training=False, eps=attrs["epsilon"],
                )
            elif op == "Relu":
                out = torch.relu(args[0])
            elif op == "MaxPool":
                out = torch.nn.functional.max_pool2d(
                    args[0], kernel_size=tuple(attrs["kernel_shape"]),
                    stride=tuple(attrs["strides"]), padding=tuple(attrs["pads"][:2]),
                )
            elif op == "AveragePool":
                out = torch.nn.functional.avg_pool2d(
                    args[0], kernel_size=tuple(attrs["kernel_shape"]),
                    stride=tuple(attrs["strides"]),
                )
            elif op == "Concat":
                out = torch.cat(args, dim=1)
            elif op == "GlobalAveragePool":
                out = args[0].mean(dim=(2, 3), keepdim=True)
            elif op == "Flatten":
                out = torch.flatten(args[0], start_dim=1)
            else:
                raise VerifyError(f"unsupported op {op}")
            values[outputs[0]] = out
    return values[output_name].numpy()


def parity_check(model_bytes: bytes, reference_model, n_tensors: int = 5,
                 size: int = 512, seed: int = 7, tol: float = 1e-4) -> float:
    """Max abs deviation between the exported graph and the reference forward."""
    torch.manual_seed(seed)
    worst = 0.0
    with torch.no_grad():
        for _ in range(n_tensors):
            x = torch.rand(1, 3, size, size) * 2.0 - 1.0
            want = reference_model(x).numpy()
            got = run_graph(model_bytes, x.numpy())
            worst = max(worst, float(np.max(np.abs(want - got))))
    if worst >= tol:
        raise VerifyError(f"export parity failure: max abs feature deviation {worst:.3e} >= {tol:g}")
    return worst
