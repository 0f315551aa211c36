#!/usr/bin/env python3
"""Writes tiny ONNX classifiers used by the test suite.

The graph is GlobalAveragePool -> Flatten -> Gemm, i.e. logits = W * mean_rgb + b
over a normalized 1x3xSxS input. The protobuf is encoded by hand so that no
onnx package is needed.

usage: make_test_model.py OUT_DIR
"""

import json
import os
import struct
import sys


def varint(n):
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def key(field, wire):
    return varint((field << 3) | wire)


def f_int(field, n):
    return key(field, 0) + varint(n)


def f_bytes(field, data):
    if isinstance(data, str):
        data = data.encode()
    return key(field, 2) + varint(len(data)) + data


def tensor(name, dims, values):
    body = b"".join(f_int(1, d) for d in dims)
    body += f_int(2, 1)  # FLOAT
    body += f_bytes(8, name)
    body += f_bytes(9, struct.pack("<%df" % len(values), *values))
    return body


def value_info(name, dims):
    shape = b"".join(f_bytes(1, f_int(1, d)) for d in dims)
    tensor_type = f_int(1, 1) + f_bytes(2, shape)
    return f_bytes(1, name) + f_bytes(2, f_bytes(1, tensor_type))


def attr_int(name, v):
    return f_bytes(1, name) + f_int(3, v) + f_int(20, 2)  # INT


def node(op, inputs, outputs, name, attrs=()):
    body = b"".join(f_bytes(1, i) for i in inputs)
    body += b"".join(f_bytes(2, o) for o in outputs)
    body += f_bytes(3, name) + f_bytes(4, op)
    body += b"".join(f_bytes(5, a) for a in attrs)
    return body


def model(side, weights, bias):
    n_out = len(bias)
    graph = b""
    graph += f_bytes(1, node("GlobalAveragePool", ["input"], ["pooled"], "pool"))
    graph += f_bytes(1, node("Flatten", ["pooled"], ["flat"], "flatten", [attr_int("axis", 1)]))
    graph += f_bytes(1, node("Gemm", ["flat", "W", "b"], ["logits"], "fc", [attr_int("transB", 1)]))
    graph += f_bytes(2, "patch_classifier")
    graph += f_bytes(5, tensor("W", [n_out, 3], [v for row in weights for v in row]))
    graph += f_bytes(5, tensor("b", [n_out], bias))
    graph += f_bytes(11, value_info("input", [1, 3, side, side]))
    graph += f_bytes(12, value_info("logits", [1, n_out]))
    opset = f_bytes(1, "") + f_int(2, 11)
    return f_int(1, 6) + f_bytes(2, "polypath-test") + f_bytes(7, graph) + f_bytes(8, opset)


# Rows score normalized mean RGB against each label's reference color.
WEIGHTS = [
    [-2.0, 3.0, -2.0],   # TA: green
    [-2.0, -2.0, 3.0],   # TVA: blue
    [2.0, 2.0, -3.0],    # HP: yellow
    [3.0, -2.0, -2.0],   # SSA: red
    [1.5, 1.5, 1.5],     # NORM: white
]
BIAS = [0.1, 0.0, -0.1, 0.2, -2.5]
SIDECAR = {"side_px": 8, "mean": [0.5, 0.5, 0.5], "std": [0.25, 0.25, 0.25], "output": "logits"}


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "."
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "tiny.onnx"), "wb") as f:
        f.write(model(8, WEIGHTS, BIAS))
    with open(os.path.join(out, "tiny.json"), "w") as f:
        json.dump(SIDECAR, f, indent=2)
        f.write("\n")
    # Wrong output arity (4 scores).
    with open(os.path.join(out, "four_outputs.onnx"), "wb") as f:
        f.write(model(8, WEIGHTS[:4], BIAS[:4]))
    with open(os.path.join(out, "four_outputs.json"), "w") as f:
        json.dump(SIDECAR, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
