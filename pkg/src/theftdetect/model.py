"""The two architectures: a hybrid multi-head attention / dilated
convolution network, and a plain CNN baseline.

Both consume (B, 2, weeks, 7) inputs (values + mask channels) and emit
two-class logits. All parameters are float64 tensors from the autodiff
engine; checkpoints are a flat binary of float64 values plus a JSON sidecar
of names/shapes/offsets.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

__all__ = [
    "HybridLayerParams",
    "HybridModelParams",
    "CnnParams",
    "CheckpointError",
    "attention_forward",
    "hybrid_layer_forward",
    "hybrid_model_forward",
    "cnn_forward",
    "init_hybrid",
    "init_cnn",
    "save_checkpoint",
    "load_checkpoint",
]

N_HEADS = 16  # attention output heads per hybrid layer
CONV_BRANCH_CH = 16  # channels per conv path (standard + dilated = 32)
HIDDEN = 1024  # classifier hidden width


class CheckpointError(RuntimeError):
    """Checkpoint file does not match the expected parameter set."""


def _xavier(rng, shape):
    if len(shape) == 2:
        fan_in, fan_out = shape
    else:  # conv kernel (F, C, KH, KW)
        fan_in = int(np.prod(shape[1:]))
        fan_out = shape[0]
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-a, a, size=shape), requires_grad=True)


def _zeros(shape):
    return Tensor(np.zeros(shape), requires_grad=True)


def _ones(shape):
    return Tensor(np.ones(shape), requires_grad=True)


def _slope():
    return Tensor(np.asarray(0.25), requires_grad=True)


@dataclass
class HybridLayerParams:
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    conv_std: Tensor
    conv_dil: Tensor
    unify: Tensor
    ln_gain: Tensor
    ln_bias: Tensor
    slope: Tensor

    def named(self, prefix=""):
        for name in (
            "w_q", "w_k", "w_v", "conv_std", "conv_dil", "unify",
            "ln_gain", "ln_bias", "slope",
        ):
            yield prefix + name, getattr(self, name)


@dataclass
class HybridModelParams:
    layer1: HybridLayerParams
    layer2: HybridLayerParams
    fc1_w: Tensor
    fc1_b: Tensor
    fc1_slope: Tensor
    fc2_w: Tensor
    fc2_b: Tensor

    def named(self):
        yield from self.layer1.named("layer1.")
        yield from self.layer2.named("layer2.")
        for name in ("fc1_w", "fc1_b", "fc1_slope", "fc2_w", "fc2_b"):
            yield name, getattr(self, name)


@dataclass
class CnnParams:
    conv1: Tensor
    conv2: Tensor
    slope2: Tensor
    conv3: Tensor
    slope3: Tensor
    fc_w: Tensor
    fc_b: Tensor

    def named(self):
        for name in ("conv1", "conv2", "slope2", "conv3", "slope3", "fc_w", "fc_b"):
            yield name, getattr(self, name)


def init_hybrid(seed, weeks, in_channels=2, out_channels=2, hidden=HIDDEN):
    """Seeded parameter set for the hybrid model at a given input height."""
    rng = np.random.default_rng(seed)
    D = 7

    def layer(c_in, c_out):
        cd, cbar_d = c_in * D, N_HEADS * D
        return HybridLayerParams(
            w_q=_xavier(rng, (cd, cbar_d)),
            w_k=_xavier(rng, (cd, cbar_d)),
            w_v=_xavier(rng, (cd, cbar_d)),
            conv_std=_xavier(rng, (CONV_BRANCH_CH, c_in, 3, 3)),
            conv_dil=_xavier(rng, (CONV_BRANCH_CH, c_in, 3, 3)),
            unify=_xavier(rng, (c_out, N_HEADS + 2 * CONV_BRANCH_CH, 1, 1)),
            ln_gain=_ones((c_out,)),
            ln_bias=_zeros((c_out,)),
            slope=_slope(),
        )

    feat = out_channels * weeks * D
    return HybridModelParams(
        layer1=layer(in_channels, out_channels),
        layer2=layer(out_channels, out_channels),
        fc1_w=_xavier(rng, (feat, hidden)),
        fc1_b=_zeros((hidden,)),
        fc1_slope=_slope(),
        fc2_w=_xavier(rng, (hidden, 2)),
        fc2_b=_zeros((2,)),
    )


def init_cnn(seed, weeks, in_channels=2):
    """Seeded parameter set for the CNN baseline at a given input height."""
    rng = np.random.default_rng(seed)
    h3 = T.conv2d_output_size(weeks, 3, stride=2, dilation=2, padding=2)
    w3 = T.conv2d_output_size(7, 3, stride=2, dilation=2, padding=2)
    feat = 32 * h3 * w3
    return CnnParams(
        conv1=_xavier(rng, (64, in_channels, 3, 3)),
        conv2=_xavier(rng, (64, 64, 3, 3)),
        slope2=_slope(),
        conv3=_xavier(rng, (32, 64, 3, 3)),
        slope3=_slope(),
        fc_w=_xavier(rng, (feat, 2)),
        fc_b=_zeros((2,)),
    )


def attention_forward(x, w_q, w_k, w_v):
    """Channels-as-heads attention: (C, L, D) -> (C_out, L, D).

    Also accepts a batched (B, C, L, D) input. The input is transposed and
    flattened to (L, C*D), projected by the three maps, unflattened to
    per-head (L, D) blocks, and each head attends over the sequence axis
    with scores scaled by sqrt(D).
    """
    squeeze = x.ndim == 3
    if squeeze:
        x = T.reshape(x, (1,) + x.shape)
    if x.ndim != 4:
        raise T.ShapeError(f"attention_forward: expected (B,C,L,D) input, got {x.shape}")
    B, C, L, D = x.shape
    cd, cbar_d = w_q.shape
    if cd != C * D or w_k.shape != (cd, cbar_d) or w_v.shape != (cd, cbar_d):
        raise T.ShapeError(
            f"attention_forward: projections {w_q.shape}/{w_k.shape}/{w_v.shape} "
            f"do not match input {x.shape}"
        )
    if cbar_d % D:
        raise T.ShapeError(
            f"attention_forward: projection width {cbar_d} not a multiple of D={D}"
        )
    c_out = cbar_d // D

    flat = T.reshape(T.transpose(x, (0, 2, 1, 3)), (B, L, C * D))

    def heads(w):
        o = T.matmul(flat, w)  # (B, L, C_out*D)
        return T.transpose(T.reshape(o, (B, L, c_out, D)), (0, 2, 1, 3))

    oq, ok, ov = heads(w_q), heads(w_k), heads(w_v)
    scores = T.mul(T.matmul(oq, T.transpose(ok, (0, 1, 3, 2))), 1.0 / np.sqrt(D))
    attn = T.matmul(T.softmax(scores), ov)  # (B, C_out, L, D)
    if squeeze:
        attn = T.reshape(attn, attn.shape[1:])
    return attn


def hybrid_layer_forward(x, p):
    """One hybrid block: attention || (conv, dilated conv) -> 1x1 unify ->
    layer norm over channels -> PReLU. Spatial size is preserved."""
    att = attention_forward(x, p.w_q, p.w_k, p.w_v)
    c_std = T.conv2d(x, p.conv_std, stride=1, dilation=1, padding=1)
    c_dil = T.conv2d(x, p.conv_dil, stride=1, dilation=2, padding=2)
    merged = T.concat([att, c_std, c_dil], axis=1)
    if merged.shape[2:] != x.shape[2:]:
        raise RuntimeError(
            f"hybrid layer changed spatial size: {x.shape} -> {merged.shape}"
        )
    out = T.conv2d(merged, p.unify, stride=1, dilation=1, padding=0)
    out = T.layer_norm(out, p.ln_gain, p.ln_bias, axis=1)
    return T.prelu(out, p.slope)


def hybrid_model_forward(x, p):
    """Two hybrid layers, flatten, PReLU-activated hidden layer, logits."""
    if x.ndim != 4 or x.shape[1] != p.layer1.conv_std.shape[1]:
        raise T.ShapeError(
            f"hybrid_model_forward: expected (B, {p.layer1.conv_std.shape[1]}, H, 7) "
            f"input, got {x.shape}"
        )
    h = hybrid_layer_forward(x, p.layer1)
    h = hybrid_layer_forward(h, p.layer2)
    B = h.shape[0]
    flat = T.reshape(h, (B, int(np.prod(h.shape[1:]))))
    h = T.prelu(T.linear(flat, p.fc1_w, p.fc1_b), p.fc1_slope)
    return T.linear(h, p.fc2_w, p.fc2_b)


def cnn_forward(x, p):
    """Three conv layers (last one dilated, strided), flatten, logits."""
    if x.ndim != 4 or x.shape[1] != p.conv1.shape[1]:
        raise T.ShapeError(
            f"cnn_forward: expected (B, {p.conv1.shape[1]}, H, 7) input, got {x.shape}"
        )
    h = T.conv2d(x, p.conv1, stride=1, dilation=1, padding=1)
    h = T.prelu(T.conv2d(h, p.conv2, stride=1, dilation=1, padding=1), p.slope2)
    h = T.prelu(T.conv2d(h, p.conv3, stride=2, dilation=2, padding=2), p.slope3)
    B = h.shape[0]
    flat = T.reshape(h, (B, int(np.prod(h.shape[1:]))))
    return T.linear(flat, p.fc_w, p.fc_b)


def save_checkpoint(params, path):
    """Write parameters as flat float64 binary + JSON sidecar at path.json."""
    arrays = []
    offset = 0
    meta = []
    for name, t in params.named():
        # note: ascontiguousarray would promote 0-d slopes to 1-d
        arr = np.asarray(t.data, dtype=np.float64)
        if not arr.flags.c_contiguous:
            arr = arr.copy()
        meta.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
        arrays.append(arr)
    with open(path, "wb") as fh:
        for arr in arrays:
            fh.write(arr.tobytes())
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump({"dtype": "float64", "tensors": meta}, fh, indent=1)


def load_checkpoint(params, path):
    """Load a checkpoint into an existing parameter set, in place.

    The sidecar's names and shapes must match the parameter set exactly.
    """
    with open(str(path) + ".json", encoding="utf-8") as fh:
        meta = json.load(fh)
    flat = np.fromfile(path, dtype=np.float64)
    by_name = {m["name"]: m for m in meta["tensors"]}
    for name, t in params.named():
        m = by_name.pop(name, None)
        if m is None:
            raise CheckpointError(f"checkpoint missing tensor {name!r}")
        shape = tuple(m["shape"])
        if shape != t.data.shape:
            raise CheckpointError(
                f"tensor {name!r}: checkpoint shape {shape} != model shape {t.data.shape}"
            )
        size = int(np.prod(shape)) if shape else 1
        t.data = flat[m["offset"] : m["offset"] + size].reshape(shape).copy()
    if by_name:
        raise CheckpointError(f"checkpoint has extra tensors: {sorted(by_name)}")
    return params
