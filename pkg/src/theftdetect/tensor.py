"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Everything is float64 and numpy-backed. The computation graph is built
define-by-run: each Tensor produced by an operation keeps references to its
parents and a closure computing the parent gradients. ``backward()`` on a
scalar walks the graph in reverse topological order, accumulating gradients
over fan-out.

No broadcasting beyond bias-add and scalar operands; shapes must otherwise
match exactly.
"""

import itertools
import threading

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "NumericError",
    "UsageError",
    "no_grad",
    "tensor",
    "add",
    "mul",
    "matmul",
    "linear",
    "conv2d",
    "conv2d_output_size",
    "softmax",
    "prelu",
    "layer_norm",
    "cross_entropy",
    "concat",
    "transpose",
    "reshape",
    "slice_",
    "tsum",
    "tmean",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class NumericError(ValueError):
    """Non-finite values where finite ones are required."""


class UsageError(RuntimeError):
    """API misuse, e.g. backward() on a non-scalar."""


_state = threading.local()


def _grad_enabled():
    return getattr(_state, "grad_enabled", True)


class no_grad:
    """Context manager that disables graph recording."""

    def __enter__(self):
        self._prev = _grad_enabled()
        _state.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _state.grad_enabled = self._prev
        return False


_node_counter = itertools.count()


class Tensor:
    """Dense float64 array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "node_id", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.node_id = next(_node_counter)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        """Populate ``grad`` on every reachable requires_grad tensor.

        Only valid on scalar outputs; gradients sum over fan-out.
        """
        if self.data.size != 1:
            raise UsageError(
                f"backward() requires a scalar loss, got shape {self.shape}"
            )
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def tensor(data, requires_grad=False):
    return Tensor(data, requires_grad=requires_grad)


def _coerce(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _tracked(t):
    return t.requires_grad or t._parents or t._backward is not None


def _make(data, parents, backward):
    out = Tensor(data)
    if _grad_enabled() and any(_tracked(p) for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
    return out


def add(a, b):
    """Elementwise sum; also accepts a scalar or trailing-axis bias operand."""
    a, b = _coerce(a), _coerce(b)
    da, db = a.data, b.data
    if da.shape != db.shape and db.size != 1 and da.size != 1:
        # bias-add: b spans the last axis of a
        if not (db.ndim == 1 and da.ndim >= 1 and da.shape[-1] == db.shape[0]):
            raise ShapeError(f"add: incompatible shapes {da.shape} and {db.shape}")
    out = da + db

    def backward(g):
        return _unbroadcast(g, da.shape), _unbroadcast(g, db.shape)

    return _make(out, (a, b), backward)


def mul(a, b):
    """Elementwise product; one operand may be a scalar."""
    a, b = _coerce(a), _coerce(b)
    da, db = a.data, b.data
    if da.shape != db.shape and da.size != 1 and db.size != 1:
        raise ShapeError(f"mul: incompatible shapes {da.shape} and {db.shape}")
    out = da * db

    def backward(g):
        return _unbroadcast(g * db, da.shape), _unbroadcast(g * da, db.shape)

    return _make(out, (a, b), backward)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def matmul(a, b):
    """Matrix product.

    Supports 2D x 2D, stacked x 2D (shared right operand), and stacked x
    stacked with identical leading dimensions.
    """
    a, b = _coerce(a), _coerce(b)
    da, db = a.data, b.data
    if da.ndim < 2 or db.ndim < 2:
        raise ShapeError(f"matmul: operands must be >=2D, got {da.shape} and {db.shape}")
    if da.shape[-1] != db.shape[-2]:
        raise ShapeError(f"matmul: inner extents differ, {da.shape} vs {db.shape}")
    if db.ndim > 2 and da.shape[:-2] != db.shape[:-2]:
        raise ShapeError(f"matmul: leading dims differ, {da.shape} vs {db.shape}")
    out = da @ db

    def backward(g):
        ga = g @ np.swapaxes(db, -1, -2)
        if db.ndim == 2 and da.ndim > 2:
            gb = np.tensordot(da, g, axes=(tuple(range(da.ndim - 1)), tuple(range(g.ndim - 1))))
        else:
            gb = np.swapaxes(da, -1, -2) @ g
        return ga, gb

    return _make(out, (a, b), backward)


def linear(x, w, b=None):
    """Affine map ``x @ w + b`` with a per-output-column bias."""
    x, w = _coerce(x), _coerce(w)
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"linear: cannot multiply {x.shape} by {w.shape}")
    out = matmul(x, w)
    if b is not None:
        b = _coerce(b)
        if b.data.ndim != 1 or b.shape[0] != w.shape[1]:
            raise ShapeError(f"linear: bias shape {b.shape} does not match output width {w.shape[1]}")
        out = add(out, b)
    return out


def conv2d_output_size(extent, kernel, stride, dilation, padding):
    return (extent + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def conv2d(x, k, stride=1, dilation=1, padding=0):
    """2D cross-correlation (no kernel flip) over NCHW input.

    x: (B, C, H, W), k: (F, C, KH, KW). Differentiable w.r.t. x and k.
    """
    x, k = _coerce(x), _coerce(k)
    if x.data.ndim != 4 or k.data.ndim != 4:
        raise ShapeError(f"conv2d: need 4D input and kernel, got {x.shape} and {k.shape}")
    if x.shape[1] != k.shape[1]:
        raise ShapeError(f"conv2d: channel mismatch, input {x.shape} vs kernel {k.shape}")
    if stride < 1 or dilation < 1 or padding < 0:
        raise ValueError("conv2d: stride/dilation must be >=1, padding >=0")
    B, C, H, W = x.shape
    F, _, KH, KW = k.shape
    Ho = conv2d_output_size(H, KH, stride, dilation, padding)
    Wo = conv2d_output_size(W, KW, stride, dilation, padding)
    if Ho < 1 or Wo < 1:
        raise ShapeError(
            f"conv2d: empty output {Ho}x{Wo} for input {x.shape}, kernel {k.shape}, "
            f"stride {stride}, dilation {dilation}, padding {padding}"
        )
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = np.empty((B, C, KH, KW, Ho, Wo))
    for ki in range(KH):
        hi = ki * dilation
        for kj in range(KW):
            wj = kj * dilation
            cols[:, :, ki, kj] = xp[
                :, :, hi : hi + stride * (Ho - 1) + 1 : stride,
                wj : wj + stride * (Wo - 1) + 1 : stride,
            ]
    cols2 = cols.reshape(B, C * KH * KW, Ho * Wo)
    kr = k.data.reshape(F, C * KH * KW)
    out = (kr @ cols2).reshape(B, F, Ho, Wo)

    def backward(g):
        gr = g.reshape(B, F, Ho * Wo)
        gk = np.einsum("bfl,bcl->fc", gr, cols2).reshape(k.shape)
        gcols = (kr.T @ gr).reshape(B, C, KH, KW, Ho, Wo)
        gxp = np.zeros_like(xp)
        for ki in range(KH):
            hi = ki * dilation
            for kj in range(KW):
                wj = kj * dilation
                gxp[
                    :, :, hi : hi + stride * (Ho - 1) + 1 : stride,
                    wj : wj + stride * (Wo - 1) + 1 : stride,
                ] += gcols[:, :, ki, kj]
        if padding:
            gx = gxp[:, :, padding : padding + H, padding : padding + W]
        else:
            gx = gxp
        return gx, gk

    return _make(out, (x, k), backward)


def softmax(x):
    """Numerically stable softmax over the last axis."""
    x = _coerce(x)
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax: input contains non-finite values")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _make(y, (x,), backward)


def prelu(x, a):
    """Parametric ReLU; slope `a` is a scalar or per-channel (axis 1) tensor.

    The subgradient at exactly 0 follows the positive branch.
    """
    x, a = _coerce(x), _coerce(a)
    av = a.data
    if av.size == 1:
        slope = av.reshape(())
    elif x.data.ndim >= 2 and av.ndim == 1 and av.shape[0] == x.shape[1]:
        slope = av.reshape((1, -1) + (1,) * (x.data.ndim - 2))
    else:
        raise ShapeError(f"prelu: slope shape {a.shape} incompatible with input {x.shape}")
    pos = x.data >= 0
    out = np.where(pos, x.data, slope * x.data)

    def backward(g):
        gx = np.where(pos, g, slope * g)
        ga_full = np.where(pos, 0.0, x.data * g)
        if av.size == 1:
            ga = np.asarray(ga_full.sum()).reshape(av.shape)
        else:
            axes = (0,) + tuple(range(2, x.data.ndim))
            ga = ga_full.sum(axis=axes).reshape(av.shape)
        return gx, ga

    return _make(out, (x, a), backward)


def layer_norm(x, gain, bias, eps=1e-5, axis=-1):
    """Normalize to zero mean / unit variance over one axis, then affine."""
    x, gain, bias = _coerce(x), _coerce(gain), _coerce(bias)
    ax = axis % x.data.ndim
    n = x.shape[ax]
    if gain.data.size != n or bias.data.size != n:
        raise ShapeError(
            f"layer_norm: gain/bias must span axis {ax} (extent {n}), "
            f"got {gain.shape} and {bias.shape}"
        )
    bshape = [1] * x.data.ndim
    bshape[ax] = n
    gv = gain.data.reshape(bshape)
    bv = bias.data.reshape(bshape)
    mu = x.data.mean(axis=ax, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=ax, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv
    out = gv * y + bv

    def backward(g):
        red = tuple(i for i in range(x.data.ndim) if i != ax)
        gy = g * gv
        gvar = (gy * xc * (-0.5) * inv**3).sum(axis=ax, keepdims=True)
        gmu = (-gy * inv).sum(axis=ax, keepdims=True) + gvar * (-2.0 / n) * xc.sum(
            axis=ax, keepdims=True
        )
        gx = gy * inv + gvar * (2.0 / n) * xc + gmu / n
        ggain = (g * y).sum(axis=red).reshape(gain.shape)
        gbias = g.sum(axis=red).reshape(bias.shape)
        return gx, ggain, gbias

    return _make(out, (x, gain, bias), backward)


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer class labels under softmax."""
    logits = _coerce(logits)
    labels = np.asarray(labels)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be 2D, got {logits.shape}")
    B, K = logits.shape
    if labels.shape != (B,):
        raise ShapeError(f"cross_entropy: labels shape {labels.shape} != ({B},)")
    if labels.min() < 0 or labels.max() >= K:
        raise ValueError(f"cross_entropy: labels must lie in [0, {K - 1}]")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    nll = lse - z[np.arange(B), labels]
    out = nll.mean()

    def backward(g):
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(B), labels] -= 1.0
        return (g * p / B,)

    return _make(np.asarray(out), (logits,), backward)


def concat(tensors, axis=0):
    ts = [_coerce(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tuple(ts), backward)


def transpose(x, axes):
    x = _coerce(x)
    out = np.transpose(x.data, axes)
    inv = np.argsort(axes)

    def backward(g):
        return (np.transpose(g, inv),)

    return _make(out, (x,), backward)


def reshape(x, shape):
    x = _coerce(x)
    orig = x.data.shape
    out = x.data.reshape(shape)

    def backward(g):
        return (g.reshape(orig),)

    return _make(out, (x,), backward)


def slice_(x, index):
    """Basic (non-fancy) slicing with gradient scatter."""
    x = _coerce(x)
    out = x.data[index]
    shape = x.data.shape

    def backward(g):
        gx = np.zeros(shape)
        gx[index] = g
        return (gx,)

    return _make(out, (x,), backward)


def tsum(x):
    x = _coerce(x)
    shape = x.data.shape
    out = np.asarray(x.data.sum())

    def backward(g):
        return (np.broadcast_to(g, shape).astype(np.float64),)

    return _make(out, (x,), backward)


def tmean(x):
    x = _coerce(x)
    shape = x.data.shape
    n = x.data.size
    out = np.asarray(x.data.mean())

    def backward(g):
        return (np.broadcast_to(g / n, shape).astype(np.float64),)

    return _make(out, (x,), backward)
