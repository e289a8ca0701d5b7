"""Minimal dense-tensor library with reverse-mode automatic differentiation.

Tensors carry 64-bit float buffers; values are validated finite at creation,
which also surfaces NaN/Inf after every op since ops build their outputs
through the Tensor constructor. Ops record onto a Tape when any input is
watched; the tape's node list is appended in execution order, so reverse
iteration is a valid topological sweep. Broadcasting is deliberately absent
except for linear's leading-dim rule: shape errors are the dominant bug
class at this scale, so everything else must match exactly."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


# When True, every op output is re-validated for NaN/Inf (tensors are always
# validated at creation).
DEBUG_CHECKS = False


class AutodiffError(Exception):
    pass


class ShapeMismatch(AutodiffError):
    pass


class HeadDivisibility(ShapeMismatch):
    pass


class Node:
    """One recorded op: parent nodes and a function mapping the output gradient
    to per-parent gradients."""

    __slots__ = ("op", "tape", "parents", "backward_fn", "grad")

    def __init__(self, op: str, tape: "Tape", parents: tuple, backward_fn):
        self.op = op
        self.tape = tape
        self.parents = parents
        self.backward_fn = backward_fn
        self.grad = None


class Tape:
    """Append-only op log; nodes are in topological order by construction."""

    def __init__(self):
        self.nodes: list[Node] = []

    def watch(self, t: "Tensor") -> "Tensor":
        """Mark a tensor as a differentiable leaf on this tape."""
        if t.node is not None:
            raise AutodiffError("tensor is already attached to a tape")
        t.node = Node("leaf", self, (), None)
        self.nodes.append(t.node)
        return t

    def backward(self, loss: "Tensor", seed: np.ndarray | None = None) -> None:
        """Accumulate gradients of `loss` into every node reachable from it."""
        if loss.node is None or loss.node.tape is not self:
            raise AutodiffError("loss tensor is not recorded on this tape")
        if seed is None:
            seed = np.ones_like(loss.data)
        for n in self.nodes:
            n.grad = None
        loss.node.grad = np.asarray(seed, dtype=np.float64)
        for n in reversed(self.nodes):
            if n.grad is None or n.backward_fn is None:
                continue
            for parent, g in zip(n.parents, n.backward_fn(n.grad)):
                if parent is None or g is None:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g


class Tensor:
    """Shape + float64 buffer + optional tape-node handle."""

    __slots__ = ("data", "node")

    def __init__(self, data, node: Node | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        if not np.isfinite(self.data).all():
            raise AutodiffError("non-finite value in tensor")
        self.node = node

    @classmethod
    def _wrap(cls, data: np.ndarray) -> "Tensor":
        # Internal fast path for op outputs; validation is debug-only there.
        out = object.__new__(cls)
        out.data = data
        out.node = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def grad(self) -> np.ndarray | None:
        return self.node.grad if self.node is not None else None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, tracked={self.node is not None})"


def constant(data) -> Tensor:
    return Tensor(data)


def _common_tape(inputs: tuple[Tensor, ...]) -> Tape | None:
    tape = None
    for t in inputs:
        if t.node is None:
            continue
        if tape is None:
            tape = t.node.tape
        elif t.node.tape is not tape:
            raise AutodiffError("inputs belong to different tapes")
    return tape


def _apply(op: str, out_data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    if DEBUG_CHECKS and not np.isfinite(out_data).all():
        raise AutodiffError(f"non-finite value in output of {op!r}")
    out = Tensor._wrap(np.asarray(out_data, dtype=np.float64))
    tape = _common_tape(inputs)
    if tape is not None:
        out.node = Node(op, tape, tuple(t.node for t in inputs), backward_fn)
        tape.nodes.append(out.node)
    return out


# ---------------------------------------------------------------------------
# elementwise and shape ops


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}")
    return _apply("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"sub: {a.shape} vs {b.shape}")
    return _apply("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"mul: {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    return _apply("mul", ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(x: Tensor, s: float) -> Tensor:
    return _apply("scale", x.data * s, (x,), lambda g: (g * s,))


def add_rowvec(x: Tensor, v: Tensor) -> Tensor:
    """x[n, c] + v broadcast over rows; v is [c] or [1, c]."""
    if x.data.ndim != 2 or v.data.reshape(-1).shape[0] != x.shape[1]:
        raise ShapeMismatch(f"add_rowvec: {x.shape} vs {v.shape}")
    vshape = v.shape
    return _apply("add_rowvec", x.data + v.data.reshape(1, -1), (x, v),
                  lambda g: (g, g.sum(axis=0).reshape(vshape)))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    in_shape = x.shape
    return _apply("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(in_shape),))


def transpose2d(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeMismatch(f"transpose2d expects a matrix, got {x.shape}")
    return _apply("transpose2d", x.data.T.copy(), (x,), lambda g: (g.T,))


def concat(parts: list[Tensor], axis: int) -> Tensor:
    if not parts:
        raise ShapeMismatch("concat of zero tensors")
    ndim = parts[0].data.ndim
    axis = axis % ndim
    for p in parts[1:]:
        if p.data.ndim != ndim or any(
            p.shape[i] != parts[0].shape[i] for i in range(ndim) if i != axis
        ):
            raise ShapeMismatch(f"concat: incompatible shapes {[p.shape for p in parts]}")
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, range(offsets[i], offsets[i + 1]), axis=axis) for i in range(len(sizes))
        )

    return _apply("concat", np.concatenate([p.data for p in parts], axis=axis),
                  tuple(parts), backward)


def split(x: Tensor, sizes: list[int], axis: int) -> list[Tensor]:
    """Exact inverse of concat; each part is its own slice node."""
    axis = axis % x.data.ndim
    if sum(sizes) != x.shape[axis]:
        raise ShapeMismatch(f"split sizes {sizes} do not sum to axis dim {x.shape[axis]}")
    out = []
    offset = 0
    x_shape = x.shape
    base = [slice(None)] * len(x_shape)
    for size in sizes:
        lo, hi = offset, offset + size
        sel = list(base)
        sel[axis] = slice(lo, hi)
        sel = tuple(sel)

        def backward(g, sel=sel):
            full = np.zeros(x_shape, dtype=np.float64)
            full[sel] = g
            return (full,)

        out.append(_apply("slice", x.data[sel], (x,), backward))
        offset += size
    return out


def mean(x: Tensor, axis: int) -> Tensor:
    """Mean along one axis, correctly rounded (fsum) so the result is
    bit-identical under any permutation of the reduced axis."""
    axis = axis % x.data.ndim
    n = x.shape[axis]
    moved = np.moveaxis(x.data, axis, -1)
    summed = np.array([math.fsum(row) for row in moved.reshape(-1, n)])
    out = summed.reshape(moved.shape[:-1]) / n

    def backward(g):
        return (np.repeat(np.expand_dims(g / n, axis), n, axis=axis),)

    return _apply("mean", out, (x,), backward)


def total(x: Tensor) -> Tensor:
    """Sum of all entries; the usual scalar loss head."""
    in_shape = x.shape
    return _apply("total", np.asarray(x.data.sum()), (x,),
                  lambda g: (np.broadcast_to(g, in_shape).copy(),))


# ---------------------------------------------------------------------------
# linear algebra and nonlinearities


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    return _apply("matmul", ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x[..., d_in] @ w[d_in, d_out] + b[d_out], broadcast over leading dims."""
    if w.data.ndim != 2 or x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeMismatch(f"linear: x{x.shape} w{w.shape} b{b.shape}")
    d_in, d_out = w.shape
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, d_in)
    out = (x2 @ w.data + b.data).reshape(*lead, d_out)
    wd = w.data

    def backward(g):
        g2 = g.reshape(-1, d_out)
        return (g2 @ wd.T).reshape(*lead, d_in), x2.T @ g2, g2.sum(axis=0)

    return _apply("linear", out, (x, w, b), backward)


def softmax(x: Tensor, axis: int) -> Tensor:
    axis = axis % x.data.ndim
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _apply("softmax", s, (x,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each trailing-dim vector to mean 0 / variance 1, then affine."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeMismatch(f"layer_norm: x{x.shape} gamma{gamma.shape} beta{beta.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gamma.data * xhat + beta.data
    lead_axes = tuple(range(x.data.ndim - 1))
    gd = gamma.data

    def backward(g):
        dgamma = (g * xhat).sum(axis=lead_axes)
        dbeta = g.sum(axis=lead_axes)
        dxhat = g * gd
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, dgamma, dbeta

    return _apply("layer_norm", out, (x, gamma, beta), backward)


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-CDF form x * Phi(x) (not the tanh approximation)."""
    phi_cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT2PI
    xd = x.data
    return _apply("gelu", xd * phi_cdf, (x,), lambda g: (g * (phi_cdf + xd * pdf),))


def relu(x: Tensor) -> Tensor:
    positive = x.data > 0
    return _apply("relu", np.where(positive, x.data, 0.0), (x,), lambda g: (g * positive,))


# ---------------------------------------------------------------------------
# attention


@dataclass
class AttentionParams:
    """Projection weights for one multi-head self-attention layer at width d."""

    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor

    @classmethod
    def create(cls, dim: int, init: "ParamInit") -> "AttentionParams":
        return cls(
            wq=init.uniform((dim, dim), dim), bq=init.uniform((dim,), dim),
            wk=init.uniform((dim, dim), dim), bk=init.uniform((dim,), dim),
            wv=init.uniform((dim, dim), dim), bv=init.uniform((dim,), dim),
            wo=init.uniform((dim, dim), dim), bo=init.uniform((dim,), dim),
        )

    def named_tensors(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.{name}", getattr(self, name))
                for name in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")]


def multi_head_self_attention(x: Tensor, params: AttentionParams, heads: int,
                              return_weights: bool = False):
    """Scaled dot-product attention per head (scale 1/sqrt(d/heads)), heads
    concatenated and output-projected."""
    if x.data.ndim != 2:
        raise ShapeMismatch(f"attention expects [n, d] tokens, got {x.shape}")
    d = x.shape[1]
    if heads < 1 or d % heads != 0:
        raise HeadDivisibility(f"width {d} not divisible by {heads} heads")
    dh = d // heads
    q = linear(x, params.wq, params.bq)
    k = linear(x, params.wk, params.bk)
    v = linear(x, params.wv, params.bv)
    sizes = [dh] * heads
    qs, ks, vs = split(q, sizes, 1), split(k, sizes, 1), split(v, sizes, 1)
    outs = []
    weights = []
    for qh, kh, vh in zip(qs, ks, vs):
        scores = scale(matmul(qh, transpose2d(kh)), 1.0 / np.sqrt(dh))
        att = softmax(scores, axis=1)
        weights.append(att.data)
        outs.append(matmul(att, vh))
    out = linear(concat(outs, axis=1), params.wo, params.bo)
    return (out, weights) if return_weights else out


# ---------------------------------------------------------------------------
# image-shaped ops (channels-first [c, h, w])


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Same-padding 2-D convolution, odd square kernels (1x1 and 3x3)."""
    if x.data.ndim != 3 or kernel.data.ndim != 4:
        raise ShapeMismatch(f"conv2d: x{x.shape} kernel{kernel.shape}")
    co, ci, kh, kw = kernel.shape
    if kh != kw or kh % 2 != 1 or ci != x.shape[0] or bias.shape != (co,):
        raise ShapeMismatch(f"conv2d: x{x.shape} kernel{kernel.shape} bias{bias.shape}")
    _, h, w = x.shape
    pad = kh // 2
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((co, h, w), dtype=np.float64)
    for u in range(kh):
        for v in range(kw):
            out += np.einsum("oi,iyx->oyx", kernel.data[:, :, u, v], xp[:, u : u + h, v : v + w])
    out += bias.data[:, None, None]
    kd = kernel.data

    def backward(g):
        dk = np.zeros_like(kd)
        dxp = np.zeros_like(xp)
        for u in range(kh):
            for v in range(kw):
                window = xp[:, u : u + h, v : v + w]
                dk[:, :, u, v] = np.einsum("oyx,iyx->oi", g, window)
                dxp[:, u : u + h, v : v + w] += np.einsum("oi,oyx->iyx", kd[:, :, u, v], g)
        dx = dxp[:, pad : pad + h, pad : pad + w] if pad else dxp
        return dx, dk, g.sum(axis=(1, 2))

    return _apply("conv2d", out, (x, kernel, bias), backward)


def batch_norm_infer(x: Tensor, running_mean: Tensor, running_var: Tensor,
                     gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Inference-mode batch norm over channels of [c, h, w]; the running
    statistics are constants (no gradient)."""
    c = x.shape[0]
    for t, name in ((running_mean, "mean"), (running_var, "var"), (gamma, "gamma"), (beta, "beta")):
        if t.shape != (c,):
            raise ShapeMismatch(f"batch_norm_infer: {name} shape {t.shape}, expected ({c},)")
    inv = 1.0 / np.sqrt(running_var.data + eps)
    xhat = (x.data - running_mean.data[:, None, None]) * inv[:, None, None]
    out = gamma.data[:, None, None] * xhat + beta.data[:, None, None]
    gd = gamma.data

    def backward(g):
        dx = g * (gd * inv)[:, None, None]
        dgamma = (g * xhat).sum(axis=(1, 2))
        dbeta = g.sum(axis=(1, 2))
        return dx, None, None, dgamma, dbeta

    return _apply("batch_norm_infer", out, (x, running_mean, running_var, gamma, beta), backward)


def upsample_nearest2x(x: Tensor) -> Tensor:
    """[c, h, w] -> [c, 2h, 2w], each value repeated as a 2x2 block."""
    if x.data.ndim != 3:
        raise ShapeMismatch(f"upsample_nearest2x expects [c, h, w], got {x.shape}")
    c, h, w = x.shape
    out = x.data.repeat(2, axis=1).repeat(2, axis=2)
    return _apply("upsample2x", out, (x,),
                  lambda g: (g.reshape(c, h, 2, w, 2).sum(axis=(2, 4)),))


def patchify(x: Tensor, patch: int) -> Tensor:
    """Non-overlapping patches of [c, h, w] as rows [n, c*patch*patch],
    row-major over the patch grid."""
    c, h, w = x.shape
    if h % patch or w % patch:
        raise ShapeMismatch(f"spatial dims {h}x{w} not divisible by patch {patch}")
    gh, gw = h // patch, w // patch

    data = (x.data.reshape(c, gh, patch, gw, patch)
            .transpose(1, 3, 0, 2, 4)
            .reshape(gh * gw, c * patch * patch))

    def backward(g):
        return (g.reshape(gh, gw, c, patch, patch)
                .transpose(2, 0, 3, 1, 4)
                .reshape(c, h, w),)

    return _apply("patchify", data, (x,), backward)


# ---------------------------------------------------------------------------
# initialization and checkpoints


@dataclass
class ParamInit:
    """Seeded uniform initializer with bound 1/sqrt(fan_in); identical seeds
    produce bit-identical parameters."""

    seed: int

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)

    def uniform(self, shape: tuple[int, ...], fan_in: int) -> Tensor:
        bound = 1.0 / np.sqrt(fan_in)
        return Tensor(self._rng.uniform(-bound, bound, size=shape))

    def ones(self, shape: tuple[int, ...]) -> Tensor:
        return Tensor(np.ones(shape))

    def zeros(self, shape: tuple[int, ...]) -> Tensor:
        return Tensor(np.zeros(shape))


def save_checkpoint(path: str | Path, named: list[tuple[str, Tensor]]) -> None:
    """Write parameters as a UTF-8 manifest line (name, shape, element offset)
    followed by the flat little-endian float64 buffer."""
    entries = []
    offset = 0
    blobs = []
    for name, t in named:
        entries.append({"name": name, "shape": list(t.shape), "offset": offset})
        offset += t.size
        blobs.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    header = json.dumps({"entries": entries}, ensure_ascii=False).encode("utf-8")
    Path(path).write_bytes(header + b"\n" + b"".join(blobs))


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    sep = raw.index(b"\n")
    header = json.loads(raw[:sep].decode("utf-8"))
    blob = np.frombuffer(raw[sep + 1 :], dtype="<f8")
    out = {}
    for entry in header["entries"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        out[entry["name"]] = blob[start : start + size].reshape(shape).astype(np.float64)
    return out
