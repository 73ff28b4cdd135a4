"""Dense tensor engine with reverse-mode automatic differentiation.

Covers exactly the operator set the segmentation model needs: grouped /
dilated / strided 2D convolution, bilinear up/downsampling, batch
normalization, ReLU6, softmax family, elementwise arithmetic, reductions
and gather/scatter for loss pooling.  Data lives in contiguous numpy
arrays (NCHW for image tensors); the dtype of the inputs propagates, so
the same graph runs in float32 for training and float64 for gradient
checking.

A Tensor produced by an op is treated as immutable; backward() walks the
recorded graph once and accumulates gradients into every reachable
tensor with ``requires_grad``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractViolation

__all__ = [
    "Tensor",
    "ConvSpec",
    "tensor",
    "conv2d",
    "bilinear_upsample",
    "avgpool2",
    "batch_norm2d",
    "relu6",
    "softmax",
    "log_softmax",
    "gather_channel",
    "gather_flat",
    "backward",
]


class Tensor:
    """A dense array plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(
        self,
        data: np.ndarray,
        requires_grad: bool = False,
        _parents: tuple = (),
        _backward_fn: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None,
    ):
        self.data = np.ascontiguousarray(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward_fn = _backward_fn

    # -- conveniences -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic ---------------------------------------------------

    def __add__(self, other) -> "Tensor":
        return add(self, _as_tensor(other, self.dtype))

    __radd__ = __add__

    def __mul__(self, other) -> "Tensor":
        return mul(self, _as_tensor(other, self.dtype))

    __rmul__ = __mul__

    def __sub__(self, other) -> "Tensor":
        return add(self, mul(_as_tensor(other, self.dtype), _const(-1.0, self.dtype)))

    def __neg__(self) -> "Tensor":
        return mul(self, _const(-1.0, self.dtype))

    def reshape(self, *shape: int) -> "Tensor":
        return reshape(self, shape)

    def sum(self) -> "Tensor":
        return sum_all(self)

    def backward(self) -> None:
        backward(self)


def tensor(data, requires_grad: bool = False, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=requires_grad)


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _const(v: float, dtype) -> Tensor:
    return Tensor(np.asarray(v, dtype=dtype))


def _make(data, parents, backward_fn) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(
        data,
        requires_grad=req,
        _parents=tuple(parents) if req else (),
        _backward_fn=backward_fn if req else None,
    )


def backward(loss: Tensor) -> None:
    """Populate .grad for every tensor reachable from ``loss`` that wants one."""
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ContractViolation(f"backward() needs a scalar loss, got shape {loss.data.shape}")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward_fn is None or node.grad is None:
            continue
        grads = node._backward_fn(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------
# elementwise and shape ops
# ---------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def bwd(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _make(out, (a, b), bwd)


def square(a: Tensor) -> Tensor:
    out = a.data * a.data

    def bwd(g):
        return (2.0 * g * a.data,)

    return _make(out, (a,), bwd)


def relu6(a: Tensor) -> Tensor:
    out = np.clip(a.data, 0.0, 6.0)

    def bwd(g):
        return (g * ((a.data > 0.0) & (a.data < 6.0)).astype(a.data.dtype),)

    return _make(out, (a,), bwd)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    out = a.data.reshape(shape)

    def bwd(g):
        return (g.reshape(a.data.shape),)

    return _make(out, (a,), bwd)


def sum_all(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum(), dtype=a.data.dtype)

    def bwd(g):
        return (np.broadcast_to(g, a.data.shape).astype(a.data.dtype),)

    return _make(out, (a,), bwd)


# ---------------------------------------------------------------------
# softmax family
# ---------------------------------------------------------------------

def log_softmax(a: Tensor, axis: int) -> Tensor:
    if not -a.data.ndim <= axis < a.data.ndim:
        raise ContractViolation(f"axis {axis} invalid for shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    sm = np.exp(out)

    def bwd(g):
        return (g - sm * g.sum(axis=axis, keepdims=True),)

    return _make(out, (a,), bwd)


def softmax(a: Tensor, axis: int) -> Tensor:
    if not -a.data.ndim <= axis < a.data.ndim:
        raise ContractViolation(f"axis {axis} invalid for shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (a,), bwd)


# ---------------------------------------------------------------------
# gather / scatter
# ---------------------------------------------------------------------

def gather_channel(a: Tensor, index: np.ndarray) -> Tensor:
    """Pick a[n, index[n,h,w], h, w] for every pixel; NCHW input, NHW output."""
    n, c, h, w = a.data.shape
    if index.shape != (n, h, w):
        raise ContractViolation(f"index shape {index.shape} != {(n, h, w)}")
    if index.min() < 0 or index.max() >= c:
        raise ContractViolation(f"class index out of range [0, {c})")
    idx = index[:, None, :, :]
    out = np.take_along_axis(a.data, idx, axis=1)[:, 0]

    def bwd(g):
        ga = np.zeros_like(a.data)
        np.put_along_axis(ga, idx, g[:, None, :, :], axis=1)
        return (ga,)

    return _make(out, (a,), bwd)


def gather_flat(a: Tensor, indices: np.ndarray) -> Tensor:
    """Gather from a 1-D tensor; indices must be unique."""
    if a.data.ndim != 1:
        raise ContractViolation("gather_flat expects a 1-D tensor")
    out = a.data[indices]

    def bwd(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, indices, g)
        return (ga,)

    return _make(out, (a,), bwd)


# ---------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------

@dataclass(frozen=True)
class ConvSpec:
    """Static description of one 2D convolution."""

    in_channels: int
    out_channels: int
    kernel: tuple[int, int] = (3, 3)
    stride: int = 1
    dilation: int = 1
    groups: int = 1
    padding: str | tuple[int, int] = "same"

    def __post_init__(self):
        if self.in_channels % self.groups != 0 or self.out_channels % self.groups != 0:
            raise ContractViolation(
                f"channels ({self.in_channels}->{self.out_channels}) not divisible by groups {self.groups}"
            )
        if self.dilation < 1 or self.stride < 1:
            raise ContractViolation("stride and dilation must be >= 1")

    def pad(self) -> tuple[int, int]:
        if self.padding == "same":
            kh, kw = self.kernel
            return ((kh - 1) * self.dilation) // 2, ((kw - 1) * self.dilation) // 2
        return self.padding  # type: ignore[return-value]

    def out_size(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.kernel
        ph, pw = self.pad()
        eh = (kh - 1) * self.dilation + 1
        ew = (kw - 1) * self.dilation + 1
        if h + 2 * ph < eh or w + 2 * pw < ew:
            raise ContractViolation(
                f"input {h}x{w} (pad {ph},{pw}) smaller than effective kernel {eh}x{ew}"
            )
        return (h + 2 * ph - eh) // self.stride + 1, (w + 2 * pw - ew) // self.stride + 1


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor], spec: ConvSpec) -> Tensor:
    """Grouped, strided, dilated 2D convolution over NCHW input."""
    n, c, h, w = x.data.shape
    kh, kw = spec.kernel
    if c != spec.in_channels:
        raise ContractViolation(f"input has {c} channels, spec expects {spec.in_channels}")
    cg = spec.in_channels // spec.groups
    if weight.data.shape != (spec.out_channels, cg, kh, kw):
        raise ContractViolation(
            f"weight shape {weight.data.shape} != {(spec.out_channels, cg, kh, kw)}"
        )
    ph, pw = spec.pad()
    oh, ow = spec.out_size(h, w)
    s, d = spec.stride, spec.dilation

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))

    if spec.groups == c and spec.out_channels == c and cg == 1:
        out = _depthwise_forward(xp, weight.data, n, c, oh, ow, kh, kw, s, d)
        mode = "depthwise"
        cols = None
    elif spec.groups == 1:
        cols = _im2col(xp, kh, kw, oh, ow, s, d)  # (N, C*kh*kw, OH*OW)
        wmat = weight.data.reshape(spec.out_channels, -1)
        out = (wmat @ cols).reshape(n, spec.out_channels, oh, ow)
        mode = "dense"
    else:
        cols = None
        out = np.empty((n, spec.out_channels, oh, ow), dtype=x.data.dtype)
        ocg = spec.out_channels // spec.groups
        for gi in range(spec.groups):
            sub = _im2col(xp[:, gi * cg:(gi + 1) * cg], kh, kw, oh, ow, s, d)
            wmat = weight.data[gi * ocg:(gi + 1) * ocg].reshape(ocg, -1)
            out[:, gi * ocg:(gi + 1) * ocg] = (wmat @ sub).reshape(n, ocg, oh, ow)
        mode = "grouped"

    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)

    def bwd(g):
        gx_p = np.zeros_like(xp)
        if mode == "depthwise":
            gw = _depthwise_backward(xp, weight.data, g, gx_p, kh, kw, s, d, oh, ow)
        elif mode == "dense":
            gflat = g.reshape(n, spec.out_channels, -1)
            wmat = weight.data.reshape(spec.out_channels, -1)
            gcols = np.einsum("ok,nop->nkp", wmat, gflat)
            _col2im(gx_p, gcols, kh, kw, oh, ow, s, d)
            gw = np.einsum("nop,nkp->ok", gflat, cols).reshape(weight.data.shape)
        else:
            ocg = spec.out_channels // spec.groups
            gw = np.empty_like(weight.data)
            for gi in range(spec.groups):
                gs = g[:, gi * ocg:(gi + 1) * ocg].reshape(n, ocg, -1)
                wmat = weight.data[gi * ocg:(gi + 1) * ocg].reshape(ocg, -1)
                gcols = np.einsum("ok,nop->nkp", wmat, gs)
                _col2im(gx_p[:, gi * cg:(gi + 1) * cg], gcols, kh, kw, oh, ow, s, d)
                sub = _im2col(xp[:, gi * cg:(gi + 1) * cg], kh, kw, oh, ow, s, d)
                gw[gi * ocg:(gi + 1) * ocg] = np.einsum("nop,nkp->ok", gs, sub).reshape(
                    ocg, cg, kh, kw
                )
        gx = gx_p[:, :, ph:ph + h, pw:pw + w] if (ph or pw) else gx_p
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        if bias is not None:
            return gx, gw, gb
        return gx, gw

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, bwd)


def _im2col(xp, kh, kw, oh, ow, s, d):
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=xp.dtype)
    for ki in range(kh):
        for kj in range(kw):
            cols[:, :, ki, kj] = xp[:, :, ki * d:ki * d + oh * s:s, kj * d:kj * d + ow * s:s]
    return cols.reshape(n, c * kh * kw, oh * ow)


def _col2im(gx_p, gcols, kh, kw, oh, ow, s, d):
    n = gx_p.shape[0]
    c = gx_p.shape[1]
    g6 = gcols.reshape(n, c, kh, kw, oh, ow)
    for ki in range(kh):
        for kj in range(kw):
            gx_p[:, :, ki * d:ki * d + oh * s:s, kj * d:kj * d + ow * s:s] += g6[:, :, ki, kj]


def _depthwise_forward(xp, w, n, c, oh, ow, kh, kw, s, d):
    out = np.zeros((n, c, oh, ow), dtype=xp.dtype)
    for ki in range(kh):
        for kj in range(kw):
            out += w[:, 0, ki, kj][None, :, None, None] * xp[
                :, :, ki * d:ki * d + oh * s:s, kj * d:kj * d + ow * s:s
            ]
    return out


def _depthwise_backward(xp, w, g, gx_p, kh, kw, s, d, oh, ow):
    gw = np.zeros_like(w)
    for ki in range(kh):
        for kj in range(kw):
            sl = np.s_[:, :, ki * d:ki * d + oh * s:s, kj * d:kj * d + ow * s:s]
            gx_p[sl] += w[:, 0, ki, kj][None, :, None, None] * g
            gw[:, 0, ki, kj] = (g * xp[sl]).sum(axis=(0, 2, 3))
    return gw


# ---------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------

_INTERP_CACHE: dict[tuple[int, int, str], np.ndarray] = {}


def _interp_matrix(n_in: int, factor: int, dtype) -> np.ndarray:
    """Row-interpolation matrix for align-corners=false bilinear upsampling."""
    key = (n_in, factor, np.dtype(dtype).str)
    cached = _INTERP_CACHE.get(key)
    if cached is not None:
        return cached
    n_out = n_in * factor
    mat = np.zeros((n_out, n_in), dtype=dtype)
    for i in range(n_out):
        src = (i + 0.5) / factor - 0.5
        i0 = int(np.floor(src))
        t = src - i0
        i0c = min(max(i0, 0), n_in - 1)
        i1c = min(max(i0 + 1, 0), n_in - 1)
        mat[i, i0c] += 1.0 - t
        mat[i, i1c] += t
    _INTERP_CACHE[key] = mat
    return mat


def bilinear_upsample(x: Tensor, factor: int) -> Tensor:
    """Bilinear (align-corners=false) upsampling by an integer factor."""
    if factor < 1:
        raise ContractViolation(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        return reshape(x, x.data.shape)
    n, c, h, w = x.data.shape
    ah = _interp_matrix(h, factor, x.data.dtype)
    aw = _interp_matrix(w, factor, x.data.dtype)
    out = np.einsum("ij,ncjk,lk->ncil", ah, x.data, aw, optimize=True)

    def bwd(g):
        return (np.einsum("ij,ncik,kl->ncjl", ah, g, aw, optimize=True),)

    return _make(out, (x,), bwd)


def crop2d(x: Tensor, h: int, w: int) -> Tensor:
    """Keep the top-left h x w window of an NCHW tensor."""
    if h > x.data.shape[2] or w > x.data.shape[3]:
        raise ContractViolation(f"crop {h}x{w} larger than input {x.data.shape[2:]}")
    out = x.data[:, :, :h, :w]

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[:, :, :h, :w] = g
        return (gx,)

    return _make(out, (x,), bwd)


def avgpool2(x: Tensor) -> Tensor:
    """2x2 average pooling; equals bilinear 2x downsampling (align-corners=false)."""
    n, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ContractViolation(f"avgpool2 needs even spatial dims, got {h}x{w}")
    out = x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def bwd(g):
        gx = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * np.asarray(0.25, dtype=x.data.dtype)
        return (gx,)

    return _make(out, (x,), bwd)


# ---------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------

def batch_norm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch norm over (N, H, W); updates running stats in training mode."""
    n, c, h, w = x.data.shape
    if training:
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        cnt = n * h * w
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * (var * cnt / max(cnt - 1, 1))
    else:
        mu = running_mean.astype(x.data.dtype)
        var = running_var.astype(x.data.dtype)

    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def bwd(g):
        ggamma = (g * xhat).sum(axis=(0, 2, 3))
        gbeta = g.sum(axis=(0, 2, 3))
        scale = (gamma.data * inv)[None, :, None, None]
        if training:
            m = n * h * w
            gmean = g.mean(axis=(0, 2, 3))[None, :, None, None]
            gdot = (g * xhat).mean(axis=(0, 2, 3))[None, :, None, None]
            gx = scale * (g - gmean - xhat * gdot)
            del m
        else:
            gx = scale * g
        return gx, ggamma, gbeta

    return _make(out, (x, gamma, beta), bwd)
