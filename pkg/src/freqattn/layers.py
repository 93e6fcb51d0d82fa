"""Neural-network layers built on the autograd core.

Functional ops accept [C, H, W] inputs or batched [N, C, H, W]; the layer
classes bundle parameters with stable names for checkpointing.
"""

from __future__ import annotations

import numpy as np

from .autograd import (
    Parameter,
    Tensor,
    accumulate_grad,
    add,
    as_tensor,
    make_op,
    matmul,
    reshape,
    tensor_mean,
)

__all__ = [
    "conv2d",
    "max_pool2d",
    "global_avg_pool",
    "fully_connected",
    "batch_norm2d",
    "softmax_cross_entropy",
    "he_uniform",
    "Conv2d",
    "Linear",
    "BatchNorm2d",
]


def _as_param_tensor(x) -> Tensor:
    if isinstance(x, Parameter):
        return x.tensor
    return as_tensor(x)


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int):
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols


def conv2d(x, kernels, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate input [C,H,W] (or [N,C,H,W]) with kernels [O,C,kh,kw].

    Output spatial size is floor((dim + 2*padding - k)/stride) + 1.
    """
    x = as_tensor(x)
    w = _as_param_tensor(kernels)
    single = x.data.ndim == 3
    xd = x.data[None] if single else x.data
    if xd.ndim != 4 or w.data.ndim != 4:
        raise ValueError(
            f"conv2d expects [C,H,W] or [N,C,H,W] input and [O,C,kh,kw] kernels, "
            f"got input {x.data.shape} and kernels {w.data.shape}"
        )
    n, c, h, wdt = xd.shape
    o, cw, kh, kw = w.data.shape
    if cw != c:
        raise ValueError(
            f"conv2d channel mismatch: input {x.data.shape} vs kernels {w.data.shape}"
        )
    hp, wp = h + 2 * padding, wdt + 2 * padding
    if kh > hp or kw > wp:
        raise ValueError(
            f"conv2d kernel {w.data.shape} larger than padded input "
            f"({hp}x{wp} from {x.data.shape}, padding={padding})"
        )
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    xpad = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _im2col(xpad, kh, kw, stride, ho, wo)
    cols2 = cols.reshape(n, c * kh * kw, ho * wo)
    wmat = w.data.reshape(o, c * kh * kw)
    out = np.matmul(wmat, cols2).reshape(n, o, ho, wo)

    def backward(g):
        g4 = g[None] if single else g
        gflat = g4.reshape(n, o, ho * wo)
        if w.requires_grad:
            dw = np.tensordot(gflat, cols2, axes=([0, 2], [0, 2]))
            accumulate_grad(w, dw.reshape(w.data.shape))
        if x.requires_grad:
            dcols = np.matmul(wmat.T, gflat).reshape(n, c, kh, kw, ho, wo)
            dxp = np.zeros((n, c, hp, wp), dtype=np.float64)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[:, :, i, j]
            dx = dxp[:, :, padding : padding + h, padding : padding + wdt]
            accumulate_grad(x, dx[0] if single else dx)

    return make_op(out[0] if single else out, (x, w), backward)


def max_pool2d(x, kernel: int = 2, stride: int | None = None) -> Tensor:
    """Max pooling over kernel x kernel windows; ties go to the first max."""
    x = as_tensor(x)
    if stride is None:
        stride = kernel
    single = x.data.ndim == 3
    xd = x.data[None] if single else x.data
    n, c, h, w = xd.shape
    if kernel > h or kernel > w:
        raise ValueError(f"max_pool2d kernel {kernel} exceeds input {x.data.shape}")
    ho = (h - kernel) // stride + 1
    wo = (w - kernel) // stride + 1
    cols = _im2col(xd, kernel, kernel, stride, ho, wo)
    windows = cols.reshape(n, c, kernel * kernel, ho, wo)
    idx = windows.argmax(axis=2)
    out = np.take_along_axis(windows, idx[:, :, None], axis=2)[:, :, 0]

    def backward(g):
        g4 = g[None] if single else g
        onehot = idx[:, :, None] == np.arange(kernel * kernel)[None, None, :, None, None]
        dwin = (g4[:, :, None] * onehot).reshape(n, c, kernel, kernel, ho, wo)
        dx = np.zeros((n, c, h, w), dtype=np.float64)
        for i in range(kernel):
            for j in range(kernel):
                dx[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dwin[:, :, i, j]
        accumulate_grad(x, dx[0] if single else dx)

    return make_op(out[0] if single else out, (x,), backward)


def global_avg_pool(x) -> Tensor:
    """Per-channel spatial mean: [..., C, H, W] -> [..., C]."""
    x = as_tensor(x)
    if x.data.ndim not in (3, 4):
        raise ValueError(f"global_avg_pool expects 3-D or 4-D input, got {x.data.shape}")
    return tensor_mean(x, axis=(-2, -1))


def fully_connected(x, weight, bias) -> Tensor:
    """Affine map: x [din] or [N,din] times weight [din,dout] plus bias [dout]."""
    x = as_tensor(x)
    w = _as_param_tensor(weight)
    b = _as_param_tensor(bias)
    single = x.data.ndim == 1
    x2 = reshape(x, (1, -1)) if single else x
    if x2.data.shape[1] != w.data.shape[0]:
        raise ValueError(
            f"fully_connected shape mismatch: input {x.data.shape} vs weight {w.data.shape}"
        )
    out = add(matmul(x2, w), b)
    return reshape(out, (-1,)) if single else out


def batch_norm2d(
    x,
    gamma,
    beta,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization for [N,C,H,W] (or [C,H,W]) maps.

    In training mode the batch statistics are used and the running buffers
    are updated in place; in eval mode the running buffers are used and no
    state changes.
    """
    x = as_tensor(x)
    g_ = _as_param_tensor(gamma)
    b_ = _as_param_tensor(beta)
    single = x.data.ndim == 3
    xd = x.data[None] if single else x.data
    n, c, h, w = xd.shape
    if g_.data.shape != (c,) or b_.data.shape != (c,):
        raise ValueError(
            f"batch_norm2d parameter shapes {g_.data.shape}/{b_.data.shape} "
            f"do not match {c} channels"
        )
    bshape = (1, c, 1, 1)
    if training:
        mu = xd.mean(axis=(0, 2, 3))
        var = xd.var(axis=(0, 2, 3))
        running_mean[:] = momentum * running_mean + (1.0 - momentum) * mu
        running_var[:] = momentum * running_var + (1.0 - momentum) * var
    else:
        mu = running_mean
        var = running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu.reshape(bshape)) * inv.reshape(bshape)
    out = g_.data.reshape(bshape) * xhat + b_.data.reshape(bshape)

    def backward(g):
        g4 = g[None] if single else g
        if g_.requires_grad:
            accumulate_grad(g_, (g4 * xhat).sum(axis=(0, 2, 3)))
        if b_.requires_grad:
            accumulate_grad(b_, g4.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dxhat = g4 * g_.data.reshape(bshape)
            if training:
                m = n * h * w
                centered = xd - mu.reshape(bshape)
                dvar = (dxhat * centered).sum(axis=(0, 2, 3)) * (-0.5) * inv**3
                dmu = -(dxhat.sum(axis=(0, 2, 3))) * inv + dvar * (
                    -2.0 / m
                ) * centered.sum(axis=(0, 2, 3))
                dx = (
                    dxhat * inv.reshape(bshape)
                    + (dvar.reshape(bshape) * 2.0 * centered / m)
                    + dmu.reshape(bshape) / m
                )
            else:
                dx = dxhat * inv.reshape(bshape)
            accumulate_grad(x, dx[0] if single else dx)

    return make_op(out[0] if single else out, (x, g_, b_), backward)


def softmax_cross_entropy(logits, target) -> Tensor:
    """Mean negative log-softmax probability of the target class(es).

    Accepts a [K] logit vector with an integer class index, or [N,K] with
    an integer vector of length N.  Uses the max-subtraction stabilization.
    """
    logits = as_tensor(logits)
    single = logits.data.ndim == 1
    z = logits.data[None] if single else logits.data
    if z.ndim != 2:
        raise ValueError(f"softmax_cross_entropy expects [K] or [N,K] logits, got {logits.data.shape}")
    labels = np.atleast_1d(np.asarray(target, dtype=np.int64))
    n, k = z.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match {n} logit rows")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"class index out of range [0,{k}): {labels.tolist()}")
    zs = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(zs).sum(axis=1, keepdims=True))
    logp = zs - lse
    loss = -logp[np.arange(n), labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        d = g * p / n
        accumulate_grad(logits, d[0] if single else d)

    return make_op(np.float64(loss), (logits,), backward)


def he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Centered uniform init with fan-in scaling."""
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Conv2d:
    """3x3-style convolution layer without bias (convs here precede BN)."""

    def __init__(self, name, in_ch, out_ch, kernel, stride, padding, rng):
        fan_in = in_ch * kernel * kernel
        self.weight = Parameter(
            Tensor(he_uniform(rng, (out_ch, in_ch, kernel, kernel), fan_in)),
            f"{name}.weight",
        )
        self.stride = stride
        self.padding = padding

    def __call__(self, x):
        return conv2d(x, self.weight, self.stride, self.padding)

    def parameters(self):
        return [self.weight]


class Linear:
    """Affine layer: weight [din,dout] with He-uniform init, zero bias."""

    def __init__(self, name, din, dout, rng):
        self.weight = Parameter(
            Tensor(he_uniform(rng, (din, dout), din)), f"{name}.weight"
        )
        self.bias = Parameter(Tensor(np.zeros(dout)), f"{name}.bias")

    def __call__(self, x):
        return fully_connected(x, self.weight, self.bias)

    def parameters(self):
        return [self.weight, self.bias]


class BatchNorm2d:
    """Batch norm layer with gamma/beta parameters and running-stat buffers."""

    def __init__(self, name, channels, momentum: float = 0.9, eps: float = 1e-5):
        self.name = name
        self.gamma = Parameter(Tensor(np.ones(channels)), f"{name}.gamma")
        self.beta = Parameter(Tensor(np.zeros(channels)), f"{name}.beta")
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x, training: bool):
        return batch_norm2d(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            training,
            self.momentum,
            self.eps,
        )

    def parameters(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [
            (f"{self.name}.running_mean", self.running_mean),
            (f"{self.name}.running_var", self.running_var),
        ]
