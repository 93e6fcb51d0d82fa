"""Per-frequency-bin attention applied to spectral representations.

A FefaLayer holds one learnable weight (and optional bias) per frequency
bin.  The time-pooled spectrogram is routed through these locally connected
weights to per-bin logits, a softmax turns them into probabilities, and the
probabilities rescale the full rows of the input representation.  All of it
is differentiable through the autograd core.

Deeper copies of the layer attach to hidden [C, F', T'] maps: pooling then
also averages over channels, and the probabilities broadcast over channels
and time.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .autograd import (
    Parameter,
    Tensor,
    accumulate_grad,
    add,
    as_tensor,
    make_op,
    mul,
    reshape,
    tensor_mean,
)


class FefaLayer:
    """Per-bin attention kernel: weight vector W, optional bias b, last p.

    With ``input_dependent`` (default) the logit for bin i is W_i * xbar_i
    (+ b_i), where xbar is the time-pooled input: each pooled bin value is
    routed through its own private weight, with no cross-bin connections.
    With ``input_dependent=False`` the logits ignore the pooled values and
    are W_i (+ b_i) alone.
    """

    def __init__(
        self,
        n_bins: int,
        bias: bool = True,
        input_dependent: bool = True,
        name: str = "fefa",
    ):
        if n_bins < 1:
            raise ValueError(f"n_bins must be positive, got {n_bins}")
        self.n_bins = n_bins
        self.input_dependent = bool(input_dependent)
        self.name = name
        # Zero init: before training the layer is an exactly uniform rescale.
        self.weight = Parameter(Tensor(np.zeros(n_bins)), f"{name}.weight")
        self.bias = Parameter(Tensor(np.zeros(n_bins)), f"{name}.bias") if bias else None
        self.last_p: np.ndarray | None = None

    def parameters(self) -> list[Parameter]:
        params = [self.weight]
        if self.bias is not None:
            params.append(self.bias)
        return params

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())


def pool_time(x) -> Tensor:
    """Average an [F, T] matrix over the time axis to an [F] vector."""
    t = as_tensor(x)
    if t.data.ndim != 2:
        raise ValueError(f"pool_time expects an [F, T] matrix, got {t.data.shape}")
    if t.data.size == 0:
        raise ValueError("pool_time: empty matrix")
    return tensor_mean(t, axis=1)


def bin_logits(x_bar, layer: FefaLayer) -> Tensor:
    """Per-bin logits from the pooled vector through the private-bin weights."""
    xb = as_tensor(x_bar)
    if xb.data.shape[-1] != layer.n_bins:
        raise ValueError(
            f"bin_logits length mismatch: pooled {xb.data.shape} vs layer {layer.n_bins} bins"
        )
    if layer.input_dependent:
        logits = mul(layer.weight.tensor, xb)
    else:
        base = layer.weight.tensor
        logits = add(base, np.zeros_like(xb.data)) if xb.data.ndim > 1 else base
    if layer.bias is not None:
        logits = add(logits, layer.bias.tensor)
    return logits


def softmax_bins(logits) -> Tensor:
    """Numerically stable softmax along the last axis."""
    t = as_tensor(logits)
    if not np.all(np.isfinite(t.data)):
        raise ValueError("softmax_bins requires finite logits")
    z = t.data - t.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * p).sum(axis=-1, keepdims=True)
        accumulate_grad(t, p * (g - dot))

    return make_op(p, (t,), backward)


def _attend(x, layer: FefaLayer, pooled: Tensor, p_shape, record: bool) -> Tensor:
    p = softmax_bins(bin_logits(pooled, layer))
    if record:
        layer.last_p = p.data.copy()
    return mul(reshape(p, p_shape), x)


def fefa_forward(x, layer: FefaLayer, record: bool = True) -> Tensor:
    """Rescale each frequency row of an [F, T] matrix by its attention weight.

    The per-bin probability is broadcast across time, so the output keeps
    the input's shape.  ``record=False`` skips the last_p diagnostic write
    (needed when one frozen layer serves concurrent callers).
    """
    t = as_tensor(x)
    if t.data.ndim != 2:
        raise ValueError(f"fefa_forward expects an [F, T] matrix, got {t.data.shape}")
    if t.data.shape[0] != layer.n_bins:
        raise ValueError(
            f"fefa_forward bin mismatch: input {t.data.shape} vs layer {layer.n_bins} bins"
        )
    if not np.all(np.isfinite(t.data)):
        raise ValueError("fefa_forward requires finite input")
    return _attend(t, layer, pool_time(t), (layer.n_bins, 1), record)


def fefa_forward_hidden(h, layer: FefaLayer, record: bool = True) -> Tensor:
    """Attend over the frequency axis of a hidden [C, F', T'] map.

    Pooling averages over channels and time per frequency index; the
    probabilities multiply every channel and frame at that index.  Also
    accepts batched [N, C, F', T'] maps with one probability row per item.
    """
    t = as_tensor(h)
    if t.data.ndim == 3:
        f = t.data.shape[1]
        if f != layer.n_bins:
            raise ValueError(
                f"fefa_forward_hidden bin mismatch: map {t.data.shape} vs layer {layer.n_bins} bins"
            )
        pooled = pool_time(tensor_mean(t, axis=0))
        return _attend(t, layer, pooled, (1, f, 1), record)
    if t.data.ndim == 4:
        n, _, f, _ = t.data.shape
        if f != layer.n_bins:
            raise ValueError(
                f"fefa_forward_hidden bin mismatch: map {t.data.shape} vs layer {layer.n_bins} bins"
            )
        pooled = tensor_mean(tensor_mean(t, axis=1), axis=2)
        return _attend(t, layer, pooled, (n, 1, f, 1), record)
    raise ValueError(
        f"fefa_forward_hidden expects [C,F,T] or [N,C,F,T], got {t.data.shape}"
    )


def attention_map(x, layer: FefaLayer) -> tuple[np.ndarray, np.ndarray]:
    """Pure diagnostic pass: (p, m) with m_i = p_i * xbar_i; no state writes."""
    detached = Tensor(as_tensor(x).data)
    pooled = pool_time(detached)
    p = softmax_bins(bin_logits(pooled, layer)).data
    return p, p * pooled.data


def write_attention_csv(path, p: np.ndarray, m: np.ndarray, sample_rate: int, nfft: int):
    """CSV of (bin_index, center_frequency_hz, p, m) for overlay plotting."""
    p = np.asarray(p, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if p.shape != m.shape or p.ndim != 1:
        raise ValueError(f"p and m must be equal-length vectors, got {p.shape} and {m.shape}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write("bin_index,center_frequency_hz,p,m\n")
        for i in range(p.size):
            freq = i * sample_rate / nfft
            f.write(f"{i},{freq:.9g},{p[i]:.17g},{m[i]:.17g}\n")


def read_attention_csv(path) -> tuple[np.ndarray, np.ndarray]:
    ps, ms = [], []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != "bin_index,center_frequency_hz,p,m":
            raise ValueError(f"unexpected attention CSV header: {header!r}")
        for line in f:
            parts = line.strip().split(",")
            if len(parts) == 4:
                ps.append(float(parts[2]))
                ms.append(float(parts[3]))
    return np.asarray(ps), np.asarray(ms)
