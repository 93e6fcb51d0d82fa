"""Independent reference implementations used to check the package.

Everything here is deliberately naive (nested loops, direct sums, dense
sweeps) and shares no code with the implementations under test.
"""

from __future__ import annotations

import numpy as np


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Scale-relative max deviation: ||a-b||_inf over max(||a||_inf, ||b||_inf)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0), 1e-8)
    return float(np.max(np.abs(a - b), initial=0.0) / scale)


def finite_diff_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function f at array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        f_pos = float(f())
        x[idx] = orig - h
        f_neg = float(f())
        x[idx] = orig
        g[idx] = (f_pos - f_neg) / (2.0 * h)
        it.iternext()
    return g


def conv2d_loop(
    x: np.ndarray, w: np.ndarray, stride: int = 1, padding: int = 0
) -> np.ndarray:
    """Six-nested-loop cross-correlation for [C,H,W] x [O,C,kh,kw]."""
    c, h, wd = x.shape
    o, cw, kh, kw = w.shape
    assert cw == c
    xp = np.zeros((c, h + 2 * padding, wd + 2 * padding))
    xp[:, padding : padding + h, padding : padding + wd] = x
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((o, ho, wo))
    for oc in range(o):
        for i in range(ho):
            for j in range(wo):
                acc = 0.0
                for ic in range(c):
                    for a in range(kh):
                        for b in range(kw):
                            acc += w[oc, ic, a, b] * xp[ic, i * stride + a, j * stride + b]
                out[oc, i, j] = acc
    return out


def dft_direct(frame: np.ndarray, nfft: int) -> np.ndarray:
    """O(N^2) DFT of a zero-padded frame; returns all nfft complex bins."""
    x = np.zeros(nfft, dtype=np.float64)
    x[: frame.size] = frame
    n = np.arange(nfft)
    out = np.empty(nfft, dtype=np.complex128)
    for k in range(nfft):
        out[k] = np.sum(x * np.exp(-2j * np.pi * k * n / nfft))
    return out


def spectrogram_direct(
    samples: np.ndarray, sample_rate: int, frame_ms: float, hop_ms: float, nfft: int
) -> np.ndarray:
    """Magnitude spectrogram via explicit framing and the direct DFT."""
    win = int(round(sample_rate * frame_ms / 1000.0))
    hop = int(round(sample_rate * hop_ms / 1000.0))
    window = np.hamming(win)
    cols = []
    start = 0
    while start + win <= samples.size:
        frame = samples[start : start + win] * window
        cols.append(np.abs(dft_direct(frame, nfft)[: nfft // 2 + 1]))
        start += hop
    return np.stack(cols, axis=1)


def eer_dense_sweep(scores, n_thresholds: int = 100_000) -> float:
    """EER via a dense threshold grid; accepts (label, score) pairs."""
    tar = np.array([s for l, s in scores if l == 1], dtype=np.float64)
    non = np.array([s for l, s in scores if l == 0], dtype=np.float64)
    lo = min(tar.min(), non.min()) - 1e-6
    hi = max(tar.max(), non.max()) + 1e-6
    grid = np.linspace(lo, hi, n_thresholds)
    far = (non[None, :] >= grid[:, None]).mean(axis=1)
    frr = (tar[None, :] < grid[:, None]).mean(axis=1)
    k = int(np.argmin(np.abs(far - frr)))
    return float((far[k] + frr[k]) / 2.0)


def softmax_longdouble(logits: np.ndarray) -> np.ndarray:
    """Softmax in extended precision after max subtraction."""
    z = np.asarray(logits, dtype=np.longdouble)
    z = z - z.max()
    e = np.exp(z)
    return (e / e.sum()).astype(np.float64)
