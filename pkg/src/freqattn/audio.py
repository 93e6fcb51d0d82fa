"""Waveform handling, magnitude spectrograms, and SNR-exact noise injection.

The standard pipeline frames 16 kHz mono audio into 25 ms Hamming windows
advanced by 10 ms, zero-pads to a 512-point FFT, and keeps the 257
magnitude bins.  Noise is scaled against the realized noise sample's power
so the measured SNR equals the requested SNR exactly.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PCM16_SCALE = 32768.0


@dataclass(frozen=True)
class Waveform:
    """Mono audio: dimensionless sample amplitudes at a fixed rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("waveform must be a non-empty 1-D sample array")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class SpectrogramConfig:
    frame_len_ms: float = 25.0
    hop_ms: float = 10.0
    nfft: int = 512


@dataclass(frozen=True)
class Spectrogram:
    """Non-negative magnitude matrix, frequency bins by frames."""

    values: np.ndarray
    sample_rate: int
    frame_len_ms: float
    hop_ms: float
    nfft: int

    @property
    def bin_count(self) -> int:
        return self.values.shape[0]

    @property
    def frame_count(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class NoiseSpec:
    """Additive synthetic noise request: distribution plus target SNR in dB."""

    distribution: str
    snr_db: float

    def __post_init__(self):
        if self.distribution not in ("gaussian", "uniform"):
            raise ValueError(
                f"unsupported noise distribution: {self.distribution!r} "
                "(expected 'gaussian' or 'uniform')"
            )
        if not np.isfinite(self.snr_db):
            raise ValueError(f"snr_db must be finite, got {self.snr_db}")


def _win_hop_samples(sample_rate: int, frame_len_ms: float, hop_ms: float) -> tuple[int, int]:
    if frame_len_ms <= 0:
        raise ValueError(f"frame_len_ms must be positive, got {frame_len_ms}")
    if not 0 < hop_ms <= frame_len_ms:
        raise ValueError(f"hop_ms must be in (0, frame_len_ms], got {hop_ms}")
    win = int(round(sample_rate * frame_len_ms / 1000.0))
    hop = int(round(sample_rate * hop_ms / 1000.0))
    if win < 1 or hop < 1:
        raise ValueError("frame or hop shorter than one sample")
    return win, hop


def frame_signal(w: Waveform, frame_len_ms: float, hop_ms: float) -> np.ndarray:
    """Slice a waveform into [T, win] frames; a trailing partial frame is dropped.

    Frame k starts at sample k*hop; T = floor((N - win)/hop) + 1.
    """
    win, hop = _win_hop_samples(w.sample_rate, frame_len_ms, hop_ms)
    n = w.samples.size
    if n < win:
        raise ValueError(
            f"utterance too short: {n} samples < one {win}-sample frame"
        )
    frames = np.lib.stride_tricks.sliding_window_view(w.samples, win)[::hop]
    return frames.copy()


def spectrogram(w: Waveform, cfg: SpectrogramConfig = SpectrogramConfig()) -> Spectrogram:
    """Hamming-windowed magnitude spectrogram with nfft/2 + 1 frequency bins."""
    win, _ = _win_hop_samples(w.sample_rate, cfg.frame_len_ms, cfg.hop_ms)
    if cfg.nfft < win:
        raise ValueError(f"nfft={cfg.nfft} smaller than the {win}-sample window")
    frames = frame_signal(w, cfg.frame_len_ms, cfg.hop_ms)
    windowed = frames * np.hamming(win)
    mags = np.abs(np.fft.rfft(windowed, n=cfg.nfft, axis=1)).T
    return Spectrogram(
        values=mags,
        sample_rate=w.sample_rate,
        frame_len_ms=cfg.frame_len_ms,
        hop_ms=cfg.hop_ms,
        nfft=cfg.nfft,
    )


def normalize_spectrogram(s: Spectrogram) -> np.ndarray:
    """Standardize each frequency row to zero mean, unit variance over time.

    A variance floor of 1e-8 keeps constant rows finite (they map to zeros).
    """
    v = s.values
    if v.shape[1] < 2:
        raise ValueError(f"normalization needs at least 2 frames, got {v.shape[1]}")
    mu = v.mean(axis=1, keepdims=True)
    var = v.var(axis=1, keepdims=True)
    return (v - mu) / np.sqrt(np.maximum(var, 1e-8))


def signal_power(samples: np.ndarray) -> float:
    return float(np.mean(np.square(samples)))


def add_noise_components(
    w: Waveform, spec: NoiseSpec, seed: int
) -> tuple[Waveform, np.ndarray]:
    """Return (noisy waveform, scaled noise) at exactly the requested SNR.

    The scale is computed against the measured power of the drawn noise
    sample, not the distribution's nominal variance.
    """
    p_signal = signal_power(w.samples)
    if p_signal <= 0.0:
        raise ValueError("cannot set SNR on silent signal")
    rng = np.random.default_rng(seed)
    if spec.distribution == "gaussian":
        noise = rng.standard_normal(w.samples.size)
    else:
        noise = rng.uniform(-1.0, 1.0, w.samples.size)
    p_noise = signal_power(noise)
    alpha = np.sqrt(p_signal / (p_noise * 10.0 ** (spec.snr_db / 10.0)))
    scaled = alpha * noise
    return Waveform(w.samples + scaled, w.sample_rate), scaled


def add_noise(w: Waveform, spec: NoiseSpec, seed: int) -> Waveform:
    """Additive noise at an exact SNR; see add_noise_components."""
    return add_noise_components(w, spec, seed)[0]


def measured_snr_db(signal: np.ndarray, noise: np.ndarray) -> float:
    return 10.0 * np.log10(signal_power(signal) / signal_power(noise))


# WAV + CSV interchange ----------------------------------------------------


def float_to_pcm16(samples: np.ndarray) -> np.ndarray:
    scaled = np.round(np.asarray(samples, dtype=np.float64) * PCM16_SCALE)
    return np.clip(scaled, -32768, 32767).astype(np.int16)


def pcm16_to_float(samples: np.ndarray) -> np.ndarray:
    return np.asarray(samples, dtype=np.float64) / PCM16_SCALE


def read_wav(path) -> Waveform:
    """Read a mono PCM16 RIFF/WAVE file; anything else is rejected."""
    with wave.open(str(path), "rb") as f:
        if f.getcomptype() != "NONE":
            raise ValueError(f"{path}: compressed WAV ({f.getcomptype()}) not supported")
        if f.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono audio, got {f.getnchannels()} channels")
        if f.getsampwidth() != 2:
            raise ValueError(
                f"{path}: expected 16-bit PCM, got {8 * f.getsampwidth()}-bit samples"
            )
        raw = f.readframes(f.getnframes())
        rate = f.getframerate()
    pcm = np.frombuffer(raw, dtype="<i2")
    if pcm.size == 0:
        raise ValueError(f"{path}: empty WAV file")
    return Waveform(pcm16_to_float(pcm), rate)


def write_wav(path, w: Waveform):
    pcm = float_to_pcm16(w.samples)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(w.sample_rate)
        f.writeframes(pcm.astype("<i2").tobytes())


def write_spectrogram_csv(path, matrix: np.ndarray):
    """One frequency row per line, DC first, 9 significant digits."""
    m = np.asarray(matrix, dtype=np.float64)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for row in m:
            f.write(",".join(f"{v:.9g}" for v in row))
            f.write("\n")


def read_spectrogram_csv(path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    return np.asarray(rows, dtype=np.float64)
