"""Deterministic synthetic speaker corpus: harmonic voices through formants.

Speaker identity lives in the fundamental frequency, formant layout, and
spectral rolloff; utterance-to-utterance variety comes from seeded pitch
drift and amplitude modulation.  Everything derives from integer seeds, so
a corpus is reproducible down to the PCM16 sample values it stores.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import Waveform, float_to_pcm16, pcm16_to_float, read_wav, write_wav
from .seeding import substream_seed

F0_RANGE = (80.0, 300.0)
FORMANT_RANGE = (300.0, 3500.0)
FORMANT_BANDWIDTH_RANGE = (60.0, 400.0)
FORMANT_GAIN_RANGE = (0.5, 2.0)
ROLLOFF_RANGE = (3.0, 9.0)
JITTER_RANGE = (0.003, 0.02)
AM_DEPTH = 0.05
PEAK_LEVEL = 0.5


@dataclass(frozen=True)
class SpeakerProfile:
    """Voice description: pitch, formants (center, bandwidth, gain), rolloff."""

    f0: float
    formants: tuple[tuple[float, float, float], ...]
    harmonic_rolloff: float
    jitter: float

    def __post_init__(self):
        if not 60.0 <= self.f0 <= 400.0:
            raise ValueError(f"f0 out of range [60, 400]: {self.f0}")
        if not 0.0 <= self.jitter <= 0.1:
            raise ValueError(f"jitter out of range [0, 0.1]: {self.jitter}")
        for center, bandwidth, gain in self.formants:
            if center <= 0 or bandwidth <= 0 or gain <= 0:
                raise ValueError("formant parameters must be positive")


def sample_profile(speaker_seed: int) -> SpeakerProfile:
    """Draw a voice from fixed ranges; distinct seeds give distinct voices."""
    rng = np.random.default_rng(speaker_seed)
    f0 = rng.uniform(*F0_RANGE)
    centers = np.sort(rng.uniform(*FORMANT_RANGE, size=3))
    formants = tuple(
        (
            float(c),
            float(rng.uniform(*FORMANT_BANDWIDTH_RANGE)),
            float(rng.uniform(*FORMANT_GAIN_RANGE)),
        )
        for c in centers
    )
    rolloff = rng.uniform(*ROLLOFF_RANGE)
    jitter = rng.uniform(*JITTER_RANGE)
    return SpeakerProfile(float(f0), formants, float(rolloff), float(jitter))


def _formant_gain(freq_hz: np.ndarray | float, profile: SpeakerProfile) -> np.ndarray:
    """Sum of Lorentzian resonance curves plus a small floor."""
    f = np.asarray(freq_hz, dtype=np.float64)
    gain = np.full_like(f, 1e-3)
    for center, bandwidth, peak in profile.formants:
        gain = gain + peak * bandwidth**2 / ((f - center) ** 2 + bandwidth**2)
    return gain


def harmonic_amplitudes(profile: SpeakerProfile, sample_rate: int) -> np.ndarray:
    """Amplitude of each partial k*f0 below Nyquist: rolloff times formants."""
    nyquist = sample_rate / 2.0
    n_partials = int(np.floor((nyquist - 1.0) / profile.f0))
    k = np.arange(1, n_partials + 1, dtype=np.float64)
    rolloff = 10.0 ** (-profile.harmonic_rolloff * np.log2(k) / 20.0)
    return rolloff * _formant_gain(k * profile.f0, profile)


def synth_utterance(
    profile: SpeakerProfile,
    duration_s: float,
    utt_seed: int,
    sample_rate: int = 16000,
) -> Waveform:
    """One peak-normalized utterance of the given voice.

    The harmonic stack follows f0 * (1 + jitter * drift(t)); a slow seeded
    amplitude modulation adds utterance-level variety.
    """
    if duration_s < 0.5:
        raise ValueError(f"duration must be at least 0.5 s, got {duration_s}")
    rng = np.random.default_rng(utt_seed)
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate

    drift_hz = rng.uniform(1.5, 4.0)
    drift_phase = rng.uniform(0.0, 2.0 * np.pi)
    drift = np.sin(2.0 * np.pi * drift_hz * t + drift_phase)
    inst_f0 = profile.f0 * (1.0 + profile.jitter * drift)
    phase = 2.0 * np.pi * np.cumsum(inst_f0) / sample_rate

    amps = harmonic_amplitudes(profile, sample_rate)
    x = np.zeros(n)
    for k, a in enumerate(amps, start=1):
        x += a * np.sin(k * phase)

    am_hz = rng.uniform(2.0, 6.0)
    am_phase = rng.uniform(0.0, 2.0 * np.pi)
    x *= 1.0 + AM_DEPTH * np.sin(2.0 * np.pi * am_hz * t + am_phase)

    x *= PEAK_LEVEL / np.max(np.abs(x))
    return Waveform(x, sample_rate)


@dataclass(frozen=True)
class CorpusUtterance:
    speaker: str
    utt_id: str
    split: str
    pcm: np.ndarray  # int16, the stored representation

    def waveform(self, sample_rate: int) -> Waveform:
        return Waveform(pcm16_to_float(self.pcm), sample_rate)


class Corpus:
    """A fixed-duration synthetic corpus with disjoint train/test splits."""

    def __init__(self, sample_rate: int, utterances: list[CorpusUtterance]):
        self.sample_rate = sample_rate
        self.utterances = list(utterances)

    def split(self, name: str) -> list[CorpusUtterance]:
        return [u for u in self.utterances if u.split == name]

    def speakers(self) -> list[str]:
        return sorted({u.speaker for u in self.utterances})

    def speaker_index(self) -> dict[str, int]:
        return {spk: i for i, spk in enumerate(self.speakers())}

    def utts_by_speaker(self, split_name: str) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for u in self.split(split_name):
            out.setdefault(u.speaker, []).append(u.utt_id)
        return out

    def waveform(self, utt_id: str) -> Waveform:
        for u in self.utterances:
            if u.utt_id == utt_id:
                return u.waveform(self.sample_rate)
        raise KeyError(f"unknown utterance id: {utt_id}")

    def save(self, dirpath):
        """Write PCM16 WAVs plus a JSON manifest under dirpath."""
        d = Path(dirpath)
        (d / "wav").mkdir(parents=True, exist_ok=True)
        entries = []
        for u in self.utterances:
            rel = f"wav/{u.utt_id}.wav"
            write_wav(d / rel, u.waveform(self.sample_rate))
            entries.append(
                {"speaker": u.speaker, "utt": u.utt_id, "path": rel, "split": u.split}
            )
        manifest = {"sample_rate": self.sample_rate, "utterances": entries}
        (d / "manifest.json").write_text(
            json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, dirpath) -> "Corpus":
        d = Path(dirpath)
        manifest = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
        utterances = []
        for e in manifest["utterances"]:
            w = read_wav(d / e["path"])
            if w.sample_rate != manifest["sample_rate"]:
                raise ValueError(f"{e['path']}: sample rate differs from manifest")
            utterances.append(
                CorpusUtterance(
                    speaker=e["speaker"],
                    utt_id=e["utt"],
                    split=e["split"],
                    pcm=float_to_pcm16(w.samples),
                )
            )
        return cls(manifest["sample_rate"], utterances)


def build_corpus(
    n_speakers: int,
    utts_per_speaker: int,
    duration_s: float,
    master_seed: int,
    sample_rate: int = 16000,
    train_fraction: float = 0.8,
) -> Corpus:
    """Synthesize a labeled corpus, split per speaker into train and test.

    Audio is quantized to PCM16 at synthesis time so the in-memory corpus
    matches a disk round trip bit for bit.
    """
    if n_speakers < 2:
        raise ValueError(f"need at least 2 speakers, got {n_speakers}")
    if utts_per_speaker < 2:
        raise ValueError("need at least 2 utterances per speaker")
    n_train = int(round(utts_per_speaker * train_fraction))
    n_train = min(max(n_train, 1), utts_per_speaker - 1)
    utterances = []
    for s in range(n_speakers):
        speaker = f"spk{s:03d}"
        profile = sample_profile(substream_seed(master_seed, "corpus", "speaker", s))
        for u in range(utts_per_speaker):
            utt_id = f"{speaker}_u{u:02d}"
            wav = synth_utterance(
                profile,
                duration_s,
                substream_seed(master_seed, "corpus", "utt", s, u),
                sample_rate,
            )
            split_name = "train" if u < n_train else "test"
            utterances.append(
                CorpusUtterance(speaker, utt_id, split_name, float_to_pcm16(wav.samples))
            )
    return Corpus(sample_rate, utterances)
