"""Experiment plumbing shared by the CLI commands and the test suite.

All randomness flows from the experiment's master seed through named
substreams (corpus, init, batching, noise, trials), so a rerun with the
same config reproduces every artifact bit for bit.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from .audio import (
    NoiseSpec,
    SpectrogramConfig,
    Waveform,
    add_noise,
    normalize_spectrogram,
    spectrogram,
)
from .backbones import BackboneConfig, SpeakerModel, build_model, train_epoch_stats
from .config import ExperimentConfig
from .metrics import Trial, compute_eer, cosine_score, make_trials
from .optim import Adam
from .seeding import substream_seed
from .synth import Corpus, build_corpus

STANDARD_FRONTEND = SpectrogramConfig(frame_len_ms=25.0, hop_ms=10.0, nfft=512)


def standard_bins() -> int:
    return STANDARD_FRONTEND.nfft // 2 + 1


def utterance_features(w: Waveform) -> np.ndarray:
    """Waveform to the normalized magnitude spectrogram the models consume."""
    return normalize_spectrogram(spectrogram(w, STANDARD_FRONTEND))


def corpus_for(cfg: ExperimentConfig) -> Corpus:
    p = cfg.corpus
    return build_corpus(
        p.n_speakers,
        p.utts_per_speaker,
        p.duration_s,
        cfg.seed,
        p.sample_rate,
        p.train_fraction,
    )


def training_features(corpus: Corpus) -> list[tuple[np.ndarray, int]]:
    index = corpus.speaker_index()
    return [
        (utterance_features(u.waveform(corpus.sample_rate)), index[u.speaker])
        for u in corpus.split("train")
    ]


def noise_seed_for(master_seed: int, utt_id: str, noise: NoiseSpec) -> int:
    return substream_seed(
        master_seed, "noise", utt_id, noise.distribution, f"{noise.snr_db:g}"
    )


def compute_embeddings(
    model: SpeakerModel,
    corpus: Corpus,
    utt_ids: list[str],
    noise: NoiseSpec | None,
    master_seed: int,
    workers: int = 1,
) -> dict[str, np.ndarray]:
    """Frozen-model embeddings per utterance, with optional pre-spectrogram noise."""

    def one(utt_id: str) -> np.ndarray:
        w = corpus.waveform(utt_id)
        if noise is not None:
            w = add_noise(w, noise, noise_seed_for(master_seed, utt_id, noise))
        return model.embed_utterance(utterance_features(w))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            embeddings = list(pool.map(one, utt_ids))
    else:
        embeddings = [one(u) for u in utt_ids]
    return dict(zip(utt_ids, embeddings))


def score_trials(
    embeddings: dict[str, np.ndarray], trials: list[Trial]
) -> list[tuple[int, float]]:
    return [
        (t.label, cosine_score(embeddings[t.utt_a], embeddings[t.utt_b]))
        for t in trials
    ]


def test_trials_for(cfg: ExperimentConfig, corpus: Corpus) -> list[Trial]:
    return make_trials(
        corpus.utts_by_speaker("test"),
        cfg.trials.n_target,
        cfg.trials.n_nontarget,
        substream_seed(cfg.seed, "trials"),
    )


def evaluate_condition(
    model: SpeakerModel,
    corpus: Corpus,
    trials: list[Trial],
    noise: NoiseSpec | None,
    master_seed: int,
    workers: int = 1,
) -> tuple[float, float, list[tuple[int, float]]]:
    """(eer, threshold, scores) for one clean or noisy evaluation condition."""
    utt_ids = sorted({t.utt_a for t in trials} | {t.utt_b for t in trials})
    embeddings = compute_embeddings(model, corpus, utt_ids, noise, master_seed, workers)
    scores = score_trials(embeddings, trials)
    eer, thr = compute_eer(scores)
    return eer, thr, scores


# training ------------------------------------------------------------------


def save_model_checkpoint(
    dirpath,
    model: SpeakerModel,
    optimizer: Adam,
    epoch: int,
    cfg: ExperimentConfig | None = None,
):
    arrays = model.state_arrays() | optimizer.state_arrays()
    meta = {"epoch": epoch, "n_speakers": model.n_speakers, "seed": model.seed}
    ckpt_io.save_arrays(dirpath, arrays, meta)
    if cfg is not None:
        Path(dirpath, "config.json").write_text(
            json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )


def load_model_checkpoint(dirpath) -> tuple[SpeakerModel, dict, dict]:
    """Rebuild the model a checkpoint describes; returns (model, arrays, meta)."""
    arrays, meta = ckpt_io.load_arrays(dirpath)
    cfg_path = Path(dirpath, "config.json")
    if not cfg_path.is_file():
        raise ValueError(f"checkpoint {dirpath} has no config.json")
    raw = json.loads(cfg_path.read_text(encoding="utf-8"))
    backbone = BackboneConfig.from_dict(raw["backbone"])
    model = build_model(backbone, int(meta["n_speakers"]), int(meta["seed"]))
    model.load_state_arrays(arrays)
    return model, arrays, meta


def checkpoint_backbone_dict(dirpath) -> dict:
    raw = json.loads(Path(dirpath, "config.json").read_text(encoding="utf-8"))
    return raw["backbone"]


def train_model(
    cfg: ExperimentConfig,
    corpus: Corpus,
    ckpt_dir=None,
    log_path=None,
    resume: bool = True,
) -> tuple[SpeakerModel, Adam, list[dict]]:
    """Train per config; optionally checkpoint every epoch and log JSON lines.

    With ``resume`` and an existing checkpoint, training continues from the
    stored epoch and reproduces the uninterrupted run exactly.
    """
    data = training_features(corpus)
    n_speakers = len(corpus.speakers())
    model = build_model(cfg.backbone, n_speakers, cfg.seed)
    optimizer = Adam(model.parameters(), lr=cfg.training.lr)
    start_epoch = 0
    if ckpt_dir is not None and resume and ckpt_io.checkpoint_exists(ckpt_dir):
        arrays, meta = ckpt_io.load_arrays(ckpt_dir)
        stored = checkpoint_backbone_dict(ckpt_dir)
        if stored != cfg.backbone.to_dict():
            raise ValueError(
                f"checkpoint architecture {stored} does not match config "
                f"{cfg.backbone.to_dict()}"
            )
        model.load_state_arrays(arrays)
        optimizer.load_state_arrays(arrays)
        start_epoch = int(meta["epoch"])
    history = []
    log_file = None
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        log_file = open(log_path, "a", encoding="utf-8")
    try:
        for epoch in range(start_epoch, cfg.training.epochs):
            loss, acc = train_epoch_stats(
                model,
                data,
                cfg.training.lr,
                cfg.training.batch_size,
                substream_seed(cfg.seed, "batching", epoch),
                optimizer,
            )
            row = {"epoch": epoch, "loss": loss, "train_accuracy": acc}
            history.append(row)
            if log_file is not None:
                log_file.write(json.dumps(row, sort_keys=True) + "\n")
                log_file.flush()
            if ckpt_dir is not None:
                save_model_checkpoint(ckpt_dir, model, optimizer, epoch + 1, cfg)
    finally:
        if log_file is not None:
            log_file.close()
    if ckpt_dir is not None and not ckpt_io.checkpoint_exists(ckpt_dir):
        # epochs == 0: still leave a loadable (untrained) checkpoint behind
        save_model_checkpoint(ckpt_dir, model, optimizer, 0, cfg)
    return model, optimizer, history
