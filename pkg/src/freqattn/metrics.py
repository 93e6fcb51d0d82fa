"""Trial scoring and equal-error-rate evaluation for speaker verification.

Scores are (label, score) pairs with label 1 for target (same speaker) and
0 for nontarget.  A score above the decision threshold means accept.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

TARGET = 1
NONTARGET = 0


@dataclass(frozen=True)
class Trial:
    utt_a: str
    utt_b: str
    label: int

    def __post_init__(self):
        if self.label not in (TARGET, NONTARGET):
            raise ValueError(f"trial label must be 0 or 1, got {self.label}")


def cosine_score(e1: np.ndarray, e2: np.ndarray) -> float:
    """Cosine similarity of two embeddings, in [-1, 1]."""
    a = np.asarray(e1, dtype=np.float64)
    b = np.asarray(e2, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine_score is undefined for a zero vector")
    return float(np.dot(a, b) / (na * nb))


def _split_scores(scores) -> tuple[np.ndarray, np.ndarray]:
    tar = np.array([s for label, s in scores if label == TARGET], dtype=np.float64)
    non = np.array([s for label, s in scores if label == NONTARGET], dtype=np.float64)
    if tar.size == 0 or non.size == 0:
        raise ValueError("EER undefined: need at least one target and one nontarget")
    return tar, non


def _roc_points(tar: np.ndarray, non: np.ndarray):
    """(threshold, FAR, FRR) triples over all distinct scores plus sentinels.

    FAR(t) is the fraction of nontargets with score >= t; FRR(t) the
    fraction of targets with score < t.  Both are step functions of t,
    evaluated here at every distinct score and at -inf/+inf.
    """
    thresholds = np.concatenate(
        ([-np.inf], np.unique(np.concatenate([tar, non])), [np.inf])
    )
    tar_sorted = np.sort(tar)
    non_sorted = np.sort(non)
    far = 1.0 - np.searchsorted(non_sorted, thresholds, side="left") / non.size
    frr = np.searchsorted(tar_sorted, thresholds, side="left") / tar.size
    return thresholds, far, frr


def compute_eer(scores) -> tuple[float, float]:
    """Equal error rate of (label, score) pairs plus its threshold.

    Sweeps every distinct score as a threshold and linearly interpolates
    between the two adjacent ROC points where FAR - FRR changes sign.
    Returns (eer fraction in [0, 1], threshold).
    """
    tar, non = _split_scores(scores)
    thresholds, far, frr = _roc_points(tar, non)
    diff = far - frr
    k = int(np.flatnonzero(diff >= 0)[-1])
    if k == len(diff) - 1:
        return float(far[k]), float(thresholds[k])
    if diff[k] == 0.0:
        return float(far[k]), float(thresholds[k])
    t = diff[k] / (diff[k] - diff[k + 1])
    eer = far[k] + t * (far[k + 1] - far[k])
    lo, hi = thresholds[k], thresholds[k + 1]
    if np.isfinite(lo) and np.isfinite(hi):
        thr = lo + t * (hi - lo)
    else:
        thr = lo if np.isfinite(lo) else hi
    return float(eer), float(thr)


def det_points(scores) -> list[tuple[float, float]]:
    """(FAR, FRR) per distinct threshold, from (1, 0) to (0, 1)."""
    tar, non = _split_scores(scores)
    _, far, frr = _roc_points(tar, non)
    return list(zip(far.tolist(), frr.tolist()))


def make_trials(
    utts_by_speaker: dict[str, list[str]],
    n_target: int,
    n_nontarget: int,
    seed: int,
) -> list[Trial]:
    """Sample a verification trial list without replacement.

    Target trials pair two distinct utterances of one speaker; nontarget
    trials pair utterances of different speakers.  Sampling is uniform over
    the candidate pools and deterministic for a given seed.
    """
    speakers = sorted(utts_by_speaker)
    if len(speakers) < 2:
        raise ValueError("make_trials needs at least 2 speakers")
    for spk in speakers:
        if len(utts_by_speaker[spk]) < 2:
            raise ValueError(f"speaker {spk} has fewer than 2 utterances")
    target_pool = []
    for spk in speakers:
        utts = sorted(utts_by_speaker[spk])
        for i in range(len(utts)):
            for j in range(i + 1, len(utts)):
                target_pool.append((utts[i], utts[j]))
    nontarget_pool = []
    for si in range(len(speakers)):
        for sj in range(si + 1, len(speakers)):
            for ua in sorted(utts_by_speaker[speakers[si]]):
                for ub in sorted(utts_by_speaker[speakers[sj]]):
                    nontarget_pool.append((ua, ub))
    if n_target > len(target_pool):
        raise ValueError(
            f"requested {n_target} target trials but only {len(target_pool)} pairs exist"
        )
    if n_nontarget > len(nontarget_pool):
        raise ValueError(
            f"requested {n_nontarget} nontarget trials but only "
            f"{len(nontarget_pool)} pairs exist"
        )
    rng = np.random.default_rng(seed)
    trials = []
    for i in rng.choice(len(target_pool), size=n_target, replace=False):
        ua, ub = target_pool[int(i)]
        trials.append(Trial(ua, ub, TARGET))
    for i in rng.choice(len(nontarget_pool), size=n_nontarget, replace=False):
        ua, ub = nontarget_pool[int(i)]
        trials.append(Trial(ua, ub, NONTARGET))
    return trials


# file interchange -----------------------------------------------------------


def write_trials(path, trials: list[Trial]):
    """One trial per line: 'label utt_a utt_b' with label 1 (target) or 0."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for t in trials:
            f.write(f"{t.label} {t.utt_a} {t.utt_b}\n")


def read_trials(path) -> list[Trial]:
    trials = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"bad trial line: {line!r}")
            trials.append(Trial(parts[1], parts[2], int(parts[0])))
    return trials


def write_scores_csv(path, scores):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write("label,score\n")
        for label, score in scores:
            f.write(f"{int(label)},{score:.17g}\n")


def read_scores_csv(path) -> list[tuple[int, float]]:
    scores = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != "label,score":
            raise ValueError(f"unexpected scores CSV header: {header!r}")
        for line in f:
            line = line.strip()
            if line:
                label, score = line.split(",")
                scores.append((int(label), float(score)))
    return scores
