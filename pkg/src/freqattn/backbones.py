"""Desk-scale speaker-embedding backbones with optional frequency attention.

Three families share one contract: a normalized [F, T] spectrogram goes in,
a fixed-size embedding and per-speaker logits come out.

* vgg      - three conv/BN/ReLU/maxpool stages, then the embedding FC.
* resnet   - conv stem plus three stages of residual blocks; every stage
             halves the frequency (and time) dimension with stride 2.
* seresnet - resnet with a squeeze-and-excitation gate in each block.

Attention placement (``fefa_mode``): "none"; "single" puts one layer before
the input; "multi" additionally inserts a layer in front of every stage
whose incoming frequency size differs from the last attended size, so there
is one layer per frequency-size change along the pipeline.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .attention import FefaLayer, fefa_forward_hidden
from .autograd import (
    Parameter,
    Tensor,
    add,
    as_tensor,
    mul,
    relu,
    reshape,
    sigmoid,
    tensor_mean,
)
from .layers import (
    BatchNorm2d,
    Conv2d,
    Linear,
    global_avg_pool,
    max_pool2d,
    softmax_cross_entropy,
)
from .optim import Adam
from .seeding import substream_seed

FAMILIES = ("vgg", "resnet", "seresnet")
FEFA_MODES = ("none", "single", "multi")


@dataclass
class BackboneConfig:
    family: str = "resnet"
    channel_widths: tuple[int, ...] = (16, 32, 64)
    block_counts: tuple[int, ...] = (2, 2, 2)
    embedding_dim: int = 128
    se_reduction: int = 4
    fefa_mode: str = "none"
    fefa_bias: bool = True
    fefa_input_dependent: bool = True
    input_bins: int = 257

    def __post_init__(self):
        self.channel_widths = tuple(int(c) for c in self.channel_widths)
        self.block_counts = tuple(int(b) for b in self.block_counts)
        if self.family not in FAMILIES:
            raise ValueError(f"unknown backbone family: {self.family!r}")
        if self.fefa_mode not in FEFA_MODES:
            raise ValueError(f"unknown fefa_mode: {self.fefa_mode!r}")
        if self.embedding_dim <= 0:
            raise ValueError("embedding_dim must be positive")
        if len(self.channel_widths) != len(self.block_counts):
            raise ValueError("channel_widths and block_counts must have equal length")
        if self.input_bins < 2:
            raise ValueError("input_bins must be at least 2")
        if self.family == "seresnet":
            for c in self.channel_widths:
                if c % self.se_reduction != 0:
                    raise ValueError(
                        f"se_reduction={self.se_reduction} must divide channel width {c}"
                    )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channel_widths"] = list(self.channel_widths)
        d["block_counts"] = list(self.block_counts)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BackboneConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown backbone config key(s): {sorted(unknown)}")
        return cls(**d)


def _conv_out(n: int, kernel: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - kernel) // stride + 1


def _pool_out(n: int, kernel: int = 2, stride: int = 2) -> int:
    return (n - kernel) // stride + 1


def se_block(u, fc1: Linear, fc2: Linear) -> Tensor:
    """Squeeze-and-excitation: gate channels by a pooled two-FC bottleneck.

    s = sigmoid(fc2(relu(fc1(mean over H,W)))); output[c] = s_c * u[c].
    """
    t = as_tensor(u)
    single = t.data.ndim == 3
    channels = t.data.shape[0] if single else t.data.shape[1]
    if fc1.weight.data.shape[0] != channels:
        raise ValueError(
            f"se_block channel mismatch: input has {channels} channels, "
            f"fc1 weight is {fc1.weight.data.shape}"
        )
    pooled = global_avg_pool(t)
    s = sigmoid(fc2(relu(fc1(pooled))))
    if single:
        gate = reshape(s, (channels, 1, 1))
    else:
        gate = reshape(s, (t.data.shape[0], channels, 1, 1))
    return mul(gate, t)


def temporal_average_pool(features) -> Tensor:
    """Mean over time then flatten channel x frequency: [C,F,T] -> [C*F]."""
    t = as_tensor(features)
    if t.data.ndim == 3:
        pooled = tensor_mean(t, axis=2)
        return reshape(pooled, (-1,))
    if t.data.ndim == 4:
        pooled = tensor_mean(t, axis=3)
        return reshape(pooled, (t.data.shape[0], -1))
    raise ValueError(f"temporal_average_pool expects 3-D or 4-D input, got {t.data.shape}")


class _VggStage:
    def __init__(self, name, in_ch, out_ch, rng):
        self.conv = Conv2d(f"{name}.conv", in_ch, out_ch, 3, 1, 1, rng)
        self.bn = BatchNorm2d(f"{name}.bn", out_ch)

    def __call__(self, x, training):
        return max_pool2d(relu(self.bn(self.conv(x), training)), 2)

    def parameters(self):
        return self.conv.parameters() + self.bn.parameters()

    def buffers(self):
        return self.bn.buffers()


class _ResBlock:
    def __init__(self, name, in_ch, out_ch, stride, se_reduction, rng):
        self.conv1 = Conv2d(f"{name}.conv1", in_ch, out_ch, 3, stride, 1, rng)
        self.bn1 = BatchNorm2d(f"{name}.bn1", out_ch)
        self.conv2 = Conv2d(f"{name}.conv2", out_ch, out_ch, 3, 1, 1, rng)
        self.bn2 = BatchNorm2d(f"{name}.bn2", out_ch)
        if stride != 1 or in_ch != out_ch:
            self.proj = Conv2d(f"{name}.proj", in_ch, out_ch, 1, stride, 0, rng)
            self.bnp = BatchNorm2d(f"{name}.bnp", out_ch)
        else:
            self.proj = None
            self.bnp = None
        if se_reduction:
            hidden = out_ch // se_reduction
            self.se_fc1 = Linear(f"{name}.se_fc1", out_ch, hidden, rng)
            self.se_fc2 = Linear(f"{name}.se_fc2", hidden, out_ch, rng)
        else:
            self.se_fc1 = None
            self.se_fc2 = None

    def __call__(self, x, training):
        y = relu(self.bn1(self.conv1(x), training))
        y = self.bn2(self.conv2(y), training)
        if self.se_fc1 is not None:
            y = se_block(y, self.se_fc1, self.se_fc2)
        shortcut = x if self.proj is None else self.bnp(self.proj(x), training)
        return relu(add(y, shortcut))

    def parameters(self):
        params = (
            self.conv1.parameters()
            + self.bn1.parameters()
            + self.conv2.parameters()
            + self.bn2.parameters()
        )
        if self.proj is not None:
            params += self.proj.parameters() + self.bnp.parameters()
        if self.se_fc1 is not None:
            params += self.se_fc1.parameters() + self.se_fc2.parameters()
        return params

    def buffers(self):
        bufs = self.bn1.buffers() + self.bn2.buffers()
        if self.bnp is not None:
            bufs += self.bnp.buffers()
        return bufs


class SpeakerModel:
    """A built backbone: attention layers, trunk, embedding FC, classifier."""

    def __init__(self, config: BackboneConfig, n_speakers: int, seed: int):
        if n_speakers < 2:
            raise ValueError(f"need at least 2 speakers, got {n_speakers}")
        self.config = config
        self.n_speakers = n_speakers
        self.seed = seed
        rng = np.random.default_rng(substream_seed(seed, "init"))

        cfg = config
        use_se = cfg.family == "seresnet"
        se_r = cfg.se_reduction if use_se else None

        # Attention layers first; they draw nothing from the rng, so the
        # trunk weights are identical across fefa modes for a fixed seed.
        self.fefa_input: FefaLayer | None = None
        if cfg.fefa_mode in ("single", "multi"):
            self.fefa_input = FefaLayer(
                cfg.input_bins, cfg.fefa_bias, cfg.fefa_input_dependent, "fefa.input"
            )

        n_stages = len(cfg.channel_widths)
        freq_before_stage = []
        f_cur = cfg.input_bins
        for k in range(n_stages):
            freq_before_stage.append(f_cur)
            if cfg.family == "vgg":
                f_cur = _pool_out(f_cur)
            else:
                f_cur = _conv_out(f_cur, 3, 2, 1)
        self.output_bins = f_cur

        self.fefa_pre_stage: list[FefaLayer | None] = [None] * n_stages
        if cfg.fefa_mode == "multi":
            last_attended = cfg.input_bins
            for k in range(n_stages):
                if freq_before_stage[k] != last_attended:
                    self.fefa_pre_stage[k] = FefaLayer(
                        freq_before_stage[k],
                        cfg.fefa_bias,
                        cfg.fefa_input_dependent,
                        f"fefa.stage{k}",
                    )
                    last_attended = freq_before_stage[k]

        # Trunk.
        self.stem = None
        self.stem_bn = None
        self.stages: list[list] = []
        if cfg.family == "vgg":
            in_ch = 1
            for k, out_ch in enumerate(cfg.channel_widths):
                self.stages.append([_VggStage(f"stage{k}", in_ch, out_ch, rng)])
                in_ch = out_ch
        else:
            stem_ch = cfg.channel_widths[0]
            self.stem = Conv2d("stem.conv", 1, stem_ch, 3, 1, 1, rng)
            self.stem_bn = BatchNorm2d("stem.bn", stem_ch)
            in_ch = stem_ch
            for k, out_ch in enumerate(cfg.channel_widths):
                blocks = []
                for b in range(cfg.block_counts[k]):
                    stride = 2 if b == 0 else 1
                    blocks.append(
                        _ResBlock(f"stage{k}.block{b}", in_ch, out_ch, stride, se_r, rng)
                    )
                    in_ch = out_ch
                self.stages.append(blocks)

        self.embed = Linear("embed", in_ch * self.output_bins, cfg.embedding_dim, rng)
        self.classifier = Linear("classifier", cfg.embedding_dim, n_speakers, rng)

        names = [p.name for p in self.parameters()]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names in model")

    # registry ----------------------------------------------------------

    def fefa_layers(self) -> list[FefaLayer]:
        layers = [self.fefa_input] if self.fefa_input is not None else []
        layers += [l for l in self.fefa_pre_stage if l is not None]
        return layers

    def parameters(self) -> list[Parameter]:
        params: list[Parameter] = []
        for layer in self.fefa_layers():
            params += layer.parameters()
        if self.stem is not None:
            params += self.stem.parameters() + self.stem_bn.parameters()
        for blocks in self.stages:
            for block in blocks:
                params += block.parameters()
        params += self.embed.parameters() + self.classifier.parameters()
        return params

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        bufs: list[tuple[str, np.ndarray]] = []
        if self.stem_bn is not None:
            bufs += self.stem_bn.buffers()
        for blocks in self.stages:
            for block in blocks:
                bufs += block.buffers()
        return bufs

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    # execution -----------------------------------------------------------

    def _trunk(self, x: Tensor, training: bool, record_attention: bool) -> Tensor:
        if self.fefa_input is not None:
            x = fefa_forward_hidden(x, self.fefa_input, record=record_attention)
        if self.stem is not None:
            x = relu(self.stem_bn(self.stem(x), training))
        for k, blocks in enumerate(self.stages):
            pre = self.fefa_pre_stage[k]
            if pre is not None:
                x = fefa_forward_hidden(x, pre, record=record_attention)
            for block in blocks:
                x = block(x, training)
        return x

    def forward_batch(
        self, xs: np.ndarray, training: bool = False, record_attention: bool = False
    ) -> tuple[Tensor, Tensor]:
        """Run [N, F, T] inputs; returns ([N, D] embeddings, [N, K] logits)."""
        arr = np.asarray(xs, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"forward_batch expects [N, F, T], got {arr.shape}")
        if arr.shape[1] != self.config.input_bins:
            raise ValueError(
                f"input has {arr.shape[1]} frequency bins, model expects "
                f"{self.config.input_bins}"
            )
        x = Tensor(arr[:, None, :, :])
        feats = self._trunk(x, training, record_attention)
        emb = self.embed(temporal_average_pool(feats))
        return emb, self.classifier(emb)

    def forward(
        self, x: np.ndarray, training: bool = False, record_attention: bool = True
    ) -> tuple[Tensor, Tensor]:
        """Run one [F, T] input; returns ([D] embedding, [K] logits)."""
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"forward expects an [F, T] matrix, got {arr.shape}")
        emb, logits = self.forward_batch(
            arr[None], training=training, record_attention=record_attention
        )
        return reshape(emb, (-1,)), reshape(logits, (-1,))

    def embed_utterance(self, x: np.ndarray) -> np.ndarray:
        """Frozen-model embedding of one normalized spectrogram (thread-safe)."""
        emb, _ = self.forward(x, training=False, record_attention=False)
        return emb.data

    # state ---------------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {f"param.{p.name}": p.data for p in self.parameters()}
        for name, buf in self.buffers():
            arrays[f"buffer.{name}"] = buf
        return arrays

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        for p in self.parameters():
            key = f"param.{p.name}"
            if key not in arrays:
                raise ValueError(f"checkpoint is missing {key}")
            if arrays[key].shape != p.data.shape:
                raise ValueError(
                    f"checkpoint shape mismatch for {key}: "
                    f"{arrays[key].shape} vs {p.data.shape}"
                )
            p.data[:] = arrays[key]
        for name, buf in self.buffers():
            key = f"buffer.{name}"
            if key not in arrays:
                raise ValueError(f"checkpoint is missing {key}")
            buf[:] = arrays[key]


def build_model(cfg: BackboneConfig, n_speakers: int, seed: int) -> SpeakerModel:
    """Deterministic model construction for (config, n_speakers, seed)."""
    return SpeakerModel(cfg, n_speakers, seed)


def train_epoch_stats(
    model: SpeakerModel,
    dataset,
    lr: float,
    batch_size: int,
    seed: int,
    optimizer: Adam | None = None,
) -> tuple[float, float]:
    """One shuffled pass over [(spectrogram, label)] pairs.

    Returns (mean cross-entropy, fraction of batch-forward argmax hits).
    The shuffle order is a pure function of ``seed``.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    n = len(dataset)
    if n == 0:
        raise ValueError("empty training dataset")
    labels = np.array([int(label) for _, label in dataset])
    if labels.min() < 0 or labels.max() >= model.n_speakers:
        raise ValueError(
            f"label out of range [0,{model.n_speakers}): "
            f"{sorted(set(labels.tolist()))}"
        )
    if optimizer is None:
        optimizer = Adam(model.parameters(), lr=lr)
    else:
        optimizer.lr = lr
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    total_nll = 0.0
    total_hits = 0
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        xs = np.stack([np.asarray(dataset[i][0], dtype=np.float64) for i in idx])
        ys = labels[idx]
        _, logits = model.forward_batch(xs, training=True)
        loss = softmax_cross_entropy(logits, ys)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        total_nll += loss.item() * len(idx)
        total_hits += int((logits.data.argmax(axis=1) == ys).sum())
    return total_nll / n, total_hits / n


def train_epoch(
    model: SpeakerModel,
    dataset,
    lr: float,
    batch_size: int,
    seed: int,
    optimizer: Adam | None = None,
) -> float:
    """One training epoch; returns the mean cross-entropy over the dataset."""
    loss, _ = train_epoch_stats(model, dataset, lr, batch_size, seed, optimizer)
    return loss
