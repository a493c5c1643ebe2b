"""Speaker embedding network: four 1-d conv layers over the full
MFCC axis, temporal pooling (statistics or average), two fully connected
layers, and a softmax speaker-classification head.

The embedding is the second fully connected layer's output taken before
its ReLU. With average pooling and no ReLU between fc1 and fc2, the
pooling layer can be relocated to after fc2 without changing the result
(both layers are affine), which yields per-frame embeddings at every
layer; ``frame_mode_forward`` implements that relocation.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import nn
from .corpus import Corpus, Utterance
from .errors import ConfigError, NumericError, ShapeError, TooShortError, UnsupportedModeError
from .frontend import (
    FeatureMatrix,
    MfccConfig,
    cmn,
    compute_mfcc,
    frame_count,
    layer_frame_centers,
    layer_geometry,
)

logger = logging.getLogger(__name__)

N_INPUT_COEFFS = 40
N_ANALYSIS_LAYERS = 6  # four convs + two fully connected layers


@dataclass(frozen=True)
class SpeakerNetConfig:
    n_speakers: int
    channels: tuple[int, ...] = (1000, 1000, 1000, 1500)
    kernels: tuple[int, ...] = (5, 7, 1, 1)
    strides: tuple[int, ...] = (1, 2, 1, 1)
    fc1_size: int = 1500
    embedding_size: int = 600
    pooling: str = "statistics"  # "statistics" | "average"
    relu_before_fc2: bool = False
    crop_seconds: float = 2.0

    def validate(self) -> None:
        if self.n_speakers < 2:
            raise ConfigError("need at least 2 speakers")
        if not (len(self.channels) == len(self.kernels) == len(self.strides) == 4):
            raise ConfigError("expected exactly 4 conv layers (channels/kernels/strides)")
        if any(c < 1 for c in self.channels) or any(k < 1 for k in self.kernels):
            raise ConfigError("channels and kernels must be positive")
        if any(s < 1 for s in self.strides):
            raise ConfigError("strides must be positive")
        if self.pooling not in ("statistics", "average"):
            raise ConfigError(f"pooling must be statistics|average, got {self.pooling!r}")
        if self.fc1_size < 1 or self.embedding_size < 1:
            raise ConfigError("fully connected sizes must be positive")
        if self.crop_seconds <= 0:
            raise ConfigError("crop_seconds must be positive")

    @property
    def pooled_size(self) -> int:
        # Statistics pooling concatenates mean and std, doubling the width.
        return self.channels[-1] * (2 if self.pooling == "statistics" else 1)

    def to_dict(self) -> dict:
        return {
            "n_speakers": self.n_speakers,
            "channels": list(self.channels),
            "kernels": list(self.kernels),
            "strides": list(self.strides),
            "fc1_size": self.fc1_size,
            "embedding_size": self.embedding_size,
            "pooling": self.pooling,
            "relu_before_fc2": self.relu_before_fc2,
            "crop_seconds": self.crop_seconds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpeakerNetConfig":
        return cls(
            n_speakers=d["n_speakers"],
            channels=tuple(d["channels"]),
            kernels=tuple(d["kernels"]),
            strides=tuple(d["strides"]),
            fc1_size=d["fc1_size"],
            embedding_size=d["embedding_size"],
            pooling=d["pooling"],
            relu_before_fc2=d["relu_before_fc2"],
            crop_seconds=d["crop_seconds"],
        )


def full_scale_config(n_speakers: int, **overrides) -> SpeakerNetConfig:
    """Production-scale preset (roughly 13M embedding-network parameters
    in the average-pooling variant)."""
    return replace(SpeakerNetConfig(n_speakers=n_speakers), **overrides)


def desk_config(n_speakers: int, **overrides) -> SpeakerNetConfig:
    """Small preset for fast, fully testable end-to-end runs."""
    base = SpeakerNetConfig(
        n_speakers=n_speakers,
        channels=(64, 64, 64, 96),
        fc1_size=96,
        embedding_size=32,
    )
    return replace(base, **overrides)


@dataclass(frozen=True, eq=False)
class FrameEmbeddings:
    """Per-frame representation vectors from one layer of the network."""

    utterance_id: str
    layer: int
    rate_ms: float
    vectors: np.ndarray  # (n_frames, dim)
    frame_centers: np.ndarray  # (n_frames,) receptive-field center samples


@dataclass(frozen=True, eq=False)
class SegmentForward:
    logits: np.ndarray
    fc1_tap: np.ndarray  # fc1 output before any ReLU
    fc2_tap: np.ndarray  # fc2 output before ReLU (the speaker embedding)


class SpeakerNet:
    """Parameters plus forward/backward passes for the architecture."""

    def __init__(self, config: SpeakerNetConfig, convs, fc1, fc2, head):
        config.validate()
        self.config = config
        self.convs: list[nn.Conv1dLayer] = convs
        self.fc1: nn.AffineLayer = fc1
        self.fc2: nn.AffineLayer = fc2
        self.head: nn.AffineLayer = head
        self._audit_shapes()

    # -- construction -------------------------------------------------

    def _audit_shapes(self):
        cfg = self.config
        in_ch = N_INPUT_COEFFS
        for i, conv in enumerate(self.convs):
            expect = (cfg.channels[i], in_ch, cfg.kernels[i])
            if conv.weights.shape != expect:
                raise ConfigError(f"conv{i + 1} weights {conv.weights.shape} != {expect}")
            if conv.stride != cfg.strides[i]:
                raise ConfigError(f"conv{i + 1} stride {conv.stride} != {cfg.strides[i]}")
            in_ch = cfg.channels[i]
        if self.fc1.weights.shape != (cfg.fc1_size, cfg.pooled_size):
            raise ConfigError(
                f"fc1 weights {self.fc1.weights.shape} != "
                f"({cfg.fc1_size}, {cfg.pooled_size})"
            )
        if self.fc2.weights.shape != (cfg.embedding_size, cfg.fc1_size):
            raise ConfigError("fc2 weight shape inconsistent with config")
        if self.head.weights.shape != (cfg.n_speakers, cfg.embedding_size):
            raise ConfigError("head weight shape inconsistent with config")

    def parameters(self):
        """(name, array) pairs in declaration order."""
        out = []
        for i, conv in enumerate(self.convs, start=1):
            out.append((f"conv{i}.weights", conv.weights))
            out.append((f"conv{i}.bias", conv.bias))
        for name, layer in (("fc1", self.fc1), ("fc2", self.fc2), ("head", self.head)):
            out.append((f"{name}.weights", layer.weights))
            out.append((f"{name}.bias", layer.bias))
        return out

    def param_dict(self) -> dict:
        return dict(self.parameters())

    def parameter_count(self, include_head: bool = False) -> int:
        total = 0
        for name, arr in self.parameters():
            if not include_head and name.startswith("head."):
                continue
            total += arr.size
        return total

    def min_frames(self) -> int:
        """Smallest feature-frame count the conv stack accepts."""
        need = 1
        for k, s in zip(reversed(self.config.kernels), reversed(self.config.strides)):
            need = (need - 1) * s + k
        return need

    # -- forward ------------------------------------------------------

    def _check_input(self, fm: FeatureMatrix) -> np.ndarray:
        x = fm.frames.T  # (40, T)
        if x.shape[0] != N_INPUT_COEFFS:
            raise ShapeError(f"expected {N_INPUT_COEFFS} coefficients, got {x.shape[0]}")
        if x.shape[1] < self.min_frames():
            raise TooShortError(
                f"utterance {fm.utterance_id}: {x.shape[1]} frames < minimum "
                f"{self.min_frames()}",
                min_frames=self.min_frames(),
            )
        return x

    def _conv_stack(self, x):
        """Pre- and post-ReLU activations of the four conv layers."""
        pre, post = [], []
        h = x
        for conv in self.convs:
            z = nn.conv1d(conv, h)
            h = nn.relu(z)
            pre.append(z)
            post.append(h)
        return pre, post

    def _trunk(self, x):
        """Forward through pooling and the fully connected layers.

        Returns a dict of intermediates sufficient for the backward pass.
        """
        conv_pre, conv_post = self._conv_stack(x)
        pooled = (
            nn.stats_pool(conv_post[-1])
            if self.config.pooling == "statistics"
            else nn.avg_pool(conv_post[-1])
        )
        fc1_out = nn.affine(self.fc1, pooled)
        fc2_in = nn.relu(fc1_out) if self.config.relu_before_fc2 else fc1_out
        fc2_out = nn.affine(self.fc2, fc2_in)
        emb_act = nn.relu(fc2_out)
        logits = nn.affine(self.head, emb_act)
        return {
            "x": x,
            "conv_pre": conv_pre,
            "conv_post": conv_post,
            "pooled": pooled,
            "fc1_out": fc1_out,
            "fc2_in": fc2_in,
            "fc2_out": fc2_out,
            "emb_act": emb_act,
            "logits": logits,
        }

    def forward_segment(self, fm: FeatureMatrix) -> SegmentForward:
        acts = self._trunk(self._check_input(fm))
        return SegmentForward(
            logits=acts["logits"],
            fc1_tap=acts["fc1_out"],
            fc2_tap=acts["fc2_out"],
        )

    def extract_embedding(self, fm: FeatureMatrix, tap: str = "fc2") -> np.ndarray:
        if tap not in ("fc1", "fc2"):
            raise ConfigError(f"tap must be fc1|fc2, got {tap!r}")
        fwd = self.forward_segment(fm)
        return fwd.fc2_tap if tap == "fc2" else fwd.fc1_tap

    def loss_and_grads(self, fm: FeatureMatrix, label: int):
        """Cross-entropy loss plus gradients for every parameter."""
        acts = self._trunk(self._check_input(fm))
        loss, g_logits = nn.softmax_xent(acts["logits"], label)
        grads = {}
        gw, gb, g = nn.affine_vjp(self.head, acts["emb_act"], g_logits)
        grads["head.weights"], grads["head.bias"] = gw, gb
        g = nn.relu_vjp(acts["fc2_out"], g)
        gw, gb, g = nn.affine_vjp(self.fc2, acts["fc2_in"], g)
        grads["fc2.weights"], grads["fc2.bias"] = gw, gb
        if self.config.relu_before_fc2:
            g = nn.relu_vjp(acts["fc1_out"], g)
        gw, gb, g = nn.affine_vjp(self.fc1, acts["pooled"], g)
        grads["fc1.weights"], grads["fc1.bias"] = gw, gb
        last = acts["conv_post"][-1]
        g = (
            nn.stats_pool_vjp(last, g)
            if self.config.pooling == "statistics"
            else nn.avg_pool_vjp(last, g)
        )
        for i in range(len(self.convs) - 1, -1, -1):
            g = nn.relu_vjp(acts["conv_pre"][i], g)
            inp = acts["x"] if i == 0 else acts["conv_post"][i - 1]
            gw, gb, g = nn.conv1d_vjp(self.convs[i], inp, g)
            grads[f"conv{i + 1}.weights"], grads[f"conv{i + 1}.bias"] = gw, gb
        predicted = int(np.argmax(acts["logits"]))
        return loss, grads, predicted

    # -- frame-level embeddings (relocated pooling) --------------------

    def frame_mode_forward(self, fm: FeatureMatrix) -> dict[int, FrameEmbeddings]:
        """Per-frame representations for layers 1..6.

        Requires average pooling: the temporal mean commutes with the
        affine fc layers, so moving it after fc2 leaves the embedding
        unchanged. Standard deviation does not commute, so statistics
        pooling is refused.

        Layers 1-4 are the post-ReLU conv outputs; layer 5 is fc1 applied
        per time step (through the optional fc1 ReLU when the network has
        one); layer 6 is fc2 per time step, before its ReLU. The mean of
        the layer-6 sequence equals the pooled-path embedding.
        """
        if self.config.pooling != "average":
            raise UnsupportedModeError(
                "frame-level embeddings need average pooling; the standard "
                "deviation in statistics pooling is nonlinear in time, so "
                "relocating it past the fc layers would change the result"
            )
        x = self._check_input(fm)
        _, conv_post = self._conv_stack(x)
        fc1_seq = nn.affine(self.fc1, conv_post[-1])
        fc2_in_seq = nn.relu(fc1_seq) if self.config.relu_before_fc2 else fc1_seq
        fc2_seq = nn.affine(self.fc2, fc2_in_seq)
        per_layer = list(conv_post) + [fc2_in_seq, fc2_seq]
        out = {}
        for layer_idx, seq in enumerate(per_layer, start=1):
            centers = layer_frame_centers(
                fm.n_frames,
                layer_idx,
                fm.window_samples,
                fm.shift_samples,
                self.config.kernels,
                self.config.strides,
            )
            jump, _ = layer_geometry(layer_idx, self.config.kernels, self.config.strides)
            out[layer_idx] = FrameEmbeddings(
                utterance_id=fm.utterance_id,
                layer=layer_idx,
                rate_ms=fm.shift_ms * jump,
                vectors=seq.T.copy(),
                frame_centers=centers,
            )
        return out

    # -- serialization --------------------------------------------------

    def state_header(self, extra: dict | None = None) -> dict:
        head = {"config": self.config.to_dict()}
        if extra:
            head.update(extra)
        return head

    def save(self, path, extra_header: dict | None = None) -> None:
        nn.save_checkpoint(path, self.state_header(extra_header), self.parameters())

    @classmethod
    def from_blocks(cls, config: SpeakerNetConfig, blocks: dict) -> "SpeakerNet":
        convs = [
            nn.Conv1dLayer(
                blocks[f"conv{i + 1}.weights"],
                blocks[f"conv{i + 1}.bias"],
                stride=config.strides[i],
            )
            for i in range(4)
        ]
        fc1 = nn.AffineLayer(blocks["fc1.weights"], blocks["fc1.bias"])
        fc2 = nn.AffineLayer(blocks["fc2.weights"], blocks["fc2.bias"])
        head = nn.AffineLayer(blocks["head.weights"], blocks["head.bias"])
        return cls(config, convs, fc1, fc2, head)

    @classmethod
    def load(cls, path) -> tuple["SpeakerNet", dict]:
        header, blocks = nn.load_checkpoint(path)
        config = SpeakerNetConfig.from_dict(header["config"])
        return cls.from_blocks(config, blocks), header

    def copy(self) -> "SpeakerNet":
        header, blocks = nn.roundtrip_copy(self.state_header(), self.parameters())
        return SpeakerNet.from_blocks(SpeakerNetConfig.from_dict(header["config"]), blocks)


def build(config: SpeakerNetConfig, seed: int = 0) -> SpeakerNet:
    """Deterministically initialize a network from a seed.

    Weights are Kaiming-uniform with fan-in scaling; biases start at zero.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    convs = []
    in_ch = N_INPUT_COEFFS
    for c, k, s in zip(config.channels, config.kernels, config.strides):
        w = nn.kaiming_uniform(rng, (c, in_ch, k), fan_in=in_ch * k)
        convs.append(nn.Conv1dLayer(w, np.zeros(c), stride=s))
        in_ch = c
    fc1 = nn.AffineLayer(
        nn.kaiming_uniform(rng, (config.fc1_size, config.pooled_size), config.pooled_size),
        np.zeros(config.fc1_size),
    )
    fc2 = nn.AffineLayer(
        nn.kaiming_uniform(rng, (config.embedding_size, config.fc1_size), config.fc1_size),
        np.zeros(config.embedding_size),
    )
    head = nn.AffineLayer(
        nn.kaiming_uniform(rng, (config.n_speakers, config.embedding_size), config.embedding_size),
        np.zeros(config.n_speakers),
    )
    return SpeakerNet(config, convs, fc1, fc2, head)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AugmentConfig:
    kind: str = "white"  # "white" | "babble"
    snr_db: float = 10.0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    lr: float = 0.001
    lr_decay: float = 0.98
    decay_every: int = 50_000
    batch_size: int = 32
    crop_seconds: float | None = None  # None -> network config value
    # Random crops drawn from each utterance per epoch. Desk-scale corpora
    # need several to give vanilla SGD enough updates per epoch.
    crops_per_utterance: int = 1
    seed: int = 0
    checkpoint_epochs: tuple[int, ...] | None = None  # None -> default schedule
    augment: AugmentConfig | None = None


@dataclass
class Checkpoint:
    epoch: int
    net: SpeakerNet
    update_count: int
    lr: float
    path: Path | None = None


def default_checkpoint_epochs(epochs: int) -> tuple[int, ...]:
    """0, 1, 2, 5, 10, 20, 50, ... capped at and including the last epoch."""
    marks = {0, epochs}
    step = [1, 2, 5]
    scale = 1
    while scale <= epochs:
        for s in step:
            if s * scale <= epochs:
                marks.add(s * scale)
        scale *= 10
    return tuple(sorted(marks))


def _augmented_utterance(utt: Utterance, aug: AugmentConfig, corpus, rng) -> Utterance:
    x = utt.samples
    p_sig = float(np.mean(x**2)) or 1e-8
    p_noise = p_sig / (10.0 ** (aug.snr_db / 10.0))
    if aug.kind == "white":
        noise = rng.standard_normal(x.size) * np.sqrt(p_noise)
    elif aug.kind == "babble":
        others = [u for u in corpus if u.speaker_id != utt.speaker_id]
        if not others:
            raise ConfigError("babble noise needs at least one other speaker")
        mix = np.zeros_like(x)
        for _ in range(3):
            other = others[int(rng.integers(len(others)))]
            reps = int(np.ceil(x.size / other.samples.size)) + 1
            tiled = np.tile(other.samples, reps)
            start = int(rng.integers(0, tiled.size - x.size + 1))
            mix += tiled[start : start + x.size]
        p_mix = float(np.mean(mix**2)) or 1e-8
        noise = mix * np.sqrt(p_noise / p_mix)
    else:
        raise ConfigError(f"unknown augmentation kind {aug.kind!r}")
    noisy = np.clip(x + noise, -1.0, 1.0)
    return Utterance(utt.id + "~aug", utt.speaker_id, noisy, utt.sample_rate)


def prepare_features(
    corpus: Corpus,
    mfcc_config: MfccConfig = MfccConfig(),
    utterance_ids=None,
    apply_cmn: bool = True,
) -> dict[str, FeatureMatrix]:
    """MFCC (+ CMN) for the requested utterances, keyed by id."""
    ids = corpus.ids() if utterance_ids is None else tuple(utterance_ids)
    out = {}
    for utt_id in ids:
        fm = compute_mfcc(corpus.get(utt_id), mfcc_config)
        out[utt_id] = cmn(fm) if apply_cmn else fm
    return out


def crop_frames_for(config: SpeakerNetConfig, fm: FeatureMatrix, crop_seconds=None) -> int:
    seconds = config.crop_seconds if crop_seconds is None else crop_seconds
    n_samples = int(round(seconds * fm.sample_rate))
    return frame_count(n_samples, fm.window_samples, fm.shift_samples)


def _crop(frames: np.ndarray, n_crop: int, rng) -> np.ndarray:
    t = frames.shape[0]
    if t < n_crop:
        # Wrap-pad short utterances to the crop length.
        reps = int(np.ceil(n_crop / t))
        frames = np.tile(frames, (reps, 1))
        t = frames.shape[0]
    start = int(rng.integers(0, t - n_crop + 1))
    return frames[start : start + n_crop]


def train(
    net: SpeakerNet,
    corpus: Corpus,
    hyper: TrainConfig,
    mfcc_config: MfccConfig = MfccConfig(),
    utterance_ids=None,
    out_dir=None,
    log_path=None,
    features: dict[str, FeatureMatrix] | None = None,
) -> list[Checkpoint]:
    """Train the speaker classifier; returns checkpoints (epoch 0 included).

    One random crop per utterance per epoch; per-batch gradient averages;
    vanilla SGD with the stepped decay schedule. Aborts with NumericError
    on a NaN loss.
    """
    speakers = corpus.speakers()
    if len(speakers) < 2:
        raise ConfigError("training needs at least 2 speakers")
    if net.config.n_speakers != len(speakers):
        raise ConfigError(
            f"network has {net.config.n_speakers} outputs but corpus has "
            f"{len(speakers)} speakers"
        )
    label_of = {s: i for i, s in enumerate(speakers)}
    ids = sorted(utterance_ids) if utterance_ids is not None else list(corpus.ids())

    rng = np.random.default_rng(hyper.seed)
    pool: list[tuple[str, int, np.ndarray]] = []
    feats = dict(features) if features is not None else {}
    for utt_id in ids:
        if utt_id not in feats:
            feats[utt_id] = cmn(compute_mfcc(corpus.get(utt_id), mfcc_config))
        fm = feats[utt_id]
        pool.append((utt_id, label_of[corpus.get(utt_id).speaker_id], fm.frames))
    if hyper.augment is not None:
        aug_rng = np.random.default_rng((hyper.seed, 0xA46))
        for utt_id in ids:
            noisy = _augmented_utterance(corpus.get(utt_id), hyper.augment, corpus, aug_rng)
            fm = cmn(compute_mfcc(noisy, mfcc_config))
            pool.append((noisy.id, label_of[noisy.speaker_id], fm.frames))

    sample_fm = feats[ids[0]]
    n_crop = crop_frames_for(net.config, sample_fm, hyper.crop_seconds)
    n_crop = max(n_crop, net.min_frames())

    opt = nn.Sgd(hyper.lr, hyper.lr_decay, hyper.decay_every)
    marks = (
        set(hyper.checkpoint_epochs)
        if hyper.checkpoint_epochs is not None
        else set(default_checkpoint_epochs(hyper.epochs))
    )
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    checkpoints: list[Checkpoint] = []

    def take_checkpoint(epoch: int):
        snap = net.copy()
        path = None
        if out_dir is not None:
            path = out_dir / f"checkpoint_ep{epoch:04d}.ckpt"
            net.save(
                path,
                extra_header={
                    "epoch": epoch,
                    "update_count": opt.update_count,
                    "lr": opt.lr,
                    "speakers": list(speakers),
                },
            )
        checkpoints.append(Checkpoint(epoch, snap, opt.update_count, opt.lr, path))

    log_rows = [("epoch", "batch", "loss", "lr", "accuracy")]
    params = net.param_dict()
    if 0 in marks:
        take_checkpoint(0)
    visits = np.repeat(np.arange(len(pool)), max(1, hyper.crops_per_utterance))
    for epoch in range(1, hyper.epochs + 1):
        order = visits[rng.permutation(visits.size)]
        epoch_losses = []
        for batch_idx in range(0, len(order), hyper.batch_size):
            batch = order[batch_idx : batch_idx + hyper.batch_size]
            grad_sum: dict[str, np.ndarray] = {}
            loss_sum = 0.0
            hits = 0
            for j in batch:
                utt_id, label, frames = pool[j]
                crop = _crop(frames, n_crop, rng)
                fm = FeatureMatrix(
                    utt_id, crop, sample_fm.sample_rate, sample_fm.window_ms, sample_fm.shift_ms
                )
                try:
                    loss, grads, pred = net.loss_and_grads(fm, label)
                except NumericError as exc:
                    raise NumericError(
                        f"training diverged at epoch {epoch} batch "
                        f"{batch_idx // hyper.batch_size} (lr={opt.lr:.6g}): {exc}"
                    ) from exc
                if not np.isfinite(loss):
                    raise NumericError(
                        f"NaN/Inf loss at epoch {epoch} batch {batch_idx // hyper.batch_size} "
                        f"(lr={opt.lr:.6g})"
                    )
                loss_sum += loss
                hits += int(pred == label)
                for name, g in grads.items():
                    if name in grad_sum:
                        grad_sum[name] += g
                    else:
                        grad_sum[name] = g
            scale = 1.0 / len(batch)
            for name in grad_sum:
                grad_sum[name] *= scale
            batch_loss = loss_sum * scale
            lr_used = opt.lr
            opt.step(params, grad_sum)
            log_rows.append(
                (
                    epoch,
                    batch_idx // hyper.batch_size,
                    f"{batch_loss:.6f}",
                    f"{lr_used:.8g}",
                    f"{hits / len(batch):.4f}",
                )
            )
            epoch_losses.append(batch_loss)
        logger.info(
            "epoch %d: mean loss %.4f (lr %.3g)", epoch, float(np.mean(epoch_losses)), opt.lr
        )
        if epoch in marks:
            take_checkpoint(epoch)
    if log_path is not None or out_dir is not None:
        log_file = Path(log_path) if log_path is not None else out_dir / "train_log.csv"
        with open(log_file, "w", newline="") as f:
            csv.writer(f).writerows(log_rows)
    return checkpoints


def training_accuracy(net: SpeakerNet, corpus: Corpus, features: dict[str, FeatureMatrix]) -> float:
    """Fraction of utterances whose full-length forward picks the right speaker."""
    speakers = corpus.speakers()
    label_of = {s: i for i, s in enumerate(speakers)}
    hits = 0
    for utt_id, fm in features.items():
        base_id = utt_id.split("~")[0]
        fwd = net.forward_segment(fm)
        hits += int(int(np.argmax(fwd.logits)) == label_of[corpus.get(base_id).speaker_id])
    return hits / len(features)
