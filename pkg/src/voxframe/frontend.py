"""Acoustic frontend: 40-dimensional MFCCs, mean normalization, and the
mapping from network frame indices back to phone labels.

Conventions: 25 ms Hamming window, 10 ms shift, pre-emphasis 0.97, mel
filterbank from 20 Hz to Nyquist, orthonormal DCT-II keeping all
coefficients. Dither is off by default so the whole pipeline is
deterministic.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.fft

from .corpus import FILLER_PHONE, PhoneAlignment, Utterance
from .errors import ConfigError, FormatError, NumericError, ShapeError, TooShortError

DEFAULT_KERNELS = (5, 7, 1, 1)
DEFAULT_STRIDES = (1, 2, 1, 1)


@dataclass(frozen=True)
class MfccConfig:
    n_mels: int = 40
    n_ceps: int = 40
    fft_size: int = 512
    preemphasis: float = 0.97
    dither: float = 0.0
    window_ms: float = 25.0
    shift_ms: float = 10.0
    low_hz: float = 20.0
    high_hz: float | None = None  # defaults to Nyquist
    dither_seed: int = 0

    def to_dict(self) -> dict:
        return {
            "n_mels": self.n_mels,
            "n_ceps": self.n_ceps,
            "fft_size": self.fft_size,
            "preemphasis": self.preemphasis,
            "dither": self.dither,
            "window_ms": self.window_ms,
            "shift_ms": self.shift_ms,
            "low_hz": self.low_hz,
            "high_hz": self.high_hz,
            "dither_seed": self.dither_seed,
        }


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    utterance_id: str
    frames: np.ndarray  # (T, n_ceps), float64
    sample_rate: int
    window_ms: float = 25.0
    shift_ms: float = 10.0

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def window_samples(self) -> int:
        return int(round(self.window_ms * 1e-3 * self.sample_rate))

    @property
    def shift_samples(self) -> int:
        return int(round(self.shift_ms * 1e-3 * self.sample_rate))


def frame_count(n_samples: int, window: int, shift: int) -> int:
    """Number of analysis frames: 1 + floor((n - window) / shift)."""
    if n_samples < window:
        raise TooShortError(
            f"{n_samples} samples is shorter than one {window}-sample window"
        )
    return 1 + (n_samples - window) // shift


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels, fft_size, sample_rate, low_hz=20.0, high_hz=None):
    """Triangular mel filters evaluated at the FFT bin frequencies.

    Returns an (n_mels, fft_size // 2 + 1) weight matrix.
    """
    nyquist = sample_rate / 2.0
    high_hz = nyquist if high_hz is None else high_hz
    if not 0 <= low_hz < high_hz <= nyquist:
        raise ConfigError(f"bad mel range [{low_hz}, {high_hz}] for rate {sample_rate}")
    mel_points = np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    weights = np.zeros((n_mels, bin_freqs.size))
    for i in range(n_mels):
        left, center, right = hz_points[i], hz_points[i + 1], hz_points[i + 2]
        up = (bin_freqs - left) / (center - left)
        down = (right - bin_freqs) / (right - center)
        weights[i] = np.maximum(0.0, np.minimum(up, down))
    return weights


def frame_signal(samples: np.ndarray, window: int, shift: int) -> np.ndarray:
    """Slice a signal into overlapping frames, shape (T, window)."""
    n = frame_count(samples.size, window, shift)
    idx = shift * np.arange(n)[:, None] + np.arange(window)[None, :]
    return samples[idx]


def compute_mfcc(utt: Utterance, config: MfccConfig = MfccConfig()) -> FeatureMatrix:
    """MFCC features for one utterance.

    Raises TooShortError when the waveform is shorter than one window.
    """
    if config.n_ceps > config.n_mels:
        raise ConfigError(
            f"n_ceps {config.n_ceps} cannot exceed n_mels {config.n_mels}"
        )
    window = int(round(config.window_ms * 1e-3 * utt.sample_rate))
    shift = int(round(config.shift_ms * 1e-3 * utt.sample_rate))
    if config.fft_size < window:
        raise ConfigError(f"fft_size {config.fft_size} smaller than window {window}")
    x = np.asarray(utt.samples, dtype=np.float64)
    if x.size < window:
        raise TooShortError(
            f"utterance {utt.id}: {x.size} samples < one {window}-sample window"
        )
    if config.dither > 0.0:
        seed = np.random.SeedSequence(
            [config.dither_seed, *utt.id.encode("utf-8")]
        )
        x = x + config.dither * np.random.default_rng(seed).standard_normal(x.size)
    if config.preemphasis > 0.0:
        x = np.concatenate([x[:1], x[1:] - config.preemphasis * x[:-1]])
    frames = frame_signal(x, window, shift) * np.hamming(window)
    spectrum = np.fft.rfft(frames, n=config.fft_size, axis=1)
    power = np.abs(spectrum) ** 2
    fbank = mel_filterbank(
        config.n_mels, config.fft_size, utt.sample_rate, config.low_hz, config.high_hz
    )
    logmel = np.log(np.maximum(power @ fbank.T, 1e-20))
    ceps = scipy.fft.dct(logmel, type=2, norm="ortho", axis=1)[:, : config.n_ceps]
    if not np.all(np.isfinite(ceps)):
        raise NumericError(f"utterance {utt.id}: non-finite MFCC output")
    return FeatureMatrix(
        utterance_id=utt.id,
        frames=ceps,
        sample_rate=utt.sample_rate,
        window_ms=config.window_ms,
        shift_ms=config.shift_ms,
    )


def cmn(fm: FeatureMatrix) -> FeatureMatrix:
    """Per-utterance, per-coefficient mean subtraction."""
    centered = fm.frames - fm.frames.mean(axis=0, keepdims=True)
    return replace(fm, frames=centered)


# ---------------------------------------------------------------------------
# layer geometry: frame index -> receptive-field center sample
# ---------------------------------------------------------------------------


def layer_geometry(layer, kernels=DEFAULT_KERNELS, strides=DEFAULT_STRIDES):
    """(jump, receptive_field) of a layer's outputs, in feature-frame units.

    Layers beyond the conv stack (the per-frame affine layers) share the
    geometry of the last conv layer.
    """
    if layer < 1:
        raise ConfigError(f"layer index {layer} out of range")
    depth = min(layer, len(kernels))
    jump, rf = 1, 1
    for k, s in zip(kernels[:depth], strides[:depth]):
        rf = rf + (k - 1) * jump
        jump *= s
    return jump, rf


def layer_frame_count(n_feature_frames, layer, kernels=DEFAULT_KERNELS, strides=DEFAULT_STRIDES):
    """Number of outputs a layer produces for an input of T feature frames."""
    n = n_feature_frames
    for k, s in zip(kernels[: min(layer, len(kernels))], strides):
        if n < k:
            raise TooShortError(
                f"{n_feature_frames} feature frames too short for layer {layer}"
            )
        n = 1 + (n - k) // s
    return n


def layer_frame_centers(
    n_feature_frames,
    layer,
    window_samples,
    shift_samples,
    kernels=DEFAULT_KERNELS,
    strides=DEFAULT_STRIDES,
) -> np.ndarray:
    """Receptive-field center sample of every output frame at a layer."""
    jump, rf = layer_geometry(layer, kernels, strides)
    n_out = layer_frame_count(n_feature_frames, layer, kernels, strides)
    center_frame = jump * np.arange(n_out) + (rf - 1) / 2.0
    return np.floor(center_frame * shift_samples + window_samples / 2.0).astype(int)


def layer_rate_ms(layer, shift_ms=10.0, strides=DEFAULT_STRIDES):
    jump, _ = layer_geometry(layer, DEFAULT_KERNELS, strides)
    return shift_ms * jump


def frame_phone_labels(
    alignment: PhoneAlignment,
    layer: int,
    fm: FeatureMatrix,
    kernels=DEFAULT_KERNELS,
    strides=DEFAULT_STRIDES,
) -> list[str]:
    """One phone label per layer output frame.

    Each frame takes the phone covering the center sample of its receptive
    field; uncovered centers get the filler label (maps to Others).
    """
    centers = layer_frame_centers(
        fm.n_frames, layer, fm.window_samples, fm.shift_samples, kernels, strides
    )
    starts = np.array([s.start_sample for s in alignment.segments])
    ends = np.array([s.end_sample for s in alignment.segments])
    phones = [s.phone for s in alignment.segments]
    labels = []
    for c in centers:
        i = np.searchsorted(starts, c, side="right") - 1
        if i >= 0 and c < ends[i]:
            labels.append(phones[i])
        else:
            labels.append(FILLER_PHONE)
    return labels


# ---------------------------------------------------------------------------
# feature dump: (T, n_ceps) header then float64 little-endian rows
# ---------------------------------------------------------------------------

_FEAT_HEADER = struct.Struct("<QQ")


def write_features(path, fm: FeatureMatrix, config: MfccConfig | None = None) -> None:
    path = Path(path)
    with open(path, "wb") as f:
        f.write(_FEAT_HEADER.pack(*fm.frames.shape))
        f.write(np.ascontiguousarray(fm.frames, dtype="<f8").tobytes())
    sidecar = {
        "utterance_id": fm.utterance_id,
        "sample_rate": fm.sample_rate,
        "window_ms": fm.window_ms,
        "shift_ms": fm.shift_ms,
        "config": config.to_dict() if config is not None else None,
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n"
    )


def read_features(path) -> FeatureMatrix:
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    if not sidecar_path.exists():
        raise FormatError(f"missing feature sidecar {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text())
    with open(path, "rb") as f:
        head = f.read(_FEAT_HEADER.size)
        if len(head) != _FEAT_HEADER.size:
            raise FormatError(f"{path}: truncated feature header")
        t, d = _FEAT_HEADER.unpack(head)
        data = np.frombuffer(f.read(), dtype="<f8")
    if data.size != t * d:
        raise ShapeError(f"{path}: header says {t}x{d} but {data.size} values present")
    return FeatureMatrix(
        utterance_id=sidecar["utterance_id"],
        frames=data.reshape(t, d).copy(),
        sample_rate=sidecar["sample_rate"],
        window_ms=sidecar["window_ms"],
        shift_ms=sidecar["shift_ms"],
    )
