"""Corpus handling: waveforms, phone alignments, speaker labels, trials.

Includes a deterministic synthetic corpus generator: each synthetic speaker
is a randomized spectral-envelope filter plus vocal-tract-length and pitch
parameters, and each synthetic "phone" is a formant/noise template drawn
from one of the eight TIMIT broad phonetic classes, so both speaker and
class structure are recoverable by construction.
"""

from __future__ import annotations

import csv
import logging
import wave
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    AlignmentError,
    ConfigError,
    FormatError,
    LoadError,
    ParseError,
    TrialReferenceError,
)

logger = logging.getLogger(__name__)


class BroadClass(Enum):
    """TIMIT broad phonetic classes, in fixed tie-break order."""

    AFFRICATE = "Affricate"
    CLOSURES = "Closures"
    FRICATIVE = "Fricative"
    NASALS = "Nasals"
    SEMIVOWELS_GLIDES = "SemivowelsGlides"
    VOWELS = "Vowels"
    STOPS = "Stops"
    OTHERS = "Others"


BROAD_CLASS_ORDER = tuple(BroadClass)

BROAD_CLASS_PHONES = {
    BroadClass.AFFRICATE: ("jh", "ch"),
    # "tck" is a common misprint of the TIMIT closure symbol "tcl";
    # accept both spellings.
    BroadClass.CLOSURES: ("bcl", "dcl", "gcl", "pcl", "tcl", "tck", "kcl"),
    BroadClass.FRICATIVE: ("s", "sh", "z", "zh", "f", "th", "v", "dh"),
    BroadClass.NASALS: ("m", "n", "ng", "em", "en", "eng", "nx"),
    BroadClass.SEMIVOWELS_GLIDES: ("l", "r", "w", "y", "hh", "hv", "el"),
    BroadClass.VOWELS: (
        "iy", "ih", "eh", "ey", "ae", "aa", "aw", "ay", "ah", "ao",
        "oy", "ow", "uh", "uw", "ux", "er", "ax", "ix", "axr", "ax-h",
    ),
    BroadClass.STOPS: ("b", "d", "g", "p", "t", "k", "dx", "q"),
    BroadClass.OTHERS: ("pau", "epi", "h#"),
}

_PHONE_TO_CLASS = {
    phone: cls for cls, phones in BROAD_CLASS_PHONES.items() for phone in phones
}

# Phone label assigned to frames whose receptive-field center is not covered
# by any alignment segment; maps to Others.
FILLER_PHONE = "h#"

_unknown_phones: Counter = Counter()


def phone_to_broad_class(phone: str) -> BroadClass:
    """Map a TIMIT phone symbol to its broad class.

    Total function: unknown symbols map to Others and are counted (see
    :func:`unknown_phone_counts`).
    """
    cls = _PHONE_TO_CLASS.get(phone)
    if cls is None:
        _unknown_phones[phone] += 1
        if _unknown_phones[phone] == 1:
            logger.warning("unknown phone symbol %r mapped to Others", phone)
        return BroadClass.OTHERS
    return cls


def unknown_phone_counts() -> Counter:
    """Counts of phone symbols that fell through to Others."""
    return Counter(_unknown_phones)


def reset_unknown_phone_counts() -> None:
    _unknown_phones.clear()


MANIFEST_HEADER = ("utt_id", "wav_path", "phn_path", "speaker_id")


@dataclass(frozen=True, eq=False)
class Utterance:
    id: str
    speaker_id: str
    samples: np.ndarray  # float64, amplitudes in [-1, 1]
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise FormatError(f"utterance {self.id}: sample_rate must be > 0")
        if self.samples.size == 0:
            raise FormatError(f"utterance {self.id}: empty sample array")
        peak = float(np.max(np.abs(self.samples)))
        if peak > 1.0 + 1e-12:
            raise FormatError(
                f"utterance {self.id}: amplitude {peak:.6g} exceeds 1"
            )


@dataclass(frozen=True)
class PhoneSegment:
    start_sample: int
    end_sample: int
    phone: str
    broad_class: BroadClass

    def __post_init__(self):
        if not 0 <= self.start_sample < self.end_sample:
            raise AlignmentError(
                f"segment [{self.start_sample}, {self.end_sample}) for phone "
                f"{self.phone!r} has non-positive extent"
            )


@dataclass(frozen=True)
class PhoneAlignment:
    utterance_id: str
    segments: tuple[PhoneSegment, ...]

    def __post_init__(self):
        prev_end = -1
        prev_start = -1
        for seg in self.segments:
            if seg.start_sample < prev_end or seg.start_sample < prev_start:
                raise AlignmentError(
                    f"alignment {self.utterance_id}: segments overlap or are "
                    f"unsorted near sample {seg.start_sample}"
                )
            prev_end = seg.end_sample
            prev_start = seg.start_sample

    def phone_at(self, sample: int) -> str | None:
        """Phone covering ``sample``, or None if uncovered."""
        for seg in self.segments:
            if seg.start_sample <= sample < seg.end_sample:
                return seg.phone
        return None


@dataclass(frozen=True)
class Trial:
    enroll_id: str
    test_id: str
    is_target: bool


@dataclass(frozen=True)
class TrialList:
    pairs: tuple[Trial, ...]

    def __post_init__(self):
        if not self.pairs:
            raise ParseError("trial list is empty")

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


class Corpus:
    """Immutable utterance collection with deterministic (sorted) iteration."""

    def __init__(self, utterances, alignments=None):
        self._utterances = {u.id: u for u in sorted(utterances, key=lambda u: u.id)}
        self._alignments = dict(alignments or {})
        for utt_id, ali in self._alignments.items():
            if utt_id not in self._utterances:
                raise LoadError(f"alignment for unknown utterance {utt_id!r}")
            utt = self._utterances[utt_id]
            if ali.segments and ali.segments[-1].end_sample > utt.samples.size:
                raise AlignmentError(
                    f"utterance {utt_id}: alignment ends at sample "
                    f"{ali.segments[-1].end_sample} but waveform has only "
                    f"{utt.samples.size} samples"
                )

    def __len__(self):
        return len(self._utterances)

    def __iter__(self):
        return iter(self._utterances.values())

    def __contains__(self, utt_id):
        return utt_id in self._utterances

    def ids(self) -> tuple[str, ...]:
        return tuple(self._utterances)

    def get(self, utt_id: str) -> Utterance:
        try:
            return self._utterances[utt_id]
        except KeyError:
            raise TrialReferenceError(f"unknown utterance id {utt_id!r}") from None

    def alignment(self, utt_id: str) -> PhoneAlignment | None:
        return self._alignments.get(utt_id)

    def speakers(self) -> tuple[str, ...]:
        return tuple(sorted({u.speaker_id for u in self}))

    def utterances_of(self, speaker_id: str) -> tuple[str, ...]:
        return tuple(u.id for u in self if u.speaker_id == speaker_id)

    def subset(self, utt_ids) -> "Corpus":
        ids = set(utt_ids)
        missing = ids - set(self._utterances)
        if missing:
            raise TrialReferenceError(f"unknown utterance ids {sorted(missing)!r}")
        return Corpus(
            [u for u in self if u.id in ids],
            {k: v for k, v in self._alignments.items() if k in ids},
        )


# ---------------------------------------------------------------------------
# wav / .PHN / trial / manifest I/O
# ---------------------------------------------------------------------------


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a RIFF PCM 16-bit mono wav. Anything else is rejected."""
    path = Path(path)
    if not path.exists():
        raise LoadError(f"missing wav file: {path}")
    try:
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1:
                raise FormatError(f"{path}: expected mono, got {w.getnchannels()} channels")
            if w.getsampwidth() != 2:
                raise FormatError(f"{path}: expected 16-bit PCM, got {8 * w.getsampwidth()}-bit")
            if w.getcomptype() != "NONE":
                raise FormatError(f"{path}: compressed wav not supported")
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise FormatError(f"{path}: malformed wav header ({exc})") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    # 1/32768 quantization step so write/read round-trips exactly.
    path = Path(path)
    quantized = np.clip(np.rint(np.asarray(samples) * 32768.0), -32768, 32767)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(quantized.astype("<i2").tobytes())


def parse_phn(path, utterance_id: str | None = None) -> PhoneAlignment:
    """Parse a TIMIT-style .PHN file (``start end label`` per line)."""
    path = Path(path)
    if not path.exists():
        raise LoadError(f"missing alignment file: {path}")
    segments = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ParseError(f"{path}:{lineno}: expected 'start end label', got {line!r}")
        try:
            start, end = int(fields[0]), int(fields[1])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-integer boundary in {line!r}") from None
        phone = fields[2]
        segments.append(PhoneSegment(start, end, phone, phone_to_broad_class(phone)))
    return PhoneAlignment(utterance_id or path.stem, tuple(segments))


def write_phn(path, alignment: PhoneAlignment) -> None:
    lines = [f"{s.start_sample} {s.end_sample} {s.phone}" for s in alignment.segments]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def parse_trials(path) -> TrialList:
    """Parse a trial file of ``{0|1} enroll_utt test_utt`` lines."""
    path = Path(path)
    if not path.exists():
        raise LoadError(f"missing trial file: {path}")
    pairs = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ParseError(f"{path}:{lineno}: expected '{{0|1}} utt1 utt2', got {line!r}")
        if fields[0] not in ("0", "1"):
            raise ParseError(f"{path}:{lineno}: label must be 0 or 1, got {fields[0]!r}")
        pairs.append(Trial(fields[1], fields[2], fields[0] == "1"))
    return TrialList(tuple(pairs))


def write_trials(path, trials: TrialList) -> None:
    lines = [f"{1 if t.is_target else 0} {t.enroll_id} {t.test_id}" for t in trials]
    Path(path).write_text("\n".join(lines) + "\n")


def resolve_trials(trials: TrialList, corpus: Corpus) -> None:
    """Raise TrialReferenceError if any trial id is missing from the corpus."""
    for t in trials:
        for utt_id in (t.enroll_id, t.test_id):
            if utt_id not in corpus:
                raise TrialReferenceError(
                    f"trial references unknown utterance id {utt_id!r}"
                )


def load_corpus(root_path, manifest=None) -> Corpus:
    """Load a corpus from a manifest CSV.

    Manifest columns: ``utt_id,wav_path,phn_path,speaker_id`` (phn_path may
    be empty). Relative paths resolve against ``root_path``.
    """
    root = Path(root_path)
    manifest = Path(manifest) if manifest is not None else root / "manifest.csv"
    if not manifest.exists():
        raise LoadError(f"missing manifest: {manifest}")
    utterances = []
    alignments = {}
    with open(manifest, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != MANIFEST_HEADER:
            raise ParseError(
                f"{manifest}: expected header {','.join(MANIFEST_HEADER)!r}, "
                f"got {header!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"{manifest}:{lineno}: expected 4 columns, got {len(row)}")
            utt_id, wav_rel, phn_rel, speaker_id = (c.strip() for c in row)
            samples, rate = read_wav(root / wav_rel)
            utterances.append(Utterance(utt_id, speaker_id, samples, rate))
            if phn_rel:
                alignments[utt_id] = parse_phn(root / phn_rel, utterance_id=utt_id)
    return Corpus(utterances, alignments)


def write_manifest(path, rows) -> None:
    """Write manifest rows (utt_id, wav_path, phn_path, speaker_id)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(MANIFEST_HEADER)
        for row in rows:
            writer.writerow(row)


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    n_speakers: int
    utts_per_speaker: int
    phones_per_utt: int = 16
    sample_rate: int = 16000
    seed: int = 0
    # When set, only these phones carry speaker-dependent parameters; all
    # other phones are rendered with fixed neutral settings.
    speaker_dependent_phones: tuple[str, ...] | None = None
    # Optional relative sampling weights, e.g. (("iy", 6.0),); unlisted
    # phones keep weight 1. Uniform when None.
    phone_weights: tuple[tuple[str, float], ...] | None = None


# Template inventory: phone -> (kind, params). Frequencies in Hz, durations
# in ms ranges (TIMIT-like: most phones are shorter than the top layers'
# ~135 ms receptive field, so neighboring phones blend at high layers);
# formants are scaled by the speaker's vocal-tract factor.
_TEMPLATES = {
    # Vowels: harmonic source through two formant resonances.
    "iy": ("voiced", dict(formants=(280, 2250), dur=(50, 110))),
    "aa": ("voiced", dict(formants=(710, 1100), dur=(50, 110))),
    "uw": ("voiced", dict(formants=(310, 870), dur=(50, 110))),
    "eh": ("voiced", dict(formants=(550, 1770), dur=(50, 110))),
    # Nasals: strong low resonance, weak upper structure.
    "m": ("voiced", dict(formants=(250, 900), dur=(40, 85), tilt=-12.0)),
    "n": ("voiced", dict(formants=(300, 1350), dur=(40, 85), tilt=-12.0)),
    # Semivowels / glides: formant trajectory.
    "w": ("glide", dict(start=(350, 700), end=(400, 1300), dur=(45, 90))),
    "l": ("voiced", dict(formants=(360, 1050), dur=(45, 90))),
    "r": ("voiced", dict(formants=(420, 1250), dur=(45, 90))),
    # Fricatives: band-limited noise.
    "s": ("noise", dict(band=(4500, 7400), dur=(50, 100))),
    "sh": ("noise", dict(band=(2000, 4000), dur=(50, 100))),
    "f": ("noise", dict(band=(1000, 7000), dur=(50, 100), amp=0.35)),
    # Affricates: closure gap, then burst into frication.
    "ch": ("affricate", dict(band=(2000, 4500), dur=(50, 95))),
    "jh": ("affricate", dict(band=(1800, 3800), dur=(50, 95))),
    # Stops: closure gap plus a short broadband burst.
    "t": ("stop", dict(band=(3000, 7000), dur=(30, 60))),
    "k": ("stop", dict(band=(1200, 3500), dur=(30, 60))),
    "p": ("stop", dict(band=(500, 2000), dur=(30, 60))),
    # Closures and silence-like fillers.
    "tcl": ("quiet", dict(dur=(25, 60), amp=0.004)),
    "kcl": ("quiet", dict(dur=(25, 60), amp=0.004)),
    "pau": ("quiet", dict(dur=(40, 80), amp=0.002)),
    "h#": ("quiet", dict(dur=(50, 90), amp=0.002)),
}

_EDGE_SILENCE_MS = (60, 100)


def _neutral_voice() -> dict:
    return dict(
        vtl=1.0,
        f0=140.0,
        envelope=None,
        quirks={phone: 1.0 for phone in _TEMPLATES},
    )


@dataclass(frozen=True)
class SynthPlan:
    """Everything the generator will write, fixed before any file I/O."""

    config: SynthConfig
    # utt_id -> (speaker_id, [(phone, n_samples), ...])
    utterances: dict[str, tuple[str, tuple[tuple[str, int], ...]]] = field(
        default_factory=dict
    )


def _speaker_params(rng) -> dict:
    """One synthetic voice: global vocal-tract scale, pitch, a smooth
    spectral-envelope filter, and small persistent per-phone frequency
    offsets (an idiolect) that survive per-utterance mean normalization."""
    n_cep = 6
    return dict(
        vtl=float(rng.uniform(0.84, 1.18)),
        f0=float(rng.uniform(85.0, 240.0)),
        envelope=rng.normal(0.0, 0.6, size=n_cep),
        quirks={
            phone: float(np.exp(rng.normal(0.0, 0.08)))
            for phone in sorted(_TEMPLATES)
        },
    )


def _duration_samples(rng, dur_ms, rate) -> int:
    lo, hi = dur_ms
    return int(round(rng.uniform(lo, hi) * 1e-3 * rate))


def plan_corpus(config: SynthConfig) -> SynthPlan:
    """Draw the full phone schedule (the generator's own ground truth)."""
    if config.n_speakers < 2:
        raise ConfigError("synthetic corpus needs at least 2 speakers")
    rng = np.random.default_rng(config.seed)
    phones = sorted(_TEMPLATES)
    weight_of = dict(config.phone_weights or ())
    unknown = set(weight_of) - set(phones)
    if unknown:
        raise ConfigError(f"phone_weights name unknown phones {sorted(unknown)!r}")
    probs = np.array([weight_of.get(p, 1.0) for p in phones], dtype=np.float64)
    if np.any(probs <= 0):
        raise ConfigError("phone weights must be positive")
    probs /= probs.sum()
    utts = {}
    for si in range(config.n_speakers):
        speaker_id = f"spk{si:03d}"
        for ui in range(config.utts_per_speaker):
            utt_id = f"{speaker_id}_utt{ui:03d}"
            schedule = [("h#", _duration_samples(rng, _EDGE_SILENCE_MS, config.sample_rate))]
            for _ in range(config.phones_per_utt):
                phone = phones[int(rng.choice(len(phones), p=probs))]
                dur = _TEMPLATES[phone][1]["dur"]
                schedule.append((phone, _duration_samples(rng, dur, config.sample_rate)))
            schedule.append(("h#", _duration_samples(rng, _EDGE_SILENCE_MS, config.sample_rate)))
            utts[utt_id] = (speaker_id, tuple(schedule))
    return SynthPlan(config=config, utterances=utts)


def _band_noise(rng, n, band, rate, amp=1.0):
    x = rng.standard_normal(n)
    spectrum = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(n, d=1.0 / rate)
    lo, hi = band
    mask = 1.0 / (1.0 + np.exp(-(freqs - lo) / 50.0))
    mask *= 1.0 / (1.0 + np.exp((freqs - hi) / 50.0))
    y = np.fft.irfft(spectrum * mask, n=n)
    peak = np.max(np.abs(y)) or 1.0
    return amp * y / peak


def _harmonic(rng, n, f0, formants, rate, amp=1.0, tilt=-6.0):
    """Sum of harmonics weighted by formant resonance curves."""
    t = np.arange(n) / rate
    n_harm = max(1, int((rate / 2 - 200) // f0))
    h = np.arange(1, n_harm + 1)
    freqs = h * f0
    weight = np.zeros(n_harm)
    for fo in formants:
        bw = 90.0 + 0.05 * fo
        weight += 1.0 / (1.0 + ((freqs - fo) / bw) ** 2)
    weight += 0.01
    weight *= 10.0 ** (tilt * np.log2(h) / 20.0)  # spectral tilt per octave
    phases = rng.uniform(0.0, 2 * np.pi, size=n_harm)
    y = (weight[:, None] * np.sin(2 * np.pi * freqs[:, None] * t[None, :] + phases[:, None])).sum(axis=0)
    peak = np.max(np.abs(y)) or 1.0
    return amp * y / peak


def _apply_envelope(samples, cepstra, rate):
    """Filter through a smooth random spectral envelope (zero-phase FIR)."""
    if cepstra is None:
        return samples
    n_grid = 257
    freqs = np.linspace(0.0, 1.0, n_grid)
    logmag = np.zeros(n_grid)
    for m, c in enumerate(cepstra, start=1):
        logmag += c * np.cos(np.pi * m * freqs)
    mag = np.exp(logmag)
    impulse = np.fft.irfft(mag, n=2 * (n_grid - 1))
    taps = 129
    fir = np.roll(impulse, taps // 2)[:taps] * np.hanning(taps)
    return np.convolve(samples, fir, mode="same")


def _taper(y, rate):
    edge = min(len(y) // 4, int(0.005 * rate))
    if edge > 0:
        ramp = np.linspace(0.0, 1.0, edge)
        y[:edge] *= ramp
        y[-edge:] *= ramp[::-1]
    return y


def _render_phone(rng, phone, n, voice, rate):
    kind, params = _TEMPLATES[phone]
    scale = voice["vtl"] * voice["quirks"][phone]
    # Per-instance level jitter (syllable-level energy variation).
    amp = params.get("amp", 1.0) * 10.0 ** (rng.uniform(-14.0, 0.0) / 20.0)
    if kind == "quiet":
        return params["amp"] * rng.standard_normal(n)
    if kind == "noise":
        band = tuple(f * scale for f in params["band"])
        return _taper(_band_noise(rng, n, band, rate, amp), rate)
    if kind == "voiced":
        f0 = voice["f0"] * rng.uniform(0.98, 1.02)
        formants = tuple(f * scale for f in params["formants"])
        y = _harmonic(rng, n, f0, formants, rate, amp, tilt=params.get("tilt", -6.0))
        return _taper(y, rate)
    if kind == "glide":
        f0 = voice["f0"] * rng.uniform(0.98, 1.02)
        a = _harmonic(rng, n, f0, tuple(f * scale for f in params["start"]), rate, amp)
        b = _harmonic(rng, n, f0, tuple(f * scale for f in params["end"]), rate, amp)
        w = np.linspace(0.0, 1.0, n)
        return _taper((1 - w) * a + w * b, rate)
    if kind == "stop":
        gap = int(0.6 * n)
        burst = _band_noise(rng, n - gap, tuple(f * scale for f in params["band"]), rate, amp)
        burst *= np.exp(-np.arange(n - gap) / (0.012 * rate))
        return np.concatenate([0.003 * rng.standard_normal(gap), burst])
    if kind == "affricate":
        gap = int(0.3 * n)
        fric = _band_noise(rng, n - gap, tuple(f * scale for f in params["band"]), rate, amp)
        fric *= np.minimum(1.0, np.arange(n - gap) / (0.01 * rate))
        return np.concatenate([0.003 * rng.standard_normal(gap), _taper(fric, rate)])
    raise ConfigError(f"unknown template kind {kind!r}")


def synth_corpus(config: SynthConfig, out_dir) -> Path:
    """Generate the corpus on disk; returns the manifest path.

    Same config (and seed) always produces byte-identical files.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise LoadError(f"cannot create output directory {out}: {exc}") from exc

    plan = plan_corpus(config)
    rng = np.random.default_rng((config.seed, 0x5EED))
    rate = config.sample_rate
    dependent = (
        None
        if config.speaker_dependent_phones is None
        else set(config.speaker_dependent_phones)
    )

    voices = {
        f"spk{si:03d}": _speaker_params(rng) for si in range(config.n_speakers)
    }

    manifest_rows = []
    for utt_id, (speaker_id, schedule) in sorted(plan.utterances.items()):
        voice = voices[speaker_id]
        pieces = []
        segments = []
        cursor = 0
        for phone, n in schedule:
            speaker_specific = dependent is None or phone in dependent
            use_voice = voice if speaker_specific else _neutral_voice()
            piece = _render_phone(rng, phone, n, use_voice, rate)
            if speaker_specific:
                piece = _apply_envelope(piece, voice["envelope"], rate)
            pieces.append(piece)
            segments.append(
                PhoneSegment(cursor, cursor + n, phone, phone_to_broad_class(phone))
            )
            cursor += n
        samples = np.concatenate(pieces)
        peak = np.max(np.abs(samples)) or 1.0
        samples = 0.45 * samples / peak
        wav_name = f"{utt_id}.wav"
        phn_name = f"{utt_id}.phn"
        write_wav(out / wav_name, samples, rate)
        write_phn(out / phn_name, PhoneAlignment(utt_id, tuple(segments)))
        manifest_rows.append((utt_id, wav_name, phn_name, speaker_id))

    manifest = out / "manifest.csv"
    write_manifest(manifest, manifest_rows)
    return manifest


# ---------------------------------------------------------------------------
# splits and trial sampling
# ---------------------------------------------------------------------------


def split_per_speaker(corpus: Corpus, holdout_per_speaker: int, seed: int = 0):
    """Split utterance ids into (train_ids, heldout_ids), per speaker."""
    rng = np.random.default_rng(seed)
    train, held = [], []
    for speaker in corpus.speakers():
        utts = list(corpus.utterances_of(speaker))
        if holdout_per_speaker >= len(utts):
            raise ConfigError(
                f"speaker {speaker} has only {len(utts)} utterances, cannot "
                f"hold out {holdout_per_speaker}"
            )
        order = rng.permutation(len(utts))
        held.extend(utts[i] for i in order[:holdout_per_speaker])
        train.extend(utts[i] for i in order[holdout_per_speaker:])
    return tuple(sorted(train)), tuple(sorted(held))


def sample_trials(
    corpus: Corpus,
    n_target: int,
    n_nontarget: int,
    seed: int = 0,
    utterance_ids=None,
) -> TrialList:
    """Draw a seeded trial list over the given utterance ids."""
    rng = np.random.default_rng(seed)
    ids = sorted(utterance_ids) if utterance_ids is not None else list(corpus.ids())
    by_speaker: dict[str, list[str]] = {}
    for utt_id in ids:
        by_speaker.setdefault(corpus.get(utt_id).speaker_id, []).append(utt_id)
    multi = [s for s in sorted(by_speaker) if len(by_speaker[s]) >= 2]
    speakers = sorted(by_speaker)
    if not multi and n_target > 0:
        raise ConfigError("no speaker has two utterances; cannot draw target trials")
    if len(speakers) < 2 and n_nontarget > 0:
        raise ConfigError("need two speakers to draw nontarget trials")
    pairs = []
    for _ in range(n_target):
        spk = multi[int(rng.integers(len(multi)))]
        i, j = rng.choice(len(by_speaker[spk]), size=2, replace=False)
        pairs.append(Trial(by_speaker[spk][i], by_speaker[spk][j], True))
    for _ in range(n_nontarget):
        si, sj = rng.choice(len(speakers), size=2, replace=False)
        a = by_speaker[speakers[si]]
        b = by_speaker[speakers[sj]]
        pairs.append(Trial(a[int(rng.integers(len(a)))], b[int(rng.integers(len(b)))], False))
    return TrialList(tuple(pairs))
