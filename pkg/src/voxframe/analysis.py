"""Frame-level analysis of trained speaker networks.

Proxy tasks operating on per-frame embeddings: centroid classification of
broad phonetic classes, a linear phone probe trained on frozen frames, a
leave-one-out critical-phone analysis (which phones carry the most
speaker similarity), cross-utterance cosine similarity matrices, and a
2-d PCA projection of phone-segment embeddings.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import nn
from .backend import cosine_score
from .corpus import BROAD_CLASS_ORDER, BroadClass, Corpus, PhoneSegment
from .errors import (
    AnalysisError,
    DegenerateInputError,
    EmptySegmentError,
    NumericError,
    ShapeError,
)
from .frontend import FeatureMatrix, MfccConfig
from .model import FrameEmbeddings, SpeakerNet, prepare_features

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# segment embeddings and class centroids
# ---------------------------------------------------------------------------


def segment_frame_indices(fe: FrameEmbeddings, seg: PhoneSegment) -> np.ndarray:
    """Frames whose receptive-field centers fall inside the segment."""
    centers = fe.frame_centers
    return np.nonzero((centers >= seg.start_sample) & (centers < seg.end_sample))[0]


def segment_embedding(fe: FrameEmbeddings, seg: PhoneSegment) -> np.ndarray:
    """Mean of the frame vectors covered by the segment."""
    idx = segment_frame_indices(fe, seg)
    if idx.size == 0:
        raise EmptySegmentError(
            f"segment [{seg.start_sample}, {seg.end_sample}) covers no frame "
            f"at the {fe.rate_ms:g} ms rate of layer {fe.layer}"
        )
    return fe.vectors[idx].mean(axis=0)


@dataclass(frozen=True)
class ClassCentroids:
    layer: int
    epoch: int | None
    centroids: dict[BroadClass, np.ndarray]
    counts: dict[BroadClass, int]
    skipped_segments: int = 0

    def available_classes(self) -> tuple[BroadClass, ...]:
        return tuple(c for c in BROAD_CLASS_ORDER if c in self.centroids)


def collect_segment_embeddings(
    corpus: Corpus,
    net: SpeakerNet,
    utterance_ids,
    layer: int,
    features: dict[str, FeatureMatrix],
):
    """(embedding, segment, utterance_id) for each alignable phone segment.

    Segments too short to cover a frame at the layer rate are skipped and
    counted. Utterances without alignments are skipped and counted.
    """
    rows = []
    skipped_segments = 0
    skipped_utts = 0
    for utt_id in sorted(utterance_ids):
        ali = corpus.alignment(utt_id)
        if ali is None:
            skipped_utts += 1
            continue
        frames = net.frame_mode_forward(features[utt_id])[layer]
        for seg in ali.segments:
            try:
                emb = segment_embedding(frames, seg)
            except EmptySegmentError:
                skipped_segments += 1
                continue
            rows.append((emb, seg, utt_id))
    return rows, skipped_segments, skipped_utts


def compute_centroids(
    corpus: Corpus,
    net: SpeakerNet,
    utterance_ids,
    layer: int,
    features: dict[str, FeatureMatrix] | None = None,
    mfcc_config: MfccConfig = MfccConfig(),
    epoch: int | None = None,
) -> ClassCentroids:
    """Per-class mean of segment embeddings over the given split."""
    if features is None:
        features = prepare_features(corpus, mfcc_config, utterance_ids)
    rows, skipped, _ = collect_segment_embeddings(
        corpus, net, utterance_ids, layer, features
    )
    sums: dict[BroadClass, np.ndarray] = {}
    counts: dict[BroadClass, int] = {}
    for emb, seg, _ in rows:
        cls = seg.broad_class
        if cls in sums:
            sums[cls] += emb
            counts[cls] += 1
        else:
            sums[cls] = emb.copy()
            counts[cls] = 1
    if len(sums) < 2:
        raise AnalysisError(
            f"centroid training split has {len(sums)} classes; need at least 2"
        )
    centroids = {c: sums[c] / counts[c] for c in sums}
    return ClassCentroids(layer, epoch, centroids, counts, skipped)


def classify_segment(centroids: ClassCentroids, u: np.ndarray):
    """Nearest-centroid-by-cosine prediction.

    Returns (predicted class, {class: cosine}). Ties break toward the
    earlier class in the fixed broad-class order.
    """
    u = np.asarray(u, dtype=np.float64)
    if np.linalg.norm(u) == 0.0:
        raise DegenerateInputError("cannot classify a zero embedding")
    scores = {}
    best = None
    best_score = -np.inf
    for cls in centroids.available_classes():
        s = cosine_score(centroids.centroids[cls], u)
        scores[cls] = s
        if s > best_score:
            best, best_score = cls, s
    return best, scores


class CentroidClassifier(BaseEstimator, ClassifierMixin):
    """scikit-learn face of the same rule: per-class mean, argmax cosine."""

    def fit(self, X, y):
        x = np.asarray(X, dtype=np.float64)
        labels = np.asarray(y)
        if x.ndim != 2 or labels.shape[0] != x.shape[0]:
            raise ShapeError("X must be (n, d) with matching labels")
        self.classes_ = np.unique(labels)
        if self.classes_.size < 2:
            raise AnalysisError("need at least 2 classes")
        self.centroids_ = np.stack(
            [x[labels == c].mean(axis=0) for c in self.classes_]
        )
        self.tie_count_ = 0
        return self

    def cosine_scores(self, X):
        if not hasattr(self, "centroids_"):
            raise NotFittedError("CentroidClassifier is not fitted")
        x = np.asarray(X, dtype=np.float64)
        norms_x = np.linalg.norm(x, axis=1)
        if np.any(norms_x == 0.0):
            raise DegenerateInputError("cannot classify zero embeddings")
        norms_c = np.linalg.norm(self.centroids_, axis=1)
        return (x @ self.centroids_.T) / np.outer(norms_x, norms_c)

    def predict(self, X):
        scores = self.cosine_scores(X)
        best = scores.argmax(axis=1)
        top = scores[np.arange(scores.shape[0]), best]
        ties = (scores == top[:, None]).sum(axis=1) > 1
        self.tie_count_ += int(ties.sum())
        return self.classes_[best]


# ---------------------------------------------------------------------------
# broad-class evaluation
# ---------------------------------------------------------------------------


@dataclass
class BroadClassResult:
    layer: int
    epoch: int
    accuracy: float
    confusion: np.ndarray  # (8, 8) counts, rows truth in BROAD_CLASS_ORDER
    n_segments: int
    tie_count: int
    skipped_segments: int


def evaluate_broad_class(
    corpus: Corpus,
    checkpoints,
    layers,
    train_ids,
    eval_ids,
    features: dict[str, FeatureMatrix] | None = None,
    mfcc_config: MfccConfig = MfccConfig(),
) -> list[BroadClassResult]:
    """Centroid classification accuracy for each (layer, checkpoint).

    Centroids come from ``train_ids``; predictions are made on the
    segments of ``eval_ids``. Overlapping splits are refused.
    """
    overlap = set(train_ids) & set(eval_ids)
    if overlap:
        raise AnalysisError(f"train/eval splits share utterances: {sorted(overlap)[:5]}")
    if features is None:
        features = prepare_features(
            corpus, mfcc_config, sorted(set(train_ids) | set(eval_ids))
        )
    class_index = {c: i for i, c in enumerate(BROAD_CLASS_ORDER)}
    results = []
    for ckpt in checkpoints:
        for layer in layers:
            cents = compute_centroids(
                corpus, ckpt.net, train_ids, layer, features, epoch=ckpt.epoch
            )
            rows, skipped, _ = collect_segment_embeddings(
                corpus, ckpt.net, eval_ids, layer, features
            )
            confusion = np.zeros((len(BROAD_CLASS_ORDER), len(BROAD_CLASS_ORDER)), dtype=int)
            ties = 0
            for emb, seg, _ in rows:
                pred, scores = classify_segment(cents, emb)
                top = scores[pred]
                if sum(1 for s in scores.values() if s == top) > 1:
                    ties += 1
                confusion[class_index[seg.broad_class], class_index[pred]] += 1
            total = int(confusion.sum())
            accuracy = float(np.trace(confusion)) / total if total else 0.0
            results.append(
                BroadClassResult(
                    layer=layer,
                    epoch=ckpt.epoch,
                    accuracy=accuracy,
                    confusion=confusion,
                    n_segments=total,
                    tie_count=ties,
                    skipped_segments=skipped,
                )
            )
    return results


# ---------------------------------------------------------------------------
# linear phone probe
# ---------------------------------------------------------------------------


class PhoneProbe(BaseEstimator, ClassifierMixin):
    """Multinomial logistic probe trained by minibatch SGD.

    Measures how linearly decodable the phone label is from frozen frame
    embeddings. This is a frame-level probe, not a segmental recognizer:
    its output is a frame error rate.
    """

    def __init__(self, lr=0.2, max_epochs=100, tol=1e-5, batch_size=256, seed=0):
        self.lr = lr
        self.max_epochs = max_epochs
        self.tol = tol
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X, y):
        x = np.asarray(X, dtype=np.float64)
        labels = np.asarray(y)
        self.classes_ = np.unique(labels)
        if self.classes_.size < 2:
            raise AnalysisError("probe needs at least 2 distinct labels")
        index = {c: i for i, c in enumerate(self.classes_)}
        target = np.array([index[c] for c in labels])
        n, d = x.shape
        k = self.classes_.size
        rng = np.random.default_rng(self.seed)
        w = np.zeros((k, d))
        b = np.zeros(k)
        onehot = np.eye(k)[target]
        history = []
        prev = np.inf
        for _ in range(self.max_epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                sel = order[start : start + self.batch_size]
                logits = x[sel] @ w.T + b
                probs = nn.softmax(logits)
                grad = (probs - onehot[sel]) / sel.size
                w -= self.lr * (grad.T @ x[sel])
                b -= self.lr * grad.sum(axis=0)
            logits = x @ w.T + b
            shifted = logits - logits.max(axis=1, keepdims=True)
            log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            loss = float(-log_probs[np.arange(n), target].mean())
            history.append(loss)
            if abs(prev - loss) < self.tol:
                break
            prev = loss
        self.weights_ = w
        self.bias_ = b
        self.loss_history_ = history
        return self

    def predict(self, X):
        if not hasattr(self, "weights_"):
            raise NotFittedError("PhoneProbe is not fitted")
        logits = np.asarray(X, dtype=np.float64) @ self.weights_.T + self.bias_
        return self.classes_[logits.argmax(axis=1)]


def probe_frame_error(
    x_train, y_train, x_eval, y_eval, fold: dict | None = None, **probe_params
) -> float:
    """Frame error rate of the linear probe on held-out frames."""
    if fold:
        y_train = [fold.get(l, l) for l in y_train]
        y_eval = [fold.get(l, l) for l in y_eval]
    probe = PhoneProbe(**probe_params).fit(x_train, np.asarray(y_train))
    pred = probe.predict(x_eval)
    return float(np.mean(pred != np.asarray(y_eval)))


def frame_dataset(
    corpus: Corpus,
    net: SpeakerNet,
    utterance_ids,
    layer: int,
    features: dict[str, FeatureMatrix],
    label_fn,
    max_frames_per_utt: int | None = None,
    seed: int = 0,
):
    """Stack frame vectors with phone labels for probe training."""
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for utt_id in sorted(utterance_ids):
        ali = corpus.alignment(utt_id)
        if ali is None:
            continue
        fe = net.frame_mode_forward(features[utt_id])[layer]
        labels = label_fn(ali, layer, features[utt_id])
        take = np.arange(fe.vectors.shape[0])
        if max_frames_per_utt is not None and take.size > max_frames_per_utt:
            take = np.sort(rng.choice(take, size=max_frames_per_utt, replace=False))
        xs.append(fe.vectors[take])
        ys.extend(labels[i] for i in take)
    if not xs:
        raise AnalysisError("no aligned utterances for probe dataset")
    return np.concatenate(xs, axis=0), np.asarray(ys)


# ---------------------------------------------------------------------------
# critical phones (leave-one-out enrollment)
# ---------------------------------------------------------------------------


def enroll_speaker(embeddings) -> np.ndarray:
    """Average utterance-level embeddings into one speaker embedding."""
    rows = [np.asarray(e, dtype=np.float64) for e in embeddings]
    if not rows:
        raise AnalysisError("cannot enroll a speaker from zero embeddings")
    return np.mean(np.stack(rows), axis=0)


@dataclass
class UtteranceCritical:
    utterance_id: str
    speaker_id: str
    argmax_phone: str
    argmin_phone: str
    phone_mean_cosine: dict[str, float]
    tied: bool


@dataclass
class CriticalPhoneReport:
    rows: list[UtteranceCritical] = field(default_factory=list)
    argmax_histogram: Counter = field(default_factory=Counter)
    frequency_histogram: Counter = field(default_factory=Counter)
    skipped_utterances: int = 0
    tie_count: int = 0

    def frequency_rank(self) -> dict[str, int]:
        """1-based rank of each phone in the occurrence histogram."""
        ordered = sorted(self.frequency_histogram.items(), key=lambda kv: (-kv[1], kv[0]))
        return {phone: i + 1 for i, (phone, _) in enumerate(ordered)}


def critical_phone_stats(
    corpus: Corpus,
    net: SpeakerNet,
    layer: int = 6,
    utterance_ids=None,
    features: dict[str, FeatureMatrix] | None = None,
    mfcc_config: MfccConfig = MfccConfig(),
    label_fn=None,
) -> CriticalPhoneReport:
    """Which phones score highest against a leave-one-out speaker embedding.

    For every speaker with at least two utterances, each utterance is held
    out in turn: the remaining utterances are averaged into a speaker
    embedding, every frame of the held-out utterance is scored by cosine
    against it, frames are grouped by phone, and the utterance's
    highest-mean-cosine phone is recorded. The corpus-wide histogram of
    those argmax phones is returned next to the raw phone-occurrence
    histogram for rank comparison.
    """
    from .frontend import frame_phone_labels

    ids = sorted(utterance_ids) if utterance_ids is not None else list(corpus.ids())
    if features is None:
        features = prepare_features(corpus, mfcc_config, ids)
    report = CriticalPhoneReport()

    by_speaker: dict[str, list[str]] = {}
    for utt_id in ids:
        by_speaker.setdefault(corpus.get(utt_id).speaker_id, []).append(utt_id)

    for speaker in sorted(by_speaker):
        utts = by_speaker[speaker]
        if len(utts) < 2:
            report.skipped_utterances += len(utts)
            continue
        frame_sets = {}
        utt_embeddings = {}
        for utt_id in utts:
            fe = net.frame_mode_forward(features[utt_id])[layer]
            frame_sets[utt_id] = fe
            utt_embeddings[utt_id] = fe.vectors.mean(axis=0)
        for utt_id in utts:
            ali = corpus.alignment(utt_id)
            if ali is None:
                report.skipped_utterances += 1
                continue
            enrolled = enroll_speaker(
                [utt_embeddings[o] for o in utts if o != utt_id]
            )
            fe = frame_sets[utt_id]
            norm_e = np.linalg.norm(enrolled)
            norms = np.linalg.norm(fe.vectors, axis=1)
            safe = norms > 0.0
            cosines = np.zeros(fe.vectors.shape[0])
            cosines[safe] = (fe.vectors[safe] @ enrolled) / (norms[safe] * norm_e)
            if label_fn is not None:
                labels = label_fn(ali, layer, features[utt_id])
            else:
                labels = frame_phone_labels(
                    ali, layer, features[utt_id], net.config.kernels, net.config.strides
                )
            first_seen: dict[str, int] = {}
            sums: dict[str, float] = {}
            counts: dict[str, int] = {}
            for i, phone in enumerate(labels):
                first_seen.setdefault(phone, i)
                sums[phone] = sums.get(phone, 0.0) + float(cosines[i])
                counts[phone] = counts.get(phone, 0) + 1
            means = {p: sums[p] / counts[p] for p in sums}
            best_value = max(means.values())
            tied_phones = [p for p, m in means.items() if m == best_value]
            tied = len(tied_phones) > 1
            if tied:
                report.tie_count += 1
            argmax_phone = min(tied_phones, key=lambda p: first_seen[p])
            worst_value = min(means.values())
            argmin_phone = min(
                (p for p, m in means.items() if m == worst_value),
                key=lambda p: first_seen[p],
            )
            report.rows.append(
                UtteranceCritical(
                    utterance_id=utt_id,
                    speaker_id=speaker,
                    argmax_phone=argmax_phone,
                    argmin_phone=argmin_phone,
                    phone_mean_cosine=means,
                    tied=tied,
                )
            )
            report.argmax_histogram[argmax_phone] += 1
            for seg in ali.segments:
                report.frequency_histogram[seg.phone] += 1
    return report


# ---------------------------------------------------------------------------
# cross-utterance similarity
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    utterance_a: str
    utterance_b: str
    layer: int
    values: np.ndarray  # (frames_a, frames_b) cosines in [-1, 1]
    zero_frame_cells: int = 0


def cross_utterance_similarity(fe_a: FrameEmbeddings, fe_b: FrameEmbeddings) -> SimilarityMatrix:
    """Cosine similarity between every frame pair of two utterances."""
    if fe_a.layer != fe_b.layer or fe_a.rate_ms != fe_b.rate_ms:
        raise AnalysisError(
            f"layer/rate mismatch: {fe_a.layer}@{fe_a.rate_ms}ms vs "
            f"{fe_b.layer}@{fe_b.rate_ms}ms"
        )
    a, b = fe_a.vectors, fe_b.vectors
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    zero_a, zero_b = na == 0.0, nb == 0.0
    na = np.where(zero_a, 1.0, na)
    nb = np.where(zero_b, 1.0, nb)
    values = (a / na[:, None]) @ (b / nb[:, None]).T
    values = np.clip(values, -1.0, 1.0)
    zero_cells = 0
    if zero_a.any() or zero_b.any():
        values[zero_a, :] = 0.0
        values[:, zero_b] = 0.0
        zero_cells = int(zero_a.sum()) * b.shape[0] + int(zero_b.sum()) * a.shape[0]
        zero_cells -= int(zero_a.sum()) * int(zero_b.sum())
    if not np.all(np.isfinite(values)):
        raise NumericError("similarity matrix contains NaN/Inf")
    return SimilarityMatrix(
        fe_a.utterance_id, fe_b.utterance_id, fe_a.layer, values, zero_cells
    )


# ---------------------------------------------------------------------------
# 2-d PCA projection of segment embeddings
# ---------------------------------------------------------------------------


class PlanarProjection(BaseEstimator, TransformerMixin):
    """Top-2 principal components with a deterministic sign convention."""

    def fit(self, X, y=None):
        x = np.asarray(X, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 3:
            raise AnalysisError("PCA projection needs at least 3 samples")
        self.mean_ = x.mean(axis=0)
        centered = x - self.mean_
        cov = centered.T @ centered / x.shape[0]
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1]
        eigvals = np.maximum(eigvals[order], 0.0)
        components = eigvecs[:, order[:2]].T
        for row in components:
            if row[np.argmax(np.abs(row))] < 0:
                row *= -1.0
        self.components_ = components
        total = eigvals.sum()
        self.explained_variance_ = eigvals[:2]
        self.explained_variance_ratio_ = (
            eigvals[:2] / total if total > 0 else np.zeros(2)
        )
        return self

    def transform(self, X):
        if not hasattr(self, "components_"):
            raise NotFittedError("PlanarProjection is not fitted")
        return (np.asarray(X, dtype=np.float64) - self.mean_) @ self.components_.T


@dataclass(frozen=True, eq=False)
class PlanarResult:
    coordinates: np.ndarray  # (n, 2)
    explained_variance_ratio: np.ndarray  # (2,)
    components: np.ndarray  # (2, d)


def pca_project_2d(X) -> PlanarResult:
    proj = PlanarProjection().fit(X)
    return PlanarResult(
        coordinates=proj.transform(X),
        explained_variance_ratio=proj.explained_variance_ratio_,
        components=proj.components_,
    )
