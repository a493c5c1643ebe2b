"""Command-line pipeline driver.

Every subcommand writes its resolved parameters (plus seed and package
version) to ``run_config.json`` next to its outputs; rerunning with
``--config run_config.json`` reproduces the outputs byte for byte.
Outputs are plain CSV/JSON/PGM so figures can be rebuilt with any tool.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, backend, corpus as corpus_mod, frontend, model, reports
from .errors import ConfigError, VoxframeError

SUBCOMMANDS = (
    "synth",
    "mfcc",
    "train",
    "extract",
    "score",
    "ablate-relu",
    "analyze-broad",
    "probe",
    "critical-phones",
    "simmatrix",
    "project",
    "report",
)


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v != ""]


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_run_config(out_dir: Path, args, subparser) -> None:
    skip = {"help", "config"}
    params = {
        a.dest: getattr(args, a.dest)
        for a in subparser._actions
        if a.dest not in skip and hasattr(args, a.dest)
    }
    reports.write_json(
        out_dir / "run_config.json",
        {"subcommand": args.subcommand, "version": __version__, **params},
    )


def _load_corpus(manifest: str) -> corpus_mod.Corpus:
    path = Path(manifest)
    return corpus_mod.load_corpus(path.parent, path)


def _mfcc_config(args) -> frontend.MfccConfig:
    return frontend.MfccConfig(
        fft_size=getattr(args, "fft_size", 512),
        preemphasis=getattr(args, "preemphasis", 0.97),
        dither=getattr(args, "dither", 0.0),
    )


def _load_checkpoints(paths_arg: str):
    ckpts = []
    for p in paths_arg.split(","):
        net, header = model.SpeakerNet.load(p)
        ckpts.append(
            model.Checkpoint(
                epoch=int(header.get("epoch", -1)),
                net=net,
                update_count=int(header.get("update_count", 0)),
                lr=float(header.get("lr", 0.0)),
                path=Path(p),
            )
        )
    return ckpts


def _write_embeddings(path, rows):
    dim = len(rows[0][1]) if rows else 0
    header = ["utt_id"] + [f"e{i}" for i in range(dim)]
    reports.write_csv(path, header, [[utt_id, *vec] for utt_id, vec in rows])


def _read_embeddings(path):
    import csv as _csv

    out = {}
    with open(path, newline="") as f:
        reader = _csv.reader(f)
        next(reader)
        for row in reader:
            out[row[0]] = np.array([float(v) for v in row[1:]])
    return out


# ---------------------------------------------------------------------------
# handlers
# ---------------------------------------------------------------------------


def _cmd_synth(args, subparser) -> int:
    out = _out_dir(args)
    dependent = (
        tuple(args.speaker_dependent_phones.split(","))
        if args.speaker_dependent_phones
        else None
    )
    cfg = corpus_mod.SynthConfig(
        n_speakers=args.speakers,
        utts_per_speaker=args.utts_per_speaker,
        phones_per_utt=args.phones_per_utt,
        sample_rate=args.sample_rate,
        seed=args.seed,
        speaker_dependent_phones=dependent,
    )
    manifest = corpus_mod.synth_corpus(cfg, out)
    if args.trials > 0:
        made = corpus_mod.load_corpus(out, manifest)
        trials = corpus_mod.sample_trials(
            made, args.trials // 2, args.trials - args.trials // 2, seed=args.seed
        )
        corpus_mod.write_trials(out / "trials.txt", trials)
    _write_run_config(out, args, subparser)
    return 0


def _cmd_mfcc(args, subparser) -> int:
    out = _out_dir(args)
    corp = _load_corpus(args.manifest)
    cfg = _mfcc_config(args)
    for utt in corp:
        fm = frontend.compute_mfcc(utt, cfg)
        if not args.raw:
            fm = frontend.cmn(fm)
        frontend.write_features(out / f"{utt.id}.feat", fm, cfg)
    _write_run_config(out, args, subparser)
    return 0


def _build_net_for(args, corp) -> model.SpeakerNet:
    speakers = corp.speakers()
    preset = model.desk_config if args.preset == "desk" else model.full_scale_config
    cfg = preset(
        len(speakers),
        pooling=args.pooling,
        relu_before_fc2=args.relu_before_fc2,
        crop_seconds=args.crop_seconds,
    )
    return model.build(cfg, seed=args.seed)


def _cmd_train(args, subparser) -> int:
    out = _out_dir(args)
    corp = _load_corpus(args.manifest)
    train_ids, held_ids = (
        corpus_mod.split_per_speaker(corp, args.holdout_per_speaker, seed=args.seed)
        if args.holdout_per_speaker > 0
        else (corp.ids(), ())
    )
    net = _build_net_for(args, corp)
    augment = (
        model.AugmentConfig(kind=args.augment, snr_db=args.snr_db)
        if args.augment != "none"
        else None
    )
    hyper = model.TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        lr_decay=args.lr_decay,
        decay_every=args.decay_every,
        batch_size=args.batch_size,
        crops_per_utterance=args.crops_per_utterance,
        seed=args.seed,
        checkpoint_epochs=(
            tuple(_int_list(args.checkpoint_epochs)) if args.checkpoint_epochs else None
        ),
        augment=augment,
    )
    model.train(net, corp, hyper, _mfcc_config(args), utterance_ids=train_ids, out_dir=out)
    (out / "train_ids.txt").write_text("\n".join(train_ids) + "\n")
    (out / "heldout_ids.txt").write_text("\n".join(held_ids) + ("\n" if held_ids else ""))
    (out / "speakers.txt").write_text("\n".join(corp.speakers()) + "\n")
    _write_run_config(out, args, subparser)
    return 0


def _cmd_extract(args, subparser) -> int:
    out = _out_dir(args)
    corp = _load_corpus(args.manifest)
    net, _ = model.SpeakerNet.load(args.checkpoint)
    ids = (
        [l for l in Path(args.ids).read_text().splitlines() if l.strip()]
        if args.ids
        else list(corp.ids())
    )
    feats = model.prepare_features(corp, _mfcc_config(args), ids)
    rows = [(utt_id, net.extract_embedding(feats[utt_id], args.tap)) for utt_id in sorted(ids)]
    _write_embeddings(out / f"embeddings_{args.tap}.csv", rows)
    _write_run_config(out, args, subparser)
    return 0


def _score_trials(trials, embeddings, scorer):
    rows = []
    for t in trials:
        if t.enroll_id not in embeddings or t.test_id not in embeddings:
            raise ConfigError(f"embedding missing for trial ({t.enroll_id}, {t.test_id})")
        rows.append(
            (t.enroll_id, t.test_id, scorer(embeddings[t.enroll_id], embeddings[t.test_id]), t.is_target)
        )
    return rows


def _metrics_from_rows(rows):
    scores = np.array([r[2] for r in rows])
    labels = np.array([r[3] for r in rows])
    eer = backend.compute_eer(scores, labels)
    return {
        "eer": eer.eer,
        "threshold": eer.threshold,
        "dcf_p01": backend.compute_min_dcf(scores, labels, 0.01),
        "dcf_p001": backend.compute_min_dcf(scores, labels, 0.001),
        "n_target": int(labels.sum()),
        "n_nontarget": int((~labels).sum()),
    }


def _cmd_score(args, subparser) -> int:
    out = _out_dir(args)
    trials = corpus_mod.parse_trials(args.trials)
    embeddings = _read_embeddings(args.embeddings)
    if args.backend == "cosine":
        rows = _score_trials(trials, embeddings, backend.cosine_score)
    else:
        corp = _load_corpus(args.manifest)
        train_embs = (
            _read_embeddings(args.train_embeddings)
            if args.train_embeddings
            else embeddings
        )
        ids = sorted(train_embs)
        matrix = np.stack([train_embs[i] for i in ids])
        labels = [corp.get(i).speaker_id for i in ids]
        model_b = backend.train_backend(
            matrix, labels, lda_dim=args.lda_dim, plda_iters=args.plda_iters
        )
        rows = _score_trials(
            trials, embeddings, lambda a, b: float(model_b.llr(a, b))
        )
    reports.write_scores(out / "scores.txt", rows)
    metrics = _metrics_from_rows(rows)
    reports.write_json(out / "metrics.json", {"backend": args.backend, **metrics})
    _write_run_config(out, args, subparser)
    return 0


def _cmd_ablate_relu(args, subparser) -> int:
    out = _out_dir(args)
    corp = _load_corpus(args.manifest)
    train_ids, held_ids = corpus_mod.split_per_speaker(
        corp, args.holdout_per_speaker, seed=args.seed
    )
    trials = corpus_mod.sample_trials(
        corp, args.trials // 2, args.trials - args.trials // 2,
        seed=args.seed, utterance_ids=held_ids,
    )
    mfcc_cfg = _mfcc_config(args)
    feats = model.prepare_features(corp, mfcc_cfg)
    table = []
    for relu_flag in (True, False):
        cfg = model.desk_config(
            len(corp.speakers()), pooling="statistics", relu_before_fc2=relu_flag
        )
        net = model.build(cfg, seed=args.seed)
        hyper = model.TrainConfig(
            epochs=args.epochs,
            lr=args.lr,
            batch_size=args.batch_size,
            crops_per_utterance=args.crops_per_utterance,
            seed=args.seed,
            checkpoint_epochs=(args.epochs,),
        )
        model.train(net, corp, hyper, mfcc_cfg, utterance_ids=train_ids, features=feats)
        for tap in ("fc1", "fc2"):
            embs = {i: net.extract_embedding(feats[i], tap) for i in corp.ids()}
            train_matrix = np.stack([embs[i] for i in train_ids])
            labels = [corp.get(i).speaker_id for i in train_ids]
            model_b = backend.train_backend(train_matrix, labels, plda_iters=args.plda_iters)
            rows = _score_trials(trials, embs, lambda a, b: float(model_b.llr(a, b)))
            metrics = _metrics_from_rows(rows)
            table.append(
                (
                    "yes" if relu_flag else "no",
                    tap,
                    metrics["eer"],
                    metrics["dcf_p01"],
                    metrics["dcf_p001"],
                )
            )
    reports.write_csv(
        out / "ablation.csv",
        ["relu_before_fc2", "tap", "eer", "dcf_p01", "dcf_p001"],
        table,
    )
    _write_run_config(out, args, subparser)
    return 0


def _split_ids(args, corp):
    train_ids, eval_ids = corpus_mod.split_per_speaker(
        corp, args.eval_per_speaker, seed=args.split_seed
    )
    return train_ids, eval_ids


def _cmd_analyze_broad(args, subparser) -> int:
    out = _out_dir(args)
    corp = _load_corpus(args.manifest)
    ckpts = _load_checkpoints(args.checkpoints)
    layers = _int_list(args.layers)
    train_ids, eval_ids = _split_ids(args, corp)
    feats = model.prepare_features(corp, _mfcc_config(args))
    results = analysis.evaluate_broad_class(
        corp, ckpts, layers, train_ids, eval_ids, features=feats
    )
    reports.write_csv(
        out / "accuracy.csv",
        ["layer", "epoch", "accuracy", "n_segments", "ties", "skipped_segments"],
        [
            (r.layer, r.epoch, r.accuracy, r.n_segments, r.tie_count, r.skipped_segments)
            for r in results
        ],
    )
    names = [c.value for c in corpus_mod.BROAD_CLASS_ORDER]
    for r in results:
        stem = f"confusion_layer{r.layer}_ep{r.epoch:04d}"
        reports.write_csv(
            out / f"{stem}.csv",
            ["truth\\prediction"] + names,
            [[names[i], *r.confusion[i]] for i in range(len(names))],
        )
        reports.write_pgm(
            out / f"{stem}.pgm",
            r.confusion.astype(float),
            sidecar_extra={"classes": names, "layer": r.layer, "epoch": r.epoch},
        )
    _write_run_config(out, args, subparser)
    return 0


def _cmd_probe(args, subparser) -> int:
    out = _out_dir(args)
    corp = _load_corpus(args.manifest)
    ckpts = _load_checkpoints(args.checkpoints)
    layers = _int_list(args.layers)
    train_ids, eval_ids = _split_ids(args, corp)
    feats = model.prepare_features(corp, _mfcc_config(args))

    rows = []
    for ckpt in ckpts:
        for layer in layers:
            label_fn = lambda ali, lyr, fm: frontend.frame_phone_labels(
                ali, lyr, fm, ckpt.net.config.kernels, ckpt.net.config.strides
            )
            x_tr, y_tr = analysis.frame_dataset(
                corp, ckpt.net, train_ids, layer, feats, label_fn,
                max_frames_per_utt=args.max_frames_per_utt, seed=args.seed,
            )
            x_ev, y_ev = analysis.frame_dataset(
                corp, ckpt.net, eval_ids, layer, feats, label_fn,
                max_frames_per_utt=args.max_frames_per_utt, seed=args.seed,
            )
            fer = analysis.probe_frame_error(
                x_tr, y_tr, x_ev, y_ev, seed=args.seed, max_epochs=args.probe_epochs
            )
            rows.append((layer, ckpt.epoch, fer, len(y_tr), len(y_ev)))
    reports.write_csv(
        out / "probe_fer.csv",
        ["layer", "epoch", "frame_error_rate", "n_train_frames", "n_eval_frames"],
        rows,
    )
    _write_run_config(out, args, subparser)
    return 0


def _cmd_critical_phones(args, subparser) -> int:
    out = _out_dir(args)
    corp = _load_corpus(args.manifest)
    (ckpt,) = _load_checkpoints(args.checkpoint)
    feats = model.prepare_features(corp, _mfcc_config(args))
    report = analysis.critical_phone_stats(
        corp, ckpt.net, layer=args.layer, features=feats
    )
    ranks = report.frequency_rank()
    reports.write_csv(
        out / "critical_phones.csv",
        ["phone", "count", "rank_in_frequency_histogram"],
        [
            (phone, count, ranks.get(phone, 0))
            for phone, count in sorted(
                report.argmax_histogram.items(), key=lambda kv: (-kv[1], kv[0])
            )
        ],
    )
    reports.write_csv(
        out / "phone_frequency.csv",
        ["phone", "count"],
        sorted(report.frequency_histogram.items(), key=lambda kv: (-kv[1], kv[0])),
    )
    reports.write_csv(
        out / "per_utterance.csv",
        ["utt_id", "speaker_id", "argmax_phone", "argmin_phone", "tied"],
        [
            (r.utterance_id, r.speaker_id, r.argmax_phone, r.argmin_phone, int(r.tied))
            for r in report.rows
        ],
    )
    reports.write_json(
        out / "critical_summary.json",
        {
            "n_utterances": len(report.rows),
            "ties": report.tie_count,
            "skipped_utterances": report.skipped_utterances,
        },
    )
    _write_run_config(out, args, subparser)
    return 0


def _cmd_simmatrix(args, subparser) -> int:
    out = _out_dir(args)
    corp = _load_corpus(args.manifest)
    (ckpt,) = _load_checkpoints(args.checkpoint)
    feats = model.prepare_features(corp, _mfcc_config(args), [args.utt_a, args.utt_b])
    fe_a = ckpt.net.frame_mode_forward(feats[args.utt_a])[args.layer]
    fe_b = ckpt.net.frame_mode_forward(feats[args.utt_b])[args.layer]
    sim = analysis.cross_utterance_similarity(fe_a, fe_b)

    def ticks(utt_id, fe):
        ali = corp.alignment(utt_id)
        if ali is None:
            return []
        return [
            {
                "frame": int(np.searchsorted(fe.frame_centers, seg.start_sample)),
                "phone": seg.phone,
            }
            for seg in ali.segments
        ]

    stem = f"simmatrix_{args.utt_a}_{args.utt_b}_layer{args.layer}"
    reports.write_csv(
        out / f"{stem}.csv",
        ["frame_a"] + [f"b{j}" for j in range(sim.values.shape[1])],
        [[i, *sim.values[i]] for i in range(sim.values.shape[0])],
    )
    reports.write_pgm(
        out / f"{stem}.pgm",
        sim.values,
        value_range=(-1.0, 1.0),
        sidecar_extra={
            "utterance_a": args.utt_a,
            "utterance_b": args.utt_b,
            "layer": args.layer,
            "row_ticks": ticks(args.utt_a, fe_a),
            "col_ticks": ticks(args.utt_b, fe_b),
            "zero_frame_cells": sim.zero_frame_cells,
        },
    )
    _write_run_config(out, args, subparser)
    return 0


def _cmd_project(args, subparser) -> int:
    out = _out_dir(args)
    corp = _load_corpus(args.manifest)
    (ckpt,) = _load_checkpoints(args.checkpoint)
    feats = model.prepare_features(corp, _mfcc_config(args))
    rows, _, _ = analysis.collect_segment_embeddings(
        corp, ckpt.net, corp.ids(), args.layer, feats
    )
    if len(rows) < 3:
        raise ConfigError("need at least 3 segments to project")
    matrix = np.stack([emb for emb, _, _ in rows])
    result = analysis.pca_project_2d(matrix)
    reports.write_csv(
        out / "projection.csv",
        ["utt_id", "start_sample", "end_sample", "phone", "broad_class", "x", "y"],
        [
            (
                utt_id,
                seg.start_sample,
                seg.end_sample,
                seg.phone,
                seg.broad_class.value,
                result.coordinates[i, 0],
                result.coordinates[i, 1],
            )
            for i, (_, seg, utt_id) in enumerate(rows)
        ],
    )
    reports.write_json(
        out / "projection_variance.json",
        {
            "explained_variance_ratio": [float(v) for v in result.explained_variance_ratio],
            "layer": args.layer,
        },
    )
    _write_run_config(out, args, subparser)
    return 0


def _cmd_report(args, subparser) -> int:
    root = Path(args.dir)
    if not root.is_dir():
        raise ConfigError(f"report target {root} is not a directory")
    lines = ["# Run summary", ""]
    for path in sorted(root.rglob("metrics.json")):
        data = json.loads(path.read_text())
        lines.append(f"## {path.relative_to(root)}")
        for key in sorted(data):
            lines.append(f"- {key}: {data[key]}")
        lines.append("")
    for path in sorted(root.rglob("*.csv")):
        rel = path.relative_to(root)
        with open(path) as f:
            header = f.readline().strip()
            n_rows = sum(1 for _ in f)
        lines.append(f"- `{rel}`: {n_rows} rows ({header})")
    (root / "summary.md").write_text("\n".join(lines) + "\n")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


# Flags that must be present after merging --config defaults. They are not
# argparse-required so a config file can supply them.
REQUIRED_FLAGS = {
    "synth": ("out",),
    "mfcc": ("manifest", "out"),
    "train": ("manifest", "out"),
    "extract": ("manifest", "checkpoint", "out"),
    "score": ("embeddings", "trials", "out"),
    "ablate-relu": ("manifest", "out"),
    "analyze-broad": ("manifest", "out", "checkpoints"),
    "probe": ("manifest", "out", "checkpoints"),
    "critical-phones": ("manifest", "out", "checkpoint"),
    "simmatrix": ("manifest", "out", "checkpoint", "utt_a", "utt_b"),
    "project": ("manifest", "out", "checkpoint"),
    "report": ("dir",),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="voxframe", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="subcommand")
    registry = {}

    def sub(name, **kw):
        p = subs.add_parser(name, **kw)
        p.add_argument("--config", default=None, help="JSON run config to load defaults from")
        registry[name] = p
        return p

    p = sub("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=False)
    p.add_argument("--speakers", type=int, default=20)
    p.add_argument("--utts-per-speaker", type=int, default=10)
    p.add_argument("--phones-per-utt", type=int, default=16)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=0, help="also write a trial list of this size")
    p.add_argument("--speaker-dependent-phones", default=None)

    p = sub("mfcc", help="dump MFCC feature files")
    p.add_argument("--manifest", required=False)
    p.add_argument("--out", required=False)
    p.add_argument("--fft-size", type=int, default=512)
    p.add_argument("--preemphasis", type=float, default=0.97)
    p.add_argument("--dither", type=float, default=0.0)
    p.add_argument("--raw", action="store_true", help="skip mean normalization")

    p = sub("train", help="train a speaker classifier")
    p.add_argument("--manifest", required=False)
    p.add_argument("--out", required=False)
    p.add_argument("--preset", choices=("desk", "full"), default="desk")
    p.add_argument("--pooling", choices=("statistics", "average"), default="statistics")
    p.add_argument("--relu-before-fc2", action="store_true")
    p.add_argument("--crop-seconds", type=float, default=2.0)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--lr-decay", type=float, default=0.98)
    p.add_argument("--decay-every", type=int, default=50000)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--crops-per-utterance", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint-epochs", default=None, help="comma list, default auto")
    p.add_argument("--holdout-per-speaker", type=int, default=0)
    p.add_argument("--augment", choices=("none", "white", "babble"), default="none")
    p.add_argument("--snr-db", type=float, default=10.0)

    p = sub("extract", help="extract embeddings to CSV")
    p.add_argument("--manifest", required=False)
    p.add_argument("--checkpoint", required=False)
    p.add_argument("--out", required=False)
    p.add_argument("--tap", choices=("fc1", "fc2"), default="fc2")
    p.add_argument("--ids", default=None, help="file with one utterance id per line")

    p = sub("score", help="score trials with cosine or LDA+PLDA")
    p.add_argument("--embeddings", required=False)
    p.add_argument("--trials", required=False)
    p.add_argument("--out", required=False)
    p.add_argument("--backend", choices=("cosine", "plda"), default="cosine")
    p.add_argument("--manifest", default=None, help="needed for plda labels")
    p.add_argument("--train-embeddings", default=None)
    p.add_argument("--lda-dim", type=int, default=None)
    p.add_argument("--plda-iters", type=int, default=10)

    p = sub("ablate-relu", help="4-cell tap x relu ablation table")
    p.add_argument("--manifest", required=False)
    p.add_argument("--out", required=False)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.002)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--crops-per-utterance", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout-per-speaker", type=int, default=2)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--plda-iters", type=int, default=10)

    def analysis_common(p):
        p.add_argument("--manifest", required=False)
        p.add_argument("--out", required=False)
        p.add_argument("--split-seed", type=int, default=0)
        p.add_argument("--eval-per-speaker", type=int, default=2)

    p = sub("analyze-broad", help="broad-class centroid classification")
    analysis_common(p)
    p.add_argument("--checkpoints", required=False, help="comma list of checkpoint files")
    p.add_argument("--layers", default="1,6")

    p = sub("probe", help="linear phone probe frame error rates")
    analysis_common(p)
    p.add_argument("--checkpoints", required=False)
    p.add_argument("--layers", default="1,6")
    p.add_argument("--max-frames-per-utt", type=int, default=200)
    p.add_argument("--probe-epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)

    p = sub("critical-phones", help="leave-one-out critical phone histogram")
    p.add_argument("--manifest", required=False)
    p.add_argument("--out", required=False)
    p.add_argument("--checkpoint", required=False)
    p.add_argument("--layer", type=int, default=6)

    p = sub("simmatrix", help="frame-level cosine similarity matrix")
    p.add_argument("--manifest", required=False)
    p.add_argument("--out", required=False)
    p.add_argument("--checkpoint", required=False)
    p.add_argument("--utt-a", required=False)
    p.add_argument("--utt-b", required=False)
    p.add_argument("--layer", type=int, default=6)

    p = sub("project", help="2-d PCA of phone-segment embeddings")
    p.add_argument("--manifest", required=False)
    p.add_argument("--out", required=False)
    p.add_argument("--checkpoint", required=False)
    p.add_argument("--layer", type=int, default=6)

    p = sub("report", help="collate CSV/JSON artifacts into summary.md")
    p.add_argument("--dir", required=False)

    return parser, registry


HANDLERS = {
    "synth": _cmd_synth,
    "mfcc": _cmd_mfcc,
    "train": _cmd_train,
    "extract": _cmd_extract,
    "score": _cmd_score,
    "ablate-relu": _cmd_ablate_relu,
    "analyze-broad": _cmd_analyze_broad,
    "probe": _cmd_probe,
    "critical-phones": _cmd_critical_phones,
    "simmatrix": _cmd_simmatrix,
    "project": _cmd_project,
    "report": _cmd_report,
}


def dispatch(argv) -> int:
    """Run one subcommand; returns the process exit code."""
    parser, registry = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    if args.subcommand is None:
        parser.print_usage(sys.stderr)
        return 2
    sub = registry[args.subcommand]
    try:
        if getattr(args, "config", None):
            stored = json.loads(Path(args.config).read_text())
            stored.pop("version", None)
            stored_sub = stored.pop("subcommand", args.subcommand)
            if stored_sub != args.subcommand:
                raise ConfigError(
                    f"config file is for {stored_sub!r}, not {args.subcommand!r}"
                )
            valid = {a.dest for a in sub._actions} - {"help", "config"}
            unknown = set(stored) - valid
            if unknown:
                raise ConfigError(f"unknown config keys {sorted(unknown)!r}")
            sub.set_defaults(**stored)
            try:
                args = parser.parse_args(argv)
            except SystemExit as exc:
                return exc.code if isinstance(exc.code, int) else 2
        missing = [
            f"--{dest.replace('_', '-')}"
            for dest in REQUIRED_FLAGS[args.subcommand]
            if getattr(args, dest, None) is None
        ]
        if missing:
            print(
                f"usage error: {args.subcommand} requires {', '.join(missing)}",
                file=sys.stderr,
            )
            return 2
        return HANDLERS[args.subcommand](args, sub)
    except VoxframeError as exc:
        print(
            f"ERROR kind={type(exc).__name__} message={str(exc)!r}",
            file=sys.stderr,
        )
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"ERROR kind={type(exc).__name__} message={str(exc)!r}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
