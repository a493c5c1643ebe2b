"""Deterministic artifact writers: CSV tables, P5 PGM heatmaps with JSON
sidecars, score files, and metrics JSON."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import FormatError


def fmt(value) -> str:
    """Stable text form; floats use repr (shortest round-trip)."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_pgm(path, values, value_range=None, sidecar_extra=None) -> None:
    """8-bit binary PGM heatmap plus a JSON sidecar with the value range."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise FormatError("PGM heatmap needs a 2-d array")
    if value_range is None:
        lo, hi = float(arr.min()), float(arr.max())
        if hi == lo:
            hi = lo + 1.0
    else:
        lo, hi = value_range
    scaled = np.clip((arr - lo) / (hi - lo), 0.0, 1.0)
    pixels = np.rint(scaled * 255.0).astype(np.uint8)
    path = Path(path)
    with open(path, "wb") as f:
        f.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
    sidecar = {
        "rows": arr.shape[0],
        "cols": arr.shape[1],
        "value_range": [lo, hi],
    }
    if sidecar_extra:
        sidecar.update(sidecar_extra)
    write_json(path.with_suffix(path.suffix + ".json"), sidecar)


def read_pgm(path):
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise FormatError(f"{path}: not a binary PGM")
    parts = data.split(b"\n", 3)
    if len(parts) < 4:
        raise FormatError(f"{path}: truncated PGM header")
    cols, rows = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8, count=rows * cols)
    return pixels.reshape(rows, cols)


def write_scores(path, rows) -> None:
    """Score file lines: utt1 utt2 score label."""
    lines = [
        f"{enroll} {test} {fmt(score)} {1 if is_target else 0}"
        for enroll, test, score, is_target in rows
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_scores(path):
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        enroll, test, score, label = line.split()
        rows.append((enroll, test, float(score), label == "1"))
    return rows


def write_metrics(path, eer, dcf_p01, dcf_p001, n_target, n_nontarget, extra=None) -> None:
    obj = {
        "eer": eer,
        "dcf_p01": dcf_p01,
        "dcf_p001": dcf_p001,
        "n_target": n_target,
        "n_nontarget": n_nontarget,
    }
    if extra:
        obj.update(extra)
    write_json(path, obj)
