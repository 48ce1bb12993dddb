"""Flat-file exports: report tables, training curves, and figure images.

Images are plain 8-bit binary PGM so they need no plotting stack; masks
and spectrograms are written with frequency on the vertical axis, low
bins at the bottom.
"""

import csv
import json
import os

import numpy as np

REPORT_FIELDS = ("noise", "snr_db", "target", "metric", "mean", "std", "n")
HISTORY_FIELDS = ("epoch", "train_mse", "val_mse", "momentum", "learning_rate")


def _ensure_parent(path):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def mask_to_csv(path, values):
    """One CSV row per frame, one column per frequency bin."""
    _ensure_parent(path)
    np.savetxt(path, np.asarray(values, dtype=np.float64),
               delimiter=",", fmt="%.9g")


def report_to_csv(path, rows):
    _ensure_parent(path)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in REPORT_FIELDS})


def history_to_csv(path, history):
    _ensure_parent(path)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
        writer.writeheader()
        for row in history:
            writer.writerow({k: row[k] for k in HISTORY_FIELDS})


def results_to_jsonl(path, results):
    _ensure_parent(path)
    with open(path, "w") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def coherence_to_csv(path, freqs_hz, columns):
    """columns: mapping of column name to an F-vector."""
    _ensure_parent(path)
    names = sorted(columns)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["freq_hz"] + names)
        for i, f in enumerate(freqs_hz):
            writer.writerow([format(f, ".6g")] +
                            [format(columns[n][i], ".9g") for n in names])


def matrix_to_pgm(path, values, vmin=None, vmax=None):
    """Write a (frames, bins) matrix as binary PGM, low bins at the
    bottom.  Values are min-max scaled unless explicit bounds are given."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    lo = m.min() if vmin is None else vmin
    hi = m.max() if vmax is None else vmax
    span = hi - lo if hi > lo else 1.0
    scaled = np.clip((m - lo) / span, 0.0, 1.0)
    image = np.flipud(np.round(scaled.T * 255.0).astype(np.uint8))
    _ensure_parent(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def spectrogram_to_pgm(path, spec, dyn_range_db=80.0):
    """Log-magnitude image clipped to the top dyn_range_db decibels."""
    db = 20.0 * np.log10(np.abs(spec.bins) + 1e-12)
    top = db.max()
    matrix_to_pgm(path, db, vmin=top - dyn_range_db, vmax=top)
