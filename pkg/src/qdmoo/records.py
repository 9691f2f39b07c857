"""On-disk formats: config hashes, 17-digit CSV matrices and JSONL traces."""

import csv
import hashlib
import json

import numpy as np

HASH_PREFIX = "config_hash="


def config_hash(data):
    """Short SHA-256 of the canonical JSON form of ``data``."""
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def header_line(chash, **extra):
    parts = [f"{HASH_PREFIX}{chash}"] + [f"{k}={v}" for k, v in extra.items()]
    return "qdmoo " + " ".join(parts)


def fmt(value):
    """Round-trip float formatting; empty cell for NaN."""
    value = float(value)
    return "" if np.isnan(value) else f"{value:.17g}"


def write_matrix_csv(path, matrix, columns, header_comment=None):
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in matrix:
            w.writerow([fmt(v) for v in row])


def write_rows_csv(path, columns, rows, header_comment=None):
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path):
    """Return ``(comment, columns, rows)``; rows stay as strings."""
    comment = None
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if lines and lines[0].startswith("#"):
        comment = lines[0][1:].strip()
        lines = lines[1:]
    rows = list(csv.reader(lines))
    return comment, rows[0], rows[1:]


def read_matrix_csv(path):
    comment, columns, rows = read_csv(path)
    data = np.array([[float(v) if v != "" else np.nan for v in r] for r in rows], dtype=float)
    return comment, columns, data.reshape(len(rows), len(columns))


def hash_from_comment(comment):
    for token in (comment or "").split():
        if token.startswith(HASH_PREFIX):
            return token[len(HASH_PREFIX):]
    return None


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
