"""CSV, JSON and manifest emission for run directories."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

FLOAT_FORMAT = "%.16e"


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return FLOAT_FORMAT % x


def write_csv(path, header, rows) -> Path:
    """Comma-separated table with a header row and 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row of length {len(row)} under a header of length {len(header)}")
            w.writerow([_cell(x) for x in row])
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = np.array([[float(x) for x in row] for row in r], dtype=float)
    return header, data.reshape(-1, len(header))


def matrix_rows(rho, N: int):
    """(j, k, re, im) rows of a square matrix over charges -N..N."""
    rho = np.asarray(rho)
    for a in range(rho.shape[0]):
        for b in range(rho.shape[1]):
            z = complex(rho[a, b])
            yield (a - N, b - N, z.real, z.imag)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    return path


def sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, config: dict, version: str, wall_clock: float, outputs, seed: int,
                   extra: dict | None = None) -> Path:
    """manifest.json with the config echo and a checksum per output file."""
    out_dir = Path(out_dir)
    manifest = {
        "config": config,
        "version": version,
        "wall_clock_s": wall_clock,
        "generator": "numpy Philox",
        "seed": seed,
        "outputs": {Path(p).relative_to(out_dir).as_posix(): sha256(p) for p in sorted(map(Path, outputs))},
    }
    if extra:
        manifest.update(extra)
    return write_json(out_dir / "manifest.json", manifest)
