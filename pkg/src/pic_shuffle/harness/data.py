"""Location datasets: CSV ingestion and synthetic stand-ins."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HEADER = ["id", "x", "y"]

# (users, workers) per crowdsourcing dataset, with its source box and serving radius.
GMISSION = {"sizes": (713, 532), "box": ((0.0, 0.0), (5.0, 5.0)), "radius": 1.0}
EVERYSENDER = {"sizes": (4036, 817)}


class DataError(ValueError):
    """Malformed dataset; ``line`` is the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def load_locations_csv(path: str | Path) -> np.ndarray:
    """Read an ``id,x,y`` file into an ``(n, 2)`` array of source coordinates.

    Raises:
        DataError: Wrong header, wrong field count, or a non-finite or
            non-numeric coordinate, reported with its line number.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != HEADER:
            raise DataError(f"expected header {','.join(HEADER)}", 1)
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != 3:
                raise DataError(f"expected 3 fields, got {len(row)}", line)
            try:
                x, y = float(row[1]), float(row[2])
            except ValueError:
                raise DataError(f"non-numeric coordinate in {row!r}", line) from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise DataError("non-finite coordinate", line)
            rows.append((x, y))
    return np.array(rows, dtype=float).reshape(-1, 2)


def locations_csv(points) -> str:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for i, (x, y) in enumerate(pts):
        writer.writerow([i, repr(float(x)), repr(float(y))])
    return buf.getvalue()


def write_locations_csv(path: str | Path, points) -> None:
    Path(path).write_text(locations_csv(points))


@dataclass(frozen=True)
class Uniform:
    pass


@dataclass(frozen=True)
class Clusters:
    """``k`` Gaussian clusters with per-axis standard deviation ``spread``."""

    k: int
    spread: float


def synth_locations(n: int, box, distribution, rng: np.random.Generator) -> np.ndarray:
    """``n`` points inside ``box = ((xmin, ymin), (xmax, ymax))``.

    Cluster centres are drawn at least three spreads from the box edges and
    the rare points still falling outside are redrawn, so the within-cluster
    spread is preserved.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    if isinstance(distribution, Uniform):
        return lo + (hi - lo) * rng.random((n, lo.shape[0]))
    if not isinstance(distribution, Clusters):
        raise ValueError(f"unknown distribution {distribution!r}")
    k, s = distribution.k, distribution.spread
    if k < 1 or not s > 0:
        raise ValueError("clusters need k >= 1 and spread > 0")
    margin = np.minimum(3 * s, (hi - lo) / 2)
    centers = lo + margin + (hi - lo - 2 * margin) * rng.random((k, lo.shape[0]))
    labels = rng.integers(0, k, size=n)
    pts = centers[labels] + s * rng.standard_normal((n, lo.shape[0]))
    bad = np.flatnonzero(np.any((pts < lo) | (pts > hi), axis=1))
    while bad.size:
        pts[bad] = centers[labels[bad]] + s * rng.standard_normal((bad.size, lo.shape[0]))
        bad = bad[np.any((pts[bad] < lo) | (pts[bad] > hi), axis=1)]
    return pts
