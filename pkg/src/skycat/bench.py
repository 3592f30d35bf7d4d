"""Sequential-scan benchmark over the PhotoObj table.

Warm scans evaluate the predicate over columns already in memory. Cold scans
first ask the OS to drop the catalog file from its page cache (where the
platform allows it), then read the needed columns from disk and evaluate.
"""
from __future__ import annotations

import json
import os
import statistics
import time
from dataclasses import asdict, dataclass

import numpy as np

from .catalog import Catalog, read_columns
from .errors import ConfigurationError
from .queries import _colorcut

COLORCUT_THRESHOLD = 1.0
_CHUNK = 1 << 20

# Columns each predicate has to read.
PREDICATES = {
    "count_all": ("objID",),
    "colorcut": ("modelMag_r", "modelMag_g"),
}


@dataclass(frozen=True)
class BenchReport:
    predicate: str
    mode: str
    rowsScanned: int
    bytesScanned: int
    matched: int
    elapsed: float  # seconds, median over repeats
    rowsPerSec: float
    bytesPerSec: float
    repeats: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _evaluate(predicate: str, cols: dict[str, np.ndarray]) -> int:
    if predicate == "count_all":
        # Touch every key so the column is really read.
        ids = cols["objID"]
        return sum(int(np.count_nonzero(ids[s : s + _CHUNK] >= 0)) for s in range(0, ids.size, _CHUNK))
    return _colorcut(cols["modelMag_r"], cols["modelMag_g"], COLORCUT_THRESHOLD, _CHUNK)


def _drop_cache(path: str) -> None:
    if not hasattr(os, "posix_fadvise"):
        return
    fd = os.open(path, os.O_RDONLY)
    try:
        os.posix_fadvise(fd, 0, 0, os.POSIX_FADV_DONTNEED)
    finally:
        os.close(fd)


def bench_scan(catalog: Catalog, predicate: str, mode: str = "warm", repeats: int = 5,
               path: str | None = None) -> BenchReport:
    """Time a full PhotoObj scan; ``mode`` is "warm" or "cold"."""
    if predicate not in PREDICATES:
        raise ConfigurationError(f"unknown predicate {predicate!r}; choose from {', '.join(PREDICATES)}")
    if mode not in ("warm", "cold"):
        raise ConfigurationError(f"unknown scan mode {mode!r}; choose warm or cold")
    if repeats < 1:
        raise ConfigurationError("repeats must be at least 1")
    names = list(PREDICATES[predicate])
    path = path or catalog.path
    if mode == "cold" and path is None:
        raise ConfigurationError("a cold scan needs a saved catalog file")
    photo = catalog.photo
    rows = len(photo)
    nbytes = sum(photo[c].nbytes for c in names)
    times, matched = [], 0
    for _ in range(repeats):
        if mode == "cold":
            _drop_cache(path)
            t0 = time.perf_counter()
            cols = read_columns(path, "PhotoObj", names)
        else:
            t0 = time.perf_counter()
            cols = {c: photo[c] for c in names}
        matched = _evaluate(predicate, cols)
        times.append(time.perf_counter() - t0)
    elapsed = max(statistics.median(times), 1e-9)
    return BenchReport(predicate, mode, rows, nbytes, matched, elapsed, rows / elapsed, nbytes / elapsed, repeats)
