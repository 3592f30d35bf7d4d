"""Independent brute-force oracles used by the tests.

Nothing here touches the HTM index: everything is full scans, all-pairs
loops or per-row Python predicates over the stored columns.
"""
import math

import numpy as np

ARCMIN = 180 * 60 / math.pi


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def random_unit(rng, n):
    return unit(rng.normal(size=(n, 3)))


def points_in_cap(rng, axis, radius_arcmin, n):
    """Area-uniform points inside a cap, plus its exact rim for the last few."""
    axis = unit(axis)
    helper = np.array([1.0, 0, 0]) if abs(axis[0]) < 0.9 else np.array([0, 1.0, 0])
    e1 = unit(np.cross(axis, helper))
    e2 = np.cross(axis, e1)
    r = math.radians(radius_arcmin / 60)
    cos_t = rng.uniform(math.cos(r), 1.0, n)
    cos_t[-max(1, n // 10):] = math.cos(r)
    sin_t = np.sqrt(np.maximum(0, 1 - cos_t**2))
    phi = rng.uniform(0, 2 * math.pi, n)
    p = cos_t[:, None] * axis + sin_t[:, None] * (np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2)
    return unit(p)


def xyz(photo, idx=slice(None)):
    return np.stack([photo["cx"][idx], photo["cy"][idx], photo["cz"][idx]], axis=-1)


def chord_arc(a, b):
    d = np.asarray(a) - np.asarray(b)
    return 2 * np.arcsin(np.minimum(np.linalg.norm(d, axis=-1) / 2, 1.0)) * ARCMIN


def brute_nearby(photo, center, r):
    """(objID, distance) pairs within r, sorted by distance then objID, by full scan."""
    d = chord_arc(xyz(photo), center)
    keep = np.flatnonzero(d <= r)
    rows = sorted(((float(d[i]), int(photo["objID"][i])) for i in keep))
    return [(oid, dist) for dist, oid in rows]


def brute_neighbors(photo, radius):
    """Every ordered pair (a, b), a != b, within ``radius``, by all-pairs blocks."""
    p = xyz(photo)
    ids = photo["objID"]
    out = set()
    for s in range(0, len(p), 500):
        d = chord_arc(p[s : s + 500, None, :], p[None, :, :])
        i, j = np.nonzero(d <= radius)
        for a, b in zip(ids[s + i], ids[j]):
            if a != b:
                out.add((int(a), int(b)))
    return out


def row_q15(row):
    v2 = row["rowv"] ** 2 + row["colv"] ** 2
    return 50 <= v2 <= 1000 and row["rowv"] >= 0 and row["colv"] >= 0


def row_candidate(row, band):
    """One side of the fast-mover join, written straight from its predicate list."""
    if not row[f"q_{band}"] ** 2 + row[f"u_{band}"] ** 2 > 0.111111:
        return False
    mag = row[f"fiberMag_{band}"]
    if not 6 <= mag <= 22:
        return False
    if any(not mag < row[f"fiberMag_{o}"] for o in "ugriz" if o != band):
        return False
    if row["parentID"] != 0:
        return False
    a, b = row[f"isoA_{band}"], row[f"isoB_{band}"]
    if not (b > 0 and a / b > 1.5):
        return False
    return a > 2.0


def pair_fast_movers(photo):
    """Fast-mover oracle: per-row Python predicates, then every red x green pair."""
    rows = [photo.row(i) for i in range(len(photo))]
    reds = [r for r in rows if row_candidate(r, "r")]
    greens = [g for g in rows if row_candidate(g, "g")]
    if not reds or not greens:
        return []

    def col(rs, name):
        return np.array([r[name] for r in rs])

    same = (col(reds, "run")[:, None] == col(greens, "run")[None, :]) & (
        col(reds, "camcol")[:, None] == col(greens, "camcol")[None, :])
    same &= np.abs(col(greens, "field")[None, :] - col(reds, "field")[:, None]) <= 1
    d2 = sum((col(reds, c)[:, None] - col(greens, c)[None, :]) ** 2 for c in ("cx", "cy", "cz"))
    same &= np.sqrt(d2) * (180 * 60 / math.pi) < 4.0
    same &= np.abs(col(reds, "fiberMag_r")[:, None] - col(greens, "fiberMag_g")[None, :]) < 2.0
    i, j = np.nonzero(same)
    return sorted((int(reds[a]["objID"]), int(greens[b]["objID"])) for a, b in zip(i, j))
