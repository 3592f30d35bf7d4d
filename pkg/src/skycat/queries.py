"""Spatial access functions and the named data-mining queries.

Every query reads one snapshot of the PhotoObj table, taken when it starts.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .catalog import SCHEMAS, Catalog, Table
from .errors import DomainError
from .region import Cap, cover
from .sphere import ARCMIN_PER_RAD, arc_angle, eq_to_vec

# Small covers are cheap to compute and the exact distance filter removes
# the extra candidates a coarser cover lets through.
QUERY_COVER_BUDGET = 128
NEIGHBOR_RADIUS = 0.5
ELONGATION_MIN = 0.111111


class NearbyHit(NamedTuple):
    objID: int
    distance: float  # arcminutes


class MoverPair(NamedTuple):
    rId: int
    gId: int


class Velocity(NamedTuple):
    objID: int
    velocity: float


@dataclass
class ScanStats:
    count: int
    rows: int
    bytes: int
    elapsed: float

    @property
    def rows_per_sec(self) -> float:
        return self.rows / self.elapsed if self.elapsed > 0 else float("inf")

    @property
    def bytes_per_sec(self) -> float:
        return self.bytes / self.elapsed if self.elapsed > 0 else float("inf")


@dataclass(frozen=True)
class QueryLimits:
    """Result quotas; ``None`` disables a limit."""

    max_rows: int | None = 1000
    timeout: float | None = 30.0


@dataclass
class QueryResult:
    rows: list = field(default_factory=list)
    truncated: bool = False
    reason: str | None = None
    elapsed: float = 0.0


def run_limited(rows: Iterable, limits: QueryLimits = QueryLimits()) -> QueryResult:
    """Materialize a query stream, flagging (never hiding) any truncation."""
    t0 = time.perf_counter()
    out = QueryResult()
    for row in rows:
        if limits.max_rows is not None and len(out.rows) >= limits.max_rows:
            out.truncated, out.reason = True, f"row limit {limits.max_rows} reached"
            break
        if limits.timeout is not None and time.perf_counter() - t0 > limits.timeout:
            out.truncated, out.reason = True, f"time limit {limits.timeout:g}s reached"
            break
        out.rows.append(row)
    out.elapsed = time.perf_counter() - t0
    return out


def _xyz(photo: Table, idx=slice(None)) -> np.ndarray:
    return np.stack([photo["cx"][idx], photo["cy"][idx], photo["cz"][idx]], axis=-1)


def _nearby(catalog: Catalog, photo: Table, ra: float, dec: float, r: float):
    if not r > 0:
        raise DomainError(f"search radius must be positive, got {r}")
    center = np.asarray(eq_to_vec(ra, dec))
    rs = cover(Cap(tuple(center), min(float(r), 10800.0)), catalog.index_depth, QUERY_COVER_BUDGET)
    idx = catalog.range_indices(rs, photo)
    dist = arc_angle(_xyz(photo, idx), center)
    keep = dist <= r
    idx, dist = idx[keep], dist[keep]
    order = np.lexsort((photo["objID"][idx], dist))
    return idx[order], dist[order]


def nearby_eq(catalog: Catalog, ra: float, dec: float, r: float) -> list[NearbyHit]:
    """Objects within ``r`` arcminutes of (ra, dec), nearest first, ties by objID."""
    photo = catalog.photo
    idx, dist = _nearby(catalog, photo, ra, dec, r)
    ids = photo["objID"][idx]
    return [NearbyHit(int(i), float(d)) for i, d in zip(ids, dist)]


def nearest_eq(catalog: Catalog, ra: float, dec: float, r: float) -> NearbyHit | None:
    hits = nearby_eq(catalog, ra, dec, r)
    return hits[0] if hits else None


def q1_unsaturated_galaxies(catalog: Catalog, ra: float, dec: float, r: float = 1.0) -> list[NearbyHit]:
    """Galaxies without saturated pixels near (ra, dec), ordered by distance."""
    photo = catalog.photo
    idx, dist = _nearby(catalog, photo, ra, dec, r)
    saturated = np.uint64(catalog.flag_mask("saturated"))
    keep = catalog.view_mask("galaxy", photo)[idx] & ((photo["flags"][idx] & saturated) == 0)
    ids = photo["objID"][idx[keep]]
    return [NearbyHit(int(i), float(d)) for i, d in zip(ids, dist[keep])]


def q15_asteroids(catalog: Catalog, chunk: int = 1 << 18) -> Iterator[Velocity]:
    """Slow movers: squared velocity in [50, 1000], both components non-negative.

    Yields in objID order.
    """
    photo = catalog.photo
    rowv, colv = photo["rowv"], photo["colv"]
    hits = []
    for s in range(0, len(photo), chunk):
        rv, cv = rowv[s : s + chunk], colv[s : s + chunk]
        v2 = rv * rv + cv * cv
        ok = (v2 >= 50) & (v2 <= 1000) & (rv >= 0) & (cv >= 0)
        hits.append(np.flatnonzero(ok) + s)
    idx = np.concatenate(hits) if hits else np.empty(0, dtype=np.int64)
    idx = idx[np.argsort(photo["objID"][idx], kind="stable")]
    for i in idx:
        yield Velocity(int(photo["objID"][i]), float(np.sqrt(rowv[i] * rowv[i] + colv[i] * colv[i])))


def _band_candidates(photo: Table, band: str) -> np.ndarray:
    """Rows elongated in ``band`` and brighter there than in every other band."""
    q, u = photo[f"q_{band}"], photo[f"u_{band}"]
    mag = photo[f"fiberMag_{band}"]
    ok = (q * q + u * u) > ELONGATION_MIN
    ok &= (mag >= 6) & (mag <= 22)
    for other in "ugriz":
        if other != band:
            ok &= mag < photo[f"fiberMag_{other}"]
    ok &= photo["parentID"] == 0
    iso_a, iso_b = photo[f"isoA_{band}"], photo[f"isoB_{band}"]
    with np.errstate(divide="ignore", invalid="ignore"):
        ok &= (iso_b > 0) & (iso_a / iso_b > 1.5)
    ok &= iso_a > 2.0
    return np.flatnonzero(ok)


def fast_movers(catalog: Catalog) -> list[MoverPair]:
    """Red/green detection pairs that line up as one fast-moving streak.

    Both ends share run and camcol, sit at most one field apart, lie within
    4 arcminutes (chord-length approximation) and differ by less than 2
    magnitudes between the red and green fiber magnitudes.
    """
    photo = catalog.photo
    red = _band_candidates(photo, "r")
    green = _band_candidates(photo, "g")
    if red.size == 0 or green.size == 0:
        return []
    run, camcol, fld = photo["run"], photo["camcol"], photo["field"]
    # Nested loop per (run, camcol): greens sorted by field, each red probes
    # the field window [f - 1, f + 1].
    g_order = np.lexsort((fld[green], camcol[green], run[green]))
    green = green[g_order]
    g_keys = np.stack([run[green].astype(np.int64), camcol[green].astype(np.int64), fld[green].astype(np.int64)], axis=-1)
    scale = 180 * 60 / np.pi
    pairs = []
    cx, cy, cz = photo["cx"], photo["cy"], photo["cz"]
    fr, fg = photo["fiberMag_r"], photo["fiberMag_g"]
    objid = photo["objID"]
    # Lexicographic bounds on (run, camcol, field) via a combined sort key.
    combo = (g_keys[:, 0] << 40) | (g_keys[:, 1] << 32) | (g_keys[:, 2] + (1 << 31))
    for r in red:
        base = (int(run[r]) << 40) | (int(camcol[r]) << 32)
        lo = np.searchsorted(combo, base | (int(fld[r]) - 1 + (1 << 31)), side="left")
        hi = np.searchsorted(combo, base | (int(fld[r]) + 1 + (1 << 31)), side="right")
        if hi <= lo:
            continue
        g = green[lo:hi]
        dx, dy, dz = cx[r] - cx[g], cy[r] - cy[g], cz[r] - cz[g]
        sep = np.sqrt(dx * dx + dy * dy + dz * dz) * scale
        ok = (sep < 4.0) & (np.abs(fr[r] - fg[g]) < 2.0)
        for gi in g[ok]:
            pairs.append(MoverPair(int(objid[r]), int(objid[gi])))
    return sorted(pairs)


def color_count(catalog: Catalog, threshold: float = 1.0, chunk: int = 1 << 20) -> ScanStats:
    """Count rows with modelMag_r - modelMag_g above ``threshold``."""
    photo = catalog.photo
    t0 = time.perf_counter()
    count = _colorcut(photo["modelMag_r"], photo["modelMag_g"], threshold, chunk)
    elapsed = time.perf_counter() - t0
    nbytes = photo["modelMag_r"].nbytes + photo["modelMag_g"].nbytes
    return ScanStats(count, len(photo), nbytes, elapsed)


def _colorcut(r: np.ndarray, g: np.ndarray, threshold: float, chunk: int) -> int:
    total = 0
    for s in range(0, r.size, chunk):
        total += int(np.count_nonzero((r[s : s + chunk] - g[s : s + chunk]) > threshold))
    return total


def build_neighbors(catalog: Catalog, radius: float = NEIGHBOR_RADIUS, group_depth: int | None = None) -> int:
    """Materialize every ordered pair of distinct objects within ``radius``.

    Objects are grouped by their coarse trixel; each group issues one cap
    cover large enough to hold every neighbor of every member, and the exact
    separations are then computed between members and candidates.
    """
    if not radius > 0:
        raise DomainError(f"neighbor radius must be positive, got {radius}")
    with catalog.write_lock:
        photo = catalog.photo
        n = len(photo)
        if group_depth is None:
            group_depth = _group_depth(radius, photo["htmID"], catalog.index_depth)
        group_depth = min(group_depth, catalog.index_depth)
        groups = photo["htmID"] >> (2 * (catalog.index_depth - group_depth))
        starts = np.flatnonzero(np.r_[True, groups[1:] != groups[:-1]]) if n else np.empty(0, np.int64)
        stops = np.r_[starts[1:], n] if n else starts
        xyz = _xyz(photo)
        objid = photo["objID"]
        a_parts, b_parts, d_parts = [], [], []
        for s, e in zip(starts, stops):
            members = xyz[s:e]
            center = members.sum(axis=0)
            norm = np.sqrt(center @ center)
            center = members[0] if norm == 0 else center / norm
            spread = float(arc_angle(members, center).max())
            cap = Cap(tuple(center), min(spread + radius + 1e-6, 10800.0))
            cand = catalog.range_indices(cover(cap, catalog.index_depth, QUERY_COVER_BUDGET), photo)
            dist = arc_angle(members[:, None, :], xyz[cand][None, :, :])
            mi, ci = np.nonzero(dist <= radius)
            a = objid[s + mi]
            b = objid[cand[ci]]
            keep = a != b
            a_parts.append(a[keep])
            b_parts.append(b[keep])
            d_parts.append(dist[mi, ci][keep])
        cols = {
            "objID": np.concatenate(a_parts) if a_parts else np.empty(0, np.uint64),
            "neighborObjID": np.concatenate(b_parts) if b_parts else np.empty(0, np.uint64),
            "distance": np.concatenate(d_parts) if d_parts else np.empty(0, np.float64),
        }
        cols["loadStamp"] = np.full(cols["objID"].size, catalog.stamp(), dtype=np.uint64)
        catalog.replace("Neighbors", Table(SCHEMAS["Neighbors"], cols).sorted())
        return int(cols["objID"].size)


def _group_depth(radius: float, htm_ids: np.ndarray, index_depth: int, target: int = 16) -> int:
    """Grouping level for the neighbor build.

    Starts at the deepest level whose nominal trixel edge is still at least
    four radii, then coarsens until groups average ``target`` members.
    """
    depth = 0
    while depth < index_depth and 90 * 60 / 2 ** (depth + 1) >= 4 * radius:
        depth += 1
    n = htm_ids.size
    while depth > 0 and n:
        g = htm_ids >> (2 * (index_depth - depth))
        if 1 + np.count_nonzero(g[1:] != g[:-1]) <= max(1, n // target):
            break
        depth -= 1
    return depth


def chord_arcmin(a, b) -> float:
    """Pair separation as the mining queries compute it: chord length in arcminutes."""
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.sqrt(d @ d) * ARCMIN_PER_RAD)
