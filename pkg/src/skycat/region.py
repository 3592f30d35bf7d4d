"""Query regions and their HTM covers.

Every region reduces to an intersection of halfspaces ``n . p >= d``: a cap
is one halfspace with ``d = cos(radius)``; a convex polygon contributes one
great-circle halfspace (``d = 0``) per edge.

A cover is conservative. Each trixel is classified Full, Partial or
Disjoint, and uncertain cases always fall back to Partial, so the union of
the emitted id ranges is a superset of the region.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import htm
from .errors import ConfigurationError, DomainError, GeometryError
from .sphere import EquatorialCoord, eq_to_vec, radec_to_xyz

DISJOINT, PARTIAL, FULL = 0, 1, 2
CLASS_NAMES = {DISJOINT: "Disjoint", PARTIAL: "Partial", FULL: "Full"}

# Closed-membership slack and the margin a trixel must clear to be dropped.
INSIDE_EPS = 1e-12
OUTSIDE_EPS = 1e-11

DEFAULT_BUDGET = 10_000


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(3)
    n = np.sqrt(v @ v)
    if not np.isfinite(n) or n == 0.0:
        raise DomainError("zero or non-finite vector")
    return v / n


@dataclass(frozen=True)
class Cap:
    axis: tuple
    radius: float  # arcminutes

    def __post_init__(self):
        if not 0.0 < self.radius <= 10800.0:
            raise DomainError(f"cap radius {self.radius} arcmin outside (0, 10800]")
        object.__setattr__(self, "axis", tuple(float(x) for x in _unit(self.axis)))

    @classmethod
    def from_radec(cls, ra: float, dec: float, radius: float) -> "Cap":
        return cls(tuple(eq_to_vec(ra, dec)), float(radius))

    @property
    def cos_radius(self) -> float:
        return float(np.cos(np.radians(self.radius / 60.0)))

    def halfspaces(self) -> list[tuple[np.ndarray, float]]:
        return [(np.asarray(self.axis), self.cos_radius)]

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return p @ np.asarray(self.axis) >= self.cos_radius - INSIDE_EPS


@dataclass(frozen=True)
class ConvexRegion:
    """Points with ``normal . p >= offset`` for every constraint."""

    constraints: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.constraints) == 0:
            raise GeometryError("a convex region needs at least one constraint")
        cleaned = []
        for normal, offset in self.constraints:
            offset = float(offset)
            if not -1.0 <= offset <= 1.0:
                raise DomainError(f"halfspace offset {offset} outside [-1, 1]")
            cleaned.append((tuple(float(x) for x in _unit(normal)), offset))
        object.__setattr__(self, "constraints", tuple(cleaned))

    def halfspaces(self) -> list[tuple[np.ndarray, float]]:
        return [(np.asarray(n), d) for n, d in self.constraints]

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        inside = np.ones(p.shape[:-1], dtype=bool)
        for n, d in self.halfspaces():
            inside &= p @ n >= d - INSIDE_EPS
        return inside

    def is_empty(self, depth: int = 8) -> bool:
        """True when a cover at ``depth`` comes back empty.

        Covers are supersets, so True is certain; False only means no
        emptiness proof was found at this resolution.
        """
        return len(cover(self, depth).ranges) == 0


def polygon_region(points: Sequence) -> ConvexRegion:
    """Convex region bounded by a counterclockwise polygon of (ra, dec) vertices."""
    coords = [EquatorialCoord.make(*p) for p in points]
    if len(coords) < 3:
        raise GeometryError("a polygon needs at least 3 vertices")
    verts = radec_to_xyz([c.ra for c in coords], [c.dec for c in coords])
    m = len(verts)
    constraints = []
    for i in range(m):
        a, b = verts[i], verts[(i + 1) % m]
        c = np.cross(a, b)
        norm = np.sqrt(c @ c)
        label = f"edge {i} ({coords[i].ra:g},{coords[i].dec:g})->({coords[(i + 1) % m].ra:g},{coords[(i + 1) % m].dec:g})"
        if norm < 1e-12:
            raise GeometryError(f"degenerate {label}: endpoints coincide or are antipodal")
        n = c / norm
        for k in range(m):
            if k in (i, (i + 1) % m):
                continue
            s = n @ verts[k]
            if abs(s) <= 1e-12:
                raise GeometryError(f"degenerate {label}: vertex {k} is collinear with it")
            if s < 0:
                raise GeometryError(f"non-convex or clockwise polygon at {label}: vertex {k} lies outside")
        constraints.append((n, 0.0))
    return ConvexRegion(tuple(constraints))


def _cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def _classify_convex_cap(axis, t_full, t_disj, tri):
    """Classify ``(m, 3, 3)`` trixels against a cap no larger than a hemisphere.

    Full needs every corner at ``>= t_full``; Disjoint needs the whole
    trixel below ``t_disj``: no corner reaching it, the cap axis outside
    the trixel and no edge arc entering the cap.
    """
    corners = tri @ axis  # (m, 3)
    full = corners.min(axis=-1) >= t_full
    touched = corners.max(axis=-1) >= t_disj

    a = tri
    b = tri[:, [1, 2, 0]]
    normals = _cross3(a, b)
    normals /= np.sqrt((normals * normals).sum(axis=-1))[..., None]
    s = normals @ axis  # (m, 3)
    if t_disj <= 1.0:
        touched |= (s >= -OUTSIDE_EPS).all(axis=-1)
    # The point of an edge's great circle nearest the axis lies on the arc
    # a->b iff the axis is on the inner side of the planes n x a and b x n.
    within = (_cross3(normals, a) @ axis >= -INSIDE_EPS) & (_cross3(b, normals) @ axis >= -INSIDE_EPS)
    peak = np.sqrt(np.maximum(0.0, 1.0 - s * s))
    touched |= (within & (peak >= t_disj)).any(axis=-1)
    return np.where(full, FULL, np.where(touched, PARTIAL, DISJOINT))


def classify_halfspace(normal, offset: float, tri) -> np.ndarray:
    tri = np.asarray(tri, dtype=np.float64).reshape(-1, 3, 3)
    normal = np.asarray(normal, dtype=np.float64)
    if offset >= 0.0:
        return _classify_convex_cap(normal, offset - INSIDE_EPS, offset - OUTSIDE_EPS, tri)
    # Larger than a hemisphere: classify the complementary cap and swap.
    comp = _classify_convex_cap(-normal, -offset + OUTSIDE_EPS, -offset + INSIDE_EPS, tri)
    return np.choose(comp, [FULL, PARTIAL, DISJOINT])


def classify_many(region, tri) -> np.ndarray:
    tri = np.asarray(tri, dtype=np.float64).reshape(-1, 3, 3)
    result = np.full(tri.shape[0], FULL, dtype=np.int64)
    for normal, offset in region.halfspaces():
        result = np.minimum(result, classify_halfspace(normal, offset, tri))
    return result


def classify(region, trixel) -> str:
    """'Full', 'Partial' or 'Disjoint' for a single trixel (id or vertices)."""
    if isinstance(trixel, (int, np.integer)):
        tri = htm.trixel_array(int(trixel))
    else:
        tri = np.asarray(trixel, dtype=np.float64)
    return CLASS_NAMES[int(classify_many(region, tri[None])[0])]


@dataclass(frozen=True)
class HtmRangeSet:
    """Sorted, merged, inclusive id ranges at one index depth."""

    index_depth: int
    ranges: tuple = ()

    @classmethod
    def from_ranges(cls, index_depth: int, ranges: Iterable) -> "HtmRangeSet":
        if isinstance(ranges, np.ndarray):
            return cls._from_array(index_depth, ranges)
        pairs = sorted((int(lo), int(hi)) for lo, hi in ranges)
        merged: list[list[int]] = []
        for lo, hi in pairs:
            if lo > hi:
                raise ConfigurationError(f"inverted range ({lo}, {hi})")
            if merged and lo <= merged[-1][1] + 1:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        return cls(index_depth, tuple((lo, hi) for lo, hi in merged))

    @classmethod
    def _from_array(cls, index_depth: int, arr: np.ndarray) -> "HtmRangeSet":
        arr = np.asarray(arr, dtype=np.int64).reshape(-1, 2)
        if np.any(arr[:, 0] > arr[:, 1]):
            lo, hi = arr[np.argmax(arr[:, 0] > arr[:, 1])]
            raise ConfigurationError(f"inverted range ({lo}, {hi})")
        if arr.shape[0] == 0:
            return cls(index_depth, ())
        arr = arr[np.lexsort((arr[:, 1], arr[:, 0]))]
        # A range starts a new run unless it touches the running maximum so far.
        reach = np.maximum.accumulate(arr[:, 1])
        start = np.ones(arr.shape[0], dtype=bool)
        start[1:] = arr[1:, 0] > reach[:-1] + 1
        first = np.flatnonzero(start)
        last = np.append(first[1:], arr.shape[0]) - 1
        return cls(index_depth, tuple(zip(arr[first, 0].tolist(), reach[last].tolist())))

    def normalized(self) -> "HtmRangeSet":
        return HtmRangeSet.from_ranges(self.index_depth, self.ranges)

    def __len__(self):
        return len(self.ranges)

    def __iter__(self):
        return iter(self.ranges)

    def __contains__(self, tid) -> bool:
        tid = int(tid)
        los = [lo for lo, _ in self.ranges]
        k = np.searchsorted(los, tid, side="right") - 1
        return k >= 0 and tid <= self.ranges[k][1]

    def contains_many(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if not self.ranges:
            return np.zeros(ids.shape, dtype=bool)
        arr = self.as_array()
        k = np.searchsorted(arr[:, 0], ids, side="right") - 1
        ok = k >= 0
        return ok & (ids <= arr[np.maximum(k, 0), 1])

    def as_array(self) -> np.ndarray:
        return np.array(self.ranges, dtype=np.int64).reshape(-1, 2)

    def id_count(self) -> int:
        return sum(hi - lo + 1 for lo, hi in self.ranges)

    def is_normal(self) -> bool:
        return all(
            lo <= hi and (k == 0 or self.ranges[k - 1][1] + 1 < lo)
            for k, (lo, hi) in enumerate(self.ranges)
        )


@dataclass
class CoverResult:
    """Trixels emitted by a cover, grouped by their own depth."""

    index_depth: int
    full: dict = field(default_factory=dict)
    partial: dict = field(default_factory=dict)
    budget_exhausted: bool = False

    def _add(self, bucket: dict, depth: int, ids: np.ndarray):
        if ids.size:
            bucket[depth] = np.concatenate([bucket.get(depth, np.empty(0, np.int64)), ids])

    def trixel_count(self) -> int:
        return sum(v.size for v in self.full.values()) + sum(v.size for v in self.partial.values())

    def range_set(self) -> HtmRangeSet:
        pieces = []
        for bucket in (self.full, self.partial):
            for depth, ids in bucket.items():
                shift = 2 * (self.index_depth - depth)
                pieces.append(np.stack([ids << shift, ((ids + 1) << shift) - 1], axis=-1))
        if not pieces:
            return HtmRangeSet(self.index_depth, ())
        return HtmRangeSet.from_ranges(self.index_depth, np.concatenate(pieces))

    def solid_angle(self) -> float:
        total = 0.0
        for bucket in (self.full, self.partial):
            for ids in bucket.values():
                total += float(htm.spherical_area(htm.vertices_of(ids)).sum())
        return total


def cover_trixels(region, index_depth: int, budget: int = DEFAULT_BUDGET) -> CoverResult:
    """Breadth-first classification walk from the eight base trixels.

    Full trixels are emitted whole, Disjoint ones dropped and Partial ones
    refined until ``index_depth``. When refining the current Partial set
    could exceed ``budget`` emitted trixels, that set is emitted as is.
    """
    if not 0 <= index_depth <= htm.MAX_DEPTH:
        raise ConfigurationError(f"index depth {index_depth} outside [0, {htm.MAX_DEPTH}]")
    if budget < 8:
        raise ConfigurationError(f"cover budget {budget} is below the 8 base trixels")
    out = CoverResult(index_depth)
    ids = htm.BASE_IDS.copy()
    tri = htm.BASE_VERTICES.copy()
    emitted = 0
    for depth in range(index_depth + 1):
        cls = classify_many(region, tri)
        full = cls == FULL
        part = cls == PARTIAL
        out._add(out.full, depth, ids[full])
        emitted += int(full.sum())
        n_part = int(part.sum())
        if n_part == 0:
            break
        if depth == index_depth:
            out._add(out.partial, depth, ids[part])
            break
        if emitted + 4 * n_part > budget:
            out._add(out.partial, depth, ids[part])
            out.budget_exhausted = True
            break
        tri = htm.subdivide(tri[part]).reshape(-1, 3, 3)
        ids = (ids[part][:, None] * 4 + np.arange(4)).ravel()
    return out


def cover(region, index_depth: int, budget: int = DEFAULT_BUDGET) -> HtmRangeSet:
    return cover_trixels(region, index_depth, budget).range_set()
