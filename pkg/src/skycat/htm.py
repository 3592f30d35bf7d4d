"""Hierarchical Triangular Mesh.

The sphere is split into the eight faces of an octahedron, S0..S3 (ids
8..11) and N0..N3 (ids 12..15). Each trixel is divided into four children
through its normalized edge midpoints and a child id is ``parent * 4 + k``,
so every descendant of a trixel at a fixed depth lies in one contiguous id
range.

Point location repeats the arithmetic of :func:`subdivide` and
:func:`edge_normals` component by component, so a looked-up id and the
vertices recovered for it describe bit-identical geometry.
"""
from __future__ import annotations

import re
from typing import NamedTuple

import numpy as np

from .errors import DepthLimitError, EncodingError
from .sphere import ARCMIN_PER_RAD

MAX_DEPTH = 20
EPSILON = 1e-12

_V = np.array(
    [
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, -1.0],
    ]
)
# S0..S3, N0..N3 as vertex indices, counterclockwise seen from outside.
_BASE_CORNERS = [
    (1, 5, 2),
    (2, 5, 3),
    (3, 5, 4),
    (4, 5, 1),
    (1, 0, 4),
    (4, 0, 3),
    (3, 0, 2),
    (2, 0, 1),
]
BASE_IDS = np.arange(8, 16, dtype=np.int64)
BASE_VERTICES = np.stack([_V[list(c)] for c in _BASE_CORNERS])  # (8, 3, 3)

_NAME_RE = re.compile(r"^[NS][0-3][0-3]*$")


class Trixel(NamedTuple):
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.stack([self.v0, self.v1, self.v2])


def _normalize(v: np.ndarray) -> np.ndarray:
    n = np.sqrt(v[..., 0] * v[..., 0] + v[..., 1] * v[..., 1] + v[..., 2] * v[..., 2])
    return v / n[..., None]


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.stack(
        [
            a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
            a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
            a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        ],
        axis=-1,
    )


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def edge_normals(tri: np.ndarray) -> np.ndarray:
    """Unit normals of the three edge planes of ``(..., 3, 3)`` trixels.

    A point p is on the inner side of edge k when ``normals[..., k, :] . p >= 0``.
    """
    v0, v1, v2 = tri[..., 0, :], tri[..., 1, :], tri[..., 2, :]
    return np.stack(
        [_normalize(_cross(v0, v1)), _normalize(_cross(v1, v2)), _normalize(_cross(v2, v0))],
        axis=-2,
    )


def subdivide(tri: np.ndarray) -> np.ndarray:
    """Children of ``(..., 3, 3)`` trixels as a ``(..., 4, 3, 3)`` array."""
    tri = np.asarray(tri, dtype=np.float64)
    v0, v1, v2 = tri[..., 0, :], tri[..., 1, :], tri[..., 2, :]
    w0 = _normalize(v1 + v2)
    w1 = _normalize(v0 + v2)
    w2 = _normalize(v0 + v1)
    out = np.empty(tri.shape[:-2] + (4, 3, 3))
    for k, corners in enumerate(((v0, w2, w1), (v1, w0, w2), (v2, w1, w0), (w0, w1, w2))):
        for j, v in enumerate(corners):
            out[..., k, j, :] = v
    return out


def depth_of(tid: int) -> int:
    tid = int(tid)
    bits = tid.bit_length()
    if tid < 8 or bits % 2:
        raise EncodingError(f"{tid} is not a valid trixel id")
    depth = (bits - 4) // 2
    if depth > MAX_DEPTH:
        raise EncodingError(f"{tid} is deeper than {MAX_DEPTH}")
    return depth


def is_valid_id(tid: int) -> bool:
    try:
        depth_of(tid)
    except EncodingError:
        return False
    return True


def base_trixels() -> list[tuple[int, Trixel]]:
    return [(int(i), Trixel(*BASE_VERTICES[k].copy())) for k, i in enumerate(BASE_IDS)]


def children(tid: int) -> list[int]:
    depth = depth_of(tid)
    if depth >= MAX_DEPTH:
        raise DepthLimitError(f"trixel {tid} is already at depth {MAX_DEPTH}")
    return [int(tid) * 4 + k for k in range(4)]


def parent(tid: int) -> int:
    if depth_of(tid) == 0:
        raise DepthLimitError("base trixels have no parent")
    return int(tid) // 4


def trixel_array(tid: int) -> np.ndarray:
    """Vertices of ``tid`` as a (3, 3) array, replaying its subdivision path."""
    depth = depth_of(tid)
    tid = int(tid)
    tri = BASE_VERTICES[(tid >> (2 * depth)) - 8]
    for level in range(depth - 1, -1, -1):
        tri = subdivide(tri)[(tid >> (2 * level)) & 3]
    return tri


def trixel_vertices(tid: int) -> Trixel:
    return Trixel(*trixel_array(tid))


def vertices_of(ids) -> np.ndarray:
    """Vectorized :func:`trixel_array` for ids that all share one depth."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        return np.empty((0, 3, 3))
    depth = depth_of(int(ids[0]))
    if np.any((ids >> (2 * depth + 3)) != 1):
        raise EncodingError("ids passed to vertices_of must share one depth")
    tri = BASE_VERTICES[(ids >> (2 * depth)) - 8]
    for level in range(depth - 1, -1, -1):
        k = (ids >> (2 * level)) & 3
        tri = subdivide(tri)[np.arange(ids.size), k]
    return tri


def contains(tri, points, eps: float = EPSILON) -> np.ndarray:
    """Closed point-in-trixel test; use ``eps < 0`` for a strict interior test."""
    tri = np.asarray(tri, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    normals = edge_normals(tri)
    scores = np.stack([_dot(normals[..., k, :], points) for k in range(3)], axis=-1)
    return np.all(scores >= -eps, axis=-1)


def _pick(scores: list[np.ndarray], eps: float) -> np.ndarray:
    """Index of the first candidate whose minimum edge score passes, else the best one."""
    k = np.full(scores[0].shape, -1, dtype=np.int64)
    for i in range(len(scores) - 1, -1, -1):
        k[scores[i] >= -eps] = i
    missed = k < 0
    if missed.any():
        k[missed] = np.argmax(np.stack([s[missed] for s in scores], axis=-1), axis=-1)
    return k


def lookup_ids(points, depth: int, eps: float = EPSILON, chunk: int = 1 << 16) -> np.ndarray:
    """Trixel ids at ``depth`` for an (n, 3) array of unit vectors.

    Descends from the base faces, taking the first child (in child order)
    whose closed edge tests pass. Ties on shared edges and vertices thus go
    to the lowest-numbered candidate.
    """
    if not 0 <= depth <= MAX_DEPTH:
        raise DepthLimitError(f"depth {depth} outside [0, {MAX_DEPTH}]")
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if p.shape[0] > chunk:
        return np.concatenate(
            [_lookup(p[i : i + chunk], depth, eps) for i in range(0, p.shape[0], chunk)]
        )
    return _lookup(p, depth, eps)


def _norm3(x, y, z):
    n = np.sqrt(x * x + y * y + z * z)
    return x / n, y / n, z / n


def _side(a, b, p):
    # Same operation order as _dot(_normalize(_cross(a, b)), p), component-wise.
    ax, ay, az = a
    bx, by, bz = b
    cx, cy, cz = _norm3(ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx)
    return cx * p[0] + cy * p[1] + cz * p[2]


def _mid(a, b):
    return _norm3(a[0] + b[0], a[1] + b[1], a[2] + b[2])


def _lookup(p: np.ndarray, depth: int, eps: float) -> np.ndarray:
    n = p.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64)

    base_normals = edge_normals(BASE_VERTICES)  # (8, 3, 3)
    base_scores = np.einsum("fkj,nj->nfk", base_normals, p).min(axis=-1)
    face = _pick([base_scores[:, f] for f in range(8)], eps)
    ids = BASE_IDS[face].copy()
    tri = BASE_VERTICES[face]
    pc = (p[:, 0].copy(), p[:, 1].copy(), p[:, 2].copy())
    v0 = tuple(tri[:, 0, j].copy() for j in range(3))
    v1 = tuple(tri[:, 1, j].copy() for j in range(3))
    v2 = tuple(tri[:, 2, j].copy() for j in range(3))

    for _ in range(depth):
        w0 = _mid(v1, v2)
        w1 = _mid(v0, v2)
        w2 = _mid(v0, v1)
        inner0 = _side(w2, w1, pc)
        inner1 = _side(w0, w2, pc)
        inner2 = _side(w1, w0, pc)
        s0 = np.minimum(np.minimum(_side(v0, w2, pc), inner0), _side(w1, v0, pc))
        s1 = np.minimum(np.minimum(_side(v1, w0, pc), inner1), _side(w2, v1, pc))
        s2 = np.minimum(np.minimum(_side(v2, w1, pc), inner2), _side(w0, v2, pc))
        s3 = np.minimum(np.minimum(-inner2, -inner0), -inner1)
        k = _pick([s0, s1, s2, s3], eps)
        ids = ids * 4 + k
        v0, v1, v2 = (
            tuple(np.choose(k, [v0[j], v1[j], v2[j], w0[j]]) for j in range(3)),
            tuple(np.choose(k, [w2[j], w0[j], w1[j], w1[j]]) for j in range(3)),
            tuple(np.choose(k, [w1[j], w2[j], w0[j], w2[j]]) for j in range(3)),
        )
    return ids


def lookup_id(v, depth: int) -> int:
    return int(lookup_ids(np.asarray(v, dtype=np.float64).reshape(1, 3), depth)[0])


def name_to_id(name: str) -> int:
    if not isinstance(name, str) or not _NAME_RE.match(name) or len(name) > MAX_DEPTH + 2:
        raise EncodingError(f"malformed trixel name {name!r}")
    tid = (12 if name[0] == "N" else 8) + int(name[1])
    for digit in name[2:]:
        tid = tid * 4 + int(digit)
    return tid


def id_to_name(tid: int) -> str:
    depth = depth_of(tid)
    tid = int(tid)
    base = tid >> (2 * depth)
    digits = [str((tid >> (2 * level)) & 3) for level in range(depth - 1, -1, -1)]
    return ("N" if base >= 12 else "S") + str(base & 3) + "".join(digits)


def id_to_index_range(tid: int, index_depth: int) -> tuple[int, int]:
    depth = depth_of(tid)
    if not depth <= index_depth <= MAX_DEPTH:
        raise DepthLimitError(f"index depth {index_depth} must lie in [{depth}, {MAX_DEPTH}]")
    shift = 2 * (index_depth - depth)
    return int(tid) << shift, ((int(tid) + 1) << shift) - 1


def id_range_at_depth(depth: int) -> tuple[int, int]:
    """Smallest and largest valid id at ``depth``."""
    return 8 << (2 * depth), (16 << (2 * depth)) - 1


def spherical_area(tri) -> np.ndarray:
    """Solid angle of spherical triangles (steradians), Van Oosterom-Strackee form."""
    tri = np.asarray(tri, dtype=np.float64)
    a, b, c = tri[..., 0, :], tri[..., 1, :], tri[..., 2, :]
    triple = _dot(a, _cross(b, c))
    denom = 1.0 + _dot(a, b) + _dot(b, c) + _dot(c, a)
    return 2.0 * np.arctan2(np.abs(triple), denom)


def edge_lengths(tri) -> np.ndarray:
    """The three edge lengths (arcminutes) of ``(..., 3, 3)`` trixels."""
    tri = np.asarray(tri, dtype=np.float64)
    out = []
    for i, j in ((0, 1), (1, 2), (2, 0)):
        d = tri[..., i, :] - tri[..., j, :]
        out.append(2.0 * np.arcsin(np.sqrt(_dot(d, d)) / 2.0) * ARCMIN_PER_RAD)
    return np.stack(out, axis=-1)


def all_trixels(depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Every trixel id and vertex array at ``depth`` (8 * 4**depth of them)."""
    ids = BASE_IDS.copy()
    tri = BASE_VERTICES.copy()
    for _ in range(depth):
        tri = subdivide(tri).reshape(-1, 3, 3)
        ids = (ids[:, None] * 4 + np.arange(4)).ravel()
    return ids, tri


def max_edge_length(depth: int, samples: int = 200_000, seed: int = 0, exhaustive_limit: int = 8):
    """Largest trixel edge (arcminutes) at ``depth``.

    Exhaustive up to ``exhaustive_limit``; deeper levels are estimated from
    the descendants of the worst trixels found at the exhaustive level plus
    random samples, so the figure is a lower bound there.
    """
    if depth <= exhaustive_limit:
        _, tri = all_trixels(depth)
        return float(edge_lengths(tri).max()), True
    _, tri = all_trixels(exhaustive_limit)
    lengths = edge_lengths(tri).max(axis=-1)
    worst = tri[np.argsort(lengths)[-64:]]
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, tri.shape[0], size=min(samples, tri.shape[0]))
    frontier = np.concatenate([worst, tri[picks]])
    for _ in range(depth - exhaustive_limit):
        kids = subdivide(frontier)  # (m, 4, 3, 3)
        # Follow the child with the longest edge plus one random child.
        longest = edge_lengths(kids).max(axis=-1).argmax(axis=-1)
        rand = rng.integers(0, 4, size=kids.shape[0])
        rows = np.arange(kids.shape[0])
        frontier = np.concatenate([kids[rows, longest], kids[rows, rand]])
        if frontier.shape[0] > 2 * samples:
            frontier = frontier[: 2 * samples]
    return float(edge_lengths(frontier).max()), False
