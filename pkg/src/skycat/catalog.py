"""Columnar catalog store.

Each table is a dict of fixed-width numpy columns. PhotoObj is kept sorted
by (htmID, objID) so that a trixel id range maps onto one contiguous slice
found by binary search. Tables are never mutated in place: writers build a
new :class:`Table` and swap it in, so a reader holding a table reference
keeps a consistent snapshot.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
import threading
from dataclasses import dataclass
from typing import IO, Iterator

import numpy as np

from . import htm
from .errors import (
    CatalogFormatError,
    DepthMismatchError,
    DigestMismatchError,
    FlagLookupError,
    TruncatedFileError,
    VersionMismatchError,
)
from .region import HtmRangeSet

BANDS = "ugriz"
DEFAULT_INDEX_DEPTH = 20

OBJ_TYPES = {"star": 0, "galaxy": 1, "trail": 2, "defect": 3}
TYPE_NAMES = {v: k for k, v in OBJ_TYPES.items()}

# Bit positions are our own assignment; they travel in the file header.
DEFAULT_FLAG_BITS = {
    "canonical_center": 0,
    "bright": 1,
    "saturated": 2,
    "edge": 3,
    "blended": 4,
    "child": 5,
    "nodeblend": 6,
    "primary": 7,
    "secondary": 8,
    "ok_run": 9,
}

VIEWS = ("photoPrimary", "star", "galaxy", "all")


@dataclass(frozen=True)
class Column:
    name: str
    dtype: str
    derived: bool = False

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype)


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple
    key: tuple
    sort_key: tuple

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def import_columns(self) -> list[str]:
        """Columns a CSV load must supply (no derived columns, no stamp)."""
        return [c.name for c in self.columns if not c.derived and c.name != "loadStamp"]

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)


def _photo_columns() -> tuple:
    cols = [
        Column("objID", "<u8"),
        Column("fieldID", "<u8"),
        Column("run", "<i4"),
        Column("camcol", "<i4"),
        Column("field", "<i4"),
        Column("ra", "<f8"),
        Column("dec", "<f8"),
        Column("cx", "<f8", derived=True),
        Column("cy", "<f8", derived=True),
        Column("cz", "<f8", derived=True),
        Column("htmID", "<i8", derived=True),
        Column("type", "<u1"),
        Column("flags", "<u8"),
        Column("parentID", "<u8"),
        Column("rowv", "<f8"),
        Column("colv", "<f8"),
    ]
    for prefix in ("modelMag", "modelMagErr", "fiberMag", "q", "u", "isoA", "isoB"):
        cols.extend(Column(f"{prefix}_{b}", "<f8") for b in BANDS)
    cols.append(Column("loadStamp", "<u8"))
    return tuple(cols)


SCHEMAS = {
    s.name: s
    for s in [
        TableSchema(
            "Field",
            (Column("fieldID", "<u8"), Column("run", "<i4"), Column("camcol", "<i4"),
             Column("field", "<i4"), Column("loadStamp", "<u8")),
            ("fieldID",), ("fieldID",),
        ),
        TableSchema("Plate", (Column("plateID", "<u8"), Column("loadStamp", "<u8")), ("plateID",), ("plateID",)),
        TableSchema("PhotoObj", _photo_columns(), ("objID",), ("htmID", "objID")),
        TableSchema(
            "SpecObj",
            (Column("specObjID", "<u8"), Column("plateID", "<u8"), Column("bestObjID", "<u8"),
             Column("z", "<f8"), Column("loadStamp", "<u8")),
            ("specObjID",), ("specObjID",),
        ),
        TableSchema(
            "SpecLine",
            (Column("lineID", "<u8"), Column("specObjID", "<u8"), Column("wavelength", "<f8"),
             Column("ew", "<f8"), Column("loadStamp", "<u8")),
            ("lineID",), ("lineID",),
        ),
        TableSchema(
            "Neighbors",
            (Column("objID", "<u8"), Column("neighborObjID", "<u8"), Column("distance", "<f8"),
             Column("loadStamp", "<u8")),
            ("objID", "neighborObjID"), ("objID", "neighborObjID"),
        ),
    ]
}
TABLE_ORDER = ("Field", "Plate", "PhotoObj", "SpecObj", "SpecLine", "Neighbors")
LOADABLE_TABLES = ("Field", "Plate", "PhotoObj", "SpecObj", "SpecLine")


@dataclass(frozen=True)
class ForeignKey:
    table: str
    column: str
    ref_table: str
    ref_column: str
    zero_means_none: bool = False


FOREIGN_KEYS = (
    ForeignKey("PhotoObj", "fieldID", "Field", "fieldID"),
    ForeignKey("SpecObj", "plateID", "Plate", "plateID"),
    ForeignKey("SpecObj", "bestObjID", "PhotoObj", "objID", zero_means_none=True),
    ForeignKey("SpecLine", "specObjID", "SpecObj", "specObjID"),
    ForeignKey("Neighbors", "objID", "PhotoObj", "objID"),
    ForeignKey("Neighbors", "neighborObjID", "PhotoObj", "objID"),
)


class FlagDictionary:
    """Bijective map from flag names to bit positions."""

    def __init__(self, bits: dict[str, int] | None = None):
        bits = dict(DEFAULT_FLAG_BITS if bits is None else bits)
        if len(set(bits.values())) != len(bits):
            raise ValueError("flag bit positions must be distinct")
        if any(not 0 <= b < 64 for b in bits.values()):
            raise ValueError("flag bits must lie in [0, 63]")
        missing = {"saturated", "primary", "ok_run"} - bits.keys()
        if missing:
            raise ValueError(f"flag dictionary lacks required names {sorted(missing)}")
        self._bits = bits

    def mask(self, *names: str) -> int:
        out = 0
        for name in names:
            if name not in self._bits:
                raise FlagLookupError(f"unknown flag {name!r}; known flags: {', '.join(self.names)}")
            out |= 1 << self._bits[name]
        return out

    def names_in(self, flags: int) -> list[str]:
        return [n for n in self.names if flags >> self._bits[n] & 1]

    @property
    def names(self) -> list[str]:
        return sorted(self._bits, key=self._bits.get)

    def to_dict(self) -> dict[str, int]:
        return dict(sorted(self._bits.items(), key=lambda kv: kv[1]))

    def __eq__(self, other):
        return isinstance(other, FlagDictionary) and self._bits == other._bits


class Table:
    def __init__(self, schema: TableSchema, columns: dict[str, np.ndarray] | None = None):
        self.schema = schema
        if columns is None:
            columns = {c.name: np.empty(0, dtype=c.np_dtype) for c in schema.columns}
        if set(columns) != set(schema.names):
            raise ValueError(f"{schema.name}: columns {sorted(columns)} do not match schema")
        lengths = {len(v) for v in columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"{schema.name}: ragged columns")
        self.columns = {c.name: np.asarray(columns[c.name], dtype=c.np_dtype) for c in schema.columns}

    @property
    def name(self) -> str:
        return self.schema.name

    def __len__(self) -> int:
        return len(self.columns[self.schema.columns[0].name])

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def take(self, index) -> "Table":
        return Table(self.schema, {k: v[index] for k, v in self.columns.items()})

    def concat(self, other: dict[str, np.ndarray]) -> "Table":
        return Table(self.schema, {k: np.concatenate([v, other[k]]) for k, v in self.columns.items()})

    def sorted(self) -> "Table":
        keys = [self.columns[k] for k in reversed(self.schema.sort_key)]
        order = np.lexsort(keys) if len(self) else np.empty(0, dtype=np.int64)
        return self.take(order)

    def row(self, i: int) -> dict:
        return {k: v[i].item() for k, v in self.columns.items()}

    @property
    def nbytes(self) -> int:
        return sum(v.nbytes for v in self.columns.values())


MAGIC = b"SKYCAT\x1a\n"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<8sII")


class Catalog:
    def __init__(self, index_depth: int = DEFAULT_INDEX_DEPTH, flags: FlagDictionary | None = None):
        if not 0 <= index_depth <= htm.MAX_DEPTH:
            raise ValueError(f"index depth {index_depth} outside [0, {htm.MAX_DEPTH}]")
        self.index_depth = index_depth
        self.flags = flags or FlagDictionary()
        self.tables: dict[str, Table] = {name: Table(SCHEMAS[name]) for name in TABLE_ORDER}
        self.next_stamp = 1
        self.path: str | None = None
        self.write_lock = threading.Lock()

    def table(self, name: str) -> Table:
        try:
            return self.tables[name]
        except KeyError:
            raise KeyError(f"unknown table {name!r}; tables: {', '.join(TABLE_ORDER)}") from None

    def replace(self, name: str, table: Table) -> None:
        """Publish a new version of a table; readers see old or new, never a mix."""
        self.tables = {**self.tables, name: table}

    @property
    def photo(self) -> Table:
        return self.tables["PhotoObj"]

    def stamp(self) -> int:
        s = self.next_stamp
        self.next_stamp += 1
        return s

    def row_counts(self) -> dict[str, int]:
        return {name: len(t) for name, t in self.tables.items()}

    # -- flags and views --------------------------------------------------

    def flag_mask(self, *names: str) -> int:
        return self.flags.mask(*names)

    def view_mask(self, view: str, photo: Table | None = None) -> np.ndarray:
        photo = self.photo if photo is None else photo
        return view_mask(view, photo["flags"], photo["type"], self.flags)

    def view_filter(self, view: str, obj) -> bool:
        return bool(view_mask(view, np.uint64(obj["flags"]), np.uint8(_type_code(obj["type"])), self.flags))

    # -- spatial index ----------------------------------------------------

    def range_indices(self, rs: HtmRangeSet, photo: Table | None = None) -> np.ndarray:
        """Row positions whose htmID falls in ``rs``, in storage order."""
        if rs.index_depth != self.index_depth:
            raise DepthMismatchError(
                f"range set depth {rs.index_depth} does not match catalog index depth {self.index_depth}"
            )
        photo = self.photo if photo is None else photo
        if not rs.ranges or len(photo) == 0:
            return np.empty(0, dtype=np.int64)
        arr = rs.as_array()
        col = photo["htmID"]
        starts = np.searchsorted(col, arr[:, 0], side="left")
        stops = np.searchsorted(col, arr[:, 1], side="right")
        return np.concatenate([np.arange(a, b) for a, b in zip(starts, stops) if b > a] or [np.empty(0, np.int64)])

    def range_query(self, rs: HtmRangeSet) -> Iterator[dict]:
        photo = self.photo
        for i in self.range_indices(rs, photo):
            yield photo.row(int(i))

    # -- persistence ------------------------------------------------------

    def _header(self) -> dict:
        return {
            "index_depth": self.index_depth,
            "flags": self.flags.to_dict(),
            "next_stamp": self.next_stamp,
            "tables": {
                name: {
                    "rows": len(self.tables[name]),
                    "columns": [[c.name, c.dtype] for c in SCHEMAS[name].columns],
                }
                for name in TABLE_ORDER
            },
        }

    def digest(self) -> int:
        """64-bit content digest over the depth, flag dictionary and every column."""
        h = hashlib.blake2b(digest_size=8)
        h.update(json.dumps({"index_depth": self.index_depth, "flags": self.flags.to_dict()}, sort_keys=True).encode())
        for name in TABLE_ORDER:
            table = self.tables[name]
            h.update(f"{name}:{len(table)}".encode())
            for c in SCHEMAS[name].columns:
                h.update(c.name.encode())
                h.update(np.ascontiguousarray(table[c.name], dtype=c.np_dtype).tobytes())
        return int.from_bytes(h.digest(), "little")

    def save(self, path: str) -> None:
        header = json.dumps(self._header(), sort_keys=True).encode()
        tmp = f"{path}.tmp-{os.getpid()}"
        with open(tmp, "wb") as fh:
            fh.write(_PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(header)))
            fh.write(header)
            for name in TABLE_ORDER:
                for c in SCHEMAS[name].columns:
                    fh.write(np.ascontiguousarray(self.tables[name][c.name], dtype=c.np_dtype).tobytes())
            fh.write(struct.pack("<Q", self.digest()))
        os.replace(tmp, path)
        self.path = path

    @classmethod
    def open(cls, path: str) -> "Catalog":
        with open(path, "rb") as fh:
            data = fh.read()
        header, offset = _read_header(data)
        cat = cls(index_depth=int(header["index_depth"]), flags=FlagDictionary(header["flags"]))
        cat.next_stamp = int(header["next_stamp"])
        view = memoryview(data)
        tables = {}
        for name in TABLE_ORDER:
            rows = int(header["tables"][name]["rows"])
            cols = {}
            for c in SCHEMAS[name].columns:
                size = rows * c.np_dtype.itemsize
                cols[c.name] = np.frombuffer(view[offset : offset + size], dtype=c.np_dtype)
                offset += size
            tables[name] = Table(SCHEMAS[name], cols)
        cat.tables = tables
        (stored,) = struct.unpack_from("<Q", data, offset)
        if cat.digest() != stored:
            raise DigestMismatchError(f"{path}: content digest mismatch (file corrupted)")
        cat.path = path
        return cat

    # -- CSV export -------------------------------------------------------

    def export_csv(self, name: str, fh: IO[str]) -> int:
        """Write ``name`` in the loader's import schema; returns the row count."""
        table = self.table(name)
        cols = SCHEMAS[name].import_columns
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        data = [_format_column(table[c], c) for c in cols]
        for row in zip(*data):
            writer.writerow(row)
        return len(table)


def _format_column(values: np.ndarray, name: str) -> list[str]:
    if name == "type":
        return [TYPE_NAMES[int(v)] for v in values]
    if values.dtype.kind == "f":
        return [repr(float(v)) for v in values]
    return [str(int(v)) for v in values]


def _type_code(value) -> int:
    if isinstance(value, str):
        return OBJ_TYPES[value]
    return int(value)


def view_mask(view: str, flags, types, flag_dict: FlagDictionary):
    if view == "all":
        return np.ones(np.shape(flags), dtype=bool)
    need = np.uint64(flag_dict.mask("primary", "ok_run"))
    primary = (np.asarray(flags, dtype=np.uint64) & need) == need
    if view == "photoPrimary":
        return primary
    if view == "star":
        return primary & (np.asarray(types) == OBJ_TYPES["star"])
    if view == "galaxy":
        return primary & (np.asarray(types) == OBJ_TYPES["galaxy"])
    raise KeyError(f"unknown view {view!r}; views: {', '.join(VIEWS)}")


def _read_header(data: bytes) -> tuple[dict, int]:
    if len(data) < _PREAMBLE.size:
        raise TruncatedFileError("catalog file is shorter than its preamble")
    magic, version, header_len = _PREAMBLE.unpack_from(data, 0)
    if magic != MAGIC:
        raise CatalogFormatError("not a skycat catalog file (bad magic)")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"catalog format version {version}, expected {FORMAT_VERSION}")
    end = _PREAMBLE.size + header_len
    if len(data) < end:
        raise TruncatedFileError("catalog file ends inside its header")
    try:
        header = json.loads(bytes(data[_PREAMBLE.size : end]))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CatalogFormatError(f"unreadable catalog header: {exc}") from None
    expected = end + 8
    for name in TABLE_ORDER:
        meta = header["tables"].get(name)
        want = [[c.name, c.dtype] for c in SCHEMAS[name].columns]
        if meta is None or meta["columns"] != want:
            raise CatalogFormatError(f"table {name} layout does not match this build")
        expected += int(meta["rows"]) * sum(c.np_dtype.itemsize for c in SCHEMAS[name].columns)
    if len(data) < expected:
        raise TruncatedFileError(f"catalog file truncated: {len(data)} of {expected} bytes")
    if len(data) > expected:
        raise CatalogFormatError(f"catalog file has {len(data) - expected} trailing bytes")
    return header, end


def read_columns(path: str, table: str, names: list[str]) -> dict[str, np.ndarray]:
    """Read selected columns of one table straight from a catalog file.

    Skips digest verification; this is the storage path of cold scans.
    """
    with open(path, "rb") as fh:
        pre = fh.read(_PREAMBLE.size)
        _, version, header_len = _PREAMBLE.unpack(pre)
        if version != FORMAT_VERSION:
            raise VersionMismatchError(f"catalog format version {version}, expected {FORMAT_VERSION}")
        header = json.loads(fh.read(header_len))
        offset = _PREAMBLE.size + header_len
        out = {}
        for tname in TABLE_ORDER:
            rows = int(header["tables"][tname]["rows"])
            for c in SCHEMAS[tname].columns:
                size = rows * c.np_dtype.itemsize
                if tname == table and c.name in names:
                    fh.seek(offset)
                    out[c.name] = np.frombuffer(fh.read(size), dtype=c.np_dtype)
                offset += size
    return out
