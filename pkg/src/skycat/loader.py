"""Batch ingestion with row-level validation, a load-event journal and undo.

Each load step takes a fresh logical stamp, tags every inserted row with it
and records the window in the journal. Undoing a step deletes that table's
rows whose stamp lies inside the window.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np
import pandas as pd

from . import htm
from .catalog import FOREIGN_KEYS, LOADABLE_TABLES, OBJ_TYPES, SCHEMAS, Catalog, Table
from .errors import AlreadyUndoneError, LoadError, UndoConflictError, UnknownEventError
from .sphere import radec_to_xyz

OK, FAILED, UNDONE = "ok", "failed", "undone"
DERIVED_TOLERANCE = 1e-9
_NULLS = ("", "NULL", "null")


@dataclass
class LoadEvent:
    eventID: int
    table: str
    startStamp: int
    stopStamp: int
    sourceRows: int
    insertedRows: int
    status: str
    tracePath: str | None = None
    trace: list = field(default_factory=list, repr=False, compare=False)

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("trace")
        return json.dumps(d, sort_keys=True)


@dataclass(frozen=True)
class Violation:
    table: str
    row: int
    constraint: str
    detail: str

    def __str__(self):
        return f"{self.table} row {self.row}: {self.constraint}: {self.detail}"


class Journal:
    """Append-only event log; the last record for an eventID is its current state."""

    def __init__(self, path: str | None = None):
        self.path = path
        self.events: dict[int, LoadEvent] = {}
        if path and os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        ev = LoadEvent(**json.loads(line))
                        self.events[ev.eventID] = ev

    def next_id(self) -> int:
        return max(self.events, default=0) + 1

    def append(self, event: LoadEvent) -> None:
        self.events[event.eventID] = event
        if self.path:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(event.to_json() + "\n")

    def get(self, event_id: int) -> LoadEvent:
        try:
            return self.events[int(event_id)]
        except KeyError:
            raise UnknownEventError(f"no load event {event_id}") from None

    def __iter__(self):
        return iter(sorted(self.events.values(), key=lambda e: e.eventID))


def journal_path(catalog_path: str) -> str:
    return catalog_path + ".events.jsonl"


def trace_dir(catalog_path: str) -> str:
    return catalog_path + ".trace"


class _Rejects:
    """First violation per row wins."""

    def __init__(self, n: int):
        self.bad = np.zeros(n, dtype=bool)
        self.lines: list[tuple[int, str, str]] = []

    def add(self, mask: np.ndarray, constraint: str, detail) -> None:
        new = np.flatnonzero(mask & ~self.bad)
        for i in new:
            self.lines.append((int(i), constraint, detail(i) if callable(detail) else detail))
        self.bad[new] = True


def _to_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return float("nan")


def _parse_column(raw: np.ndarray, dtype: np.dtype, name: str, rejects: _Rejects) -> np.ndarray:
    s = pd.Series(raw, dtype=object).astype(str).str.strip()
    null = s.isin(_NULLS).to_numpy()
    rejects.add(null, "not_null", f"{name} is null")
    out = np.zeros(len(s), dtype=dtype)
    if name == "type":
        codes = s.map(OBJ_TYPES)
        bad = codes.isna().to_numpy() & ~null
        rejects.add(bad, "domain", lambda i: f"type {s.iat[i]!r} not in {sorted(OBJ_TYPES)}")
        ok = ~codes.isna().to_numpy()
        out[ok] = codes[ok].astype(np.int64).to_numpy()
        return out
    if dtype.kind == "f":
        # numpy's str -> float conversion is correctly rounded; pandas' fast parser is not.
        text = s.where(~null, "nan").to_numpy(dtype=object)
        try:
            vals = text.astype(np.float64)
        except ValueError:
            vals = np.array([_to_float(v) for v in text], dtype=np.float64)
        bad = ~np.isfinite(vals) & ~null
        rejects.add(bad, "type", lambda i: f"{name}={s.iat[i]!r} is not a finite number")
        out[:] = np.where(np.isfinite(vals), vals, 0.0)
        return out
    pattern = r"\d{1,20}" if dtype.kind == "u" else r"-?\d{1,10}"
    good = s.str.fullmatch(pattern).to_numpy(dtype=bool)
    info = np.iinfo(dtype)
    parsed = [int(v) if g else 0 for v, g in zip(s.tolist(), good)]
    in_range = np.array([info.min <= v <= info.max for v in parsed], dtype=bool)
    bad = ~(good & in_range) & ~null
    rejects.add(bad, "type", lambda i: f"{name}={s.iat[i]!r} is not a valid {dtype.name}")
    out[:] = [v if ok else 0 for v, ok in zip(parsed, good & in_range)]
    return out


class Loader:
    """Single-writer ingestion front end for one catalog."""

    def __init__(self, catalog: Catalog, journal: Journal | None = None, trace_dir: str | None = None):
        self.catalog = catalog
        self.journal = journal if journal is not None else Journal()
        self.trace_dir = trace_dir

    # -- loading ----------------------------------------------------------

    def load_csv(self, table: str, path: str) -> LoadEvent:
        if table not in LOADABLE_TABLES:
            raise LoadError(f"table {table!r} is not loadable; choose from {', '.join(LOADABLE_TABLES)}")
        schema = SCHEMAS[table]
        with self.catalog.write_lock:
            start = self.catalog.stamp()
            try:
                frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8")
            except (OSError, UnicodeDecodeError, pd.errors.ParserError) as exc:
                return self._fail(table, start, 0, f"unreadable file: {exc}")
            except pd.errors.EmptyDataError:
                return self._fail(table, start, 0, "empty file (no header row)")
            header = list(frame.columns)
            want = schema.import_columns
            if len(header) != len(set(header)) or set(header) != set(want):
                missing = sorted(set(want) - set(header))
                extra = sorted(set(header) - set(want))
                return self._fail(table, start, len(frame), f"header mismatch; missing {missing}, unexpected {extra}")
            rejects = _Rejects(len(frame))
            cols = {
                name: _parse_column(frame[name].to_numpy(), schema.column(name).np_dtype, name, rejects)
                for name in want
            }
            return self._ingest(table, cols, rejects, start)

    def load_columns(self, table: str, columns: dict[str, Iterable]) -> LoadEvent:
        """Load already-typed columns; NaN in a float column counts as null."""
        if table not in LOADABLE_TABLES:
            raise LoadError(f"table {table!r} is not loadable; choose from {', '.join(LOADABLE_TABLES)}")
        schema = SCHEMAS[table]
        with self.catalog.write_lock:
            start = self.catalog.stamp()
            want = schema.import_columns
            if set(columns) != set(want):
                missing = sorted(set(want) - set(columns))
                extra = sorted(set(columns) - set(want))
                n = len(next(iter(columns.values()))) if columns else 0
                return self._fail(table, start, n, f"column mismatch; missing {missing}, unexpected {extra}")
            cols = {name: np.asarray(columns[name]) for name in want}
            n = len(cols[want[0]])
            rejects = _Rejects(n)
            typed = {}
            for name in want:
                dtype = schema.column(name).np_dtype
                values = cols[name]
                if dtype.kind == "f":
                    values = values.astype(np.float64)
                    rejects.add(np.isnan(values), "not_null", f"{name} is null")
                    rejects.add(np.isinf(values), "type", f"{name} is not finite")
                    values = np.where(np.isfinite(values), values, 0.0)
                elif name == "type" and values.dtype.kind in "OUS":
                    codes = np.array([OBJ_TYPES.get(str(v), -1) for v in values])
                    rejects.add(codes < 0, "domain", lambda i: f"type {values[i]!r} not in {sorted(OBJ_TYPES)}")
                    values = np.maximum(codes, 0)
                typed[name] = values.astype(dtype)
            return self._ingest(table, typed, rejects, start)

    def _ingest(self, table: str, cols: dict, rejects: _Rejects, start: int) -> LoadEvent:
        schema = SCHEMAS[table]
        n = len(rejects.bad)
        current = self.catalog.table(table)

        if table == "PhotoObj":
            dec = cols["dec"]
            rejects.add((dec < -90.0) | (dec > 90.0), "domain", lambda i: f"dec {dec[i]!r} outside [-90, 90]")
            types = cols["type"]
            rejects.add(types > max(OBJ_TYPES.values()), "domain", lambda i: f"type code {types[i]} unknown")

        key = schema.key[0]
        keys = cols[key]
        existing = current[key]
        clash = np.isin(keys, existing)
        rejects.add(clash, "unique", lambda i: f"{key}={keys[i]} already loaded")
        # Within the file, the first occurrence of a key wins.
        order = np.argsort(keys, kind="stable")
        dup = np.zeros(n, dtype=bool)
        if n:
            sk = keys[order]
            dup[order[1:]] = sk[1:] == sk[:-1]
        rejects.add(dup, "unique", lambda i: f"{key}={keys[i]} repeated in file")

        for fk in FOREIGN_KEYS:
            if fk.table != table:
                continue
            vals = cols[fk.column]
            ok = np.isin(vals, self.catalog.table(fk.ref_table)[fk.ref_column])
            if fk.zero_means_none:
                ok |= vals == 0
            rejects.add(~ok, "foreign_key", lambda i, fk=fk, vals=vals: (
                f"{fk.column}={vals[i]} not in {fk.ref_table}.{fk.ref_column}"))

        good = ~rejects.bad
        rows = {k: v[good] for k, v in cols.items()}
        if table == "PhotoObj":
            rows["ra"] = np.mod(rows["ra"], 360.0)
            rows["ra"][rows["ra"] >= 360.0] = 0.0
            xyz = radec_to_xyz(rows["ra"], rows["dec"])
            rows["cx"], rows["cy"], rows["cz"] = xyz[:, 0], xyz[:, 1], xyz[:, 2]
            rows["htmID"] = htm.lookup_ids(xyz, self.catalog.index_depth)
        rows["loadStamp"] = np.full(int(good.sum()), start, dtype=np.uint64)
        if rows["loadStamp"].size:
            self.catalog.replace(table, current.concat(rows).sorted())
        stop = self.catalog.stamp()

        event = LoadEvent(
            eventID=self.journal.next_id(),
            table=table,
            startStamp=start,
            stopStamp=stop,
            sourceRows=n,
            insertedRows=int(good.sum()),
            status=OK,
        )
        event.trace = [f"{i + 1},{c},{d}" for i, c, d in sorted(rejects.lines)]
        self._write_trace(event)
        self.journal.append(event)
        return event

    def _fail(self, table: str, start: int, source_rows: int, reason: str) -> LoadEvent:
        event = LoadEvent(
            eventID=self.journal.next_id(),
            table=table,
            startStamp=start,
            stopStamp=self.catalog.stamp(),
            sourceRows=source_rows,
            insertedRows=0,
            status=FAILED,
        )
        event.trace = [f"0,schema,{reason}"]
        self._write_trace(event)
        self.journal.append(event)
        return event

    def _write_trace(self, event: LoadEvent) -> None:
        if not self.trace_dir:
            return
        os.makedirs(self.trace_dir, exist_ok=True)
        event.tracePath = os.path.join(self.trace_dir, f"event-{event.eventID}.trace")
        with open(event.tracePath, "w", encoding="utf-8") as fh:
            fh.write("row,constraint,detail\n")
            for line in event.trace:
                fh.write(line + "\n")

    # -- undo -------------------------------------------------------------

    def undo(self, event_id: int) -> int:
        """Delete the rows a load step inserted; returns how many were removed."""
        with self.catalog.write_lock:
            event = self.journal.get(event_id)
            if event.status == UNDONE:
                raise AlreadyUndoneError(f"load event {event.eventID} is already undone")
            table = self.catalog.table(event.table)
            stamp = table["loadStamp"]
            doomed = (stamp >= event.startStamp) & (stamp <= event.stopStamp)
            self._check_dependents(event, table, doomed)
            removed = int(doomed.sum())
            if removed:
                self.catalog.replace(event.table, table.take(~doomed))
            event.status = UNDONE
            self.journal.append(event)
            return removed

    def _check_dependents(self, event: LoadEvent, table: Table, doomed: np.ndarray) -> None:
        if not doomed.any():
            return
        conflicts = []
        for fk in FOREIGN_KEYS:
            if fk.ref_table != event.table or fk.table == event.table:
                continue
            gone = table[fk.ref_column][doomed]
            vals = self.catalog.table(fk.table)[fk.column]
            hits = np.isin(vals, gone)
            if fk.zero_means_none:
                hits &= vals != 0
            if hits.any():
                conflicts.append(f"{int(hits.sum())} {fk.table} rows reference {event.table} via {fk.column}")
        if conflicts:
            raise UndoConflictError(
                f"cannot undo load event {event.eventID}: " + "; ".join(conflicts)
                + " (undo the dependent loads first)"
            )


def validate(catalog: Catalog) -> list[Violation]:
    """Report every integrity violation; an empty list means a clean catalog."""
    out: list[Violation] = []
    tables = catalog.tables
    for name, table in tables.items():
        schema = table.schema
        for c in schema.columns:
            col = table[c.name]
            if col.dtype.kind == "f":
                for i in np.flatnonzero(np.isnan(col)):
                    out.append(Violation(name, int(i), "not_null", f"{c.name} is null"))
        if len(table):
            keys = [table[k] for k in schema.key]
            order = np.lexsort(keys[::-1])
            same = np.ones(len(table) - 1, dtype=bool)
            for k in keys:
                same &= k[order][1:] == k[order][:-1]
            for i in order[1:][same]:
                key = ",".join(str(table[k][i]) for k in schema.key)
                out.append(Violation(name, int(i), "unique", f"duplicate key ({key})"))
    for fk in FOREIGN_KEYS:
        vals = tables[fk.table][fk.column]
        ok = np.isin(vals, tables[fk.ref_table][fk.ref_column])
        if fk.zero_means_none:
            ok |= vals == 0
        for i in np.flatnonzero(~ok):
            out.append(Violation(fk.table, int(i), "foreign_key",
                                 f"{fk.column}={vals[i]} not in {fk.ref_table}.{fk.ref_column}"))

    photo = tables["PhotoObj"]
    if len(photo):
        dec = photo["dec"]
        for i in np.flatnonzero((dec < -90) | (dec > 90)):
            out.append(Violation("PhotoObj", int(i), "domain", f"dec {dec[i]} outside [-90, 90]"))
        dec = np.clip(dec, -90.0, 90.0)
        xyz = radec_to_xyz(photo["ra"], dec)
        stored = np.stack([photo["cx"], photo["cy"], photo["cz"]], axis=-1)
        for i in np.flatnonzero(np.any(np.abs(xyz - stored) > DERIVED_TOLERANCE, axis=-1)):
            out.append(Violation("PhotoObj", int(i), "derived", "(cx, cy, cz) disagrees with (ra, dec)"))
        ids = htm.lookup_ids(xyz, catalog.index_depth)
        for i in np.flatnonzero(ids != photo["htmID"]):
            out.append(Violation("PhotoObj", int(i), "derived",
                                 f"htmID {photo['htmID'][i]} != recomputed {ids[i]}"))
        h = photo["htmID"]
        for i in np.flatnonzero(h[1:] < h[:-1]):
            out.append(Violation("PhotoObj", int(i) + 1, "sort_order", "htmID order broken"))

    nb = tables["Neighbors"]
    if len(nb):
        a, b = nb["objID"], nb["neighborObjID"]
        for i in np.flatnonzero(a == b):
            out.append(Violation("Neighbors", int(i), "self_pair", f"objID {a[i]} paired with itself"))
        pairs = set(zip(a.tolist(), b.tolist()))
        for i, (x, y) in enumerate(zip(a.tolist(), b.tolist())):
            if (y, x) not in pairs:
                out.append(Violation("Neighbors", i, "symmetry", f"({x}, {y}) has no reverse pair"))
    return sorted(out, key=lambda v: (v.table, v.row, v.constraint, v.detail))
