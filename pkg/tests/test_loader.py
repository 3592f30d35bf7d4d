import json

import numpy as np
import pandas as pd
import pytest

from skycat import synth
from skycat.catalog import SCHEMAS, Catalog, Table
from skycat.errors import AlreadyUndoneError, LoadError, UndoConflictError, UnknownEventError
from skycat.loader import FAILED, OK, UNDONE, Journal, Loader, validate


@pytest.fixture()
def csvs(tmp_path):
    """Synthetic CSVs for 100 PhotoObj rows plus their dimension tables."""
    return synth.write_csv(synth.generate(100, seed=21), str(tmp_path / "csv"))


@pytest.fixture()
def loader(tmp_path):
    cat = Catalog()
    return Loader(cat, Journal(str(tmp_path / "j.jsonl")), str(tmp_path / "trace"))


def _load_all(loader, csvs, skip=()):
    return {t: loader.load_csv(t, p) for t, p in csvs.items() if t not in skip}


def test_clean_load(loader, csvs):
    events = _load_all(loader, csvs)
    ev = events["PhotoObj"]
    assert (ev.sourceRows, ev.insertedRows, ev.status) == (100, 100, OK)
    assert ev.startStamp <= ev.stopStamp
    assert validate(loader.catalog) == []
    assert len(loader.catalog.photo) == 100


def test_foreign_key_rejects(loader, csvs, tmp_path):
    frame = pd.read_csv(csvs["PhotoObj"], dtype=str)
    frame.loc[[5, 17, 60], "fieldID"] = "999999999"
    bad = tmp_path / "bad.csv"
    frame.to_csv(bad, index=False)
    _load_all(loader, csvs, skip=("PhotoObj", "SpecObj", "SpecLine"))
    ev = loader.load_csv("PhotoObj", str(bad))
    assert (ev.sourceRows, ev.insertedRows, ev.status) == (100, 97, OK)
    lines = open(ev.tracePath).read().splitlines()
    assert lines[0] == "row,constraint,detail"
    assert [ln.split(",")[:2] for ln in lines[1:]] == [["6", "foreign_key"], ["18", "foreign_key"], ["61", "foreign_key"]]
    assert "fieldID=999999999" in lines[1]
    assert len(loader.catalog.photo) == 97


def test_schema_mismatch(loader, tmp_path):
    path = tmp_path / "short.csv"
    path.write_text("ra,dec\n1,2\n")
    ev = loader.load_csv("PhotoObj", str(path))
    assert ev.status == FAILED and ev.insertedRows == 0
    assert "missing" in ev.trace[0]


def test_unreadable_and_empty_files(loader, tmp_path):
    ev = loader.load_csv("Field", str(tmp_path / "absent.csv"))
    assert ev.status == FAILED and ev.insertedRows == 0
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert loader.load_csv("Field", str(empty)).status == FAILED
    with pytest.raises(LoadError):
        loader.load_csv("Neighbors", str(empty))


def test_header_only_file(loader, tmp_path):
    path = tmp_path / "h.csv"
    path.write_text(",".join(SCHEMAS["Field"].import_columns) + "\n")
    ev = loader.load_csv("Field", str(path))
    assert (ev.sourceRows, ev.insertedRows, ev.status) == (0, 0, OK)


def test_row_level_checks(loader, csvs, tmp_path):
    _load_all(loader, csvs, skip=("PhotoObj", "SpecObj", "SpecLine"))
    frame = pd.read_csv(csvs["PhotoObj"], dtype=str, keep_default_na=False)
    frame.loc[0, "modelMag_g"] = ""
    frame.loc[1, "dec"] = "91"
    frame.loc[2, "type"] = "comet"
    frame.loc[3, "objID"] = frame.loc[4, "objID"]
    frame.loc[6, "ra"] = "abc"
    frame.loc[7, "flags"] = "-1"
    frame.loc[8, "rowv"] = "inf"
    frame.loc[9, "ra"] = "-30"
    path = tmp_path / "rows.csv"
    frame.to_csv(path, index=False)
    ev = loader.load_csv("PhotoObj", str(path))
    got = {int(ln.split(",")[0]): ln.split(",")[1] for ln in ev.trace}
    assert got == {1: "not_null", 2: "domain", 3: "domain", 5: "unique", 7: "type", 8: "type", 9: "type"}
    assert ev.insertedRows == 93
    photo = loader.catalog.photo
    wrapped = photo["ra"][photo["objID"] == int(frame.loc[9, "objID"])]
    assert wrapped.tolist() == [330.0]
    assert validate(loader.catalog) == []


def test_reload_same_file_rejects_duplicates(loader, csvs):
    _load_all(loader, csvs)
    ev = loader.load_csv("Field", csvs["Field"])
    assert ev.insertedRows == 0 and ev.sourceRows > 0
    assert all(",unique," in ln for ln in ev.trace)


def test_load_undo_restores_digest(loader, csvs, tmp_path):
    _load_all(loader, csvs, skip=("SpecObj", "SpecLine"))
    before = loader.catalog.digest()
    more = synth.generate(50, seed=22)
    more["PhotoObj"]["objID"] = more["PhotoObj"]["objID"] + np.uint64(10_000)
    more["PhotoObj"]["fieldID"] = np.resize(loader.catalog.table("Field")["fieldID"], 50)
    ev = loader.load_columns("PhotoObj", more["PhotoObj"])
    assert ev.insertedRows == 50
    assert len(loader.catalog.photo) == 150
    assert loader.undo(ev.eventID) == 50
    assert loader.catalog.digest() == before
    assert loader.journal.get(ev.eventID).status == UNDONE
    with pytest.raises(AlreadyUndoneError):
        loader.undo(ev.eventID)
    with pytest.raises(UnknownEventError):
        loader.undo(999)


def test_undo_partial_load_counts(loader, csvs, tmp_path):
    frame = pd.read_csv(csvs["PhotoObj"], dtype=str)
    frame.loc[[1, 2, 3], "fieldID"] = "1"
    bad = tmp_path / "bad.csv"
    frame.to_csv(bad, index=False)
    _load_all(loader, csvs, skip=("PhotoObj", "SpecObj", "SpecLine"))
    ev = loader.load_csv("PhotoObj", str(bad))
    assert ev.insertedRows == 97
    assert loader.undo(ev.eventID) == 97
    assert len(loader.catalog.photo) == 0


def test_undo_refuses_with_dependents(loader, csvs):
    events = _load_all(loader, csvs)
    with pytest.raises(UndoConflictError, match="SpecObj"):
        loader.undo(events["PhotoObj"].eventID)
    loader.undo(events["SpecLine"].eventID)
    loader.undo(events["SpecObj"].eventID)
    assert loader.undo(events["PhotoObj"].eventID) == 100


def test_undo_failed_event_removes_nothing(loader, tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("nope\n1\n")
    ev = loader.load_csv("Plate", str(path))
    assert loader.undo(ev.eventID) == 0


def test_journal_persists_and_last_record_wins(loader, csvs, tmp_path):
    events = _load_all(loader, csvs)
    loader.undo(events["SpecLine"].eventID)
    lines = [json.loads(x) for x in open(tmp_path / "j.jsonl")]
    assert len(lines) == len(events) + 1
    assert "trace" not in lines[0]
    again = Journal(str(tmp_path / "j.jsonl"))
    states = {e.table: e.status for e in again}
    assert states["SpecLine"] == UNDONE and states["PhotoObj"] == OK
    assert again.next_id() == len(events) + 1


def test_journal_counts_match_queryable_rows(loader, csvs):
    for table, path in csvs.items():
        before = len(loader.catalog.table(table))
        ev = loader.load_csv(table, path)
        assert len(loader.catalog.table(table)) - before == ev.insertedRows


def test_validate_reports_bad_specline(loader, csvs):
    _load_all(loader, csvs)
    cat = loader.catalog
    lines = cat.table("SpecLine")
    extra = {c: lines[c][:1].copy() for c in SCHEMAS["SpecLine"].names}
    extra["lineID"][:] = 10**9
    extra["specObjID"][:] = 999
    cat.replace("SpecLine", lines.concat(extra))
    found = validate(cat)
    assert len(found) == 1
    v = found[0]
    assert (v.table, v.row, v.constraint) == ("SpecLine", len(lines), "foreign_key")
    assert "999" in str(v)
    assert validate(cat) == found


def test_validate_reports_bad_htmid(loader, csvs):
    _load_all(loader, csvs)
    cat = loader.catalog
    photo = cat.photo
    cols = {c: photo[c].copy() for c in photo.schema.names}
    cols["htmID"][-1] += 1
    cat.replace("PhotoObj", Table(photo.schema, cols))
    found = validate(cat)
    assert [(v.table, v.row, v.constraint) for v in found] == [("PhotoObj", len(photo) - 1, "derived")]


def test_validate_neighbors_checks():
    cat = Catalog()
    nb = {"objID": np.array([1, 2, 3], np.uint64), "neighborObjID": np.array([2, 2, 1], np.uint64),
          "distance": np.zeros(3), "loadStamp": np.zeros(3, np.uint64)}
    cat.replace("Neighbors", Table(SCHEMAS["Neighbors"], nb))
    kinds = sorted({v.constraint for v in validate(cat)})
    assert kinds == ["foreign_key", "self_pair", "symmetry"]


def test_load_columns_type_names_and_nan(loader, csvs):
    _load_all(loader, csvs, skip=("PhotoObj", "SpecObj", "SpecLine"))
    cols = synth.generate(100, seed=21)["PhotoObj"]
    cols["modelMag_u"] = cols["modelMag_u"].copy()
    cols["modelMag_u"][4] = np.nan
    ev = loader.load_columns("PhotoObj", cols)
    assert ev.insertedRows == 99
    assert ev.trace == ["5,not_null,modelMag_u is null"]


def test_load_keeps_photo_sorted(loader, csvs):
    _load_all(loader, csvs)
    more = synth.generate(300, seed=23)["PhotoObj"]
    more["objID"] = more["objID"] + np.uint64(50_000)
    more["fieldID"] = np.resize(loader.catalog.table("Field")["fieldID"], 300)
    loader.load_columns("PhotoObj", more)
    assert np.all(np.diff(loader.catalog.photo["htmID"]) >= 0)
    assert validate(loader.catalog) == []
