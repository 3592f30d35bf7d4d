"""Seeded synthetic sky catalogs.

Distributions (all drawn from one ``numpy.random.Generator``):

* positions uniform in area, either over the whole sphere (``uniform``) or
  over an equatorial patch centred on ra=185 whose area gives about 30,000
  objects per square degree (``sdss``);
* 11% of rows are secondaries that repeat the position of a random non-secondary row, 4%
  are deblended parents, and about 8% of the rest are children placed
  within 3 arcsec of a parent (parentID set); secondaries and parents are
  never primary and the remaining rows are primary with a probability that
  puts the overall primary fraction at 0.80;
* 98% of rows carry ok_run, 5% are saturated;
* type: 45% star, 45% galaxy, 5% trail, 5% defect;
* modelMag_r uniform in [14, 23] with normal colors, fiberMag = modelMag +
  0.3 + N(0, 0.05), errors uniform in [0.01, 0.2];
* q, u ~ N(0, 0.15); isoA lognormal around 3 arcsec, isoB = isoA * U(0.3, 1);
* rowv, colv ~ N(0, 1.5), with 1% of rows moving at U(3, 30) per axis.
"""
from __future__ import annotations

import os

import numpy as np
import pandas as pd

from .catalog import BANDS, LOADABLE_TABLES, SCHEMAS, Catalog, FlagDictionary
from .sphere import radec_to_xyz, xyz_to_radec

PROFILES = ("uniform", "sdss")
SDSS_DENSITY = 30_000.0  # objects per square degree
SECONDARY_FRACTION = 0.11
PARENT_FRACTION = 0.04
CHILD_FRACTION = 0.08
PRIMARY_FRACTION = 0.80
OBJID_BASE = 1_000_000
FIELD_WIDTH = 0.15  # degrees of ra per field


def _positions(rng: np.random.Generator, n: int, profile: str):
    if profile == "uniform":
        ra = rng.uniform(0.0, 360.0, n)
        dec = np.degrees(np.arcsin(rng.uniform(-1.0, 1.0, n)))
        return ra, dec
    if profile == "sdss":
        area = max(n / SDSS_DENSITY, 1e-6)
        side = np.sqrt(area)
        half = np.radians(side / 2.0)
        # ra width that gives the sin(dec)-uniform box the requested area
        width = area / (2.0 * np.sin(half) * 180.0 / np.pi)
        ra = 185.0 + rng.uniform(-width / 2.0, width / 2.0, n)
        dec = np.degrees(np.arcsin(rng.uniform(-np.sin(half), np.sin(half), n)))
        return np.mod(ra, 360.0), dec
    raise ValueError(f"unknown density profile {profile!r}; choose from {PROFILES}")


def _offset(ra, dec, rng, max_arcsec):
    """Points displaced from (ra, dec) by up to ``max_arcsec`` in a random direction."""
    v = radec_to_xyz(ra, dec)
    t = rng.normal(size=v.shape)
    t -= (t * v).sum(-1, keepdims=True) * v
    t /= np.linalg.norm(t, axis=-1, keepdims=True)
    ang = np.radians(rng.uniform(0.0, max_arcsec, len(v)) / 3600.0)
    w = v * np.cos(ang)[:, None] + t * np.sin(ang)[:, None]
    w /= np.linalg.norm(w, axis=-1, keepdims=True)
    return xyz_to_radec(w)


def generate(n: int, seed: int = 0, profile: str = "uniform", flags: FlagDictionary | None = None) -> dict:
    """Loadable column dicts for every table, keyed by table name."""
    if n < 0:
        raise ValueError("n must be non-negative")
    flags = flags or FlagDictionary()
    rng = np.random.default_rng(seed)
    ra, dec = _positions(rng, n, profile)

    role = rng.uniform(size=n)
    secondary = role < SECONDARY_FRACTION
    parent = (role >= SECONDARY_FRACTION) & (role < SECONDARY_FRACTION + PARENT_FRACTION)
    eligible = ~(secondary | parent)
    objid = OBJID_BASE + np.arange(n, dtype=np.uint64)

    parent_id = np.zeros(n, dtype=np.uint64)
    parents = np.flatnonzero(parent)
    child = eligible & (rng.uniform(size=n) < CHILD_FRACTION)
    child_idx = np.flatnonzero(child)
    if parents.size and child_idx.size:
        which = parents[rng.integers(0, parents.size, child_idx.size)]
        parent_id[child_idx] = objid[which]
        ra[child_idx], dec[child_idx] = _offset(ra[which], dec[which], rng, 3.0)
    else:
        child[:] = False

    # Secondaries repeat the position of a random non-secondary row.
    originals = np.flatnonzero(~secondary)
    sec_idx = np.flatnonzero(secondary)
    if sec_idx.size and originals.size:
        src = originals[rng.integers(0, originals.size, sec_idx.size)]
        ra[sec_idx], dec[sec_idx] = ra[src], dec[src]

    primary = eligible & (rng.uniform(size=n) < PRIMARY_FRACTION / (1.0 - SECONDARY_FRACTION - PARENT_FRACTION))
    ok_run = rng.uniform(size=n) < 0.98
    saturated = rng.uniform(size=n) < 0.05
    fl = np.zeros(n, dtype=np.uint64)
    for mask, name in ((primary, "primary"), (ok_run, "ok_run"), (saturated, "saturated"),
                       (secondary, "secondary"), (child, "child"), (parent, "blended")):
        fl[mask] |= np.uint64(flags.mask(name))

    types = rng.choice(np.array(["star", "galaxy", "trail", "defect"]), size=n, p=[0.45, 0.45, 0.05, 0.05])

    mag_r = rng.uniform(14.0, 23.0, n)
    colors = {"r": mag_r, "g": mag_r + rng.normal(0.6, 0.5, n), "i": mag_r - rng.normal(0.3, 0.3, n)}
    colors["u"] = colors["g"] + rng.normal(1.3, 0.6, n)
    colors["z"] = colors["i"] - rng.normal(0.2, 0.3, n)

    run = 100 + np.floor((dec + 90.0) / 2.5).astype(np.int32)
    camcol = 1 + np.minimum(np.floor(np.mod(dec + 90.0, 2.5) / (2.5 / 6)), 5).astype(np.int32)
    field = np.floor(ra / FIELD_WIDTH).astype(np.int32)
    field_id = (run.astype(np.uint64) << np.uint64(20)) | (camcol.astype(np.uint64) << np.uint64(16)) | field.astype(np.uint64)

    photo = {
        "objID": objid,
        "fieldID": field_id,
        "run": run,
        "camcol": camcol,
        "field": field,
        "ra": ra,
        "dec": dec,
        "type": types,
        "flags": fl,
        "parentID": parent_id,
    }
    fast = rng.uniform(size=n) < 0.01
    photo["rowv"] = np.where(fast, rng.uniform(3.0, 30.0, n), rng.normal(0.0, 1.5, n))
    photo["colv"] = np.where(fast, rng.uniform(3.0, 30.0, n), rng.normal(0.0, 1.5, n))
    for b in BANDS:
        photo[f"modelMag_{b}"] = colors[b]
    for b in BANDS:
        photo[f"modelMagErr_{b}"] = rng.uniform(0.01, 0.2, n)
    for b in BANDS:
        photo[f"fiberMag_{b}"] = colors[b] + 0.3 + rng.normal(0.0, 0.05, n)
    for b in BANDS:
        photo[f"q_{b}"] = rng.normal(0.0, 0.15, n)
        photo[f"u_{b}"] = rng.normal(0.0, 0.15, n)
    for b in BANDS:
        iso_a = rng.lognormal(np.log(3.0), 0.4, n)
        photo[f"isoA_{b}"] = iso_a
        photo[f"isoB_{b}"] = iso_a * rng.uniform(0.3, 1.0, n)

    fields, first = np.unique(field_id, return_index=True)
    field_tab = {
        "fieldID": fields,
        "run": run[first],
        "camcol": camcol[first],
        "field": field[first],
    }

    n_plates = max(1, n // 6000) if n else 0
    plate_tab = {"plateID": np.arange(1, n_plates + 1, dtype=np.uint64)}
    galaxies = np.flatnonzero(primary & (types == "galaxy"))
    n_spec = min(galaxies.size, n // 100)
    targets = np.sort(rng.choice(galaxies, size=n_spec, replace=False)) if n_spec else np.empty(0, np.int64)
    spec_tab = {
        "specObjID": np.arange(1, n_spec + 1, dtype=np.uint64),
        "plateID": rng.integers(1, n_plates + 1, n_spec).astype(np.uint64) if n_spec else np.empty(0, np.uint64),
        "bestObjID": objid[targets],
        "z": rng.uniform(0.0, 0.3, n_spec),
    }
    lines_per = rng.integers(5, 15, n_spec)
    line_spec = np.repeat(spec_tab["specObjID"], lines_per)
    line_tab = {
        "lineID": np.arange(1, line_spec.size + 1, dtype=np.uint64),
        "specObjID": line_spec,
        "wavelength": rng.uniform(3800.0, 9200.0, line_spec.size),
        "ew": rng.normal(0.0, 10.0, line_spec.size),
    }
    return {"Field": field_tab, "Plate": plate_tab, "PhotoObj": photo, "SpecObj": spec_tab, "SpecLine": line_tab}


def write_csv(tables: dict, outdir: str) -> dict[str, str]:
    """Write each table as ``<outdir>/<Table>.csv`` in the loader's import schema."""
    os.makedirs(outdir, exist_ok=True)
    paths = {}
    for name in LOADABLE_TABLES:
        cols = SCHEMAS[name].import_columns
        frame = pd.DataFrame({c: tables[name][c] for c in cols}, columns=cols)
        path = os.path.join(outdir, f"{name}.csv")
        frame.to_csv(path, index=False, lineterminator="\n", float_format=None)
        paths[name] = path
    return paths


def build_catalog(n: int, seed: int = 0, profile: str = "uniform", index_depth: int = 20):
    """Generate and load a catalog in memory; returns (catalog, loader)."""
    from .loader import Loader

    cat = Catalog(index_depth=index_depth)
    loader = Loader(cat)
    for name, cols in generate(n, seed, profile, cat.flags).items():
        ev = loader.load_columns(name, cols)
        if ev.insertedRows != ev.sourceRows:
            raise RuntimeError(f"synthetic {name} load rejected rows: {ev.trace[:3]}")
    return cat, loader
