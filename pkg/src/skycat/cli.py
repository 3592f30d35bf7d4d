"""Command-line interface: ``skycat [--catalog PATH] [--format csv|json] COMMAND ...``.

Data goes to stdout and diagnostics to stderr. Exit status is 0 on
success, 1 on a runtime or data error and 2 on a usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from contextlib import contextmanager

from filelock import FileLock

from . import bench, htm, queries, synth
from .catalog import DEFAULT_INDEX_DEPTH, LOADABLE_TABLES, TABLE_ORDER, Catalog
from .errors import ConfigurationError, LoadError, SkycatError
from .loader import FAILED, Journal, Loader, journal_path, trace_dir, validate
from .region import DEFAULT_BUDGET, Cap, ConvexRegion, cover, polygon_region
from .sphere import EquatorialCoord, eq_to_vec

ENV_CATALOG = "SKYCAT_CATALOG"
DEFAULT_CATALOG = "skycat.cat"


class CommandError(SkycatError):
    """A command that ran but could not do what was asked."""


# -- output ---------------------------------------------------------------


def _emit(args, header: list[str], rows, truncated: bool | None = None, reason: str | None = None) -> None:
    out = sys.stdout
    rows = [list(r) for r in rows]
    if args.format == "json":
        records = [dict(zip(header, r)) for r in rows]
        if truncated is None:
            json.dump(records, out)
        else:
            json.dump({"rows": records, "truncated": truncated, "reason": reason}, out)
        out.write("\n")
    else:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    if truncated:
        print(f"skycat: result truncated: {reason}", file=sys.stderr)


def _limits(args) -> queries.QueryLimits:
    max_rows = None if args.limit is not None and args.limit <= 0 else args.limit
    timeout = None if args.timeout is not None and args.timeout <= 0 else args.timeout
    return queries.QueryLimits(max_rows=max_rows, timeout=timeout)


# -- catalog access -------------------------------------------------------


def _open(args) -> Catalog:
    if not os.path.exists(args.catalog):
        raise CommandError(f"catalog {args.catalog} does not exist (run 'skycat create' first)")
    return Catalog.open(args.catalog)


@contextmanager
def _writing(args):
    """Exclusive read-modify-save of the catalog file."""
    with FileLock(args.catalog + ".lock"):
        cat = _open(args)
        loader = Loader(cat, Journal(journal_path(args.catalog)), trace_dir(args.catalog))
        yield cat, loader
        cat.save(args.catalog)


# -- commands -------------------------------------------------------------


def cmd_create(args) -> int:
    with FileLock(args.catalog + ".lock"):
        if os.path.exists(args.catalog) and not args.force:
            raise CommandError(f"catalog {args.catalog} already exists (use --force to replace it)")
        Catalog(index_depth=args.depth).save(args.catalog)
        jp = journal_path(args.catalog)
        if os.path.exists(jp):
            os.remove(jp)
    print(f"created {args.catalog} (index depth {args.depth})", file=sys.stderr)
    return 0


_EVENT_COLUMNS = ["eventID", "table", "startStamp", "stopStamp", "sourceRows", "insertedRows", "status", "tracePath"]


def _event_row(ev) -> list:
    return [getattr(ev, c) for c in _EVENT_COLUMNS]


def cmd_load(args) -> int:
    with _writing(args) as (cat, loader):
        ev = loader.load_csv(args.table, args.csv)
    _emit(args, _EVENT_COLUMNS, [_event_row(ev)])
    if ev.status == FAILED:
        raise LoadError(f"load of {args.table} failed: {ev.trace[0] if ev.trace else 'see trace'}")
    if ev.insertedRows < ev.sourceRows:
        print(f"skycat: {ev.sourceRows - ev.insertedRows} rows rejected; see {ev.tracePath}", file=sys.stderr)
    return 0


def cmd_undo(args) -> int:
    with _writing(args) as (cat, loader):
        removed = loader.undo(args.event)
    _emit(args, ["eventID", "removedRows"], [[args.event, removed]])
    return 0


def cmd_events(args) -> int:
    journal = Journal(journal_path(args.catalog))
    _emit(args, _EVENT_COLUMNS, [_event_row(ev) for ev in journal])
    return 0


def cmd_validate(args) -> int:
    found = validate(_open(args))
    _emit(args, ["table", "row", "constraint", "detail"], [[v.table, v.row, v.constraint, v.detail] for v in found])
    if found:
        raise CommandError(f"{len(found)} integrity violations")
    return 0


def _parse_polygon(text: str) -> ConvexRegion:
    try:
        nums = [float(x) for x in text.split(",")]
    except ValueError:
        raise ConfigurationError(f"--polygon expects ra1,dec1,ra2,dec2,... numbers, got {text!r}") from None
    if len(nums) % 2:
        raise ConfigurationError("--polygon needs an even number of values")
    return polygon_region(list(zip(nums[0::2], nums[1::2])))


def _parse_halfspaces(items: list[list[str]]) -> ConvexRegion:
    constraints = []
    for ra, dec, offset in items:
        c = EquatorialCoord.make(float(ra), float(dec))
        constraints.append((tuple(eq_to_vec(c.ra, c.dec)), float(offset)))
    return ConvexRegion(tuple(constraints))


def cmd_cover(args) -> int:
    if args.cap:
        ra, dec, r = args.cap
        region = Cap.from_radec(ra, dec, r)
    elif args.polygon:
        region = _parse_polygon(args.polygon)
    else:
        region = _parse_halfspaces(args.halfspace)
    rs = cover(region, args.depth, args.budget)
    if args.format == "json":
        json.dump([[lo, hi] for lo, hi in rs.ranges], sys.stdout)
        sys.stdout.write("\n")
    else:
        for lo, hi in rs.ranges:
            print(f"{lo} {hi}")
    return 0


def cmd_nearby(args) -> int:
    res = queries.run_limited(queries.nearby_eq(_open(args), args.ra, args.dec, args.r), _limits(args))
    _emit(args, ["objID", "distance"], [[h.objID, repr(h.distance)] for h in res.rows], res.truncated, res.reason)
    return 0


def cmd_nearest(args) -> int:
    hit = queries.nearest_eq(_open(args), args.ra, args.dec, args.r)
    _emit(args, ["objID", "distance"], [] if hit is None else [[hit.objID, repr(hit.distance)]])
    return 0


def cmd_neighbors(args) -> int:
    with _writing(args) as (cat, _):
        n = queries.build_neighbors(cat, args.radius)
    _emit(args, ["pairs"], [[n]])
    return 0


def cmd_query(args) -> int:
    cat = _open(args)
    limits = _limits(args)
    if args.name == "q1":
        res = queries.run_limited(queries.q1_unsaturated_galaxies(cat, args.ra, args.dec, args.r), limits)
        rows = [[h.objID, repr(h.distance)] for h in res.rows]
        header = ["objID", "distance"]
    elif args.name == "q15":
        res = queries.run_limited(queries.q15_asteroids(cat), limits)
        rows = [[v.objID, repr(v.velocity)] for v in res.rows]
        header = ["objID", "velocity"]
    elif args.name == "fastmovers":
        res = queries.run_limited(queries.fast_movers(cat), limits)
        rows = [[p.rId, p.gId] for p in res.rows]
        header = ["rId", "gId"]
    else:
        s = queries.color_count(cat, args.threshold)
        _emit(args, ["count", "rowsScanned", "bytesScanned", "elapsed", "rowsPerSec", "bytesPerSec"],
              [[s.count, s.rows, s.bytes, s.elapsed, s.rows_per_sec, s.bytes_per_sec]])
        return 0
    _emit(args, header, rows, res.truncated, res.reason)
    return 0


def cmd_bench(args) -> int:
    cat = _open(args)
    modes = ["warm", "cold"] if args.mode == "both" else [args.mode]
    for mode in modes:
        report = bench.bench_scan(cat, args.predicate, mode, args.repeats, args.catalog)
        print(report.to_json())
    return 0


def cmd_gen(args) -> int:
    tables = synth.generate(args.n, args.seed, args.profile)
    paths = synth.write_csv(tables, args.out)
    _emit(args, ["table", "rows", "path"], [[t, len(next(iter(tables[t].values()))), paths[t]] for t in LOADABLE_TABLES])
    return 0


def cmd_export(args) -> int:
    _open(args).export_csv(args.table, sys.stdout)
    return 0


def cmd_htm_lookup(args) -> int:
    c = EquatorialCoord.make(args.ra, args.dec)
    tid = htm.lookup_id(eq_to_vec(c.ra, c.dec), args.depth)
    _emit(args, ["htmID", "name"], [[tid, htm.id_to_name(tid)]])
    return 0


def cmd_htm_name(args) -> int:
    rows = []
    for token in args.items:
        tid = int(token) if token.isdigit() else htm.name_to_id(token)
        rows.append([tid, htm.id_to_name(tid), htm.depth_of(tid)])
    _emit(args, ["htmID", "name", "depth"], rows)
    return 0


def cmd_htm_edges(args) -> int:
    """Measured maximum trixel edge per depth, next to the nominal 90 deg / 2^d."""
    rows = []
    depths = range(args.from_depth, args.depth + 1) if args.from_depth is not None else [args.depth]
    for d in depths:
        value, exhaustive = htm.max_edge_length(d, samples=args.samples, seed=args.seed)
        nominal = 90.0 * 60.0 / 2**d
        rows.append([d, repr(value), repr(value * 60.0), repr(nominal * 60.0),
                     "exhaustive" if exhaustive else "sampled-lower-bound"])
    _emit(args, ["depth", "maxEdgeArcmin", "maxEdgeArcsec", "nominalArcsec", "method"], rows)
    if args.depth >= 20 and args.format != "json":
        last = float(rows[-1][2])
        print(f"skycat: depth {args.depth} max edge {last:.3f} arcsec; edges of 0.1 arcsec need about "
              f"{math.ceil(math.log2(last / 0.1))} more levels", file=sys.stderr)
    return 0


# -- parser ---------------------------------------------------------------


def _limit_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--limit", type=int, default=1000, help="maximum result rows, 0 for none (default 1000)")
    p.add_argument("--timeout", type=float, default=30.0, help="seconds before truncating, 0 for none (default 30)")


def _point_args(p: argparse.ArgumentParser, r_default: float | None = 1.0) -> None:
    p.add_argument("--ra", type=float, required=True, help="right ascension, degrees")
    p.add_argument("--dec", type=float, required=True, help="declination, degrees")
    p.add_argument("--r", type=float, default=r_default, help="radius, arcminutes (default 1)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="skycat", description="HTM-indexed sky catalog engine.")
    p.add_argument("--catalog", default=os.environ.get(ENV_CATALOG, DEFAULT_CATALOG),
                   help=f"catalog file (default ${ENV_CATALOG} or {DEFAULT_CATALOG})")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="output format (default csv)")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("create", help="create an empty catalog")
    s.add_argument("--depth", type=int, default=DEFAULT_INDEX_DEPTH, choices=range(htm.MAX_DEPTH + 1),
                   metavar="0..20", help="HTM index depth (default 20)")
    s.add_argument("--force", action="store_true", help="replace an existing catalog")
    s.set_defaults(func=cmd_create)

    s = sub.add_parser("load", help="load a CSV file into a table")
    s.add_argument("table", choices=LOADABLE_TABLES)
    s.add_argument("csv")
    s.set_defaults(func=cmd_load)

    s = sub.add_parser("undo", help="remove the rows of a load event")
    s.add_argument("event", type=int)
    s.set_defaults(func=cmd_undo)

    sub.add_parser("events", help="list load events").set_defaults(func=cmd_events)
    sub.add_parser("validate", help="report integrity violations").set_defaults(func=cmd_validate)

    s = sub.add_parser("cover", help="HTM id ranges covering a region")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--cap", nargs=3, type=float, metavar=("RA", "DEC", "R"), help="cap, radius in arcminutes")
    g.add_argument("--polygon", metavar="RA1,DEC1,...", help="convex counterclockwise polygon")
    g.add_argument("--halfspace", nargs=3, action="append", metavar=("RA", "DEC", "OFFSET"),
                   help="constraint normal.p >= offset; repeat to intersect")
    s.add_argument("--depth", type=int, default=DEFAULT_INDEX_DEPTH, choices=range(htm.MAX_DEPTH + 1),
                   metavar="0..20", help="index depth (default 20)")
    s.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help=f"maximum trixels (default {DEFAULT_BUDGET})")
    s.set_defaults(func=cmd_cover)

    s = sub.add_parser("nearby", help="objects within r arcminutes, nearest first")
    _point_args(s)
    _limit_args(s)
    s.set_defaults(func=cmd_nearby)

    s = sub.add_parser("nearest", help="nearest object within r arcminutes")
    _point_args(s)
    s.set_defaults(func=cmd_nearest)

    s = sub.add_parser("neighbors", help="materialized neighbor pairs")
    nsub = s.add_subparsers(dest="action", required=True, metavar="ACTION")
    b = nsub.add_parser("build", help="rebuild the Neighbors table")
    b.add_argument("--radius", type=float, default=queries.NEIGHBOR_RADIUS, help="arcminutes (default 0.5)")
    b.set_defaults(func=cmd_neighbors)

    s = sub.add_parser("query", help="run a named query")
    s.add_argument("name", choices=("q1", "q15", "fastmovers", "colorcount"))
    s.add_argument("--ra", type=float, help="q1 centre right ascension, degrees")
    s.add_argument("--dec", type=float, help="q1 centre declination, degrees")
    s.add_argument("--r", type=float, default=1.0, help="q1 radius, arcminutes (default 1)")
    s.add_argument("--threshold", type=float, default=1.0, help="colorcount r-g cut (default 1)")
    _limit_args(s)
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("bench", help="benchmarks")
    bsub = s.add_subparsers(dest="action", required=True, metavar="ACTION")
    b = bsub.add_parser("scan", help="time a full PhotoObj scan")
    b.add_argument("--predicate", choices=tuple(bench.PREDICATES), default="colorcut")
    b.add_argument("--mode", choices=("warm", "cold", "both"), default="both")
    b.add_argument("--repeats", type=int, default=5)
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("gen", help="write a synthetic sky as loadable CSV files")
    s.add_argument("--n", type=int, required=True, help="number of PhotoObj rows")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--profile", choices=synth.PROFILES, default="uniform")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("export", help="write a table as CSV")
    s.add_argument("table", choices=TABLE_ORDER)
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("htm", help="HTM utilities")
    hsub = s.add_subparsers(dest="action", required=True, metavar="ACTION")
    h = hsub.add_parser("lookup", help="trixel containing a point")
    h.add_argument("--ra", type=float, required=True)
    h.add_argument("--dec", type=float, required=True)
    h.add_argument("--depth", type=int, default=DEFAULT_INDEX_DEPTH, choices=range(htm.MAX_DEPTH + 1), metavar="0..20")
    h.set_defaults(func=cmd_htm_lookup)
    h = hsub.add_parser("name", help="convert between ids and names")
    h.add_argument("items", nargs="+", metavar="ID_OR_NAME")
    h.set_defaults(func=cmd_htm_name)
    h = hsub.add_parser("edges", help="measured maximum edge length")
    h.add_argument("--depth", type=int, default=20, choices=range(htm.MAX_DEPTH + 1), metavar="0..20")
    h.add_argument("--from-depth", type=int, default=None, choices=range(htm.MAX_DEPTH + 1), metavar="0..20",
                   help="report every depth from here up to --depth")
    h.add_argument("--samples", type=int, default=200_000, help="random trixels followed below depth 8")
    h.add_argument("--seed", type=int, default=0)
    h.set_defaults(func=cmd_htm_edges)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "query" and args.name == "q1" and (args.ra is None or args.dec is None):
        parser.error("query q1 requires --ra and --dec")
    try:
        return args.func(args)
    except (SkycatError, OSError) as exc:
        print(f"skycat: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
