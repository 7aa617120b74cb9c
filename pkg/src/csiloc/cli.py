"""Command-line interface: synth, train, locate, evaluate, sweep."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .csi_model import (
    ConfigurationError,
    Fingerprint,
    FingerprintLocation,
    LinkId,
    MalformedInputError,
    MissingLinkError,
    PacketTable,
    build_windows,
)
from .estimator import locate
from .evaluation import SWEEP_PARAMETERS, ExperimentConfig, evaluate, fit_model, rank_points, sweep
from .persistence import (
    coords_path,
    load_model,
    read_coords,
    read_dataset,
    save_model,
    write_coords,
    write_dataset,
)
from .synth_env import OutOfDomainError, ScenarioConfig, build_scenario, generate_packets

log = logging.getLogger("csiloc")

EXPECTED_ERRORS = (MalformedInputError, ConfigurationError, MissingLinkError, OutOfDomainError, OSError)


def _links(text: str | None) -> tuple[LinkId, ...] | None:
    if not text:
        return None
    try:
        return tuple(sorted(LinkId.parse(tok.strip()) for tok in text.split(",")))
    except ValueError as exc:
        raise ConfigurationError(f"bad link list {text!r}; expected e.g. 0-0,0-2") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad integer list {text!r}") from exc


def _scenario_config(args) -> ScenarioConfig:
    return ScenarioConfig(rows=args.rows, cols=args.cols, spacing_m=args.spacing, n=args.n, m=args.m,
                          f=args.f, clusters_per_link=args.clusters, separation_db=args.separation,
                          noise_sigma=args.sigma, seed=args.seed)


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rows", type=int, default=5)
    p.add_argument("--cols", type=int, default=5)
    p.add_argument("--spacing", type=float, default=1.0, help="grid spacing in meters")
    p.add_argument("--n", type=int, default=3, help="transmitter antennas")
    p.add_argument("--m", type=int, default=3, help="receiver antennas")
    p.add_argument("--f", type=int, default=30, help="sub-carrier groups")
    p.add_argument("--clusters", type=int, default=2, help="clusters per link")
    p.add_argument("--separation", type=float, default=4.0, help="adjacent-location separation, dB")
    p.add_argument("--sigma", type=float, default=2.0, help="per-sub-carrier noise, dB")


def cmd_synth(args) -> int:
    scenario = build_scenario(_scenario_config(args))
    tables, coords, grid = [], {}, list(scenario.location_ids)
    if args.points == "grid":
        targets = [(lid, lid, scenario.coordinate_of(lid)) for lid in scenario.location_ids]
    else:
        targets = [(f"M{k:03d}", p, p) for k, p in enumerate(scenario.cell_midpoints())]
    t0 = 0.0
    for k, (label, where, xy) in enumerate(targets):
        seed = np.random.SeedSequence([args.seed, 3, k, args.data_seed])
        tables.append(generate_packets(scenario, where, args.packets, seed, label=label, start_time=t0))
        coords[label] = xy
        t0 += args.packets
    table = PacketTable.concat(tables)
    write_dataset(args.out, table, scenario.config.n, scenario.config.m)
    write_coords(coords_path(args.out), coords, grid if args.points == "grid" else [])
    log.info("wrote %d packets for %d points to %s", len(table), len(targets), args.out)
    return 0


def _load_labeled(path, coords_file=None):
    table, header = read_dataset(path)
    coords, grid = read_coords(coords_file or coords_path(path))
    return table, header, coords, grid


def _windows_by_label(table: PacketTable, w: int, stride: int):
    for label in table.location_ids():
        yield label, build_windows(table.select(label), w, stride)


def cmd_train(args) -> int:
    table, header, coords, _ = _load_labeled(args.dataset, args.coords)
    stride = args.stride or max(1, args.w // 2)
    locs = []
    for label, wins in _windows_by_label(table, args.w, stride):
        if label not in coords:
            raise MalformedInputError(f"no coordinates for location {label!r}")
        if args.max_windows:
            wins = wins[:args.max_windows]
        locs.append(FingerprintLocation(label, coords[label], tuple(wins)))
    subcarriers = None
    if args.f is not None and args.f < header["f"]:
        subcarriers = np.unique(np.linspace(0, header["f"] - 1, args.f).round().astype(int)).tolist()
    model = fit_model(Fingerprint(tuple(locs)), d=args.d, g=args.g, candidates=args.candidates,
                      seed=args.seed, links=_links(args.links), subcarriers=subcarriers,
                      extra={"w": args.w, "stride": stride, "k": args.k})
    save_model(args.out, model)
    log.info("trained %d rounds over %d locations -> %s", len(model.rounds), model.n_locations, args.out)
    return 0


def _test_windows(table: PacketTable, w: int):
    labels = table.location_ids()
    if labels:
        for label, wins in _windows_by_label(table, w, w):
            for win in wins:
                yield label, win
    else:
        for win in build_windows(table, w, w):
            yield "-", win


def cmd_locate(args) -> int:
    model = load_model(args.model)
    table, _ = read_dataset(args.dataset)
    w = args.w or int(model.config.get("w", 500))
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        out.write("window_index,discrete_id,x,y,latency_ms,top_k\n")
        for idx, (_, win) in enumerate(_test_windows(table, w)):
            est = locate(model, win, args.k)
            top = ";".join(f"{lid}:{p:.6g}" for lid, p in est.top_k())
            x, y = est.continuous
            out.write(f"{idx},{est.discrete},{x:.6f},{y:.6f},{est.latency_ms:.3f},{top}\n")
    finally:
        if args.out:
            out.close()
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    table, _, coords, _ = _load_labeled(args.dataset, args.coords)
    w = args.w or int(model.config.get("w", 500))
    test = []
    for label, win in _test_windows(table, w):
        if label not in coords:
            raise MalformedInputError(f"no ground truth for {label!r}")
        test.append((win, coords[label]))
    report = evaluate(model, test, args.k, {"test_w": w})
    json.dump(report.summary(), sys.stdout, indent=1, default=str)
    sys.stdout.write("\n")
    return 0


def _sweep_values(param: str, text: str):
    if param == "link-subset":
        subsets = [_links(chunk) for chunk in text.split(";") if chunk.strip()]
        return [s for s in subsets if s]
    return _ints(text)


def cmd_sweep(args) -> int:
    base = ExperimentConfig(
        scenario=_scenario_config(args), w=args.w, d=args.d, g=args.g, k=args.k,
        candidates=args.candidates, train_windows=args.train_windows, test_windows=args.test_windows,
        links=_links(args.links), test_points=args.points, seed=args.seed,
    )
    values = _sweep_values(args.param, args.values)
    seeds = _ints(args.seeds) if args.seeds else None
    points = sweep(args.param, values, base, seeds=seeds, repeats=args.repeats)
    if args.param == "link-subset":
        points = rank_points(points)
    print(f"{args.param:>16} {'median_m':>10} {'std_m':>8} {'reports':>8}")
    for pt in points:
        label = "+".join(map(str, pt.value)) if args.param == "link-subset" else str(pt.value)
        print(f"{label:>16} {pt.median_mean:10.4f} {pt.median_std:8.4f} {len(pt.reports):8d}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csiloc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic dataset")
    _add_scenario_flags(p)
    p.add_argument("--seed", type=int, default=0, help="scenario seed")
    p.add_argument("--data-seed", type=int, default=0, help="packet noise seed")
    p.add_argument("--packets", type=int, default=2000, help="packets per point")
    p.add_argument("--points", choices=("grid", "midpoints"), default="grid")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model from a labeled dataset")
    p.add_argument("dataset")
    p.add_argument("--coords", help="coordinates sidecar (default: <dataset>.coords.json)")
    p.add_argument("--out", required=True)
    p.add_argument("--w", type=int, default=500)
    p.add_argument("--stride", type=int, help="training window stride (default w/2)")
    p.add_argument("--max-windows", type=int, default=40, help="training windows per location")
    p.add_argument("--d", type=int, default=100)
    p.add_argument("--g", type=int, default=700)
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--f", type=int, help="use f evenly spaced sub-carriers")
    p.add_argument("--candidates", type=int, help="features searched per round (default all)")
    p.add_argument("--links", help="comma list like 0-0,0-2")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("locate", help="estimate locations for every window of a dataset")
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("--w", type=int, help="window size (default: training w)")
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_locate)

    p = sub.add_parser("evaluate", help="distance-error report against ground truth")
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("--coords")
    p.add_argument("--w", type=int)
    p.add_argument("--k", type=int, default=6)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="vary one parameter on a synthetic testbed")
    _add_scenario_flags(p)
    p.add_argument("--param", choices=SWEEP_PARAMETERS, required=True)
    p.add_argument("--values", required=True,
                   help="comma list; for link-subset use ';' between subsets, e.g. '0-0,0-1;0-0,0-2'")
    p.add_argument("--w", type=int, default=500)
    p.add_argument("--d", type=int, default=100)
    p.add_argument("--g", type=int, default=700)
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--candidates", type=int)
    p.add_argument("--links")
    p.add_argument("--train-windows", type=int, default=40)
    p.add_argument("--test-windows", type=int, default=20)
    p.add_argument("--points", choices=("grid", "midpoints"), default="grid")
    p.add_argument("--repeats", type=int, default=5, help="sub-carrier subsets per f value")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", help="comma list of seeds to average over")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EXPECTED_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
