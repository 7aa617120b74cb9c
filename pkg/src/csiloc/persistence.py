"""Dataset, ground-truth sidecar and model files.

Dataset files are line-delimited text. The first line declares the antenna
and sub-carrier counts (``n=3,m=3,f=30``); every following line is one
packet::

    timestamp,tx,rx,location_id,mag_0,...,mag_{f-1}

``location_id`` is ``-`` for unlabeled packets. Floats are written with
``repr`` so a save/load round trip is exact.

Ground-truth coordinates live in a JSON sidecar next to the dataset
(``<dataset>.coords.json``). Models are a single versioned JSON document.
"""

from __future__ import annotations

import json
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from .csi_model import LinkId, MalformedInputError, PacketTable
from .feature_bank import FeaturePair, FilterBank
from .joint_boost import BoostModel, SharedStump, TrainTrace

MODEL_FORMAT_VERSION = 1
COORDS_SUFFIX = ".coords.json"


def write_dataset(path, table: PacketTable, n: int, m: int) -> None:
    f = table.n_subcarriers if len(table) else 0
    with open(path, "w") as fh:
        fh.write(f"n={n},m={m},f={f}\n")
        for t, tx, rx, label, mags in zip(table.timestamps.tolist(), table.tx.tolist(),
                                          table.rx.tolist(), table.labels, table.magnitudes.tolist()):
            fh.write(f"{t!r},{tx},{rx},{label},{','.join(map(repr, mags))}\n")


def _parse_header(line: str) -> dict[str, int]:
    try:
        fields = dict(part.strip().split("=") for part in line.strip().split(","))
        header = {key: int(fields[key]) for key in ("n", "m", "f")}
    except (ValueError, KeyError) as exc:
        raise MalformedInputError(f"bad dataset header {line.strip()!r}") from exc
    if min(header.values()) < 1:
        raise MalformedInputError("dataset header counts must be positive")
    return header


def read_dataset(path) -> tuple[PacketTable, dict[str, int]]:
    """Load a dataset file; returns the packets and the ``n, m, f`` header."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MalformedInputError(f"{path}: empty dataset file")
    header = _parse_header(lines[0])
    f = header["f"]
    ts, tx, rx, labels, mags = [], [], [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4 + f:
            raise MalformedInputError(f"{path}:{lineno}: expected {4 + f} fields, got {len(parts)}")
        try:
            ts.append(float(parts[0]))
            tx.append(int(parts[1]))
            rx.append(int(parts[2]))
            mags.append([float(v) for v in parts[4:]])
        except ValueError as exc:
            raise MalformedInputError(f"{path}:{lineno}: {exc}") from exc
        labels.append(parts[3].strip())
    if not ts:
        return PacketTable([], [], [], np.empty((0, f))), header
    table = PacketTable(ts, tx, rx, np.array(mags), np.array(labels, dtype=object))
    if (table.tx < 0).any() or (table.tx >= header["n"]).any() \
            or (table.rx < 0).any() or (table.rx >= header["m"]).any():
        raise MalformedInputError(f"{path}: antenna index outside the declared n, m")
    if (np.diff(table.timestamps) < 0).any():
        raise MalformedInputError(f"{path}: timestamps are not sorted")
    return table, header


def coords_path(dataset_path) -> Path:
    return Path(str(dataset_path) + COORDS_SUFFIX)


def write_coords(path, coords: Mapping[str, tuple[float, float]], grid: list[str] | None = None) -> None:
    doc = {
        "locations": {lid: [float(x), float(y)] for lid, (x, y) in coords.items()},
        "grid": sorted(grid) if grid is not None else sorted(coords),
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def read_coords(path) -> tuple[dict[str, tuple[float, float]], list[str]]:
    try:
        doc = json.loads(Path(path).read_text())
        coords = {lid: (float(x), float(y)) for lid, (x, y) in doc["locations"].items()}
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise MalformedInputError(f"cannot read coordinates from {path}: {exc}") from exc
    return coords, list(doc.get("grid", sorted(coords)))


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, LinkId):
        return str(value)
    if isinstance(value, np.generic):
        return value.item()
    return value


def model_to_record(model: BoostModel) -> dict:
    rec = {
        "version": MODEL_FORMAT_VERSION,
        "location_ids": list(model.location_ids),
        "coordinates": model.coordinates.tolist(),
        "bank": model.bank.to_record(),
        "pairs": [[p.i, p.j] for p in model.pairs],
        "bounds": {str(lk): [lo, hi] for lk, (lo, hi) in sorted(model.bounds.items())},
        "config": _jsonable(dict(model.config)),
        "rounds": [
            [s.feature, s.threshold, s.a, s.b, sorted(s.members),
             [[k, v] for k, v in sorted(s.offsets.items())]]
            for s in model.rounds
        ],
    }
    if model.trace is not None:
        tr = model.trace
        rec["trace"] = {"loss": list(tr.loss), "stump_error": list(tr.stump_error),
                        "zero_error": list(tr.zero_error), "initial_loss": tr.initial_loss}
    return rec


def model_from_record(rec: dict) -> BoostModel:
    if rec.get("version") != MODEL_FORMAT_VERSION:
        raise MalformedInputError(f"unsupported model version {rec.get('version')}")
    try:
        rounds = tuple(
            SharedStump(int(f), float(t), float(a), float(b), frozenset(int(c) for c in mem),
                        {int(k): float(v) for k, v in offs})
            for f, t, a, b, mem, offs in rec["rounds"]
        )
        trace = None
        if "trace" in rec:
            tr = rec["trace"]
            trace = TrainTrace(tuple(tr["loss"]), tuple(tr["stump_error"]),
                               tuple(tr["zero_error"]), tr["initial_loss"])
        return BoostModel(
            rounds,
            tuple(rec["location_ids"]),
            np.array(rec["coordinates"], dtype=float).reshape(-1, 2),
            FilterBank.from_record(rec["bank"]),
            tuple(FeaturePair(int(i), int(j)) for i, j in rec["pairs"]),
            {LinkId.parse(k): (float(lo), float(hi)) for k, (lo, hi) in rec["bounds"].items()},
            rec.get("config", {}),
            trace,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInputError(f"malformed model record: {exc}") from exc


def save_model(path, model: BoostModel) -> None:
    Path(path).write_text(json.dumps(model_to_record(model)))


def load_model(path) -> BoostModel:
    try:
        rec = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise MalformedInputError(f"cannot read model {path}: {exc}") from exc
    return model_from_record(rec)
