"""Synthetic CSI testbeds.

Each (location, link) pair carries a small Gaussian mixture over the
sub-carrier magnitude profile. Cluster means are smooth curves: a per-link
sinusoid plus a per-cluster shift, moved by a location-dependent offset and
tilt. The location dependence is linear in the grid position and scaled by
``separation_db``, so neighbouring locations differ in mean by about that
much on every link, and with a separation of zero all locations share one
distribution.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .csi_model import (
    ConfigurationError,
    CsiWindow,
    Fingerprint,
    FingerprintLocation,
    LinkId,
    PacketTable,
    all_links,
    build_windows,
)


class OutOfDomainError(ValueError):
    """Requested coordinate lies outside the fingerprint grid."""


@dataclass(frozen=True)
class ClusterModel:
    weight: float
    base: np.ndarray
    noise_sigma: np.ndarray


@dataclass(frozen=True)
class ScenarioConfig:
    rows: int = 5
    cols: int = 5
    spacing_m: float = 1.0
    n: int = 3
    m: int = 3
    f: int = 30
    clusters_per_link: int = 2
    separation_db: float = 4.0
    noise_sigma: float = 2.0
    seed: int = 0
    # Per-link override of separation_db.
    link_separation: Mapping[LinkId, float] | None = None


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    location_ids: tuple[str, ...]
    coordinates: np.ndarray
    links: tuple[LinkId, ...]
    clusters: Mapping[tuple[str, LinkId], tuple[ClusterModel, ...]] = field(repr=False)

    @property
    def seed(self) -> int:
        return self.config.seed

    def coordinate_of(self, location_id: str) -> tuple[float, float]:
        k = self.location_ids.index(location_id)
        return float(self.coordinates[k, 0]), float(self.coordinates[k, 1])

    def grid_id(self, row: int, col: int) -> str:
        return self.location_ids[row * self.config.cols + col]

    def cell_midpoints(self) -> list[tuple[float, float]]:
        cfg = self.config
        s = cfg.spacing_m
        return [((c + 0.5) * s, (r + 0.5) * s)
                for r in range(cfg.rows - 1) for c in range(cfg.cols - 1)]


def location_id(row: int, col: int) -> str:
    return f"L{row:02d}{col:02d}"


def build_scenario(config: ScenarioConfig = ScenarioConfig()) -> Scenario:
    """Draw a reproducible scenario from ``config``."""
    cfg = config
    if cfg.rows < 1 or cfg.cols < 1 or cfg.rows * cfg.cols < 2:
        raise ConfigurationError("grid needs at least two locations")
    if cfg.n < 1 or cfg.m < 1 or cfg.f < 1:
        raise ConfigurationError("antenna and sub-carrier counts must be positive")
    if not 1 <= cfg.clusters_per_link <= 3:
        raise ConfigurationError("clusters_per_link must be 1, 2 or 3")
    if cfg.separation_db < 0 or cfg.noise_sigma < 0 or cfg.spacing_m <= 0:
        raise ConfigurationError("separation, noise and spacing must be non-negative")
    if cfg.rows > 100 or cfg.cols > 100:
        raise ConfigurationError("grid dimension above 100 is not supported")

    rng = np.random.default_rng(cfg.seed)
    links = tuple(all_links(cfg.n, cfg.m))
    ids, coords = [], []
    for r in range(cfg.rows):
        for c in range(cfg.cols):
            ids.append(location_id(r, c))
            coords.append((c * cfg.spacing_m, r * cfg.spacing_m))
    sub = np.arange(cfg.f)
    centred = sub / max(cfg.f - 1, 1) - 0.5
    # Gradient signs cycle so both grid diagonals are encoded across links.
    patterns = np.array([(1, 1), (1, -1), (-1, 1), (-1, -1)])[rng.permutation(4)]
    sep_override = dict(cfg.link_separation or {})

    clusters = {}
    for li, link in enumerate(links):
        level = rng.uniform(35.0, 55.0)
        amp = rng.uniform(2.0, 6.0)
        freq = rng.uniform(0.5, 1.5)
        phase = rng.uniform(0.0, 2 * np.pi)
        shape = level + amp * np.sin(2 * np.pi * freq * sub / cfg.f + phase)
        shifts = [np.zeros(cfg.f)]
        for _ in range(cfg.clusters_per_link - 1):
            shift = rng.choice([-1.0, 1.0]) * rng.uniform(5.0, 9.0)
            wobble = rng.uniform(0.5, 2.0) * np.sin(2 * np.pi * rng.uniform(1.0, 2.0) * sub / cfg.f
                                                    + rng.uniform(0, 2 * np.pi))
            shifts.append(shift + wobble)
        raw = rng.uniform(1.0, 2.0, size=cfg.clusters_per_link)
        weights = raw / raw.sum()
        gx, gy = patterns[li % 4]
        tx_, ty_ = rng.choice([-1.0, 1.0], size=2)
        sep = float(sep_override.get(link, cfg.separation_db))
        sigma = np.full(cfg.f, float(cfg.noise_sigma))
        for k, lid in enumerate(ids):
            r, c = divmod(k, cfg.cols)
            offset = sep * (gy * r + gx * c)
            tilt = 0.5 * sep * (ty_ * r + tx_ * c) * centred
            clusters[(lid, link)] = tuple(
                ClusterModel(float(weights[j]), shape + shifts[j] + offset + tilt, sigma)
                for j in range(cfg.clusters_per_link)
            )
    return Scenario(cfg, tuple(ids), np.array(coords, dtype=float), links, clusters)


def _clusters_at(scenario: Scenario, point: tuple[float, float]) -> dict[LinkId, tuple[ClusterModel, ...]]:
    cfg = scenario.config
    x, y = point
    col, row = x / cfg.spacing_m, y / cfg.spacing_m
    eps = 1e-9
    if not (-eps <= col <= cfg.cols - 1 + eps and -eps <= row <= cfg.rows - 1 + eps):
        raise OutOfDomainError(f"point {point} lies outside the grid")
    col = min(max(col, 0.0), cfg.cols - 1.0)
    row = min(max(row, 0.0), cfg.rows - 1.0)
    c0 = min(int(np.floor(col)), max(cfg.cols - 2, 0))
    r0 = min(int(np.floor(row)), max(cfg.rows - 2, 0))
    fc, fr = col - c0, row - r0
    corners = []
    for dr, wr in ((0, 1 - fr), (1, fr)):
        for dc, wc in ((0, 1 - fc), (1, fc)):
            rr, cc = min(r0 + dr, cfg.rows - 1), min(c0 + dc, cfg.cols - 1)
            corners.append((scenario.grid_id(rr, cc), wr * wc))
    nearest = scenario.grid_id(int(round(row)), int(round(col)))
    out = {}
    for link in scenario.links:
        near = scenario.clusters[(nearest, link)]
        mixed = []
        for j, cl in enumerate(near):
            base = sum(wt * scenario.clusters[(lid, link)][j].base for lid, wt in corners)
            mixed.append(ClusterModel(cl.weight, base, cl.noise_sigma))
        out[link] = tuple(mixed)
    return out


def generate_packets(scenario: Scenario, where: str | tuple[float, float], count: int,
                     seed: int, label: str | None = None, start_time: float = 0.0) -> PacketTable:
    """Draw ``count`` packets (one per link per tick) for a person at ``where``.

    ``where`` is a grid location id or an ``(x, y)`` coordinate in meters;
    off-grid coordinates interpolate the enclosing cell's cluster means.
    Packets are labelled with ``label`` (default: the location id, or
    ``"-"`` for coordinates).
    """
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    if isinstance(where, str):
        per_link = {lk: scenario.clusters[(where, lk)] for lk in scenario.links}
        label = where if label is None else label
    else:
        per_link = _clusters_at(scenario, where)
        label = "-" if label is None else label
    rng = np.random.default_rng(seed)
    f = scenario.config.f
    n_links = len(scenario.links)
    mags = np.empty((count, n_links, f))
    for li, link in enumerate(scenario.links):
        cls = per_link[link]
        w = np.array([c.weight for c in cls])
        pick = rng.choice(len(cls), size=count, p=w / w.sum())
        bases = np.stack([c.base for c in cls])
        sigmas = np.stack([c.noise_sigma for c in cls])
        mags[:, li, :] = bases[pick] + rng.standard_normal((count, f)) * sigmas[pick]
    ticks = start_time + np.arange(count, dtype=float)
    return PacketTable(
        np.repeat(ticks, n_links),
        np.tile([lk.tx for lk in scenario.links], count),
        np.tile([lk.rx for lk in scenario.links], count),
        mags.reshape(count * n_links, f),
        np.full(count * n_links, label, dtype=object),
    )


def _seed(*parts: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts])


def make_fingerprint(scenario: Scenario, windows: int, window_size: int, seed: int,
                     stride: int | None = None) -> Fingerprint:
    """Training fingerprint with ``windows`` overlapping windows per location."""
    stride = max(1, window_size // 2) if stride is None else stride
    count = window_size + (windows - 1) * stride
    locs = []
    for k, lid in enumerate(scenario.location_ids):
        packets = generate_packets(scenario, lid, count, _seed(seed, 1, k))
        wins = build_windows(packets, window_size, stride)[:windows]
        locs.append(FingerprintLocation(lid, scenario.coordinate_of(lid), tuple(wins)))
    return Fingerprint(tuple(locs)).with_bounds()


def make_test_set(scenario: Scenario, windows: int, window_size: int, seed: int,
                  points: str | Sequence[tuple[float, float]] = "grid",
                  ) -> list[tuple[CsiWindow, tuple[float, float]]]:
    """Non-overlapping test windows with their ground-truth coordinates.

    ``points`` is ``"grid"`` (every fingerprint location), ``"midpoints"``
    (every grid cell centre) or an explicit coordinate list.
    """
    if points == "grid":
        targets = [(lid, scenario.coordinate_of(lid)) for lid in scenario.location_ids]
    elif points == "midpoints":
        targets = [(p, p) for p in scenario.cell_midpoints()]
    else:
        targets = [(tuple(p), tuple(p)) for p in points]
    out = []
    for k, (where, truth) in enumerate(targets):
        packets = generate_packets(scenario, where, windows * window_size, _seed(seed, 2, k))
        for win in build_windows(packets, window_size, window_size):
            out.append((win, (float(truth[0]), float(truth[1]))))
    return out
