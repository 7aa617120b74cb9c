"""CSI packets, windows, fingerprints and the outlier-filtering preprocessor.

Magnitudes are kept in columnar numpy arrays. A :class:`PacketTable` is a
sequence of :class:`CsiPacket` views over those arrays, and a
:class:`CsiWindow` stores one ``(packets, f)`` magnitude matrix per virtual
link.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple, overload

import numpy as np

UNLABELED = "-"

MAD_SCALE = 1.4826
BOUNDS_WIDEN = 0.05
BOUNDS_FLOOR_DB = 0.5


class MalformedInputError(ValueError):
    """Input data does not satisfy the declared shape or format."""


class ConfigurationError(ValueError):
    """A parameter or parameter combination is invalid."""


class MissingLinkError(KeyError):
    """A virtual link required by an operation has no data."""


class LinkId(NamedTuple):
    """One (transmitter antenna, receiver antenna) virtual link."""

    tx: int
    rx: int

    def __str__(self) -> str:
        return f"{self.tx}-{self.rx}"

    @classmethod
    def parse(cls, text: str) -> "LinkId":
        tx, rx = text.split("-")
        return cls(int(tx), int(rx))


def all_links(n: int, m: int) -> list[LinkId]:
    return [LinkId(i, j) for i in range(n) for j in range(m)]


@dataclass(frozen=True)
class CsiPacket:
    timestamp: float
    link: LinkId
    magnitudes: np.ndarray
    location_id: str = UNLABELED


class PacketTable(Sequence):
    """Columnar batch of CSI packets.

    Indexing yields :class:`CsiPacket` objects, so the table can be used
    anywhere a packet sequence is expected without materializing every
    packet.

    Parameters
    ----------
    timestamps : array of shape (N,)
    tx, rx : int arrays of shape (N,)
    magnitudes : array of shape (N, f), dB
    labels : str array of shape (N,), optional
        Location id per packet, ``"-"`` for unlabeled packets.
    """

    def __init__(self, timestamps, tx, rx, magnitudes, labels=None):
        self.timestamps = np.asarray(timestamps, dtype=float)
        self.tx = np.asarray(tx, dtype=int)
        self.rx = np.asarray(rx, dtype=int)
        mags = np.asarray(magnitudes, dtype=float)
        if mags.ndim == 1 and mags.size == 0:
            mags = mags.reshape(0, 0)
        if mags.ndim != 2:
            raise MalformedInputError("magnitudes must be a 2-D array")
        self.magnitudes = mags
        n = len(self.timestamps)
        if labels is None:
            labels = np.full(n, UNLABELED, dtype=object)
        self.labels = np.asarray(labels, dtype=object)
        if not (len(self.tx) == len(self.rx) == len(self.labels) == mags.shape[0] == n):
            raise MalformedInputError("packet table columns have different lengths")
        if not np.all(np.isfinite(mags)):
            raise MalformedInputError("non-finite magnitude in packet table")

    @property
    def n_subcarriers(self) -> int:
        return self.magnitudes.shape[1]

    def __len__(self) -> int:
        return len(self.timestamps)

    @overload
    def __getitem__(self, idx: int) -> CsiPacket: ...

    @overload
    def __getitem__(self, idx: slice) -> "PacketTable": ...

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return self.take(np.arange(len(self))[idx])
        return CsiPacket(
            timestamp=float(self.timestamps[idx]),
            link=LinkId(int(self.tx[idx]), int(self.rx[idx])),
            magnitudes=self.magnitudes[idx],
            location_id=str(self.labels[idx]),
        )

    def take(self, indices) -> "PacketTable":
        indices = np.asarray(indices, dtype=int)
        return PacketTable(
            self.timestamps[indices],
            self.tx[indices],
            self.rx[indices],
            self.magnitudes[indices],
            self.labels[indices],
        )

    def links(self) -> list[LinkId]:
        pairs = sorted(set(zip(self.tx.tolist(), self.rx.tolist())))
        return [LinkId(*p) for p in pairs]

    def select(self, label: str) -> "PacketTable":
        return self.take(np.flatnonzero(self.labels == label))

    def location_ids(self) -> list[str]:
        return sorted({str(v) for v in self.labels} - {UNLABELED})

    @classmethod
    def from_packets(cls, packets: Iterable[CsiPacket]) -> "PacketTable":
        if isinstance(packets, PacketTable):
            return packets
        packets = list(packets)
        if not packets:
            return cls([], [], [], np.empty((0, 0)))
        widths = {len(p.magnitudes) for p in packets}
        if len(widths) != 1:
            raise MalformedInputError(f"inconsistent sub-carrier counts: {sorted(widths)}")
        return cls(
            [p.timestamp for p in packets],
            [p.link.tx for p in packets],
            [p.link.rx for p in packets],
            np.vstack([np.asarray(p.magnitudes, dtype=float) for p in packets]),
            [p.location_id for p in packets],
        )

    @classmethod
    def concat(cls, tables: Sequence["PacketTable"]) -> "PacketTable":
        tables = [t for t in tables if len(t)]
        if not tables:
            return cls([], [], [], np.empty((0, 0)))
        return cls(
            np.concatenate([t.timestamps for t in tables]),
            np.concatenate([t.tx for t in tables]),
            np.concatenate([t.rx for t in tables]),
            np.vstack([t.magnitudes for t in tables]),
            np.concatenate([t.labels for t in tables]),
        )


@dataclass(frozen=True)
class CsiWindow:
    """Packets of one observation, grouped by virtual link.

    ``profiles[link]`` has shape ``(count, f)``; ``timestamps[link]`` the
    matching ``(count,)`` ticks.
    """

    profiles: Mapping[LinkId, np.ndarray]
    timestamps: Mapping[LinkId, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        widths = {p.shape[1] for p in self.profiles.values()}
        if len(widths) > 1:
            raise MalformedInputError("window links disagree on sub-carrier count")
        if any(p.shape[0] < 1 for p in self.profiles.values()):
            raise MalformedInputError("every link in a window needs at least one packet")

    @property
    def links(self) -> list[LinkId]:
        return sorted(self.profiles)

    @property
    def n_subcarriers(self) -> int:
        return next(iter(self.profiles.values())).shape[1]

    @property
    def window_size(self) -> int:
        return max((p.shape[0] for p in self.profiles.values()), default=0)

    def _times(self, link: LinkId) -> np.ndarray:
        ts = self.timestamps.get(link)
        return np.arange(self.profiles[link].shape[0], dtype=float) if ts is None else ts

    @property
    def packets(self) -> list[CsiPacket]:
        """Packets ordered by (timestamp, link)."""
        rows = []
        for link in self.links:
            for t, mags in zip(self._times(link), self.profiles[link]):
                rows.append(CsiPacket(float(t), link, mags))
        rows.sort(key=lambda p: (p.timestamp, p.link))
        return rows

    def restrict(self, links: Sequence[LinkId] | None = None,
                 subcarriers: Sequence[int] | None = None) -> "CsiWindow":
        """Keep only the given links and sub-carrier columns."""
        keep = self.links if links is None else [lk for lk in links if lk in self.profiles]
        cols = slice(None) if subcarriers is None else np.asarray(subcarriers, dtype=int)
        return CsiWindow(
            {lk: self.profiles[lk][:, cols] for lk in keep},
            {lk: self._times(lk) for lk in keep},
        )


@dataclass(frozen=True)
class FingerprintLocation:
    location_id: str
    coordinates: tuple[float, float]
    windows: tuple[CsiWindow, ...]


@dataclass(frozen=True)
class Fingerprint:
    locations: tuple[FingerprintLocation, ...]
    magnitude_bounds: Mapping[LinkId, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        ids = [loc.location_id for loc in self.locations]
        if len(set(ids)) != len(ids):
            raise MalformedInputError("duplicate location ids in fingerprint")
        for link, (lo, hi) in self.magnitude_bounds.items():
            if not lo < hi:
                raise MalformedInputError(f"bounds for link {link} are not increasing")

    @property
    def location_ids(self) -> list[str]:
        return [loc.location_id for loc in self.locations]

    @property
    def links(self) -> list[LinkId]:
        found = set()
        for loc in self.locations:
            for win in loc.windows:
                found.update(win.profiles)
        return sorted(found)

    def with_bounds(self) -> "Fingerprint":
        return Fingerprint(self.locations, magnitude_bounds(self))


def build_windows(packets: Sequence[CsiPacket], window_size: int, stride: int) -> list[CsiWindow]:
    """Cut a time-sorted packet stream into windows of ``window_size`` packets per link.

    Window ``i`` holds packets ``[i*stride, i*stride + window_size)`` of
    every link, counted per link. Windows are produced while every link has
    enough packets; the trailing remainder is dropped.
    """
    if window_size < 1 or stride < 1:
        raise ConfigurationError("window_size and stride must be >= 1")
    table = PacketTable.from_packets(packets)
    if len(table) == 0:
        return []
    per_link = {}
    for link in table.links():
        idx = np.flatnonzero((table.tx == link.tx) & (table.rx == link.rx))
        per_link[link] = idx
    shortest = min(len(idx) for idx in per_link.values())
    if shortest < window_size:
        return []
    count = (shortest - window_size) // stride + 1
    windows = []
    for i in range(count):
        start = i * stride
        sel = {lk: idx[start:start + window_size] for lk, idx in per_link.items()}
        windows.append(CsiWindow(
            {lk: table.magnitudes[s] for lk, s in sel.items()},
            {lk: table.timestamps[s] for lk, s in sel.items()},
        ))
    return windows


def _median(values: np.ndarray) -> float:
    s = np.sort(values)
    n = len(s)
    return 0.5 * (s[(n - 1) // 2] + s[n // 2])


def _outlier_keep(profile: np.ndarray, threshold: float) -> np.ndarray:
    means = profile.mean(axis=1)
    med = _median(means)
    dev = np.abs(means - med)
    mad = _median(dev)
    keep = np.ones(len(means), dtype=bool)
    if mad == 0:
        return keep
    keep = dev / (MAD_SCALE * mad) <= threshold
    keep[np.argmin(dev)] = True
    return keep


def filter_outliers(window: CsiWindow, threshold: float = 3.5) -> CsiWindow:
    """Drop packets whose mean magnitude is a robust-z outlier on their link.

    The MAD rule is re-applied until nothing more is dropped, which makes
    the filter idempotent. The packet closest to the median always
    survives.
    """
    if threshold <= 0:
        raise ConfigurationError("outlier threshold must be positive")
    profiles, times = {}, {}
    for link in window.links:
        prof = window.profiles[link]
        ts = window._times(link)
        while True:
            keep = _outlier_keep(prof, threshold)
            if keep.all():
                break
            prof, ts = prof[keep], ts[keep]
        profiles[link] = prof
        times[link] = ts
    return CsiWindow(profiles, times)


def magnitude_bounds(fingerprint: Fingerprint,
                     links: Sequence[LinkId] | None = None) -> dict[LinkId, tuple[float, float]]:
    """Per-link magnitude range over all training packets, widened 5% per side.

    The widening never drops below 0.5 dB so a constant link still gets a
    usable band.
    """
    if not fingerprint.locations:
        raise MalformedInputError("empty fingerprint")
    lo: dict[LinkId, float] = {}
    hi: dict[LinkId, float] = {}
    for loc in fingerprint.locations:
        for win in loc.windows:
            for link, prof in win.profiles.items():
                lo[link] = min(lo.get(link, np.inf), float(prof.min()))
                hi[link] = max(hi.get(link, -np.inf), float(prof.max()))
    wanted = sorted(lo) if links is None else list(links)
    bounds = {}
    for link in wanted:
        if link not in lo:
            raise MissingLinkError(f"link {link} absent from all training data")
        pad = max(BOUNDS_WIDEN * (hi[link] - lo[link]), BOUNDS_FLOOR_DB)
        bounds[link] = (lo[link] - pad, hi[link] + pad)
    return bounds
