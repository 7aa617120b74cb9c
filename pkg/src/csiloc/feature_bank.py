"""Random CSI-context filters and the Haar-like features built from them.

A context filter is a rectangle over one link's CSI profile: a sub-carrier
range on the horizontal axis and a magnitude range (dB) on the vertical
axis. Its value for a window is the fraction of that link's packets whose
profile passes through the rectangle. Features are differences between two
filter values.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .csi_model import ConfigurationError, CsiWindow, LinkId, MalformedInputError

log = logging.getLogger(__name__)

BANK_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ContextFilter:
    link: LinkId
    subcarrier_lo: int
    subcarrier_hi: int
    magnitude_lo: float
    magnitude_hi: float

    def __post_init__(self):
        if not 0 <= self.subcarrier_lo <= self.subcarrier_hi:
            raise ConfigurationError(f"bad sub-carrier range {self.subcarrier_lo}..{self.subcarrier_hi}")
        if not self.magnitude_lo < self.magnitude_hi:
            raise ConfigurationError(f"bad magnitude range {self.magnitude_lo}..{self.magnitude_hi}")

    def contains(self, other: "ContextFilter") -> bool:
        return (self.link == other.link
                and self.subcarrier_lo <= other.subcarrier_lo
                and other.subcarrier_hi <= self.subcarrier_hi
                and self.magnitude_lo <= other.magnitude_lo
                and other.magnitude_hi <= self.magnitude_hi)


@dataclass(frozen=True)
class FilterBank:
    filters: tuple[ContextFilter, ...]
    seed: int | None = None
    _by_link: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        # Group filters per link once; evaluation is vectorized over each group.
        groups = {}
        for idx, flt in enumerate(self.filters):
            groups.setdefault(flt.link, []).append(idx)
        packed = {}
        for link, idx in groups.items():
            fs = [self.filters[i] for i in idx]
            packed[link] = (
                np.asarray(idx, dtype=int),
                np.array([f.subcarrier_lo for f in fs]),
                np.array([f.subcarrier_hi for f in fs]),
                np.array([f.magnitude_lo for f in fs]),
                np.array([f.magnitude_hi for f in fs]),
            )
        object.__setattr__(self, "_by_link", packed)

    def __len__(self) -> int:
        return len(self.filters)

    @property
    def d(self) -> int:
        return len(self.filters)

    @property
    def links(self) -> list[LinkId]:
        return sorted(self._by_link)

    def to_record(self) -> dict:
        return {
            "version": BANK_FORMAT_VERSION,
            "seed": self.seed,
            "d": self.d,
            "filters": [
                [f.link.tx, f.link.rx, f.subcarrier_lo, f.subcarrier_hi, f.magnitude_lo, f.magnitude_hi]
                for f in self.filters
            ],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "FilterBank":
        if rec.get("version") != BANK_FORMAT_VERSION:
            raise MalformedInputError(f"unsupported filter bank version {rec.get('version')}")
        filters = tuple(
            ContextFilter(LinkId(int(tx), int(rx)), int(slo), int(shi), float(mlo), float(mhi))
            for tx, rx, slo, shi, mlo, mhi in rec["filters"]
        )
        if len(filters) != rec["d"]:
            raise MalformedInputError("filter count does not match d")
        return cls(filters, rec["seed"])


@dataclass(frozen=True)
class FeaturePair:
    i: int
    j: int


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    missing_links: frozenset = frozenset()

    def __len__(self) -> int:
        return len(self.values)


def sample_filter_bank(seed: int, d: int, links: Sequence[LinkId],
                       bounds: Mapping[LinkId, tuple[float, float]],
                       n_subcarriers: int) -> FilterBank:
    """Draw ``d`` random rectangles over the links' CSI profiles.

    For every filter the link is uniform over ``links``; the sub-carrier
    start is uniform over ``[0, f)`` and the width uniform over the
    remaining columns; the magnitude floor is uniform over the link's
    bounds and the height uniform over what is left above it.
    """
    if d < 2:
        raise ConfigurationError("need at least two filters")
    links = sorted(links)
    if not links:
        raise ConfigurationError("empty link set")
    missing = [lk for lk in links if lk not in bounds]
    if missing:
        raise ConfigurationError(f"no magnitude bounds for links {missing}")
    if n_subcarriers < 1:
        raise ConfigurationError("need at least one sub-carrier")
    rng = np.random.default_rng(seed)
    filters = []
    for _ in range(d):
        link = links[rng.integers(len(links))]
        sc_lo = int(rng.integers(n_subcarriers))
        width = int(rng.integers(1, n_subcarriers - sc_lo + 1))
        b_lo, b_hi = bounds[link]
        mag_lo = b_lo + (b_hi - b_lo) * rng.random()
        # 1 - U lies in (0, 1], so the height is never zero.
        mag_hi = mag_lo + (b_hi - mag_lo) * (1.0 - rng.random())
        if not mag_hi > mag_lo:
            mag_hi = b_hi
        filters.append(ContextFilter(link, sc_lo, sc_lo + width - 1, float(mag_lo), float(mag_hi)))
    return FilterBank(tuple(filters), seed)


def all_pairs(d: int) -> list[FeaturePair]:
    return [FeaturePair(i, j) for i, j in itertools.combinations(range(d), 2)]


def sample_pairs(d: int, size: int | None = None, seed: int = 0) -> list[FeaturePair]:
    """Canonical pair list, optionally a seeded uniform subsample of it."""
    pairs = all_pairs(d)
    if size is None or size >= len(pairs):
        return pairs
    if size < 1:
        raise ConfigurationError("pair subset size must be positive")
    keep = np.sort(np.random.default_rng(seed).choice(len(pairs), size=size, replace=False))
    return [pairs[k] for k in keep]


def pair_index_arrays(pairs: Sequence[FeaturePair]) -> tuple[np.ndarray, np.ndarray]:
    idx = np.array([(p.i, p.j) for p in pairs], dtype=int).reshape(-1, 2)
    return idx[:, 0], idx[:, 1]


def count_in_filter(window: CsiWindow, flt: ContextFilter) -> float:
    """Fraction of ``flt.link`` packets whose profile enters the rectangle.

    A packet counts when at least one sub-carrier in the filter's range has
    a magnitude inside the filter's (inclusive) magnitude range. A link
    missing from the window yields 0.
    """
    prof = window.profiles.get(flt.link)
    if prof is None:
        log.debug("link %s absent from window, filter value set to 0", flt.link)
        return 0.0
    cols = prof[:, flt.subcarrier_lo:flt.subcarrier_hi + 1]
    inside = (cols >= flt.magnitude_lo) & (cols <= flt.magnitude_hi)
    return float(np.count_nonzero(inside.any(axis=1))) / prof.shape[0]


def filter_values(window: CsiWindow, bank: FilterBank) -> tuple[np.ndarray, frozenset]:
    """Evaluate every filter of ``bank`` once; returns (values, missing links)."""
    lam = np.zeros(bank.d)
    missing = set()
    for link, (idx, slo, shi, mlo, mhi) in bank._by_link.items():
        prof = window.profiles.get(link)
        if prof is None:
            missing.add(link)
            continue
        f = prof.shape[1]
        cols = np.arange(f)
        in_band = (cols >= slo[:, None]) & (cols <= shi[:, None])            # (k, f)
        in_mag = ((prof[None] >= mlo[:, None, None])
                  & (prof[None] <= mhi[:, None, None]))                     # (k, n, f)
        hit = (in_mag & in_band[:, None, :]).any(axis=2)                    # (k, n)
        lam[idx] = hit.sum(axis=1) / prof.shape[0]
    if missing:
        log.debug("links %s absent from window, their filters set to 0", sorted(missing))
    return lam, frozenset(missing)


def haar_feature(window: CsiWindow, bank: FilterBank, pair: FeaturePair) -> float:
    if not (0 <= pair.i < bank.d and 0 <= pair.j < bank.d):
        raise MalformedInputError(f"pair {pair} out of range for d={bank.d}")
    return count_in_filter(window, bank.filters[pair.i]) - count_in_filter(window, bank.filters[pair.j])


def extract_features(window: CsiWindow, bank: FilterBank,
                     pairs: Sequence[FeaturePair]) -> FeatureVector:
    """Haar-like feature vector for ``pairs``; each filter is evaluated once."""
    if not pairs:
        raise ConfigurationError("no feature pairs given")
    return extract_with_index(window, bank, *pair_index_arrays(pairs))


def extract_with_index(window: CsiWindow, bank: FilterBank,
                       ii: np.ndarray, jj: np.ndarray) -> FeatureVector:
    """Same as :func:`extract_features` with pairs given as index arrays."""
    if ii.max() >= bank.d or jj.max() >= bank.d or min(ii.min(), jj.min()) < 0:
        raise MalformedInputError("feature pair index out of range")
    lam, missing = filter_values(window, bank)
    return FeatureVector(lam[ii] - lam[jj], missing)
