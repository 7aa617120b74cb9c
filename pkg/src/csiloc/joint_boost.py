"""Joint boosting of per-location binary classifiers with shared decision stumps.

Every round fits one regression stump on a single Haar feature and shares it
between a subset of locations: member locations receive ``a`` when the
feature exceeds the threshold and ``b`` otherwise, every other location
receives its own constant. The subset is grown greedily, one location at a
time, and the best subset seen along the way is kept. Weights follow the
gentle-boost rule ``w <- w * exp(-z * h)``.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numba
import numpy as np
import scipy.sparse as sp

from .csi_model import (
    ConfigurationError,
    Fingerprint,
    LinkId,
    MalformedInputError,
    filter_outliers,
)
from .feature_bank import FeaturePair, FeatureVector, FilterBank, filter_values, pair_index_arrays

@dataclass(frozen=True)
class SharedStump:
    """One boosting round.

    ``members`` and the keys of ``offsets`` are indices into the model's
    location table. The stump's sign is ``sign(a - b)``.
    """

    feature: int
    threshold: float
    a: float
    b: float
    members: frozenset[int]
    offsets: Mapping[int, float] = field(default_factory=dict)

    @property
    def sign(self) -> int:
        return int(np.sign(self.a - self.b))

    def response(self, n_locations: int, value: float) -> np.ndarray:
        out = np.zeros(n_locations)
        for loc, k in self.offsets.items():
            out[loc] = k
        out[list(self.members)] = self.a if value > self.threshold else self.b
        return out


@dataclass(frozen=True)
class TrainConfig:
    rounds: int = 700
    candidates: int | None = None
    seed: int = 0
    max_thresholds: int | None = 64
    outlier_threshold: float | None = 3.5


@dataclass(frozen=True)
class TrainTrace:
    """Per-round diagnostics: exponential loss after the round, the accepted
    weighted squared error and the error of the all-zero stump (both under
    the weights the round was fitted with, rescaled to a max weight of 1)."""

    loss: tuple[float, ...]
    stump_error: tuple[float, ...]
    zero_error: tuple[float, ...]
    initial_loss: float


@dataclass(frozen=True)
class ClassifierOutput:
    location_ids: tuple[str, ...]
    scores: np.ndarray
    detections: np.ndarray
    confidences: np.ndarray


@dataclass(frozen=True)
class BoostModel:
    rounds: tuple[SharedStump, ...]
    location_ids: tuple[str, ...]
    coordinates: np.ndarray
    bank: FilterBank
    pairs: tuple[FeaturePair, ...]
    bounds: Mapping[LinkId, tuple[float, float]] = field(default_factory=dict)
    config: Mapping[str, Any] = field(default_factory=dict)
    trace: TrainTrace | None = None
    _tables: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        n_loc = len(self.location_ids)
        g = len(self.rounds)
        feat = np.array([s.feature for s in self.rounds], dtype=int)
        if g and (feat.min() < 0 or feat.max() >= len(self.pairs)):
            raise MalformedInputError("stump feature index outside the pair list")
        thr = np.array([s.threshold for s in self.rounds], dtype=float)
        a = np.array([s.a for s in self.rounds], dtype=float)
        b = np.array([s.b for s in self.rounds], dtype=float)
        member = np.zeros((g, n_loc))
        offset = np.zeros(n_loc)
        for r, s in enumerate(self.rounds):
            member[r, list(s.members)] = 1.0
            for loc, k in s.offsets.items():
                offset[loc] += k
        object.__setattr__(self, "_tables", (feat, thr, a, b, member, offset))

    @property
    def n_locations(self) -> int:
        return len(self.location_ids)

    @property
    def links(self) -> list[LinkId]:
        return sorted(self.bounds) if self.bounds else self.bank.links

    def truncated(self, rounds: int) -> "BoostModel":
        """Model made of the first ``rounds`` rounds only."""
        trace = self.trace
        if trace is not None:
            trace = TrainTrace(trace.loss[:rounds], trace.stump_error[:rounds],
                               trace.zero_error[:rounds], trace.initial_loss)
        return BoostModel(self.rounds[:rounds], self.location_ids, self.coordinates, self.bank,
                          self.pairs, self.bounds, {**self.config, "g": rounds}, trace)


def _safe_ratio_sq(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num * num, den, out=out, where=den > 0)
    return out


def _safe_mean(num, den) -> float:
    return float(num / den) if den > 0 else 0.0


def fit_shared_stump(features: np.ndarray, labels: np.ndarray, weights: np.ndarray,
                     subset: Iterable[int], candidates: Sequence[int]) -> tuple[SharedStump, float]:
    """Best stump shared by the classes in ``subset``.

    Parameters
    ----------
    features : array of shape (N, P)
    labels : array of shape (N, L) with entries +1 / -1
    weights : array of shape (N, L), positive
    subset : class indices sharing the stump
    candidates : feature indices to search

    Returns
    -------
    stump, error
        ``error`` is the weighted squared error summed over member classes.
        Thresholds are midpoints between consecutive distinct values; ties
        go to the lowest feature index, then the lowest threshold.
    """
    features = np.asarray(features, dtype=float)
    z = np.asarray(labels, dtype=float)
    w = np.asarray(weights, dtype=float)
    members = sorted(set(int(c) for c in subset))
    if not members:
        raise ConfigurationError("subset must not be empty")
    if len(candidates) == 0:
        raise ConfigurationError("no candidate features")
    wz_s = (w[:, members] * z[:, members]).sum(axis=1)
    w_s = w[:, members].sum(axis=1)
    total_a, total_w = wz_s.sum(), w_s.sum()
    base = float((w[:, members] * z[:, members] ** 2).sum())

    best = None
    for f in candidates:
        x = features[:, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        cut = np.flatnonzero(xs[:-1] < xs[1:])
        if cut.size == 0:
            continue
        ca = np.cumsum(wz_s[order])[cut]
        cw = np.cumsum(w_s[order])[cut]
        err = base - (_safe_ratio_sq(ca, cw) + _safe_ratio_sq(total_a - ca, total_w - cw))
        t = int(np.argmin(err))
        if best is None or err[t] < best[0]:
            theta = 0.5 * (xs[cut[t]] + xs[cut[t] + 1])
            best = (float(err[t]), int(f), float(theta),
                    _safe_mean(total_a - ca[t], total_w - cw[t]), _safe_mean(ca[t], cw[t]))

    if best is None:
        # Every candidate is constant: fall back to a shared constant.
        f = int(candidates[0])
        mean = _safe_mean(total_a, total_w)
        best = (base - _safe_ratio_sq(np.array(total_a), np.array(total_w)).item(),
                f, float(features[0, f]), mean, mean)

    err, f, theta, a, b = best
    offsets = {}
    for c in range(z.shape[1]):
        if c not in members:
            offsets[c] = _safe_mean((w[:, c] * z[:, c]).sum(), w[:, c].sum())
    return SharedStump(f, theta, a, b, frozenset(members), offsets), err


class _BinnedFeatures:
    """Candidate thresholds per feature and a sparse sample-to-bin map.

    A feature with at most ``max_bins`` distinct values gets a threshold
    between every pair of consecutive values. Otherwise the cuts are placed
    at sample quantiles, still at midpoints between consecutive distinct
    values.
    """

    def __init__(self, X: np.ndarray, max_bins: int | None):
        n, p = X.shape
        inverse = np.empty((p, n), dtype=np.int64)
        cuts = []
        for k in range(p):
            u, inv, cnt = np.unique(X[:, k], return_inverse=True, return_counts=True)
            if max_bins is None or len(u) <= max_bins:
                pos = np.arange(len(u) - 1)
                inverse[k] = inv
            else:
                targets = n * np.arange(1, max_bins) / max_bins
                pos = np.unique(np.searchsorted(np.cumsum(cnt), targets))
                pos = pos[pos < len(u) - 1]
                inverse[k] = np.searchsorted(pos, np.arange(len(u)), side="left")[inv]
            cuts.append(0.5 * (u[pos] + u[pos + 1]))
        self.n_bins = np.array([len(c) + 1 for c in cuts])
        self.width = int(self.n_bins.max())
        self.thresholds = np.full((p, max(self.width - 1, 1)), np.nan)
        for k, c in enumerate(cuts):
            self.thresholds[k, :len(c)] = c
        self.first = X[0].copy()
        rows = (np.arange(p)[:, None] * self.width + inverse).ravel()
        cols = np.tile(np.arange(n), p)
        self.onehot = sp.csr_matrix((np.ones(p * n), (rows, cols)), shape=(p * self.width, n))

    def cumulative(self, cand: np.ndarray, stacked: np.ndarray) -> np.ndarray:
        """Sums of ``stacked`` columns over samples with bin <= t, shape (C, T, k)."""
        rows = (cand[:, None] * self.width + np.arange(self.width)).ravel()
        hist = np.asarray(self.onehot[rows] @ stacked)
        return np.cumsum(hist.reshape(len(cand), self.width, -1), axis=1)


@numba.njit(cache=True)
def _best_per_class(sa, sw, tot_a, tot_w, cb_a, cb_w, ta, tw, n_valid, classes):
    """For each class c in ``classes``: best (score, flat split index) of S + {c}.

    The score of a split is ``A_le^2 / W_le + A_gt^2 / W_gt`` pooled over the
    subset; larger is better. Scan order is feature, then threshold, so the
    first maximum wins ties.
    """
    n_cand, width = sa.shape
    n_cls = classes.shape[0]
    best = np.full(n_cls, -np.inf)
    best_idx = np.zeros(n_cls, dtype=np.int64)
    for f in range(n_cand):
        for t in range(n_valid[f]):
            base_a = sa[f, t]
            base_w = sw[f, t]
            for r in range(n_cls):
                c = classes[r]
                ab = base_a + cb_a[f, t, c]
                wb = base_w + cb_w[f, t, c]
                aa = tot_a + ta[c] - ab
                wa = tot_w + tw[c] - wb
                score = 0.0
                if wb > 0.0:
                    score += ab * ab / wb
                if wa > 0.0:
                    score += aa * aa / wa
                if score > best[r]:
                    best[r] = score
                    best_idx[r] = f * width + t
    return best, best_idx


def boost(X: np.ndarray, y: np.ndarray, n_classes: int, rounds: int,
          candidates: int | None = None, seed: int = 0,
          max_thresholds: int | None = 64) -> tuple[list[SharedStump], TrainTrace]:
    """Run ``rounds`` rounds of joint boosting on a feature matrix.

    ``X`` has shape (N, P) and ``y`` holds class indices in ``[0, n_classes)``.
    When ``candidates`` is set, each round searches a seeded uniform sample
    of that many features. ``max_thresholds`` caps the split points tried
    per feature (``None``: every midpoint).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    n, p = X.shape
    if n_classes < 2:
        raise ConfigurationError("joint boosting needs at least two classes")
    if rounds < 0:
        raise ConfigurationError("rounds must be >= 0")
    if candidates is not None and candidates < 1:
        raise ConfigurationError("candidate count must be positive")
    Z = np.where(y[:, None] == np.arange(n_classes)[None, :], 1.0, -1.0)
    H = np.zeros((n, n_classes))
    rng = np.random.default_rng(seed)
    stumps: list[SharedStump] = []
    losses, errors, zeros = [], [], []
    initial = float(n * n_classes)
    if rounds == 0:
        return stumps, TrainTrace((), (), (), initial)

    bins = _BinnedFeatures(X, None if max_thresholds is None else max_thresholds + 1)
    all_classes = np.arange(n_classes)
    for _ in range(rounds):
        if candidates is None or candidates >= p:
            cand = np.arange(p)
        else:
            cand = np.sort(rng.choice(p, size=candidates, replace=False))
        logw = -Z * H
        W = np.exp(logw - logw.max())
        WZ = W * Z
        ta, tw = WZ.sum(axis=0), W.sum(axis=0)
        const_gain = _safe_ratio_sq(ta, tw)
        cum = bins.cumulative(cand, np.hstack([WZ, W]))
        cb_a = np.ascontiguousarray(cum[..., :n_classes])
        cb_w = np.ascontiguousarray(cum[..., n_classes:])
        n_valid = bins.n_bins[cand] - 1

        sa = np.zeros((len(cand), bins.width))
        sw = np.zeros_like(sa)
        tot_a = tot_w = 0.0
        base_gain = 0.0
        chosen: list[int] = []
        remaining = list(range(n_classes))
        path = []
        while remaining:
            rem = np.array(remaining, dtype=np.int64)
            score, idx = _best_per_class(sa, sw, tot_a, tot_w, cb_a, cb_w, ta, tw, n_valid, rem)
            gain = score - (base_gain + const_gain[rem])
            j = int(np.argmax(gain))
            c = int(rem[j])
            chosen.append(c)
            remaining.remove(c)
            sa += cb_a[..., c]
            sw += cb_w[..., c]
            tot_a += ta[c]
            tot_w += tw[c]
            base_gain += const_gain[c]
            path.append((float(gain[j]), tuple(chosen), int(idx[j])))

        best_gain, members, flat = max(path, key=lambda t: t[0])  # first max = smallest subset
        zero_err = float(tw.sum())
        mem = np.array(members)
        if np.isfinite(best_gain):
            fi, t = divmod(flat, bins.width)
            f = int(cand[fi])
            theta = bins.thresholds[f, t]
            below_a, below_w = cb_a[fi, t, mem].sum(), cb_w[fi, t, mem].sum()
            a = _safe_mean(ta[mem].sum() - below_a, tw[mem].sum() - below_w)
            b = _safe_mean(below_a, below_w)
            err = zero_err - const_gain.sum() - best_gain
        else:
            # No candidate feature can split the data.
            c = int(np.argmax(const_gain))
            mem = np.array([c])
            members = (c,)
            f = int(cand[0])
            theta = float(bins.first[f])
            a = b = _safe_mean(ta[c], tw[c])
            err = zero_err - const_gain.sum()
        nonmem = np.setdiff1d(all_classes, mem)
        offsets = {int(c): _safe_mean(ta[c], tw[c]) for c in nonmem}
        stump = SharedStump(f, float(theta), float(a), float(b), frozenset(int(c) for c in members), offsets)
        stumps.append(stump)

        resp = np.where(X[:, f] > theta, a, b)
        H[:, mem] += resp[:, None]
        H[:, nonmem] += np.array([offsets[int(c)] for c in nonmem])[None, :]
        losses.append(float(np.exp(-Z * H).sum()))
        errors.append(float(err))
        zeros.append(zero_err)
    return stumps, TrainTrace(tuple(losses), tuple(errors), tuple(zeros), initial)


def training_matrix(fingerprint: Fingerprint, bank: FilterBank, pairs: Sequence[FeaturePair],
                    outlier_threshold: float | None = 3.5,
                    location_ids: Sequence[str] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Feature rows for every training window and their class indices."""
    ids = sorted(fingerprint.location_ids) if location_ids is None else list(location_ids)
    index = {lid: k for k, lid in enumerate(ids)}
    ii, jj = pair_index_arrays(pairs)
    lams, labels = [], []
    for loc in fingerprint.locations:
        for win in loc.windows:
            if outlier_threshold is not None:
                win = filter_outliers(win, outlier_threshold)
            lams.append(filter_values(win, bank)[0])
            labels.append(index[loc.location_id])
    lam = np.vstack(lams)
    return lam[:, ii] - lam[:, jj], np.array(labels, dtype=int)


def train(fingerprint: Fingerprint, bank: FilterBank, pairs: Sequence[FeaturePair],
          config: TrainConfig = TrainConfig(), extra: Mapping[str, Any] | None = None) -> BoostModel:
    """Train the per-location classifiers on a fingerprint.

    Locations are ordered by id in the resulting model. ``extra`` is merged
    into the model's config snapshot.
    """
    if len(fingerprint.locations) < 2:
        raise ConfigurationError("training needs at least two locations")
    short = [loc.location_id for loc in fingerprint.locations if len(loc.windows) < 2]
    if short:
        raise ConfigurationError(f"locations with fewer than two training windows: {short}")
    pairs = tuple(pairs)
    ordered = sorted(fingerprint.locations, key=lambda loc: loc.location_id)
    ids = tuple(loc.location_id for loc in ordered)
    X, y = training_matrix(fingerprint, bank, pairs, config.outlier_threshold, ids)
    stumps, trace = boost(X, y, len(ids), config.rounds, config.candidates, config.seed,
                          config.max_thresholds)
    bounds = dict(fingerprint.magnitude_bounds) if fingerprint.magnitude_bounds else {}
    snapshot = {
        "g": config.rounds,
        "candidates": config.candidates,
        "seed": config.seed,
        "max_thresholds": config.max_thresholds,
        "outlier_threshold": config.outlier_threshold,
        "d": bank.d,
        "n_pairs": len(pairs),
        **(extra or {}),
    }
    return BoostModel(
        tuple(stumps), ids,
        np.array([loc.coordinates for loc in ordered], dtype=float),
        bank, pairs, bounds, snapshot, trace,
    )


def classify(model: BoostModel, features: FeatureVector | np.ndarray) -> ClassifierOutput:
    """Score one feature vector with every location's classifier.

    ``H_l`` sums the member response (``a`` above the threshold, ``b``
    otherwise) or the location's constant over all rounds; cost is
    O(g * L).
    """
    x = features.values if isinstance(features, FeatureVector) else np.asarray(features, dtype=float)
    if x.shape != (len(model.pairs),):
        raise MalformedInputError(
            f"feature vector has length {x.shape[0] if x.ndim else 0}, model expects {len(model.pairs)}")
    feat, thr, a, b, member, offset = model._tables
    resp = np.where(x[feat] > thr, a, b)
    scores = resp @ member + offset
    detections = np.where(scores > 0, 1, -1)
    return ClassifierOutput(model.location_ids, scores, detections, np.maximum(scores, 0.0))
