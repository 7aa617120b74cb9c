"""Fuse classifier outputs into a location posterior and point estimates."""

from __future__ import annotations

import time
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .csi_model import ConfigurationError, CsiWindow, MalformedInputError, filter_outliers
from .feature_bank import extract_features
from .joint_boost import BoostModel, ClassifierOutput, classify


@dataclass(frozen=True)
class Posterior:
    location_ids: tuple[str, ...]
    probabilities: np.ndarray
    source: ClassifierOutput | None = None

    def top(self, k: int) -> list[int]:
        """Indices of the ``k`` most probable locations, ties to the lowest id."""
        ids = np.array(self.location_ids, dtype=object)
        order = sorted(range(len(ids)), key=lambda i: (-self.probabilities[i], ids[i]))
        return order[:k]


@dataclass(frozen=True)
class LocationEstimate:
    discrete: str
    continuous: tuple[float, float]
    k_used: int
    posterior: Posterior
    latency_ms: float = 0.0

    def top_k(self) -> list[tuple[str, float]]:
        p = self.posterior
        return [(p.location_ids[i], float(p.probabilities[i])) for i in p.top(self.k_used)]


def fuse(outputs: ClassifierOutput, prior: Sequence[float] | None = None) -> Posterior:
    """Posterior over locations from per-location detections and confidences.

    Positive detections share the probability mass in proportion to their
    confidence. Without any positive detection the scores go through a
    unit-temperature soft-max instead. ``prior`` reweights the result when
    locations are not equally likely.
    """
    scores = np.asarray(outputs.scores, dtype=float)
    positive = np.asarray(outputs.detections) == 1
    if positive.any():
        conf = np.where(positive, np.asarray(outputs.confidences, dtype=float), 0.0)
        total = conf.sum()
        probs = conf / total if total > 0 else positive / positive.sum()
    else:
        e = np.exp(scores - scores.max())
        probs = e / e.sum()
    if prior is not None:
        prior = np.asarray(prior, dtype=float)
        if prior.shape != probs.shape or (prior < 0).any():
            raise MalformedInputError("prior must be non-negative with one entry per location")
        weighted = probs * prior
        probs = weighted / weighted.sum() if weighted.sum() > 0 else probs
    return Posterior(tuple(outputs.location_ids), probs, outputs)


def estimate_discrete(posterior: Posterior) -> str:
    return posterior.location_ids[posterior.top(1)[0]]


def estimate_continuous(posterior: Posterior, coords: np.ndarray, k: int) -> tuple[float, float]:
    """Probability-weighted mean of the ``k`` most probable coordinates."""
    n = len(posterior.location_ids)
    if not 1 <= k <= n:
        raise ConfigurationError(f"k must be in [1, {n}], got {k}")
    coords = np.asarray(coords, dtype=float)
    idx = posterior.top(k)
    p = posterior.probabilities[idx]
    if p.sum() <= 0:
        x, y = coords[idx[0]]
    else:
        x, y = (p[:, None] * coords[idx]).sum(axis=0) / p.sum()
    return float(x), float(y)


def preprocess(model: BoostModel, window: CsiWindow) -> CsiWindow:
    subcarriers = model.config.get("subcarriers")
    win = window.restrict(model.links, subcarriers)
    if not win.profiles:
        raise MalformedInputError("window shares no link with the model")
    threshold = model.config.get("outlier_threshold")
    return filter_outliers(win, threshold) if threshold is not None else win


def posterior_for(model: BoostModel, window: CsiWindow) -> Posterior:
    feats = extract_features(preprocess(model, window), model.bank, model.pairs)
    return fuse(classify(model, feats))


def locate(model: BoostModel, window: CsiWindow, k: int = 6) -> LocationEstimate:
    """Full online pipeline for one window, timed with a wall clock."""
    k = min(k, model.n_locations)
    start = time.perf_counter()
    post = posterior_for(model, window)
    discrete = estimate_discrete(post)
    cont = estimate_continuous(post, model.coordinates, k)
    latency = (time.perf_counter() - start) * 1e3
    return LocationEstimate(discrete, cont, k, post, latency)
