"""Model fitting from fingerprints, evaluation reports and parameter sweeps."""

from __future__ import annotations

import time
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from typing import Any

import numpy as np

from .csi_model import (
    ConfigurationError,
    CsiWindow,
    Fingerprint,
    FingerprintLocation,
    LinkId,
    MalformedInputError,
)
from .estimator import Posterior, estimate_continuous, posterior_for
from .feature_bank import sample_filter_bank, sample_pairs
from .joint_boost import BoostModel, TrainConfig, train
from .synth_env import ScenarioConfig, build_scenario, make_fingerprint, make_test_set

SWEEP_PARAMETERS = ("w", "f", "k", "d", "g", "link-subset")

TestSet = Sequence[tuple[CsiWindow, tuple[float, float]]]


def restrict_fingerprint(fingerprint: Fingerprint, links: Sequence[LinkId] | None = None,
                         subcarriers: Sequence[int] | None = None) -> Fingerprint:
    """Fingerprint reduced to some links / sub-carriers, with fresh bounds."""
    if links is None and subcarriers is None:
        return fingerprint if fingerprint.magnitude_bounds else fingerprint.with_bounds()
    locs = tuple(
        FingerprintLocation(loc.location_id, loc.coordinates,
                            tuple(w.restrict(links, subcarriers) for w in loc.windows))
        for loc in fingerprint.locations
    )
    return Fingerprint(locs).with_bounds()


def fit_model(fingerprint: Fingerprint, *, d: int = 100, g: int = 700, candidates: int | None = None,
              seed: int = 0, links: Sequence[LinkId] | None = None,
              subcarriers: Sequence[int] | None = None, pair_subset: int | None = None,
              max_thresholds: int | None = 64, outlier_threshold: float | None = 3.5,
              extra: Mapping[str, Any] | None = None) -> BoostModel:
    """Sample a filter bank for the fingerprint and train a model on it."""
    fp = restrict_fingerprint(fingerprint, links, subcarriers)
    f = fp.locations[0].windows[0].n_subcarriers
    bank = sample_filter_bank(seed, d, fp.links, fp.magnitude_bounds, f)
    pairs = sample_pairs(d, pair_subset, seed)
    snapshot = {
        "links": [str(lk) for lk in fp.links],
        "subcarriers": None if subcarriers is None else [int(s) for s in subcarriers],
        "pair_subset": pair_subset,
        **(extra or {}),
    }
    cfg = TrainConfig(rounds=g, candidates=candidates, seed=seed,
                      max_thresholds=max_thresholds, outlier_threshold=outlier_threshold)
    return train(fp, bank, pairs, cfg, snapshot)


@dataclass(frozen=True)
class EvalReport:
    errors: np.ndarray
    latencies_ms: np.ndarray
    config: Mapping[str, Any] = field(default_factory=dict)

    @cached_property
    def median_error(self) -> float:
        return float(np.median(self.errors))

    @cached_property
    def cdf(self) -> tuple[np.ndarray, np.ndarray]:
        """Exact empirical CDF: distinct error values and P(error <= value)."""
        values, counts = np.unique(self.errors, return_counts=True)
        return values, np.cumsum(counts) / len(self.errors)

    @property
    def mean_error(self) -> float:
        return float(np.mean(self.errors))

    @property
    def latency_mean_ms(self) -> float:
        return float(np.mean(self.latencies_ms))

    def latency_percentile_ms(self, q: float) -> float:
        return float(np.percentile(self.latencies_ms, q))

    def summary(self) -> dict[str, Any]:
        xs, ps = self.cdf
        return {
            "n": int(len(self.errors)),
            "median_error_m": self.median_error,
            "mean_error_m": self.mean_error,
            "p90_error_m": float(np.percentile(self.errors, 90)),
            "latency_mean_ms": self.latency_mean_ms,
            "latency_p50_ms": self.latency_percentile_ms(50),
            "latency_p95_ms": self.latency_percentile_ms(95),
            "cdf": [[float(x), float(p)] for x, p in zip(xs, ps)],
            "config": dict(self.config),
        }


def _posteriors(model: BoostModel, test: TestSet) -> tuple[list[Posterior], np.ndarray, np.ndarray]:
    if not test:
        raise MalformedInputError("empty test set")
    posts, truths, lat = [], [], []
    for window, truth in test:
        if truth is None:
            raise MalformedInputError("test window without ground truth")
        start = time.perf_counter()
        posts.append(posterior_for(model, window))
        lat.append((time.perf_counter() - start) * 1e3)
        truths.append(truth)
    return posts, np.asarray(truths, dtype=float), np.asarray(lat)


def _report(model: BoostModel, posts, truths, lat, k: int, config) -> EvalReport:
    k = min(k, model.n_locations)
    est = np.array([estimate_continuous(p, model.coordinates, k) for p in posts])
    errors = np.hypot(est[:, 0] - truths[:, 0], est[:, 1] - truths[:, 1])
    return EvalReport(errors, lat, {**dict(model.config), "k": k, **(config or {})})


def evaluate(model: BoostModel, test: TestSet, k: int = 6,
             config: Mapping[str, Any] | None = None) -> EvalReport:
    """Distance errors of continuous estimates against ground truth.

    The reported latency covers preprocessing, feature extraction,
    classification and fusion of each window, not data loading.
    """
    posts, truths, lat = _posteriors(model, test)
    return _report(model, posts, truths, lat, k, config)


@dataclass(frozen=True)
class ExperimentConfig:
    """One synthetic experiment. ``seed`` drives the scenario, the data,
    the filter bank and the trainer."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    w: int = 500
    d: int = 100
    g: int = 700
    k: int = 6
    candidates: int | None = None
    max_thresholds: int | None = 64
    pair_subset: int | None = None
    train_windows: int = 40
    test_windows: int = 20
    links: tuple[LinkId, ...] | None = None
    subcarriers: tuple[int, ...] | None = None
    test_points: str = "grid"
    seed: int = 0

    def snapshot(self) -> dict[str, Any]:
        out = asdict(self)
        out["scenario"] = {k: v for k, v in out["scenario"].items() if k != "link_separation"}
        return out


@dataclass
class Experiment:
    """Lazily built data and model for an :class:`ExperimentConfig`."""

    config: ExperimentConfig
    _tests: dict = field(default_factory=dict)

    @cached_property
    def scenario(self):
        return build_scenario(replace(self.config.scenario, seed=self.config.seed))

    @cached_property
    def fingerprint(self) -> Fingerprint:
        cfg = self.config
        return make_fingerprint(self.scenario, cfg.train_windows, cfg.w, seed=cfg.seed)

    def fit(self, **overrides) -> BoostModel:
        cfg = replace(self.config, **overrides)
        return fit_model(self.fingerprint, d=cfg.d, g=cfg.g, candidates=cfg.candidates, seed=cfg.seed,
                         links=cfg.links, subcarriers=cfg.subcarriers, pair_subset=cfg.pair_subset,
                         max_thresholds=cfg.max_thresholds, extra={"w": self.config.w})

    @cached_property
    def model(self) -> BoostModel:
        return self.fit()

    def test_set(self, points: str | None = None, w: int | None = None) -> TestSet:
        points = points or self.config.test_points
        w = w or self.config.w
        key = (points, w)
        if key not in self._tests:
            self._tests[key] = make_test_set(self.scenario, self.config.test_windows, w,
                                             seed=self.config.seed + 7919, points=points)
        return self._tests[key]

    def evaluate(self, model: BoostModel | None = None, points: str | None = None,
                 w: int | None = None, k: int | None = None) -> EvalReport:
        model = self.model if model is None else model
        return evaluate(model, self.test_set(points, w), self.config.k if k is None else k,
                        {"seed": self.config.seed, "test_points": points or self.config.test_points,
                         "test_w": w or self.config.w})


@dataclass(frozen=True)
class SweepPoint:
    parameter: str
    value: Any
    reports: tuple[EvalReport, ...]

    @property
    def medians(self) -> np.ndarray:
        return np.array([r.median_error for r in self.reports])

    @property
    def median_mean(self) -> float:
        return float(self.medians.mean())

    @property
    def median_std(self) -> float:
        return float(self.medians.std())


def sweep(parameter: str, values: Sequence[Any], base: ExperimentConfig,
          seeds: Sequence[int] | None = None, repeats: int = 5) -> list[SweepPoint]:
    """Evaluate ``base`` while varying one parameter.

    ``d``, ``f`` and ``link-subset`` retrain for every value. ``g`` trains
    once at the largest value and truncates, which is the same model as
    retraining because rounds are sequential and seeded. ``w`` and ``k``
    reuse the base model: ``w`` changes the test window size only. For
    ``f`` each value is evaluated on ``repeats`` random sub-carrier subsets.
    Each point carries one report per (seed, repeat).
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigurationError(f"unknown sweep parameter {parameter!r}; expected one of {SWEEP_PARAMETERS}")
    values = list(values)
    if not values:
        raise ConfigurationError("sweep needs at least one value")
    seeds = [base.seed] if seeds is None else list(seeds)
    collected: dict[int, list[EvalReport]] = {i: [] for i in range(len(values))}
    for seed in seeds:
        exp = Experiment(replace(base, seed=seed))
        if parameter == "k":
            posts, truths, lat = _posteriors(exp.model, exp.test_set())
            for i, k in enumerate(values):
                collected[i].append(_report(exp.model, posts, truths, lat, int(k),
                                            {"seed": seed, "k": int(k)}))
        elif parameter == "w":
            for i, w in enumerate(values):
                collected[i].append(exp.evaluate(w=int(w)))
        elif parameter == "g":
            full = exp.fit(g=max(int(v) for v in values))
            for i, g in enumerate(values):
                collected[i].append(exp.evaluate(full.truncated(int(g))))
        elif parameter == "d":
            for i, d in enumerate(values):
                collected[i].append(exp.evaluate(exp.fit(d=int(d))))
        elif parameter == "link-subset":
            for i, links in enumerate(values):
                collected[i].append(exp.evaluate(exp.fit(links=tuple(links))))
        else:  # f
            total = base.scenario.f
            for i, f in enumerate(values):
                if not 1 <= int(f) <= total:
                    raise ConfigurationError(f"f={f} outside 1..{total}")
                for rep in range(repeats):
                    rng = np.random.default_rng([seed, int(f), rep])
                    subset = tuple(sorted(rng.choice(total, size=int(f), replace=False).tolist()))
                    collected[i].append(exp.evaluate(exp.fit(subcarriers=subset)))
    return [SweepPoint(parameter, v, tuple(collected[i])) for i, v in enumerate(values)]


def rank_points(points: Sequence[SweepPoint]) -> list[SweepPoint]:
    """Link-subset points ordered best first; ties to smaller, then lexicographic."""
    return sorted(points, key=lambda p: (p.median_mean, len(p.value), tuple(p.value)))


def select_links(fingerprint: Fingerprint, candidates: Sequence[Sequence[LinkId]],
                 validation_fraction: float = 0.25, *, quality: Mapping[LinkId, float] | None = None,
                 d: int = 40, g: int = 60, rounds_candidates: int | None = 200, k: int = 1,
                 seed: int = 0) -> tuple[LinkId, ...]:
    """Pick the link subset with the lowest held-out median error.

    The last ``validation_fraction`` of every location's windows is held
    out. With ``quality`` (an external per-link score, higher is better)
    subsets are ranked by their mean score instead and nothing is trained.
    Ties go to the smaller subset, then the lexicographically smaller one.
    """
    subsets = [tuple(sorted(c)) for c in candidates]
    if not subsets:
        raise ConfigurationError("no candidate link subsets")
    if len(subsets) == 1:
        return subsets[0]
    if quality is not None:
        return min(subsets, key=lambda s: (-float(np.mean([quality[lk] for lk in s])), len(s), s))
    if not 0 < validation_fraction < 1:
        raise ConfigurationError("validation_fraction must be in (0, 1)")
    train_locs, held = [], []
    for loc in fingerprint.locations:
        n_val = max(1, int(round(len(loc.windows) * validation_fraction)))
        if len(loc.windows) - n_val < 2:
            raise ConfigurationError(f"location {loc.location_id} has too few windows to split")
        train_locs.append(FingerprintLocation(loc.location_id, loc.coordinates, loc.windows[:-n_val]))
        held.extend((w, loc.coordinates) for w in loc.windows[-n_val:])
    split = Fingerprint(tuple(train_locs))
    scored = []
    for subset in subsets:
        model = fit_model(split, d=d, g=g, candidates=rounds_candidates, seed=seed, links=subset)
        scored.append((evaluate(model, held, k).median_error, len(subset), subset))
    return min(scored)[2]
