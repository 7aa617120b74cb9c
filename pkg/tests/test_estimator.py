import numpy as np
import pytest

from csiloc.csi_model import ConfigurationError, MalformedInputError
from csiloc.estimator import Posterior, estimate_continuous, estimate_discrete, fuse, locate
from csiloc.joint_boost import ClassifierOutput
from csiloc.synth_env import ScenarioConfig, build_scenario, make_fingerprint, make_test_set
from csiloc.evaluation import fit_model


def outputs(scores, ids=None):
    scores = np.asarray(scores, dtype=float)
    ids = ids or tuple(f"P{k}" for k in range(len(scores)))
    det = np.where(scores > 0, 1, -1)
    return ClassifierOutput(tuple(ids), scores, det, np.maximum(scores, 0.0))


def test_single_positive_takes_all_mass():
    p = fuse(outputs([-1.0, 3.0, -0.5])).probabilities
    assert p.tolist() == [0.0, 1.0, 0.0]


def test_two_positives_share_by_confidence():
    p = fuse(outputs([2.0, 1.0])).probabilities
    np.testing.assert_allclose(p, [2 / 3, 1 / 3], atol=1e-15)


def test_no_positive_falls_back_to_softmax():
    p = fuse(outputs([-1.0, -2.0])).probabilities
    e = np.exp([-1.0, -2.0])
    np.testing.assert_allclose(p, e / e.sum(), atol=1e-15)
    assert p[0] == pytest.approx(0.731, abs=5e-4)


def test_zero_confidence_positives_are_uniform():
    out = ClassifierOutput(("A", "B", "C"), np.zeros(3), np.array([1, 1, -1]), np.zeros(3))
    assert fuse(out).probabilities.tolist() == [0.5, 0.5, 0.0]


def test_prior_hook():
    p = fuse(outputs([-1.0, -1.0]), prior=[3.0, 1.0]).probabilities
    np.testing.assert_allclose(p, [0.75, 0.25])
    with pytest.raises(MalformedInputError):
        fuse(outputs([-1.0, -1.0]), prior=[1.0])


def test_posterior_sums_to_one_and_is_scale_invariant(rng):
    for _ in range(500):
        s = rng.normal(size=int(rng.integers(2, 12))) * rng.choice([0.1, 1, 10])
        a = fuse(outputs(s)).probabilities
        assert abs(a.sum() - 1) <= 1e-9 and (a >= 0).all()
        if (s > 0).any():
            np.testing.assert_allclose(fuse(outputs(7.3 * s)).probabilities, a, atol=1e-12)


def test_discrete_examples_and_tie_break():
    post = Posterior(("B", "A", "C"), np.array([1.0, 0.0, 0.0]))
    assert estimate_discrete(post) == "B"
    assert estimate_discrete(Posterior(("B", "A"), np.array([0.5, 0.5]))) == "A"
    assert estimate_discrete(fuse(outputs([2.0, 1.0]))) == "P0"


def test_continuous_weighted_average():
    post = fuse(outputs([2.0, 1.0]))
    coords = np.array([[0.0, 0.0], [3.0, 0.0]])
    assert estimate_continuous(post, coords, 2) == pytest.approx((1.0, 0.0))
    assert estimate_continuous(post, coords, 1) == (0.0, 0.0)


def test_continuous_all_zero_top_k_uses_argmax():
    post = Posterior(("A", "B", "C"), np.array([1.0, 0.0, 0.0]))
    coords = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    assert estimate_continuous(post, coords, 3) == (0.0, 0.0)


def test_continuous_k_out_of_range():
    post = Posterior(("A", "B"), np.array([0.5, 0.5]))
    with pytest.raises(ConfigurationError):
        estimate_continuous(post, np.zeros((2, 2)), 0)
    with pytest.raises(ConfigurationError):
        estimate_continuous(post, np.zeros((2, 2)), 3)


def test_continuous_inside_top_k_bounding_box(rng):
    for _ in range(200):
        n = int(rng.integers(2, 10))
        post = fuse(outputs(rng.normal(size=n)))
        coords = rng.uniform(-5, 5, size=(n, 2))
        k = int(rng.integers(1, n + 1))
        x, y = estimate_continuous(post, coords, k)
        top = coords[post.top(k)]
        assert top[:, 0].min() - 1e-9 <= x <= top[:, 0].max() + 1e-9
        assert top[:, 1].min() - 1e-9 <= y <= top[:, 1].max() + 1e-9


@pytest.fixture(scope="module")
def small_model():
    sc = build_scenario(ScenarioConfig(rows=1, cols=2, spacing_m=3.0, n=1, m=2, f=10,
                                       separation_db=10.0, noise_sigma=1.0, seed=4))
    fp = make_fingerprint(sc, 6, 50, seed=1)
    return sc, fit_model(fp, d=20, g=15, seed=0)


def test_locate_end_to_end(small_model):
    sc, model = small_model
    for win, truth in make_test_set(sc, 3, 50, seed=9):
        est = locate(model, win, k=1)
        assert sc.coordinate_of(est.discrete) == truth
        assert est.continuous == truth
        assert est.k_used == 1 and est.latency_ms >= 0
        assert abs(est.posterior.probabilities.sum() - 1) <= 1e-9


def test_locate_clamps_k(small_model):
    sc, model = small_model
    win, _ = make_test_set(sc, 1, 50, seed=2)[0]
    est = locate(model, win, k=6)
    assert est.k_used == 2
    assert len(est.top_k()) == 2
