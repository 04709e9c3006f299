import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from powerlaw_dynamics.landscape import (
    DoubleWell1D,
    EmpiricalToyLoss,
    QuadraticBasin,
    SampledQuadraticLoss,
    landscape_from_dict,
)


def central_difference(f, w, h=1e-6):
    w = np.asarray(w, dtype=float)
    out = np.empty_like(w)
    for j in range(w.size):
        e = np.zeros_like(w)
        e[j] = h
        out[j] = (f(w + e) - f(w - e)) / (2 * h)
    return out


def assert_gradient_matches(land, points, h=1e-6):
    for w in points:
        fd = central_difference(lambda v: float(land.loss(v)), w, h)
        g = np.ravel(land.gradient(w))
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-7 + 1e-9 * float(np.max(np.abs(fd))))


def test_toy_loss_examples():
    toy = EmpiricalToyLoss(np.zeros((1, 2)))
    assert toy.loss(np.array([1.0, 1.0])) == 0.0
    assert toy.loss(np.array([0.0, 0.0])) == pytest.approx(30.0, abs=1e-12)
    assert toy.loss(np.array([-1.0, 1.0])) == 0.0


def test_quadratic_example():
    q = QuadraticBasin([0.0], [[2.0]], base_loss=0.5)
    assert q.loss(np.array([1.0])) == pytest.approx(1.5)
    np.testing.assert_array_equal(q.gradient(q.center), [0.0])


def test_dimension_mismatch():
    q = QuadraticBasin([0.0, 0.0], np.eye(2))
    with pytest.raises(ValueError):
        q.loss(np.zeros(3))
    with pytest.raises(ValueError):
        EmpiricalToyLoss.generate(n=10).gradient(np.zeros(3))


def test_quadratic_rejects_indefinite_and_asymmetric():
    with pytest.raises(ValueError):
        QuadraticBasin([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(ValueError):
        QuadraticBasin([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])


def test_gradients_match_finite_differences_on_random_probes():
    rng = np.random.default_rng(0)
    toy = EmpiricalToyLoss.generate(n=50, seed=1)
    assert_gradient_matches(toy, rng.uniform(-2, 2, size=(100, 2)))
    a = rng.normal(size=(3, 3))
    q = QuadraticBasin(rng.normal(size=3), a @ a.T)
    assert_gradient_matches(q, rng.normal(size=(100, 3)))
    dw = DoubleWell1D(-1.0, 2.0, 0.7, 1.3, curvature_c=1.5, barrier_c=2.0)
    pts = rng.uniform(dw.min_a - 2, dw.min_c + 2, size=(100, 1))
    assert_gradient_matches(dw, pts)


def test_toy_gradient_is_continuous_at_kinks():
    toy = EmpiricalToyLoss(np.zeros((1, 2)))
    for w in ([1.0, -1.0], [-1.0, 1.0]):
        w = np.array(w)
        for d in (1e-8, -1e-8):
            np.testing.assert_allclose(toy.gradient(w + d), toy.gradient(w), atol=1e-6)


@given(st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=50, deadline=None)
def test_scaled_toy_loss_is_proportional(x, y):
    toy = EmpiricalToyLoss.generate(n=20, seed=3)
    w = np.array([x, y])
    assert toy.with_scale(0.9).loss(w) == pytest.approx(0.9 * toy.loss(w), rel=1e-12, abs=1e-300)


@given(
    st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.1, 3),
    st.floats(0.1, 5), st.floats(0.1, 3),
)
@settings(max_examples=50, deadline=None)
def test_double_well_postconditions(ha, hb, dl, hc, dlc):
    dw = DoubleWell1D(0.3, ha, hb, dl, curvature_c=hc, barrier_c=dlc)
    a, b, c = dw.min_a, dw.saddle_b, dw.min_c
    assert a < b < c
    loss = lambda x: float(dw.loss(np.array([x])))  # noqa: E731
    assert loss(b) - loss(a) == pytest.approx(dl, rel=1e-12)
    assert loss(b) - loss(c) == pytest.approx(dlc, rel=1e-12)
    assert float(dw.gradient(np.array([b]))[0]) == pytest.approx(0.0, abs=1e-12)
    h = 1e-4
    curv = lambda x: (loss(x + h) - 2 * loss(x) + loss(x - h)) / h**2  # noqa: E731
    assert curv(a) == pytest.approx(ha, rel=1e-6)
    assert curv(b) == pytest.approx(-hb, rel=1e-6)
    # C^1 at the joins
    for j in dw.joins:
        left = float(dw.gradient(np.array([j - 1e-10]))[0])
        right = float(dw.gradient(np.array([j + 1e-10]))[0])
        assert left == pytest.approx(right, abs=1e-8)


def test_minibatch_full_batch_and_range():
    toy = EmpiricalToyLoss.generate(n=30, seed=0)
    rng = np.random.default_rng(0)
    w = np.array([0.7, 1.2])
    np.testing.assert_array_equal(toy.minibatch_gradient(w, 30, rng), toy.gradient(w))
    for bad in (0, 31):
        with pytest.raises(ValueError):
            toy.minibatch_gradient(w, bad, rng)


def test_minibatch_gradient_is_unbiased():
    toy = EmpiricalToyLoss.generate(n=200, seed=0)
    rng = np.random.default_rng(1)
    w = np.array([0.9, 1.1])
    draws = 100_000
    idx = np.array([rng.choice(toy.n, 8, replace=False) for _ in range(draws)])
    per = toy.per_sample_gradients(w)
    g = per[idx].mean(axis=1)
    se = g.std(axis=0, ddof=1) / np.sqrt(draws)
    assert np.all(np.abs(g.mean(axis=0) - toy.gradient(w)) < 3 * se)


def test_minibatch_is_without_replacement():
    class Recorder:
        def choice(self, n, size, replace):
            assert replace is False
            return np.arange(size)

    toy = EmpiricalToyLoss.generate(n=10, seed=0)
    toy.minibatch_gradient(np.ones(2), 3, Recorder())


def test_sampled_quadratic_covariance_matches_sampling():
    rng = np.random.default_rng(0)
    land = SampledQuadraticLoss(rng.uniform(0.5, 2, size=(40, 2)), rng.normal(size=(40, 2)))
    w = np.array([0.3, -0.2])
    draws = np.array([land.minibatch_gradient(w, 5, rng) for _ in range(40000)])
    np.testing.assert_allclose(np.cov(draws.T), land.minibatch_covariance(w, 5), rtol=0.05, atol=1e-3)


def test_serialization_round_trip():
    toy = EmpiricalToyLoss.generate(n=25, seed=9, scale=0.9)
    again = landscape_from_dict(toy.to_dict())
    np.testing.assert_array_equal(again.data, toy.data)
    assert again.scale == 0.9
    parsed = EmpiricalToyLoss.from_csv(toy.data_csv())
    np.testing.assert_array_equal(parsed.data, toy.data)
    dw = DoubleWell1D(0.0, 1.0, 0.5, 1.0)
    assert landscape_from_dict(dw.to_dict()).saddle_b == dw.saddle_b
    q = QuadraticBasin([1.0], [[2.0]], 0.5)
    assert landscape_from_dict(q.to_dict()).loss(np.array([2.0])) == q.loss(np.array([2.0]))


def test_empirical_minimum_is_stationary():
    toy = EmpiricalToyLoss.generate()
    w = toy.empirical_minimum()
    assert np.linalg.norm(toy.gradient(w)) < 1e-9
    assert np.all(np.abs(w - 1) < 0.01)
