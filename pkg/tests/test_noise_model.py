import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from powerlaw_dynamics.landscape import EmpiricalToyLoss, QuadraticBasin, SampledQuadraticLoss
from powerlaw_dynamics.noise_model import (
    LossFormNoise,
    MultivariateNoiseParams,
    ScalarNoiseParams,
    diffusion_factor,
    empirical_covariance,
    fit_quadratic,
    scan_noise_trace,
    symmetric_offsets,
)


def random_spd(rng, d, floor=0.1):
    a = rng.normal(size=(d, d))
    return a @ a.T + floor * np.eye(d)


def test_variance_examples():
    p = ScalarNoiseParams(sigma_g=1.0, sigma_h=4.0, center=0.3)
    assert p.variance_at(0.3) == 1.0
    assert p.variance_at(0.8) == pytest.approx(2.0)
    assert p.variance_at(0.3 + 0.7) == pytest.approx(p.variance_at(0.3 - 0.7))
    flat = ScalarNoiseParams(sigma_g=2.5)
    np.testing.assert_array_equal(flat.simplified_variance_at(np.linspace(-5, 5, 11)), 2.5)
    assert flat.kappa == np.inf


def test_cauchy_schwarz_enforced():
    with pytest.raises(ValueError):
        ScalarNoiseParams(sigma_g=1.0, sigma_h=1.0, rho_gh=1.01)
    ScalarNoiseParams(sigma_g=1.0, sigma_h=1.0, rho_gh=1.0)


@given(st.floats(0.01, 10), st.floats(0.01, 10), st.floats(-1, 1))
@settings(max_examples=60, deadline=None)
def test_variance_nonnegative_under_cauchy_schwarz(sg, sh, frac):
    rho = frac * np.sqrt(sg * sh)
    p = ScalarNoiseParams(sg, sh, rho)
    grid = np.linspace(-100, 100, 10_000)
    assert np.min(p.variance_at(grid)) >= -1e-12 * (sg + sh * 1e4)


def test_simplified_variance_equals_loss_form_on_quadratic_basin():
    rng = np.random.default_rng(0)
    h, sg, sh, c = 3.0, 0.7, 1.9, 0.4
    basin = QuadraticBasin([c], [[h]], base_loss=1.2)
    p = ScalarNoiseParams(sg, sh, 0.0, c, h, 0.1)
    form = LossFormNoise(basin, sg, sh, h, c)
    w = rng.normal(c, 2.0, size=100)
    np.testing.assert_allclose(form.variance_at(w[:, None]), p.simplified_variance_at(w), rtol=1e-12)


def test_multivariate_covariance_examples():
    rng = np.random.default_rng(1)
    sg = random_spd(rng, 3)
    h = 2.0 * sg  # commutes with sigma_g
    p = MultivariateNoiseParams(sg, h, kappa=2.0, eta=0.1, center=np.zeros(3))
    np.testing.assert_array_equal(p.covariance_at(np.zeros(3)), sg)
    x = rng.normal(size=3)
    q1 = p.covariance_at(x)[0, 0] / sg[0, 0] - 1
    q2 = p.covariance_at(2 * x)[0, 0] / sg[0, 0] - 1
    assert q2 == pytest.approx(4 * q1)
    with pytest.raises(ValueError):
        p.covariance_at(np.zeros(2))


def test_multivariate_reduces_to_scalar_in_one_dimension():
    h, sg, kappa, eta = 2.0, 0.5, 3.0, 0.1
    mv = MultivariateNoiseParams([[sg]], [[h]], kappa, eta, [0.2])
    sc = ScalarNoiseParams.from_kappa(kappa, sg, h, eta, center=0.2)
    # with eta sigma_h = H / kappa, sigma_g (1 + H (w-w*)^2 / (eta kappa sigma_g)) = sigma_g + sigma_h (w-w*)^2
    w = np.linspace(-3, 3, 41)
    np.testing.assert_allclose(mv.covariance_at(w[:, None])[:, 0, 0], sc.simplified_variance_at(w), rtol=1e-12)


def test_multivariate_rejects_noncommuting_pair():
    sg = np.diag([1.0, 2.0])
    h = np.array([[2.0, 0.5], [0.5, 1.0]])
    with pytest.raises(ValueError):
        MultivariateNoiseParams(sg, h, 2.0, 0.1, np.zeros(2))


def test_covariance_spd_on_random_probes():
    rng = np.random.default_rng(2)
    for _ in range(20):
        sg = random_spd(rng, 3)
        p = MultivariateNoiseParams(sg, sg * 1.7, kappa=2.5, eta=0.3, center=rng.normal(size=3))
        for w in rng.normal(scale=10, size=(5, 3)):
            c = p.covariance_at(w)
            assert np.max(np.abs(c - c.T)) <= 1e-12 * np.max(np.abs(c))
            assert np.linalg.eigvalsh(c)[0] > 0


def test_diffusion_factor_examples():
    np.testing.assert_allclose(diffusion_factor(np.eye(3)) @ diffusion_factor(np.eye(3)).T, np.eye(3))
    m = diffusion_factor(np.diag([4.0, 9.0]))
    np.testing.assert_allclose(m @ m.T, np.diag([4.0, 9.0]))
    with pytest.raises(ValueError, match="-0.001"):
        diffusion_factor(np.diag([1.0, -1e-3]))
    m = diffusion_factor(np.zeros((2, 2)))
    np.testing.assert_array_equal(m, 0.0)


def test_diffusion_factor_reconstruction():
    rng = np.random.default_rng(3)
    for _ in range(100):
        d = int(rng.integers(1, 6))
        c = random_spd(rng, d, floor=1e-3)
        m = diffusion_factor(c)
        assert np.linalg.norm(m @ m.T - c) <= 1e-10 * np.linalg.norm(c)


def test_empirical_covariance_unbiased_normalization():
    x = np.array([[0.0], [2.0]])
    assert empirical_covariance(x)[0, 0] == 2.0
    with pytest.raises(ValueError):
        empirical_covariance(np.zeros((1, 2)))


def test_fit_quadratic_exact_and_degenerate():
    x = symmetric_offsets(0.1, 5)
    coeffs, r2, argmin, deg = fit_quadratic(x, 1 + 2 * x + 3 * x**2)
    np.testing.assert_allclose(coeffs, (1, 2, 3), atol=1e-10)
    assert r2 == pytest.approx(1.0)
    assert argmin == pytest.approx(-1 / 3)
    _, r2, argmin, deg = fit_quadratic(x, np.zeros_like(x))
    assert deg and np.isnan(argmin) and r2 == 1.0


def test_scan_full_batch_is_degenerate():
    toy = EmpiricalToyLoss.generate(n=30, seed=0)
    res = scan_noise_trace(toy, toy.empirical_minimum(), [1.0, 1.0], symmetric_offsets(0.01, 3), 30, 5, seed=0)
    np.testing.assert_array_equal(res.traces, 0.0)
    assert res.degenerate
    assert 0.0 <= res.r_squared <= 1.0


def test_scan_draws_must_be_at_least_two():
    toy = EmpiricalToyLoss.generate(n=30, seed=0)
    with pytest.raises(ValueError):
        scan_noise_trace(toy, np.ones(2), [1.0, 0.0], [0.1], 1, 1, seed=0)


def test_scan_recovers_known_curvature_on_synthetic_model():
    rng = np.random.default_rng(5)
    n = 200
    land = SampledQuadraticLoss(rng.uniform(0.5, 3.0, size=(n, 2)), rng.normal(size=(n, 2)))
    center = land.data.mean(axis=0)
    direction = np.array([1.0, 0.0])
    offsets = symmetric_offsets(0.5, 5)
    exact = [np.trace(land.minibatch_covariance(center + o * direction, 4)) for o in offsets]
    c_true = fit_quadratic(offsets, exact)[0][2]
    res = scan_noise_trace(land, center, direction, offsets, 4, 10_000, seed=11)
    assert res.quad_coeffs[2] == pytest.approx(c_true, rel=0.10)


def test_scan_is_thread_invariant_and_serializes():
    toy = EmpiricalToyLoss.generate(n=100, seed=0)
    args = (toy, toy.empirical_minimum(), [1.0, 1.0], symmetric_offsets(0.01, 3), 1, 50)
    a = scan_noise_trace(*args, seed=4)
    b = scan_noise_trace(*args, seed=4, threads=3)
    assert a.to_csv() == b.to_csv() and a.sidecar() == b.sidecar()
    assert a.to_csv().splitlines()[0] == "offset,trace"
