import itertools
import math
import warnings

import numpy as np
import pytest

from powerlaw_dynamics.dynamics import Mode
from powerlaw_dynamics.escape import (
    EscapeProblem1D,
    EscapeProblemMulti,
    LowTemperatureWarning,
    loss_form_noise,
    mc_first_passage,
    mean_passage_time_quadrature,
    success_rate,
    tau_alpha_stable_1d,
    tau_langevin_1d,
    tau_power_law_1d,
    tau_power_law_multi,
)
from powerlaw_dynamics.landscape import DoubleWell1D, EmpiricalToyLoss

SWEEP = list(itertools.product([0.5, 1.0, 2.0], [0.5, 1.0, 3.0], [0.5, 1.0, 2.0]))


def problem(**kw):
    base = dict(h_a=1.0, h_b_abs=0.5, delta_l=1.0, eta=0.02, sigma_g_a=5.0, kappa=2.0)
    base.update(kw)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LowTemperatureWarning)
        return EscapeProblem1D(**base)


def test_kramers_limit_on_sweep():
    assert len(SWEEP) == 27
    for ha, hb, dl in SWEEP:
        p = problem(h_a=ha, h_b_abs=hb, delta_l=dl, kappa=1e9)
        ref = tau_langevin_1d(ha, hb, dl, p.eta, p.sigma_g_a)
        assert abs(tau_power_law_1d(p) / ref - 1) < 1e-6


def test_power_law_time_examples():
    with pytest.raises(ValueError):
        problem(kappa=0.5)
    assert tau_power_law_1d(problem(delta_l=2.0)) > tau_power_law_1d(problem())
    p, q = problem(h_a=2.0), problem(h_a=1.0)
    assert tau_power_law_1d(p) / tau_power_law_1d(q) == pytest.approx(1 / math.sqrt(2), rel=1e-12)


def test_power_law_time_monotone_on_grid():
    for k in (0.8, 2.0, 10.0):
        for dl, sg, ha in itertools.product([0.5, 1.0, 2.0], [1.0, 5.0], [0.5, 1.0, 2.0]):
            base = tau_power_law_1d(problem(delta_l=dl, sigma_g_a=sg, h_a=ha, kappa=k))
            assert tau_power_law_1d(problem(delta_l=dl * 1.01, sigma_g_a=sg, h_a=ha, kappa=k)) > base
            assert tau_power_law_1d(problem(delta_l=dl, sigma_g_a=sg * 1.01, h_a=ha, kappa=k)) < base
            assert tau_power_law_1d(problem(delta_l=dl, sigma_g_a=sg, h_a=ha * 1.01, kappa=k)) < base


def test_low_temperature_warning():
    with pytest.warns(LowTemperatureWarning):
        p = EscapeProblem1D(1.0, 0.5, 1.0, 0.1, 5.0, 2.0)
    assert p.temperature_ratio == pytest.approx(0.5)


def test_langevin_time_examples():
    assert tau_langevin_1d(1.0, 4.0, 0.0, 0.1, 1.0) == pytest.approx(math.pi)
    assert tau_langevin_1d(1.0, 1.0, 1.0, 0.1, 2.0) < tau_langevin_1d(1.0, 1.0, 1.0, 0.1, 1.0)
    with pytest.raises(ValueError):
        tau_langevin_1d(0.0, 1.0, 1.0, 0.1, 1.0)


def test_alpha_stable_examples():
    assert tau_alpha_stable_1d(2.0, 1.0, 1.0, 1.0) == pytest.approx(2.0)
    assert tau_alpha_stable_1d(1.0, 0.1, 1.0, 2.0) == pytest.approx(2 * tau_alpha_stable_1d(1.0, 0.1, 1.0, 1.0))
    for bad in (0.0, 2.5):
        with pytest.raises(ValueError):
            tau_alpha_stable_1d(bad, 1.0, 1.0, 1.0)


def test_polynomial_versus_exponential_separation():
    eta, sg = 0.02, 5.0
    ratios = []
    for m in (1, 2, 4, 8):
        dl = m * eta * sg
        p = problem(delta_l=dl, kappa=2.0)
        ratios.append(tau_langevin_1d(1.0, 0.5, dl, eta, sg) / tau_power_law_1d(p))
    assert all(b > a for a, b in zip(ratios, ratios[1:]))


def test_multi_matches_scalar_prefactor_in_one_dimension():
    for k in (0.8, 2.0, 7.0):
        p1 = problem(kappa=k)
        pm = EscapeProblemMulti([[p1.h_a]], [[-p1.h_b_abs]], p1.sigma_g_a, p1.delta_l, p1.eta, k)
        # the exponent bases differ by a factor 2 on the barrier term; strip both
        pref_1 = tau_power_law_1d(p1) / (1 + 2 * p1.delta_l / (k * p1.eta * p1.sigma_g_a)) ** (k - 0.5)
        pref_m = tau_power_law_multi(pm) / (1 + p1.delta_l / (k * p1.eta * p1.sigma_g_a)) ** (k - 0.5)
        assert pref_m == pytest.approx(pref_1, rel=1e-12)


def test_multi_projection_and_validation():
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
    ha = q @ np.diag([0.0, 3.0]) @ q.T
    hb = np.diag([-0.5, 2.0])
    p = EscapeProblemMulti(ha, hb, 1.0, 1.0, 0.1, 2.0)
    expected = (2 * math.pi * math.sqrt(0.5 * 2.0) / ((1 - 2 / 4) * math.sqrt(3.0)) / 0.5
                * (1 + 1.0 / (0.1 * 2.0 * 1.0)) ** 1.5)
    assert tau_power_law_multi(p) == pytest.approx(expected, rel=1e-10)
    bigger = EscapeProblemMulti(ha, hb, 1.0, 2.0, 0.1, 2.0)
    assert tau_power_law_multi(bigger) > tau_power_law_multi(p)
    with pytest.raises(ValueError):
        EscapeProblemMulti(ha, np.diag([-1.0, -2.0]), 1.0, 1.0, 0.1, 2.0)
    with pytest.raises(ValueError):
        EscapeProblemMulti(ha, hb, 1.0, 1.0, 0.1, 1.0)


def test_quadrature_oracle_matches_kramers_asymptotics():
    # Langevin in the deep low-temperature regime: the exact mean passage to the saddle is half of Kramers
    dw = DoubleWell1D(0.0, 1.0, 1.0, 1.0)
    eta, sg = 0.02, 2.5
    t = mean_passage_time_quadrature(dw, lambda w: np.full(np.shape(w)[:-1], sg), eta, "saddle")
    kramers = tau_langevin_1d(1.0, 1.0, 1.0, eta, sg)
    assert t / (0.5 * kramers) == pytest.approx(1.0, rel=0.03)


def test_first_passage_zero_noise_is_censored():
    dw = DoubleWell1D(0.0, 1.0, 1.0, 1.0)
    stats = mc_first_passage(dw, 0.0, 0.05, max_steps=200, trials=5, master_seed=0, mode=Mode.LANGEVIN)
    assert stats.escaped == 0 and stats.censored == 5 and stats.mean_time is None
    assert stats.to_json()["mean_defined"] is False
    quiet = loss_form_noise(dw, 0.0, 2.0, 0.05)
    stats = mc_first_passage(dw, quiet, 0.05, max_steps=200, trials=3, master_seed=0)
    assert stats.censored == 3


def test_first_passage_deterministic_and_thread_invariant():
    dw = DoubleWell1D(0.0, 1.0, 1.0, 0.3)
    noise = loss_form_noise(dw, 2.0, 2.0, 0.05)
    a = mc_first_passage(dw, noise, 0.05, max_steps=20_000, trials=40, master_seed=7)
    b = mc_first_passage(dw, noise, 0.05, max_steps=20_000, trials=40, master_seed=7, threads=3)
    assert a.dumps() == b.dumps() and a.passage_csv() == b.passage_csv()
    assert a.escaped + a.censored == a.trials
    c = mc_first_passage(dw, noise, 0.05, max_steps=20_000, trials=40, master_seed=8)
    assert c.passage_csv() != a.passage_csv()


def test_first_passage_grows_with_barrier_under_paired_seeds():
    eta, sg, k = 0.05, 2.0, 2.0
    means = []
    for dl in (0.3, 0.6):
        dw = DoubleWell1D(0.0, 1.0, 1.0, dl)
        means.append(mc_first_passage(dw, loss_form_noise(dw, sg, k, eta), eta, trials=300, master_seed=3).mean_time)
    assert means[1] > means[0]


def test_first_passage_agrees_with_quadrature_oracle():
    dw = DoubleWell1D(0.0, 1.0, 1.0, 0.5)
    eta, sg, k = 0.02, 2.5, 2.0
    noise = loss_form_noise(dw, sg, k, eta)
    stats = mc_first_passage(dw, noise, eta, trials=600, master_seed=1)
    exact = mean_passage_time_quadrature(dw, noise.variance_at, eta, "saddle")
    assert abs(stats.mean_time - exact) < 2.5 * stats.ci95 / 1.96 + 0.03 * exact


def test_success_rate_examples():
    toy = EmpiricalToyLoss.generate()
    assert success_rate(toy, 64.0, 0.0, runs=5, steps=100, master_seed=0) == 0.0
    with pytest.raises(ValueError):
        success_rate(toy, 0.0, 0.0, mode=Mode.LANGEVIN)
    a = success_rate(toy, 0.0, 3.0, runs=10, steps=50, master_seed=2)
    b = success_rate(toy, 0.0, 3.0, runs=10, steps=50, master_seed=2, threads=3)
    assert a == b and 0.0 <= a <= 1.0
    sgd = success_rate(toy, 0.0, 0.0, runs=8, steps=50, master_seed=2, mode=Mode.SGD)
    assert sgd == success_rate(toy, 0.0, 0.0, runs=8, steps=50, master_seed=2, mode=Mode.SGD, threads=2)
