"""Mean escape times: closed forms, a quadrature oracle and Monte Carlo first passage.

Passage times are reported in SDE time, i.e. steps * eta.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import rng as rngmod
from .dynamics import Mode, _chunks, power_law_increment, toy_increment
from .noise_model import LossFormNoise

LOW_TEMPERATURE_RATIO = 0.1


class LowTemperatureWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EscapeProblem1D:
    h_a: float
    h_b_abs: float
    delta_l: float
    eta: float
    sigma_g_a: float
    kappa: float

    def __post_init__(self):
        for name in ("h_a", "h_b_abs", "delta_l", "eta", "sigma_g_a"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.kappa > 0.5:
            raise ValueError(f"kappa must exceed 1/2, got {self.kappa}")
        if self.temperature_ratio > LOW_TEMPERATURE_RATIO:
            warnings.warn(
                f"eta*sigma_g/delta_l = {self.temperature_ratio:.3g} exceeds {LOW_TEMPERATURE_RATIO}; "
                "outside the low-temperature regime",
                LowTemperatureWarning,
                stacklevel=3,
            )

    @property
    def temperature_ratio(self) -> float:
        return self.eta * self.sigma_g_a / self.delta_l

    @property
    def sigma_h_a(self) -> float:
        return self.h_a / (self.eta * self.kappa)


def tau_power_law_1d(p: EscapeProblem1D) -> float:
    """2 pi / ((1 - 1/(2 kappa)) sqrt(H_a |H_b|)) * (1 + 2 dL/(kappa eta sigma_g))^(kappa - 1/2)."""
    k = p.kappa
    if not k > 0.5:
        raise ValueError("kappa must exceed 1/2")
    pref = 2 * math.pi / ((1 - 1 / (2 * k)) * math.sqrt(p.h_a * p.h_b_abs))
    return pref * math.exp((k - 0.5) * math.log1p(2 * p.delta_l / (k * p.eta * p.sigma_g_a)))


def tau_langevin_1d(h_a: float, h_b_abs: float, delta_l: float, eta: float, sigma: float) -> float:
    """2 pi / sqrt(H_a |H_b|) * exp(2 dL / (eta sigma)); the kappa -> infinity limit of the power-law time."""
    for name, v in (("h_a", h_a), ("h_b_abs", h_b_abs), ("eta", eta), ("sigma", sigma)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    if delta_l < 0:
        raise ValueError("delta_l must be non-negative")
    return 2 * math.pi / math.sqrt(h_a * h_b_abs) * math.exp(2 * delta_l / (eta * sigma))


def tau_alpha_stable_1d(alpha: float, eta: float, sigma: float, width: float) -> float:
    """eta * alpha * (width / (eta sigma))^alpha, order-only with unit prefactor."""
    if not 0 < alpha <= 2:
        raise ValueError(f"alpha must lie in (0, 2], got {alpha}")
    for name, v in (("eta", eta), ("sigma", sigma), ("width", width)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    return eta * alpha * (width / (eta * sigma)) ** alpha


@dataclass(frozen=True, eq=False)
class EscapeProblemMulti:
    hessian_a: np.ndarray
    hessian_b: np.ndarray
    sigma_e: float
    delta_l: float
    eta: float
    kappa: float

    def __post_init__(self):
        ha = np.atleast_2d(np.asarray(self.hessian_a, dtype=float))
        hb = np.atleast_2d(np.asarray(self.hessian_b, dtype=float))
        d = ha.shape[0]
        if ha.shape != (d, d) or hb.shape != (d, d):
            raise ValueError("hessians must be square and of equal size")
        for name, m in (("hessian_a", ha), ("hessian_b", hb)):
            if np.max(np.abs(m - m.T)) > 1e-12 * max(1.0, np.max(np.abs(m))):
                raise ValueError(f"{name} must be symmetric")
        ea = np.linalg.eigvalsh(ha)
        eb = np.linalg.eigvalsh(hb)
        if ea[0] < -1e-10:
            raise ValueError(f"hessian_a must be positive semi-definite (smallest eigenvalue {ea[0]:.3e})")
        neg = int(np.sum(eb < 0))
        if neg != 1:
            raise ValueError(f"hessian_b must have exactly one negative eigenvalue, found {neg}")
        if np.any(eb == 0):
            raise ValueError("hessian_b must be non-singular")
        if not self.kappa > d / 2:
            raise ValueError(f"kappa must exceed d/2 = {d / 2}")
        for name in ("sigma_e", "delta_l", "eta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        object.__setattr__(self, "hessian_a", ha)
        object.__setattr__(self, "hessian_b", hb)
        object.__setattr__(self, "_eig_a", ea)
        object.__setattr__(self, "_eig_b", eb)

    @property
    def dim(self) -> int:
        return self.hessian_a.shape[0]

    @property
    def h_be(self) -> float:
        """The negative eigenvalue of H_b."""
        return float(self._eig_b[0])

    @property
    def logdet_a_plus(self) -> float:
        """log det of H_a restricted to its positive-eigenvalue subspace."""
        tol = 1e-10 * max(1.0, float(np.max(np.abs(self._eig_a))))
        pos = self._eig_a[self._eig_a > tol]
        if pos.size == 0:
            raise ValueError("hessian_a has no positive eigenvalues")
        return float(np.sum(np.log(pos)))


def tau_power_law_multi(p: EscapeProblemMulti) -> float:
    d, k = p.dim, p.kappa
    log_neg_det_b = float(np.sum(np.log(np.abs(p._eig_b))))
    log_pref = (math.log(2 * math.pi) + 0.5 * log_neg_det_b - math.log(1 - d / (2 * k))
                - 0.5 * p.logdet_a_plus - math.log(abs(p.h_be)))
    return math.exp(log_pref + (k - 0.5) * math.log1p(p.delta_l / (p.eta * k * p.sigma_e)))


def loss_form_noise(landscape, sigma_g: float, kappa: float, eta: float) -> LossFormNoise:
    """Noise C(w) = sigma_g + (2 sigma_h/H_a)(L(w) - L(a)) with sigma_h = H_a/(eta kappa)."""
    h_a = landscape.curvature_a
    return LossFormNoise(landscape, sigma_g, h_a / (eta * kappa), h_a, landscape.min_a)


@dataclass
class FirstPassageStats:
    trials: int
    escaped: int
    censored: int
    mean_time: float | None
    ci95: float | None
    passage_times: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "trials": self.trials,
            "escaped": self.escaped,
            "censored": self.censored,
            "mean_time": self.mean_time,
            "ci95": self.ci95,
            "mean_defined": self.mean_time is not None,
            **self.meta,
        }

    def passage_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["trial", "time"])
        for i, t in enumerate(self.passage_times):
            writer.writerow([i, "" if np.isnan(t) else repr(float(t))])
        return buf.getvalue()

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def _target_position(landscape, target: str) -> float:
    if target == "saddle":
        return landscape.saddle_b
    if target == "min_c":
        return landscape.min_c
    raise ValueError(f"target must be 'saddle' or 'min_c', got {target!r}")


def mc_first_passage(landscape, noise, eta: float, max_steps: int = 10**7, trials: int = 2000,
                     master_seed: int = 0, mode: Mode | str = Mode.POWER_LAW, target: str = "saddle",
                     convention: str = "kinetic", threads: int = 1) -> FirstPassageStats:
    """First step at which trajectories started at ``min_a`` reach the target coordinate.

    ``noise`` is a constant variance for LANGEVIN and an object with
    ``diffusion``/``divergence`` for POWER_LAW (see ``loss_form_noise``).
    Trial ``i`` draws from stream ``(master_seed, FIRST_PASSAGE, i)``.
    """
    mode = Mode(mode)
    if mode not in (Mode.LANGEVIN, Mode.POWER_LAW):
        raise ValueError("mode must be LANGEVIN or POWER_LAW")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    rngmod.check_seed(master_seed)
    goal = _target_position(landscape, target)
    if mode is Mode.LANGEVIN:
        sd = math.sqrt(float(noise))

        def step(w, xi):
            return w - eta * landscape.gradient(w) + eta * sd * xi
    else:
        def step(w, xi):
            return w + power_law_increment(landscape, noise, w, xi, eta, convention)

    steps_taken = np.full(trials, -1, dtype=np.int64)

    def work(idx):
        normals = rngmod.LockstepNormals(master_seed, rngmod.FIRST_PASSAGE, idx, 1)
        w = np.full((idx.size, 1), float(landscape.min_a))
        active = np.arange(idx.size)
        silent = mode is Mode.LANGEVIN and float(noise) == 0.0
        for t in range(1, max_steps + 1):
            if active.size == 0 or silent:
                break
            w_new = step(w[active], normals.draw(active))
            w[active] = w_new
            hit = w_new[:, 0] >= goal
            if np.any(hit):
                steps_taken[idx[active[hit]]] = t
                active = active[~hit]

    chunks = _chunks(trials, threads)
    if len(chunks) == 1:
        work(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(work, chunks))

    times = np.where(steps_taken > 0, steps_taken * eta, np.nan)
    ok = times[~np.isnan(times)]
    escaped = int(ok.size)
    mean = float(ok.mean()) if escaped else None
    ci = float(1.96 * ok.std(ddof=1) / math.sqrt(escaped)) if escaped > 1 else None
    meta = {"mode": mode.value, "target": target, "convention": convention, "eta": eta,
            "max_steps": int(max_steps), "master_seed": int(master_seed)}
    return FirstPassageStats(trials, escaped, trials - escaped, mean, ci, times, meta)


def mean_passage_time_quadrature(landscape, variance_fn, eta: float, target: str = "saddle",
                                 points: int = 20001) -> float:
    """Exact mean first-passage time of the continuous diffusion from min_a.

    Uses the Fokker-Planck operator d/dw[p g] + d/dw[D dp/dw] with D = eta C / 2,
    whose stationary density is m = exp(-int g/D). With a reflecting left end at
    -infinity, T = int_a^target (1/(D m)) int_{-inf}^y m dz dy.
    """
    a = float(landscape.min_a)
    goal = _target_position(landscape, target)
    grid = np.linspace(a, goal, points)

    def phi(y):
        # -log m(y) relative to a, by quadrature of g / D
        y = np.atleast_1d(y)
        out = np.empty(y.size)
        for i, v in enumerate(y):
            out[i] = integrate.quad(
                lambda u: float(landscape.gradient(np.array([u]))[0]) / (0.5 * eta * float(variance_fn(np.array([u])))),
                a, v, epsabs=0.0, epsrel=1e-12, limit=200)[0]
        return out

    # phi on the grid by cumulative Simpson of g/D; the left tail by adaptive quadrature
    gd = landscape.gradient(grid[:, None])[:, 0] / (0.5 * eta * variance_fn(grid[:, None]))
    phi_grid = np.concatenate([[0.0], integrate.cumulative_simpson(gd, x=grid)])
    tail = integrate.quad(lambda z: math.exp(-phi(z)[0]), -np.inf, a, epsabs=0.0, epsrel=1e-10, limit=500)[0]
    m = np.exp(-phi_grid)
    inner = tail + np.concatenate([[0.0], integrate.cumulative_simpson(m, x=grid)])
    d = 0.5 * eta * variance_fn(grid[:, None])
    return float(integrate.simpson(inner / (d * m), x=grid))


def success_rate(landscape, lambda1: float, lambda2: float, eta: float = 0.025, steps: int = 500,
                 runs: int = 100, master_seed: int = 0, mode: Mode | str = Mode.TOY_POWER_LAW,
                 escape_region: tuple[float, float] = (0.0, 2.0), batch_size: int = 1,
                 start=None, threads: int = 1) -> float:
    """Fraction of runs whose trajectory leaves the open box ``escape_region``^d.

    Runs start at the empirical minimum near (1, 1). Run ``r`` draws from stream
    ``(master_seed, SUCCESS_RATE, r)`` whatever the sweep point, so sweeps
    share noise across parameter values.
    """
    mode = Mode(mode)
    if mode not in (Mode.SGD, Mode.TOY_POWER_LAW):
        raise ValueError("mode must be SGD or TOY_POWER_LAW")
    if runs < 1:
        raise ValueError("runs must be at least 1")
    lo, hi = escape_region
    w0 = landscape.empirical_minimum() if start is None else np.asarray(start, dtype=float)
    escaped = np.zeros(runs, dtype=bool)

    def outside(w):
        return ~np.all((w > lo) & (w < hi) & np.isfinite(w), axis=-1)

    def work(idx):
        if mode is Mode.SGD:
            for r in idx:
                gen = rngmod.stream(master_seed, rngmod.SUCCESS_RATE, int(r))
                w = w0.copy()
                for _ in range(steps):
                    w = w - eta * landscape.minibatch_gradient(w, batch_size, gen)
                    if outside(w):
                        escaped[r] = True
                        break
            return
        normals = rngmod.LockstepNormals(master_seed, rngmod.SUCCESS_RATE, idx, landscape.dim)
        w = np.tile(w0, (idx.size, 1))
        active = np.arange(idx.size)
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(steps):
                if active.size == 0:
                    break
                w_new = w[active] + toy_increment(landscape, w[active], normals.draw(active), eta, lambda1, lambda2)
                w[active] = w_new
                out = outside(w_new)
                escaped[idx[active[out]]] = True
                active = active[~out]

    chunks = _chunks(runs, threads)
    if len(chunks) == 1:
        work(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(work, chunks))
    return float(escaped.mean())
