"""Discrete-time integrators: SGD, Langevin, power-law and the 2-D toy power-law update.

One step covers eta units of SDE time, so the Gaussian noise added per step
is eta * M(w) xi with M M^T = C(w). Noise is evaluated at the pre-step state.

Two readings of the state-dependent diffusion are supported:

``"ito"``
    the plain update w - eta g(w) + eta M(w) xi.
``"kinetic"``
    the same update plus the noise-induced drift (eta^2 / 2) div C(w), whose
    Fokker-Planck equation is d_t p = div(p g) + (eta/2) div(C grad p).  The
    closed-form stationary densities and escape times in this package are
    solutions of that equation.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from . import rng as rngmod
from .noise_model import diffusion_factor, empirical_covariance, minibatch_gradient_draws

CONVENTIONS = ("ito", "kinetic")


class Mode(str, Enum):
    SGD = "SGD"
    LANGEVIN = "LANGEVIN"
    POWER_LAW = "POWER_LAW"
    TOY_POWER_LAW = "TOY_POWER_LAW"


class IntegrationError(RuntimeError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {cause}")
        self.step = step


@dataclass(frozen=True)
class IntegratorConfig:
    eta: float
    steps: int
    mode: Mode
    master_seed: int
    record_every: int = 1
    lambda1: float | None = None
    lambda2: float | None = None
    batch_size: int | None = None
    convention: str = "ito"

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        rngmod.check_seed(self.master_seed)
        if not self.eta >= 0:
            raise ValueError("eta must be non-negative")
        if int(self.steps) != self.steps or self.steps < 0:
            raise ValueError("steps must be a non-negative integer")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError("record_every must be a positive integer")
        if self.steps * self.record_every >= 2**63:
            raise OverflowError("steps * record_every overflows a 64-bit counter")
        toy = self.mode is Mode.TOY_POWER_LAW
        for name in ("lambda1", "lambda2"):
            value = getattr(self, name)
            if toy and value is None:
                raise ValueError(f"{name} is required for TOY_POWER_LAW")
            if not toy and value is not None:
                raise ValueError(f"{name} is only valid for TOY_POWER_LAW")
            if value is not None and value < 0:
                raise ValueError(f"{name} must be non-negative")
        sgd = self.mode is Mode.SGD
        if sgd and self.batch_size is None:
            raise ValueError("batch_size is required for SGD")
        if not sgd and self.batch_size is not None:
            raise ValueError("batch_size is only valid for SGD")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["mode"] = self.mode.value
        return out


@dataclass
class Trajectory:
    states: np.ndarray
    losses: np.ndarray | None
    config_hash: str
    steps: np.ndarray = field(default=None)

    def to_csv(self, header: dict | None = None) -> str:
        buf = io.StringIO()
        if header is not None:
            buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        d = self.states.shape[1]
        cols = ["step"] + [f"w{i + 1}" for i in range(d)]
        if self.losses is not None:
            cols.append("loss")
        writer.writerow(cols)
        for k, row in enumerate(self.states):
            vals = [str(int(self.steps[k]))] + [repr(float(v)) for v in row]
            if self.losses is not None:
                vals.append(repr(float(self.losses[k])))
            writer.writerow(vals)
        return buf.getvalue()


def _noise_term(noise, w, xi):
    m = noise.diffusion(w)
    return np.einsum("...ij,...j->...i", m, xi)


def power_law_increment(landscape, noise, w, xi, eta, convention="ito"):
    """Batched power-law update increment for points w and normals xi, both (m, d)."""
    inc = -eta * landscape.gradient(w) + eta * _noise_term(noise, w, xi)
    if convention == "kinetic":
        inc = inc + 0.5 * eta * eta * noise.divergence(w)
    return inc


def langevin_increment(landscape, factor, w, xi, eta):
    return -eta * landscape.gradient(w) + eta * xi @ factor.T


def toy_increment(landscape, w, xi, eta, lambda1, lambda2):
    amp = np.sqrt(1.0 + lambda1 * landscape.loss(w))
    return -eta * landscape.gradient(w) + eta * lambda2 * amp[..., None] * xi


def _point(landscape, w):
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != landscape.dim:
        raise ValueError(f"expected a point of dimension {landscape.dim}, got {w.size}")
    return w


def step_sgd(landscape, w, batch_size: int, rng: np.random.Generator, eta: float):
    w = _point(landscape, w)
    return w - eta * landscape.minibatch_gradient(w, batch_size, rng)


def step_langevin(landscape, w, const_cov, eta: float, rng: np.random.Generator):
    w = _point(landscape, w)
    factor = diffusion_factor(np.atleast_2d(const_cov))
    xi = rng.standard_normal(w.size)
    return w + langevin_increment(landscape, factor, w[None], xi[None], eta)[0]


def step_power_law(landscape, w, noise, eta: float, rng: np.random.Generator, convention: str = "ito"):
    w = _point(landscape, w)
    xi = rng.standard_normal(w.size)
    return w + power_law_increment(landscape, noise, w[None], xi[None], eta, convention)[0]


def step_toy_power_law(landscape, w, lambda1: float, lambda2: float, eta: float, rng: np.random.Generator):
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("lambda1 and lambda2 must be non-negative")
    w = _point(landscape, w)
    xi = rng.standard_normal(w.size)
    return w + toy_increment(landscape, w[None], xi[None], eta, lambda1, lambda2)[0]


def match_lambda2(landscape, w_star, batch_size: int, draws: int, rng: np.random.Generator) -> float:
    """lambda2 with Tr Cov(lambda2 xi) = 2 lambda2^2 equal to the minibatch-noise trace at w_star."""
    if draws < 2:
        raise ValueError("draws must be at least 2")
    grads = minibatch_gradient_draws(landscape, w_star, batch_size, draws, rng)
    tr = float(np.trace(empirical_covariance(grads)))
    return float(np.sqrt(max(tr, 0.0) / 2.0))


def _stepper(config: IntegratorConfig, landscape, noise):
    """Batched step (w, xi) -> new w for the noise-driven modes."""
    eta = config.eta
    if config.mode is Mode.LANGEVIN:
        factor = diffusion_factor(np.atleast_2d(noise))
        return lambda w, xi: w + langevin_increment(landscape, factor, w, xi, eta)
    if config.mode is Mode.POWER_LAW:
        return lambda w, xi: w + power_law_increment(landscape, noise, w, xi, eta, config.convention)
    if config.mode is Mode.TOY_POWER_LAW:
        return lambda w, xi: w + toy_increment(landscape, w, xi, eta, config.lambda1, config.lambda2)
    raise ValueError(f"no batched stepper for {config.mode}")


def config_digest(config: IntegratorConfig, landscape=None, w0=None) -> str:
    payload = {"config": config.to_dict()}
    if landscape is not None and hasattr(landscape, "to_dict"):
        payload["landscape"] = landscape.to_dict()
    if w0 is not None:
        payload["w0"] = [float(v) for v in np.ravel(w0)]
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def run(config: IntegratorConfig, landscape, noise, w0) -> Trajectory:
    """Integrate one trajectory from w0, recording every ``record_every`` steps.

    ``noise`` is the constant covariance for LANGEVIN, a noise-parameter
    object for POWER_LAW and ignored for SGD and TOY_POWER_LAW. Draws come from
    stream ``(master_seed, TRAJECTORY)``.
    """
    w = _point(landscape, w0).copy()
    gen = rngmod.stream(config.master_seed, rngmod.TRAJECTORY)
    n_rec = config.steps // config.record_every + 1
    states = np.empty((n_rec, w.size))
    losses = np.empty(n_rec)
    recorded_steps = np.arange(n_rec) * config.record_every
    states[0] = w
    losses[0] = float(np.asarray(landscape.loss(w)))
    if config.mode is Mode.SGD:
        advance = lambda w: step_sgd(landscape, w, config.batch_size, gen, config.eta)  # noqa: E731
    else:
        stepper = _stepper(config, landscape, noise)
        advance = lambda w: stepper(w[None], gen.standard_normal(w.size)[None])[0]  # noqa: E731
    k = 1
    for t in range(1, config.steps + 1):
        try:
            w = advance(w)
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise IntegrationError(t, exc) from exc
        if t % config.record_every == 0:
            states[k] = w
            losses[k] = float(np.asarray(landscape.loss(w)))
            k += 1
    return Trajectory(states, losses, config_digest(config, landscape, w0), recorded_steps)


def _chunks(n: int, parts: int) -> list[np.ndarray]:
    parts = max(1, min(int(parts), n)) if n else 1
    return [c for c in np.array_split(np.arange(n), parts) if c.size]


def run_ensemble(config: IntegratorConfig, landscape, noise, w0s, threads: int = 1) -> np.ndarray:
    """Final states of independent chains; chain i uses stream (master_seed, ENSEMBLE, i).

    The result does not depend on ``threads``.
    """
    w0s = np.asarray(w0s, dtype=float)
    if w0s.ndim == 1:
        w0s = w0s[:, None] if landscape.dim == 1 else w0s[None]
    m = w0s.shape[0]
    out = np.empty_like(w0s)

    def work(idx):
        if config.mode is Mode.SGD:
            for i in idx:
                gen = rngmod.stream(config.master_seed, rngmod.ENSEMBLE, int(i))
                w = w0s[i].copy()
                for _ in range(config.steps):
                    w = step_sgd(landscape, w, config.batch_size, gen, config.eta)
                out[i] = w
            return
        stepper = _stepper(config, landscape, noise)
        normals = rngmod.LockstepNormals(config.master_seed, rngmod.ENSEMBLE, idx, landscape.dim)
        rows = np.arange(idx.size)
        w = w0s[idx].copy()
        for _ in range(config.steps):
            w = stepper(w, normals.draw(rows))
        out[idx] = w

    chunks = _chunks(m, threads)
    if len(chunks) == 1:
        work(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(work, chunks))
    return out
