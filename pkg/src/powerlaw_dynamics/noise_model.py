"""State-dependent gradient-noise covariance and its empirical estimation."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod


@dataclass(frozen=True)
class ScalarNoiseParams:
    """One-dimensional noise C(w) = sigma_g + 2 rho (w - w*) + sigma_h (w - w*)^2.

    ``sigma_g`` and ``sigma_h`` are the minibatch variances of the gradient and
    Hessian at the minimum, ``rho_gh`` their covariance.
    """

    sigma_g: float
    sigma_h: float = 0.0
    rho_gh: float = 0.0
    center: float = 0.0
    curvature: float = 1.0
    eta: float = 1.0

    def __post_init__(self):
        if self.sigma_g < 0 or self.sigma_h < 0:
            raise ValueError("sigma_g and sigma_h must be non-negative")
        if not self.curvature > 0 or not self.eta > 0:
            raise ValueError("curvature and eta must be positive")
        bound = self.sigma_g * self.sigma_h
        if self.rho_gh**2 > bound * (1 + 1e-12) + 1e-300:
            raise ValueError(f"rho_gh^2 = {self.rho_gh**2:.6g} exceeds sigma_g*sigma_h = {bound:.6g}")

    @classmethod
    def from_kappa(cls, kappa: float, sigma_g: float, curvature: float, eta: float, center: float = 0.0):
        """Parameters with sigma_h chosen so that curvature / (eta sigma_h) = kappa."""
        return cls(sigma_g=sigma_g, sigma_h=curvature / (eta * kappa), center=center, curvature=curvature, eta=eta)

    @property
    def kappa(self) -> float:
        """Tail index H / (eta sigma_h); infinite without Hessian noise."""
        if self.sigma_h == 0:
            return np.inf
        return self.curvature / (self.eta * self.sigma_h)

    @property
    def dim(self) -> int:
        return 1

    def variance_at(self, w):
        x = np.asarray(w, dtype=float) - self.center
        return self.sigma_g + 2 * self.rho_gh * x + self.sigma_h * x**2

    def variance_derivative(self, w):
        x = np.asarray(w, dtype=float) - self.center
        return 2 * self.rho_gh + 2 * self.sigma_h * x

    def simplified_variance_at(self, w):
        x = np.asarray(w, dtype=float) - self.center
        return self.sigma_g + self.sigma_h * x**2

    # Batched interface used by the integrators: points have shape (m, 1).
    def diffusion(self, w):
        c = self.variance_at(np.asarray(w)[..., 0])
        if np.any(c < 0):
            raise ValueError(f"noise variance is negative (min {np.min(c):.3e})")
        return np.sqrt(c)[..., None, None]

    def divergence(self, w):
        return self.variance_derivative(np.asarray(w)[..., 0])[..., None]


@dataclass(frozen=True, eq=False)
class MultivariateNoiseParams:
    """C(w) = Sigma_g (1 + (w - w*)^T H Sigma_g^{-1} (w - w*) / (eta kappa))."""

    sigma_g_mat: np.ndarray
    hessian: np.ndarray
    kappa: float
    eta: float
    center: np.ndarray

    def __post_init__(self):
        sg = np.atleast_2d(np.asarray(self.sigma_g_mat, dtype=float))
        h = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        d = c.size
        if sg.shape != (d, d) or h.shape != (d, d):
            raise ValueError("sigma_g_mat and hessian must be d x d with d = len(center)")
        if not self.kappa > 0 or not self.eta > 0:
            raise ValueError("kappa and eta must be positive")
        for name, m in (("sigma_g_mat", sg), ("hessian", h)):
            if np.max(np.abs(m - m.T)) > 1e-12 * max(1.0, np.max(np.abs(m))):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(m)[0] <= 0:
                raise ValueError(f"{name} must be positive definite")
        metric = np.linalg.solve(sg, h.T).T  # H Sigma_g^{-1}
        if np.max(np.abs(metric - metric.T)) > 1e-10 * max(1.0, np.max(np.abs(metric))):
            raise ValueError("H Sigma_g^{-1} must be symmetric (H and Sigma_g must commute)")
        object.__setattr__(self, "sigma_g_mat", sg)
        object.__setattr__(self, "hessian", h)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "_metric", 0.5 * (metric + metric.T))
        object.__setattr__(self, "_chol", np.linalg.cholesky(sg))

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def metric(self) -> np.ndarray:
        """H Sigma_g^{-1}."""
        return self._metric

    def quadratic_form(self, w):
        x = np.asarray(w, dtype=float) - self.center
        return np.einsum("...i,ij,...j->...", x, self._metric, x) / (self.eta * self.kappa)

    def covariance_at(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape[-1] != self.dim:
            raise ValueError(f"expected dimension {self.dim}, got shape {w.shape}")
        return self.sigma_g_mat * (1.0 + self.quadratic_form(w))[..., None, None]

    def diffusion(self, w):
        return self._chol * np.sqrt(1.0 + self.quadratic_form(w))[..., None, None]

    def divergence(self, w):
        # row divergence of C: Sigma_g grad(q) = 2/(eta kappa) Sigma_g H Sigma_g^{-1} (w - w*)
        x = np.asarray(w, dtype=float) - self.center
        return 2.0 / (self.eta * self.kappa) * x @ (self.sigma_g_mat @ self._metric).T


@dataclass(frozen=True, eq=False)
class LossFormNoise:
    """C(w) = sigma_g + (2 sigma_h / H_a)(L(w) - L(a)) along a whole 1-D landscape.

    Equals the quadratic-basin variance inside the basin of ``anchor`` and keeps
    growing with the loss everywhere else.
    """

    landscape: object
    sigma_g: float
    sigma_h: float
    curvature: float
    anchor: float

    def __post_init__(self):
        object.__setattr__(self, "_base", float(np.asarray(self.landscape.loss(np.array([self.anchor])))))
        object.__setattr__(self, "_mu", 2.0 * self.sigma_h / self.curvature)

    def variance_at(self, w):
        return self.sigma_g + self._mu * (self.landscape.loss(w) - self._base)

    def diffusion(self, w):
        c = self.variance_at(w)
        if np.any(c < 0):
            raise ValueError(f"noise variance is negative (min {np.min(c):.3e})")
        return np.sqrt(c)[..., None, None]

    def divergence(self, w):
        return self._mu * self.landscape.gradient(w)


def variance_at(params: ScalarNoiseParams, w):
    return params.variance_at(w)


def simplified_variance_at(params: ScalarNoiseParams, w):
    return params.simplified_variance_at(w)


def covariance_at(params: MultivariateNoiseParams, w):
    return params.covariance_at(w)


def diffusion_factor(cov) -> np.ndarray:
    """Matrix M with M M^T = cov.

    Cholesky factor for positive definite input; symmetric square root when the
    matrix is only semi-definite (zero eigenvalues up to rounding).
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"covariance must be square, got shape {cov.shape}")
    scale = float(np.max(np.abs(cov))) if cov.size else 0.0
    if np.max(np.abs(cov - cov.T)) > 1e-12 * max(scale, 1e-300):
        raise ValueError("covariance must be symmetric")
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    tol = 1e-12 * max(scale, 1e-300)
    if vals[0] < -tol:
        raise ValueError(f"covariance is not positive semi-definite: smallest eigenvalue {vals[0]:.6g}")
    if vals[0] > tol:
        return np.linalg.cholesky(cov)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def empirical_covariance(samples) -> np.ndarray:
    """Unbiased (ddof=1) covariance of rows of ``samples``."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] < 2:
        raise ValueError("need at least 2 draws to estimate a covariance")
    x = samples - samples.mean(axis=0)
    return (x.T @ x) / (samples.shape[0] - 1)


def minibatch_gradient_draws(landscape, w, batch_size: int, draws: int, rng: np.random.Generator) -> np.ndarray:
    return np.array([landscape.minibatch_gradient(w, batch_size, rng) for _ in range(int(draws))])


@dataclass
class NoiseScanResult:
    offsets: np.ndarray
    traces: np.ndarray
    quad_coeffs: tuple[float, float, float]
    r_squared: float
    argmin_offset: float
    degenerate: bool

    def fitted(self, x):
        c0, c1, c2 = self.quad_coeffs
        x = np.asarray(x, dtype=float)
        return c0 + c1 * x + c2 * x**2

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["offset", "trace"])
        for o, t in zip(self.offsets, self.traces):
            writer.writerow([repr(float(o)), repr(float(t))])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "quad_coeffs": [float(c) for c in self.quad_coeffs],
            "r_squared": float(self.r_squared),
            "argmin_offset": None if np.isnan(self.argmin_offset) else float(self.argmin_offset),
            "degenerate": bool(self.degenerate),
        }

    def sidecar(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def fit_quadratic(offsets, traces) -> tuple[tuple[float, float, float], float, float, bool]:
    """Least-squares c0 + c1 x + c2 x^2; returns (coeffs, R^2, argmin, degenerate)."""
    x = np.asarray(offsets, dtype=float)
    y = np.asarray(traces, dtype=float)
    design = np.column_stack([np.ones_like(x), x, x**2])
    coeffs, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coeffs
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    else:
        r2 = float(np.clip(1.0 - ss_res / ss_tot, 0.0, 1.0))
    c0, c1, c2 = (float(c) for c in coeffs)
    degenerate = not c2 > 1e-12 * max(abs(c0), abs(c1), 1e-300)
    argmin = np.nan if degenerate else -c1 / (2 * c2)
    return (c0, c1, c2), r2, argmin, degenerate


def scan_noise_trace(landscape, center, direction, offsets, batch_size: int, draws: int, seed: int,
                     threads: int = 1) -> NoiseScanResult:
    """Trace of the minibatch-gradient covariance along center + offset * direction.

    Point ``k`` draws from stream ``(seed, NOISE_SCAN, k)``, so the traces do
    not depend on ``threads``.
    """
    if draws < 2:
        raise ValueError("draws must be at least 2")
    center = np.asarray(center, dtype=float)
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    offsets = np.asarray(offsets, dtype=float)
    traces = np.empty(offsets.size)

    def point(k):
        gen = rngmod.stream(seed, rngmod.NOISE_SCAN, k)
        grads = minibatch_gradient_draws(landscape, center + offsets[k] * direction, batch_size, draws, gen)
        traces[k] = np.trace(empirical_covariance(grads))

    if threads <= 1:
        for k in range(offsets.size):
            point(k)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(point, range(offsets.size)))
    coeffs, r2, argmin, degenerate = fit_quadratic(offsets, traces)
    return NoiseScanResult(offsets, traces, coeffs, r2, argmin, degenerate)


def symmetric_offsets(step: float, points: int) -> np.ndarray:
    """Offsets -points*step, ..., -step, step, ..., points*step."""
    i = np.arange(1, int(points) + 1) * float(step)
    return np.concatenate([-i[::-1], i])
