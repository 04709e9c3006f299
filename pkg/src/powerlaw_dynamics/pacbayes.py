"""KL divergence bound between the stationary law and a Gaussian prior, and the resulting PAC-Bayes bound."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special


def _spd_logdet(m: np.ndarray, name: str) -> float:
    vals = np.linalg.eigvalsh(m)
    if vals[0] <= 0:
        raise ValueError(f"{name} must be positive definite (smallest eigenvalue {vals[0]:.3e})")
    return float(np.sum(np.log(vals)))


@dataclass(frozen=True, eq=False)
class BoundInputs:
    hessian: np.ndarray
    sigma_g_mat: np.ndarray
    eta: float
    kappa: float
    n_samples: int = 2
    delta: float = 0.05
    empirical_risk: float = 0.0

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        sg = np.atleast_2d(np.asarray(self.sigma_g_mat, dtype=float))
        d = h.shape[0]
        if h.shape != (d, d) or sg.shape != (d, d):
            raise ValueError("hessian and sigma_g_mat must be square and of equal size")
        for name, m in (("hessian", h), ("sigma_g_mat", sg)):
            if np.max(np.abs(m - m.T)) > 1e-12 * max(1.0, np.max(np.abs(m))):
                raise ValueError(f"{name} must be symmetric")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.kappa > d / 2:
            raise ValueError(f"kappa must exceed d/2 = {d / 2}, got {self.kappa}")
        if not 1 - (d / 2 - 1) / self.kappa > 0:
            raise ValueError("1 - (d/2 - 1)/kappa must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.empirical_risk < 0:
            raise ValueError("empirical_risk must be non-negative")
        object.__setattr__(self, "hessian", 0.5 * (h + h.T))
        object.__setattr__(self, "sigma_g_mat", 0.5 * (sg + sg.T))

    @property
    def dim(self) -> int:
        return self.hessian.shape[0]

    def _terms(self):
        ld_h = _spd_logdet(self.hessian, "hessian")
        ld_s = _spd_logdet(self.sigma_g_mat, "sigma_g_mat")
        trace = float(np.trace(np.linalg.solve(self.hessian, self.sigma_g_mat)))
        d = self.dim
        middle = (self.eta * trace - 2 * d) / (4 * (1 - (d / 2 - 1) / self.kappa))
        return ld_h, ld_s, middle


def kl_upper_bound(inputs: BoundInputs) -> float:
    """1/2 log(det H / det Sigma_g) + (Tr(eta Sigma_g H^-1) - 2d)/(4(1 - (d/2 - 1)/kappa)) + d/2 log(2/eta)."""
    ld_h, ld_s, middle = inputs._terms()
    return 0.5 * (ld_h - ld_s) + middle + 0.5 * inputs.dim * math.log(2 / inputs.eta)


def kl_exact_form(inputs: BoundInputs) -> float:
    """The same expression before log Gamma(kappa)/Gamma(kappa - d/2) is bounded by (d/2) log kappa."""
    ld_h, ld_s, middle = inputs._terms()
    d, k = inputs.dim, inputs.kappa
    return (0.5 * (ld_h - ld_s - d * math.log(inputs.eta * k)) + special.gammaln(k) - special.gammaln(k - d / 2)
            + middle + 0.5 * d * math.log(2))


def generalization_bound(inputs: BoundInputs, kl: float | None = None) -> float:
    """empirical_risk + sqrt((KL + log(1/delta) + log n + 2)/(n - 1))."""
    n = inputs.n_samples
    if n <= 1:
        raise ValueError("n_samples must be at least 2")
    kl = kl_upper_bound(inputs) if kl is None else kl
    radicand = (kl + math.log(1 / inputs.delta) + math.log(n) + 2) / (n - 1)
    if radicand < 0:
        raise ValueError(f"bound radicand is negative ({radicand:.3g}); the KL bound is below -log(e^2 n / delta)")
    return inputs.empirical_risk + math.sqrt(radicand)
