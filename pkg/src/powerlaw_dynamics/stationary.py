"""Stationary densities of the power-law dynamic.

Three families:

* ``PowerLawKappa1D``: p(w) proportional to (1 + sigma_h/sigma_g (w - w*)^2)^(-kappa),
  normalizer sqrt(sigma_g/sigma_h) B(1/2, kappa - 1/2).
* ``PowerLawKappaMulti``: p(w) proportional to (1 + (w - w*)^T H Sigma_g^{-1} (w - w*) / (eta kappa))^(-kappa),
  normalizer (eta kappa pi)^(d/2) Gamma(kappa - d/2) / (Gamma(kappa) sqrt(det(H Sigma_g^{-1}))).
* ``FullStationary1D``: the arctan-corrected density for noise with a nonzero
  gradient/Hessian covariance, normalized by quadrature.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, interpolate, special

from .noise_model import ScalarNoiseParams

QUAD_TOL = 1e-10


class NonNormalizableError(ValueError):
    pass


@dataclass(frozen=True)
class PowerLawKappa1D:
    kappa: float
    sigma_g: float
    sigma_h: float
    center: float = 0.0

    def __post_init__(self):
        if not self.kappa > 0.5:
            raise NonNormalizableError(f"kappa must exceed 1/2 for a normalizable density, got {self.kappa}")
        if not (self.sigma_g > 0 and self.sigma_h > 0):
            raise ValueError("sigma_g and sigma_h must be positive")

    @classmethod
    def from_noise(cls, noise: ScalarNoiseParams) -> "PowerLawKappa1D":
        return cls(noise.kappa, noise.sigma_g, noise.sigma_h, noise.center)

    @classmethod
    def from_scale(cls, kappa: float, scale: float, center: float = 0.0) -> "PowerLawKappa1D":
        """Distribution of center + scale * T with T Student-t on 2 kappa - 1 degrees of freedom."""
        return cls(kappa, scale**2 * (2 * kappa - 1), 1.0, center)

    @property
    def ratio(self) -> float:
        """sigma_h / sigma_g."""
        return self.sigma_h / self.sigma_g

    @property
    def scale(self) -> float:
        """Student-t scale s with s^2 = sigma_g / (sigma_h (2 kappa - 1))."""
        return float(np.sqrt(self.sigma_g / (self.sigma_h * (2 * self.kappa - 1))))

    @property
    def log_normalizer(self) -> float:
        return 0.5 * np.log(self.sigma_g / self.sigma_h) + special.betaln(0.5, self.kappa - 0.5)

    def unnormalized(self, w):
        x = np.asarray(w, dtype=float) - self.center
        return np.exp(-self.kappa * np.log1p(self.ratio * x * x))

    def log_density(self, w):
        x = np.asarray(w, dtype=float) - self.center
        return -self.kappa * np.log1p(self.ratio * x * x) - self.log_normalizer

    def density(self, w):
        return np.exp(self.log_density(w))

    @cached_property
    def _cdf_table(self):
        # cumulative mass on a tangent grid w = center + s tan(theta), s the Student scale
        a = self.scale
        theta = np.linspace(-np.pi / 2, np.pi / 2, 2049)
        w_of = lambda t: self.center + a * np.tan(t)  # noqa: E731

        def integrand(t):
            c = np.cos(t)
            return float(self.density(w_of(t))) * a / (c * c)

        dens = lambda w: float(self.density(w))  # noqa: E731
        inner = [
            integrate.quad(integrand, lo, hi, epsabs=1e-14, epsrel=QUAD_TOL, limit=200)[0]
            for lo, hi in zip(theta[1:-2], theta[2:-1])
        ]
        # the end cells can hold an integrable singularity in theta; integrate them in w instead
        left = integrate.quad(dens, -np.inf, w_of(theta[1]), epsabs=1e-14, epsrel=QUAD_TOL, limit=500)[0]
        right = integrate.quad(dens, w_of(theta[-2]), np.inf, epsabs=1e-14, epsrel=QUAD_TOL, limit=500)[0]
        pieces = np.array([left, *inner, right])
        cum = np.concatenate([[0.0], np.cumsum(pieces)])
        step = theta[1] - theta[0]
        slope = np.array([integrand(t) for t in theta[1:-1]])
        slope = np.concatenate([[left / step], slope, [right / step]])
        # Hermite interpolation with the exact derivative dF/dtheta
        return a, interpolate.CubicHermiteSpline(theta, cum / cum[-1], slope / cum[-1])

    def cdf(self, w):
        """CDF by numerical integration of the density (independent of the sampler)."""
        a, table = self._cdf_table
        w = np.asarray(w, dtype=float)
        theta = np.arctan((w - self.center) / a)
        out = np.asarray(table(theta), dtype=float)
        edge = table.x[1]
        far = np.abs(theta) > -edge
        if np.any(far):
            # beyond the first and last grid cells, integrate the tail directly
            # by the substitution x = 1/u, which leaves an endpoint singularity quad handles well
            def tail(r):
                f = lambda u: float(self.density(self.center + 1.0 / u)) / (u * u) if u > 0 else 0.0  # noqa: E731
                return integrate.quad(f, 0.0, 1.0 / r, epsabs=0.0, epsrel=QUAD_TOL, limit=500)[0]

            flat = out.reshape(-1)
            for i in np.flatnonzero(far.reshape(-1)):
                r = w.reshape(-1)[i] - self.center
                flat[i] = tail(-r) if r < 0 else 1.0 - tail(r)
        return np.clip(out, 0.0, 1.0)

    def to_dict(self) -> dict:
        return {"kind": "power_law_kappa_1d", "kappa": self.kappa, "sigma_g": self.sigma_g,
                "sigma_h": self.sigma_h, "center": self.center}


def density_1d(dist: PowerLawKappa1D, w):
    return dist.density(w)


def normalizer_1d(dist: PowerLawKappa1D) -> float:
    return float(np.exp(dist.log_normalizer))


def normalizer_1d_quadrature(dist: PowerLawKappa1D) -> float:
    """Adaptive quadrature of the unnormalized density on the tangent-mapped line."""
    a = 1.0 / np.sqrt(dist.ratio)

    def integrand(t):
        c = np.cos(t)
        if c <= 0.0:
            return 0.0
        return float(dist.unnormalized(dist.center + a * np.tan(t))) * a / (c * c)

    half = integrate.quad(integrand, 0.0, np.pi / 2, epsabs=0.0, epsrel=QUAD_TOL, limit=500)[0]
    return 2.0 * half


def sample_1d(dist: PowerLawKappa1D, n: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. draws as center + scale * T, T ~ Student-t(2 kappa - 1)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return dist.center + dist.scale * rng.standard_t(2 * dist.kappa - 1, size=int(n))


@dataclass(frozen=True, eq=False)
class PowerLawKappaMulti:
    kappa: float
    hessian: np.ndarray
    sigma_g_mat: np.ndarray
    eta: float
    center: np.ndarray

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        sg = np.atleast_2d(np.asarray(self.sigma_g_mat, dtype=float))
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        d = c.size
        if h.shape != (d, d) or sg.shape != (d, d):
            raise ValueError("hessian and sigma_g_mat must be d x d with d = len(center)")
        if not self.kappa > d / 2:
            raise NonNormalizableError(f"kappa must exceed d/2 = {d / 2}, got {self.kappa}")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        metric = np.linalg.solve(sg, h.T).T
        if np.max(np.abs(metric - metric.T)) > 1e-10 * max(1.0, np.max(np.abs(metric))):
            raise ValueError("H Sigma_g^{-1} must be symmetric")
        metric = 0.5 * (metric + metric.T)
        vals = np.linalg.eigvalsh(metric)
        if vals[0] <= 0:
            raise ValueError("H Sigma_g^{-1} must be positive definite")
        object.__setattr__(self, "hessian", h)
        object.__setattr__(self, "sigma_g_mat", sg)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "_metric", metric)
        object.__setattr__(self, "_logdet", float(np.sum(np.log(vals))))

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def log_normalizer(self) -> float:
        d, k = self.dim, self.kappa
        return (0.5 * d * np.log(self.eta * k * np.pi) + special.gammaln(k - d / 2)
                - special.gammaln(k) - 0.5 * self._logdet)

    def quadratic_form(self, w):
        x = np.asarray(w, dtype=float) - self.center
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected dimension {self.dim}, got shape {x.shape}")
        return np.einsum("...i,ij,...j->...", x, self._metric, x) / (self.eta * self.kappa)

    def unnormalized(self, w):
        return np.exp(-self.kappa * np.log1p(self.quadratic_form(w)))

    def log_density(self, w):
        return -self.kappa * np.log1p(self.quadratic_form(w)) - self.log_normalizer

    def density(self, w):
        return np.exp(self.log_density(w))


def density_multi(dist: PowerLawKappaMulti, w):
    return dist.density(w)


def normalizer_multi(dist: PowerLawKappaMulti) -> float:
    return float(np.exp(dist.log_normalizer))


@dataclass(frozen=True)
class FullStationary1D:
    """Stationary density with first-order noise term rho_gh kept.

    Unnormalized form C(w)^(-H/(eta sigma_h)) exp(-H 4 rho arctan(C'(w)/sqrt(4 sigma_h sigma_g - 4 rho)) / (eta sigma_h)),
    with radicand 4 sigma_h sigma_g - 4 rho (rho, not rho^2).
    """

    noise: ScalarNoiseParams
    half_width: float | None = None

    def __post_init__(self):
        p = self.noise
        if not p.sigma_h > 0:
            raise ValueError("sigma_h must be positive")
        if not p.kappa > 0.5:
            raise NonNormalizableError(f"H/(eta sigma_h) must exceed 1/2, got {p.kappa}")
        radicand = 4 * p.sigma_h * p.sigma_g - 4 * p.rho_gh
        if not radicand > 0:
            raise ValueError(
                f"arctan radicand 4 sigma_h sigma_g - 4 rho = {radicand:.6g} is not positive; "
                "the density is undefined for these parameters"
            )

    @property
    def _root(self) -> float:
        p = self.noise
        return float(np.sqrt(4 * p.sigma_h * p.sigma_g - 4 * p.rho_gh))

    def log_unnormalized(self, w):
        p = self.noise
        c = p.variance_at(w)
        dc = p.variance_derivative(w)
        kappa = p.kappa
        return -kappa * np.log(c) - kappa * 4 * p.rho_gh * np.arctan(dc / self._root)

    @cached_property
    def log_normalizer(self) -> float:
        # shift by the value at the center to keep the integrand O(1)
        shift = float(self.log_unnormalized(self.noise.center))
        f = lambda w: float(np.exp(self.log_unnormalized(w) - shift))  # noqa: E731
        c = self.noise.center
        if self.half_width is None:
            z = (integrate.quad(f, -np.inf, c, epsabs=0.0, epsrel=QUAD_TOL, limit=500)[0]
                 + integrate.quad(f, c, np.inf, epsabs=0.0, epsrel=QUAD_TOL, limit=500)[0])
        else:
            z = integrate.quad(f, c - self.half_width, c + self.half_width, epsabs=0.0, epsrel=QUAD_TOL, limit=500)[0]
        return float(np.log(z) + shift)

    def log_density(self, w):
        return self.log_unnormalized(w) - self.log_normalizer

    def density(self, w):
        return np.exp(self.log_density(w))


def density_full_1d(dist: FullStationary1D, w):
    return dist.density(w)


def _central4(y, h: float) -> np.ndarray:
    """Fourth-order central first derivative; result is two points shorter at each end."""
    return (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)


def fokker_planck_residual(density_fn, landscape, noise: ScalarNoiseParams, grid) -> float:
    """max |d/dw[p g] + (eta/2) d/dw[C dp/dw]| over the grid interior, over max p |g|.

    Uniform grids use nested fourth-order central stencils, so the residual
    covers grid[4:-4]; other grids fall back to second-order ``np.gradient``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 5:
        raise ValueError("grid needs at least 5 points")
    steps = np.diff(grid)
    if np.any(steps <= 0):
        raise ValueError("grid must be strictly increasing")
    p = np.asarray(density_fn(grid), dtype=float)
    g = np.asarray(landscape.gradient(grid[:, None]))[:, 0]
    c = noise.variance_at(grid)
    scale = float(np.max(np.abs(p * g)))
    if grid.size >= 9 and np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        h = steps[0]
        flux = (p * g)[2:-2] + 0.5 * noise.eta * c[2:-2] * _central4(p, h)
        resid = _central4(flux, h)
    else:
        flux = p * g + 0.5 * noise.eta * c * np.gradient(p, grid, edge_order=2)
        resid = np.gradient(flux, grid, edge_order=2)[1:-1]
    return float(np.max(np.abs(resid)) / scale)


def density_table_csv(dist, grid) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["w", "p"])
    for w, p in zip(np.asarray(grid, dtype=float), dist.density(grid)):
        writer.writerow([repr(float(w)), repr(float(p))])
    return buf.getvalue()
