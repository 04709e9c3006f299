"""Loss landscapes with exact gradients.

All landscapes accept a single point of shape ``(d,)`` or a stack of points of
shape ``(m, d)`` and return values of matching leading shape.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import optimize

from . import rng as rngmod


def _as_points(w, dim: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim == 0:
        w = w.reshape(1)
    if w.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {w.shape}")
    if w.ndim > 2:
        raise ValueError(f"expected shape (d,) or (m, d), got {w.shape}")
    return w


@dataclass(frozen=True, eq=False)
class QuadraticBasin:
    """L(w) = base_loss + 1/2 (w - center)^T H (w - center)."""

    center: np.ndarray
    hessian: np.ndarray
    base_loss: float = 0.0

    def __post_init__(self):
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        hessian = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        if hessian.shape != (center.size, center.size):
            raise ValueError(f"hessian shape {hessian.shape} does not match center of size {center.size}")
        scale = max(1.0, float(np.max(np.abs(hessian))))
        if np.max(np.abs(hessian - hessian.T)) > 1e-12 * scale:
            raise ValueError("hessian must be symmetric")
        hessian = 0.5 * (hessian + hessian.T)
        lo = float(np.linalg.eigvalsh(hessian)[0])
        if lo < -1e-12 * scale:
            raise ValueError(f"hessian must be positive semi-definite (smallest eigenvalue {lo:.3e})")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "hessian", hessian)
        object.__setattr__(self, "base_loss", float(self.base_loss))

    @property
    def dim(self) -> int:
        return self.center.size

    def loss(self, w):
        x = _as_points(w, self.dim) - self.center
        return self.base_loss + 0.5 * np.einsum("...i,ij,...j->...", x, self.hessian, x)

    def gradient(self, w):
        x = _as_points(w, self.dim) - self.center
        return x @ self.hessian

    def to_dict(self) -> dict:
        return {
            "kind": "quadratic",
            "center": self.center.tolist(),
            "hessian": self.hessian.tolist(),
            "base_loss": self.base_loss,
        }


@dataclass(frozen=True, eq=False)
class DoubleWell1D:
    """Piecewise-quadratic C^1 double well.

    Curvature ``curvature_a`` around the left minimum, ``-curvature_b_abs``
    around the saddle and ``curvature_c`` around the right minimum. The joins
    sit where value and slope of neighbouring parabolas agree, which fixes the
    saddle and right-minimum positions from the barrier heights.
    """

    min_a: float
    curvature_a: float
    curvature_b_abs: float
    barrier: float
    curvature_c: float | None = None
    barrier_c: float | None = None
    base_loss: float = 0.0

    def __post_init__(self):
        if self.curvature_c is None:
            object.__setattr__(self, "curvature_c", self.curvature_a)
        if self.barrier_c is None:
            object.__setattr__(self, "barrier_c", self.barrier)
        for name in ("curvature_a", "curvature_b_abs", "barrier", "curvature_c", "barrier_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def dim(self) -> int:
        return 1

    @cached_property
    def _geometry(self):
        ha, hb, hc = self.curvature_a, self.curvature_b_abs, self.curvature_c
        # left join: ha*p = hb*q and ha p^2/2 + hb q^2/2 = barrier
        p = np.sqrt(2 * self.barrier * hb / (ha * (ha + hb)))
        q = ha * p / hb
        b = self.min_a + p + q
        q2 = np.sqrt(2 * self.barrier_c * hc / (hb * (hc + hb)))
        p2 = hb * q2 / hc
        return self.min_a + p, b, b + q2, b + q2 + p2

    @property
    def saddle_b(self) -> float:
        return float(self._geometry[1])

    @property
    def min_c(self) -> float:
        return float(self._geometry[3])

    @property
    def joins(self) -> tuple[float, float]:
        g = self._geometry
        return float(g[0]), float(g[2])

    def _pieces(self, w):
        x = _as_points(w, 1)[..., 0]
        j1, b, j2, c = self._geometry
        left = x < j1
        right = x >= j2
        return x, left, right, b, c

    def loss(self, w):
        x, left, right, b, c = self._pieces(w)
        top = self.base_loss + self.barrier
        out = top - 0.5 * self.curvature_b_abs * (x - b) ** 2
        out = np.where(left, self.base_loss + 0.5 * self.curvature_a * (x - self.min_a) ** 2, out)
        out = np.where(right, top - self.barrier_c + 0.5 * self.curvature_c * (x - c) ** 2, out)
        return out

    def gradient(self, w):
        x, left, right, b, c = self._pieces(w)
        out = -self.curvature_b_abs * (x - b)
        out = np.where(left, self.curvature_a * (x - self.min_a), out)
        out = np.where(right, self.curvature_c * (x - c), out)
        return out[..., None]

    def to_dict(self) -> dict:
        return {
            "kind": "double_well",
            "min_a": self.min_a,
            "curvature_a": self.curvature_a,
            "curvature_b_abs": self.curvature_b_abs,
            "barrier": self.barrier,
            "curvature_c": self.curvature_c,
            "barrier_c": self.barrier_c,
            "base_loss": self.base_loss,
        }


class FiniteSumLoss:
    """Base for L(w) = scale * (1/n) sum_i l_i(w) with per-sample gradients."""

    data: np.ndarray
    scale: float

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def per_sample_gradients(self, w, idx=None) -> np.ndarray:
        """Scaled per-sample gradients, shape (k, d) for a single point w."""
        raise NotImplementedError

    def minibatch_gradient(self, w, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        """Mean gradient over ``batch_size`` indices drawn without replacement."""
        batch_size = int(batch_size)
        if not 1 <= batch_size <= self.n:
            raise ValueError(f"batch_size must lie in [1, {self.n}], got {batch_size}")
        w = _as_points(w, self.dim)
        if w.ndim != 1:
            raise ValueError("minibatch_gradient takes a single point")
        if batch_size == self.n:
            return self.gradient(w)
        idx = rng.choice(self.n, size=batch_size, replace=False)
        return self.per_sample_gradients(w, idx).mean(axis=0)


def _toy_terms(u):
    a = np.abs(u - 1.0)
    b = np.abs(u + 1.0)
    return a, b


@dataclass(frozen=True, eq=False)
class EmpiricalToyLoss(FiniteSumLoss):
    """L(w) = scale/n sum_i l(w - x_i) with l(w) = 15 sum_j |w_j - 1|^2.5 |w_j + 1|^3."""

    data: np.ndarray
    scale: float = 1.0
    data_seed: int | None = None
    data_std: float | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 1:
            raise ValueError(f"toy data must have shape (n, 2), got {data.shape}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "scale", float(self.scale))

    @classmethod
    def generate(cls, n: int = 1000, seed: int = 0, std: float = 0.01, scale: float = 1.0):
        """Draw x_i ~ N(0, std^2 I_2) from the toy-data stream of ``seed``."""
        data = rngmod.stream(seed, rngmod.TOY_DATA).normal(0.0, std, size=(int(n), 2))
        return cls(data, scale=scale, data_seed=int(seed), data_std=float(std))

    def with_scale(self, scale: float) -> "EmpiricalToyLoss":
        return EmpiricalToyLoss(self.data, scale=scale, data_seed=self.data_seed, data_std=self.data_std)

    @staticmethod
    def sample_loss(u):
        a, b = _toy_terms(np.asarray(u, dtype=float))
        # a * a * sqrt(a) is a**2.5 without the slow fractional power
        return 15.0 * np.sum(a * a * np.sqrt(a) * (b * b * b), axis=-1)

    @staticmethod
    def sample_gradient(u):
        u = np.asarray(u, dtype=float)
        a, b = _toy_terms(u)
        a15 = a * np.sqrt(a)
        b2 = b * b
        return 15.0 * a15 * b2 * (2.5 * np.sign(u - 1.0) * b + 3.0 * a * np.sign(u + 1.0))

    def loss(self, w):
        w = _as_points(w, 2)
        u = w[..., None, :] - self.data
        return self.scale * self.sample_loss(u).mean(axis=-1)

    def gradient(self, w):
        w = _as_points(w, 2)
        u = w[..., None, :] - self.data
        return self.scale * self.sample_gradient(u).mean(axis=-2)

    def per_sample_gradients(self, w, idx=None):
        w = _as_points(w, 2)
        data = self.data if idx is None else self.data[idx]
        return self.scale * self.sample_gradient(w - data)

    @cached_property
    def _minimum(self) -> np.ndarray:
        res = optimize.minimize(
            lambda w: float(self.loss(w)),
            np.array([1.0, 1.0]),
            jac=lambda w: self.gradient(w),
            method="BFGS",
            options={"gtol": 1e-12, "maxiter": 1000},
        )
        w = res.x
        # polish with Newton steps on the exact gradient
        for _ in range(20):
            h = 1e-6
            jac = np.column_stack([(self.gradient(w + h * e) - self.gradient(w - h * e)) / (2 * h) for e in np.eye(2)])
            w = w - np.linalg.solve(jac, self.gradient(w))
        return w

    def empirical_minimum(self) -> np.ndarray:
        """Minimum of L nearest (1, 1)."""
        return self._minimum.copy()

    def to_dict(self) -> dict:
        return {
            "kind": "toy",
            "n": self.n,
            "data_seed": self.data_seed,
            "data_std": self.data_std,
            "scale": self.scale,
        }

    def data_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x1", "x2"])
        for row in self.data:
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, scale: float = 1.0) -> "EmpiricalToyLoss":
        rows = list(csv.reader(io.StringIO(text)))
        if rows and rows[0] == ["x1", "x2"]:
            rows = rows[1:]
        return cls(np.array([[float(a), float(b)] for a, b in rows]), scale=scale)


@dataclass(frozen=True, eq=False)
class SampledQuadraticLoss(FiniteSumLoss):
    """Finite sum of diagonal quadratics l_i(w) = 1/2 sum_j a_ij (w_j - x_ij)^2.

    Minibatch gradients are exactly affine in w, so the gradient-noise
    covariance is an exact quadratic in w with known coefficients.
    """

    curvatures: np.ndarray
    data: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.curvatures, dtype=float))
        x = np.atleast_2d(np.asarray(self.data, dtype=float))
        if a.shape != x.shape:
            raise ValueError("curvatures and data must have the same shape (n, d)")
        object.__setattr__(self, "curvatures", a)
        object.__setattr__(self, "data", x)

    def loss(self, w):
        w = _as_points(w, self.dim)
        u = w[..., None, :] - self.data
        return self.scale * 0.5 * np.sum(self.curvatures * u**2, axis=-1).mean(axis=-1)

    def gradient(self, w):
        w = _as_points(w, self.dim)
        return self.scale * (self.curvatures * (w[..., None, :] - self.data)).mean(axis=-2)

    def per_sample_gradients(self, w, idx=None):
        w = _as_points(w, self.dim)
        sl = slice(None) if idx is None else idx
        return self.scale * self.curvatures[sl] * (w - self.data[sl])

    def minibatch_covariance(self, w, batch_size: int) -> np.ndarray:
        """Exact covariance of the minibatch gradient (sampling without replacement)."""
        g = self.per_sample_gradients(w)
        pop = np.cov(g.T, bias=True).reshape(self.dim, self.dim)
        n = self.n
        return pop * (n - batch_size) / (batch_size * (n - 1))


def loss(landscape, w):
    return landscape.loss(w)


def gradient(landscape, w):
    return landscape.gradient(w)


def minibatch_gradient(landscape: FiniteSumLoss, w, batch_size: int, rng: np.random.Generator):
    return landscape.minibatch_gradient(w, batch_size, rng)


def landscape_from_dict(entry: dict):
    """Inverse of ``to_dict`` for every landscape kind."""
    entry = dict(entry)
    kind = entry.pop("kind", None)
    if kind == "quadratic":
        return QuadraticBasin(**entry)
    if kind == "double_well":
        return DoubleWell1D(**entry)
    if kind == "toy":
        return EmpiricalToyLoss.generate(
            n=entry.get("n", 1000),
            seed=entry.get("data_seed", 0),
            std=entry.get("data_std", 0.01),
            scale=entry.get("scale", 1.0),
        )
    raise ValueError(f"unknown landscape kind {kind!r}")
