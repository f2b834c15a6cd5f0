"""Gaussian kernel, Normal-inverse-gamma base measure and stick-breaking helpers.

The kernel is ``k(y | mu, sigma2) = N(y; mu, sigma2)``.  The base measure is
the conjugate family

    sigma2 ~ InvGamma(shape, rate),    mu | sigma2 ~ N(mu0, lam * sigma2)

so all integrals of products of kernels against the base are available in
closed form.  Most functions accept sufficient statistics ``(n, sum, sumsq)``
so that the sampler never has to re-scan observations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln, ndtr

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianParam:
    mu: float
    sigma2: float

    def __post_init__(self):
        if not (self.sigma2 > 0.0 and math.isfinite(self.sigma2)):
            raise ValueError(f"sigma2 must be positive and finite, got {self.sigma2}")
        if not math.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu}")


@dataclass(frozen=True)
class NIGBase:
    """Normal-inverse-gamma measure on (mu, sigma2).

    ``lam`` scales the conditional variance of ``mu``: ``Var(mu | sigma2) = lam * sigma2``.
    """

    mu0: float = 0.0
    lam: float = 10.0
    shape: float = 1.0
    rate: float = 1.0

    def __post_init__(self):
        for name in ("lam", "shape", "rate"):
            v = getattr(self, name)
            if not (v > 0.0 and math.isfinite(v)):
                raise ValueError(f"{name} must be strictly positive, got {v}")
        if not math.isfinite(self.mu0):
            raise ValueError("mu0 must be finite")

    def posterior(self, n: float, s1: float, s2: float) -> tuple[float, float, float, float]:
        """Posterior (mu_n, k_n, shape_n, rate_n) given sufficient statistics.

        ``k_n`` is the precision multiplier: ``mu | sigma2 ~ N(mu_n, sigma2 / k_n)``.
        """
        k0 = 1.0 / self.lam
        if n <= 0:
            return self.mu0, k0, self.shape, self.rate
        mean = s1 / n
        ss = max(s2 - s1 * mean, 0.0)
        kn = k0 + n
        mun = (k0 * self.mu0 + s1) / kn
        an = self.shape + 0.5 * n
        bn = self.rate + 0.5 * ss + 0.5 * k0 * n * (mean - self.mu0) ** 2 / kn
        return mun, kn, an, bn

    def log_marginal_stats(self, n: float, s1: float, s2: float) -> float:
        """log of int prod_j N(y_j; mu, sigma2) dNIG(mu, sigma2) from sufficient stats."""
        if n <= 0:
            return 0.0
        k0 = 1.0 / self.lam
        _, kn, an, bn = self.posterior(n, s1, s2)
        return (
            -0.5 * n * LOG_2PI
            + 0.5 * math.log(k0 / kn)
            + self.shape * math.log(self.rate)
            - an * math.log(bn)
            + math.lgamma(an)
            - math.lgamma(self.shape)
        )

    def log_predictive(self, y: np.ndarray | float) -> np.ndarray | float:
        """Vectorised single-point marginal: a Student-t with 2*shape degrees of freedom."""
        y = np.asarray(y, dtype=float)
        df = 2.0 * self.shape
        scale2 = self.rate * (1.0 + self.lam) / self.shape
        z2 = (y - self.mu0) ** 2 / scale2
        out = (
            gammaln(0.5 * (df + 1.0))
            - gammaln(0.5 * df)
            - 0.5 * math.log(df * math.pi * scale2)
            - 0.5 * (df + 1.0) * np.log1p(z2 / df)
        )
        return out if out.ndim else float(out)

    def log_density(self, mu: float, sigma2: float) -> float:
        """Log density of the base measure at (mu, sigma2) w.r.t. Lebesgue on R x R+."""
        a, b = self.shape, self.rate
        log_ig = a * math.log(b) - math.lgamma(a) - (a + 1.0) * math.log(sigma2) - b / sigma2
        v = self.lam * sigma2
        log_n = -0.5 * (LOG_2PI + math.log(v)) - 0.5 * (mu - self.mu0) ** 2 / v
        return log_ig + log_n

    def draw_stats(self, n: float, s1: float, s2: float, rng: np.random.Generator) -> tuple[float, float]:
        mun, kn, an, bn = self.posterior(n, s1, s2)
        sigma2 = bn / rng.gamma(an)
        mu = mun + math.sqrt(sigma2 / kn) * rng.standard_normal()
        return mu, sigma2

    def draw_prior(self, size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        sigma2 = self.rate / rng.gamma(self.shape, size=size)
        mu = self.mu0 + np.sqrt(self.lam * sigma2) * rng.standard_normal(size)
        return mu, sigma2


@dataclass
class FiniteMixture:
    weights: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    # Truncation bound pi_0 * eps_M reached when the mixture was drawn (0 for exact mixtures).
    trunc_error: float = field(default=0.0)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma2 = np.asarray(self.sigma2, dtype=float)
        if not (self.weights.shape == self.mu.shape == self.sigma2.shape) or self.weights.ndim != 1:
            raise ValueError("weights, mu and sigma2 must be 1-d arrays of equal length")
        if self.weights.size == 0:
            raise ValueError("a mixture needs at least one component")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        if np.any(~(self.sigma2 > 0)):
            raise ValueError("component variances must be positive")

    @classmethod
    def from_components(cls, weights: Sequence[float], comps: Sequence[GaussianParam]) -> "FiniteMixture":
        w = np.asarray(weights, dtype=float)
        return cls(w / w.sum(), [c.mu for c in comps], [c.sigma2 for c in comps])

    @classmethod
    def single(cls, mu: float, sigma2: float) -> "FiniteMixture":
        return cls(np.ones(1), [mu], [sigma2])

    def __len__(self):
        return self.weights.size

    def logpdf(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            comp = normal_logpdf(y[..., None], self.mu, self.sigma2) + np.log(self.weights)
        top = comp.max(axis=-1, keepdims=True)
        top = np.where(np.isfinite(top), top, 0.0)
        return np.log(np.exp(comp - top).sum(axis=-1)) + top[..., 0]

    def pdf(self, y) -> np.ndarray:
        return np.exp(self.logpdf(y))

    def cdf(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        z = (y[..., None] - self.mu) / np.sqrt(self.sigma2)
        return ndtr(z) @ self.weights

    def to_dict(self) -> dict:
        return {"weight": self.weights.tolist(), "mu": self.mu.tolist(), "sigma2": self.sigma2.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FiniteMixture":
        w = np.asarray(d["weight"], dtype=float)
        return cls(w / w.sum(), d["mu"], d["sigma2"])


def normal_logpdf(y, mu, sigma2):
    return -0.5 * (LOG_2PI + np.log(sigma2)) - 0.5 * (y - mu) ** 2 / sigma2


def _as_points(points: Iterable[float]) -> np.ndarray:
    y = np.asarray(list(points) if not isinstance(points, np.ndarray) else points, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("need at least one point")
    if not np.all(np.isfinite(y)):
        raise ValueError("points must be finite")
    return y


def nig_log_marginal(points: Iterable[float], base: NIGBase) -> float:
    y = _as_points(points)
    return base.log_marginal_stats(y.size, float(y.sum()), float(y @ y))


def nig_marginal_density(points: Iterable[float], base: NIGBase) -> float:
    """Joint marginal density of ``points`` with the kernel parameters integrated out."""
    return math.exp(nig_log_marginal(points, base))


def nig_posterior_draw(points: Iterable[float], base: NIGBase, rng: np.random.Generator) -> GaussianParam:
    y = np.asarray(list(points) if not isinstance(points, np.ndarray) else points, dtype=float).ravel()
    if y.size and not np.all(np.isfinite(y)):
        raise ValueError("points must be finite")
    mu, sigma2 = base.draw_stats(y.size, float(y.sum()), float(y @ y), rng)
    return GaussianParam(mu, sigma2)


def stick_breaking_weights(concentration: float, count: int, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """First ``count`` stick-breaking weights and the leftover mass."""
    if concentration <= 0:
        raise ValueError("concentration must be positive")
    if count < 1:
        raise ValueError("count must be >= 1")
    betas = rng.beta(1.0, concentration, size=count)
    # Keep every weight strictly inside (0, 1) even when the beta draw rounds to an endpoint.
    betas = np.clip(betas, 1e-300, 1.0 - 1e-16)
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - betas)))
    weights = betas * remaining[:-1]
    residual = float(remaining[-1])
    return weights, residual


def crp_cluster_count_pmf(n: int, concentration: float) -> np.ndarray:
    """P(K_n = t), t = 1..n, for the number of tables among n CRP customers."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if concentration <= 0:
        raise ValueError("concentration must be positive")
    p = np.zeros(n + 1)
    p[1] = 1.0
    for m in range(1, n):
        stay = m / (m + concentration)
        new = concentration / (m + concentration)
        nxt = np.zeros(n + 1)
        nxt[1:] = p[1:] * stay
        nxt[2:] += p[1:-1] * new
        p = nxt
    return p[1:]


def normal_product_integral(p: GaussianParam, q: GaussianParam) -> float:
    """int N(y; p) N(y; q) dy = N(mu_p; mu_q, sigma2_p + sigma2_q)."""
    return math.exp(float(normal_logpdf(p.mu, q.mu, p.sigma2 + q.sigma2)))


def _cross_term(a: FiniteMixture, b: FiniteMixture) -> float:
    gram = np.exp(normal_logpdf(a.mu[:, None], b.mu[None, :], a.sigma2[:, None] + b.sigma2[None, :]))
    return float(a.weights @ gram @ b.weights)


def mixture_l2_distance_sq(a: FiniteMixture, b: FiniteMixture) -> float:
    """Squared L2 distance between two Gaussian mixture densities, in closed form."""
    d2 = _cross_term(a, a) + _cross_term(b, b) - 2.0 * _cross_term(a, b)
    return max(d2, 0.0)
