"""Closed forms against independent Monte Carlo: the oracle suite behind ``semihdp oracle-check``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr

from . import theory
from .distributions import FiniteMixture, mixture_l2_distance_sq

KAPPAS = (0.0, 0.5, 0.9)
GAMMAS = (0.5, 1.0, 2.0)
# Cells (-inf, 0], (0, 1], (1, inf) under N(0, 1).
CELL_PROBS = (0.5, float(ndtr(1.0) - 0.5), float(1.0 - ndtr(1.0)))


@dataclass
class OracleResult:
    name: str
    passed: bool
    expected: float
    observed: float
    tolerance: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: expected {self.expected:.6g}, observed {self.observed:.6g}, tol {self.tolerance:.3g}"


def _within(name, expected, observed, tol) -> OracleResult:
    return OracleResult(name, abs(observed - expected) <= tol, float(expected), float(observed), float(tol))


def check_tie_probability(n_sims: int = 100_000, n_se: float = 3.0, seed: int = 1) -> list[OracleResult]:
    rng = np.random.default_rng(seed)
    out = []
    for kappa in KAPPAS:
        for gamma in GAMMAS:
            exact = theory.tie_probability(kappa, gamma)
            p, _ = theory.simulate_tie_frequency(kappa, gamma, n_sims, rng)
            se = math.sqrt(exact * (1 - exact) / n_sims)
            out.append(_within(f"tie kappa={kappa} gamma={gamma}", exact, p, n_se * se))
    return out


def check_covariance(n_draws: int = 10_000, n_se: float = 3.0, seed: int = 2) -> list[OracleResult]:
    rng = np.random.default_rng(seed)
    p = np.array(CELL_PROBS)
    out = []
    for kappa in KAPPAS:
        for gamma in GAMMAS:
            F1, F2 = theory.simulate_prior_cell_masses(kappa, 1.0, gamma, p, n_draws, rng)
            for a in range(3):
                for b in range(3):
                    exact = theory.semihdp_covariance(kappa, gamma, p[a], p[b], p[a] if a == b else 0.0)
                    cov, se = theory.mc_covariance(F1[:, a], F2[:, b])
                    out.append(_within(f"cov kappa={kappa} gamma={gamma} A={a} B={b}", exact, cov, n_se * se))
    return out


def check_moments(n_draws: int = 10_000, n_se: float = 3.0, seed: int = 3, alpha: float = 1.0) -> list[OracleResult]:
    rng = np.random.default_rng(seed)
    p = np.array(CELL_PROBS)
    out = []
    for kappa in KAPPAS:
        for gamma in GAMMAS:
            F1, _ = theory.simulate_prior_cell_masses(kappa, alpha, gamma, p, n_draws, rng)
            for a in range(3):
                exact1 = theory.semihdp_moment(1, kappa, alpha, gamma, p[a])
                out.append(_within(f"moment n=1 kappa={kappa} gamma={gamma} A={a}", p[a], exact1, 0.0))
                for n in (2, 3):
                    exact = theory.semihdp_moment(n, kappa, alpha, gamma, p[a])
                    m, se = theory.mc_mean(F1[:, a] ** n)
                    out.append(_within(f"moment n={n} kappa={kappa} gamma={gamma} A={a}", exact, m, n_se * se))
    return out


def check_peppf(n_sims: int = 1_000_000, n_se: float = 3.0, seed: int = 4, alpha: float = 1.0) -> list[OracleResult]:
    rng = np.random.default_rng(seed)
    eta = (0.5, 0.5)
    pi1 = theory.prior_same_restaurant_prob(eta)
    out = []
    for n in (1, 2):
        table = theory.peppf_table(n, n, alpha, pi1)
        out.append(_within(f"peppf N={n} total mass", 1.0, sum(table.values()), 1e-10))
        tallies = theory.simulate_partition_tallies(n, n, 1.0, alpha, 1.0, eta, n_sims, rng)
        for lab, exact in table.items():
            freq = tallies.get(lab, 0) / n_sims
            se = math.sqrt(exact * (1 - exact) / n_sims)
            out.append(_within(f"peppf N={n} config={''.join(map(str, lab))}", exact, freq, n_se * se))
    return out


def random_mixture(rng: np.random.Generator, max_k: int = 4) -> FiniteMixture:
    k = int(rng.integers(1, max_k + 1))
    return FiniteMixture(rng.dirichlet(np.ones(k)), rng.normal(0.0, 2.0, k), rng.uniform(0.05, 2.0, k) ** 2)


def l2_by_quadrature(a: FiniteMixture, b: FiniteMixture) -> float:
    lo = min(np.min(a.mu - 12 * np.sqrt(a.sigma2)), np.min(b.mu - 12 * np.sqrt(b.sigma2)))
    hi = max(np.max(a.mu + 12 * np.sqrt(a.sigma2)), np.max(b.mu + 12 * np.sqrt(b.sigma2)))
    pts = np.concatenate((a.mu, b.mu))
    val, _ = quad(lambda x: float((a.pdf(x) - b.pdf(x)) ** 2), lo, hi, points=sorted(pts), limit=500,
                  epsabs=1e-12, epsrel=1e-10)
    return val


def check_l2(n_pairs: int = 100, tol: float = 1e-6, seed: int = 5) -> list[OracleResult]:
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_pairs):
        a, b = random_mixture(rng), random_mixture(rng)
        out.append(_within(f"l2 pair {k}", l2_by_quadrature(a, b), mixture_l2_distance_sq(a, b), tol))
    return out


CHECKS = {
    "tie": check_tie_probability,
    "covariance": check_covariance,
    "moments": check_moments,
    "peppf": check_peppf,
    "l2": check_l2,
}


def run_all(names=None, scale: float = 1.0) -> dict[str, list[OracleResult]]:
    """Run the named checks; ``scale`` shrinks the Monte Carlo budgets for quick runs."""
    names = list(CHECKS) if names is None else list(names)
    out = {}
    for name in names:
        fn = CHECKS[name]
        if name == "l2":
            out[name] = fn()
        elif name in ("tie", "peppf"):
            base = 100_000 if name == "tie" else 1_000_000
            out[name] = fn(n_sims=max(1000, int(base * scale)))
        else:
            out[name] = fn(n_draws=max(1000, int(10_000 * scale)))
    return out
