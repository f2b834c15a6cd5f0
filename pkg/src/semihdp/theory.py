"""Closed-form prior quantities and independent Monte Carlo simulators.

The closed forms assume ``G00 = G0``.  The simulators are vectorised over
replicates and never touch the sampler code, so they serve as an independent
check on both the formulas and the sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Iterator, Sequence

import numpy as np
from scipy.special import comb, gammaln

from .distributions import crp_cluster_count_pmf


def log_eppf_dp(frequencies: Sequence[int], alpha: float) -> float:
    n = np.asarray(frequencies, dtype=float)
    if n.size == 0:
        raise ValueError("need at least one block")
    if np.any(n < 1):
        raise ValueError("block sizes must be >= 1")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return float(n.size * math.log(alpha) + gammaln(alpha) - gammaln(alpha + n.sum()) + gammaln(n).sum())


def eppf_dp(frequencies: Sequence[int], alpha: float) -> float:
    """Probability of one specific set partition with block sizes ``frequencies`` under a DP."""
    return math.exp(log_eppf_dp(frequencies, alpha))


@dataclass(frozen=True)
class PEPPFInput:
    n1: tuple[int, ...]
    n2: tuple[int, ...]
    q1: tuple[int, ...] = ()
    q2: tuple[int, ...] = ()
    alpha: float = 1.0
    pi1: float = 0.5

    def __post_init__(self):
        for name in ("n1", "n2", "q1", "q2"):
            v = tuple(int(x) for x in getattr(self, name))
            object.__setattr__(self, name, v)
            if any(x < 1 for x in v):
                raise ValueError(f"{name}: frequencies must be >= 1")
        if len(self.q1) != len(self.q2):
            raise ValueError("q1 and q2 must have the same length")
        if not 0.0 <= self.pi1 <= 1.0:
            raise ValueError("pi1 must lie in [0, 1]")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not (self.n1 or self.q1) or not (self.n2 or self.q2):
            raise ValueError("each group needs at least one observation")


def peppf_degenerate(p: PEPPFInput) -> float:
    """Joint partition law of two samples when the shared area is switched off (kappa = 1)."""
    shared = [a + b for a, b in zip(p.q1, p.q2)]
    out = p.pi1 * eppf_dp(list(p.n1) + list(p.n2) + shared, p.alpha)
    if not p.q1:
        out += (1.0 - p.pi1) * eppf_dp(p.n1, p.alpha) * eppf_dp(p.n2, p.alpha)
    return out


def semihdp_covariance(kappa: float, gamma: float, g0_A: float, g0_B: float, g0_AB: float) -> float:
    """cov(F_1(A), F_2(B)) for two different restaurants."""
    for name, v in (("g0_A", g0_A), ("g0_B", g0_B), ("g0_AB", g0_AB)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    if g0_AB > min(g0_A, g0_B) + 1e-15:
        raise ValueError("G0(A and B) cannot exceed G0(A) or G0(B)")
    if not 0.0 <= kappa <= 1.0 or gamma <= 0:
        raise ValueError("need kappa in [0, 1] and gamma > 0")
    return (1.0 - kappa) ** 2 / (1.0 + gamma) * (g0_AB - g0_A * g0_B)


def semihdp_moment(n: int, kappa: float, alpha: float, gamma: float, g0_A: float) -> float:
    """E[F_1(A)^n].

    Given the base, the ``n`` draws sit at ``t`` tables whose values are iid
    from it; each of those values comes from ``G0`` with probability kappa and
    otherwise from the shared DP, whose ``h`` draws form ``m`` clusters.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return float(g0_A)
    p_tables = crp_cluster_count_pmf(n, alpha)
    inner = [np.array([1.0])] + [np.concatenate(([0.0], crp_cluster_count_pmf(h, gamma))) for h in range(1, n + 1)]
    total = 0.0
    for t in range(1, n + 1):
        acc = 0.0
        for h in range(t + 1):
            pk = inner[h]
            shared = float(sum(pk[m] * g0_A**m for m in range(h + 1)))
            acc += comb(t, h, exact=True) * kappa ** (t - h) * (1.0 - kappa) ** h * g0_A ** (t - h) * shared
        total += p_tables[t - 1] * acc
    return total


def tie_probability(kappa: float, gamma: float) -> float:
    """P(theta_11 = theta_21) when the two groups are in different restaurants."""
    if not 0.0 <= kappa <= 1.0 or gamma <= 0:
        raise ValueError("need kappa in [0, 1] and gamma > 0")
    return (1.0 - kappa) ** 2 / (1.0 + gamma)


def prior_same_restaurant_prob(eta: Sequence[float]) -> float:
    """P(c_1 = c_2) with omega ~ Dirichlet(eta) integrated out."""
    e = np.asarray(eta, dtype=float)
    s = e.sum()
    return float(np.sum(e * (e + 1.0)) / (s * (s + 1.0)))


# ---------------------------------------------------------------------------
# enumeration of joint partitions of two samples


def set_partitions(n: int) -> Iterator[tuple[int, ...]]:
    """Restricted growth strings of length ``n`` (first-appearance labels)."""
    if n == 0:
        yield ()
        return

    def rec(prefix: list[int], top: int):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for b in range(top + 2):
            yield from rec(prefix + [b], max(top, b))

    yield from rec([0], 0)


def configuration_to_peppf(labels: Sequence[int], n1: int, alpha: float, pi1: float) -> PEPPFInput:
    """Split a labelling of ``n1 + n2`` customers (group 1 first) into private and shared frequencies."""
    labels = list(labels)
    g1, g2 = labels[:n1], labels[n1:]
    fr1, fr2, q1, q2 = [], [], [], []
    for b in sorted(set(labels)):
        a, c = g1.count(b), g2.count(b)
        if a and c:
            q1.append(a)
            q2.append(c)
        elif a:
            fr1.append(a)
        else:
            fr2.append(c)
    return PEPPFInput(tuple(fr1), tuple(fr2), tuple(q1), tuple(q2), alpha, pi1)


def peppf_table(n1: int, n2: int, alpha: float, pi1: float) -> dict[tuple[int, ...], float]:
    return {
        lab: peppf_degenerate(configuration_to_peppf(lab, n1, alpha, pi1)) for lab in set_partitions(n1 + n2)
    }


# ---------------------------------------------------------------------------
# Monte Carlo simulators


def _canonical_rows(labels: np.ndarray) -> np.ndarray:
    """First-appearance relabelling of every row."""
    out = np.empty_like(labels)
    for i, row in enumerate(labels):
        seen: dict[int, int] = {}
        out[i] = [seen.setdefault(int(x), len(seen)) for x in row]
    return out


def simulate_food_court(
    sizes: Sequence[int],
    c: np.ndarray,
    kappa: float,
    alpha: float,
    gamma: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Value labels of every customer under the prior seating process.

    ``c`` has shape ``(n_sims, n_groups)``.  Returns an ``(n_sims, sum(sizes))``
    integer array; equal labels mean equal atom values.  Private values get
    fresh labels because ``G0`` is diffuse.
    """
    c = np.asarray(c)
    n_sims, I = c.shape
    N = int(sum(sizes))
    rows = np.arange(n_sims)
    tab_n = np.zeros((n_sims, I, N))
    tab_v = np.zeros((n_sims, I, N), dtype=np.int64)
    n_tab = np.zeros((n_sims, I), dtype=np.int64)
    tau_m = np.zeros((n_sims, N))
    n_tau = np.zeros(n_sims, dtype=np.int64)
    fresh = np.full(n_sims, N + 1, dtype=np.int64)  # private labels start after tau labels
    out = np.empty((n_sims, N), dtype=np.int64)
    col = 0
    for g, ng in enumerate(sizes):
        r = c[:, g]
        for _ in range(ng):
            counts = tab_n[rows, r]
            tot = counts.sum(axis=1)
            u = rng.random(n_sims) * (tot + alpha)
            cum = np.cumsum(counts, axis=1)
            pick = (cum <= u[:, None]).sum(axis=1)
            new = pick >= n_tab[rows, r]
            val = np.empty(n_sims, dtype=np.int64)
            old = ~new
            val[old] = tab_v[rows[old], r[old], pick[old]]
            idx = rows[new]
            if idx.size:
                private = rng.random(idx.size) < kappa
                pv = idx[private]
                val_new = np.empty(idx.size, dtype=np.int64)
                val_new[private] = fresh[pv]
                fresh[pv] += 1
                sv = idx[~private]
                if sv.size:
                    m = tau_m[sv]
                    um = rng.random(sv.size) * (m.sum(axis=1) + gamma)
                    k = (np.cumsum(m, axis=1) <= um[:, None]).sum(axis=1)
                    brand = k >= n_tau[sv]
                    k = np.where(brand, n_tau[sv], k)
                    n_tau[sv] += brand
                    tau_m[sv, k] += 1
                    val_new[~private] = k
                val[new] = val_new
                slot = n_tab[idx, r[new]]
                tab_v[idx, r[new], slot] = val_new
                n_tab[idx, r[new]] += 1
                pick[new] = slot
            tab_n[rows, r, pick] += 1
            out[:, col] = val
            col += 1
    return out


def draw_prior_labels(eta: Sequence[float], n_sims: int, rng: np.random.Generator) -> np.ndarray:
    """Restaurant labels from omega ~ Dirichlet(eta), c_i ~ Cat(omega)."""
    eta = np.asarray(eta, dtype=float)
    omega = rng.dirichlet(eta, size=n_sims)
    cdf = np.cumsum(omega, axis=1)
    u = rng.random((n_sims, eta.size))
    return np.minimum((cdf[:, None, :] <= u[:, :, None]).sum(axis=2), eta.size - 1)


def simulate_tie_frequency(kappa: float, gamma: float, n_sims: int, rng: np.random.Generator, alpha: float = 1.0):
    """Empirical P(theta_11 = theta_21) for groups in different restaurants, with its MC standard error."""
    c = np.tile([0, 1], (n_sims, 1))
    lab = simulate_food_court((1, 1), c, kappa, alpha, gamma, rng)
    tie = lab[:, 0] == lab[:, 1]
    p = tie.mean()
    return float(p), float(math.sqrt(max(p * (1 - p), 1e-300) / n_sims))


def simulate_partition_tallies(
    n1: int, n2: int, kappa: float, alpha: float, gamma: float, eta: Sequence[float], n_sims: int, rng: np.random.Generator
) -> dict[tuple[int, ...], int]:
    c = draw_prior_labels(eta, n_sims, rng)
    lab = simulate_food_court((n1, n2), c, kappa, alpha, gamma, rng)
    uniq, counts = np.unique(_canonical_rows(lab), axis=0, return_counts=True)
    return {tuple(int(x) for x in u): int(k) for u, k in zip(uniq, counts)}


def _truncation_length(conc: float, eps: float) -> int:
    return max(1, int(math.ceil(math.log(eps) / math.log(conc / (1.0 + conc)))))


def _stick(conc: float, n_draws: int, L: int, rng: np.random.Generator) -> np.ndarray:
    """Stick-breaking weights with the leftover mass placed on a final extra atom."""
    b = rng.beta(1.0, conc, size=(n_draws, L))
    rem = np.cumprod(1.0 - b, axis=1)
    w = b * np.concatenate((np.ones((n_draws, 1)), rem[:, :-1]), axis=1)
    return np.concatenate((w, rem[:, -1:]), axis=1)


def _cells_from(probs: np.ndarray, shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """Categorical cell indices; ``probs`` is (n_draws, n_cells)."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(shape) * cdf[:, -1:]
    return (cdf[:, None, :] <= u[:, :, None]).sum(axis=2).clip(max=probs.shape[1] - 1)


def simulate_prior_cell_masses(
    kappa: float,
    alpha: float,
    gamma: float,
    cell_probs: Sequence[float],
    n_draws: int,
    rng: np.random.Generator,
    trunc_eps: float = 1e-10,
) -> tuple[np.ndarray, np.ndarray]:
    """Masses (F_1(A_j), F_2(A_j)) of a partition {A_j} under truncated prior draws.

    ``G0`` is replaced by a discrete measure with one atom per cell, so that
    only the cell of each atom matters.  Returns two ``(n_draws, n_cells)`` arrays.
    """
    p = np.asarray(cell_probs, dtype=float)
    p = p / p.sum()
    J = p.size
    Lg = _truncation_length(gamma, trunc_eps)
    wg = _stick(gamma, n_draws, Lg, rng)
    cg = _cells_from(np.tile(p, (n_draws, 1)), wg.shape, rng)
    gt = np.zeros((n_draws, J))
    for j in range(J):
        gt[:, j] = (wg * (cg == j)).sum(axis=1)
    base = kappa * p[None, :] + (1.0 - kappa) * gt
    La = _truncation_length(alpha, trunc_eps)
    out = []
    for _ in range(2):
        wf = _stick(alpha, n_draws, La, rng)
        cf = _cells_from(base, wf.shape, rng)
        F = np.zeros((n_draws, J))
        for j in range(J):
            F[:, j] = (wf * (cf == j)).sum(axis=1)
        out.append(F)
    return out[0], out[1]


def mc_mean(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def mc_covariance(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Sample covariance with the standard error of the product-of-deviations mean."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    prod_dev = (x - x.mean()) * (y - y.mean())
    n = x.size
    return float(prod_dev.sum() / (n - 1)), float(prod_dev.std(ddof=1) / math.sqrt(n))


def grid(values_a: Sequence[float], values_b: Sequence[float]):
    return list(product(values_a, values_b))


def food_court_partition_probs(
    sizes: Sequence[int], c: Sequence[int], kappa: float, alpha: float, gamma: float
) -> dict[tuple[int, ...], float]:
    """Exact prior law of the value partition of a few customers, by enumerating seating paths.

    Customers arrive group by group; the result maps first-appearance labels to probabilities.
    """
    order = [g for g, n in enumerate(sizes) for _ in range(n)]
    out: dict[tuple[int, ...], float] = {}

    def rec(j, tables, taus, labels, n_priv, prob):
        if prob == 0.0:
            return
        if j == len(order):
            key = tuple(canonical_labels(labels))
            out[key] = out.get(key, 0.0) + prob
            return
        r = c[order[j]]
        mine = tables.get(r, [])
        tot = sum(n for n, _ in mine)
        for q, (n, v) in enumerate(mine):
            new_tables = dict(tables)
            new_tables[r] = mine[:q] + [(n + 1, v)] + mine[q + 1 :]
            rec(j + 1, new_tables, taus, labels + [v], n_priv, prob * n / (tot + alpha))
        p_new = prob * alpha / (tot + alpha)
        # private value: a fresh label
        v = ("p", n_priv)
        rec(j + 1, {**tables, r: mine + [(1, v)]}, taus, labels + [v], n_priv + 1, p_new * kappa)
        mtot = sum(taus)
        for k, m in enumerate(taus):
            v = ("t", k)
            new_taus = taus[:k] + (m + 1,) + taus[k + 1 :]
            rec(j + 1, {**tables, r: mine + [(1, v)]}, new_taus, labels + [v], n_priv,
                p_new * (1 - kappa) * m / (mtot + gamma))
        v = ("t", len(taus))
        rec(j + 1, {**tables, r: mine + [(1, v)]}, taus + (1,), labels + [v], n_priv,
            p_new * (1 - kappa) * gamma / (mtot + gamma))

    rec(0, {}, (), [], 0, 1.0)
    return out


def canonical_labels(labels: Sequence) -> list[int]:
    seen: dict = {}
    return [seen.setdefault(x, len(seen)) for x in labels]
