"""Posterior summaries computed from chain records."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .distributions import FiniteMixture
from .state import ChainRecord, canonical_partition, format_partition


def _require(records: Sequence[ChainRecord]):
    if len(records) == 0:
        raise ValueError("no records to summarise")


def same_restaurant_prob(records: Sequence[ChainRecord], i: int, j: int) -> float:
    _require(records)
    return float(np.mean([r.c[i] == r.c[j] for r in records]))


def bayes_factor_pair(records: Sequence[ChainRecord], i: int, j: int, prior_odds: float = 1.0) -> float:
    """Bayes factor of c_i = c_j against c_i != c_j."""
    if i == j:
        raise ValueError("need two distinct groups")
    if prior_odds <= 0:
        raise ValueError("prior_odds must be positive")
    return bayes_factor_from_prob(same_restaurant_prob(records, i, j), prior_odds)


def bayes_factor_from_prob(p: float, prior_odds: float = 1.0) -> float:
    if p >= 1.0:
        return math.inf
    if p <= 0.0:
        return 0.0
    return (p / (1.0 - p)) / prior_odds


@dataclass
class PartitionPosterior:
    probs: dict[tuple[int, ...], float]
    n_samples: int

    def prob(self, partition: Sequence[int]) -> float:
        return self.probs.get(canonical_partition(partition), 0.0)

    def most_likely(self, k: int | None = None) -> list[tuple[tuple[int, ...], float]]:
        items = sorted(self.probs.items(), key=lambda kv: (-kv[1], kv[0]))
        return items if k is None else items[:k]


def partition_posterior(records: Sequence[ChainRecord]) -> PartitionPosterior:
    _require(records)
    counts = Counter(canonical_partition(r.c) for r in records)
    n = len(records)
    return PartitionPosterior({p: k / n for p, k in counts.items()}, n)


def similarity_matrix(records: Sequence[ChainRecord]) -> np.ndarray:
    _require(records)
    c = np.array([r.c for r in records])
    I = c.shape[1]
    S = np.zeros((I, I))
    for lab in np.unique(c):
        z = (c == lab).astype(float)
        S += z.T @ z
    S /= c.shape[0]
    np.fill_diagonal(S, 1.0)
    return S


def _coclustering(p: Sequence[int]) -> np.ndarray:
    p = np.asarray(p)
    return p[:, None] == p[None, :]


def binder_loss(p: Sequence[int], sim: np.ndarray) -> float:
    """Posterior expected Binder loss (equal costs) of partition ``p``."""
    iu = np.triu_indices(sim.shape[0], 1)
    return float(np.abs(_coclustering(p)[iu] - sim[iu]).sum())


def _entropy(counts: np.ndarray, n: int) -> float:
    q = counts[counts > 0] / n
    return float(-(q * np.log(q)).sum())


def variation_of_information(a: Sequence[int], b: Sequence[int]) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    n = a.size
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    joint = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(joint, (ia, ib), 1)
    ha = _entropy(joint.sum(axis=1), n)
    hb = _entropy(joint.sum(axis=0), n)
    hab = _entropy(joint.ravel(), n)
    return max(2.0 * hab - ha - hb, 0.0)


def point_partition(records: Sequence[ChainRecord], loss: str = "binder") -> tuple[int, ...]:
    """Visited partition minimising the Monte Carlo posterior expected loss."""
    _require(records)
    post = partition_posterior(records)
    # First-occurrence order makes ties deterministic.
    visited = list(dict.fromkeys(canonical_partition(r.c) for r in records))
    if loss == "binder":
        sim = similarity_matrix(records)
        scores = [binder_loss(p, sim) for p in visited]
    elif loss == "vi":
        scores = [sum(w * variation_of_information(p, q) for q, w in post.probs.items()) for p in visited]
    else:
        raise ValueError("loss must be 'binder' or 'vi'")
    return visited[int(np.argmin(scores))]


# ---------------------------------------------------------------------------
# densities


@dataclass
class DensitySummary:
    grid: np.ndarray
    mean: np.ndarray
    lower95: np.ndarray
    upper95: np.ndarray


def rescale_mixture(mix: FiniteMixture, shift: float, scale: float) -> FiniteMixture:
    """Law of ``shift + scale * T`` when T follows ``mix``."""
    return FiniteMixture(mix.weights, shift + scale * mix.mu, scale * scale * mix.sigma2, mix.trunc_error)


def density_summary(
    records: Sequence[ChainRecord], group: int, grid: Sequence[float], shift: float = 0.0, scale: float = 1.0
) -> DensitySummary:
    """Pointwise posterior mean and 95% band of group ``group``'s density on ``grid``.

    ``shift``/``scale`` map the modelled (standardised) scale back to the
    original one: y = shift + scale * z.
    """
    _require(records)
    grid = np.asarray(grid, dtype=float)
    z = (grid - shift) / scale
    dens = np.array([r.mixture_for_group(group).pdf(z) for r in records]) / scale
    lo, hi = np.percentile(dens, [2.5, 97.5], axis=0)
    mean = dens.mean(axis=0)
    return DensitySummary(grid, mean, np.minimum(lo, mean), np.maximum(hi, mean))


@dataclass
class Functionals:
    mean: float
    variance: float
    pearson_skew: float
    mode_skew: float
    pass_prob: float
    mode: float


def mixture_mode(mix: FiniteMixture, n_grid: int = 4001) -> float:
    m = float(mix.weights @ mix.mu)
    sd = math.sqrt(float(mix.weights @ (mix.sigma2 + (mix.mu - m) ** 2)))
    x = np.linspace(m - 8 * sd, m + 8 * sd, n_grid)
    lp = mix.logpdf(x)
    k = int(np.argmax(lp))
    lo, hi = x[max(k - 1, 0)], x[min(k + 1, n_grid - 1)]
    if hi <= lo:
        return float(x[k])
    res = minimize_scalar(lambda t: -float(mix.logpdf(t)), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.x) if -res.fun >= lp[k] else float(x[k])


def density_functionals(mix: FiniteMixture, pass_threshold: float = 0.0) -> Functionals:
    w, mu, s2 = mix.weights, mix.mu, mix.sigma2
    mean = float(w @ mu)
    d = mu - mean
    var = float(w @ (s2 + d * d))
    third = float(w @ (d**3 + 3.0 * d * s2))
    mode = mixture_mode(mix)
    return Functionals(
        mean=mean,
        variance=var,
        pearson_skew=third / var**1.5,
        mode_skew=1.0 - 2.0 * float(mix.cdf(mode)),
        pass_prob=1.0 - float(mix.cdf(pass_threshold)),
        mode=mode,
    )


FUNCTIONAL_COLUMNS = ("mean", "variance", "pearson_skew", "mode_skew", "pass_prob")


def functional_table(
    records: Sequence[ChainRecord], groups: Sequence[int], pass_threshold: float = 0.0
) -> dict[int, dict[str, float]]:
    """Posterior means of the density functionals of each group."""
    _require(records)
    out = {}
    for g in groups:
        vals = [density_functionals(r.mixture_for_group(g), pass_threshold) for r in records]
        out[g] = {col: float(np.mean([getattr(v, col) for v in vals])) for col in FUNCTIONAL_COLUMNS}
    return out


def l1_distance(grid: np.ndarray, f: np.ndarray, g: np.ndarray) -> float:
    return float(np.trapezoid(np.abs(f - g), grid))


# ---------------------------------------------------------------------------
# effective sample size


def autocorrelation(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.size
    d = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(d, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acov / acov[0]


def effective_sample_size(x: Sequence[float]) -> float:
    """Initial positive sequence estimator; constant series return their length."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2 or np.all(x == x[0]):
        return float(n)
    rho = autocorrelation(x)
    tau = -1.0
    for m in range(0, n // 2):
        pair = rho[2 * m] + (rho[2 * m + 1] if 2 * m + 1 < n else 0.0)
        if pair <= 0 and m > 0:
            break
        tau += 2.0 * pair
    # Anti-correlated chains can push tau towards zero; cap the ESS at n log10(n).
    tau = max(tau, 1.0 / math.log10(max(n, 10)))
    return float(n / tau)


def ess_population_clusters(records: Sequence[ChainRecord]) -> float:
    if len(records) < 10:
        raise ValueError("need at least 10 records")
    return effective_sample_size([len(np.unique(r.c)) for r in records])


# ---------------------------------------------------------------------------
# CSV output


def write_similarity_csv(sim: np.ndarray, path, labels: Sequence[str] | None = None):
    labels = list(labels) if labels is not None else [str(i + 1) for i in range(sim.shape[0])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group"] + labels)
        for lab, row in zip(labels, sim):
            w.writerow([lab] + [f"{v:.6f}" for v in row])


def write_partitions_csv(post: PartitionPosterior, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["partition", "probability", "count"])
        for p, prob in post.most_likely():
            w.writerow([format_partition(p), f"{prob:.6f}", round(prob * post.n_samples)])


def write_density_csv(summary: DensitySummary, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["grid", "mean", "lower95", "upper95"])
        for row in zip(summary.grid, summary.mean, summary.lower95, summary.upper95):
            w.writerow([f"{v:.8g}" for v in row])


def write_functionals_csv(table: dict[int, dict[str, float]], path, labels: Sequence[str] | None = None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", *FUNCTIONAL_COLUMNS])
        for g, row in table.items():
            lab = labels[g] if labels is not None else str(g + 1)
            w.writerow([lab] + [f"{row[c]:.6f}" for c in FUNCTIONAL_COLUMNS])
