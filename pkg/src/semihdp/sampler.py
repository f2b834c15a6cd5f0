"""Marginal Gibbs sampler for the semi-hierarchical Dirichlet process mixture.

One sweep updates, in order: table allocations ``s``, shared-table
allocations ``t``, atom values, area flags ``h``, ``kappa``, ``omega``, then
draws every restaurant measure ``F_r`` and updates the restaurant labels
``c``.  The sweep ends with relabeling and pseudoprior injection for empty
restaurants.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .distributions import FiniteMixture, NIGBase, normal_logpdf
from .kernels import seat_group_kernel
from .state import (
    ChainRecord,
    ChainState,
    Dataset,
    HyperParams,
    PseudoRestaurant,
    validate_state,
    value_sharing,
)

log = logging.getLogger(__name__)

C_UPDATE_MODES = ("gibbs", "metropolised-uniform", "metropolised-l2")
# How the measure of an empty restaurant is drawn for the c-update: from its exact
# conditional (a DP centred on the current base, which carries the shared atoms), or
# from a stored sub-state of a preliminary chain.
EMPTY_MEASURES = ("conditional", "pseudoprior")


class SamplerError(RuntimeError):
    """Raised when an update cannot proceed (e.g. every likelihood underflows)."""


class InvalidStateError(SamplerError):
    pass


@dataclass
class SamplerConfig:
    n_burnin: int = 2000
    n_iter: int = 10000
    thin: int = 5
    c_update_mode: str = "gibbs"
    pool_size: int = 500
    pool_thin: int = 10
    pool_burnin: int = 200
    seed: int = 0
    validate_every: int = 0
    empty_measure: str = "conditional"

    def __post_init__(self):
        if self.n_burnin < 0 or self.n_iter < 0:
            raise ValueError("n_burnin and n_iter must be non-negative")
        if self.thin < 1 or self.pool_thin < 1:
            raise ValueError("thinning must be >= 1")
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if self.c_update_mode not in C_UPDATE_MODES:
            raise ValueError(f"c_update_mode must be one of {C_UPDATE_MODES}")
        if self.empty_measure not in EMPTY_MEASURES:
            raise ValueError(f"empty_measure must be one of {EMPTY_MEASURES}")


# ---------------------------------------------------------------------------
# categorical sampling


def sample_log_weights(logw: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from unnormalised log-weights."""
    top = np.max(logw)
    if not np.isfinite(top):
        raise SamplerError("all categorical weights are zero")
    w = np.exp(logw - top)
    cdf = np.cumsum(w)
    u = rng.random() * cdf[-1]
    return min(int(np.searchsorted(cdf, u, side="right")), w.size - 1)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


# ---------------------------------------------------------------------------
# state construction helpers


def _attach_predictives(state: ChainState):
    h = state.hyper
    state.lp0 = [h.base0.log_predictive(y) for y in state.data.groups]
    state.lp00 = [h.base00.log_predictive(y) for y in state.data.groups]


def _new_private_table(state: ChainState, r: int, mu: float, var: float) -> int:
    rest = state.restaurants[r]
    k = rest.psi.append(mu=mu, var=var)
    return rest.tables.append(n=0, s1=0.0, s2=0.0, h=1, t=k, mu=mu, var=var)


def _new_shared_atom(state: ChainState, mu: float, var: float) -> int:
    return state.shared.append(mu=mu, var=var, m=0)


def _new_shared_table(state: ChainState, r: int, k: int) -> int:
    state.shared.m[k] += 1
    return state.restaurants[r].tables.append(
        n=0, s1=0.0, s2=0.0, h=0, t=k, mu=state.shared.mu[k], var=state.shared.var[k]
    )


def _kill_if_empty(state: ChainState, r: int, slot: int):
    tb = state.restaurants[r].tables
    if tb.n[slot] == 0 and tb.h[slot] == 0:
        state.shared.m[tb.t[slot]] -= 1


def _add_customer(tb, slot: int, y: float):
    tb.n[slot] += 1
    tb.s1[slot] += y
    tb.s2[slot] += y * y


def _remove_customer(state: ChainState, r: int, slot: int, y: float):
    tb = state.restaurants[r].tables
    tb.n[slot] -= 1
    tb.s1[slot] -= y
    tb.s2[slot] -= y * y
    if tb.n[slot] == 0:
        tb.s1[slot] = tb.s2[slot] = 0.0
        _kill_if_empty(state, r, slot)


def seat_customer(
    state: ChainState,
    r: int,
    rng: np.random.Generator,
    y: float | None = None,
    lp0: float | None = None,
    lp00: float | None = None,
) -> int:
    """Choose a table in restaurant ``r`` for one customer and return its slot.

    With ``y=None`` the customer is seated from the prior food-court process.
    The customer is *not* added to the table counts; callers do that.
    """
    hyp = state.hyper
    kappa = state.kappa
    tb = state.restaurants[r].tables
    k = tb.size
    sh = state.shared
    H = sh.size
    m = sh.m[:H]
    log_den = math.log(m.sum() + hyp.gamma)
    log_a = math.log(hyp.alpha)
    with np.errstate(divide="ignore"):
        log_n = np.log(tb.n[:k])
        log_m = np.log(m)
    if y is None:
        lk_tab = log_n
        lk_tau = log_m
        l_private = log_a + _log(kappa)
        l_newtau = log_a + _log(1.0 - kappa) + math.log(hyp.gamma) - log_den
    else:
        if lp0 is None:
            lp0 = hyp.base0.log_predictive(y)
        if lp00 is None:
            lp00 = hyp.base00.log_predictive(y)
        lk_tab = log_n + normal_logpdf(y, tb.mu[:k], tb.var[:k])
        lk_tau = log_m + normal_logpdf(y, sh.mu[:H], sh.var[:H])
        l_private = log_a + _log(kappa) + lp0
        l_newtau = log_a + _log(1.0 - kappa) + math.log(hyp.gamma) - log_den + lp00
    lk_tau = lk_tau + (log_a + _log(1.0 - kappa) - log_den)
    logw = np.concatenate((lk_tab, (l_private,), lk_tau, (l_newtau,)))
    idx = sample_log_weights(logw, rng)
    if idx < k:
        return idx
    if idx == k:
        if y is None:
            mu, var = hyp.base0.draw_prior(1, rng)
            return _new_private_table(state, r, float(mu[0]), float(var[0]))
        mu, var = hyp.base0.draw_stats(1, y, y * y, rng)
        return _new_private_table(state, r, mu, var)
    j = idx - k - 1
    if j < H:
        return _new_shared_table(state, r, j)
    if y is None:
        mu, var = hyp.base00.draw_prior(1, rng)
        mu, var = float(mu[0]), float(var[0])
    else:
        mu, var = hyp.base00.draw_stats(1, y, y * y, rng)
    return _new_shared_table(state, r, _new_shared_atom(state, mu, var))


def _nig_tuple(base: NIGBase) -> tuple[float, float, float, float]:
    return (base.mu0, 1.0 / base.lam, base.shape, base.rate)


def _seat_group(state: ChainState, i: int, rng: np.random.Generator, reseat: bool = False):
    """(Re)seat all customers of group ``i`` sequentially in restaurant ``c[i]``."""
    hyp = state.hyper
    r = int(state.c[i])
    rest = state.restaurants[r]
    tb, psi, sh = rest.tables, rest.psi, state.shared
    y = state.data.groups[i]
    n = y.size
    tb.reserve(n)
    psi.reserve(n)
    sh.reserve(n)
    u = rng.random(n)
    g0 = rng.gamma(hyp.base0.shape + 0.5, size=n)
    z0 = rng.standard_normal(n)
    g00 = rng.gamma(hyp.base00.shape + 0.5, size=n)
    z00 = rng.standard_normal(n)
    tb.size, psi.size, sh.size = seat_group_kernel(
        y, state.s[i], state.lp0[i], state.lp00[i], u, g0, z0, g00, z00, reseat,
        tb.n, tb.s1, tb.s2, tb.h, tb.t, tb.mu, tb.var, tb.size,
        psi.mu, psi.var, psi.size,
        sh.m, sh.mu, sh.var, sh.size,
        math.log(hyp.alpha), _log(state.kappa), _log(1.0 - state.kappa), math.log(hyp.gamma), hyp.gamma,
        _nig_tuple(hyp.base0), _nig_tuple(hyp.base00),
    )


def init_state(data: Dataset, hyper: HyperParams, rng: np.random.Generator) -> ChainState:
    """Identity restaurant labels, prior draws of kappa and omega, sequential CRP seating."""
    if hyper.n_groups != data.n_groups:
        raise ValueError("hyper-parameters were built for a different number of groups")
    state = ChainState(data, hyper)
    state.kappa = hyper.fixed_kappa if hyper.fixed_kappa is not None else float(rng.beta(hyper.a_kappa, hyper.b_kappa))
    state.omega = _dirichlet(hyper.eta, rng)
    _attach_predictives(state)
    for i in range(data.n_groups):
        _seat_group(state, i, rng)
    return state


def state_from_indicators(
    data: Dataset,
    hyper: HyperParams,
    c: Sequence[int],
    s: Sequence[Sequence[int]],
    h: Sequence[Sequence[int]],
    t: Sequence[Sequence[int]],
    psi: Sequence[Sequence[tuple[float, float]]],
    tau: Sequence[tuple[float, float]],
    kappa: float = 0.5,
) -> ChainState:
    """Build a state from explicit 0-based indicators (tables may be empty)."""
    state = ChainState(data, hyper)
    state.c = np.asarray(c, dtype=np.int64)
    state.kappa = kappa
    _attach_predictives(state)
    for mu, var in tau:
        state.shared.append(mu=mu, var=var, m=0)
    for r, rest in enumerate(state.restaurants):
        for mu, var in psi[r]:
            rest.psi.append(mu=mu, var=var)
        for hh, tt in zip(h[r], t[r]):
            if hh == 1:
                mu, var = rest.psi.mu[tt], rest.psi.var[tt]
            else:
                mu, var = state.shared.mu[tt], state.shared.var[tt]
            rest.tables.append(n=0, s1=0.0, s2=0.0, h=hh, t=tt, mu=mu, var=var)
    for i in range(data.n_groups):
        state.s[i] = np.asarray(s[i], dtype=np.int64)
    state.recompute_table_stats()
    for rest in state.restaurants:
        tb = rest.tables
        for ell in range(tb.size):
            if tb.n[ell] > 0 and tb.h[ell] == 0:
                state.shared.m[tb.t[ell]] += 1
    return state


def _dirichlet(conc: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    g = rng.gamma(conc)
    if g.sum() <= 0:
        # All gammas underflowed (tiny concentrations): fall back to the largest one.
        g = np.zeros_like(conc)
        g[int(np.argmax(conc))] = 1.0
    return g / g.sum()


# ---------------------------------------------------------------------------
# the individual conditional updates


def update_s(state: ChainState, rng: np.random.Generator) -> ChainState:
    for i in range(state.n_groups):
        _seat_group(state, i, rng, reseat=True)
    return state


def _stats_loglik(n: float, s1: float, s2: float, mu: np.ndarray, var: np.ndarray) -> np.ndarray:
    """log prod_j N(y_j; mu, var) from sufficient statistics, vectorised over atoms."""
    return -0.5 * n * (math.log(2.0 * math.pi) + np.log(var)) - (s2 - 2.0 * mu * s1 + n * mu * mu) / (2.0 * var)


def update_t(state: ChainState, rng: np.random.Generator) -> ChainState:
    hyp = state.hyper
    sh = state.shared
    log_g = math.log(hyp.gamma)
    for r, rest in enumerate(state.restaurants):
        tb = rest.tables
        for ell in range(tb.size):
            if tb.n[ell] <= 0 or tb.h[ell] != 0:
                continue
            n, s1, s2 = float(tb.n[ell]), float(tb.s1[ell]), float(tb.s2[ell])
            sh.m[tb.t[ell]] -= 1
            H = sh.size
            with np.errstate(divide="ignore"):
                logw = np.log(sh.m[:H]) + _stats_loglik(n, s1, s2, sh.mu[:H], sh.var[:H])
            l_new = log_g + hyp.base00.log_marginal_stats(n, s1, s2)
            k = sample_log_weights(np.append(logw, l_new), rng)
            if k == H:
                mu, var = hyp.base00.draw_stats(n, s1, s2, rng)
                k = _new_shared_atom(state, mu, var)
            sh.m[k] += 1
            tb.t[ell] = k
            tb.mu[ell], tb.var[ell] = sh.mu[k], sh.var[k]
    return state


def _draw_nig_vec(base: NIGBase, n, s1, s2, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n = np.asarray(n, dtype=float)
    k0 = 1.0 / base.lam
    safe_n = np.where(n > 0, n, 1.0)
    mean = np.where(n > 0, s1 / safe_n, base.mu0)
    ss = np.maximum(s2 - s1 * mean, 0.0)
    kn = k0 + n
    mun = (k0 * base.mu0 + s1) / kn
    an = base.shape + 0.5 * n
    bn = base.rate + 0.5 * ss + 0.5 * k0 * n * (mean - base.mu0) ** 2 / kn
    var = bn / rng.gamma(an)
    mu = mun + np.sqrt(var / kn) * rng.standard_normal(n.size)
    return mu, var


def update_values(state: ChainState, rng: np.random.Generator) -> ChainState:
    hyp = state.hyper
    sh = state.shared
    H = sh.size
    tn, t1, t2 = np.zeros(H), np.zeros(H), np.zeros(H)
    for rest in state.restaurants:
        tb = rest.tables
        k = tb.size
        live = tb.n[:k] > 0
        priv = live & (tb.h[:k] == 1)
        shr = live & (tb.h[:k] == 0)
        P = rest.psi.size
        if P:
            idx = tb.t[:k][priv]
            pn = np.bincount(idx, weights=tb.n[:k][priv].astype(float), minlength=P)
            p1 = np.bincount(idx, weights=tb.s1[:k][priv], minlength=P)
            p2 = np.bincount(idx, weights=tb.s2[:k][priv], minlength=P)
            rest.psi.mu[:P], rest.psi.var[:P] = _draw_nig_vec(hyp.base0, pn, p1, p2, rng)
        if H:
            idx = tb.t[:k][shr]
            tn += np.bincount(idx, weights=tb.n[:k][shr].astype(float), minlength=H)
            t1 += np.bincount(idx, weights=tb.s1[:k][shr], minlength=H)
            t2 += np.bincount(idx, weights=tb.s2[:k][shr], minlength=H)
    if H:
        sh.mu[:H], sh.var[:H] = _draw_nig_vec(hyp.base00, tn, t1, t2, rng)
    state.refresh_values()
    return state


def update_h(state: ChainState, rng: np.random.Generator) -> ChainState:
    hyp = state.hyper
    kappa = state.kappa
    sh = state.shared
    log_k, log_1k, log_g = _log(kappa), _log(1.0 - kappa), math.log(hyp.gamma)
    for r, rest in enumerate(state.restaurants):
        tb = rest.tables
        for ell in range(tb.size):
            if tb.n[ell] <= 0:
                continue
            h, t = int(tb.h[ell]), int(tb.t[ell])
            mu, var = float(tb.mu[ell]), float(tb.var[ell])
            m_minus = int(sh.m[: sh.size].sum()) - (1 if h == 0 else 0)
            if h == 0 and sh.m[t] - 1 > 0:
                # The value coincides with an atom still used elsewhere: the point mass dominates.
                continue
            l1 = log_k + hyp.base0.log_density(mu, var)
            l0 = log_1k + log_g - math.log(m_minus + hyp.gamma) + hyp.base00.log_density(mu, var)
            new_h = 1 if sample_log_weights(np.array([l0, l1]), rng) == 1 else 0
            if new_h == h:
                continue
            if new_h == 0:
                k = _new_shared_atom(state, mu, var)
                sh.m[k] += 1
                tb.h[ell], tb.t[ell] = 0, k
            else:
                sh.m[t] -= 1
                tb.h[ell], tb.t[ell] = 1, rest.psi.append(mu=mu, var=var)
    return state


def update_kappa(state: ChainState, rng: np.random.Generator) -> ChainState:
    hyp = state.hyper
    if hyp.fixed_kappa is not None:
        state.kappa = hyp.fixed_kappa
        return state
    n1, n0 = state.area_counts()
    state.kappa = float(rng.beta(hyp.a_kappa + n1, hyp.b_kappa + n0))
    return state


def update_omega(state: ChainState, rng: np.random.Generator) -> ChainState:
    counts = np.bincount(state.c, minlength=state.n_groups)
    state.omega = _dirichlet(state.hyper.eta + counts, rng)
    return state


# ---------------------------------------------------------------------------
# restaurant measures


class SharedUrn:
    """Polya urn over the shared area, used to draw atoms of the shared measure retrospectively."""

    def __init__(self, state: ChainState):
        sh = state.shared
        live = sh.m[: sh.size] > 0
        self.counts = list(sh.m[: sh.size][live].astype(float))
        self.mu = list(sh.mu[: sh.size][live])
        self.var = list(sh.var[: sh.size][live])
        self.gamma = state.hyper.gamma
        self.base = state.hyper.base00

    def draw(self, rng: np.random.Generator) -> tuple[float, float]:
        tot = sum(self.counts)
        u = rng.random() * (tot + self.gamma)
        if u < tot:
            acc = 0.0
            for k, w in enumerate(self.counts):
                acc += w
                if u < acc:
                    self.counts[k] += 1.0
                    return self.mu[k], self.var[k]
        mu, var = self.base.draw_prior(1, rng)
        self.counts.append(1.0)
        self.mu.append(float(mu[0]))
        self.var.append(float(var[0]))
        return self.mu[-1], self.var[-1]


def _restaurant_atoms(state: ChainState, r: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rest = state.restaurants[r]
    live = rest.live()
    if live.size:
        tb = rest.tables
        return tb.n[live].astype(float), tb.mu[live], tb.var[live]
    if r in state.pseudo:
        p = state.pseudo[r]
        return p.n.astype(float), p.mu, p.var
    return np.zeros(0), np.zeros(0), np.zeros(0)


def draw_F(
    state: ChainState,
    r: int,
    rng: np.random.Generator,
    urn: SharedUrn | None = None,
    trunc_log: list | None = None,
) -> FiniteMixture:
    """Draw the restaurant measure F_r from its conditional, truncated adaptively."""
    hyp = state.hyper
    if urn is None:
        urn = SharedUrn(state)
    n, mu, var = _restaurant_atoms(state, r)
    g = rng.gamma(np.concatenate(([hyp.alpha], n)))
    pi = g / g.sum()
    pi0 = float(pi[0])
    # Stick-breaking for the fresh part until pi0 * eps_M <= trunc_eps.
    betas: list[float] = []
    eps = 1.0
    while pi0 * eps > hyp.trunc_eps:
        chunk = rng.beta(1.0, hyp.alpha, size=16)
        for b in chunk:
            betas.append(float(b))
            eps *= 1.0 - b
            if pi0 * eps <= hyp.trunc_eps:
                break
    M = len(betas)
    if M:
        b = np.asarray(betas)
        w_new = b * np.concatenate(([1.0], np.cumprod(1.0 - b)[:-1]))
        from_g0 = rng.random(M) < state.kappa
        new_mu = np.empty(M)
        new_var = np.empty(M)
        n_g0 = int(from_g0.sum())
        if n_g0:
            new_mu[from_g0], new_var[from_g0] = hyp.base0.draw_prior(n_g0, rng)
        for h in np.flatnonzero(~from_g0):
            new_mu[h], new_var[h] = urn.draw(rng)
        weights = np.concatenate((pi[1:], pi0 * w_new))
        mus = np.concatenate((mu, new_mu))
        vars_ = np.concatenate((var, new_var))
    else:
        weights, mus, vars_ = pi[1:], mu, var
    err = pi0 * eps
    if trunc_log is not None:
        trunc_log.append(err)
    weights = weights / weights.sum()
    return FiniteMixture(weights, mus, vars_, trunc_error=err)


def draw_all_F(state: ChainState, rng: np.random.Generator, trunc_log: list | None = None) -> list[FiniteMixture]:
    urn = SharedUrn(state)
    return [draw_F(state, r, rng, urn, trunc_log) for r in range(state.n_groups)]


def group_loglik(y: np.ndarray, mix: FiniteMixture) -> float:
    return float(np.sum(mix.logpdf(y)))


def _move_group(state: ChainState, i: int, new_r: int, rng: np.random.Generator):
    old_r = int(state.c[i])
    if new_r == old_r:
        return
    y, s = state.data.groups[i], state.s[i]
    for j in range(y.size):
        _remove_customer(state, old_r, int(s[j]), float(y[j]))
    state.c[i] = new_r
    state.pseudo.pop(new_r, None)
    _seat_group(state, i, rng)


def update_c_gibbs(
    state: ChainState, mixtures: Sequence[FiniteMixture], rng: np.random.Generator
) -> ChainState:
    I = state.n_groups
    with np.errstate(divide="ignore"):
        log_omega = np.log(state.omega)
    moves = []
    for i in range(I):
        y = state.data.groups[i]
        logp = log_omega + np.array([group_loglik(y, mixtures[r]) for r in range(I)])
        if not np.any(np.isfinite(logp)):
            raise SamplerError(f"group {i}: every restaurant gives zero likelihood; check data scale")
        moves.append(sample_log_weights(logp, rng))
    for i, r in enumerate(moves):
        _move_group(state, i, r, rng)
    return state


def mixture_l2_matrix(mixtures: Sequence[FiniteMixture]) -> np.ndarray:
    """All pairwise squared L2 distances, from one Gram matrix of components."""
    mu = np.concatenate([m.mu for m in mixtures])
    var = np.concatenate([m.sigma2 for m in mixtures])
    seg = np.repeat(np.arange(len(mixtures)), [len(m) for m in mixtures])
    W = np.zeros((len(mixtures), mu.size))
    W[seg, np.arange(mu.size)] = np.concatenate([m.weights for m in mixtures])
    gram = np.exp(normal_logpdf(mu[:, None], mu[None, :], var[:, None] + var[None, :]))
    cross = W @ gram @ W.T
    d = np.diag(cross)
    return np.maximum(d[:, None] + d[None, :] - 2.0 * cross, 0.0)


def l2_proposal_weights(d2: np.ndarray) -> np.ndarray:
    """Row-normalised proposal p(m | r) proportional to 1 + 1 / (1 + d2(F_r, F_m))."""
    w = 1.0 + 1.0 / (1.0 + d2)
    return w / w.sum(axis=1, keepdims=True)


def update_c_metropolised(
    state: ChainState,
    mixtures: Sequence[FiniteMixture],
    rng: np.random.Generator,
    proposal: str = "l2",
    stats: dict | None = None,
) -> ChainState:
    I = state.n_groups
    if proposal == "l2":
        P = l2_proposal_weights(mixture_l2_matrix(mixtures))
    elif proposal == "uniform":
        P = np.full((I, I), 1.0 / I)
    else:
        raise ValueError(f"unknown proposal {proposal!r}")
    with np.errstate(divide="ignore"):
        log_omega = np.log(state.omega)
    moves = []
    for i in range(I):
        r = int(state.c[i])
        m = int(rng.choice(I, p=P[r]))
        if stats is not None:
            stats["proposed"] = stats.get("proposed", 0) + 1
        if m == r:
            moves.append(r)
            continue
        y = state.data.groups[i]
        cur = log_omega[r] + group_loglik(y, mixtures[r])
        new = log_omega[m] + group_loglik(y, mixtures[m])
        if not (np.isfinite(cur) or np.isfinite(new)):
            raise SamplerError(f"group {i}: zero likelihood under both current and proposed restaurant")
        log_q = new - cur + math.log(P[m, r]) - math.log(P[r, m])
        accept = math.log(rng.random()) < log_q if np.isfinite(log_q) else log_q > 0
        if accept and stats is not None:
            stats["accepted"] = stats.get("accepted", 0) + 1
        moves.append(m if accept else r)
    for i, r in enumerate(moves):
        _move_group(state, i, r, rng)
    return state


# ---------------------------------------------------------------------------
# relabeling


def relabel_maps(
    s: Sequence[np.ndarray], h: Sequence[np.ndarray], t: Sequence[np.ndarray]
) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray], dict, dict]:
    """Compact 0-based indicators of every restaurant.

    ``s[r]`` holds the table of each customer of restaurant ``r``; ``h[r]`` and
    ``t[r]`` are per-table flags and atom indices.  Returns the relabelled
    ``(s, h, t)`` together with the maps for private and shared atoms.
    """
    new_s, new_h, new_t, used_tables = [], [], [], []
    used_tau = set()
    psi_map: dict[tuple[int, int], tuple[int, int]] = {}
    for r in range(len(s)):
        tables = np.unique(np.asarray(s[r], dtype=np.int64))
        used_tables.append(tables)
        hr, tr = np.asarray(h[r])[tables], np.asarray(t[r])[tables]
        used_tau.update(int(x) for x in tr[hr == 0])
        for new_k, old_k in enumerate(np.unique(tr[hr == 1])):
            psi_map[(r, int(old_k))] = (r, new_k)
    tau_map = {old: new for new, old in enumerate(sorted(used_tau))}
    for r in range(len(s)):
        tables = used_tables[r]
        lookup = np.full(tables.max() + 1 if tables.size else 0, -1, dtype=np.int64)
        lookup[tables] = np.arange(tables.size)
        new_s.append(lookup[np.asarray(s[r], dtype=np.int64)])
        hr = np.asarray(h[r])[tables]
        tr = np.asarray(t[r])[tables]
        new_h.append(hr.copy())
        new_t.append(
            np.array([psi_map[(r, int(x))][1] if hh == 1 else tau_map[int(x)] for hh, x in zip(hr, tr)], dtype=np.int64)
        )
    return new_s, new_h, new_t, psi_map, tau_map


def relabel(state: ChainState) -> ChainState:
    """Drop empty tables and unused atoms, compacting every index by sorted order."""
    sh = state.shared
    used_tau = np.zeros(sh.size, dtype=bool)
    plans = []
    for r, rest in enumerate(state.restaurants):
        tb = rest.tables
        live = rest.live()
        hr = tb.h[live]
        tr = tb.t[live]
        used_tau[tr[hr == 0]] = True
        used_psi = np.unique(tr[hr == 1])
        plans.append((live, used_psi))
    tau_keep = np.flatnonzero(used_tau)
    tau_lookup = np.full(sh.size, -1, dtype=np.int64)
    tau_lookup[tau_keep] = np.arange(tau_keep.size)
    for r, (rest, (live, used_psi)) in enumerate(zip(state.restaurants, plans)):
        tb = rest.tables
        slot_lookup = np.full(tb.size, -1, dtype=np.int64)
        slot_lookup[live] = np.arange(live.size)
        psi_lookup = np.full(rest.psi.size, -1, dtype=np.int64)
        psi_lookup[used_psi] = np.arange(used_psi.size)
        tb.keep(live)
        k = tb.size
        h = tb.h[:k] == 1
        t = tb.t[:k]
        t[h] = psi_lookup[t[h]]
        t[~h] = tau_lookup[t[~h]]
        rest.psi.keep(used_psi)
        for i in state.groups_in(r):
            state.s[i] = slot_lookup[state.s[i]]
    sh.keep(tau_keep)
    state.recompute_table_stats()
    return state


# ---------------------------------------------------------------------------
# pseudopriors


@dataclass
class PseudopriorPool:
    entries: dict[int, list[PseudoRestaurant]] = field(default_factory=dict)

    def validate(self) -> list[str]:
        out = []
        for r, lst in self.entries.items():
            for k, e in enumerate(lst):
                out.extend(f"pool[{r}][{k}]: {p}" for p in e.validate())
        return out


def _snapshot_restaurant(state: ChainState, r: int) -> PseudoRestaurant:
    rest = state.restaurants[r]
    live = rest.live()
    tb = rest.tables
    return PseudoRestaurant(
        n=tb.n[live].copy(), mu=tb.mu[live].copy(), var=tb.var[live].copy(), h=tb.h[live].astype(np.int64)
    )


def _local_sweep(state: ChainState, rng: np.random.Generator):
    update_s(state, rng)
    update_t(state, rng)
    update_values(state, rng)
    update_h(state, rng)
    update_kappa(state, rng)
    relabel(state)


def pseudoprior_collect(
    data: Dataset, hyper: HyperParams, config: SamplerConfig, rng: np.random.Generator
) -> PseudopriorPool:
    """Run a chain with c frozen at the identity and store restaurant sub-states."""
    state = init_state(data, hyper, rng)
    pool = PseudopriorPool({r: [] for r in range(data.n_groups)})
    for _ in range(config.pool_burnin):
        _local_sweep(state, rng)
    while len(pool.entries[0]) < config.pool_size:
        for _ in range(config.pool_thin):
            _local_sweep(state, rng)
        for r in range(data.n_groups):
            pool.entries[r].append(_snapshot_restaurant(state, r))
    return pool


def pseudoprior_inject(state: ChainState, pool: PseudopriorPool, rng: np.random.Generator) -> ChainState:
    """Attach a random stored sub-state to each empty restaurant."""
    occupied = set(int(x) for x in state.occupied())
    for r in range(state.n_groups):
        if r in occupied:
            state.pseudo.pop(r, None)
            continue
        entries = pool.entries.get(r)
        if not entries:
            raise SamplerError(f"no pseudoprior samples for empty restaurant {r}")
        state.pseudo[r] = entries[int(rng.integers(len(entries)))]
    return state


# ---------------------------------------------------------------------------
# chain driver


@dataclass
class ChainDiagnostics:
    trunc_log: list = field(default_factory=list)
    mh_stats: dict = field(default_factory=dict)
    n_clusters: list = field(default_factory=list)
    wall_time: float = 0.0


def make_record(state: ChainState, iteration: int, rng: np.random.Generator, trunc_log: list | None = None) -> ChainRecord:
    urn = SharedUrn(state)
    mixtures, tables = {}, {}
    errs = []
    for r in (int(x) for x in state.occupied()):
        mixtures[r] = draw_F(state, r, rng, urn, trunc_log)
        errs.append(mixtures[r].trunc_error)
        rest = state.restaurants[r]
        live = rest.live()
        tb = rest.tables
        n = tb.n[live]
        tables[r] = {
            "n": n.tolist(),
            "weight": (n / n.sum()).tolist(),
            "mu": tb.mu[live].tolist(),
            "sigma2": tb.var[live].tolist(),
            "h": tb.h[live].astype(int).tolist(),
            "t": tb.t[live].tolist(),
        }
    uniq, shared = value_sharing(state)
    return ChainRecord(
        iteration=iteration,
        c=state.c.copy(),
        kappa=state.kappa,
        H0=state.H0,
        mixtures=mixtures,
        tables=tables,
        unique_counts=uniq,
        shared_counts=shared,
        trunc_error=max(errs) if errs else 0.0,
    )


def sweep(
    state: ChainState,
    rng: np.random.Generator,
    mode: str = "gibbs",
    pool: PseudopriorPool | None = None,
    diagnostics: ChainDiagnostics | None = None,
) -> ChainState:
    trunc_log = diagnostics.trunc_log if diagnostics is not None else None
    update_s(state, rng)
    update_t(state, rng)
    update_values(state, rng)
    update_h(state, rng)
    update_kappa(state, rng)
    update_omega(state, rng)
    if state.n_groups > 1:
        mixtures = draw_all_F(state, rng, trunc_log)
        if mode == "gibbs":
            update_c_gibbs(state, mixtures, rng)
        else:
            stats = diagnostics.mh_stats if diagnostics is not None else None
            update_c_metropolised(state, mixtures, rng, mode.split("-")[1], stats)
    relabel(state)
    if pool is not None and state.n_groups > 1:
        pseudoprior_inject(state, pool, rng)
    return state


def run_chain(
    data: Dataset,
    hyper: HyperParams,
    config: SamplerConfig,
    rng: np.random.Generator | None = None,
    pool: PseudopriorPool | None = None,
    diagnostics: ChainDiagnostics | None = None,
    progress: Callable[[int, ChainState], None] | None = None,
) -> list[ChainRecord]:
    """Run burn-in plus ``n_iter`` sweeps and return one record every ``thin`` sweeps.

    ``pool`` is only used when ``config.empty_measure`` is ``"pseudoprior"``;
    if it is missing in that mode a pool is collected first.
    """
    import time

    start = time.perf_counter()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if diagnostics is None:
        diagnostics = ChainDiagnostics()
    if config.empty_measure != "pseudoprior" or data.n_groups == 1:
        pool = None
    elif pool is None:
        pool = pseudoprior_collect(data, hyper, config, rng)
    state = init_state(data, hyper, rng)
    if pool is not None and data.n_groups > 1:
        pseudoprior_inject(state, pool, rng)
    records: list[ChainRecord] = []
    total = config.n_burnin + config.n_iter
    for it in range(total):
        try:
            sweep(state, rng, config.c_update_mode, pool, diagnostics)
        except SamplerError as exc:
            raise SamplerError(f"iteration {it}: {exc}") from exc
        if config.validate_every and (it + 1) % config.validate_every == 0:
            problems = validate_state(state)
            if problems:
                raise InvalidStateError(f"iteration {it}: " + "; ".join(problems[:5]))
        if it >= config.n_burnin:
            diagnostics.n_clusters.append(len(np.unique(state.c)))
            if (it - config.n_burnin + 1) % config.thin == 0:
                records.append(make_record(state, it, rng, diagnostics.trunc_log))
        if progress is not None:
            progress(it, state)
    diagnostics.wall_time = time.perf_counter() - start
    return records
