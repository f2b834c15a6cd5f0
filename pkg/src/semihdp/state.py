"""Latent configuration of the food court of restaurants and its persisted draws.

Indexing is 0-based throughout the Python API: group ``i`` enters restaurant
``c[i]``, observation ``j`` of group ``i`` sits at table slot ``s[i][j]`` of that
restaurant.  A table with ``h == 1`` is private and reads its value from the
restaurant's ``psi`` list at position ``t``; a table with ``h == 0`` reads
``tau[t]`` from the shared area.  Slots whose count drops to zero are dead
and are compacted away by the relabeling step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .distributions import FiniteMixture, NIGBase


@dataclass
class Dataset:
    groups: list[np.ndarray]
    group_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.groups = [np.asarray(g, dtype=float).ravel() for g in self.groups]
        if not self.groups:
            raise ValueError("dataset needs at least one group")
        for i, g in enumerate(self.groups):
            if g.size == 0:
                raise ValueError(f"group {i} is empty")
            if not np.all(np.isfinite(g)):
                raise ValueError(f"group {i} contains non-finite values")
        if not self.group_ids:
            self.group_ids = [str(i + 1) for i in range(len(self.groups))]
        if len(self.group_ids) != len(self.groups):
            raise ValueError("group_ids and groups differ in length")

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> list[int]:
        return [g.size for g in self.groups]

    def pooled(self) -> np.ndarray:
        return np.concatenate(self.groups)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.group_ids == other.group_ids and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.groups, other.groups)
        )


@dataclass
class HyperParams:
    n_groups: int
    alpha: float = 1.0
    gamma: float = 1.0
    a_kappa: float = 2.0
    b_kappa: float = 2.0
    eta: np.ndarray | None = None
    base0: NIGBase = field(default_factory=NIGBase)
    base00: NIGBase = field(default_factory=NIGBase)
    trunc_eps: float = 1e-4
    fixed_kappa: float | None = None

    def __post_init__(self):
        if self.n_groups < 1:
            raise ValueError("n_groups must be >= 1")
        if self.eta is None:
            self.eta = np.full(self.n_groups, 1.0 / self.n_groups)
        self.eta = np.asarray(self.eta, dtype=float)
        if self.eta.shape != (self.n_groups,) or np.any(self.eta <= 0):
            raise ValueError("eta must hold one positive entry per group")
        for name in ("alpha", "gamma", "a_kappa", "b_kappa", "trunc_eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.fixed_kappa is not None and not 0.0 <= self.fixed_kappa <= 1.0:
            raise ValueError("fixed_kappa must lie in [0, 1]")


class _Growable:
    """Parallel numpy columns with amortised O(1) append."""

    def __init__(self, columns: dict[str, np.dtype], capacity: int = 16):
        self._dtypes = dict(columns)
        self.size = 0
        for name, dt in self._dtypes.items():
            setattr(self, name, np.zeros(capacity, dtype=dt))

    @property
    def capacity(self) -> int:
        return getattr(self, next(iter(self._dtypes))).size

    def reserve(self, extra: int = 1):
        need = self.size + extra
        if need <= self.capacity:
            return
        cap = max(need, 2 * self.capacity)
        for name in self._dtypes:
            old = getattr(self, name)
            new = np.zeros(cap, dtype=old.dtype)
            new[: self.size] = old[: self.size]
            setattr(self, name, new)

    def append(self, **values) -> int:
        self.reserve()
        k = self.size
        for name, v in values.items():
            getattr(self, name)[k] = v
        self.size += 1
        return k

    def keep(self, idx: np.ndarray):
        """Retain rows ``idx`` (in that order) and drop the rest."""
        for name in self._dtypes:
            col = getattr(self, name)
            kept = col[idx].copy()
            new = np.zeros(max(16, 2 * kept.size), dtype=col.dtype)
            new[: kept.size] = kept
            setattr(self, name, new)
        self.size = int(len(idx))

    def copy(self) -> "_Growable":
        out = _Growable.__new__(type(self))
        out._dtypes = dict(self._dtypes)
        out.size = self.size
        for name in self._dtypes:
            setattr(out, name, getattr(self, name).copy())
        return out


_TABLE_COLUMNS = {
    "n": np.int64,
    "s1": np.float64,
    "s2": np.float64,
    "h": np.int8,
    "t": np.int64,
    "mu": np.float64,
    "var": np.float64,
}


class Restaurant:
    """Tables of one restaurant plus its private atoms."""

    def __init__(self):
        self.tables = _Growable(_TABLE_COLUMNS)
        self.psi = _Growable({"mu": np.float64, "var": np.float64})

    @property
    def n_slots(self) -> int:
        return self.tables.size

    def live(self) -> np.ndarray:
        return np.flatnonzero(self.tables.n[: self.tables.size] > 0)

    @property
    def n_live(self) -> int:
        return int(np.count_nonzero(self.tables.n[: self.tables.size] > 0))

    def copy(self) -> "Restaurant":
        out = Restaurant.__new__(Restaurant)
        out.tables = self.tables.copy()
        out.psi = self.psi.copy()
        return out


@dataclass
class PseudoRestaurant:
    """A frozen restaurant-local sub-state used as pseudoprior for an empty restaurant."""

    n: np.ndarray
    mu: np.ndarray
    var: np.ndarray
    h: np.ndarray

    def validate(self) -> list[str]:
        out = []
        if not (self.n.shape == self.mu.shape == self.var.shape == self.h.shape):
            out.append("pseudo sub-state columns differ in length")
        if self.n.size == 0:
            out.append("pseudo sub-state has no tables")
        if np.any(self.n <= 0):
            out.append("pseudo sub-state has an empty table")
        if np.any(~(self.var > 0)):
            out.append("pseudo sub-state has a non-positive variance")
        if np.any((self.h != 0) & (self.h != 1)):
            out.append("pseudo sub-state has an invalid area flag")
        return out


class ChainState:
    def __init__(self, data: Dataset, hyper: HyperParams):
        self.data = data
        self.hyper = hyper
        n_groups = data.n_groups
        self.c = np.arange(n_groups, dtype=np.int64)
        self.omega = np.full(n_groups, 1.0 / n_groups)
        self.kappa = 0.5
        self.restaurants = [Restaurant() for _ in range(n_groups)]
        self.shared = _Growable({"mu": np.float64, "var": np.float64, "m": np.int64})
        self.s = [np.full(g.size, -1, dtype=np.int64) for g in data.groups]
        self.pseudo: dict[int, PseudoRestaurant] = {}

    # -- counts -------------------------------------------------------------
    @property
    def n_groups(self) -> int:
        return self.data.n_groups

    @property
    def H0(self) -> int:
        return int(np.count_nonzero(self.shared.m[: self.shared.size] > 0))

    def groups_in(self, r: int) -> np.ndarray:
        return np.flatnonzero(self.c == r)

    def occupied(self) -> np.ndarray:
        return np.unique(self.c)

    def m_rk(self) -> np.ndarray:
        """Per-restaurant multiplicities of the shared atoms (live tables only)."""
        out = np.zeros((self.n_groups, self.shared.size), dtype=np.int64)
        for r, rest in enumerate(self.restaurants):
            tb = rest.tables
            live = (tb.n[: tb.size] > 0) & (tb.h[: tb.size] == 0)
            np.add.at(out[r], tb.t[: tb.size][live], 1)
        return out

    def area_counts(self) -> tuple[int, int]:
        """(number of live private tables, number of live shared-area tables)."""
        n1 = n0 = 0
        for rest in self.restaurants:
            tb = rest.tables
            live = tb.n[: tb.size] > 0
            hl = tb.h[: tb.size][live]
            n1 += int(np.count_nonzero(hl == 1))
            n0 += int(np.count_nonzero(hl == 0))
        return n1, n0

    def refresh_values(self):
        """Re-resolve cached table values from psi / tau storage."""
        for rest in self.restaurants:
            tb = rest.tables
            k = tb.size
            h = tb.h[:k] == 1
            t = tb.t[:k]
            if np.any(h):
                tb.mu[:k][h] = rest.psi.mu[t[h]]
                tb.var[:k][h] = rest.psi.var[t[h]]
            if np.any(~h):
                tb.mu[:k][~h] = self.shared.mu[t[~h]]
                tb.var[:k][~h] = self.shared.var[t[~h]]

    def recompute_table_stats(self):
        """Recompute per-table sufficient statistics from the allocations."""
        for r, rest in enumerate(self.restaurants):
            tb = rest.tables
            k = tb.size
            n = np.zeros(k, dtype=np.int64)
            s1 = np.zeros(k)
            s2 = np.zeros(k)
            for i in self.groups_in(r):
                y, s = self.data.groups[i], self.s[i]
                n += np.bincount(s, minlength=k)[:k]
                s1 += np.bincount(s, weights=y, minlength=k)[:k]
                s2 += np.bincount(s, weights=y * y, minlength=k)[:k]
            tb.n[:k], tb.s1[:k], tb.s2[:k] = n, s1, s2

    def unique_value_labels(self, i: int) -> list[tuple]:
        """Label of the value each customer of group ``i`` eats: ('psi', r, k) or ('tau', k)."""
        rest = self.restaurants[self.c[i]]
        tb = rest.tables
        out = []
        for slot in self.s[i]:
            if tb.h[slot] == 1:
                out.append(("psi", int(self.c[i]), int(tb.t[slot])))
            else:
                out.append(("tau", int(tb.t[slot])))
        return out

    def copy(self) -> "ChainState":
        out = ChainState.__new__(ChainState)
        out.data = self.data
        out.hyper = self.hyper
        out.c = self.c.copy()
        out.omega = self.omega.copy()
        out.kappa = self.kappa
        out.restaurants = [r.copy() for r in self.restaurants]
        out.shared = self.shared.copy()
        out.s = [s.copy() for s in self.s]
        out.pseudo = dict(self.pseudo)
        # Cached per-observation predictives attached by the sampler are read-only.
        for name in ("lp0", "lp00"):
            if hasattr(self, name):
                setattr(out, name, getattr(self, name))
        return out


def validate_state(state: ChainState) -> list[str]:
    """List every broken invariant; an empty list means the state is consistent."""
    problems: list[str] = []
    I = state.n_groups
    if state.c.shape != (I,) or np.any((state.c < 0) | (state.c >= I)):
        problems.append("c: labels out of range")
        return problems
    if state.omega.shape != (I,) or np.any(state.omega < 0) or abs(state.omega.sum() - 1.0) > 1e-12:
        problems.append("omega: not on the simplex")
    if not 0.0 <= state.kappa <= 1.0:
        problems.append(f"kappa: {state.kappa} outside [0, 1]")

    m_count = np.zeros(state.shared.size, dtype=np.int64)
    for r, rest in enumerate(state.restaurants):
        tb = rest.tables
        k = tb.size
        counts = np.zeros(k, dtype=np.int64)
        for i in state.groups_in(r):
            s = state.s[i]
            if s.shape != state.data.groups[i].shape or np.any((s < 0) | (s >= k)):
                problems.append(f"s[{i}]: allocation outside the tables of restaurant {r}")
                continue
            counts += np.bincount(s, minlength=k)[:k]
        for ell in np.flatnonzero(counts != tb.n[:k]):
            problems.append(
                f"count mismatch: restaurant {r} table {ell} stores n={tb.n[ell]} but seats {counts[ell]}"
            )
        for ell in range(k):
            if tb.n[ell] <= 0:
                continue
            h, t = int(tb.h[ell]), int(tb.t[ell])
            if h == 1:
                if not 0 <= t < rest.psi.size:
                    problems.append(f"dangling reference: restaurant {r} table {ell} private index {t}")
                elif not rest.psi.var[t] > 0:
                    problems.append(f"restaurant {r} private value {t} has non-positive variance")
            elif h == 0:
                if not 0 <= t < state.shared.size:
                    problems.append(f"dangling reference: restaurant {r} table {ell} shared index {t}")
                    continue
                m_count[t] += 1
                if state.shared.m[t] <= 0:
                    problems.append(f"dangling reference: restaurant {r} table {ell} points at dead shared atom {t}")
            else:
                problems.append(f"restaurant {r} table {ell}: invalid area flag {h}")
    for k in np.flatnonzero(m_count != state.shared.m[: state.shared.size]):
        problems.append(f"multiplicity mismatch: shared atom {k} stores m={state.shared.m[k]} but has {m_count[k]} tables")
    for r, ps in state.pseudo.items():
        for p in ps.validate():
            problems.append(f"pseudo restaurant {r}: {p}")
    return problems


def canonical_partition(c: Sequence[int]) -> tuple[int, ...]:
    """Relabel ``c`` by order of first appearance, e.g. (2, 2, 2, 4) -> (0, 0, 0, 1)."""
    seen: dict[int, int] = {}
    return tuple(seen.setdefault(int(x), len(seen)) for x in c)


def partition_blocks(labels: Sequence[int]) -> tuple[tuple[int, ...], ...]:
    """Blocks of a labelling as 1-based group numbers, in canonical order."""
    canon = canonical_partition(labels)
    blocks: list[list[int]] = [[] for _ in range(max(canon) + 1)]
    for i, b in enumerate(canon):
        blocks[b].append(i + 1)
    return tuple(tuple(b) for b in blocks)


def format_partition(labels: Sequence[int]) -> str:
    return "{" + ",".join("{" + ",".join(map(str, b)) + "}" for b in partition_blocks(labels)) + "}"


def parse_partition(text: str, n_groups: int) -> tuple[int, ...]:
    """Inverse of :func:`format_partition`."""
    labels = [-1] * n_groups
    body = text.strip()[1:-1]
    for b, chunk in enumerate(body.split("},{")):
        for tok in chunk.strip("{}").split(","):
            labels[int(tok) - 1] = b
    return canonical_partition(labels)


@dataclass
class ChainRecord:
    iteration: int
    c: np.ndarray
    kappa: float
    H0: int
    mixtures: dict[int, FiniteMixture]
    tables: dict[int, dict[str, list]]
    unique_counts: list[int]
    shared_counts: list[list[int]] | None = None
    trunc_error: float = 0.0

    @property
    def partition(self) -> tuple[int, ...]:
        return canonical_partition(self.c)

    def mixture_for_group(self, i: int) -> FiniteMixture:
        return self.mixtures[int(self.c[i])]

    def to_json(self) -> str:
        payload = {
            "iter": self.iteration,
            "c": [int(x) for x in self.c],
            "kappa": self.kappa,
            "H0": self.H0,
            "restaurants": {
                str(r): {"mixture": self.mixtures[r].to_dict(), "tables": self.tables.get(r, {})}
                for r in sorted(self.mixtures)
            },
            "unique_counts": self.unique_counts,
            "shared_counts": self.shared_counts,
            "trunc_error": self.trunc_error,
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, line: str) -> "ChainRecord":
        d = json.loads(line)
        rests = d["restaurants"]
        return cls(
            iteration=d["iter"],
            c=np.asarray(d["c"], dtype=np.int64),
            kappa=d["kappa"],
            H0=d["H0"],
            mixtures={int(r): FiniteMixture.from_dict(v["mixture"]) for r, v in rests.items()},
            tables={int(r): v["tables"] for r, v in rests.items()},
            unique_counts=d["unique_counts"],
            shared_counts=d.get("shared_counts"),
            trunc_error=d.get("trunc_error", 0.0),
        )


def write_records(records: Iterable[ChainRecord], path) -> int:
    n = 0
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")
            n += 1
    return n


def read_records(path) -> list[ChainRecord]:
    with open(path) as fh:
        return [ChainRecord.from_json(line) for line in fh if line.strip()]


def value_sharing(state: ChainState, max_groups: int = 10) -> tuple[list[int], list[list[int]] | None]:
    """Unique values per group and, for small I, the number of values shared by each pair."""
    labels = [set(state.unique_value_labels(i)) for i in range(state.n_groups)]
    uniq = [len(x) for x in labels]
    if state.n_groups > max_groups:
        return uniq, None
    shared = [[len(a & b) for b in labels] for a in labels]
    return uniq, shared

