"""Simulated scenarios, CSV ingestion and preprocessing."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .state import Dataset


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Component:
    kind: str  # "normal" or "skewnormal"
    loc: float
    scale: float  # standard deviation (normal) or scale omega (skew-normal)
    shape: float = 0.0


@dataclass
class ScenarioSpec:
    id: str
    populations: list[list[tuple[float, Component]]]
    sizes: list[int]
    seed: int = 0
    true_partition: tuple[int, ...] | None = None


def _n(mu: float, sd: float) -> Component:
    return Component("normal", mu, sd)


def _nv(mu: float, var: float) -> Component:
    return Component("normal", mu, math.sqrt(var))


# Two-population scenarios: the second entry of each pair is a standard deviation.
_TWO_POP = {
    "I": ((0.0, 1.0), (5.0, 1.0), (0.0, 1.0), (5.0, 1.0), 0.5, 0.5),
    "II": ((5.0, 0.6), (10.0, 0.6), (5.0, 0.6), (0.0, 0.6), 0.9, 0.1),
    "III": ((0.0, 1.0), (5.0, 1.0), (0.0, 1.0), (5.0, 1.0), 0.8, 0.2),
}

SCENARIO_IDS = ("I", "II", "III", "IV", "V", "VI", "VII")

TRUE_PARTITIONS = {
    "I": (0, 0),
    "II": (0, 1),
    "III": (0, 1),
    "IV": (0, 0, 0, 1),
    "V": (0, 1, 2, 0),
    "VI": (0, 0, 1, 2),
    "VII": tuple(i // 20 for i in range(100)),
}


def scenario_spec(scenario_id: str, n_per_group: int = 100, seed: int = 0) -> ScenarioSpec:
    sid = scenario_id.upper()
    if sid in _TWO_POP:
        a, b, c, d, w1, w2 = _TWO_POP[sid]
        pops = [[(w1, _n(*a)), (1 - w1, _n(*b))], [(w2, _n(*c)), (1 - w2, _n(*d))]]
    elif sid == "IV":
        std = [(1.0, _n(0.0, 1.0))]
        pops = [std, std, std, [(1.0, Component("skewnormal", 0.0, 1.0, 1.0))]]
    elif sid == "V":
        pops = [[(1.0, _nv(0.0, 1.0))], [(1.0, _nv(0.0, 2.25))], [(1.0, _nv(0.0, 0.25))], [(1.0, _nv(0.0, 1.0))]]
    elif sid == "VI":
        a = [(0.5, _n(0.0, 1.0)), (0.5, _n(5.0, 1.0))]
        pops = [a, a, [(0.5, _n(0.0, 1.0)), (0.5, _n(-5.0, 1.0))], [(0.5, _n(-5.0, 1.0)), (0.5, _n(5.0, 1.0))]]
    elif sid == "VII":
        blocks = [
            [(0.5, _nv(-5.0, 1.0)), (0.5, _nv(5.0, 1.0))],
            [(0.5, _nv(-5.0, 1.0)), (0.5, _nv(0.0, 1.0))],
            [(0.5, _nv(0.0, 1.0)), (0.5, _nv(5.0, 0.1))],
            [(0.5, _nv(-10.0, 1.0)), (0.5, _nv(0.0, 1.0))],
            [(0.1, _nv(-10.0, 1.0)), (0.9, _nv(0.0, 1.0))],
        ]
        pops = [blocks[i // 20] for i in range(100)]
    else:
        raise ValueError(f"unknown scenario {scenario_id!r}; expected one of {SCENARIO_IDS}")
    return ScenarioSpec(sid, pops, [n_per_group] * len(pops), seed, TRUE_PARTITIONS[sid])


def sample_skew_normal(loc: float, scale: float, shape: float, size: int, rng: np.random.Generator) -> np.ndarray:
    delta = shape / math.sqrt(1.0 + shape * shape)
    z1 = np.abs(rng.standard_normal(size))
    z2 = rng.standard_normal(size)
    return loc + scale * (delta * z1 + math.sqrt(1.0 - delta * delta) * z2)


def _sample_component(comp: Component, size: int, rng: np.random.Generator) -> np.ndarray:
    if comp.kind == "normal":
        return comp.loc + comp.scale * rng.standard_normal(size)
    if comp.kind == "skewnormal":
        return sample_skew_normal(comp.loc, comp.scale, comp.shape, size, rng)
    raise ValueError(f"unknown component kind {comp.kind!r}")


def generate_scenario(spec: ScenarioSpec, rng: np.random.Generator | None = None) -> Dataset:
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    groups = []
    for pop, n in zip(spec.populations, spec.sizes):
        w = np.array([p[0] for p in pop])
        labels = rng.choice(len(pop), size=n, p=w / w.sum())
        y = np.empty(n)
        for k, (_, comp) in enumerate(pop):
            idx = labels == k
            y[idx] = _sample_component(comp, int(idx.sum()), rng)
        groups.append(y)
    return Dataset(groups)


@dataclass
class Transform:
    mean: float = 0.0
    sd: float = 1.0
    jitter_variance: float = 0.0

    def to_original(self, x):
        return np.asarray(x) * self.sd + self.mean

    def to_standard(self, x):
        return (np.asarray(x) - self.mean) / self.sd

    def to_dict(self) -> dict:
        return {"mean": self.mean, "sd": self.sd, "jitter_variance": self.jitter_variance}


def preprocess(
    data: Dataset, jitter_variance: float = 0.0, standardize: bool = True, rng: np.random.Generator | None = None
) -> tuple[Dataset, Transform]:
    if jitter_variance < 0:
        raise ValueError("jitter_variance must be non-negative")
    groups = [g.copy() for g in data.groups]
    if jitter_variance > 0:
        if rng is None:
            raise ValueError("jitter needs an rng")
        sd = math.sqrt(jitter_variance)
        groups = [g + sd * rng.standard_normal(g.size) for g in groups]
    tr = Transform(jitter_variance=jitter_variance)
    if standardize:
        pooled = np.concatenate(groups)
        s = float(np.std(pooled, ddof=1)) if pooled.size > 1 else 0.0
        if not s > 0:
            raise DataError("pooled standard deviation is zero; cannot standardize")
        tr.mean, tr.sd = float(pooled.mean()), s
        groups = [(g - tr.mean) / s for g in groups]
    return Dataset(groups, list(data.group_ids)), tr


def ingest_csv(path) -> Dataset:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    order: dict[str, list[float]] = {}
    data_row = 0
    for lineno, row in enumerate(rows, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 2:
            raise DataError(f"row {lineno}: expected 'group_id,value', got {len(row)} fields")
        gid, raw = row[0].strip(), row[1].strip()
        data_row += 1
        try:
            val = float(raw)
        except ValueError:
            if data_row == 1:
                # A non-numeric first row is a header.
                data_row = 0
                continue
            raise DataError(f"row {lineno}: value {raw!r} is not numeric") from None
        if not math.isfinite(val):
            raise DataError(f"row {lineno}: value {raw!r} is not finite")
        order.setdefault(gid, []).append(val)
    if not order:
        raise DataError(f"{path}: no data rows")
    return Dataset([np.array(v) for v in order.values()], list(order.keys()))


def write_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "value"])
        for gid, g in zip(data.group_ids, data.groups):
            for v in g:
                w.writerow([gid, repr(float(v))])
