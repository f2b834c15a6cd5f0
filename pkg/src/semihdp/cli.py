"""Command line entry point: ``semihdp {generate,run,summarize,oracle-check}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, analysis, oracles
from .distributions import NIGBase
from .sampler import ChainDiagnostics, SamplerConfig, SamplerError, run_chain, C_UPDATE_MODES, EMPTY_MEASURES
from .scenarios import DataError, SCENARIO_IDS, Transform, generate_scenario, ingest_csv, preprocess, scenario_spec, write_csv
from .state import HyperParams, read_records, write_records

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL, EXIT_ORACLE = 0, 2, 3, 4, 5

log = logging.getLogger("semihdp")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    input: str
    out_dir: str
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    alpha: float = 1.0
    gamma: float = 1.0
    a_kappa: float = 2.0
    b_kappa: float = 2.0
    fixed_kappa: float | None = None
    eta: list[float] | None = None
    mu0: float = 0.0
    lam: float = 10.0
    shape: float = 1.0
    rate: float = 1.0
    trunc_eps: float = 1e-4
    jitter_variance: float = 0.0
    standardize: bool = True
    chains: int = 1
    workers: int = 1
    grid_points: int = 200
    pass_threshold: float | None = None

    def __post_init__(self):
        if self.jitter_variance < 0:
            raise ConfigError("jitter_variance must be >= 0")
        if self.chains < 1 or self.workers < 1:
            raise ConfigError("chains and workers must be >= 1")
        if self.grid_points < 2:
            raise ConfigError("grid_points must be >= 2")
        if not Path(self.input).is_file():
            raise DataError(f"input file {self.input} does not exist")

    def hyper(self, n_groups: int) -> HyperParams:
        base = NIGBase(self.mu0, self.lam, self.shape, self.rate)
        return HyperParams(
            n_groups=n_groups, alpha=self.alpha, gamma=self.gamma, a_kappa=self.a_kappa, b_kappa=self.b_kappa,
            eta=self.eta, base0=base, base00=base, trunc_eps=self.trunc_eps, fixed_kappa=self.fixed_kappa,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sampler"] = asdict(self.sampler)
        return d


def _add_run_flags(p: argparse.ArgumentParser):
    d = SamplerConfig()
    g = p.add_argument_group("sampler")
    g.add_argument("--n-burnin", type=int, default=d.n_burnin)
    g.add_argument("--n-iter", type=int, default=d.n_iter)
    g.add_argument("--thin", type=int, default=d.thin)
    g.add_argument("--c-update-mode", choices=C_UPDATE_MODES, default=d.c_update_mode)
    g.add_argument("--empty-measure", choices=EMPTY_MEASURES, default=d.empty_measure,
                   help="how F is drawn for restaurants with no groups (default: %(default)s)")
    g.add_argument("--pool-size", type=int, default=d.pool_size)
    g.add_argument("--pool-thin", type=int, default=d.pool_thin)
    g.add_argument("--pool-burnin", type=int, default=d.pool_burnin)
    g.add_argument("--seed", type=int, default=d.seed)
    g.add_argument("--validate-every", type=int, default=0)
    g.add_argument("--chains", type=int, default=1)
    g.add_argument("--workers", type=int, default=1)
    h = p.add_argument_group("prior")
    h.add_argument("--alpha", type=float, default=1.0)
    h.add_argument("--gamma", type=float, default=1.0)
    h.add_argument("--a-kappa", type=float, default=2.0)
    h.add_argument("--b-kappa", type=float, default=2.0)
    h.add_argument("--fixed-kappa", type=float, default=None)
    h.add_argument("--eta", type=float, nargs="+", default=None)
    h.add_argument("--mu0", type=float, default=0.0)
    h.add_argument("--lam", type=float, default=10.0)
    h.add_argument("--shape", type=float, default=1.0)
    h.add_argument("--rate", type=float, default=1.0)
    h.add_argument("--trunc-eps", type=float, default=1e-4)
    q = p.add_argument_group("preprocessing and output")
    q.add_argument("--jitter-variance", type=float, default=0.0)
    q.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=True)
    q.add_argument("--grid-points", type=int, default=200)
    q.add_argument("--pass-threshold", type=float, default=None,
                   help="threshold on the original scale for the pass probability (default: pooled mean)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semihdp", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate one of the built-in scenarios to CSV")
    g.add_argument("--scenario", required=True, choices=SCENARIO_IDS)
    g.add_argument("--n-per-group", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    r = sub.add_parser("run", help="fit the model and write records plus summaries")
    r.add_argument("--input", required=True)
    r.add_argument("--out-dir", required=True)
    _add_run_flags(r)

    s = sub.add_parser("summarize", help="summarise an existing records file")
    s.add_argument("--records", required=True, nargs="+")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--manifest", default=None, help="manifest.json holding the data transform")
    s.add_argument("--pairs", nargs="*", default=[], help="group pairs for Bayes factors, e.g. 1,2")
    s.add_argument("--grid", type=float, nargs=3, metavar=("LO", "HI", "N"), default=None)
    s.add_argument("--pass-threshold", type=float, default=None)
    s.add_argument("--loss", choices=("binder", "vi"), default="binder")

    o = sub.add_parser("oracle-check", help="compare closed forms with Monte Carlo")
    o.add_argument("--checks", nargs="*", choices=list(oracles.CHECKS), default=None)
    o.add_argument("--scale", type=float, default=1.0, help="multiplier on the Monte Carlo budgets")
    return p


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    if args.n_per_group < 1:
        raise ConfigError("--n-per-group must be >= 1")
    data = generate_scenario(scenario_spec(args.scenario, args.n_per_group, args.seed))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(data, args.out)
    print(f"wrote {data.n_groups} groups to {args.out}")
    return EXIT_OK


def config_from_args(args) -> RunConfig:
    try:
        sampler = SamplerConfig(
            n_burnin=args.n_burnin, n_iter=args.n_iter, thin=args.thin, c_update_mode=args.c_update_mode,
            pool_size=args.pool_size, pool_thin=args.pool_thin, pool_burnin=args.pool_burnin, seed=args.seed,
            validate_every=args.validate_every, empty_measure=args.empty_measure,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(
        input=args.input, out_dir=args.out_dir, sampler=sampler, alpha=args.alpha, gamma=args.gamma,
        a_kappa=args.a_kappa, b_kappa=args.b_kappa, fixed_kappa=args.fixed_kappa, eta=args.eta, mu0=args.mu0,
        lam=args.lam, shape=args.shape, rate=args.rate, trunc_eps=args.trunc_eps,
        jitter_variance=args.jitter_variance, standardize=args.standardize, chains=args.chains,
        workers=args.workers, grid_points=args.grid_points, pass_threshold=args.pass_threshold,
    )


def _one_chain(data, hyper, sampler: SamplerConfig, path: str):
    diag = ChainDiagnostics()
    records = run_chain(data, hyper, sampler, diagnostics=diag)
    write_records(records, path)
    trunc = [float(x) for x in diag.trunc_log]
    return {
        "records": path,
        "n_records": len(records),
        "wall_time": diag.wall_time,
        "max_truncation_error": max(trunc) if trunc else 0.0,
        "truncation_violations": int(sum(x > hyper.trunc_eps for x in trunc)),
        "mh_stats": diag.mh_stats,
    }


def write_summaries(records, out_dir: Path, group_ids, transform: Transform, pooled, grid_points=200,
                    pass_threshold=None, loss="binder", pairs=(), grid=None) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    sim = analysis.similarity_matrix(records)
    analysis.write_similarity_csv(sim, out_dir / "similarity.csv", group_ids)
    post = analysis.partition_posterior(records)
    analysis.write_partitions_csv(post, out_dir / "partitions.csv")
    if grid is None:
        lo, hi = float(np.min(pooled)), float(np.max(pooled))
        pad = 0.25 * (hi - lo) + 1e-9
        grid = np.linspace(lo - pad, hi + pad, grid_points)
    for g, gid in enumerate(group_ids):
        dens = analysis.density_summary(records, g, grid, transform.mean, transform.sd)
        analysis.write_density_csv(dens, out_dir / f"density_{gid}.csv")
    thr = transform.mean if pass_threshold is None else pass_threshold
    table = analysis.functional_table(records, range(len(group_ids)), float(transform.to_standard(thr)))
    analysis.write_functionals_csv(table, out_dir / "functionals.csv", group_ids)
    bfs = {}
    for pair in pairs:
        i, j = (int(x) - 1 for x in pair.split(","))
        bfs[pair] = analysis.bayes_factor_pair(records, i, j)
    point = analysis.point_partition(records, loss)
    summary = {
        "point_partition": analysis.format_partition(point),
        "top_partitions": [(analysis.format_partition(p), pr) for p, pr in post.most_likely(5)],
        "bayes_factors": {k: ("inf" if np.isinf(v) else v) for k, v in bfs.items()},
        "pass_threshold_standardised": float(transform.to_standard(thr)),
    }
    if len(records) >= 10:
        summary["ess_population_clusters"] = analysis.ess_population_clusters(records)
    return summary


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    data = ingest_csv(cfg.input)
    try:
        hyper = cfg.hyper(data.n_groups)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rng = np.random.default_rng(cfg.sampler.seed)
    model_data, transform = preprocess(data, cfg.jitter_variance, cfg.standardize, rng)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    jobs = []
    for k in range(cfg.chains):
        sc = SamplerConfig(**{**asdict(cfg.sampler), "seed": cfg.sampler.seed + k})
        name = "records.jsonl" if cfg.chains == 1 else f"records_chain{k}.jsonl"
        jobs.append((model_data, hyper, sc, str(out / name)))
    if cfg.workers > 1 and cfg.chains > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            chains = list(ex.map(_one_chain, *zip(*jobs)))
    else:
        chains = [_one_chain(*job) for job in jobs]
    records = [r for ch in chains for r in read_records(ch["records"])]
    if not records:
        raise ConfigError("no records kept; increase --n-iter or reduce --thin")
    summary = write_summaries(records, out, data.group_ids, transform, data.pooled(), cfg.grid_points,
                              cfg.pass_threshold)
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "seed": cfg.sampler.seed,
        "group_ids": data.group_ids,
        "transform": transform.to_dict(),
        "chains": chains,
        "summary": summary,
        "wall_time": time.perf_counter() - start,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"{len(records)} records; point partition {summary['point_partition']}; outputs in {out}")
    return EXIT_OK


def cmd_summarize(args) -> int:
    records = []
    for path in args.records:
        try:
            records.extend(read_records(path))
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"cannot read records from {path}: {exc}") from exc
    if not records:
        raise DataError("records file is empty")
    n_groups = len(records[0].c)
    manifest_path = Path(args.manifest) if args.manifest else Path(args.records[0]).parent / "manifest.json"
    transform, group_ids = Transform(), [str(i + 1) for i in range(n_groups)]
    if manifest_path.is_file():
        m = json.loads(manifest_path.read_text())
        transform = Transform(**m["transform"])
        group_ids = m.get("group_ids", group_ids)
    elif args.manifest:
        raise ConfigError(f"manifest {args.manifest} not found")
    for pair in args.pairs:
        parts = pair.split(",")
        if len(parts) != 2 or not all(p.isdigit() and 1 <= int(p) <= n_groups for p in parts) or parts[0] == parts[1]:
            raise ConfigError(f"bad pair {pair!r}; expected two distinct group numbers like 1,2")
    grid = None
    if args.grid is not None:
        lo, hi, n = args.grid
        if not hi > lo or n < 2:
            raise ConfigError("--grid needs LO < HI and N >= 2")
        grid = np.linspace(lo, hi, int(n))
    pooled = np.array([transform.mean - 4 * transform.sd, transform.mean + 4 * transform.sd])
    summary = write_summaries(records, Path(args.out_dir), group_ids, transform, pooled,
                              pass_threshold=args.pass_threshold, loss=args.loss, pairs=args.pairs, grid=grid)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    if args.scale <= 0:
        raise ConfigError("--scale must be positive")
    results = oracles.run_all(args.checks, args.scale)
    failed = 0
    for name, rows in results.items():
        bad = [r for r in rows if not r.passed]
        failed += len(bad)
        print(f"{'PASS' if not bad else 'FAIL'} {name}: {len(rows) - len(bad)}/{len(rows)} checks")
        for r in bad:
            print("  " + r.line())
    return EXIT_ORACLE if failed else EXIT_OK


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "summarize": cmd_summarize, "oracle-check": cmd_oracle_check}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SamplerError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
