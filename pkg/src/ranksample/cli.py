"""``ranksample`` command line.

Exit codes: 0 ok, 2 usage, 3 data/validation, 4 internal invariant. Errors
print a single ``error: <kind>: <message>`` line on stderr. Every output is
written to a temp file and renamed into place. Relative output paths are
resolved under ``$RANKSAMPLE_OUTDIR`` when that variable is set.

Randomness comes from the single ``--seed``: ``sample`` draws parts from
stream ``(seed, 0)`` and assessors from ``(seed, 1)``; ``experiment`` and
``pool-eval`` use ``(seed + replicate, *cell)`` per replicate.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .collection import (
    FlipNoiseJudges,
    atomic_write_text,
    ingest_qrels,
    ingest_run,
    qrels_to_text,
    read_collection,
    simulate_judgments,
    write_collection,
    write_run,
)
from .errors import InputError, InvariantError, RankSampleError, ValidationError
from .estimation import (
    CSV_COLUMNS,
    estimate_diff,
    estimate_utility,
    estimate_vs_baseline,
    rank_systems,
)
from .experiments import (
    DEFAULT_ALPHA,
    SCENARIOS,
    ExperimentSpec,
    SynthConfig,
    SystemTransform,
    deep_pool,
    derive_system,
    estimand_variances,
    gen_synth,
    replicate_rng,
    run_experiment,
    shallow_pool,
)
from .metrics import parse_metric
from .sampling import (
    HEURISTICS,
    TASKS,
    ApproxUtility,
    EvalTask,
    IdenticalSystems,
    SamplerSpec,
    build_sampler,
)

OUTDIR_ENV = "RANKSAMPLE_OUTDIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # one-line usage errors, exit 2
        raise UsageError(f"{self.prog}: {message}")


# ----------------------------------------------------------------- helpers


def _out_path(p: str) -> Path:
    path = Path(p)
    root = os.environ.get(OUTDIR_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _need_files(*paths) -> None:
    for p in paths:
        if p is None:
            continue
        if not Path(p).is_file():
            raise ValidationError(f"input file not found: {p}")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise InputError(f"expected comma-separated integers, got {text!r}") from None


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else ("true" if v is True else "false" if v is False else v)
                    for v in r])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(_out_path(out), text)


def _registry(paths):
    _need_files(*paths)
    systems = [ingest_run(p) for p in paths]
    reg = {}
    for s in systems:
        if s.id in reg:
            raise ValidationError(f"two run files share the system tag {s.id!r}")
        reg[s.id] = s
    return systems, reg


def _queries(args, systems):
    if getattr(args, "queries", None):
        _need_files(args.queries)
        qs = [ln.strip() for ln in Path(args.queries).read_text(encoding="utf-8").splitlines() if ln.strip()]
        return tuple(qs)
    return systems[0].queries


def _estimate_rows(estimates):
    return [[e.row()[c] for c in CSV_COLUMNS] for e in estimates]


# ------------------------------------------------------------- subcommands


def cmd_synth_gen(args) -> None:
    if args.paper_scale:
        cfg = SynthConfig.full_scale(args.seed)
    else:
        cfg = SynthConfig(args.users, args.items, _floats(args.alpha), _floats(args.levels), args.seed)
    oracle, opt = gen_synth(cfg)
    out = _out_path(args.out)
    atomic_write_text(out / "oracle.qrels", qrels_to_text(oracle, oracle.space.queries, oracle.space.docs))
    write_run(opt, out / "OPT.run")
    meta = {"users": cfg.n_queries, "items": cfg.n_docs, "alpha": list(cfg.dirichlet_alpha),
            "levels": list(cfg.utility_levels), "seed": cfg.seed, "max_utility": cfg.max_utility}
    atomic_write_text(out / "synth.json", json.dumps(meta, sort_keys=True) + "\n")


def cmd_derive(args) -> None:
    _need_files(args.run)
    base = ingest_run(args.run)
    out = _out_path(args.out)
    for t in args.transform:
        s = derive_system(base, SystemTransform.parse(t))
        write_run(s, out / f"{s.id}.run")


def _approx(args) -> ApproxUtility:
    table = None
    if args.approx == "custom-table":
        if not args.approx_table:
            raise InputError("--approx custom-table needs --approx-table")
        _need_files(args.approx_table)
        oracle = ingest_qrels(args.approx_table)
        table = {q: dict(d) for q, d in oracle.table.items()}
    return ApproxUtility(args.approx, decay=args.decay, scale=args.approx_scale,
                         horizon=args.approx_horizon, table=table)


def cmd_design_sampler(args) -> None:
    systems, reg = _registry(args.runs + ([args.baseline] if args.baseline else []))
    metric = parse_metric(args.metric)
    ids = [s.id for s in systems]
    base = ids.pop() if args.baseline else None
    spec = SamplerSpec(task=args.task, metric=args.metric, systems=tuple(ids),
                       baseline=base, epsilon=args.epsilon, approx_utility=_approx(args))
    oracle = None
    if args.approx == "true-oracle":
        if not args.qrels:
            raise InputError("--approx true-oracle needs --qrels")
        _need_files(args.qrels)
        oracle = ingest_qrels(args.qrels, metric.utility_bound)
    q = build_sampler(spec, reg, _queries(args, systems), oracle)
    if isinstance(q, IdenticalSystems):
        warnings.warn(f"systems {list(q.system_ids)} are identical on this metric; "
                      "every difference is exactly zero")
    atomic_write_text(_out_path(args.out), spec.to_json() + "\n")


def _load_spec(path) -> SamplerSpec:
    _need_files(path)
    return SamplerSpec.from_json(Path(path).read_text(encoding="utf-8"))


def cmd_sample(args) -> None:
    _need_files(args.qrels)
    spec = _load_spec(args.sampler)
    systems, reg = _registry(args.runs)
    metric = parse_metric(spec.metric)
    oracle = ingest_qrels(args.qrels, metric.utility_bound)
    source = FlipNoiseJudges(oracle, args.flip) if args.flip else oracle
    c = simulate_judgments(spec, reg, source, args.n, args.seed, _queries(args, systems), args.sampler_id)
    write_collection(c, _out_path(args.out))


def _collection_and_metric(args):
    _need_files(args.collection)
    c = read_collection(args.collection)
    return c, parse_metric(args.metric or c.metric)


def cmd_estimate(args) -> None:
    c, metric = _collection_and_metric(args)
    systems, _ = _registry(args.runs)
    ests = [estimate_utility(c, s, metric, args.alpha) for s in systems]
    _emit(_csv_text(CSV_COLUMNS, _estimate_rows(ests)), args.out)


def cmd_compare(args) -> None:
    c, metric = _collection_and_metric(args)
    a_sys, _ = _registry(args.run_a)
    (b,), _ = _registry([args.run_b])
    if len(a_sys) == 1:
        ests = [estimate_diff(c, a_sys[0], b, metric, args.alpha)]
    else:
        ests = estimate_vs_baseline(c, a_sys, b, metric, args.alpha)
    _emit(_csv_text(CSV_COLUMNS, _estimate_rows(ests)), args.out)


def cmd_rank(args) -> None:
    c, metric = _collection_and_metric(args)
    systems, _ = _registry(args.runs)
    ranked = rank_systems(c, systems, metric, args.alpha)
    rows = [[i + 1, sid] + [e.row()[col] for col in CSV_COLUMNS] for i, (sid, e) in enumerate(ranked)]
    _emit(_csv_text(("rank", "system") + CSV_COLUMNS, rows), args.out)


def cmd_pool_eval(args) -> None:
    _need_files(args.qrels)
    (system,), _ = _registry([args.run])
    metric = parse_metric(args.metric)
    oracle = ingest_qrels(args.qrels, metric.utility_bound)
    queries = _queries(args, [system])
    rows = []
    if args.method == "shallow":
        rows.append(["shallow", 0, shallow_pool(system, oracle, metric, args.budget, queries)])
    else:
        if args.seed is None:
            raise UsageError("pool-eval --method deep requires --seed")
        for r in range(args.replicates):
            v = deep_pool(system, oracle, metric, args.budget, queries, replicate_rng(args.seed, r),
                          args.pool_depth)
            rows.append(["deep", r, v])
    _emit(_csv_text(("method", "replicate", "value"), rows), args.out)


def cmd_variance(args) -> None:
    _need_files(args.qrels)
    spec = _load_spec(args.sampler)
    paths = args.runs + ([args.baseline] if args.baseline else [])
    systems, reg = _registry(paths)
    metric = parse_metric(args.metric or spec.metric)
    oracle = ingest_qrels(args.qrels, metric.utility_bound)
    queries = _queries(args, systems)
    base = systems.pop() if args.baseline else None
    task = EvalTask(args.task, tuple(systems), metric, queries, base)
    q = build_sampler(spec, reg, queries, oracle)
    labels = task.labels
    if isinstance(q, IdenticalSystems):
        var = np.zeros(len(labels))
    else:
        t = task.tables
        var = estimand_variances(q, task, oracle.values(t.space, t.universe))
    rows = [[lab, float(v), float(v) / args.n] for lab, v in zip(labels, var)]
    total = math.fsum(var.tolist())
    rows.append(["total", total, total / args.n])
    _emit(_csv_text(("estimand", "sigma_times_n", "variance"), rows), args.out)


def cmd_experiment(args) -> None:
    if args.paper_scale:
        cfg = SynthConfig.full_scale(args.seed)
    else:
        cfg = SynthConfig(args.users, args.items, _floats(args.alpha), _floats(args.levels), args.seed)
    spec = ExperimentSpec(
        scenario=args.scenario, synth=cfg,
        transforms=tuple(SystemTransform.parse(t) for t in args.transform) if args.transform else None,
        metric=parse_metric(args.metric) if args.metric else None,
        budgets=_ints(args.budgets) if args.budgets else None,
        replicates=args.replicates, seed=args.seed,
        samplers=tuple(args.samplers.split(",")) if args.samplers else None,
        window=args.window, alpha=args.ci_alpha, out_dir=str(_out_path(args.out)), jobs=args.jobs)
    run_experiment(spec)


# ------------------------------------------------------------------ parser


def _add_metric(p, required=True):
    p.add_argument("--metric", required=required,
                   help="metric as name[@arg][,k=..,p=..,base=..,M=..], e.g. dcg@100, prec@10, rbp@0.8")


def _add_synth(p):
    p.add_argument("--users", type=int, default=600, help="number of users (queries)")
    p.add_argument("--items", type=int, default=200, help="number of items (documents)")
    p.add_argument("--alpha", default=",".join(map(str, DEFAULT_ALPHA)),
                   help="Dirichlet parameters, one per utility level")
    p.add_argument("--levels", default="0,1,2,3,4", help="ascending utility levels")
    p.add_argument("--paper-scale", action="store_true", help="use 6000 users x 2000 items")


def _add_approx(p):
    p.add_argument("--approx", default="rank-decay",
                   choices=("rank-decay", "constant", "true-oracle", "custom-table"),
                   help="approximate utility source")
    p.add_argument("--decay", default="linear", choices=("linear", "hyperbolic"), help="rank-decay shape")
    p.add_argument("--approx-scale", type=float, default=1.0, help="rank-decay scale or constant value")
    p.add_argument("--approx-horizon", type=float, default=None,
                   help="rank at which linear decay hits zero (default: longest ranking)")
    p.add_argument("--approx-table", help="qrels file of approximate utilities (custom-table)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ranksample", description="Importance-sampling evaluation of ranking systems.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth-gen", help="generate a synthetic oracle and the perfect system")
    _add_synth(p)
    p.add_argument("--seed", type=int, required=True, help="random seed")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth_gen)

    p = sub.add_parser("derive", help="derive SHIFT-m / REV-m systems from a run")
    p.add_argument("--run", required=True, help="base run file")
    p.add_argument("--transform", action="append", required=True, help="OPT, SHIFT-m or REV-m; repeatable")
    p.add_argument("-o", "--out", required=True, help="output directory (<name>.run per transform)")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("design-sampler", help="write a sampler spec (JSON)")
    p.add_argument("--task", required=True, choices=TASKS + HEURISTICS, help="sampling objective")
    p.add_argument("--runs", nargs="+", required=True, help="run files of the systems")
    p.add_argument("--baseline", help="baseline run file (vs_baseline)")
    _add_metric(p)
    p.add_argument("--epsilon", type=float, default=0.05, help="uniform smoothing weight")
    _add_approx(p)
    p.add_argument("--qrels", help="judgments, for --approx true-oracle")
    p.add_argument("--queries", help="file with one query id per line (default: first run's queries)")
    p.add_argument("-o", "--out", required=True, help="sampler spec path")
    p.set_defaults(func=cmd_design_sampler)

    p = sub.add_parser("sample", help="draw and judge a test collection")
    p.add_argument("--sampler", required=True, help="sampler spec from design-sampler")
    p.add_argument("--runs", nargs="+", required=True, help="run files of the systems named in the sampler spec")
    p.add_argument("--qrels", required=True, help="judgments used as the assessor")
    p.add_argument("--n", type=int, required=True, help="number of draws")
    p.add_argument("--seed", type=int, required=True, help="random seed")
    p.add_argument("--flip", type=float, default=0.0, help="assessor flip-noise probability")
    p.add_argument("--sampler-id", default="s0", help="id recorded with each sample")
    p.add_argument("--queries", help="file with one query id per line")
    p.add_argument("-o", "--out", required=True, help="collection path (JSONL)")
    p.set_defaults(func=cmd_sample)

    for name, func, hlp in (("estimate", cmd_estimate, "estimate system utilities"),
                            ("rank", cmd_rank, "rank systems against the mean baseline")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--collection", required=True, help="collection JSONL")
        p.add_argument("--runs", nargs="+", required=True, help="run files")
        _add_metric(p, required=False)
        p.add_argument("--alpha", type=float, default=0.05, help="CI level is 1 - alpha")
        p.add_argument("-o", "--out", help="CSV path (default: stdout)")
        p.set_defaults(func=func)

    p = sub.add_parser("compare", help="estimate U(a) - U(b); several --run-a compare each to b")
    p.add_argument("--collection", required=True, help="collection JSONL")
    p.add_argument("--run-a", nargs="+", required=True, help="run file(s) of the candidate system(s)")
    p.add_argument("--run-b", required=True, help="run file of the reference system")
    _add_metric(p, required=False)
    p.add_argument("--alpha", type=float, default=0.05, help="CI level is 1 - alpha")
    p.add_argument("-o", "--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("pool-eval", help="shallow or deep pooling baseline")
    p.add_argument("--run", required=True, help="run file")
    p.add_argument("--qrels", required=True, help="judgments")
    _add_metric(p)
    p.add_argument("--budget", type=int, required=True, help="number of judgments")
    p.add_argument("--method", choices=("shallow", "deep"), default="shallow", help="pooling scheme")
    p.add_argument("--pool-depth", type=int, default=None, help="deep-pool depth (default: metric depth)")
    p.add_argument("--replicates", type=int, default=1, help="deep-pool replicates")
    p.add_argument("--seed", type=int, help="random seed (deep pooling)")
    p.add_argument("--queries", help="file with one query id per line")
    p.add_argument("-o", "--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_pool_eval)

    p = sub.add_parser("variance", help="exact estimator variance of a sampler")
    p.add_argument("--sampler", required=True, help="sampler spec")
    p.add_argument("--task", required=True, choices=TASKS, help="estimands to score")
    p.add_argument("--runs", nargs="+", required=True, help="run files of the task systems")
    p.add_argument("--baseline", help="baseline run file (vs_baseline)")
    p.add_argument("--qrels", required=True, help="true judgments")
    _add_metric(p, required=False)
    p.add_argument("--n", type=int, required=True, help="sample size")
    p.add_argument("--queries", help="file with one query id per line")
    p.add_argument("-o", "--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_variance)

    p = sub.add_parser("experiment", help="replicate study on synthetic data")
    p.add_argument("--scenario", required=True, choices=SCENARIOS, help="evaluation scenario")
    _add_synth(p)
    p.add_argument("--transform", action="append", help="systems to derive from OPT (default: family)")
    _add_metric(p, required=False)
    p.add_argument("--budgets", help="comma-separated sample sizes")
    p.add_argument("--replicates", type=int, default=100, help="replicates per cell")
    p.add_argument("--samplers", help="comma-separated sampler names")
    p.add_argument("--window", type=int, default=5, help="systems per comparison window")
    p.add_argument("--ci-alpha", type=float, default=0.05, help="CI level is 1 - alpha")
    p.add_argument("--seed", type=int, required=True, help="seed for data and replicates")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
    p.add_argument("-o", "--out", required=True, help="output directory for CSV tables")
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda m, *a, **k: print(f"warning: {m}", file=sys.stderr)
            args.func(args)
        return 0
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"error: invariant: {exc}", file=sys.stderr)
        return 4
    except RankSampleError as exc:
        kind = type(exc).__name__.removesuffix("Error").lower() or "data"
        print(f"error: {kind}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # anything else is a bug
        print(f"error: internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
