"""Synthetic data, pooling baselines, exact variance and replicate studies.

Replicate ``r`` of any study draws from ``default_rng([base_seed + r, *stream])``
where ``stream`` names the study cell (sampler, budget, comparison), so
results do not depend on how replicates are split across worker processes.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from collections.abc import Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .collection import atomic_write_text
from .errors import BudgetError, InfiniteVarianceError, InputError
from .kernels import exact_sum, exact_sum_sq_ratio, row_stats
from .metrics import (
    DenseOracle,
    MetricSpec,
    System,
    UtilityOracle,
    exact_utility,
    query_sample,
    target_distribution,
)
from .sampling import (
    ApproxUtility,
    EvalTask,
    IdenticalSystems,
    SamplingDistribution,
    _rank_matrix,
    draw_indices,
    heuristic_sampler,
    optimal_pair,
    optimal_ranking,
    optimal_single,
    optimal_vs_baseline,
)
from .estimation import normal_quantile

DEFAULT_ALPHA = (0.54, 0.25, 0.175, 0.03, 0.005)


# ------------------------------------------------------------------ SYNTH


@dataclass(frozen=True)
class SynthConfig:
    n_queries: int = 600
    n_docs: int = 200
    dirichlet_alpha: tuple[float, ...] = DEFAULT_ALPHA
    utility_levels: tuple[float, ...] = (0.0, 1.0, 2.0, 3.0, 4.0)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "dirichlet_alpha", tuple(float(a) for a in self.dirichlet_alpha))
        object.__setattr__(self, "utility_levels", tuple(float(v) for v in self.utility_levels))
        if self.n_queries < 1 or self.n_docs < 1:
            raise InputError("SYNTH needs at least one user and one item")
        if len(self.dirichlet_alpha) != len(self.utility_levels):
            raise InputError("one Dirichlet parameter per utility level")
        if any(a <= 0 for a in self.dirichlet_alpha):
            raise InputError("Dirichlet parameters must be positive")
        if any(b <= a for a, b in zip(self.utility_levels, self.utility_levels[1:])):
            raise InputError("utility levels must ascend")

    @classmethod
    def full_scale(cls, seed: int = 0) -> "SynthConfig":
        return cls(n_queries=6000, n_docs=2000, seed=seed)

    @property
    def max_utility(self) -> float:
        return self.utility_levels[-1]


def _ids(prefix: str, n: int) -> list[str]:
    width = max(4, len(str(n - 1)))
    return [f"{prefix}{i:0{width}d}" for i in range(n)]


def gen_synth(config: SynthConfig) -> tuple[DenseOracle, System]:
    """Per-pair utilities ``~ Categorical(theta)``, ``theta ~ Dirichlet(alpha)``, and
    the perfect system sorting each user's items by utility (ties by id)."""
    rng = np.random.default_rng(config.seed)
    users = _ids("u", config.n_queries)
    items = _ids("i", config.n_docs)
    levels = np.asarray(config.utility_levels)
    alpha = np.asarray(config.dirichlet_alpha)
    mat = np.empty((config.n_queries, config.n_docs))
    lists = {}
    doc_idx = np.arange(config.n_docs)
    for a in range(config.n_queries):
        theta = rng.dirichlet(alpha, size=config.n_docs)
        r = rng.random(config.n_docs)
        cdf = np.cumsum(theta, axis=1)
        level = np.minimum((r[:, None] >= cdf).sum(axis=1), levels.size - 1)
        mat[a] = levels[level]
        order = np.lexsort((doc_idx, -mat[a]))
        lists[users[a]] = [items[i] for i in order]
    oracle = DenseOracle(users, items, mat, max_utility=config.max_utility)
    return oracle, System.from_lists("OPT", lists)


@dataclass(frozen=True)
class SystemTransform:
    kind: str
    m: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("OPT", "SHIFT", "REV"):
            raise InputError(f"unknown transform {self.kind!r}")
        if self.m < 0 or (self.kind == "REV" and self.m < 1):
            raise InputError(f"bad transform size {self.m}")

    @property
    def name(self) -> str:
        return "OPT" if self.kind == "OPT" else f"{self.kind}-{self.m}"

    @classmethod
    def parse(cls, text: str) -> "SystemTransform":
        t = text.strip().upper().replace(":", "-")
        if t == "OPT":
            return cls("OPT")
        kind, _, m = t.partition("-")
        try:
            return cls(kind, int(m))
        except ValueError:
            raise InputError(f"cannot parse transform {text!r}") from None


def derive_system(base: System, t: SystemTransform) -> System:
    """``SHIFT-m`` rotates every ranking down by m (wrapping to the top);
    ``REV-m`` reverses the top-m prefix."""
    lists = {}
    for q, rl in base.rankings.items():
        docs = list(rl.docs)
        if t.m > len(docs):
            raise InputError(f"{t.name} exceeds ranking length {len(docs)} for query {q!r}")
        if t.kind == "SHIFT" and t.m:
            docs = docs[-t.m:] + docs[:-t.m]
        elif t.kind == "REV":
            docs = docs[:t.m][::-1] + docs[t.m:]
        lists[q] = docs
    sid = base.id if t.kind == "OPT" else t.name
    return System.from_lists(sid, lists, next(iter(base.rankings.values())).depth_cutoff)


def desk_transforms(n_docs: int) -> tuple[SystemTransform, ...]:
    """The OPT, REV and SHIFT family, with REV sizes rescaled to the corpus size."""
    rev1 = min(n_docs, max(2, round(75 * n_docs / 2000)))
    rev2 = min(n_docs, max(rev1 + 1, round(150 * n_docs / 2000)))
    return (SystemTransform("OPT"), SystemTransform("REV", rev1), SystemTransform("REV", rev2),
            SystemTransform("SHIFT", 5), SystemTransform("SHIFT", 7))


def synth_approx(config: SynthConfig) -> ApproxUtility:
    """``u_hat = M * (1 - rank / n_docs)``."""
    return ApproxUtility("rank-decay", decay="linear", scale=config.max_utility, horizon=float(config.n_docs))


# ---------------------------------------------------------------- pooling


def _ranked_parts(system: System, metric: MetricSpec, queries: Sequence[str]):
    target = target_distribution(system, metric, queries)
    qi, d1, d2 = target.space.split(target.codes)
    R = _rank_matrix(system, target.space, queries)
    rank = R[qi, d1]
    if np.any(d2 >= 0):
        rank = np.where(d2 >= 0, np.maximum(rank, R[qi, np.maximum(d2, 0)]), rank)
    return target, qi, rank


def shallow_pool(system: System, oracle: UtilityOracle, metric: MetricSpec, budget: int,
                 queries: Sequence[str]) -> float:
    """Judge the top ``budget // l`` documents of every query; unjudged parts count 0."""
    queries = query_sample(queries)
    depth = budget // len(queries)
    if depth < 1:
        raise BudgetError(f"budget {budget} judges nothing for {len(queries)} queries")
    target, _, rank = _ranked_parts(system, metric, queries)
    judged = rank <= depth
    u = oracle.values(target.space, target.codes[judged])
    return exact_sum(target.weights[judged] * u)


def _pool_depth(system: System, metric: MetricSpec, queries: Sequence[str]) -> int:
    return max(metric.effective_depth(len(system.ranking(q).docs), system.ranking(q).depth_cutoff)
               for q in queries)


def per_query_utility(system: System, oracle: UtilityOracle, metric: MetricSpec,
                      queries: Sequence[str], depth: int | None = None) -> np.ndarray:
    """Metric value of each query, counting only parts within ``depth``."""
    queries = query_sample(queries)
    target, qi, rank = _ranked_parts(system, metric, queries)
    keep = np.ones(rank.shape, bool) if depth is None else rank <= depth
    u = oracle.values(target.space, target.codes[keep])
    contrib = target.weights[keep] * u * len(queries)
    pos = np.array([target.space.query_index(q) for q in queries])
    out = np.zeros(len(target.space.queries))
    np.add.at(out, qi[keep], contrib)
    return out[pos]


def deep_pool(system: System, oracle: UtilityOracle, metric: MetricSpec, budget: int,
              queries: Sequence[str], seed: int | np.random.Generator,
              pool_depth: int | None = None, _per_query: np.ndarray | None = None) -> float:
    """Judge the top ``pool_depth`` of ``budget // pool_depth`` random queries and
    average their per-query utilities. Unbiased when the depth covers the cutoff."""
    queries = query_sample(queries)
    l = len(queries)
    full = _pool_depth(system, metric, queries)
    b = full if pool_depth is None else int(pool_depth)
    if b < 1:
        raise BudgetError("pool depth must be >= 1")
    n_q = min(budget // b, l)
    if n_q < 1:
        raise BudgetError(f"budget {budget} cannot cover one query at depth {b}")
    if b < full:
        warnings.warn(f"deep pool depth {b} is below the metric depth {full}; estimate is biased",
                      stacklevel=2)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    chosen = rng.choice(l, size=n_q, replace=False)
    per_q = per_query_utility(system, oracle, metric, queries, b) if _per_query is None else _per_query
    return math.fsum(per_q[chosen]) / n_q


# -------------------------------------------------------- analytic variance


def _aligned(q: SamplingDistribution, task: EvalTask) -> tuple[np.ndarray, float]:
    t = task.tables
    pq = q.lookup(t.universe, t.space)
    own = t.space.translate(q.codes, q.space) if q.space != t.space else q.codes
    outside = ~np.isin(own, t.universe)
    return pq, exact_sum(q.probs[outside])


def estimand_variances(q: SamplingDistribution, task: EvalTask, utilities: np.ndarray) -> np.ndarray:
    """``Var_Q[z_j]`` for each estimand of ``task`` (single draw, exact enumeration)."""
    pq, outside_mass = _aligned(q, task)
    F = utilities[None, :] * task.contrasts
    on = pq > 0
    if np.any(F[:, ~on] != 0):
        raise InfiniteVarianceError("sampler gives zero probability to a part the estimand needs")
    out = np.empty(F.shape[0])
    for j, f in enumerate(F):
        mu = exact_sum(f)
        resid = f[on] - mu * pq[on]
        out[j] = exact_sum_sq_ratio(resid, pq[on]) + mu * mu * outside_mass
    return out


def analytic_variance(q: SamplingDistribution, task: EvalTask, oracle: UtilityOracle, n: int) -> float:
    """``Sigma(Q)``: summed variance of the task's estimators at ``n`` draws."""
    if n < 1:
        raise InputError("n must be >= 1")
    t = task.tables
    u = oracle.values(t.space, t.universe)
    return float(exact_sum(estimand_variances(q, task, u)) / n)


def tau_objective(task: EvalTask, tau: np.ndarray, utilities: np.ndarray) -> float:
    """Per-draw ``Sigma(tau)`` when each baseline gets its own optimal sampler."""
    W = task.tables.weights
    D = W - tau[None, :]
    F = utilities[None, :] * D
    a = exact_sum(utilities * np.sqrt(np.sum(D * D, axis=0)))
    return a * a - exact_sum(np.array([exact_sum(f) ** 2 for f in F]))


# ----------------------------------------------------------- accuracy


def pairwise_accuracy(true_diff: float, estimated_diff: float) -> int:
    return int(true_diff * estimated_diff > 0)


def kendall_tau(ranking_a: Sequence, ranking_b: Sequence) -> float:
    """Kendall's tau between two orderings of the same items; ties count discordant."""
    a, b = list(ranking_a), list(ranking_b)
    if sorted(map(str, a)) != sorted(map(str, b)) or len(set(a)) != len(a):
        raise InputError("rankings must order the same distinct items")
    k = len(a)
    if k < 2:
        raise InputError("Kendall's tau needs at least two items")
    pos = {x: i for i, x in enumerate(b)}
    conc = disc = 0
    for i in range(k):
        for j in range(i + 1, k):
            if pos[a[j]] > pos[a[i]]:
                conc += 1
            else:
                disc += 1
    return (conc - disc) / (k * (k - 1) / 2)


# ------------------------------------------------------------- replicates


def replicate_rng(base_seed: int, replicate: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([base_seed + replicate, *stream])


def _block(args):
    probs, terms, n, base_seed, reps, stream = args
    idx = np.vstack([draw_indices(probs, n, replicate_rng(base_seed, r, *stream)) for r in reps])
    out = [row_stats(t, idx) for t in terms]
    return np.array([m for m, _ in out]), np.array([s for _, s in out])


def replicate_estimates(q: SamplingDistribution, task: EvalTask, utilities: np.ndarray, n: int,
                        replicates: int, base_seed: int, stream: Sequence[int] = (),
                        jobs: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Estimates and per-sample stds for every task estimand over replicates.

    Returns ``(means, sigmas)`` of shape ``(estimands, replicates)``. Equal to
    judging each draw with a deterministic oracle and running the estimator.
    """
    t = task.tables
    codes = q.codes if q.space == t.space else t.space.translate(q.codes, q.space)
    cols = np.searchsorted(t.universe, codes)
    cols_c = np.minimum(cols, t.universe.size - 1)
    inside = t.universe[cols_c] == codes
    F = np.where(inside[None, :], utilities[cols_c][None, :] * task.contrasts[:, cols_c], 0.0)
    terms = [np.ascontiguousarray(f / q.probs) for f in F]
    reps = list(range(replicates))
    if jobs <= 1 or replicates < 2:
        means, sigmas = _block((q.probs, terms, n, base_seed, reps, tuple(stream)))
    else:
        chunks = [reps[i::jobs] for i in range(jobs)]
        chunks = [c for c in chunks if c]
        with ProcessPoolExecutor(max_workers=len(chunks)) as ex:
            results = list(ex.map(_block, [(q.probs, terms, n, base_seed, c, tuple(stream)) for c in chunks]))
        means = np.empty((len(terms), replicates))
        sigmas = np.empty((len(terms), replicates))
        for c, (m, s) in zip(chunks, results):
            means[:, c] = m
            sigmas[:, c] = s
    return means, sigmas


# -------------------------------------------------------------- harness


SCENARIOS = ("single", "pair", "vs_baseline", "ranking")


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: str
    synth: SynthConfig = field(default_factory=SynthConfig)
    transforms: tuple[SystemTransform, ...] | None = None
    metric: MetricSpec | None = None
    budgets: tuple[int, ...] | None = None
    replicates: int = 100
    seed: int = 0
    samplers: tuple[str, ...] | None = None
    window: int = 5
    alpha: float = 0.05
    out_dir: str | None = None
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise InputError(f"unknown scenario {self.scenario!r}")
        if self.replicates < 1:
            raise InputError("replicates must be >= 1")
        if self.budgets is not None and any(b < 1 for b in self.budgets):
            raise InputError("budgets must be positive")

    def resolved_metric(self) -> MetricSpec:
        return self.metric or MetricSpec("dcg", k=self.synth.n_docs, max_utility=self.synth.max_utility)

    def resolved_budgets(self) -> tuple[int, ...]:
        if self.budgets is not None:
            return self.budgets
        l = self.synth.n_queries
        if self.scenario == "single":
            return (5 * l,)
        return tuple(max(1, int(l * f)) for f in (0.05, 0.1, 0.2, 0.4, 0.8))


@dataclass
class SynthWorld:
    config: SynthConfig
    oracle: DenseOracle
    systems: list[System]
    metric: MetricSpec
    queries: tuple[str, ...]
    truth: dict[str, float]

    @property
    def by_truth(self) -> list[System]:
        return sorted(self.systems, key=lambda s: (-self.truth[s.id], s.id))


def build_world(config: SynthConfig, transforms: Sequence[SystemTransform] | None = None,
                metric: MetricSpec | None = None) -> SynthWorld:
    oracle, opt = gen_synth(config)
    transforms = desk_transforms(config.n_docs) if transforms is None else transforms
    systems = [derive_system(opt, t) for t in transforms]
    ids = [s.id for s in systems]
    if len(set(ids)) != len(ids):
        raise InputError(f"duplicate systems in {ids}")
    metric = metric or MetricSpec("dcg", k=config.n_docs, max_utility=config.max_utility)
    queries = opt.queries
    truth = {s.id: exact_utility(s, oracle, metric, queries) for s in systems}
    return SynthWorld(config, oracle, systems, metric, queries, truth)


def _csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def _single_sampler(name: str, system: System, world: SynthWorld, approx: ApproxUtility):
    if name == "opt":
        return optimal_single(system, world.metric, approx, world.queries)
    if name == "target":
        return heuristic_sampler("target_only", [system], world.metric, None, world.queries)
    if name == "uniform":
        return heuristic_sampler("uniform", [system], world.metric, None, world.queries)
    raise InputError(f"unknown single-system sampler {name!r}")


def _contrast_sampler(name: str, task: EvalTask, approx: ApproxUtility, oracle=None):
    sys_ = task.participants
    if name == "naive":
        return heuristic_sampler("naive_average", sys_, task.metric, approx, task.queries, oracle)
    if name == "opt":
        if task.kind == "pair":
            return optimal_pair(sys_[0], sys_[1], task.metric, approx, task.queries, oracle)
        if task.kind == "vs_baseline":
            return optimal_vs_baseline(task.systems, task.baseline, task.metric, approx, task.queries, oracle)
        return optimal_ranking(task.systems, task.metric, approx, task.queries, oracle)
    raise InputError(f"unknown comparative sampler {name!r}")


def _windows(world: SynthWorld, size: int) -> list[list[System]]:
    ordered = world.by_truth
    size = min(size, len(ordered))
    return [ordered[i:i + size] for i in range(len(ordered) - size + 1)]


def run_single(spec: ExperimentSpec, world: SynthWorld) -> dict[str, list[dict]]:
    approx = synth_approx(world.config)
    samplers = spec.samplers or ("opt", "target", "uniform")
    budget = spec.resolved_budgets()[0]
    z = normal_quantile(spec.alpha)
    rows, reps, pools = [], [], []
    for si, system in enumerate(world.systems):
        task = EvalTask("single", (system,), world.metric, world.queries)
        u = world.oracle.values(task.tables.space, task.tables.universe)
        truth = world.truth[system.id]
        for ki, name in enumerate(samplers):
            q = _single_sampler(name, system, world, approx)
            var = estimand_variances(q, task, u)[0]
            means, sig = replicate_estimates(q, task, u, budget, spec.replicates, spec.seed,
                                             (0, si, ki), spec.jobs)
            m, s = means[0], sig[0]
            half = z * s / math.sqrt(budget)
            covered = (m - half <= truth) & (truth <= m + half)
            rows.append({
                "system": system.id, "sampler": name, "budget": budget, "replicates": spec.replicates,
                "true_value": truth, "mean_estimate": float(np.mean(m)),
                "empirical_std": float(np.std(m, ddof=1)) if m.size > 1 else 0.0,
                "mean_std_error": float(np.mean(s)), "mean_ci_halfwidth": float(np.mean(half)),
                "coverage": float(np.mean(covered)), "analytic_sigma_n": float(var),
                "analytic_std": math.sqrt(var / budget),
            })
            for r in range(spec.replicates):
                reps.append({"system": system.id, "sampler": name, "replicate": r,
                             "estimate": float(m[r]), "std_error": float(s[r]),
                             "covered": int(covered[r])})
        per_q = per_query_utility(system, world.oracle, world.metric, world.queries,
                                  _pool_depth(system, world.metric, world.queries))
        deep = [deep_pool(system, world.oracle, world.metric, budget, world.queries,
                          replicate_rng(spec.seed, r, 1, si), _per_query=per_q)
                for r in range(spec.replicates)]
        pools.append({"system": system.id, "budget": budget, "true_value": truth,
                      "shallow_pool": shallow_pool(system, world.oracle, world.metric, budget, world.queries),
                      "deep_pool_mean": float(np.mean(deep)),
                      "deep_pool_std": float(np.std(deep, ddof=1)) if len(deep) > 1 else 0.0})
    return {"single_summary": rows, "single_replicates": reps, "single_pooling": pools}


def _comparisons(spec: ExperimentSpec, world: SynthWorld) -> list[EvalTask]:
    m, X = world.metric, world.queries
    if spec.scenario == "pair":
        o = world.by_truth
        return [EvalTask("pair", (o[i], o[i + 1]), m, X) for i in range(len(o) - 1)]
    tasks = []
    for w in _windows(world, spec.window):
        if spec.scenario == "vs_baseline":
            mid = len(w) // 2
            tasks.append(EvalTask("vs_baseline", tuple(w[:mid] + w[mid + 1:]), m, X, w[mid]))
        else:
            tasks.append(EvalTask("ranking", tuple(w), m, X))
    return tasks


def _true_contrasts(task: EvalTask, u: np.ndarray) -> np.ndarray:
    return np.array([exact_sum(u * d) for d in task.contrasts])


def run_comparative(spec: ExperimentSpec, world: SynthWorld) -> dict[str, list[dict]]:
    approx = synth_approx(world.config)
    samplers = spec.samplers or ("opt", "naive")
    budgets = spec.resolved_budgets()
    tasks = _comparisons(spec, world)
    var_rows, acc_rows, rep_rows = [], [], []
    for ti, task in enumerate(tasks):
        u = world.oracle.values(task.tables.space, task.tables.universe)
        truth = _true_contrasts(task, u)
        label = "|".join(task.labels)
        for ki, name in enumerate(samplers):
            for kind, au in (("approx", approx), ("true", ApproxUtility("true-oracle"))):
                q = _contrast_sampler(name, task, au, world.oracle)
                if isinstance(q, IdenticalSystems):
                    sig = 0.0
                else:
                    sig = float(exact_sum(estimand_variances(q, task, u)))
                var_rows.append({"comparison": label, "sampler": name, "utilities": kind,
                                 "sigma_times_n": sig})
            q = _contrast_sampler(name, task, approx)
            for bi, n in enumerate(budgets):
                if isinstance(q, IdenticalSystems):
                    means = np.zeros((len(truth), spec.replicates))
                    sigmas = np.zeros_like(means)
                else:
                    means, sigmas = replicate_estimates(q, task, u, n, spec.replicates, spec.seed,
                                                   (ti, ki, bi), spec.jobs)
                for r in range(spec.replicates):
                    est = means[:, r]
                    if spec.scenario == "ranking":
                        ids = [s.id for s in task.systems]
                        true_order = [ids[j] for j in sorted(range(len(ids)), key=lambda j: (-truth[j], ids[j]))]
                        est_order = [ids[j] for j in sorted(range(len(ids)), key=lambda j: (-est[j], ids[j]))]
                        score = kendall_tau(est_order, true_order)
                    else:
                        score = float(np.mean([pairwise_accuracy(a, b) for a, b in zip(truth, est)]))
                    rep_rows.append({"comparison": label, "sampler": name, "budget": n, "replicate": r,
                                     "score": score,
                                     "estimates": ";".join(repr(float(v)) for v in est),
                                     "std_errors": ";".join(repr(float(v)) for v in sigmas[:, r])})
    metric_name = "kendall_tau" if spec.scenario == "ranking" else "accuracy"
    for name in samplers:
        for n in budgets:
            scores = [r["score"] for r in rep_rows if r["sampler"] == name and r["budget"] == n]
            acc_rows.append({"sampler": name, "budget": n, metric_name: float(np.mean(scores)),
                             "std": float(np.std(scores, ddof=1)) if len(scores) > 1 else 0.0,
                             "cells": len(scores)})
    for name in samplers:
        for kind in ("approx", "true"):
            vals = [r["sigma_times_n"] for r in var_rows if r["sampler"] == name and r["utilities"] == kind]
            var_rows.append({"comparison": "mean", "sampler": name, "utilities": kind,
                             "sigma_times_n": float(np.mean(vals))})
    s = spec.scenario
    return {f"{s}_variance": var_rows, f"{s}_{metric_name}": acc_rows, f"{s}_replicates": rep_rows}


def run_experiment(spec: ExperimentSpec) -> dict[str, str]:
    """Run one scenario on SYNTH; returns CSV text per table (and writes it
    under ``out_dir`` when set)."""
    world = build_world(spec.synth, spec.transforms, spec.metric)
    if spec.scenario == "single":
        tables = run_single(spec, world)
    else:
        tables = run_comparative(spec, world)
    truth_rows = [{"system": s.id, "true_value": world.truth[s.id]} for s in world.by_truth]
    tables = {"systems": truth_rows, **tables}
    texts = {name: _csv(rows) for name, rows in tables.items()}
    if spec.out_dir is not None:
        out = Path(spec.out_dir)
        for name, text in texts.items():
            atomic_write_text(out / f"{name}.csv", text)
    return texts
