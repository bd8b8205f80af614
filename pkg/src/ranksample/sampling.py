"""Judgment sampling distributions.

Variance-optimal samplers for the four evaluation tasks share one shape:
mass ``u_hat(x, part) * g(x, part)`` over the pooled universe, where ``g``
is the target weight (single system), the absolute weight difference
(two systems), or the root of summed squared differences against a
baseline (k systems; the ranking task uses the entrywise-mean baseline).
Normalizers are exact sums over the universe, never sample estimates.
"""
from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from functools import cached_property
from types import MappingProxyType

import numpy as np

from .errors import DegenerateTaskError, InputError, ReuseError, ValidationError
from .kernels import exact_sum, inverse_cdf
from .metrics import (
    Key,
    KeySpace,
    MetricSpec,
    System,
    TableOracle,
    TargetDistribution,
    UtilityOracle,
    lookup_sorted,
    parse_metric,
    query_sample,
    space_for,
    target_distribution,
)

DEFAULT_EPSILON = 0.05
FLOOR_FRACTION = 1e-6

TASKS = ("single", "pair", "vs_baseline", "ranking")
HEURISTICS = ("naive_average", "uniform", "target_only")


@dataclass(frozen=True)
class IdenticalSystems:
    """Returned instead of a distribution when every contrast weight vanishes.

    The difference being estimated is exactly zero, so no judgments are needed.
    """

    system_ids: tuple[str, ...]


# ------------------------------------------------------------ approximations


@dataclass(frozen=True)
class ApproxUtility:
    """Prior guess ``u_hat`` used in place of unknown utilities.

    Modes: ``true-oracle`` (the oracle's own values), ``rank-decay``
    (``scale * (1 - rank / horizon)`` for ``decay="linear"`` or
    ``scale / (rank + offset)`` for ``decay="hyperbolic"``, averaged over
    the systems that rank the part), ``constant`` and ``custom-table``.
    Values below ``floor`` (default ``1e-6 * M``) are raised to it.
    """

    mode: str = "rank-decay"
    decay: str = "linear"
    scale: float = 1.0
    horizon: float | None = None
    offset: float = 34.0
    table: Mapping[str, Mapping[str, float]] | None = None
    floor: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("true-oracle", "rank-decay", "constant", "custom-table"):
            raise InputError(f"unknown approximate-utility mode {self.mode!r}")
        if self.decay not in ("linear", "hyperbolic"):
            raise InputError(f"unknown decay {self.decay!r}")
        if self.scale <= 0:
            raise InputError("approximate-utility scale must be positive")
        if self.horizon is not None and self.horizon <= 0:
            raise InputError("horizon must be positive")
        if self.floor is not None and self.floor <= 0:
            raise InputError("floor must be positive")
        if self.mode == "custom-table" and self.table is None:
            raise InputError("custom-table mode needs a table")

    def to_dict(self) -> dict:
        d: dict = {"mode": self.mode}
        if self.mode == "rank-decay":
            d.update(decay=self.decay, scale=self.scale, horizon=self.horizon, offset=self.offset)
        elif self.mode == "constant":
            d["scale"] = self.scale
        elif self.mode == "custom-table":
            d["table"] = {q: dict(sorted(v.items())) for q, v in sorted(self.table.items())}
        d["floor"] = self.floor
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ApproxUtility":
        known = {"mode", "decay", "scale", "horizon", "offset", "table", "floor"}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown approx_utility fields {sorted(extra)}")
        return cls(**dict(d))


def _rank_matrix(system: System, space: KeySpace, queries: Sequence[str]) -> np.ndarray:
    ranks = np.zeros((len(space.queries), len(space.docs)), dtype=np.int64)
    for q in queries:
        rl = system.ranking(q)
        ranks[space.query_index(q), space.doc_indices(rl.docs)] = np.arange(1, len(rl.docs) + 1)
    return ranks


def approx_values(approx: ApproxUtility, systems: Sequence[System], metric: MetricSpec,
                  queries: Sequence[str], space: KeySpace, codes: np.ndarray,
                  oracle: UtilityOracle | None = None) -> np.ndarray:
    """Floored ``u_hat`` at ``codes`` for the given participating systems."""
    codes = np.asarray(codes, dtype=np.int64)
    if approx.mode == "constant":
        vals = np.full(codes.shape, approx.scale)
    elif approx.mode == "true-oracle":
        if oracle is None:
            raise InputError("true-oracle approximate utilities need an oracle")
        vals = oracle.values(space, codes)
    elif approx.mode == "custom-table":
        vals = _table_values(TableOracle(approx.table), space, codes)
    else:
        qi, d1, d2 = space.split(codes)
        horizon = approx.horizon
        if horizon is None:
            horizon = max(len(s.ranking(q).docs) for s in systems for q in queries)
        total = np.zeros(codes.shape)
        count = np.zeros(codes.shape)
        for s in systems:
            R = _rank_matrix(s, space, queries)
            r1 = R[qi, d1].astype(np.float64)
            ranked = r1 > 0
            rank = r1
            if np.any(d2 >= 0):
                r2 = R[qi, np.maximum(d2, 0)].astype(np.float64)
                pair = d2 >= 0
                ranked = ranked & (~pair | (r2 > 0))
                rank = np.where(pair, 0.5 * (r1 + r2), r1)
            if approx.decay == "linear":
                v = approx.scale * (1.0 - rank / horizon)
            else:
                v = approx.scale / (rank + approx.offset)
            total += np.where(ranked, np.maximum(v, 0.0), 0.0)
            count += ranked
        vals = np.divide(total, count, out=np.zeros(codes.shape), where=count > 0)
    floor = approx.floor
    if floor is None:
        bound = metric.utility_bound
        if bound is None:
            bound = float(vals.max()) if vals.size and vals.max() > 0 else 1.0
        floor = FLOOR_FRACTION * bound
    return np.maximum(vals, floor)


def _table_values(oracle: TableOracle, space: KeySpace, codes: np.ndarray) -> np.ndarray:
    qi, d1, d2 = space.split(codes)
    mat = oracle.doc_matrix(space)
    first = mat[qi, d1]
    second = mat[qi, np.maximum(d2, 0)]
    return np.where(d2 >= 0, 0.5 * (first + second), first)


# ----------------------------------------------------------------- tables


@dataclass(frozen=True, eq=False)
class WeightTables:
    """Target weights of several systems aligned on their pooled universe."""

    space: KeySpace
    universe: np.ndarray
    weights: np.ndarray
    targets: tuple[TargetDistribution, ...]

    @property
    def system_ids(self) -> tuple[str, ...]:
        return tuple(t.system_id for t in self.targets)


def weight_tables(systems: Sequence[System], metric: MetricSpec, queries: Sequence[str],
                  space: KeySpace | None = None) -> WeightTables:
    queries = query_sample(queries)
    if space is None:
        space = space_for(systems, queries)
    targets = tuple(target_distribution(s, metric, queries, space) for s in systems)
    if targets:
        universe = np.unique(np.concatenate([t.codes for t in targets]))
    else:
        universe = np.zeros(0, np.int64)
    weights = np.vstack([lookup_sorted(t.codes, t.weights, universe) for t in targets]) \
        if targets else np.zeros((0, 0))
    universe.setflags(write=False)
    weights.setflags(write=False)
    return WeightTables(space, universe, weights, targets)


@dataclass(frozen=True, eq=False)
class EvalTask:
    """An evaluation scenario: the estimands whose variances a sampler trades off.

    ``single`` estimates ``U(S)`` for each system; ``pair`` the difference of
    two systems; ``vs_baseline`` each ``U(S_j) - U(baseline)``; ``ranking``
    each ``U(S_j) - U(tau)`` with ``tau`` the entrywise-mean target.
    """

    kind: str
    systems: tuple[System, ...]
    metric: MetricSpec
    queries: tuple[str, ...]
    baseline: System | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "systems", tuple(self.systems))
        object.__setattr__(self, "queries", query_sample(self.queries))
        if self.kind not in TASKS:
            raise InputError(f"unknown task {self.kind!r}")
        k = len(self.systems)
        if k < 1:
            raise InputError("task needs at least one system")
        if self.kind == "pair" and k != 2:
            raise InputError("pair task takes exactly two systems")
        if self.kind == "ranking" and k < 2:
            raise InputError("ranking task needs k >= 2 systems")
        if self.kind == "vs_baseline" and self.baseline is None:
            raise InputError("vs_baseline task needs a baseline")
        if self.kind != "vs_baseline" and self.baseline is not None:
            raise InputError("only vs_baseline takes a baseline")

    @property
    def participants(self) -> tuple[System, ...]:
        return self.systems + ((self.baseline,) if self.baseline is not None else ())

    @cached_property
    def tables(self) -> WeightTables:
        return weight_tables(self.participants, self.metric, self.queries)

    @cached_property
    def contrasts(self) -> np.ndarray:
        """One row per estimand: the weight vector its estimator integrates."""
        W = self.tables.weights
        if self.kind == "single":
            D = W.copy()
        elif self.kind == "pair":
            D = W[0:1] - W[1:2]
        elif self.kind == "vs_baseline":
            D = W[:-1] - W[-1]
        else:
            D = W - W.mean(axis=0)
        D.setflags(write=False)
        return D

    @property
    def labels(self) -> tuple[str, ...]:
        ids = [s.id for s in self.systems]
        if self.kind == "single":
            return tuple(ids)
        if self.kind == "pair":
            return (f"{ids[0]}-{ids[1]}",)
        if self.kind == "vs_baseline":
            return tuple(f"{i}-{self.baseline.id}" for i in ids)
        return tuple(f"{i}-tau" for i in ids)

    def approx(self, approx: ApproxUtility, oracle: UtilityOracle | None = None) -> np.ndarray:
        t = self.tables
        return approx_values(approx, self.participants, self.metric, self.queries,
                             t.space, t.universe, oracle)


# -------------------------------------------------------------- distribution


@dataclass(frozen=True, eq=False)
class SamplingDistribution:
    """Normalized ``Q(x, part)`` stored on its strictly positive support."""

    space: KeySpace
    codes: np.ndarray
    probs: np.ndarray
    universe: np.ndarray | None = None
    provenance: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        codes = np.ascontiguousarray(self.codes, dtype=np.int64)
        probs = np.ascontiguousarray(self.probs, dtype=np.float64)
        if codes.shape != probs.shape:
            raise InputError("codes and probabilities differ in length")
        if codes.size == 0:
            raise DegenerateTaskError("sampling distribution has empty support")
        if np.any(probs <= 0) or not np.all(np.isfinite(probs)):
            raise InputError("probabilities must be positive and finite on the support")
        if codes.size > 1 and np.any(np.diff(codes) <= 0):
            raise InputError("support codes must be strictly increasing")
        if abs(exact_sum(probs) - 1.0) > 1e-9:
            raise InputError("probabilities do not sum to 1")
        universe = codes if self.universe is None else np.ascontiguousarray(self.universe, dtype=np.int64)
        for a in (codes, probs, universe):
            a.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "universe", universe)
        object.__setattr__(self, "provenance", MappingProxyType(dict(self.provenance)))

    def __len__(self) -> int:
        return int(self.codes.size)

    @property
    def entries(self) -> dict[Key, float]:
        return dict(zip(self.space.decode(self.codes), self.probs.tolist()))

    def lookup(self, codes, space: KeySpace | None = None) -> np.ndarray:
        if space is not None and space != self.space:
            codes = self.space.translate(codes, space)
        return lookup_sorted(self.codes, self.probs, codes)

    def prob_of(self, keys) -> np.ndarray:
        return lookup_sorted(self.codes, self.probs, self.space.encode_keys(keys))

    def on(self, space: KeySpace) -> "SamplingDistribution":
        """The same distribution re-encoded in a (super)space."""
        if space == self.space:
            return self
        codes = space.translate(self.codes, self.space)
        universe = space.translate(self.universe, self.space)
        if np.any(codes < 0) or np.any(universe < 0):
            raise InputError("target space does not contain this distribution")
        order = np.argsort(codes)
        return SamplingDistribution(space, codes[order], self.probs[order], np.sort(universe),
                                    self.provenance)


def _from_mass(space: KeySpace, codes: np.ndarray, mass: np.ndarray,
               provenance: Mapping, universe: np.ndarray | None = None) -> SamplingDistribution | None:
    keep = mass > 0
    if not np.any(keep):
        return None
    m = mass[keep]
    probs = m / exact_sum(m)
    return SamplingDistribution(space, codes[keep], probs,
                                codes if universe is None else universe, provenance)


def _contrast_sampler(task: EvalTask, approx: ApproxUtility, oracle: UtilityOracle | None,
                      name: str) -> SamplingDistribution | IdenticalSystems:
    t = task.tables
    D = task.contrasts
    if D.shape[0] == 1:
        g = np.abs(D[0])
    else:
        g = np.sqrt(np.sum(D * D, axis=0))
    uh = task.approx(approx, oracle)
    q = _from_mass(t.space, t.universe, uh * g,
                   {"sampler": name, "systems": [s.id for s in task.participants]})
    if q is None:
        return IdenticalSystems(tuple(s.id for s in task.participants))
    return q


def optimal_single(system: System, metric: MetricSpec, approx: ApproxUtility,
                   queries: Sequence[str], oracle: UtilityOracle | None = None) -> SamplingDistribution:
    """``Q ∝ u_hat * W``: variance-optimal for one system's utility."""
    task = EvalTask("single", (system,), metric, queries)
    t = task.tables
    q = _from_mass(t.space, t.universe, task.approx(approx, oracle) * t.weights[0],
                   {"sampler": "optimal_single", "systems": [system.id]})
    if q is None:
        raise DegenerateTaskError(f"system {system.id!r} has no positive-weight parts")
    return q


def optimal_pair(system_a: System, system_b: System, metric: MetricSpec, approx: ApproxUtility,
                 queries: Sequence[str], oracle: UtilityOracle | None = None
                 ) -> SamplingDistribution | IdenticalSystems:
    """``Q ∝ u_hat * |W_a - W_b|``."""
    return _contrast_sampler(EvalTask("pair", (system_a, system_b), metric, queries),
                             approx, oracle, "optimal_pair")


def optimal_vs_baseline(systems: Sequence[System], baseline: System, metric: MetricSpec,
                        approx: ApproxUtility, queries: Sequence[str],
                        oracle: UtilityOracle | None = None) -> SamplingDistribution | IdenticalSystems:
    """``Q ∝ u_hat * sqrt(sum_j (W_j - W_baseline)^2)``."""
    return _contrast_sampler(EvalTask("vs_baseline", tuple(systems), metric, queries, baseline),
                             approx, oracle, "optimal_vs_baseline")


def optimal_tau(systems: Sequence[System], metric: MetricSpec, queries: Sequence[str]) -> TargetDistribution:
    """Entrywise mean of the systems' target weights (the best ranking baseline)."""
    if len(systems) < 2:
        raise InputError("optimal tau needs k >= 2 systems")
    t = weight_tables(systems, metric, queries)
    mean = t.weights.mean(axis=0)
    keep = mean > 0
    norms = {q: sum(tt.query_norms[q] for tt in t.targets) / len(systems) for q in t.targets[0].query_norms}
    return TargetDistribution("tau", metric, t.space, t.universe[keep], mean[keep], norms,
                              t.targets[0].n_queries, {"members": [s.id for s in systems]})


def optimal_ranking(systems: Sequence[System], metric: MetricSpec, approx: ApproxUtility,
                    queries: Sequence[str], oracle: UtilityOracle | None = None
                    ) -> SamplingDistribution | IdenticalSystems:
    """Baseline-comparison optimum with the mean-target baseline."""
    return _contrast_sampler(EvalTask("ranking", tuple(systems), metric, queries),
                             approx, oracle, "optimal_ranking")


def heuristic_sampler(kind: str, systems: Sequence[System], metric: MetricSpec,
                      approx: ApproxUtility | None, queries: Sequence[str],
                      oracle: UtilityOracle | None = None) -> SamplingDistribution:
    """Reference samplers: ``naive_average`` (``∝ u_hat * mean_j W_j``),
    ``uniform`` over the pooled universe, and ``target_only`` (``∝ mean_j W_j``)."""
    if kind not in HEURISTICS:
        raise InputError(f"unknown heuristic {kind!r}")
    if not systems:
        raise InputError("heuristic sampler needs at least one system")
    t = weight_tables(systems, metric, queries)
    if t.universe.size == 0:
        raise DegenerateTaskError("empty support universe")
    mean_w = t.weights.mean(axis=0)
    if kind == "uniform":
        mass = np.ones(t.universe.shape)
    elif kind == "target_only":
        mass = mean_w
    else:
        if approx is None:
            raise InputError("naive_average needs approximate utilities")
        mass = approx_values(approx, systems, metric, query_sample(queries), t.space, t.universe,
                             oracle) * mean_w
    return _from_mass(t.space, t.universe, mass, {"sampler": kind, "systems": [s.id for s in systems]})


def smooth(q: SamplingDistribution, epsilon: float, universe: np.ndarray | None = None
           ) -> SamplingDistribution:
    """``(1 - eps) * q + eps * Uniform(universe)``; support becomes the universe."""
    if not 0.0 <= epsilon < 1.0:
        raise InputError(f"smoothing epsilon must lie in [0, 1), got {epsilon}")
    universe = q.universe if universe is None else np.unique(np.asarray(universe, dtype=np.int64))
    if not np.all(np.isin(q.codes, universe)):
        raise InputError("universe must contain the support of q")
    if epsilon == 0.0:
        if np.array_equal(universe, q.universe):
            return q
        return SamplingDistribution(q.space, q.codes, q.probs, universe, q.provenance)
    base = lookup_sorted(q.codes, q.probs, universe)
    probs = (1.0 - epsilon) * base + epsilon / universe.size
    prov = dict(q.provenance)
    prov["epsilon"] = epsilon
    return SamplingDistribution(q.space, universe, probs, universe, prov)


def mixture(components: Sequence[SamplingDistribution], counts: Sequence[int]) -> SamplingDistribution:
    """Count-weighted mixture ``sum_i (n_i / n) Q_i`` (the balance-heuristic density)."""
    if not components or len(components) != len(counts):
        raise InputError("mixture needs one count per component")
    if any(c < 0 for c in counts) or sum(counts) <= 0:
        raise InputError("mixture counts must be nonnegative with a positive total")
    if len(components) == 1:
        return components[0]
    space = KeySpace.union(*(c.space for c in components))
    parts = [c.on(space) for c in components]
    codes = np.unique(np.concatenate([p.codes for p in parts]))
    universe = np.unique(np.concatenate([p.universe for p in parts]))
    n = float(sum(counts))
    dens = np.zeros(codes.shape)
    for p, c in zip(parts, counts):
        dens += (c / n) * lookup_sorted(p.codes, p.probs, codes)
    keep = dens > 0
    probs = dens[keep] / exact_sum(dens[keep])
    return SamplingDistribution(space, codes[keep], probs, universe,
                                {"sampler": "mixture", "counts": list(counts)})


def random_distribution(q_like: SamplingDistribution | tuple[KeySpace, np.ndarray],
                        rng: np.random.Generator, concentration: float = 1.0) -> SamplingDistribution:
    """Dirichlet-perturbed uniform distribution with full support on a universe."""
    if isinstance(q_like, SamplingDistribution):
        space, universe = q_like.space, q_like.universe
    else:
        space, universe = q_like
    p = rng.dirichlet(np.full(universe.size, concentration))
    p = np.maximum(p, 1e-300)
    return SamplingDistribution(space, universe, p / exact_sum(p), universe, {"sampler": "random"})


# ------------------------------------------------------------------ drawing


def draw_indices(probs: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. indices into ``probs`` by inverse-CDF lookup."""
    if n < 1:
        raise InputError("draw needs n >= 1")
    cdf = np.cumsum(probs)
    return inverse_cdf(cdf, rng.random(n) * cdf[-1])


def draw(q: SamplingDistribution, n: int, seed: int | np.random.Generator
         ) -> list[tuple[str, tuple[str, ...], float]]:
    """``n`` draws with replacement; each record carries the exact ``Q`` used."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    idx = draw_indices(q.probs, n, rng)
    keys = q.space.decode(q.codes[idx])
    return [(x, part, p) for (x, part), p in zip(keys, q.probs[idx].tolist())]


# ------------------------------------------------------------- sampler spec


@dataclass(frozen=True)
class SamplerSpec:
    """Serializable recipe that rebuilds a sampling distribution from system ids.

    ``task`` is one of the optimal tasks (``single``, ``pair``,
    ``vs_baseline``, ``ranking``), a heuristic (``naive_average``,
    ``uniform``, ``target_only``) or ``mixture`` of ``components`` with
    ``counts``.
    """

    task: str
    metric: str
    systems: tuple[str, ...] = ()
    baseline: str | None = None
    epsilon: float = DEFAULT_EPSILON
    approx_utility: ApproxUtility = field(default_factory=ApproxUtility)
    seed_policy: str = "seed+counter"
    components: tuple["SamplerSpec", ...] = ()
    counts: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "systems", tuple(self.systems))
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if self.task not in TASKS + HEURISTICS + ("mixture",):
            raise ValidationError(f"unknown sampler task {self.task!r}")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValidationError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if self.task == "mixture":
            if not self.components or len(self.components) != len(self.counts):
                raise ValidationError("mixture spec needs components with matching counts")
        elif not self.systems:
            raise ValidationError(f"{self.task} spec names no systems")
        parse_metric(self.metric)

    def to_dict(self) -> dict:
        d: dict = {
            "task": self.task,
            "metric": self.metric,
            "systems": list(self.systems),
            "epsilon": self.epsilon,
            "approx_utility": self.approx_utility.to_dict(),
            "seed_policy": self.seed_policy,
        }
        if self.baseline is not None:
            d["baseline"] = self.baseline
        if self.task == "mixture":
            d["components"] = [c.to_dict() for c in self.components]
            d["counts"] = list(self.counts)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SamplerSpec":
        try:
            return cls(
                task=d["task"],
                metric=d["metric"],
                systems=tuple(d.get("systems", ())),
                baseline=d.get("baseline"),
                epsilon=float(d.get("epsilon", DEFAULT_EPSILON)),
                approx_utility=ApproxUtility.from_dict(d.get("approx_utility", {})),
                seed_policy=d.get("seed_policy", "seed+counter"),
                components=tuple(cls.from_dict(c) for c in d.get("components", ())),
                counts=tuple(d.get("counts", ())),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed sampler spec: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "SamplerSpec":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"sampler spec is not JSON: {exc}") from None

    def referenced_systems(self) -> set[str]:
        ids = set(self.systems)
        if self.baseline:
            ids.add(self.baseline)
        for c in self.components:
            ids |= c.referenced_systems()
        return ids


def build_sampler(spec: SamplerSpec, registry: Mapping[str, System], queries: Sequence[str],
                  oracle: UtilityOracle | None = None) -> SamplingDistribution | IdenticalSystems:
    """Evaluate ``spec`` against registered systems (smoothing applied last)."""
    missing = sorted(spec.referenced_systems() - set(registry))
    if missing:
        raise ReuseError(f"sampler references unregistered systems {missing}")
    if spec.task == "mixture":
        comps = []
        for c in spec.components:
            q = build_sampler(c, registry, queries, oracle)
            if isinstance(q, IdenticalSystems):
                raise ReuseError("mixture component is degenerate (identical systems)")
            comps.append(q)
        q = mixture(comps, spec.counts)
        return smooth(q, spec.epsilon) if spec.epsilon > 0 else q
    metric = parse_metric(spec.metric)
    systems = [registry[s] for s in spec.systems]
    au = spec.approx_utility
    if spec.task == "single":
        if len(systems) != 1:
            raise ValidationError("single task takes exactly one system")
        q = optimal_single(systems[0], metric, au, queries, oracle)
    elif spec.task == "pair":
        if len(systems) != 2:
            raise ValidationError("pair task takes exactly two systems")
        q = optimal_pair(systems[0], systems[1], metric, au, queries, oracle)
    elif spec.task == "vs_baseline":
        if spec.baseline is None:
            raise ValidationError("vs_baseline spec needs a baseline")
        q = optimal_vs_baseline(systems, registry[spec.baseline], metric, au, queries, oracle)
    elif spec.task == "ranking":
        q = optimal_ranking(systems, metric, au, queries, oracle)
    else:
        q = heuristic_sampler(spec.task, systems, metric, au, queries, oracle)
    if isinstance(q, IdenticalSystems):
        return q
    q = replace(q, provenance={**q.provenance, "spec": spec.to_dict()})
    return smooth(q, spec.epsilon) if spec.epsilon > 0 else q
