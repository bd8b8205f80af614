"""Importance-sampling estimators over a judged test collection.

For a sample ``(x_i, part_i, u_i, q_i)`` the per-sample term is
``u_i * W(x_i, part_i) / q_i``; utility, difference and ranking estimates
average such terms with a system's weights, a weight difference, or the
difference to the mean-of-systems baseline. Sums are correctly rounded.
"""
from __future__ import annotations

import math
import warnings
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .collection import JudgedSample, TestCollection
from .errors import InputError, ReuseError, UndefinedRatioError
from .kernels import exact_sum
from .metrics import MetricSpec, System, UtilityOracle, space_for, target_distribution
from .sampling import (
    IdenticalSystems,
    SamplerSpec,
    SamplingDistribution,
    build_sampler,
)


@dataclass(frozen=True)
class Estimate:
    """Point estimate, per-sample spread ``std_error`` and a normal CI."""

    estimand: str
    value: float
    std_error: float
    n: int
    ci_low: float
    ci_high: float
    alpha: float

    def row(self) -> dict:
        return {"estimand": self.estimand, "value": self.value, "std_error": self.std_error,
                "n": self.n, "ci_low": self.ci_low, "ci_high": self.ci_high,
                "exact_zero": False}


@dataclass(frozen=True)
class DiffEstimate(Estimate):
    system_a: str = ""
    system_b: str = ""
    exact_zero: bool = False

    def row(self) -> dict:
        r = super().row()
        r["exact_zero"] = self.exact_zero
        return r


@dataclass(frozen=True)
class RatioEstimate:
    """Ratio of two unbiased estimates; itself biased, so no interval."""

    value: float
    numerator: float
    denominator: float
    biased: bool = True


CSV_COLUMNS = ("estimand", "value", "std_error", "n", "ci_low", "ci_high", "exact_zero")


def normal_quantile(alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")
    return NormalDist().inv_cdf(1.0 - alpha / 2.0)


def confidence_interval(value: float, std_error: float, n: int, alpha: float = 0.05) -> tuple[float, float]:
    """``value ± z_{alpha/2} * std_error / sqrt(n)``."""
    if n < 2:
        raise InputError("confidence interval needs n >= 2")
    if std_error < 0:
        raise InputError("std_error must be >= 0")
    half = normal_quantile(alpha) * std_error / math.sqrt(n)
    return value - half, value + half


def _summarize(terms: np.ndarray, estimand: str, alpha: float) -> tuple[float, float, float, float]:
    n = terms.size
    if n == 0:
        raise InputError(f"no samples to estimate {estimand}")
    value = exact_sum(terms) / n
    if n == 1:
        return value, math.inf, -math.inf, math.inf
    d = terms - value
    sigma = math.sqrt(exact_sum(d * d) / (n - 1))
    lo, hi = confidence_interval(value, sigma, n, alpha)
    return value, sigma, min(lo, value), max(hi, value)


def _check_kind(collection: TestCollection, metric: MetricSpec) -> None:
    want = 1 if metric.part_kind == "single" else 2
    for s in collection.samples:
        if len(s.part) != want:
            raise InputError(f"collection holds {len(s.part)}-doc parts but {metric.name} needs {want}")


def sample_weights(collection: TestCollection, systems: Sequence[System], metric: MetricSpec) -> np.ndarray:
    """``W_j(x_i, part_i)`` for every system (rows) and sample (columns)."""
    _check_kind(collection, metric)
    X = collection.queries
    docs = {d for s in collection.samples for d in s.part}
    space = space_for(systems, X, docs)
    codes = space.encode_keys((s.query, s.part) for s in collection.samples)
    if np.any(codes < 0):
        raise InputError("collection sample outside the query sample")
    return np.vstack([target_distribution(s, metric, X, space).lookup(codes) for s in systems]) \
        if systems else np.zeros((0, codes.size))


def _uq(collection: TestCollection) -> tuple[np.ndarray, np.ndarray]:
    u = np.fromiter((s.utility for s in collection.samples), dtype=np.float64, count=len(collection.samples))
    q = np.fromiter((s.q_prob for s in collection.samples), dtype=np.float64, count=len(collection.samples))
    return u, q


def estimate_utility(collection: TestCollection, system: System, metric: MetricSpec,
                     alpha: float = 0.05, sampler: SamplingDistribution | None = None) -> Estimate:
    """Importance-sampling estimate of ``U(system)`` on the collection's query sample.

    Pass the generating ``sampler`` to get a warning when it misses part of
    the system's target support (the estimate is then biased low).
    """
    W = sample_weights(collection, [system], metric)[0]
    u, q = _uq(collection)
    if sampler is not None:
        target = target_distribution(system, metric, collection.queries)
        if np.any(sampler.lookup(target.codes, target.space) <= 0):
            warnings.warn(f"sampler does not cover the target support of {system.id!r}", stacklevel=2)
    value, se, lo, hi = _summarize(u * W / q, f"U({system.id})", alpha)
    return Estimate(f"U({system.id})", value, se, len(u), lo, hi, alpha)


def _diff(collection: TestCollection, a: System, b: System, Wa: np.ndarray, Wb: np.ndarray,
          metric: MetricSpec, alpha: float, identical: bool) -> DiffEstimate:
    name = f"D({a.id},{b.id})"
    n = len(collection.samples)
    if identical:
        return DiffEstimate(name, 0.0, 0.0, n, 0.0, 0.0, alpha, a.id, b.id, True)
    u, q = _uq(collection)
    value, se, lo, hi = _summarize(u * (Wa - Wb) / q, name, alpha)
    return DiffEstimate(name, value, se, n, lo, hi, alpha, a.id, b.id, False)


def _identical(a: System, b: System, metric: MetricSpec, queries) -> bool:
    ta = target_distribution(a, metric, queries, space_for([a, b], queries))
    tb = target_distribution(b, metric, queries, ta.space)
    return ta.same_entries(tb)


def estimate_diff(collection: TestCollection, system_a: System, system_b: System,
                  metric: MetricSpec, alpha: float = 0.05) -> DiffEstimate:
    """Estimate of ``U(a) - U(b)``; exactly zero when the weight tables coincide."""
    W = sample_weights(collection, [system_a, system_b], metric)
    same = _identical(system_a, system_b, metric, collection.queries)
    return _diff(collection, system_a, system_b, W[0], W[1], metric, alpha, same)


def estimate_vs_baseline(collection: TestCollection, systems: Sequence[System], baseline: System,
                         metric: MetricSpec, alpha: float = 0.05) -> list[DiffEstimate]:
    W = sample_weights(collection, list(systems) + [baseline], metric)
    return [_diff(collection, s, baseline, W[j], W[-1], metric, alpha,
                  _identical(s, baseline, metric, collection.queries))
            for j, s in enumerate(systems)]


def rank_systems(collection: TestCollection, systems: Sequence[System], metric: MetricSpec,
                 alpha: float = 0.05) -> list[tuple[str, DiffEstimate]]:
    """Systems in descending estimated order, each with its difference to tau.

    Order is by the systems' utility estimates on the shared samples (ties by
    id); each difference is that estimate minus the estimate for tau, which
    keeps the reported differences non-increasing down the list.
    """
    if len(systems) < 2:
        raise InputError("ranking needs k >= 2 systems")
    ids = [s.id for s in systems]
    if len(set(ids)) != len(ids):
        raise InputError("system ids must be unique")
    W = sample_weights(collection, systems, metric)
    u, q = _uq(collection)
    n = u.size
    if n == 0:
        raise InputError("no samples to rank with")
    tau = W.mean(axis=0)
    t_tau = u * tau / q
    tau_value = exact_sum(t_tau) / n
    identical = all(_identical(systems[0], s, metric, collection.queries) for s in systems[1:])
    rows = []
    for j, s in enumerate(systems):
        t_j = u * W[j] / q
        u_value = exact_sum(t_j) / n
        if identical:
            est = DiffEstimate(f"D({s.id},tau)", 0.0, 0.0, n, 0.0, 0.0, alpha, s.id, "tau", True)
        else:
            _, se, _, _ = _summarize(t_j - t_tau, "", alpha)
            value = u_value - tau_value
            lo, hi = (confidence_interval(value, se, n, alpha) if n > 1 else (-math.inf, math.inf))
            est = DiffEstimate(f"D({s.id},tau)", value, se, n, min(lo, value), max(hi, value),
                               alpha, s.id, "tau", False)
        rows.append((u_value, s.id, est))
    rows.sort(key=lambda r: (-r[0], r[1]) if not identical else (0.0, r[1]))
    return [(sid, est) for _, sid, est in rows]


def ratio_estimate(num: Estimate, den: Estimate) -> RatioEstimate:
    """``num / den`` (e.g. a normalized metric); flagged as biased."""
    if den.value == 0:
        raise UndefinedRatioError("denominator estimate is zero")
    return RatioEstimate(num.value / den.value, num.value, den.value, True)


def analytic_expectation(q: SamplingDistribution, space, codes, numerator) -> float:
    """Exact ``E_Q[numerator / Q]`` by enumerating the support of ``q``.

    Equals ``sum(numerator)`` whenever ``q`` covers every nonzero entry.
    """
    pq = q.lookup(np.asarray(codes, dtype=np.int64), space)
    f = np.asarray(numerator, dtype=np.float64)
    on = pq > 0
    return exact_sum(pq[on] * (f[on] / pq[on]))


# ------------------------------------------------------------------- reuse


def merge_collections(collections: Sequence[TestCollection], mode: str = "concat",
                      registry: Mapping[str, System] | None = None,
                      oracle: UtilityOracle | None = None) -> TestCollection:
    """Combine collections drawn on the same query sample.

    ``concat`` keeps each recorded probability; ``balance`` replaces it by the
    count-weighted mixture of every generating sampler, which needs the
    samplers to be rebuilt from ``registry``.
    """
    if not collections:
        raise InputError("nothing to merge")
    if mode not in ("concat", "balance"):
        raise InputError(f"unknown merge mode {mode!r}")
    first = collections[0]
    for c in collections[1:]:
        if set(c.queries) != set(first.queries):
            raise InputError("collections use different query samples")
    kinds = {len(s.part) for c in collections for s in c.samples}
    if len(kinds) > 1:
        raise InputError("collections mix single and pair parts")

    samples: list[JudgedSample] = []
    registry_out: dict[str, SamplerSpec] = {}
    for i, c in enumerate(collections):
        rename = {}
        for sid, spec in c.registry.items():
            new = sid
            if sid in registry_out and registry_out[sid] != spec:
                new = f"{sid}#{i}"
            rename[sid] = new
            registry_out[new] = spec
        samples.extend(s if rename[s.sampler_id] == s.sampler_id else
                       JudgedSample(s.query, s.part, s.utility, s.q_prob, rename[s.sampler_id])
                       for s in c.samples)
    exact_zero = all(c.exact_zero for c in collections)
    if mode == "concat":
        return TestCollection(first.queries, first.metric, tuple(samples), registry_out, exact_zero)

    if registry is None:
        raise ReuseError("balance merge needs the systems behind each sampler")
    counts: dict[str, int] = {}
    for s in samples:
        counts[s.sampler_id] = counts.get(s.sampler_id, 0) + 1
    sids = sorted(counts)
    dists = []
    for sid in sids:
        q = build_sampler(registry_out[sid], registry, first.queries, oracle)
        if isinstance(q, IdenticalSystems):
            raise ReuseError(f"sampler {sid!r} is degenerate and cannot be re-evaluated")
        dists.append(q)
    n = float(len(samples))
    keys = [(s.query, s.part) for s in samples]
    dens = np.zeros(len(samples))
    for sid, q in zip(sids, dists):
        dens += (counts[sid] / n) * q.prob_of(keys)
    mix_spec = SamplerSpec(task="mixture", metric=first.metric, epsilon=0.0,
                           components=tuple(registry_out[s] for s in sids),
                           counts=tuple(counts[s] for s in sids))
    merged = tuple(JudgedSample(s.query, s.part, s.utility, float(d), "balance")
                   for s, d in zip(samples, dens.tolist()))
    return TestCollection(first.queries, first.metric, merged, {"balance": mix_spec}, exact_zero)
