"""Test collections, run/qrels ingestion and simulated judgment elicitation.

A collection file is JSON lines: one header object
``{"type": "header", "queries": [...], "metric": ..., "samplers": {...},
"exact_zero": bool}`` followed by one object per judged sample
``{"q", "part", "u", "qp", "sid"}``.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

import numpy as np

from .errors import CorruptCollectionError, InputError, ValidationError
from .metrics import KeySpace, Part, RankedList, System, TableOracle, UtilityOracle, parse_metric, query_sample
from .sampling import IdenticalSystems, SamplerSpec, build_sampler, draw_indices

MIN_Q_PROB = 1e-300


@dataclass(frozen=True)
class JudgedSample:
    query: str
    part: Part
    utility: float
    q_prob: float
    sampler_id: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "part", tuple(self.part))
        if not (isinstance(self.q_prob, (int, float)) and self.q_prob >= MIN_Q_PROB and self.q_prob <= 1.0):
            raise CorruptCollectionError(
                f"sample ({self.query}, {self.part}) has recorded Q {self.q_prob!r} outside (0, 1]")
        if not math.isfinite(self.utility) or self.utility < 0:
            raise ValidationError(f"sample ({self.query}, {self.part}) has utility {self.utility!r}")


@dataclass(frozen=True, eq=False)
class TestCollection:
    queries: tuple[str, ...]
    metric: str
    samples: tuple[JudgedSample, ...] = ()
    registry: Mapping[str, SamplerSpec] = field(default_factory=dict)
    exact_zero: bool = False

    __test__ = False  # not a pytest class

    def __post_init__(self) -> None:
        object.__setattr__(self, "queries", query_sample(self.queries))
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "registry", MappingProxyType(dict(self.registry)))
        metric = parse_metric(self.metric)
        qset = set(self.queries)
        bound = metric.utility_bound
        for s in self.samples:
            if s.sampler_id not in self.registry:
                raise ValidationError(f"sample refers to unknown sampler id {s.sampler_id!r}")
            if s.query not in qset:
                raise ValidationError(f"sample query {s.query!r} is not in the query sample")
            if bound is not None and s.utility > bound:
                raise ValidationError(f"utility {s.utility!r} exceeds M = {bound!r}")

    def __len__(self) -> int:
        return len(self.samples)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TestCollection):
            return NotImplemented
        return (self.queries == other.queries and self.metric == other.metric
                and self.samples == other.samples and dict(self.registry) == dict(other.registry)
                and self.exact_zero == other.exact_zero)


# ------------------------------------------------------------ judge models


class JudgeModel:
    """Assessors drawn afresh per elicitation; ``expected_utility`` is closed form."""

    max_utility: float | None = None

    def expected_utility(self, query: str, part: Part) -> float:
        raise NotImplementedError

    def elicit(self, query: str, part: Part, rng: np.random.Generator) -> float:
        raise NotImplementedError

    def as_oracle(self) -> UtilityOracle:
        return _ExpectedOracle(self)


class _ExpectedOracle(UtilityOracle):
    deterministic = False

    def __init__(self, judges: JudgeModel):
        self.judges = judges
        self.max_utility = judges.max_utility

    def utility(self, query: str, part: Part) -> float:
        return self.judges.expected_utility(query, part)

    def values(self, space, codes) -> np.ndarray:
        return np.array([self.utility(q, p) for q, p in space.decode(codes)], dtype=np.float64)


class FlipNoiseJudges(JudgeModel):
    """Binary labels from ``oracle``, each flipped with probability ``flip``."""

    def __init__(self, oracle: UtilityOracle, flip: float):
        if not 0.0 <= flip <= 1.0:
            raise InputError("flip probability must lie in [0, 1]")
        self.oracle = oracle
        self.flip = float(flip)
        self.max_utility = 1.0

    def _truth(self, query: str, part: Part) -> float:
        u = self.oracle.utility(query, part)
        if u not in (0.0, 1.0):
            raise ValidationError(f"flip noise needs binary utilities, got {u!r}")
        return u

    def expected_utility(self, query: str, part: Part) -> float:
        u = self._truth(query, part)
        return u * (1.0 - self.flip) + (1.0 - u) * self.flip

    def elicit(self, query: str, part: Part, rng: np.random.Generator) -> float:
        u = self._truth(query, part)
        return 1.0 - u if rng.random() < self.flip else u


class CategoricalJudges(JudgeModel):
    """Per-pair categorical label distributions over fixed utility ``levels``.

    Pairs without an entry fall back to ``default`` (a probability vector).
    """

    def __init__(self, levels: Sequence[float], probs: Mapping[tuple[str, Part], Sequence[float]],
                 default: Sequence[float] | None = None):
        self.levels = np.asarray(levels, dtype=np.float64)
        if self.levels.ndim != 1 or self.levels.size == 0 or np.any(self.levels < 0):
            raise InputError("levels must be a nonempty vector of nonnegative utilities")
        self.max_utility = float(self.levels.max())
        self.probs = {k: self._check(v) for k, v in probs.items()}
        self.default = None if default is None else self._check(default)

    def _check(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        if p.shape != self.levels.shape or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise InputError("each categorical must be a probability vector over the levels")
        return p

    def _dist(self, query: str, part: Part) -> np.ndarray:
        p = self.probs.get((query, tuple(part)), self.default)
        if p is None:
            raise InputError(f"no assessor distribution for ({query}, {part})")
        return p

    def expected_utility(self, query: str, part: Part) -> float:
        return float(np.dot(self._dist(query, part), self.levels))

    def elicit(self, query: str, part: Part, rng: np.random.Generator) -> float:
        p = self._dist(query, part)
        return float(self.levels[min(int(np.searchsorted(np.cumsum(p), rng.random(), side="right")),
                                     self.levels.size - 1)])


def expected_utility(judges: JudgeModel | UtilityOracle, query: str, part: Part) -> float:
    """``v(x, part)``: mean judgment over the assessor population."""
    if isinstance(judges, JudgeModel):
        return judges.expected_utility(query, part)
    return judges.utility(query, part)


# -------------------------------------------------------------- simulation


def simulate_judgments(spec: SamplerSpec, registry: Mapping[str, System],
                       source: UtilityOracle | JudgeModel, n: int, seed: int,
                       queries: Sequence[str], sampler_id: str = "s0") -> TestCollection:
    """Draw ``n`` parts from the sampler described by ``spec`` and judge them.

    Deterministic oracles are asked once per distinct pair; judge models
    elicit a fresh assessment for every draw. Randomness: draws use the
    stream ``(seed, 0)``, assessors ``(seed, 1)``.
    """
    if n < 1:
        raise InputError("simulate_judgments needs n >= 1")
    queries = query_sample(queries)
    oracle = source if isinstance(source, UtilityOracle) else source.as_oracle()
    q = build_sampler(spec, registry, queries, oracle)
    if isinstance(q, IdenticalSystems):
        return TestCollection(queries, spec.metric, (), {sampler_id: spec}, exact_zero=True)
    draw_rng = np.random.default_rng([seed, 0])
    judge_rng = np.random.default_rng([seed, 1])
    idx = draw_indices(q.probs, n, draw_rng)
    keys = q.space.decode(q.codes[idx])
    probs = q.probs[idx].tolist()
    cache: dict = {}
    samples = []
    for (x, part), p in zip(keys, probs):
        if isinstance(source, JudgeModel):
            u = source.elicit(x, part, judge_rng)
        else:
            u = cache.get((x, part))
            if u is None:
                u = cache[(x, part)] = float(source.utility(x, part))
        samples.append(JudgedSample(x, part, float(u), p, sampler_id))
    return TestCollection(queries, spec.metric, tuple(samples), {sampler_id: spec})


def verify_probabilities(collection: TestCollection, registry: Mapping[str, System],
                         oracle: UtilityOracle | None = None, tol: float = 1e-12) -> None:
    """Check each recorded ``q_prob`` against its rebuilt sampler."""
    for sid, spec in collection.registry.items():
        mine = [s for s in collection.samples if s.sampler_id == sid]
        if not mine:
            continue
        q = build_sampler(spec, registry, collection.queries, oracle)
        if isinstance(q, IdenticalSystems):
            raise CorruptCollectionError(f"sampler {sid!r} is degenerate but has samples")
        got = q.prob_of([(s.query, s.part) for s in mine])
        rec = np.array([s.q_prob for s in mine])
        if np.any(np.abs(got - rec) > tol):
            raise CorruptCollectionError(f"recorded probabilities disagree with sampler {sid!r}")


# --------------------------------------------------------------------- I/O


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a temp file in the target directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def collection_to_text(c: TestCollection) -> str:
    header = {
        "type": "header",
        "queries": list(c.queries),
        "metric": c.metric,
        "samplers": {sid: spec.to_dict() for sid, spec in sorted(c.registry.items())},
        "exact_zero": c.exact_zero,
    }
    lines = [_dumps(header)]
    for s in c.samples:
        lines.append(_dumps({"q": s.query, "part": list(s.part), "u": s.utility,
                             "qp": s.q_prob, "sid": s.sampler_id}))
    return "\n".join(lines) + "\n"


def write_collection(c: TestCollection, path: str | os.PathLike) -> None:
    atomic_write_text(path, collection_to_text(c))


def read_collection(path: str | os.PathLike) -> TestCollection:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln.strip()]
    if not lines:
        raise ValidationError(f"{path}: empty collection file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:1: bad header: {exc}") from None
    if not isinstance(header, dict) or header.get("type") != "header":
        raise ValidationError(f"{path}:1: first line must be the header object")
    for key in ("queries", "metric", "samplers"):
        if key not in header:
            raise ValidationError(f"{path}:1: header lacks {key!r}")
    registry = {sid: SamplerSpec.from_dict(d) for sid, d in header["samplers"].items()}
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from None
        if not isinstance(rec, dict) or set(rec) != {"q", "part", "u", "qp", "sid"}:
            raise ValidationError(f"{path}:{lineno}: sample needs exactly q, part, u, qp, sid")
        part = rec["part"]
        if not isinstance(part, list) or len(part) not in (1, 2) or not all(isinstance(d, str) for d in part):
            raise ValidationError(f"{path}:{lineno}: part must be [doc] or [doc, doc]")
        if rec["sid"] not in registry:
            raise ValidationError(f"{path}:{lineno}: unknown sampler id {rec['sid']!r}")
        qp = rec["qp"]
        if not isinstance(qp, (int, float)) or isinstance(qp, bool) or qp < MIN_Q_PROB:
            raise CorruptCollectionError(f"{path}:{lineno}: recorded Q {qp!r} must be positive")
        if not isinstance(rec["u"], (int, float)) or isinstance(rec["u"], bool):
            raise ValidationError(f"{path}:{lineno}: utility must be a number")
        samples.append(JudgedSample(rec["q"], tuple(part), float(rec["u"]), float(qp), rec["sid"]))
    return TestCollection(tuple(header["queries"]), header["metric"], tuple(samples), registry,
                          bool(header.get("exact_zero", False)))


# -------------------------------------------------------- run and qrels


def parse_run(text: str, source: str = "<run>") -> System:
    """Parse ``qid Q0 docid rank score tag`` lines into one system.

    Lines are ordered per query by rank, then score descending, then docid;
    ranks are then renumbered 1..n.
    """
    rows: dict[str, list[tuple[int, float, str]]] = {}
    tags: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        f = line.split()
        if len(f) != 6 or f[1] != "Q0":
            raise ValidationError(f"{source}:{lineno}: expected 'qid Q0 docid rank score tag'")
        try:
            rank, score = int(f[3]), float(f[4])
        except ValueError:
            raise ValidationError(f"{source}:{lineno}: rank must be an integer and score a number") from None
        rows.setdefault(f[0], []).append((rank, score, f[2]))
        tags.add(f[5])
    if not rows:
        raise ValidationError(f"{source}: run file has no rankings")
    if len(tags) != 1:
        raise ValidationError(f"{source}: run file mixes system tags {sorted(tags)}")
    lists = {}
    for q, entries in rows.items():
        entries.sort(key=lambda e: (e[0], -e[1], e[2]))
        docs = [e[2] for e in entries]
        if len(set(docs)) != len(docs):
            raise ValidationError(f"{source}: duplicate docid in ranking for query {q!r}")
        lists[q] = RankedList(q, tuple(docs))
    return System(tags.pop(), lists)


def ingest_run(path: str | os.PathLike) -> System:
    with open(path, encoding="utf-8") as fh:
        return parse_run(fh.read(), str(path))


def run_to_text(system: System) -> str:
    out = []
    for q in system.queries:
        docs = system.rankings[q].docs
        n = len(docs)
        for r, d in enumerate(docs, start=1):
            out.append(f"{q} Q0 {d} {r} {n - r + 1} {system.id}")
    return "\n".join(out) + "\n"


def write_run(system: System, path: str | os.PathLike) -> None:
    atomic_write_text(path, run_to_text(system))


def parse_qrels(text: str, max_utility: float | None = None, source: str = "<qrels>") -> TableOracle:
    """Parse ``qid iteration docid relevance`` lines into a deterministic oracle.

    Unlisted pairs read as utility 0 and are flagged as assumed by
    :meth:`TableOracle.lookup`.
    """
    table: dict[str, dict[str, float]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        f = line.split()
        if len(f) != 4:
            raise ValidationError(f"{source}:{lineno}: expected 'qid iteration docid relevance'")
        try:
            rel = float(f[3])
        except ValueError:
            raise ValidationError(f"{source}:{lineno}: non-numeric relevance {f[3]!r}") from None
        if not math.isfinite(rel) or rel < 0 or (max_utility is not None and rel > max_utility):
            raise ValidationError(f"{source}:{lineno}: relevance {f[3]} outside [0, {max_utility}]")
        table.setdefault(f[0], {})[f[2]] = rel
    return TableOracle(table, max_utility=max_utility)


def ingest_qrels(path: str | os.PathLike, max_utility: float | None = None) -> TableOracle:
    with open(path, encoding="utf-8") as fh:
        return parse_qrels(fh.read(), max_utility, str(path))


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def qrels_to_text(oracle: TableOracle | UtilityOracle, queries: Sequence[str], docs: Sequence[str]) -> str:
    space = KeySpace(queries, docs)
    mat = oracle.doc_matrix(space)
    qi = [space.query_index(q) for q in queries]
    di = space.doc_indices(docs).tolist()
    out = []
    for q, a in zip(queries, qi):
        row = mat[a].tolist()
        for d, b in zip(docs, di):
            out.append(f"{q} 0 {d} {_num(row[b])}")
    return "\n".join(out) + "\n"
