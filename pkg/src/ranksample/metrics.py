"""Linearly decomposable ranking metrics and the target weight measure.

A metric writes the utility of a ranking as a weighted sum of part
utilities; a part is a single document ``(doc,)`` or an ordered document
pair ``(above, below)``. ``target_distribution`` turns one system's
rankings on a query sample into the weights ``W(x, part) = w / l`` that
every estimator uses as its numerator measure.

Query/part keys are packed into sorted ``int64`` codes through a
:class:`KeySpace`, so canonical order is the lexicographic order of
``(query_id, part)``.
"""
from __future__ import annotations

import math
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from .errors import CoverageError, InputError, ValidationError
from .kernels import exact_sum

Part = tuple[str, ...]
Key = tuple[str, Part]

SINGLE_KINDS = ("prec", "dcg", "gain", "mae", "mse", "rbp")
PAIR_KINDS = ("swaps", "wswaps")
KINDS = SINGLE_KINDS + PAIR_KINDS

_ALIASES = {
    "prec": "prec", "p": "prec", "precision": "prec", "precatk": "prec",
    "dcg": "dcg",
    "gain": "gain", "gainatk": "gain",
    "mae": "mae", "mse": "mse",
    "rbp": "rbp",
    "swaps": "swaps", "swapcount": "swaps",
    "wswaps": "wswaps", "weightedswaps": "wswaps",
}


def make_part(*docs: str) -> Part:
    if len(docs) not in (1, 2) or not all(isinstance(d, str) and d for d in docs):
        raise InputError(f"a part is one or two non-empty doc ids, got {docs!r}")
    if len(docs) == 2 and docs[0] == docs[1]:
        raise InputError(f"pair part needs distinct docs, got {docs!r}")
    return tuple(docs)


# ---------------------------------------------------------------- rankings


@dataclass(frozen=True)
class RankedList:
    query: str
    docs: tuple[str, ...]
    depth_cutoff: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "docs", tuple(self.docs))
        if not self.query:
            raise InputError("empty query id")
        if not self.docs:
            raise InputError(f"ranking for {self.query!r} is empty")
        if len(set(self.docs)) != len(self.docs):
            raise InputError(f"duplicate doc ids in ranking for {self.query!r}")
        if any(not d for d in self.docs):
            raise InputError(f"empty doc id in ranking for {self.query!r}")
        if self.depth_cutoff is not None and self.depth_cutoff < 1:
            raise InputError("depth_cutoff must be positive")

    @property
    def depth(self) -> int:
        if self.depth_cutoff is None:
            return len(self.docs)
        return min(len(self.docs), self.depth_cutoff)

    def rank_of(self, doc: str) -> int | None:
        try:
            return self.docs.index(doc) + 1
        except ValueError:
            return None


@dataclass(frozen=True, eq=False)
class System:
    id: str
    rankings: Mapping[str, RankedList]

    def __post_init__(self) -> None:
        if not self.id:
            raise InputError("empty system id")
        rankings = dict(self.rankings)
        for q, rl in rankings.items():
            if rl.query != q:
                raise InputError(f"ranking keyed {q!r} is for query {rl.query!r}")
        object.__setattr__(self, "rankings", MappingProxyType(rankings))

    @classmethod
    def from_lists(cls, system_id: str, lists: Mapping[str, Sequence[str]],
                   depth_cutoff: int | None = None) -> "System":
        return cls(system_id, {q: RankedList(q, tuple(d), depth_cutoff) for q, d in lists.items()})

    def ranking(self, query: str) -> RankedList:
        try:
            return self.rankings[query]
        except KeyError:
            raise CoverageError(f"system {self.id!r} has no ranking for query {query!r}") from None

    @property
    def queries(self) -> tuple[str, ...]:
        return tuple(sorted(self.rankings))

    def docs(self, queries: Iterable[str] | None = None) -> set[str]:
        qs = self.rankings if queries is None else queries
        out: set[str] = set()
        for q in qs:
            out.update(self.ranking(q).docs)
        return out

    def same_rankings(self, other: "System") -> bool:
        return dict(self.rankings) == dict(other.rankings)


# ------------------------------------------------------------------ metric


@dataclass(frozen=True)
class MetricSpec:
    """Weight scheme of a decomposable metric.

    ``k`` is the depth cutoff (required for ``prec`` and ``gain``), ``p`` the
    RBP persistence, ``max_utility`` the upper end ``M`` of part utilities.
    """

    kind: str
    k: int | None = None
    p: float = 0.8
    log_base: float = 2.0
    max_utility: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InputError(f"unknown metric kind {self.kind!r}")
        if self.k is not None and self.k < 1:
            raise InputError("metric cutoff k must be >= 1")
        if self.kind in ("prec", "gain") and self.k is None:
            raise InputError(f"{self.kind} needs a cutoff k")
        if self.kind == "rbp" and not 0.0 < self.p < 1.0:
            raise InputError("RBP persistence p must lie in (0, 1)")
        if self.log_base <= 1.0:
            raise InputError("DCG log base must exceed 1")
        if self.max_utility is not None and self.max_utility < 0:
            raise InputError("max_utility must be >= 0")
        if self.max_utility is not None and self.kind in ("prec", "rbp") + PAIR_KINDS \
                and self.max_utility != 1.0:
            raise InputError(f"{self.kind} takes binary utilities (M = 1)")

    @property
    def part_kind(self) -> str:
        return "pair" if self.kind in PAIR_KINDS else "single"

    @property
    def utility_bound(self) -> float | None:
        """``M``, or None when the metric leaves it open."""
        if self.kind in ("prec", "rbp") + PAIR_KINDS:
            return 1.0
        return self.max_utility

    @property
    def name(self) -> str:
        if self.kind == "rbp":
            base = f"rbp@{self.p!r}"
            if self.k is not None:
                base += f",k={self.k}"
        else:
            base = self.kind if self.k is None else f"{self.kind}@{self.k}"
        if self.kind == "dcg" and self.log_base != 2.0:
            base += f",base={self.log_base!r}"
        if self.max_utility is not None and self.kind not in ("prec", "rbp") + PAIR_KINDS:
            base += f",M={self.max_utility!r}"
        return base

    def effective_depth(self, list_len: int, list_cutoff: int | None = None) -> int:
        depth = list_len
        if list_cutoff is not None:
            depth = min(depth, list_cutoff)
        if self.k is not None:
            depth = min(depth, self.k)
        return depth

    def rank_weights(self, list_len: int, list_cutoff: int | None = None) -> np.ndarray:
        """Weights of ranks ``1..list_len`` for single-document metrics."""
        if self.part_kind != "single":
            raise InputError(f"{self.kind} decomposes into pairs")
        depth = self.effective_depth(list_len, list_cutoff)
        w = np.zeros(list_len)
        r = np.arange(1, depth + 1, dtype=np.float64)
        if self.kind in ("prec", "gain"):
            w[:depth] = 1.0 / self.k
        elif self.kind == "dcg":
            w[:depth] = 1.0 / (np.log(1.0 + r) / math.log(self.log_base))
        elif self.kind in ("mae", "mse"):
            w[:depth] = 1.0 / depth
        elif self.kind == "rbp":
            w[:depth] = (1.0 - self.p) * self.p ** (r - 1.0)
        return w

    def pair_weights(self, list_len: int, list_cutoff: int | None = None
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(rank_above, rank_below, weight)`` for every ordered pair in the cutoff."""
        if self.part_kind != "pair":
            raise InputError(f"{self.kind} decomposes into single documents")
        depth = self.effective_depth(list_len, list_cutoff)
        i, j = np.triu_indices(depth, k=1)
        i = i + 1
        j = j + 1
        if self.kind == "swaps":
            w = np.full(i.shape, 1.0 / depth)
        else:
            w = 1.0 / (depth * i.astype(np.float64) * j.astype(np.float64))
        return i.astype(np.int64), j.astype(np.int64), w


_METRIC_RE = re.compile(r"^\s*([A-Za-z]+)\s*(?:@\s*([^,\s]+))?\s*((?:,\s*[A-Za-z]+\s*=\s*[^,\s]+\s*)*)$")


def parse_metric(text: str) -> MetricSpec:
    """Parse ``name[@arg][,key=value]...``.

    ``arg`` is the cutoff, except for ``rbp`` where it is the persistence.
    Keys: ``k`` (cutoff), ``p``, ``base`` (DCG log base), ``M`` (max utility).
    Examples: ``dcg@100``, ``prec@10``, ``rbp@0.8``, ``dcg@200,M=4``.
    """
    m = _METRIC_RE.match(text)
    if not m:
        raise InputError(f"cannot parse metric {text!r}")
    name, arg, rest = m.groups()
    kind = _ALIASES.get(name.lower())
    if kind is None:
        raise InputError(f"unknown metric {name!r}")
    kwargs: dict = {}
    try:
        if arg is not None:
            if kind == "rbp":
                kwargs["p"] = float(arg)
            else:
                kwargs["k"] = int(arg)
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, value = (s.strip() for s in item.split("=", 1))
            if key == "k":
                kwargs["k"] = int(value)
            elif key == "p":
                kwargs["p"] = float(value)
            elif key == "base":
                kwargs["log_base"] = float(value)
            elif key == "M":
                kwargs["max_utility"] = float(value)
            else:
                raise InputError(f"unknown metric parameter {key!r}")
    except ValueError as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"bad numeric value in metric {text!r}") from None
    return MetricSpec(kind, **kwargs)


def part_weight(metric: MetricSpec, rank_info: int | tuple[int, int], list_len: int,
                list_cutoff: int | None = None) -> float:
    """Weight of the part at ``rank_info`` (a rank, or a pair of ranks)."""
    ranks = (rank_info,) if isinstance(rank_info, (int, np.integer)) else tuple(rank_info)
    for r in ranks:
        if not 1 <= r <= list_len:
            raise InputError(f"rank {r} outside 1..{list_len}")
    if metric.part_kind == "single":
        if len(ranks) != 1:
            raise InputError(f"{metric.kind} weighs single ranks")
        return float(metric.rank_weights(list_len, list_cutoff)[ranks[0] - 1])
    if len(ranks) != 2:
        raise InputError(f"{metric.kind} weighs rank pairs")
    r1, r2 = ranks
    depth = metric.effective_depth(list_len, list_cutoff)
    if r1 >= r2 or r2 > depth:
        return 0.0
    if metric.kind == "swaps":
        return 1.0 / depth
    return 1.0 / (depth * r1 * r2)


# ---------------------------------------------------------------- key space


class KeySpace:
    """Sorted query and doc vocabularies with an order-preserving key code."""

    def __init__(self, queries: Iterable[str], docs: Iterable[str]):
        self.queries: tuple[str, ...] = tuple(sorted(set(queries)))
        self.docs: tuple[str, ...] = tuple(sorted(set(docs)))
        self._q_pos = {q: i for i, q in enumerate(self.queries)}
        self._d_pos = {d: i for i, d in enumerate(self.docs)}
        self.base = len(self.docs) + 1
        if len(self.queries) * self.base * self.base >= 2**62:
            raise InputError("key space too large for int64 codes")

    def __eq__(self, other: object) -> bool:
        return isinstance(other, KeySpace) and self.queries == other.queries and self.docs == other.docs

    def __hash__(self) -> int:
        return hash((self.queries, self.docs))

    def __repr__(self) -> str:
        return f"KeySpace({len(self.queries)} queries, {len(self.docs)} docs)"

    @classmethod
    def union(cls, *spaces: "KeySpace") -> "KeySpace":
        qs: set[str] = set()
        ds: set[str] = set()
        for s in spaces:
            qs.update(s.queries)
            ds.update(s.docs)
        return cls(qs, ds)

    def query_index(self, query: str) -> int:
        return self._q_pos.get(query, -1)

    def doc_indices(self, docs: Iterable[str]) -> np.ndarray:
        return np.fromiter((self._d_pos.get(d, -1) for d in docs), dtype=np.int64)

    def encode(self, qi, d1, d2=None) -> np.ndarray:
        qi = np.asarray(qi, dtype=np.int64)
        d1 = np.asarray(d1, dtype=np.int64)
        d2 = np.full(np.broadcast(qi, d1).shape, -1, dtype=np.int64) if d2 is None \
            else np.asarray(d2, dtype=np.int64)
        return (qi * self.base + (d1 + 1)) * self.base + (d2 + 1)

    def split(self, codes) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        codes = np.asarray(codes, dtype=np.int64)
        d2 = codes % self.base - 1
        rest = codes // self.base
        d1 = rest % self.base - 1
        qi = rest // self.base
        return qi, d1, d2

    def encode_keys(self, keys: Iterable[Key]) -> np.ndarray:
        """Codes for ``(query, part)`` keys; -1 where a key is not representable."""
        out = []
        for q, part in keys:
            qi = self._q_pos.get(q, -1)
            d1 = self._d_pos.get(part[0], -1)
            d2 = self._d_pos.get(part[1], -1) if len(part) == 2 else -1
            if qi < 0 or d1 < 0 or (len(part) == 2 and d2 < 0):
                out.append(-1)
            else:
                out.append((qi * self.base + d1 + 1) * self.base + d2 + 1)
        return np.asarray(out, dtype=np.int64)

    def decode(self, codes) -> list[Key]:
        qi, d1, d2 = self.split(codes)
        keys = []
        for a, b, c in zip(qi.tolist(), d1.tolist(), d2.tolist()):
            part = (self.docs[b],) if c < 0 else (self.docs[b], self.docs[c])
            keys.append((self.queries[a], part))
        return keys

    def translate(self, codes, source: "KeySpace") -> np.ndarray:
        """Re-express ``source`` codes in this space (-1 where unrepresentable)."""
        codes = np.asarray(codes, dtype=np.int64)
        if source == self:
            return codes.copy()
        qmap = np.fromiter((self._q_pos.get(q, -1) for q in source.queries), dtype=np.int64,
                           count=len(source.queries))
        dmap = np.fromiter((self._d_pos.get(d, -1) for d in source.docs), dtype=np.int64,
                           count=len(source.docs))
        qi, d1, d2 = source.split(codes)
        nq = qmap[qi] if qi.size else qi
        n1 = dmap[d1] if d1.size else d1
        n2 = np.where(d2 >= 0, dmap[np.maximum(d2, 0)] if d2.size else d2, -1)
        bad = (nq < 0) | (n1 < 0) | ((d2 >= 0) & (n2 < 0))
        out = self.encode(nq, n1, np.where(d2 >= 0, n2, -1))
        out[bad] = -1
        return out


def lookup_sorted(codes: np.ndarray, values: np.ndarray, query_codes) -> np.ndarray:
    """``values`` at ``query_codes`` given sorted ``codes``; 0 where absent."""
    query_codes = np.asarray(query_codes, dtype=np.int64)
    if codes.size == 0:
        return np.zeros(query_codes.shape)
    pos = np.searchsorted(codes, query_codes)
    pos_c = np.minimum(pos, codes.size - 1)
    hit = (codes[pos_c] == query_codes) & (query_codes >= 0)
    return np.where(hit, values[pos_c], 0.0)


def query_sample(queries: Iterable[str]) -> tuple[str, ...]:
    qs = tuple(queries)
    if not qs:
        raise InputError("query sample is empty")
    if len(set(qs)) != len(qs):
        raise InputError("query sample contains duplicates")
    if any(not q for q in qs):
        raise InputError("empty query id in query sample")
    return qs


def space_for(systems: Iterable[System], queries: Sequence[str],
              extra_docs: Iterable[str] = ()) -> KeySpace:
    docs: set[str] = set(extra_docs)
    for s in systems:
        docs |= s.docs(queries)
    return KeySpace(queries, docs)


# --------------------------------------------------------- target measure


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TargetDistribution:
    """Weights ``W(x, part) = w(part | S(x)) / l`` on their positive support."""

    system_id: str
    metric: MetricSpec
    space: KeySpace
    codes: np.ndarray
    weights: np.ndarray
    query_norms: Mapping[str, float]
    n_queries: int
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "codes", _readonly(np.asarray(self.codes, dtype=np.int64)))
        object.__setattr__(self, "weights", _readonly(np.asarray(self.weights, dtype=np.float64)))
        object.__setattr__(self, "query_norms", MappingProxyType(dict(self.query_norms)))
        if self.codes.shape != self.weights.shape:
            raise InputError("codes and weights differ in length")
        if np.any(self.weights < 0):
            raise InputError("negative target weight")

    def __len__(self) -> int:
        return int(self.codes.size)

    @property
    def entries(self) -> dict[Key, float]:
        return dict(zip(self.space.decode(self.codes), self.weights.tolist()))

    def lookup(self, codes, space: KeySpace | None = None) -> np.ndarray:
        if space is not None and space != self.space:
            codes = self.space.translate(codes, space)
        return lookup_sorted(self.codes, self.weights, codes)

    def weight_of(self, keys: Iterable[Key]) -> np.ndarray:
        return lookup_sorted(self.codes, self.weights, self.space.encode_keys(keys))

    def total(self) -> float:
        return exact_sum(self.weights)

    def same_entries(self, other: "TargetDistribution") -> bool:
        if self.space == other.space:
            return np.array_equal(self.codes, other.codes) and np.array_equal(self.weights, other.weights)
        return self.entries == other.entries


def target_distribution(system: System, metric: MetricSpec, queries: Sequence[str],
                        space: KeySpace | None = None) -> TargetDistribution:
    """Target weights of ``system`` under ``metric`` on the query sample."""
    queries = query_sample(queries)
    if space is None:
        space = space_for([system], queries)
    l = len(queries)
    chunks_c: list[np.ndarray] = []
    chunks_w: list[np.ndarray] = []
    norms: dict[str, float] = {}
    for q in queries:
        rl = system.ranking(q)
        qi = space.query_index(q)
        didx = space.doc_indices(rl.docs)
        if qi < 0 or np.any(didx < 0):
            raise InputError(f"key space does not cover the ranking of query {q!r}")
        n = len(rl.docs)
        if metric.part_kind == "single":
            w = metric.rank_weights(n, rl.depth_cutoff)
            keep = w > 0
            chunks_c.append(space.encode(qi, didx[keep]))
            chunks_w.append(w[keep] / l)
        else:
            i, j, w = metric.pair_weights(n, rl.depth_cutoff)
            keep = w > 0
            chunks_c.append(space.encode(qi, didx[i[keep] - 1], didx[j[keep] - 1]))
            chunks_w.append(w[keep] / l)
        norms[q] = exact_sum(w)
    codes = np.concatenate(chunks_c) if chunks_c else np.zeros(0, np.int64)
    weights = np.concatenate(chunks_w) if chunks_w else np.zeros(0)
    order = np.argsort(codes, kind="stable")
    codes, weights = codes[order], weights[order]
    if codes.size > 1 and np.any(codes[1:] == codes[:-1]):
        raise InputError(f"system {system.id!r} yields duplicate parts")
    return TargetDistribution(system.id, metric, space, codes, weights, norms, l)


# ------------------------------------------------------------ utilities


class UtilityOracle:
    """Maps ``(query, part)`` to a utility in ``[0, max_utility]``.

    Subclasses provide ``doc_matrix(space)``: single-document utilities on a
    dense ``(queries, docs)`` grid. Pair parts ``(above, below)`` follow
    ``pair_rule``: ``"swapped"`` is 1 when ``below`` is strictly more useful.
    """

    deterministic = True
    max_utility: float | None = None
    pair_rule = "swapped"

    def doc_utility(self, query: str, doc: str) -> float:
        raise NotImplementedError

    def doc_matrix(self, space: KeySpace) -> np.ndarray:
        mat = np.zeros((len(space.queries), len(space.docs)))
        for a, q in enumerate(space.queries):
            for b, d in enumerate(space.docs):
                mat[a, b] = self.doc_utility(q, d)
        return mat

    def utility(self, query: str, part: Part) -> float:
        if len(part) == 1:
            return float(self.doc_utility(query, part[0]))
        hi, lo = self.doc_utility(query, part[0]), self.doc_utility(query, part[1])
        return _pair_value(self.pair_rule, hi, lo)

    def values(self, space: KeySpace, codes) -> np.ndarray:
        qi, d1, d2 = space.split(codes)
        mat = self._cached_matrix(space)
        if qi.size == 0:
            return np.zeros(0)
        first = mat[qi, d1]
        if np.all(d2 < 0):
            return first
        second = mat[qi, np.maximum(d2, 0)]
        paired = _pair_value(self.pair_rule, first, second)
        return np.where(d2 >= 0, paired, first)

    def _cached_matrix(self, space: KeySpace) -> np.ndarray:
        cache = self.__dict__.setdefault("_matrix_cache", {})
        key = (space.queries, space.docs)
        mat = cache.get(key)
        if mat is None:
            if len(cache) >= 4:
                cache.clear()
            mat = self.doc_matrix(space)
            mat.setflags(write=False)
            cache[key] = mat
        return mat


def _pair_value(rule: str, above, below):
    if rule == "swapped":
        return np.where(np.asarray(below) > np.asarray(above), 1.0, 0.0) \
            if isinstance(above, np.ndarray) else float(below > above)
    if rule == "product":
        return above * below
    raise InputError(f"unknown pair rule {rule!r}")


class TableOracle(UtilityOracle):
    """Deterministic oracle from a ``query -> doc -> utility`` table.

    Absent pairs read as ``default`` and are reported as assumed, not judged.
    """

    def __init__(self, table: Mapping[str, Mapping[str, float]], max_utility: float | None = None,
                 default: float = 0.0, pair_rule: str = "swapped"):
        self.table = {q: dict(docs) for q, docs in table.items()}
        self.max_utility = max_utility
        self.default = float(default)
        self.pair_rule = pair_rule
        for q, docs in self.table.items():
            for d, u in docs.items():
                if not math.isfinite(u) or u < 0 or (max_utility is not None and u > max_utility):
                    raise ValidationError(
                        f"utility {u!r} for ({q}, {d}) outside [0, {max_utility}]")

    def doc_utility(self, query: str, doc: str) -> float:
        return self.table.get(query, {}).get(doc, self.default)

    def is_judged(self, query: str, doc: str) -> bool:
        return doc in self.table.get(query, {})

    def lookup(self, query: str, part: Part) -> tuple[float, bool]:
        """Utility plus a flag that is True when any doc was unjudged (assumed)."""
        assumed = any(not self.is_judged(query, d) for d in part)
        return self.utility(query, part), assumed

    def doc_matrix(self, space: KeySpace) -> np.ndarray:
        mat = np.full((len(space.queries), len(space.docs)), self.default)
        for q, docs in self.table.items():
            a = space.query_index(q)
            if a < 0:
                continue
            idx = space.doc_indices(docs.keys())
            vals = np.fromiter(docs.values(), dtype=np.float64, count=len(docs))
            ok = idx >= 0
            mat[a, idx[ok]] = vals[ok]
        return mat


class DenseOracle(UtilityOracle):
    """Deterministic oracle backed by a full ``(queries, docs)`` utility matrix."""

    def __init__(self, queries: Sequence[str], docs: Sequence[str], matrix, max_utility: float | None = None,
                 pair_rule: str = "swapped"):
        self.space = KeySpace(queries, docs)
        if tuple(queries) != self.space.queries or tuple(docs) != self.space.docs:
            # reorder the matrix into sorted vocabularies
            qo = [list(queries).index(q) for q in self.space.queries]
            do = [list(docs).index(d) for d in self.space.docs]
            matrix = np.asarray(matrix, dtype=np.float64)[np.ix_(qo, do)]
        self.matrix = np.array(matrix, dtype=np.float64)
        self.matrix.setflags(write=False)
        if self.matrix.shape != (len(self.space.queries), len(self.space.docs)):
            raise InputError("utility matrix shape does not match vocabularies")
        if np.any(self.matrix < 0) or (max_utility is not None and np.any(self.matrix > max_utility)):
            raise ValidationError(f"utilities outside [0, {max_utility}]")
        self.max_utility = max_utility
        self.pair_rule = pair_rule

    def doc_utility(self, query: str, doc: str) -> float:
        a = self.space.query_index(query)
        b = self.space._d_pos.get(doc, -1)
        if a < 0 or b < 0:
            return 0.0
        return float(self.matrix[a, b])

    def doc_matrix(self, space: KeySpace) -> np.ndarray:
        qmap = np.fromiter((self.space.query_index(q) for q in space.queries), dtype=np.int64,
                           count=len(space.queries))
        dmap = self.space.doc_indices(space.docs)
        mat = self.matrix[np.maximum(qmap, 0)][:, np.maximum(dmap, 0)].copy()
        mat[qmap < 0, :] = 0.0
        mat[:, dmap < 0] = 0.0
        return mat

    def to_table(self) -> dict[str, dict[str, float]]:
        return {q: dict(zip(self.space.docs, row.tolist())) for q, row in zip(self.space.queries, self.matrix)}


def exact_utility(system: System, oracle: UtilityOracle, metric: MetricSpec,
                  queries: Sequence[str]) -> float:
    """Full-enumeration value ``sum W(x, part) * u(x, part)`` on the query sample."""
    target = target_distribution(system, metric, queries)
    u = oracle.values(target.space, target.codes)
    return exact_sum(target.weights * u)
