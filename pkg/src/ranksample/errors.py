"""Exception types. CLI exit codes hang off ``exit_code``."""


class RankSampleError(Exception):
    exit_code = 3


class InputError(RankSampleError, ValueError):
    """Argument outside its documented domain."""


class CoverageError(RankSampleError):
    """A system has no ranking for a query in the active query sample."""


class DegenerateTaskError(RankSampleError):
    """A sampler has empty support."""


class CorruptCollectionError(RankSampleError):
    """A judged sample carries an impossible recorded probability."""


class ValidationError(RankSampleError):
    """A file or object violates its schema."""


class ReuseError(RankSampleError):
    """Samplers needed for balance-heuristic reuse cannot be re-evaluated."""


class BudgetError(RankSampleError):
    """A pooling budget too small to judge anything."""


class InfiniteVarianceError(RankSampleError):
    """Sampler misses part of the estimand's support."""


class UndefinedRatioError(RankSampleError, ZeroDivisionError):
    pass


class InvariantError(RankSampleError):
    exit_code = 4
