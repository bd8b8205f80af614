"""Unbiased, low-variance offline evaluation of ranking systems by importance sampling."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BudgetError,
    CorruptCollectionError,
    CoverageError,
    DegenerateTaskError,
    InfiniteVarianceError,
    InputError,
    InvariantError,
    RankSampleError,
    ReuseError,
    UndefinedRatioError,
    ValidationError,
)
from .metrics import (  # noqa: E402
    DenseOracle,
    KeySpace,
    MetricSpec,
    RankedList,
    System,
    TableOracle,
    TargetDistribution,
    UtilityOracle,
    exact_utility,
    make_part,
    parse_metric,
    target_distribution,
)
from .sampling import (  # noqa: E402
    ApproxUtility,
    EvalTask,
    IdenticalSystems,
    SamplerSpec,
    SamplingDistribution,
    build_sampler,
    draw,
    heuristic_sampler,
    mixture,
    optimal_pair,
    optimal_ranking,
    optimal_single,
    optimal_tau,
    optimal_vs_baseline,
    smooth,
)
from .collection import (  # noqa: E402
    CategoricalJudges,
    FlipNoiseJudges,
    JudgedSample,
    TestCollection,
    ingest_qrels,
    ingest_run,
    read_collection,
    simulate_judgments,
    write_collection,
)
from .estimation import (  # noqa: E402
    DiffEstimate,
    Estimate,
    RatioEstimate,
    confidence_interval,
    estimate_diff,
    estimate_utility,
    estimate_vs_baseline,
    merge_collections,
    rank_systems,
    ratio_estimate,
)
from .experiments import (  # noqa: E402
    ExperimentSpec,
    SynthConfig,
    SystemTransform,
    analytic_variance,
    deep_pool,
    derive_system,
    gen_synth,
    kendall_tau,
    pairwise_accuracy,
    run_experiment,
    shallow_pool,
)
