"""Layer-specific positional-encoding scaling toolkit.

Searches per-layer rotary scaling factors with a Bezier-constrained genetic
algorithm, provides the rotary numerics behind the approach, and ships
synthetic fitness oracles plus decay/entropy analysis utilities.
"""

from .curve import (
    BezierCurve,
    ControlPoint,
    CoverageError,
    ScaleSchedule,
    bernstein_weight,
    de_casteljau,
    evaluate,
    sample_layer_scales,
    solve_t_for_x,
)
from .search_space import (
    Individual,
    SearchGrid,
    brute_force_size,
    is_valid,
    snap,
    space_size,
    validate,
)
from .evolution import (
    ConfigError,
    GAConfig,
    InitializationError,
    SearchResult,
    UtilizationWeights,
    crossover,
    init_population,
    mutate,
    resume,
    run,
    utilization,
)
from .fitness import (
    AccuracyTriple,
    ConstantEvaluator,
    EvaluatorError,
    ExternalEvaluator,
    PlantedCurveEvaluator,
    ProtocolError,
    subprocess_evaluator,
    tcp_evaluator,
)
from .rope import (
    DecayCurve,
    EntropyProfile,
    RotaryConfig,
    attention_score,
    decay_curve,
    entropy,
    extrapolation_schedule,
    frequencies,
    ntk_base,
    rotate,
)
from .toy_attention import (
    RetrievalTask,
    ToyModel,
    ToyModelConfig,
    ToyRetrievalEvaluator,
    calibrate_content_margin,
    forward,
    middle_similarity_sweep,
    probe_first_block_similarity,
    probe_middle_vs_last,
    retrieval_accuracy,
    token_stream,
)

__version__ = "0.1.0"
