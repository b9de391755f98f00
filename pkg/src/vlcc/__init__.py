"""Variable-length multi-codebook channel coding workbench."""

from .errors import (
    ConfigError,
    DomainError,
    NumericError,
    ResourceBudgetError,
    SamplingError,
)
from .types_core import (
    Distribution,
    JointDistribution,
    SecondOrderType,
    concat_types,
    conditional_divergence,
    conditional_entropy,
    empirical_mi,
    empirical_type,
    entropy,
    generalized_js,
    joint_type,
    joint_type3,
    mutual_information,
    second_order_type,
    type_class_size,
)
from .lq_array import (
    EqualityConstraintSet,
    LqGeometry,
    SubblockDecomposition,
    SubtypeSequence,
    enumerate_array_class,
    enumerate_compatible_subtypes,
    indicator,
    subblock_lengths,
    subtype_of,
    validate_geometry,
)
from .codebook import (
    CodebookLibrary,
    LibraryParams,
    build_library,
    expurgation_fraction_exact,
    gamma_default,
    is_gamma_independent,
    library_score,
    packing_bound_exponent,
    packing_statistic,
    sample_expurgated,
    sample_uniform_type_class,
)
from .exponents import (
    ChannelMatrix,
    ExponentResult,
    capacity,
    channel_mi,
    eta_default,
    optimal_type_for_rate,
    random_coding_exponent,
    random_coding_exponent_gallager,
    threshold_exponent,
)
from .channel_sim import Schedule, TransmissionTrace, run_session, transmit
from .decoder import (
    DecoderConfig,
    DecoderOutput,
    classify_error_event,
    decode_stream,
    decode_trace,
    score_messages,
    stage1,
    stage2,
    window_metric,
)
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    KindSpec,
    LegConfig,
    compare_to_bound,
    corollary1_workflow,
    estimate_error_rates,
    verify_lemmas,
    wilson_interval,
)

__version__ = "0.1.0"
