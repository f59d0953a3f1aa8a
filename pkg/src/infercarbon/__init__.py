"""infercarbon: pre-execution energy and carbon estimates for LLM inference.

The pipeline: describe an architecture and a request, enumerate the kernel
graph of one transformer layer, price every kernel for the prefill and decode
phases, attach Roofline performance per kernel, featurize, and either query
the synthetic oracle or a trained graph regressor for energy; carbon follows
from datacenter and embodied parameters.
"""

from .arch import (
    DataType,
    DivisibilityError,
    InferenceConfig,
    KernelGraph,
    KernelKind,
    KernelNode,
    LlmArchitecture,
    RangeError,
    derive_head_dim,
    enumerate_layer_kernels,
    load_arch_catalog,
    validate_architecture,
    validate_inference,
)
from .carbon import (
    CarbonReport,
    DatacenterParams,
    EmbodiedParams,
    ModelEnergyPredictor,
    embodied_carbon,
    estimate_request,
    operational_carbon,
)
from .costmodel import (
    CostTriple,
    LayerTotals,
    PartitionError,
    Phase,
    UnsupportedKind,
    allreduce_cost,
    attention_matmul_cost,
    elementwise_cost,
    fused_attention_cost,
    kernel_cost,
    layer_totals,
    linear_cost,
    model_totals,
    softmax_cost,
)
from .features import (
    FeatureStats,
    FeaturizedGraph,
    NonFiniteFeature,
    UnknownFormat,
    encode_global,
    encode_node,
    export_graph,
    featurize,
    fit_stats,
    identity_stats,
)
from .gnn import (
    EvalReport,
    GnnParams,
    NonFiniteLoss,
    ShapeError,
    TrainHyper,
    ZeroTruth,
    adam_step,
    eba,
    evaluate,
    gradient_check,
    load_checkpoint,
    loss_and_gradients,
    mape,
    model_forward,
    predict_energy,
    sage_forward,
    save_checkpoint,
    train,
)
from .roofline import (
    GpuSpec,
    MissingThroughput,
    RidgePoints,
    ZeroTraffic,
    arithmetic_intensity,
    builtin_gpu_catalog,
    load_gpu_catalog,
    ridge_points,
    roofline_performance,
)
from .sampler import (
    ArchPrior,
    EmptyPrior,
    EnergySample,
    HardwarePrior,
    JitterRadii,
    LoopHyper,
    LoopResult,
    OracleFailure,
    PriorSpace,
    SamplePoint,
    SyntheticEnergyOracle,
    desk_prior_space,
    fine_grained_sampling,
    focused_sampling_loop,
    initial_sample,
    load_dataset,
    save_dataset,
    select_high_error,
)
from .traces import (
    ColumnMap,
    EmptyTrace,
    MissingColumn,
    ParseError,
    TraceRecord,
    TraceStats,
    empirical_prior,
    parse_trace,
    serialize_trace,
    trace_stats,
)

__version__ = "0.1.0"
