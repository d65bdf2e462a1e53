"""Crossbar compute-in-memory simulator for binary neural networks.

Quantifies the effect of array parasitics (wire/driver IR drop, device
leakage and nonlinearity, ADC quantization) on in-memory binary VMMs, and
implements BinSparX: training-free static weight-column and dynamic
activation sparsification with exact sign-corrected post-processing.
"""

from .analysis import (
    DeviationSweep,
    PartialSumHistogram,
    cost_report,
    profile_columns,
    profile_partial_sums,
    solver_validation_suite,
    sweep_deviation,
)
from .bnn import (
    BinaryTensor,
    MappedTensor,
    MultiBitPlan,
    TilePlan,
    TiledWeights,
    WeightTile,
    multibit_partial_sums,
    nandnet_dot,
    tile_weights,
    to_mapped,
    to_signed,
)
from .devices import (
    WIRE_PRESETS,
    DeviceLut,
    DeviceModel,
    WireModel,
    cell_current,
    load_device_lut,
    make_lut_from_model,
    wire_resistance_from_geometry,
)
from .engine import (
    Engine,
    EngineConfig,
    FoldedThreshold,
    InferenceResult,
    LayerSpec,
    PreparedWeights,
    RunStats,
    fold_batchnorm,
    im2col,
    infer,
    vmm,
)
from .errors import (
    BinsparxError,
    ConfigError,
    ConfigWarning,
    DomainError,
    FoldError,
    NonConvergenceError,
    ParseError,
    ShapeError,
    SolverError,
    ValidationError,
)
from .readout import AdcModel, DummyColumnConfig, adc_quantize, dummy_compensate
from .solver import (
    ColumnProblem,
    ColumnSolveResult,
    FastBatchResult,
    ideal_column_current,
    solve_column_dense,
    solve_column_fast,
    solve_column_linear_ladder,
    solve_columns_fast,
)
from .sparsify import (
    SparseActivation,
    SparseXbarTile,
    adc_bits_required,
    dense_tile,
    postprocess_column,
    sparsify_activation,
    sparsify_tile,
    sparsify_weight_column,
)

__version__ = "0.1.0"
