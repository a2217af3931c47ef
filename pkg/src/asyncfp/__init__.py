"""Asynchronous block fixed-point solvers with delay-aware step sizes."""

from .blocks import BlockLayout, partition_blocks
from .core import (
    ArrayView,
    ProblemOperator,
    SamplingDistribution,
    StateView,
    async_block_update,
    block_step_delta,
    km_step,
)
from .engine import (
    BLOCK_SCHEMES,
    DualCopyBlock,
    EngineConfig,
    SharedState,
    measure_speedup,
    run_engine,
)
from .history import DelayPolicy, IterateHistory, reconstruct_read
from .metrics import (
    BenchRow,
    EpochRow,
    RunMetrics,
    read_bench_csv,
    read_metrics_csv,
    write_bench_csv,
    write_metrics_csv,
)
from .simulate import (
    DescentReport,
    RateReport,
    SimRun,
    fejer_bound_limit,
    run_simulation,
    verify_linear_rate,
    verify_lyapunov_descent,
)
from .theory import (
    FejerMetricSpec,
    LinearRateSteps,
    StepSizePolicy,
    check_cocoercivity,
    fejer_safe_step,
    linear_rate_steps,
    lyapunov_metric,
    quasi_contraction_modulus,
    spectral_norm,
    strong_monotonicity_from_lipschitz,
)

__version__ = "0.1.0"

__all__ = [
    "ArrayView",
    "BLOCK_SCHEMES",
    "BenchRow",
    "BlockLayout",
    "DelayPolicy",
    "DescentReport",
    "DualCopyBlock",
    "EngineConfig",
    "EpochRow",
    "FejerMetricSpec",
    "IterateHistory",
    "LinearRateSteps",
    "ProblemOperator",
    "RateReport",
    "RunMetrics",
    "SamplingDistribution",
    "SharedState",
    "SimRun",
    "StateView",
    "StepSizePolicy",
    "async_block_update",
    "block_step_delta",
    "check_cocoercivity",
    "fejer_bound_limit",
    "fejer_safe_step",
    "km_step",
    "linear_rate_steps",
    "lyapunov_metric",
    "measure_speedup",
    "partition_blocks",
    "quasi_contraction_modulus",
    "read_bench_csv",
    "read_metrics_csv",
    "reconstruct_read",
    "run_engine",
    "run_simulation",
    "spectral_norm",
    "strong_monotonicity_from_lipschitz",
    "verify_linear_rate",
    "verify_lyapunov_descent",
    "write_bench_csv",
    "write_metrics_csv",
    "__version__",
]
