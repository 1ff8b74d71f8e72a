"""Adaptive grid quantization for linearly convergent distributed algorithms."""
from .algorithms import (
    DecentralizedGD,
    DualDecomposition,
    ProjectedDecentralizedGD,
    estimate_lipschitz,
    local_argmin,
    recommended_bits,
)
from .channel import (
    BellShapeRate,
    ConstantRate,
    FiniteBlocklengthRate,
    FixedRounds,
    PacketSpec,
    UntilSuccess,
    delay,
    expected_rounds,
    fixed_rounds,
    q_inverse,
    rate,
    sample_retransmissions,
    simulate_lossy_run,
    time_rate_rho,
    time_to_eps,
    until_success_bounds,
)
from .errors import *  # noqa: F401,F403
from .framework import (
    AlgorithmModel,
    QuantizedRunConfig,
    RunTrace,
    TraceRecord,
    alpha,
    bound_from_first_step,
    contraction_gain,
    iterations_to_eps,
    min_bits,
    optimal_bits,
    radius_schedule,
    run_exact,
    run_quantized,
    total_bits,
)
from .graph import (
    GraphSpec,
    SpectralData,
    complete_graph,
    eig_sym,
    laplacian,
    m_norm,
    path_graph,
    random_geometric_graph,
    read_edgelist,
    sqrt_factor,
    write_edgelist,
)
from .problems import (
    LogisticProblem,
    QuadraticProblem,
    bound_D,
    load_csv,
    synthetic_dataset,
)
from .quantizer import GridSpec, QuantizedMessage, decode, grid_step, pack_bits, quantize, unpack_bits

__version__ = "0.1.0"
