"""Federated learning over resource-constrained wireless uplinks.

Simulates the digital (quantize, orthogonal access, packet loss) and analog
(over-the-air aggregation with truncated channel inversion) uplink schemes,
evaluates their closed-form convergence envelopes, and optimizes device
inclusion probabilities under delay and power budgets.
"""

__version__ = "0.1.0"

from .core import (
    EPS_R,
    DeviceProfile,
    LearningConstants,
    PowerMode,
    Scheme,
    SystemConfig,
    ValidationReport,
    config_digest,
    dbm_to_watts,
    format_config,
    parse_config_text,
    read_config_file,
    validate_config,
    watts_to_dbm,
    write_config_file,
)
from .learn import (
    LocalDataset,
    accuracy,
    estimate_constants,
    fleet_weights,
    gd_step,
    gen_synthetic_fleet,
    global_gradient,
    global_loss,
    load_fleet,
    local_gradient,
    local_loss,
    pooled_dataset,
    save_fleet,
    solve_global_optimum,
    solve_local_optimum,
)
from .quantize import (
    QuantizedUpdate,
    decode,
    payload_bits,
    quantize_vector,
    quantizer_variance_bound,
)
from .channel import (
    ChannelDraw,
    GradientEstimate,
    analog_precoder,
    analog_round,
    compensation_lambda,
    digital_round,
    distortion_second_moment,
    draw_channels,
    min_rate_param,
    scaling_factor,
    success_probability,
)
from .sampler import SamplingPlan, empirical_inclusion, make_plan, sample_participants
from .bounds import (
    BoundReport,
    build_bound_report,
    convergence_curve,
    exp_integral_e1,
    gap_analog,
    gap_analog_highsnr,
    gap_digital,
    gap_digital_highsnr,
    gap_digital_vs_bits,
    noise_term,
    virtual_weight_analog,
    virtual_weight_digital,
)
from .optimize import (
    OptimizerResult,
    dinkelbach_analog,
    optimize_inclusion_digital,
    search_quantization_bits,
    search_truncation_threshold,
    solve_dinkelbach_subproblem,
)
from .harness import (
    PlanKind,
    SweepAxis,
    TrainTrace,
    baseline_plan,
    bound_curve,
    compare_schemes,
    optimized_plan,
    run_experiment,
    sweep,
    trace_rows,
    write_manifest,
    write_table,
)
