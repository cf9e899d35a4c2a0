"""Distributed hybrid-belief estimation for multi-robot semantic SLAM.

The heavy lifting lives in the compiled extension ``hybrid_ddf._core``;
this package simply re-exports its public surface.
"""

from hybrid_ddf._core import (
    AliasingSimulationModel,
    ClassRealization,
    ConfigError,
    ConstantModel,
    ContractViolation,
    DecodeError,
    ExternalTerm,
    ExternalUpdate,
    GaussianDensity,
    GeometricMeasurement,
    HybridBelief,
    Hypothesis,
    LookupModel,
    MetricRow,
    Mode,
    ObjectConfig,
    Pose2,
    RobotConfig,
    RobotContribution,
    RunResult,
    ScenarioConfig,
    SemanticMeasurement,
    SlotEntry,
    Stack,
    StackSlot,
    StepInputs,
    StepMetrics,
    UnderconstrainedGraph,
    VariableKey,
    ViewpointModel,
    between,
    build_own_slot,
    cli_main,
    compose,
    compute_external_update,
    deserialize_stack,
    distance_xy,
    divide,
    inverse,
    load_lookup_model,
    load_scenario,
    local_diff,
    marginalize,
    merge_stacks,
    mode_name,
    msde,
    multiply,
    retract,
    run,
    sample_semantic,
    semantic_log_likelihood,
    serialize_stack,
    weighted_position_error,
    wrap_angle,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
