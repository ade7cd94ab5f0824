"""Unadjusted Langevin chains with a compiled kernel and a numpy fallback."""

from ._backend import compiled_available, default_backend
from .chain import (
    ChainConfig,
    EnsembleResult,
    HistogramSpec,
    InitSpec,
    MomentTrace,
    PlannerInput,
    Trajectory,
    chain_streams,
    default_discretization_constant,
    default_stride,
    interpolated_state,
    moment_growth_constants,
    moment_tracker,
    plan_step_size,
    replay_noise,
    run_chain,
    run_ensemble,
    ula_step,
)
