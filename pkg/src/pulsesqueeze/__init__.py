"""Few-pulse spin squeezing: exact Dicke-basis dynamics and protocol optimization."""

from .analysis import (
    DepthCurve,
    NoiseEnvelope,
    PowerLawFit,
    ScalingPoint,
    certify_depth,
    fit_power_law,
    noise_monte_carlo,
    optimal_squeezing_curve,
    scaling_study,
)
from .optimize import (
    OptimizationResult,
    OptimizerConfig,
    PenaltyConfig,
    oat_baseline,
    objective,
    optimize_protocol,
    pareto_sweep,
    tat_baseline,
    warm_start,
)
from .propagate import Protocol, Pulse, PulseSequence, TwistSegment, run_protocol, run_pulses
from .spin import DickeState, SqueezingReport, make_coherent_x, squeezing_parameter

__all__ = [
    "DepthCurve",
    "DickeState",
    "NoiseEnvelope",
    "OptimizationResult",
    "OptimizerConfig",
    "PenaltyConfig",
    "PowerLawFit",
    "Protocol",
    "Pulse",
    "PulseSequence",
    "ScalingPoint",
    "SqueezingReport",
    "TwistSegment",
    "certify_depth",
    "fit_power_law",
    "make_coherent_x",
    "noise_monte_carlo",
    "oat_baseline",
    "objective",
    "optimal_squeezing_curve",
    "optimize_protocol",
    "pareto_sweep",
    "run_protocol",
    "run_pulses",
    "scaling_study",
    "squeezing_parameter",
    "tat_baseline",
    "warm_start",
]
