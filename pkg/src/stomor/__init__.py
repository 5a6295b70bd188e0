"""Moment-matching model reduction for linear stochastic differential equations.

The package computes the stochastic moment of a linear system driven by a
(possibly stochastic) signal generator, builds exact, moment-mean and
mean-square reduced-order models from it, and validates the match by seeded
Monte Carlo co-simulation on shared Brownian increments.
"""

from .errors import (
    CertificateFailed,
    DecompositionError,
    DivergenceError,
    MatrixFormatError,
    ModelReductionWarning,
    NoSolution,
    NotPlaceable,
    SingularSystem,
    StomorError,
)
from .linalg import SpectrumReport, kron, qr, solve_dense, spectrum, svd, unvec, vec
from .moments import (
    KroneckerFactorization,
    MeanMoment,
    MomentProcess,
    SecondMoment,
    moment_sde_step,
    moment_sde_step_two_noise,
    nearest_kronecker,
    second_moment_ode_step,
    solve_mean_moment,
    solve_second_moment,
)
from .rom import (
    Certificate,
    RConstruction,
    ReducedModel,
    build_exact_rom,
    build_mean_rom,
    build_meansquare_rom,
    construct_R,
    dominant_poles,
    normalize_coordinates,
    place_poles,
)
from .sde import (
    AssumptionReport,
    BrownianPath,
    LinearSde,
    LyapunovSpectrum,
    NoiseCoupling,
    SignalGenerator,
    Trajectory,
    check_assumptions,
    em_step,
    generate_path,
    lyapunov_exponents,
)
from .simulate import CoSimulationResult, StepObserver, co_simulate, simulate_interconnection
from .harness import (
    ExperimentConfig,
    RandomSystemSpec,
    SteadyStats,
    ValidationReport,
    make_example1_generator,
    make_mechanical_fixture,
    make_random_system,
    resolve_generator,
    resolve_system,
    run_reduction,
    run_validation,
    square_wave,
)

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport",
    "BrownianPath",
    "Certificate",
    "CertificateFailed",
    "CoSimulationResult",
    "DecompositionError",
    "DivergenceError",
    "ExperimentConfig",
    "KroneckerFactorization",
    "LinearSde",
    "LyapunovSpectrum",
    "MatrixFormatError",
    "MeanMoment",
    "ModelReductionWarning",
    "MomentProcess",
    "NoSolution",
    "NoiseCoupling",
    "NotPlaceable",
    "RConstruction",
    "RandomSystemSpec",
    "ReducedModel",
    "SecondMoment",
    "SignalGenerator",
    "SingularSystem",
    "SpectrumReport",
    "SteadyStats",
    "StepObserver",
    "StomorError",
    "Trajectory",
    "ValidationReport",
    "build_exact_rom",
    "build_mean_rom",
    "build_meansquare_rom",
    "check_assumptions",
    "co_simulate",
    "construct_R",
    "dominant_poles",
    "em_step",
    "generate_path",
    "kron",
    "lyapunov_exponents",
    "make_example1_generator",
    "make_mechanical_fixture",
    "make_random_system",
    "moment_sde_step",
    "moment_sde_step_two_noise",
    "nearest_kronecker",
    "normalize_coordinates",
    "place_poles",
    "qr",
    "resolve_generator",
    "resolve_system",
    "run_reduction",
    "run_validation",
    "second_moment_ode_step",
    "simulate_interconnection",
    "solve_dense",
    "solve_mean_moment",
    "solve_second_moment",
    "spectrum",
    "square_wave",
    "svd",
    "unvec",
    "vec",
]
