"""Simulation and analysis of a collective superabsorption/superradiance engine."""

from .analysis import (
    PulseFit,
    ScalingFit,
    SweepResult,
    compare_mf_exact,
    exact_pulse,
    fit_sech2,
    scaling_exponent,
    sweep,
)
from .cycle_driver import (
    CyclePlan,
    CycleRecord,
    EngineReport,
    StrokeWindow,
    efficiency,
    run_cycle,
    run_engine,
    run_ignition,
    work_integrals,
)
from .dicke_algebra import (
    DensityMatrix,
    DickeBasis,
    Operator,
    build_collective_operators,
    build_hamiltonian,
    expectation,
    thermal_state,
)
from .lindblad_engine import (
    IntegratorConfig,
    RateSchedule,
    SwitchingProfile,
    Trajectory,
    effective_rates,
    integrate,
    lindblad_rhs,
    steady_state_tls,
    switching_value,
)
from .mean_field import (
    Branch,
    MeanFieldParams,
    bloch_trajectory,
    derive_params,
    h_mf,
    intensity,
    mf_residual,
)

__version__ = "0.1.0"
