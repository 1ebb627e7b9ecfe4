"""Hybrid event-triggered and impulsive control of time-delay systems."""
from .analysis import (
    compare_to_oracle,
    decay_fit,
    lyapunov_trace,
    razumikhin_audit,
    zeno_recursion_oracle,
    zeno_report,
)
from .certificates import (
    cbar,
    condition_iii_check,
    dwell_bound,
    feedback_margin,
    fixed_point_roots,
    rho_interval,
    select_parameters,
)
from .controller import (
    ControllerMode,
    EventLog,
    SimResult,
    TriggerRule,
    held_input,
    locate_crossing,
    run_simulation,
    trigger_margin,
)
from .dde_core import (
    HistoryBuffer,
    SolverConfig,
    SystemModel,
    apply_impulse,
    integrate_segment,
    rk4_step,
    scalar_delay_model,
)

__version__ = "0.1.0"
