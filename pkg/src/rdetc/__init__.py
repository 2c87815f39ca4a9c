"""Event-triggered backstepping boundary control laboratory for the 1-D
reaction-diffusion plant u_t = eps u_xx + lambda(x) u with Neumann base
and Robin-actuated far end."""

from .diagnostics import (SimTrace, TransformedState, backstepping_transform,
                          build_trace, event_stats, fit_decay_rate,
                          inverse_transform, lyapunov_value, omega)
from .errors import (ConfigError, ConvergenceError, DivergenceError,
                     InfeasibleError, InvariantViolation, NumericalError,
                     RdetcError, ValidationError)
from .kernels import (GainTable, KernelGrid, ResidualReport, ValidationReport,
                      check_assumption1, gain_from_kernel, kernel_residual,
                      kernel_sup_bound, read_kgrid, solve_inverse_kernel,
                      solve_kernel, volterra_residual, write_kgrid)
from .plant import (PlantConfig, PlantState, continuous_control, initial_state,
                    l2_norm, step_plant)
from .profiles import ReactionProfile
from .provider import (ApproxReport, KernelSource, ProvidedKernels,
                       TheoryConstants, approximation_metrics,
                       perturbation_shape, provide_kernel,
                       theoretical_constants)
from .scenario import (Scenario, override_scenario, parse_scenario,
                       prepare_run, run_prepared, summarize)
from .trigger import (DwellBound, EpsilonConsts, TriggerConfig, TriggerState,
                      check_trigger, compute_d, dwell_integral,
                      dwell_time_bound, epsilon_constants, r0_weight,
                      run_closed_loop, select_gain_params,
                      select_trigger_params, step_m)

__version__ = "0.1.0"
