"""Simulation and certificate verification for singularly perturbed
stochastic hybrid systems.

The package separates the slow/fast system description (`hybrid_core`),
the execution engine (`simulate`), counter-based reproducible randomness
(`stochastic`), composite certificate checks (`foster`), switched matrix
inequalities (`lmi`), Monte Carlo estimators (`analysis`), and packaged
worked systems (`scenarios`).
"""

__version__ = "0.1.0"

from .constants import (DELTA_SET, EVENT_TOL_DEFAULT, MC_N_DEFAULT,
                        QUAD_NODES_DEFAULT, THREADS_ENV_VAR, TOL_INEQ,
                        TOL_MONO_COEFF, TOL_PD, WILSON_Z)
from .stochastic import (DiscreteMeasure, ExactDiscrete, MeasureError,
                         MonteCarlo, ProductMeasure, PURPOSE_INIT,
                         PURPOSE_JUMP, PURPOSE_SELECTION, Quadrature,
                         RandomStream, TruncatedExponential, UniformBall,
                         UniformInterval, expectation)
from .hybrid_core import (FlowSegment, HybridArc, HybridTime, JumpRecord,
                          Manifold, ReducedSystem, SelectionParam,
                          SetPredicate, SPSystem, StateVector, Termination,
                          affine_manifold, build_reduced, canonical_json,
                          config_hash)
from .simulate import (ExitReason, OutsideDomainError, NonFiniteStateError,
                       SimConfig, SimulationError, execute_jump,
                       export_arc_csv, export_jumps_csv, export_monitor_csv,
                       integrate_flow, rk4_step, simulate_arc)
from .foster import (CertificateData, ConstantsLedger, InequalityResult,
                     MonitorTrace, ScalarCondition, VerificationReport,
                     check_gradient_consistency, check_sandwich,
                     composite_value, epsilon_star, monitor_along_arc,
                     theta_star, verify_flow_decrease, verify_jump_decrease)
from .lmi import (FeasibilitySearchError, LMIEntry, LMIReport,
                  SwitchedLMIInstance, check_negative_definite,
                  check_switched_lmis, feasibility_search, jacobi_eigh,
                  jacobi_eigenvalues, solve_lyapunov, sym_eigenvalues_2x2,
                  sym_eigenvalues_3x3, sym_part)
from .scenarios import (Scenario, ScenarioError, get_scenario,
                        scenario_from_config, scenario_names,
                        switching_lmi_instance)
from .analysis import (AnalysisError, ContainmentReport, RecurrenceReport,
                       SweepResult, TrialOutcome, default_initializer,
                       default_metric, epsilon_sweep, estimate_containment,
                       estimate_recurrence, export_trials_csv, run_trials,
                       thread_count, uniformity_sweep, wilson_interval)

__all__ = [name for name in dir() if not name.startswith("_")]
