"""Average-cost mean-field games on finite state and action spaces."""

__version__ = "0.1.0"

from .acoe import (
    AcoeSolution,
    acoe_residual,
    bellman_apply,
    evaluate_policy_average_cost,
    greedy_policy,
    solve_acoe,
)
from .estimators import AcoeSolver, EpsNashAnalyzer, MeanFieldSolver, PopulationSimulator
from .markov import invariant_of_matrix, policy_kernel
from .meanfield import (
    EquilibriumCertificate,
    MeanFieldEquilibrium,
    brute_force_mfe,
    certify_equilibrium,
    lambda_map,
    mfe_iterate,
    solve_mfe,
)
from .model import (
    MFGModel,
    ValidationReport,
    eval_cost,
    eval_kernel,
    hat_kernel,
    load_model,
    save_model,
    validate_drift,
    validate_minorization,
)
from .nash import (
    EpsNashReport,
    OmegaC,
    best_response_gap,
    check_eps_nash,
    effective_cost,
    epsilon_bound,
    eps_nash_report,
    omega_c_eval,
    rho_distance,
)
from .sim import SimConfig, SimResult, empirical_measure, estimate_convergence, simulate_population
