"""scikit-learn style wrappers around the functional API.

The "data" passed to ``fit`` is an :class:`~mfgac.model.MFGModel`;
hyperparameters live in ``__init__`` so ``get_params``/``set_params``,
``clone`` and parameter grids work as usual.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_index, check_prob_vector, policy_actions
from .acoe import DEFAULT_TOL, solve_acoe
from .meanfield import CERT_TOL, lambda_map, solve_mfe
from .model import MFGModel
from .nash import eps_nash_report
from .sim import SimConfig, simulate_population

__all__ = ["AcoeSolver", "MeanFieldSolver", "EpsNashAnalyzer", "PopulationSimulator"]


def _check_model(model):
    if not isinstance(model, MFGModel):
        raise TypeError(f"expected an MFGModel, got {type(model).__name__}")
    return model


def _states(states, n):
    arr = np.atleast_1d(np.asarray(states, dtype=int))
    for s in arr:
        check_index(s, n, "state")
    return arr


class AcoeSolver(BaseEstimator):
    """Optimal average-cost control against a frozen population measure.

    Parameters
    ----------
    tol : float
        Sup-norm residual at which value iteration stops.
    max_iter : int or None
        Iteration cap; ``None`` uses the a priori bound.
    mu : array_like or None
        Population measure; uniform when ``None``.

    Attributes
    ----------
    h_ : ndarray of shape (n,)
    rho_ : float
    policy_ : ndarray of shape (n, m)
    residual_ : float
    n_iter_ : int
    """

    def __init__(self, tol=DEFAULT_TOL, max_iter=None, mu=None):
        self.tol = tol
        self.max_iter = max_iter
        self.mu = mu

    def fit(self, model, y=None):
        model = _check_model(model)
        mu = np.full(model.n, 1.0 / model.n) if self.mu is None else check_prob_vector(self.mu, model.n)
        sol = solve_acoe(model, mu, tol=self.tol, max_iter=self.max_iter)
        self.solution_ = sol
        self.h_ = sol.h
        self.rho_ = sol.rho
        self.policy_ = sol.policy
        self.residual_ = sol.residual
        self.n_iter_ = sol.iterations
        return self

    def predict(self, states):
        """Greedy action at each state."""
        check_is_fitted(self, "policy_")
        return policy_actions(self.policy_)[_states(states, self.policy_.shape[0])]


class MeanFieldSolver(BaseEstimator):
    """Multi-start damped search for mean-field equilibria.

    Attributes
    ----------
    equilibria_ : list of MeanFieldEquilibrium
        Distinct certified equilibria, best first.
    pi_star_, mu_star_, certificate_
        Those of the best equilibrium.
    """

    def __init__(self, theta=0.5, tol=CERT_TOL, acoe_tol=DEFAULT_TOL, max_iter=500,
                 n_random_starts=2, random_state=0, n_jobs=1):
        self.theta = theta
        self.tol = tol
        self.acoe_tol = acoe_tol
        self.max_iter = max_iter
        self.n_random_starts = n_random_starts
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, model, y=None):
        model = _check_model(model)
        eqs = solve_mfe(
            model,
            n_random=self.n_random_starts,
            theta=self.theta,
            tol=self.tol,
            max_iter=self.max_iter,
            acoe_tol=self.acoe_tol,
            seed=self.random_state,
            n_jobs=self.n_jobs,
        )
        self.equilibria_ = eqs
        self.pi_star_ = eqs[0].pi_star
        self.mu_star_ = eqs[0].mu_star
        self.certificate_ = eqs[0].certificate
        return self

    def predict(self, states):
        check_is_fitted(self, "pi_star_")
        return policy_actions(self.pi_star_)[_states(states, self.pi_star_.shape[0])]


class EpsNashAnalyzer(BaseEstimator):
    """Finite-N deviation bound and exact best-response gap over a grid of N.

    ``fit(model, pi_star)`` fills ``reports_`` with one
    :class:`~mfgac.nash.EpsNashReport` per N.
    """

    def __init__(self, Ns=(5, 10, 50, 200), metric="tv", samples=10_000, random_state=0,
                 tol=1e-10, n_jobs=1):
        self.Ns = Ns
        self.metric = metric
        self.samples = samples
        self.random_state = random_state
        self.tol = tol
        self.n_jobs = n_jobs

    def fit(self, model, pi_star, mu_star=None):
        model = _check_model(model)
        if mu_star is None:
            mu_star = lambda_map(model, pi_star)
        self.mu_star_ = np.asarray(mu_star, dtype=float)
        self.reports_ = eps_nash_report(
            model, pi_star, mu_star, Ns=self.Ns, metric=self.metric, samples=self.samples,
            seed=self.random_state, tol=self.tol, n_jobs=self.n_jobs,
        )
        self.verdict_ = all(r.verdict for r in self.reports_)
        return self


class PopulationSimulator(BaseEstimator):
    """Monte Carlo run of the N-agent game under a policy profile."""

    def __init__(self, N=1, T=10_000, burn_in=None, random_state=0, record_trace=False):
        self.N = N
        self.T = T
        self.burn_in = burn_in
        self.random_state = random_state
        self.record_trace = record_trace

    def fit(self, model, profile):
        model = _check_model(model)
        config = SimConfig(N=self.N, T=self.T, profile=profile, burn_in=self.burn_in,
                           seed=self.random_state, record_trace=self.record_trace)
        self.result_ = simulate_population(model, config)
        self.avg_cost_ = self.result_.avg_cost_per_agent
        self.stderr_ = self.result_.stderr_per_agent
        return self
