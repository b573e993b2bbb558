"""Average cost optimality equation for a frozen population measure.

For fixed ``mu`` the shifted Bellman operator

    (T_mu u)(x) = min_a [ c(x, a, mu) + sum_y u(y) * phat(y | x, a, mu) ],

with ``phat = p - lambda``, is a contraction of modulus
``beta = 1 - lambda(X)`` in the sup norm. Its fixed point ``h`` solves the
ACOE ``h(x) + rho = min_a [c(x, a, mu) + sum_y h(y) p(y | x, a, mu)]`` with
optimal average cost ``rho = sum_x h(x) lambda(x)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_policy, check_prob_vector, deterministic_policy, policy_actions
from .exceptions import MaxIterExceeded
from .markov import invariant_of_matrix, policy_kernel

__all__ = [
    "AcoeSolution",
    "bellman_apply",
    "q_values",
    "solve_acoe",
    "iteration_bound",
    "greedy_policy",
    "acoe_residual",
    "evaluate_policy_average_cost",
]

DEFAULT_TOL = 1e-10
# values this close to the row minimum count as ties
TIE_TOL = 1e-12


@dataclass
class AcoeSolution:
    """Fixed point of the shifted Bellman operator and derived quantities.

    Attributes
    ----------
    h : ndarray of shape (n,)
        Relative value function.
    rho : float
        Optimal average cost, ``h @ lambda``.
    policy : ndarray of shape (n, m)
        Deterministic greedy policy.
    residual : float
        ``||T h - h||_inf``.
    iterations : int
    trace : list of float
        Residual after each iteration, starting from ``u_0 = 0``.
    """

    h: np.ndarray
    rho: float
    policy: np.ndarray
    residual: float
    iterations: int
    trace: list = field(default_factory=list, repr=False)

    @property
    def actions(self):
        return policy_actions(self.policy)

    def to_dict(self):
        return {
            "h": self.h.tolist(),
            "rho": self.rho,
            "policy": self.actions.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
        }


def q_values(model, mu, u):
    """Bracket of the Bellman operator, ``c + phat @ u``, shape ``(n, m)``."""
    return model.cost_at(mu) + model.hat_kernel_at(mu) @ np.asarray(u, dtype=float)


def bellman_apply(model, mu, u):
    """Apply ``T_mu`` to a value vector ``u``."""
    mu = check_prob_vector(mu, model.n)
    u = np.asarray(u, dtype=float)
    if u.shape != (model.n,):
        raise ValueError(f"u has shape {u.shape}, expected ({model.n},)")
    return q_values(model, mu, u).min(axis=1)


def iteration_bound(model, tol):
    """A priori number of iterations from ``u_0 = 0`` to reach ``tol``."""
    beta, c_max = model.beta, model.c_max
    if c_max <= 0.0:
        return 1
    ratio = tol * (1.0 - beta) / c_max
    if ratio >= 1.0:
        return 1
    return int(math.ceil(math.log(ratio) / math.log(beta))) + 1


def _greedy_from_q(q, tie_tol=TIE_TOL):
    best = q.min(axis=1, keepdims=True)
    scale = np.maximum(1.0, np.abs(best))
    # argmax of a boolean picks the first, i.e. smallest, tied action
    return np.argmax(q <= best + tie_tol * scale, axis=1)


def solve_acoe(model, mu, tol=DEFAULT_TOL, max_iter=None):
    """Solve the ACOE for a fixed population measure by value iteration.

    Iterates ``u_{k+1} = T_mu u_k`` from ``u_0 = 0`` until
    ``||T_mu u_k - u_k||_inf <= tol``.

    Parameters
    ----------
    model : MFGModel
    mu : array_like of shape (n,)
    tol : float
    max_iter : int, optional
        Defaults to :func:`iteration_bound` plus 10.

    Returns
    -------
    AcoeSolution

    Raises
    ------
    MaxIterExceeded
        When the residual is still above ``tol`` after ``max_iter`` steps.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    mu = check_prob_vector(mu, model.n)
    if max_iter is None:
        max_iter = iteration_bound(model, tol) + 10

    cost = model.cost_at(mu)
    hat = model.hat_kernel_at(mu)
    u = np.zeros(model.n)
    trace = []
    for k in range(max_iter + 1):
        q = cost + hat @ u
        tu = q.min(axis=1)
        residual = float(np.abs(tu - u).max())
        trace.append(residual)
        if residual <= tol:
            actions = _greedy_from_q(q)
            return AcoeSolution(
                h=u,
                rho=float(u @ model.lam),
                policy=deterministic_policy(actions, model.m),
                residual=residual,
                iterations=k,
                trace=trace,
            )
        u = tu
    raise MaxIterExceeded(
        f"value iteration residual {residual:.3g} > tol {tol:.3g} after {max_iter} "
        f"iterations (beta = {model.beta:.6g})",
        residual=residual,
        iterations=max_iter,
    )


def greedy_policy(model, mu, h):
    """Deterministic minimizer of the ACOE bracket at each state.

    Ties go to the smallest action index.
    """
    mu = check_prob_vector(mu, model.n)
    actions = _greedy_from_q(q_values(model, mu, h))
    return deterministic_policy(actions, model.m)


def acoe_residual(model, mu, h):
    """``||T_mu h - h||_inf``."""
    h = np.asarray(h, dtype=float)
    return float(np.abs(bellman_apply(model, mu, h) - h).max())


def evaluate_policy_average_cost(model, pi, mu, tol=1e-13):
    """Exact long-run average cost of ``pi`` with the coupling frozen at ``mu``.

    Uses the invariant measure of the policy kernel at ``mu``; under the
    minorization condition this is independent of the initial state.
    """
    mu = check_prob_vector(mu, model.n)
    pi = check_policy(pi, model.n, model.m)
    occ = invariant_of_matrix(policy_kernel(model, pi, mu), tol=tol)
    return float(np.einsum("x,xa,xa->", occ, pi, model.cost_at(mu)))
