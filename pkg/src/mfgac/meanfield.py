"""Mean-field equilibria: invariant-measure map, fixed-point loop, certificates.

A mean-field equilibrium is a pair ``(pi, mu)`` with ``pi`` average-cost
optimal against the frozen measure ``mu`` and ``mu`` the stationary state
distribution generated by ``pi``. Existence holds under the minorization
and drift assumptions, but there is no constructive algorithm with a
convergence guarantee; :func:`mfe_iterate` is a damped best-response loop
whose output is always accompanied by a checkable certificate.
"""

import itertools
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_policy, check_prob_vector, deterministic_policy, policy_actions
from .acoe import DEFAULT_TOL as ACOE_TOL
from .acoe import q_values, solve_acoe
from .exceptions import MFGError, NonConvergence, TooLarge
from .markov import invariant_of_matrix, policy_kernel

__all__ = [
    "EquilibriumCertificate",
    "MeanFieldEquilibrium",
    "policy_kernel",
    "invariant_of_matrix",
    "lambda_map",
    "certify_equilibrium",
    "mfe_iterate",
    "solve_mfe",
    "brute_force_mfe",
    "occupation_measure",
]

CERT_TOL = 1e-6
GAP_GRACE = 1e-9
DISTINCT_TV = 1e-4
MIN_THETA = 1e-3


@dataclass
class EquilibriumCertificate:
    """Numeric evidence that ``(pi, mu)`` is a mean-field equilibrium.

    consistency_residual
        ``||mu - Lambda(pi)||_1``: is ``mu`` the measure ``pi`` generates?
    optimality_gap
        Average cost of ``pi`` at ``mu`` minus the optimal average cost.
    b_mass_defect
        Mass ``mu[x] pi(a|x)`` on pairs whose Bellman bracket exceeds the
        minimum by more than the solver slack.
    """

    consistency_residual: float
    optimality_gap: float
    b_mass_defect: float
    tolerance: float
    rho: float = float("nan")
    policy_cost: float = float("nan")

    @property
    def worst(self):
        return max(self.consistency_residual, self.optimality_gap, self.b_mass_defect)

    @property
    def passed(self):
        return self.worst <= self.tolerance

    def to_dict(self):
        return {
            "consistency_residual": self.consistency_residual,
            "optimality_gap": self.optimality_gap,
            "b_mass_defect": self.b_mass_defect,
            "tolerance": self.tolerance,
            "rho": self.rho,
            "policy_cost": self.policy_cost,
            "passed": self.passed,
        }


@dataclass
class MeanFieldEquilibrium:
    pi_star: np.ndarray
    mu_star: np.ndarray
    certificate: EquilibriumCertificate
    iterations: int = 0
    converged: bool = False
    trace: list = field(default_factory=list, repr=False)

    @property
    def actions(self):
        return policy_actions(self.pi_star)

    def to_dict(self, full_policy=False):
        out = {
            "mu_star": self.mu_star.tolist(),
            "policy": self.pi_star.tolist() if full_policy else self.actions.tolist(),
            "certificate": self.certificate.to_dict(),
            "iterations": self.iterations,
            "converged": self.converged,
        }
        return out


def occupation_measure(pi, mu):
    """Joint state-action measure ``nu[x, a] = mu[x] * pi(a | x)``."""
    return np.asarray(mu)[:, None] * np.asarray(pi)


def lambda_map(model, pi, tol=1e-12, max_iter=500, start=None):
    """Stationary state distribution generated by ``pi``.

    For a measure-independent kernel this is one invariant-measure solve.
    For a coupled kernel the measure enters its own kernel, and we run the
    Picard iteration ``mu <- invariant(P(pi, mu))`` from ``start``
    (uniform by default) until ``||mu - invariant(P(pi, mu))||_1 <= tol``.

    Raises
    ------
    NonConvergence
        If the Picard loop does not reach ``tol``; the trace holds the
        residual history.
    """
    pi = check_policy(pi, model.n, model.m)
    inner_tol = min(tol, 1e-13)
    mu = np.full(model.n, 1.0 / model.n) if start is None else check_prob_vector(start, model.n)
    if not model.kernel_coupled:
        return invariant_of_matrix(policy_kernel(model, pi, mu), tol=inner_tol)

    trace = []
    for _ in range(max_iter):
        nxt = invariant_of_matrix(policy_kernel(model, pi, mu), tol=inner_tol, start=mu)
        residual = float(np.abs(nxt - mu).sum())
        trace.append(residual)
        if residual <= tol:
            return nxt
        mu = nxt
    raise NonConvergence(
        f"Picard iteration for the stationary measure stalled at residual {min(trace):.3g}",
        trace=trace,
        best=mu,
    )


def _certificate(model, pi, mu, sol, generated, tol, acoe_tol):
    consistency = float(np.abs(mu - generated).sum())

    cost = model.cost_at(mu)
    occ = invariant_of_matrix(policy_kernel(model, pi, mu), tol=1e-13)
    value = float(np.einsum("x,xa,xa->", occ, pi, cost))
    gap = value - sol.rho
    if gap < -GAP_GRACE:
        warnings.warn(
            f"policy cost {value:.12g} below optimal average cost {sol.rho:.12g}",
            RuntimeWarning,
            stacklevel=3,
        )
    gap = max(gap, 0.0)

    q = q_values(model, mu, sol.h)
    th = q.min(axis=1, keepdims=True)
    bad = q > th + 10.0 * acoe_tol
    defect = float((occupation_measure(pi, mu) * bad).sum())
    return EquilibriumCertificate(consistency, gap, defect, tol, rho=sol.rho, policy_cost=value)


def certify_equilibrium(model, pi, mu, tol=CERT_TOL, acoe_tol=ACOE_TOL):
    """Certificate for a candidate equilibrium ``(pi, mu)``.

    Parameters
    ----------
    tol : float
        Pass threshold for every certificate field.
    acoe_tol : float
        Tolerance of the inner ACOE solve; the optimality-set test uses
        ten times this as slack.
    """
    pi = check_policy(pi, model.n, model.m)
    mu = check_prob_vector(mu, model.n)
    sol = solve_acoe(model, mu, tol=acoe_tol)
    return _certificate(model, pi, mu, sol, lambda_map(model, pi), tol, acoe_tol)


def mfe_iterate(model, mu_init=None, theta=0.5, tol=CERT_TOL, max_iter=500, acoe_tol=ACOE_TOL):
    """Damped best-response iteration on the population measure.

    Each round solves the ACOE at ``mu_k``, takes the greedy policy
    ``pi_k``, computes the measure ``Lambda(pi_k)`` it generates and moves
    ``mu_{k+1} = (1 - theta) mu_k + theta Lambda(pi_k)``. The damping is
    halved (down to ``MIN_THETA``) after every third round in which the
    consistency residual fails to decrease. Stops
    as soon as ``(pi_k, mu_k)`` certifies at ``tol``.

    Returns
    -------
    MeanFieldEquilibrium
        The best-certified iterate; ``converged`` says whether it passed.
        ``trace`` holds one dict per round.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must be in (0, 1]")
    mu = (
        np.full(model.n, 1.0 / model.n)
        if mu_init is None
        else check_prob_vector(mu_init, model.n, "mu_init")
    )
    trace = []
    best = None
    strikes = 0
    prev = np.inf
    for k in range(max_iter + 1):
        sol = solve_acoe(model, mu, tol=acoe_tol)
        pi = sol.policy
        generated = lambda_map(model, pi)
        cert = _certificate(model, pi, mu, sol, generated, tol, acoe_tol)
        trace.append({
            "iteration": k,
            "theta": theta,
            "consistency_residual": cert.consistency_residual,
            "optimality_gap": cert.optimality_gap,
            "b_mass_defect": cert.b_mass_defect,
            "policy": policy_actions(pi).tolist(),
        })
        if best is None or cert.worst < best.certificate.worst:
            best = MeanFieldEquilibrium(pi, mu.copy(), cert, k)
        if cert.passed:
            break
        if k == max_iter:
            break
        # a cycle keeps the residual flat, so stagnation counts as a strike too
        if cert.consistency_residual >= prev:
            strikes += 1
            if strikes == 3:
                theta = max(theta / 2.0, MIN_THETA)
                strikes = 0
        prev = cert.consistency_residual
        mu = (1.0 - theta) * mu + theta * generated

    best.converged = best.certificate.passed
    best.iterations = len(trace) - 1
    best.trace = trace
    return best


def _default_starts(model, n_random, seed):
    starts = [np.full(model.n, 1.0 / model.n), model.lam / model.lambda_mass]
    rng = np.random.default_rng(seed)
    starts.extend(rng.dirichlet(np.ones(model.n)) for _ in range(n_random))
    return starts


def _sort_key(eq):
    return (eq.certificate.worst, tuple(eq.mu_star), tuple(eq.actions))


def _distinct(equilibria):
    kept = []
    for eq in sorted(equilibria, key=_sort_key):
        if not any(
            np.abs(eq.mu_star - other.mu_star).sum() <= DISTINCT_TV
            and np.array_equal(eq.actions, other.actions)
            for other in kept
        ):
            kept.append(eq)
    return kept


def solve_mfe(model, starts=None, n_random=2, theta=0.5, tol=CERT_TOL, max_iter=500,
              acoe_tol=ACOE_TOL, seed=0, n_jobs=1):
    """Multi-start :func:`mfe_iterate`.

    Default starts are the uniform measure, the normalized minorization
    measure and ``n_random`` Dirichlet draws from ``seed``. Runs are
    independent and may execute on ``n_jobs`` threads; the merged result
    does not depend on scheduling.

    Returns
    -------
    list of MeanFieldEquilibrium
        Distinct certified equilibria, best certificate first.

    Raises
    ------
    NonConvergence
        If no start certifies. ``best`` is the best iterate over all starts
        and ``trace`` the per-start traces.
    """
    if starts is None:
        starts = _default_starts(model, n_random, seed)

    def run(mu0):
        return mfe_iterate(model, mu0, theta=theta, tol=tol, max_iter=max_iter, acoe_tol=acoe_tol)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(s) for s in starts]

    certified = [r for r in results if r.converged]
    if not certified:
        best = min(results, key=_sort_key)
        raise NonConvergence(
            f"no start certified at tol {tol:.3g}; best worst-field "
            f"{best.certificate.worst:.3g}",
            trace=[r.trace for r in results],
            best=best,
        )
    return _distinct(certified)


def brute_force_mfe(model, tol=CERT_TOL, max_policies=4096, acoe_tol=ACOE_TOL):
    """Enumerate deterministic policies and keep the certified equilibria.

    For each of the ``m ** n`` deterministic policies, pair it with the
    measure it generates and certify. Intended as an oracle for small
    models.

    Raises
    ------
    TooLarge
        If ``m ** n > max_policies``.
    """
    if model.m ** model.n > max_policies:
        raise TooLarge(f"{model.m}**{model.n} policies exceed the bound {max_policies}")
    found = []
    for actions in itertools.product(range(model.m), repeat=model.n):
        pi = deterministic_policy(actions, model.m)
        try:
            mu = lambda_map(model, pi)
        except MFGError:
            continue
        sol = solve_acoe(model, mu, tol=acoe_tol)
        cert = _certificate(model, pi, mu, sol, mu, tol, acoe_tol)
        if cert.passed:
            found.append(MeanFieldEquilibrium(pi, mu, cert, 0, True))
    return sorted(found, key=_sort_key)
