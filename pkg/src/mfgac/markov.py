"""Markov-chain primitives: policy-induced kernels and invariant measures."""

import math

import numpy as np

from ._validation import check_policy, check_prob_vector
from .exceptions import MaxIterExceeded

__all__ = ["policy_kernel", "invariant_of_matrix", "doeblin_mass"]


def policy_kernel(model, pi, mu):
    """State-to-state kernel ``P[x, y] = sum_a p(y | x, a, mu) * pi(a | x)``.

    Every row dominates the minorization measure, since each ``p(. | x, a)``
    does and the policy only mixes them.
    """
    pi = check_policy(pi, model.n, model.m)
    kernel = model.kernel_at(check_prob_vector(mu, model.n))
    return np.einsum("xa,xay->xy", pi, kernel)


def doeblin_mass(P):
    """Largest minorization mass ``sum_y min_x P[x, y]`` of a stochastic matrix."""
    return float(np.asarray(P).min(axis=0).sum())


def invariant_of_matrix(P, tol=1e-13, max_iter=None, start=None):
    """Invariant distribution of a row-stochastic matrix by power iteration.

    Parameters
    ----------
    P : (n, n) ndarray
        Row-stochastic matrix whose rows dominate a common nonzero measure.
    tol : float
        Stop once ``||mu P - mu||_1 <= tol``.
    max_iter : int, optional
        Iteration budget. Defaults to the number of steps the Doeblin rate
        ``1 - sum_y min_x P[x, y]`` needs to shrink the initial L1 error
        below ``tol``, plus a margin.
    start : (n,) array_like, optional
        Initial distribution; uniform by default.

    Returns
    -------
    mu : (n,) ndarray

    Raises
    ------
    MaxIterExceeded
        If the residual is still above ``tol`` after ``max_iter`` steps,
        which happens when the minorization mass is numerically zero.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    mu = np.full(n, 1.0 / n) if start is None else check_prob_vector(start, n, "start")
    if max_iter is None:
        beta = 1.0 - doeblin_mass(P)
        if beta <= 0.0:
            max_iter = 10
        elif beta < 1.0:
            max_iter = int(math.ceil(math.log(tol / 2.0) / math.log(beta))) + 50
        else:
            max_iter = 100_000

    residual = math.inf
    for it in range(max_iter + 1):
        nxt = mu @ P
        nxt /= nxt.sum()
        residual = float(np.abs(nxt - mu).sum())
        if residual <= tol:
            return nxt
        mu = nxt
    raise MaxIterExceeded(
        f"power iteration residual {residual:.3g} > tol {tol:.3g} after {max_iter} steps",
        residual=residual,
        iterations=max_iter,
    )
