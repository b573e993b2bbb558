"""Finite-population quality of the mean-field equilibrium policy.

When all N agents play the equilibrium policy ``pi*`` of a game with a
measure-independent kernel, how much can one agent gain by deviating?
Two answers are computed here:

* an a priori bound ``eps(N)`` built from the modulus of continuity of the
  cost in the measure argument, with a Monte Carlo integral over the
  empirical measure of ``N - 1`` iid draws from ``mu*``;
* the exact best-response gap, from the single-agent average-cost MDP whose
  cost is the expectation of ``c`` over the other agents' stationary states
  (iid ``mu*``, because the kernel ignores the population).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._validation import check_policy, check_prob_vector
from .acoe import evaluate_policy_average_cost, solve_acoe
from .exceptions import InconsistentInput, KernelCoupled
from .meanfield import lambda_map

__all__ = [
    "METRICS",
    "OmegaC",
    "EpsNashReport",
    "rho_distance",
    "omega_c_eval",
    "epsilon_terms",
    "epsilon_bound",
    "effective_cost",
    "best_response_gap",
    "check_eps_nash",
    "eps_nash_report",
]

METRICS = ("tv", "weighted")
_ALIASES = {
    "tv": "tv",
    "total_variation": "tv",
    "totalvariation": "tv",
    "weighted": "weighted",
    "paper_weighted": "weighted",
    "paperweighted": "weighted",
}
MC_BLOCK = 1000
GAP_GRACE = 1e-9


def _metric(name):
    try:
        return _ALIASES[str(name).lower()]
    except KeyError:
        raise ValueError(f"unknown metric {name!r}; expected one of {METRICS}") from None


def _weights(n):
    return 0.5 ** np.arange(n)


def rho_distance(mu, nu, metric="tv"):
    """Distance between probability vectors.

    ``"tv"`` is the L1 distance ``sum_x |mu[x] - nu[x]|``. ``"weighted"`` is the
    weighted indicator metric ``sum_k 2**-k |mu[k] - nu[k]|``. Both accept
    stacked inputs of shape ``(..., n)``.
    """
    diff = np.abs(np.asarray(mu, dtype=float) - np.asarray(nu, dtype=float))
    if _metric(metric) == "tv":
        return diff.sum(axis=-1)
    return diff @ _weights(diff.shape[-1])


def _lipschitz(r, metric):
    n = r.shape[-1]
    if metric == "tv":
        return float((r.max(axis=-1) - r.min(axis=-1)).max() / 2.0)
    # extreme directions of {d : sum d = 0} are e_i - e_j
    w = _weights(n)
    diffs = np.abs(r[..., :, None] - r[..., None, :])
    return float((diffs / (w[:, None] + w[None, :])).max())


@dataclass(frozen=True)
class OmegaC:
    """Modulus of continuity of the cost in the measure argument.

    Either the exact Lipschitz envelope ``min(L * t, c_osc)`` of an affine
    cost, or a sampled table ``(radii, values)`` evaluated by clamped
    linear interpolation.
    """

    metric: str
    c_osc: float
    lipschitz: float = None
    radii: tuple = None
    values: tuple = None

    @classmethod
    def exact(cls, model, metric="tv"):
        """Exact envelope for the model's affine cost.

        Under ``"tv"``, ``|r . (mu - nu)| <= (osc r / 2) ||mu - nu||_1`` is
        attained by moving mass between the extreme coordinates, so the
        envelope is the modulus itself. Under ``"weighted"`` it is an upper
        bound.
        """
        metric = _metric(metric)
        r = np.asarray(model.r)
        c_osc = float((r.max(axis=-1) - r.min(axis=-1)).max())
        return cls(metric=metric, c_osc=c_osc, lipschitz=_lipschitz(r, metric))

    @classmethod
    def sampled(cls, model, metric="tv", radii=None, pairs=10_000, seed=0):
        """Table estimate from random measure pairs.

        Each pair ``(mu, nu)`` contributes ``max_{x,a} |c(x,a,mu) - c(x,a,nu)|``
        to every radius at or above ``rho(mu, nu)``; the table keeps the
        running maximum, which is nondecreasing and never exceeds the true
        modulus.
        """
        metric = _metric(metric)
        r = np.asarray(model.r)
        n = model.n
        diam = 2.0 if metric == "tv" else float(_weights(n)[:2].sum()) if n > 1 else 0.0
        if radii is None:
            radii = np.linspace(0.0, diam, 41)
        radii = np.asarray(radii, dtype=float)
        rng = np.random.default_rng(seed)
        mu = rng.dirichlet(np.ones(n), size=pairs)
        # mix nu toward mu at random strength to cover small radii
        t = rng.uniform(size=(pairs, 1)) ** 3
        nu = (1.0 - t) * mu + t * rng.dirichlet(np.ones(n), size=pairs)
        dist = rho_distance(mu, nu, metric)
        gaps = np.abs(np.einsum("xaz,pz->pxa", r, mu - nu)).reshape(pairs, -1).max(axis=1)
        values = np.array([gaps[dist <= rad].max(initial=0.0) for rad in radii])
        values[0] = 0.0
        c_osc = float((r.max(axis=-1) - r.min(axis=-1)).max())
        return cls(metric=metric, c_osc=c_osc, radii=tuple(radii), values=tuple(values))

    @property
    def kind(self):
        return "lipschitz" if self.lipschitz is not None else "sampled"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("NegativeRadius: modulus evaluated at a negative radius")
        if self.lipschitz is not None:
            out = np.minimum(self.lipschitz * t, self.c_osc)
        else:
            out = np.interp(t, self.radii, self.values)
        return float(out) if out.ndim == 0 else out


def omega_c_eval(model, t, omega=None, metric="tv"):
    """Evaluate the cost modulus at radius ``t`` (exact envelope by default)."""
    if omega is None:
        omega = OmegaC.exact(model, metric)
    return omega(t)


def _mc_first_term(mu_star, N, omega, metric, samples, seed, n_jobs=1):
    """Samples of ``omega(rho(mu*, empirical(N - 1 iid draws)))``.

    Replications run in fixed-size blocks, each with its own child seed, and
    are concatenated in block order, so the result does not depend on
    ``n_jobs``.
    """
    root = np.random.SeedSequence([int(seed), int(N)])
    sizes = [MC_BLOCK] * (samples // MC_BLOCK)
    if samples % MC_BLOCK:
        sizes.append(samples % MC_BLOCK)
    children = root.spawn(len(sizes))

    def block(i):
        rng = np.random.default_rng(children[i])
        counts = rng.multinomial(N - 1, mu_star, size=sizes[i])
        emp = counts / (N - 1)
        return omega(rho_distance(mu_star, emp, metric))

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(block, range(len(sizes))))
    else:
        parts = [block(i) for i in range(len(sizes))]
    return np.concatenate([np.atleast_1d(p) for p in parts])


def epsilon_terms(model, mu_star, N, omega=None, metric="tv", samples=10_000, seed=0, n_jobs=1):
    """Both terms of the finite-N deviation bound.

    Returns a dict with the Monte Carlo first term and its standard error,
    the second term as stated in the bound, ``omega(2 (1 - (N-1)/N + 1/N))
    = omega(4 / N)``, and a tight second term ``omega(2 / N)``, the actual
    L1 distance between the two empirical measures it compares.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    if samples < 100:
        raise ValueError("samples must be at least 100")
    metric = _metric(metric)
    mu_star = check_prob_vector(mu_star, model.n, "mu_star")
    if omega is None:
        omega = OmegaC.exact(model, metric)
    vals = _mc_first_term(mu_star, N, omega, metric, samples, seed, n_jobs)
    first = float(vals.mean())
    stderr = float(vals.std(ddof=1) / np.sqrt(vals.size))
    full_arg = 2.0 * (1.0 - (N - 1) / N + 1.0 / N)
    return {
        "first": first,
        "stderr": stderr,
        "second_full": float(omega(full_arg)),
        "second_tight": float(omega(2.0 / N)),
        "metric": metric,
    }


def epsilon_bound(model, mu_star, N, omega=None, metric="tv", samples=10_000, seed=0,
                  tight=False, n_jobs=1):
    """Monte Carlo value of the deviation bound ``eps(N)``.

    Returns
    -------
    eps, stderr : float
        Bound estimate and the standard error of its Monte Carlo part.
        With ``tight=True`` the second term uses ``omega(2 / N)`` in place
        of ``omega(4 / N)``.
    """
    terms = epsilon_terms(model, mu_star, N, omega, metric, samples, seed, n_jobs)
    second = terms["second_tight"] if tight else terms["second_full"]
    return terms["first"] + second, terms["stderr"]


def _require_uncoupled_kernel(model):
    if model.kernel_coupled:
        raise KernelCoupled(
            "the transition kernel depends on the population measure; the "
            "finite-N analysis needs a measure-independent kernel"
        )


def effective_cost(model, mu_star, N, check_kernel=True):
    """Expected cost of agent 1 when the other ``N - 1`` agents are iid ``mu*``.

    For an affine cost, linearity of expectation gives the closed form
    ``c0 + r[x, a, x] / N + (N - 1) / N * r @ mu*``.

    Parameters
    ----------
    check_kernel : bool, default True
        Raise :class:`KernelCoupled` for a measure-dependent kernel, where
        the table is not a valid best-response cost. The formula itself
        only involves the cost, so ``False`` computes it anyway.
    """
    if check_kernel:
        _require_uncoupled_kernel(model)
    if N < 1:
        raise ValueError("N must be positive")
    mu_star = check_prob_vector(mu_star, model.n, "mu_star")
    own = np.einsum("xax->xa", model.r)
    return model.c0 + own / N + (N - 1) / N * (model.r @ mu_star)


def best_response_gap(model, pi_star, mu_star, N, tol=1e-10, details=False):
    """Exact gain available to one deviating agent among N.

    Solves the average-cost MDP with kernel ``p`` and the effective cost
    for ``N``; the gap is the equilibrium policy's cost there minus the
    optimal one, clamped at zero after a ``1e-9`` grace.

    Raises
    ------
    KernelCoupled
        If the kernel depends on the population measure.
    InconsistentInput
        If ``mu*`` is not the stationary measure of ``pi*`` to ``10 * tol``.
    """
    _require_uncoupled_kernel(model)
    pi_star = check_policy(pi_star, model.n, model.m, "pi_star")
    mu_star = check_prob_vector(mu_star, model.n, "mu_star")
    generated = lambda_map(model, pi_star, tol=min(tol, 1e-12))
    mismatch = float(np.abs(mu_star - generated).sum())
    if mismatch > 10.0 * tol:
        raise InconsistentInput(
            f"mu_star is {mismatch:.3g} (L1) away from the stationary measure of pi_star"
        )
    cbar = effective_cost(model, mu_star, N)
    mdp = model.with_cost(cbar, None)
    sol = solve_acoe(mdp, mu_star, tol=tol)
    # exact cost of the greedy response; value iteration's rho is low by O(tol)
    j_best = min(evaluate_policy_average_cost(mdp, sol.policy, mu_star), sol.rho + tol)
    j_eq = float(np.einsum("x,xa,xa->", mu_star, pi_star, cbar))
    gap = j_eq - j_best
    if gap < -GAP_GRACE:
        raise InconsistentInput(f"equilibrium cost {j_eq:.12g} below the optimum {j_best:.12g}")
    gap = max(gap, 0.0)
    if details:
        return gap, {"j_eq": j_eq, "j_best": j_best, "best_response": sol.actions.tolist()}
    return gap


def check_eps_nash(gap, eps, stderr=0.0):
    """Verdict ``gap <= eps + 3 * stderr``."""
    if min(gap, eps, stderr) < 0:
        raise ValueError("inputs must be nonnegative")
    return bool(gap <= eps + 3.0 * stderr)


@dataclass
class EpsNashReport:
    N: int
    eps_bound: float
    eps_tight: float
    mc_stderr: float
    gap_exact: float
    verdict: bool
    seed: int
    metric: str
    j_eq: float = float("nan")
    j_best: float = float("nan")

    def to_dict(self):
        return {
            "N": self.N,
            "eps_paper": self.eps_bound,
            "eps_tight": self.eps_tight,
            "stderr": self.mc_stderr,
            "gap_exact": self.gap_exact,
            "verdict": self.verdict,
            "seed": self.seed,
            "metric": self.metric,
            "j_eq": self.j_eq,
            "j_best": self.j_best,
        }


def eps_nash_report(model, pi_star, mu_star=None, Ns=(5, 10, 50, 200), omega=None,
                    metric="tv", samples=10_000, seed=0, tol=1e-10, n_jobs=1):
    """One :class:`EpsNashReport` per population size in ``Ns``.

    ``mu_star`` defaults to the stationary measure of ``pi_star``. Each N
    draws from its own seed stream derived from ``(seed, N)``.
    """
    _require_uncoupled_kernel(model)
    pi_star = check_policy(pi_star, model.n, model.m, "pi_star")
    if mu_star is None:
        mu_star = lambda_map(model, pi_star)
    metric = _metric(metric)
    if omega is None:
        omega = OmegaC.exact(model, metric)
    rows = []
    for N in Ns:
        terms = epsilon_terms(model, mu_star, N, omega, metric, samples, seed, n_jobs)
        gap, info = best_response_gap(model, pi_star, mu_star, N, tol=tol, details=True)
        eps = terms["first"] + terms["second_full"]
        rows.append(EpsNashReport(
            N=int(N),
            eps_bound=eps,
            eps_tight=terms["first"] + terms["second_tight"],
            mc_stderr=terms["stderr"],
            gap_exact=gap,
            verdict=check_eps_nash(gap, eps, terms["stderr"]),
            seed=int(seed),
            metric=metric,
            j_eq=info["j_eq"],
            j_best=info["j_best"],
        ))
    return rows
