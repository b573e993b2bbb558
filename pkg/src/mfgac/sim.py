"""Monte Carlo simulation of the N-agent game.

All agents move synchronously: at step t every agent samples an action
from its policy, pays ``c(x_i, a_i, e_t)`` and moves according to
``p(. | x_i, a_i, e_t)``, where ``e_t`` is the empirical state measure
frozen at the start of the step.

Random numbers: agent ``i`` owns a Philox stream keyed by ``(seed, i)``.
The stream yields its initial-state uniform, then one ``(action,
transition)`` pair per step. Agent i's draw at step t therefore never
depends on N or T.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_policy, check_prob_vector
from .nash import rho_distance

__all__ = [
    "SimConfig",
    "SimResult",
    "simulate_population",
    "empirical_measure",
    "estimate_convergence",
    "N_BATCHES",
]

N_BATCHES = 20
CHUNK = 1024


@dataclass
class SimConfig:
    """Simulation settings.

    ``profile`` is one ``(n, m)`` policy broadcast to all agents, or a
    sequence of N policies. ``burn_in`` defaults to ``T // 10``.
    """

    N: int
    T: int
    profile: object
    burn_in: int = None
    seed: int = 0
    record_trace: bool = False

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.burn_in is None:
            self.burn_in = self.T // 10
        if not 0 <= self.burn_in < self.T:
            raise ValueError("burn_in must satisfy 0 <= burn_in < T")


@dataclass
class SimResult:
    avg_cost_per_agent: np.ndarray
    stderr_per_agent: np.ndarray
    occupation: np.ndarray
    mean_empirical: np.ndarray
    empirical_trace: np.ndarray = None
    cost_trace_agent1: np.ndarray = field(default=None, repr=False)

    def trace_rows(self, mu_ref, metric="tv"):
        """Rows ``(t, rho(e_t, mu_ref), running average cost of agent 1)``."""
        if self.empirical_trace is None:
            raise ValueError("simulation ran without record_trace")
        dist = rho_distance(self.empirical_trace, mu_ref, metric)
        running = np.cumsum(self.cost_trace_agent1) / np.arange(1, dist.size + 1)
        return [(t, float(d), float(c)) for t, (d, c) in enumerate(zip(dist, running))]

    def to_dict(self):
        return {
            "avg_cost_per_agent": self.avg_cost_per_agent.tolist(),
            "stderr_per_agent": self.stderr_per_agent.tolist(),
            "mean_empirical": self.mean_empirical.tolist(),
        }


def empirical_measure(states, n):
    """``(1/N) sum_i delta_{x_i}`` as a length-``n`` vector."""
    states = np.asarray(states, dtype=int)
    if states.size == 0:
        raise ValueError("need at least one agent")
    return np.bincount(states, minlength=n)[:n] / states.size


def _profile(model, profile, N):
    # an (n, m) matrix or a length-n action array is one policy shared by all;
    # anything else is read as one policy per agent
    arr = np.asarray(profile, dtype=float)
    if arr.shape in ((model.n, model.m), (model.n,)):
        pi = check_policy(profile, model.n, model.m)
        return np.broadcast_to(pi, (N, model.n, model.m))
    if len(profile) != N:
        raise ValueError(f"profile has {len(profile)} policies for {N} agents")
    return np.stack([check_policy(p, model.n, model.m) for p in profile])


def _streams(seed, N):
    return [
        np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(i,))))
        for i in range(N)
    ]


def _sample(cum, u):
    # cum: (N, k) cumulative rows; u: (N,) uniforms
    return np.minimum((u[:, None] >= cum).sum(axis=1), cum.shape[1] - 1)


def simulate_population(model, config):
    """Simulate the N-agent game and collect per-agent time averages.

    Initial states are iid ``model.mu0``. Costs and occupations are averaged
    over steps ``burn_in .. T-1``; standard errors use batch means over
    :data:`N_BATCHES` contiguous batches.
    """
    N, T, burn = config.N, config.T, config.burn_in
    n, m = model.n, model.m
    cum_pi = np.cumsum(_profile(model, config.profile, N), axis=2)
    gens = _streams(config.seed, N)
    agents = np.arange(N)

    cum_mu0 = np.cumsum(model.mu0)
    x = np.array([min(int((g.random() >= cum_mu0).sum()), n - 1) for g in gens])

    coupled = model.kernel_coupled
    cum_kernel = None if coupled else np.cumsum(model.kernel_at(None), axis=2)

    kept = T - burn
    batch_len = kept // N_BATCHES
    batch_sums = np.zeros((N, N_BATCHES))
    total_cost = np.zeros(N)
    occupation = np.zeros((N, n))
    emp_sum = np.zeros(n)
    trace = np.empty((T, n)) if config.record_trace else None
    cost1 = np.empty(T) if config.record_trace else None

    t = 0
    while t < T:
        steps = min(CHUNK, T - t)
        draws = np.stack([g.random((steps, 2)) for g in gens], axis=1)  # (steps, N, 2)
        for s in range(steps):
            e = np.bincount(x, minlength=n) / N
            if coupled:
                cum_kernel = np.cumsum(model.kernel_at(e), axis=2)
            a = _sample(cum_pi[agents, x], draws[s, :, 0])
            cost = model.cost_at(e)[x, a]
            if config.record_trace:
                trace[t] = e
                cost1[t] = cost[0]
            if t >= burn:
                total_cost += cost
                occupation[agents, x] += 1.0
                emp_sum += e
                b = (t - burn) // batch_len if batch_len else N_BATCHES
                if b < N_BATCHES:
                    batch_sums[:, b] += cost
            x = _sample(cum_kernel[x, a], draws[s, :, 1])
            t += 1

    avg = total_cost / kept
    if batch_len:
        means = batch_sums / batch_len
        stderr = means.std(axis=1, ddof=1) / np.sqrt(N_BATCHES)
    else:
        stderr = np.full(N, np.nan)
    return SimResult(
        avg_cost_per_agent=avg,
        stderr_per_agent=stderr,
        occupation=occupation / kept,
        mean_empirical=emp_sum / kept,
        empirical_trace=trace,
        cost_trace_agent1=cost1,
    )


def estimate_convergence(model, pi_star, mu_star, Ns, T, seed=0, burn_in=None, metric="tv"):
    """Distance from the time-averaged empirical measure to ``mu*`` per N.

    Returns a list of ``{"N": N, "distance": d}`` rows.
    """
    mu_star = check_prob_vector(mu_star, model.n, "mu_star")
    rows = []
    for N in Ns:
        res = simulate_population(
            model, SimConfig(N=N, T=T, profile=pi_star, burn_in=burn_in, seed=seed)
        )
        rows.append({"N": int(N), "distance": float(rho_distance(res.mean_empirical, mu_star, metric))})
    return rows
