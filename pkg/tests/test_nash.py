import itertools
import math

import numpy as np
import pytest
from conftest import FIXTURES
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import deterministic_average_cost, realized_cost

from mfgac.datasets import make_m2_tensor
from mfgac.exceptions import InconsistentInput, KernelCoupled
from mfgac.meanfield import lambda_map, solve_mfe
from mfgac.model import MFGModel
from mfgac.nash import (
    OmegaC,
    best_response_gap,
    check_eps_nash,
    effective_cost,
    eps_nash_report,
    epsilon_bound,
    epsilon_terms,
    omega_c_eval,
    rho_distance,
)

UNCOUPLED = ["M1", "M2-tensor"]


@pytest.fixture(scope="module")
def m2t_equilibrium():
    model = make_m2_tensor()
    pi = solve_mfe(model)[0].pi_star
    return model, pi, lambda_map(model, pi, tol=1e-13)


def line_model(r_pair):
    """Two states, one action, cost r[x][0] = r_pair for every x."""
    p0 = [[[0.5, 0.5]], [[0.5, 0.5]]]
    r = np.array([[r_pair], [r_pair]], dtype=float)
    return MFGModel(p0=p0, c0=[[0.0], [0.0]], r=r, lam=[0.2, 0.2], alpha=0.9, w=[1, 1])


# -- rho_distance ------------------------------------------------------------

@pytest.mark.parametrize("metric", ["tv", "weighted"])
def test_rho_identity(metric, rng):
    mu = rng.dirichlet(np.ones(5))
    assert rho_distance(mu, mu, metric) == 0.0


def test_rho_dirac_pair():
    assert rho_distance([1, 0], [0, 1], "weighted") == 1.5
    assert rho_distance([1, 0], [0, 1], "tv") == 2.0
    assert rho_distance([1, 0, 0], [0, 0, 1], "tv") == 2.0


def test_rho_triangle(rng):
    for metric in ("tv", "weighted"):
        for _ in range(500):
            a, b, c = rng.dirichlet(np.ones(4), size=3)
            assert rho_distance(a, c, metric) <= rho_distance(a, b, metric) + rho_distance(b, c, metric) + 1e-12


def test_rho_unknown_metric():
    with pytest.raises(ValueError):
        rho_distance([1, 0], [0, 1], "hellinger")


# -- omega_c -----------------------------------------------------------------

def test_omega_zero_for_decoupled_cost(m1):
    for t in (0.0, 0.3, 2.0):
        assert omega_c_eval(m1, t) == 0.0


def test_omega_at_zero(fixture_model):
    assert omega_c_eval(fixture_model, 0.0) == 0.0


def test_omega_negative_radius(m2):
    with pytest.raises(ValueError, match="NegativeRadius"):
        omega_c_eval(m2, -0.1)


def _grid_sup(r, t, metric, step=0.01):
    grid = np.arange(0, 1 + step / 2, step)
    mus = np.column_stack([grid, 1 - grid])
    best = 0.0
    for mu in mus:
        d = rho_distance(mu, mus, metric)
        ok = d <= t + 1e-12
        best = max(best, np.abs((mus[ok] - mu) @ r).max())
    return best


def test_omega_exact_lipschitz_grid():
    model = line_model([0.0, 1.0])
    omega = OmegaC.exact(model, "tv")
    assert omega.lipschitz == 0.5
    assert omega(0.4) == pytest.approx(0.2, abs=1e-15)
    assert _grid_sup(np.array([0.0, 1.0]), 0.4, "tv") == pytest.approx(0.2, abs=1e-12)


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0, 1.5])
def test_omega_weighted_metric_is_upper_envelope(t):
    r = np.array([0.2, 1.1])
    omega = OmegaC.exact(line_model(r), "weighted")
    assert omega(t) >= _grid_sup(r, t, "weighted") - 1e-12


def test_omega_sampled_below_exact_and_monotone(m2_tensor):
    exact = OmegaC.exact(m2_tensor)
    table = OmegaC.sampled(m2_tensor, pairs=5000, seed=1)
    assert table(0.0) == 0.0
    vals = np.array(table.values)
    assert np.all(np.diff(vals) >= 0)
    radii = np.array(table.radii)
    assert np.all(vals <= exact(radii) + 1e-12)
    # the sampled sup gets close to the envelope away from the cap
    assert table(1.0) >= 0.8 * exact(1.0)


def test_omega_bounded_by_oscillation(m2_tensor):
    omega = OmegaC.exact(m2_tensor)
    assert omega(50.0) == omega.c_osc == pytest.approx(1.5)


# -- epsilon_bound -----------------------------------------------------------

def test_epsilon_zero_for_decoupled_cost(m1):
    for N in (2, 5, 100):
        eps, se = epsilon_bound(m1, [0.75, 0.25], N, samples=500)
        assert eps == 0.0 and se == 0.0


def test_second_term_argument_at_four():
    # 2 (1 - 3/4 + 1/4) = 1
    model = line_model([0.0, 1.0])
    terms = epsilon_terms(model, [0.5, 0.5], 4, samples=100)
    assert terms["second_full"] == pytest.approx(OmegaC.exact(model)(1.0))
    assert terms["second_tight"] == pytest.approx(OmegaC.exact(model)(0.5))


def test_first_term_binomial_oracle():
    model = line_model([0.0, 1.0])
    L = 0.5
    # ||mu* - emp||_1 = 2 |k/100 - 1/2| with k ~ Binomial(100, 1/2)
    exact = sum(
        math.comb(100, k) * 0.5**100 * L * 2 * abs(k / 100 - 0.5) for k in range(101)
    )
    terms = epsilon_terms(model, [0.5, 0.5], 101, samples=20_000, seed=3)
    assert abs(terms["first"] - exact) <= 4 * terms["stderr"]
    assert exact == pytest.approx(0.03979461869358937, rel=1e-12)


def test_epsilon_reproducible_and_thread_invariant(m2t_equilibrium):
    model, _, mu = m2t_equilibrium
    a = epsilon_bound(model, mu, 50, samples=3000, seed=9)
    b = epsilon_bound(model, mu, 50, samples=3000, seed=9)
    c = epsilon_bound(model, mu, 50, samples=3000, seed=9, n_jobs=4)
    assert a == b == c
    assert epsilon_bound(model, mu, 50, samples=3000, seed=10) != a


def test_epsilon_input_checks(m2t_equilibrium):
    model, _, mu = m2t_equilibrium
    with pytest.raises(ValueError):
        epsilon_bound(model, mu, 1)
    with pytest.raises(ValueError):
        epsilon_bound(model, mu, 10, samples=50)


def test_epsilon_decreases(m2t_equilibrium):
    model, _, mu = m2t_equilibrium
    t5 = epsilon_terms(model, mu, 5, samples=10_000, seed=0)
    t200 = epsilon_terms(model, mu, 200, samples=10_000, seed=0)
    assert t200["first"] <= t5["first"] + 3 * math.hypot(t5["stderr"], t200["stderr"])
    assert t200["second_full"] <= t5["second_full"]


def test_epsilon_vanishes(m2t_equilibrium):
    model, _, mu = m2t_equilibrium
    omega = OmegaC.exact(model)
    assert omega.lipschitz <= 1
    eps, _ = epsilon_bound(model, mu, 10_000, samples=10_000)
    assert eps <= 0.05 * omega.c_osc


# -- effective_cost ----------------------------------------------------------

def test_effective_cost_decoupled(m1):
    np.testing.assert_array_equal(effective_cost(m1, [0.3, 0.7], 7), m1.c0)


def test_effective_cost_large_n_limit(m2t_equilibrium):
    model, _, mu = m2t_equilibrium
    np.testing.assert_allclose(effective_cost(model, mu, 10**6), model.cost_at(mu), atol=1e-5)


def mc_effective_cost(model, mu, N, draws, seed):
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(N - 1, mu, size=draws)
    means = np.empty((model.n, model.m))
    ses = np.empty((model.n, model.m))
    for x in range(model.n):
        meas = (counts + np.eye(model.n)[x]) / N
        vals = np.array([realized_cost(model, m_)[x] for m_ in meas[:2000]])  # spot check path
        full = model.c0[x] + meas @ model.r[x].T
        np.testing.assert_allclose(full[:2000], vals, atol=1e-14)
        means[x] = full.mean(axis=0)
        ses[x] = full.std(axis=0, ddof=1) / np.sqrt(draws)
    return means, ses


@pytest.mark.parametrize("N", [5])
def test_effective_cost_monte_carlo_m2t(m2t_equilibrium, N):
    model, _, mu = m2t_equilibrium
    mean, se = mc_effective_cost(model, mu, N, 10**6, seed=1)
    closed = effective_cost(model, mu, N)
    assert np.all(np.abs(closed - mean) <= 3 * se + 1e-15)


def test_effective_cost_rejects_coupled_kernel(m2):
    mu = np.full(3, 1 / 3)
    with pytest.raises(KernelCoupled):
        effective_cost(m2, mu, 5)
    table = effective_cost(m2, mu, 5, check_kernel=False)
    mean, se = mc_effective_cost(m2, mu, 5, 10**5, seed=2)
    assert np.all(np.abs(table - mean) <= 4 * se + 1e-15)


# -- best_response_gap -------------------------------------------------------

def test_gap_zero_when_decoupled(m1):
    pi = np.eye(2)[[0, 1]]
    mu = lambda_map(m1, pi, tol=1e-13)
    for N in (2, 5, 200):
        assert best_response_gap(m1, pi, mu, N) == 0.0


def brute_gap(model, pi_actions, mu, N):
    cbar = effective_cost(model, mu, N)
    mdp = model.with_cost(cbar, None)
    values = [
        deterministic_average_cost(mdp, np.array(a), mu)
        for a in itertools.product(range(model.m), repeat=model.n)
    ]
    j_eq = deterministic_average_cost(mdp, np.array(pi_actions), mu)
    return j_eq - min(values)


@pytest.mark.parametrize("N", [2, 5, 10, 50, 200])
def test_gap_matches_enumeration(m2t_equilibrium, N):
    model, pi, mu = m2t_equilibrium
    gap = best_response_gap(model, pi, mu, N)
    assert gap == pytest.approx(brute_gap(model, pi.argmax(axis=1), mu, N), abs=1e-9)


def test_gap_values_frozen(m2t_equilibrium):
    # values from exhaustive enumeration (test_gap_matches_enumeration)
    model, pi, mu = m2t_equilibrium
    assert best_response_gap(model, pi, mu, 5) == pytest.approx(0.03891122381, abs=1e-9)
    assert best_response_gap(model, pi, mu, 200) == 0.0


def test_gap_ordering_and_domination(m2t_equilibrium):
    model, pi, mu = m2t_equilibrium
    g5, g200 = (best_response_gap(model, pi, mu, N) for N in (5, 200))
    assert g200 <= g5 + 1e-9
    for N, g in ((5, g5), (200, g200)):
        eps, se = epsilon_bound(model, mu, N)
        assert g <= eps + 3 * se


@pytest.mark.parametrize("N", [2, 5, 50])
def test_gap_perturbation_bound(m2t_equilibrium, N):
    model, pi, mu = m2t_equilibrium
    shift = np.abs(effective_cost(model, mu, N) - model.cost_at(mu)).max()
    assert best_response_gap(model, pi, mu, N) <= 2 * shift + 1e-12


def test_gap_inconsistent_input(m2t_equilibrium):
    model, pi, mu = m2t_equilibrium
    with pytest.raises(InconsistentInput):
        best_response_gap(model, pi, np.full(3, 1 / 3), 5)


def test_gap_rejects_coupled(m2):
    with pytest.raises(KernelCoupled):
        best_response_gap(m2, np.eye(2)[[1, 1, 0]], np.full(3, 1 / 3), 5)


# -- verdicts ----------------------------------------------------------------

def test_check_eps_nash():
    assert check_eps_nash(0.0, 0.0, 0.0)
    assert check_eps_nash(0.0, 0.3)
    assert not check_eps_nash(0.1, 0.05, 0.001)
    assert check_eps_nash(0.1, 0.05, 0.02)
    with pytest.raises(ValueError):
        check_eps_nash(-1.0, 0.1)


@settings(max_examples=100, deadline=None)
@given(gap=st.floats(0, 10), eps=st.floats(0, 10), se=st.floats(0, 1))
def test_check_eps_nash_rule(gap, eps, se):
    assert check_eps_nash(gap, eps, se) == (gap <= eps + 3 * se)


def test_pipeline_m2_tensor(m2t_equilibrium):
    model, pi, mu = m2t_equilibrium
    rows = eps_nash_report(model, pi, mu, Ns=(5, 10, 50, 200))
    assert [r.N for r in rows] == [5, 10, 50, 200]
    assert all(r.verdict for r in rows)
    assert rows[-1].eps_bound < rows[0].eps_bound
    for r in rows:
        assert r.eps_tight <= r.eps_bound
        assert r.metric == "tv"


@pytest.mark.parametrize("name", UNCOUPLED)
@pytest.mark.parametrize("metric", ["tv", "weighted"])
def test_gap_below_bound_all_fixtures(name, metric):
    model = FIXTURES[name]
    pi = solve_mfe(model)[0].pi_star
    rows = eps_nash_report(model, pi, Ns=(2, 5, 20), metric=metric, samples=2000)
    assert all(r.verdict for r in rows)
