"""Small reference models and random model generators."""

import numpy as np

from .model import MFGModel, validate_drift

__all__ = [
    "make_m1",
    "make_m2",
    "make_m2_tensor",
    "make_symmetric",
    "make_oscillating",
    "make_random_model",
    "fixtures",
]


def _alpha_with_slack(model_kwargs, slack=0.5):
    """Pick alpha halfway between the minimal feasible value and one."""
    probe = MFGModel(**{**model_kwargs, "alpha": 0.5})
    needed = validate_drift(probe).details["min_feasible_alpha"]
    return needed + slack * (1.0 - needed)


def make_m1():
    """Two states, two actions, tensor kernel, cost independent of mu."""
    p0 = [
        [[0.8, 0.2], [0.4, 0.6]],
        [[0.3, 0.7], [0.6, 0.4]],
    ]
    kw = dict(
        p0=p0,
        c0=[[1.0, 2.0], [3.0, 1.5]],
        lam=[0.25, 0.15],
        w=[1.0, 1.2],
        name="M1",
    )
    return MFGModel(alpha=_alpha_with_slack(kw), **kw)


# Three states, two actions. Action 0 drifts toward state 0, action 1
# toward state 2; cost rises with the crowd at one's own state, more
# steeply under action 0.
_M2_P0 = [
    [[0.70, 0.20, 0.10], [0.20, 0.30, 0.50]],
    [[0.50, 0.35, 0.15], [0.15, 0.35, 0.50]],
    [[0.45, 0.20, 0.35], [0.10, 0.20, 0.70]],
]
_M2_C0 = [[0.5, 0.8], [1.0, 0.6], [0.4, 0.9]]
_M2_LAM = [0.10, 0.15, 0.10]
_M2_W = [1.0, 1.1, 1.2]


def _m2_coupling():
    n, m = 3, 2
    r = np.zeros((n, m, n))
    for x in range(n):
        r[x, 0, x] = 1.5
        r[x, 1, x] = 0.3
    # q[x, a, z]: the population at z pulls the next state toward z
    q = np.zeros((n, m, n, n))
    lam = np.array(_M2_LAM)
    for x in range(n):
        for a in range(m):
            for z in range(n):
                row = lam + (1.0 - lam.sum()) * 0.5 * (np.eye(n)[z] + np.eye(n)[x])
                q[x, a, z] = row
    return r, q


def make_m2(kappa=0.3):
    """Three states, two actions, affine-coupled kernel and cost."""
    r, q = _m2_coupling()
    kw = dict(p0=_M2_P0, c0=_M2_C0, r=r, q=q, kappa=kappa, lam=_M2_LAM, w=_M2_W, name="M2")
    return MFGModel(alpha=_alpha_with_slack(kw), **kw)


def make_m2_tensor():
    """M2 with the kernel coupling removed (measure-independent kernel)."""
    r, _ = _m2_coupling()
    kw = dict(p0=_M2_P0, c0=_M2_C0, r=r, lam=_M2_LAM, w=_M2_W, name="M2-tensor")
    return MFGModel(alpha=_alpha_with_slack(kw), **kw)


def make_symmetric():
    """Two mirror-image states; the equilibrium measure is (1/2, 1/2)."""
    p0 = [
        [[0.7, 0.3], [0.4, 0.6]],
        [[0.3, 0.7], [0.6, 0.4]],
    ]
    r = np.zeros((2, 2, 2))
    r[0, :, 0] = 1.0
    r[1, :, 1] = 1.0
    q = np.zeros((2, 2, 2, 2))
    for x in range(2):
        for a in range(2):
            for z in range(2):
                q[x, a, z] = [0.5, 0.5]
    kw = dict(
        p0=p0,
        c0=[[0.2, 0.5], [0.2, 0.5]],
        r=r,
        q=q,
        kappa=0.2,
        lam=[0.25, 0.25],
        w=[1.0, 1.0],
        name="symmetric",
    )
    return MFGModel(alpha=_alpha_with_slack(kw), **kw)


def make_oscillating():
    """Anti-coordination game on which greedy best responses cycle.

    Action ``a`` steers toward state ``a`` and the cost is the crowd at
    the current state. Any measure away from (1/2, 1/2) sends everybody
    to the emptier state. The equilibria at (1/2, 1/2) need a tie broken
    away from the smallest action, so the damped loop does not find them.
    """
    lam = np.array([0.1, 0.1])
    p0 = np.empty((2, 2, 2))
    for a in range(2):
        p0[:, a] = lam + 0.8 * np.eye(2)[a]
    r = np.zeros((2, 2, 2))
    r[0, :, 0] = 2.0
    r[1, :, 1] = 2.0
    kw = dict(p0=p0, c0=np.zeros((2, 2)), r=r, lam=lam, w=[1.0, 1.0], name="oscillating")
    return MFGModel(alpha=_alpha_with_slack(kw), **kw)


def make_random_model(n=3, m=2, lambda_mass=0.4, kappa=0.0, cost_coupling=0.5, seed=None):
    """Random model satisfying the minorization and drift assumptions.

    Every kernel row is ``lambda + (1 - mass) * Dirichlet(1)`` with a
    uniform ``lambda`` of the requested mass, so the minorization holds by
    construction.
    """
    rng = np.random.default_rng(seed)
    lam = np.full(n, lambda_mass / n)
    spread = 1.0 - lambda_mass
    p0 = lam + spread * rng.dirichlet(np.ones(n), size=(n, m))
    q = None
    if kappa > 0.0:
        q = lam + spread * rng.dirichlet(np.ones(n), size=(n, m, n))
    c0 = rng.uniform(0.0, 1.0, size=(n, m))
    r = cost_coupling * rng.uniform(0.0, 1.0, size=(n, m, n))
    w = 1.0 + 0.2 * rng.uniform(size=n)
    kw = dict(p0=p0, c0=c0, r=r, q=q, kappa=kappa, lam=lam, w=w,
              name=f"random-{seed}")
    probe = MFGModel(**{**kw, "alpha": 0.5})
    if validate_drift(probe).details["min_feasible_alpha"] >= 1.0:
        # a constant moment function always works: its ratio is 1 - mass
        kw["w"] = np.ones(n)
    return MFGModel(alpha=_alpha_with_slack(kw), **kw)


def fixtures():
    """Named reference models used by the test-suite and the examples."""
    return {
        "M1": make_m1(),
        "M2": make_m2(),
        "M2-tensor": make_m2_tensor(),
        "symmetric": make_symmetric(),
    }
