"""Finite mean-field game model with average-cost criterion.

The transition kernel and the one-stage cost are affine in the population
measure ``mu``::

    p(y | x, a, mu) = (1 - kappa) * p0[x, a, y] + kappa * sum_z q[x, a, z, y] * mu[z]
    c(x, a, mu)     = c0[x, a] + sum_z r[x, a, z] * mu[z]

A kernel with ``q is None`` (or ``kappa == 0``) does not depend on ``mu``.
Affinity means every supremum/infimum over the simplex is attained at a
vertex ``mu = delta_z``, which is what makes the assumption checks in this
module exact.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._validation import (
    HARD_TOL,
    as_float_array,
    check_index,
    check_prob_vector,
    check_stochastic,
)
from .exceptions import ModelError, NegativeEntry

__all__ = [
    "MFGModel",
    "ValidationReport",
    "eval_kernel",
    "eval_cost",
    "hat_kernel",
    "validate_minorization",
    "validate_drift",
    "load_model",
    "save_model",
]

# entries of p - lambda in [-CLAMP_TOL, 0) are float dust
CLAMP_TOL = 1e-12


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MFGModel:
    """Immutable finite mean-field game.

    Parameters
    ----------
    p0 : array of shape (n, m, n)
        Base transition kernel; ``p0[x, a]`` is a probability vector.
    c0 : array of shape (n, m)
        Base one-stage cost.
    lam : array of shape (n,)
        Minorization measure with total mass in (0, 1).
    alpha : float
        Drift coefficient in (0, 1).
    w : array of shape (n,)
        Nonnegative moment function of the drift certificate.
    r : array of shape (n, m, n), optional
        Cost coupling; zero when omitted.
    q : array of shape (n, m, n, n), optional
        Kernel coupling rows ``q[x, a, z]``; ``None`` gives a tensor
        (measure-independent) kernel.
    kappa : float
        Coupling weight in [0, 1); only meaningful with ``q``.
    mu0 : array of shape (n,), optional
        Initial distribution, uniform when omitted.
    """

    p0: np.ndarray
    c0: np.ndarray
    lam: np.ndarray
    alpha: float
    w: np.ndarray
    r: np.ndarray = None
    q: np.ndarray = None
    kappa: float = 0.0
    mu0: np.ndarray = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        p0 = as_float_array(self.p0, path="kernel.p0")
        if p0.ndim != 3 or p0.shape[0] != p0.shape[2]:
            raise ModelError(f"expected shape (n, m, n), got {p0.shape}", "kernel.p0")
        n, m, _ = p0.shape
        if n < 1 or m < 1:
            raise ModelError("need at least one state and one action", "kernel.p0")
        p0 = check_stochastic(p0, path="kernel.p0")

        kappa = float(self.kappa)
        q = self.q
        if q is not None:
            q = check_stochastic(
                as_float_array(q, shape=(n, m, n, n), path="kernel.q"), path="kernel.q"
            )
            if not 0.0 <= kappa < 1.0:
                raise ModelError(f"kappa={kappa} not in [0, 1)", "kernel.kappa")
        elif kappa != 0.0:
            raise ModelError("kappa given without coupling rows q", "kernel.kappa")

        c0 = as_float_array(self.c0, shape=(n, m), path="cost.c0")
        r = (
            np.zeros((n, m, n))
            if self.r is None
            else as_float_array(self.r, shape=(n, m, n), path="cost.r")
        )
        vertex_costs = c0[:, :, None] + r
        if vertex_costs.min() < 0.0:
            x, a, z = (int(i) for i in np.unravel_index(vertex_costs.argmin(), vertex_costs.shape))
            raise ModelError(
                f"cost c(x={x}, a={a}, delta_{z}) = {vertex_costs[x, a, z]:.3g} is negative",
                "cost",
            )

        lam = as_float_array(self.lam, shape=(n,), path="lambda")
        if lam.min() < 0.0:
            raise ModelError("minorization measure has a negative entry", "lambda")
        mass = lam.sum()
        if not 0.0 < mass < 1.0:
            raise ModelError(f"mass {mass:.6g} not in (0, 1)", "lambda")

        alpha = float(self.alpha)
        if not 0.0 < alpha < 1.0:
            raise ModelError(f"alpha={alpha} not in (0, 1)", "drift.alpha")
        w = as_float_array(self.w, shape=(n,), path="drift.w")
        if w.min() < 0.0:
            raise ModelError("moment function must be nonnegative", "drift.w")

        mu0 = np.full(n, 1.0 / n) if self.mu0 is None else check_prob_vector(self.mu0, n, "mu0")

        set_ = object.__setattr__
        set_(self, "p0", _frozen(p0))
        set_(self, "q", None if q is None else _frozen(q))
        set_(self, "kappa", kappa)
        set_(self, "c0", _frozen(c0))
        set_(self, "r", _frozen(r))
        set_(self, "lam", _frozen(lam))
        set_(self, "alpha", alpha)
        set_(self, "w", _frozen(w))
        set_(self, "mu0", _frozen(mu0))

    # -- shape ---------------------------------------------------------------

    @property
    def n(self):
        return self.p0.shape[0]

    @property
    def m(self):
        return self.p0.shape[1]

    @property
    def kernel_type(self):
        return "tensor" if self.q is None else "affine"

    @property
    def kernel_coupled(self):
        """True when the realized kernel actually depends on ``mu``."""
        return self.q is not None and self.kappa > 0.0

    @property
    def cost_coupled(self):
        return bool(np.any(self.r != self.r[:, :, :1]))

    @property
    def lambda_mass(self):
        return float(self.lam.sum())

    @property
    def beta(self):
        """Contraction modulus ``1 - lambda(X)`` of the shifted Bellman operator."""
        return 1.0 - self.lambda_mass

    @property
    def c_max(self):
        """Exact sup of the cost over states, actions and the simplex."""
        return float((self.c0[:, :, None] + self.r).max())

    # -- realized primitives -------------------------------------------------

    def kernel_at(self, mu):
        """Full realized kernel, shape ``(n, m, n)``."""
        if self.q is None:
            return self.p0
        mu = np.asarray(mu, dtype=float)
        coupled = np.einsum("xazy,z->xay", self.q, mu)
        return (1.0 - self.kappa) * self.p0 + self.kappa * coupled

    def cost_at(self, mu):
        """Realized cost table, shape ``(n, m)``."""
        return self.c0 + self.r @ np.asarray(mu, dtype=float)

    def hat_kernel_at(self, mu):
        """Sub-stochastic kernel ``p - lambda``, shape ``(n, m, n)``."""
        hat = self.kernel_at(mu) - self.lam
        low = hat.min()
        if low < -HARD_TOL:
            x, a, y = (int(i) for i in np.unravel_index(hat.argmin(), hat.shape))
            raise NegativeEntry(
                f"p(y={y} | x={x}, a={a}) is below lambda[{y}] by {-low:.3g}"
            )
        return np.clip(hat, 0.0, None)

    def vertex_kernels(self):
        """Realized kernels at every Dirac measure, shape ``(n_z, n, m, n)``.

        For a tensor kernel there is a single vertex.
        """
        if self.q is None:
            return self.p0[None]
        # q[x, a, z, y] -> [z, x, a, y]
        return (1.0 - self.kappa) * self.p0[None] + self.kappa * self.q.transpose(2, 0, 1, 3)

    def with_cost(self, c0, r=None):
        """Copy of the model with a different cost."""
        return replace(self, c0=c0, r=r)

    # -- serialization -------------------------------------------------------

    def to_dict(self):
        kernel = {"type": self.kernel_type, "p0": self.p0.tolist()}
        if self.q is not None:
            kernel["kappa"] = self.kappa
            kernel["q"] = self.q.tolist()
        return {
            "n": self.n,
            "m": self.m,
            "kernel": kernel,
            "cost": {"c0": self.c0.tolist(), "r": self.r.tolist()},
            "lambda": self.lam.tolist(),
            "drift": {"alpha": self.alpha, "w": self.w.tolist()},
            "mu0": self.mu0.tolist(),
        }

    @classmethod
    def from_dict(cls, doc, name=""):
        """Build a model from a parsed model document.

        Errors name the offending path, e.g. ``kernel.p0[1][0]``.
        """
        if not isinstance(doc, dict):
            raise ModelError("model document must be a JSON object", "$")

        def need(obj, key, path):
            if not isinstance(obj, dict) or key not in obj:
                raise ModelError("missing field", f"{path}.{key}" if path else key)
            return obj[key]

        n = need(doc, "n", "")
        m = need(doc, "m", "")
        for key, val in (("n", n), ("m", m)):
            if not isinstance(val, int) or isinstance(val, bool) or val < 1:
                raise ModelError("must be a positive integer", key)

        kernel = need(doc, "kernel", "")
        ktype = need(kernel, "type", "kernel")
        if ktype not in ("tensor", "affine"):
            raise ModelError(f"unknown kernel type {ktype!r}", "kernel.type")
        p0 = as_float_array(need(kernel, "p0", "kernel"), shape=(n, m, n), path="kernel.p0")
        q = None
        kappa = 0.0
        if ktype == "affine":
            kappa = need(kernel, "kappa", "kernel")
            if not isinstance(kappa, (int, float)) or isinstance(kappa, bool):
                raise ModelError("must be a number", "kernel.kappa")
            q = as_float_array(need(kernel, "q", "kernel"), shape=(n, m, n, n), path="kernel.q")

        cost = need(doc, "cost", "")
        c0 = as_float_array(need(cost, "c0", "cost"), shape=(n, m), path="cost.c0")
        r = cost.get("r") if isinstance(cost, dict) else None
        if r is not None:
            r = as_float_array(r, shape=(n, m, n), path="cost.r")

        lam = as_float_array(need(doc, "lambda", ""), shape=(n,), path="lambda")
        drift = need(doc, "drift", "")
        alpha = need(drift, "alpha", "drift")
        if not isinstance(alpha, (int, float)) or isinstance(alpha, bool):
            raise ModelError("must be a number", "drift.alpha")
        w = as_float_array(need(drift, "w", "drift"), shape=(n,), path="drift.w")
        mu0 = doc.get("mu0")

        return cls(p0=p0, c0=c0, lam=lam, alpha=alpha, w=w, r=r, q=q,
                   kappa=kappa, mu0=mu0, name=name)


def load_model(path):
    """Read a model JSON file. Raises :class:`ModelError` on any defect."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ModelError(f"cannot read file ({exc.strerror})", str(path)) from None
    except json.JSONDecodeError as exc:
        raise ModelError(f"invalid JSON: {exc.msg} at line {exc.lineno}", "$") from None
    return MFGModel.from_dict(doc, name=path.stem)


def save_model(model, path):
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n")


# -- pointwise evaluation ----------------------------------------------------

def eval_kernel(model, x, a, mu):
    """Realized transition row ``p(. | x, a, mu)``."""
    x = check_index(x, model.n, "x")
    a = check_index(a, model.m, "a")
    if model.q is None:
        return model.p0[x, a].copy()
    mu = check_prob_vector(mu, model.n)
    return (1.0 - model.kappa) * model.p0[x, a] + model.kappa * (mu @ model.q[x, a])


def eval_cost(model, x, a, mu):
    """One-stage cost ``c(x, a, mu)``."""
    x = check_index(x, model.n, "x")
    a = check_index(a, model.m, "a")
    mu = check_prob_vector(mu, model.n)
    return float(model.c0[x, a] + model.r[x, a] @ mu)


def hat_kernel(model, x, a, mu):
    """Row of the sub-stochastic kernel ``p(. | x, a, mu) - lambda``.

    Entries within ``1e-12`` below zero are clamped; a larger violation of
    the minorization raises :class:`NegativeEntry`.
    """
    row = eval_kernel(model, x, a, mu) - model.lam
    low = row.min()
    if low < -HARD_TOL:
        y = int(row.argmin())
        raise NegativeEntry(f"p(y={y} | x={x}, a={a}) is below lambda[{y}] by {-low:.3g}")
    return np.clip(row, 0.0, None)


# -- assumption checks -------------------------------------------------------

@dataclass
class ValidationReport:
    """Outcome of one assumption check.

    ``witness`` identifies the worst violating index tuple when the check
    fails; ``details`` carries check-specific diagnostics.
    """

    check: str
    passed: bool
    worst_margin: float
    witness: dict = None
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "check": self.check,
            "passed": self.passed,
            "worst_margin": self.worst_margin,
            "witness": self.witness,
            **self.details,
        }


def validate_minorization(model):
    """Check ``p(y | x, a, mu) >= lambda[y]`` over the whole simplex.

    Affine kernels attain their minimum at a vertex, so checking every
    ``mu = delta_z`` is sufficient. Also reports the largest uniform
    minorization mass any kernel row would admit.
    """
    verts = model.vertex_kernels()  # (z, x, a, y)
    margins = verts - model.lam
    worst = float(margins.min())
    z, x, a, y = (int(i) for i in np.unravel_index(margins.argmin(), margins.shape))
    passed = worst >= -CLAMP_TOL
    witness = None
    if not passed:
        witness = {"x": x, "a": a, "z": z if model.q is not None else None, "y": y,
                   "p": float(verts[z, x, a, y]), "lambda": float(model.lam[y])}
    details = {
        "lambda_mass": model.lambda_mass,
        "beta": model.beta,
        "max_uniform_lambda_mass": float(verts.min() * model.n),
    }
    return ValidationReport("minorization", passed, worst, witness, details)


def validate_drift(model):
    """Check the drift inequality ``sum_y w[y] * phat(y|x,a,mu) <= alpha * w[x]``.

    The left side is affine in ``mu``; its sup over actions and the simplex
    is a max over actions and vertices. States with ``w[x] == 0`` but a
    positive left side cannot satisfy the inequality for any ``alpha`` and
    are flagged as degenerate.
    """
    hat = np.clip(model.vertex_kernels() - model.lam, 0.0, None)  # (z, x, a, y)
    lhs = (hat @ model.w).max(axis=(0, 2))  # sup over z and a, per x
    w = model.w
    pos = w > 0
    ratios = np.full(model.n, np.nan)
    ratios[pos] = lhs[pos] / w[pos]
    degenerate = [int(x) for x in np.flatnonzero(~pos & (lhs > CLAMP_TOL))]

    min_alpha = float(np.nanmax(ratios)) if pos.any() else 0.0
    if degenerate:
        min_alpha = float("inf")
    slack = model.alpha * w - lhs
    worst = float(slack.min())
    passed = not degenerate and bool(np.all(lhs <= model.alpha * w + CLAMP_TOL))
    witness = None
    if not passed:
        x = degenerate[0] if degenerate else int(slack.argmin())
        witness = {"x": x, "lhs": float(lhs[x]), "alpha_w": float(model.alpha * w[x])}
    details = {
        "alpha": model.alpha,
        "max_ratio": None if not pos.any() else float(np.nanmax(ratios)),
        "min_feasible_alpha": min_alpha,
        "degenerate_states": degenerate,
    }
    return ValidationReport("drift", passed, worst, witness, details)
