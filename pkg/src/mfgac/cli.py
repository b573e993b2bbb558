"""Command-line interface.

Exit codes: 0 success, 1 assumption failure (or a failed eps-Nash verdict),
2 input error, 3 non-convergence, 4 unsupported model class.
"""

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .acoe import solve_acoe
from .exceptions import KernelCoupled, MaxIterExceeded, ModelError, NonConvergence
from .meanfield import lambda_map, solve_mfe
from .model import load_model, validate_drift, validate_minorization
from .nash import METRICS, eps_nash_report
from .sim import SimConfig, simulate_population

# Defaults for every tunable; each is overridable by a flag.
DEFAULTS = {
    "acoe_tol": 1e-10,  # value-iteration residual
    "cert_tol": 1e-6,  # equilibrium certificate fields
    "theta": 0.5,  # damping of the equilibrium loop
    "max_iter": 500,  # outer equilibrium iterations per start
    "random_starts": 2,  # random starts on top of uniform and lambda/mass
    "samples": 10_000,  # Monte Carlo replications for eps(N)
    "T": 100_000,  # simulation horizon
    "N_list": "5,10,50,200",
    "metric": "tv",
    "seed": 0,
    "threads": 1,
}
SEED_ENV = "MFGAC_SEED"

EXIT_OK, EXIT_ASSUMPTION, EXIT_INPUT, EXIT_NONCONV, EXIT_UNSUPPORTED = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


def _clean(obj):
    """Make ``obj`` JSON-safe: ndarrays to lists, non-finite floats to None."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(args, payload):
    if not args.no_meta:
        payload = {
            **payload,
            "meta": {
                "version": __version__,
                "command": args.command,
                "model": str(args.model),
                "threads": args.threads,
                "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            },
        }
    text = json.dumps(_clean(payload), indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    if path == "-":
        sys.stdout.write(buf.getvalue())
    else:
        with open(path, "w") as fh:
            fh.write(buf.getvalue())


def _float_list(text, name):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--{name}: expected comma-separated numbers, got {text!r}") from None


def _int_list(text, name):
    try:
        values = [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--{name}: expected comma-separated integers, got {text!r}") from None
    return values


def _parse_mu(text, n):
    if text in (None, "uniform"):
        return np.full(n, 1.0 / n)
    values = _float_list(text, "mu")
    if len(values) != n:
        raise UsageError(f"--mu: expected {n} entries, got {len(values)}")
    return values


def _parse_policy(text, model):
    actions = _int_list(text, "policy")
    if len(actions) != model.n or any(not 0 <= a < model.m for a in actions):
        raise UsageError(f"--policy: expected {model.n} action indices in [0, {model.m})")
    return np.eye(model.m)[actions]


def _assumptions(model):
    mino = validate_minorization(model)
    drift = validate_drift(model) if mino.passed else None
    return mino, drift


def _require_assumptions(model):
    mino, drift = _assumptions(model)
    if not mino.passed:
        raise AssumptionFailure(f"minorization fails at {mino.witness}")
    if not drift.passed:
        raise AssumptionFailure(f"drift inequality fails at {drift.witness}")


class AssumptionFailure(Exception):
    pass


def _solve_equilibrium(args, model):
    eqs = solve_mfe(
        model,
        n_random=args.random_starts,
        theta=args.theta,
        tol=args.tol,
        max_iter=args.max_iter,
        acoe_tol=args.acoe_tol,
        seed=args.seed,
        n_jobs=args.threads,
    )
    return eqs


# -- subcommands -------------------------------------------------------------

def cmd_validate(args, model):
    mino, drift = _assumptions(model)
    passed = mino.passed and drift is not None and drift.passed
    _emit(args, {
        "passed": passed,
        "n": model.n,
        "m": model.m,
        "kernel_type": model.kernel_type,
        "minorization": mino.to_dict(),
        "drift": None if drift is None else drift.to_dict(),
        "suggested_lambda_mass": mino.details["max_uniform_lambda_mass"],
        "min_feasible_alpha": None if drift is None else drift.details["min_feasible_alpha"],
    })
    return EXIT_OK if passed else EXIT_ASSUMPTION


def cmd_solve_acoe(args, model):
    _require_assumptions(model)
    mu = _parse_mu(args.mu, model.n)
    sol = solve_acoe(model, mu, tol=args.acoe_tol, max_iter=args.max_iter_acoe)
    _emit(args, {"mu": mu, **sol.to_dict()})
    return EXIT_OK


def cmd_solve_mfe(args, model):
    _require_assumptions(model)
    try:
        eqs = _solve_equilibrium(args, model)
    except NonConvergence as exc:
        best = exc.best
        payload = {
            "converged": False,
            "message": str(exc),
            "best": None if best is None else best.to_dict(args.full_policy),
            "trace": exc.trace,
        }
        _emit(args, payload)
        if args.trace_csv and best is not None:
            _write_mfe_trace(args.trace_csv, best.trace)
        return EXIT_NONCONV
    best = eqs[0]
    _emit(args, {
        "converged": True,
        **best.to_dict(args.full_policy),
        "equilibria": [e.to_dict(args.full_policy) for e in eqs],
    })
    if args.trace_csv:
        _write_mfe_trace(args.trace_csv, best.trace)
    return EXIT_OK


def _write_mfe_trace(path, trace):
    header = ["iteration", "theta", "consistency_residual", "optimality_gap", "b_mass_defect", "policy"]
    rows = [[t[h] if h != "policy" else " ".join(map(str, t[h])) for h in header] for t in trace]
    _write_csv(path, header, rows)


def cmd_eps_nash(args, model):
    if model.kernel_coupled:
        raise KernelCoupled(
            "eps-nash needs a transition kernel that does not depend on the "
            "population measure; this model's kernel is coupled (kappa > 0)"
        )
    _require_assumptions(model)
    Ns = _int_list(args.N, "N")
    if any(N < 2 for N in Ns):
        raise UsageError("--N: every population size must be at least 2")
    if args.policy:
        pi_star = _parse_policy(args.policy, model)
    else:
        pi_star = _solve_equilibrium(args, model)[0].pi_star
    mu_star = lambda_map(model, pi_star, tol=1e-13)
    reports = eps_nash_report(
        model, pi_star, mu_star, Ns=Ns, metric=args.metric, samples=args.samples,
        seed=args.seed, tol=args.acoe_tol, n_jobs=args.threads,
    )
    verdict = all(r.verdict for r in reports)
    _emit(args, {
        "metric": args.metric,
        "samples": args.samples,
        "seed": args.seed,
        "policy": pi_star.argmax(axis=1),
        "mu_star": mu_star,
        "verdict": verdict,
        "rows": [r.to_dict() for r in reports],
    })
    if args.csv:
        _write_csv(
            args.csv,
            ["N", "eps_paper", "eps_tight", "stderr", "gap_exact", "verdict"],
            [[r.N, repr(r.eps_bound), repr(r.eps_tight), repr(r.mc_stderr),
              repr(r.gap_exact), str(r.verdict).lower()] for r in reports],
        )
    return EXIT_OK if verdict else EXIT_ASSUMPTION


def cmd_simulate(args, model):
    _require_assumptions(model)
    if args.policy:
        pi = _parse_policy(args.policy, model)
        mu_ref = lambda_map(model, pi)
    else:
        best = _solve_equilibrium(args, model)[0]
        pi, mu_ref = best.pi_star, best.mu_star
    if not 0 <= (args.burn_in if args.burn_in is not None else 0) < args.T:
        raise UsageError("--burn-in must be in [0, T)")
    config = SimConfig(N=args.N, T=args.T, profile=pi, burn_in=args.burn_in,
                       seed=args.seed, record_trace=bool(args.trace_csv))
    res = simulate_population(model, config)
    _emit(args, {
        "N": args.N,
        "T": args.T,
        "burn_in": config.burn_in,
        "seed": args.seed,
        "policy": pi.argmax(axis=1),
        "mu_ref": mu_ref,
        **res.to_dict(),
        "tv_mean_empirical_to_mu_ref": float(np.abs(res.mean_empirical - mu_ref).sum()),
    })
    if args.trace_csv:
        _write_csv(args.trace_csv, ["t", "tv_to_mu_ref", "running_avg_cost_agent1"],
                   [[t, repr(d), repr(c)] for t, d, c in res.trace_rows(mu_ref)])
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "solve-acoe": cmd_solve_acoe,
    "solve-mfe": cmd_solve_mfe,
    "eps-nash": cmd_eps_nash,
    "simulate": cmd_simulate,
}


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _theta(text):
    value = float(text)
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError("must be in (0, 1]")
    return value


def build_parser():
    env_seed = os.environ.get(SEED_ENV)
    default_seed = int(env_seed) if env_seed is not None else DEFAULTS["seed"]

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("model", help="model JSON file")
    common.add_argument("--out", help="write the JSON report here instead of stdout")
    common.add_argument("--no-meta", action="store_true",
                        help="omit version/timestamp metadata (byte-stable output)")
    common.add_argument("--threads", type=_positive_int, default=DEFAULTS["threads"])
    common.add_argument("--seed", type=int, default=default_seed,
                        help=f"root seed (env {SEED_ENV} overrides the default)")
    common.add_argument("--acoe-tol", type=_positive_float, default=DEFAULTS["acoe_tol"])

    mfe = argparse.ArgumentParser(add_help=False)
    mfe.add_argument("--tol", type=_positive_float, default=DEFAULTS["cert_tol"],
                     help="certificate tolerance")
    mfe.add_argument("--theta", type=_theta, default=DEFAULTS["theta"])
    mfe.add_argument("--max-iter", type=_positive_int, default=DEFAULTS["max_iter"])
    mfe.add_argument("--random-starts", type=int, default=DEFAULTS["random_starts"])

    parser = argparse.ArgumentParser(
        prog="mfgac",
        description="Average-cost mean-field games on finite spaces.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", parents=[common], help="check minorization and drift")

    p = sub.add_parser("solve-acoe", parents=[common], help="solve the ACOE at a fixed measure")
    p.add_argument("--mu", default="uniform", help="'uniform' or comma-separated vector")
    p.add_argument("--max-iter-acoe", type=_positive_int, default=None)

    p = sub.add_parser("solve-mfe", parents=[common, mfe], help="compute a mean-field equilibrium")
    p.add_argument("--full-policy", action="store_true", help="emit the policy matrix")
    p.add_argument("--trace-csv", help="write the iteration trace of the best start")

    p = sub.add_parser("eps-nash", parents=[common, mfe], help="finite-N eps-Nash table")
    p.add_argument("--N", default=DEFAULTS["N_list"], help="comma-separated population sizes")
    p.add_argument("--samples", type=_positive_int, default=DEFAULTS["samples"])
    p.add_argument("--metric", choices=METRICS, default=DEFAULTS["metric"])
    p.add_argument("--policy", help="comma-separated action per state (default: solve)")
    p.add_argument("--csv", help="write the per-N table as CSV ('-' for stdout)")

    p = sub.add_parser("simulate", parents=[common, mfe], help="simulate the N-agent game")
    p.add_argument("--N", type=_positive_int, default=100)
    p.add_argument("--T", type=_positive_int, default=DEFAULTS["T"])
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--policy", help="comma-separated action per state (default: solve)")
    p.add_argument("--trace-csv", help="write t, TV(e_t, mu), running cost of agent 1")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        model = load_model(args.model)
        return COMMANDS[args.command](args, model)
    except (ModelError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AssumptionFailure as exc:
        print(f"assumption failure: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (MaxIterExceeded, NonConvergence) as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except KernelCoupled as exc:
        print(f"unsupported model: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED


if __name__ == "__main__":
    sys.exit(main())
