"""Input validation helpers shared by the public API."""

import numpy as np

from .exceptions import ModelError

# float dust below this is silently renormalized; beyond HARD_TOL is an error
RENORM_TOL = 1e-12
HARD_TOL = 1e-9


def _fmt_index(path, idx):
    return path + "".join(f"[{i}]" for i in idx)


def as_float_array(value, shape=None, path="value"):
    """Convert ``value`` to a float ndarray, checking shape and finiteness."""
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"not a numeric array ({exc})", path) from None
    if shape is not None and arr.shape != tuple(shape):
        raise ModelError(f"expected shape {tuple(shape)}, got {arr.shape}", path)
    if not np.all(np.isfinite(arr)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(arr))[0])
        raise ModelError("non-finite entry", _fmt_index(path, bad))
    return arr


def check_stochastic(arr, path="value", axis=-1):
    """Validate that ``arr`` is stochastic along ``axis`` and renormalize.

    Entries in ``[-HARD_TOL, 0)`` are clamped to zero and row sums within
    ``HARD_TOL`` of one are rescaled exactly; anything worse raises
    :class:`ModelError` naming the first offending row.
    """
    arr = np.moveaxis(np.array(arr, dtype=float), axis, -1)
    neg = arr < -HARD_TOL
    if neg.any():
        bad = tuple(int(i) for i in np.argwhere(neg)[0])
        raise ModelError(f"negative probability {arr[bad]:.3g}", _fmt_index(path, bad))
    arr = np.clip(arr, 0.0, None)
    sums = arr.sum(axis=-1)
    off = np.abs(sums - 1.0) > HARD_TOL
    if off.any():
        bad = tuple(int(i) for i in np.argwhere(off)[0])
        raise ModelError(
            f"row sums to {sums[bad]:.12g}, expected 1", _fmt_index(path, bad)
        )
    # rows already within float dust are left alone so renormalizing is idempotent
    scale = np.where(np.abs(sums - 1.0) > 1e-15, sums, 1.0)
    arr = arr / scale[..., None]
    return np.moveaxis(arr, -1, axis)


def check_prob_vector(mu, n=None, path="mu"):
    """Return ``mu`` as a validated, renormalized probability vector."""
    arr = as_float_array(mu, path=path)
    if arr.ndim != 1:
        raise ModelError(f"expected a vector, got shape {arr.shape}", path)
    if n is not None and arr.shape[0] != n:
        raise ModelError(f"expected length {n}, got {arr.shape[0]}", path)
    return check_stochastic(arr, path=path)


def check_policy(pi, n, m, path="policy"):
    """Accept an ``(n, m)`` stochastic matrix or a length-``n`` action array."""
    arr = np.asarray(pi)
    if arr.ndim == 1:
        actions = arr.astype(int)
        if actions.shape[0] != n or not np.array_equal(actions, arr):
            raise ModelError(f"expected {n} integer actions", path)
        if np.any((actions < 0) | (actions >= m)):
            raise ModelError(f"action index out of range [0, {m})", path)
        return deterministic_policy(actions, m)
    arr = as_float_array(arr, shape=(n, m), path=path)
    return check_stochastic(arr, path=path)


def check_index(value, size, name):
    if not 0 <= int(value) < size:
        raise IndexError(f"{name}={value} out of range [0, {size})")
    return int(value)


def deterministic_policy(actions, m):
    """One-hot ``(n, m)`` policy matrix from an action-index array."""
    actions = np.asarray(actions, dtype=int)
    pi = np.zeros((actions.shape[0], m))
    pi[np.arange(actions.shape[0]), actions] = 1.0
    return pi


def policy_actions(pi):
    """Action indices of a deterministic policy (argmax of each row)."""
    return np.asarray(pi).argmax(axis=1)


def is_deterministic(pi, tol=1e-12):
    pi = np.asarray(pi)
    return bool(np.all(np.abs(pi.max(axis=1) - 1.0) <= tol))
