"""Central finite differences for gradient tests."""

import numpy as np

# gradients whose norm is below this are indistinguishable from
# finite-difference round-off, so errors are measured against it instead
NORM_FLOOR = 1e-6


def numeric_grad(f, arr: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """d f / d arr by central differences, perturbing ``arr`` in place."""
    out = np.zeros_like(arr, dtype=np.float64)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        ix = it.multi_index
        old = arr[ix]
        arr[ix] = old + step
        hi = f()
        arr[ix] = old - step
        lo = f()
        arr[ix] = old
        out[ix] = (hi - lo) / (2 * step)
    return out


def rel_error(analytic, numeric, floor: float = NORM_FLOOR) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(np.linalg.norm(analytic - numeric) / denom)
