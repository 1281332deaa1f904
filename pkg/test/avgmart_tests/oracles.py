"""Independent reference computations used by the tests."""
from __future__ import annotations

import math

import numpy as np
from numpy.typing import ArrayLike, NDArray


def matrix_exp(
    matrix: ArrayLike,
    n_taylor: int = 18,
    target_norm: float = 0.5,
) -> NDArray[np.float64]:
    """Return ``exp(matrix)`` by Taylor scaling and squaring.

    The matrix is scaled by ``2**-s`` until its infinity norm is at most
    ``target_norm``, the truncated series is evaluated in Horner form and
    the result is squared ``s`` times.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    norm = float(np.abs(matrix).sum(axis=1).max())
    n_square = max(0, math.ceil(math.log2(norm / target_norm))) if norm else 0
    scaled = matrix / 2.0**n_square
    identity = np.eye(matrix.shape[0])
    result = identity.copy()
    for k in range(n_taylor, 0, -1):
        result = identity + scaled @ result / k
    for _ in range(n_square):
        result = result @ result
    return result


def ou_variance(kappa: float, sigma: float, t: float) -> float:
    """Return ``Var X_t`` of a scalar OU process started at a point."""
    return sigma**2 * -math.expm1(-2.0 * kappa * t) / (2.0 * kappa)


def mc_tolerance(se: float, n_se: float = 4.0, bias: float = 0.0) -> float:
    """Return the tolerance allowed to a Monte Carlo estimate."""
    return n_se * se + bias
