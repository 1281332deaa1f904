"""Closed forms for linear models ``dX = −A X dt + Σ dB``.

For an affine observable ``f(t, x) = w(t)·x + c(t)`` the evolution operator
acts on the weight only::

    P_{s,t} f(x) = (e^{−A(t−s)})^⊤ w(t) · x + c(t)

so evolution operators, their gradients and their time integrals are all
affine again and can be evaluated with matrix exponentials.
"""
from __future__ import annotations

import logging
import math
from typing import Final

import numpy as np
from attrs import frozen
from numpy.typing import ArrayLike
from scipy.integrate import simpson
from scipy.linalg import expm

from avgmart.core import (
    AvgMartError,
    NonpositiveParameterError,
    TimeOrderError,
)

from .model import (
    AffineObservable,
    FloatArray,
    LinearModel,
    require_positive,
)

# =============================================================================
# CONSTANTS
# =============================================================================


EIGENVECTOR_CONDITION_LIMIT: Final[float] = 1e8

RESIDUAL_TOLERANCE: Final[float] = 1e-10

QUADRATURE_PANELS: Final[int] = 1000

_DEGENERATE_GAP: Final[float] = 1e-12

_DISSIPATIVE_TOLERANCE: Final[float] = 1e-12

_logger = logging.getLogger(__name__)


# =============================================================================
# EXCEPTIONS
# =============================================================================


class NonDissipativeError(AvgMartError, ValueError):
    """The semigroup does not decay on the given observable.

    Raised when the observable has a component along a mode of ``A`` whose
    eigenvalue has a non-positive real part, so ``∫_0^∞ P_s f ds`` diverges.
    """


class ResidualToleranceError(AvgMartError, ArithmeticError):
    """An algebraic self-check exceeded its tolerance."""

    def __init__(self, residual: float, tolerance: float) -> None:
        """Initialize a ``ResidualToleranceError``.

        :param residual: The observed residual.
        :param tolerance: The admissible residual.
        """
        super().__init__(
            message=(
                f"Residual {residual:.3e} exceeds the tolerance "
                f"{tolerance:.1e}."
            ),
        )
        self._residual: float = residual
        self._tolerance: float = tolerance

    @property
    def residual(self) -> float:
        """The observed residual."""
        return self._residual

    @property
    def tolerance(self) -> float:
        """The admissible residual."""
        return self._tolerance


class TimeDependentObservableError(AvgMartError, ValueError):
    """An operation that needs a static observable got a time dependent one."""


# =============================================================================
# TYPES
# =============================================================================


@frozen
class Spectrum2TS:
    """The eigenvalues ``λ0 ≤ αλ1`` of ``A = [[α, −α], [−1, 1 + β]]``."""

    lambda0: float
    alpha_lambda1: float
    discriminant: float

    @property
    def gap(self) -> float:
        """The spectral gap ``αλ1 − λ0``."""
        return self.alpha_lambda1 - self.lambda0


@frozen
class ExpmCoeffs:
    """Coefficients of ``e^{−At} = c0(t)·I − (c1(t)/α)·A`` at a fixed ``t``.

    ``c2 = α(c0 − c1)`` is the entry ``(e^{−At})_{00}`` scaled by ``α``.
    """

    c0: float
    c1: float
    c2: float


# =============================================================================
# HELPERS
# =============================================================================


def _check_time_order(s: float, t: float) -> None:
    if t < s:
        _err_msg: str = f"Expected s <= t, got s={s} and t={t}."
        raise TimeOrderError(message=_err_msg)


def _check_two_timescale(alpha: float, beta: float) -> None:
    require_positive(alpha=alpha)
    if not (math.isfinite(beta) and beta >= 0):
        raise NonpositiveParameterError(parameter="beta", value=beta)


type _Eigen = tuple[FloatArray, FloatArray, FloatArray]


def _eig(matrix: FloatArray) -> _Eigen | None:
    """Diagonalize ``matrix`` or return ``None`` if it is ill-conditioned."""
    eigenvalues, vectors = np.linalg.eig(matrix)
    if np.linalg.cond(vectors) > EIGENVECTOR_CONDITION_LIMIT:
        return None
    return eigenvalues, vectors, np.linalg.inv(vectors)


def _phi(eigenvalues: FloatArray, u: FloatArray) -> FloatArray:
    """Evaluate ``(1 − e^{−λu})/λ`` with the limit ``u`` at ``λ = 0``."""
    lam = eigenvalues[None, :]
    u = np.asarray(u, dtype=np.float64)[:, None]
    safe = np.where(lam == 0, 1.0, lam)
    return np.where(lam == 0, u + 0 * lam, -np.expm1(-lam * u) / safe)


def _real(values: FloatArray) -> FloatArray:
    return np.real_if_close(values, tol=1e6).real


# =============================================================================
# TWO-TIMESCALE SPECTRUM
# =============================================================================


def eigenvalues_two_timescale(alpha: float, beta: float) -> Spectrum2TS:
    """Return the spectrum of ``A = [[α, −α], [−1, 1 + β]]``.

    The smaller root is computed as ``det(A)/αλ1`` to avoid cancellation.

    :raise NonpositiveParameterError: If ``α <= 0`` or ``β < 0``.
    """
    _check_two_timescale(alpha, beta)
    s = alpha + beta + 1.0
    discriminant = s * s - 4.0 * alpha * beta
    upper = s + math.sqrt(discriminant)
    spectrum = Spectrum2TS(
        lambda0=2.0 * alpha * beta / upper,
        alpha_lambda1=0.5 * upper,
        discriminant=discriminant,
    )
    _logger.debug("Spectrum for alpha=%g, beta=%g: %s.", alpha, beta, spectrum)
    return spectrum


def expm_neg_At(  # noqa: N802
    alpha: float,
    beta: float,
    t: float,
) -> tuple[FloatArray, ExpmCoeffs]:
    """Evaluate ``e^{−At}`` for ``A = [[α, −α], [−1, 1 + β]]`` in closed form.

    With ``g = αλ1 − λ0``, ``e0 = e^{−λ0 t}`` and ``e1 = e^{−αλ1 t}``::

        c0 = (αλ1·e0 − λ0·e1)/g,    c1 = α(e0 − e1)/g

    and the confluent limits ``c0 = (1 + λt)e^{−λt}``, ``c1 = αt·e^{−λt}``
    when the gap vanishes.

    :return: The matrix and its coefficients.

    :raise NonpositiveParameterError: If ``α <= 0``, ``β < 0`` or ``t < 0``.
    """
    if not (math.isfinite(t) and t >= 0):
        raise NonpositiveParameterError(parameter="t", value=t)
    spectrum = eigenvalues_two_timescale(alpha, beta)
    lambda0, alpha_lambda1 = spectrum.lambda0, spectrum.alpha_lambda1
    gap = spectrum.gap
    e0 = math.exp(-lambda0 * t)
    if gap <= _DEGENERATE_GAP * alpha_lambda1:
        c0 = (1.0 + lambda0 * t) * e0
        c1 = alpha * t * e0
    else:
        e1 = math.exp(-alpha_lambda1 * t)
        # e0 − e1 without cancellation for small t.
        difference = -e0 * math.expm1(-gap * t)
        c0 = (alpha_lambda1 * e0 - lambda0 * e1) / gap
        c1 = alpha * difference / gap
    coeffs = ExpmCoeffs(c0=c0, c1=c1, c2=alpha * (c0 - c1))
    matrix = np.array(
        [
            [c0 - c1, c1],
            [c1 / alpha, c0 - (1.0 + beta) * c1 / alpha],
        ]
    )
    return matrix, coeffs


# =============================================================================
# GENERAL MATRIX FUNCTIONS
# =============================================================================


def expm_neg(A: ArrayLike, t: float) -> FloatArray:  # noqa: N803
    """Return ``e^{−At}`` for a square matrix ``A``.

    Uses the eigendecomposition of ``A`` and falls back to
    :func:`scipy.linalg.expm` when the eigenvectors are ill-conditioned.
    """
    A = np.asarray(A, dtype=np.float64)  # noqa: N806
    decomposition = _eig(A)
    if decomposition is None:
        return expm(-A * t)
    eigenvalues, vectors, inverse = decomposition
    return _real((vectors * np.exp(-eigenvalues * t)) @ inverse)


def integral_neg_At_many(  # noqa: N802
    A: ArrayLike,  # noqa: N803
    us: ArrayLike,
) -> FloatArray:
    """Return ``∫_0^u e^{−As} ds`` for every ``u`` in ``us``.

    :return: An array of shape ``(len(us), n, n)``.
    """
    A = np.asarray(A, dtype=np.float64)  # noqa: N806
    us = np.atleast_1d(np.asarray(us, dtype=np.float64))
    n = A.shape[0]
    decomposition = _eig(A)
    if decomposition is None:
        block = np.zeros((2 * n, 2 * n))
        block[:n, :n] = -A
        block[:n, n:] = np.eye(n)
        return np.stack([expm(block * u)[:n, n:] for u in us])
    eigenvalues, vectors, inverse = decomposition
    phi = _phi(eigenvalues, us)
    return _real(np.einsum("ij,kj,jl->kil", vectors, phi, inverse))


def integral_neg_At(A: ArrayLike, u: float) -> FloatArray:  # noqa: N802, N803
    """Return ``∫_0^u e^{−As} ds``.

    Eigenvalues equal to zero contribute ``u`` (the limit of
    ``(1 − e^{−λu})/λ``).
    """
    return integral_neg_At_many(A, [u])[0]


# =============================================================================
# EVOLUTION OPERATORS
# =============================================================================


def evolution_affine(
    model: LinearModel,
    f: AffineObservable,
    s: float,
    t: float,
) -> AffineObservable:
    """Return ``P_{s,t} f`` as a static observable of the state at time ``s``.

    The weight is ``(e^{−A(t−s)})^⊤ w(t)`` and the offset ``c(t)``; the drift
    has no constant part, so there is no mean shift.

    :raise TimeOrderError: If ``t < s``.
    """
    _check_time_order(s, t)
    weight = expm_neg(model.A, t - s).T @ f.weight(t)
    return AffineObservable.of(weight, f.offset(t))


def gradient_evolution(
    model: LinearModel,
    f: AffineObservable,
    s: float,
    t: float,
) -> FloatArray:
    """Return ``σ^⊤∇P_{s,t} f = Σ^⊤ (e^{−A(t−s)})^⊤ w(t)``.

    The result does not depend on the state.

    :raise TimeOrderError: If ``t < s``.
    """
    _check_time_order(s, t)
    return model.Sigma.T @ (expm_neg(model.A, t - s).T @ f.weight(t))


def r_weights(
    model: LinearModel,
    f: AffineObservable,
    times: ArrayLike,
    T: float,  # noqa: N803
) -> FloatArray:
    """Return the weight of ``R_t^T f`` for each ``t`` in ``times``.

    :param model: A linear model.
    :param f: A static observable.
    :param times: Times ``t <= T``.
    :param T: The horizon.

    :return: An array of shape ``(len(times), n)``.

    :raise TimeDependentObservableError: If ``f`` is not static.
    :raise TimeOrderError: If some ``t > T``.
    """
    if not f.static:
        _err_msg: str = "Vectorized R weights need a static observable."
        raise TimeDependentObservableError(message=_err_msg)
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    if np.any(times > T):
        _check_time_order(float(times.max()), T)
    integrals = integral_neg_At_many(model.A, T - times)
    return np.einsum("kji,j->ki", integrals, f.weight(T))


def r_operator_affine(
    model: LinearModel,
    f: AffineObservable,
    t: float,
    T: float,  # noqa: N803
) -> AffineObservable:
    """Return ``R_t^T f = ∫_t^T P_{t,s} f ds`` as a static observable.

    Static observables use the closed form
    ``(∫_0^{T−t} e^{−Au} du)^⊤ w`` with offset ``c·(T − t)``; time dependent
    ones are integrated with the composite Simpson rule.

    :raise TimeOrderError: If ``T < t``.
    """
    _check_time_order(t, T)
    if T == t:
        return AffineObservable.constant(0.0, model.dim)
    if f.static:
        weight = integral_neg_At(model.A, T - t).T @ f.weight(T)
        return AffineObservable.of(weight, f.offset(T) * (T - t))

    nodes = np.linspace(t, T, QUADRATURE_PANELS + 1)
    weights = np.stack([
        expm_neg(model.A, s - t).T @ f.weight(s) for s in nodes
    ])
    offsets = np.array([f.offset(s) for s in nodes])
    return AffineObservable.of(
        simpson(weights, x=nodes, axis=0),
        float(simpson(offsets, x=nodes)),
    )


def poisson_resolvent(
    model: LinearModel,
    f: AffineObservable,
    truncation_T: float | None = None,  # noqa: N803
) -> AffineObservable:
    """Solve the Poisson equation ``−Lg = f`` via ``g = ∫_0^∞ P_s f ds``.

    The weight of ``f`` is expanded in the eigenvectors of ``A^⊤``; each mode
    is divided by its eigenvalue. Modes whose eigenvalue has a non-positive
    real part must carry no weight. The solution is checked algebraically,
    ``|A^⊤ v − w|_∞ <= 1e-10``.

    :param model: A linear model.
    :param f: A static observable with zero offset.
    :param truncation_T: If given, ``R_0^{truncation_T} f`` is compared with
        ``g`` and the gap is logged.

    :return: The solution ``g`` (zero offset).

    :raise TimeDependentObservableError: If ``f`` is not static.
    :raise NonDissipativeError: If the resolvent integral diverges.
    :raise ResidualToleranceError: If the algebraic check fails.
    """
    if not f.static:
        _err_msg: str = "The Poisson equation needs a static observable."
        raise TimeDependentObservableError(message=_err_msg)
    if f.offset(0.0) != 0.0:
        _err_msg: str = "A nonzero offset does not decay under the semigroup."
        raise NonDissipativeError(message=_err_msg)

    w = f.weight(0.0)
    a_t = model.A.T
    scale = max(1.0, float(np.abs(model.A).max()))
    decomposition = _eig(a_t)
    if decomposition is None:
        if np.linalg.eigvals(a_t).real.min() <= _DISSIPATIVE_TOLERANCE * scale:
            _err_msg: str = "A has an eigenvalue with non-positive real part."
            raise NonDissipativeError(message=_err_msg)
        weight = np.linalg.solve(a_t, w)
    else:
        eigenvalues, vectors, inverse = decomposition
        modes = inverse @ w
        stable = eigenvalues.real > _DISSIPATIVE_TOLERANCE * scale
        w_scale = max(1.0, float(np.abs(w).max()))
        if np.any(np.abs(modes[~stable]) > _DISSIPATIVE_TOLERANCE * w_scale):
            _err_msg: str = (
                "The observable has a component along a non-decaying mode "
                f"(eigenvalues {eigenvalues[~stable]})."
            )
            raise NonDissipativeError(message=_err_msg)
        scaled = modes[stable] / eigenvalues[stable]
        weight = _real(vectors[:, stable] @ scaled)

    residual = float(np.abs(a_t @ weight - w).max())
    _logger.debug("Poisson resolvent residual: %.3e.", residual)
    if residual > RESIDUAL_TOLERANCE * max(1.0, float(np.abs(w).max())):
        raise ResidualToleranceError(
            residual=residual,
            tolerance=RESIDUAL_TOLERANCE,
        )
    if truncation_T is not None:
        truncated = r_operator_affine(model, f, 0.0, truncation_T).weight(0.0)
        _logger.debug(
            "Truncated resolvent at T=%g differs by %.3e.",
            truncation_T,
            float(np.abs(truncated - weight).max()),
        )
    return AffineObservable.of(weight)


# =============================================================================
# MOMENTS
# =============================================================================


def mean_at(model: LinearModel, x0: ArrayLike, t: float) -> FloatArray:
    """Return ``E X_t = e^{−At} x0``."""
    return expm_neg(model.A, t) @ np.asarray(x0, dtype=np.float64)


def covariance_at(model: LinearModel, t: float) -> FloatArray:
    """Return ``Var X_t = ∫_0^t e^{−Au} ΣΣ^⊤ e^{−A^⊤u} du`` for a fixed start.

    With ``A = VΛV^{−1}`` the integral is taken entrywise in the eigenbasis,
    ``V (C ∘ Φ) V^⊤`` where ``C = V^{−1}ΣΣ^⊤V^{−⊤}`` and
    ``Φ_ij = (1 − e^{−(λ_i + λ_j)t})/(λ_i + λ_j)``, so stiff drifts stay
    finite. Ill-conditioned drifts fall back to the upper right block of
    ``exp([[−A, ΣΣ^⊤], [0, A^⊤]]·t)`` times ``(e^{−At})^⊤``.
    """
    decomposition = _eig(model.A)
    if decomposition is None:
        return _covariance_by_block(model, t)
    eigenvalues, vectors, inverse = decomposition
    sums = eigenvalues[:, None] + eigenvalues[None, :]
    phi = _phi(sums.ravel(), [t])[0].reshape(sums.shape)
    inner = inverse @ model.diffusion_matrix @ inverse.T
    covariance = _real(vectors @ (inner * phi) @ vectors.T)
    return 0.5 * (covariance + covariance.T)


def _covariance_by_block(model: LinearModel, t: float) -> FloatArray:
    n = model.dim
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = -model.A
    block[:n, n:] = model.diffusion_matrix
    block[n:, n:] = model.A.T
    exponential = expm(block * t)
    covariance = exponential[:n, n:] @ exponential[:n, :n].T
    return 0.5 * (covariance + covariance.T)


def covariance_between(
    model: LinearModel,
    s: float,
    t: float,
) -> FloatArray:
    """Return ``Cov(X_t, X_s) = e^{−A(t−s)} Var X_s`` for ``s <= t``.

    :raise TimeOrderError: If ``t < s``.
    """
    _check_time_order(s, t)
    return expm_neg(model.A, t - s) @ covariance_at(model, s)
