"""Gaussian concentration of time averages and its empirical verification.

If the semigroup gradients decay like ``|σ^⊤∇P_{s,t} f| <= C_t e^{−λ_t(t−s)}``
then the centred time average ``(1/T)∫_0^T (f − E f) dt`` has Gaussian tails
with the variance proxy::

    V_T = (1/T) ∫_0^T ((C_t/λ_t)(1 − e^{−λ_t(T−t)}))² dt
"""
from __future__ import annotations

import enum
import logging
import math
from collections.abc import Callable, Sequence
from typing import Final, Self

import numpy as np
from attrs import field, frozen, validators
from numpy.typing import ArrayLike
from scipy.integrate import simpson
from scipy.stats import binomtest, norm

from avgmart.core import (
    AvgMartError,
    EmptyEnsembleError,
    NonpositiveHorizonError,
    NonpositiveParameterError,
)

from .linear_analytics import mean_at
from .martingale import expected_quadratic_variation
from .model import AffineObservable, Ensemble, FloatArray, LinearModel

# =============================================================================
# CONSTANTS
# =============================================================================


CONFIDENCE_LEVEL: Final[float] = 0.95

DEFAULT_R_GRID: Final[tuple[float, ...]] = tuple(
    float(r) for r in np.linspace(0.05, 1.0, 20)
)

_QUADRATURE_PANELS: Final[int] = 2000

_TINY: Final[float] = np.nextafter(0.0, 1.0)

_MAX_CONDITION: Final[float] = 1e12

_logger = logging.getLogger(__name__)


# =============================================================================
# EXCEPTIONS
# =============================================================================


class NonpositiveVarianceError(AvgMartError, ValueError):
    """A variance proxy that must be strictly positive was not."""


class NegativeVarianceError(AvgMartError, ValueError):
    """A variance was negative."""


class NonlinearModelError(AvgMartError, TypeError):
    """Exact means were requested for a model without a linear drift."""


class NonDiagonalizableDriftError(AvgMartError, ValueError):
    """The drift matrix has no basis of eigenvectors."""


# =============================================================================
# TYPES
# =============================================================================


class TailBoundForm(enum.Enum):
    """The exponent used by :func:`gaussian_tail`.

    ``STATED`` is ``exp(−R²T/V_T)``; ``CHERNOFF`` is the optimized Chernoff
    bound ``exp(−R²T/(2V_T))``.
    """

    STATED = "stated"
    CHERNOFF = "chernoff"


@frozen
class GradientBound:
    """Gradient decay constants ``(C_t, λ_t)`` valid for a function class."""

    C: Callable[[float], float] = field(validator=validators.is_callable())
    lam: Callable[[float], float] = field(validator=validators.is_callable())
    note: str = field(default="", validator=validators.instance_of(str))

    @classmethod
    def constant(cls, C: float, lam: float, note: str = "") -> Self:  # noqa: N803
        """Return time independent constants.

        ``C = 0`` describes observables whose gradients vanish along the
        noise, e.g. any observable of a deterministic model.

        :raise NonpositiveParameterError: If ``C < 0`` or ``lam <= 0``.
        """
        if not (math.isfinite(C) and C >= 0):
            raise NonpositiveParameterError(parameter="C", value=C)
        if not (math.isfinite(lam) and lam > 0):
            raise NonpositiveParameterError(parameter="lam", value=lam)
        return cls(C=lambda _t: C, lam=lambda _t: lam, note=note)

    @classmethod
    def for_linear_model(cls, model: LinearModel, lip: float) -> Self:
        """Derive constants from the spectrum of a linear model.

        ``|Σ^⊤ e^{−A^⊤t} w| <= ‖Σ‖₂ cond(V) e^{−λ t} |w|`` where ``V``
        diagonalizes ``A`` and ``λ = min Re spec(A)``; hence
        ``C = ‖Σ‖₂·cond(V)·Lip(f)``.

        :raise NonpositiveParameterError: If ``λ <= 0`` or ``lip < 0``.
        :raise NonDiagonalizableDriftError: If ``A`` is defective.
        """
        eigenvalues, vectors = np.linalg.eig(model.A)
        lam = float(eigenvalues.real.min())
        condition = float(np.linalg.cond(vectors))
        if not condition <= _MAX_CONDITION:
            _err_msg: str = (
                "The drift matrix is not diagonalizable; pass an explicit "
                "gradient bound instead."
            )
            raise NonDiagonalizableDriftError(message=_err_msg)
        c = float(np.linalg.norm(model.Sigma, 2)) * condition
        return cls.constant(
            C=c * lip,
            lam=lam,
            note=f"Lipschitz observables, Lip(f) <= {lip:g}",
        )


@frozen(eq=False)
class ConcentrationReport:
    """Tail bounds and empirical tail frequencies over a grid of ``R``.

    All columns are aligned with ``R_grid``. A violation is flagged only
    when the lower end of the binomial confidence interval exceeds the
    bound.
    """

    V_T: float
    T: float
    n_paths: int
    R_grid: tuple[float, ...]
    bound: tuple[float, ...]
    chernoff: tuple[float, ...]
    exact: tuple[float, ...] | None
    empirical: tuple[float, ...]
    ci_low: tuple[float, ...]
    ci_high: tuple[float, ...]

    @property
    def violations(self) -> tuple[bool, ...]:
        """Whether the bound is exceeded beyond the confidence interval."""
        return tuple(
            low > bound
            for low, bound in zip(self.ci_low, self.bound, strict=True)
        )

    @property
    def passed(self) -> bool:
        """``True`` if no grid point shows a violation."""
        return not any(self.violations)


# =============================================================================
# BOUNDS
# =============================================================================


def variance_proxy(bound: GradientBound, T: float) -> float:  # noqa: N803
    """Return ``V_T`` by composite Simpson quadrature.

    :raise NonpositiveHorizonError: If ``T <= 0``.
    """
    if not (math.isfinite(T) and T > 0):
        _err_msg: str = f"The horizon must be positive, got {T}."
        raise NonpositiveHorizonError(message=_err_msg)
    nodes = np.linspace(0.0, T, _QUADRATURE_PANELS + 1)
    values = np.array([
        (bound.C(t) / bound.lam(t) * -math.expm1(-bound.lam(t) * (T - t)))
        ** 2
        for t in nodes
    ])
    return float(simpson(values, x=nodes)) / T


def gaussian_tail(
    R: float,  # noqa: N803
    T: float,  # noqa: N803
    V_T: float,  # noqa: N803
    form: TailBoundForm = TailBoundForm.STATED,
) -> float:
    """Return the tail bound ``exp(−R²T/V_T)``, clamped to ``(0, 1]``.

    :raise NonpositiveVarianceError: If ``V_T <= 0``.
    :raise NonpositiveHorizonError: If ``T <= 0``.
    :raise NonpositiveParameterError: If ``R < 0``.
    """
    if not V_T > 0:
        _err_msg: str = f"The variance proxy must be positive, got {V_T}."
        raise NonpositiveVarianceError(message=_err_msg)
    if not T > 0:
        _err_msg: str = f"The horizon must be positive, got {T}."
        raise NonpositiveHorizonError(message=_err_msg)
    if not R >= 0:
        raise NonpositiveParameterError(parameter="R", value=R)
    exponent = R * R * T / V_T
    if form is TailBoundForm.CHERNOFF:
        exponent /= 2.0
    return min(1.0, max(math.exp(-exponent), _TINY))


def exact_gaussian_tail(
    R: float,  # noqa: N803
    T: float,  # noqa: N803
    integral_variance: float,
) -> float:
    """Return ``P((1/T)∫_0^T (f − E f) dt > R)`` for a Gaussian integral.

    :param R: The deviation.
    :param T: The horizon.
    :param integral_variance: ``Var ∫_0^T f dt``.
    """
    if integral_variance <= 0:
        return 0.0 if R > 0 else 1.0
    return float(norm.sf(R * T / math.sqrt(integral_variance)))


def w1_deviation_bound(
    C: float,  # noqa: N803
    lam: float,
    lip_f: float,
    T: float,  # noqa: N803
    R: float,  # noqa: N803
    W1_0: float,  # noqa: N803
) -> float:
    """Return the deviation bound for a non-stationary start.

    ``exp(−(λ√T R/(C Lip(f)(1 − e^{−λT})) − W1(μ0, μ∞)/√T)²)``; the bound is
    vacuous (``1``) while the term inside the square is negative.

    :raise NonpositiveParameterError: If ``C``, ``lam``, ``lip_f`` or ``T``
        is not positive, or if ``R`` or ``W1_0`` is negative.
    """
    for name, value in (("C", C), ("lam", lam), ("lip_f", lip_f), ("T", T)):
        if not (math.isfinite(value) and value > 0):
            raise NonpositiveParameterError(parameter=name, value=value)
    for name, value in (("R", R), ("W1_0", W1_0)):
        if not (math.isfinite(value) and value >= 0):
            raise NonpositiveParameterError(parameter=name, value=value)
    root_t = math.sqrt(T)
    inner = lam * root_t * R / (C * lip_f * -math.expm1(-lam * T))
    inner -= W1_0 / root_t
    if inner < 0:
        return 1.0
    return math.exp(-inner * inner)


def w1_point_to_gaussian(x0: float, mean: float, var: float) -> float:
    """Return ``W1(δ_{x0}, N(mean, var)) = E|G − x0|`` (a folded normal mean).

    :raise NegativeVarianceError: If ``var < 0``.
    """
    if var < 0:
        _err_msg: str = f"The variance must be nonnegative, got {var}."
        raise NegativeVarianceError(message=_err_msg)
    d = abs(x0 - mean)
    if var == 0:
        return d
    s = math.sqrt(var)
    return float(
        s * math.sqrt(2.0 / math.pi) * math.exp(-0.5 * (d / s) ** 2)
        + d * (1.0 - 2.0 * norm.cdf(-d / s))
    )


# =============================================================================
# EMPIRICAL TAILS
# =============================================================================


def _linear_model(
    ensemble: Ensemble,
    model: LinearModel | None,
) -> LinearModel:
    resolved = model if model is not None else ensemble.model
    if not isinstance(resolved, LinearModel):
        _err_msg: str = "Exact means require a linear model."
        raise NonlinearModelError(message=_err_msg)
    return resolved


def centered_time_averages(
    ensemble: Ensemble,
    f: AffineObservable,
    model: LinearModel | None = None,
) -> FloatArray:
    """Return ``(1/T) Σ_k (f(t_k, X_k) − E f(t_k, X_k)) dt`` for every path.

    Means are exact; sums are left point Riemann sums.

    :raise EmptyEnsembleError: If the ensemble has no paths.
    """
    if ensemble.n_paths < 1:
        _err_msg: str = "The ensemble has no paths."
        raise EmptyEnsembleError(message=_err_msg)
    model = _linear_model(ensemble, model)
    grid = ensemble.grid
    x0 = ensemble.x0
    total = np.zeros(ensemble.n_paths)
    for k in range(grid.n_steps):
        t = grid.node(k)
        centered = ensemble.states[:, k] - mean_at(model, x0, t - grid.t0)
        total = total + centered @ f.weight(t)
    return total * grid.dt / grid.duration


def _tail_bounds(
    r_grid: Sequence[float],
    T: float,  # noqa: N803
    V_T: float,  # noqa: N803
    form: TailBoundForm,
) -> tuple[float, ...]:
    if V_T == 0:
        # A zero proxy means every centred average is zero.
        return tuple(0.0 if r > 0 else 1.0 for r in r_grid)
    return tuple(gaussian_tail(r, T, V_T, form) for r in r_grid)


def tail_report(
    averages: ArrayLike,
    R_grid: Sequence[float],  # noqa: N803
    V_T: float,  # noqa: N803
    T: float,  # noqa: N803
    integral_variance: float | None = None,
) -> ConcentrationReport:
    """Compare empirical tail frequencies of ``averages`` with the bounds.

    Confidence intervals are exact (Clopper–Pearson) at the 95% level. A
    zero ``V_T`` bounds every tail with ``R > 0`` by ``0``.

    :raise EmptyEnsembleError: If there are no averages.
    """
    averages = np.asarray(averages, dtype=np.float64)
    n = averages.shape[0]
    if n < 1:
        _err_msg: str = "At least one sample is required."
        raise EmptyEnsembleError(message=_err_msg)
    r_grid = tuple(float(r) for r in R_grid)
    empirical: list[float] = []
    low: list[float] = []
    high: list[float] = []
    for r in r_grid:
        k = int(np.count_nonzero(averages > r))
        interval = binomtest(k, n).proportion_ci(
            confidence_level=CONFIDENCE_LEVEL,
            method="exact",
        )
        empirical.append(k / n)
        low.append(float(interval.low))
        high.append(float(interval.high))
    report = ConcentrationReport(
        V_T=V_T,
        T=T,
        n_paths=n,
        R_grid=r_grid,
        bound=_tail_bounds(r_grid, T, V_T, TailBoundForm.STATED),
        chernoff=_tail_bounds(r_grid, T, V_T, TailBoundForm.CHERNOFF),
        exact=(
            None
            if integral_variance is None
            else tuple(
                exact_gaussian_tail(r, T, integral_variance) for r in r_grid
            )
        ),
        empirical=tuple(empirical),
        ci_low=tuple(low),
        ci_high=tuple(high),
    )
    _logger.debug(
        "Tail report over %d paths: %d violation(s).",
        n,
        sum(report.violations),
    )
    return report


def empirical_tail(
    ensemble: Ensemble,
    f: AffineObservable,
    R_grid: Sequence[float] = DEFAULT_R_GRID,  # noqa: N803
    bound: GradientBound | None = None,
    model: LinearModel | None = None,
) -> ConcentrationReport:
    """Check the Gaussian tail bound against simulated paths.

    The gradient bound defaults to :meth:`GradientBound.for_linear_model`
    with ``Lip(f) = |w|``.

    :raise EmptyEnsembleError: If the ensemble has no paths.
    """
    model = _linear_model(ensemble, model)
    averages = centered_time_averages(ensemble, f, model)
    grid = ensemble.grid
    if bound is None:
        bound = GradientBound.for_linear_model(
            model, float(np.linalg.norm(f.weight(grid.T)))
        )
    return tail_report(
        averages,
        R_grid,
        variance_proxy(bound, grid.duration),
        grid.duration,
        expected_quadratic_variation(model, f, grid.T, grid.t0),
    )
