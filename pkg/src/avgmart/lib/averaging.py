"""Two-timescale Ornstein–Uhlenbeck systems and their averaged dynamics.

The slow–fast system with the fast part accelerated by ``α``::

    dX = −ακX (X − Y) dt + √α σX dB^X,    X_0 = 0
    dY = −κY (Y − X) dt + σY dB^Y,         Y_0 = 0

is compared with its averaged process ``Ȳ``, realized through the filter
system::

    dZ = −ακX (Z − Ȳ) dt
    dȲ = −κY (Ȳ − Z) dt + σY dB^Y

driven by the same ``B^Y``. Closed forms use exact antiderivatives; the
Monte Carlo experiment decides between the two candidate integrands for
``E|Y_T − Ȳ_T|²``.
"""
from __future__ import annotations

import enum
import logging
import math
from collections.abc import Callable, Sequence
from typing import Final, NamedTuple

import numpy as np
from attrs import field, frozen
from numpy.typing import ArrayLike
from scipy import stats

from avgmart.core import (
    EmptyEnsembleError,
    NonpositiveHorizonError,
    NonpositiveParameterError,
)

from .linear_analytics import (
    eigenvalues_two_timescale,
    expm_neg_At,
    integral_neg_At,
)
from .model import (
    AffineObservable,
    FloatArray,
    LinearModel,
    TimeGrid,
    make_linear_ab,
    require_positive,
)
from .simulate import (
    DEFAULT_BATCH_SIZE,
    CouplingSpec,
    iter_coupled_batches,
    iter_ensemble_batches,
)

# =============================================================================
# CONSTANTS
# =============================================================================


SLOW_NOISE_COMPONENT: Final[int] = 1

_logger = logging.getLogger(__name__)


# =============================================================================
# TYPES
# =============================================================================


class Variant(enum.Enum):
    """The candidate integrands of ``E|Y_T − Ȳ_T|²``.

    ``A``: ``(1 − e^{−ακX u}(2 − e^{−κY u}))²``;
    ``B``: ``(1 − e^{−(ακX + κY)u})²``.
    """

    A = "A"
    B = "B"


class MseFormula(NamedTuple):
    """A closed-form mean square error and its upper bound."""

    value: float
    bound: float


class GradientScaling(NamedTuple):
    """Exact gradient scaling matrices at a fixed time.

    ``σ^⊤∇P_t f = (α/(1 + α))(G0 e^{−λ0 t} + α G1 e^{−αλ1 t}) w`` for
    ``f(x) = w·x``; ``sigma_grad_norm(w)`` evaluates its norm.
    """

    G0: FloatArray
    G1: FloatArray
    sigma_grad_norm: Callable[[ArrayLike], float]


class FilterPath(NamedTuple):
    """The filter system along one or several driving paths.

    ``Qtf = Z − Ȳ`` is the conditional expectation of ``X̄ − Ȳ`` given the
    slow noise; ``direct`` evaluates the same quantity as the stochastic
    sum ``−σY Σ_j e^{−(ακX + κY)(t_k − t_j)} ΔB^Y_j``.
    """

    Z: FloatArray
    Ybar: FloatArray
    Qtf: FloatArray
    direct: FloatArray


class SlowFastCovariance(NamedTuple):
    """``Cov(f(X_t), B^k_t)`` across a sweep of ``α``."""

    alphas: tuple[float, ...]
    estimates: tuple[float, ...]
    standard_errors: tuple[float, ...]
    exact: tuple[float, ...]
    slope: float
    exact_slope: float


@frozen
class TwoTimescaleParams:
    """Parameters of the slow–fast system.

    Rates must be positive; noise scales may vanish.
    """

    alpha: float = field(converter=float)
    kappaX: float = field(converter=float)  # noqa: N815
    kappaY: float = field(converter=float)  # noqa: N815
    sigmaX: float = field(converter=float)  # noqa: N815
    sigmaY: float = field(converter=float)  # noqa: N815

    def __attrs_post_init__(self) -> None:
        require_positive(
            alpha=self.alpha,
            kappaX=self.kappaX,
            kappaY=self.kappaY,
        )
        for name in ("sigmaX", "sigmaY"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise NonpositiveParameterError(parameter=name, value=value)

    @property
    def fast_rate(self) -> float:
        """``ακX``."""
        return self.alpha * self.kappaX

    @property
    def filter_rate(self) -> float:
        """``ακX + κY``, the decay rate of ``X̄ − Ȳ``."""
        return self.alpha * self.kappaX + self.kappaY

    def to_model(self) -> LinearModel:
        """Return the ``(X, Y)`` system."""
        return LinearModel(
            A=self._drift_matrix(),
            Sigma=[
                [math.sqrt(self.alpha) * self.sigmaX, 0.0],
                [0.0, self.sigmaY],
            ],
            labels=("X", "Y"),
        )

    def to_averaged_model(self) -> LinearModel:
        """Return the ``(Z, Ȳ)`` filter system; its first noise is unused."""
        return LinearModel(
            A=self._drift_matrix(),
            Sigma=[[0.0, 0.0], [0.0, self.sigmaY]],
            labels=("Z", "Ybar"),
        )

    def _drift_matrix(self) -> FloatArray:
        return np.array([
            [self.fast_rate, -self.fast_rate],
            [-self.kappaY, self.kappaY],
        ])


class AveragingCheck(NamedTuple):
    """One Monte Carlo estimate compared with its closed form(s)."""

    quantity: str
    variant_a: float
    variant_b: float
    mc_estimate: float
    mc_se: float
    tolerance: float
    passed: bool


@frozen(eq=False)
class AveragingReport:
    """The outcome of :func:`averaging_experiment`."""

    params: TwoTimescaleParams
    T: float
    dt: float
    n_paths: int
    checks: tuple[AveragingCheck, ...]
    matching_variant: Variant | None

    @property
    def passed(self) -> bool:
        """``True`` if every check passed."""
        return all(check.passed for check in self.checks)


# =============================================================================
# HELPERS
# =============================================================================


def _check_horizon(T: float) -> None:  # noqa: N803
    if not (math.isfinite(T) and T > 0):
        _err_msg: str = f"The horizon must be positive, got {T}."
        raise NonpositiveHorizonError(message=_err_msg)


def _exp_integral(rate: float, T: float) -> float:  # noqa: N803
    """Return ``∫_0^T e^{−rate·u} du``."""
    if rate == 0:
        return T
    return -math.expm1(-rate * T) / rate


def _saturation_integral(rate: float, T: float) -> float:  # noqa: N803
    """Return ``∫_0^T (1 − e^{−rate·u})² du``."""
    return T - 2.0 * _exp_integral(rate, T) + _exp_integral(2.0 * rate, T)


def _mean_and_se(values: FloatArray) -> tuple[float, float]:
    n = values.shape[0]
    if n < 1:
        _err_msg: str = "At least one sample is required."
        raise EmptyEnsembleError(message=_err_msg)
    se = float(np.std(values, ddof=1)) / math.sqrt(n) if n > 1 else math.inf
    return float(np.mean(values)), se


# =============================================================================
# CLOSED FORMS
# =============================================================================


def ou2_time_average_law(
    alpha: float,
    T: float,  # noqa: N803
    x0_minus_y0: float,
) -> tuple[float, float]:
    """Return the mean and variance of ``∫_0^T (X_t − Y_t) dt``.

    For the system with ``κX = κY = σX = σY = 1`` the integral equals
    ``Y_T − (B^Y_T + y0)`` and is Gaussian with, writing ``r = α + 1``::

        mean     = (x0 − y0)(1 − e^{−rT})/r
        variance = (1/r) ∫_0^T (1 − e^{−r(T−t)})² dt

    :raise NonpositiveHorizonError: If ``T <= 0``.
    :raise NonpositiveParameterError: If ``α < 0``.
    """
    _check_horizon(T)
    if not (math.isfinite(alpha) and alpha >= 0):
        raise NonpositiveParameterError(parameter="alpha", value=alpha)
    r = alpha + 1.0
    mean = x0_minus_y0 * _exp_integral(r, T)
    return mean, _saturation_integral(r, T) / r


def h_kernel(
    alpha: float,
    kappaX: float,  # noqa: N803
    kappaY: float,  # noqa: N803
    t: float,
) -> float:
    """Return ``ακX/(ακX + κY) + κY/(ακX + κY)·e^{−(ακX + κY)t}``.

    :raise NonpositiveParameterError: If a rate is not positive or
        ``t < 0``.
    """
    require_positive(alpha=alpha, kappaX=kappaX, kappaY=kappaY)
    if not (math.isfinite(t) and t >= 0):
        raise NonpositiveParameterError(parameter="t", value=t)
    rate = alpha * kappaX + kappaY
    return (alpha * kappaX + kappaY * math.exp(-rate * t)) / rate


def y_mse_formula(
    params: TwoTimescaleParams,
    T: float,  # noqa: N803
    variant: Variant = Variant.B,
) -> MseFormula:
    """Return a candidate value of ``E|Y_T − Ȳ_T|²`` and its upper bound.

    Both variants share the prefactor ``ακY²σX²/(ακX + κY)²``; the bound is
    ``(T/α)·κY²σX²/κX²``.

    :raise NonpositiveHorizonError: If ``T <= 0``.
    """
    _check_horizon(T)
    a, b = params.fast_rate, params.kappaY
    ratio = params.kappaY * params.sigmaX / params.filter_rate
    prefactor = params.alpha * ratio**2
    if variant is Variant.B:
        integral = _saturation_integral(a + b, T)
    else:
        # (1 − 2e^{−au} + e^{−(a+b)u})² expanded into exponentials.
        integral = math.fsum([
            T,
            4.0 * _exp_integral(2.0 * a, T),
            _exp_integral(2.0 * (a + b), T),
            -4.0 * _exp_integral(a, T),
            2.0 * _exp_integral(a + b, T),
            -4.0 * _exp_integral(2.0 * a + b, T),
        ])
    bound = (
        T / params.alpha * (params.kappaY * params.sigmaX / params.kappaX) ** 2
    )
    return MseFormula(value=prefactor * integral, bound=bound)


def ybar_bm_mse_formula(
    params: TwoTimescaleParams,
    T: float,  # noqa: N803
) -> MseFormula:
    """Return ``E|Ȳ_T − σY B^Y_T|²`` and its bound ``(T/α²)κY²σY²/κX²``.

    :raise NonpositiveHorizonError: If ``T <= 0``.
    """
    _check_horizon(T)
    prefactor = (params.kappaY * params.sigmaY / params.filter_rate) ** 2
    value = prefactor * _saturation_integral(params.filter_rate, T)
    bound = (
        T
        / params.alpha**2
        * (params.kappaY * params.sigmaY / params.kappaX) ** 2
    )
    return MseFormula(value=value, bound=bound)


def gradient_scaling_report(
    alpha: float,
    beta: float,
    t: float,
) -> GradientScaling:
    """Split ``σ^⊤(e^{−At})^⊤`` along the two modes of ``A``.

    With ``Λ = αλ1`` and ``g = Λ − λ0``::

        (e^{−At})^⊤ = e^{−λ0 t}(ΛI − A^⊤)/g + e^{−Λt}(A^⊤ − λ0 I)/g

    and ``Σ^⊤ = diag(√α, 1)``. The matrices are exact; their leading rows
    scale like ``1/√α`` and ``1``.

    :raise NonpositiveParameterError: If ``α <= 0``, ``β < 0`` or ``t < 0``.
    """
    matrix, _ = expm_neg_At(alpha, beta, t)
    spectrum = eigenvalues_two_timescale(alpha, beta)
    lambda0, big = spectrum.lambda0, spectrum.alpha_lambda1
    gap = spectrum.gap
    root = math.sqrt(alpha)
    m0 = np.array([
        [root * (big - alpha), root],
        [alpha, big - 1.0 - beta],
    ]) / gap
    m1 = np.array([
        [root * (alpha - lambda0), -root],
        [-alpha, 1.0 + beta - lambda0],
    ]) / gap
    g0 = (1.0 + alpha) / alpha * m0
    g1 = (1.0 + alpha) / alpha**2 * m1
    sigma_t = np.diag([root, 1.0])

    def sigma_grad_norm(w: ArrayLike) -> float:
        weight = np.asarray(w, dtype=np.float64)
        return float(np.linalg.norm(sigma_t @ matrix.T @ weight))

    return GradientScaling(G0=g0, G1=g1, sigma_grad_norm=sigma_grad_norm)


def covariance_slow_fast_exact(
    model: LinearModel,
    f: AffineObservable,
    t: float,
    component: int = 0,
) -> float:
    """Return ``Cov(f(X_t), B^k_t) = (Σ^⊤ (∫_0^t e^{−Au} du)^⊤ w(t))_k``."""
    return float(
        (model.Sigma.T @ integral_neg_At(model.A, t).T @ f.weight(t))[
            component
        ]
    )


def covariance_slow_fast(
    alphas: Sequence[float],
    beta: float,
    f: AffineObservable,
    t: float,
    grid: TimeGrid,
    n_paths: int,
    master_seed: int,
    model_factory: Callable[[float, float], LinearModel] = make_linear_ab,
    noise_component: int = 0,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> SlowFastCovariance:
    """Estimate ``Cov(f(X_t), B^k_t)`` for each ``α`` and fit its decay.

    Paths start at the origin. The slope is the least squares fit of
    ``log|Cov|`` against ``log α``.

    :raise EmptyEnsembleError: If ``n_paths < 1``.
    """
    k = grid.index_of(t)
    node = grid.node(k)
    estimates: list[float] = []
    errors: list[float] = []
    exact: list[float] = []
    for alpha in alphas:
        model = model_factory(alpha, beta)
        values: list[FloatArray] = []
        noises: list[FloatArray] = []
        for batch in iter_ensemble_batches(
            model, grid, np.zeros(model.dim), n_paths, master_seed, batch_size
        ):
            values.append(batch.states[:, k] @ f.weight(node) + f.offset(node))
            noises.append(batch.increments[:, :k, noise_component].sum(axis=1))
        a = np.concatenate(values)
        b = np.concatenate(noises)
        products = (a - a.mean()) * (b - b.mean())
        estimate, se = _mean_and_se(products)
        estimates.append(estimate * n_paths / max(n_paths - 1, 1))
        errors.append(se)
        exact.append(
            covariance_slow_fast_exact(model, f, node, noise_component)
        )
        _logger.debug(
            "alpha=%g: Cov=%.6g±%.2g (exact %.6g).",
            alpha,
            estimates[-1],
            se,
            exact[-1],
        )

    log_alphas = np.log(np.asarray(alphas, dtype=np.float64))

    def fit(values: Sequence[float]) -> float:
        magnitudes = np.abs(np.asarray(values))
        if len(values) < 2 or np.any(magnitudes == 0):
            return math.nan
        return float(np.polyfit(log_alphas, np.log(magnitudes), 1)[0])

    return SlowFastCovariance(
        alphas=tuple(float(a) for a in alphas),
        estimates=tuple(estimates),
        standard_errors=tuple(errors),
        exact=tuple(exact),
        slope=fit(estimates),
        exact_slope=fit(exact),
    )


# =============================================================================
# FILTER AND EXPERIMENT
# =============================================================================


def averaged_filter_path(
    params: TwoTimescaleParams,
    grid: TimeGrid,
    bY_increments: ArrayLike,  # noqa: N803
) -> FilterPath:
    """Integrate the filter system from zero along given slow increments.

    :param params: The system parameters.
    :param grid: The time grid.
    :param bY_increments: Increments of ``B^Y``, shape ``(K,)`` or
        ``(P, K)``.

    :return: Series with ``K + 1`` entries along the last axis.
    """
    increments = np.asarray(bY_increments, dtype=np.float64)
    dt = grid.dt
    a, b, sigma = params.fast_rate, params.kappaY, params.sigmaY
    decay = math.exp(-params.filter_rate * dt)
    shape = (*increments.shape[:-1], grid.n_steps + 1)
    z, ybar, direct = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    for k in range(grid.n_steps):
        gap = z[..., k] - ybar[..., k]
        z[..., k + 1] = z[..., k] - a * gap * dt
        ybar[..., k + 1] = (
            ybar[..., k] + b * gap * dt + sigma * increments[..., k]
        )
        direct[..., k + 1] = decay * (
            direct[..., k] - sigma * increments[..., k]
        )
    return FilterPath(Z=z, Ybar=ybar, Qtf=z - ybar, direct=direct)


def averaging_experiment(
    params: TwoTimescaleParams,
    grid: TimeGrid,
    n_paths: int,
    master_seed: int,
    x0_minus_y0: float = 2.0,
    se_multiplier: float = 3.0,
    dt_multiplier: float = 10.0,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> AveragingReport:
    """Compare the averaging formulas with coupled simulations.

    Three groups of checks are run:

    * ``E|Y_T − Ȳ_T|²`` against both candidate integrands; the check passes
      when exactly one of them lies within tolerance, and the report names
      it; when the two formulas are themselves within tolerance of each
      other, a match passes and names ``B``;
    * ``E|Ȳ_T − σY B^Y_T|²`` against its closed form;
    * the law of ``Y_T − (B^Y_T + y0)`` in the system with unit constants
      and the same ``α``: mean, variance, skewness and excess kurtosis.

    The tolerance of a moment is ``se_multiplier·SE + dt_multiplier·dt``;
    skewness and kurtosis must have z-scores below ``se_multiplier``.

    :raise EmptyEnsembleError: If ``n_paths < 1``.
    """
    T, dt = grid.T, grid.dt  # noqa: N806
    horizon = grid.duration
    slow_gap: list[FloatArray] = []
    filter_gap: list[FloatArray] = []
    for full, averaged in iter_coupled_batches(
        params.to_model(),
        params.to_averaged_model(),
        grid,
        np.zeros(2),
        np.zeros(2),
        CouplingSpec(shared_components=(SLOW_NOISE_COMPONENT,)),
        master_seed,
        n_paths,
        batch_size,
    ):
        y = full.states[:, -1, 1]
        ybar = averaged.states[:, -1, 1]
        b_y = averaged.increments[:, :, SLOW_NOISE_COMPONENT].sum(axis=1)
        slow_gap.append((y - ybar) ** 2)
        filter_gap.append((ybar - params.sigmaY * b_y) ** 2)

    def moment_check(
        quantity: str,
        variant_a: float,
        variant_b: float,
        samples: FloatArray,
        target: float | None = None,
    ) -> AveragingCheck:
        estimate, se = _mean_and_se(samples)
        tolerance = se_multiplier * se + dt_multiplier * dt
        target = variant_b if target is None else target
        return AveragingCheck(
            quantity=quantity,
            variant_a=variant_a,
            variant_b=variant_b,
            mc_estimate=estimate,
            mc_se=se,
            tolerance=tolerance,
            passed=abs(estimate - target) <= tolerance,
        )

    checks: list[AveragingCheck] = []
    formula_a = y_mse_formula(params, horizon, Variant.A).value
    formula_b = y_mse_formula(params, horizon, Variant.B).value
    slow = moment_check(
        "E|Y_T - Ybar_T|^2", formula_a, formula_b, np.concatenate(slow_gap)
    )
    matches = [
        variant
        for variant, value in ((Variant.A, formula_a), (Variant.B, formula_b))
        if abs(slow.mc_estimate - value) <= slow.tolerance
    ]
    if len(matches) > 1 and abs(formula_a - formula_b) <= slow.tolerance:
        # Indistinguishable at this resolution, e.g. when σX = 0.
        _logger.debug("Both variants lie within %g.", slow.tolerance)
        matches = [Variant.B]
    matching = matches[0] if len(matches) == 1 else None
    checks.append(slow._replace(passed=matching is not None))

    ybar = ybar_bm_mse_formula(params, horizon).value
    checks.append(
        moment_check(
            "E|Ybar_T - sigmaY B^Y_T|^2",
            ybar,
            ybar,
            np.concatenate(filter_gap),
        )
    )
    checks.extend(
        _time_average_law_checks(
            params.alpha,
            grid,
            n_paths,
            master_seed,
            x0_minus_y0,
            se_multiplier,
            dt_multiplier,
            batch_size,
        )
    )
    _logger.debug("Averaging run at T=%g matched variant %s.", T, matching)
    return AveragingReport(
        params=params,
        T=T,
        dt=dt,
        n_paths=n_paths,
        checks=tuple(checks),
        matching_variant=matching,
    )


def _time_average_law_checks(
    alpha: float,
    grid: TimeGrid,
    n_paths: int,
    master_seed: int,
    x0_minus_y0: float,
    se_multiplier: float,
    dt_multiplier: float,
    batch_size: int,
) -> list[AveragingCheck]:
    model = TwoTimescaleParams(alpha, 1.0, 1.0, 1.0, 1.0).to_model()
    y0 = 0.0
    samples = np.concatenate([
        batch.states[:, -1, 1]
        - y0
        - batch.increments[:, :, SLOW_NOISE_COMPONENT].sum(axis=1)
        for batch in iter_ensemble_batches(
            model,
            grid,
            np.array([x0_minus_y0 + y0, y0]),
            n_paths,
            master_seed,
            batch_size,
        )
    ])
    n = samples.shape[0]
    mean, variance = ou2_time_average_law(alpha, grid.duration, x0_minus_y0)
    mc_mean, mean_se = _mean_and_se(samples)
    mc_var = float(np.var(samples, ddof=1))
    var_se = mc_var * math.sqrt(2.0 / max(n - 1, 1))
    skew_se, kurt_se = math.sqrt(6.0 / n), math.sqrt(24.0 / n)
    mc_skew = float(stats.skew(samples))
    mc_kurt = float(stats.kurtosis(samples))
    slack = dt_multiplier * grid.dt

    def row(
        quantity: str,
        target: float,
        estimate: float,
        se: float,
        tolerance: float,
    ) -> AveragingCheck:
        return AveragingCheck(
            quantity=quantity,
            variant_a=target,
            variant_b=target,
            mc_estimate=estimate,
            mc_se=se,
            tolerance=tolerance,
            passed=abs(estimate - target) <= tolerance,
        )

    return [
        row(
            "mean of Y_T - (B^Y_T + y0)",
            mean,
            mc_mean,
            mean_se,
            se_multiplier * mean_se + slack,
        ),
        row(
            "variance of Y_T - (B^Y_T + y0)",
            variance,
            mc_var,
            var_se,
            se_multiplier * var_se + slack,
        ),
        row("skewness", 0.0, mc_skew, skew_se, se_multiplier * skew_se),
        row(
            "excess kurtosis",
            0.0,
            mc_kurt,
            kurt_se,
            se_multiplier * kurt_se,
        ),
    ]
