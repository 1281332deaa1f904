"""The martingale decomposition of time integrals along sample paths.

For an observable ``f`` and a horizon ``T``, Itô's formula applied to
``R_t^T f(X_t) = ∫_t^T P_{t,s} f(X_t) ds`` gives, for every ``t <= T``::

    ∫_0^t f(s, X_s) ds + R_t^T f(X_t) = E ∫_0^T f(s, X_s) ds + M_t^{T,f}

with the martingale ``M_t^{T,f} = ∫_0^t ∇R_s^T f(X_s)·σ dB_s``. This module
builds ``M``, its quadratic variation and the other series of this identity
on discretized paths and checks the consequences of the identity.
"""
from __future__ import annotations

import enum
import logging
import math
from collections.abc import Callable
from typing import NamedTuple, Self

import numpy as np
from attrs import field, frozen, validators
from numpy.typing import ArrayLike
from scipy.integrate import simpson

from avgmart.core import (
    AvgMartError,
    EmptyEnsembleError,
    Model,
    NonpositiveHorizonError,
)

from .linear_analytics import (
    covariance_at,
    mean_at,
    r_operator_affine,
    r_weights,
)
from .model import (
    AffineObservable,
    Ensemble,
    FloatArray,
    LinearModel,
    TimeGrid,
    Trajectory,
    as_readonly,
)
from .simulate import (
    DEFAULT_BATCH_SIZE,
    coarsen_increments,
    euler_maruyama_from_increments,
    iter_ensemble_batches,
    simulate_ensemble,
)

# =============================================================================
# TYPES
# =============================================================================


type GradientFn = Callable[[float, FloatArray], ArrayLike]

_QUADRATURE_PANELS = 2000

_logger = logging.getLogger(__name__)


class Provenance(enum.Enum):
    """Where the gradients of a :class:`GradRProvider` come from."""

    ANALYTIC_LINEAR = "analytic-linear"
    USER_SUPPLIED = "user-supplied"


# =============================================================================
# EXCEPTIONS
# =============================================================================


class ProviderDomainError(AvgMartError, ValueError):
    """A gradient provider cannot be evaluated where it is needed."""


# =============================================================================
# HELPERS
# =============================================================================


def _as_linear(model: Model) -> LinearModel:
    if not isinstance(model, LinearModel):
        _err_msg: str = (
            f"A linear model is required, got {type(model).__name__}."
        )
        raise ProviderDomainError(message=_err_msg)
    return model


def _r_weight_series(
    model: LinearModel,
    f: AffineObservable,
    times: FloatArray,
    T: float,  # noqa: N803
) -> FloatArray:
    """Return the weights of ``R_t^T f`` at ``times``, shape ``(k, n)``."""
    if f.static:
        return r_weights(model, f, times, T)
    return np.stack([
        r_operator_affine(model, f, float(t), T).weight(0.0) for t in times
    ])


def _r_offset_series(
    f: AffineObservable,
    times: FloatArray,
    T: float,  # noqa: N803
) -> FloatArray:
    if f.static:
        return f.offset(T) * (T - times)
    nodes = np.linspace(0.0, 1.0, _QUADRATURE_PANELS + 1)
    return np.array([
        simpson([f.offset(t + u * (T - t)) for u in nodes], x=nodes) * (T - t)
        for t in times
    ])


def _observable_values(
    f: AffineObservable,
    grid: TimeGrid,
    states: FloatArray,
) -> FloatArray:
    """Evaluate ``f(t_k, X_k)``, shaped like ``states[..., 0]``."""
    if f.static:
        return (states * f.weight(grid.t0)).sum(axis=-1) + f.offset(grid.t0)
    return np.stack(
        [
            (states[..., k, :] * f.weight(t)).sum(axis=-1) + f.offset(t)
            for k, t in enumerate(grid.nodes)
        ],
        axis=-1,
    )


def _left_riemann(values: FloatArray, dt: float) -> FloatArray:
    """Return ``S_k = Σ_{j<k} values_j·dt``; one more column than steps."""
    zero = np.zeros((*values.shape[:-1], 1))
    return np.concatenate([zero, np.cumsum(values[..., :-1] * dt, -1)], -1)


# =============================================================================
# GRADIENT PROVIDERS
# =============================================================================


@frozen(eq=False)
class GradRProvider:
    """The integrand ``σ(s, x)^⊤ ∇R_s^T f(x)`` of the martingale.

    Analytic providers for linear models are built with :meth:`of_linear`;
    they also carry the model, observable and horizon so that the remaining
    series of the decomposition can be filled in. Any other source of
    gradients can be wrapped with :meth:`of_callable`.
    """

    _fn: GradientFn = field(alias="fn", validator=validators.is_callable())
    provenance: Provenance = field(
        validator=validators.instance_of(Provenance)
    )
    noise_dim: int = field(validator=validators.instance_of(int))
    model: LinearModel | None = field(default=None)
    observable: AffineObservable | None = field(default=None)
    horizon: float | None = field(default=None)
    vectorized: bool = field(default=False)

    def __call__(self, t: float, x: ArrayLike) -> FloatArray:
        """Evaluate the integrand at a state or a batch of states."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1 or self.vectorized:
            value = np.asarray(self._fn(t, x), dtype=np.float64)
        else:
            value = np.stack([
                np.asarray(self._fn(t, row), dtype=np.float64) for row in x
            ])
        expected = (*x.shape[:-1], self.noise_dim)
        if value.shape != expected:
            _err_msg: str = (
                f"The provider returned shape {value.shape} at t={t}, "
                f"expected {expected}."
            )
            raise ProviderDomainError(message=_err_msg)
        return value

    def evaluate(self, grid: TimeGrid, states: FloatArray) -> FloatArray:
        """Evaluate the integrand at the left end of every step.

        :param grid: The time grid of the paths.
        :param states: States of shape ``(P, K + 1, n)``.

        :return: An array of shape ``(P, K, m)``.

        :raise ProviderDomainError: On non-finite or misshapen output, or if
            the grid extends beyond the provider's horizon.
        """
        if self.horizon is not None and grid.T > self.horizon:
            _err_msg: str = (
                f"The grid ends at {grid.T}, after the provider horizon "
                f"{self.horizon}."
            )
            raise ProviderDomainError(message=_err_msg)
        n_paths = states.shape[0]
        if (
            self.provenance is Provenance.ANALYTIC_LINEAR
            and self.model is not None
            and self.observable is not None
            and self.horizon is not None
        ):
            weights = _r_weight_series(
                self.model, self.observable, grid.nodes[:-1], self.horizon
            )
            gradients = np.broadcast_to(
                weights @ self.model.Sigma,
                (n_paths, grid.n_steps, self.noise_dim),
            )
        else:
            gradients = np.stack(
                [
                    self(grid.node(k), states[:, k])
                    for k in range(grid.n_steps)
                ],
                axis=1,
            )
        if not np.isfinite(gradients).all():
            _err_msg: str = "The provider returned non-finite values."
            raise ProviderDomainError(message=_err_msg)
        return gradients

    @classmethod
    def of_linear(
        cls,
        model: LinearModel,
        f: AffineObservable,
        T: float,  # noqa: N803
    ) -> Self:
        """Return the exact, state independent integrand for a linear model.

        ``σ^⊤∇R_s^T f = Σ^⊤ (∫_0^{T−s} e^{−Au} du)^⊤ w`` for static ``f``.
        """

        def gradient(t: float, x: FloatArray) -> FloatArray:
            weight = _r_weight_series(model, f, np.array([t]), T)[0]
            value = weight @ model.Sigma
            return np.broadcast_to(value, (*np.shape(x)[:-1], model.noise_dim))

        return cls(
            fn=gradient,
            provenance=Provenance.ANALYTIC_LINEAR,
            noise_dim=model.noise_dim,
            model=model,
            observable=f,
            horizon=float(T),
            vectorized=True,
        )

    @classmethod
    def of_callable(
        cls,
        fn: GradientFn,
        noise_dim: int,
        observable: AffineObservable | None = None,
        vectorized: bool = False,
    ) -> Self:
        """Wrap user supplied gradients ``(s, x) ↦ σ(s, x)^⊤∇R_s^T f(x)``."""
        return cls(
            fn=fn,
            provenance=Provenance.USER_SUPPLIED,
            noise_dim=noise_dim,
            observable=observable,
            vectorized=vectorized,
        )


# =============================================================================
# RECORDS
# =============================================================================


def _optional_series(value: ArrayLike | None) -> FloatArray | None:
    return None if value is None else as_readonly(value)


@frozen(eq=False)
class MartingaleRecord:
    """The series of the decomposition along one path or an ensemble.

    Every series has ``K + 1`` entries along its last axis, one per grid
    node; records built from an ensemble carry a leading path axis.

    * ``M``: the martingale ``M_t^{T,f}`` (Itô left point sums);
    * ``QV``: its quadratic variation ``⟨M^{T,f}⟩_t``;
    * ``R``: ``R_t^T f(X_t)``, when the provider is analytic;
    * ``S``: ``∫_0^t f(s, X_s) ds`` (left point Riemann sums), when the
      observable is known.
    """

    grid: TimeGrid = field(validator=validators.instance_of(TimeGrid))
    M: FloatArray = field(converter=as_readonly)
    QV: FloatArray = field(converter=as_readonly)
    R: FloatArray | None = field(
        converter=_optional_series,
        default=None,
    )
    S: FloatArray | None = field(
        converter=_optional_series,
        default=None,
    )

    def __attrs_post_init__(self) -> None:
        if np.any(self.M[..., 0] != 0):
            _err_msg: str = "The martingale must start at zero."
            raise ProviderDomainError(message=_err_msg)
        if np.any(np.diff(self.QV, axis=-1) < 0):
            _err_msg: str = "The quadratic variation must be nondecreasing."
            raise ProviderDomainError(message=_err_msg)
        for series in (self.M, self.QV, self.R, self.S):
            if series is not None and not np.isfinite(series).all():
                _err_msg: str = "Every series of a record must be finite."
                raise ProviderDomainError(message=_err_msg)


def _build_record(
    grid: TimeGrid,
    states: FloatArray,
    increments: FloatArray,
    provider: GradRProvider,
    observable: AffineObservable | None,
) -> MartingaleRecord:
    gradients = provider.evaluate(grid, states)
    zero = np.zeros((states.shape[0], 1))
    m = np.concatenate(
        [zero, np.cumsum((gradients * increments).sum(-1), -1)], -1
    )
    qv = np.concatenate(
        [zero, np.cumsum((gradients * gradients).sum(-1) * grid.dt, -1)], -1
    )

    observable = observable or provider.observable
    s = None
    if observable is not None:
        values = _observable_values(observable, grid, states)
        s = _left_riemann(values, grid.dt)

    r = None
    if (
        provider.provenance is Provenance.ANALYTIC_LINEAR
        and provider.model is not None
        and provider.observable is not None
        and provider.horizon is not None
    ):
        nodes = grid.nodes
        weights = _r_weight_series(
            provider.model, provider.observable, nodes, provider.horizon
        )
        offsets = _r_offset_series(
            provider.observable, nodes, provider.horizon
        )
        r = (states * weights).sum(-1) + offsets
    return MartingaleRecord(grid=grid, M=m, QV=qv, R=r, S=s)


# =============================================================================
# PATHWISE DECOMPOSITION
# =============================================================================


def martingale_path(
    traj: Trajectory,
    provider: GradRProvider,
    observable: AffineObservable | None = None,
) -> MartingaleRecord:
    """Build the decomposition series along one path.

    ``M[k+1] = M[k] + g_k·ΔB_k`` and ``QV[k+1] = QV[k] + |g_k|²·dt`` with
    ``g_k = provider(t_k, X_k)``.

    :param traj: The path.
    :param provider: The integrand of the martingale.
    :param observable: The observable to integrate into ``S``; defaults to
        the provider's observable.

    :return: The record; ``R`` is filled in for analytic providers only.

    :raise ProviderDomainError: If the provider cannot be evaluated.
    """
    record = _build_record(
        traj.grid,
        traj.states[None],
        traj.noise_increments[None],
        provider,
        observable,
    )
    return MartingaleRecord(
        grid=record.grid,
        M=record.M[0],
        QV=record.QV[0],
        R=None if record.R is None else record.R[0],
        S=None if record.S is None else record.S[0],
    )


def martingale_ensemble(
    ensemble: Ensemble,
    provider: GradRProvider,
    observable: AffineObservable | None = None,
) -> MartingaleRecord:
    """Build the decomposition series of every path of an ensemble.

    Row ``p`` of each series equals the corresponding series of
    :func:`martingale_path` applied to path ``p``.
    """
    return _build_record(
        ensemble.grid,
        ensemble.states,
        ensemble.increments,
        provider,
        observable,
    )


def expected_time_integral(
    model: LinearModel,
    f: AffineObservable,
    x0: ArrayLike,
    T: float,  # noqa: N803
    t0: float = 0.0,
) -> float:
    """Return ``E ∫_{t0}^T f(s, X_s) ds = R_{t0}^T f(x0)`` exactly.

    The value is computed exactly as the first entry of the ``R`` series of a
    record, so the decomposition residual vanishes at the first node.
    """
    times = np.array([t0])
    weight = _r_weight_series(model, f, times, T)[0]
    offset = _r_offset_series(f, times, T)[0]
    return float((np.asarray(x0, dtype=np.float64) * weight).sum() + offset)


def decomposition_residual(
    traj: Trajectory | Ensemble,
    f: AffineObservable,
    record: MartingaleRecord,
    EST: float,  # noqa: N803
) -> FloatArray:
    """Return ``S + R − E S_T − M`` at every grid node.

    :param traj: The path (or ensemble) the record was built from.
    :param f: The observable.
    :param record: A record with an ``R`` series.
    :param EST: The exact expectation of the time integral.

    :raise ProviderDomainError: If the record has no ``R`` series.
    """
    if record.R is None:
        _err_msg: str = (
            "The record has no R series; build it with an analytic provider."
        )
        raise ProviderDomainError(message=_err_msg)
    s = record.S
    if s is None:
        values = _observable_values(f, record.grid, traj.states)
        s = _left_riemann(values, record.grid.dt)
    return s + record.R - EST - record.M


def centered_observable(
    model: LinearModel,
    f: AffineObservable,
    x0: ArrayLike,
    t0: float = 0.0,
) -> AffineObservable:
    """Return ``f0(s, x) = f(s, x) − P_{t0,s} f(x0)``."""
    x0 = np.asarray(x0, dtype=np.float64)

    def offset(s: float) -> float:
        return -float(f.weight(s) @ mean_at(model, x0, s - t0))

    return AffineObservable.of_time_dependent(
        w=f.weight,
        c=offset,
        dim=model.dim,
    )


def _means(model: LinearModel, x0: FloatArray, grid: TimeGrid) -> FloatArray:
    means = np.stack([mean_at(model, x0, t - grid.t0) for t in grid.nodes])
    means[0] = x0
    return means


def centered_decomposition(
    traj: Trajectory | Ensemble,
    f: AffineObservable,
    model: LinearModel | None = None,
) -> tuple[FloatArray, FloatArray]:
    """Return ``(M, Z)`` with ``Z_t = R_t^T f0(X_t)`` for the centred ``f0``.

    For linear models ``R_t^T f0(x) = r(t)·(x − E X_t)`` where ``r(t)`` is
    the weight of ``R_t^T f``, so ``Z`` vanishes at both ends of the grid
    and ``∫_0^t (f − E f) ds = M_t − Z_t`` up to discretization error.
    """
    model = _as_linear(model if model is not None else _model_of(traj))
    grid = traj.grid
    states = traj.states if traj.states.ndim == 3 else traj.states[None]
    increments = (
        traj.increments
        if isinstance(traj, Ensemble)
        else traj.noise_increments[None]
    )
    provider = GradRProvider.of_linear(model, f, grid.T)
    record = _build_record(grid, states, increments, provider, f)
    weights = _r_weight_series(model, f, grid.nodes, grid.T)
    z = ((states - _means(model, states[0, 0], grid)) * weights).sum(-1)
    if isinstance(traj, Trajectory):
        return record.M[0], z[0]
    return record.M, z


def _model_of(traj: Trajectory | Ensemble) -> Model:
    if isinstance(traj, Ensemble):
        return traj.model
    _err_msg: str = (
        "A trajectory does not carry its model; pass it explicitly."
    )
    raise ProviderDomainError(message=_err_msg)


# =============================================================================
# IDENTITIES AND ESTIMATES
# =============================================================================


class MixingIdentity(NamedTuple):
    """Both sides of ``E⟨M^{T,f}⟩_T = 2∬_{t≤s} Cov(f(t, X_t), f(s, X_s))``."""

    lhs: float
    rhs: float
    mc_rhs: float
    mc_se: float


class PathwiseSupCheck(NamedTuple):
    """Both sides of ``E sup|M − Z| <= 2√E⟨M⟩_T + E sup|Z|``."""

    lhs: float
    rhs: float
    lhs_se: float
    rhs_se: float


class ConvergenceReport(NamedTuple):
    """Maximal decomposition residuals at two step sizes."""

    dt: float
    residual: float
    residual_half_dt: float
    ratio: float


def carre_du_champ(
    model: LinearModel,
    f: AffineObservable,
    g: AffineObservable,
    t: float,
) -> float:
    """Return ``Γ_t(f, g) = ½ w_f(t)·ΣΣ^⊤ w_g(t)``."""
    return 0.5 * float(f.weight(t) @ model.diffusion_matrix @ g.weight(t))


def expected_quadratic_variation(
    model: LinearModel,
    f: AffineObservable,
    T: float,  # noqa: N803
    t0: float = 0.0,
) -> float:
    """Return ``E⟨M^{T,f}⟩_T = ∫_{t0}^T |Σ^⊤ ∇R_s^T f|² ds``.

    The integrand is deterministic for linear models; it is integrated with
    the composite Simpson rule.

    :raise NonpositiveHorizonError: If ``T <= t0``.
    """
    if not T > t0:
        _err_msg: str = f"The horizon {T} must lie after {t0}."
        raise NonpositiveHorizonError(message=_err_msg)
    nodes = np.linspace(t0, T, _QUADRATURE_PANELS + 1)
    gradients = _r_weight_series(model, f, nodes, T) @ model.Sigma
    return float(simpson((gradients * gradients).sum(-1), x=nodes))


def mixing_identity(
    model: LinearModel,
    f: AffineObservable,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    x0: ArrayLike | None = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> MixingIdentity:
    """Evaluate both sides of the mixing identity.

    * ``lhs``: the expected quadratic variation, by quadrature;
    * ``rhs``: ``2∫ r(t)·Var(X_t) w(t) dt`` where ``r(t)`` is the weight of
      ``R_t^T f``; this is the double covariance integral with the inner
      integral done in closed form;
    * ``mc_rhs``: the sample variance of ``∫ f(s, X_s) ds`` over simulated
      paths, with its standard error.

    The initial condition defaults to the origin.
    """
    x0 = np.zeros(model.dim) if x0 is None else np.asarray(x0, np.float64)
    lhs = expected_quadratic_variation(model, f, grid.T, grid.t0)

    nodes = np.linspace(grid.t0, grid.T, _QUADRATURE_PANELS + 1)
    weights = _r_weight_series(model, f, nodes, grid.T)
    integrand = np.array([
        weights[k] @ covariance_at(model, t - grid.t0) @ f.weight(t)
        for k, t in enumerate(nodes)
    ])
    rhs = 2.0 * float(simpson(integrand, x=nodes))

    integrals = np.concatenate([
        _left_riemann(_observable_values(f, grid, batch.states), grid.dt)[
            :, -1
        ]
        for batch in iter_ensemble_batches(
            model, grid, x0, n_paths, seed, batch_size
        )
    ])
    mc_rhs = float(np.var(integrals, ddof=1))
    mc_se = mc_rhs * math.sqrt(2.0 / max(n_paths - 1, 1))
    _logger.debug(
        "Mixing identity: lhs=%.9g, rhs=%.9g, mc=%.6g±%.2g.",
        lhs,
        rhs,
        mc_rhs,
        mc_se,
    )
    return MixingIdentity(lhs=lhs, rhs=rhs, mc_rhs=mc_rhs, mc_se=mc_se)


def pathwise_sup_check(
    ensemble: Ensemble,
    f: AffineObservable,
    model: LinearModel | None = None,
) -> PathwiseSupCheck:
    """Compare ``E sup_t |M_t − Z_t|`` with ``2√E⟨M⟩_T + E sup_t |Z_t|``.

    Suprema are taken over the grid nodes.

    :raise EmptyEnsembleError: If the ensemble has no paths.
    """
    if ensemble.n_paths < 1:
        _err_msg: str = "The ensemble has no paths."
        raise EmptyEnsembleError(message=_err_msg)
    model = _as_linear(model if model is not None else ensemble.model)
    m, z = centered_decomposition(ensemble, f, model)
    gap_sup = np.abs(m - z).max(axis=-1)
    z_sup = np.abs(z).max(axis=-1)
    grid = ensemble.grid
    qv = expected_quadratic_variation(model, f, grid.T, grid.t0)
    n = ensemble.n_paths
    se = 1.0 / math.sqrt(max(n - 1, 1))
    return PathwiseSupCheck(
        lhs=float(gap_sup.mean()),
        rhs=2.0 * math.sqrt(qv) + float(z_sup.mean()),
        lhs_se=float(gap_sup.std()) * se,
        rhs_se=float(z_sup.std()) * se,
    )


def max_decomposition_residual(
    ensemble: Ensemble,
    f: AffineObservable,
    model: LinearModel | None = None,
) -> float:
    """Return the largest ``|S + R − E S_T − M|`` over all paths and nodes."""
    model = _as_linear(model if model is not None else ensemble.model)
    grid = ensemble.grid
    provider = GradRProvider.of_linear(model, f, grid.T)
    record = martingale_ensemble(ensemble, provider)
    est = expected_time_integral(model, f, ensemble.x0, grid.T, grid.t0)
    residual = decomposition_residual(ensemble, f, record, est)
    return float(np.abs(residual).max())


def decomposition_convergence(
    model: LinearModel,
    f: AffineObservable,
    grid: TimeGrid,
    x0: ArrayLike,
    n_paths: int,
    master_seed: int,
) -> ConvergenceReport:
    """Measure the decomposition residual at ``dt`` and ``dt/2``.

    Paths are simulated on the refined grid; the coarse paths are driven by
    the same Brownian motions through summed increments.
    """
    fine_grid = grid.refine(2)
    fine = simulate_ensemble(model, fine_grid, x0, n_paths, master_seed)
    coarse_increments = coarsen_increments(fine.increments, 2)
    coarse = Ensemble(
        grid=grid,
        model=model,
        states=euler_maruyama_from_increments(
            model, grid, x0, coarse_increments
        ),
        increments=coarse_increments,
        path_indices=fine.path_indices,
        master_seed=master_seed,
    )
    residual = max_decomposition_residual(coarse, f, model)
    residual_half = max_decomposition_residual(fine, f, model)
    ratio = residual / residual_half if residual_half > 0 else math.inf
    _logger.debug(
        "Residuals %.3e (dt=%g) and %.3e (dt/2); ratio %.3f.",
        residual,
        grid.dt,
        residual_half,
        ratio,
    )
    return ConvergenceReport(
        dt=grid.dt,
        residual=residual,
        residual_half_dt=residual_half,
        ratio=ratio,
    )
