"""Models, observables, time grids and sample paths.

Every other module of the library works with the value types defined here.
All of them are immutable once built: array fields are copied on
construction and flagged read-only.
"""
from __future__ import annotations

import math
from collections.abc import Callable, Mapping, Sequence
from typing import Any, Self, override

import numpy as np
from attrs import field, frozen, validators
from numpy.typing import ArrayLike, NDArray

from avgmart.core import (
    AvgMartError,
    Model,
    NonpositiveParameterError,
    ShapeMismatchError,
)

# =============================================================================
# TYPES
# =============================================================================


type FloatArray = NDArray[np.float64]

type DriftFn = Callable[[float, FloatArray], ArrayLike]

type DiffusionFn = Callable[[float, FloatArray], ArrayLike]

type WeightFn = Callable[[float], ArrayLike]

type OffsetFn = Callable[[float], float]


# =============================================================================
# EXCEPTIONS
# =============================================================================


class NonpositiveIntervalError(AvgMartError, ValueError):
    """The end of a time interval does not lie after its start."""


class ZeroStepsError(AvgMartError, ValueError):
    """A time grid was requested with no steps."""


# =============================================================================
# HELPERS
# =============================================================================


def as_readonly(value: ArrayLike, ndim: int | None = None) -> FloatArray:
    """Return a read-only ``float64`` copy of the given array-like.

    :param value: The values to copy.
    :param ndim: The required number of dimensions, if any.

    :return: A read-only copy of ``value``.

    :raise ShapeMismatchError: If ``ndim`` is given and does not match.
    """
    array = np.array(value, dtype=np.float64, copy=True)
    if ndim is not None and array.ndim != ndim:
        _err_msg: str = (
            f"Expected an array with {ndim} dimension(s), got shape "
            f"{array.shape}."
        )
        raise ShapeMismatchError(message=_err_msg)
    array.setflags(write=False)
    return array


def apply_matrix(x: FloatArray, matrix: FloatArray) -> FloatArray:
    """Compute ``x @ matrix.T`` one column at a time.

    The products are accumulated with elementwise operations in a fixed
    order, so a row of the result does not depend on which other rows were
    computed alongside it. Batched and single-path evaluations are therefore
    bitwise identical.

    :param x: Vectors of shape ``(k,)`` or ``(P, k)``.
    :param matrix: A matrix of shape ``(n, k)``.

    :return: An array of shape ``(n,)`` or ``(P, n)``.
    """
    result = np.zeros((*x.shape[:-1], matrix.shape[0]), dtype=np.float64)
    for j in range(matrix.shape[1]):
        result = result + x[..., j, None] * matrix[:, j]
    return result


def require_positive(**parameters: float) -> None:
    """Ensure every keyword argument is finite and strictly positive.

    :raise NonpositiveParameterError: Naming the first offending parameter.
    """
    for name, value in parameters.items():
        if not (math.isfinite(value) and value > 0):
            raise NonpositiveParameterError(parameter=name, value=value)


# =============================================================================
# TIME GRIDS
# =============================================================================


@frozen
class TimeGrid:
    """A uniform grid ``t_k = t0 + k·dt`` on ``[t0, T]``."""

    t0: float = field(converter=float)
    T: float = field(converter=float)
    n_steps: int = field(validator=validators.instance_of(int))

    def __attrs_post_init__(self) -> None:
        if not self.T > self.t0:
            _err_msg: str = (
                f"The grid end T={self.T} must lie after t0={self.t0}."
            )
            raise NonpositiveIntervalError(message=_err_msg)
        if self.n_steps < 1:
            _err_msg: str = (
                f"A grid needs at least one step, got {self.n_steps}."
            )
            raise ZeroStepsError(message=_err_msg)

    @property
    def dt(self) -> float:
        """The step size ``(T − t0)/n_steps``."""
        return (self.T - self.t0) / self.n_steps

    @property
    def duration(self) -> float:
        """The length ``T − t0`` of the grid."""
        return self.T - self.t0

    @property
    def nodes(self) -> FloatArray:
        """The ``n_steps + 1`` grid nodes."""
        return self.t0 + np.arange(self.n_steps + 1) * self.dt

    def node(self, k: int) -> float:
        """Return the ``k``-th grid node."""
        return self.t0 + k * self.dt

    def index_of(self, t: float) -> int:
        """Return the index of the grid node closest to ``t``."""
        k = round((t - self.t0) / self.dt)
        return min(max(k, 0), self.n_steps)

    def refine(self, factor: int) -> TimeGrid:
        """Return the grid with each step split into ``factor`` steps."""
        return TimeGrid(t0=self.t0, T=self.T, n_steps=self.n_steps * factor)


def make_time_grid(t0: float, T: float, n_steps: int) -> TimeGrid:  # noqa: N803
    """Create a uniform time grid.

    :param t0: The first node.
    :param T: The last node; must exceed ``t0``.
    :param n_steps: The number of steps; must be at least one.

    :return: The grid.

    :raise NonpositiveIntervalError: If ``T <= t0``.
    :raise ZeroStepsError: If ``n_steps < 1``.
    """
    return TimeGrid(t0=t0, T=T, n_steps=int(n_steps))


def grid_from_step(t0: float, T: float, dt: float) -> TimeGrid:  # noqa: N803
    """Create the uniform grid on ``[t0, T]`` whose step is closest to ``dt``.

    :raise NonpositiveParameterError: If ``dt`` is not positive.
    """
    require_positive(dt=dt)
    return make_time_grid(t0, T, max(1, round((T - t0) / dt)))


# =============================================================================
# MODELS
# =============================================================================


@frozen(eq=False)
class LinearModel(Model):
    """The linear SDE ``dX = −A X dt + Σ dB``.

    ``A`` is ``n × n`` and ``Σ`` is ``n × m``; the model is time-homogeneous.
    """

    A: FloatArray = field(converter=lambda a: as_readonly(a, ndim=2))
    Sigma: FloatArray = field(converter=lambda s: as_readonly(s, ndim=2))
    _labels: tuple[str, ...] = field(
        alias="labels",
        converter=tuple,
        default=(),
    )

    def __attrs_post_init__(self) -> None:
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.Sigma.shape[0] != n:
            _err_msg: str = (
                f"Incompatible shapes: A {self.A.shape}, Sigma "
                f"{self.Sigma.shape}."
            )
            raise ShapeMismatchError(message=_err_msg)
        if not (np.isfinite(self.A).all() and np.isfinite(self.Sigma).all()):
            _err_msg: str = "A and Sigma must have finite entries."
            raise ShapeMismatchError(message=_err_msg)
        if self._labels and len(self._labels) != n:
            _err_msg: str = f"Expected {n} labels, got {len(self._labels)}."
            raise ShapeMismatchError(message=_err_msg)

    @property
    @override
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    @override
    def noise_dim(self) -> int:
        return self.Sigma.shape[1]

    @property
    @override
    def labels(self) -> tuple[str, ...]:
        return self._labels or tuple(f"x{i}" for i in range(self.dim))

    @property
    def diffusion_matrix(self) -> FloatArray:
        """The covariance rate ``ΣΣ^⊤``."""
        return self.Sigma @ self.Sigma.T

    @override
    def drift(self, t: float, x: FloatArray) -> FloatArray:
        return -apply_matrix(np.asarray(x, dtype=np.float64), self.A)

    @override
    def diffusion_step(
        self,
        t: float,
        x: FloatArray,
        increments: FloatArray,
    ) -> FloatArray:
        return apply_matrix(
            np.asarray(increments, dtype=np.float64),
            self.Sigma,
        )

    @override
    def describe(self) -> Mapping[str, Any]:
        return {
            "type": "linear",
            "A": self.A.tolist(),
            "Sigma": self.Sigma.tolist(),
            "labels": list(self.labels),
        }


@frozen(eq=False)
class GeneralModel(Model):
    """An SDE with user supplied drift and diffusion callables.

    The callables receive ``(t, x)``. Unless ``vectorized`` is set, ``x`` is a
    single state of shape ``(n,)`` and batches are evaluated row by row; with
    ``vectorized`` set the callables must also accept ``(P, n)`` batches and
    return ``(P, n)`` drifts and ``(P, n, m)`` diffusion matrices.
    """

    _dim: int = field(alias="dim", validator=validators.instance_of(int))
    _noise_dim: int = field(
        alias="noise_dim",
        validator=validators.instance_of(int),
    )
    _drift_fn: DriftFn = field(
        alias="drift",
        validator=validators.is_callable(),
    )
    _diffusion_fn: DiffusionFn = field(
        alias="diffusion",
        validator=validators.is_callable(),
    )
    _vectorized: bool = field(alias="vectorized", default=False)
    _labels: tuple[str, ...] = field(
        alias="labels",
        converter=tuple,
        default=(),
    )

    @property
    @override
    def dim(self) -> int:
        return self._dim

    @property
    @override
    def noise_dim(self) -> int:
        return self._noise_dim

    @property
    @override
    def labels(self) -> tuple[str, ...]:
        return self._labels or tuple(f"x{i}" for i in range(self.dim))

    @override
    def drift(self, t: float, x: FloatArray) -> FloatArray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1 or self._vectorized:
            result = np.asarray(self._drift_fn(t, x), dtype=np.float64)
        else:
            result = np.stack([
                np.asarray(self._drift_fn(t, row), dtype=np.float64)
                for row in x
            ])
        self._check_shape("drift", result, x.shape)
        return result

    @override
    def diffusion_step(
        self,
        t: float,
        x: FloatArray,
        increments: FloatArray,
    ) -> FloatArray:
        x = np.asarray(x, dtype=np.float64)
        increments = np.asarray(increments, dtype=np.float64)
        if x.ndim == 1:
            sigma = self._sigma(t, x)
            return apply_matrix(increments, sigma)
        if self._vectorized:
            sigmas = np.asarray(self._diffusion_fn(t, x), dtype=np.float64)
            self._check_shape(
                "diffusion", sigmas, (x.shape[0], self.dim, self.noise_dim)
            )
            return np.einsum("pij,pj->pi", sigmas, increments)
        return np.stack([
            apply_matrix(increments[p], self._sigma(t, x[p]))
            for p in range(x.shape[0])
        ])

    @override
    def describe(self) -> Mapping[str, Any]:
        return {
            "type": "general",
            "dim": self.dim,
            "noise_dim": self.noise_dim,
            "drift": getattr(self._drift_fn, "__qualname__", "<callable>"),
            "diffusion": getattr(
                self._diffusion_fn, "__qualname__", "<callable>"
            ),
            "labels": list(self.labels),
        }

    def _sigma(self, t: float, x: FloatArray) -> FloatArray:
        sigma = np.asarray(self._diffusion_fn(t, x), dtype=np.float64)
        self._check_shape("diffusion", sigma, (self.dim, self.noise_dim))
        return sigma

    @staticmethod
    def _check_shape(
        what: str,
        value: FloatArray,
        expected: tuple[int, ...],
    ) -> None:
        if value.shape != tuple(expected):
            _err_msg: str = (
                f"The {what} callable returned shape {value.shape}, expected "
                f"{tuple(expected)}."
            )
            raise ShapeMismatchError(message=_err_msg)


def make_two_timescale(
    alpha: float,
    kappaX: float,  # noqa: N803
    kappaY: float,  # noqa: N803
    sigmaX: float,  # noqa: N803
    sigmaY: float,  # noqa: N803
) -> LinearModel:
    """Create the slow–fast linear system with the fast part accelerated.

    The fast component ``X`` relaxes towards ``Y`` at rate ``α·κX`` with noise
    ``√α·σX``; the slow component ``Y`` relaxes towards ``X`` at rate ``κY``
    with noise ``σY``.

    :raise NonpositiveParameterError: If any parameter is not positive.
    """
    require_positive(
        alpha=alpha,
        kappaX=kappaX,
        kappaY=kappaY,
        sigmaX=sigmaX,
        sigmaY=sigmaY,
    )
    return LinearModel(
        A=[[alpha * kappaX, -alpha * kappaX], [-kappaY, kappaY]],
        Sigma=[[math.sqrt(alpha) * sigmaX, 0.0], [0.0, sigmaY]],
        labels=("X", "Y"),
    )


def make_linear_ab(alpha: float, beta: float) -> LinearModel:
    """Create the slow–fast system with an extra restoring rate on ``Y``.

    ``A = [[α, −α], [−1, 1 + β]]`` and ``Σ = diag(√α, 1)``.

    :raise NonpositiveParameterError: If ``α <= 0`` or ``β < 0``.
    """
    require_positive(alpha=alpha)
    if not (math.isfinite(beta) and beta >= 0):
        raise NonpositiveParameterError(parameter="beta", value=beta)
    return LinearModel(
        A=[[alpha, -alpha], [-1.0, 1.0 + beta]],
        Sigma=[[math.sqrt(alpha), 0.0], [0.0, 1.0]],
        labels=("X", "Y"),
    )


def make_ornstein_uhlenbeck(
    kappa: float,
    sigma: float,
    dim: int = 1,
) -> LinearModel:
    """Create the isotropic Ornstein–Uhlenbeck model ``dX = −κX dt + σ dB``.

    :raise NonpositiveParameterError: If ``κ <= 0`` or ``σ < 0``.
    """
    require_positive(kappa=kappa)
    if not (math.isfinite(sigma) and sigma >= 0):
        raise NonpositiveParameterError(parameter="sigma", value=sigma)
    return LinearModel(
        A=kappa * np.eye(dim),
        Sigma=sigma * np.eye(dim),
        labels=("X",) if dim == 1 else (),
    )


# =============================================================================
# OBSERVABLES
# =============================================================================


@frozen(eq=False)
class AffineObservable:
    """The function ``f(t, x) = w(t)·x + c(t)``.

    Observables whose weight and offset do not depend on time are flagged
    ``static``; several closed forms are only available for them.
    """

    _w: WeightFn = field(alias="w", validator=validators.is_callable())
    _c: OffsetFn = field(alias="c", validator=validators.is_callable())
    dim: int = field(validator=validators.instance_of(int))
    static: bool = field(default=False)

    def __call__(self, t: float, x: ArrayLike) -> FloatArray:
        """Evaluate the observable at a state or a batch of states."""
        x = np.asarray(x, dtype=np.float64)
        return x @ self.weight(t) + self.offset(t)

    def weight(self, t: float) -> FloatArray:
        """Return the weight vector ``w(t)``."""
        w = np.asarray(self._w(t), dtype=np.float64).reshape(-1)
        if w.shape != (self.dim,):
            _err_msg: str = (
                f"The weight has shape {w.shape}, expected ({self.dim},)."
            )
            raise ShapeMismatchError(message=_err_msg)
        return w

    def offset(self, t: float) -> float:
        """Return the offset ``c(t)``."""
        return float(self._c(t))

    def is_constant(self) -> bool:
        """Return ``True`` for a static observable with zero weight."""
        return self.static and not np.any(self.weight(0.0))

    @classmethod
    def of(cls, w: ArrayLike, c: float = 0.0) -> Self:
        """Create a static observable ``f(x) = w·x + c``."""
        weight = as_readonly(np.atleast_1d(w), ndim=1)
        offset = float(c)
        return cls(
            w=lambda _t: weight,
            c=lambda _t: offset,
            dim=weight.shape[0],
            static=True,
        )

    @classmethod
    def constant(cls, c: float, dim: int) -> Self:
        """Create the constant observable ``f ≡ c`` on ``R^dim``."""
        return cls.of(np.zeros(dim), c)

    @classmethod
    def of_time_dependent(cls, w: WeightFn, c: OffsetFn, dim: int) -> Self:
        """Create an observable with time dependent weight and offset."""
        return cls(w=w, c=c, dim=dim, static=False)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> Self:
        """Create a static observable from ``{"w": [...], "c": ...}``."""
        return cls.of(mapping["w"], mapping.get("c", 0.0))


# =============================================================================
# SAMPLE PATHS
# =============================================================================


@frozen(eq=False)
class Trajectory:
    """One discretized sample path together with its Brownian increments."""

    grid: TimeGrid = field(validator=validators.instance_of(TimeGrid))
    states: FloatArray = field(converter=lambda s: as_readonly(s, ndim=2))
    noise_increments: FloatArray = field(
        converter=lambda n: as_readonly(n, ndim=2)
    )
    seed: int = field(validator=validators.instance_of(int))
    path_index: int = field(validator=validators.instance_of(int))

    def __attrs_post_init__(self) -> None:
        if (
            self.states.shape[0] != self.grid.n_steps + 1
            or self.noise_increments.shape[0] != self.grid.n_steps
        ):
            _err_msg: str = (
                f"A path on {self.grid.n_steps} steps needs "
                f"{self.grid.n_steps + 1} states and {self.grid.n_steps} "
                f"increments, got {self.states.shape[0]} and "
                f"{self.noise_increments.shape[0]}."
            )
            raise ShapeMismatchError(message=_err_msg)

    @property
    def x0(self) -> FloatArray:
        """The initial condition."""
        return self.states[0]

    @property
    def brownian_path(self) -> FloatArray:
        """The Brownian motion at the grid nodes, starting from zero."""
        zero = np.zeros((1, self.noise_increments.shape[1]))
        return np.concatenate([zero, np.cumsum(self.noise_increments, 0)])


@frozen(eq=False)
class Ensemble:
    """Sample paths sharing one grid and one model.

    ``states`` has shape ``(P, n_steps + 1, n)`` and ``increments`` has shape
    ``(P, n_steps, m)``. Path ``p`` was generated from the stream
    ``(master_seed, path_indices[p])``.
    """

    grid: TimeGrid = field(validator=validators.instance_of(TimeGrid))
    model: Model = field(validator=validators.instance_of(Model))
    states: FloatArray = field(converter=lambda s: as_readonly(s, ndim=3))
    increments: FloatArray = field(converter=lambda n: as_readonly(n, ndim=3))
    path_indices: tuple[int, ...] = field(
        converter=lambda idx: tuple(int(i) for i in idx)
    )
    master_seed: int = field(validator=validators.instance_of(int))

    def __attrs_post_init__(self) -> None:
        n_paths = len(self.path_indices)
        if (
            self.states.shape[:2] != (n_paths, self.grid.n_steps + 1)
            or self.increments.shape[:2] != (n_paths, self.grid.n_steps)
        ):
            _err_msg: str = (
                f"Inconsistent ensemble shapes: states {self.states.shape}, "
                f"increments {self.increments.shape}, {n_paths} paths."
            )
            raise ShapeMismatchError(message=_err_msg)

    def __len__(self) -> int:
        return len(self.path_indices)

    @property
    def n_paths(self) -> int:
        """The number of paths in this ensemble."""
        return len(self.path_indices)

    @property
    def x0(self) -> FloatArray:
        """The initial condition shared by all paths."""
        return self.states[0, 0]

    @property
    def brownian_paths(self) -> FloatArray:
        """The Brownian motions at the grid nodes, shape ``(P, K + 1, m)``."""
        zero = np.zeros((self.n_paths, 1, self.increments.shape[2]))
        return np.concatenate([zero, np.cumsum(self.increments, 1)], axis=1)

    @property
    def trajectories(self) -> Sequence[Trajectory]:
        """The individual paths of this ensemble."""
        return tuple(self.trajectory(p) for p in range(self.n_paths))

    def trajectory(self, p: int) -> Trajectory:
        """Return the ``p``-th path of this ensemble (by position)."""
        return Trajectory(
            grid=self.grid,
            states=self.states[p],
            noise_increments=self.increments[p],
            seed=self.master_seed,
            path_index=self.path_indices[p],
        )

    @classmethod
    def concatenate(cls, batches: Sequence[Ensemble]) -> Self:
        """Join ensembles simulated on the same grid with the same model."""
        if not batches:
            _err_msg: str = "At least one ensemble is required."
            raise ShapeMismatchError(message=_err_msg)
        first = batches[0]
        return cls(
            grid=first.grid,
            model=first.model,
            states=np.concatenate([b.states for b in batches]),
            increments=np.concatenate([b.increments for b in batches]),
            path_indices=[i for b in batches for i in b.path_indices],
            master_seed=first.master_seed,
        )
