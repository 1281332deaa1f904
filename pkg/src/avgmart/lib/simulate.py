"""Euler–Maruyama path generation with reproducible noise streams.

Random numbers
--------------
Every path owns a Philox4x64 counter-based generator (as shipped by NumPy)
keyed by ``(master_seed, path_index)``. The highest 64-bit word of the
initial counter carries a stream tag so that several independent streams can
be derived for one path:

* stream ``0``: the noise of a single model, or of the first model of a
  coupled pair;
* stream ``1``: the independent components of the second model of a coupled
  pair.

Uniforms are drawn with :meth:`numpy.random.Generator.random` (53 random
bits), shifted by half a unit in the last place, capped below one so they
lie strictly inside ``(0, 1)``, and mapped to standard normals by the inverse
Gaussian CDF (:func:`scipy.special.ndtri`). Draws are consumed in row-major
``(step, component)`` order. This recipe is part of the release contract:
``(master_seed, path_index, grid)`` determines a path bit for bit, whatever
the batch size or evaluation order.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Sequence
from typing import Final

import numpy as np
from attrs import field, frozen
from numpy.typing import ArrayLike
from scipy.special import ndtri

from avgmart.core import (
    AvgMartError,
    EmptyEnsembleError,
    Model,
    ShapeMismatchError,
)

from .model import Ensemble, FloatArray, TimeGrid, Trajectory, as_readonly

# =============================================================================
# CONSTANTS
# =============================================================================


PRIMARY_STREAM: Final[int] = 0

SECONDARY_STREAM: Final[int] = 1

DEFAULT_BATCH_SIZE: Final[int] = 4096

_HALF_ULP: Final[float] = 2.0**-54

_BELOW_ONE: Final[float] = float(np.nextafter(1.0, 0.0))

_SEED_LIMIT: Final[int] = 2**64

_logger = logging.getLogger(__name__)


# =============================================================================
# EXCEPTIONS
# =============================================================================


class NonFiniteStateError(AvgMartError, ArithmeticError):
    """A simulated state became infinite or NaN.

    This usually means the step size is too large for the drift at hand.
    """

    def __init__(self, step: int, path_index: int) -> None:
        """Initialize a ``NonFiniteStateError``.

        :param step: The index of the first grid node with a non-finite state.
        :param path_index: The index of the offending path.
        """
        super().__init__(
            message=(
                f"Path {path_index} produced a non-finite state at step "
                f"{step}; reduce the step size."
            ),
        )
        self._step: int = step
        self._path_index: int = path_index

    @property
    def path_index(self) -> int:
        """The index of the offending path."""
        return self._path_index

    @property
    def step(self) -> int:
        """The index of the first grid node with a non-finite state."""
        return self._step


class CouplingShapeMismatchError(AvgMartError, ValueError):
    """A coupling refers to noise components one of the models lacks."""


class InvalidSeedError(AvgMartError, ValueError):
    """A seed or path index does not fit into an unsigned 64-bit integer."""


# =============================================================================
# RANDOM STREAMS
# =============================================================================


def noise_generator(
    master_seed: int,
    path_index: int,
    stream: int = PRIMARY_STREAM,
) -> np.random.Generator:
    """Return the generator of the given path and stream.

    :raise InvalidSeedError: If a key word does not fit into 64 bits.
    """
    for name, value in (
        ("master_seed", master_seed),
        ("path_index", path_index),
        ("stream", stream),
    ):
        if not 0 <= value < _SEED_LIMIT:
            _err_msg: str = f"'{name}' must lie in [0, 2**64), got {value}."
            raise InvalidSeedError(message=_err_msg)
    bit_generator = np.random.Philox(
        counter=np.array([0, 0, 0, stream], dtype=np.uint64),
        key=np.array([master_seed, path_index], dtype=np.uint64),
    )
    return np.random.Generator(bit_generator)


def open_unit_interval(draws: ArrayLike) -> FloatArray:
    """Map draws from ``[0, 1)`` into the open interval ``(0, 1)``."""
    shifted = np.asarray(draws, dtype=np.float64) + _HALF_ULP
    return np.minimum(shifted, _BELOW_ONE)


def gaussian_increments(
    master_seed: int,
    path_index: int,
    n_steps: int,
    noise_dim: int,
    dt: float,
    stream: int = PRIMARY_STREAM,
) -> FloatArray:
    """Draw the Brownian increments of one path.

    :return: An array of shape ``(n_steps, noise_dim)`` with ``N(0, dt)``
        entries.
    """
    generator = noise_generator(master_seed, path_index, stream)
    uniforms = open_unit_interval(generator.random((n_steps, noise_dim)))
    return math.sqrt(dt) * ndtri(uniforms)


def _draw_batch(
    master_seed: int,
    path_indices: Sequence[int],
    n_steps: int,
    noise_dim: int,
    dt: float,
    stream: int = PRIMARY_STREAM,
) -> FloatArray:
    increments = np.empty((len(path_indices), n_steps, noise_dim))
    for p, path_index in enumerate(path_indices):
        increments[p] = gaussian_increments(
            master_seed, path_index, n_steps, noise_dim, dt, stream
        )
    return increments


# =============================================================================
# EULER–MARUYAMA
# =============================================================================


def _initial_batch(model: Model, x0: ArrayLike, n_paths: int) -> FloatArray:
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    if x0.shape != (model.dim,):
        _err_msg: str = (
            f"The initial condition has shape {x0.shape}, expected "
            f"({model.dim},)."
        )
        raise ShapeMismatchError(message=_err_msg)
    if not np.isfinite(x0).all():
        _err_msg: str = "The initial condition must be finite."
        raise ShapeMismatchError(message=_err_msg)
    return np.broadcast_to(x0, (n_paths, model.dim)).copy()


def _integrate(
    model: Model,
    grid: TimeGrid,
    x0: FloatArray,
    increments: FloatArray,
    path_indices: Sequence[int],
) -> FloatArray:
    n_paths = x0.shape[0]
    states = np.empty((n_paths, grid.n_steps + 1, model.dim))
    states[:, 0] = x0
    x = x0
    dt = grid.dt
    for k in range(grid.n_steps):
        t = grid.node(k)
        x = (
            x
            + model.drift(t, x) * dt
            + model.diffusion_step(t, x, increments[:, k])
        )
        finite = np.isfinite(x).all(axis=1)
        if not finite.all():
            bad = int(np.argmin(finite))
            raise NonFiniteStateError(
                step=k + 1,
                path_index=int(path_indices[bad]),
            )
        states[:, k + 1] = x
    return states


def euler_maruyama_from_increments(
    model: Model,
    grid: TimeGrid,
    x0: ArrayLike,
    increments: ArrayLike,
) -> FloatArray:
    """Run the Euler–Maruyama scheme on prescribed Brownian increments.

    ``X_{k+1} = X_k + b(t_k, X_k) dt + σ(t_k, X_k) ΔB_k``.

    :param model: The model to integrate.
    :param grid: The time grid.
    :param x0: The initial condition, shape ``(n,)``.
    :param increments: Increments of shape ``(n_steps, m)`` for one path or
        ``(P, n_steps, m)`` for a batch.

    :return: The states, shape ``(n_steps + 1, n)`` or ``(P, n_steps + 1, n)``.

    :raise NonFiniteStateError: If a state becomes non-finite; the reported
        path index is the position of the path in the batch.
    """
    increments = np.asarray(increments, dtype=np.float64)
    single = increments.ndim == 2
    batch = increments[None] if single else increments
    if batch.shape[1:] != (grid.n_steps, model.noise_dim):
        _err_msg: str = (
            f"Increments of shape {increments.shape} do not fit a grid of "
            f"{grid.n_steps} steps and {model.noise_dim} noise components."
        )
        raise ShapeMismatchError(message=_err_msg)
    x0_batch = _initial_batch(model, x0, batch.shape[0])
    states = _integrate(model, grid, x0_batch, batch, range(batch.shape[0]))
    return states[0] if single else states


def coarsen_increments(increments: ArrayLike, factor: int) -> FloatArray:
    """Sum consecutive groups of ``factor`` increments along the step axis.

    The result drives the same Brownian motion on a grid with ``factor``
    times fewer steps.
    """
    increments = np.asarray(increments, dtype=np.float64)
    axis = increments.ndim - 2
    n_steps = increments.shape[axis]
    if factor < 1 or n_steps % factor:
        _err_msg: str = (
            f"Cannot coarsen {n_steps} steps by a factor of {factor}."
        )
        raise ShapeMismatchError(message=_err_msg)
    new_shape = (
        *increments.shape[:axis],
        n_steps // factor,
        factor,
        increments.shape[-1],
    )
    return increments.reshape(new_shape).sum(axis=axis + 1)


def euler_maruyama_path(
    model: Model,
    grid: TimeGrid,
    x0: ArrayLike,
    seed: int,
    path_index: int,
) -> Trajectory:
    """Simulate one path from the stream ``(seed, path_index)``.

    :return: The trajectory, including its Brownian increments.

    :raise NonFiniteStateError: If a state becomes non-finite.
    """
    ensemble = simulate_paths(model, grid, x0, (path_index,), seed)
    return ensemble.trajectory(0)


def simulate_paths(
    model: Model,
    grid: TimeGrid,
    x0: ArrayLike,
    path_indices: Sequence[int],
    master_seed: int,
) -> Ensemble:
    """Simulate the paths with the given indices, in the given order.

    :raise EmptyEnsembleError: If no path index is given.
    :raise NonFiniteStateError: If a state becomes non-finite; the error
        carries the index of the offending path.
    """
    path_indices = tuple(int(i) for i in path_indices)
    if not path_indices:
        _err_msg: str = "At least one path is required."
        raise EmptyEnsembleError(message=_err_msg)
    increments = _draw_batch(
        master_seed, path_indices, grid.n_steps, model.noise_dim, grid.dt
    )
    x0_batch = _initial_batch(model, x0, len(path_indices))
    states = _integrate(model, grid, x0_batch, increments, path_indices)
    return Ensemble(
        grid=grid,
        model=model,
        states=states,
        increments=increments,
        path_indices=path_indices,
        master_seed=master_seed,
    )


def iter_ensemble_batches(
    model: Model,
    grid: TimeGrid,
    x0: ArrayLike,
    n_paths: int,
    master_seed: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> Iterator[Ensemble]:
    """Yield the paths ``0 … n_paths − 1`` in consecutive batches.

    :raise EmptyEnsembleError: If ``n_paths < 1``.
    """
    if n_paths < 1:
        _err_msg: str = f"At least one path is required, got {n_paths}."
        raise EmptyEnsembleError(message=_err_msg)
    for start in range(0, n_paths, batch_size):
        stop = min(start + batch_size, n_paths)
        _logger.debug("Simulating paths %d to %d.", start, stop - 1)
        yield simulate_paths(model, grid, x0, range(start, stop), master_seed)


def simulate_ensemble(
    model: Model,
    grid: TimeGrid,
    x0: ArrayLike,
    n_paths: int,
    master_seed: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> Ensemble:
    """Simulate ``n_paths`` independent paths.

    Path ``i`` uses the stream ``(master_seed, i)``; the batch size only
    bounds the working memory and does not affect the result.

    :raise EmptyEnsembleError: If ``n_paths < 1``.
    :raise NonFiniteStateError: If a state becomes non-finite.
    """
    return Ensemble.concatenate(
        list(
            iter_ensemble_batches(
                model, grid, x0, n_paths, master_seed, batch_size
            )
        )
    )


# =============================================================================
# COUPLED SIMULATION
# =============================================================================


@frozen
class CouplingSpec:
    """Noise components shared by the two models of a coupled simulation.

    Component ``i`` of the first model and component ``i`` of the second
    model use identical increments when ``i`` is shared; all other
    components are drawn independently.
    """

    shared_components: tuple[int, ...] = field(
        converter=lambda idx: tuple(int(i) for i in idx)
    )

    def __attrs_post_init__(self) -> None:
        if len(set(self.shared_components)) != len(self.shared_components):
            _err_msg: str = (
                f"Duplicate shared components: {self.shared_components}."
            )
            raise CouplingShapeMismatchError(message=_err_msg)

    def check(self, model_a: Model, model_b: Model) -> None:
        """Ensure both models have every shared component.

        :raise CouplingShapeMismatchError: If they do not.
        """
        limit = min(model_a.noise_dim, model_b.noise_dim)
        for i in self.shared_components:
            if not 0 <= i < limit:
                _err_msg: str = (
                    f"Shared component {i} is outside the noise dimensions "
                    f"({model_a.noise_dim}, {model_b.noise_dim})."
                )
                raise CouplingShapeMismatchError(message=_err_msg)


def _simulate_coupled_paths(
    model_a: Model,
    model_b: Model,
    grid: TimeGrid,
    x0_a: ArrayLike,
    x0_b: ArrayLike,
    coupling: CouplingSpec,
    master_seed: int,
    path_indices: Sequence[int],
) -> tuple[Ensemble, Ensemble]:
    increments_a = _draw_batch(
        master_seed, path_indices, grid.n_steps, model_a.noise_dim, grid.dt
    )
    increments_b = _draw_batch(
        master_seed,
        path_indices,
        grid.n_steps,
        model_b.noise_dim,
        grid.dt,
        stream=SECONDARY_STREAM,
    )
    shared = list(coupling.shared_components)
    increments_b[:, :, shared] = increments_a[:, :, shared]

    ensembles: list[Ensemble] = []
    for model, x0, increments in (
        (model_a, x0_a, increments_a),
        (model_b, x0_b, increments_b),
    ):
        x0_batch = _initial_batch(model, x0, len(path_indices))
        states = _integrate(model, grid, x0_batch, increments, path_indices)
        ensembles.append(
            Ensemble(
                grid=grid,
                model=model,
                states=states,
                increments=as_readonly(increments),
                path_indices=path_indices,
                master_seed=master_seed,
            )
        )
    return ensembles[0], ensembles[1]


def iter_coupled_batches(
    model_a: Model,
    model_b: Model,
    grid: TimeGrid,
    x0_a: ArrayLike,
    x0_b: ArrayLike,
    coupling: CouplingSpec,
    master_seed: int,
    n_paths: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> Iterator[tuple[Ensemble, Ensemble]]:
    """Yield coupled ensembles over consecutive path-index ranges.

    :raise CouplingShapeMismatchError: If the coupling does not fit.
    :raise EmptyEnsembleError: If ``n_paths < 1``.
    """
    coupling.check(model_a, model_b)
    if n_paths < 1:
        _err_msg: str = f"At least one path is required, got {n_paths}."
        raise EmptyEnsembleError(message=_err_msg)
    for start in range(0, n_paths, batch_size):
        stop = min(start + batch_size, n_paths)
        _logger.debug("Simulating coupled paths %d to %d.", start, stop - 1)
        yield _simulate_coupled_paths(
            model_a,
            model_b,
            grid,
            x0_a,
            x0_b,
            coupling,
            master_seed,
            tuple(range(start, stop)),
        )


def simulate_coupled(
    model_a: Model,
    model_b: Model,
    grid: TimeGrid,
    x0_a: ArrayLike,
    x0_b: ArrayLike,
    coupling: CouplingSpec,
    master_seed: int,
    n_paths: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> tuple[Ensemble, Ensemble]:
    """Simulate two models driven by partially shared noise.

    The first model uses exactly the increments :func:`simulate_ensemble`
    would give it; the shared components of the second model copy them.

    :raise CouplingShapeMismatchError: If the coupling does not fit.
    :raise EmptyEnsembleError: If ``n_paths < 1``.
    :raise NonFiniteStateError: If a state becomes non-finite.
    """
    batches = list(
        iter_coupled_batches(
            model_a,
            model_b,
            grid,
            x0_a,
            x0_b,
            coupling,
            master_seed,
            n_paths,
            batch_size,
        )
    )
    return (
        Ensemble.concatenate([a for a, _ in batches]),
        Ensemble.concatenate([b for _, b in batches]),
    )
