# ruff: noqa: D100, D102
from __future__ import annotations

import math
from unittest import TestCase

import numpy as np
import pytest
from scipy.special import ndtri

from avgmart.core import EmptyEnsembleError, ShapeMismatchError
from avgmart.lib.model import (
    LinearModel,
    TimeGrid,
    make_linear_ab,
    make_ornstein_uhlenbeck,
    make_time_grid,
)
from avgmart.lib.simulate import (
    PRIMARY_STREAM,
    SECONDARY_STREAM,
    CouplingShapeMismatchError,
    CouplingSpec,
    InvalidSeedError,
    NonFiniteStateError,
    coarsen_increments,
    euler_maruyama_from_increments,
    euler_maruyama_path,
    gaussian_increments,
    iter_ensemble_batches,
    open_unit_interval,
    simulate_coupled,
    simulate_ensemble,
)


class TestNoiseStreams(TestCase):
    """Tests for the per-path Gaussian noise streams."""

    def test_streams_are_reproducible(self) -> None:
        first = gaussian_increments(11, 3, 50, 2, 0.01)
        second = gaussian_increments(11, 3, 50, 2, 0.01)

        np.testing.assert_array_equal(first, second)

    def test_streams_are_distinct(self) -> None:
        base = gaussian_increments(11, 3, 50, 1, 0.01)

        for other in (
            gaussian_increments(12, 3, 50, 1, 0.01),
            gaussian_increments(11, 4, 50, 1, 0.01),
        ):
            assert not np.array_equal(base, other)
        assert not np.array_equal(
            base,
            gaussian_increments(11, 3, 50, 1, 0.01, stream=SECONDARY_STREAM),
        )

    def test_longer_draws_extend_shorter_ones(self) -> None:
        short = gaussian_increments(5, 0, 10, 1, 1.0, stream=PRIMARY_STREAM)
        long = gaussian_increments(5, 0, 20, 1, 1.0, stream=PRIMARY_STREAM)

        np.testing.assert_array_equal(short, long[:10])

    def test_moments(self) -> None:
        n = 20_000
        dt = 0.25
        draws = gaussian_increments(2024, 0, n, 1, dt)[:, 0]

        assert abs(draws.mean()) < 4 * math.sqrt(dt / n)
        assert abs(draws.var() - dt) < 4 * dt * math.sqrt(2 / n)
        assert np.isfinite(draws).all()

    def test_invalid_seeds(self) -> None:
        with pytest.raises(InvalidSeedError):
            gaussian_increments(-1, 0, 1, 1, 1.0)
        with pytest.raises(InvalidSeedError):
            gaussian_increments(0, 2**64, 1, 1, 1.0)

    def test_extreme_draws_map_to_finite_normals(self) -> None:
        draws = np.array([0.0, 0.5, 1.0 - 2.0**-53])

        uniforms = open_unit_interval(draws)

        assert np.all(uniforms > 0.0)
        assert np.all(uniforms < 1.0)
        assert np.all(np.isfinite(ndtri(uniforms)))


class TestEulerMaruyama(TestCase):
    """Tests for the Euler–Maruyama integrators."""

    def setUp(self) -> None:
        super().setUp()
        self._model: LinearModel = make_linear_ab(alpha=4.0, beta=1.0)
        self._grid: TimeGrid = make_time_grid(0.0, 1.0, 50)

    def test_scheme_on_prescribed_increments(self) -> None:
        model = make_ornstein_uhlenbeck(kappa=2.0, sigma=0.5)
        grid = make_time_grid(0.0, 0.3, 3)
        increments = np.array([[0.1], [-0.2], [0.4]])

        states = euler_maruyama_from_increments(model, grid, [1.0], increments)

        expected = [1.0]
        for dw in increments[:, 0]:
            expected.append(expected[-1] * (1 - 2.0 * 0.1) + 0.5 * dw)
        np.testing.assert_allclose(states[:, 0], expected)

    def test_increment_shapes_are_checked(self) -> None:
        with pytest.raises(ShapeMismatchError):
            euler_maruyama_from_increments(
                self._model, self._grid, [0.0, 0.0], np.zeros((49, 2))
            )
        with pytest.raises(ShapeMismatchError):
            euler_maruyama_from_increments(
                self._model, self._grid, [0.0], np.zeros((50, 2))
            )

    def test_batching_does_not_change_paths(self) -> None:
        whole = simulate_ensemble(
            self._model, self._grid, [1.0, -1.0], 9, 77, batch_size=9
        )
        pieces = simulate_ensemble(
            self._model, self._grid, [1.0, -1.0], 9, 77, batch_size=2
        )

        np.testing.assert_array_equal(whole.states, pieces.states)
        np.testing.assert_array_equal(whole.increments, pieces.increments)
        assert pieces.path_indices == tuple(range(9))

    def test_single_path_matches_ensemble(self) -> None:
        ensemble = simulate_ensemble(self._model, self._grid, [0.5, 0.5], 5, 3)
        path = euler_maruyama_path(self._model, self._grid, [0.5, 0.5], 3, 4)

        np.testing.assert_array_equal(path.states, ensemble.states[4])
        np.testing.assert_array_equal(
            path.noise_increments, ensemble.increments[4]
        )

    def test_ornstein_uhlenbeck_variance(self) -> None:
        kappa, dt, n_steps, n_paths = 1.0, 0.01, 100, 4000
        model = make_ornstein_uhlenbeck(kappa=kappa, sigma=1.0)
        grid = make_time_grid(0.0, n_steps * dt, n_steps)

        final = simulate_ensemble(model, grid, [0.0], n_paths, 1).states[
            :, -1, 0
        ]

        exact = -math.expm1(-2 * kappa * grid.T) / (2 * kappa)
        se = exact * math.sqrt(2 / n_paths)
        assert abs(final.mean()) < 4 * math.sqrt(exact / n_paths)
        assert abs(final.var() - exact) < 4 * se + 10 * dt

    def test_iter_ensemble_batches(self) -> None:
        batches = list(
            iter_ensemble_batches(
                self._model, self._grid, [0.0, 0.0], 5, 1, batch_size=2
            )
        )

        assert [b.n_paths for b in batches] == [2, 2, 1]
        assert batches[-1].path_indices == (4,)

    def test_empty_ensemble(self) -> None:
        with pytest.raises(EmptyEnsembleError):
            simulate_ensemble(self._model, self._grid, [0.0, 0.0], 0, 1)

    def test_non_finite_state(self) -> None:
        model = LinearModel(A=[[1e3]], Sigma=[[0.0]])
        grid = make_time_grid(0.0, 200.0, 200)

        with (
            np.errstate(over="ignore", invalid="ignore"),
            pytest.raises(NonFiniteStateError) as exc_info,
        ):
            simulate_ensemble(model, grid, [1.0], 3, 0)
        assert exc_info.value.path_index == 0
        assert 0 < exc_info.value.step <= 200

    def test_initial_condition_is_checked(self) -> None:
        with pytest.raises(ShapeMismatchError):
            simulate_ensemble(self._model, self._grid, [0.0], 1, 0)
        with pytest.raises(ShapeMismatchError):
            simulate_ensemble(self._model, self._grid, [math.nan, 0.0], 1, 0)


class TestCoarsenIncrements(TestCase):
    """Tests for the :func:`coarsen_increments` function."""

    def test_sums_groups(self) -> None:
        increments = np.arange(12, dtype=float).reshape(6, 2)

        coarse = coarsen_increments(increments, 3)

        np.testing.assert_array_equal(coarse, [[6.0, 9.0], [24.0, 27.0]])
        assert coarsen_increments(increments[None], 2).shape == (1, 3, 2)

    def test_indivisible_factor(self) -> None:
        with pytest.raises(ShapeMismatchError):
            coarsen_increments(np.zeros((5, 1)), 2)


class TestCoupledSimulation(TestCase):
    """Tests for the :func:`simulate_coupled` function."""

    def setUp(self) -> None:
        super().setUp()
        self._model: LinearModel = make_linear_ab(alpha=2.0, beta=0.5)
        self._grid: TimeGrid = make_time_grid(0.0, 0.5, 20)

    def test_shared_components(self) -> None:
        first, second = simulate_coupled(
            self._model,
            self._model,
            self._grid,
            [0.0, 0.0],
            [0.0, 0.0],
            CouplingSpec(shared_components=(1,)),
            master_seed=9,
            n_paths=4,
            batch_size=3,
        )
        alone = simulate_ensemble(self._model, self._grid, [0.0, 0.0], 4, 9)

        np.testing.assert_array_equal(first.increments, alone.increments)
        np.testing.assert_array_equal(
            first.increments[:, :, 1], second.increments[:, :, 1]
        )
        assert not np.array_equal(
            first.increments[:, :, 0], second.increments[:, :, 0]
        )

    def test_invalid_couplings(self) -> None:
        with pytest.raises(CouplingShapeMismatchError):
            CouplingSpec(shared_components=(0, 0))
        with pytest.raises(CouplingShapeMismatchError):
            simulate_coupled(
                self._model,
                self._model,
                self._grid,
                [0.0, 0.0],
                [0.0, 0.0],
                CouplingSpec(shared_components=(2,)),
                master_seed=0,
                n_paths=1,
            )
