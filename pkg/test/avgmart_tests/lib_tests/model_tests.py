# ruff: noqa: D100, D102, D103
from __future__ import annotations

import math
from unittest import TestCase

import numpy as np
import pytest

from avgmart.core import NonpositiveParameterError, ShapeMismatchError
from avgmart.lib.model import (
    AffineObservable,
    Ensemble,
    GeneralModel,
    LinearModel,
    NonpositiveIntervalError,
    TimeGrid,
    Trajectory,
    ZeroStepsError,
    apply_matrix,
    grid_from_step,
    make_linear_ab,
    make_ornstein_uhlenbeck,
    make_time_grid,
    make_two_timescale,
)


class TestTimeGrid(TestCase):
    """Tests for the :class:`TimeGrid` class."""

    def setUp(self) -> None:
        super().setUp()
        self._instance: TimeGrid = make_time_grid(0.5, 2.5, 8)

    def test_step_and_nodes(self) -> None:
        assert self._instance.dt == 0.25
        assert self._instance.duration == 2.0
        assert self._instance.nodes.shape == (9,)
        assert self._instance.nodes[0] == 0.5
        assert self._instance.nodes[-1] == pytest.approx(2.5)
        assert self._instance.node(4) == pytest.approx(1.5)

    def test_index_of(self) -> None:
        assert self._instance.index_of(1.5) == 4
        assert self._instance.index_of(1.6) == 4
        assert self._instance.index_of(-10.0) == 0
        assert self._instance.index_of(10.0) == 8

    def test_refine(self) -> None:
        refined = self._instance.refine(4)

        assert refined.n_steps == 32
        assert refined.dt == pytest.approx(self._instance.dt / 4)
        assert refined.T == self._instance.T

    def test_invalid_grids(self) -> None:
        with pytest.raises(NonpositiveIntervalError):
            make_time_grid(1.0, 1.0, 10)
        with pytest.raises(ZeroStepsError):
            make_time_grid(0.0, 1.0, 0)

    def test_grid_from_step(self) -> None:
        grid = grid_from_step(0.0, 1.0, 0.3)

        assert grid.n_steps == 3
        assert grid_from_step(0.0, 1.0, 5.0).n_steps == 1
        with pytest.raises(NonpositiveParameterError):
            grid_from_step(0.0, 1.0, 0.0)


class TestLinearModel(TestCase):
    """Tests for the :class:`LinearModel` class."""

    def test_arrays_are_read_only_copies(self) -> None:
        a = np.array([[1.0, 0.0], [0.0, 2.0]])
        model = LinearModel(A=a, Sigma=np.eye(2))
        a[0, 0] = 5.0

        assert model.A[0, 0] == 1.0
        with pytest.raises(ValueError, match="read-only"):
            model.A[0, 0] = 3.0

    def test_shapes_and_labels(self) -> None:
        model = LinearModel(A=np.eye(2), Sigma=[[1.0], [0.0]])

        assert model.dim == 2
        assert model.noise_dim == 1
        assert model.labels == ("x0", "x1")
        np.testing.assert_array_equal(
            model.diffusion_matrix, [[1.0, 0.0], [0.0, 0.0]]
        )

    def test_invalid_shapes(self) -> None:
        with pytest.raises(ShapeMismatchError):
            LinearModel(A=np.eye(2), Sigma=np.eye(3))
        with pytest.raises(ShapeMismatchError):
            LinearModel(A=[[1.0, 2.0]], Sigma=np.eye(1))
        with pytest.raises(ShapeMismatchError):
            LinearModel(A=np.eye(2), Sigma=np.eye(2), labels=("a",))
        with pytest.raises(ShapeMismatchError):
            LinearModel(A=[[math.nan]], Sigma=[[1.0]])

    def test_drift_and_diffusion(self) -> None:
        model = make_linear_ab(alpha=4.0, beta=1.0)
        x = np.array([[1.0, 2.0], [0.5, -1.0]])

        np.testing.assert_allclose(model.drift(0.0, x), -x @ model.A.T)
        np.testing.assert_allclose(
            model.diffusion_step(0.0, x, x), x @ model.Sigma.T
        )

    def test_describe(self) -> None:
        description = make_ornstein_uhlenbeck(kappa=2.0, sigma=0.5).describe()

        assert description["type"] == "linear"
        assert description["A"] == [[2.0]]
        assert description["Sigma"] == [[0.5]]
        assert description["labels"] == ["X"]


class TestModelFactories(TestCase):
    """Tests for the model factory functions."""

    def test_make_linear_ab(self) -> None:
        model = make_linear_ab(alpha=9.0, beta=0.5)

        np.testing.assert_array_equal(model.A, [[9.0, -9.0], [-1.0, 1.5]])
        np.testing.assert_array_equal(model.Sigma, [[3.0, 0.0], [0.0, 1.0]])
        assert model.labels == ("X", "Y")
        assert make_linear_ab(alpha=1.0, beta=0.0).A[1, 1] == 1.0

    def test_make_linear_ab_rejects_bad_parameters(self) -> None:
        with pytest.raises(NonpositiveParameterError) as exc_info:
            make_linear_ab(alpha=0.0, beta=1.0)
        assert exc_info.value.parameter == "alpha"
        with pytest.raises(NonpositiveParameterError) as exc_info:
            make_linear_ab(alpha=1.0, beta=-0.1)
        assert exc_info.value.parameter == "beta"

    def test_make_two_timescale(self) -> None:
        model = make_two_timescale(
            alpha=4.0, kappaX=2.0, kappaY=3.0, sigmaX=0.5, sigmaY=2.0
        )

        np.testing.assert_array_equal(model.A, [[8.0, -8.0], [-3.0, 3.0]])
        np.testing.assert_array_equal(model.Sigma, [[1.0, 0.0], [0.0, 2.0]])
        with pytest.raises(NonpositiveParameterError):
            make_two_timescale(1.0, 1.0, math.inf, 1.0, 1.0)

    def test_make_ornstein_uhlenbeck(self) -> None:
        model = make_ornstein_uhlenbeck(kappa=1.5, sigma=0.0, dim=3)

        np.testing.assert_array_equal(model.A, 1.5 * np.eye(3))
        assert not model.Sigma.any()
        with pytest.raises(NonpositiveParameterError):
            make_ornstein_uhlenbeck(kappa=1.0, sigma=-1.0)


class TestGeneralModel(TestCase):
    """Tests for the :class:`GeneralModel` class."""

    def setUp(self) -> None:
        super().setUp()
        self._linear: LinearModel = make_linear_ab(alpha=2.0, beta=1.0)
        linear = self._linear
        self._instance: GeneralModel = GeneralModel(
            dim=2,
            noise_dim=2,
            drift=lambda _t, x: -linear.A @ x,
            diffusion=lambda _t, _x: linear.Sigma,
        )

    def test_matches_linear_model(self) -> None:
        x = np.array([[1.0, -1.0], [0.25, 3.0], [0.0, 0.0]])
        dw = np.array([[0.1, 0.2], [-0.3, 0.0], [1.0, 1.0]])

        np.testing.assert_allclose(
            self._instance.drift(0.0, x), self._linear.drift(0.0, x)
        )
        np.testing.assert_allclose(
            self._instance.diffusion_step(0.0, x, dw),
            self._linear.diffusion_step(0.0, x, dw),
        )
        np.testing.assert_allclose(
            self._instance.drift(0.0, x[0]), self._linear.drift(0.0, x[0])
        )

    def test_bad_callable_shapes(self) -> None:
        model = GeneralModel(
            dim=2,
            noise_dim=1,
            drift=lambda _t, _x: np.zeros(3),
            diffusion=lambda _t, _x: np.zeros((2, 2)),
        )

        with pytest.raises(ShapeMismatchError):
            model.drift(0.0, np.zeros(2))
        with pytest.raises(ShapeMismatchError):
            model.diffusion_step(0.0, np.zeros(2), np.zeros(1))

    def test_describe(self) -> None:
        description = self._instance.describe()

        assert description["type"] == "general"
        assert description["dim"] == 2
        assert self._instance.labels == ("x0", "x1")


class TestAffineObservable(TestCase):
    """Tests for the :class:`AffineObservable` class."""

    def test_static_observable(self) -> None:
        f = AffineObservable.of([1.0, -2.0], c=0.5)

        assert f.static
        assert f(0.0, [3.0, 1.0]) == pytest.approx(1.5)
        np.testing.assert_allclose(
            f(7.0, [[1.0, 1.0], [0.0, 0.0]]), [-0.5, 0.5]
        )
        assert not f.is_constant()

    def test_constant(self) -> None:
        f = AffineObservable.constant(2.0, dim=3)

        assert f.is_constant()
        assert f(0.0, [1.0, 2.0, 3.0]) == 2.0

    def test_from_mapping(self) -> None:
        f = AffineObservable.from_mapping({"w": [0.0, 1.0]})

        assert f.dim == 2
        assert f.offset(0.0) == 0.0
        np.testing.assert_array_equal(f.weight(1.0), [0.0, 1.0])

    def test_time_dependent(self) -> None:
        f = AffineObservable.of_time_dependent(
            w=lambda t: [t, 1.0], c=lambda t: -t, dim=2
        )

        assert not f.static
        assert not f.is_constant()
        assert f(2.0, [1.0, 1.0]) == pytest.approx(1.0)

    def test_weight_shape_is_checked(self) -> None:
        f = AffineObservable.of_time_dependent(
            w=lambda _t: [1.0, 2.0, 3.0], c=lambda _t: 0.0, dim=2
        )

        with pytest.raises(ShapeMismatchError):
            f.weight(0.0)


class TestSamplePaths(TestCase):
    """Tests for the :class:`Trajectory` and :class:`Ensemble` classes."""

    def setUp(self) -> None:
        super().setUp()
        self._grid: TimeGrid = make_time_grid(0.0, 1.0, 4)
        self._model: LinearModel = make_ornstein_uhlenbeck(1.0, 1.0)

    def _ensemble(self, indices: tuple[int, ...]) -> Ensemble:
        n = len(indices)
        return Ensemble(
            grid=self._grid,
            model=self._model,
            states=np.ones((n, 5, 1)),
            increments=np.full((n, 4, 1), 0.5),
            path_indices=indices,
            master_seed=7,
        )

    def test_trajectory_shapes_are_checked(self) -> None:
        with pytest.raises(ShapeMismatchError):
            Trajectory(
                grid=self._grid,
                states=np.zeros((4, 1)),
                noise_increments=np.zeros((4, 1)),
                seed=0,
                path_index=0,
            )

    def test_brownian_path(self) -> None:
        trajectory = self._ensemble((3,)).trajectory(0)

        assert trajectory.path_index == 3
        assert trajectory.seed == 7
        np.testing.assert_allclose(
            trajectory.brownian_path[:, 0], [0.0, 0.5, 1.0, 1.5, 2.0]
        )

    def test_concatenate(self) -> None:
        ensemble = Ensemble.concatenate([
            self._ensemble((0, 1)),
            self._ensemble((2,)),
        ])

        assert len(ensemble) == 3
        assert ensemble.path_indices == (0, 1, 2)
        assert ensemble.states.shape == (3, 5, 1)
        assert len(ensemble.trajectories) == 3
        np.testing.assert_array_equal(ensemble.x0, [1.0])
        with pytest.raises(ShapeMismatchError):
            Ensemble.concatenate([])

    def test_inconsistent_ensemble(self) -> None:
        with pytest.raises(ShapeMismatchError):
            Ensemble(
                grid=self._grid,
                model=self._model,
                states=np.ones((2, 5, 1)),
                increments=np.ones((2, 4, 1)),
                path_indices=(0,),
                master_seed=0,
            )


def test_apply_matrix_matches_matmul() -> None:
    rng = np.random.default_rng(5)
    x = rng.standard_normal((6, 3))
    matrix = rng.standard_normal((2, 3))

    np.testing.assert_allclose(apply_matrix(x, matrix), x @ matrix.T)
    np.testing.assert_allclose(apply_matrix(x[0], matrix), matrix @ x[0])
