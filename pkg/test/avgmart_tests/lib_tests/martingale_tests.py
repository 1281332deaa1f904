# ruff: noqa: D100, D102
from __future__ import annotations

import math
from unittest import TestCase

import numpy as np
import pytest

from avgmart.core import NonpositiveHorizonError
from avgmart.lib.linear_analytics import r_operator_affine
from avgmart.lib.martingale import (
    GradRProvider,
    MartingaleRecord,
    Provenance,
    ProviderDomainError,
    carre_du_champ,
    centered_decomposition,
    centered_observable,
    decomposition_convergence,
    decomposition_residual,
    expected_quadratic_variation,
    expected_time_integral,
    martingale_ensemble,
    martingale_path,
    max_decomposition_residual,
    mixing_identity,
    pathwise_sup_check,
)
from avgmart.lib.model import (
    AffineObservable,
    Ensemble,
    LinearModel,
    TimeGrid,
    make_ornstein_uhlenbeck,
    make_time_grid,
    make_two_timescale,
)
from avgmart.lib.simulate import euler_maruyama_path, simulate_ensemble

from ..oracles import mc_tolerance

# 2∫_0^1 (1 − e^{−(1−t)})² dt for the OU process with κ = 1 and σ = √2.
_OU_QV = 2.0 * (1.0 - 2.0 * -math.expm1(-1.0) - math.expm1(-2.0) / 2.0)


def _ou() -> LinearModel:
    return make_ornstein_uhlenbeck(kappa=1.0, sigma=math.sqrt(2.0))


class TestQuadraticVariation(TestCase):
    """Tests for the deterministic quadratic variation of linear models."""

    def test_ornstein_uhlenbeck_value(self) -> None:
        qv = expected_quadratic_variation(
            _ou(), AffineObservable.of([1.0]), 1.0
        )

        assert _OU_QV == pytest.approx(0.3361826, abs=5e-8)
        assert qv == pytest.approx(_OU_QV, rel=1e-8)

    def test_invalid_horizon(self) -> None:
        with pytest.raises(NonpositiveHorizonError):
            expected_quadratic_variation(
                _ou(), AffineObservable.of([1.0]), 1.0, t0=1.0
            )

    def test_carre_du_champ(self) -> None:
        f = AffineObservable.of([1.0])
        g = AffineObservable.of([3.0])

        assert carre_du_champ(_ou(), f, f, 0.0) == pytest.approx(1.0)
        assert carre_du_champ(_ou(), f, g, 0.0) == pytest.approx(3.0)


class TestMartingalePath(TestCase):
    """Tests for the pathwise decomposition series."""

    def setUp(self) -> None:
        super().setUp()
        self._model: LinearModel = _ou()
        self._f: AffineObservable = AffineObservable.of([1.0])
        self._grid: TimeGrid = make_time_grid(0.0, 1.0, 1000)
        self._provider: GradRProvider = GradRProvider.of_linear(
            self._model, self._f, 1.0
        )

    def test_record_shapes_and_start(self) -> None:
        traj = euler_maruyama_path(self._model, self._grid, [0.5], 4, 0)

        record = martingale_path(traj, self._provider)

        assert record.M.shape == (1001,)
        assert record.M[0] == 0.0
        assert record.QV[0] == 0.0
        assert record.R is not None
        assert record.S is not None
        assert record.S[0] == 0.0
        assert np.all(np.diff(record.QV) >= 0)

    def test_quadratic_variation_is_deterministic(self) -> None:
        first = euler_maruyama_path(self._model, self._grid, [0.0], 4, 0)
        second = euler_maruyama_path(self._model, self._grid, [3.0], 4, 1)

        qv_first = martingale_path(first, self._provider).QV
        qv_second = martingale_path(second, self._provider).QV

        np.testing.assert_array_equal(qv_first, qv_second)
        assert qv_first[-1] == pytest.approx(_OU_QV, abs=2e-3)

    def test_decomposition_residual_is_small(self) -> None:
        traj = euler_maruyama_path(self._model, self._grid, [1.0], 8, 0)
        record = martingale_path(traj, self._provider)
        est = expected_time_integral(self._model, self._f, [1.0], 1.0)

        residual = decomposition_residual(traj, self._f, record, est)

        assert est == pytest.approx(-math.expm1(-1.0))
        assert residual[0] == pytest.approx(0.0, abs=1e-12)
        assert np.abs(residual).max() < 20 * self._grid.dt

    def test_residual_needs_analytic_provider(self) -> None:
        provider = GradRProvider.of_callable(
            lambda _t, _x: [math.sqrt(2.0)], noise_dim=1
        )
        traj = euler_maruyama_path(self._model, self._grid, [0.0], 1, 0)
        record = martingale_path(traj, provider, observable=self._f)

        assert provider.provenance is Provenance.USER_SUPPLIED
        assert record.R is None
        with pytest.raises(ProviderDomainError):
            decomposition_residual(traj, self._f, record, 0.0)

    def test_callable_provider_matches_analytic(self) -> None:
        model = self._model

        def gradient(t: float, _x: np.ndarray) -> np.ndarray:
            weight = r_operator_affine(model, self._f, t, 1.0).weight(0.0)
            return model.Sigma.T @ weight

        provider = GradRProvider.of_callable(gradient, noise_dim=1)
        grid = make_time_grid(0.0, 1.0, 50)
        traj = euler_maruyama_path(model, grid, [0.2], 5, 0)

        analytic = martingale_path(traj, self._provider)
        wrapped = martingale_path(traj, provider)

        np.testing.assert_allclose(wrapped.M, analytic.M, atol=1e-12)
        np.testing.assert_allclose(wrapped.QV, analytic.QV, atol=1e-12)
        assert wrapped.S is None

    def test_provider_errors(self) -> None:
        traj = euler_maruyama_path(self._model, self._grid, [0.0], 1, 0)
        misshapen = GradRProvider.of_callable(
            lambda _t, _x: [1.0, 2.0], noise_dim=1
        )
        infinite = GradRProvider.of_callable(
            lambda _t, _x: [math.inf], noise_dim=1
        )
        short = GradRProvider.of_linear(self._model, self._f, 0.5)

        for provider in (misshapen, infinite, short):
            with pytest.raises(ProviderDomainError):
                martingale_path(traj, provider)

    def test_ensemble_rows_match_paths(self) -> None:
        grid = make_time_grid(0.0, 1.0, 40)
        ensemble = simulate_ensemble(self._model, grid, [0.3], 4, 21)

        record = martingale_ensemble(ensemble, self._provider)

        assert record.M.shape == (4, 41)
        for p in range(4):
            single = martingale_path(ensemble.trajectory(p), self._provider)
            assert record.S is not None
            assert single.S is not None
            np.testing.assert_allclose(record.M[p], single.M, atol=1e-13)
            np.testing.assert_allclose(record.S[p], single.S, atol=1e-13)

    def test_two_timescale_r_series(self) -> None:
        model = make_two_timescale(1.0, 1.0, 1.0, 1.0, 1.0)
        f = AffineObservable.of([1.0, -1.0])
        grid = make_time_grid(0.0, 1.0, 10)
        traj = euler_maruyama_path(model, grid, [2.0, 0.0], 0, 0)

        record = martingale_path(traj, GradRProvider.of_linear(model, f, 1.0))

        assert record.R is not None
        assert record.R[0] == pytest.approx(0.8646647, abs=5e-8)
        assert record.R[-1] == 0.0


class TestMartingaleRecord(TestCase):
    """Tests for the :class:`MartingaleRecord` invariants."""

    def setUp(self) -> None:
        super().setUp()
        self._grid: TimeGrid = make_time_grid(0.0, 1.0, 2)

    def test_valid_record(self) -> None:
        record = MartingaleRecord(
            grid=self._grid, M=[0.0, 1.0, -1.0], QV=[0.0, 0.5, 0.5]
        )

        assert record.R is None
        assert record.S is None

    def test_invalid_records(self) -> None:
        with pytest.raises(ProviderDomainError):
            MartingaleRecord(
                grid=self._grid, M=[1.0, 1.0, 1.0], QV=[0.0, 0.5, 1.0]
            )
        with pytest.raises(ProviderDomainError):
            MartingaleRecord(
                grid=self._grid, M=[0.0, 1.0, 1.0], QV=[0.0, 0.5, 0.4]
            )
        with pytest.raises(ProviderDomainError):
            MartingaleRecord(
                grid=self._grid,
                M=[0.0, 1.0, 1.0],
                QV=[0.0, 0.5, 1.0],
                S=[0.0, math.nan, 1.0],
            )


class TestCenteredDecomposition(TestCase):
    """Tests for the centred decomposition ``∫(f − Ef) = M − Z``."""

    def setUp(self) -> None:
        super().setUp()
        self._model: LinearModel = _ou()
        self._f: AffineObservable = AffineObservable.of([1.0])
        self._grid: TimeGrid = make_time_grid(0.0, 1.0, 100)
        self._ensemble: Ensemble = simulate_ensemble(
            self._model, self._grid, [1.0], 2000, 99
        )

    def test_z_vanishes_at_both_ends(self) -> None:
        m, z = centered_decomposition(self._ensemble, self._f)

        assert m.shape == z.shape == (2000, 101)
        np.testing.assert_array_equal(z[:, 0], 0.0)
        np.testing.assert_allclose(z[:, -1], 0.0, atol=1e-15)

    def test_martingale_isometry(self) -> None:
        m, _ = centered_decomposition(self._ensemble, self._f)
        provider = GradRProvider.of_linear(self._model, self._f, 1.0)
        qv = martingale_ensemble(self._ensemble, provider).QV[0, -1]

        n = m.shape[0]
        final = m[:, -1]
        assert abs(final.mean()) < mc_tolerance(math.sqrt(qv / n))
        assert abs(final.var(ddof=1) - qv) < mc_tolerance(
            qv * math.sqrt(2.0 / (n - 1))
        )

    def test_trajectory_needs_model(self) -> None:
        traj = self._ensemble.trajectory(0)

        with pytest.raises(ProviderDomainError):
            centered_decomposition(traj, self._f)
        m, z = centered_decomposition(traj, self._f, self._model)
        assert m.shape == z.shape == (101,)

    def test_centered_observable(self) -> None:
        f0 = centered_observable(self._model, self._f, [1.0])

        assert not f0.static
        assert f0(0.0, [1.0]) == pytest.approx(0.0)
        assert f0(1.0, [math.exp(-1.0)]) == pytest.approx(0.0, abs=1e-12)
        assert f0(1.0, [1.0]) == pytest.approx(1.0 - math.exp(-1.0))

    def test_pathwise_sup_check(self) -> None:
        check = pathwise_sup_check(self._ensemble, self._f)

        assert check.lhs > 0
        assert check.rhs > 2.0 * math.sqrt(_OU_QV)
        assert check.lhs + 4 * check.lhs_se < check.rhs - 4 * check.rhs_se


class TestMixingIdentity(TestCase):
    """Tests for the :func:`mixing_identity` function."""

    def test_ornstein_uhlenbeck(self) -> None:
        grid = make_time_grid(0.0, 1.0, 100)

        identity = mixing_identity(
            _ou(), AffineObservable.of([1.0]), grid, 2000, 5, batch_size=512
        )

        assert identity.lhs == pytest.approx(_OU_QV, rel=1e-8)
        assert identity.rhs == pytest.approx(identity.lhs, rel=1e-8)
        assert abs(identity.mc_rhs - identity.lhs) < mc_tolerance(
            identity.mc_se, bias=0.02
        )

    def test_two_timescale_model(self) -> None:
        model = make_two_timescale(2.0, 1.0, 1.0, 1.0, 1.0)
        grid = make_time_grid(0.0, 1.0, 20)

        identity = mixing_identity(
            model, AffineObservable.of([0.0, 1.0]), grid, 10, 0
        )

        assert identity.rhs == pytest.approx(identity.lhs, rel=1e-7)


class TestConvergence(TestCase):
    """Tests for the first order convergence of the residual."""

    def test_residual_halves_with_the_step(self) -> None:
        report = decomposition_convergence(
            _ou(),
            AffineObservable.of([1.0]),
            make_time_grid(0.0, 1.0, 100),
            [1.0],
            200,
            13,
        )

        assert report.dt == pytest.approx(0.01)
        assert report.residual > report.residual_half_dt > 0
        assert 1.4 <= report.ratio <= 2.8

    def test_max_residual(self) -> None:
        grid = make_time_grid(0.0, 1.0, 200)
        ensemble = simulate_ensemble(_ou(), grid, [0.0], 50, 1)

        residual = max_decomposition_residual(
            ensemble, AffineObservable.of([1.0])
        )

        assert 0 < residual < 20 * grid.dt
