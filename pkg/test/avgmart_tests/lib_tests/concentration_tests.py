# ruff: noqa: D100, D102
from __future__ import annotations

import math
from unittest import TestCase

import numpy as np
import pytest

from avgmart.core import (
    EmptyEnsembleError,
    NonpositiveHorizonError,
    NonpositiveParameterError,
)
from avgmart.lib.concentration import (
    DEFAULT_R_GRID,
    GradientBound,
    NegativeVarianceError,
    NonDiagonalizableDriftError,
    NonlinearModelError,
    NonpositiveVarianceError,
    TailBoundForm,
    centered_time_averages,
    empirical_tail,
    exact_gaussian_tail,
    gaussian_tail,
    tail_report,
    variance_proxy,
    w1_deviation_bound,
    w1_point_to_gaussian,
)
from avgmart.lib.model import (
    AffineObservable,
    Ensemble,
    GeneralModel,
    LinearModel,
    make_linear_ab,
    make_ornstein_uhlenbeck,
    make_time_grid,
)
from avgmart.lib.simulate import simulate_ensemble

from ..oracles import mc_tolerance

# T − 2(1 − e^{−1}) + (1 − e^{−2})/2 for C = λ = T = 1.
_V_T = 1.0 + 2.0 * math.expm1(-1.0) - math.expm1(-2.0) / 2.0


class TestVarianceProxy(TestCase):
    """Tests for the :func:`variance_proxy` function."""

    def test_unit_constants(self) -> None:
        value = variance_proxy(GradientBound.constant(1.0, 1.0), 1.0)

        assert _V_T == pytest.approx(0.1680913, abs=5e-8)
        assert value == pytest.approx(_V_T, rel=1e-8)

    def test_scaling_in_c(self) -> None:
        unit = variance_proxy(GradientBound.constant(1.0, 2.0), 3.0)
        scaled = variance_proxy(GradientBound.constant(3.0, 2.0), 3.0)

        assert scaled == pytest.approx(9.0 * unit, rel=1e-12)

    def test_time_dependent_constants(self) -> None:
        bound = GradientBound(C=lambda t: 1.0 + 0 * t, lam=lambda _t: 1.0)

        assert variance_proxy(bound, 1.0) == pytest.approx(_V_T, rel=1e-8)

    def test_invalid_horizon(self) -> None:
        with pytest.raises(NonpositiveHorizonError):
            variance_proxy(GradientBound.constant(1.0, 1.0), 0.0)


class TestGradientBound(TestCase):
    """Tests for the :class:`GradientBound` class."""

    def test_invalid_constants(self) -> None:
        with pytest.raises(NonpositiveParameterError):
            GradientBound.constant(-1.0, 1.0)
        with pytest.raises(NonpositiveParameterError):
            GradientBound.constant(1.0, -1.0)

    def test_ornstein_uhlenbeck(self) -> None:
        bound = GradientBound.for_linear_model(
            make_ornstein_uhlenbeck(1.0, math.sqrt(2.0)), lip=1.0
        )

        assert bound.C(0.0) == pytest.approx(math.sqrt(2.0))
        assert bound.lam(0.0) == pytest.approx(1.0)
        assert "Lip" in bound.note

    def test_two_timescale_model(self) -> None:
        model = make_linear_ab(4.0, 1.0)

        bound = GradientBound.for_linear_model(model, lip=2.0)

        assert bound.lam(0.0) == pytest.approx(
            min(np.linalg.eigvals(model.A).real)
        )
        assert bound.C(0.0) >= 2.0 * np.linalg.norm(model.Sigma, 2)

    def test_zero_constant(self) -> None:
        deterministic = GradientBound.for_linear_model(
            make_ornstein_uhlenbeck(1.0, 0.0), lip=1.0
        )
        flat = GradientBound.for_linear_model(
            make_ornstein_uhlenbeck(1.0, 1.0), lip=0.0
        )

        assert deterministic.C(0.0) == 0.0
        assert flat.C(0.0) == 0.0
        assert variance_proxy(deterministic, 1.0) == 0.0

    def test_non_dissipative_model(self) -> None:
        with pytest.raises(NonpositiveParameterError):
            GradientBound.for_linear_model(make_linear_ab(1.0, 0.0), lip=1.0)

    def test_defective_drift(self) -> None:
        model = LinearModel(A=[[1.0, 1.0], [0.0, 1.0]], Sigma=np.eye(2))

        with pytest.raises(NonDiagonalizableDriftError):
            GradientBound.for_linear_model(model, lip=1.0)


class TestTailBounds(TestCase):
    """Tests for the closed form tail bounds."""

    def test_gaussian_tail(self) -> None:
        stated = gaussian_tail(1.0, 1.0, _V_T)
        chernoff = gaussian_tail(1.0, 1.0, _V_T, TailBoundForm.CHERNOFF)

        assert stated == pytest.approx(2.61e-3, rel=5e-3)
        assert stated == pytest.approx(math.exp(-1.0 / _V_T))
        assert chernoff == pytest.approx(math.sqrt(stated))
        assert gaussian_tail(0.0, 1.0, _V_T) == 1.0
        assert 0.0 < gaussian_tail(1e3, 1.0, _V_T) < 1e-300

    def test_gaussian_tail_errors(self) -> None:
        with pytest.raises(NonpositiveVarianceError):
            gaussian_tail(1.0, 1.0, 0.0)
        with pytest.raises(NonpositiveHorizonError):
            gaussian_tail(1.0, 0.0, 1.0)
        with pytest.raises(NonpositiveParameterError):
            gaussian_tail(-1.0, 1.0, 1.0)

    def test_exact_gaussian_tail(self) -> None:
        assert exact_gaussian_tail(0.0, 1.0, 0.3) == pytest.approx(0.5)
        assert exact_gaussian_tail(1.0, 2.0, 4.0) == pytest.approx(
            0.1586553, abs=1e-7
        )
        assert exact_gaussian_tail(0.1, 1.0, 0.0) == 0.0

    def test_w1_deviation_bound(self) -> None:
        value = w1_deviation_bound(1.0, 1.0, 1.0, 1.0, 1.0, 0.0)

        expected = math.exp(-((1.0 / -math.expm1(-1.0)) ** 2))
        assert value == pytest.approx(expected, rel=1e-12)
        assert value == pytest.approx(0.0819, abs=5e-5)
        assert w1_deviation_bound(1.0, 1.0, 1.0, 1.0, 0.1, 5.0) == 1.0
        assert w1_deviation_bound(1.0, 1.0, 1.0, 1.0, 1.0, 0.5) > value

    def test_w1_deviation_bound_errors(self) -> None:
        with pytest.raises(NonpositiveParameterError):
            w1_deviation_bound(0.0, 1.0, 1.0, 1.0, 1.0, 0.0)
        with pytest.raises(NonpositiveParameterError):
            w1_deviation_bound(1.0, 1.0, 1.0, 1.0, 1.0, -0.1)

    def test_w1_point_to_gaussian(self) -> None:
        assert w1_point_to_gaussian(0.0, 0.0, 1.0) == pytest.approx(
            math.sqrt(2.0 / math.pi)
        )
        assert w1_point_to_gaussian(3.0, 1.0, 0.0) == 2.0
        assert w1_point_to_gaussian(50.0, 0.0, 1.0) == pytest.approx(50.0)
        with pytest.raises(NegativeVarianceError):
            w1_point_to_gaussian(0.0, 0.0, -1.0)


class TestTailReport(TestCase):
    """Tests for the :func:`tail_report` function."""

    def test_counts_and_intervals(self) -> None:
        report = tail_report([0.1, 0.2, 0.3, 0.4], [0.25, 0.5], 1.0, 1.0)

        assert report.n_paths == 4
        assert report.empirical == (0.5, 0.0)
        assert report.exact is None
        for low, p, high in zip(
            report.ci_low, report.empirical, report.ci_high, strict=True
        ):
            assert low <= p <= high
        assert report.passed

    def test_violation(self) -> None:
        report = tail_report([0.1, 0.2, 0.3, 0.4], [0.05], 1e-6, 1.0, 1e-6)

        assert report.violations == (True,)
        assert not report.passed
        assert report.exact is not None

    def test_empty(self) -> None:
        with pytest.raises(EmptyEnsembleError):
            tail_report([], [0.1], 1.0, 1.0)

    def test_zero_variance_proxy(self) -> None:
        report = tail_report([0.0, 0.0, 0.0], [0.0, 0.1], 0.0, 1.0, 0.0)

        assert report.bound == (1.0, 0.0)
        assert report.chernoff == (1.0, 0.0)
        assert report.exact == (1.0, 0.0)
        assert report.empirical == (0.0, 0.0)
        assert report.passed


class TestEmpiricalTail(TestCase):
    """Tests for the simulated tail frequencies of the OU process."""

    def setUp(self) -> None:
        super().setUp()
        self._model = make_ornstein_uhlenbeck(1.0, math.sqrt(2.0))
        self._f = AffineObservable.of([1.0])
        self._grid = make_time_grid(0.0, 1.0, 100)
        self._ensemble: Ensemble = simulate_ensemble(
            self._model, self._grid, [0.0], 4000, 314
        )

    def test_bound_holds(self) -> None:
        report = empirical_tail(self._ensemble, self._f)

        assert len(report.R_grid) == len(DEFAULT_R_GRID) == 20
        assert report.V_T == pytest.approx(2.0 * _V_T, rel=1e-8)
        assert report.passed
        assert report.exact is not None
        for exact, bound in zip(report.exact, report.chernoff, strict=True):
            assert exact <= bound

    def test_explicit_bound(self) -> None:
        bound = GradientBound.constant(math.sqrt(2.0), 1.0)

        report = empirical_tail(self._ensemble, self._f, [0.5], bound)

        assert report.R_grid == (0.5,)
        assert report.passed

    def test_deterministic_model(self) -> None:
        model = make_ornstein_uhlenbeck(1.0, 0.0)
        ensemble = simulate_ensemble(model, self._grid, [1.0], 50, 3)

        report = empirical_tail(ensemble, self._f)

        assert report.V_T == 0.0
        assert set(report.bound) == {0.0}
        assert set(report.empirical) == {0.0}
        assert report.passed
        assert np.max(np.abs(centered_time_averages(ensemble, self._f))) < 0.01

    def test_centered_time_averages(self) -> None:
        ensemble = simulate_ensemble(self._model, self._grid, [2.0], 2000, 7)

        averages = centered_time_averages(ensemble, self._f)

        se = math.sqrt(2.0 * _V_T / 2000)
        assert averages.shape == (2000,)
        assert abs(averages.mean()) < mc_tolerance(se)
        assert abs(averages.var() - 2.0 * _V_T) < mc_tolerance(
            2.0 * _V_T * math.sqrt(2.0 / 1999), bias=0.02
        )

    def test_nonlinear_model(self) -> None:
        model = GeneralModel(
            dim=1,
            noise_dim=1,
            drift=lambda _t, x: -x,
            diffusion=lambda _t, _x: [[1.0]],
        )
        ensemble = Ensemble(
            grid=self._grid,
            model=model,
            states=np.zeros((1, 101, 1)),
            increments=np.zeros((1, 100, 1)),
            path_indices=(0,),
            master_seed=0,
        )

        with pytest.raises(NonlinearModelError):
            centered_time_averages(ensemble, self._f)
