"""Runnable experiments behind the ``avgmart`` command.

Each experiment kind is an :class:`~avgmart.core.Experiment` built from an
:class:`ExperimentConfig` and producing tables of module results with
``pass``/``fail`` verdicts. The runners only orchestrate; every number they
emit comes from the computational modules of this package.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Callable, Mapping, Sequence
from pathlib import Path
from typing import Any, ClassVar, Final, Self, override

import numpy as np
from attrs import Attribute, field, frozen, validators

from avgmart.core import (
    AvgMartError,
    Experiment,
    ExperimentResult,
    NonpositiveParameterError,
    ShapeMismatchError,
    Table,
)

from .averaging import (
    SLOW_NOISE_COMPONENT,
    TwoTimescaleParams,
    Variant,
    averaged_filter_path,
    averaging_experiment,
    covariance_slow_fast,
    gradient_scaling_report,
    h_kernel,
    ou2_time_average_law,
    y_mse_formula,
    ybar_bm_mse_formula,
)
from .chain import (
    ChainModel,
    decomposition_residuals,
    enumerate_expectation,
    iter_paths,
    load_chain,
    martingale_increments,
    qv_discrete,
    qv_discrete_bruteforce,
    r_discrete,
)
from .concentration import (
    DEFAULT_R_GRID,
    GradientBound,
    centered_time_averages,
    tail_report,
    variance_proxy,
)
from .linear_analytics import (
    covariance_at,
    eigenvalues_two_timescale,
    expm_neg_At,
    mean_at,
)
from .martingale import (
    GradRProvider,
    decomposition_convergence,
    decomposition_residual,
    expected_quadratic_variation,
    expected_time_integral,
    martingale_ensemble,
    martingale_path,
    mixing_identity,
    pathwise_sup_check,
)
from .model import (
    AffineObservable,
    Ensemble,
    FloatArray,
    LinearModel,
    TimeGrid,
    grid_from_step,
    make_linear_ab,
    make_ornstein_uhlenbeck,
)
from .simulate import (
    DEFAULT_BATCH_SIZE,
    gaussian_increments,
    iter_ensemble_batches,
    simulate_ensemble,
)

# =============================================================================
# CONSTANTS
# =============================================================================


CHAIN_TOLERANCE: Final[float] = 1e-12

MIXING_TOLERANCE: Final[float] = 1e-8

PASS: Final[str] = "pass"

FAIL: Final[str] = "fail"

_TINY: Final[float] = np.finfo(np.float64).tiny

_logger = logging.getLogger(__name__)


# =============================================================================
# TYPES
# =============================================================================


type ExperimentFactory = Callable[[ExperimentConfig], Experiment]

type Series = tuple[tuple[float, float], ...]


# =============================================================================
# EXCEPTIONS
# =============================================================================


class InvalidModelSpecError(AvgMartError, ValueError):
    """A model description cannot be turned into a model."""


# =============================================================================
# CONFIGURATION
# =============================================================================


def _positive(
    _instance: object,
    attribute: Attribute[float],
    value: float,
) -> None:
    if not (math.isfinite(value) and value > 0):
        raise NonpositiveParameterError(parameter=attribute.name, value=value)


@frozen
class Tolerances:
    """Multipliers and bands used by the pass/fail checks."""

    se_multiplier: float = field(
        default=3.0, converter=float, validator=_positive
    )
    dt_multiplier: float = field(
        default=10.0, converter=float, validator=_positive
    )
    ratio_low: float = field(default=1.4, converter=float, validator=_positive)
    ratio_high: float = field(
        default=2.8, converter=float, validator=_positive
    )
    residual_dt_multiplier: float = field(
        default=5.0, converter=float, validator=_positive
    )


@frozen
class ExperimentConfig:
    """A validated experiment description.

    ``model`` and ``observable`` are the raw JSON objects describing the
    model and the observable; ``settings`` holds kind specific options.
    """

    kind: str = field(validator=validators.instance_of(str))
    master_seed: int = field(validator=validators.instance_of(int))
    t0: float = field(default=0.0, converter=float)
    T: float = field(default=1.0, converter=float)
    dt: float = field(default=1e-3, converter=float)
    n_paths: int = field(default=10**4, validator=validators.instance_of(int))
    out_dir: Path = field(default=Path("avgmart-out"), converter=Path)
    model: Mapping[str, Any] = field(factory=dict)
    observable: Mapping[str, Any] | None = field(default=None)
    settings: Mapping[str, Any] = field(factory=dict)
    tolerances: Tolerances = field(factory=Tolerances)
    base_dir: Path = field(default=Path(), converter=Path)
    digest: str = field(default="")

    @property
    def grid(self) -> TimeGrid:
        """The time grid ``t0, t0 + dt, …, T``."""
        return grid_from_step(self.t0, self.T, self.dt)

    def setting[V](self, name: str, default: V) -> V:
        """Return a kind specific setting or ``default``."""
        return self.settings.get(name, default)


def build_model(spec: Mapping[str, Any]) -> LinearModel:
    """Build a linear model from its JSON description.

    Supported ``type`` values: ``ornstein_uhlenbeck`` (``kappa``,
    ``sigma``, ``dim``), ``two_timescale`` (``alpha``, ``kappaX``,
    ``kappaY``, ``sigmaX``, ``sigmaY``), ``linear_ab`` (``alpha``,
    ``beta``) and ``linear`` (``A``, ``Sigma``, optional ``labels``).

    :raise InvalidModelSpecError: If the description is incomplete or names
        an unknown type.
    """
    try:
        match spec.get("type", "ornstein_uhlenbeck"):
            case "ornstein_uhlenbeck":
                return make_ornstein_uhlenbeck(
                    float(spec.get("kappa", 1.0)),
                    float(spec.get("sigma", 1.0)),
                    int(spec.get("dim", 1)),
                )
            case "two_timescale":
                return two_timescale_params(spec).to_model()
            case "linear_ab":
                return make_linear_ab(
                    float(spec["alpha"]), float(spec.get("beta", 1.0))
                )
            case "linear":
                return LinearModel(
                    A=spec["A"],
                    Sigma=spec["Sigma"],
                    labels=tuple(spec.get("labels", ())),
                )
            case other:
                _err_msg: str = f"Unknown model type '{other}'."
                raise InvalidModelSpecError(message=_err_msg)
    except InvalidModelSpecError:
        raise
    except KeyError as exp:
        _err_msg: str = f"The model description lacks the key {exp}."
        raise InvalidModelSpecError(message=_err_msg) from exp
    except (TypeError, ValueError) as exp:
        if isinstance(exp, AvgMartError):
            _err_msg: str = exp.message or str(exp)
        else:
            _err_msg = f"Malformed model description: {exp}."
        raise InvalidModelSpecError(message=_err_msg) from exp


def two_timescale_params(spec: Mapping[str, Any]) -> TwoTimescaleParams:
    """Read slow–fast parameters; each defaults to one."""
    return TwoTimescaleParams(
        alpha=spec.get("alpha", 1.0),
        kappaX=spec.get("kappaX", 1.0),
        kappaY=spec.get("kappaY", 1.0),
        sigmaX=spec.get("sigmaX", 1.0),
        sigmaY=spec.get("sigmaY", 1.0),
    )


def build_observable(
    spec: Mapping[str, Any] | None,
    dim: int,
) -> AffineObservable:
    """Build ``f(x) = w·x + c``; defaults to the first coordinate.

    :raise InvalidModelSpecError: If the weight does not fit the model.
    """
    if spec is None:
        return AffineObservable.of(np.eye(dim)[0])
    try:
        observable = AffineObservable.from_mapping(spec)
    except (KeyError, TypeError, ValueError) as exp:
        _err_msg: str = f"Malformed observable description: {exp!s}."
        raise InvalidModelSpecError(message=_err_msg) from exp
    if observable.dim != dim:
        _err_msg: str = (
            f"The observable has {observable.dim} weights; the model has "
            f"{dim} coordinates."
        )
        raise InvalidModelSpecError(message=_err_msg)
    return observable


# =============================================================================
# RESULTS
# =============================================================================


@frozen
class ResultTable(Table):
    """A :class:`~avgmart.core.Table` held in memory."""

    _columns: tuple[str, ...] = field(alias="columns", converter=tuple)
    _rows: tuple[tuple[Any, ...], ...] = field(
        alias="rows",
        converter=lambda rows: tuple(tuple(row) for row in rows),
    )

    def __attrs_post_init__(self) -> None:
        for row in self._rows:
            if len(row) != len(self._columns):
                _err_msg: str = (
                    f"A row has {len(row)} values for "
                    f"{len(self._columns)} columns."
                )
                raise ShapeMismatchError(message=_err_msg)

    @property
    @override
    def columns(self) -> Sequence[str]:
        return self._columns

    @property
    @override
    def rows(self) -> Sequence[Sequence[Any]]:
        return self._rows


@frozen
class ExperimentOutcome(ExperimentResult):
    """A :class:`~avgmart.core.ExperimentResult` held in memory."""

    _passed: bool = field(alias="passed")
    _tables: Mapping[str, Table] = field(alias="tables", factory=dict)
    _series: Mapping[str, Series] = field(
        alias="series", factory=dict
    )

    @property
    @override
    def passed(self) -> bool:
        return self._passed

    @property
    @override
    def series(self) -> Mapping[str, Sequence[tuple[float, float]]]:
        return self._series

    @property
    @override
    def tables(self) -> Mapping[str, Table]:
        return self._tables


def verdict(ok: bool) -> str:
    """Return the ``check`` column value of a comparison."""
    return PASS if ok else FAIL


def _series(times: Sequence[float], values: Sequence[float]) -> Series:
    return tuple(
        (float(t), float(v)) for t, v in zip(times, values, strict=True)
    )


# =============================================================================
# EXPERIMENTS
# =============================================================================


@frozen
class _ConfiguredExperiment(Experiment):
    KIND: ClassVar[str] = ""

    _config: ExperimentConfig = field(
        alias="config",
        validator=validators.instance_of(ExperimentConfig),
    )

    @property
    @override
    def kind(self) -> str:
        return self.KIND

    @property
    def config(self) -> ExperimentConfig:
        return self._config

    @property
    def batch_size(self) -> int:
        return int(self._config.setting("batch_size", DEFAULT_BATCH_SIZE))

    @classmethod
    def of(cls, config: ExperimentConfig) -> Self:
        return cls(config=config)

    def _model(self) -> LinearModel:
        return build_model(self._config.model)

    def _x0(self, model: LinearModel) -> FloatArray:
        x0 = self._config.setting("x0", None)
        if x0 is None:
            return np.zeros(model.dim)
        return np.atleast_1d(np.asarray(x0, dtype=np.float64))


class SimulateExperiment(_ConfiguredExperiment):
    """Simulate an ensemble and compare its moments with the exact ones.

    Table ``moments``: ``t, component, mc_mean, mean_se, exact_mean,
    mc_var, var_se, exact_var, check`` at ``checkpoints + 1`` evenly spaced
    nodes.
    """

    KIND: ClassVar[str] = "simulate"

    @override
    def run(self) -> ExperimentResult:
        config, model = self.config, self._model()
        grid, x0 = config.grid, self._x0(model)
        totals = np.zeros((grid.n_steps + 1, model.dim))
        squares = np.zeros_like(totals)
        for batch in iter_ensemble_batches(
            model, grid, x0, config.n_paths, config.master_seed,
            self.batch_size,
        ):
            totals += batch.states.sum(axis=0)
            squares += (batch.states * batch.states).sum(axis=0)
        n = config.n_paths
        means = totals / n
        variances = (squares - n * means * means) / max(n - 1, 1)
        variances = np.maximum(variances, 0.0)

        tol = config.tolerances
        checkpoints = int(config.setting("checkpoints", 10))
        indices = np.unique(
            np.linspace(0, grid.n_steps, checkpoints + 1).round().astype(int)
        )
        rows: list[tuple[Any, ...]] = []
        passed = True
        for k in indices:
            t = grid.node(int(k))
            exact_mean = mean_at(model, x0, t - grid.t0)
            exact_var = np.diag(covariance_at(model, t - grid.t0))
            for i, label in enumerate(self._labels(model)):
                mean_se = math.sqrt(variances[k, i] / n)
                var_se = variances[k, i] * math.sqrt(2.0 / max(n - 1, 1))
                slack = tol.dt_multiplier * grid.dt
                mean_gap = abs(means[k, i] - exact_mean[i])
                var_gap = abs(variances[k, i] - exact_var[i])
                ok = (
                    mean_gap <= tol.se_multiplier * mean_se + slack
                    and var_gap <= tol.se_multiplier * var_se + slack
                )
                passed = passed and ok
                rows.append((
                    t, label, means[k, i], mean_se, exact_mean[i],
                    variances[k, i], var_se, exact_var[i], verdict(ok),
                ))
        series = {
            f"mean_{label}": _series(grid.nodes, means[:, i])
            for i, label in enumerate(self._labels(model))
        }
        return ExperimentOutcome(
            passed=passed,
            tables={
                "moments": ResultTable(
                    columns=(
                        "t", "component", "mc_mean", "mean_se", "exact_mean",
                        "mc_var", "var_se", "exact_var", "check",
                    ),
                    rows=rows,
                )
            },
            series=series,
        )

    @staticmethod
    def _labels(model: LinearModel) -> tuple[str, ...]:
        if len(model.labels) == model.dim:
            return model.labels
        return tuple(f"x{i}" for i in range(model.dim))


class DecomposeExperiment(_ConfiguredExperiment):
    """Check the martingale decomposition of ``∫ f(X_t) dt``.

    Table ``decomposition``: ``quantity, value, se, lower, upper, check``;
    a row passes when ``lower <= value <= upper``.
    """

    KIND: ClassVar[str] = "decompose"

    @override
    def run(self) -> ExperimentResult:
        config, model = self.config, self._model()
        grid, x0 = config.grid, self._x0(model)
        f = build_observable(config.observable, model.dim)
        tol = config.tolerances
        k, slack = tol.se_multiplier, tol.dt_multiplier * grid.dt

        convergence = decomposition_convergence(
            model,
            f,
            grid,
            x0,
            int(config.setting("residual_paths", 1000)),
            config.master_seed,
        )
        qv = expected_quadratic_variation(model, f, grid.T, grid.t0)
        mixing = mixing_identity(
            model, f, grid, config.n_paths, config.master_seed, x0,
            self.batch_size,
        )
        provider = GradRProvider.of_linear(model, f, grid.T)
        terminal = np.concatenate([
            martingale_ensemble(batch, provider).M[:, -1]
            for batch in iter_ensemble_batches(
                model, grid, x0, config.n_paths, config.master_seed,
                self.batch_size,
            )
        ])
        var_m = float(np.var(terminal, ddof=1))
        var_m_se = var_m * math.sqrt(2.0 / max(terminal.shape[0] - 1, 1))

        sup_paths = min(
            config.n_paths, int(config.setting("sup_paths", 10**4))
        )
        ensemble = simulate_ensemble(
            model, grid, x0, sup_paths, config.master_seed
        )
        sup = pathwise_sup_check(ensemble, f, model)

        rows = [
            ("max residual", convergence.residual, 0.0, 0.0,
             tol.residual_dt_multiplier * grid.dt),
            ("residual ratio dt/(dt/2)", convergence.ratio, 0.0,
             tol.ratio_low, tol.ratio_high),
            ("mixing identity relative gap",
             abs(mixing.lhs - mixing.rhs) / max(abs(mixing.lhs), _TINY),
             0.0, 0.0,
             MIXING_TOLERANCE),
            ("Var(M_T)", var_m, var_m_se,
             qv - k * var_m_se - slack, qv + k * var_m_se + slack),
            ("Var(int f dt)", mixing.mc_rhs, mixing.mc_se,
             qv - k * mixing.mc_se - slack, qv + k * mixing.mc_se + slack),
            ("E sup|M - Z| (upper CI)", sup.lhs + k * sup.lhs_se, sup.lhs_se,
             0.0, sup.rhs - k * sup.rhs_se),
        ]
        checked = [
            (*row, verdict(row[3] <= row[1] <= row[4])) for row in rows
        ]
        summary = ResultTable(
            columns=("quantity", "value", "reference"),
            rows=[
                ("E<M>_T", qv, mixing.rhs),
                ("dt", grid.dt, grid.dt / 2),
                ("max residual", convergence.residual,
                 convergence.residual_half_dt),
                ("E sup|M - Z|", sup.lhs, sup.rhs),
            ],
        )
        return ExperimentOutcome(
            passed=all(row[-1] == PASS for row in checked),
            tables={
                "decomposition": ResultTable(
                    columns=("quantity", "value", "se", "lower", "upper",
                             "check"),
                    rows=checked,
                ),
                "decomposition_summary": summary,
            },
            series=self._first_path_series(ensemble, f, provider, model, x0),
        )

    @staticmethod
    def _first_path_series(
        ensemble: Ensemble,
        f: AffineObservable,
        provider: GradRProvider,
        model: LinearModel,
        x0: np.ndarray,
    ) -> dict[str, Series]:
        grid = ensemble.grid
        path = ensemble.trajectory(0)
        record = martingale_path(path, provider, f)
        est = expected_time_integral(model, f, x0, grid.T, grid.t0)
        residual = decomposition_residual(path, f, record, est)
        return {
            "martingale": _series(grid.nodes, record.M),
            "quadratic_variation": _series(grid.nodes, record.QV),
            "residual": _series(grid.nodes, residual),
        }


class ChainExperiment(_ConfiguredExperiment):
    """Check the discrete decomposition of a chain by enumeration.

    Table ``chain_qv``: ``n, state, qv_closed_form, qv_bruteforce,
    abs_diff, qv_check``. Table ``chain_checks``: ``quantity, value,
    tolerance, check``. Table ``chain_r``: ``n, state, R``.
    """

    KIND: ClassVar[str] = "chain"

    @override
    def run(self) -> ExperimentResult:
        chain = self._chain()
        qv_rows: list[tuple[Any, ...]] = []
        for n in range(1, chain.N + 1):
            closed = qv_discrete(chain, n)
            brute = qv_discrete_bruteforce(chain, n)
            for state in range(chain.n_states):
                gap = abs(float(closed[state] - brute[state]))
                ok = gap <= CHAIN_TOLERANCE * max(1.0, abs(brute[state]))
                qv_rows.append((
                    n, state, closed[state], brute[state], gap, verdict(ok),
                ))

        paths = iter_paths(chain)
        residual = max(
            float(np.abs(decomposition_residuals(chain, path)).max())
            for path in paths
        )
        conditional = max(
            abs(
                enumerate_expectation(
                    chain,
                    lambda p, n=n, s=s: (
                        martingale_increments(chain, p)[n - 1]
                        if p.states[n - 1] == s
                        else 0.0
                    ),
                )
            )
            for n in range(1, chain.N + 1)
            for s in range(chain.n_states)
        )
        checks = [
            ("max decomposition residual", residual),
            ("max |E[dM_n; X_(n-1) = s]|", conditional),
        ]
        check_rows = [
            (name, value, CHAIN_TOLERANCE, verdict(value <= CHAIN_TOLERANCE))
            for name, value in checks
        ]
        r_rows = [
            (n, state, value)
            for n in range(chain.N + 1)
            for state, value in enumerate(r_discrete(chain, n))
        ]
        _logger.debug("Chain checks over %d paths done.", len(paths))
        return ExperimentOutcome(
            passed=all(row[-1] == PASS for row in (*qv_rows, *check_rows)),
            tables={
                "chain_qv": ResultTable(
                    columns=("n", "state", "qv_closed_form",
                             "qv_bruteforce", "abs_diff", "qv_check"),
                    rows=qv_rows,
                ),
                "chain_checks": ResultTable(
                    columns=("quantity", "value", "tolerance", "check"),
                    rows=check_rows,
                ),
                "chain_r": ResultTable(
                    columns=("n", "state", "R"), rows=r_rows
                ),
            },
        )

    def _chain(self) -> ChainModel:
        source = self.config.settings.get("chain")
        if isinstance(source, Mapping):
            return ChainModel.from_mapping(source)
        if source is None:
            _err_msg: str = "The chain experiment needs a 'chain' setting."
            raise InvalidModelSpecError(message=_err_msg)
        return load_chain(self.config.base_dir / str(source))


class ConcentrationExperiment(_ConfiguredExperiment):
    """Compare empirical tails of centred time averages with the bound.

    Table ``tail``: ``R, bound, empirical, ci_low, ci_high, check``. Table
    ``tail_forms``: ``R, chernoff, exact``. Table ``concentration``:
    ``quantity, value``.
    """

    KIND: ClassVar[str] = "concentration"

    @override
    def run(self) -> ExperimentResult:
        config, model = self.config, self._model()
        grid, x0 = config.grid, self._x0(model)
        f = build_observable(config.observable, model.dim)
        bound_spec = config.setting("bound", None)
        if bound_spec is None:
            bound = GradientBound.for_linear_model(
                model, float(np.linalg.norm(f.weight(grid.T)))
            )
        else:
            bound = GradientBound.constant(
                float(bound_spec["C"]), float(bound_spec["lam"]), "configured"
            )
        averages = np.concatenate([
            centered_time_averages(batch, f, model)
            for batch in iter_ensemble_batches(
                model, grid, x0, config.n_paths, config.master_seed,
                self.batch_size,
            )
        ])
        r_grid = tuple(config.setting("R_grid", DEFAULT_R_GRID))
        report = tail_report(
            averages,
            r_grid,
            variance_proxy(bound, grid.duration),
            grid.duration,
            expected_quadratic_variation(model, f, grid.T, grid.t0),
        )
        exact = report.exact or tuple(math.nan for _ in r_grid)
        return ExperimentOutcome(
            passed=report.passed,
            tables={
                "tail": ResultTable(
                    columns=("R", "bound", "empirical", "ci_low", "ci_high",
                             "check"),
                    rows=zip(
                        report.R_grid, report.bound, report.empirical,
                        report.ci_low, report.ci_high,
                        (verdict(not v) for v in report.violations),
                        strict=True,
                    ),
                ),
                "tail_forms": ResultTable(
                    columns=("R", "chernoff", "exact"),
                    rows=zip(
                        report.R_grid, report.chernoff, exact, strict=True
                    ),
                ),
                "concentration": ResultTable(
                    columns=("quantity", "value"),
                    rows=[
                        ("C", bound.C(grid.t0)),
                        ("lambda", bound.lam(grid.t0)),
                        ("V_T", report.V_T),
                        ("T", report.T),
                        ("n_paths", report.n_paths),
                        ("violations", sum(report.violations)),
                    ],
                ),
            },
            series={
                "tail_bound": _series(report.R_grid, report.bound),
                "tail_empirical": _series(report.R_grid, report.empirical),
            },
        )


class AveragingExperiment(_ConfiguredExperiment):
    """Run the two-timescale averaging checks.

    Table ``averaging``: ``quantity, variantA_formula, variantB_formula,
    mc_estimate, mc_se, tolerance, check``. With a ``covariance_alphas``
    setting, table ``slow_fast_covariance``: ``alpha, mc_estimate, mc_se,
    exact, check``.
    """

    KIND: ClassVar[str] = "averaging"

    @override
    def run(self) -> ExperimentResult:
        config = self.config
        params = two_timescale_params(config.model)
        grid, tol = config.grid, config.tolerances
        report = averaging_experiment(
            params,
            grid,
            config.n_paths,
            config.master_seed,
            float(config.setting("x0_minus_y0", 2.0)),
            tol.se_multiplier,
            tol.dt_multiplier,
            self.batch_size,
        )
        rows = [
            (c.quantity, c.variant_a, c.variant_b, c.mc_estimate, c.mc_se,
             c.tolerance, verdict(c.passed))
            for c in report.checks
        ]
        matching = report.matching_variant
        summary = [
            ("matching_variant", "" if matching is None else matching.value),
            ("y_mse_bound", y_mse_formula(params, grid.duration).bound),
            (
                "ybar_mse_bound",
                ybar_bm_mse_formula(params, grid.duration).bound,
            ),
            ("dt", grid.dt),
            ("n_paths", report.n_paths),
        ]
        tables: dict[str, Table] = {
            "averaging": ResultTable(
                columns=("quantity", "variantA_formula", "variantB_formula",
                         "mc_estimate", "mc_se", "tolerance", "check"),
                rows=rows,
            ),
            "averaging_summary": ResultTable(
                columns=("quantity", "value"), rows=summary
            ),
        }
        passed = report.passed
        alphas = config.setting("covariance_alphas", None)
        if alphas:
            table, ok = self._covariance(alphas, grid)
            tables["slow_fast_covariance"] = table
            passed = passed and ok

        increments = gaussian_increments(
            config.master_seed, 0, grid.n_steps, 2, grid.dt
        )[:, SLOW_NOISE_COMPONENT]
        path = averaged_filter_path(params, grid, increments)
        return ExperimentOutcome(
            passed=passed,
            tables=tables,
            series={
                "filter_Qtf": _series(grid.nodes, path.Qtf),
                "filter_direct": _series(grid.nodes, path.direct),
            },
        )

    def _covariance(
        self,
        alphas: Sequence[float],
        grid: TimeGrid,
    ) -> tuple[ResultTable, bool]:
        config, tol = self.config, self.config.tolerances
        model_spec = dict(config.model)
        beta = float(model_spec.get("beta", 1.0))
        f = build_observable(
            config.observable or {"w": [0.0, 1.0]}, dim=2
        )
        t = float(config.setting("covariance_t", grid.T))
        sweep = covariance_slow_fast(
            alphas, beta, f, t, grid, config.n_paths, config.master_seed,
            make_linear_ab, int(config.setting("noise_component", 0)),
            self.batch_size,
        )
        rows: list[tuple[Any, ...]] = []
        for alpha, estimate, se, exact in zip(
            sweep.alphas, sweep.estimates, sweep.standard_errors,
            sweep.exact, strict=True,
        ):
            ok = abs(estimate - exact) <= (
                tol.se_multiplier * se + tol.dt_multiplier * grid.dt
            )
            rows.append((alpha, estimate, se, exact, verdict(ok)))
        rows.append(("slope", sweep.slope, math.nan, sweep.exact_slope, ""))
        passed = all(row[-1] != FAIL for row in rows)
        return (
            ResultTable(
                columns=("alpha", "mc_estimate", "mc_se", "exact", "check"),
                rows=rows,
            ),
            passed,
        )


class ReportExperiment(_ConfiguredExperiment):
    """Tabulate closed forms only; no simulation.

    Tables ``spectrum``, ``h_kernel``, ``mse_formulas`` and
    ``gradient_scaling``.
    """

    KIND: ClassVar[str] = "report"

    @override
    def run(self) -> ExperimentResult:
        config = self.config
        params = two_timescale_params(config.model)
        horizon = config.T - config.t0
        beta = float(config.setting("beta", 1.0))
        t = float(config.setting("t", 1.0))
        alphas = tuple(config.setting("alphas", (1.0, 10.0, 100.0)))

        spectrum_rows = []
        scaling_rows = []
        for alpha in alphas:
            spectrum = eigenvalues_two_timescale(alpha, beta)
            _, coeffs = expm_neg_At(alpha, beta, t)
            spectrum_rows.append((
                alpha, beta, t, spectrum.lambda0, spectrum.alpha_lambda1,
                spectrum.gap, coeffs.c0, coeffs.c1, coeffs.c2,
            ))
            scaling = gradient_scaling_report(alpha, beta, t)
            for i in range(2):
                for j in range(2):
                    scaling_rows.append((
                        alpha, i, j, scaling.G0[i, j], scaling.G1[i, j],
                    ))

        nodes = np.linspace(0.0, horizon, 11)
        h_rows = [
            (s, h_kernel(params.alpha, params.kappaX, params.kappaY, s))
            for s in nodes
        ]
        mean, variance = ou2_time_average_law(
            params.alpha, horizon, float(config.setting("x0_minus_y0", 2.0))
        )
        formulas = [
            ("E|Y_T - Ybar_T|^2 variant A",
             y_mse_formula(params, horizon, Variant.A)),
            ("E|Y_T - Ybar_T|^2 variant B",
             y_mse_formula(params, horizon, Variant.B)),
            ("E|Ybar_T - sigmaY B^Y_T|^2",
             ybar_bm_mse_formula(params, horizon)),
        ]
        mse_rows = [
            (name, mse.value, mse.bound, verdict(mse.value <= mse.bound))
            for name, mse in formulas
        ]
        mse_rows.append(("time average mean", mean, math.nan, ""))
        mse_rows.append(("time average variance", variance, math.nan, ""))
        return ExperimentOutcome(
            passed=all(row[-1] != FAIL for row in mse_rows),
            tables={
                "spectrum": ResultTable(
                    columns=("alpha", "beta", "t", "lambda0",
                             "alpha_lambda1", "gap", "c0", "c1", "c2"),
                    rows=spectrum_rows,
                ),
                "gradient_scaling": ResultTable(
                    columns=("alpha", "row", "col", "G0", "G1"),
                    rows=scaling_rows,
                ),
                "h_kernel": ResultTable(columns=("t", "h"), rows=h_rows),
                "mse_formulas": ResultTable(
                    columns=("quantity", "value", "bound", "check"),
                    rows=mse_rows,
                ),
            },
            series={"h_kernel": _series(nodes, [h for _, h in h_rows])},
        )


BUILTIN_EXPERIMENTS: Final[Mapping[str, ExperimentFactory]] = {
    SimulateExperiment.KIND: SimulateExperiment.of,
    DecomposeExperiment.KIND: DecomposeExperiment.of,
    ChainExperiment.KIND: ChainExperiment.of,
    ConcentrationExperiment.KIND: ConcentrationExperiment.of,
    AveragingExperiment.KIND: AveragingExperiment.of,
    ReportExperiment.KIND: ReportExperiment.of,
}
"""The experiment kinds shipped with this package."""
