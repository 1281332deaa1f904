"""Core domain interfaces.

Unless otherwise specified, all the classes defined in this module are
interfaces with no behaviors attached to them. They exist solely to
define the API shared by the models, the experiment runners and the result
writers of this library.
"""
from __future__ import annotations

from abc import ABCMeta, abstractmethod
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from collections.abc import Mapping, Sequence
    from pathlib import Path

    import numpy as np
    from numpy.typing import NDArray


# =============================================================================
# CORE DOMAIN INTERFACES
# =============================================================================


class Model(metaclass=ABCMeta):
    """An Itô SDE ``dX = b(t, X) dt + σ(t, X) dB`` on ``R^n``.

    ``b`` maps into ``R^n`` and ``σ`` into ``n × m`` matrices, ``m`` being the
    dimension of the driving Brownian motion. Both coefficients accept a
    single state of shape ``(n,)`` or a batch of states of shape ``(P, n)``
    and return results with a matching leading axis.
    """

    __slots__ = ()

    @property
    @abstractmethod
    def dim(self) -> int:
        """The dimension ``n`` of the state space."""
        ...

    @property
    @abstractmethod
    def noise_dim(self) -> int:
        """The dimension ``m`` of the driving Brownian motion."""
        ...

    @property
    @abstractmethod
    def labels(self) -> tuple[str, ...]:
        """Component names, one per state coordinate."""
        ...

    @abstractmethod
    def drift(self, t: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate the drift ``b(t, x)``.

        :param t: The time.
        :param x: A state of shape ``(n,)`` or a batch of shape ``(P, n)``.

        :return: An array with the same shape as ``x``.
        """
        ...

    @abstractmethod
    def diffusion_step(
        self,
        t: float,
        x: NDArray[np.float64],
        increments: NDArray[np.float64],
    ) -> NDArray[np.float64]:
        """Evaluate ``σ(t, x) ΔB`` for a batch of Brownian increments.

        :param t: The time.
        :param x: A state of shape ``(n,)`` or a batch of shape ``(P, n)``.
        :param increments: Increments of shape ``(m,)`` or ``(P, m)``.

        :return: An array with the same shape as ``x``.
        """
        ...

    @abstractmethod
    def describe(self) -> Mapping[str, Any]:
        """Return a JSON serializable description of this model."""
        ...


class ExperimentResult(metaclass=ABCMeta):
    """The outcome of running an :class:`Experiment`.

    A result is a collection of named tables (rendered as CSV files), named
    two-column series (rendered as gnuplot data files) and an overall
    verdict of the pass/fail checks performed by the experiment.
    """

    __slots__ = ()

    @property
    @abstractmethod
    def passed(self) -> bool:
        """``True`` if and only if every check of the experiment passed."""
        ...

    @property
    @abstractmethod
    def series(self) -> Mapping[str, Sequence[tuple[float, float]]]:
        """Plot data, keyed by the file stem of each curve."""
        ...

    @property
    @abstractmethod
    def tables(self) -> Mapping[str, Table]:
        """Result tables, keyed by their file stem."""
        ...


class Table(metaclass=ABCMeta):
    """A rectangular result with a fixed, documented column order."""

    __slots__ = ()

    @property
    @abstractmethod
    def columns(self) -> Sequence[str]:
        """The column names, in output order."""
        ...

    @property
    @abstractmethod
    def rows(self) -> Sequence[Sequence[Any]]:
        """The rows, each with one value per column."""
        ...


class Experiment(metaclass=ABCMeta):
    """A runnable, reproducible numerical experiment."""

    __slots__ = ()

    @property
    @abstractmethod
    def kind(self) -> str:
        """The experiment kind this runner implements."""
        ...

    @abstractmethod
    def run(self) -> ExperimentResult:
        """Run the experiment and return its results.

        :return: The resulting tables, series and check verdict.
        """
        ...


class ResultWriter(metaclass=ABCMeta):
    """Consumer of :class:`results<ExperimentResult>`.

    Use cases include persisting results to a directory or displaying them.
    """

    __slots__ = ()

    @abstractmethod
    def write(self, result: ExperimentResult) -> Sequence[Path]:
        """Consume the given :class:`ExperimentResult`.

        :param result: The result to consume.

        :return: The paths of any files produced, in the order written.
        """
        ...
