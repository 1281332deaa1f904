"""Finite-state, time-inhomogeneous Markov chains.

A chain is given by its transition matrices ``P_{n,n+1}``, ``0 <= n < N``,
the values ``f_n(x)`` of a time-indexed observable and an initial
distribution. The discrete decomposition reads::

    Σ_{m<n} f_m(X_m) + R_n^N f(X_n) = R_0^N f(X_0) + M_n

with ``R_n^N f = Σ_{m=n}^{N−1} P_{n,m} f_m``. Every quantity is computed with
dense matrices and compensated summation, and can be checked against the
exhaustive enumeration of all paths.

Chain files are JSON documents of the form::

    {
        "n_states": 2,
        "N": 3,
        "transitions": [[[0.9, 0.1], [0.2, 0.8]], ...],
        "f": [[1.0, 0.0], ...],
        "mu0": [1.0, 0.0]
    }

``transitions`` holds ``N`` row-stochastic matrices. ``f`` holds ``N + 1``
rows, one per time, or a single row shared by all times. ``mu0`` defaults
to the point mass on state ``0``.
"""
from __future__ import annotations

import enum
import json
import logging
import math
from collections.abc import Callable, Mapping, Sequence
from pathlib import Path
from typing import Any, Final, Self

import numpy as np
from attrs import field, frozen, validators
from numpy.typing import ArrayLike

from avgmart.core import AvgMartError

from .model import FloatArray, as_readonly

# =============================================================================
# CONSTANTS
# =============================================================================


ENUMERATION_LIMIT: Final[int] = 10**6

STOCHASTIC_TOLERANCE: Final[float] = 1e-12

_logger = logging.getLogger(__name__)


# =============================================================================
# EXCEPTIONS
# =============================================================================


class IndexOrderError(AvgMartError, IndexError):
    """Time indices are out of range or in the wrong order."""


class InvalidChainError(AvgMartError, ValueError):
    """A chain document violates the chain invariants."""


class StateSpaceTooLargeError(AvgMartError, ValueError):
    """Exhaustive enumeration was requested for too many paths."""


# =============================================================================
# TYPES
# =============================================================================


class GammaMethod(enum.Enum):
    """How :func:`gamma_discrete` evaluates the carré du champ."""

    ALGEBRAIC = "algebraic"
    CONDITIONAL = "conditional"


@frozen(eq=False)
class ChainModel:
    """A finite-state chain on ``{0, …, n_states − 1}`` over ``N`` steps.

    ``transitions`` has shape ``(N, S, S)``, ``f`` has shape ``(N + 1, S)``
    and ``mu0`` has shape ``(S,)``.
    """

    n_states: int = field(validator=validators.instance_of(int))
    transitions: FloatArray = field(
        converter=lambda p: as_readonly(p, ndim=3)
    )
    f: FloatArray = field(converter=lambda f: as_readonly(f, ndim=2))
    mu0: FloatArray = field(converter=lambda mu: as_readonly(mu, ndim=1))

    def __attrs_post_init__(self) -> None:
        s, n = self.n_states, self.transitions.shape[0]
        if s < 1 or n < 1:
            _err_msg: str = "A chain needs at least one state and one step."
            raise InvalidChainError(message=_err_msg)
        if (
            self.transitions.shape != (n, s, s)
            or self.f.shape != (n + 1, s)
            or self.mu0.shape != (s,)
        ):
            _err_msg: str = (
                f"Inconsistent shapes for {s} states and {n} steps: "
                f"transitions {self.transitions.shape}, f {self.f.shape}, "
                f"mu0 {self.mu0.shape}."
            )
            raise InvalidChainError(message=_err_msg)
        finite = np.isfinite(self.transitions).all() and np.isfinite(
            self.f
        ).all()
        if not finite:
            _err_msg: str = "Chain entries must be finite."
            raise InvalidChainError(message=_err_msg)
        if np.any(self.transitions < 0):
            _err_msg: str = "Transition probabilities must be nonnegative."
            raise InvalidChainError(message=_err_msg)
        row_sums = np.array([
            [math.fsum(row) for row in matrix] for matrix in self.transitions
        ])
        if np.any(np.abs(row_sums - 1.0) > STOCHASTIC_TOLERANCE):
            _err_msg: str = "Every transition matrix must be row-stochastic."
            raise InvalidChainError(message=_err_msg)
        if (
            np.any(self.mu0 < 0)
            or abs(math.fsum(self.mu0) - 1.0) > STOCHASTIC_TOLERANCE
        ):
            _err_msg: str = "mu0 must be a probability vector."
            raise InvalidChainError(message=_err_msg)

    @property
    def N(self) -> int:  # noqa: N802
        """The number of steps."""
        return self.transitions.shape[0]

    def transition(self, n: int) -> FloatArray:
        """Return ``P_{n,n+1}``."""
        _check_range("n", n, 0, self.N - 1)
        return self.transitions[n]

    def truncated(self, N: int) -> ChainModel:  # noqa: N803
        """Return the chain restricted to its first ``N`` steps."""
        _check_range("N", N, 1, self.N)
        return ChainModel(
            n_states=self.n_states,
            transitions=self.transitions[:N],
            f=self.f[: N + 1],
            mu0=self.mu0,
        )

    def with_observable(self, f: ArrayLike) -> ChainModel:
        """Return this chain with another observable.

        :param f: Values of shape ``(S,)`` or ``(N + 1, S)``.
        """
        return ChainModel(
            n_states=self.n_states,
            transitions=self.transitions,
            f=_time_indexed(f, self.N, self.n_states),
            mu0=self.mu0,
        )

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> Self:
        """Build a chain from a parsed chain document.

        :raise InvalidChainError: If a key is missing or malformed.
        """
        try:
            n_states = int(mapping["n_states"])
            transitions = np.asarray(mapping["transitions"], dtype=np.float64)
            n_steps = int(mapping.get("N", transitions.shape[0]))
            f = _time_indexed(mapping["f"], n_steps, n_states)
            mu0 = mapping.get("mu0")
            if mu0 is None:
                mu0 = np.eye(n_states)[0]
        except KeyError as exp:
            _err_msg: str = f"The chain document lacks the key {exp}."
            raise InvalidChainError(message=_err_msg) from exp
        except (TypeError, ValueError) as exp:
            _err_msg: str = f"Malformed chain document: {exp}."
            raise InvalidChainError(message=_err_msg) from exp
        if transitions.ndim != 3 or transitions.shape[0] != n_steps:
            _err_msg: str = (
                f"Expected {n_steps} transition matrices, got an array of "
                f"shape {transitions.shape}."
            )
            raise InvalidChainError(message=_err_msg)
        return cls(n_states=n_states, transitions=transitions, f=f, mu0=mu0)


@frozen
class ChainPath:
    """A path ``x_0 … x_N`` together with its probability."""

    states: tuple[int, ...] = field(
        converter=lambda s: tuple(int(x) for x in s)
    )
    probability: float = field(converter=float)

    def __attrs_post_init__(self) -> None:
        if not 0.0 <= self.probability <= 1.0:
            _err_msg: str = (
                f"A path probability must lie in [0, 1], got "
                f"{self.probability}."
            )
            raise InvalidChainError(message=_err_msg)


# =============================================================================
# HELPERS
# =============================================================================


def _check_range(name: str, value: int, low: int, high: int) -> None:
    if not low <= value <= high:
        _err_msg: str = (
            f"'{name}' must lie in [{low}, {high}], got {value}."
        )
        raise IndexOrderError(message=_err_msg)


def _time_indexed(
    values: ArrayLike,
    n_steps: int,
    n_states: int,
) -> FloatArray:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim == 1:
        array = np.broadcast_to(array, (n_steps + 1, array.shape[0]))
    if array.shape != (n_steps + 1, n_states):
        _err_msg: str = (
            f"Observable values of shape {array.shape} do not fit "
            f"{n_steps} steps and {n_states} states."
        )
        raise InvalidChainError(message=_err_msg)
    return np.array(array)


def _fsum_matmul(a: FloatArray, b: FloatArray) -> FloatArray:
    """Return ``a @ b`` with every entry summed by :func:`math.fsum`."""
    products = a[:, :, None] * b[None, :, :]
    return np.array([
        [math.fsum(products[i, :, j]) for j in range(b.shape[1])]
        for i in range(a.shape[0])
    ])


def _fsum_matvec(a: FloatArray, v: FloatArray) -> FloatArray:
    return np.array([math.fsum(row * v) for row in a])


def _validate_path(chain: ChainModel, path: ChainPath) -> None:
    if len(path.states) != chain.N + 1 or not all(
        0 <= x < chain.n_states for x in path.states
    ):
        _err_msg: str = (
            f"{path.states} is not a path of {chain.N} steps over "
            f"{chain.n_states} states."
        )
        raise InvalidChainError(message=_err_msg)


# =============================================================================
# OPERATORS
# =============================================================================


def compose_transitions(chain: ChainModel, m: int, n: int) -> FloatArray:
    """Return ``P_{m,n} = P_{m,m+1} ··· P_{n−1,n}``.

    The product is the identity for ``m = n``.

    :raise IndexOrderError: Unless ``0 <= m <= n <= N``.
    """
    _check_range("n", n, 0, chain.N)
    _check_range("m", m, 0, n)
    product = np.eye(chain.n_states)
    for k in range(m, n):
        product = _fsum_matmul(product, chain.transitions[k])
    return product


def _r_series(chain: ChainModel) -> FloatArray:
    """Return ``R_n^N f`` for all ``n``; shape ``(N + 1, S)``."""
    r = np.zeros((chain.N + 1, chain.n_states))
    for k in range(chain.N - 1, -1, -1):
        r[k] = chain.f[k] + _fsum_matvec(chain.transitions[k], r[k + 1])
    return r


def r_discrete(chain: ChainModel, n: int) -> FloatArray:
    """Return ``R_n^N f = Σ_{m=n}^{N−1} P_{n,m} f_m`` as a vector over states.

    Evaluated by the backward recursion ``R_n = f_n + P_{n,n+1} R_{n+1}``,
    ``R_N = 0``.

    :raise IndexOrderError: Unless ``0 <= n <= N``.
    """
    _check_range("n", n, 0, chain.N)
    return _r_series(chain)[n]


def martingale_increments(
    chain: ChainModel,
    path: ChainPath,
) -> tuple[float, ...]:
    """Return ``ΔM_n = R_n(X_n) − P_{n−1,n} R_n(X_{n−1})`` for ``n = 1 … N``.

    :raise InvalidChainError: If ``path`` is not a path of ``chain``.
    """
    _validate_path(chain, path)
    r = _r_series(chain)
    states = path.states
    return tuple(
        float(
            r[n, states[n]]
            - math.fsum(chain.transitions[n - 1, states[n - 1]] * r[n])
        )
        for n in range(1, chain.N + 1)
    )


def decomposition_residuals(
    chain: ChainModel,
    path: ChainPath,
) -> FloatArray:
    """Return ``Σ_{m<n} f_m(X_m) + R_n(X_n) − R_0(X_0) − M_n`` per ``n``."""
    _validate_path(chain, path)
    r = _r_series(chain)
    states = path.states
    increments = martingale_increments(chain, path)
    residuals = np.empty(chain.N + 1)
    for n in range(chain.N + 1):
        partial = [chain.f[m, states[m]] for m in range(n)]
        residuals[n] = math.fsum([
            *partial,
            r[n, states[n]],
            -r[0, states[0]],
            *(-dm for dm in increments[:n]),
        ])
    return residuals


def _gamma(
    transition: FloatArray,
    f_now: FloatArray,
    f_next: FloatArray,
    g_now: FloatArray,
    g_next: FloatArray,
    method: GammaMethod,
) -> FloatArray:
    if method is GammaMethod.CONDITIONAL:
        return np.array([
            math.fsum(
                transition[x] * (f_next - f_now[x]) * (g_next - g_now[x])
            )
            for x in range(transition.shape[0])
        ])
    return np.array([
        math.fsum([
            math.fsum(transition[x] * f_next * g_next),
            -f_now[x] * math.fsum(transition[x] * g_next),
            -g_now[x] * math.fsum(transition[x] * f_next),
            f_now[x] * g_now[x],
        ])
        for x in range(transition.shape[0])
    ])


def gamma_discrete(
    chain: ChainModel,
    f_vec: ArrayLike,
    g_vec: ArrayLike,
    n: int,
    method: GammaMethod = GammaMethod.ALGEBRAIC,
) -> FloatArray:
    """Return the discrete carré du champ ``Γ_n(f, g)`` over states.

    ``Γ_n(f, g) = P_{n,n+1}(fg) − f_n P_{n,n+1} g − g_n P_{n,n+1} f + f_n g_n``
    with ``f``, ``g`` taken at time ``n + 1`` inside ``P_{n,n+1}``. It equals
    ``E[(f_{n+1}(X_{n+1}) − f_n(x))(g_{n+1}(X_{n+1}) − g_n(x)) | X_n = x]``,
    which is what the ``CONDITIONAL`` method sums directly.

    :param chain: The chain.
    :param f_vec: Values of shape ``(S,)`` (time independent) or
        ``(N + 1, S)``.
    :param g_vec: Values shaped like ``f_vec``.
    :param n: The time index, ``0 <= n < N``.
    :param method: The evaluation method.

    :raise IndexOrderError: Unless ``0 <= n < N``.
    """
    _check_range("n", n, 0, chain.N - 1)
    f = _time_indexed(f_vec, chain.N, chain.n_states)
    g = _time_indexed(g_vec, chain.N, chain.n_states)
    return _gamma(chain.transitions[n], f[n], f[n + 1], g[n], g[n + 1], method)


def qv_discrete(
    chain: ChainModel,
    n: int,
    N: int | None = None,  # noqa: N803
) -> FloatArray:
    """Return the predictable increment ``E[(ΔM_n)² | X_{n−1} = x]``.

    With ``φ^m_j = P_{j,m} f_m`` the increment is ``Σ_m φ^m_n(X_n) −
    φ^m_{n−1}(X_{n−1})``, hence::

        2 Σ_{n<=m<k<=N−1} Γ_{n−1}(φ^m, φ^k) + Σ_{m=n}^{N−1} Γ_{n−1}(φ^m, φ^m)

    where each ``Γ_{n−1}`` uses the values of ``φ`` at times ``n − 1``
    and ``n``.

    :param chain: The chain.
    :param n: The step, ``1 <= n <= N``.
    :param N: The horizon; defaults to the horizon of the chain.

    :raise IndexOrderError: If the indices are out of range.
    """
    if N is not None and N != chain.N:
        chain = chain.truncated(N)
    _check_range("n", n, 1, chain.N)
    transition = chain.transitions[n - 1]
    phis = []
    for m in range(n, chain.N):
        at_n = _fsum_matvec(compose_transitions(chain, n, m), chain.f[m])
        phis.append((_fsum_matvec(transition, at_n), at_n))

    terms: list[FloatArray] = []
    for i, (f_now, f_next) in enumerate(phis):
        terms.append(
            _gamma(
                transition, f_now, f_next, f_now, f_next,
                GammaMethod.ALGEBRAIC,
            )
        )
        for g_now, g_next in phis[i + 1 :]:
            cross = _gamma(
                transition, f_now, f_next, g_now, g_next,
                GammaMethod.ALGEBRAIC,
            )
            terms.append(2.0 * cross)
    if not terms:
        return np.zeros(chain.n_states)
    stacked = np.stack(terms)
    return np.array([
        math.fsum(stacked[:, x]) for x in range(chain.n_states)
    ])


def qv_discrete_bruteforce(
    chain: ChainModel,
    n: int,
    N: int | None = None,  # noqa: N803
) -> FloatArray:
    """Return ``E[(ΔM_n)² | X_{n−1} = x]`` by summing over one-step outcomes.

    :raise IndexOrderError: If the indices are out of range.
    """
    if N is not None and N != chain.N:
        chain = chain.truncated(N)
    _check_range("n", n, 1, chain.N)
    r = _r_series(chain)[n]
    transition = chain.transitions[n - 1]
    return np.array([
        math.fsum(transition[x] * (r - math.fsum(transition[x] * r)) ** 2)
        for x in range(chain.n_states)
    ])


# =============================================================================
# ENUMERATION
# =============================================================================


def iter_paths(
    chain: ChainModel,
    mu0: ArrayLike | None = None,
) -> Sequence[ChainPath]:
    """Return every path of positive probability.

    :raise StateSpaceTooLargeError: If ``n_states**N`` exceeds the limit.
    """
    if chain.n_states**chain.N > ENUMERATION_LIMIT:
        _err_msg: str = (
            f"Enumerating {chain.n_states}**{chain.N} paths exceeds the "
            f"limit of {ENUMERATION_LIMIT}."
        )
        raise StateSpaceTooLargeError(message=_err_msg)
    weights = chain.mu0 if mu0 is None else np.asarray(mu0, np.float64)
    paths: list[ChainPath] = []

    def extend(states: list[int], probability: float) -> None:
        if len(states) == chain.N + 1:
            paths.append(ChainPath(states=states, probability=probability))
            return
        row = chain.transitions[len(states) - 1, states[-1]]
        for y in range(chain.n_states):
            if row[y] > 0:
                extend([*states, y], probability * row[y])

    for x in range(chain.n_states):
        if weights[x] > 0:
            extend([x], float(weights[x]))
    _logger.debug("Enumerated %d paths.", len(paths))
    return paths


def enumerate_expectation(
    chain: ChainModel,
    functional: Callable[[ChainPath], float],
    mu0: ArrayLike | None = None,
) -> float:
    """Return ``E[functional(path)]`` by summing over all paths.

    :param chain: The chain.
    :param functional: A function of a path.
    :param mu0: An initial distribution overriding the chain's own.

    :raise StateSpaceTooLargeError: If ``n_states**N`` exceeds the limit.
    """
    return math.fsum(
        functional(path) * path.probability
        for path in iter_paths(chain, mu0)
    )


def load_chain(path: str | Path) -> ChainModel:
    """Read a chain document from a JSON file.

    :raise FileNotFoundError: If the file does not exist.
    :raise InvalidChainError: If the document is not a valid chain.
    """
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exp:
        _err_msg: str = f"'{path}' is not valid JSON: {exp}."
        raise InvalidChainError(message=_err_msg) from exp
    if not isinstance(document, Mapping):
        _err_msg: str = f"'{path}' does not contain a JSON object."
        raise InvalidChainError(message=_err_msg)
    return ChainModel.from_mapping(document)
