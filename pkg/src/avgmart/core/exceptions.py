"""Base exceptions for the project."""


class AvgMartError(Exception):
    """Base exception for most non-builtin errors raised by this library."""

    def __init__(self, message: str | None = None, *args):
        """Initialize an ``AvgMartError`` with the given parameters.

        :param message: An optional error message.
        :param args: Optional args to forward to the base exception.
        """
        self._message: str | None = message
        super().__init__(self._message or "", *args)

    @property
    def message(self) -> str | None:
        """The error message associated with this exception if available.

        Return the error message passed to this exception at initialization
        or ``None`` if one was not given.

        :return: The error message passed to this exception at initialization
            or ``None`` if one wasn't given.
        """
        return self._message


class NonpositiveParameterError(AvgMartError, ValueError):
    """A model or formula parameter lies outside of its admissible range."""

    def __init__(self, parameter: str, value: float) -> None:
        """Initialize a ``NonpositiveParameterError``.

        :param parameter: The name of the offending parameter.
        :param value: The rejected value.
        """
        super().__init__(
            message=f"Parameter '{parameter}' is out of range: {value!r}."
        )
        self._parameter: str = parameter
        self._value: float = value

    @property
    def parameter(self) -> str:
        """The name of the offending parameter."""
        return self._parameter

    @property
    def value(self) -> float:
        """The rejected value."""
        return self._value


class ShapeMismatchError(AvgMartError, ValueError):
    """Array shapes do not agree with the declared dimensions."""


class NonpositiveHorizonError(AvgMartError, ValueError):
    """A time horizon that must be strictly positive was not."""


class EmptyEnsembleError(AvgMartError, ValueError):
    """An operation that needs at least one sample path got none."""


class TimeOrderError(AvgMartError, ValueError):
    """Two times were given in the wrong order (e.g. ``t < s``)."""
