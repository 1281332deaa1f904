"""Persistence of experiment results.

Tables are written as RFC 4180 CSV files with a header row, series as
whitespace separated two-column files readable by gnuplot. Floating point
numbers are written with 17 significant digits so that they read back to
the same double.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import json
import logging
import math
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any, Final, Self, override

import numpy as np
from attrs import field, frozen

from avgmart.core import AvgMartError, ExperimentResult, ResultWriter

# =============================================================================
# CONSTANTS
# =============================================================================


FLOAT_FORMAT: Final[str] = ".17g"

MANIFEST_FILE_NAME: Final[str] = "manifest.json"

_logger = logging.getLogger(__name__)


# =============================================================================
# EXCEPTIONS
# =============================================================================


class OutputError(AvgMartError, OSError):
    """An output file or directory could not be written."""

    def __init__(self, path: Path | str, message: str | None = None) -> None:
        """Initialize an ``OutputError``.

        :param path: The path that could not be written.
        :param message: An optional error message.
        """
        _message: str = message or f"Cannot write to '{path}'."
        AvgMartError.__init__(self, message=_message)
        self._path: Path = Path(path)

    @property
    def path(self) -> Path:
        """The path that could not be written."""
        return self._path


# =============================================================================
# HELPERS
# =============================================================================


def format_value(value: Any) -> str:  # noqa: ANN401
    """Render a table cell.

    Floats use 17 significant digits, booleans become ``pass``/``fail``,
    enum members their value and ``None`` the empty string.
    """
    match value:
        case None:
            return ""
        case bool() | np.bool_():
            return "pass" if value else "fail"
        case enum.Enum():
            return str(value.value)
        case int() | np.integer():
            return str(int(value))
        case float() | np.floating():
            number = float(value)
            if math.isnan(number):
                return "nan"
            return format(number, FLOAT_FORMAT)
        case _:
            return str(value)


def file_digest(path: Path) -> str:
    """Return the SHA-256 hex digest of a file's content."""
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _prepare(directory: Path) -> None:
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exp:
        raise OutputError(path=directory, message=str(exp)) from exp


def write_outputs(result: ExperimentResult, directory: Path) -> list[Path]:
    """Write the tables and series of ``result`` into ``directory``.

    Tables go to ``<name>.csv`` and series to ``<name>.dat``, both in
    sorted name order.

    :return: The written files, in the order written.

    :raise OutputError: If the directory or a file cannot be written.
    """
    _prepare(directory)
    written: list[Path] = []
    for name in sorted(result.tables):
        table = result.tables[name]
        path = directory / f"{name}.csv"
        try:
            with path.open("w", encoding="utf-8", newline="") as stream:
                writer = csv.writer(stream, lineterminator="\r\n")
                writer.writerow(table.columns)
                writer.writerows(
                    [format_value(v) for v in row] for row in table.rows
                )
        except OSError as exp:
            raise OutputError(path=path, message=str(exp)) from exp
        written.append(path)
    for name in sorted(result.series):
        path = directory / f"{name}.dat"
        lines = [f"# {name}\n"] + [
            f"{format_value(float(x))} {format_value(float(y))}\n"
            for x, y in result.series[name]
        ]
        try:
            path.write_text("".join(lines), encoding="utf-8")
        except OSError as exp:
            raise OutputError(path=path, message=str(exp)) from exp
        written.append(path)
    _logger.debug("Wrote %d file(s) to '%s'.", len(written), directory)
    return written


def write_manifest(manifest: Mapping[str, Any], directory: Path) -> Path:
    """Write a manifest as sorted, indented JSON.

    :raise OutputError: If the file cannot be written.
    """
    _prepare(directory)
    path = directory / MANIFEST_FILE_NAME
    try:
        path.write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    except OSError as exp:
        raise OutputError(path=path, message=str(exp)) from exp
    return path


# =============================================================================
# WRITERS
# =============================================================================


@frozen
class DirectoryResultWriter(ResultWriter):
    """:class:`ResultWriter` that persists results into a directory."""

    _directory: Path = field(alias="directory", converter=Path)

    @property
    def directory(self) -> Path:
        """The output directory."""
        return self._directory

    @override
    def write(self, result: ExperimentResult) -> Sequence[Path]:
        return write_outputs(result, self._directory)

    @classmethod
    def of(cls, directory: Path | str) -> Self:
        """Create a writer for the given output directory."""
        return cls(directory=directory)


@frozen
class NoOpResultWriter(ResultWriter):
    """:class:`ResultWriter` that discards all the results it receives."""

    @override
    def write(self, result: ExperimentResult) -> Sequence[Path]:
        return ()

    @classmethod
    def of(cls, directory: Path | str) -> Self:
        """Create and return an instance of this class.

        :param directory: Ignored.
        """
        return cls()
