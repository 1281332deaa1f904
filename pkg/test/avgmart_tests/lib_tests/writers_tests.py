# ruff: noqa: D100, D102
from __future__ import annotations

import csv
import enum
import json
import math
import tempfile
from pathlib import Path
from unittest import TestCase

import numpy as np
import pytest

from avgmart.lib.experiments import ExperimentOutcome, ResultTable
from avgmart.lib.writers import (
    MANIFEST_FILE_NAME,
    DirectoryResultWriter,
    NoOpResultWriter,
    OutputError,
    file_digest,
    format_value,
    write_manifest,
    write_outputs,
)


class _Color(enum.Enum):
    RED = "red"


def _outcome() -> ExperimentOutcome:
    return ExperimentOutcome(
        passed=True,
        tables={
            "b_table": ResultTable(
                columns=("quantity", "value", "check"),
                rows=[("x, y", 0.1, True), ("z", math.nan, False)],
            ),
            "a_table": ResultTable(columns=("n",), rows=[(1,), (2,)]),
        },
        series={"path": ((0.0, 1.0), (0.5, 0.25))},
    )


class TestFormatValue(TestCase):
    """Tests for the :func:`format_value` function."""

    def test_floats_read_back_exactly(self) -> None:
        for value in (0.1, 1 / 3, 2.5e-300, -7.0, np.float64(math.pi)):
            assert float(format_value(value)) == value

    def test_other_values(self) -> None:
        assert format_value(None) == ""
        assert format_value(True) == "pass"
        assert format_value(np.bool_(False)) == "fail"
        assert format_value(np.int64(3)) == "3"
        assert format_value(math.nan) == "nan"
        assert format_value(_Color.RED) == "red"
        assert format_value("slope") == "slope"


class TestWriteOutputs(TestCase):
    """Tests for the :func:`write_outputs` function."""

    def setUp(self) -> None:
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self._directory: Path = Path(self._tmp.name) / "out"

    def test_files_and_order(self) -> None:
        written = write_outputs(_outcome(), self._directory)

        assert [path.name for path in written] == [
            "a_table.csv",
            "b_table.csv",
            "path.dat",
        ]

    def test_csv_content(self) -> None:
        write_outputs(_outcome(), self._directory)

        raw = (self._directory / "b_table.csv").read_bytes()
        assert raw.endswith(b"\r\n")
        with (self._directory / "b_table.csv").open(newline="") as stream:
            rows = list(csv.reader(stream))
        assert rows == [
            ["quantity", "value", "check"],
            ["x, y", "0.10000000000000001", "pass"],
            ["z", "nan", "fail"],
        ]

    def test_series_content(self) -> None:
        write_outputs(_outcome(), self._directory)

        lines = (self._directory / "path.dat").read_text().splitlines()
        assert lines == ["# path", "0 1", "0.5 0.25"]

    def test_repeated_writes_are_identical(self) -> None:
        first = [
            file_digest(p) for p in write_outputs(_outcome(), self._directory)
        ]
        second = [
            file_digest(p) for p in write_outputs(_outcome(), self._directory)
        ]

        assert first == second

    def test_unwritable_directory(self) -> None:
        blocker = Path(self._tmp.name) / "file"
        blocker.write_text("")

        with pytest.raises(OutputError) as exc_info:
            write_outputs(_outcome(), blocker / "out")
        assert exc_info.value.path == blocker / "out"


class TestWriteManifest(TestCase):
    """Tests for the :func:`write_manifest` function."""

    def test_sorted_json(self) -> None:
        with tempfile.TemporaryDirectory() as directory:
            path = write_manifest({"b": 1, "a": [1, 2]}, Path(directory))

            assert path.name == MANIFEST_FILE_NAME
            text = path.read_text()
        assert json.loads(text) == {"a": [1, 2], "b": 1}
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("}\n")


class TestResultWriters(TestCase):
    """Tests for the :class:`ResultWriter` implementations."""

    def test_directory_writer(self) -> None:
        with tempfile.TemporaryDirectory() as directory:
            writer = DirectoryResultWriter.of(directory)

            written = writer.write(_outcome())

            assert writer.directory == Path(directory)
            assert len(written) == 3
            assert all(path.is_file() for path in written)

    def test_noop_writer(self) -> None:
        with tempfile.TemporaryDirectory() as directory:
            written = NoOpResultWriter.of(directory).write(_outcome())

            assert tuple(written) == ()
            assert not any(Path(directory).iterdir())
