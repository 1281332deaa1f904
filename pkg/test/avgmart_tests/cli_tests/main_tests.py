# ruff: noqa: D100, D102
from __future__ import annotations

import json
import tempfile
from pathlib import Path
from typing import Any
from unittest import TestCase

from click.testing import CliRunner

from avgmart import app
from avgmart.app import setup
from avgmart.cli import constants
from avgmart.cli.__main__ import main
from avgmart.lib.writers import MANIFEST_FILE_NAME


class TestMain(TestCase):
    """Tests for the ``avgmart`` command."""

    def setUp(self) -> None:
        super().setUp()
        self.addCleanup(setup, app.conf)
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self._directory: Path = Path(self._tmp.name)
        self._runner: CliRunner = CliRunner()

    def _write(self, document: Any) -> str:  # noqa: ANN401
        path = self._directory / "config.json"
        path.write_text(json.dumps(document), encoding="utf-8")
        return str(path)

    def _invoke(self, *args: str) -> Any:  # noqa: ANN401
        out_dir = str(self._directory / "out")
        return self._runner.invoke(main, [*args, "-q", "-o", out_dir])

    def test_success(self) -> None:
        path = self._write({
            "kind": "report",
            "master_seed": 1,
            "model": {"type": "two_timescale", "alpha": 5.0},
        })

        result = self._invoke("-c", path)

        assert result.exit_code == constants.EXIT_SUCCESS, result.output
        manifest = json.loads(
            (self._directory / "out" / MANIFEST_FILE_NAME).read_text()
        )
        assert manifest["kind"] == "report"
        assert manifest["passed"] is True

    def test_kind_and_seed_overrides(self) -> None:
        path = self._write({"kind": "simulate", "master_seed": 1})

        result = self._invoke("report", "-c", path, "-s", "99")

        assert result.exit_code == constants.EXIT_SUCCESS, result.output
        manifest = json.loads(
            (self._directory / "out" / MANIFEST_FILE_NAME).read_text()
        )
        assert manifest["kind"] == "report"
        assert manifest["master_seed"] == 99

    def test_failed_check(self) -> None:
        path = self._write({
            "kind": "concentration",
            "master_seed": 1,
            "dt": 0.01,
            "n_paths": 200,
            "settings": {"bound": {"C": 1e-3, "lam": 1.0}, "R_grid": [0.05]},
        })

        result = self._invoke("-c", path)

        assert result.exit_code == constants.EXIT_CHECK_FAILED, result.output
        manifest = json.loads(
            (self._directory / "out" / MANIFEST_FILE_NAME).read_text()
        )
        assert manifest["passed"] is False
        assert manifest["failed_checks"] == ["tail: 0.050000000000000003"]

    def test_configuration_errors(self) -> None:
        documents: list[Any] = [
            {"kind": "simulate"},
            {"kind": "heston", "master_seed": 1},
            {"kind": "simulate", "master_seed": 1, "dt": -1.0},
        ]
        for document in documents:
            result = self._invoke("-c", self._write(document))

            assert result.exit_code == constants.EXIT_CONFIGURATION_ERROR

    def test_missing_config_file(self) -> None:
        result = self._invoke("-c", str(self._directory / "missing.json"))

        assert result.exit_code == 2

    def test_runtime_error(self) -> None:
        path = self._write({
            "kind": "chain",
            "master_seed": 1,
            "settings": {"chain": "missing-chain.json"},
        })

        result = self._invoke("-c", path)

        assert result.exit_code == constants.EXIT_RUNTIME_ERROR

    def test_version(self) -> None:
        result = self._runner.invoke(main, ["--version"])

        assert result.exit_code == 0
        assert result.output.strip()
