"""Application use cases."""

from __future__ import annotations

import logging
from datetime import UTC, datetime
from pathlib import Path
from typing import TYPE_CHECKING, Any

from attrs import field, frozen

from avgmart.lib.writers import file_digest, format_value, write_manifest

from ._utils import tool_version

if TYPE_CHECKING:
    from avgmart.core import Experiment, ExperimentResult, ResultWriter
    from avgmart.lib import ExperimentConfig

_logger = logging.getLogger(__name__)


@frozen
class OutputFile:
    """An emitted file and the SHA-256 digest of its content."""

    path: str
    sha256: str


@frozen
class RunManifest:
    """A record of one experiment run.

    Digests are computed from the files as written, so two runs of the same
    configuration with the same tool version list the same digests.
    """

    kind: str
    config_digest: str
    tool_version: str
    master_seed: int
    started_at: str
    finished_at: str
    passed: bool
    files: tuple[OutputFile, ...] = field(converter=tuple)
    failures: tuple[str, ...] = field(converter=tuple, default=())

    def to_mapping(self) -> dict[str, Any]:
        """Return the JSON representation of this manifest."""
        return {
            "kind": self.kind,
            "config_sha256": self.config_digest,
            "tool_version": self.tool_version,
            "master_seed": self.master_seed,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "passed": self.passed,
            "files": [
                {"path": file.path, "sha256": file.sha256}
                for file in self.files
            ],
            "failed_checks": list(self.failures),
        }


def _now() -> str:
    return datetime.now(tz=UTC).isoformat(timespec="seconds")


def run(config: ExperimentConfig) -> ExperimentResult:
    """Create the experiment of ``config.kind`` and run it.

    Uses the :attr:`~avgmart.app.Config.experiment_factories` of the active
    :attr:`config<avgmart.app.conf>`.
    """
    from avgmart import app

    experiment: Experiment = app.conf.experiment(config.kind)(config)
    _logger.info("Running a '%s' experiment.", experiment.kind)
    return experiment.run()


def dispatch(config: ExperimentConfig) -> RunManifest:
    """Run an experiment, write its outputs and its manifest.

    The outputs are written by the
    :attr:`~avgmart.app.Config.result_writer_factory` of the active
    :attr:`config<avgmart.app.conf>`; the manifest goes to
    ``manifest.json`` in the output directory.

    :return: The manifest of the run.

    :raise OutputError: If an output cannot be written.
    """
    from avgmart import app

    started_at = _now()
    result = run(config)
    writer: ResultWriter = app.conf.result_writer_factory(config.out_dir)
    paths = writer.write(result)
    manifest = RunManifest(
        kind=config.kind,
        config_digest=config.digest,
        tool_version=tool_version(),
        master_seed=config.master_seed,
        started_at=started_at,
        finished_at=_now(),
        passed=result.passed,
        files=[
            OutputFile(
                path=_relative(path, config.out_dir),
                sha256=file_digest(path),
            )
            for path in paths
        ],
        failures=_failures(result),
    )
    write_manifest(manifest.to_mapping(), config.out_dir)
    return manifest


def _failures(result: ExperimentResult) -> list[str]:
    """Name the table rows that hold a failing verdict."""
    return [
        f"{name}: {format_value(row[0])}"
        for name, table in sorted(result.tables.items())
        for row in table.rows
        if any(format_value(value) == "fail" for value in row)
    ]


def _relative(path: Path, directory: Path) -> str:
    try:
        return Path(path).relative_to(directory).as_posix()
    except ValueError:
        return Path(path).as_posix()
