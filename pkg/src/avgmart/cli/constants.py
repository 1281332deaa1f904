"""CLI Constants."""

from __future__ import annotations

from typing import Final

APP_STDOUT_TOGGLE_CONFIG_KEY: Final[str] = "avgmart.cli.stdout.toggle"

APP_VERBOSITY_CONFIG_KEY: Final[str] = "avgmart.cli.verbosity"

DISTRIBUTION_NAME: Final[str] = "avgmart"

EXPERIMENTS_ENTRY_POINT_GROUP_NAME: Final[str] = "avgmart.cli.experiment"

VERBOSITY_ENV_VAR: Final[str] = "AVGMART_VERBOSITY"

EXIT_SUCCESS: Final[int] = 0

EXIT_CHECK_FAILED: Final[int] = 1

EXIT_CONFIGURATION_ERROR: Final[int] = 2

EXIT_RUNTIME_ERROR: Final[int] = 3
