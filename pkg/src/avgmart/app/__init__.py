"""Process wide application state.

:attr:`conf` holds the :class:`Config` the command line front end runs
with: the registered experiment kinds, the result writer and a handful of
terminal settings. Treat it as read only; :func:`setup` replaces it once,
before any experiment is dispatched. Until then every access raises
:exc:`NotSetupError`.
"""

from __future__ import annotations

from typing import Final

from ._config import (
    Config,
    ConfigurationError,
    NoSuchSettingError,
    NotSetupError,
    ResultWriterFactory,
)

conf: Final[Config] = Config.of_awaiting_setup()
"""The configuration in use."""


def setup(config: Config) -> None:
    """Install ``config`` as the application configuration."""
    global conf
    conf = config  # type: ignore


__all__ = [
    "Config",
    "ConfigurationError",
    "NoSuchSettingError",
    "NotSetupError",
    "ResultWriterFactory",
    "conf",
    "setup",
]
