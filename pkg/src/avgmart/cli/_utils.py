from __future__ import annotations

import logging
from typing import TYPE_CHECKING

from importlib_metadata import PackageNotFoundError, entry_points, version

from avgmart.lib import BUILTIN_EXPERIMENTS

from . import constants

if TYPE_CHECKING:
    from collections.abc import Iterable, Mapping


def list_available_entry_point_names(
    entrypoint_group_name: str,
) -> Iterable[str]:
    _entry_points = entry_points(group=entrypoint_group_name)
    return tuple(entry_point.name for entry_point in _entry_points)


def load_from_entrypoint[T](entrypoint_group_name: str) -> Mapping[str, T]:  # pyright: ignore
    _entry_points = entry_points(group=entrypoint_group_name)
    return {
        entry_point.name: entry_point.load() for entry_point in _entry_points
    }


def list_experiment_kinds() -> tuple[str, ...]:
    """Return the built-in experiment kinds followed by installed ones."""
    installed = list_available_entry_point_names(
        constants.EXPERIMENTS_ENTRY_POINT_GROUP_NAME
    )
    return tuple(dict.fromkeys((*BUILTIN_EXPERIMENTS, *installed)))


def tool_version() -> str:
    """Return the installed version of this tool."""
    try:
        return version(constants.DISTRIBUTION_NAME)
    except PackageNotFoundError:
        return "0+unknown"


def log_level(verbosity: int) -> int:
    """Map a ``-v`` count to a logging level."""
    match verbosity:
        case 0:
            return logging.WARNING
        case 1:
            return logging.INFO
        case _:
            return logging.DEBUG
