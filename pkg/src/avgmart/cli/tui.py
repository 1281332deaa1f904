# ruff: noqa: D100, D103
from __future__ import annotations

import sys
import traceback
from collections.abc import Sequence

import click

from avgmart import app
from avgmart.cli import constants


def _stdout_enabled() -> bool:
    return app.conf.get_or_default(
        setting=constants.APP_STDOUT_TOGGLE_CONFIG_KEY,
        default=True,
    )


def _verbosity() -> int:
    return app.conf.get_or_default(
        setting=constants.APP_VERBOSITY_CONFIG_KEY,
        default=0,
    )


def print_debug(message: str, nl: bool = True) -> None:
    if _stdout_enabled() and _verbosity() > 0:
        click.secho(message, dim=True, fg="yellow", italic=True, nl=nl)


def print_info(message: str) -> None:
    if _stdout_enabled():
        click.secho(message, fg="bright_blue")


def print_error(error_message: str, exception: BaseException | None) -> None:
    click.secho(error_message, fg="red", bold=True, file=sys.stderr)
    if exception is None:
        return
    match _verbosity():
        case 0:
            pass
        case 1:
            click.secho(
                "".join(traceback.format_exception(exception, chain=False)),
                fg="magenta",
                file=sys.stderr,
            )
        case _:
            click.secho(
                "".join(traceback.format_exception(exception, chain=True)),
                fg="magenta",
                file=sys.stderr,
            )


def print_failures(failures: Sequence[str]) -> None:
    click.secho(
        f"{len(failures)} check(s) failed:",
        fg="red",
        bold=True,
        file=sys.stderr,
    )
    for failure in failures:
        click.secho(f"  ✗ {failure}", fg="red", file=sys.stderr)


def print_success(message: str) -> None:
    if _stdout_enabled():
        click.secho(message, fg="green")
