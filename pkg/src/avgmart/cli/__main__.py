"""Application entry point."""
from __future__ import annotations

import logging
import sys
from collections.abc import Mapping
from typing import Any

import click

from avgmart.lib.experiments import ExperimentFactory

from . import constants
from ._utils import list_experiment_kinds, load_from_entrypoint, log_level

# =============================================================================
# HELPERS
# =============================================================================


def _set_up_app(quiet: bool, verbosity: int) -> None:
    try:
        from avgmart.app import Config, setup

        experiments: Mapping[str, ExperimentFactory] = load_from_entrypoint(
            entrypoint_group_name=constants.EXPERIMENTS_ENTRY_POINT_GROUP_NAME,
        )
        config: dict[str, Any] = {
            constants.APP_STDOUT_TOGGLE_CONFIG_KEY: not quiet,
            constants.APP_VERBOSITY_CONFIG_KEY: verbosity,
        }
        setup(Config.of(experiment_factories=experiments, config=config))
    except Exception as exp:  # noqa: BLE001
        _err_msg: str = (
            "Error setting up the application. The cause of the error was: "
            f"{exp!s}."
        )
        click.secho(_err_msg, fg="red", bold=True, file=sys.stderr)
        sys.exit(constants.EXIT_CONFIGURATION_ERROR)


def _set_up_logging(verbosity: int) -> None:
    logging.basicConfig(
        format="[%(levelname)8s] %(name)s - %(message)s",
        level=log_level(verbosity),
    )


# =============================================================================
# MAIN
# =============================================================================


@click.command(epilog="Every run is reproducible from its manifest.")
@click.argument(
    "kind",
    required=False,
    type=click.Choice(choices=list_experiment_kinds()),
)
@click.option(
    "-c",
    "--config",
    "config_path",
    help="The JSON experiment configuration file.",
    required=True,
    type=click.Path(
        allow_dash=False,
        dir_okay=False,
        exists=True,
        file_okay=True,
        readable=True,
        resolve_path=True,
    ),
)
@click.option(
    "-o",
    "--out",
    "out_dir",
    default=None,
    help="The output directory; overrides the configuration file.",
    type=click.Path(file_okay=False, writable=True),
)
@click.option(
    "-n",
    "--paths",
    "n_paths",
    default=None,
    help="The number of Monte Carlo paths; overrides the configuration.",
    type=click.IntRange(min=1),
)
@click.option(
    "--dt",
    default=None,
    help="The time step; overrides the configuration file.",
    type=click.FloatRange(min=0, min_open=True),
)
@click.option(
    "-s",
    "--seed",
    "master_seed",
    default=None,
    help="The master seed; overrides the configuration file.",
    type=click.IntRange(min=0, max=2**64 - 1),
)
@click.option(
    "-q",
    "--quiet",
    default=False,
    help="Disable status log messages produced by the app.",
    show_default=True,
    is_flag=True,
)
@click.option(
    "-v",
    "--verbose",
    "verbosity",
    count=True,
    default=0,
    envvar=constants.VERBOSITY_ENV_VAR,
    help=(
        "Set the level of output to expect from the program. Repeat to "
        "increase it; useful for displaying errors with stack traces."
    ),
)
@click.version_option(
    package_name=constants.DISTRIBUTION_NAME, message="%(version)s"
)
def main(
    kind: str | None,
    config_path: str,
    out_dir: str | None,
    n_paths: int | None,
    dt: float | None,
    master_seed: int | None,
    quiet: bool,
    verbosity: int,
) -> None:  # pragma: no cover
    """
    Run a martingale decomposition experiment described by a configuration
    file and write its tables, plot data and manifest.

    The exit status is 0 when every check passes, 1 when a check fails, 2 on
    usage or configuration errors and 3 on runtime errors.

    \f

    :return: None.
    """  # noqa: D205, D212, D301, D401
    _set_up_app(quiet=quiet, verbosity=verbosity)
    _set_up_logging(verbosity)

    from avgmart import app
    from avgmart.cli import tui, usecases
    from avgmart.cli.config import SchemaError, UnknownKindError, parse_config

    try:
        config = parse_config(
            config_path,
            overrides={
                "kind": kind,
                "out_dir": out_dir,
                "n_paths": n_paths,
                "dt": dt,
                "master_seed": master_seed,
            },
            kinds=app.conf.experiment_factories.keys(),
        )
    except (OSError, SchemaError, UnknownKindError) as exp:
        _err_msg: str = f"Invalid configuration '{config_path}': {exp!s}"
        tui.print_error(error_message=_err_msg, exception=exp)
        sys.exit(constants.EXIT_CONFIGURATION_ERROR)

    try:
        tui.print_info(f"Running the '{config.kind}' experiment ...")
        manifest = usecases.dispatch(config)
    except Exception as exp:  # noqa: BLE001
        _err_msg: str = (
            f"The '{config.kind}' experiment failed. The cause of the error "
            f"was: {exp!s}."
        )
        tui.print_error(error_message=_err_msg, exception=exp)
        sys.exit(constants.EXIT_RUNTIME_ERROR)

    tui.print_debug(f"Wrote {len(manifest.files)} file(s) to {config.out_dir}")
    if not manifest.passed:
        tui.print_failures(manifest.failures)
        sys.exit(constants.EXIT_CHECK_FAILED)
    tui.print_success(f"All '{config.kind}' checks passed.")


if __name__ == "__main__":  # pragma: no cover
    main()
