"""Experiment configuration files.

A configuration is a JSON object::

    {
        "kind": "averaging",
        "master_seed": 20240229,
        "t0": 0.0, "T": 1.0, "dt": 0.001, "n_paths": 10000,
        "out_dir": "avgmart-out",
        "model": {"type": "two_timescale", "alpha": 1.0, ...},
        "observable": {"w": [0.0, 1.0], "c": 0.0},
        "settings": {...},
        "tolerances": {"se_multiplier": 3.0, ...}
    }

Only ``kind`` and ``master_seed`` are mandatory. Relative paths in
``settings`` are resolved against the directory of the configuration file.
"""
from __future__ import annotations

import hashlib
import json
import math
from collections.abc import Collection, Mapping
from pathlib import Path
from typing import Any, Final

import attrs

from avgmart.core import AvgMartError
from avgmart.lib import BUILTIN_EXPERIMENTS, ExperimentConfig, Tolerances
from avgmart.lib.experiments import (
    InvalidModelSpecError,
    build_model,
    build_observable,
    two_timescale_params,
)

# =============================================================================
# CONSTANTS
# =============================================================================


KNOWN_KEYS: Final[frozenset[str]] = frozenset({
    "kind",
    "master_seed",
    "t0",
    "T",
    "dt",
    "n_paths",
    "out_dir",
    "model",
    "observable",
    "settings",
    "tolerances",
})

OVERRIDABLE_KEYS: Final[frozenset[str]] = frozenset({
    "kind",
    "master_seed",
    "dt",
    "n_paths",
    "out_dir",
})

_SEED_LIMIT: Final[int] = 2**64

_LINEAR_MODEL_KINDS: Final[frozenset[str]] = frozenset({
    "concentration",
    "decompose",
    "simulate",
})

_TWO_TIMESCALE_KINDS: Final[frozenset[str]] = frozenset({
    "averaging",
    "report",
})


# =============================================================================
# EXCEPTIONS
# =============================================================================


class SchemaError(AvgMartError, ValueError):
    """A configuration value is missing or invalid."""

    def __init__(self, key: str, reason: str) -> None:
        """Initialize a ``SchemaError``.

        :param key: The offending key.
        :param reason: What is wrong with it.
        """
        super().__init__(
            message=f"Invalid configuration key '{key}': {reason}."
        )
        self._key: str = key
        self._reason: str = reason

    @property
    def key(self) -> str:
        """The offending key."""
        return self._key

    @property
    def reason(self) -> str:
        """What is wrong with the key."""
        return self._reason


class UnknownKindError(AvgMartError, LookupError):
    """The configuration names an experiment kind that is not available."""

    def __init__(self, kind: str) -> None:
        """Initialize an ``UnknownKindError``.

        :param kind: The requested kind.
        """
        super().__init__(message=f"Unknown experiment kind '{kind}'.")
        self._kind: str = kind

    @property
    def kind(self) -> str:
        """The requested kind."""
        return self._kind


# =============================================================================
# HELPERS
# =============================================================================


def _is_number(value: object) -> bool:
    return (
        isinstance(value, int | float)
        and not isinstance(value, bool)
        and math.isfinite(value)
    )


def _number(document: Mapping[str, Any], key: str, default: float) -> float:
    value = document.get(key, default)
    if not _is_number(value):
        raise SchemaError(key=key, reason="must be a finite number")
    return float(value)


def _integer(
    document: Mapping[str, Any],
    key: str,
    low: int,
    high: int | None = None,
) -> int:
    value = document[key]
    if not isinstance(value, int) or isinstance(value, bool):
        raise SchemaError(key=key, reason="must be an integer")
    if value < low or (high is not None and value >= high):
        raise SchemaError(key=key, reason="out of range")
    return value


def _object(
    document: Mapping[str, Any],
    key: str,
) -> Mapping[str, Any] | None:
    value = document.get(key)
    if value is not None and not isinstance(value, Mapping):
        raise SchemaError(key=key, reason="must be a JSON object")
    return value


def _tolerances(spec: Mapping[str, Any] | None) -> Tolerances:
    if spec is None:
        return Tolerances()
    known = {field.name for field in attrs.fields(Tolerances)}
    for key, value in spec.items():
        if key not in known:
            raise SchemaError(key=f"tolerances.{key}", reason="unknown key")
        if not (_is_number(value) and value > 0):
            raise SchemaError(
                key=f"tolerances.{key}", reason="must be a positive number"
            )
    return Tolerances(**spec)


def _reason(exp: Exception) -> str:
    message = exp.message if isinstance(exp, AvgMartError) else None
    return (message or str(exp)).rstrip(".")


def _check_model(
    kind: str,
    model: Mapping[str, Any],
    observable: Mapping[str, Any] | None,
    settings: Mapping[str, Any],
) -> None:
    dim = 2
    if kind in _LINEAR_MODEL_KINDS:
        try:
            dim = build_model(model).dim
        except InvalidModelSpecError as exp:
            raise SchemaError(key="model", reason=_reason(exp)) from exp
    elif kind in _TWO_TIMESCALE_KINDS:
        try:
            two_timescale_params(model)
        except (TypeError, ValueError) as exp:
            raise SchemaError(key="model", reason=_reason(exp)) from exp
    elif kind == "chain" and "chain" not in settings:
        raise SchemaError(key="settings.chain", reason="required")
    if observable is not None and kind in {*_LINEAR_MODEL_KINDS, "averaging"}:
        try:
            build_observable(observable, dim)
        except InvalidModelSpecError as exp:
            raise SchemaError(key="observable", reason=_reason(exp)) from exp


def _read_document(path: Path) -> tuple[Mapping[str, Any], str]:
    content = path.read_bytes()
    try:
        document = json.loads(content)
    except (json.JSONDecodeError, UnicodeDecodeError) as exp:
        _err_msg: str = f"invalid JSON ({exp})"
        raise SchemaError(key="<document>", reason=_err_msg) from exp
    if not isinstance(document, Mapping):
        raise SchemaError(key="<document>", reason="must be a JSON object")
    return document, hashlib.sha256(content).hexdigest()


# =============================================================================
# PARSING
# =============================================================================


def parse_config(
    path: Path | str,
    overrides: Mapping[str, Any] | None = None,
    kinds: Collection[str] | None = None,
) -> ExperimentConfig:
    """Read and validate an experiment configuration file.

    :param path: The configuration file.
    :param overrides: Values taking precedence over the file (``kind``,
        ``master_seed``, ``dt``, ``n_paths``, ``out_dir``); ``None`` values
        are ignored.
    :param kinds: The recognized experiment kinds; defaults to the built-in
        kinds.

    :return: The validated configuration with defaults filled in.

    :raise FileNotFoundError: If the file does not exist.
    :raise SchemaError: Naming the first offending key.
    :raise UnknownKindError: If the kind is not recognized.
    """
    path = Path(path)
    document, digest = _read_document(path)
    for key in document:
        if key not in KNOWN_KEYS:
            raise SchemaError(key=key, reason="unknown key")
    merged: dict[str, Any] = dict(document)
    for key, value in (overrides or {}).items():
        if key not in OVERRIDABLE_KEYS:
            raise SchemaError(key=key, reason="cannot be overridden")
        if value is not None:
            merged[key] = value

    kind = merged.get("kind")
    if kind is None:
        raise SchemaError(key="kind", reason="required")
    if not isinstance(kind, str):
        raise SchemaError(key="kind", reason="must be a string")
    if kind not in (BUILTIN_EXPERIMENTS if kinds is None else kinds):
        raise UnknownKindError(kind=kind)
    if "master_seed" not in merged:
        raise SchemaError(key="master_seed", reason="required")
    master_seed = _integer(merged, "master_seed", 0, _SEED_LIMIT)

    t0 = _number(merged, "t0", 0.0)
    horizon = _number(merged, "T", 1.0)
    if horizon <= t0:
        raise SchemaError(key="T", reason="must exceed t0")
    dt = _number(merged, "dt", 1e-3)
    if dt <= 0 or dt > horizon - t0:
        raise SchemaError(key="dt", reason="must lie in (0, T - t0]")
    n_paths = _integer(merged, "n_paths", 1) if "n_paths" in merged else 10**4
    out_dir = merged.get("out_dir", "avgmart-out")
    if not isinstance(out_dir, str | Path):
        raise SchemaError(key="out_dir", reason="must be a path")

    model = _object(merged, "model") or {}
    observable = _object(merged, "observable")
    settings = _object(merged, "settings") or {}
    _check_model(kind, model, observable, settings)

    return ExperimentConfig(
        kind=kind,
        master_seed=master_seed,
        t0=t0,
        T=horizon,
        dt=dt,
        n_paths=n_paths,
        out_dir=Path(out_dir),
        model=model,
        observable=observable,
        settings=settings,
        tolerances=_tolerances(_object(merged, "tolerances")),
        base_dir=path.resolve().parent,
        digest=digest,
    )
