"""Conversion between domain values and JSON-friendly structures.

The dispatch boundary (in-process and remote alike) carries only JSON
values. Outgoing results are flattened with `to_wire`; incoming parameters
are rebuilt against the target callable's type annotations with
`decode_params`, so a request may say ``{"p": {"x": 1, "y": 2, "z": 3}}``
where the method wants a Position3. Values that already have the right
type pass through untouched.
"""

from __future__ import annotations

import dataclasses
import enum
import inspect
import math
import typing

import numpy as np


def to_wire(value):
    """JSON-safe representation: dataclasses to dicts, arrays to lists,
    enums to values, non-finite floats to None."""
    if value is None or isinstance(value, (bool, str)):
        return value
    if isinstance(value, enum.Enum):
        return to_wire(value.value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: to_wire(getattr(value, f.name))
                for f in dataclasses.fields(value)}
    if isinstance(value, np.ndarray):
        return [to_wire(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {str(k): to_wire(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        return [to_wire(v) for v in value]
    raise TypeError(f"value of type {type(value).__name__} cannot cross the wire")


def _decode(annotation, value):
    if value is None:
        return None
    origin = typing.get_origin(annotation)
    if origin is typing.Union:  # includes Optional[X]
        for arg in typing.get_args(annotation):
            if arg is type(None):
                continue
            try:
                return _decode(arg, value)
            except (TypeError, ValueError, KeyError):
                continue
        return value
    if origin is None and isinstance(annotation, type) \
            and isinstance(value, annotation) \
            and not isinstance(value, (list, tuple, dict)):
        return value
    if dataclasses.is_dataclass(annotation):
        if isinstance(value, annotation):
            return value
        if not isinstance(value, dict):
            raise TypeError(f"expected object for {annotation.__name__}")
        hints = typing.get_type_hints(annotation)
        kwargs = {}
        for f in dataclasses.fields(annotation):
            if f.name in value:
                kwargs[f.name] = _decode(hints[f.name], value[f.name])
        return annotation(**kwargs)
    if origin is tuple:
        args = typing.get_args(annotation)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_decode(args[0], v) for v in value)
        return tuple(_decode(a, v) for a, v in zip(args, value))
    if origin is list:
        (arg,) = typing.get_args(annotation) or (None,)
        return [_decode(arg, v) if arg else v for v in value]
    if annotation is float and isinstance(value, (int, float)):
        return float(value)
    if annotation is int and isinstance(value, (int, float)) and float(value).is_integer():
        return int(value)
    return value


def decode_value(annotation, value):
    """Rebuild one wire value against a type annotation (used by remote
    proxies on return values)."""
    return _decode(annotation, value)


def decode_params(func, params: dict) -> dict:
    """Rebuild keyword arguments for ``func`` from wire values.

    Parameters without a usable annotation pass through unchanged; unknown
    parameter names raise TypeError, which dispatch reports as UNKNOWN_OP
    (the caller asked for a signature this operation does not have).
    """
    try:
        hints = typing.get_type_hints(func)
    except Exception:
        hints = {}
    sig = inspect.signature(func)
    decoded = {}
    for key, raw in params.items():
        if key not in sig.parameters:
            raise TypeError(f"unexpected argument '{key}'")
        annotation = hints.get(key)
        decoded[key] = _decode(annotation, raw) if annotation is not None else raw
    return decoded
