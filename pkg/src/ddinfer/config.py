"""Flat key/value configuration files.

One ``key = value`` assignment per line; ``#`` starts a comment; sections are
spelled with dotted keys (``schedule.beta0``), so a whole run configuration is
a single flat mapping that is easy to diff, echo into reports, and parse back.
Values stay strings until a consumer interprets them; numbers embedded by this
module use shortest round-trip decimals, so a formatted configuration parses
back to bit-identical values.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .datasets import format_float
from .harness import QuenchSchedule
from .truss import TrussModel

__all__ = [
    "parse_config",
    "parse_config_file",
    "format_config",
    "config_str",
    "config_float",
    "config_int",
    "truss_from_config",
    "truss_to_config",
    "schedule_from_config",
    "schedule_to_config",
]

_AXES = "xyz"


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines into an ordered flat mapping."""
    mapping = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {number}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"line {number}: empty key")
        if key in mapping:
            raise ValueError(f"line {number}: duplicate key {key!r}")
        mapping[key] = value.strip()
    return mapping


def parse_config_file(path) -> dict:
    return parse_config(Path(path).read_text())


def format_config(mapping: dict) -> str:
    lines = [f"{key} = {mapping[key]}" for key in sorted(mapping)]
    return "\n".join(lines) + "\n" if lines else ""


def config_str(mapping: dict, key: str, default: str = None) -> str:
    if key in mapping:
        return mapping[key]
    if default is None:
        raise ValueError(f"missing configuration key {key!r}")
    return default


def config_float(mapping: dict, key: str, default: float = None) -> float:
    if key not in mapping:
        if default is None:
            raise ValueError(f"missing configuration key {key!r}")
        return default
    try:
        return float(mapping[key])
    except ValueError:
        raise ValueError(f"configuration key {key!r} is not a number") from None


def config_int(mapping: dict, key: str, default: int = None) -> int:
    if key not in mapping:
        if default is None:
            raise ValueError(f"missing configuration key {key!r}")
        return default
    try:
        return int(mapping[key])
    except ValueError:
        raise ValueError(f"configuration key {key!r} is not an integer") from None


def _split_items(value: str) -> list:
    return [item.strip() for item in value.split(";") if item.strip()]


def _parse_floats(value: str, key: str) -> np.ndarray:
    try:
        return np.asarray([float(x) for x in value.split(",")], dtype=float)
    except ValueError:
        raise ValueError(f"configuration key {key!r} holds a malformed list") from None


def _parse_axis(token: str, key: str) -> int:
    token = token.strip()
    if token in _AXES:
        return _AXES.index(token)
    try:
        return int(token)
    except ValueError:
        raise ValueError(
            f"configuration key {key!r}: component {token!r} is not x, y, z, "
            "or an index"
        ) from None


def _format_axis(component: int) -> str:
    return _AXES[component] if 0 <= component < len(_AXES) else str(component)


def truss_from_config(mapping: dict, prefix: str = "truss.") -> TrussModel:
    """Assemble a truss from ``nodes``, ``bars``, ``moduli`` and friends.

    ``nodes`` lists coordinate tuples separated by ``;``; ``bars`` lists
    ``i-j`` endpoint pairs; ``supports`` lists ``node:component`` entries and
    ``loads`` lists ``node:component:value``.  ``areas`` defaults to unit
    areas and ``strain_offsets`` to zero.
    """

    def key(name):
        return prefix + name

    nodes = np.asarray(
        [
            _parse_floats(item, key("nodes"))
            for item in _split_items(config_str(mapping, key("nodes")))
        ]
    )
    bars = []
    for item in _split_items(config_str(mapping, key("bars"))):
        ends = item.split("-")
        if len(ends) != 2:
            raise ValueError(f"configuration key {key('bars')!r}: bad bar {item!r}")
        bars.append((int(ends[0]), int(ends[1])))
    moduli = _parse_floats(config_str(mapping, key("moduli")), key("moduli"))
    members = len(bars)
    if key("areas") in mapping:
        areas = _parse_floats(mapping[key("areas")], key("areas"))
    else:
        areas = np.ones(members)
    supports = []
    for item in _split_items(config_str(mapping, key("supports"))):
        parts = item.split(":")
        if len(parts) != 2:
            raise ValueError(
                f"configuration key {key('supports')!r}: bad entry {item!r}"
            )
        supports.append((int(parts[0]), _parse_axis(parts[1], key("supports"))))
    loads = []
    for item in _split_items(config_str(mapping, key("loads"), "")):
        parts = item.split(":")
        if len(parts) != 3:
            raise ValueError(f"configuration key {key('loads')!r}: bad entry {item!r}")
        loads.append((int(parts[0]), _parse_axis(parts[1], key("loads")), float(parts[2])))
    if key("strain_offsets") in mapping:
        offsets = _parse_floats(mapping[key("strain_offsets")], key("strain_offsets"))
    else:
        offsets = np.zeros(members)
    return TrussModel(
        nodes=nodes,
        bars=tuple(bars),
        moduli=moduli,
        areas=areas,
        supports=tuple(supports),
        loads=tuple(loads),
        strain_offsets=offsets,
    )


def truss_to_config(truss: TrussModel, prefix: str = "truss.") -> dict:
    """Canonical flat representation; parses back to bit-identical arrays."""
    mapping = {
        prefix + "nodes": "; ".join(
            ",".join(format_float(v) for v in node) for node in truss.nodes
        ),
        prefix + "bars": "; ".join(f"{i}-{j}" for i, j in truss.bars),
        prefix + "moduli": ", ".join(format_float(v) for v in truss.moduli),
        prefix + "areas": ", ".join(format_float(v) for v in truss.areas),
        prefix + "supports": "; ".join(
            f"{node}:{_format_axis(comp)}" for node, comp in truss.supports
        ),
        prefix + "loads": "; ".join(
            f"{node}:{_format_axis(comp)}:{format_float(value)}"
            for node, comp, value in truss.loads
        ),
        prefix + "strain_offsets": ", ".join(
            format_float(v) for v in truss.strain_offsets
        ),
    }
    return mapping


def schedule_from_config(mapping: dict, prefix: str = "schedule.") -> QuenchSchedule:
    return QuenchSchedule.geometric(
        beta0=config_float(mapping, prefix + "beta0", 1.0),
        delta1=config_float(mapping, prefix + "delta1", 1.6),
        ratio=config_float(mapping, prefix + "ratio", 0.5),
        exponent=config_float(mapping, prefix + "exponent", 1.0),
        horizon=config_int(mapping, prefix + "horizon", 6),
    )


def schedule_to_config(schedule: QuenchSchedule, prefix: str = "schedule.") -> dict:
    deltas = np.asarray(schedule.deltas)
    betas = np.asarray(schedule.betas)
    ratio = float(deltas[1] / deltas[0]) if deltas.size > 1 else 0.5
    if deltas.size > 1 and betas[0] > 0:
        exponent = float(
            np.log(betas[1] / betas[0]) / np.log(deltas[0] / deltas[1])
        )
    else:
        exponent = 1.0
    return {
        prefix + "beta0": format_float(schedule.beta0),
        prefix + "delta1": format_float(deltas[0]),
        prefix + "ratio": format_float(ratio),
        prefix + "exponent": format_float(exponent),
        prefix + "horizon": str(schedule.horizon),
    }
