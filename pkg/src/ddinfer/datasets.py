"""CSV dataset files for empirical measures.

Layout: a header line then one row per atom.  Material-only files carry
``c,y_1..y_p``; paired files carry ``c,y_1..y_p,z_1..z_p``.  The ``c`` column
is the nonnegative atom weight.  Numbers are written as shortest round-trip
decimals, so writing and re-reading a file reproduces every value bit-exactly;
:class:`DatasetFile` keeps the columns verbatim to preserve that exactness,
and the measure view applies the log transform only on top of it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .measures import EmpiricalMeasure

__all__ = ["DatasetFile", "parse_dataset", "emit_dataset", "format_float"]


def format_float(value: float) -> str:
    """Shortest decimal that parses back to the identical double."""
    return repr(float(value))


def _header_names(dim: int, paired: bool) -> list:
    names = ["c"] + [f"y_{k}" for k in range(1, dim + 1)]
    if paired:
        names += [f"z_{k}" for k in range(1, dim + 1)]
    return names


@dataclass(frozen=True)
class DatasetFile:
    """Verbatim numeric content of a dataset file.

    ``weights`` holds the linear ``c`` column exactly as on disk; converting
    to an :class:`EmpiricalMeasure` takes logs, which is why the raw column is
    kept: the log transform does not round-trip bitwise through floats.
    """

    weights: np.ndarray
    points: np.ndarray
    pair_points: np.ndarray = None

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=float)
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "points", points)
        if self.pair_points is not None:
            pair = np.atleast_2d(np.asarray(self.pair_points, dtype=float))
            if pair.shape != points.shape:
                raise ValueError("paired blocks must have matching shapes")
            object.__setattr__(self, "pair_points", pair)
        if weights.ndim != 1 or weights.shape[0] != points.shape[0]:
            raise ValueError("one weight per row is required")
        if np.any(weights < 0.0) or np.any(np.isnan(weights)):
            raise ValueError("weights must be nonnegative")

    @property
    def paired(self) -> bool:
        return self.pair_points is not None

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @classmethod
    def from_measure(cls, measure: EmpiricalMeasure) -> "DatasetFile":
        weights = np.exp(measure.log_weights + measure.log_scale)
        return cls(
            weights=weights, points=measure.points, pair_points=measure.pair_points
        )

    def to_measure(self) -> EmpiricalMeasure:
        return EmpiricalMeasure.from_weights(
            self.points, self.weights, pair_points=self.pair_points
        )

    def to_text(self) -> str:
        lines = [",".join(_header_names(self.dim, self.paired))]
        blocks = (self.points, self.pair_points) if self.paired else (self.points,)
        for row in range(self.weights.shape[0]):
            fields = [format_float(self.weights[row])]
            for block in blocks:
                fields += [format_float(v) for v in block[row]]
            lines.append(",".join(fields))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "DatasetFile":
        lines = text.splitlines()
        if not lines or not lines[0].strip():
            raise ValueError("line 1: missing header")
        header = [name.strip() for name in lines[0].split(",")]
        dim, paired = _parse_header(header)
        expected_fields = 1 + (2 * dim if paired else dim)
        weights, y_rows, z_rows = [], [], []
        for number, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            fields = line.split(",")
            if len(fields) != expected_fields:
                raise ValueError(
                    f"line {number}: expected {expected_fields} columns, "
                    f"found {len(fields)}"
                )
            try:
                values = [float(field) for field in fields]
            except ValueError:
                raise ValueError(f"line {number}: malformed number") from None
            if any(np.isnan(v) for v in values):
                raise ValueError(f"line {number}: NaN is not a valid entry")
            if values[0] < 0.0:
                raise ValueError(f"line {number}: negative weight")
            weights.append(values[0])
            y_rows.append(values[1 : 1 + dim])
            if paired:
                z_rows.append(values[1 + dim :])
        if not weights:
            raise ValueError("empty data set")
        return cls(
            weights=np.asarray(weights),
            points=np.asarray(y_rows),
            pair_points=np.asarray(z_rows) if paired else None,
        )

    @classmethod
    def read(cls, path) -> "DatasetFile":
        return cls.from_text(Path(path).read_text())


def _parse_header(header: list) -> tuple:
    if header[0] != "c":
        raise ValueError("line 1: header must start with the weight column 'c'")
    names = header[1:]
    if not names:
        raise ValueError("line 1: no coordinate columns")
    y_count = sum(1 for name in names if name.startswith("y_"))
    z_count = len(names) - y_count
    paired = z_count > 0
    dim = y_count
    if paired and z_count != y_count:
        raise ValueError("line 1: paired layout needs matching y and z blocks")
    expected = _header_names(dim, paired)
    if [*header] != expected:
        raise ValueError(
            "line 1: header must read " + ",".join(expected[: min(len(expected), 7)])
            + ("..." if len(expected) > 7 else "")
        )
    return dim, paired


def parse_dataset(path, expected_dim: int = None) -> EmpiricalMeasure:
    """Read a dataset file into an empirical measure.

    The layout (material-only or paired) is taken from the header.  When
    ``expected_dim`` is given, the per-block coordinate count must match it.
    """
    data = DatasetFile.read(path)
    if expected_dim is not None and data.dim != expected_dim:
        raise ValueError(
            f"column mismatch: file carries {data.dim} coordinates per block, "
            f"expected {expected_dim}"
        )
    return data.to_measure()


def emit_dataset(path, data) -> None:
    """Write a dataset file from a :class:`DatasetFile` or a measure."""
    if isinstance(data, EmpiricalMeasure):
        data = DatasetFile.from_measure(data)
    data.write(path)
