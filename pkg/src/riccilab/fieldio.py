"""Field container serialization and CSV export.

Container format: numpy .npz holding the chart descriptor (resolution, box,
node cap) plus the row-major component array and a `kind` tag.  float64
round-trips bit-exactly.
"""
from __future__ import annotations

import csv

import numpy as np

from .grid import (
    FourTensorField,
    GridChart,
    MetricField,
    OneFormField,
    ScalarField,
    SymTensorField,
    ThreeTensorField,
    VectorField,
)

_KINDS = {
    "scalar": ScalarField,
    "oneform": OneFormField,
    "vector": VectorField,
    "symtensor": SymTensorField,
    "metric": MetricField,
    "threetensor": ThreeTensorField,
    "fourtensor": FourTensorField,
}
_NAMES = {v: k for k, v in _KINDS.items()}

FORMAT_VERSION = 1


def save_field(path, field):
    """Write a field to a self-describing .npz container (bit-exact)."""
    kind = _NAMES.get(type(field))
    if kind is None:
        raise TypeError(f"unsupported field type {type(field).__name__}")
    chart = field.chart
    np.savez(
        path,
        format_version=np.int64(FORMAT_VERSION),
        kind=np.str_(kind),
        resolution=np.asarray(chart.resolution, dtype=np.int64),
        box=np.asarray(chart.box, dtype=np.float64),
        node_cap=np.int64(chart.node_cap),
        values=np.ascontiguousarray(field.values, dtype=np.float64),
    )


def load_field(path):
    """Read a field container written by save_field."""
    with np.load(path, allow_pickle=False) as data:
        kind = str(data["kind"])
        chart = GridChart(
            tuple(int(x) for x in data["resolution"]),
            tuple(float(x) for x in data["box"]),
            node_cap=int(data["node_cap"]),
        )
        values = np.array(data["values"], dtype=np.float64)
    cls = _KINDS.get(kind)
    if cls is None:
        raise ValueError(f"unknown field kind {kind!r}")
    return cls(chart, values)


def scalar_to_csv(path, field):
    """Write a scalar field as CSV: one row per node, columns x1..xn,value."""
    if not isinstance(field, ScalarField):
        raise TypeError("CSV export is for scalar fields")
    chart = field.chart
    coords = chart.coords()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(chart.dim)] + ["value"])
        flat = [c.ravel() for c in coords]
        for idx, val in enumerate(field.values.ravel()):
            writer.writerow([repr(float(c[idx])) for c in flat] + [repr(float(val))])
