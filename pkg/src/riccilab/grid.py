"""Periodic grid charts and tensor fields on flat n-torus charts.

All fields live on a `GridChart`: a uniform periodic grid with per-axis node
counts N_i and box lengths L_i.  Field values are numpy arrays whose leading
axes run over grid nodes and whose trailing axes (if any) are tensor
component indices.  Fields are treated as immutable once constructed; all
operations return new fields.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from .errors import ChartMismatchError, NonPositiveDefiniteError

DEFAULT_NODE_CAP = 2**22
METRIC_EIG_FLOOR = 1e-6


@dataclass(frozen=True)
class GridChart:
    """Uniform periodic chart on an n-torus, 2 <= n <= 4.

    resolution: nodes per axis, each >= 8.
    box: period per axis (length units), each > 0.
    """

    resolution: tuple
    box: tuple
    node_cap: int = DEFAULT_NODE_CAP

    def __post_init__(self):
        res = tuple(int(n) for n in self.resolution)
        box = tuple(float(L) for L in self.box)
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "box", box)
        if not (2 <= len(res) <= 4):
            raise ValueError(f"chart dimension must be 2..4, got {len(res)}")
        if len(box) != len(res):
            raise ValueError("resolution and box must have equal length")
        if any(n < 8 for n in res):
            raise ValueError(f"every axis needs >= 8 nodes, got {res}")
        if any(L <= 0 for L in box):
            raise ValueError(f"box lengths must be positive, got {box}")
        if int(np.prod(res)) > self.node_cap:
            raise ValueError(
                f"total node count {int(np.prod(res))} exceeds cap {self.node_cap}"
            )

    @property
    def dim(self):
        return len(self.resolution)

    @property
    def shape(self):
        return self.resolution

    @property
    def node_count(self):
        return int(np.prod(self.resolution))

    @property
    def spacing(self):
        return tuple(L / n for L, n in zip(self.box, self.resolution))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axes(self):
        """Per-axis node coordinate arrays (left endpoints, periodic)."""
        return [np.arange(n) * (L / n) for n, L in zip(self.resolution, self.box)]

    def coords(self):
        """Meshgrid of node coordinates, indexing='ij'."""
        return np.meshgrid(*self.axes(), indexing="ij")

    def same_as(self, other):
        return self.resolution == other.resolution and self.box == other.box


def _require_same_chart(*fields):
    c0 = fields[0].chart
    for f in fields[1:]:
        if not c0.same_as(f.chart):
            raise ChartMismatchError(f"fields on different charts: {c0} vs {f.chart}")
    return c0


def _check_finite(values, what):
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite values")


@dataclass
class ScalarField:
    chart: GridChart
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.chart.shape:
            raise ValueError(
                f"scalar values shape {self.values.shape} != chart {self.chart.shape}"
            )
        _check_finite(self.values, "ScalarField")

    @classmethod
    def constant(cls, chart, value):
        return cls(chart, np.full(chart.shape, float(value)))

    @classmethod
    def from_function(cls, chart, fn):
        return cls(chart, np.asarray(fn(*chart.coords()), dtype=float))


class _ComponentField:
    """Shared plumbing for fields with trailing component axes."""

    n_component_axes = 1

    def __init__(self, chart, values):
        self.chart = chart
        self.values = np.asarray(values, dtype=float)
        n = chart.dim
        expected = chart.shape + (n,) * self.n_component_axes
        if self.values.shape != expected:
            raise ValueError(
                f"{type(self).__name__} shape {self.values.shape} != {expected}"
            )
        _check_finite(self.values, type(self).__name__)
        self._validate()

    def _validate(self):
        pass


class OneFormField(_ComponentField):
    """Covariant rank-1 field, components omega_i."""

    variance = "covariant"


class VectorField(_ComponentField):
    """Contravariant rank-1 field, components X^i."""

    variance = "contravariant"


class SymTensorField(_ComponentField):
    """Symmetric covariant 2-tensor, components h_ij stored as full matrices.

    Symmetry is enforced structurally: the constructor symmetrizes, and
    rejects input that is not symmetric to round-off-scale tolerance.
    """

    n_component_axes = 2

    def _validate(self):
        v = self.values
        asym = np.max(np.abs(v - np.swapaxes(v, -1, -2)))
        scale = max(np.max(np.abs(v)), 1.0)
        if asym > 1e-12 * scale:
            raise ValueError(f"input tensor is not symmetric (max asym {asym:.3e})")
        self.values = 0.5 * (v + np.swapaxes(v, -1, -2))

    @classmethod
    def zero(cls, chart):
        n = chart.dim
        return cls(chart, np.zeros(chart.shape + (n, n)))


class MetricField(SymTensorField):
    """Positive-definite symmetric 2-tensor: the Riemannian metric.

    Pointwise eigenvalues must exceed `eig_floor` (default 1e-6); violation
    raises NonPositiveDefiniteError.  Inverse, sqrt(det) and pointwise
    eigen-extremes are cached lazily (fields are immutable by convention).
    """

    def __init__(self, chart, values, eig_floor=METRIC_EIG_FLOOR):
        self.eig_floor = float(eig_floor)
        self._inv = None
        self._sqrt_det = None
        self._eig_range = None
        super().__init__(chart, values)

    def _validate(self):
        super()._validate()
        lo, _ = self.eig_range
        if lo <= self.eig_floor:
            raise NonPositiveDefiniteError(
                f"metric eigenvalue floor violated: min eig {lo:.3e} <= {self.eig_floor:.1e}"
            )

    @property
    def eig_range(self):
        if self._eig_range is None:
            w = np.linalg.eigvalsh(self.values)
            self._eig_range = (float(w.min()), float(w.max()))
        return self._eig_range

    @property
    def inv(self):
        """Inverse metric g^{ij}, same array layout."""
        if self._inv is None:
            self._inv = np.linalg.inv(self.values)
        return self._inv

    @property
    def sqrt_det(self):
        """Pointwise sqrt(det g), the volume density."""
        if self._sqrt_det is None:
            self._sqrt_det = np.sqrt(np.linalg.det(self.values))
        return self._sqrt_det

    @property
    def max_inverse_norm(self):
        """max over nodes of the spectral norm of g^{-1} (CFL bookkeeping)."""
        lo, _ = self.eig_range
        return 1.0 / lo

    @classmethod
    def flat(cls, chart, scale=1.0):
        """Constant metric scale * delta_ij."""
        n = chart.dim
        vals = np.zeros(chart.shape + (n, n))
        idx = np.arange(n)
        vals[..., idx, idx] = float(scale)
        return cls(chart, vals)

    @classmethod
    def constant(cls, chart, matrix):
        """Constant-coefficient metric from an n x n SPD matrix."""
        n = chart.dim
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (n, n):
            raise ValueError(f"matrix must be {n}x{n}")
        vals = np.broadcast_to(matrix, chart.shape + (n, n)).copy()
        return cls(chart, vals)

    @classmethod
    def conformal_flat(cls, chart, u):
        """g = exp(2 u) * delta for a ScalarField (or array) u."""
        uu = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
        n = chart.dim
        vals = np.zeros(chart.shape + (n, n))
        idx = np.arange(n)
        vals[..., idx, idx] = np.exp(2.0 * uu)[..., None]
        return cls(chart, vals)


class ThreeTensorField(_ComponentField):
    """(1,2)-tensor T^k_{ij}, symmetric in the lower pair (i,j).

    Component layout: values[..., k, i, j].
    """

    n_component_axes = 3

    def _validate(self):
        v = self.values
        asym = np.max(np.abs(v - np.swapaxes(v, -1, -2)))
        scale = max(np.max(np.abs(v)), 1.0)
        if asym > 1e-12 * scale:
            raise ValueError(f"lower-index pair not symmetric (max asym {asym:.3e})")
        self.values = 0.5 * (v + np.swapaxes(v, -1, -2))


class FourTensorField(_ComponentField):
    """Covariant 4-tensor, components R_{ijkl}."""

    n_component_axes = 4


def random_band_limited(chart, rng, max_mode=2, amplitude=1.0, tensor_rank=0):
    """Random smooth real field: trigonometric polynomial with modes up to
    max_mode per axis and Gaussian coefficients.  Returns a bare ndarray with
    `tensor_rank` trailing component axes (unsymmetrized).
    """
    n = chart.dim
    comp_shape = (n,) * tensor_rank
    out = np.zeros(chart.shape + comp_shape)
    xs = chart.coords()
    modes = [range(-max_mode, max_mode + 1)] * n
    grids = np.meshgrid(*modes, indexing="ij")
    kvecs = np.stack([g.ravel() for g in grids], axis=-1)
    for k in kvecs:
        if np.all(k == 0):
            continue
        phase = sum(
            2 * np.pi * k[a] * xs[a] / chart.box[a] for a in range(n)
        )
        decay = 1.0 / (1.0 + float(np.dot(k, k))) ** 2
        coef_c = rng.standard_normal(comp_shape) * decay
        coef_s = rng.standard_normal(comp_shape) * decay
        out += np.cos(phase)[(...,) + (None,) * tensor_rank] * coef_c
        out += np.sin(phase)[(...,) + (None,) * tensor_rank] * coef_s
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= amplitude / peak
    # constant offset for rank-0 so fields are generic
    if tensor_rank == 0:
        out += amplitude * 0.1 * rng.standard_normal()
    return out
