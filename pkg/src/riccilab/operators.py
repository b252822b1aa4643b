"""Discrete Riemannian tensor calculus on periodic grid charts.

Conventions (fixed throughout the package):

* Laplace-Beltrami on functions: Lap f = -tr_g Hess f.  Nonnegative spectrum
  on the flat torus (Lap sin(2 pi x/L) = (2 pi/L)^2 sin(2 pi x/L)).
* Curvature sign: R(X,Y)Z = nabla^2_{X,Y} Z - nabla^2_{Y,X} Z, and
  R_{ijkl} = g(R(e_i,e_j)e_k, e_l).  Round spheres then have Ric > 0.
* Divergence (div h)_j = -g^{ab} nabla_a h_{bj}; its formal adjoint on
  one-forms is (div* w)_{ij} = (nabla_i w_j + nabla_j w_i)/2.  With this
  normalization div* w = (1/2) L_{w#} g, i.e. the Lie derivative of the
  metric along the raised one-form is exactly 2 div* w.  The factor 1/2
  stems from the symmetrization weight 1/p on symmetric p-tensors.

Spatial derivatives are centered periodic finite differences of order 2, 4
(default) or 6; all operators use the same stencils, so algebraic identities
between operators that need no derivative commutation or product rule hold
to machine precision on the grid.
"""
from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .errors import ResolutionTooCoarseError
from .grid import (
    FourTensorField,
    GridChart,
    MetricField,
    OneFormField,
    ScalarField,
    SymTensorField,
    ThreeTensorField,
    VectorField,
    _require_same_chart,
)

DEFAULT_FD_ORDER = 4

# centered first/second derivative stencils: order -> (offsets, coefficients)
_D1_STENCILS = {
    2: ((-1, 1), (-0.5, 0.5)),
    4: ((-2, -1, 1, 2), (1 / 12, -2 / 3, 2 / 3, -1 / 12)),
    6: ((-3, -2, -1, 1, 2, 3), (-1 / 60, 3 / 20, -3 / 4, 3 / 4, -3 / 20, 1 / 60)),
}
_D2_STENCILS = {
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    4: ((-2, -1, 0, 1, 2), (-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12)),
    6: ((-3, -2, -1, 0, 1, 2, 3),
        (1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90)),
}


def _check_order(chart, order):
    if order not in _D1_STENCILS:
        raise ValueError(f"unsupported FD order {order}; use 2, 4 or 6")
    half = order // 2
    if any(n < 2 * half + 1 for n in chart.resolution):
        raise ResolutionTooCoarseError(
            f"order-{order} stencil needs >= {2 * half + 1} nodes per axis, "
            f"chart has {chart.resolution}"
        )


def partial(chart, values, axis, order=DEFAULT_FD_ORDER):
    """Centered periodic d/dx_axis of a node array (any trailing axes)."""
    _check_order(chart, order)
    offsets, coeffs = _D1_STENCILS[order]
    dx = chart.spacing[axis]
    out = np.zeros_like(values)
    for off, c in zip(offsets, coeffs):
        out += c * np.roll(values, -off, axis=axis)
    return out / dx


def partial2(chart, values, ax1, ax2, order=DEFAULT_FD_ORDER):
    """Centered periodic second derivative; dedicated stencil on the
    diagonal, composition of first derivatives off it."""
    if ax1 == ax2:
        _check_order(chart, order)
        offsets, coeffs = _D2_STENCILS[order]
        dx = chart.spacing[ax1]
        out = np.zeros_like(values)
        for off, c in zip(offsets, coeffs):
            out += c * np.roll(values, -off, axis=ax1)
        return out / dx**2
    return partial(chart, partial(chart, values, ax2, order), ax1, order)


def grad_stack(chart, values, order=DEFAULT_FD_ORDER):
    """Stack of partial derivatives along a new trailing-first axis:
    out[..., a, (components)] = d_a values."""
    outs = [partial(chart, values, a, order) for a in range(chart.dim)]
    return np.stack(outs, axis=len(chart.shape))


# ---------------------------------------------------------------------------
# curvature
# ---------------------------------------------------------------------------


@dataclass
class CurvaturePack:
    """Christoffels and curvature of a metric, all from one FD pass.

    christoffel : Gamma^k_{ij}                      values[..., k, i, j]
    riemann13   : R^l_{ijk}  (R(e_i,e_j)e_k = R^l_{ijk} e_l)
    riemann     : R_{ijkl} = g_{lm} R^m_{ijk}
    ricci       : Ric_{jk} = R^i_{ijk}
    scal        : g^{jk} Ric_{jk}
    """

    g: MetricField
    order: int
    christoffel: ThreeTensorField
    riemann13: np.ndarray
    riemann: FourTensorField
    ricci: SymTensorField
    scal: ScalarField

    def verify(self):
        """Residuals for the Riemann symmetries, first Bianchi identity, and
        trace consistency; all should vanish at the discretization order."""
        R = self.riemann.values
        scale = max(np.max(np.abs(R)), 1e-300)
        first_pair = np.max(np.abs(R + np.swapaxes(R, -4, -3))) / scale
        last_pair = np.max(np.abs(R + np.swapaxes(R, -2, -1))) / scale
        pair_sym = np.max(
            np.abs(R - np.transpose(R, axes=tuple(range(R.ndim - 4)) + (-2, -1, -4, -3)))
        ) / scale
        bianchi = np.max(np.abs(
            R
            + np.transpose(R, axes=tuple(range(R.ndim - 4)) + (-3, -2, -4, -1))
            + np.transpose(R, axes=tuple(range(R.ndim - 4)) + (-2, -4, -3, -1))
        )) / scale
        tr = np.einsum("...jk,...jk->...", self.g.inv, self.ricci.values)
        trace_gap = np.max(np.abs(tr - self.scal.values)) / max(
            np.max(np.abs(self.scal.values)), 1e-300
        )
        return {
            "antisym_first_pair": float(first_pair),
            "antisym_last_pair": float(last_pair),
            "pair_symmetry": float(pair_sym),
            "first_bianchi": float(bianchi),
            "trace_consistency": float(trace_gap),
        }


def lowered_christoffel(g, order=DEFAULT_FD_ORDER):
    """C_{l,ij} = (d_i g_{jl} + d_j g_{il} - d_l g_{ij}) / 2."""
    chart = g.chart
    dg = grad_stack(chart, g.values, order)  # [..., a, i, j] = d_a g_ij
    t1 = np.einsum("...ijl->...lij", dg)     # d_i g_{jl}
    t2 = np.einsum("...jil->...lij", dg)     # d_j g_{il}
    return 0.5 * (t1 + t2 - dg)


def christoffel(g, order=DEFAULT_FD_ORDER):
    """Gamma^k_{ij} as a ThreeTensorField."""
    C = lowered_christoffel(g, order)
    G = np.einsum("...kl,...lij->...kij", g.inv, C)
    return ThreeTensorField(g.chart, G)


def curvature(g, order=DEFAULT_FD_ORDER):
    """Full curvature pack of a metric via centered differences."""
    chart = g.chart
    Gamma = christoffel(g, order)
    Gv = Gamma.values
    dG = grad_stack(chart, Gv, order)                 # [..., a, l, j, k]
    t1 = np.swapaxes(dG, -4, -3)                      # [..., l, i, j, k] = d_i G^l_{jk}
    t2 = np.swapaxes(t1, -3, -2)                      # d_j G^l_{ik}
    q1 = np.einsum("...lim,...mjk->...lijk", Gv, Gv)
    q2 = np.swapaxes(q1, -3, -2)
    R13 = t1 - t2 + q1 - q2                           # R^l_{ijk}
    R4 = np.einsum("...lm,...mijk->...ijkl", g.values, R13)
    ric = np.einsum("...mmjk->...jk", R13)
    ric = 0.5 * (ric + np.swapaxes(ric, -1, -2))
    scal = np.einsum("...jk,...jk->...", g.inv, ric)
    return CurvaturePack(
        g=g,
        order=order,
        christoffel=Gamma,
        riemann13=R13,
        riemann=FourTensorField(chart, R4),
        ricci=SymTensorField(chart, ric),
        scal=ScalarField(chart, scal),
    )


def _pack_or_compute(g, pack, order):
    if pack is None:
        return curvature(g, order)
    return pack


# ---------------------------------------------------------------------------
# covariant derivatives
# ---------------------------------------------------------------------------


def covariant_oneform(g, w, pack=None, order=DEFAULT_FD_ORDER):
    """nabla_i w_j as array [..., i, j]."""
    p = _pack_or_compute(g, pack, order)
    dw = grad_stack(g.chart, w.values if isinstance(w, OneFormField) else w, order)
    Gv = p.christoffel.values
    wv = w.values if isinstance(w, OneFormField) else w
    return dw - np.einsum("...kij,...k->...ij", Gv, wv)


def covariant_sym2(g, h, pack=None, order=DEFAULT_FD_ORDER):
    """nabla_a h_{ij} as array [..., a, i, j]."""
    p = _pack_or_compute(g, pack, order)
    hv = h.values if isinstance(h, SymTensorField) else h
    dh = grad_stack(g.chart, hv, order)
    Gv = p.christoffel.values
    corr1 = np.einsum("...mai,...mj->...aij", Gv, hv)
    corr2 = np.einsum("...maj,...im->...aij", Gv, hv)
    return dh - corr1 - corr2


def covariant_twoform(g, beta, pack=None, order=DEFAULT_FD_ORDER):
    """nabla_a beta_{ij} for an antisymmetric (0,2)-tensor array."""
    p = _pack_or_compute(g, pack, order)
    db = grad_stack(g.chart, beta, order)
    Gv = p.christoffel.values
    corr1 = np.einsum("...mai,...mj->...aij", Gv, beta)
    corr2 = np.einsum("...maj,...im->...aij", Gv, beta)
    return db - corr1 - corr2


def covariant_three(g, T, pack=None, order=DEFAULT_FD_ORDER):
    """nabla_a T^k_{ij} for a (1,2)-tensor array [..., k, i, j]."""
    p = _pack_or_compute(g, pack, order)
    Tv = T.values if isinstance(T, ThreeTensorField) else T
    dT = grad_stack(g.chart, Tv, order)
    Gv = p.christoffel.values
    up = np.einsum("...kam,...mij->...akij", Gv, Tv)
    dn1 = np.einsum("...mai,...kmj->...akij", Gv, Tv)
    dn2 = np.einsum("...maj,...kim->...akij", Gv, Tv)
    return dT + up - dn1 - dn2


def hessian(g, f, pack=None, order=DEFAULT_FD_ORDER):
    """Hessian (nabla^2 f)_{ij} = d^2_{ij} f - Gamma^k_{ij} d_k f."""
    _require_same_chart(g, f)
    p = _pack_or_compute(g, pack, order)
    chart = g.chart
    n = chart.dim
    fv = f.values
    hess = np.empty(chart.shape + (n, n))
    for i in range(n):
        for j in range(i, n):
            hess[..., i, j] = partial2(chart, fv, i, j, order)
            if j != i:
                hess[..., j, i] = hess[..., i, j]
    df = grad_stack(chart, fv, order)
    hess -= np.einsum("...kij,...k->...ij", p.christoffel.values, df)
    return SymTensorField(chart, hess)


def laplacian(g, f, pack=None, order=DEFAULT_FD_ORDER):
    """Lap f = -tr_g Hess f (nonnegative spectrum on the flat torus)."""
    H = hessian(g, f, pack, order)
    vals = -np.einsum("...ij,...ij->...", g.inv, H.values)
    return ScalarField(g.chart, vals)


def gradient_norm_sq(g, f, order=DEFAULT_FD_ORDER):
    """|grad f|^2_g = g^{ij} d_i f d_j f."""
    df = grad_stack(g.chart, f.values, order)
    vals = np.einsum("...ij,...i,...j->...", g.inv, df, df)
    return ScalarField(g.chart, vals)


def laplacian_form(g, f, order=DEFAULT_FD_ORDER):
    """Variational discretization of the Laplace-Beltrami operator:
    -(det g)^{-1/2} D_i( sqrt(det g) g^{ij} D_j f ) with centered stencils.

    This is the exact L^2(dV_g)-gradient of the discrete Dirichlet energy
    (1/2) Int |df|^2_g dV_g built from gradient_norm_sq, hence exactly
    self-adjoint and nonnegative on the grid (centered first-derivative
    stencils are exactly antisymmetric under the periodic quadrature).
    Agrees with `laplacian` to the discretization order.

    Caveat: like every centered divergence-form operator it annihilates the
    Nyquist checkerboard patterns (odd-even decoupling); its kernel is
    span{1} + checkerboard_modes(chart).  Solvers must use the penalized
    variant (see eigen.solver_laplacian), which removes the spurious kernel
    exactly while staying self-adjoint."""
    _require_same_chart(g, f)
    chart = g.chart
    df = grad_stack(chart, f.values, order)
    flux = np.einsum("...ij,...j->...i", g.inv, df) * g.sqrt_det[..., None]
    out = np.zeros(chart.shape)
    for i in range(chart.dim):
        out += partial(chart, flux[..., i], i, order)
    return ScalarField(chart, -out / g.sqrt_det)


def checkerboard_modes(chart):
    """Node patterns prod_a (-1)^{idx_a} over any nonempty subset of the
    even-resolution axes: exactly the nonconstant kernel of every centered
    first-difference stencil, hence of laplacian_form.  Returns a list of
    arrays of shape chart.shape (empty when all resolutions are odd)."""
    import itertools

    even_axes = [a for a, n in enumerate(chart.resolution) if n % 2 == 0]
    modes = []
    for r in range(1, len(even_axes) + 1):
        for subset in itertools.combinations(even_axes, r):
            pattern = np.ones(chart.shape)
            for a in subset:
                idx = np.arange(chart.resolution[a])
                shape = [1] * chart.dim
                shape[a] = -1
                pattern = pattern * ((-1.0) ** idx).reshape(shape)
            modes.append(pattern)
    return modes


# ---------------------------------------------------------------------------
# divergence, adjoint, curvature action, operator zoo
# ---------------------------------------------------------------------------


def divergence(g, h, pack=None, order=DEFAULT_FD_ORDER):
    """(div h)_j = -g^{ab} nabla_a h_{bj}."""
    _require_same_chart(g, h)
    Dh = covariant_sym2(g, h, pack, order)
    vals = -np.einsum("...ab,...abj->...j", g.inv, Dh)
    return OneFormField(g.chart, vals)


def div_adjoint(g, w, pack=None, order=DEFAULT_FD_ORDER):
    """(div* w)_{ij} = (nabla_i w_j + nabla_j w_i)/2; equals L_{w#} g / 2."""
    _require_same_chart(g, w)
    Dw = covariant_oneform(g, w, pack, order)
    vals = 0.5 * (Dw + np.swapaxes(Dw, -1, -2))
    return SymTensorField(g.chart, vals)


def lie_derivative_metric(g, w, pack=None, order=DEFAULT_FD_ORDER):
    """L_{w#} g = 2 div* w for a one-form w."""
    return SymTensorField(g.chart, 2.0 * div_adjoint(g, w, pack, order).values)


def divergence_oneform(g, w, pack=None, order=DEFAULT_FD_ORDER):
    """div w = -g^{ab} nabla_a w_b (scalar)."""
    Dw = covariant_oneform(g, w, pack, order)
    vals = -np.einsum("...ab,...ab->...", g.inv, Dw)
    return ScalarField(g.chart, vals)


def curvature_action(g, h, pack=None, order=DEFAULT_FD_ORDER):
    """Natural curvature action on symmetric 2-tensors:
    (Rk h)(X,Y) = sum_i h(R(e_i,X)Y, e_i) over an orthonormal frame, which in
    coordinates is g^{ab} R^m_{ajk} h_{mb}.  For h = g this returns Ric."""
    _require_same_chart(g, h)
    p = _pack_or_compute(g, pack, order)
    hv = h.values if isinstance(h, SymTensorField) else h
    vals = np.einsum("...ab,...majk,...mb->...jk", g.inv, p.riemann13, hv)
    vals = 0.5 * (vals + np.swapaxes(vals, -1, -2))
    return SymTensorField(g.chart, vals)


def rough_laplacian_sym2(g, h, pack=None, order=DEFAULT_FD_ORDER):
    """Connection Laplacian nabla* nabla h = -g^{ab} (nabla^2 h)_{ab;ij}."""
    p = _pack_or_compute(g, pack, order)
    Dh = covariant_sym2(g, h, p, order)  # [..., c, i, j]
    dDh = grad_stack(g.chart, Dh, order)  # [..., a, c, i, j]
    Gv = p.christoffel.values
    c0 = np.einsum("...cab,...cij->...abij", Gv, Dh)
    c1 = np.einsum("...cai,...bcj->...abij", Gv, Dh)
    c2 = np.einsum("...caj,...bic->...abij", Gv, Dh)
    DDh = dDh - c0 - c1 - c2
    vals = -np.einsum("...ab,...abij->...ij", g.inv, DDh)
    vals = 0.5 * (vals + np.swapaxes(vals, -1, -2))
    return SymTensorField(g.chart, vals)


def einstein_operator(g, h, pack=None, order=DEFAULT_FD_ORDER):
    """Delta_E h = nabla* nabla h - 2 Rk h."""
    p = _pack_or_compute(g, pack, order)
    rough = rough_laplacian_sym2(g, h, p, order)
    act = curvature_action(g, h, p, order)
    return SymTensorField(g.chart, rough.values - 2.0 * act.values)


def lichnerowicz(g, h, pack=None, order=DEFAULT_FD_ORDER):
    """Delta_L h = nabla* nabla h + Ric o h + h o Ric - 2 Rk h."""
    p = _pack_or_compute(g, pack, order)
    rough = rough_laplacian_sym2(g, h, p, order)
    act = curvature_action(g, h, p, order)
    hv = h.values if isinstance(h, SymTensorField) else h
    comp = np.einsum("...ik,...kl,...lj->...ij", p.ricci.values, g.inv, hv)
    comp = comp + np.swapaxes(comp, -1, -2)
    return SymTensorField(g.chart, rough.values + comp - 2.0 * act.values)


def hodge_laplacian_oneform(g, w, pack=None, order=DEFAULT_FD_ORDER):
    """Hodge Laplacian on one-forms: (d delta + delta d) w."""
    _require_same_chart(g, w)
    p = _pack_or_compute(g, pack, order)
    chart = g.chart
    dw_partial = grad_stack(chart, w.values, order)   # [..., i, j] = d_i w_j
    dw = dw_partial - np.swapaxes(dw_partial, -1, -2)  # exterior derivative
    Ddw = covariant_twoform(g, dw, p, order)           # [..., a, b, j]
    delta_dw = -np.einsum("...ab,...abj->...j", g.inv, Ddw)
    delta_w = divergence_oneform(g, w, p, order)
    d_delta_w = grad_stack(chart, delta_w.values, order)
    return OneFormField(chart, delta_dw + d_delta_w)


# ---------------------------------------------------------------------------
# integration and inner products
# ---------------------------------------------------------------------------


def _pointwise_inner(g, a, b):
    if isinstance(a, ScalarField) and isinstance(b, ScalarField):
        return a.values * b.values
    if isinstance(a, OneFormField) and isinstance(b, OneFormField):
        return np.einsum("...ij,...i,...j->...", g.inv, a.values, b.values)
    if isinstance(a, VectorField) and isinstance(b, VectorField):
        return np.einsum("...ij,...i,...j->...", g.values, a.values, b.values)
    if isinstance(a, SymTensorField) and isinstance(b, SymTensorField):
        return np.einsum(
            "...ik,...jl,...ij,...kl->...", g.inv, g.inv, a.values, b.values
        )
    raise TypeError(f"no inner product for {type(a).__name__} vs {type(b).__name__}")


def pointwise_inner(g, a, b):
    """Pointwise metric inner product <a, b>_g as a ScalarField."""
    _require_same_chart(g, a, b)
    return ScalarField(g.chart, _pointwise_inner(g, a, b))


def integrate(g, scalar_values):
    """Integral of a node array against dV_g (node-weight product rule;
    exact for trigonometric polynomials below Nyquist)."""
    return float(np.sum(scalar_values * g.sqrt_det) * g.chart.cell_volume)


def volume(g):
    """vol(M, g) = integral of 1 dV_g."""
    return integrate(g, np.ones(g.chart.shape))


def average_integral(g, f):
    """Averaging integral: integral of f dV_g divided by the volume."""
    _require_same_chart(g, f)
    return integrate(g, f.values) / volume(g)


def l2_inner(g, a, b):
    """L^2(dV_g) inner product of two fields of equal type."""
    _require_same_chart(g, a, b)
    return integrate(g, _pointwise_inner(g, a, b))


def l2_norm(g, a):
    return float(np.sqrt(max(l2_inner(g, a, a), 0.0)))


def c0_distance(a, b):
    """Componentwise sup distance between two like fields (chart coordinates)."""
    _require_same_chart(a, b)
    return float(np.max(np.abs(a.values - b.values)))
