"""First and second variations of geometric quantities, paired with
finite-difference oracles.

The primary variation routines (`vary_connection`, `vary_curvature`,
`vary_hessian_laplacian`) implement the *exact linearizations* of the
discrete curvature/operator pipeline: every step is pointwise algebra in
quantities built from the same FD stencils, with no derivative commutation
or discrete product rule.  They therefore match t-differentiation of the
discrete maps to round-off, which is what the FD oracle measures.

The familiar covariant closed forms (Lichnerowicz form of Ric', the
div/trace form of scal', the pairing form of Lap') are provided alongside
with `_covariant` suffixes; they agree with the exact linearizations up to
the spatial discretization order and converge to them under grid
refinement.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import json

import numpy as np

from .errors import (
    NoisyFunctionalError,
    NonEinsteinBackgroundError,
    StepUnderflowError,
)
from .grid import (
    MetricField,
    OneFormField,
    ScalarField,
    SymTensorField,
    ThreeTensorField,
    _require_same_chart,
)
from .operators import (
    DEFAULT_FD_ORDER,
    covariant_oneform,
    covariant_sym2,
    covariant_three,
    curvature,
    div_adjoint,
    divergence,
    divergence_oneform,
    grad_stack,
    gradient_norm_sq,
    hessian,
    laplacian,
    lichnerowicz,
    _pack_or_compute,
)


# ---------------------------------------------------------------------------
# first variations (exact discrete linearizations)
# ---------------------------------------------------------------------------


def vary_connection(g, h, pack=None, order=DEFAULT_FD_ORDER):
    """First variation G^k_{ij} of the Levi-Civita connection in direction h:
    g(G(X,Y),Z) = (nabla_X h(Y,Z) + nabla_Y h(X,Z) - nabla_Z h(X,Y)) / 2."""
    _require_same_chart(g, h)
    p = _pack_or_compute(g, pack, order)
    Dh = covariant_sym2(g, h, p, order)  # [..., a, i, j]
    comb = (
        np.einsum("...ijl->...lij", Dh)
        + np.einsum("...jil->...lij", Dh)
        - Dh
    )
    G = 0.5 * np.einsum("...kl,...lij->...kij", g.inv, comb)
    return ThreeTensorField(g.chart, G)


def vary_curvature(g, h, pack=None, order=DEFAULT_FD_ORDER):
    """First variations of Riemann, Ricci, scalar curvature and volume
    element in direction h.

    Returns a dict with keys:
      'riemann'  : (0,4) array, d/dt R_{ijkl}(g+th)
      'ricci'    : SymTensorField, d/dt Ric(g+th)
      'scal'     : ScalarField, d/dt scal(g+th)
      'dV'       : ScalarField, tr_g h / 2  (density factor of (dV)' )
    computed as nabla G antisymmetrized plus lowering terms; exact
    linearization of the discrete curvature map.
    """
    _require_same_chart(g, h)
    p = _pack_or_compute(g, pack, order)
    G = vary_connection(g, h, p, order)
    DG = covariant_three(g, G, p, order)  # [..., a, k, i, j]
    t1 = np.swapaxes(DG, -4, -3)          # [..., l, i, j, k] = nabla_i G^l_{jk}
    t2 = np.swapaxes(t1, -3, -2)          # nabla_j G^l_{ik}
    R13p = t1 - t2
    R4p = np.einsum("...lm,...mijk->...ijkl", g.values, R13p) + np.einsum(
        "...lm,...mijk->...ijkl", h.values, p.riemann13
    )
    ricp = np.einsum("...mmjk->...jk", R13p)
    ricp = 0.5 * (ricp + np.swapaxes(ricp, -1, -2))
    h_up = np.einsum("...ja,...kb,...ab->...jk", g.inv, g.inv, h.values)
    scalp = -np.einsum("...jk,...jk->...", h_up, p.ricci.values) + np.einsum(
        "...jk,...jk->...", g.inv, ricp
    )
    trh = np.einsum("...ij,...ij->...", g.inv, h.values)
    return {
        "riemann": R4p,
        "ricci": SymTensorField(g.chart, ricp),
        "scal": ScalarField(g.chart, scalp),
        "dV": ScalarField(g.chart, 0.5 * trh),
    }


def ricci_prime_covariant(g, h, pack=None, order=DEFAULT_FD_ORDER):
    """Covariant closed form Ric' = Lich(h)/2 - div*(div h) - Hess(tr h)/2.
    Agrees with vary_curvature()['ricci'] at the discretization order."""
    p = _pack_or_compute(g, pack, order)
    lich = lichnerowicz(g, h, p, order)
    dsd = div_adjoint(g, divergence(g, h, p, order), p, order)
    trh = ScalarField(g.chart, np.einsum("...ij,...ij->...", g.inv, h.values))
    hess_tr = hessian(g, trh, p, order)
    vals = 0.5 * lich.values - dsd.values - 0.5 * hess_tr.values
    return SymTensorField(g.chart, vals)


def scal_prime_covariant(g, h, pack=None, order=DEFAULT_FD_ORDER):
    """Covariant closed form scal' = Lap(tr h) + div(div h) - <Ric, h>."""
    p = _pack_or_compute(g, pack, order)
    trh = ScalarField(g.chart, np.einsum("...ij,...ij->...", g.inv, h.values))
    term1 = laplacian(g, trh, p, order).values
    term2 = divergence_oneform(g, divergence(g, h, p, order), p, order).values
    h_up = np.einsum("...ja,...kb,...ab->...jk", g.inv, g.inv, h.values)
    term3 = np.einsum("...jk,...jk->...", h_up, p.ricci.values)
    return ScalarField(g.chart, term1 + term2 - term3)


def vary_hessian_laplacian(g, h, f, pack=None, order=DEFAULT_FD_ORDER):
    """First variations of Hess f and Lap f in the metric direction h.

    'hessian' : -G^k_{ij} d_k f  (sign verified against the FD oracle)
    'laplacian': h^{ij} Hess f_{ij} + g^{ij} G^k_{ij} d_k f, the exact
        linearization; equals <h, Hess f> - <div h + d(tr h)/2, df> up to
        discretization order.
    """
    _require_same_chart(g, h, f)
    p = _pack_or_compute(g, pack, order)
    G = vary_connection(g, h, p, order)
    df = grad_stack(g.chart, f.values, order)
    hessp = -np.einsum("...kij,...k->...ij", G.values, df)
    hessf = hessian(g, f, p, order)
    h_up = np.einsum("...ia,...jb,...ab->...ij", g.inv, g.inv, h.values)
    lapp = np.einsum("...ij,...ij->...", h_up, hessf.values) + np.einsum(
        "...ij,...kij,...k->...", g.inv, G.values, df
    )
    return {
        "hessian": SymTensorField(g.chart, hessp),
        "laplacian": ScalarField(g.chart, lapp),
    }


def laplacian_prime_covariant(g, h, f, pack=None, order=DEFAULT_FD_ORDER):
    """Pairing form of the Laplacian variation:
    <h, Hess f> - <div h + d(tr h)/2, df>."""
    p = _pack_or_compute(g, pack, order)
    hessf = hessian(g, f, p, order)
    h_up = np.einsum("...ia,...jb,...ab->...ij", g.inv, g.inv, h.values)
    term1 = np.einsum("...ij,...ij->...", h_up, hessf.values)
    trh = ScalarField(g.chart, np.einsum("...ij,...ij->...", g.inv, h.values))
    dtr = grad_stack(g.chart, trh.values, order)
    omega = divergence(g, h, p, order).values + 0.5 * dtr
    df = grad_stack(g.chart, f.values, order)
    term2 = np.einsum("...ij,...i,...j->...", g.inv, omega, df)
    return ScalarField(g.chart, term1 - term2)


# ---------------------------------------------------------------------------
# conformal second variations
# ---------------------------------------------------------------------------


def conformal_second_variations(g, v, einstein_mu=None, pack=None,
                                order=DEFAULT_FD_ORDER, einstein_tol=1e-8):
    """Second t-derivatives of Ricci and scalar curvature along the
    conformal curve g_t = (1 + t v) g.

    General-background chain-rule forms (any metric, any smooth v):
      scal'' = -4(n-1) v Lap v + (n-1)(3 - n/2) |dv|^2 + 2 scal v^2
      Ric''  = [-v Lap v + (2 - n/2)|dv|^2] g + 3(n/2-1) dv x dv
               + (n-2) v Hess v
    These are produced by differentiating the conformal first-variation
    formulas along the curve (v_t = v/(1+tv)) and are validated against the
    direct FD oracle in t.

    With `einstein_mu` set, also returns the Einstein-background closed
    forms, obtained from the general forms via Ric = mu g and the
    borderline eigenvalue relation Lap v = 2 mu v:
      scal''_E = (8 - 6n) mu v^2 + (n-1)(3 - n/2)|dv|^2
      Ric''_E  = -(n/2-2)|dv|^2 g - 2 mu v^2 g + 3(n/2-1) dv x dv
                 + (n-2) v Hess v
    Raises NonEinsteinBackgroundError when the background fails
    |Ric - mu g| <= einstein_tol pointwise.
    """
    _require_same_chart(g, v)
    p = _pack_or_compute(g, pack, order)
    chart = g.chart
    n = chart.dim
    vv = v.values
    lap_v = laplacian(g, v, p, order).values
    hess_v = hessian(g, v, p, order).values
    dv = grad_stack(chart, vv, order)
    dv2 = np.einsum("...ij,...i,...j->...", g.inv, dv, dv)
    dvdv = np.einsum("...i,...j->...ij", dv, dv)

    scal2 = (
        -4.0 * (n - 1) * vv * lap_v
        + (n - 1) * (3.0 - n / 2.0) * dv2
        + 2.0 * p.scal.values * vv**2
    )
    ric2 = (
        ((-vv * lap_v + (2.0 - n / 2.0) * dv2)[..., None, None]) * g.values
        + 3.0 * (n / 2.0 - 1.0) * dvdv
        + (n - 2.0) * vv[..., None, None] * hess_v
    )
    out = {
        "scal": ScalarField(chart, scal2),
        "ricci": SymTensorField(chart, 0.5 * (ric2 + np.swapaxes(ric2, -1, -2))),
    }

    if einstein_mu is not None:
        mu = float(einstein_mu)
        gap = np.max(np.abs(p.ricci.values - mu * g.values))
        if gap > einstein_tol * max(1.0, abs(mu)):
            raise NonEinsteinBackgroundError(
                f"|Ric - mu g| = {gap:.3e} exceeds Einstein tolerance"
            )
        scal2_e = (8.0 - 6.0 * n) * mu * vv**2 + (n - 1) * (3.0 - n / 2.0) * dv2
        ric2_e = (
            (-(n / 2.0 - 2.0) * dv2 - 2.0 * mu * vv**2)[..., None, None] * g.values
            + 3.0 * (n / 2.0 - 1.0) * dvdv
            + (n - 2.0) * vv[..., None, None] * hess_v
        )
        out["scal_einstein"] = ScalarField(chart, scal2_e)
        out["ricci_einstein"] = SymTensorField(
            chart, 0.5 * (ric2_e + np.swapaxes(ric2_e, -1, -2))
        )
    return out


def conformal_curve_second_variation(g, v, t0=1e-3, order=DEFAULT_FD_ORDER):
    """Curve-differentiated second variations: Richardson d/dt at t = 0 of
    the analytic first variations evaluated along g_t = (1+tv) g with
    direction v_t g_t = v g.  FD oracle for conformal_second_variations."""
    _require_same_chart(g, v)
    chart = g.chart

    def first_var(t):
        gt = MetricField(chart, (1.0 + t * v.values)[..., None, None] * g.values)
        direction = SymTensorField(chart, v.values[..., None, None] * g.values)
        out = vary_curvature(gt, direction, order=order)
        return out["scal"].values, out["ricci"].values

    def ladder(component):
        vals = {}
        for t in (t0, t0 / 2, -t0, -t0 / 2):
            vals[t] = first_var(t)[component]
        d1 = (vals[t0] - vals[-t0]) / (2 * t0)
        d2 = (vals[t0 / 2] - vals[-t0 / 2]) / t0
        return (4 * d2 - d1) / 3

    return {
        "scal": ScalarField(chart, ladder(0)),
        "ricci": SymTensorField(chart, ladder(1)),
    }


# ---------------------------------------------------------------------------
# FD oracle
# ---------------------------------------------------------------------------


@dataclass
class VariationReport:
    """Outcome of one FD-vs-analytic variation check."""

    analytic_value: object
    fd_value: object
    abs_error: float
    rel_error: float
    step_sequence: list
    convergence_order_estimate: float
    derivative_order: int = 1

    def to_json(self):
        def pack(x):
            if isinstance(x, np.ndarray):
                return {"shape": list(x.shape), "values": x.tolist()}
            return float(x) if x is not None else None

        return json.dumps(
            {
                "analytic_value": pack(self.analytic_value),
                "fd_value": pack(self.fd_value),
                "abs_error": self.abs_error,
                "rel_error": self.rel_error,
                "step_sequence": [[float(t), float(e)] for t, e in self.step_sequence],
                "convergence_order_estimate": self.convergence_order_estimate,
                "derivative_order": self.derivative_order,
            }
        )


def _central_stencil(F, t, k):
    if k == 1:
        return (F(t) - F(-t)) / (2.0 * t)
    if k == 2:
        return (F(t) - 2.0 * F(0.0) + F(-t)) / t**2
    if k == 3:
        return (F(2 * t) - 2 * F(t) + 2 * F(-t) - F(-2 * t)) / (2.0 * t**3)
    raise ValueError("derivative order must be 1, 2 or 3")


def _maxabs(x):
    return float(np.max(np.abs(x)))


def fd_directional(functional, g, h, order=1, t0=None, levels=4,
                   analytic=None, min_step=1e-9, strict=True):
    """Central-difference directional derivative of a metric functional with
    Richardson extrapolation.

    functional : callable MetricField -> float or ndarray
    h          : SymTensorField direction
    order      : derivative order k in {1, 2, 3}
    t0         : largest step; default 1e-2 scaled by field norms
    levels     : ladder length (t0, t0/2, ...), >= 3
    analytic   : optional reference value; errors in the report are taken
                 against it, otherwise against the best extrapolant.

    Raises StepUnderflowError for an unusably small t0, NoisyFunctionalError
    (when strict) if the raw-ladder error sequence is non-monotone.
    """
    if levels < 3:
        raise ValueError("need at least 3 Richardson levels")
    scale_g = max(_maxabs(g.values), 1e-30)
    scale_h = max(_maxabs(h.values), 1e-30)
    if t0 is None:
        t0 = 1e-2 * scale_g / scale_h
    if t0 < min_step:
        raise StepUnderflowError(f"step {t0:.3e} below floor {min_step:.1e}")

    chart = g.chart

    def F(t):
        gt = MetricField(chart, g.values + t * h.values)
        return functional(gt)

    steps = [t0 / 2**i for i in range(levels)]
    table = [[_central_stencil(F, t, order)] for t in steps]
    # Richardson in powers of t^2
    for j in range(1, levels):
        fac = 4.0**j
        for i in range(j, levels):
            table[i].append((fac * table[i][j - 1] - table[i - 1][j - 1]) / (fac - 1.0))
    best = table[-1][-1]
    ref = best if analytic is None else analytic

    raw_errors = [_maxabs(np.asarray(row[0]) - np.asarray(ref)) for row in table]
    step_sequence = list(zip(steps, raw_errors))

    # convergence order from the first extrapolated column (expected ~4)
    col1 = [_maxabs(np.asarray(table[i][1]) - np.asarray(best))
            for i in range(1, levels)]

    scale = max(_maxabs(np.asarray(best)), _maxabs(np.asarray(table[0][0])), 1e-300)
    if strict and raw_errors[0] > 1e-8 * scale:
        # above the round-off plateau, Richardson must actually help; when
        # the extrapolated column is no better than the raw one the
        # functional is too noisy to differentiate
        if float(np.median(col1)) > 0.25 * float(np.median(raw_errors)):
            raise NoisyFunctionalError(
                f"Richardson ladder not converging: raw {raw_errors}, "
                f"extrapolated {col1}"
            )
    orders = []
    for a, b in zip(col1, col1[1:]):
        if a > 0 and b > 0:
            orders.append(np.log2(a / b))
    order_est = float(np.median(orders)) if orders else float("inf")

    abs_err = _maxabs(np.asarray(best) - np.asarray(ref)) if analytic is not None else raw_errors[-1]
    rel_err = abs_err / max(_maxabs(np.asarray(ref)), 1e-300)
    return VariationReport(
        analytic_value=analytic,
        fd_value=best,
        abs_error=float(abs_err),
        rel_error=float(rel_err),
        step_sequence=step_sequence,
        convergence_order_estimate=order_est,
        derivative_order=order,
    )
