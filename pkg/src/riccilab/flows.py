"""Geometric flow integration on grid metrics with gauge fixing, entropy
monitors, homothety equivalence, and stability experiments.

Flow variants (right-hand sides for dg/dt):
  standard             : -2 Ric
  negative_normalized  : -2 (Ric + g)      (fixed points: Einstein, const -1)
  tau                  : -2 Ric + g / tau_g  (gated: needs lambda(g) > 0,
                         which no flat-chart backend provides)

A solution g(t) of the standard flow and
gtilde(t) = exp(-2t) g((exp(2t) - 1)/2) of the negatively normalized flow
are the same trajectory up to homothety; `homothety_transform` applies the
time-and-scale map to a standard trace so it can be compared against a
direct negatively-normalized run.

Gauge: the DeTurck vector field W^k = g^{ij}(Gamma^k_ij(g) - Gamma^k_ij(gbar))
against a flat reference makes the flow strictly parabolic near flat
metrics; the Lie-derivative term L_W g is added to the right-hand side from
t = 0 on.  Entropy diagnostics are diffeomorphism invariant, so monitors
are unaffected by the gauge.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.interpolate import CubicSpline

from .entropy import (
    lambda_perelman,
    mu_plus_gradient_norm_sq,
    solve_mu_plus,
)
from .errors import (
    CFLViolationError,
    InsufficientSnapshotsError,
    MetricDegenerateError,
    NonPositiveDefiniteError,
    TauFlowUnavailableError,
)
from .grid import MetricField, OneFormField
from .operators import (
    DEFAULT_FD_ORDER,
    c0_distance,
    christoffel,
    covariant_oneform,
    curvature,
    l2_norm,
    integrate,
)
from .grid import SymTensorField

DEFAULT_CFL_FACTOR = 0.1
DEFAULT_SNAPSHOT_STRIDE = 10


@dataclass
class FlowKind:
    """Flow variant plus gauge choice."""

    kind: str = "standard"  # standard | negative_normalized | tau
    gauge: str | None = None  # None | "deturck"
    gauge_ref: MetricField | None = None

    def __post_init__(self):
        if self.kind not in ("standard", "negative_normalized", "tau"):
            raise ValueError(f"unknown flow kind {self.kind!r}")
        if self.gauge not in (None, "deturck"):
            raise ValueError(f"unknown gauge {self.gauge!r}")


@dataclass
class FlowTrace:
    """Time series of a flow run: strided metric snapshots plus per-step
    diagnostics.  `events` records early halts (metric floor, CFL)."""

    kind: FlowKind
    dt: float
    times: list = field(default_factory=list)
    snapshot_times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    events: list = field(default_factory=list)

    def diag(self, key):
        return np.asarray(self.diagnostics.get(key, []))


def deturck_vector(g, pack=None, ref=None, order=DEFAULT_FD_ORDER):
    """W^k = g^{ij}(Gamma^k_ij(g) - Gamma^k_ij(ref)), flat ref by default."""
    if pack is None:
        pack = curvature(g, order)
    Gv = pack.christoffel.values
    if ref is not None:
        Gv = Gv - christoffel(ref, order).values
    return np.einsum("...ij,...kij->...k", g.inv, Gv)


def flow_rhs(g, kind, pack=None, order=DEFAULT_FD_ORDER, tau_value=None):
    """Right-hand side array for dg/dt of the chosen flow variant."""
    if pack is None:
        pack = curvature(g, order)
    rhs = -2.0 * pack.ricci.values
    if kind.kind == "negative_normalized":
        rhs = rhs - 2.0 * g.values
    elif kind.kind == "tau":
        if tau_value is None or tau_value <= 0:
            raise TauFlowUnavailableError(
                "tau-flow needs the shrinker scale tau_g > 0"
            )
        rhs = rhs + g.values / tau_value
    if kind.gauge == "deturck":
        W = deturck_vector(g, pack, kind.gauge_ref, order)
        w_form = OneFormField(g.chart, np.einsum("...jk,...k->...j", g.values, W))
        Dw = covariant_oneform(g, w_form, pack, order)
        rhs = rhs + Dw + np.swapaxes(Dw, -1, -2)
    return rhs


def cfl_bound(g, cfl_factor=DEFAULT_CFL_FACTOR):
    """dt <= cfl_factor * (min dx)^2 / max |g^{-1}|."""
    return cfl_factor * min(g.chart.spacing) ** 2 / g.max_inverse_norm


def ricci_l2_norm(g, pack=None, order=DEFAULT_FD_ORDER):
    if pack is None:
        pack = curvature(g, order)
    return l2_norm(g, pack.ricci)


def flow_run(g0, kind=None, T=1.0, dt=None, cfl_factor=DEFAULT_CFL_FACTOR,
             snapshot_stride=DEFAULT_SNAPSHOT_STRIDE, monitor=None,
             monitor_stride=1, g_ref=None, order=DEFAULT_FD_ORDER,
             entropy_tol=1e-9):
    """Integrate a flow with explicit RK4 and a fixed CFL-respecting step.

    monitor: None, "mu_plus" or "lambda"; evaluated every monitor_stride
    steps together with the entropy production integrand (for mu_plus) and
    distance diagnostics.  Halts early with a recorded event if the metric
    hits its positivity floor or the CFL bound drops below dt.
    """
    kind = kind or FlowKind()
    g_ref = g_ref or g0
    bound = cfl_bound(g0, cfl_factor)
    if dt is None:
        n_steps = max(1, int(math.ceil(T / bound)))
        dt = T / n_steps
    else:
        if dt > bound * (1 + 1e-12):
            raise CFLViolationError(
                f"dt = {dt:.3e} exceeds CFL bound {bound:.3e}"
            )
        # land exactly on T without exceeding the requested step
        n_steps = max(1, int(math.ceil(T / dt - 1e-12)))
        dt = T / n_steps

    if kind.kind == "tau":
        # flat-chart backends have lambda(g) <= 0, where the shrinker scale
        # is not defined; gate loudly (documented in the module docstring)
        lam = lambda_perelman(g0, order=order).value
        if lam <= 0:
            raise TauFlowUnavailableError(
                f"lambda(g0) = {lam:.3e} <= 0: shrinker scale undefined on "
                "this backend"
            )
        raise TauFlowUnavailableError(
            "tau-flow positive-lambda backends are not implemented on flat "
            "charts"
        )

    trace = FlowTrace(kind=kind, dt=dt)
    diagnostics = {
        "t": [], "min_eig": [], "dist_c0": [], "dist_l2": [], "dt": [],
        "entropy": [], "entropy_t": [], "grad_norm_sq": [],
    }
    g = g0
    warm = None

    def record_step(t, g):
        diagnostics["t"].append(t)
        diagnostics["min_eig"].append(g.eig_range[0])
        diagnostics["dist_c0"].append(c0_distance(g, g_ref))
        diff = SymTensorField(g.chart, g.values - g_ref.values)
        diagnostics["dist_l2"].append(l2_norm(g, diff))
        diagnostics["dt"].append(dt)

    def record_monitor(t, g):
        nonlocal warm
        if monitor == "mu_plus":
            res = solve_mu_plus(g, tol=entropy_tol, order=order, init=warm)
            warm = res
            pack = curvature(g, order)
            diagnostics["entropy"].append(res.value)
            diagnostics["grad_norm_sq"].append(
                mu_plus_gradient_norm_sq(g, res, pack, order)
            )
            diagnostics["entropy_t"].append(t)
        elif monitor == "lambda":
            res = lambda_perelman(g, order=order)
            diagnostics["entropy"].append(res.value)
            diagnostics["grad_norm_sq"].append(float("nan"))
            diagnostics["entropy_t"].append(t)

    record_step(0.0, g)
    record_monitor(0.0, g)
    trace.snapshot_times.append(0.0)
    trace.snapshots.append(g)

    chart = g0.chart
    t = 0.0
    for step in range(1, n_steps + 1):
        try:
            k1 = flow_rhs(g, kind, order=order)
            g2 = MetricField(chart, g.values + 0.5 * dt * k1)
            k2 = flow_rhs(g2, kind, order=order)
            g3 = MetricField(chart, g.values + 0.5 * dt * k2)
            k3 = flow_rhs(g3, kind, order=order)
            g4 = MetricField(chart, g.values + dt * k3)
            k4 = flow_rhs(g4, kind, order=order)
            g = MetricField(
                chart, g.values + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            )
        except NonPositiveDefiniteError as exc:
            trace.events.append(
                {"type": "MetricDegenerate", "time": t, "detail": str(exc)}
            )
            break
        except ValueError as exc:
            # non-finite values from a blown-up stage
            trace.events.append(
                {"type": "NumericalBlowup", "time": t, "detail": str(exc)}
            )
            break
        t = step * dt
        trace.times.append(t)
        record_step(t, g)
        if step % monitor_stride == 0 or step == n_steps:
            record_monitor(t, g)
        if step % snapshot_stride == 0 or step == n_steps:
            trace.snapshot_times.append(t)
            trace.snapshots.append(g)
        new_bound = cfl_bound(g, cfl_factor)
        if dt > new_bound * (1 + 1e-12) and not any(
            e["type"] == "CFLBoundShrank" for e in trace.events
        ):
            # the bound is a start-time precondition; a shrinking metric
            # tightens it without activating the parabolic stiffness it
            # guards, so warn once and keep integrating
            trace.events.append(
                {"type": "CFLBoundShrank", "time": t,
                 "detail": f"bound shrank to {new_bound:.3e} < dt"}
            )
    trace.diagnostics = diagnostics
    return trace


def homothety_transform(trace, times_out=None):
    """Map a standard-flow trace to the negatively-normalized trajectory
    gtilde(s) = exp(-2s) g((exp(2s) - 1)/2) via cubic interpolation in t of
    the snapshots.  Returns (times, [MetricField]) on `times_out` (default:
    the densest admissible uniform grid of the same length)."""
    if trace.kind.kind != "standard":
        raise ValueError("homothety transform applies to standard-flow traces")
    if len(trace.snapshots) < 4:
        raise InsufficientSnapshotsError(
            f"need >= 4 snapshots for cubic interpolation, have {len(trace.snapshots)}"
        )
    t_snap = np.asarray(trace.snapshot_times)
    stack = np.stack([s.values for s in trace.snapshots], axis=0)
    spline = CubicSpline(t_snap, stack, axis=0)
    s_max = 0.5 * math.log1p(2.0 * t_snap[-1])
    if times_out is None:
        times_out = np.linspace(0.0, s_max, len(t_snap))
    times_out = np.asarray(times_out, dtype=float)
    if np.any(times_out > s_max * (1 + 1e-12)):
        raise InsufficientSnapshotsError(
            f"requested time beyond transformed range {s_max:.4f}"
        )
    chart = trace.snapshots[0].chart
    out = []
    for s in times_out:
        tau = 0.5 * (math.exp(2.0 * s) - 1.0)
        out.append(MetricField(chart, math.exp(-2.0 * s) * spline(tau)))
    return times_out, out


def monotonicity_monitor(trace, tol=1e-8):
    """Per-step entropy increments along a monitored trace; flags decreases
    beyond -tol and compares the measured d(entropy)/dt against the analytic
    production integrand (grad_norm_sq diagnostics, mu_plus monitor only)."""
    tvals = trace.diag("entropy_t")
    vals = trace.diag("entropy")
    if len(vals) < 2:
        raise InsufficientSnapshotsError("trace carries no entropy series")
    increments = np.diff(vals)
    violations = [
        {"time": float(tvals[i + 1]), "increment": float(increments[i])}
        for i in np.nonzero(increments < -tol)[0]
    ]
    report = {
        "increments": increments.tolist(),
        "min_increment": float(np.min(increments)),
        "violations": violations,
        "monotone_within_tol": len(violations) == 0,
    }
    gn = trace.diag("grad_norm_sq")
    if len(gn) == len(vals) and np.all(np.isfinite(gn)) and len(vals) >= 3:
        measured = (vals[2:] - vals[:-2]) / (tvals[2:] - tvals[:-2])
        analytic = gn[1:-1]
        denom = np.maximum(np.abs(analytic), 1e-300)
        gaps = np.abs(measured - analytic) / denom
        report["dmu_dt_measured"] = measured.tolist()
        report["dmu_dt_analytic"] = analytic.tolist()
        report["max_rel_gap_dmu_dt"] = float(np.max(gaps))
    return report


def instability_probe(g_ref, direction, amplitudes, kind=None, eps=1e-2,
                      T=1.0, monitor="mu_plus", order=DEFAULT_FD_ORDER,
                      **flow_kwargs):
    """Amplitude-ladder escape experiment around a reference metric.

    For each amplitude a, runs the chosen flow from g_ref + a*direction and
    records the first time the C^0 distance to g_ref exceeds eps, plus the
    entropy series.  Reports whether escape times are monotone (smaller
    amplitudes escape later or not at all), the expected signature when the
    departure is driven by the background instability rather than by the
    perturbation itself.
    """
    kind = kind or FlowKind()
    chart = g_ref.chart
    runs = []
    for a in amplitudes:
        g0 = MetricField(chart, g_ref.values + a * direction.values)
        trace = flow_run(g0, kind=kind, T=T, monitor=monitor, g_ref=g_ref,
                         order=order, **flow_kwargs)
        dist = trace.diag("dist_c0")
        tgrid = trace.diag("t")
        esc = np.nonzero(dist > eps)[0]
        escape_time = float(tgrid[esc[0]]) if len(esc) else None
        vals = trace.diag("entropy")
        gap_increasing = bool(np.all(np.diff(vals) > -1e-8)) if len(vals) > 1 else None
        runs.append(
            {
                "amplitude": float(a),
                "escape_time": escape_time,
                "escaped": escape_time is not None,
                "entropy_gap_increasing": gap_increasing,
                "final_dist_c0": float(dist[-1]),
                "trace": trace,
            }
        )
    esc_times = [r["escape_time"] for r in runs]
    ordered = True
    for hi, lo in zip(esc_times, esc_times[1:]):  # amplitudes descending
        hi_t = math.inf if hi is None else hi
        lo_t = math.inf if lo is None else lo
        if lo_t < hi_t - 1e-12:
            ordered = False
    return {
        "runs": runs,
        "escape_times_monotone": ordered,
        "amplitudes": [float(a) for a in amplitudes],
    }
