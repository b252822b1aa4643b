"""Entropy functionals on grid metrics and Einstein models.

Grid side: Perelman's lambda (ground eigenvalue of 4 Lap + scal), the
expander entropy mu_plus with its constrained minimizer, first/second
variation formulas, and a Lojasiewicz-exponent fitter for flow traces.

Model side: the shrinker entropy nu_minus in closed form on
constant-scalar-curvature data, the explicit minimizer pair (f, tau) at a
positive Einstein metric, and the shrinker functional W_minus.

Conventions and closed forms used here (all verified in the test suite by
independent constrained minimization):

* mu_plus(g) = inf { Int [ (|df|^2 + scal)/2 - f ] e^{-f} dV : Int e^{-f} dV = 1 }.
  Substituting w = e^{-f/2}, the minimizer solves
      2 Lap w + (scal/2) w + 2 w log w = mu_plus w,   ||w||_{L^2(dV)} = 1,
  equivalently -Lap f - |df|^2/2 + scal/2 - f = mu_plus.
* On constant-scalar-curvature metrics mu_plus = scal/2 - log vol, realized
  by constant w = vol^{-1/2}.
* W_minus(g,f,tau) = (4 pi tau)^{-n/2} Int [ tau(|df|^2 + scal) + f - n ] e^{-f} dV
  under (4 pi tau)^{-n/2} Int e^{-f} dV = 1.
* On constant-scalar-curvature metrics with scal > 0,
      nu_minus = log vol + (n/2) log scal - (n/2)(1 + log(2 pi n)),
  attained at constant f with tau = n/(2 scal).  At a positive Einstein
  metric (Ric = mu g) the minimizer pair is
      tau = 1/(2 mu),   f = log vol - (n/2)(log 2pi - log mu),
  and nu_minus = f - n/2.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
import json
import math

import numpy as np
from scipy.sparse.linalg import LinearOperator, minres

from .eigen import eigen_smallest, schrodinger_apply, solver_laplacian
from .errors import (
    InsufficientDataError,
    NoConvergenceError,
    NonConstantScalarError,
    NonPositiveMuError,
    NonPositiveScalarError,
    NotDivergenceFreeError,
    PositivityLossError,
)
from .grid import MetricField, ScalarField, SymTensorField, _require_same_chart
from .operators import (
    DEFAULT_FD_ORDER,
    _pack_or_compute,
    divergence,
    einstein_operator,
    grad_stack,
    gradient_norm_sq,
    hessian,
    integrate,
    l2_norm,
    volume,
)

_W_FLOOR = 1e-30


@dataclass
class EntropySolveResult:
    """Entropy value with its minimizer data and Euler-Lagrange residual."""

    value: float
    minimizer_w: ScalarField
    minimizer_f: ScalarField
    tau: float | None
    el_residual_l2: float
    iterations: int

    def to_json(self):
        return json.dumps(
            {
                "value": self.value,
                "tau": self.tau,
                "el_residual_l2": self.el_residual_l2,
                "iterations": self.iterations,
            }
        )


def _xlogx(w):
    """w^2 log(w^2) with the integrand limit 0 at w -> 0."""
    w = np.maximum(w, _W_FLOOR)
    return w**2 * 2.0 * np.log(w)


# ---------------------------------------------------------------------------
# lambda functional
# ---------------------------------------------------------------------------


def lambda_perelman(g, pack=None, order=DEFAULT_FD_ORDER, tol=1e-10):
    """Perelman's lambda: smallest eigenvalue of 4 Lap_g + scal_g.

    The eigenvalue route is equivalent to the constrained minimization of
    Int (scal + |df|^2) e^{-f} dV over Int e^{-f} dV = 1 via w = e^{-f/2};
    the equivalence is validated against direct minimization in the tests.
    """
    p = _pack_or_compute(g, pack, order)
    (lam, w), = eigen_smallest(g, a=4.0, V=p.scal, count=1, tol=tol, order=order)
    wv = w.values if float(np.mean(w.values)) >= 0 else -w.values
    if wv.min() <= _W_FLOOR:
        raise PositivityLossError(
            f"ground state not positive (min {wv.min():.3e}); "
            "metric too far from the validated regime"
        )
    w = ScalarField(g.chart, wv)
    f = ScalarField(g.chart, -2.0 * np.log(wv))
    resid = schrodinger_apply(g, 4.0, p.scal, order)(wv) - lam * wv
    return EntropySolveResult(
        value=float(lam),
        minimizer_w=w,
        minimizer_f=f,
        tau=None,
        el_residual_l2=l2_norm(g, ScalarField(g.chart, resid)),
        iterations=0,
    )


# ---------------------------------------------------------------------------
# expander entropy mu_plus
# ---------------------------------------------------------------------------


def w_plus_eval(g, f, pack=None, order=DEFAULT_FD_ORDER):
    """Expander-entropy integrand Int [ (|df|^2 + scal)/2 - f ] e^{-f} dV.

    No normalization constraint is enforced; the caller checks
    Int e^{-f} dV = 1 where needed."""
    _require_same_chart(g, f)
    p = _pack_or_compute(g, pack, order)
    df2 = gradient_norm_sq(g, f, order).values
    integrand = (0.5 * (df2 + p.scal.values) - f.values) * np.exp(-f.values)
    return integrate(g, integrand)


def w_tilde_eval(g, w, pack=None, order=DEFAULT_FD_ORDER):
    """Quadratic form Int [ 2|dw|^2 + scal w^2 / 2 + w^2 log w^2 ] dV."""
    p = _pack_or_compute(g, pack, order)
    dw2 = gradient_norm_sq(g, w, order).values
    integrand = 2.0 * dw2 + 0.5 * p.scal.values * w.values**2 + _xlogx(w.values)
    return integrate(g, integrand)


def _mu_residual(lap, scal, wv, mu):
    return (
        2.0 * lap(wv)
        + (0.5 * scal + 2.0 * np.log(np.maximum(wv, _W_FLOOR))) * wv
        - mu * wv
    )


def solve_mu_plus(g, tol=1e-9, max_newton=40, pack=None, order=DEFAULT_FD_ORDER,
                  init=None):
    """Expander entropy mu_plus(g) by constrained minimization in w = e^{-f/2}.

    Minimizes Int 2|dw|^2 + scal w^2/2 + w^2 log w^2 dV over ||w||_{L^2} = 1,
    w > 0.  Warm start: damped self-consistent ground-state iteration of the
    frozen-potential operator 2 Lap + scal/2 + 2 log w; polish: Newton on the
    Euler-Lagrange system in (w, mu) with a symmetrized bordered MINRES
    solve.  Stops when the EL residual (L^2) is <= tol.
    """
    p = _pack_or_compute(g, pack, order)
    chart = g.chart
    quad_w = g.sqrt_det * chart.cell_volume  # L^2 weights per node
    lap = solver_laplacian(g, order)
    scal = p.scal.values

    def l2norm_w(v):
        return float(np.sqrt(np.sum(v * v * quad_w)))

    if init is not None:
        wv = np.array(init.minimizer_w.values if isinstance(init, EntropySolveResult)
                      else init, dtype=float)
        wv = wv / l2norm_w(wv)
    else:
        wv = np.full(chart.shape, 1.0)
        wv /= l2norm_w(wv)

    iters = 0
    # self-consistent warm start (skipped if already converged)
    for _ in range(12):
        mu = float(np.sum(_mu_residual(lap, scal, wv, 0.0) * wv * quad_w))
        res = l2_norm(g, ScalarField(chart, _mu_residual(lap, scal, wv, mu)))
        if res <= max(tol, 1e-7):
            break
        Vk = ScalarField(chart, 0.5 * p.scal.values
                         + 2.0 * np.log(np.maximum(wv, _W_FLOOR)))
        (_, phi), = eigen_smallest(g, a=2.0, V=Vk, count=1, tol=1e-6,
                                   order=order)
        pv = phi.values if float(np.mean(phi.values)) >= 0 else -phi.values
        pv = np.maximum(pv, _W_FLOOR)
        wv = 0.5 * wv + 0.5 * pv
        wv /= l2norm_w(wv)
        iters += 1

    # Newton polish on the bordered EL system
    s = np.sqrt(quad_w)
    N = chart.node_count
    for _ in range(max_newton):
        mu = float(np.sum(_mu_residual(lap, scal, wv, 0.0) * wv * quad_w))
        R1 = _mu_residual(lap, scal, wv, mu)
        R2 = float(np.sum(wv * wv * quad_w) - 1.0)
        res = l2_norm(g, ScalarField(chart, R1))
        if res <= tol and abs(R2) <= tol:
            break
        logw = np.log(np.maximum(wv, _W_FLOOR))

        def jac(x):
            phi = (x[:N].reshape(chart.shape)) / s
            dmu = x[N]
            top = (
                2.0 * lap(phi)
                + (0.5 * scal + 2.0 * logw + 2.0 - mu) * phi
                - dmu * wv
            )
            bottom = -np.sum((s * wv).ravel() * x[:N])
            return np.concatenate([(s * top).ravel(), [bottom]])

        op = LinearOperator((N + 1, N + 1), matvec=jac, dtype=float)
        rhs = np.concatenate([(-s * R1).ravel(), [0.5 * R2]])
        sol, info = minres(op, rhs, rtol=min(1e-4, max(res, 1e-13)), maxiter=400)
        if info != 0:
            raise NoConvergenceError("mu_plus Newton linear solve stalled",
                                     iterations=iters)
        step = sol[:N].reshape(chart.shape) / s
        # damped update keeping positivity
        alpha = 1.0
        while np.min(wv + alpha * step) <= _W_FLOOR and alpha > 1e-6:
            alpha *= 0.5
        if alpha <= 1e-6:
            raise PositivityLossError("mu_plus minimizer hit the positivity floor")
        wv = wv + alpha * step
        wv /= l2norm_w(wv)
        iters += 1
    else:
        raise NoConvergenceError(
            f"mu_plus solver: EL residual {res:.3e} > tol {tol:.1e}",
            iterations=iters,
        )

    mu = float(np.sum(_mu_residual(lap, scal, wv, 0.0) * wv * quad_w))
    value = w_tilde_eval(g, ScalarField(chart, wv), p, order)
    resid = l2_norm(g, ScalarField(chart, _mu_residual(lap, scal, wv, mu)))
    w = ScalarField(chart, wv)
    f = ScalarField(chart, -2.0 * np.log(np.maximum(wv, _W_FLOOR)))
    return EntropySolveResult(
        value=float(value),
        minimizer_w=w,
        minimizer_f=f,
        tau=None,
        el_residual_l2=resid,
        iterations=iters,
    )


def mu_plus_jensen_bound(g, pack=None, order=DEFAULT_FD_ORDER):
    """Jensen lower bound inf scal / 2 - log vol."""
    p = _pack_or_compute(g, pack, order)
    return 0.5 * float(np.min(p.scal.values)) - math.log(volume(g))


def _expander_gradient_field(g, result, pack, order):
    """Ric + g + Hess f_g at the minimizer (negative L^2(e^{-f}dV)-gradient
    of mu_plus is -1/2 of this)."""
    f = result.minimizer_f
    hf = hessian(g, f, pack, order)
    return SymTensorField(g.chart, pack.ricci.values + g.values + hf.values)


def mu_plus_first_variation(g, h, result=None, pack=None, order=DEFAULT_FD_ORDER):
    """d/dt mu_plus(g + t h) = -(1/2) Int <Ric + g + Hess f, h> e^{-f} dV."""
    _require_same_chart(g, h)
    p = _pack_or_compute(g, pack, order)
    if result is None:
        result = solve_mu_plus(g, pack=p, order=order)
    grad = _expander_gradient_field(g, result, p, order)
    inner = np.einsum(
        "...ia,...jb,...ab,...ij->...", g.inv, g.inv, grad.values, h.values
    )
    weight = result.minimizer_w.values**2  # e^{-f}
    return -0.5 * integrate(g, inner * weight)


def mu_plus_gradient_norm_sq(g, result=None, pack=None, order=DEFAULT_FD_ORDER):
    """Int |Ric + g + Hess f|^2 e^{-f} dV: the expander-entropy production
    rate along the negatively normalized flow."""
    p = _pack_or_compute(g, pack, order)
    if result is None:
        result = solve_mu_plus(g, pack=p, order=order)
    grad = _expander_gradient_field(g, result, p, order)
    inner = np.einsum(
        "...ia,...jb,...ab,...ij->...", g.inv, g.inv, grad.values, grad.values
    )
    return integrate(g, inner * result.minimizer_w.values**2)


def mu_plus_second_variation_divfree(g, h, pack=None, order=DEFAULT_FD_ORDER,
                                     div_tol=1e-6):
    """Second variation of mu_plus on divergence-free directions at an
    Einstein background normalized to constant -1:
        mu''(h) = -(1/4) avg Int <Delta_E h, h> dV.
    On a flat background the curvature terms vanish and the same quadratic
    form probes the rough-Laplacian structure (structural mode).  Raises
    NotDivergenceFreeError when ||div h|| > div_tol * ||h||."""
    _require_same_chart(g, h)
    p = _pack_or_compute(g, pack, order)
    dh = divergence(g, h, p, order)
    nh = l2_norm(g, h)
    if l2_norm(g, dh) > div_tol * max(nh, 1e-300):
        raise NotDivergenceFreeError(
            f"||div h|| = {l2_norm(g, dh):.3e} > {div_tol:.1e} * ||h||; "
            "project the direction first"
        )
    eh = einstein_operator(g, h, p, order)
    inner = np.einsum(
        "...ia,...jb,...ab,...ij->...", g.inv, g.inv, eh.values, h.values
    )
    return -0.25 * integrate(g, inner) / volume(g)


# ---------------------------------------------------------------------------
# shrinker entropy: W_minus and closed forms
# ---------------------------------------------------------------------------


def w_minus_eval(g, f, tau, pack=None, order=DEFAULT_FD_ORDER):
    """Shrinker functional
    (4 pi tau)^{-n/2} Int [ tau(|df|^2 + scal) + f - n ] e^{-f} dV.
    No constraint enforced; see w_minus_constraint."""
    _require_same_chart(g, f)
    if tau <= 0:
        raise ValueError("tau must be positive")
    p = _pack_or_compute(g, pack, order)
    n = g.chart.dim
    df2 = gradient_norm_sq(g, f, order).values
    integrand = (tau * (df2 + p.scal.values) + f.values - n) * np.exp(-f.values)
    return (4.0 * math.pi * tau) ** (-n / 2.0) * integrate(g, integrand)


def w_minus_constraint(g, f, tau):
    """(4 pi tau)^{-n/2} Int e^{-f} dV; admissible pairs give 1."""
    n = g.chart.dim
    return (4.0 * math.pi * tau) ** (-n / 2.0) * integrate(g, np.exp(-f.values))


def nu_minus_csc_value(n, vol, scal):
    """Closed-form shrinker entropy of a constant-scalar-curvature metric:
    log vol + (n/2) log scal - (n/2)(1 + log(2 pi n)), from minimizing over
    constant f and tau (optimal tau = n / (2 scal))."""
    if scal <= 0:
        raise NonPositiveScalarError(f"need scal > 0, got {scal}")
    n = float(n)
    return math.log(vol) + 0.5 * n * math.log(scal) - 0.5 * n * (
        1.0 + math.log(2.0 * math.pi * n)
    )


def nu_minus_csc(g, pack=None, order=DEFAULT_FD_ORDER, const_tol=1e-8):
    """Shrinker entropy of a grid metric with constant positive scalar
    curvature, by the closed form.  Raises NonConstantScalarError /
    NonPositiveScalarError when the hypotheses fail (every flat-torus chart
    does: scal = 0 there)."""
    p = _pack_or_compute(g, pack, order)
    sv = p.scal.values
    mean = float(np.mean(sv))
    spread = float(np.max(sv) - np.min(sv))
    if spread > const_tol * max(1.0, abs(mean)):
        raise NonConstantScalarError(
            f"scal spread {spread:.3e} exceeds tolerance; not CSC"
        )
    if mean <= const_tol:
        raise NonPositiveScalarError(f"mean scal {mean:.3e} not positive")
    return nu_minus_csc_value(g.chart.dim, volume(g), mean)


def soliton_pair(n, mu, vol):
    """Minimizer pair (f, tau) of the shrinker entropy at a positive
    Einstein metric Ric = mu g: tau = 1/(2 mu) (exact Fraction when mu is
    rational), f = log vol - (n/2)(log 2pi - log mu)."""
    if mu <= 0:
        raise NonPositiveMuError(f"need mu > 0, got {mu}")
    tau = Fraction(1, 2) / Fraction(mu) if isinstance(mu, (int, Fraction)) else 1.0 / (2.0 * mu)
    f = math.log(vol) - 0.5 * n * (math.log(2.0 * math.pi) - math.log(mu))
    return f, tau


def shrinker_equations_residual(n, mu, vol, f, tau, nu):
    """Residuals of the two minimizer equations at constant f on an Einstein
    background (scal = n mu, |df| = 0):
        tau (2 Lap f + |df|^2 - scal) - f + n + nu  -> -tau scal - f + n + nu
        weighted average of f                        -> f - (n/2 + nu)
    Both vanish identically at the closed-form pair."""
    scal = n * float(mu)
    r1 = -float(tau) * scal - f + n + nu
    r2 = f - (0.5 * n + nu)
    return r1, r2


def w_minus_at_pair(n, mu, vol):
    """W_minus evaluated at the soliton pair (constant f, tau = 1/(2 mu)):
    reduces to tau*scal + f - n = f - n/2.  Must equal the CSC closed form."""
    f, tau = soliton_pair(n, mu, vol)
    return float(tau) * (n * float(mu)) + f - n


# ---------------------------------------------------------------------------
# Lojasiewicz fit
# ---------------------------------------------------------------------------


@dataclass
class LojasiewiczFit:
    """Exponent estimates from a flow trace.

    sigma_estimate is reported only when the fit residual is below the
    threshold; theta_estimate = 1 - sigma (the eta -> 0 limit of the decay
    bookkeeping exponent)."""

    sigma_estimate: float | None
    theta_estimate: float | None
    decay_exponent: float | None
    sigma_from_decay: float | None
    fit_window: tuple
    fit_residual: float

    def to_json(self):
        return json.dumps(
            {
                "sigma_estimate": self.sigma_estimate,
                "theta_estimate": self.theta_estimate,
                "decay_exponent": self.decay_exponent,
                "sigma_from_decay": self.sigma_from_decay,
                "fit_window": list(self.fit_window),
                "fit_residual": self.fit_residual,
            }
        )


def _linear_fit(x, y):
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return float(coef[0]), float(coef[1]), resid


def lojasiewicz_fit(times, values, reference_value, grad_norms=None,
                    gap_floor=1e-13, residual_threshold=0.1):
    """Fit the gradient-inequality exponent sigma and the decay exponent
    from entropy values along a flow.

    |value - reference|^sigma <= C * grad_norm gives, at saturation,
    log grad = sigma log gap - log C, so sigma is the slope of log grad
    against log gap.  The decay fit regresses log gap on log(t+1); a gap
    ~ (t+1)^(-beta) corresponds to sigma = (1 + 1/beta)/2.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    gaps = np.abs(values - reference_value)
    mask = gaps > gap_floor
    if grad_norms is not None:
        grad_norms = np.asarray(grad_norms, dtype=float)
        mask &= grad_norms > gap_floor
    if int(mask.sum()) < 4:
        raise InsufficientDataError(
            f"only {int(mask.sum())} usable points (need >= 4)"
        )
    t, gap = times[mask], gaps[mask]

    decay_slope, _, decay_resid = _linear_fit(np.log(t + 1.0), np.log(gap))
    beta = -decay_slope
    sigma_decay = 0.5 * (1.0 + 1.0 / beta) if beta > 1e-12 else None

    if grad_norms is not None:
        gn = grad_norms[mask]
        sigma, _, resid = _linear_fit(np.log(gap), np.log(gn))
    else:
        sigma, resid = sigma_decay, decay_resid

    fit_residual = float(resid)
    ok = fit_residual <= residual_threshold
    return LojasiewiczFit(
        sigma_estimate=float(sigma) if ok and sigma is not None else None,
        theta_estimate=(1.0 - float(sigma)) if ok and sigma is not None else None,
        decay_exponent=float(decay_slope),
        sigma_from_decay=float(sigma_decay) if sigma_decay is not None else None,
        fit_window=(float(t[0]), float(t[-1])),
        fit_residual=fit_residual,
    )
