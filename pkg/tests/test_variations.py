import numpy as np
import pytest

from conftest import random_oneform, random_scalar, random_sym
from riccilab.errors import NoisyFunctionalError, StepUnderflowError
from riccilab.grid import GridChart, MetricField, ScalarField, SymTensorField
from riccilab.operators import (
    curvature,
    div_adjoint,
    hessian,
    integrate,
    laplacian,
    volume,
)
from riccilab.variations import (
    VariationReport,
    conformal_curve_second_variation,
    conformal_second_variations,
    fd_directional,
    laplacian_prime_covariant,
    ricci_prime_covariant,
    scal_prime_covariant,
    vary_connection,
    vary_curvature,
    vary_hessian_laplacian,
)


def _fd_field(g, h, mapfn, t0=1e-3):
    chart = g.chart
    vals = {}
    for t in (t0, t0 / 2, -t0, -t0 / 2):
        vals[t] = mapfn(MetricField(chart, g.values + t * h.values))
    d1 = (vals[t0] - vals[-t0]) / (2 * t0)
    d2 = (vals[t0 / 2] - vals[-t0 / 2]) / t0
    return (4 * d2 - d1) / 3


@pytest.fixture(scope="module")
def setup():
    chart = GridChart((16, 16, 16), (2 * np.pi,) * 3)
    u = random_scalar(chart, 201, amplitude=0.12).values
    g = MetricField.conformal_flat(chart, u)
    h = random_sym(chart, 202, amplitude=0.4)
    f = random_scalar(chart, 203)
    return chart, g, h, f, curvature(g)


def test_vary_connection_trivial_and_exact(setup):
    chart, g, h, f, pack = setup
    zero = SymTensorField.zero(chart)
    assert np.max(np.abs(vary_connection(g, zero, pack).values)) == 0.0
    # h = c g has covariant-constant h: G = 0
    cg = SymTensorField(chart, 0.3 * g.values)
    assert np.max(np.abs(vary_connection(g, cg, pack).values)) < 1e-11
    G = vary_connection(g, h, pack)
    fd = _fd_field(g, h, lambda gt: curvature(gt).christoffel.values)
    assert np.max(np.abs(G.values - fd)) < 1e-9


def test_vary_curvature_exact_linearization(setup):
    chart, g, h, f, pack = setup
    out = vary_curvature(g, h, pack)
    fd_ric = _fd_field(g, h, lambda gt: curvature(gt).ricci.values)
    fd_scal = _fd_field(g, h, lambda gt: curvature(gt).scal.values)
    fd_riem = _fd_field(g, h, lambda gt: curvature(gt).riemann.values)
    fd_dens = _fd_field(g, h, lambda gt: gt.sqrt_det)
    assert np.max(np.abs(out["ricci"].values - fd_ric)) < 1e-8
    assert np.max(np.abs(out["scal"].values - fd_scal)) < 1e-8
    assert np.max(np.abs(out["riemann"] - fd_riem)) < 1e-8
    assert np.max(np.abs(out["dV"].values * g.sqrt_det - fd_dens)) < 1e-10


def test_flat_scal_prime_drops_ricci_term(flat16):
    h = random_sym(flat16.chart, 211)
    out = vary_curvature(flat16, h)
    cov = scal_prime_covariant(flat16, h)
    # on the flat background the <Ric, h> term vanishes identically, so the
    # covariant form reduces to Lap(tr h) + div div h exactly
    from riccilab.operators import divergence_oneform, divergence
    trh = ScalarField(flat16.chart,
                      np.einsum("...ij,...ij->...", flat16.inv, h.values))
    reduced = laplacian(flat16, trh).values + divergence_oneform(
        flat16, divergence(flat16, h)).values
    assert np.max(np.abs(cov.values - reduced)) < 1e-13
    # and both routes agree at the discretization order
    scale = np.max(np.abs(out["scal"].values)) + 1e-30
    assert np.max(np.abs(out["scal"].values - cov.values)) < 5e-3 * scale


def test_diffeo_direction_kills_flat_ricci_prime(flat16):
    w = random_oneform(flat16.chart, 212)
    h = div_adjoint(flat16, w)
    out = vary_curvature(flat16, h)
    assert np.max(np.abs(out["ricci"].values)) < 1e-11


def test_covariant_forms_converge_to_exact():
    errs = {}
    for N in (16, 24, 32):
        chart = GridChart((N, N, N), (2 * np.pi,) * 3)
        u = random_scalar(chart, 221, amplitude=0.1).values
        g = MetricField.conformal_flat(chart, u)
        h = random_sym(chart, 222, amplitude=0.4)
        pack = curvature(g)
        out = vary_curvature(g, h, pack)
        ric_gap = np.max(np.abs(
            ricci_prime_covariant(g, h, pack).values - out["ricci"].values
        ))
        scal_gap = np.max(np.abs(
            scal_prime_covariant(g, h, pack).values - out["scal"].values
        ))
        f = random_scalar(chart, 223)
        vh = vary_hessian_laplacian(g, h, f, pack)
        lap_gap = np.max(np.abs(
            laplacian_prime_covariant(g, h, f, pack).values
            - vh["laplacian"].values
        ))
        errs[N] = (ric_gap, scal_gap, lap_gap)
    for i in range(3):
        slope = np.log(errs[16][i] / errs[32][i]) / np.log(32 / 16)
        assert slope > 3.0, (i, errs)


def test_vary_hessian_laplacian(setup):
    chart, g, h, f, pack = setup
    out = vary_hessian_laplacian(g, h, f, pack)
    fd_hess = _fd_field(g, h, lambda gt: hessian(gt, f).values)
    fd_lap = _fd_field(g, h, lambda gt: laplacian(gt, f).values)
    assert np.max(np.abs(out["hessian"].values - fd_hess)) < 1e-9
    assert np.max(np.abs(out["laplacian"].values - fd_lap)) < 1e-9
    # f constant -> both variations vanish
    c = ScalarField.constant(chart, 2.0)
    out0 = vary_hessian_laplacian(g, h, c, pack)
    assert np.max(np.abs(out0["hessian"].values)) < 1e-15
    assert np.max(np.abs(out0["laplacian"].values)) < 1e-15


def test_hessian_variation_trace_identity(setup):
    # h = g: Lap' f = -<g-trace reduction> = -Lap f + <g,Hess f> terms;
    # exact identity: h^{ij} Hess_{ij} = tr Hess = -Lap f and the connection
    # term vanishes (G(g) has g^{ij}G^k_{ij} = 0 for h = g)
    chart, g, _, f, pack = setup
    hg = SymTensorField(chart, g.values.copy())
    out = vary_hessian_laplacian(g, hg, f, pack)
    lap = laplacian(g, f, pack)
    assert np.max(np.abs(out["laplacian"].values + lap.values)) < 1e-11


def test_conformal_second_variation_general_vs_fd(setup):
    chart, g, _, _, pack = setup
    v = random_scalar(chart, 231, amplitude=0.3)
    cs = conformal_second_variations(g, v, pack=pack)

    def scal_of(gt):
        return curvature(gt).scal.values

    t0 = 2e-3
    vals = {}
    for t in (t0, t0 / 2, -t0, -t0 / 2, 0.0):
        gt = MetricField(chart, (1 + t * v.values)[..., None, None] * g.values)
        vals[t] = scal_of(gt)
    D1 = (vals[t0] - 2 * vals[0.0] + vals[-t0]) / t0**2
    D2 = (vals[t0 / 2] - 2 * vals[0.0] + vals[-t0 / 2]) / (t0 / 2) ** 2
    fd2 = (4 * D2 - D1) / 3
    scale = np.max(np.abs(fd2))
    # continuum formula vs discrete operators: discretization-order agreement
    assert np.max(np.abs(cs["scal"].values - fd2)) < 2e-2 * scale
    # curve-differentiated route is the exact derivative of the analytic
    # first variation: matches FD tightly
    curve = conformal_curve_second_variation(g, v)
    assert np.max(np.abs(curve["scal"].values - fd2)) < 1e-6 * scale


def test_conformal_second_variation_einstein_flags(flat16):
    chart = flat16.chart
    v = random_scalar(chart, 232, amplitude=0.2)
    out = conformal_second_variations(flat16, v, einstein_mu=0.0)
    assert "scal_einstein" in out and "ricci_einstein" in out
    # flat background, mu = 0: closed form keeps only the gradient terms
    n = 3
    from riccilab.operators import gradient_norm_sq

    dv2 = gradient_norm_sq(flat16, v).values
    expected = (n - 1) * (3 - n / 2) * dv2
    assert np.max(np.abs(out["scal_einstein"].values - expected)) < 1e-12
    from riccilab.errors import NonEinsteinBackgroundError

    curved = MetricField.conformal_flat(chart, 0.05 * np.sin(chart.coords()[0]))
    with pytest.raises(NonEinsteinBackgroundError):
        conformal_second_variations(curved, v, einstein_mu=1.0)


def test_conformal_constant_direction(setup):
    # v constant c: |dv|^2 = 0, Hess v = 0, Lap v = 0: scal'' = 2 scal c^2
    chart, g, _, _, pack = setup
    c = 0.7
    v = ScalarField.constant(chart, c)
    cs = conformal_second_variations(g, v, pack=pack)
    assert np.max(np.abs(cs["scal"].values - 2 * pack.scal.values * c**2)) < 1e-12


def test_second_variation_bilinear_scaling(setup):
    # doubling the direction scales every second-variation output by 4
    chart, g, _, _, pack = setup
    v = random_scalar(chart, 233, amplitude=0.1)
    v2 = ScalarField(chart, 2.0 * v.values)
    a = conformal_second_variations(g, v, pack=pack)
    b = conformal_second_variations(g, v2, pack=pack)
    assert np.allclose(b["scal"].values, 4.0 * a["scal"].values, rtol=0, atol=1e-11)
    assert np.allclose(b["ricci"].values, 4.0 * a["ricci"].values, rtol=0, atol=1e-11)


def test_fd_directional_volume_and_orders(setup):
    chart, g, h, f, pack = setup
    hg = SymTensorField(chart, g.values.copy())
    n = 3
    rep = fd_directional(volume, g, hg, order=1, analytic=n / 2 * volume(g))
    assert rep.rel_error < 1e-10
    assert rep.convergence_order_estimate >= 3.0
    # total scalar curvature first variation vs analytic integrand
    def total_scal(gt):
        pack_t = curvature(gt)
        return integrate(gt, pack_t.scal.values)

    out = vary_curvature(g, h, pack)
    analytic = integrate(g, out["scal"].values + pack.scal.values * out["dV"].values)
    rep2 = fd_directional(total_scal, g, h, order=1, analytic=analytic)
    assert rep2.rel_error < 1e-8
    # quadratic functional: second derivative exact
    def quad(gt):
        d = gt.values - g.values
        return float(np.sum(d * d))

    rep3 = fd_directional(quad, g, h, order=2, analytic=2.0 * float(np.sum(h.values**2)))
    assert rep3.rel_error < 1e-9


def test_diffeo_invariance_total_scal(setup):
    # first variation of total scalar curvature along diffeomorphism
    # directions reduces to a divergence: zero on the flat background
    chart, g, h, f, pack = setup
    flat = MetricField.flat(chart)
    w = random_oneform(chart, 241)
    hdiff = div_adjoint(flat, w)

    def total_scal(gt):
        return integrate(gt, curvature(gt).scal.values)

    # derivative is machine-zero; disable the noise heuristic, which keys
    # off the ratio to the (vanishing) derivative scale
    rep = fd_directional(total_scal, flat, hdiff, order=1, analytic=0.0,
                         strict=False)
    assert rep.abs_error < 1e-9


def test_report_json_and_errors(setup):
    chart, g, h, f, pack = setup
    rep = fd_directional(volume, g, h, order=1)
    payload = rep.to_json()
    assert "step_sequence" in payload and "convergence_order_estimate" in payload
    with pytest.raises(StepUnderflowError):
        fd_directional(volume, g, h, order=1, t0=1e-12)
    def noisy(gt):
        v = volume(gt)
        return v + 1e-3 * np.sin(1e7 * v)

    with pytest.raises(NoisyFunctionalError):
        fd_directional(noisy, g, h, order=1, levels=5)
