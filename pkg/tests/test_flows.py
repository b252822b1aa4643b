import math

import numpy as np
import pytest

from conftest import random_scalar, random_sym
from riccilab.entropy import solve_mu_plus
from riccilab.errors import (
    CFLViolationError,
    InsufficientSnapshotsError,
    TauFlowUnavailableError,
)
from riccilab.flows import (
    FlowKind,
    cfl_bound,
    deturck_vector,
    flow_run,
    homothety_transform,
    instability_probe,
    monotonicity_monitor,
    ricci_l2_norm,
)
from riccilab.grid import GridChart, MetricField, SymTensorField
from riccilab.operators import c0_distance, curvature


@pytest.fixture(scope="module")
def perturbed():
    chart = GridChart((16, 16, 16), (2 * np.pi,) * 3)
    u = random_scalar(chart, 401, amplitude=1e-2).values
    return MetricField.conformal_flat(chart, u)


def test_flat_is_stationary(flat16):
    trace = flow_run(flat16, FlowKind("standard"), T=1.0)
    assert max(trace.diag("dist_c0")) < 1e-10
    assert not trace.events


def test_negative_normalized_closed_form(flat16):
    trace = flow_run(flat16, FlowKind("negative_normalized"), T=1.0)
    gT = trace.snapshots[-1]
    exact = math.exp(-2.0) * flat16.values
    assert np.max(np.abs(gT.values - exact)) < 1e-6


def test_cfl_violation_and_kind_validation(flat16):
    with pytest.raises(CFLViolationError):
        flow_run(flat16, FlowKind("standard"), T=0.1, dt=10.0)
    with pytest.raises(ValueError):
        FlowKind("upwind")
    with pytest.raises(ValueError):
        FlowKind("standard", gauge="harmonic")


def test_tau_flow_gated(flat16):
    with pytest.raises(TauFlowUnavailableError):
        flow_run(flat16, FlowKind("tau"), T=0.1)


def test_metric_degenerate_event(flat16):
    # negatively normalized shrink from a barely-positive metric must hit
    # the floor and record the event instead of emitting NaNs
    chart = flat16.chart
    g0 = MetricField(chart, 2e-4 * flat16.values, eig_floor=1e-6)
    trace = flow_run(g0, FlowKind("negative_normalized"), T=3.0,
                     cfl_factor=0.05)
    kinds = {e["type"] for e in trace.events}
    assert "MetricDegenerate" in kinds
    for key in ("dist_c0", "min_eig"):
        assert np.all(np.isfinite(trace.diag(key)))


def test_deturck_vector_flat_zero(flat16):
    W = deturck_vector(flat16, ref=MetricField.flat(flat16.chart))
    assert np.max(np.abs(W)) < 1e-13


def test_homothety_equivalence(perturbed):
    T_neg = 0.25
    T_std = 0.5 * (math.exp(2 * T_neg) - 1.0)
    discrepancies = []
    for dt0 in (4e-3, 2e-3):
        tr_std = flow_run(perturbed, FlowKind("standard"), T=T_std, dt=dt0,
                          snapshot_stride=1)
        _, transformed = homothety_transform(tr_std, times_out=[T_neg])
        tr_neg = flow_run(perturbed, FlowKind("negative_normalized"),
                          T=T_neg, dt=dt0)
        discrepancies.append(
            c0_distance(transformed[0], tr_neg.snapshots[-1])
        )
    assert discrepancies[-1] < 1e-5
    order = math.log(discrepancies[0] / discrepancies[1]) / math.log(2.0)
    assert order >= 3.0
    # t = 0: transform is the identity
    tr = flow_run(perturbed, FlowKind("standard"), T=T_std, dt=4e-3,
                  snapshot_stride=1)
    _, at0 = homothety_transform(tr, times_out=[0.0])
    assert c0_distance(at0[0], perturbed) < 1e-12


def test_homothety_needs_snapshots(perturbed):
    tr = flow_run(perturbed, FlowKind("standard"), T=0.02, dt=1e-2,
                  snapshot_stride=100)
    with pytest.raises(InsufficientSnapshotsError):
        homothety_transform(tr)
    tr2 = flow_run(perturbed, FlowKind("negative_normalized"), T=0.02)
    with pytest.raises(ValueError):
        homothety_transform(tr2)  # wrong flow kind


def test_mu_monotonicity_and_production_rate(perturbed):
    trace = flow_run(perturbed, FlowKind("negative_normalized"), T=0.15,
                     monitor="mu_plus", monitor_stride=1)
    rep = monotonicity_monitor(trace, tol=1e-8)
    assert rep["monotone_within_tol"]
    assert rep["min_increment"] >= -1e-8
    assert rep["max_rel_gap_dmu_dt"] <= 1e-3
    # closed-form curve check: mu(e^{-2t} g0) for the flat factor follows
    # scal/2 - log vol = -log(e^{-nt} vol) in the constant-curvature family
    chart = perturbed.chart
    flat = MetricField.flat(chart)
    tr2 = flow_run(flat, FlowKind("negative_normalized"), T=0.2,
                   monitor="mu_plus", monitor_stride=2)
    ts = tr2.diag("entropy_t")
    vals = tr2.diag("entropy")
    vol = (2 * math.pi) ** 3
    expected = [-math.log(math.exp(-3 * t) * vol) for t in ts]
    assert np.max(np.abs(vals - np.asarray(expected))) < 1e-5


def test_deturck_gauge_preserves_entropy_diagnostics(perturbed):
    """mu_plus is diffeomorphism invariant: gauged and ungauged short runs
    produce matching entropy series"""
    chart = perturbed.chart
    kind_plain = FlowKind("standard")
    kind_gauged = FlowKind("standard", gauge="deturck",
                           gauge_ref=MetricField.flat(chart))
    t1 = flow_run(perturbed, kind_plain, T=0.05, monitor="mu_plus",
                  monitor_stride=2)
    t2 = flow_run(perturbed, kind_gauged, T=0.05, monitor="mu_plus",
                  monitor_stride=2)
    v1 = t1.diag("entropy")
    v2 = t2.diag("entropy")
    assert len(v1) == len(v2)
    assert np.max(np.abs(v1 - v2)) < 5e-7


def test_ricci_flat_stability_short(perturbed):
    """abbreviated version of the stability experiment: gauged standard flow
    decays the Ricci norm"""
    chart = perturbed.chart
    kind = FlowKind("standard", gauge="deturck",
                    gauge_ref=MetricField.flat(chart))
    r0 = ricci_l2_norm(perturbed)
    trace = flow_run(perturbed, kind, T=1.0)
    rT = ricci_l2_norm(trace.snapshots[-1])
    assert rT < 0.2 * r0
    assert not trace.events


def test_instability_probe_standard_no_escape(flat16):
    chart = flat16.chart
    h = random_sym(chart, 402, amplitude=1.0)
    kind = FlowKind("standard", gauge="deturck", gauge_ref=flat16)
    rep = instability_probe(flat16, h, amplitudes=[1e-3, 0.0], kind=kind,
                            eps=5e-2, T=0.5, monitor=None)
    assert all(not r["escaped"] for r in rep["runs"])
    assert rep["escape_times_monotone"]


def test_instability_probe_escape_ordering(flat16):
    """under the negatively normalized flow every start leaves the eps-ball
    around the reference (uniform shrinking): larger amplitudes start closer
    to the boundary and escape no later"""
    chart = flat16.chart
    h = random_sym(chart, 403, amplitude=1.0)
    rep = instability_probe(
        flat16, h, amplitudes=[8e-2, 4e-2, 2e-2, 0.0],
        kind=FlowKind("negative_normalized"), eps=0.3, T=1.0,
        monitor="mu_plus", monitor_stride=10,
    )
    assert all(r["escaped"] for r in rep["runs"])
    times = [r["escape_time"] for r in rep["runs"]]
    assert times == sorted(times)
    assert rep["escape_times_monotone"]
    assert all(r["entropy_gap_increasing"] for r in rep["runs"])
