"""Command-line entry points: reproducible experiment runs with JSON
reports, CSV traces, and run manifests.

Subcommands: verify-variations, mu-plus, lambda, nu-csc, classify,
cpn-certificate, flow, homothety-check, lojasiewicz-fit.

Configuration: a flat key=value text file (--config) merged under CLI
flags (flags win).  Every report embeds its manifest: the resolved
configuration, input hashes, tool version and schema version; rerunning an
exact-arithmetic command from its manifest reproduces the report byte-for-
byte, numeric ones reproduce within their documented tolerances.

Exit codes: 0 success, 1 validation/config error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from .entropy import (
    lambda_perelman,
    lojasiewicz_fit,
    mu_plus_jensen_bound,
    nu_minus_csc_value,
    shrinker_equations_residual,
    solve_mu_plus,
    soliton_pair,
    w_minus_at_pair,
)
from .errors import ConfigInvalidError, ExcludedSphereError, RicciLabError
from .fieldio import save_field
from .flows import (
    FlowKind,
    flow_run,
    homothety_transform,
    monotonicity_monitor,
    ricci_l2_norm,
)
from .grid import GridChart, MetricField, ScalarField, SymTensorField, random_band_limited
from .models import catalog, classify, find_model
from .operators import c0_distance, curvature, volume
from .spherepoly import (
    certificate_json,
    monomial_average,
    monte_carlo_average,
    third_variation_certificate,
    ZPoly,
)
from .variations import (
    fd_directional,
    vary_connection,
    vary_curvature,
    vary_hessian_laplacian,
)

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# config and manifest plumbing
# ---------------------------------------------------------------------------


def read_config(path):
    """Flat key = value file; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigInvalidError(
                    f"{path}:{lineno}: expected key = value", key=line
                )
            key, val = line.split("=", 1)
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def _hash_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def build_manifest(command, config, input_paths=()):
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": "riccilab",
        "version": __version__,
        "command": command,
        "config": {k: config[k] for k in sorted(config)},
        "input_hashes": {p: _hash_file(p) for p in input_paths if p and os.path.exists(p)},
    }


def write_report(outdir, report):
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "report.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _resolve(args, config, key, cast, default):
    """flag > config file > default."""
    val = getattr(args, key, None)
    if val is not None:
        return val
    if key in config:
        raw = config[key]
        try:
            if cast is bool:
                return raw.lower() in ("1", "true", "yes")
            return cast(raw)
        except ValueError as exc:
            raise ConfigInvalidError(f"config key {key}: {exc}", key=key) from exc
    return default


# ---------------------------------------------------------------------------
# grid construction shared by the numeric commands
# ---------------------------------------------------------------------------


def make_torus_metric(dim, L, n_grid, amplitude=0.0, seed=0, max_mode=1):
    chart = GridChart((n_grid,) * dim, (L,) * dim)
    if amplitude == 0.0:
        return chart, MetricField.flat(chart)
    u = random_band_limited(
        chart, np.random.default_rng(seed), max_mode=max_mode, amplitude=amplitude
    )
    return chart, MetricField.conformal_flat(chart, u)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_mu_plus(args, config):
    dim = _resolve(args, config, "torus", int, 3)
    L = _resolve(args, config, "L", float, 2 * math.pi)
    n_grid = _resolve(args, config, "n_grid", int, 16)
    amp = _resolve(args, config, "perturb_amplitude", float, 0.0)
    seed = _resolve(args, config, "seed", int, 0)
    tol = _resolve(args, config, "tol", float, 1e-9)
    chart, g = make_torus_metric(dim, L, n_grid, amp, seed)
    res = solve_mu_plus(g, tol=tol)
    vol = volume(g)
    report = {
        "value": res.value,
        "el_residual_l2": res.el_residual_l2,
        "iterations": res.iterations,
        "volume": vol,
        "jensen_lower_bound": mu_plus_jensen_bound(g),
        "csc_closed_form": (0.5 * 0.0 - math.log(vol)) if amp == 0.0 else None,
    }
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    save_field(os.path.join(outdir, "minimizer_w.npz"), res.minimizer_w)
    save_field(os.path.join(outdir, "minimizer_f.npz"), res.minimizer_f)
    report["minimizer_fields"] = ["minimizer_w.npz", "minimizer_f.npz"]
    return report


def cmd_lambda(args, config):
    dim = _resolve(args, config, "torus", int, 3)
    L = _resolve(args, config, "L", float, 2 * math.pi)
    n_grid = _resolve(args, config, "n_grid", int, 16)
    amp = _resolve(args, config, "perturb_amplitude", float, 0.0)
    seed = _resolve(args, config, "seed", int, 0)
    chart, g = make_torus_metric(dim, L, n_grid, amp, seed)
    res = lambda_perelman(g)
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    save_field(os.path.join(outdir, "ground_state.npz"), res.minimizer_w)
    return {
        "value": res.value,
        "el_residual_l2": res.el_residual_l2,
        "ground_state_field": "ground_state.npz",
    }


def cmd_nu_csc(args, config):
    name = _resolve(args, config, "model", str, None)
    if name is None:
        raise ConfigInvalidError("nu-csc needs --model", key="model")
    m = find_model(name)
    n, mu = m.dim_real, m.einstein_constant
    if mu <= 0:
        raise ConfigInvalidError(
            f"{m.name} has mu <= 0: shrinker entropy closed form needs scal > 0",
            key="model",
        )
    vol = float(m.volume)
    value = nu_minus_csc_value(n, vol, n * float(mu))
    f, tau = soliton_pair(n, mu, vol)
    r1, r2 = shrinker_equations_residual(n, mu, vol, f, tau, value)
    scale_gaps = {}
    for c in (0.5, 1.0, 2.0, 10.0):
        scaled = nu_minus_csc_value(n, vol * c**n, n * float(mu) / c**2)
        scale_gaps[str(c)] = abs(scaled - value)
    return {
        "model": m.name,
        "value": value,
        "minimizer_pair": {"f": f, "tau": float(tau), "tau_exact": str(tau)},
        "pair_equation_residuals": [abs(r1), abs(r2)],
        "w_minus_at_pair": w_minus_at_pair(n, mu, vol),
        "scale_invariance_gaps": scale_gaps,
    }


def cmd_classify(args, config):
    if getattr(args, "list_models", False):
        return {"models": [m.to_json_dict() for m in catalog()]}
    name = _resolve(args, config, "model", str, None)
    if name is None:
        raise ConfigInvalidError("classify needs --model", key="model")
    m = find_model(name)
    witness = None
    if getattr(args, "witness", None) is not None:
        witness = Fraction(args.witness)
    elif getattr(args, "witness_from_certificate", False):
        if not m.name.startswith("cp"):
            raise ConfigInvalidError(
                "witness-from-certificate only applies to cpN models", key="model"
            )
        cert = third_variation_certificate(int(m.name[2:]))
        witness = cert["headline"]
    try:
        verdict = classify(m, cubic_witness=witness)
        return {"model": m.to_json_dict(), "classification": verdict.to_json_dict()}
    except ExcludedSphereError as exc:
        return {
            "model": m.to_json_dict(),
            "classification": {
                "verdict": "DynamicallyStable",
                "reasons": ["round sphere (special case, excluded from the rule engine)"],
                "witness": None,
            },
            "note": str(exc),
        }


def cmd_cpn_certificate(args, config):
    nc = _resolve(args, config, "n", int, 2)
    cert = third_variation_certificate(nc)
    verdict = classify(find_model(f"cp{nc}"), cubic_witness=cert["headline"])
    mc = None
    if getattr(args, "mc_check", False):
        samples = _resolve(args, config, "mc_samples", int, 10**7)
        seed = _resolve(args, config, "seed", int, 123)
        mono = ZPoly.monomial(nc + 1, (1, 1, 1) + (0,) * (nc - 2),
                              (1, 1, 1) + (0,) * (nc - 2))
        exact = monomial_average((1, 1, 1) + (0,) * (nc - 2),
                                 (1, 1, 1) + (0,) * (nc - 2), nc + 1).value
        mean, se = monte_carlo_average(mono, samples=samples, seed=seed)
        mc = {
            "monomial": "|z1 z2 z3|^2",
            "samples": samples,
            "seed": seed,
            "mc_mean": mean,
            "mc_stderr": se,
            "exact": str(exact),
            "abs_gap": abs(mean - float(exact)),
            "within_3_sigma": abs(mean - float(exact)) <= 3 * se,
        }
    report = json.loads(certificate_json(cert))
    report["value"] = report["headline"]
    report["classification"] = verdict.to_json_dict()
    if mc is not None:
        report["monte_carlo_check"] = mc
    return report


def cmd_flow(args, config):
    dim = _resolve(args, config, "torus", int, 3)
    L = _resolve(args, config, "L", float, 2 * math.pi)
    n_grid = _resolve(args, config, "n_grid", int, 16)
    amp = _resolve(args, config, "perturb_amplitude", float, 1e-2)
    seed = _resolve(args, config, "seed", int, 0)
    kind = _resolve(args, config, "kind", str, "standard").replace("-", "_")
    gauge = _resolve(args, config, "gauge", str, "none")
    T = _resolve(args, config, "T", float, 1.0)
    dt = _resolve(args, config, "dt", float, None)
    cfl = _resolve(args, config, "cfl", float, 0.1)
    monitor = _resolve(args, config, "monitor", str, "none").replace("-", "_")
    monitor_stride = _resolve(args, config, "monitor_stride", int, 1)
    chart, g = make_torus_metric(dim, L, n_grid, amp, seed)
    fk = FlowKind(kind, gauge=None if gauge == "none" else gauge,
                  gauge_ref=MetricField.flat(chart) if gauge == "deturck" else None)
    trace = flow_run(
        g, fk, T=T, dt=dt, cfl_factor=cfl,
        monitor=None if monitor == "none" else monitor,
        monitor_stride=monitor_stride, g_ref=MetricField.flat(chart),
    )
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    d = trace.diagnostics
    write_csv(
        os.path.join(outdir, "diagnostics.csv"),
        ["t", "min_eig", "dist_c0", "dist_l2", "dt"],
        zip(d["t"], d["min_eig"], d["dist_c0"], d["dist_l2"], d["dt"]),
    )
    if d["entropy_t"]:
        write_csv(
            os.path.join(outdir, "entropy.csv"),
            ["t", "entropy", "grad_norm_sq"],
            zip(d["entropy_t"], d["entropy"], d["grad_norm_sq"]),
        )
    for i, (t, snap) in enumerate(zip(trace.snapshot_times, trace.snapshots)):
        save_field(os.path.join(outdir, f"snapshot_{i:04d}.npz"), snap)
    report = {
        "kind": kind,
        "gauge": gauge,
        "dt": trace.dt,
        "steps": len(trace.times),
        "final_time": trace.snapshot_times[-1],
        "events": trace.events,
        "final_ricci_l2": ricci_l2_norm(trace.snapshots[-1]),
        "snapshots": len(trace.snapshots),
        "diagnostics_csv": "diagnostics.csv",
    }
    if monitor != "none" and d["entropy_t"]:
        mono = monotonicity_monitor(trace)
        report["entropy_csv"] = "entropy.csv"
        report["monotonicity"] = {
            "min_increment": mono["min_increment"],
            "monotone_within_tol": mono["monotone_within_tol"],
            "max_rel_gap_dmu_dt": mono.get("max_rel_gap_dmu_dt"),
        }
    return report


def cmd_homothety_check(args, config):
    dim = _resolve(args, config, "torus", int, 3)
    L = _resolve(args, config, "L", float, 2 * math.pi)
    n_grid = _resolve(args, config, "n_grid", int, 16)
    amp = _resolve(args, config, "perturb_amplitude", float, 1e-2)
    seed = _resolve(args, config, "seed", int, 3)
    T_neg = _resolve(args, config, "T", float, 0.3)
    dts = _resolve(args, config, "dts", str, "4e-3,2e-3,1e-3")
    chart, g = make_torus_metric(dim, L, n_grid, amp, seed)
    T_std = 0.5 * (math.exp(2 * T_neg) - 1.0)
    rows = []
    for dt0 in [float(x) for x in dts.split(",")]:
        tr_std = flow_run(g, FlowKind("standard"), T=T_std, dt=dt0, snapshot_stride=1)
        _, transformed = homothety_transform(tr_std, times_out=[T_neg])
        tr_neg = flow_run(g, FlowKind("negative_normalized"), T=T_neg, dt=dt0)
        rows.append((dt0, c0_distance(transformed[0], tr_neg.snapshots[-1])))
    orders = [
        math.log(a[1] / b[1]) / math.log(a[0] / b[0])
        for a, b in zip(rows, rows[1:]) if b[1] > 0
    ]
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    write_csv(os.path.join(outdir, "homothety.csv"), ["dt", "c0_discrepancy"], rows)
    return {
        "T_negative_normalized": T_neg,
        "T_standard": T_std,
        "discrepancies": [{"dt": r[0], "c0": r[1]} for r in rows],
        "measured_order": orders,
        "min_order": min(orders) if orders else None,
    }


def cmd_verify_variations(args, config):
    n_grid = _resolve(args, config, "n_grid", int, 16)
    samples = _resolve(args, config, "samples", int, 3)
    seed = _resolve(args, config, "seed", int, 0)
    tol = _resolve(args, config, "tol", float, 1e-5)
    chart = GridChart((n_grid,) * 3, (2 * math.pi,) * 3)
    rng = np.random.default_rng(seed)
    results = {}

    def track(opname, rel, order):
        slot = results.setdefault(opname, {"max_rel_error": 0.0, "min_order": math.inf})
        slot["max_rel_error"] = max(slot["max_rel_error"], rel)
        slot["min_order"] = min(slot["min_order"], order)

    for _ in range(samples):
        u = random_band_limited(chart, rng, max_mode=1, amplitude=0.1)
        g = MetricField.conformal_flat(chart, u)
        hv = random_band_limited(chart, rng, max_mode=1, amplitude=0.4, tensor_rank=2)
        h = SymTensorField(chart, 0.5 * (hv + np.swapaxes(hv, -1, -2)))
        f = ScalarField(chart, random_band_limited(chart, rng, max_mode=1, amplitude=1.0))
        pack = curvature(g)
        G = vary_connection(g, h, pack)
        vc = vary_curvature(g, h, pack)
        vh = vary_hessian_laplacian(g, h, f, pack)
        analytic = {
            "connection": G.values,
            "riemann": vc["riemann"],
            "ricci": vc["ricci"].values,
            "scal": vc["scal"].values,
            "dV": vc["dV"].values * g.sqrt_det,
            "hessian": vh["hessian"].values,
            "laplacian": vh["laplacian"].values,
        }
        maps = {
            "connection": lambda gt: curvature(gt).christoffel.values,
            "riemann": lambda gt: curvature(gt).riemann.values,
            "ricci": lambda gt: curvature(gt).ricci.values,
            "scal": lambda gt: curvature(gt).scal.values,
            "dV": lambda gt: gt.sqrt_det,
            "hessian": lambda gt: __import__("riccilab.operators", fromlist=["hessian"]).hessian(gt, f).values,
            "laplacian": lambda gt: __import__("riccilab.operators", fromlist=["laplacian"]).laplacian(gt, f).values,
        }
        for opname, mapfn in maps.items():
            rep = fd_directional(mapfn, g, h, order=1, analytic=analytic[opname])
            track(opname, rep.rel_error, rep.convergence_order_estimate)

    passed = all(
        r["max_rel_error"] <= tol and r["min_order"] >= 3.0 for r in results.values()
    )
    return {
        "samples": samples,
        "grid": n_grid,
        "tolerance": tol,
        "per_operation": results,
        "passed": passed,
    }


def cmd_lojasiewicz_fit(args, config):
    path = _resolve(args, config, "input", str, None)
    ref = _resolve(args, config, "reference", float, None)
    if path is None or ref is None:
        raise ConfigInvalidError(
            "lojasiewicz-fit needs --input CSV and --reference", key="input"
        )
    times, values, grads = [], [], []
    with open(path) as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            times.append(float(row["t"]))
            values.append(float(row["entropy"]))
            if "grad_norm_sq" in row and row["grad_norm_sq"]:
                grads.append(math.sqrt(max(float(row["grad_norm_sq"]), 0.0)))
    fit = lojasiewicz_fit(
        times, values, ref, grad_norms=grads if grads else None
    )
    return json.loads(fit.to_json())


COMMANDS = {
    "verify-variations": cmd_verify_variations,
    "mu-plus": cmd_mu_plus,
    "lambda": cmd_lambda,
    "nu-csc": cmd_nu_csc,
    "classify": cmd_classify,
    "cpn-certificate": cmd_cpn_certificate,
    "flow": cmd_flow,
    "homothety-check": cmd_homothety_check,
    "lojasiewicz-fit": cmd_lojasiewicz_fit,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="riccilab",
        description="Ricci-flow stability workbench: entropy functionals, "
        "flows, model catalog, exact instability certificates",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--out", default="riccilab_out", help="output directory")

    p = sub.add_parser("mu-plus", help="expander entropy of a torus metric")
    common(p)
    p.add_argument("--torus", type=int, help="torus dimension (2..4)")
    p.add_argument("--L", type=float, help="period")
    p.add_argument("--n-grid", dest="n_grid", type=int)
    p.add_argument("--perturb-amplitude", dest="perturb_amplitude", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("lambda", help="Perelman lambda of a torus metric")
    common(p)
    p.add_argument("--torus", type=int)
    p.add_argument("--L", type=float)
    p.add_argument("--n-grid", dest="n_grid", type=int)
    p.add_argument("--perturb-amplitude", dest="perturb_amplitude", type=float)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("nu-csc", help="shrinker entropy closed form on a model")
    common(p)
    p.add_argument("--model")

    p = sub.add_parser("classify", help="stability classification of a model")
    common(p)
    p.add_argument("--model")
    p.add_argument("--witness", help="cubic witness value (rational)")
    p.add_argument("--witness-from-certificate", action="store_true",
                   dest="witness_from_certificate")
    p.add_argument("--list", action="store_true", dest="list_models",
                   help="dump the model catalog as JSON")

    p = sub.add_parser("cpn-certificate", help="exact cubic instability certificate")
    common(p)
    p.add_argument("--n", type=int, help="complex dimension (>= 2)")
    p.add_argument("--mc-check", action="store_true", dest="mc_check")
    p.add_argument("--mc-samples", dest="mc_samples", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("flow", help="run a flow on a torus metric")
    common(p)
    p.add_argument("--torus", type=int)
    p.add_argument("--L", type=float)
    p.add_argument("--n-grid", dest="n_grid", type=int)
    p.add_argument("--perturb-amplitude", dest="perturb_amplitude", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--kind", choices=["standard", "negative-normalized", "tau"])
    p.add_argument("--gauge", choices=["none", "deturck"])
    p.add_argument("--T", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--cfl", type=float)
    p.add_argument("--monitor", choices=["none", "mu-plus", "lambda"])
    p.add_argument("--monitor-stride", dest="monitor_stride", type=int)

    p = sub.add_parser("homothety-check",
                       help="transformed standard flow vs direct normalized run")
    common(p)
    p.add_argument("--torus", type=int)
    p.add_argument("--L", type=float)
    p.add_argument("--n-grid", dest="n_grid", type=int)
    p.add_argument("--perturb-amplitude", dest="perturb_amplitude", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--T", type=float)
    p.add_argument("--dts", help="comma-separated dt ladder")

    p = sub.add_parser("verify-variations", help="variation-formula FD suite")
    common(p)
    p.add_argument("--n-grid", dest="n_grid", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("lojasiewicz-fit", help="exponent fit from a trace CSV")
    common(p)
    p.add_argument("--input")
    p.add_argument("--reference", type=float)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 1
    config = {}
    if args.config:
        try:
            config = read_config(args.config)
        except (OSError, ConfigInvalidError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 1
    try:
        report = COMMANDS[args.command](args, config)
    except (ConfigInvalidError, KeyError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except RicciLabError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    manifest = build_manifest(args.command, config if not hasattr(args, "__dict__")
                              else {**config, **{k: str(v) for k, v in vars(args).items()
                                                 if v is not None and k not in ("config", "out")}},
                              input_paths=[args.config] if args.config else [])
    report["manifest"] = manifest
    path = write_report(args.out, report)
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
