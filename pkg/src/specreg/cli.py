"""Command-line entry point: ``specreg {experiment,fit,diagnose,validate-filter}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from . import diagnostics, harness
from .estimator import SampleSet, fit
from .filters import get_filter, validate_filter
from .mercer import dot_product_embedding_check, get_eigensystem, get_kernel
from .targets import get_target

log = logging.getLogger("specreg")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_experiment(args) -> int:
    cfg = harness.load_config(args.config)
    rows = harness.run_experiment(cfg)
    for path in harness.write_outputs(cfg, rows):
        print(path)
    for (fname, c), group in harness.group_rows(rows).items():
        try:
            rate = harness.fit_rate(group, cfg.s, cfg.beta)
        except ValueError:
            continue
        print(f"{fname:>6} c={c:<6g} slope={rate.slope:+.4f} r2={rate.r_squared:.4f} theory={rate.theoretical_rate:+.4f}")
    return 0


def _read_xy(path) -> SampleSet:
    xs, ys = [], []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().lower() == "x":
                continue
            xs.append(float(rec[0]))
            ys.append(float(rec[1]))
    return SampleSet(np.array(xs), np.array(ys))


def cmd_fit(args) -> int:
    kernel = get_kernel(args.kernel)
    flt = get_filter(args.filter, tau=args.tau, tau_cap=args.tau_cap)
    est = fit(kernel, flt, _read_xy(args.data), args.nu)
    w = csv.writer(sys.stdout, lineterminator="\n")
    if args.predict:
        xs = _floats(args.predict)
        w.writerow(["x", "prediction"])
        for x, p in zip(xs, est(np.array(xs))):
            w.writerow([harness._fmt(x), harness._fmt(p)])
    else:
        w.writerow(["x", "coefficient"])
        for x, a in zip(est.points, est.coefficients):
            w.writerow([harness._fmt(x), harness._fmt(a)])
    return 0


def _report_out(report: diagnostics.DiagnosticReport, args) -> None:
    if args.out:
        report.to_csv(args.out)
    print("input,value")
    for x, v in report.grid:
        print(f"{diagnostics._fmt(x)},{diagnostics._fmt(v)}")
    if report.fitted_exponent is not None:
        print(f"# fitted_exponent={report.fitted_exponent:.6f}")
    if report.verdict is not None:
        print(f"# verdict={report.verdict}")


def cmd_diagnose(args) -> int:
    if args.system == "sphere":
        if args.diagnostic != "embedding":
            raise SystemExit("sphere supports only the 'embedding' diagnostic")
        d, beta = args.d, args.beta
        chk = dot_product_embedding_check(lambda n: (n + 1.0) ** (-d * beta), d, beta, args.alpha)
        report = diagnostics.DiagnosticReport(
            "sphere_embedding", chk.partial_sums, fitted_exponent=chk.implied_edr, verdict=chk.verdict,
            metadata={"d": d, "beta": beta, "alpha": args.alpha},
        )
        _report_out(report, args)
        return 0

    es = get_eigensystem(args.system, beta=args.beta, d=args.d)
    diag = args.diagnostic
    if diag == "effective-dimension":
        nus = _floats(args.nu)
        vals = [diagnostics.effective_dimension(es, nu, args.truncation) for nu in nus]
        grid = tuple((nu, v.value) for nu, v in zip(nus, vals))
        slope = diagnostics.loglog_slope(nus, [v.value for v in vals]) if len(nus) >= 3 else None
        report = diagnostics.DiagnosticReport(
            "effective_dimension", grid, fitted_exponent=slope,
            metadata={"system": es.name, "truncation": args.truncation, "tail_bounds": [v.tail_bound for v in vals]},
        )
    elif diag == "edr":
        beta_hat = diagnostics.edr_fit(es, args.i_min, args.i_max)
        report = diagnostics.DiagnosticReport("edr", ((args.i_min, args.i_max),), fitted_exponent=beta_hat)
    elif diag == "embedding":
        report = diagnostics.embedding_constant(es, args.alpha, np.linspace(0, 1, 101), args.truncation)
    elif diag in ("approximation-error", "interpolation-norm", "lq-norm"):
        target = get_target(args.target, args.s, args.target_truncation)
        if diag == "lq-norm":
            report = diagnostics.lq_norm_estimate(target, args.q)
        elif diag == "interpolation-norm":
            from .targets import interpolation_norm

            res = interpolation_norm(target, args.s_prime)
            report = diagnostics.DiagnosticReport("interpolation_norm", ((args.s_prime, res.value),), verdict=res.verdict)
        else:
            flt = get_filter(args.filter, tau=args.tau)
            nus = _floats(args.nu)
            vals = [diagnostics.approximation_error(es, target, flt, nu, args.gamma).value for nu in nus]
            slope = diagnostics.loglog_slope(nus, vals) if len(nus) >= 3 else None
            report = diagnostics.DiagnosticReport("approximation_error", tuple(zip(nus, vals)), fitted_exponent=slope)
    else:  # pragma: no cover - argparse restricts choices
        raise SystemExit(f"unknown diagnostic {diag}")
    _report_out(report, args)
    return 0


def cmd_validate_filter(args) -> int:
    flt = get_filter(args.filter, tau=args.tau, tau_cap=args.tau_cap)
    res = validate_filter(flt)
    status = "PASS" if res.passed else "FAIL"
    print(f"{status} {flt.name}: phi ratio {res.phi_ratio:.12g}, psi ratio {res.psi_ratio:.12g}")
    print(f"  constants E={flt.E:.6g} F_tau={flt.F_tau:.6g}; grid needs E>={res.required_E:.6g} F_tau>={res.required_F_tau:.6g}")
    for v in res.violations:
        print(f"  {v.kind} bound exceeded: nu={v.nu:.6g} z={v.z:.6g} alpha={v.alpha:g} ratio={v.ratio:.6g}")
    return 0 if res.passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="specreg", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("experiment", help="run a rate experiment from a TOML config")
    e.add_argument("config")
    e.set_defaults(func=cmd_experiment)

    f = sub.add_parser("fit", help="single fit from a CSV of x,y")
    f.add_argument("--kernel", default="min")
    f.add_argument("--filter", default="krr", choices=["krr", "gf", "cutoff"])
    f.add_argument("--nu", type=float, required=True)
    f.add_argument("--data", required=True)
    f.add_argument("--tau", type=float, default=2.0)
    f.add_argument("--tau-cap", type=float, default=8.0)
    f.add_argument("--predict", help="comma-separated points; prints predictions instead of coefficients")
    f.set_defaults(func=cmd_fit)

    d = sub.add_parser("diagnose", help="spectral diagnostics for an explicit system")
    d.add_argument("system", choices=["min", "periodic", "sphere"])
    d.add_argument(
        "diagnostic",
        choices=["effective-dimension", "edr", "embedding", "approximation-error", "interpolation-norm", "lq-norm"],
    )
    d.add_argument("--nu", default="100,1000,10000,100000")
    d.add_argument("--truncation", type=int, default=None)
    d.add_argument("--i-min", type=int, default=100)
    d.add_argument("--i-max", type=int, default=1000)
    d.add_argument("--alpha", type=float, default=0.6)
    d.add_argument("--beta", type=float, default=2.0)
    d.add_argument("--d", type=int, default=1)
    d.add_argument("--target", default="min_series")
    d.add_argument("--s", type=float, default=0.4)
    d.add_argument("--s-prime", type=float, default=0.3)
    d.add_argument("--target-truncation", type=int, default=3000)
    d.add_argument("--q", type=float, default=4.0)
    d.add_argument("--gamma", type=float, default=0.0)
    d.add_argument("--filter", default="krr")
    d.add_argument("--tau", type=float, default=2.0)
    d.add_argument("--out", help="also write CSV plus .meta.json sidecar here")
    d.set_defaults(func=cmd_diagnose)

    v = sub.add_parser("validate-filter", help="check a filter's defining bounds on the default grids")
    v.add_argument("filter", choices=["krr", "gf", "cutoff"])
    v.add_argument("--tau", type=float, default=2.0)
    v.add_argument("--tau-cap", type=float, default=8.0)
    v.set_defaults(func=cmd_validate_filter)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
