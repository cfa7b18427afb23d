"""``nnri`` command line: simulate, analyze, impute, variance.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import list_presets, load_config, load_preset
from .empirical import ADDITIVITY_TOLERANCE, analyze_dataset, impute_dataset, read_dataset, write_dataset
from .errors import ConfigurationError, NNRIError
from .simulation import run_study
from .smooth import fit_ratio
from .variance import ALL_METHODS, VE_MODES, VM_MODES, VarianceInputs, parse_method, variance_report

log = logging.getLogger("nnri")


def _methods(values):
    if not values:
        return ALL_METHODS
    out = []
    for v in values:
        for part in v.split(","):
            if part.strip():
                out.append(parse_method(part))
    return tuple(dict.fromkeys(out))


def _out_dir(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_simulate(args) -> int:
    if bool(args.config) == bool(args.preset):
        raise ConfigurationError("simulate: give exactly one of CONFIG or --preset")
    cfg = load_preset(args.preset) if args.preset else load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    if args.method:
        overrides["methods"] = tuple(m.strip() for v in args.method for m in v.split(",") if m.strip())
    if args.ve_mode:
        overrides["ve_mode"] = args.ve_mode
    if args.vm_mode:
        overrides["vm_mode"] = args.vm_mode
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    report = run_study(cfg, threads=args.threads)
    out = _out_dir(args)
    stem = cfg.name
    if args.format == "csv":
        report.write_csv(out / f"{stem}.csv")
    else:
        report.write_json(out / f"{stem}.json")
    report.write_coverage_plot_data(out / f"{stem}-coverage.csv")
    print(f"{cfg.name}: {report.completed} replicates, {report.failed} failed")
    print("Relative bias of variance estimators")
    print(report.table())
    return 0


def _gam_options(args):
    return {"n_knots": args.knots}


def cmd_analyze(args) -> int:
    data = read_dataset(args.data, tolerance=args.tolerance)
    methods = _methods(args.method)
    result = analyze_dataset(data, methods, args.ve_mode, args.vm_mode, _gam_options(args))
    out = _out_dir(args)
    stem = Path(args.data).stem
    if args.format == "json":
        (out / f"{stem}-analysis.json").write_text(result.to_json(), encoding="utf-8")
    else:
        result.report.write_csv(out / f"{stem}-variance.csv")
    if args.diagnostics and any(r == "nonparam" for r, _ in methods):
        fit = fit_ratio("nonparam", data.x, data.y, data.respondent, data.weight, data.stratum,
                        **_gam_options(args))
        (out / f"{stem}-gam.json").write_text(json.dumps(fit.diagnostics(), indent=2),
                                              encoding="utf-8")
    print(f"{data.n} units, {result.respondents} respondents "
          f"({result.demoted} demoted for additivity, {result.dropped} dropped with x <= 0)")
    print(result.render())
    return 0


def cmd_impute(args) -> int:
    data = read_dataset(args.data, tolerance=args.tolerance)
    imp, _ = impute_dataset(data)
    out = _out_dir(args)
    path = out / f"{Path(args.data).stem}-imputed.csv"
    write_dataset(data, path, values=imp.values, imputed=imp)
    print(f"imputed {int(imp.imputed.sum())} of {data.n} units -> {path}")
    return 0


def cmd_variance(args) -> int:
    data = read_dataset(args.data, tolerance=args.tolerance)
    methods = _methods(args.method)
    imp, total = impute_dataset(data)
    inputs = VarianceInputs(data.sample(), data.respondent, imp.kappa, imp.values, total)
    report = variance_report(inputs, methods, args.ve_mode, args.vm_mode, _gam_options(args))
    out = _out_dir(args)
    stem = Path(args.data).stem
    if args.format == "csv":
        report.write_csv(out / f"{stem}-variance.csv")
    else:
        (out / f"{stem}-variance.json").write_text(report.to_json(), encoding="utf-8")
    for r in report.rows:
        print(f"{r.item:<10}{r.method_R:>9}{r.method_sigma:>9}  T={r.estimate:.6g}  "
              f"V={r.v_total:.6g}  cv={r.cv_pct:.1f}%")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nnri", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, method_help):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--method", action="append", default=[], help=method_help)
        sp.add_argument("--ve-mode", choices=VE_MODES, default=None)
        sp.add_argument("--vm-mode", choices=VM_MODES, default=None)
        sp.add_argument("--out-dir", default=".")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    s = sub.add_parser("simulate", help="run a Monte Carlo study from a TOML config")
    s.add_argument("config", nargs="?", help="TOML config file")
    s.add_argument("--preset", help="shipped configuration, see --list-presets")
    s.add_argument("--list-presets", action="store_true")
    s.add_argument("-B", "--replicates", type=int, default=None)
    common(s, "NAIVE or ratio[:direct|modeled]; repeatable or comma separated")
    s.set_defaults(func=cmd_simulate)

    for name, func, helptext in (
        ("analyze", cmd_analyze, "impute a unit-level CSV and tabulate ratios, variances, CVs"),
        ("impute", cmd_impute, "write the imputed file with donor ids"),
        ("variance", cmd_variance, "variance report for the imputed totals"),
    ):
        a = sub.add_parser(name, help=helptext)
        a.add_argument("data", help="unit-level CSV")
        a.add_argument("--tolerance", type=float, default=ADDITIVITY_TOLERANCE,
                       help="relative additivity tolerance for respondents")
        a.add_argument("--knots", type=int, default=10, help="interior knots for spline fits")
        if name == "analyze":
            a.add_argument("--diagnostics", action="store_true",
                           help="also write the spline fit diagnostics as JSON")
        common(a, "{param1,param2,nonparam}[:{direct,modeled}]; default all six")
        a.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "simulate" and args.list_presets:
        print("\n".join(list_presets()))
        return 0
    if args.command != "simulate":
        args.ve_mode = args.ve_mode or "full"
        args.vm_mode = args.vm_mode or "analytic"
    try:
        return args.func(args)
    except NNRIError as exc:
        print(f"nnri: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
