"""Command line front end.

Exit codes: 0 success (converged, or singular time as predicted), 1 failed
verification, 2 ``t_max`` reached without convergence, 3 premature or
unexpected singularity, 4 configuration error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

from . import cones, diagnostics, fileio, maflow, p1flow, verify
from .config import OUT_ENV, ConfigError, RunConfig, VerifyConfig, load_config, parse_class

EXIT_CONFIG = 4


def _outdir(args_out, cfg_out=None):
    out = os.environ.get(OUT_ENV) or args_out or cfg_out or "out"
    os.makedirs(out, exist_ok=True)
    return out


def cmd_verify(cfg: VerifyConfig, out, echo=print):
    rows = verify.run_suite(cfg.seed, cfg.resolution, cfg.trials, cfg.samples)
    text = verify.table(rows)
    echo(text, end="")
    fileio.write_text(os.path.join(out, "verify.txt"), text)
    return 0 if all(r.passed for r in rows) else 1


def cmd_torus(run: RunConfig, out, echo=print):
    res = maflow.run(run.torus)
    cfg = run.torus
    fileio.write_text(os.path.join(out, "monitors.csv"), res.series.to_csv())
    a = run.audit
    verdicts = diagnostics.audit_bounds(res.series, cfg.mode, a.trace_margin, a.phidot_slack,
                                        a.dpdt_rtol, a.dpdt_floor)
    report = diagnostics.estimate_report(verdicts)
    if cfg.mode == "normalized":
        fit = diagnostics.fit_decay(res.series.column("t"), res.series.column("sup_phidot"), "t1exp")
        report += (f"decay fit sup_phidot ~ C (t+1) e^-t: applicable={fit.applicable} C={fit.C:.6g} "
                   f"C_sup={fit.C_sup:.6g} bound_holds={fit.bound_holds}\n")
    fileio.write_text(os.path.join(out, "estimates.txt"), report)
    fileio.write_text(os.path.join(out, "estimates.csv"), diagnostics.verdicts_csv(verdicts))
    chart = res.problem.chart
    meta = dict(kind="potential", n=cfg.n, resolution=cfg.resolution, period=cfg.period,
                scheme=cfg.scheme, t=repr(float(res.state.t)))
    fileio.write_snapshot(os.path.join(out, "phi_final.snap"), res.state.phi, **meta)
    if cfg.n == 1:
        fileio.write_text(os.path.join(out, "phi_final.csv"), fileio.grid_csv(chart, res.state.phi, "phi"))
    summary = f"status={res.status} t={res.state.t:.6g} steps={res.steps} rejections={res.rejections}"
    if res.singular_time is not None:
        summary += f" singular_time={res.singular_time:.6g}"
    echo(summary)
    echo(report, end="")
    return res.exit_code


def cmd_p1(run: RunConfig, out, echo=print):
    res = p1flow.run_1d(run.p1)
    fileio.write_text(os.path.join(out, "monitors.csv"), res.series.to_csv())
    fileio.write_text(os.path.join(out, "profile_final.csv"), fileio.profile_csv(res.profile))
    T = res.singular_time
    summary = f"status={res.status} t={res.profile.t:.6g} steps={res.steps} predicted_T={res.problem.T0:.6g}"
    if T is not None:
        summary += f" observed_T={T:.6g}"
    fileio.write_text(os.path.join(out, "summary.txt"), summary + "\n")
    echo(summary)
    return res.exit_code


def cmd_cone(model_name, cls, out, echo=print):
    model = cones.get_model(model_name)
    rep = cones.terminal_behavior(model, cls)
    fileio.write_text(os.path.join(out, "cone.csv"), cones.CSV_HEADER + rep.csv_row())
    T = "inf" if rep.T == math.inf else str(rep.T)
    echo(f"{rep.model} {cones._fmt(rep.omega0)}: T={T} behavior=({rep.behavior}) {rep.description}"
         + ("" if rep.boundary is None else f" limit={cones._fmt(rep.boundary)}"))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="krflow", description="Kahler-Ricci flow numerical lab")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", help="run the identity suites")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--resolution", type=int, default=32)
    v.add_argument("--trials", type=int, default=4)
    for name in ("flow-torus", "flow-p1"):
        s = sub.add_parser(name, help=f"run {name[5:]} flow from a config file")
        s.add_argument("--config", required=True)
    c = sub.add_parser("cone", help="maximal existence time and terminal behavior")
    c.add_argument("--model")
    c.add_argument("--class", dest="cls")
    c.add_argument("--config", help="read model and class from the [cone] section instead")
    for s in sub.choices.values():
        s.add_argument("--out", default=None)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            if args.resolution < 8 or args.trials < 1:
                raise ConfigError("resolution must be at least 8 and trials at least 1")
            return cmd_verify(VerifyConfig(args.seed, args.resolution, args.trials), _outdir(args.out))
        if args.command == "cone":
            if args.config:
                run = load_config(args.config)
                model, cls, out = run.cone.model, run.cone.cls, _outdir(args.out, run.out)
            elif args.model and args.cls:
                model, cls, out = args.model, parse_class(args.cls), _outdir(args.out)
            else:
                raise ConfigError("cone needs --model and --class, or --config")
            try:
                return cmd_cone(model, cls, out)
            except (KeyError, ValueError) as exc:
                raise ConfigError(str(exc).strip("'\"")) from None
        run = load_config(args.config)
        if run.command != args.command:
            raise ConfigError(f"config is for {run.command!r}, not {args.command!r}")
        out = _outdir(args.out, run.out)
        if args.command == "flow-torus":
            return cmd_torus(run, out)
        return cmd_p1(run, out)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
