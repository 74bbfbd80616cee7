"""
the Cmd line tool
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from mixsing.classify import classify
from mixsing.config import RunConfig, get_log_path, load_config
from mixsing.constants import AppInfo, ExitCode, Family, Setting
from mixsing.errors import BadParams, MixsingError, UsageError, error_payload, log_error
from mixsing.estimate import Sample, fit_mle, sample
from mixsing.mixing import MixingMeasure, ParamBox
from mixsing.polysys import (GAUSSIAN, SBAR, SKEW, build_gaussian_system, build_sbar_system,
                             build_skew_system, check_solvable, rbar, rho, sbar)
from mixsing.rates import PRESETS, run_preset, run_rate_study
from mixsing.reduce import format_reduction, reduction_table
from mixsing.transport import TransportSpec, distance
from mixsing.utils import log_function_call
from mixsing.witness import (coefficient_checks, default_grid, dyadic_ts, s0_overfit_path, s1_path,
                             s2_path, s33_path, verify_density_ratio, write_ratio_csv)

WITNESS_PATHS = {
    "s0-overfit": s0_overfit_path,
    "s1": s1_path,
    "s2": s2_path,
    "s33": s33_path,
}

STDERR_HANDLER = "mixsing-stderr"


def _ints(text: str) -> List[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _floats(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _fixed(items: Optional[Sequence[str]]) -> Dict[int, float]:
    """'1=1.0' pairs: coordinate index = value."""
    out = {}
    for item in items or ():
        try:
            key, value = item.split("=")
            out[int(key)] = float(value)
        except ValueError:
            raise BadParams(f"--fixed expects INDEX=VALUE, got '{item}'")
    return out


def read_measure(path: str) -> MixingMeasure:
    with open(path, "r") as f:
        return MixingMeasure.from_dict(json.load(f))


def _emit(payload: Any, output: Optional[str]) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if output:
        Path(output).write_text(text + "\n")
        logging.info(f"Wrote {output}")
    else:
        print(text)


def _spec_from_args(args) -> TransportSpec:
    if getattr(args, "kappa", None):
        return TransportSpec.generalized(_ints(args.kappa))
    if getattr(args, "block", None):
        return TransportSpec.blocked([_ints(row) for row in args.block.split(";")])
    return TransportSpec.wasserstein(args.order)


@log_function_call
def cmd_classify(args, run: RunConfig) -> int:
    """Writes the SingularityReport; exit 2 on a boundary-proximity warning."""
    G0 = read_measure(run.inputs[0])
    report = classify(G0, args.setting, args.k, args.c0, run.solver, args.known_variance)
    _emit(report.to_dict(), run.output)
    if report.warnings:
        for warning in report.warnings:
            print(f"warning: {warning}", file=sys.stderr)
        return ExitCode.WARNING
    return ExitCode.OK


@log_function_call
def cmd_polysys(args, run: RunConfig) -> int:
    if args.ladder:
        if args.system == GAUSSIAN:
            result = rbar(args.l, run.solver, trust_known=not args.recompute, full=args.full)
        elif args.system == SKEW:
            result = rho(args.v0, args.m0, args.l, run.solver, trust_known=not args.recompute,
                         full=args.full)
        else:
            result = sbar(_floats(args.a), _floats(args.b), run.solver, full=args.full)
        _emit({"system": args.system, "ladder": result.to_dict()}, run.output)
        return ExitCode.OK

    if args.system == GAUSSIAN:
        system = build_gaussian_system(args.l, args.r)
    elif args.system == SKEW:
        system = build_skew_system(args.v0, args.m0, args.l, args.r)
        if args.vm_free:
            system = system.vm_free()
    else:
        system = build_sbar_system(_floats(args.a), _floats(args.b), args.r)
    verdict = check_solvable(system, run.solver)
    _emit({"system": system.describe(), **verdict.to_dict()}, run.output)
    return ExitCode.OK


@log_function_call
def cmd_witness(args, run: RunConfig) -> int:
    G0 = read_measure(run.inputs[0])
    path = WITNESS_PATHS[args.kind](G0)
    x = default_grid(G0, run.x_grid_points)
    ts = dyadic_ts(run.t_max, run.t_halvings)
    reports = [(s, verify_density_ratio(G0, path, s, x, ts)) for s in _ints(args.s)]
    if args.csv:
        write_ratio_csv(reports, args.csv)
    payload = {
        "path": path.name,
        "order": "inf" if path.order == float("inf") else path.order,
        "rule": path.rule,
        "checks": coefficient_checks(path, x),
        "ratios": {str(s): {"rows": r.rows(), "decay": r.decay, "spread": list(r.spread)}
                   for s, r in reports},
    }
    _emit(payload, run.output)
    return ExitCode.OK if all(payload["checks"].values()) else ExitCode.WARNING


@log_function_call
def cmd_rate_study(args, run: RunConfig, config: Dict[str, Any]) -> int:
    if args.preset:
        preset = PRESETS[args.preset]
        box = ParamBox.from_config(preset.base.family, config)
        study = run_preset(preset, run.seed, run.fit, box, run.jobs, args.reps,
                           _ints(args.n_grid) if args.n_grid else None, args.allow_slow,
                           run.solver)
    else:
        if not run.inputs:
            raise BadParams("rate-study needs --preset or a measure file")
        G0 = read_measure(run.inputs[0])
        specs = [TransportSpec.wasserstein(r) for r in _ints(args.orders)]
        if args.kappa:
            specs.append(TransportSpec.generalized(_ints(args.kappa)))
        box = ParamBox.from_config(G0.family, config)
        study = run_rate_study(G0, args.setting, specs, _ints(args.n_grid or "1000,2000,4000,8000,16000"),
                               args.reps or 20, run.seed, k=args.k, box=box, fit_cfg=run.fit,
                               per_coordinate=args.per_coordinate, allow_slow=args.allow_slow,
                               jobs=run.jobs, known_variance=args.known_variance,
                               solver_cfg=run.solver)
    if args.csv:
        study.write_csv(args.csv)
    _emit(study.to_dict(), run.output)
    return ExitCode.OK


@log_function_call
def cmd_distance(args, run: RunConfig) -> int:
    G = read_measure(run.inputs[0])
    G_prime = read_measure(run.inputs[1])
    spec = _spec_from_args(args)
    value, plan = distance(spec, G, G_prime)
    _emit({"distance": spec.name, "spec": spec.to_dict(), "value": value, "plan": plan.to_dict()},
          run.output)
    return ExitCode.OK


@log_function_call
def cmd_reduce(args, run: RunConfig) -> int:
    lines = [format_reduction(rd) for rd in reduction_table(args.order, args.family)]
    text = "\n".join(lines) + "\n"
    if run.output:
        Path(run.output).write_text(text)
    else:
        print(text, end="")
    return ExitCode.OK


@log_function_call
def cmd_sample(args, run: RunConfig) -> int:
    G0 = read_measure(run.inputs[0])
    drawn = sample(G0, args.n, run.seed)
    if run.output:
        Path(run.output).write_text(drawn.to_text())
    else:
        print(drawn.to_text(), end="")
    return ExitCode.OK


@log_function_call
def cmd_fit(args, run: RunConfig, config: Dict[str, Any]) -> int:
    data = Sample.from_text(Path(run.inputs[0]).read_text())
    box = ParamBox.from_config(args.family, config, args.c0)
    result = fit_mle(data.observations, args.family, args.k, box, run.fit)
    _emit({"measure": result.measure.to_dict(), "loglik": result.loglik, "starts": result.starts,
           "converged": result.converged}, run.output)
    return ExitCode.OK


class MixsingArgumentParser(argparse.ArgumentParser):
    """Parser whose errors become UsageError instead of exiting with status 2."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = MixsingArgumentParser(prog=AppInfo.name, description=f"{AppInfo.namecase} {AppInfo.version}")
    parser.add_argument("--config", help="Alternative YAML config file")
    parser.add_argument("--seed", type=int, help="Base seed (default from config)")
    parser.add_argument("--jobs", type=int, help="Worker threads (MIXSING_JOBS overrides)")
    parser.add_argument("--starts", type=int, help="Minimum solver starts")
    parser.add_argument("--output", "-o", help="Output file (default stdout)")
    parser.add_argument("--verbose", "-v", action="store_true", help="Also log to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="Singularity report of a mixing measure")
    p.add_argument("measure")
    p.add_argument("--setting", choices=[Setting.EXACT, Setting.OVER], default=Setting.EXACT)
    p.add_argument("--k", type=int, help="Fitted number of components (o setting)")
    p.add_argument("--c0", type=float, help="Mass floor of the over-fitted class")
    p.add_argument("--known-variance", action="store_true")

    p = sub.add_parser("polysys", help="Solvability of a polynomial system or a whole ladder")
    p.add_argument("--system", choices=[GAUSSIAN, SKEW, SBAR], required=True)
    p.add_argument("--l", type=int, default=1)
    p.add_argument("--r", type=int, default=1, help="Order r (or s for sbar)")
    p.add_argument("--v0", type=float, default=1.0)
    p.add_argument("--m0", type=float, default=1.0)
    p.add_argument("--a", default="", help="Comma-separated weights for sbar")
    p.add_argument("--b", default="", help="Comma-separated shapes for sbar")
    p.add_argument("--vm-free", action="store_true", help="Keep only the rows free of v and m")
    p.add_argument("--ladder", action="store_true", help="Climb r and report the first unsolvable")
    p.add_argument("--full", action="store_true", help="Climb every rung")
    p.add_argument("--recompute", action="store_true", help="Ignore the table of known values")

    p = sub.add_parser("witness", help="Check a witness path against G0")
    p.add_argument("measure")
    p.add_argument("--kind", choices=sorted(WITNESS_PATHS), required=True)
    p.add_argument("--s", default="3,4", help="Comma-separated Wasserstein orders")
    p.add_argument("--csv", help="Write ratios as CSV")

    p = sub.add_parser("rate-study", help="Empirical convergence rates of the MLE")
    p.add_argument("measure", nargs="?")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--setting", choices=[Setting.EXACT, Setting.OVER], default=Setting.EXACT)
    p.add_argument("--k", type=int)
    p.add_argument("--orders", default="1", help="Comma-separated Wasserstein orders")
    p.add_argument("--kappa", help="Comma-separated generalized index")
    p.add_argument("--n-grid", help="Comma-separated sample sizes")
    p.add_argument("--reps", type=int)
    p.add_argument("--per-coordinate", action="store_true")
    p.add_argument("--known-variance", action="store_true")
    p.add_argument("--fixed", action="append", help="INDEX=VALUE held fixed in fits")
    p.add_argument("--allow-slow", action="store_true", help="Report slopes slower than n^(-1/6)")
    p.add_argument("--csv", help="Write per-cell errors as CSV")

    p = sub.add_parser("distance", help="Transportation distance and optimal plan")
    p.add_argument("first")
    p.add_argument("second")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--order", type=int, default=1)
    group.add_argument("--kappa", help="Comma-separated index, e.g. 2,1,1")
    group.add_argument("--block", help="Rows separated by ';', e.g. '1,1,2;2,1,1'")

    p = sub.add_parser("reduce", help="Reduction table of one derivative order")
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--family", choices=[Family.SKEW_NORMAL, Family.GAUSSIAN], default=Family.SKEW_NORMAL)

    p = sub.add_parser("sample", help="Draw an i.i.d. sample")
    p.add_argument("measure")
    p.add_argument("--n", type=int, required=True)

    p = sub.add_parser("fit", help="Maximum-likelihood fit of newline-delimited data")
    p.add_argument("data")
    p.add_argument("--family", choices=list(Family.ALL), required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--c0", type=float)
    p.add_argument("--fixed", action="append", help="INDEX=VALUE held fixed")
    return parser


def _inputs(args) -> List[str]:
    names = ("measure", "first", "second", "data")
    return [getattr(args, n) for n in names if getattr(args, n, None)]


def _log_to_stderr() -> None:
    root = logging.getLogger()
    for handler in root.handlers:
        if handler.get_name() == STDERR_HANDLER:
            handler.setStream(sys.stderr)
            return
    handler = logging.StreamHandler(sys.stderr)
    handler.set_name(STDERR_HANDLER)
    handler.setFormatter(logging.Formatter("%(levelname)s - %(message)s"))
    root.addHandler(handler)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point for the mixsing command-line interface."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(json.dumps(error_payload(e)), file=sys.stderr)
        return ExitCode.FAILURE
    try:
        config = load_config(Path(args.config) if args.config else None)
        logging.basicConfig(
            filename=get_log_path(),
            level=logging.INFO,
            format="%(asctime)s - %(levelname)s - %(message)s",
        )
        if args.verbose:
            _log_to_stderr()

        run = RunConfig.from_args(args.command, config, _inputs(args), args.output, args.seed,
                                  args.jobs, args.starts, _fixed(getattr(args, "fixed", None)))
        if args.command == "classify":
            return cmd_classify(args, run)
        if args.command == "polysys":
            return cmd_polysys(args, run)
        if args.command == "witness":
            return cmd_witness(args, run)
        if args.command == "rate-study":
            return cmd_rate_study(args, run, config)
        if args.command == "distance":
            return cmd_distance(args, run)
        if args.command == "reduce":
            return cmd_reduce(args, run)
        if args.command == "sample":
            return cmd_sample(args, run)
        return cmd_fit(args, run, config)
    except (MixsingError, ValueError, KeyError, OSError) as e:
        log_error(e)
        print(json.dumps(error_payload(e)), file=sys.stderr)
        return ExitCode.FAILURE


if __name__ == '__main__':
    sys.exit(main())
