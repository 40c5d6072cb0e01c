"""Command-line entry point: ``safem run | suite | stagnation``."""
import argparse
import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
import os
from pathlib import Path
import sys

from .driver import RunConfig, iterate_cycles, stagnation_study
from .estimate_mark import MarkingConfig
from .io import read_csv, write_csv, write_vtk
from .problems import get_problem

__all__ = ["CliArgs", "parse_args", "main", "suite_configurations", "run_one"]

PROBLEMS = ("peak2d", "corner2d", "drift2d")


@dataclass
class CliArgs:
    subcommand: str
    problem: str = "peak2d"
    degree: int = 1
    cycles: int = 10
    mode: str = "safem"
    smoother: str = "richardson"
    steps: int = 3
    theta: float = 0.3
    marking: str = "dorfler"
    fraction: float = 1.0 / 3.0
    beta: float = 1.0
    output: str = "results"
    vtk: bool = False
    diagnostic: bool = False
    cycle: int = 3
    max_steps: int = 30

    def marking_config(self):
        if self.marking == "dorfler":
            return MarkingConfig("dorfler", theta=self.theta)
        return MarkingConfig("fixed_fraction", fraction=self.fraction)

    def run_config(self):
        return RunConfig(
            get_problem(self.problem, beta=self.beta),
            degree=self.degree,
            cycles=self.cycles,
            mode=self.mode,
            smoother=self.smoother,
            smoothing_steps=self.steps,
            marking=self.marking_config(),
            diagnostic=self.diagnostic,
        )


def _parser():
    p = argparse.ArgumentParser(prog="safem", description="AFEM and smoothed AFEM experiments.")
    sub = p.add_subparsers(dest="subcommand", required=True)

    r = sub.add_parser("run", help="one adaptive run, written as CSV")
    r.add_argument("--problem", choices=PROBLEMS, default="peak2d")
    r.add_argument("--degree", type=int, choices=(1, 2, 3), default=1)
    r.add_argument("--cycles", type=int, default=10)
    r.add_argument("--mode", choices=("afem", "safem"), default="safem")
    r.add_argument("--smoother", choices=("auto", "richardson", "cg", "gmres"), default="auto",
                   help="auto: richardson for pure diffusion, gmres with drift")
    r.add_argument("--steps", type=int, default=3, help="smoothing steps per intermediate cycle")
    r.add_argument("--marking", choices=("auto", "dorfler", "fixed_fraction"), default="auto",
                   help="auto: dorfler for degree 1, fixed_fraction otherwise")
    r.add_argument("--theta", type=float, default=0.3)
    r.add_argument("--fraction", type=float, default=1.0 / 3.0)
    r.add_argument("--beta", type=float, default=1.0, help="drift magnitude for drift2d")
    r.add_argument("--output", default="results", help="output directory")
    r.add_argument("--vtk", action="store_true", help="write one VTK file per cycle")
    r.add_argument("--diagnostic", action="store_true", help="also solve intermediate cycles exactly")

    s = sub.add_parser("suite", help="the full experiment matrix plus a summary CSV")
    s.add_argument("--output", default="results")
    s.add_argument("--cycles", type=int, default=10)

    g = sub.add_parser("stagnation", help="Richardson history on one intermediate cycle")
    g.add_argument("--problem", choices=PROBLEMS, default="peak2d")
    g.add_argument("--cycle", type=int, default=3)
    g.add_argument("--max-steps", type=int, default=30)
    g.add_argument("--degree", type=int, choices=(1, 2, 3), default=1)
    g.add_argument("--beta", type=float, default=1.0)
    g.add_argument("--output", default="results")
    return p


def parse_args(argv=None):
    """Parse and validate; invalid input exits with status 2."""
    parser = _parser()
    ns = parser.parse_args(argv)
    args = CliArgs(**vars(ns))
    if args.cycles < 2:
        parser.error(f"argument --cycles: must be >= 2, got {args.cycles}")
    if args.subcommand == "stagnation":
        if args.cycle < 2:
            parser.error(f"argument --cycle: must be >= 2, got {args.cycle}")
        if args.max_steps < 1:
            parser.error(f"argument --max-steps: must be >= 1, got {args.max_steps}")
    if args.subcommand != "run":
        return args
    if args.mode == "safem" and args.steps < 1:
        parser.error(f"argument --steps: must be >= 1 with --mode safem, got {args.steps}")
    if not 0.0 <= args.theta <= 1.0:
        parser.error(f"argument --theta: must lie in [0, 1], got {args.theta}")
    if not 0.0 < args.fraction <= 1.0:
        parser.error(f"argument --fraction: must lie in (0, 1], got {args.fraction}")
    if args.problem == "drift2d" and not args.beta > 0:
        parser.error(f"argument --beta: must be positive, got {args.beta}")
    if args.smoother == "auto":
        args.smoother = "gmres" if args.problem == "drift2d" else "richardson"
    if args.marking == "auto":
        args.marking = "dorfler" if args.degree == 1 else "fixed_fraction"
    return args


def output_stem(args):
    beta = f"_beta{args.beta:g}" if args.problem == "drift2d" else ""
    tail = f"_{args.smoother}_l{args.steps}" if args.mode == "safem" else ""
    return f"{args.problem}{beta}_deg{args.degree}_{args.mode}{tail}"


def run_one(params):
    """Execute one run from a plain dict of CliArgs fields; returns a summary row."""
    args = CliArgs(**params)
    out = Path(args.output)
    stem = output_stem(args)
    records = []
    for state in iterate_cycles(args.run_config()):
        records.append(state.record)
        if args.vtk:
            write_vtk(state.space, state.u, state.estimator, state.marked,
                      out / "vtk" / f"{stem}_cycle{state.cycle:02d}.vtk")
    path = write_csv(records, out / f"{stem}.csv")
    if read_csv(path) != records:
        raise RuntimeError(f"{path} does not parse back to the written records")
    middle = records[1:-1]
    return {
        "config": stem,
        "problem": args.problem,
        "beta": args.beta if args.problem == "drift2d" else 0.0,
        "degree": args.degree,
        "mode": args.mode,
        "smoother": records[0].smoother,
        "smoothing_steps": records[0].smoothing_steps,
        "cycles": len(records),
        "final_error_h1": records[-1].error_h1,
        "final_n_dofs": records[-1].n_dofs,
        "intermediate_matvecs": sum(r.matvec_count for r in middle),
        "setup_matvecs": sum(r.diagnostics.get("setup_matvecs", 0) for r in middle),
        "total_matvecs": sum(r.matvec_count for r in records),
        "intermediate_seconds": sum(r.solve_seconds for r in middle),
        "total_seconds": sum(r.solve_seconds for r in records),
        "file": path.name,
    }


def suite_configurations(output, cycles=10):
    """Experiment matrix as a list of CliArgs."""
    configs = []
    for problem in ("peak2d", "corner2d"):
        for degree in (1, 2, 3):
            marking = "dorfler" if degree == 1 else "fixed_fraction"
            base = dict(problem=problem, degree=degree, cycles=cycles, marking=marking, output=output)
            configs.append(CliArgs("run", mode="afem", smoother="cg", steps=0, **base))
            for smoother in ("richardson", "cg", "gmres"):
                for steps in (1, 3, 5):
                    configs.append(CliArgs("run", mode="safem", smoother=smoother, steps=steps, **base))
    for beta in (1.0, 10.0, 50.0):
        base = dict(problem="drift2d", beta=beta, cycles=cycles, output=output)
        configs.append(CliArgs("run", mode="afem", smoother="gmres", steps=0, **base))
        for steps in (1, 3, 5):
            configs.append(CliArgs("run", mode="safem", smoother="gmres", steps=steps, **base))
    return configs


def _threads():
    raw = os.environ.get("SAFEM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise SystemExit(f"SAFEM_THREADS must be an integer, got {raw!r}")
    return max(1, n)


def suite(output, cycles=10):
    out = Path(output)
    out.mkdir(parents=True, exist_ok=True)
    params = [asdict(c) for c in suite_configurations(str(out), cycles)]
    workers = _threads()
    rows, failures = [], []

    def collect(p, fut_or_fn):
        try:
            rows.append(fut_or_fn())
        except Exception as exc:  # one failing configuration must not stop the others
            failures.append(output_stem(CliArgs(**p)))
            print(f"FAILED {output_stem(CliArgs(**p))}: {exc}", file=sys.stderr)

    if workers == 1:
        for p in params:
            collect(p, lambda p=p: run_one(p))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(p, pool.submit(run_one, p)) for p in params]
            for p, f in futures:
                collect(p, f.result)
    rows.sort(key=lambda r: r["config"])
    if rows:
        with (out / "summary.csv").open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    print(f"{len(rows)} configurations completed, {len(failures)} failed; summary in {out / 'summary.csv'}")
    return 1 if failures else 0


def stagnation(args):
    problem = get_problem(args.problem, beta=args.beta)
    rows = stagnation_study(problem, cycle=args.cycle, max_steps=args.max_steps, degree=args.degree)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"stagnation_{args.problem}_cycle{args.cycle}.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["steps", "residual_l2", "estimator_J"])
        w.writerows([(ell, repr(res), repr(J)) for ell, res, J in rows])
    print(f"wrote {path}")
    return 0


def main(argv=None):
    args = parse_args(argv)
    try:
        if args.subcommand == "suite":
            return suite(args.output, args.cycles)
        if args.subcommand == "stagnation":
            return stagnation(args)
        row = run_one(asdict(args))
        print(f"wrote {Path(args.output) / row['file']}: final |u - u_h|_1 = {row['final_error_h1']:.4e} "
              f"with {row['final_n_dofs']} DoFs")
        return 0
    except (ValueError, RuntimeError, ArithmeticError, OSError) as exc:
        print(f"safem: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
