"""Command-line entry point: ``inexact-dr {solve,verify,sweep} CONFIG``.

Exit codes: 0 success (converged / all checks passed / some sweep cell
converged), 1 error, 2 iteration budget exhausted, 3 failed checks.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import diagnostics as diag
from .config import ConfigError, RunConfig, effective_config, load_config, parse_sweep
from .drm import SolveResult, solve
from .hilbert import pair_distance

logger = logging.getLogger("inexact_dr")

OUTPUT_ROOT_ENV = "INEXACT_DR_OUTPUT_ROOT"
TRACE_COLUMNS = ("k", "alpha_k", "beta_k", "res_s1", "res_s2", "res_primal", "res_dual",
                 "shadow_z_norm", "dist_to_solution")
CHECK_COLUMNS = ("name", "k", "lhs", "rhs", "margin", "passed")
SWEEP_COLUMNS = ("cell", "lambda", "schedule", "seed", "status", "iterations", "res_primal",
                 "res_dual", "solution_residual", "error")

EXIT_OK, EXIT_ERROR, EXIT_MAX_ITER, EXIT_CHECKS = 0, 1, 2, 3


def fmt(x) -> str:
    """17 significant digits; empty for missing values."""
    if x is None:
        return ""
    return "%.17g" % x


def write_trace_csv(path: Path, result: SolveResult, lam: float,
                    solution: Optional[diag.SolutionPair] = None) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in result.trace:
            dist = None if solution is None else \
                pair_distance(r.x_k, r.b_k, solution.x, solution.b, lam)
            w.writerow([r.k, fmt(r.alpha_k), fmt(r.beta_k), fmt(r.res_s1), fmt(r.res_s2),
                        fmt(r.res_primal), fmt(r.res_dual), fmt(float(np.linalg.norm(r.shadow_z))),
                        fmt(dist)])
    return path


def write_checks_csv(path: Path, reports: Sequence[diag.CheckReport]) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CHECK_COLUMNS)
        for rep in reports:
            w.writerow([rep.name, "" if rep.k is None else rep.k, fmt(rep.lhs), fmt(rep.rhs),
                        fmt(rep.margin), "true" if rep.passed else "false"])
    return path


def _output_dir(run: RunConfig, config_path: Path, override: Optional[str]) -> Path:
    if override:
        out = Path(override)
    elif run.output_dir is not None:
        out = run.output_dir
    else:
        out = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / config_path.stem
    out.mkdir(parents=True, exist_ok=True)
    return out


def summarize(run: RunConfig, result: SolveResult) -> dict:
    prob = run.problem
    summary: dict = {"problem": prob.name, "status": result.status,
                     "iterations": len(result.trace), "lambda": run.solver.lam}
    if result.message:
        summary["message"] = result.message
    last = result.final
    if last is not None:
        (x, b), res = diag.solution_estimate(prob.A, prob.B, last)
        summary.update(
            res_primal=last.res_primal, res_dual=last.res_dual,
            res_s1=last.res_s1, res_s2=last.res_s2,
            shadow_z_norm=float(np.linalg.norm(last.shadow_z)),
            solution_residual=res, x=x.tolist(), b=b.tolist())
        if prob.known_solution is not None:
            ks = prob.known_solution
            summary["known_solution_residual"] = diag.solution_residual(
                prob.A, prob.B, (ks.x, ks.b))
            summary["distance_to_known_solution"] = pair_distance(
                x, b, ks.x, ks.b, run.solver.lam)
    return summary


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _run_and_export(run: RunConfig, out: Path) -> SolveResult:
    prob = run.problem
    result = solve(run.solver, prob.A, prob.B, prob.x0)
    (out / "effective_config.yaml").write_text(
        yaml.safe_dump(effective_config(run), sort_keys=False))
    write_trace_csv(out / "trace.csv", result, run.solver.lam, prob.known_solution)
    if run.emit_plots and result.trace:
        from . import plotting
        plotting.plot_residuals(result.trace, out / "residuals.svg", title=prob.name)
        if prob.known_solution is not None:
            dists = diag.fejer_distances(result.trace, prob.known_solution, run.solver.lam)
            plotting.plot_fejer(dists, out / "fejer.svg", title=prob.name)
    return result


def _load(args) -> tuple:
    path = Path(args.config)
    run = load_config(path)
    return run, _output_dir(run, path, args.output_dir)


def cmd_solve(args) -> int:
    run, out = _load(args)
    result = _run_and_export(run, out)
    summary = summarize(run, result)
    _write_json(out / "summary.json", summary)
    logger.info("%s: %s after %d iterations -> %s", run.problem.name, result.status,
                len(result.trace), out)
    print(f"{result.status} after {len(result.trace)} iterations; outputs in {out}")
    return {"converged": EXIT_OK, "max_iter": EXIT_MAX_ITER}.get(result.status, EXIT_ERROR)


def inject_fault(result: SolveResult, fault: str) -> SolveResult:
    """Corrupt a trace for testing the checkers (``flip_b1`` negates b_1)."""
    if fault != "flip_b1":
        raise ValueError(f"unknown fault {fault!r}")
    if not result.trace:
        return result
    trace = list(result.trace)
    trace[0] = dataclasses.replace(trace[0], b_k=-trace[0].b_k)
    return SolveResult(trace, result.status, result.message)


def cmd_verify(args) -> int:
    run, out = _load(args)
    result = _run_and_export(run, out)
    if result.status == "failed":
        print(f"solve failed: {result.message}", file=sys.stderr)
        _write_json(out / "summary.json", summarize(run, result))
        return EXIT_ERROR
    if getattr(args, "inject_fault", None):
        result = inject_fault(result, args.inject_fault)
    prob = run.problem
    reports, notes = diag.run_checks(run.checks, result, prob.A, prob.B, run.solver,
                                     prob.known_solution)
    write_checks_csv(out / "checks.csv", reports)
    failed = [r for r in reports if not r.passed]
    summary = summarize(run, result)
    summary["checks"] = {"executed": len(reports), "failed": len(failed), "notes": notes}
    _write_json(out / "summary.json", summary)
    for note in notes:
        print(note)
    if failed:
        worst = sorted(failed, key=lambda r: r.margin)[:10]
        print(f"{len(failed)} of {len(reports)} checks failed; worst margins:", file=sys.stderr)
        for r in worst:
            print(f"  {r.name:<22} k={'' if r.k is None else r.k:<6} margin={r.margin:.3e} "
                  f"(lhs={r.lhs:.6g}, rhs={r.rhs:.6g})", file=sys.stderr)
        return EXIT_CHECKS
    print(f"all {len(reports)} checks passed; outputs in {out}")
    return EXIT_OK


def _run_cell(run: RunConfig, index: int, cell, out: Path) -> dict:
    lam, sched, seed = cell
    solver = dataclasses.replace(run.solver, lam=lam, schedule=sched, seed=seed)
    prob = run.problem
    row = {"cell": index, "lambda": lam, "schedule": json.dumps(sched.to_dict(), sort_keys=True),
           "seed": seed, "status": "failed", "iterations": "", "res_primal": "", "res_dual": "",
           "solution_residual": "", "error": ""}
    try:
        result = solve(solver, prob.A, prob.B, prob.x0)
        cell_dir = out / f"cell_{index:03d}"
        cell_dir.mkdir(exist_ok=True)
        write_trace_csv(cell_dir / "trace.csv", result, lam, prob.known_solution)
        row.update(status=result.status, iterations=len(result.trace), error=result.message)
        if result.trace:
            last = result.final
            row.update(res_primal=fmt(last.res_primal), res_dual=fmt(last.res_dual),
                       solution_residual=fmt(diag.solution_estimate(prob.A, prob.B, last)[1]))
    except Exception as exc:           # per-cell failures must not abort the sweep
        row["error"] = str(exc)
    return row


def _schedule_label(sched_json: str) -> str:
    d = json.loads(sched_json)
    if "alpha" in d:
        return "alpha/beta"
    if d["kind"] == "zero":
        return "zero"
    extra = d.get("rho", d.get("p"))
    return f"{d['kind']}({d['c']:g},{extra:g})"


def cmd_sweep(args) -> int:
    run, out = _load(args)
    cells = parse_sweep(run)
    if not cells:
        print("error: empty sweep (no lambda values in sweep.lambda)", file=sys.stderr)
        return EXIT_ERROR
    workers = int((run.sweep or {}).get("workers", 1))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        rows = list(pool.map(lambda ic: _run_cell(run, ic[0], ic[1], out), enumerate(cells)))
    (out / "effective_config.yaml").write_text(
        yaml.safe_dump(effective_config(run), sort_keys=False))
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: fmt(v) if isinstance(v, float) else v for k, v in row.items()})
    if (run.sweep or {}).get("heatmap", False) and run.emit_plots:
        from . import plotting
        lams = sorted({r["lambda"] for r in rows})
        scheds = list(dict.fromkeys(r["schedule"] for r in rows))
        grid = np.full((len(lams), len(scheds)), math.nan)
        for i, lam in enumerate(lams):
            for j, s in enumerate(scheds):
                its = [r["iterations"] for r in rows if r["lambda"] == lam and r["schedule"] == s
                       and r["status"] == "converged"]
                if its:
                    grid[i, j] = float(np.mean(its))
        plotting.plot_sweep_heatmap(grid, [f"{v:g}" for v in lams],
                                    [_schedule_label(s) for s in scheds], out / "sweep.svg")
    ok = sum(r["status"] == "converged" for r in rows)
    print(f"{ok} of {len(rows)} cells converged; outputs in {out}")
    return EXIT_OK if ok else EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inexact-dr",
        description="Inexact Douglas-Rachford splitting with runtime convergence checks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, help_ in (("solve", cmd_solve, "run the solver and export the trace"),
                              ("verify", cmd_verify, "run the solver and all requested checks"),
                              ("sweep", cmd_sweep, "run a grid over lambda/schedules/seeds")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="YAML run configuration")
        p.add_argument("--output-dir", help="override output.output_dir "
                                            f"(default ${OUTPUT_ROOT_ENV}/<config stem>)")
        p.set_defaults(func=func)
        if name == "verify":
            p.add_argument("--inject-fault", help=argparse.SUPPRESS)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
