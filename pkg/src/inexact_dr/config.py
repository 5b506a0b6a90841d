"""Run configuration files (YAML) for the command-line interface.

A config has the top-level sections ``problem``, ``A``, ``B``, ``solver``,
``checks``, ``output`` and, for sweeps, ``sweep``. ``problem`` either names a
seeded generator::

    problem: {generator: affine_pair, n: 10, seed: 3}

or describes an inline problem, in which case ``A`` and ``B`` hold operator
descriptions (``kind`` plus kind-specific keys)::

    problem:
      name: scalar
      x0: [0.0]
      known_solution: {x: [0.5], b: [-0.5]}
    A: {kind: scaled_identity, w: 1.0}
    B: {kind: affine_monotone, M: [[1.0]], q: [-1.0]}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .diagnostics import CHECK_NAMES, SolutionPair
from .drm import INEXACTNESS_MODES, ErrorSchedule, SolverConfig
from .operators import from_dict as operator_from_dict
from .problems import GENERATORS, ProblemInstance

TOP_LEVEL_KEYS = ("problem", "A", "B", "solver", "checks", "output", "sweep")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str, line: Optional[int] = None):
        where = f"{key} (line {line})" if line else key
        super().__init__(f"config error at {where}: {message}")
        self.key = key
        self.line = line


@dataclass
class RunConfig:
    problem: ProblemInstance
    solver: SolverConfig
    checks: list = field(default_factory=lambda: ["all"])
    output_dir: Optional[Path] = None
    emit_plots: bool = True
    sweep: Optional[dict] = None
    problem_source: dict = field(default_factory=dict)


def _line_map(text: str) -> dict:
    """Map dotted key paths to 1-based line numbers."""
    lines: dict = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for key_node, val_node in node.value:
                sub = f"{path}.{key_node.value}" if path else str(key_node.value)
                lines[sub] = key_node.start_mark.line + 1
                walk(val_node, sub)
        elif isinstance(node, yaml.SequenceNode):
            for i, item in enumerate(node.value):
                sub = f"{path}[{i}]"
                lines[sub] = item.start_mark.line + 1
                walk(item, sub)

    try:
        walk(yaml.compose(text), "")
    except yaml.YAMLError:
        pass
    return lines


class _Reader:
    def __init__(self, lines: dict):
        self.lines = lines

    def fail(self, key: str, message: str):
        raise ConfigError(key, message, self.lines.get(key))

    def number(self, section: dict, key: str, path: str, default=None, integer=False):
        if key not in section:
            if default is None:
                self.fail(path, "missing required key")
            return default
        raw = section[key]
        try:
            if isinstance(raw, bool):
                raise ValueError
            val = float(raw)
        except (TypeError, ValueError):
            self.fail(path, f"expected a number, got {raw!r}")
        if integer:
            if val != int(val):
                self.fail(path, f"expected an integer, got {raw!r}")
            return int(val)
        if not math.isfinite(val):
            self.fail(path, f"expected a finite number, got {raw!r}")
        return val

    def mapping(self, doc: dict, key: str, path: str, required=False) -> dict:
        val = doc.get(key)
        if val is None:
            if required:
                self.fail(path, "missing required section")
            return {}
        if not isinstance(val, dict):
            self.fail(path, f"expected a mapping, got {type(val).__name__}")
        return val


def parse_schedule(raw, reader: _Reader, path: str) -> ErrorSchedule:
    if raw is None:
        return ErrorSchedule()
    if not isinstance(raw, dict):
        reader.fail(path, "expected a mapping with 'kind' (geometric, power, zero)")
    try:
        return ErrorSchedule.from_dict({k: v for k, v in raw.items()})
    except (TypeError, ValueError) as exc:
        reader.fail(path, str(exc))


def parse_solver(sec: dict, reader: _Reader) -> SolverConfig:
    unknown = set(sec) - {"lambda", "schedule", "max_iter", "stop_tol", "inexactness_mode", "seed"}
    if unknown:
        reader.fail(f"solver.{sorted(unknown)[0]}", "unknown key")
    lam = reader.number(sec, "lambda", "solver.lambda", 1.0)
    if lam <= 0:
        reader.fail("solver.lambda", f"lambda must be positive, got {lam}")
    stop_tol = reader.number(sec, "stop_tol", "solver.stop_tol", 1e-8)
    if stop_tol <= 0:
        reader.fail("solver.stop_tol", f"stop_tol must be positive, got {stop_tol}")
    max_iter = reader.number(sec, "max_iter", "solver.max_iter", 1000, integer=True)
    if max_iter < 1:
        reader.fail("solver.max_iter", f"max_iter must be >= 1, got {max_iter}")
    seed = reader.number(sec, "seed", "solver.seed", 0, integer=True)
    if not 0 <= seed < 2 ** 64:
        reader.fail("solver.seed", "seed must be a 64-bit unsigned integer")
    mode = sec.get("inexactness_mode", "exact")
    if mode not in INEXACTNESS_MODES:
        reader.fail("solver.inexactness_mode", f"expected one of {', '.join(INEXACTNESS_MODES)}")
    schedule = parse_schedule(sec.get("schedule"), reader, "solver.schedule")
    return SolverConfig(lam=lam, schedule=schedule, max_iter=max_iter, stop_tol=stop_tol,
                        inexactness_mode=mode, seed=seed)


def _vector(raw, reader: _Reader, path: str, dim: int) -> np.ndarray:
    try:
        arr = np.atleast_1d(np.array([float(v) for v in np.ravel(raw)], dtype=np.float64))
    except (TypeError, ValueError):
        reader.fail(path, "expected a list of numbers")
    if arr.size != dim:
        reader.fail(path, f"expected {dim} entries, got {arr.size}")
    return arr


def parse_problem(doc: dict, reader: _Reader) -> ProblemInstance:
    sec = reader.mapping(doc, "problem", "problem")
    if "generator" in sec:
        gen = sec["generator"]
        if gen not in GENERATORS:
            reader.fail("problem.generator", f"unknown generator {gen!r}; "
                                             f"expected one of {', '.join(GENERATORS)}")
        n = reader.number(sec, "n", "problem.n", 1, integer=True)
        if n < 1:
            reader.fail("problem.n", "n must be >= 1")
        seed = reader.number(sec, "seed", "problem.seed", 0, integer=True)
        try:
            return GENERATORS[gen](n, seed)
        except Exception as exc:            # generator failures are config errors here
            reader.fail("problem", str(exc))
    ops = {}
    for key in ("A", "B"):
        raw = doc.get(key, sec.get(key))
        if raw is None:
            reader.fail(key, "missing operator section (or use problem.generator)")
        try:
            ops[key] = operator_from_dict(raw)
        except (KeyError, TypeError, ValueError) as exc:
            reader.fail(key, str(exc))
    A, B = ops["A"], ops["B"]
    if A.dim != B.dim:
        reader.fail("B", f"dimension {B.dim} differs from A ({A.dim})")
    n = A.dim
    x0 = _vector(sec["x0"], reader, "problem.x0", n) if "x0" in sec else np.zeros(n)
    sol = None
    if sec.get("known_solution") is not None:
        ks = sec["known_solution"]
        if not isinstance(ks, dict) or "x" not in ks or "b" not in ks:
            reader.fail("problem.known_solution", "expected a mapping with keys x and b")
        sol = SolutionPair(_vector(ks["x"], reader, "problem.known_solution.x", n),
                           _vector(ks["b"], reader, "problem.known_solution.b", n))
    try:
        return ProblemInstance(str(sec.get("name", "inline")), A, B, n, x0, sol,
                               notes=str(sec.get("notes", "")))
    except Exception as exc:
        reader.fail("problem.known_solution", str(exc))


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(source, f"YAML parse error: {exc}",
                          mark.line + 1 if mark is not None else None) from None
    if not isinstance(doc, dict):
        raise ConfigError(source, "top level must be a mapping")
    reader = _Reader(_line_map(text))
    for key in doc:
        if key not in TOP_LEVEL_KEYS:
            reader.fail(str(key), f"unknown section; expected {', '.join(TOP_LEVEL_KEYS)}")
    problem = parse_problem(doc, reader)
    solver = parse_solver(reader.mapping(doc, "solver", "solver"), reader)

    checks = doc.get("checks", ["all"])
    if isinstance(checks, str):
        checks = [checks]
    if not isinstance(checks, list):
        reader.fail("checks", "expected a list of check names")
    for i, name in enumerate(checks):
        if name != "all" and name not in CHECK_NAMES:
            reader.fail(f"checks[{i}]", f"unknown check {name!r}; expected 'all' or one of "
                                        f"{', '.join(CHECK_NAMES)}")

    out = reader.mapping(doc, "output", "output")
    out_dir = out.get("output_dir")
    emit = out.get("emit_plots", True)
    if not isinstance(emit, bool):
        reader.fail("output.emit_plots", "expected true or false")

    sweep = doc.get("sweep")
    if sweep is not None and not isinstance(sweep, dict):
        reader.fail("sweep", "expected a mapping")
    psrc = dict(doc.get("problem") or {})
    return RunConfig(problem, solver, list(checks), Path(out_dir) if out_dir else None,
                     emit, sweep, psrc)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path))


def parse_sweep(run: RunConfig) -> list:
    """Expand the ``sweep`` section into a list of ``(lambda, schedule, seed)`` cells.

    Keys: ``lambda`` (list), ``schedule`` (list of schedule mappings, default the
    solver's schedule) and ``seeds`` (list, default the solver seed).
    """
    reader = _Reader({})
    sec = run.sweep or {}
    lams = sec.get("lambda", [])
    scheds = sec.get("schedule", [run.solver.schedule.to_dict()])
    seeds = sec.get("seeds", [run.solver.seed])
    for key, val in (("lambda", lams), ("schedule", scheds), ("seeds", seeds)):
        if not isinstance(val, list):
            reader.fail(f"sweep.{key}", "expected a list")
    cells = []
    for i, lam in enumerate(lams):
        lam = reader.number({"v": lam}, "v", f"sweep.lambda[{i}]")
        if lam <= 0:
            reader.fail(f"sweep.lambda[{i}]", f"lambda must be positive, got {lam}")
        for j, s in enumerate(scheds):
            sched = parse_schedule(s, reader, f"sweep.schedule[{j}]")
            for m, seed in enumerate(seeds):
                seed = reader.number({"v": seed}, "v", f"sweep.seeds[{m}]", integer=True)
                cells.append((lam, sched, seed))
    return cells


def effective_config(run: RunConfig) -> dict:
    """Fully resolved config (defaults expanded, problem inlined)."""
    s = run.solver
    prob = run.problem.to_dict()
    A, B = prob.pop("A"), prob.pop("B")
    if "generator" in run.problem_source:
        prob["generated_by"] = {k: run.problem_source[k] for k in ("generator", "n", "seed")
                                if k in run.problem_source}
    doc: dict[str, Any] = {
        "problem": prob,
        "A": A,
        "B": B,
        "solver": {"lambda": s.lam, "schedule": s.schedule.to_dict(), "max_iter": s.max_iter,
                   "stop_tol": s.stop_tol, "inexactness_mode": s.inexactness_mode,
                   "seed": s.seed},
        "checks": list(run.checks),
        "output": {"output_dir": str(run.output_dir) if run.output_dir else None,
                   "emit_plots": run.emit_plots},
    }
    if run.sweep is not None:
        doc["sweep"] = run.sweep
    return doc
