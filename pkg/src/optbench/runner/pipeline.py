"""Directive parsing, plan resolution and the per-run pipeline."""

from __future__ import annotations

import logging
import math
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

import numpy as np

from ..checker import SimulatorStopped, check_problem
from ..collection import COLLECTIONS
from ..kkt import kkt_check
from ..model import CapabilityError, CostCap, EvalKind, Multipliers
from ..problem_api import PROBLEM_ENV, WORKDIR_ENV, ProblemRegistryEntry, ProblemSession
from ..solvers import SOLVERS, SolverDescriptor, SolverStatus
from .lists import LIST_SUFFIX, RegistryLayout
from .records import RunRecord

ROOT_ENV = "LIBOPT_DIR"
INIT_FAILED = SolverStatus.INIT_FAILED.value

log = logging.getLogger("optbench.runner")


class RunnerError(Exception):
    """Infrastructure failure: the run could not be set up or completed."""


class DirectiveError(RunnerError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ResolutionError(RunnerError):
    def __init__(self, message: str, list_path: Optional[Path] = None):
        super().__init__(f"{message} ({list_path})" if list_path else message)
        self.list_path = list_path


@dataclass(frozen=True)
class RunDirective:
    solver: str
    collection: str
    problem: str
    lineno: int = 0


def _strip_comment(line: str) -> list[str]:
    return line.partition("#")[0].split()


def parse_directives(stream: Iterable[str], registry: RegistryLayout) -> list[RunDirective]:
    """One directive per problem named by each ``solver collection [problem|list.lst]`` line.

    A missing third field selects the solver's ``default.lst`` for that
    collection.
    """
    out: list[RunDirective] = []
    for lineno, line in enumerate(stream, start=1):
        tokens = _strip_comment(line)
        if not tokens:
            continue
        if len(tokens) not in (2, 3):
            raise DirectiveError(lineno, f"expected 'solver collection [problem]', got {len(tokens)} field(s)")
        solver, coll = tokens[0], tokens[1]
        if solver not in registry.solvers:
            raise ResolutionError(f"line {lineno}: unknown solver {solver!r}", registry.solvers_path)
        colls = registry.solver_collections[solver]
        if coll not in colls:
            raise ResolutionError(f"line {lineno}: solver {solver!r} does not handle collection {coll!r}", colls.path)
        if len(tokens) == 2:
            names = registry.solver_list(solver, coll, "default.lst").entries
        elif tokens[2].endswith(LIST_SUFFIX):
            ref = registry.named_list(solver, coll, tokens[2])
            if ref is None:
                raise ResolutionError(
                    f"line {lineno}: no list {tokens[2]!r} for solver {solver!r} and collection {coll!r}",
                    registry.root / "solvers" / solver / coll / tokens[2],
                )
            names = ref.entries
        else:
            names = (tokens[2],)
        out.extend(RunDirective(solver, coll, name, lineno) for name in names)
    return out


@dataclass(frozen=True)
class RunPlan:
    directive: RunDirective
    solver: SolverDescriptor
    entry: ProblemRegistryEntry
    options: Mapping = field(default_factory=dict)
    data_dir: Optional[Path] = None
    consulted: tuple[Path, ...] = ()

    @property
    def run_id(self) -> str:
        d = self.directive
        return f"{d.solver}.{d.collection}.{d.problem}"

    def describe(self, workdir: Path | str) -> str:
        d = self.directive
        lines = [
            f"run {d.solver} on {d.collection}/{d.problem}",
            f"  working directory: {Path(workdir)}",
            f"  environment: {PROBLEM_ENV}={d.problem} {WORKDIR_ENV}=<scratch under the working directory>",
            f"  problem data: {self.data_dir if self.data_dir else 'none'}",
            f"  solver options: {dict(self.options) if self.options else 'defaults'}",
            f"  report file: {Path(workdir) / (self.run_id + '.report')}",
            "  steps: dimensions, initialize, capability check, solve, KKT check, post-optimal, cleanup",
        ]
        return "\n".join(lines)


def resolve_and_validate(
    directive: RunDirective,
    registry: RegistryLayout,
    collections: Mapping = COLLECTIONS,
    solvers: Mapping = SOLVERS,
) -> RunPlan:
    """Check every list membership the directive relies on and build the plan."""
    s, c, p = directive.solver, directive.collection, directive.problem
    if s not in registry.solvers:
        raise ResolutionError(f"solver {s!r} is not listed", registry.solvers_path)
    if s not in solvers:
        raise ResolutionError(f"solver {s!r} is listed but not installed", registry.solvers_path)
    colls = registry.solver_collections[s]
    if c not in colls:
        raise ResolutionError(f"collection {c!r} is not handled by solver {s!r}", colls.path)
    if c not in registry.collections:
        raise ResolutionError(f"collection {c!r} is not listed", registry.collections.path)
    if c not in collections:
        raise ResolutionError(f"collection {c!r} is listed but not installed", registry.collections.path)
    coll_all = registry.problems(c)
    if p not in coll_all:
        raise ResolutionError(f"problem {p!r} is not in collection {c!r}", coll_all.path)
    solver_all = registry.solver_list(s, c, "all.lst")
    if p not in solver_all:
        raise ResolutionError(f"problem {p!r} is not in the list of solver {s!r}", solver_all.path)
    if p not in collections[c]:
        raise ResolutionError(f"problem {p!r} is listed but not installed", coll_all.path)
    return RunPlan(
        directive=directive,
        solver=solvers[s],
        entry=collections[c][p],
        options=dict(registry.solver_options.get((s, c), {})),
        data_dir=registry.problem_data_dir(c, p),
        consulted=(registry.solvers_path, colls.path, registry.collections.path, coll_all.path, solver_all.path),
    )


@dataclass
class RunResult:
    record: RunRecord
    report: str
    report_path: Optional[Path] = None


def _inside(path: Path, root: Path) -> bool:
    return path == root or root in path.parents


def _final_kkt(session, outcome, tols):
    """Residuals at the solver's final point, or NaNs when they cannot be evaluated."""
    nan = (math.nan, math.nan, math.nan, None)
    if outcome.status in (SolverStatus.SIMULATOR_STOP, SolverStatus.CAPABILITY_MISMATCH):
        return nan
    if session.caps.cost is not CostCap.GRADIENT:
        return nan
    try:
        r = session.request(EvalKind.FUNCTIONS_AND_DERIVATIVES, outcome.x_final)
        if not r.ok:
            return nan
        report = kkt_check(outcome.x_final, outcome.lm_final, r, session.init.bounds, tols)
    except CapabilityError:
        return nan
    return report.r_grad_lag, report.r_feas, report.r_sign, report


def execute_run(
    plan: RunPlan,
    workdir: Path | str,
    registry_root: Path | str,
    verbose: bool = False,
) -> RunResult:
    """Run one (solver, collection, problem) triple and write its report file.

    All writes go to a fresh scratch directory under ``workdir``, removed at
    the end, plus the report file in ``workdir`` itself.
    """
    workdir = Path(workdir).resolve()
    root = Path(registry_root).resolve()
    if _inside(workdir, root):
        raise RunnerError(f"refusing to work inside the registry tree {root}")
    workdir.mkdir(parents=True, exist_ok=True)
    d = plan.directive
    say = log.info if verbose else log.debug
    t0 = time.perf_counter()
    notes: list[str] = []

    scratch = Path(tempfile.mkdtemp(prefix=f"{plan.run_id}.", dir=workdir))
    try:
        if plan.data_dir is not None:
            say("%s: copying problem data from %s", plan.run_id, plan.data_dir)
            shutil.copytree(plan.data_dir, scratch, dirs_exist_ok=True)
        environ = {PROBLEM_ENV: d.problem, WORKDIR_ENV: str(scratch), ROOT_ENV: str(root)}
        session = ProblemSession(plan.entry.create(), environ)

        say("%s: dimensions", plan.run_id)
        dims = session.dimensions()
        say("%s: n=%d mi=%d me=%d, initializing", plan.run_id, dims.n, dims.mi, dims.me)
        init = session.initialize()
        if not init.ok:
            say("%s: initialization failed: %s", plan.run_id, init.message)
            notes.append(f"initialization failed: {init.message}")
            record = RunRecord(
                d.solver, d.collection, d.problem, dims.n, dims.mi, dims.me, INIT_FAILED,
                wall_time_ms=(time.perf_counter() - t0) * 1e3,
            )
            return _finish(plan, workdir, record, notes)

        if verbose and init.caps.cost is CostCap.GRADIENT:
            try:
                deriv = check_problem(session, points=np.asarray(init.x0)[None, :])
                notes.append(deriv.to_text())
                say("%s: %s", plan.run_id, deriv.to_text())
            except (SimulatorStopped, CapabilityError) as exc:
                notes.append(f"derivative check skipped: {exc}")
        before = dict(session.counts)

        say("%s: running %s", plan.run_id, d.solver)
        outcome = plan.solver.run(session, init.tols, plan.options)
        say("%s: %s after %d iterations (%s)", plan.run_id, outcome.status.value, outcome.iterations, outcome.message)
        r_grad, r_feas, r_sign, kkt = _final_kkt(session, outcome, init.tols)
        if kkt is not None:
            notes.append(kkt.summary())
            say("%s: %s", plan.run_id, kkt.summary())
        counts = {k: session.counts[k] - before.get(k, 0) for k in EvalKind}
        lm = outcome.lm_final if isinstance(outcome.lm_final, Multipliers) else Multipliers.zeros(dims)
        post = session.post_optimal(outcome.x_final, lm)
        if post:
            notes.append(post)
        notes.insert(0, f"solver message: {outcome.message or '-'}")
        record = RunRecord(
            d.solver,
            d.collection,
            d.problem,
            dims.n,
            dims.mi,
            dims.me,
            outcome.status.value,
            f_final=float(outcome.f_final),
            r_grad_lag=r_grad,
            r_feas=r_feas,
            r_sign=r_sign,
            n_simulate_total=sum(counts.values()),
            counts=RunRecord.counts_from(counts),
            wall_time_ms=(time.perf_counter() - t0) * 1e3,
        )
        return _finish(plan, workdir, record, notes, outcome.x_final)
    finally:
        say("%s: removing scratch directory", plan.run_id)
        shutil.rmtree(scratch, ignore_errors=True)


def _finish(plan, workdir, record, notes, x_final=None) -> RunResult:
    lines = [f"run {plan.run_id}", record.to_line(), f"status: {record.status}"]
    if x_final is not None:
        lines.append(f"x_final: {np.array2string(np.asarray(x_final), precision=17)}")
    lines.extend(notes)
    text = "\n".join(lines) + "\n"
    path = workdir / f"{plan.run_id}.report"
    path.write_text(text, encoding="utf-8")
    return RunResult(record, text, path)
