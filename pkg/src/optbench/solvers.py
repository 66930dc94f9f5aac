"""Reference solvers driving problems through the reverse-communication protocol.

* ``sdesc``: steepest descent in the problem's own inner product.
* ``projgrad``: projected gradient for bounds on ``x``.
* ``newtoncg``: truncated Newton with conjugate gradients on Hessian products.
* ``auglag``: augmented Lagrangian for equality constraints.

All line searches are Armijo backtracking (sufficient decrease 1e-4, factor
0.5, unit first step). Capabilities are checked before the first simulator
call; a mismatch is reported as an outcome, not raised.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from typing import Callable, Mapping, Optional

import numpy as np

from .kkt import kkt_check
from .model import (
    ConstraintCap,
    ContractError,
    CostCap,
    EvalKind,
    EvalResponse,
    EvalStatus,
    HessianCap,
    Multipliers,
    Tolerances,
)
from .problem_api import ProblemSession, SessionState


class SolverStatus(enum.Enum):
    CONVERGED = "Converged"
    ITERATION_LIMIT = "IterationLimit"
    SIMULATOR_STOP = "SimulatorStop"
    POINT_STUCK = "PointStuck"
    CAPABILITY_MISMATCH = "CapabilityMismatch"
    INIT_FAILED = "InitFailed"


@dataclass
class SolverOptions:
    max_iter: Optional[int] = None
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    initial_step: float = 1.0
    cg_max_iter: Optional[int] = None
    # augmented Lagrangian
    rho0: float = 10.0
    rho_factor: float = 10.0
    feas_shrink: float = 4.0
    max_inner: int = 200
    lm0: Optional[list] = None
    warm_up: bool = False

    @classmethod
    def from_mapping(cls, data: Optional[Mapping] = None, **overrides) -> "SolverOptions":
        merged = dict(data or {})
        merged.update(overrides)
        known = {f.name for f in fields(cls)}
        unknown = set(merged) - known
        if unknown:
            raise ContractError(f"unknown solver options: {sorted(unknown)}")
        return cls(**merged)


@dataclass
class SolverOutcome:
    status: SolverStatus
    x_final: np.ndarray
    lm_final: Multipliers
    f_final: float = math.nan
    iterations: int = 0
    n_simulate: dict = field(default_factory=dict)
    message: str = ""
    trace: list = field(default_factory=list)

    @property
    def total_simulate(self) -> int:
        return sum(self.n_simulate.values())


class _Halt(Exception):
    def __init__(self, status: SolverStatus, message: str = ""):
        super().__init__(message)
        self.status = status
        self.message = message


def _call(session: ProblemSession, kind: EvalKind, x, lm=None, v=None) -> Optional[EvalResponse]:
    r = session.request(kind, x, lm, v)
    if r.status is EvalStatus.STOP_REQUESTED:
        raise _Halt(SolverStatus.SIMULATOR_STOP, f"simulator requested stop on {kind.name}")
    if r.status is EvalStatus.POINT_REJECTED:
        return None
    return r


def _sup(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


class _Objective:
    """The problem's cost function seen through the session."""

    def __init__(self, session: ProblemSession):
        self.session = session
        self.dims = session.dims
        self._zero = Multipliers.zeros(session.dims)
        self._prepared_x = None

    def value(self, x) -> Optional[float]:
        r = _call(self.session, EvalKind.FUNCTIONS, x)
        if r is None or not math.isfinite(r.f):
            return None
        return r.f

    def grad(self, x) -> Optional[np.ndarray]:
        r = _call(self.session, EvalKind.DERIVATIVES, x)
        return None if r is None else r.g

    def value_grad(self, x):
        r = _call(self.session, EvalKind.FUNCTIONS_AND_DERIVATIVES, x)
        if r is None or not math.isfinite(r.f):
            return None
        return r.f, r.g

    def prepare(self, x) -> bool:
        r = _call(self.session, EvalKind.PREPARE_HESSIAN, x, self._zero)
        self._prepared_x = None if r is None else np.array(x)
        return r is not None

    def hess_vec(self, v) -> Optional[np.ndarray]:
        r = _call(self.session, EvalKind.HESSIAN_VECTOR_PRODUCT, self._prepared_x, self._zero, v)
        return None if r is None else r.hlv

    def log(self, x) -> None:
        _call(self.session, EvalKind.LOG, x)


class _AugmentedLagrangian(_Objective):
    """``f + lam . c_E + rho/2 ||c_E||^2`` for fixed ``lam`` and ``rho``."""

    def __init__(self, session: ProblemSession, lam: np.ndarray, rho: float):
        super().__init__(session)
        self.lam = lam
        self.rho = rho
        self._ae = None
        self._mu = None

    def _merit(self, f, ce):
        return f + self.lam @ ce + 0.5 * self.rho * (ce @ ce)

    def value(self, x):
        r = _call(self.session, EvalKind.FUNCTIONS, x)
        if r is None:
            return None
        val = self._merit(r.f, r.ce)
        return val if math.isfinite(val) else None

    def value_grad(self, x):
        r = _call(self.session, EvalKind.FUNCTIONS_AND_DERIVATIVES, x)
        if r is None:
            return None
        val = self._merit(r.f, r.ce)
        if not math.isfinite(val):
            return None
        return val, r.g + r.ae.T @ (self.lam + self.rho * r.ce)

    def grad(self, x):
        out = self.value_grad(x)
        return None if out is None else out[1]

    def prepare(self, x) -> bool:
        r = _call(self.session, EvalKind.FUNCTIONS_AND_DERIVATIVES, x)
        if r is None:
            self._prepared_x = None
            return False
        d = self.dims
        mu = Multipliers.from_blocks(np.zeros(d.n), np.zeros(d.mi), self.lam + self.rho * r.ce)
        if _call(self.session, EvalKind.PREPARE_HESSIAN, x, mu) is None:
            self._prepared_x = None
            return False
        self._prepared_x, self._mu, self._ae = np.array(x), mu, r.ae
        return True

    def hess_vec(self, v):
        r = _call(self.session, EvalKind.HESSIAN_VECTOR_PRODUCT, self._prepared_x, self._mu, v)
        if r is None:
            return None
        return r.hlv + self.rho * (self._ae.T @ (self._ae @ v))


def _armijo(obj: _Objective, x, f, g, direction, opts: SolverOptions, dxmin: float, project=None):
    """Backtrack along ``x + a d`` (or its projection) until sufficient decrease.

    Rejected trial points shorten the step like failed decrease tests.
    """
    alpha = opts.initial_step
    while True:
        xt = x + alpha * direction
        if project is not None:
            xt = project(xt)
        step = xt - x
        if _sup(step) < dxmin:
            raise _Halt(SolverStatus.POINT_STUCK, "line search step fell below dxmin")
        ft = obj.value(xt)
        if ft is not None and ft <= f + opts.armijo_c1 * float(g @ step):
            return xt, ft
        alpha *= opts.backtrack


def _gradient_descent(obj, x, basis, tol_g, max_iter, opts, dxmin, trace, log=True):
    """Steepest descent; ``basis`` holds the orthonormal basis vectors as columns."""
    start = obj.value_grad(x)
    if start is None:
        raise _Halt(SolverStatus.POINT_STUCK, "starting point rejected")
    f, g = start
    trace.append((x.copy(), f))
    for k in range(max_iter):
        if _sup(g) <= tol_g:
            return SolverStatus.CONVERGED, x, f, k
        if log:
            obj.log(x)
        d = -(basis @ (basis.T @ g)) if basis is not None else -g
        x, f = _armijo(obj, x, f, g, d, opts, dxmin)
        g = obj.grad(x)
        if g is None:
            raise _Halt(SolverStatus.POINT_STUCK, "gradient rejected at an accepted point")
        trace.append((x.copy(), f))
    status = SolverStatus.CONVERGED if _sup(g) <= tol_g else SolverStatus.ITERATION_LIMIT
    return status, x, f, max_iter


def _truncated_cg(obj, g, max_iter, eta):
    """Approximately solve ``H d = -g``; stop on negative curvature or small residual."""
    d = np.zeros_like(g)
    r = -g
    p = r.copy()
    rr = float(r @ r)
    target = eta * math.sqrt(rr)
    for i in range(max_iter):
        hp = obj.hess_vec(p)
        if hp is None:
            return -g if i == 0 else d
        curv = float(p @ hp)
        if curv <= 0.0:
            return -g if i == 0 else d
        alpha = rr / curv
        d = d + alpha * p
        r = r - alpha * hp
        rr_new = float(r @ r)
        if math.sqrt(rr_new) <= target:
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    return d


def _newton_cg(obj, x, tol_g, max_iter, opts, dxmin, trace):
    n = x.size
    cg_max = opts.cg_max_iter or max(2 * n, 10)
    start = obj.value_grad(x)
    if start is None:
        raise _Halt(SolverStatus.POINT_STUCK, "starting point rejected")
    f, g = start
    trace.append((x.copy(), f))
    for k in range(max_iter):
        gnorm = _sup(g)
        if gnorm <= tol_g:
            return SolverStatus.CONVERGED, x, f, k
        obj.log(x)
        if obj.prepare(x):
            d = _truncated_cg(obj, g, cg_max, min(1e-2, gnorm))
        else:
            d = -g
        if float(g @ d) >= 0.0:
            d = -g
        x, f = _armijo(obj, x, f, g, d, opts, dxmin)
        g = obj.grad(x)
        if g is None:
            raise _Halt(SolverStatus.POINT_STUCK, "gradient rejected at an accepted point")
        trace.append((x.copy(), f))
    status = SolverStatus.CONVERGED if _sup(g) <= tol_g else SolverStatus.ITERATION_LIMIT
    return status, x, f, max_iter


# --------------------------------------------------------------------------
# capability gating


def _requirements(name: str, session: ProblemSession) -> list[str]:
    """Reasons why solver ``name`` cannot handle the session's problem."""
    dims, init = session.dims, session.init
    caps, bounds = init.caps, init.bounds
    issues = []
    if caps.cost is not CostCap.GRADIENT:
        issues.append("needs a cost gradient")
    if name in ("sdesc", "newtoncg"):
        if dims.mi or dims.me or bounds.has_any():
            issues.append("handles unconstrained problems only")
    if name == "newtoncg" and caps.hessian < HessianCap.PRODUCT:
        issues.append("needs Hessian-vector products")
    if name == "projgrad" and (dims.mi or dims.me):
        issues.append("handles bounds on x only")
    if name == "auglag":
        if dims.mi or bounds.has_any():
            issues.append("handles equality constraints only")
        if dims.me == 0:
            issues.append("needs equality constraints")
        elif caps.eq is not ConstraintCap.JACOBIAN:
            issues.append("needs the equality-constraint Jacobian")
    return issues


def _begin(name: str, session: ProblemSession, tols: Optional[Tolerances]):
    if session.state is not SessionState.READY:
        raise ContractError(f"{name}: the problem session is not initialized")
    return tols or session.init.tols, dict(session.counts)


def _counts_since(session: ProblemSession, before: dict) -> dict:
    return {k: session.counts[k] - before.get(k, 0) for k in session.counts if session.counts[k] - before.get(k, 0)}


def _mismatch(session, issues, before) -> SolverOutcome:
    return SolverOutcome(
        SolverStatus.CAPABILITY_MISMATCH,
        np.array(session.init.x0, dtype=np.float64),
        Multipliers.zeros(session.dims),
        n_simulate=_counts_since(session, before),
        message="; ".join(issues),
    )


def _warm_up(session, x, opts):
    if opts.warm_up:
        _call(session, EvalKind.FUNCTIONS, x)


# --------------------------------------------------------------------------
# solvers


def solve_sdesc(session: ProblemSession, tols: Optional[Tolerances] = None, options=None) -> SolverOutcome:
    """Steepest descent in the problem's inner product.

    The metric gradient is ``E E^T g`` where the columns of ``E`` are the
    orthonormal basis vectors, obtained by mapping the canonical axes through
    ``to_canonical_basis``.
    """
    opts = options if isinstance(options, SolverOptions) else SolverOptions.from_mapping(options)
    tols, before = _begin("sdesc", session, tols)
    issues = _requirements("sdesc", session)
    if issues:
        return _mismatch(session, issues, before)
    n = session.dims.n
    x = np.array(session.init.x0, dtype=np.float64)
    basis = np.column_stack([session.to_canonical_basis(e) for e in np.eye(n)])
    trace: list = []
    obj = _Objective(session)
    try:
        _warm_up(session, x, opts)
        status, x, f, iters = _gradient_descent(
            obj, x, basis, tols.tol_grad_lag, opts.max_iter or 1000, opts, tols.dxmin, trace
        )
        message = ""
    except _Halt as halt:
        status, message = halt.status, halt.message
        x, f = (trace[-1] if trace else (x, math.nan))
        iters = max(len(trace) - 1, 0)
    return SolverOutcome(status, x, Multipliers.zeros(session.dims), f, iters, _counts_since(session, before), message, trace)


def _project(bounds):
    n = bounds.n
    lower = np.where(bounds.lower_present()[:n], bounds.lx, -np.inf)
    upper = np.where(bounds.upper_present()[:n], bounds.ux, np.inf)
    return lambda x: np.minimum(np.maximum(x, lower), upper), lower, upper


def _bound_multipliers(x, g, lower, upper, dxmin):
    lam = np.zeros_like(x)
    at_lower = x - lower <= dxmin
    at_upper = upper - x <= dxmin
    lam[at_lower] = np.minimum(-g[at_lower], 0.0)
    lam[at_upper] = np.maximum(-g[at_upper], 0.0)
    return lam


def solve_projgrad(session: ProblemSession, tols: Optional[Tolerances] = None, options=None) -> SolverOutcome:
    """Projected gradient with Armijo backtracking along the projection arc.

    Multipliers are estimated as ``-g`` on bounds active within dxmin, clamped
    to the sign each active side admits; convergence is a passing KKT check.
    """
    opts = options if isinstance(options, SolverOptions) else SolverOptions.from_mapping(options)
    tols, before = _begin("projgrad", session, tols)
    issues = _requirements("projgrad", session)
    if issues:
        return _mismatch(session, issues, before)
    bounds = session.init.bounds
    project, lower, upper = _project(bounds)
    x = project(np.array(session.init.x0, dtype=np.float64))
    obj = _Objective(session)
    trace: list = []
    lam = np.zeros_like(x)
    status, message, iters = SolverStatus.ITERATION_LIMIT, "", 0
    f = math.nan
    try:
        _warm_up(session, x, opts)
        start = obj.value_grad(x)
        if start is None:
            raise _Halt(SolverStatus.POINT_STUCK, "starting point rejected")
        f, g = start
        trace.append((x.copy(), f))
        for iters in range(opts.max_iter or 1000):
            lam = _bound_multipliers(x, g, lower, upper, tols.dxmin)
            report = kkt_check(x, Multipliers(lam, x.size), EvalResponse(f=f, g=g), bounds, tols)
            if report.passed:
                status = SolverStatus.CONVERGED
                break
            obj.log(x)
            x, f = _armijo(obj, x, f, g, -g, opts, tols.dxmin, project)
            g = obj.grad(x)
            if g is None:
                raise _Halt(SolverStatus.POINT_STUCK, "gradient rejected at an accepted point")
            trace.append((x.copy(), f))
        else:
            iters = opts.max_iter or 1000
    except _Halt as halt:
        status, message = halt.status, halt.message
        if trace:
            x, f = trace[-1]
    return SolverOutcome(
        status, x, Multipliers(lam, x.size), f, iters, _counts_since(session, before), message, trace
    )


def solve_newtoncg(session: ProblemSession, tols: Optional[Tolerances] = None, options=None) -> SolverOutcome:
    """Truncated Newton: CG on Hessian-vector products, steepest direction on negative curvature."""
    opts = options if isinstance(options, SolverOptions) else SolverOptions.from_mapping(options)
    tols, before = _begin("newtoncg", session, tols)
    issues = _requirements("newtoncg", session)
    if issues:
        return _mismatch(session, issues, before)
    x = np.array(session.init.x0, dtype=np.float64)
    trace: list = []
    try:
        _warm_up(session, x, opts)
        status, x, f, iters = _newton_cg(
            _Objective(session), x, tols.tol_grad_lag, opts.max_iter or 100, opts, tols.dxmin, trace
        )
        message = ""
    except _Halt as halt:
        status, message = halt.status, halt.message
        x, f = (trace[-1] if trace else (x, math.nan))
        iters = max(len(trace) - 1, 0)
    return SolverOutcome(status, x, Multipliers.zeros(session.dims), f, iters, _counts_since(session, before), message, trace)


def solve_auglag(session: ProblemSession, tols: Optional[Tolerances] = None, options=None) -> SolverOutcome:
    """Augmented Lagrangian for equality constraints.

    Each outer iteration minimizes ``f + lam . c_E + rho/2 ||c_E||^2`` with
    newtoncg (or sdesc without Hessian products), then sets
    ``lam <- lam + rho c_E``. ``rho`` grows tenfold whenever ``||c_E||_inf``
    fails to shrink fourfold.
    """
    opts = options if isinstance(options, SolverOptions) else SolverOptions.from_mapping(options)
    if not opts.rho0 > 0:
        raise ContractError(f"auglag: initial penalty must be positive, got {opts.rho0}")
    tols, before = _begin("auglag", session, tols)
    issues = _requirements("auglag", session)
    if issues:
        return _mismatch(session, issues, before)
    dims, bounds = session.dims, session.init.bounds
    x = np.array(session.init.x0, dtype=np.float64)
    lam = np.zeros(dims.me) if opts.lm0 is None else np.array(opts.lm0, dtype=np.float64).reshape(dims.me)
    rho = opts.rho0
    use_newton = session.caps.hessian >= HessianCap.PRODUCT
    basis = np.column_stack([session.to_canonical_basis(e) for e in np.eye(dims.n)])
    inner_tol = 0.1 * tols.tol_grad_lag
    trace: list = []
    lm = Multipliers.from_blocks(np.zeros(dims.n), (), lam)
    status, message, f, outer = SolverStatus.ITERATION_LIMIT, "", math.nan, 0
    c_prev = math.inf
    try:
        _warm_up(session, x, opts)
        for outer in range(1, (opts.max_iter or 30) + 1):
            obj = _AugmentedLagrangian(session, lam, rho)
            inner_trace: list = []
            if use_newton:
                _, x, _, _ = _newton_cg(obj, x, inner_tol, opts.max_inner, opts, tols.dxmin, inner_trace)
            else:
                _, x, _, _ = _gradient_descent(obj, x, basis, inner_tol, opts.max_inner, opts, tols.dxmin, inner_trace)
            r = _call(session, EvalKind.FUNCTIONS_AND_DERIVATIVES, x)
            if r is None:
                raise _Halt(SolverStatus.POINT_STUCK, "outer iterate rejected")
            f = r.f
            lam = lam + rho * r.ce
            lm = Multipliers.from_blocks(np.zeros(dims.n), (), lam)
            trace.append((x.copy(), f))
            if kkt_check(x, lm, r, bounds, tols).passed:
                status = SolverStatus.CONVERGED
                break
            c_norm = _sup(r.ce)
            if c_norm > c_prev / opts.feas_shrink:
                rho *= opts.rho_factor
            c_prev = c_norm
    except _Halt as halt:
        status, message = halt.status, halt.message
    return SolverOutcome(status, x, lm, f, outer, _counts_since(session, before), message, trace)


# --------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class SolverDescriptor:
    name: str
    solve: Callable[..., SolverOutcome]
    supported_tags: frozenset
    default_options: Mapping = field(default_factory=dict)

    def run(self, session: ProblemSession, tols: Optional[Tolerances] = None, options: Optional[Mapping] = None):
        merged = dict(self.default_options)
        merged.update(options or {})
        return self.solve(session, tols, SolverOptions.from_mapping(merged))

    def requirements(self, session: ProblemSession) -> list[str]:
        return _requirements(self.name, session)


SOLVERS = {
    d.name: d
    for d in (
        SolverDescriptor("sdesc", solve_sdesc, frozenset({"unconstrained"})),
        SolverDescriptor("projgrad", solve_projgrad, frozenset({"unconstrained", "bound-constrained"})),
        SolverDescriptor("newtoncg", solve_newtoncg, frozenset({"unconstrained"})),
        SolverDescriptor("auglag", solve_auglag, frozenset({"equality"})),
    )
}
