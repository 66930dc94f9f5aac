"""Central finite-difference validation of simulator derivatives.

Every check goes through a :class:`~optbench.problem_api.ProblemSession`, so
it obeys the same protocol and capability rules as a solver. Errors are
``||analytic - fd||_inf / (1 + ||analytic||_inf)``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .kkt import lagrangian_gradient
from .model import (
    CapabilityError,
    ConstraintCap,
    ContractError,
    CostCap,
    EvalKind,
    EvalStatus,
    HessianCap,
    Multipliers,
)
from .problem_api import ProblemSession

DEFAULT_STEP = 1e-6


class SimulatorStopped(RuntimeError):
    """The simulator asked to stop during a check."""


@dataclass
class DerivativeReport:
    tol: float
    max_rel_err_gradient: Optional[float] = None
    max_rel_err_jac_i: Optional[float] = None
    max_rel_err_jac_e: Optional[float] = None
    max_rel_err_hv: Optional[float] = None
    max_rel_err_full_hessian: Optional[float] = None
    points_tested: int = 0
    points_rejected: int = 0
    diagnosis: list = field(default_factory=list)

    ERROR_FIELDS = (
        "max_rel_err_gradient",
        "max_rel_err_jac_i",
        "max_rel_err_jac_e",
        "max_rel_err_hv",
        "max_rel_err_full_hessian",
    )

    @property
    def passed(self) -> bool:
        if self.diagnosis:
            return False
        errors = [getattr(self, name) for name in self.ERROR_FIELDS]
        return all(e is None or e <= self.tol for e in errors)

    def merge(self, other: "DerivativeReport") -> "DerivativeReport":
        merged = replace(self, diagnosis=self.diagnosis + other.diagnosis)
        for name in self.ERROR_FIELDS:
            a, b = getattr(self, name), getattr(other, name)
            setattr(merged, name, b if a is None else (a if b is None else max(a, b)))
        merged.points_tested = max(self.points_tested, other.points_tested)
        merged.points_rejected = max(self.points_rejected, other.points_rejected)
        merged.tol = max(self.tol, other.tol)
        return merged

    def to_text(self) -> str:
        lines = [f"derivative check ({'pass' if self.passed else 'FAIL'}, tol={self.tol:.1e})"]
        for name in self.ERROR_FIELDS:
            value = getattr(self, name)
            if value is not None:
                lines.append(f"  {name:<26} {value:.3e}")
        lines.append(f"  points tested {self.points_tested}, rejected {self.points_rejected}")
        lines.extend(f"  note: {d}" for d in self.diagnosis)
        return "\n".join(lines)

    def to_record(self) -> str:
        data = {k: v for k, v in asdict(self).items()}
        data["passed"] = self.passed
        return json.dumps(data, sort_keys=True)


def _rel_err(analytic: np.ndarray, approx: np.ndarray) -> float:
    scale = 1.0 + (float(np.max(np.abs(analytic))) if analytic.size else 0.0)
    return float(np.max(np.abs(analytic - approx))) / scale if analytic.size else 0.0


def _points(x, n: int) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if pts.shape[1] != n:
        raise ContractError(f"points must have {n} columns, got shape {pts.shape}")
    return pts


def _check_step(step: float) -> None:
    if not step > 0:
        raise ContractError(f"finite-difference step must be positive, got {step}")


def _eval(session: ProblemSession, kind: EvalKind, x, lm=None, v=None):
    """Return the response, or None if the point was rejected."""
    r = session.request(kind, x, lm, v)
    if r.status is EvalStatus.STOP_REQUESTED:
        raise SimulatorStopped(f"simulator stopped during {kind.name}")
    return r if r.ok else None


class _Rejected(Exception):
    pass


def _fd_columns(session, x, step, fn):
    """Central differences of ``fn(response)`` along each coordinate axis."""
    cols = []
    for j in range(x.size):
        h = step * (1.0 + abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        rp = _eval(session, EvalKind.FUNCTIONS, xp)
        rm = _eval(session, EvalKind.FUNCTIONS, xm)
        if rp is None or rm is None:
            raise _Rejected
        cols.append((np.atleast_1d(fn(rp)) - np.atleast_1d(fn(rm))) / (xp[j] - xm[j]))
    return np.column_stack(cols)


def check_gradient(session: ProblemSession, x, step: float = DEFAULT_STEP, tol: float = 1e-6) -> DerivativeReport:
    """Compare the cost gradient with central differences at one or more points."""
    _check_step(step)
    if session.caps.cost is not CostCap.GRADIENT:
        raise CapabilityError("gradient check needs a cost gradient")
    report = DerivativeReport(tol=tol, max_rel_err_gradient=0.0)
    for p in _points(x, session.dims.n):
        r = _eval(session, EvalKind.DERIVATIVES, p)
        try:
            if r is None:
                raise _Rejected
            fd = _fd_columns(session, p, step, lambda resp: resp.f)[0]
        except _Rejected:
            report.points_rejected += 1
            continue
        report.max_rel_err_gradient = max(report.max_rel_err_gradient, _rel_err(r.g, fd))
        report.points_tested += 1
    if report.points_tested == 0:
        report.max_rel_err_gradient = None
        report.diagnosis.append("gradient: every probe point was rejected by the simulator")
    return report


def check_jacobians(session: ProblemSession, x, step: float = DEFAULT_STEP, tol: float = 1e-6) -> DerivativeReport:
    """Compare constraint Jacobians with row-wise central differences.

    Blocks without a Jacobian capability are left out of the report.
    """
    _check_step(step)
    caps = session.caps
    blocks = []
    if caps.ineq is ConstraintCap.JACOBIAN:
        blocks.append(("ai", "ci", "max_rel_err_jac_i"))
    if caps.eq is ConstraintCap.JACOBIAN:
        blocks.append(("ae", "ce", "max_rel_err_jac_e"))
    report = DerivativeReport(tol=tol)
    if not blocks:
        return report
    for _, _, field_name in blocks:
        setattr(report, field_name, 0.0)
    for p in _points(x, session.dims.n):
        r = _eval(session, EvalKind.DERIVATIVES, p)
        try:
            if r is None:
                raise _Rejected
            fds = [_fd_columns(session, p, step, lambda resp, v=val: getattr(resp, v)) for _, val, _ in blocks]
        except _Rejected:
            report.points_rejected += 1
            continue
        for (jac, _, field_name), fd in zip(blocks, fds):
            err = _rel_err(getattr(r, jac), fd)
            setattr(report, field_name, max(getattr(report, field_name), err))
        report.points_tested += 1
    if report.points_tested == 0:
        for _, _, field_name in blocks:
            setattr(report, field_name, None)
        report.diagnosis.append("jacobians: every probe point was rejected by the simulator")
    return report


def _lagrangian_grad_at(session, x, lm: Multipliers):
    r = _eval(session, EvalKind.DERIVATIVES, x)
    if r is None:
        raise _Rejected
    return lagrangian_gradient(r.g, r.ai, r.ae, lm)


def hessian_vector_fd(session: ProblemSession, x, lm: Multipliers, v, step: float = DEFAULT_STEP) -> np.ndarray:
    """Directional derivative of the Lagrangian gradient along ``v``, by central differences."""
    _check_step(step)
    x, v = np.asarray(x, dtype=np.float64), np.asarray(v, dtype=np.float64)
    vnorm = float(np.max(np.abs(v)))
    if vnorm == 0.0:
        return np.zeros_like(x)
    h = step * (1.0 + float(np.max(np.abs(x)))) / vnorm
    gp = _lagrangian_grad_at(session, x + h * v, lm)
    gm = _lagrangian_grad_at(session, x - h * v, lm)
    return (gp - gm) / (2.0 * h)


def check_hessian_vector(
    session: ProblemSession,
    x,
    lm: Multipliers,
    v,
    step: float = DEFAULT_STEP,
    tol: float = 1e-6,
) -> DerivativeReport:
    """Compare Hessian-vector products with the finite difference of the Lagrangian gradient.

    ``x`` may hold several points (rows); ``v`` is one direction or one per
    point. PrepareHessian is issued at each point before the product.
    """
    _check_step(step)
    caps = session.caps
    if caps.hessian < HessianCap.PRODUCT:
        raise CapabilityError("Hessian-vector check needs Hessian products")
    if caps.cost is not CostCap.GRADIENT:
        raise CapabilityError("Hessian-vector check needs a cost gradient")
    pts = _points(x, session.dims.n)
    dirs = np.broadcast_to(np.atleast_2d(np.asarray(v, dtype=np.float64)), pts.shape)
    report = DerivativeReport(tol=tol, max_rel_err_hv=0.0)
    full = caps.hessian is HessianCap.FULL
    if full:
        report.max_rel_err_full_hessian = 0.0
    for p, d in zip(pts, dirs):
        prep = _eval(session, EvalKind.PREPARE_HESSIAN, p, lm)
        try:
            if prep is None:
                raise _Rejected
            hv = _eval(session, EvalKind.HESSIAN_VECTOR_PRODUCT, p, lm, d.copy())
            if hv is None:
                raise _Rejected
            fd = hessian_vector_fd(session, p, lm, d, step)
            hl = _eval(session, EvalKind.FULL_HESSIAN, p, lm) if full else None
        except _Rejected:
            report.points_rejected += 1
            continue
        report.max_rel_err_hv = max(report.max_rel_err_hv, _rel_err(hv.hlv, fd))
        if hl is not None:
            report.max_rel_err_full_hessian = max(
                report.max_rel_err_full_hessian, _rel_err(hl.hl @ d, hv.hlv)
            )
        report.points_tested += 1
    if report.points_tested == 0:
        report.max_rel_err_hv = report.max_rel_err_full_hessian = None
        report.diagnosis.append("hessian: every probe point was rejected by the simulator")
    return report


def sample_points(x0, count: int = 10, radius: float = 2.0, seed: int = 0) -> np.ndarray:
    """``count`` pseudo-random points within ``radius`` of ``x0`` in the sup-norm."""
    rng = np.random.default_rng(seed)
    x0 = np.asarray(x0, dtype=np.float64)
    return x0 + rng.uniform(-radius, radius, size=(count, x0.size))


def check_problem(
    session: ProblemSession,
    points=None,
    step: float = DEFAULT_STEP,
    tol: float = 1e-6,
    seed: int = 0,
) -> DerivativeReport:
    """Run every check the problem's capabilities allow.

    Hessian checks use random multipliers on the constraint blocks and random
    directions.
    """
    dims, caps = session.dims, session.caps
    if points is None:
        points = sample_points(session.init.x0, seed=seed)
    points = _points(points, dims.n)
    report = DerivativeReport(tol=tol)
    if caps.cost is CostCap.GRADIENT:
        report = report.merge(check_gradient(session, points, step, tol))
    report = report.merge(check_jacobians(session, points, step, tol))
    if caps.hessian >= HessianCap.PRODUCT and caps.cost is CostCap.GRADIENT:
        rng = np.random.default_rng(seed + 1)
        for p in points:
            lm = Multipliers(
                np.concatenate([np.zeros(dims.n), rng.uniform(-2, 2, dims.mi + dims.me)]),
                dims.n,
                dims.mi,
                dims.me,
            )
            if caps.ineq is not ConstraintCap.JACOBIAN:
                lm = lm.with_blocks(lm_i=np.zeros(dims.mi))
            if caps.eq is not ConstraintCap.JACOBIAN:
                lm = lm.with_blocks(lm_e=np.zeros(dims.me))
            d = rng.standard_normal(dims.n)
            report = report.merge(check_hessian_vector(session, p, lm, d, step, tol))
    report.points_tested = len(points) - report.points_rejected
    return report
