"""First-order optimality residuals.

All functions are pure. Vectors over ``c(x)`` use block order B (bounds on
``x``), I (inequalities), E (equalities).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import Bounds, CapabilityError, ContractError, EvalResponse, Multipliers, Tolerances

_EMPTY = np.zeros(0)


def _arr(v, length: int, name: str) -> np.ndarray:
    a = _EMPTY if v is None else np.asarray(v, dtype=np.float64).reshape(-1)
    if a.shape[0] != length:
        raise ContractError(f"{name} has length {a.shape[0]}, expected {length}")
    return a


def feasibility_violation(x, ci, ce, bounds: Bounds) -> np.ndarray:
    """Violation vector of ``c(x) = (x, ci, ce)``; zero iff the point is feasible.

    B and I entries are ``max(0, l - v, v - u)`` with absent bounds never
    violated; E entries are ``ce`` itself, sign preserved.
    """
    n, mi = bounds.n, bounds.mi
    x = _arr(x, n, "x")
    ci = _arr(ci, mi, "ci")
    ce = np.asarray(_EMPTY if ce is None else ce, dtype=np.float64).reshape(-1)
    v = np.concatenate([x, ci])
    lower = np.where(bounds.lower_present(), bounds.lower(), -np.inf)
    upper = np.where(bounds.upper_present(), bounds.upper(), np.inf)
    with np.errstate(invalid="ignore"):
        viol = np.maximum(0.0, np.maximum(lower - v, v - upper))
    return np.concatenate([viol, ce])


def lagrangian(f: float, x, ci, ce, lm: Multipliers) -> float:
    """``f + lm . c(x)`` with ``c(x) = (x, ci, ce)``."""
    c = np.concatenate([_arr(x, lm.n, "x"), _arr(ci, lm.mi, "ci"), _arr(ce, lm.me, "ce")])
    return float(f + lm.lm @ c)


def lagrangian_gradient(g, ai, ae, lm: Multipliers) -> np.ndarray:
    """Gradient in ``x`` of the Lagrangian: ``g + lm_B + ai^T lm_I + ae^T lm_E``.

    A Jacobian may be omitted only when its multiplier block is zero.
    """
    if g is None:
        raise CapabilityError("missing field g (cost gradient)")
    out = _arr(g, lm.n, "g") + lm.b
    for jac, block, name in ((ai, lm.i, "ai"), (ae, lm.e, "ae")):
        if block.size == 0:
            continue
        if jac is None:
            if np.any(block != 0):
                raise CapabilityError(f"missing field {name} for a nonzero multiplier block")
            continue
        jac = np.asarray(jac, dtype=np.float64)
        if jac.shape != (block.size, lm.n):
            raise ContractError(f"{name} has shape {jac.shape}, expected {(block.size, lm.n)}")
        out = out + jac.T @ block
    return out


def multiplier_sign_violation(x, ci, lm: Multipliers, bounds: Bounds, tol_feas: float) -> np.ndarray:
    """Sign residual of the multipliers given which bounds are (nearly) active.

    For each B/I component with value ``w``: ``max(lm, 0)`` if
    ``w < l + tol_feas``, else ``lm`` if ``w <= u - tol_feas``, else
    ``min(lm, 0)``. The first matching case wins. E components are zero.
    """
    if not tol_feas > 0:
        raise ContractError("tol_feas must be positive")
    n, mi = bounds.n, bounds.mi
    if (lm.n, lm.mi) != (n, mi):
        raise ContractError("multipliers do not match the bounds dimensions")
    w = np.concatenate([_arr(x, n, "x"), _arr(ci, mi, "ci")])
    lam = lm.lm[: n + mi]
    near_lower = bounds.lower_present() & (w < bounds.lower() + tol_feas)
    interior = ~bounds.upper_present() | (w <= bounds.upper() - tol_feas)
    out = np.where(near_lower, np.maximum(lam, 0.0), np.where(interior, lam, np.minimum(lam, 0.0)))
    return np.concatenate([out, np.zeros(lm.me)])


def _sup(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


@dataclass(frozen=True)
class KktReport:
    r_grad_lag: float
    r_feas: float
    r_sign: float
    passed: bool
    active_lower: tuple[int, ...] = ()
    active_upper: tuple[int, ...] = ()
    r_gap: Optional[float] = None

    def summary(self) -> str:
        verdict = "pass" if self.passed else "fail"
        return (
            f"KKT {verdict}: |grad L|={self.r_grad_lag:.3e} |c#|={self.r_feas:.3e} "
            f"|sgn|={self.r_sign:.3e} active_lower={list(self.active_lower)} "
            f"active_upper={list(self.active_upper)}"
        )


def active_sets(x, ci, bounds: Bounds, tols: Tolerances) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Indices over B u I whose bound is active within dxmin (B) or dcimin (I)."""
    n, mi = bounds.n, bounds.mi
    w = np.concatenate([_arr(x, n, "x"), _arr(ci, mi, "ci")])
    res = np.concatenate([np.full(n, tols.dxmin), np.full(mi, tols.dcimin)])
    lower = bounds.lower_present() & (w - bounds.lower() <= res)
    upper = bounds.upper_present() & (bounds.upper() - w <= res)
    return tuple(int(i) for i in np.flatnonzero(lower)), tuple(int(i) for i in np.flatnonzero(upper))


def kkt_check(
    x,
    lm: Multipliers,
    response: EvalResponse,
    bounds: Bounds,
    tols: Tolerances,
    gap: Optional[float] = None,
) -> KktReport:
    """Evaluate the three optimality residuals at ``(x, lm)``.

    ``response`` must hold ``g`` plus the constraint values (and the
    Jacobians of any block with nonzero multipliers) at ``x``. ``gap`` is a
    duality-gap value supplied by the caller, reported but never tested.
    """
    mi, me = bounds.mi, lm.me
    if mi and response.ci is None:
        raise CapabilityError("missing field ci (inequality constraint values)")
    if me and response.ce is None:
        raise CapabilityError("missing field ce (equality constraint values)")
    if response.g is None:
        raise CapabilityError("missing field g (cost gradient)")
    ci = response.ci if mi else _EMPTY
    ce = response.ce if me else _EMPTY

    r_grad = _sup(lagrangian_gradient(response.g, response.ai, response.ae, lm))
    r_feas = _sup(feasibility_violation(x, ci, ce, bounds))
    r_sign = _sup(multiplier_sign_violation(x, ci, lm, bounds, tols.tol_feas))
    passed = r_grad <= tols.tol_grad_lag and r_feas <= tols.tol_feas and r_sign <= tols.tol_sign
    lower, upper = active_sets(x, ci, bounds, tols)
    return KktReport(
        r_grad_lag=r_grad,
        r_feas=r_feas,
        r_sign=r_sign,
        passed=bool(passed),
        active_lower=lower,
        active_upper=upper,
        r_gap=gap,
    )
