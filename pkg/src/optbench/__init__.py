"""Benchmarking environment for nonlinear optimization solvers.

Problems answer typed evaluation requests through a session; solvers drive
them, KKT residuals certify the result and a batch runner ties the pieces to
an on-disk registry of list files.
"""

from .checker import DerivativeReport, check_gradient, check_hessian_vector, check_jacobians, check_problem
from .collection import COLLECTIONS, CORE_PROBLEMS, MODULOPT, KnownSolution, ScaledMetric
from .kkt import KktReport, feasibility_violation, kkt_check, lagrangian, lagrangian_gradient, multiplier_sign_violation
from .model import (
    Bounds,
    CapabilityError,
    ContractError,
    EvalKind,
    EvalRequest,
    EvalResponse,
    EvalStatus,
    Multipliers,
    ProblemDims,
    ProblemInit,
    ProtocolError,
    SimCap,
    Tolerances,
    Workspace,
)
from .problem_api import Problem, ProblemSession, open_session
from .solvers import SOLVERS, SolverOutcome, SolverStatus

__version__ = "0.1.0"

__all__ = [
    "Bounds",
    "COLLECTIONS",
    "CORE_PROBLEMS",
    "CapabilityError",
    "ContractError",
    "DerivativeReport",
    "EvalKind",
    "EvalRequest",
    "EvalResponse",
    "EvalStatus",
    "KktReport",
    "KnownSolution",
    "MODULOPT",
    "Multipliers",
    "Problem",
    "ProblemDims",
    "ProblemInit",
    "ProblemSession",
    "ProtocolError",
    "SOLVERS",
    "ScaledMetric",
    "SimCap",
    "SolverOutcome",
    "SolverStatus",
    "Tolerances",
    "Workspace",
    "check_gradient",
    "check_hessian_vector",
    "check_jacobians",
    "check_problem",
    "feasibility_violation",
    "kkt_check",
    "lagrangian",
    "lagrangian_gradient",
    "multiplier_sign_violation",
    "open_session",
]
