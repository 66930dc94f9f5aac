"""Built-in problem collection.

Five desk-scale problems that together cover every capability axis and every
constraint block, plus ``offsetquad``, which reads its data from the run's
working directory. Each problem knows its analytic solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .model import (
    Bounds,
    ConstraintCap,
    ContractError,
    CostCap,
    EvalKind,
    EvalRequest,
    EvalResponse,
    HessianCap,
    Multipliers,
    ProblemDims,
    ProblemInit,
    SimCap,
    Tolerances,
    Workspace,
)
from .problem_api import WORKDIR_ENV, Problem, ProblemRegistry, ProblemRegistryEntry

COLLECTION_NAME = "modulopt"


@dataclass(frozen=True, eq=False)
class KnownSolution:
    x_star: np.ndarray
    lm_star: Multipliers
    f_star: float


class ScaledMetric:
    """Inner product ``<u, v> = (Mu) . (Mv)`` for a nonsingular ``M``.

    The orthonormal basis is ``e^i = M^{-1} ê^i``, so coordinates map as
    ``y = M x`` and back as ``x = M^{-1} y``.
    """

    def __init__(self, m_matrix):
        m = np.array(m_matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ContractError(f"metric matrix must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ContractError("metric matrix has non-finite entries")
        try:
            basis = np.linalg.solve(m, np.eye(m.shape[0]))
        except np.linalg.LinAlgError:
            raise ContractError("metric matrix is singular") from None
        if not np.all(np.isfinite(basis)) or np.linalg.cond(m) > 1e14:
            raise ContractError("metric matrix is numerically singular")
        self.m_matrix = m
        self._basis = basis

    @property
    def n(self) -> int:
        return self.m_matrix.shape[0]

    def inner(self, u, v) -> float:
        return float((self.m_matrix @ u) @ (self.m_matrix @ v))

    def to_orthonormal(self, x) -> np.ndarray:
        return self.m_matrix @ x

    def to_canonical(self, y) -> np.ndarray:
        return np.linalg.solve(self.m_matrix, y)

    def basis(self) -> np.ndarray:
        """Columns are the orthonormal basis vectors ``e^i``."""
        return self._basis.copy()


class CollectionProblem(Problem):
    """Shared simulator dispatch for smooth collection problems.

    Subclasses set the dimensions and capabilities and supply the function
    pieces; ``lagrangian_hessian`` covers both product and full requests.
    """

    n = 1
    mi = 0
    me = 0
    caps = SimCap()

    def dimensions(self) -> ProblemDims:
        return ProblemDims(self.n, self.mi, self.me)

    def bounds(self) -> Bounds:
        return Bounds.free(self.n, self.mi)

    def start(self) -> np.ndarray:
        return np.zeros(self.n)

    def tolerances(self) -> Tolerances:
        return Tolerances()

    def initialize(self, workspace: Workspace, environ: Mapping[str, str]) -> ProblemInit:
        self._hessian = None
        return ProblemInit(
            pname=self.name,
            x0=np.array(self.start(), dtype=np.float64),
            bounds=self.bounds(),
            tols=self.tolerances(),
            caps=self.caps,
        )

    def known_solution(self) -> KnownSolution:
        raise NotImplementedError

    # function pieces

    def objective(self, x) -> float:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def ineq(self, x) -> np.ndarray:
        return np.zeros(0)

    def ineq_jacobian(self, x) -> np.ndarray:
        return np.zeros((0, self.n))

    def eq(self, x) -> np.ndarray:
        return np.zeros(0)

    def eq_jacobian(self, x) -> np.ndarray:
        return np.zeros((0, self.n))

    def lagrangian_hessian(self, x, lm: Multipliers) -> np.ndarray:
        raise NotImplementedError

    def simulate(self, request: EvalRequest, workspace: Workspace) -> EvalResponse:
        kind, x, caps = request.kind, request.x, self.caps
        if kind is EvalKind.LOG:
            return EvalResponse()
        out = {}
        if kind in (EvalKind.FUNCTIONS, EvalKind.FUNCTIONS_AND_DERIVATIVES):
            if caps.cost is not CostCap.ABSENT:
                out["f"] = self.objective(x)
            if caps.ineq is not ConstraintCap.ABSENT:
                out["ci"] = self.ineq(x)
            if caps.eq is not ConstraintCap.ABSENT:
                out["ce"] = self.eq(x)
        if kind in (EvalKind.DERIVATIVES, EvalKind.FUNCTIONS_AND_DERIVATIVES):
            if caps.cost in (CostCap.GRADIENT, CostCap.SUBGRADIENT):
                out["g"] = self.gradient(x)
            if caps.ineq is ConstraintCap.JACOBIAN:
                out["ai"] = self.ineq_jacobian(x)
            if caps.eq is ConstraintCap.JACOBIAN:
                out["ae"] = self.eq_jacobian(x)
        if kind is EvalKind.PREPARE_HESSIAN:
            self._hessian = self.lagrangian_hessian(x, request.lm)
        if kind is EvalKind.HESSIAN_VECTOR_PRODUCT:
            out["hlv"] = self._hessian @ request.v
        if kind is EvalKind.FULL_HESSIAN:
            out["hl"] = self.lagrangian_hessian(x, request.lm)
        return EvalResponse(**out)


class Rosenbrock2(CollectionProblem):
    """``100 (x2 - x1^2)^2 + (1 - x1)^2`` from the classical start (-1.2, 1)."""

    name = "rosenbrock2"
    n = 2
    caps = SimCap(cost=CostCap.GRADIENT, hessian=HessianCap.FULL)

    def start(self):
        return np.array([-1.2, 1.0])

    def objective(self, x):
        return 100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2

    def gradient(self, x):
        t = x[1] - x[0] ** 2
        return np.array([-400.0 * x[0] * t - 2.0 * (1.0 - x[0]), 200.0 * t])

    def lagrangian_hessian(self, x, lm):
        return np.array(
            [
                [1200.0 * x[0] ** 2 - 400.0 * x[1] + 2.0, -400.0 * x[0]],
                [-400.0 * x[0], 200.0],
            ]
        )

    def known_solution(self):
        return KnownSolution(np.ones(2), Multipliers.from_blocks(np.zeros(2)), 0.0)


class ScaledQuad(CollectionProblem):
    """``1/2 ||M (x - a)||^2`` exposed with the inner product defined by ``M``.

    ``M`` lives in the double-precision workspace; the metric operations read
    it from there. In the coordinates ``y = M x`` the problem is the plain
    Euclidean quadratic centred at ``M a``.
    """

    name = "scaledquad"
    caps = SimCap(cost=CostCap.GRADIENT, hessian=HessianCap.PRODUCT)

    def __init__(self, n: int = 2, m_matrix=None, a=None, x0=None):
        if m_matrix is None:
            m_matrix = np.eye(n) + np.diag(np.arange(n, dtype=np.float64)) + np.diag(np.ones(n - 1), 1)
        self.metric = ScaledMetric(m_matrix)
        if self.metric.n != n:
            raise ContractError(f"metric matrix has size {self.metric.n}, expected {n}")
        self.n = n
        self.a = np.arange(1, n + 1, dtype=np.float64) if a is None else np.array(a, dtype=np.float64)
        self.x0 = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)

    def dimensions(self):
        return ProblemDims(self.n, n_highp_ws=self.n * self.n)

    def initialize(self, workspace, environ):
        workspace.highp[:] = self.metric.m_matrix.ravel()
        return super().initialize(workspace, environ)

    def start(self):
        return self.x0

    def _q(self):
        m = self.metric.m_matrix
        return m.T @ m

    def objective(self, x):
        r = self.metric.m_matrix @ (x - self.a)
        return 0.5 * float(r @ r)

    def gradient(self, x):
        return self._q() @ (x - self.a)

    def lagrangian_hessian(self, x, lm):
        return self._q()

    def known_solution(self):
        return KnownSolution(self.a.copy(), Multipliers.from_blocks(np.zeros(self.n)), 0.0)

    def _m(self, workspace):
        return workspace.highp.reshape(self.n, self.n)

    def inner_product(self, v1, v2, workspace):
        m = self._m(workspace)
        return float((m @ v1) @ (m @ v2))

    def to_orthonormal_basis(self, x, workspace):
        return self._m(workspace) @ x

    def to_canonical_basis(self, y, workspace):
        return np.linalg.solve(self._m(workspace), y)


class BoxQuad1(CollectionProblem):
    """``(x - 2)^2`` on the box ``[lower, upper]`` (default [-1, 1])."""

    name = "boxquad1"
    n = 1
    caps = SimCap(cost=CostCap.GRADIENT, hessian=HessianCap.FULL)

    def __init__(self, lower: float = -1.0, upper: float = 1.0, x0: float = 0.0):
        self.lower, self.upper, self.x0 = float(lower), float(upper), float(x0)

    def bounds(self):
        return Bounds([self.lower], [self.upper])

    def start(self):
        return np.array([self.x0])

    def objective(self, x):
        return float((x[0] - 2.0) ** 2)

    def gradient(self, x):
        return np.array([2.0 * (x[0] - 2.0)])

    def lagrangian_hessian(self, x, lm):
        return np.array([[2.0]])

    def known_solution(self):
        xs = min(max(2.0, self.lower), self.upper)
        lam = -2.0 * (xs - 2.0)
        return KnownSolution(np.array([xs]), Multipliers.from_blocks([lam]), (xs - 2.0) ** 2)

    def post_optimal(self, x, lm, last_response, workspace):
        return f"boxquad1: solution x = {float(x[0])!r}, f = {float(self.objective(x))!r}, multiplier = {float(lm.b[0])!r}"


class EqLine2(CollectionProblem):
    """``x1^2 + 2 x2^2`` subject to ``x1 + x2 - 1 = 0``."""

    name = "eqline2"
    n = 2
    me = 1
    caps = SimCap(cost=CostCap.GRADIENT, eq=ConstraintCap.JACOBIAN, hessian=HessianCap.PRODUCT)

    def __init__(self, x0=(0.0, 0.0)):
        self.x0 = np.array(x0, dtype=np.float64)

    def start(self):
        return self.x0

    def objective(self, x):
        return float(x[0] ** 2 + 2.0 * x[1] ** 2)

    def gradient(self, x):
        return np.array([2.0 * x[0], 4.0 * x[1]])

    def eq(self, x):
        return np.array([x[0] + x[1] - 1.0])

    def eq_jacobian(self, x):
        return np.array([[1.0, 1.0]])

    def lagrangian_hessian(self, x, lm):
        # the constraint is linear, so only f contributes
        return np.diag([2.0, 4.0])

    def known_solution(self):
        lm = Multipliers.from_blocks(np.zeros(2), (), [-4.0 / 3.0])
        return KnownSolution(np.array([2.0 / 3.0, 1.0 / 3.0]), lm, 2.0 / 3.0)

    def post_optimal(self, x, lm, last_response, workspace):
        return f"eqline2: constraint residual c_E(x) = {float(self.eq(x)[0])!r} at x = {list(map(float, x))}"


class IneqCircle2(CollectionProblem):
    """``x1 + x2`` subject to ``x1^2 + x2^2 <= 1``."""

    name = "ineqcircle2"
    n = 2
    mi = 1
    caps = SimCap(cost=CostCap.GRADIENT, ineq=ConstraintCap.JACOBIAN, hessian=HessianCap.FULL)

    def bounds(self):
        b = Bounds.free(2, 1)
        return Bounds(b.lx, b.ux, li=[-b.inf_value], ui=[1.0])

    def objective(self, x):
        return float(x[0] + x[1])

    def gradient(self, x):
        return np.ones(2)

    def ineq(self, x):
        return np.array([x[0] ** 2 + x[1] ** 2])

    def ineq_jacobian(self, x):
        return np.array([[2.0 * x[0], 2.0 * x[1]]])

    def lagrangian_hessian(self, x, lm):
        return 2.0 * lm.i[0] * np.eye(2)

    def known_solution(self):
        s = math.sqrt(2.0) / 2.0
        lm = Multipliers.from_blocks(np.zeros(2), [1.0 / math.sqrt(2.0)])
        return KnownSolution(np.array([-s, -s]), lm, -math.sqrt(2.0))


class OffsetQuad(CollectionProblem):
    """``(x - 1)^2 + offset`` where ``offset`` is read from a data file.

    The file is looked up in the run's working directory, whose path arrives
    through the environment mapping; a missing or unreadable file fails the
    initialization.
    """

    name = "offsetquad"
    n = 1
    caps = SimCap(cost=CostCap.GRADIENT)
    data_file = "offset.dat"

    def __init__(self):
        self.offset: Optional[float] = None

    def initialize(self, workspace, environ):
        workdir = environ.get(WORKDIR_ENV)
        if not workdir:
            return ProblemInit.failed(self.name, f"{WORKDIR_ENV} is not set")
        path = Path(workdir) / self.data_file
        try:
            self.offset = float(path.read_text().split("#", 1)[0].strip())
        except (OSError, ValueError) as exc:
            return ProblemInit.failed(self.name, f"cannot read {path}: {exc}")
        return super().initialize(workspace, environ)

    def objective(self, x):
        return float((x[0] - 1.0) ** 2 + self.offset)

    def gradient(self, x):
        return np.array([2.0 * (x[0] - 1.0)])

    def known_solution(self):
        if self.offset is None:
            raise RuntimeError("offsetquad must be initialized before its solution is known")
        return KnownSolution(np.ones(1), Multipliers.from_blocks([0.0]), self.offset)


def rosenbrock2() -> Rosenbrock2:
    return Rosenbrock2()


def scaledquad(n: int = 2, m_matrix=None, a=None, x0=None) -> ScaledQuad:
    return ScaledQuad(n, m_matrix, a, x0)


def boxquad1(lower: float = -1.0, upper: float = 1.0, x0: float = 0.0) -> BoxQuad1:
    return BoxQuad1(lower, upper, x0)


def eqline2(x0=(0.0, 0.0)) -> EqLine2:
    return EqLine2(x0)


def ineqcircle2() -> IneqCircle2:
    return IneqCircle2()


def offsetquad() -> OffsetQuad:
    return OffsetQuad()


CORE_PROBLEMS = ("rosenbrock2", "scaledquad", "boxquad1", "eqline2", "ineqcircle2")

MODULOPT = ProblemRegistry(
    COLLECTION_NAME,
    [
        ProblemRegistryEntry("rosenbrock2", rosenbrock2, frozenset({"unconstrained"})),
        ProblemRegistryEntry("scaledquad", scaledquad, frozenset({"unconstrained", "quadratic", "scaled"})),
        ProblemRegistryEntry("boxquad1", boxquad1, frozenset({"bound-constrained", "quadratic"})),
        ProblemRegistryEntry("eqline2", eqline2, frozenset({"equality", "quadratic"})),
        ProblemRegistryEntry("ineqcircle2", ineqcircle2, frozenset({"inequality"})),
        ProblemRegistryEntry("offsetquad", offsetquad, frozenset({"unconstrained", "quadratic", "data"})),
    ],
)

COLLECTIONS = {COLLECTION_NAME: MODULOPT}
