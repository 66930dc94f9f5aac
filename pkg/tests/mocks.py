"""Test-only problems: wrappers that misbehave on purpose, and small quadratics."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from optbench.collection import CollectionProblem, EqLine2, Rosenbrock2, KnownSolution
from optbench.model import (
    ConstraintCap,
    CostCap,
    EvalKind,
    EvalResponse,
    HessianCap,
    Multipliers,
    SimCap,
)
from optbench.problem_api import Problem


class Wrapped(Problem):
    """Delegates to ``inner``; subclasses alter responses in :meth:`transform`."""

    def __init__(self, inner: Problem):
        self.inner = inner
        self.name = getattr(inner, "name", "wrapped")
        self.calls = 0

    def dimensions(self):
        return self.inner.dimensions()

    def initialize(self, workspace, environ):
        return self.inner.initialize(workspace, environ)

    def simulate(self, request, workspace):
        self.calls += 1
        return self.transform(request, self.inner.simulate(request, workspace))

    def transform(self, request, response):
        return response

    def post_optimal(self, x, lm, last_response, workspace):
        return self.inner.post_optimal(x, lm, last_response, workspace)

    def inner_product(self, v1, v2, workspace):
        return self.inner.inner_product(v1, v2, workspace)

    def to_orthonormal_basis(self, x, workspace):
        return self.inner.to_orthonormal_basis(x, workspace)

    def to_canonical_basis(self, y, workspace):
        return self.inner.to_canonical_basis(y, workspace)


class StopOnCall(Wrapped):
    """Answers StopRequested on the k-th simulate call (1-based) and after."""

    def __init__(self, inner, k: int):
        super().__init__(inner)
        self.k = k

    def simulate(self, request, workspace):
        self.calls += 1
        if self.calls >= self.k:
            return EvalResponse.stop()
        return self.inner.simulate(request, workspace)


class RejectFarPoints(Wrapped):
    """Rejects every evaluation at a point farther than ``radius`` from ``center``."""

    def __init__(self, inner, center, radius: float):
        super().__init__(inner)
        self.center = np.asarray(center, dtype=np.float64)
        self.radius = radius
        self.rejections = 0

    def simulate(self, request, workspace):
        self.calls += 1
        if request.kind is not EvalKind.LOG and np.max(np.abs(request.x - self.center)) > self.radius:
            self.rejections += 1
            return EvalResponse.rejected()
        return self.inner.simulate(request, workspace)


class RejectAll(Wrapped):
    def simulate(self, request, workspace):
        self.calls += 1
        if request.kind is EvalKind.LOG:
            return EvalResponse()
        return EvalResponse.rejected()


class FlipField(Wrapped):
    """Negates entry ``index`` of one response field (a planted sign error)."""

    def __init__(self, inner, field_name: str, index=0):
        super().__init__(inner)
        self.field_name = field_name
        self.index = index

    def transform(self, request, response):
        value = getattr(response, self.field_name)
        if value is None:
            return response
        value = np.array(value, dtype=np.float64)
        value[self.index] = -value[self.index]
        return replace(response, **{self.field_name: value})


class LogMutates(Wrapped):
    """Shifts the objective on every Log request (violates Log purity)."""

    def __init__(self, inner):
        super().__init__(inner)
        self.shift = 0.0

    def transform(self, request, response):
        if request.kind is EvalKind.LOG:
            self.shift += 1.0
        if response.f is not None:
            return replace(response, f=response.f + self.shift)
        return response


class Quadratic(CollectionProblem):
    """``1/2 x'Qx - b'x`` with Hessian products; minimizer ``Q^{-1} b``."""

    name = "quadratic"
    caps = SimCap(cost=CostCap.GRADIENT, hessian=HessianCap.PRODUCT)

    def __init__(self, q, b, x0=None):
        self.q = np.asarray(q, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        self.n = self.b.size
        self.x0 = np.zeros(self.n) if x0 is None else np.asarray(x0, dtype=np.float64)

    def start(self):
        return self.x0

    def objective(self, x):
        return float(0.5 * x @ self.q @ x - self.b @ x)

    def gradient(self, x):
        return self.q @ x - self.b

    def lagrangian_hessian(self, x, lm):
        return self.q

    def known_solution(self):
        x = np.linalg.solve(self.q, self.b)
        return KnownSolution(x, Multipliers.from_blocks(np.zeros(self.n)), self.objective(x))


class ValueOnlyRosenbrock(Rosenbrock2):
    caps = SimCap(cost=CostCap.VALUE)


class NoHessianRosenbrock(Rosenbrock2):
    caps = SimCap(cost=CostCap.GRADIENT)


class NoHessianEqLine(EqLine2):
    caps = SimCap(cost=CostCap.GRADIENT, eq=ConstraintCap.JACOBIAN)


class ValueOnlyEqLine(EqLine2):
    caps = SimCap(cost=CostCap.GRADIENT, eq=ConstraintCap.VALUE)


def random_spd(rng, n: int, cond: float = 100.0) -> np.ndarray:
    qmat, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.geomspace(1.0, cond, n)
    return (qmat * eig) @ qmat.T
