"""The seven-operation problem interface and the session that drives it.

A :class:`Problem` implements dimensions / initialize / simulate /
post_optimal plus the inner product and the two basis changes. Solvers never
call a problem directly: they go through a :class:`ProblemSession`, which owns
the workspace, enforces the call order, rejects requests beyond the declared
capabilities and counts every simulator call.
"""

from __future__ import annotations

import enum
import os
import threading
from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

import numpy as np

from .model import (
    CapabilityError,
    ContractError,
    EvalKind,
    EvalRequest,
    EvalResponse,
    Multipliers,
    ProblemDims,
    ProblemInit,
    ProtocolError,
    Workspace,
    kind_supported,
    validate_response,
)

PROBLEM_ENV = "MODULOPT_PROB"
WORKDIR_ENV = "WORKING_DIR"

_call_lock = threading.Lock()
_total_simulate_calls = 0


def simulate_call_count() -> int:
    """Process-wide number of requests dispatched to any problem simulator."""
    return _total_simulate_calls


def _bump_global() -> None:
    global _total_simulate_calls
    with _call_lock:
        _total_simulate_calls += 1


class Problem(ABC):
    """Base class for collection problems.

    Subclasses must provide :meth:`dimensions`, :meth:`initialize` and
    :meth:`simulate`. The remaining operations default to an empty
    post-optimal report and the Euclidean inner product.
    """

    name: str = "problem"

    @abstractmethod
    def dimensions(self) -> ProblemDims: ...

    @abstractmethod
    def initialize(self, workspace: Workspace, environ: Mapping[str, str]) -> ProblemInit: ...

    @abstractmethod
    def simulate(self, request: EvalRequest, workspace: Workspace) -> EvalResponse: ...

    def post_optimal(self, x, lm: Multipliers, last_response: Optional[EvalResponse], workspace: Workspace) -> str:
        return ""

    def inner_product(self, v1: np.ndarray, v2: np.ndarray, workspace: Workspace) -> float:
        return float(v1 @ v2)

    def to_orthonormal_basis(self, x: np.ndarray, workspace: Workspace) -> np.ndarray:
        return x.copy()

    def to_canonical_basis(self, y: np.ndarray, workspace: Workspace) -> np.ndarray:
        return y.copy()


class SessionState(enum.Enum):
    NEW = "new"
    DIMENSIONED = "dimensioned"
    READY = "ready"
    INIT_FAILED = "init-failed"
    FINISHED = "finished"


class ProblemSession:
    """Drives one problem instance through dimensions -> initialize -> simulate* -> post_optimal."""

    def __init__(self, problem: Problem, environ: Optional[Mapping[str, str]] = None):
        self.problem = problem
        self.environ = dict(os.environ if environ is None else environ)
        self.state = SessionState.NEW
        self.dims: Optional[ProblemDims] = None
        self.init: Optional[ProblemInit] = None
        self.counts: Counter = Counter()
        self.last_response: Optional[EvalResponse] = None
        self._workspace: Optional[Workspace] = None
        self._prepared: Optional[tuple[np.ndarray, np.ndarray]] = None
        self._lock = threading.Lock()

    # ---- call-order state machine

    def _require(self, *states: SessionState, op: str) -> None:
        if self.state not in states:
            raise ProtocolError(f"{op} not allowed in state {self.state.value}")

    def dimensions(self) -> ProblemDims:
        self._require(SessionState.NEW, SessionState.DIMENSIONED, op="dimensions")
        dims = self.problem.dimensions()
        if self.dims is not None and dims != self.dims:
            raise ContractError("dimensions changed between calls")
        self.dims = dims
        if self._workspace is None:
            self._workspace = Workspace.allocate(dims)
        self.state = SessionState.DIMENSIONED
        return dims

    def initialize(self) -> ProblemInit:
        self._require(SessionState.DIMENSIONED, op="initialize")
        init = self.problem.initialize(self._workspace, self.environ)
        init.validate(self.dims)
        self.init = init
        self.state = SessionState.READY if init.ok else SessionState.INIT_FAILED
        return init

    @property
    def caps(self):
        return self.init.caps

    # ---- simulator

    def simulate(self, request: EvalRequest) -> EvalResponse:
        with self._lock:
            return self._simulate(request)

    def _simulate(self, request: EvalRequest) -> EvalResponse:
        self._require(SessionState.READY, op="simulate")
        request.validate(self.dims)
        caps = self.init.caps
        if not kind_supported(request.kind, caps):
            raise CapabilityError(f"{request.kind.name} exceeds the simulator capabilities {caps.to_codes()}")
        if request.kind is EvalKind.HESSIAN_VECTOR_PRODUCT:
            prepared = self._prepared
            if (
                prepared is None
                or not np.array_equal(prepared[0], request.x)
                or not np.array_equal(prepared[1], request.lm.lm)
            ):
                raise ProtocolError("Hessian-vector product without a matching PrepareHessian at (x, lm)")

        self.counts[request.kind] += 1
        _bump_global()
        response = self.problem.simulate(request, self._workspace)
        validate_response(request.kind, response, caps, self.dims)

        if request.kind is EvalKind.PREPARE_HESSIAN and response.ok:
            self._prepared = (request.x.copy(), request.lm.lm.copy())
        if request.kind is not EvalKind.LOG and response.ok:
            self.last_response = response
        return response

    def request(self, kind: EvalKind, x, lm: Optional[Multipliers] = None, v=None) -> EvalResponse:
        return self.simulate(EvalRequest(EvalKind(kind), np.asarray(x, dtype=np.float64), lm, v))

    @property
    def total_calls(self) -> int:
        return sum(self.counts.values())

    # ---- metric operations (read-only on the workspace)

    def _metric_ready(self, op: str, *vectors) -> None:
        self._require(SessionState.READY, op=op)
        for v in vectors:
            if np.shape(v) != (self.dims.n,):
                raise ContractError(f"{op}: vector has shape {np.shape(v)}, expected ({self.dims.n},)")

    def inner_product(self, v1, v2) -> float:
        v1, v2 = np.asarray(v1, dtype=np.float64), np.asarray(v2, dtype=np.float64)
        self._metric_ready("inner_product", v1, v2)
        return float(self.problem.inner_product(v1.copy(), v2.copy(), self._workspace))

    def to_orthonormal_basis(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        self._metric_ready("to_orthonormal_basis", x)
        return np.asarray(self.problem.to_orthonormal_basis(x.copy(), self._workspace), dtype=np.float64)

    def to_canonical_basis(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        self._metric_ready("to_canonical_basis", y)
        return np.asarray(self.problem.to_canonical_basis(y.copy(), self._workspace), dtype=np.float64)

    # ---- end of run

    def post_optimal(self, x, lm: Multipliers) -> str:
        self._require(SessionState.READY, op="post_optimal")
        self.state = SessionState.FINISHED
        try:
            return self.problem.post_optimal(
                np.array(x, dtype=np.float64), lm, self.last_response, self._workspace
            )
        except Exception as exc:  # noqa: BLE001 - analysis failures are reported, not raised
            return f"post-optimal analysis failed: {exc!r}"

    def workspace_fingerprint(self) -> bytes:
        """Byte image of the workspace, for isolation audits."""
        return self._workspace.snapshot() if self._workspace is not None else b""


def open_session(problem: Problem, environ: Optional[Mapping[str, str]] = None) -> ProblemSession:
    """Create a session and run the dimension query and initialization."""
    session = ProblemSession(problem, environ)
    session.dimensions()
    session.initialize()
    return session


# --------------------------------------------------------------------------
# Registry


@dataclass(frozen=True)
class ProblemRegistryEntry:
    name: str
    factory: Callable[[], Problem]
    tags: frozenset = field(default_factory=frozenset)

    def create(self) -> Problem:
        return self.factory()


class ProblemRegistry:
    """Immutable name -> factory map for one collection."""

    def __init__(self, name: str, entries: Iterable[ProblemRegistryEntry]):
        self.name = name
        self._entries: dict[str, ProblemRegistryEntry] = {}
        for entry in entries:
            if entry.name in self._entries:
                raise ContractError(f"duplicate problem name {entry.name!r} in collection {name!r}")
            self._entries[entry.name] = entry

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __getitem__(self, name: str) -> ProblemRegistryEntry:
        try:
            return self._entries[name]
        except KeyError:
            raise KeyError(f"no problem {name!r} in collection {self.name!r}") from None

    def __iter__(self):
        return iter(self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def with_tag(self, tag: str) -> list[str]:
        return [e.name for e in self._entries.values() if tag in e.tags]


def tag_violations(entry: ProblemRegistryEntry, init: ProblemInit, dims: ProblemDims) -> list[str]:
    """Tags on ``entry`` that contradict the problem's actual structure."""
    out = []
    tags = entry.tags
    bounds = init.bounds
    if "unconstrained" in tags and (dims.mi or dims.me or bounds.has_any()):
        out.append("unconstrained")
    if "bound-constrained" in tags and (dims.mi or dims.me or not bounds.has_x_bounds()):
        out.append("bound-constrained")
    if "equality" in tags and (dims.me == 0 or dims.mi):
        out.append("equality")
    if "inequality" in tags and dims.mi == 0:
        out.append("inequality")
    if "nonsmooth" in tags and not init.caps.nonsmooth:
        out.append("nonsmooth")
    return out
