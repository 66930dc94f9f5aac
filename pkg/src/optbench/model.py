"""Typed data shared by the problem interface, the KKT engine, solvers and runner.

Problems have the form::

    min f(x)   s.t.   lx <= x <= ux,   li <= c_I(x) <= ui,   c_E(x) = 0

with the compact notation ``c_B(x) = x``, ``c = (c_B, c_I, c_E)`` and
``m = n + mi + me``. Multipliers use one entry per component of ``c``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

DEFAULT_INF = 1e20
MAX_PNAME_LENGTH = 132


class ContractError(ValueError):
    """An argument violates a documented shape or value contract."""


class CapabilityError(ContractError):
    """A computation needs data the simulator did not (or cannot) provide."""


class ProtocolError(RuntimeError):
    """The problem interface was driven out of order."""


# --------------------------------------------------------------------------
# Dimensions and bounds


@dataclass(frozen=True)
class ProblemDims:
    n: int
    mi: int = 0
    me: int = 0
    n_int_ws: int = 0
    n_lowp_ws: int = 0
    n_highp_ws: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ContractError(f"n must be positive, got {self.n}")
        for name in ("mi", "me", "n_int_ws", "n_lowp_ws", "n_highp_ws"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be nonnegative")

    @property
    def m(self) -> int:
        return total_constraint_dim(self)


def total_constraint_dim(dims: ProblemDims) -> int:
    """Length of the full constraint vector ``c(x) = (x, c_I(x), c_E(x))``."""
    return dims.n + dims.mi + dims.me


class Side(enum.Enum):
    LOWER = "lower"
    UPPER = "upper"


def bound_is_absent(b: float, side: Side, inf_value: float) -> bool:
    """True when ``b`` lies at or beyond the infinity sentinel on its side."""
    if inf_value <= 0:
        raise ContractError("inf_value must be positive")
    if side is Side.LOWER:
        return b <= -inf_value
    return b >= inf_value


def _vec(a, name: str, length: Optional[int] = None) -> np.ndarray:
    arr = np.array(a, dtype=np.float64).reshape(-1)
    if length is not None and arr.shape[0] != length:
        raise ContractError(f"{name} has length {arr.shape[0]}, expected {length}")
    return arr


@dataclass(frozen=True, eq=False)
class Bounds:
    """Bounds on ``x`` and on ``c_I(x)``; sentinel values mark absent bounds."""

    lx: np.ndarray
    ux: np.ndarray
    li: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ui: np.ndarray = field(default_factory=lambda: np.zeros(0))
    inf_value: float = DEFAULT_INF

    def __post_init__(self):
        lx = _vec(self.lx, "lx")
        ux = _vec(self.ux, "ux", lx.shape[0])
        li = _vec(self.li, "li")
        ui = _vec(self.ui, "ui", li.shape[0])
        object.__setattr__(self, "lx", lx)
        object.__setattr__(self, "ux", ux)
        object.__setattr__(self, "li", li)
        object.__setattr__(self, "ui", ui)
        if not self.inf_value > 0:
            raise ContractError("inf_value must be positive")
        if np.any(lx >= ux):
            raise ContractError(f"lx must be < ux componentwise (index {int(np.argmax(lx >= ux))})")
        if np.any(li >= ui):
            raise ContractError(f"li must be < ui componentwise (index {int(np.argmax(li >= ui))})")

    @classmethod
    def free(cls, n: int, mi: int = 0, inf_value: float = DEFAULT_INF) -> "Bounds":
        """All bounds absent."""
        return cls(
            lx=np.full(n, -inf_value),
            ux=np.full(n, inf_value),
            li=np.full(mi, -inf_value),
            ui=np.full(mi, inf_value),
            inf_value=inf_value,
        )

    @property
    def n(self) -> int:
        return self.lx.shape[0]

    @property
    def mi(self) -> int:
        return self.li.shape[0]

    def lower(self) -> np.ndarray:
        """Lower bounds on the B and I blocks, concatenated."""
        return np.concatenate([self.lx, self.li])

    def upper(self) -> np.ndarray:
        return np.concatenate([self.ux, self.ui])

    def lower_present(self) -> np.ndarray:
        return self.lower() > -self.inf_value

    def upper_present(self) -> np.ndarray:
        return self.upper() < self.inf_value

    def has_any(self) -> bool:
        return bool(np.any(self.lower_present()) or np.any(self.upper_present()))

    def has_x_bounds(self) -> bool:
        n = self.n
        return bool(np.any(self.lower_present()[:n]) or np.any(self.upper_present()[:n]))


@dataclass(frozen=True)
class Tolerances:
    tol_grad_lag: float = 1e-6
    tol_feas: float = 1e-6
    tol_sign: float = 1e-6
    tol_gap: float = 1e-6
    dxmin: float = 1e-10
    dcimin: float = 1e-10

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ContractError(f"tolerance {name} must be positive, got {value}")

    def scaled(self, factor: float) -> "Tolerances":
        return Tolerances(**{k: v * factor for k, v in self.__dict__.items()})


# --------------------------------------------------------------------------
# Simulator capabilities


class CostCap(enum.IntEnum):
    ABSENT = -1
    VALUE = 0
    SUBGRADIENT = 1  # nonsmooth cost
    GRADIENT = 2


class ConstraintCap(enum.IntEnum):
    ABSENT = -1
    VALUE = 0
    JACOBIAN = 1


class HessianCap(enum.IntEnum):
    ABSENT = -1
    PRODUCT = 1
    FULL = 2


@dataclass(frozen=True)
class SimCap:
    cost: CostCap = CostCap.GRADIENT
    ineq: ConstraintCap = ConstraintCap.ABSENT
    eq: ConstraintCap = ConstraintCap.ABSENT
    hessian: HessianCap = HessianCap.ABSENT

    @classmethod
    def from_codes(cls, codes) -> "SimCap":
        """Build from the four integer capability codes; any negative code means absent."""
        c1, c2, c3, c4 = (int(c) for c in codes)
        return cls(
            cost=CostCap.ABSENT if c1 < 0 else CostCap(c1),
            ineq=ConstraintCap.ABSENT if c2 < 0 else ConstraintCap(c2),
            eq=ConstraintCap.ABSENT if c3 < 0 else ConstraintCap(c3),
            hessian=HessianCap.ABSENT if c4 < 0 else HessianCap(c4),
        )

    def to_codes(self) -> tuple[int, int, int, int]:
        return int(self.cost), int(self.ineq), int(self.eq), int(self.hessian)

    @property
    def nonsmooth(self) -> bool:
        return self.cost is CostCap.SUBGRADIENT

    @property
    def has_gradient(self) -> bool:
        return self.cost is CostCap.GRADIENT

    def check_against(self, dims: ProblemDims) -> None:
        if dims.mi == 0 and self.ineq is not ConstraintCap.ABSENT:
            raise ContractError("ineq capability declared but mi = 0")
        if dims.me == 0 and self.eq is not ConstraintCap.ABSENT:
            raise ContractError("eq capability declared but me = 0")


# --------------------------------------------------------------------------
# Initialization


class InitStatus(enum.Enum):
    OK = "Ok"
    INIT_FAILED = "InitFailed"


@dataclass(frozen=True, eq=False)
class ProblemInit:
    pname: str
    x0: Optional[np.ndarray] = None
    bounds: Optional[Bounds] = None
    tols: Tolerances = field(default_factory=Tolerances)
    caps: SimCap = field(default_factory=SimCap)
    status: InitStatus = InitStatus.OK
    message: str = ""

    @classmethod
    def failed(cls, pname: str, message: str = "") -> "ProblemInit":
        return cls(pname=pname, status=InitStatus.INIT_FAILED, message=message)

    @property
    def ok(self) -> bool:
        return self.status is InitStatus.OK

    def validate(self, dims: ProblemDims) -> None:
        if len(self.pname) > MAX_PNAME_LENGTH:
            raise ContractError(f"problem name longer than {MAX_PNAME_LENGTH} characters")
        if not self.ok:
            return
        if self.x0 is None or self.bounds is None:
            raise ContractError("a successful initialization must provide x0 and bounds")
        _vec(self.x0, "x0", dims.n)
        if self.bounds.n != dims.n or self.bounds.mi != dims.mi:
            raise ContractError("bounds do not match the problem dimensions")
        self.caps.check_against(dims)


# --------------------------------------------------------------------------
# Multipliers


@dataclass(frozen=True, eq=False)
class Multipliers:
    """One multiplier per component of ``c(x)``, in block order B, I, E."""

    lm: np.ndarray
    n: int
    mi: int = 0
    me: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lm", _vec(self.lm, "lm", self.n + self.mi + self.me))

    @classmethod
    def zeros(cls, dims: ProblemDims) -> "Multipliers":
        return cls(np.zeros(dims.m), dims.n, dims.mi, dims.me)

    @classmethod
    def from_blocks(cls, lm_b, lm_i=(), lm_e=()) -> "Multipliers":
        b, i, e = (np.asarray(v, dtype=np.float64).reshape(-1) for v in (lm_b, lm_i, lm_e))
        return cls(np.concatenate([b, i, e]), b.size, i.size, e.size)

    @property
    def b(self) -> np.ndarray:
        return self.lm[: self.n]

    @property
    def i(self) -> np.ndarray:
        return self.lm[self.n : self.n + self.mi]

    @property
    def e(self) -> np.ndarray:
        return self.lm[self.n + self.mi :]

    def blocks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.b, self.i, self.e

    def with_blocks(self, lm_b=None, lm_i=None, lm_e=None) -> "Multipliers":
        b, i, e = self.blocks()
        return Multipliers.from_blocks(
            b if lm_b is None else lm_b, i if lm_i is None else lm_i, e if lm_e is None else lm_e
        )

    def matches(self, dims: ProblemDims) -> bool:
        return (self.n, self.mi, self.me) == (dims.n, dims.mi, dims.me)

    def __eq__(self, other):
        if not isinstance(other, Multipliers):
            return NotImplemented
        return (self.n, self.mi, self.me) == (other.n, other.mi, other.me) and np.array_equal(
            self.lm, other.lm
        )


# --------------------------------------------------------------------------
# Reverse-communication messages


class EvalKind(enum.IntEnum):
    """Request codes; values are the integer codes used on the wire."""

    LOG = 1
    FUNCTIONS = 2
    DERIVATIVES = 3
    FUNCTIONS_AND_DERIVATIVES = 4
    PREPARE_HESSIAN = 5
    HESSIAN_VECTOR_PRODUCT = 6
    FULL_HESSIAN = 7


class EvalStatus(enum.IntEnum):
    OK = 0
    POINT_REJECTED = -1
    STOP_REQUESTED = -2


_NEEDS_MULTIPLIERS = {
    EvalKind.PREPARE_HESSIAN,
    EvalKind.HESSIAN_VECTOR_PRODUCT,
    EvalKind.FULL_HESSIAN,
}


@dataclass(frozen=True, eq=False)
class EvalRequest:
    kind: EvalKind
    x: np.ndarray
    lm: Optional[Multipliers] = None
    v: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EvalKind(self.kind))
        object.__setattr__(self, "x", _vec(self.x, "x"))
        if self.v is not None:
            object.__setattr__(self, "v", _vec(self.v, "v", self.x.shape[0]))
        if (self.v is not None) != (self.kind is EvalKind.HESSIAN_VECTOR_PRODUCT):
            raise ContractError("v must be given exactly for Hessian-vector product requests")
        if self.kind in _NEEDS_MULTIPLIERS and self.lm is None:
            raise ContractError(f"{self.kind.name} requests need multipliers")

    def validate(self, dims: ProblemDims) -> None:
        if self.x.shape[0] != dims.n:
            raise ContractError(f"x has length {self.x.shape[0]}, expected {dims.n}")
        if self.lm is not None and not self.lm.matches(dims):
            raise ContractError("multiplier blocks do not match the problem dimensions")


PAYLOAD_FIELDS = ("f", "ci", "ce", "g", "ai", "ae", "hlv", "hl")


@dataclass(frozen=True, eq=False)
class EvalResponse:
    status: EvalStatus = EvalStatus.OK
    f: Optional[float] = None
    ci: Optional[np.ndarray] = None
    ce: Optional[np.ndarray] = None
    g: Optional[np.ndarray] = None
    ai: Optional[np.ndarray] = None
    ae: Optional[np.ndarray] = None
    hlv: Optional[np.ndarray] = None
    hl: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "status", EvalStatus(self.status))
        if self.f is not None:
            object.__setattr__(self, "f", float(self.f))
        for name in ("ci", "ce", "g", "hlv"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _vec(value, name))
        for name in ("ai", "ae", "hl"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, np.atleast_2d(np.array(value, dtype=np.float64)))

    @classmethod
    def rejected(cls) -> "EvalResponse":
        return cls(status=EvalStatus.POINT_REJECTED)

    @classmethod
    def stop(cls) -> "EvalResponse":
        return cls(status=EvalStatus.STOP_REQUESTED)

    @property
    def ok(self) -> bool:
        return self.status is EvalStatus.OK

    def present(self) -> set[str]:
        return {name for name in PAYLOAD_FIELDS if getattr(self, name) is not None}


def kind_supported(kind: EvalKind, caps: SimCap) -> bool:
    """Whether a simulator with capabilities ``caps`` can serve ``kind``."""
    kind = EvalKind(kind)
    if kind in (EvalKind.LOG, EvalKind.FUNCTIONS):
        return True
    if kind in (EvalKind.DERIVATIVES, EvalKind.FUNCTIONS_AND_DERIVATIVES):
        return bool(_derivative_fields(caps))
    if kind in (EvalKind.PREPARE_HESSIAN, EvalKind.HESSIAN_VECTOR_PRODUCT):
        return caps.hessian >= HessianCap.PRODUCT
    return caps.hessian is HessianCap.FULL


def _value_fields(caps: SimCap) -> set[str]:
    out = set()
    if caps.cost is not CostCap.ABSENT:
        out.add("f")
    if caps.ineq is not ConstraintCap.ABSENT:
        out.add("ci")
    if caps.eq is not ConstraintCap.ABSENT:
        out.add("ce")
    return out


def _derivative_fields(caps: SimCap) -> set[str]:
    out = set()
    if caps.cost in (CostCap.SUBGRADIENT, CostCap.GRADIENT):
        out.add("g")
    if caps.ineq is ConstraintCap.JACOBIAN:
        out.add("ai")
    if caps.eq is ConstraintCap.JACOBIAN:
        out.add("ae")
    return out


def expected_fields(kind: EvalKind, caps: SimCap) -> set[str]:
    """Payload fields an Ok response to ``kind`` must carry, and no others."""
    kind = EvalKind(kind)
    if kind is EvalKind.FUNCTIONS:
        return _value_fields(caps)
    if kind is EvalKind.DERIVATIVES:
        return _derivative_fields(caps)
    if kind is EvalKind.FUNCTIONS_AND_DERIVATIVES:
        return _value_fields(caps) | _derivative_fields(caps)
    if kind is EvalKind.HESSIAN_VECTOR_PRODUCT:
        return {"hlv"}
    if kind is EvalKind.FULL_HESSIAN:
        return {"hl"}
    return set()


def validate_response(kind: EvalKind, response: EvalResponse, caps: SimCap, dims: ProblemDims) -> None:
    """Raise ContractError unless ``response`` is a well-formed answer to ``kind``."""
    present = response.present()
    if not response.ok:
        if present:
            raise ContractError(f"{response.status.name} response carries payload {sorted(present)}")
        return
    expected = expected_fields(kind, caps)
    missing = expected - present
    extra = present - expected
    if missing:
        raise ContractError(f"{EvalKind(kind).name} response is missing {sorted(missing)}")
    if extra:
        raise ContractError(f"{EvalKind(kind).name} response carries forbidden {sorted(extra)}")
    shapes = {
        "ci": (dims.mi,),
        "ce": (dims.me,),
        "g": (dims.n,),
        "ai": (dims.mi, dims.n),
        "ae": (dims.me, dims.n),
        "hlv": (dims.n,),
        "hl": (dims.n, dims.n),
    }
    for name in present - {"f"}:
        shape = getattr(response, name).shape
        if shape != shapes[name]:
            raise ContractError(f"{name} has shape {shape}, expected {shapes[name]}")


# --------------------------------------------------------------------------
# Problem-owned workspace


class Workspace:
    """Integer, single- and double-precision scratch arrays owned by a problem.

    The harness allocates it after the dimension query and hands it only to
    problem-side calls; solvers never see it.
    """

    def __init__(self, n_int: int = 0, n_lowp: int = 0, n_highp: int = 0):
        self.ints = np.zeros(n_int, dtype=np.int64)
        self.lowp = np.zeros(n_lowp, dtype=np.float32)
        self.highp = np.zeros(n_highp, dtype=np.float64)

    @classmethod
    def allocate(cls, dims: ProblemDims) -> "Workspace":
        return cls(dims.n_int_ws, dims.n_lowp_ws, dims.n_highp_ws)

    def snapshot(self) -> bytes:
        return self.ints.tobytes() + self.lowp.tobytes() + self.highp.tobytes()

    def __repr__(self):
        return f"Workspace(ints={self.ints.size}, lowp={self.lowp.size}, highp={self.highp.size})"
