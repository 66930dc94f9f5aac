"""The one-line run summary ("libopt line") and its parser."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from ..model import EvalKind

TAG = "libopt"
KIND_ORDER = tuple(EvalKind)


class RecordFormatError(ValueError):
    pass


def _fmt_float(v: float) -> str:
    return repr(float(v))


@dataclass(frozen=True)
class RunRecord:
    solver: str
    collection: str
    problem: str
    n: int
    mi: int
    me: int
    status: str
    f_final: float = math.nan
    r_grad_lag: float = math.nan
    r_feas: float = math.nan
    r_sign: float = math.nan
    n_simulate_total: int = 0
    counts: tuple[int, ...] = (0,) * len(KIND_ORDER)  # per request kind, in EvalKind order
    wall_time_ms: float = 0.0

    FIELD_COUNT = 1 + 12 + len(KIND_ORDER) + 1

    def __post_init__(self):
        for name in ("solver", "collection", "problem", "status"):
            value = getattr(self, name)
            if not value or any(ch.isspace() for ch in value):
                raise RecordFormatError(f"{name} must be a nonempty token, got {value!r}")
        if len(self.counts) != len(KIND_ORDER):
            raise RecordFormatError(f"counts must have {len(KIND_ORDER)} entries")

    @staticmethod
    def counts_from(mapping) -> tuple[int, ...]:
        return tuple(int(mapping.get(k, 0)) for k in KIND_ORDER)

    def to_line(self) -> str:
        parts = [
            TAG,
            self.solver,
            self.collection,
            self.problem,
            str(self.n),
            str(self.mi),
            str(self.me),
            self.status,
            _fmt_float(self.f_final),
            _fmt_float(self.r_grad_lag),
            _fmt_float(self.r_feas),
            _fmt_float(self.r_sign),
            str(self.n_simulate_total),
            *(str(c) for c in self.counts),
            _fmt_float(self.wall_time_ms),
        ]
        return " ".join(parts)

    @classmethod
    def from_line(cls, line: str) -> "RunRecord":
        tokens = line.split(" ")
        if len(tokens) != cls.FIELD_COUNT or tokens[0] != TAG:
            raise RecordFormatError(f"not a {TAG} line with {cls.FIELD_COUNT} fields: {line!r}")
        try:
            k = len(KIND_ORDER)
            return cls(
                solver=tokens[1],
                collection=tokens[2],
                problem=tokens[3],
                n=int(tokens[4]),
                mi=int(tokens[5]),
                me=int(tokens[6]),
                status=tokens[7],
                f_final=float(tokens[8]),
                r_grad_lag=float(tokens[9]),
                r_feas=float(tokens[10]),
                r_sign=float(tokens[11]),
                n_simulate_total=int(tokens[12]),
                counts=tuple(int(t) for t in tokens[13 : 13 + k]),
                wall_time_ms=float(tokens[13 + k]),
            )
        except ValueError as exc:
            raise RecordFormatError(f"bad field in {line!r}: {exc}") from None

    @classmethod
    def header(cls) -> str:
        names = [f.name for f in fields(cls) if f.name != "counts"]
        kinds = [f"n_{k.name.lower()}" for k in KIND_ORDER]
        return " ".join(["tag", *names[:-1], *kinds, names[-1]])
