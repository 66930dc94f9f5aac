import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from optbench.model import (
    Bounds,
    CapabilityError,
    ConstraintCap,
    ContractError,
    CostCap,
    EvalKind,
    EvalRequest,
    EvalResponse,
    EvalStatus,
    HessianCap,
    Multipliers,
    ProblemDims,
    ProblemInit,
    Side,
    SimCap,
    Tolerances,
    Workspace,
    bound_is_absent,
    expected_fields,
    kind_supported,
    total_constraint_dim,
    validate_response,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


@pytest.mark.parametrize("dims, m", [((2, 0, 0), 2), ((3, 2, 1), 6), ((1, 0, 1), 2)])
def test_total_constraint_dim(dims, m):
    assert total_constraint_dim(ProblemDims(*dims)) == m
    assert ProblemDims(*dims).m == m


@pytest.mark.parametrize("bad", [dict(n=0), dict(n=1, mi=-1), dict(n=1, me=-1), dict(n=1, n_highp_ws=-1)])
def test_dims_rejects_invalid(bad):
    with pytest.raises(ContractError):
        ProblemDims(**bad)


@pytest.mark.parametrize(
    "b, side, expected",
    [(-1e20, Side.LOWER, True), (0.0, Side.LOWER, False), (1e20, Side.UPPER, True),
     (-2e20, Side.LOWER, True), (9.99e19, Side.UPPER, False), (1e20, Side.LOWER, False)],
)
def test_bound_is_absent(b, side, expected):
    assert bound_is_absent(b, side, 1e20) is expected


def test_free_bounds_are_absent():
    b = Bounds.free(3, 2)
    assert not b.has_any()
    assert not b.lower_present().any() and not b.upper_present().any()


@given(st.integers(1, 5).flatmap(lambda n: st.tuples(hnp.arrays(np.float64, n, elements=finite), st.integers(0, n - 1))))
def test_bounds_reject_l_not_below_u(data):
    lx, i = data
    ux = lx + 1.0
    Bounds(lx, ux)  # valid
    ux[i] = lx[i]
    with pytest.raises(ContractError):
        Bounds(lx, ux)
    with pytest.raises(ContractError):
        Bounds(np.zeros(1), np.ones(1), li=lx, ui=ux)


def test_bounds_length_mismatch():
    with pytest.raises(ContractError):
        Bounds([0.0, 0.0], [1.0])


def test_tolerances_must_be_positive():
    Tolerances()
    for name in ("tol_grad_lag", "tol_feas", "tol_sign", "tol_gap", "dxmin", "dcimin"):
        with pytest.raises(ContractError):
            Tolerances(**{name: 0.0})
    assert Tolerances().scaled(10).tol_feas == pytest.approx(1e-5)


@given(
    hnp.arrays(np.float64, st.integers(1, 4), elements=finite),
    hnp.arrays(np.float64, st.integers(0, 3), elements=finite),
    hnp.arrays(np.float64, st.integers(0, 3), elements=finite),
)
def test_multiplier_blocks_round_trip(b, i, e):
    lm = Multipliers.from_blocks(b, i, e)
    assert np.array_equal(np.concatenate(lm.blocks()), lm.lm)
    assert Multipliers.from_blocks(*lm.blocks()) == lm
    assert (lm.n, lm.mi, lm.me) == (b.size, i.size, e.size)


def test_multipliers_length_checked():
    with pytest.raises(ContractError):
        Multipliers(np.zeros(3), 2, 0, 0)
    lm = Multipliers.zeros(ProblemDims(2, 1, 1))
    assert lm.lm.shape == (4,) and lm.matches(ProblemDims(2, 1, 1))


def test_simcap_codes():
    caps = SimCap.from_codes((2, -5, 1, 2))
    assert caps == SimCap(CostCap.GRADIENT, ConstraintCap.ABSENT, ConstraintCap.JACOBIAN, HessianCap.FULL)
    assert caps.to_codes() == (2, -1, 1, 2)
    assert SimCap.from_codes((1, -1, -1, -1)).nonsmooth
    assert not SimCap().nonsmooth
    with pytest.raises(ValueError):
        SimCap.from_codes((3, 0, 0, 0))


def test_simcap_consistent_with_dims():
    with pytest.raises(ContractError):
        SimCap(ineq=ConstraintCap.VALUE).check_against(ProblemDims(2))
    with pytest.raises(ContractError):
        SimCap(eq=ConstraintCap.JACOBIAN).check_against(ProblemDims(2))
    SimCap(eq=ConstraintCap.JACOBIAN).check_against(ProblemDims(2, me=1))


def test_problem_init_validation():
    dims = ProblemDims(2)
    ProblemInit("p", np.zeros(2), Bounds.free(2)).validate(dims)
    with pytest.raises(ContractError):
        ProblemInit("p", np.zeros(3), Bounds.free(2)).validate(dims)
    with pytest.raises(ContractError):
        ProblemInit("x" * 133, np.zeros(2), Bounds.free(2)).validate(dims)
    with pytest.raises(ContractError):
        ProblemInit("p").validate(dims)
    failed = ProblemInit.failed("p", "no data")
    failed.validate(dims)
    assert not failed.ok


def test_request_payload_rules():
    lm = Multipliers.zeros(ProblemDims(2))
    EvalRequest(EvalKind.HESSIAN_VECTOR_PRODUCT, np.zeros(2), lm, np.ones(2))
    with pytest.raises(ContractError):
        EvalRequest(EvalKind.HESSIAN_VECTOR_PRODUCT, np.zeros(2), lm)
    with pytest.raises(ContractError):
        EvalRequest(EvalKind.FUNCTIONS, np.zeros(2), v=np.ones(2))
    for kind in (EvalKind.PREPARE_HESSIAN, EvalKind.FULL_HESSIAN):
        with pytest.raises(ContractError):
            EvalRequest(kind, np.zeros(2))
    with pytest.raises(ContractError):
        EvalRequest(EvalKind.FUNCTIONS, np.zeros(3)).validate(ProblemDims(2))
    assert [int(k) for k in EvalKind] == list(range(1, 8))
    assert (int(EvalStatus.POINT_REJECTED), int(EvalStatus.STOP_REQUESTED)) == (-1, -2)


DIMS = ProblemDims(2, 1, 1)
SHAPES = {"f": None, "ci": (1,), "ce": (1,), "g": (2,), "ai": (1, 2), "ae": (1, 2), "hlv": (2,), "hl": (2, 2)}
ALL_CAPS = [
    SimCap(CostCap.GRADIENT, ConstraintCap.JACOBIAN, ConstraintCap.JACOBIAN, HessianCap.FULL),
    SimCap(CostCap.VALUE, ConstraintCap.VALUE, ConstraintCap.JACOBIAN, HessianCap.ABSENT),
    SimCap(CostCap.SUBGRADIENT, ConstraintCap.JACOBIAN, ConstraintCap.ABSENT, HessianCap.PRODUCT),
    SimCap(CostCap.ABSENT, ConstraintCap.VALUE, ConstraintCap.VALUE, HessianCap.ABSENT),
]


def _payload(name):
    return 1.0 if SHAPES[name] is None else np.ones(SHAPES[name])


@pytest.mark.parametrize("caps", ALL_CAPS)
@pytest.mark.parametrize("kind", list(EvalKind))
def test_response_validation_exact_field_set(kind, caps):
    if not kind_supported(kind, caps):
        return
    need = expected_fields(kind, caps)
    good = EvalResponse(**{k: _payload(k) for k in need})
    validate_response(kind, good, caps, DIMS)
    for missing in need:
        bad = EvalResponse(**{k: _payload(k) for k in need - {missing}})
        with pytest.raises(ContractError, match="missing"):
            validate_response(kind, bad, caps, DIMS)
    for extra in set(SHAPES) - need:
        bad = EvalResponse(**{k: _payload(k) for k in need | {extra}})
        with pytest.raises(ContractError, match="forbidden"):
            validate_response(kind, bad, caps, DIMS)


def test_response_shape_checked():
    caps = ALL_CAPS[0]
    with pytest.raises(ContractError, match="shape"):
        validate_response(EvalKind.HESSIAN_VECTOR_PRODUCT, EvalResponse(hlv=np.ones(3)), caps, DIMS)


def test_signal_responses_carry_no_payload():
    caps = ALL_CAPS[0]
    validate_response(EvalKind.FUNCTIONS, EvalResponse.rejected(), caps, DIMS)
    validate_response(EvalKind.FUNCTIONS, EvalResponse.stop(), caps, DIMS)
    with pytest.raises(ContractError):
        validate_response(EvalKind.FUNCTIONS, EvalResponse(EvalStatus.POINT_REJECTED, f=1.0), caps, DIMS)


def test_kind_supported():
    product = SimCap(hessian=HessianCap.PRODUCT)
    full = SimCap(hessian=HessianCap.FULL)
    value_only = SimCap(cost=CostCap.VALUE)
    assert kind_supported(EvalKind.HESSIAN_VECTOR_PRODUCT, product)
    assert not kind_supported(EvalKind.FULL_HESSIAN, product)
    assert kind_supported(EvalKind.HESSIAN_VECTOR_PRODUCT, full)
    assert kind_supported(EvalKind.FUNCTIONS, value_only)
    assert not kind_supported(EvalKind.DERIVATIVES, value_only)
    assert not kind_supported(EvalKind.PREPARE_HESSIAN, SimCap())
    assert isinstance(CapabilityError("x"), ContractError)


def test_workspace_precisions():
    ws = Workspace.allocate(ProblemDims(1, n_int_ws=2, n_lowp_ws=3, n_highp_ws=4))
    assert (ws.ints.dtype, ws.lowp.dtype, ws.highp.dtype) == (np.int64, np.float32, np.float64)
    assert (ws.ints.size, ws.lowp.size, ws.highp.size) == (2, 3, 4)
    assert len(ws.snapshot()) == 2 * 8 + 3 * 4 + 4 * 8
