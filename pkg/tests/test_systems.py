import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seqrpf.errors import NonPrimitive, SpecError
from seqrpf.systems import (
    FROZEN,
    GOLDEN_MEAN,
    CircleSpec,
    SftSpec,
    compose_scaled,
    constant_spec,
    full_shift,
    golden_mean,
    primitivity_check,
    random_primitive_spec,
    recode_to_memory_one,
    log_weak_norm,
)


def test_rejects_non_binary_transition():
    with pytest.raises(SpecError):
        constant_spec(np.array([[1, 2], [1, 1]]), [0, 0], [0, 1])


def test_rejects_empty_row():
    with pytest.raises(SpecError, match="empty row"):
        constant_spec(np.array([[0, 0], [1, 1]]), [0, 0], [0, 1])


def test_rejects_broken_chain():
    with pytest.raises(SpecError, match="chain"):
        SftSpec((0, 1), (np.ones((2, 3)), np.ones((2, 2))), (np.zeros(2), np.zeros(3)), (np.zeros(2), np.zeros(3)))


def test_frozen_needs_square_first_layer():
    with pytest.raises(SpecError):
        SftSpec((0, 1), (np.ones((2, 3)), np.ones((3, 3))), (np.zeros(2), np.zeros(3)), (np.zeros(2), np.zeros(3)), extension=FROZEN)


def test_non_primitive_detected():
    perm = np.array([[0, 1], [1, 0]])
    spec = constant_spec(perm, [0, 0], [0, 1])
    assert not spec.is_primitive()
    with pytest.raises(NonPrimitive):
        spec.primitivity_horizon


def test_golden_mean_horizon():
    assert golden_mean().primitivity_horizon == 2
    assert primitivity_check(golden_mean(), 0, 2)
    assert not primitivity_check(golden_mean(), 0, 1)


def test_periodic_and_frozen_lookup():
    spec = random_primitive_spec(3, window_length=5)
    assert np.array_equal(spec.transition(7), spec.transition(2))
    assert np.array_equal(spec.transition(-1), spec.transition(4))
    fr = full_shift(window=(0, 2)).replace(extension=FROZEN)
    assert np.array_equal(fr.potential(10), fr.potential(2))


def test_operator_matrix_layout():
    spec = full_shift(potential=[0.5, -0.5], observable=[0.0, 1.0])
    M = spec.operator_matrix(0, 0.2)
    # M[b, a] = A(a, b) exp(f(a) + z u(a))
    assert M[0, 1] == pytest.approx(np.exp(-0.5 + 0.2))
    assert M[1, 0] == pytest.approx(np.exp(0.5))


def test_compose_scaled_matches_naive_product():
    spec = random_primitive_spec(8, window_length=6)
    p = compose_scaled(spec, 2, 9, 0.1 + 0.05j)
    ref = np.eye(spec.alphabet_size(2))
    for t in range(2, 11):
        ref = spec.operator_matrix(t, 0.1 + 0.05j) @ ref
    np.testing.assert_allclose(p.dense(), ref, rtol=1e-12)


@given(st.integers(1, 400), st.floats(-3, 3))
def test_rescaling_is_exact_and_bounded(n, f):
    spec = full_shift(potential=[f, f])
    p = compose_scaled(spec, 0, n)
    assert 2**-0.5 <= np.abs(p.matrix).max() <= 2**0.5
    # L^n 1 = (2 e^f)^n on the full shift
    assert log_weak_norm(p) == pytest.approx(n * (np.log(2) + f), rel=1e-12, abs=1e-9)


def test_memory_two_golden_mean_recoding():
    A = GOLDEN_MEAN
    spec = SftSpec((0, 0), (A,), (np.zeros((2, 2)),), (np.array([[0.0, 1.0], [2.0, 3.0]]),), memory=2)
    rec = recode_to_memory_one(spec)
    assert rec.labels[0] == ((0, 0), (0, 1), (1, 0))
    # brute force: 2-words ab -> bc with all three letters admissible
    brute = sum(1 for a, b, c in np.ndindex(2, 2, 2) if A[a, b] and A[b, c])
    assert rec.transitions[0].sum() == brute == 5
    assert list(rec.observables[0]) == [0.0, 1.0, 2.0]


@given(st.integers(0, 10_000))
def test_random_specs_are_primitive_and_lattice(seed):
    spec = random_primitive_spec(seed, window_length=4)
    assert spec.primitivity_horizon <= 4
    for u in spec.observables:
        assert set(np.unique(u)) == {0.0, 1.0}


def test_circle_doubling_zero_potential():
    spec = CircleSpec((0, 0), (2,), (np.array([0.0]),), (np.array([0.5, 0.0, 0.5]),), mode_cutoff=6)
    M = spec.operator_matrix(0)
    e0 = np.zeros(13)
    e0[6] = 1
    np.testing.assert_allclose(M @ e0, 2 * e0, atol=1e-14)
    assert not spec.aliasing_flag(0)


def test_circle_rejects_asymmetric_coefficients():
    with pytest.raises(SpecError):
        CircleSpec((0, 0), (2,), (np.array([1.0, 0.0, 0.0]),), (np.array([0.0]),), mode_cutoff=4)
