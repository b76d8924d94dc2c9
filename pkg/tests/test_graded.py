import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kreinacm.graded import (EVEN, INHOMOGENEOUS, ODD, GradedKreinSpace, GradedOperator, GradingError,
                             graded_tensor_op, graded_tensor_space, hilbert_adjoint, krein_adjoint,
                             krein_inner, product_fundamental_symmetry)


def _space(parity, J_kind):
    """Space with the given parity tags and a diagonal (even) or swap (odd) J."""
    p = np.asarray(parity)
    n = p.size
    if J_kind == EVEN:
        signs = np.where(np.arange(n) % 3 == 2, -1.0, 1.0)
        signs[0] = 1.0
        return GradedKreinSpace(p, np.diag(signs).astype(complex))
    # pair each even vector with an odd one
    ev, od = np.flatnonzero(p == 0), np.flatnonzero(p == 1)
    J = np.zeros((n, n), dtype=complex)
    for i, j in zip(ev, od):
        J[i, j] = J[j, i] = 1
    return GradedKreinSpace(p, J)


def _homogeneous(rng, space, parity):
    n = space.dim
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    same = space.parity[:, None] == space.parity[None, :]
    m = m * (same if parity == EVEN else ~same)
    return GradedOperator(space, m, parity)


balanced = st.integers(1, 3).map(lambda k: np.array([0, 1] * k))
parities = st.sampled_from([EVEN, ODD])
seeds = st.integers(0, 2**32 - 1)


def test_hilbert_adjoint_elementary():
    sp = GradedKreinSpace([0, 1], np.eye(2))
    T = GradedOperator(sp, [[0, 1], [0, 0]])
    assert np.array_equal(hilbert_adjoint(T).matrix, [[0, 0], [1, 0]])
    assert hilbert_adjoint(GradedOperator(sp, np.eye(2))).matrix.tolist() == np.eye(2).tolist()


def test_krein_adjoint_hand_example():
    sp = GradedKreinSpace([0, 0], np.diag([1.0, -1.0]))
    T = GradedOperator(sp, [[0, 1], [0, 0]])
    assert np.allclose(krein_adjoint(T).matrix, [[0, 0], [-1, 0]], atol=0)


def test_J_is_krein_self_adjoint():
    sp = _space([0, 1, 0, 1], ODD)
    J = GradedOperator(sp, sp.J)
    assert np.abs(krein_adjoint(J).matrix - sp.J).max() < 1e-15


def test_krein_inner_examples():
    sp = GradedKreinSpace([0, 0], np.diag([1.0, -1.0]))
    assert krein_inner(sp, [0, 1], [0, 1]) == -1
    v, w = np.array([1 + 2j, 3]), np.array([0.5, 1j])
    plain = GradedKreinSpace([0, 0], np.eye(2))
    assert np.isclose(krein_inner(plain, v, w), np.vdot(v, w))
    with pytest.raises(ValueError):
        krein_inner(sp, [1, 2, 3], [1, 2])


def test_space_validation():
    with pytest.raises(ValueError):
        GradedKreinSpace([0, 1], [[1, 1], [0, 1]])
    with pytest.raises(ValueError):
        GradedKreinSpace([0, 1], -np.eye(2))
    # inhomogeneous J mixes parities without swapping them
    J = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 1]], dtype=complex)
    with pytest.raises(ValueError):
        GradedKreinSpace([0, 1, 1], J)


def test_operator_parity_classification():
    sp = _space([0, 1, 0, 1], EVEN)
    assert GradedOperator(sp, np.eye(4)).parity == EVEN
    assert GradedOperator(sp, sp.J @ np.ones((4, 4))).parity == INHOMOGENEOUS
    with pytest.raises(GradingError):
        graded_tensor_op(GradedOperator(sp, np.ones((4, 4))), GradedOperator(sp, np.eye(4)))


@settings(max_examples=40, deadline=None)
@given(balanced, st.sampled_from([EVEN, ODD]), parities, seeds)
def test_krein_adjoint_involutive_and_adjoint_identity(parity, jk, tp, seed):
    rng = np.random.default_rng(seed)
    sp = _space(parity, jk)
    T = _homogeneous(rng, sp, tp)
    Tp = krein_adjoint(T)
    assert Tp.parity == T.parity
    assert np.abs(krein_adjoint(Tp).matrix - T.matrix).max() < 1e-12
    v = rng.standard_normal(sp.dim) + 1j * rng.standard_normal(sp.dim)
    w = rng.standard_normal(sp.dim) + 1j * rng.standard_normal(sp.dim)
    lhs, rhs = krein_inner(sp, v, T.matrix @ w), krein_inner(sp, Tp.matrix @ v, w)
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)
    assert np.isclose(np.conj(krein_inner(sp, v, w)), krein_inner(sp, w, v))


@settings(max_examples=30, deadline=None)
@given(balanced, balanced, parities, parities, seeds)
def test_koszul_adjoint_law(p1, p2, t1, t2, seed):
    rng = np.random.default_rng(seed)
    A, B = _space(p1, EVEN), _space(p2, EVEN)
    T1, T2 = _homogeneous(rng, A, t1), _homogeneous(rng, B, t2)
    sign = (-1) ** (T1.degree * T2.degree)
    lhs = hilbert_adjoint(graded_tensor_op(T1, T2)).matrix
    rhs = sign * graded_tensor_op(hilbert_adjoint(T1), hilbert_adjoint(T2)).matrix
    assert np.abs(lhs - rhs).max() < 1e-12


@settings(max_examples=25, deadline=None)
@given(balanced, balanced, balanced, parities, parities, parities, seeds)
def test_graded_tensor_associative(p1, p2, p3, t1, t2, t3, seed):
    rng = np.random.default_rng(seed)
    S = [_space(p, EVEN) for p in (p1, p2, p3)]
    T = [_homogeneous(rng, s, t) for s, t in zip(S, (t1, t2, t3))]
    left = graded_tensor_op(graded_tensor_op(T[0], T[1]), T[2]).matrix
    right = graded_tensor_op(T[0], graded_tensor_op(T[1], T[2])).matrix
    # Kronecker ordering makes the re-bracketing isomorphism the identity
    assert np.abs(left - right).max() < 1e-12


def test_koszul_sign_on_odd_vector():
    A = GradedKreinSpace([0, 1], np.eye(2))
    B = GradedKreinSpace([0, 1], np.diag([1.0, -1.0]))
    one = GradedOperator(A, np.eye(2))
    X = GradedOperator(B, [[0, 1], [1, 0]])
    M = graded_tensor_op(one, X).matrix
    # psi1 odd is the second basis vector of A: the block picks up -1
    assert np.array_equal(M[2:, 2:], -X.matrix)
    assert np.array_equal(M[:2, :2], X.matrix)
    even = GradedOperator(B, np.diag([2.0, 3.0]))
    assert np.array_equal(graded_tensor_op(one, even).matrix, np.kron(np.eye(2), even.matrix))


def test_tensor_space_parity_and_inner_product(rng):
    A = _space([0, 1], EVEN)
    B = _space([1, 0, 1, 0], EVEN)
    P = graded_tensor_space(A, B)
    assert P.dim == 8
    assert P.parity.tolist() == [(a + b) % 2 for a in A.parity for b in B.parity]
    C1 = GradedKreinSpace([0], np.eye(1))
    assert graded_tensor_space(C1, B).parity.tolist() == B.parity.tolist()
    for _ in range(5):
        v1, w1 = rng.standard_normal((2, 2)) + 0j
        v2, w2 = rng.standard_normal((2, 4)) + 0j
        lhs = krein_inner(P, np.kron(v1, v2), np.kron(w1, w2))
        assert np.isclose(lhs, krein_inner(A, v1, w1) * krein_inner(B, v2, w2))


@pytest.mark.parametrize("jk", [EVEN, ODD])
def test_gamma_krein_parity(jk):
    sp = _space([0, 1, 1, 0], jk)
    G = GradedOperator(sp, sp.Gamma)
    expected = -1 if jk == ODD else 1
    assert np.abs(krein_adjoint(G).matrix - expected * G.matrix).max() < 1e-15


def test_product_fundamental_symmetry_phase():
    A, B = _space([0, 1], ODD), _space([0, 1], ODD)
    J = product_fundamental_symmetry(A, B)
    # odd (x) odd picks up the factor i and stays self-adjoint and involutive
    assert np.abs(J - J.conj().T).max() < 1e-15
    assert np.abs(J @ J - np.eye(4)).max() < 1e-15
