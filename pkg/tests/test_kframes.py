import numpy as np
import pytest

from kfusion.errors import ValidationError
from kfusion.harness import oracle_rayleigh_min
from kfusion.kframes import (
    canonical_kdual_vec,
    kdual_residuals_both_orders,
    kframe_analyze,
    restricted_inverse_vec,
    verify_kdual_vec,
)
from kfusion.numerics import RangedOperator, adjoint
from kfusion.spaces import VectorFamily, random_matrix


def K_of(M):
    return RangedOperator.from_matrix(np.asarray(M, dtype=float))


def test_parseval_basis():
    a = kframe_analyze(VectorFamily.from_vectors(np.eye(2)), K_of(np.eye(2)))
    assert a.A_opt == pytest.approx(1.0) and a.B_opt == pytest.approx(1.0)


def test_rank_one_alignment():
    a = kframe_analyze(VectorFamily.from_vectors(np.array([[1.0], [0.0]])), K_of(np.diag([1.0, 0.0])))
    assert a.A_opt == pytest.approx(1.0) and a.B_opt == pytest.approx(1.0)
    assert a.is_kframe


def test_not_a_kframe():
    a = kframe_analyze(VectorFamily.from_vectors(np.array([[0.0], [1.0]])), K_of(np.diag([1.0, 0.0])))
    assert a.A_opt == 0.0 and not a.is_kframe


def test_zero_operator_is_vacuous():
    a = kframe_analyze(VectorFamily.from_vectors(np.eye(2)), K_of(np.zeros((2, 2))))
    assert a.vacuous and a.A_opt == np.inf


def test_seeded_bound_against_rayleigh_oracle():
    rng = np.random.default_rng(2024)
    F = VectorFamily.from_vectors(random_matrix(rng, 4, 6))
    K = RangedOperator.from_matrix(random_matrix(rng, 4, 2) @ random_matrix(rng, 2, 4))
    a = kframe_analyze(F, K)
    orc = oracle_rayleigh_min(a.S_F, K.op @ adjoint(K.op), K.range_basis, 100_000, seed=9)
    assert orc >= a.A_opt - 1e-9
    assert orc <= a.A_opt * (1 + 1e-6)


def test_restricted_inverse_trivial_cases():
    F = VectorFamily.from_vectors(np.eye(3))
    np.testing.assert_allclose(restricted_inverse_vec(F, K_of(np.eye(3))), np.eye(3), atol=1e-14)
    D = restricted_inverse_vec(VectorFamily.from_vectors(np.array([[1.0], [0.0]])), K_of(np.diag([1.0, 0.0])))
    np.testing.assert_allclose(D, np.diag([1.0, 0.0]), atol=1e-15)


def test_restricted_inverse_and_sandwich():
    rng = np.random.default_rng(8)
    F = VectorFamily.from_vectors(random_matrix(rng, 5, 6))
    K = RangedOperator.from_matrix(random_matrix(rng, 5, 3) @ random_matrix(rng, 3, 5))
    a = kframe_analyze(F, K)
    D = restricted_inverse_vec(F, K)
    u = K.range_basis @ random_matrix(rng, K.rank, 100)
    rel = np.linalg.norm(D @ a.S_F @ u - u, axis=0) / np.linalg.norm(u, axis=0)
    assert rel.max() <= 1e-9
    f = a.S_F @ u
    f = f / np.linalg.norm(f, axis=0)
    Df = np.linalg.norm(D @ f, axis=0)
    assert (Df >= 1 / a.B_opt - 1e-9).all()
    assert (Df <= K.pinv_norm**2 / a.A_opt + 1e-9).all()


def test_self_dual_onb():
    F = VectorFamily.from_vectors(np.eye(3))
    np.testing.assert_allclose(canonical_kdual_vec(F, K_of(np.eye(3))).flat, np.eye(3), atol=1e-14)


def test_hand_evaluated_dual():
    G = canonical_kdual_vec(VectorFamily.from_vectors(np.eye(2)), K_of(np.diag([1.0, 0.0]))).flat
    np.testing.assert_allclose(G, np.array([[1.0, 0.0], [0.0, 0.0]]), atol=1e-15)


def test_residual_cases():
    F = VectorFamily.from_vectors(np.eye(3))
    assert verify_kdual_vec(F, F, K_of(np.eye(3))) == pytest.approx(0.0, abs=1e-15)
    zero = VectorFamily.from_vectors(np.zeros((3, 3)))
    assert verify_kdual_vec(F, zero, K_of(np.eye(3))) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        verify_kdual_vec(F, F, K_of(np.zeros((3, 3))))


def test_seeded_canonical_dual_and_both_orders():
    rng = np.random.default_rng(13)
    F = VectorFamily.from_vectors(random_matrix(rng, 4, 6))
    K = RangedOperator.from_matrix(random_matrix(rng, 4, 2) @ random_matrix(rng, 2, 4))
    G = canonical_kdual_vec(F, K)
    assert verify_kdual_vec(F, G, K) <= 1e-9
    r1, r2 = kdual_residuals_both_orders(F, G, K)
    assert r1 == verify_kdual_vec(F, G, K)
    assert np.isfinite(r2)
