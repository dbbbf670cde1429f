import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kfusion.errors import PreconditionError
from kfusion.fusion import canonical_kdual_fusion, fusion_analyze
from kfusion.multipliers import (
    MultiplierSpec,
    build_multiplier,
    composition_check,
    dual_lower_bound_from_multiplier,
    factorization_check,
    invertibility_check,
    k_side_inverse,
    onb_composition_check,
    ordinary_multiplier,
)
from kfusion.numerics import RangedOperator, adjoint, projector
from kfusion.spaces import (
    VectorFamily,
    WeightedFamily,
    make_subspace,
    orthonormal_fusion_basis,
    random_instance,
    random_matrix,
    random_subspace,
    rotate_family,
)


def K_of(M):
    return RangedOperator.from_matrix(np.asarray(M))


def term_by_term(spec, a):
    """Apply the defining sum to every standard basis vector."""
    n = spec.K.dim
    DK = adjoint(a.D) @ spec.K.op
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        acc = np.zeros(n, dtype=complex)
        for m, w, v, Pw, Pv in zip(spec.symbol, spec.W.weights, spec.V.weights, spec.W.projectors, spec.V.projectors):
            acc += m * w * v * (Pw @ (DK @ (Pv @ e)))
        cols.append(acc)
    return np.column_stack(cols)


class TestBuild:
    def test_onb_identity(self):
        V = orthonormal_fusion_basis([1, 2])
        mm = build_multiplier(MultiplierSpec(np.ones(2), V, V, K_of(np.eye(3))))
        np.testing.assert_allclose(mm.M, np.eye(3), atol=1e-14)

    def test_zero_symbol(self):
        V = orthonormal_fusion_basis([1, 2])
        mm = build_multiplier(MultiplierSpec(np.zeros(2), V, V, K_of(np.eye(3))))
        assert not np.any(mm.M)

    def test_matches_definition(self):
        inst = random_instance(2, 5, 3, [2, 3, 2], 3, "generic")
        W, V, K = inst.families["W"], inst.families["V"], K_of(inst.K)
        m = np.array([0.5, -1.0, 2.0 + 1j])
        spec = MultiplierSpec(m, W, V, K)
        a = fusion_analyze(W, K)
        mm = build_multiplier(spec, a)
        M0 = term_by_term(spec, a)
        assert np.linalg.norm(mm.M - M0) <= 1e-12 * np.linalg.norm(M0)
        assert mm.norm <= mm.bound + 1e-9

    def test_not_kfusion_rejected(self):
        W = WeightedFamily.from_bases([np.eye(3)[:, :1]], [1.0])
        with pytest.raises(PreconditionError):
            build_multiplier(MultiplierSpec(np.ones(1), W, W, K_of(np.eye(3))))


class TestFactorization:
    def test_onb(self):
        V = orthonormal_fusion_basis([2, 2])
        assert factorization_check(MultiplierSpec(np.ones(2), V, V, K_of(np.eye(4)))) < 1e-15

    def test_seeded(self):
        inst = random_instance(3, 5, 3, [2, 2, 3], 4, "generic")
        spec = MultiplierSpec(np.ones(3), inst.families["W"], inst.families["V"], K_of(inst.K))
        assert factorization_check(spec) <= 1e-12

    def test_zero_dimensional_member(self):
        rng = np.random.default_rng(0)
        W = WeightedFamily.from_bases([random_matrix(rng, 3, 3), random_matrix(rng, 3, 1)], [1.0, 2.0])
        V = WeightedFamily((make_subspace(random_matrix(rng, 3, 2)), make_subspace(np.zeros((3, 0)))), (1.0, 1.0))
        assert factorization_check(MultiplierSpec(np.ones(2), W, V, K_of(np.eye(3)))) <= 1e-12

    def test_needs_unit_symbol(self):
        V = orthonormal_fusion_basis([2, 2])
        with pytest.raises(PreconditionError):
            factorization_check(MultiplierSpec(np.array([1.0, 2.0]), V, V, K_of(np.eye(4))))


class TestOrdinary:
    def test_onb(self):
        om = ordinary_multiplier(np.ones(3), VectorFamily.from_vectors(np.eye(3)), VectorFamily.from_vectors(np.eye(3)))
        np.testing.assert_allclose(om.M, np.eye(3))

    def test_rank_one(self):
        rng = np.random.default_rng(1)
        P, Q = random_matrix(rng, 4, 5), random_matrix(rng, 4, 5)
        m = np.zeros(5)
        m[0] = 1.0
        om = ordinary_multiplier(m, VectorFamily.from_vectors(P), VectorFamily.from_vectors(Q))
        np.testing.assert_allclose(om.M, np.outer(P[:, 0], Q[:, 0].conj()), atol=1e-14)
        assert np.linalg.matrix_rank(om.M) <= 1

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10**6), n=st.integers(1, 6))
    def test_bound(self, seed, n):
        rng = np.random.default_rng(seed)
        P, Q = random_matrix(rng, n, n + 2), random_matrix(rng, n, n + 2)
        om = ordinary_multiplier(random_matrix(rng, n + 2, 1).ravel(), VectorFamily.from_vectors(P), VectorFamily.from_vectors(Q))
        assert om.slack >= -1e-9


class TestSideInverse:
    def test_self_case(self):
        rng = np.random.default_rng(2)
        Kop = random_matrix(rng, 4, 2) @ random_matrix(rng, 2, 4)
        K = K_of(Kop)
        r = k_side_inverse(Kop, K, "right")
        assert r.exists and r.residual <= 1e-10
        assert k_side_inverse(Kop, K, "left").exists

    def test_zero_multiplier(self):
        K = K_of(np.eye(3))
        assert not k_side_inverse(np.zeros((3, 3)), K, "right").exists
        assert not k_side_inverse(np.zeros((3, 3)), K, "left").exists

    def test_invertible(self):
        rng = np.random.default_rng(3)
        M = random_matrix(rng, 4, 4)
        K = K_of(random_matrix(rng, 4, 4))
        for side in ("left", "right"):
            r = k_side_inverse(M, K, side)
            assert r.exists and r.residual <= 1e-10


class TestLowerBound:
    def test_onb(self):
        V = orthonormal_fusion_basis([2, 1])
        r = dual_lower_bound_from_multiplier(MultiplierSpec(np.ones(2), V, V, K_of(np.eye(3))))
        assert r.predicted_A == pytest.approx(1.0) and r.holds

    def test_canonical_dual_gives_k(self):
        inst = random_instance(4, 4, 3, [2, 2, 2], 4, "k_invertible")
        W, K = inst.families["W"], K_of(inst.K)
        Wt = canonical_kdual_fusion(W, K, fusion_analyze(W, K))
        r = dual_lower_bound_from_multiplier(MultiplierSpec(np.ones(3), W, Wt, K), "M_equals_K")
        assert r.holds

    def test_left_inverse(self):
        inst = random_instance(5, 4, 3, [2, 2, 2], 4, "k_invertible")
        W, V, K = inst.families["W"], inst.families["V"], K_of(inst.K)
        spec = MultiplierSpec(np.array([1.0, 1.5, 2.0]), W, V, K)
        left = k_side_inverse(build_multiplier(spec).M, K, "left")
        assert left.exists
        assert dual_lower_bound_from_multiplier(spec, "left_inverse", L=left.X).holds

    def test_m_not_k_rejected(self):
        inst = random_instance(5, 4, 3, [2, 2, 2], 4, "k_invertible")
        spec = MultiplierSpec(np.ones(3), inst.families["W"], inst.families["V"], K_of(inst.K))
        with pytest.raises(PreconditionError):
            dual_lower_bound_from_multiplier(spec, "M_equals_K")


class TestInvertibility:
    def test_onb_identity(self):
        V = orthonormal_fusion_basis([2, 1])
        r = invertibility_check(V, V, K_of(np.eye(3)))
        assert r.lhs == 0.0 or r.lhs < 1e-28
        assert r.rhs == pytest.approx(1.0)
        assert r.criterion_holds and r.invertible

    def test_v_equals_w_with_frame_operator(self):
        rng = np.random.default_rng(6)
        V = WeightedFamily(tuple(random_subspace(rng, 4, d) for d in (2, 2, 3)), (1.0, 1.0, 1.0))
        K = K_of(V.frame_operator())
        r = invertibility_check(V, V, K)
        assert r.lhs <= 1e-20 and r.lhs < r.rhs
        assert r.sigma_min_restricted > 0

    def test_small_rotation(self):
        rng = np.random.default_rng(7)
        V = orthonormal_fusion_basis([2, 2])
        K = K_of(projector(random_subspace(rng, 4, 3).basis))
        theta = 0.5
        while True:
            r = invertibility_check(V, rotate_family(V, theta, rng), K)
            if r.lhs < r.rhs / 2:
                break
            theta /= 2
        assert r.criterion_holds and r.sigma_min_restricted > 0 and r.neumann < 1

    def test_weights_required(self):
        V = orthonormal_fusion_basis([2, 2])
        with pytest.raises(PreconditionError):
            invertibility_check(V.with_weights([1.0, 2.0]), V, K_of(np.eye(4)))


class TestComposition:
    def test_single_block(self):
        V = orthonormal_fusion_basis([3])
        I = K_of(np.eye(3))
        assert composition_check(V, V, V, V, I, I) < 1e-15

    @pytest.mark.parametrize("seed", range(4))
    def test_two_by_two_blocks(self, seed):
        inst = random_instance(seed, 4, 2, [2, 2], 2, "block_orthogonal")
        f = inst.families
        assert composition_check(f["W"], f["V"], f["Z"], f["X"], K_of(inst.K), K_of(inst.L)) <= 1e-9

    def test_aligned_families_k_equals_l(self):
        inst = random_instance(9, 5, 2, [3, 2], 3, "block_orthogonal")
        f = inst.families
        K = K_of(inst.K)
        assert composition_check(f["W"], f["V"], f["V"], f["V"], K, K) <= 1e-9

    def test_overlapping_blocks_rejected(self):
        rng = np.random.default_rng(1)
        inst = random_instance(1, 4, 2, [2, 2], 2, "block_orthogonal")
        f = inst.families
        Vr = rotate_family(f["V"], 0.3, rng)
        with pytest.raises(PreconditionError):
            composition_check(f["W"], Vr, f["Z"], f["X"], K_of(inst.K), K_of(inst.L))


class TestOnbComposition:
    def test_h_equals_v(self):
        inst = random_instance(3, 5, 2, [3, 2], 3, "block_orthogonal")
        f = inst.families
        assert onb_composition_check(f["W"], f["V"], f["V"], K_of(np.eye(5))) <= 1e-10

    def test_zero_h(self):
        V = orthonormal_fusion_basis([2, 2])
        H = WeightedFamily((make_subspace(np.zeros((4, 0))),) * 2, (1.0, 1.0))
        rng = np.random.default_rng(0)
        W = WeightedFamily.from_bases([random_matrix(rng, 4, 3), random_matrix(rng, 4, 3)], [1.0, 1.0])
        assert onb_composition_check(W, V, H, K_of(np.eye(4))) == 0.0

    @pytest.mark.parametrize("seed", range(4))
    def test_proper_subspaces(self, seed):
        inst = random_instance(seed, 6, 3, [2, 2, 2], 3, "block_orthogonal")
        f = inst.families
        assert onb_composition_check(f["W"], f["V"], f["H"], K_of(inst.K)) <= 1e-9

    def test_incompatible_k_rejected(self):
        inst = random_instance(0, 6, 3, [2, 2, 2], 3, "block_orthogonal")
        f = inst.families
        rng = np.random.default_rng(0)
        with pytest.raises(PreconditionError):
            onb_composition_check(f["W"], f["V"], f["H"], K_of(random_matrix(rng, 6, 6)))

    def test_non_onb_rejected(self):
        inst = random_instance(0, 4, 2, [2, 2], 2, "block_orthogonal")
        f = inst.families
        with pytest.raises(PreconditionError):
            onb_composition_check(f["W"], f["W"], f["H"], K_of(np.eye(4)))
