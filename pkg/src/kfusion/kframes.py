"""Vector K-frames: bounds, restricted inverse and K-duals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotAKFrameError, ValidationError
from .numerics import (
    DEFAULT_TOL,
    RangedOperator,
    Tolerances,
    adjoint,
    frozen,
    hermitian,
    optimal_lower_bound,
    relative_residual,
    restricted_inverse,
)
from .spaces import VectorFamily

__all__ = [
    "KFrameAnalysis",
    "frame_operator",
    "kframe_analyze",
    "restricted_inverse_vec",
    "canonical_kdual_vec",
    "verify_kdual_vec",
    "kdual_residuals_both_orders",
]


@dataclass(frozen=True)
class KFrameAnalysis:
    """Frame operator and optimal bounds of a vector family against K.

    ``vacuous`` marks K = 0, where the lower bound is the ``inf`` sentinel.
    """

    S_F: np.ndarray
    A_opt: float
    B_opt: float
    is_kframe: bool
    vacuous: bool = False


def frame_operator(F: VectorFamily) -> np.ndarray:
    Fm = F.flat
    return hermitian(Fm @ adjoint(Fm))


def _check_dims(F: VectorFamily, K: RangedOperator):
    if F.ambient_dim != K.dim:
        raise ValidationError(f"family lives in dimension {F.ambient_dim}, K acts on {K.dim}")


def kframe_analyze(F: VectorFamily, K: RangedOperator, tol: Tolerances = DEFAULT_TOL) -> KFrameAnalysis:
    _check_dims(F, K)
    S = frame_operator(F)
    B = max(float(np.linalg.eigvalsh(S)[-1]), 0.0)
    A = optimal_lower_bound(S, K, tol)
    vacuous = K.rank == 0
    return KFrameAnalysis(S_F=frozen(S), A_opt=A, B_opt=B, is_kframe=A > 0, vacuous=vacuous)


def restricted_inverse_vec(F: VectorFamily, K: RangedOperator, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """``S_F^{-1} π_{S_F(R(K))}`` as an n x n matrix.

    It inverts S_F on R(K) and annihilates the orthogonal complement of
    S_F(R(K)).
    """
    _check_dims(F, K)
    S = frame_operator(F)
    try:
        return restricted_inverse(S, K, tol)
    except NotAKFrameError as exc:
        raise NotAKFrameError(f"not a K-frame: {exc}") from None


def canonical_kdual_vec(F: VectorFamily, K: RangedOperator, tol: Tolerances = DEFAULT_TOL) -> VectorFamily:
    """Canonical K-dual ``{K* D f_i}`` returned as a single flat group."""
    D = restricted_inverse_vec(F, K, tol)
    return VectorFamily((adjoint(K.op) @ D @ F.flat,))


def verify_kdual_vec(F: VectorFamily, G: VectorFamily, K: RangedOperator) -> float:
    """Relative residual of ``K = Σ_i π_{R(K)} f_i g_i*`` in Frobenius norm."""
    Fm, Gm = F.flat, G.flat
    if Fm.shape != Gm.shape:
        raise ValidationError(f"families differ in shape: {Fm.shape} vs {Gm.shape}")
    if not np.any(K.op):
        raise ValidationError("relative residual undefined for K = 0")
    R = K.projector @ Fm @ adjoint(Gm)
    return relative_residual(K.op - R, K.op)


def kdual_residuals_both_orders(F: VectorFamily, G: VectorFamily, K: RangedOperator):
    """Residuals of G as a K-dual of F and of F as a K-dual of G.

    K-duality is not symmetric; both numbers are reported, nothing is asserted
    about their relation.
    """
    return verify_kdual_vec(F, G, K), verify_kdual_vec(G, F, K)
