"""K-fusion frames: analysis, reconstruction of R(K), K-duals, local frames.

The restricted inverse ``D = U (S_W U)^+`` (U a range basis of K) stands in
for ``S_W^{-1} π_{S_W(R(K))}`` everywhere; its adjoint is the operator that
multiplies K in the reconstruction and duality formulas.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DiagnosticError, NotAKFrameError, PreconditionError, ValidationError
from .kframes import KFrameAnalysis, frame_operator, kframe_analyze, restricted_inverse_vec
from .numerics import (
    DEFAULT_TOL,
    DouglasResult,
    RangedOperator,
    Tolerances,
    adjoint,
    douglas_check,
    frozen,
    hermitian,
    membership_residual,
    numerical_rank,
    optimal_lower_bound,
    orthonormal_range_basis,
    projector,
    pseudo_inverse,
    relative_residual,
    restricted_inverse,
    spectral_norm,
)
from .spaces import Subspace, VectorFamily, WeightedFamily, make_subspace, test_battery

__all__ = [
    "FusionAnalysis",
    "PsiOperator",
    "KDualResiduals",
    "LowerBoundCheck",
    "LocalGlobalResult",
    "LocalDualResult",
    "fusion_analyze",
    "reconstruct",
    "psi_operator",
    "verify_kdual_fusion",
    "canonical_kdual_fusion",
    "kstar_lower_bound_check",
    "local_frame_bounds",
    "canonical_local_duals",
    "local_to_global",
    "local_dual_identities",
    "map_family",
    "lemma_v_residual",
    "sandwich_slacks",
]

# absolute slack allowed in sampled inequalities on unit vectors
INEQ_SLACK = 1e-9


@dataclass(frozen=True)
class FusionAnalysis:
    T_W: np.ndarray
    S_W: np.ndarray
    A_opt: float
    B_opt: float
    is_bessel: bool
    is_kfusion: bool
    D: Optional[np.ndarray]
    douglas: DouglasResult
    vacuous: bool = False


def _check_family(W: WeightedFamily, K: RangedOperator):
    if W.ambient_dim != K.dim:
        raise ValidationError(f"family lives in dimension {W.ambient_dim}, K acts on {K.dim}")


def fusion_analyze(W: WeightedFamily, K: RangedOperator, tol: Tolerances = DEFAULT_TOL) -> FusionAnalysis:
    """Synthesis and frame operators, optimal bounds and restricted inverse.

    The bound-based verdict (A_opt > 0) is cross-checked against the range
    inclusion R(K) ⊆ R(T_W); a disagreement raises :class:`DiagnosticError`.
    """
    _check_family(W, K)
    T = W.synthesis()
    S = W.frame_operator()
    B = max(float(np.linalg.eigvalsh(S)[-1]), 0.0)
    A = optimal_lower_bound(S, K, tol)
    is_kfusion = A > 0
    dg = douglas_check(K.op, T, tol)
    if dg.holds != is_kfusion:
        raise DiagnosticError(
            f"bound verdict (A_opt={A:.3e}) disagrees with range inclusion "
            f"(residual {dg.factor_residual:.3e})"
        )
    D = frozen(restricted_inverse(S, K, tol)) if is_kfusion else None
    return FusionAnalysis(
        T_W=frozen(T),
        S_W=frozen(S),
        A_opt=A,
        B_opt=B,
        is_bessel=bool(np.isfinite(B)),
        is_kfusion=is_kfusion,
        D=D,
        douglas=dg,
        vacuous=K.rank == 0,
    )


def _require_kfusion(analysis: FusionAnalysis, what: str = "W"):
    if not analysis.is_kfusion:
        raise NotAKFrameError(f"{what} is not a K-fusion frame (A_opt = 0)")


def sandwich_slacks(analysis: FusionAnalysis, K: RangedOperator, samples: np.ndarray) -> Tuple[float, float]:
    """Worst slacks of ``B^-1 |f| <= |D f| <= A^-1 |K^+|^2 |f|`` over f = S u.

    ``samples`` are coefficient vectors in the range basis of K; each is
    mapped to u in R(K), then to f = S u and normalized.
    """
    _require_kfusion(analysis)
    if K.rank == 0:
        return 0.0, 0.0
    u = K.range_basis @ samples
    f = analysis.S_W @ u
    f = f / np.linalg.norm(f, axis=0)
    Df = np.linalg.norm(analysis.D @ f, axis=0)
    lower = Df - 1.0 / analysis.B_opt
    upper = K.pinv_norm**2 / analysis.A_opt - Df
    return float(lower.min()), float(upper.min())


def reconstruct(W: WeightedFamily, K: RangedOperator, analysis: FusionAnalysis, f) -> Tuple[np.ndarray, float]:
    """``Kf = Σ w_i^2 π_{R(K)} π_{W_i} D* K f`` and its relative residual."""
    _require_kfusion(analysis)
    f = np.asarray(f)
    Kf = K.op @ f
    g = analysis.D.conj().T @ Kf
    out = np.zeros_like(g, dtype=np.result_type(g, *W.bases))
    for P, w in zip(W.projectors, W.weights):
        out = out + w**2 * (P @ g)
    out = K.projector @ out
    denom = max(float(np.linalg.norm(Kf)), np.finfo(float).eps)
    return out, float(np.linalg.norm(out - Kf)) / denom


@dataclass(frozen=True)
class PsiOperator:
    """``ψ_wv`` as per-index blocks ``B_{W_i}* D* K B_{V_i}`` and their block diagonal."""

    blocks: Tuple[np.ndarray, ...]
    assembled: np.ndarray


def _block_diag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols), dtype=np.result_type(*blocks))
    r = c = 0
    for b in blocks:
        out[r : r + b.shape[0], c : c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def _same_length(W: WeightedFamily, V: WeightedFamily):
    if len(W) != len(V):
        raise ValidationError(f"families differ in length: {len(W)} vs {len(V)}")
    if W.ambient_dim != V.ambient_dim:
        raise ValidationError("families live in different ambient dimensions")


def psi_operator(W: WeightedFamily, V: WeightedFamily, K: RangedOperator, analysisW: FusionAnalysis) -> PsiOperator:
    _same_length(W, V)
    _require_kfusion(analysisW)
    DK = adjoint(analysisW.D) @ K.op
    blocks = tuple(frozen(adjoint(BW) @ DK @ BV) for BW, BV in zip(W.bases, V.bases))
    return PsiOperator(blocks=blocks, assembled=frozen(_block_diag(blocks)))


@dataclass(frozen=True)
class KDualResiduals:
    residual_sum: float
    residual_factored: float


def _dual_sum(W: WeightedFamily, V: WeightedFamily, K: RangedOperator, D: np.ndarray) -> np.ndarray:
    DK = adjoint(D) @ K.op
    n = K.dim
    out = np.zeros((n, n), dtype=np.result_type(DK, *W.bases, *V.bases))
    for PW, PV, w, v in zip(W.projectors, V.projectors, W.weights, V.weights):
        out = out + (w * v) * (PW @ DK @ PV)
    return out


def verify_kdual_fusion(
    W: WeightedFamily, V: WeightedFamily, K: RangedOperator, analysisW: FusionAnalysis
) -> KDualResiduals:
    """Relative residuals of V as a K-dual of W, summed and ψ-factored."""
    _same_length(W, V)
    _require_kfusion(analysisW)
    if not np.any(K.op):
        raise ValidationError("relative residual undefined for K = 0")
    P = K.projector
    summed = P @ _dual_sum(W, V, K, analysisW.D)
    psi = psi_operator(W, V, K, analysisW)
    factored = P @ W.synthesis() @ psi.assembled @ adjoint(V.synthesis())
    return KDualResiduals(
        residual_sum=relative_residual(K.op - summed, K.op),
        residual_factored=relative_residual(K.op - factored, K.op),
    )


def _range_basis_of_image(S: np.ndarray, K: RangedOperator, tol: Tolerances) -> np.ndarray:
    return orthonormal_range_basis(S @ K.range_basis, tol) if K.rank else np.zeros((K.dim, 0))


def canonical_kdual_fusion(
    W: WeightedFamily, K: RangedOperator, analysisW: FusionAnalysis, tol: Tolerances = DEFAULT_TOL
) -> WeightedFamily:
    """``{(K* D W_i, w_i)}``, requiring every W_i ⊆ S_W(R(K))."""
    _require_kfusion(analysisW)
    C = _range_basis_of_image(analysisW.S_W, K, tol)
    for i, B in enumerate(W.bases):
        res = membership_residual(B, C)
        if res > tol.residual_rel:
            raise PreconditionError(f"W_{i} is not inside S_W(R(K)): membership residual {res:.3e}")
    KD = adjoint(K.op) @ analysisW.D
    subs = tuple(make_subspace(KD @ B, tol, K.dim) for B in W.bases)
    return WeightedFamily(subs, W.weights)


def canonical_membership_residual(W: WeightedFamily, K: RangedOperator, analysisW: FusionAnalysis,
                                  tol: Tolerances = DEFAULT_TOL) -> float:
    """Largest ``||(I - π_{S_W(R(K))}) B_i||_F`` over the members."""
    C = _range_basis_of_image(analysisW.S_W, K, tol)
    return max(membership_residual(B, C) for B in W.bases)


@dataclass(frozen=True)
class LowerBoundCheck:
    """Predicted lower K*-bound of V, the worst sampled slack and the exact bound."""

    predicted_A: float
    holds: bool
    min_slack: float
    exact_A: float


def _lower_bound_battery(V: WeightedFamily, K: RangedOperator, predicted: float, seed) -> float:
    n = K.dim
    SV = V.frame_operator()
    _, eS = np.linalg.eigh(SV)
    _, _, Vh = np.linalg.svd(K.op)
    F = test_battery(n, seed, 200, witnesses=(eS, adjoint(Vh)))
    F = F / np.linalg.norm(F, axis=0)
    lhs = np.real(np.einsum("ij,ij->j", F.conj(), SV @ F))
    rhs = predicted * np.linalg.norm(K.op @ F, axis=0) ** 2
    return float((lhs - rhs).min())


def kstar_lower_bound_check(
    V: WeightedFamily,
    W: WeightedFamily,
    K: RangedOperator,
    analysisW: FusionAnalysis,
    tol: Tolerances = DEFAULT_TOL,
    seed=0,
) -> LowerBoundCheck:
    """A K-dual V satisfies ``Σ v_i^2 |π_{V_i} f|^2 >= |Kf|^2 / (|D*K|^2 B_W)``."""
    res = verify_kdual_fusion(W, V, K, analysisW)
    if max(res.residual_sum, res.residual_factored) > tol.residual_rel:
        raise PreconditionError(f"V is not a K-dual of W (residual {res.residual_sum:.3e})")
    c = spectral_norm(adjoint(analysisW.D) @ K.op) ** 2 * analysisW.B_opt
    predicted = 1.0 / c
    slack = _lower_bound_battery(V, K, predicted, seed)
    exact = optimal_lower_bound(V.frame_operator(), K.adjoint(), tol)
    holds = slack >= -INEQ_SLACK and exact >= predicted * (1 - tol.residual_rel)
    return LowerBoundCheck(predicted_A=predicted, holds=holds, min_slack=slack, exact_A=exact)


# -- local frames -------------------------------------------------------------


def local_frame_bounds(W: WeightedFamily, locals_: VectorFamily, tol: Tolerances = DEFAULT_TOL):
    """Optimal frame bounds ``(A_i, B_i)`` of each group as a frame for W_i.

    Raises :class:`PreconditionError` when a group leaves W_i or fails to span it.
    """
    if len(locals_.groups) != len(W):
        raise ValidationError(f"need {len(W)} local groups, got {len(locals_.groups)}")
    bounds = []
    for i, (Ws, G) in enumerate(zip(W.subspaces, locals_.groups)):
        if G.shape[0] != W.ambient_dim:
            raise ValidationError(f"local group {i} has wrong ambient dimension")
        scale = max(float(np.linalg.norm(G)), 1.0)
        res = membership_residual(G, Ws.basis)
        if res > tol.residual_rel * scale:
            raise PreconditionError(f"local group {i} leaves W_{i}: residual {res:.3e}")
        if Ws.dim == 0:
            bounds.append((float("inf"), 0.0))
            continue
        s = np.linalg.svd(G, compute_uv=False) if G.size else np.zeros(0)
        if numerical_rank(s, tol) < Ws.dim:
            raise PreconditionError(f"local group {i} does not span W_{i}")
        local = hermitian(adjoint(Ws.basis) @ G @ adjoint(G) @ Ws.basis)
        ev = np.linalg.eigvalsh(local)
        bounds.append((float(ev[0]), float(ev[-1])))
    return bounds


def canonical_local_duals(W: WeightedFamily, locals_: VectorFamily, tol: Tolerances = DEFAULT_TOL) -> VectorFamily:
    """Canonical dual of each local frame inside its own W_i: ``S_i^+ f_ij``."""
    groups = []
    for G in locals_.groups:
        S_i = G @ adjoint(G)
        groups.append(pseudo_inverse(S_i, tol) @ G)
    return VectorFamily(tuple(groups), locals_.weights)


@dataclass(frozen=True)
class LocalGlobalResult:
    joined: VectorFamily
    equiv: bool
    local_bounds: Tuple[Tuple[float, float], ...]
    kframe: KFrameAnalysis
    fusion: FusionAnalysis


def local_to_global(
    W: WeightedFamily, locals_: VectorFamily, K: RangedOperator, tol: Tolerances = DEFAULT_TOL
) -> LocalGlobalResult:
    """Join weighted local frames ``{w_i f_ij}`` and compare K-frame vs K-fusion verdicts."""
    bounds = local_frame_bounds(W, locals_, tol)
    live = [b for b, Ws in zip(bounds, W.subspaces) if Ws.dim]
    if live and not (min(a for a, _ in live) > 0 and max(b for _, b in live) < np.inf):
        raise PreconditionError("local frame bounds violate 0 < inf A_i <= sup B_i < inf")
    joined = VectorFamily(locals_.groups, W.weights)
    kf = kframe_analyze(joined, K, tol)
    fa = fusion_analyze(W, K, tol)
    return LocalGlobalResult(
        joined=joined,
        equiv=kf.is_kframe == fa.is_kfusion,
        local_bounds=tuple(bounds),
        kframe=kf,
        fusion=fa,
    )


@dataclass(frozen=True)
class LocalDualResult:
    res1: float
    res2: float
    coincide: Optional[float]


def _is_parseval_locals(W: WeightedFamily, locals_: VectorFamily, tol: Tolerances) -> bool:
    for Ws, G in zip(W.subspaces, locals_.groups):
        local = adjoint(Ws.basis) @ G @ adjoint(G) @ Ws.basis
        if relative_residual(local - np.eye(Ws.dim), np.eye(Ws.dim), 1.0) > tol.residual_rel:
            return False
    return True


def local_dual_identities(
    W: WeightedFamily,
    K: RangedOperator,
    locals_: VectorFamily,
    local_duals: VectorFamily,
    tol: Tolerances = DEFAULT_TOL,
    seed=0,
) -> LocalDualResult:
    """Residuals of both K-dual pairings built from local frames and their duals.

    res1: ``Kf = Σ <f, K* w_i f_ij> π_{R(K)} D w_i f~_ij``
    res2: ``Kf = Σ <f, K* D w_i f~_ij> π_{R(K)} w_i f_ij``
    Both are relative residuals over a seeded battery.  With Parseval locals,
    ``coincide`` compares ``K* D w_i f_ij`` with the canonical K-dual of the
    joined family.
    """
    if len(local_duals.groups) != len(locals_.groups):
        raise ValidationError("locals and local duals differ in length")
    for i, (Ws, G, Gd) in enumerate(zip(W.subspaces, locals_.groups, local_duals.groups)):
        if G.shape != Gd.shape:
            raise ValidationError(f"local group {i} and its dual differ in shape")
        res = relative_residual(Gd @ adjoint(G) - Ws.projector, Ws.projector, 1.0)
        if res > tol.residual_rel:
            raise PreconditionError(f"local dual {i} does not reproduce π_W{i}: residual {res:.3e}")
    fa = fusion_analyze(W, K, tol)
    _require_kfusion(fa)
    D = fa.D
    n = K.dim
    mixed_dual_f = np.zeros((n, n), dtype=np.complex128)  # Σ w_i^2 f~_ij f_ij*
    for G, Gd, w in zip(locals_.groups, local_duals.groups, W.weights):
        mixed_dual_f = mixed_dual_f + w**2 * (Gd @ adjoint(G))
    P = K.projector
    R1 = P @ D @ mixed_dual_f @ K.op
    R2 = P @ adjoint(mixed_dual_f) @ adjoint(D) @ K.op
    F = test_battery(n, seed, 200, witnesses=(np.eye(n),))
    KF = K.op @ F
    res1 = relative_residual(KF - R1 @ F, KF)
    res2 = relative_residual(KF - R2 @ F, KF)

    coincide = None
    if _is_parseval_locals(W, locals_, tol):
        joined = VectorFamily(locals_.groups, W.weights)
        D_F = restricted_inverse_vec(joined, K, tol)
        Fm = joined.flat
        Ks = adjoint(K.op)
        diff = Ks @ D @ Fm - Ks @ D_F @ Fm
        coincide = float(np.linalg.norm(diff, axis=0).max()) if diff.size else 0.0
    return LocalDualResult(res1=res1, res2=res2, coincide=coincide)


# -- image families -----------------------------------------------------------


def map_family(
    T, W: WeightedFamily, K: RangedOperator, mode: str = "KW", tol: Tolerances = DEFAULT_TOL
) -> Tuple[WeightedFamily, FusionAnalysis]:
    """Image family ``{(K W_i, w_i)}`` (mode KW) or ``{(T W_i, w_i)}`` (mode TK).

    KW: W must be a fusion frame for R(K^+) with every W_i inside it; the image
    is checked as a K-fusion frame.  TK: W must be a K-fusion frame with every
    W_i inside R((TK)^+); the image is checked as a TK-fusion frame.
    """
    n = K.dim
    if mode == "KW":
        target = K.adjoint()  # R(K^+) = R(K*)
        onto = RangedOperator.from_matrix(projector(target.range_basis), tol)
        fw = fusion_analyze(W, onto, tol)
        if not fw.is_kfusion:
            raise PreconditionError("W is not a fusion frame for R(K^+)")
        mapper = K.op
        check_op = K
    elif mode == "TK":
        if T is None:
            raise ValidationError("mode TK needs an operator T")
        T = np.asarray(T)
        if T.shape != (n, n):
            raise ValidationError(f"T must be {n}x{n}")
        fw = fusion_analyze(W, K, tol)
        if not fw.is_kfusion:
            raise PreconditionError("W is not a K-fusion frame")
        check_op = RangedOperator.from_matrix(T @ K.op, tol)
        target = check_op.adjoint()
        mapper = T
    else:
        raise ValidationError(f"mode must be 'KW' or 'TK', got {mode!r}")
    for i, B in enumerate(W.bases):
        res = membership_residual(B, target.range_basis)
        if res > tol.residual_rel:
            label = "R(K^+)" if mode == "KW" else "R((TK)^+)"
            raise PreconditionError(f"W_{i} is not inside {label}: membership residual {res:.3e}")
    mapped = WeightedFamily(tuple(make_subspace(mapper @ B, tol, n) for B in W.bases), W.weights)
    return mapped, fusion_analyze(mapped, check_op, tol)


def lemma_v_residual(V: Subspace, T, tol: Tolerances = DEFAULT_TOL) -> float:
    """``||π_V T* - π_V T* π_{TV}||_F`` for TV the image of V under T."""
    T = np.asarray(T)
    if T.shape != (V.ambient_dim, V.ambient_dim):
        raise ValidationError("T and V have mismatched dimensions")
    TV = make_subspace(T @ V.basis, tol, V.ambient_dim)
    PVTs = V.projector @ adjoint(T)
    return float(np.linalg.norm(PVTs - PVTs @ TV.projector))
