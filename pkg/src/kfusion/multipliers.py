"""K-fusion frame multipliers and the ordinary vector multiplier."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import PreconditionError, ValidationError
from .fusion import INEQ_SLACK, FusionAnalysis, _require_kfusion, fusion_analyze, psi_operator
from .numerics import (
    DEFAULT_TOL,
    RangedOperator,
    Tolerances,
    adjoint,
    douglas_check,
    frozen,
    hermitian,
    membership_residual,
    orthonormal_range_basis,
    pseudo_inverse,
    relative_residual,
    spectral_norm,
)
from .spaces import VectorFamily, WeightedFamily, test_battery

__all__ = [
    "MultiplierSpec",
    "MultiplierMatrix",
    "SideInverse",
    "InvertibilityReport",
    "build_multiplier",
    "factorization_check",
    "ordinary_multiplier",
    "k_side_inverse",
    "dual_lower_bound_from_multiplier",
    "invertibility_check",
    "composition_check",
    "onb_composition_check",
    "cross_projector_residual",
]


@dataclass(frozen=True)
class MultiplierSpec:
    symbol: np.ndarray
    W: WeightedFamily
    V: WeightedFamily
    K: RangedOperator

    def __post_init__(self):
        m = np.asarray(self.symbol, dtype=np.complex128).ravel()
        if not np.all(np.isfinite(m)):
            raise ValidationError("symbol entries must be finite")
        if not (len(m) == len(self.W) == len(self.V)):
            raise ValidationError(
                f"symbol, W and V need equal lengths, got {len(m)}, {len(self.W)}, {len(self.V)}"
            )
        object.__setattr__(self, "symbol", frozen(m))

    @property
    def sup(self) -> float:
        return float(np.abs(self.symbol).max())


@dataclass(frozen=True)
class MultiplierMatrix:
    """Assembled multiplier with its spectral norm and the a-priori norm bound."""

    M: np.ndarray
    norm: float
    bound: float
    spec: Optional[MultiplierSpec] = field(default=None, repr=False)

    @property
    def slack(self) -> float:
        return self.bound - self.norm


def _upper_bound(W: WeightedFamily) -> float:
    return max(float(np.linalg.eigvalsh(W.frame_operator())[-1]), 0.0)


def build_multiplier(spec: MultiplierSpec, analysisW: Optional[FusionAnalysis] = None,
                     tol: Tolerances = DEFAULT_TOL) -> MultiplierMatrix:
    """``M = Σ m_i w_i v_i π_{W_i} D* K π_{V_i}``.

    The bound is ``sup|m| ||D|| ||K|| sqrt(B_W B_V)`` with optimal upper bounds.
    """
    W, V, K = spec.W, spec.V, spec.K
    if analysisW is None:
        analysisW = fusion_analyze(W, K, tol)
    if not analysisW.is_kfusion:
        raise PreconditionError("W is not a K-fusion frame, the multiplier is undefined")
    DK = adjoint(analysisW.D) @ K.op
    n = K.dim
    M = np.zeros((n, n), dtype=np.complex128)
    for m, PW, PV, w, v in zip(spec.symbol, W.projectors, V.projectors, W.weights, V.weights):
        if m != 0:
            M = M + (m * w * v) * (PW @ DK @ PV)
    bound = spec.sup * spectral_norm(analysisW.D) * K.norm * np.sqrt(analysisW.B_opt * _upper_bound(V))
    return MultiplierMatrix(M=frozen(M), norm=spectral_norm(M), bound=float(bound), spec=spec)


def factorization_check(spec: MultiplierSpec, analysisW: Optional[FusionAnalysis] = None,
                        tol: Tolerances = DEFAULT_TOL) -> float:
    """Relative gap between the unit-symbol multiplier and ``T_W ψ_wv T_V*``."""
    if not np.all(spec.symbol == 1):
        raise PreconditionError("factorization needs the constant symbol m = 1")
    if analysisW is None:
        analysisW = fusion_analyze(spec.W, spec.K, tol)
    M = build_multiplier(spec, analysisW, tol).M
    psi = psi_operator(spec.W, spec.V, spec.K, analysisW)
    factored = spec.W.synthesis() @ psi.assembled @ adjoint(spec.V.synthesis())
    return relative_residual(M - factored, M, np.finfo(float).eps)


def ordinary_multiplier(m, Phi: VectorFamily, Psi: VectorFamily) -> MultiplierMatrix:
    """``f -> Σ m_i <f, ψ_i> φ_i`` with bound ``sqrt(B_Φ B_Ψ) ||m||_inf``."""
    P, Q = Phi.flat, Psi.flat
    m = np.asarray(m, dtype=np.complex128).ravel()
    if not (P.shape == Q.shape and P.shape[1] == m.size):
        raise ValidationError(
            f"symbol and families need equal lengths, got {m.size}, {P.shape[1]}, {Q.shape[1]}"
        )
    M = (P * m) @ adjoint(Q)
    B_phi = spectral_norm(P) ** 2
    B_psi = spectral_norm(Q) ** 2
    sup = float(np.abs(m).max()) if m.size else 0.0
    return MultiplierMatrix(M=frozen(M), norm=spectral_norm(M), bound=float(np.sqrt(B_phi * B_psi) * sup))


@dataclass(frozen=True)
class SideInverse:
    exists: bool
    X: Optional[np.ndarray]
    residual: float


def k_side_inverse(M, K: RangedOperator, side: str = "right", tol: Tolerances = DEFAULT_TOL) -> SideInverse:
    """Solve ``M X = K`` (right) or ``X M = K`` (left) through the pseudo-inverse.

    Existence is decided by range inclusion: R(K) ⊆ R(M) for the right
    inverse, R(K*) ⊆ R(M*) for the left one.
    """
    M = np.asarray(M.M if isinstance(M, MultiplierMatrix) else M)
    n = K.dim
    if M.shape != (n, n):
        raise ValidationError(f"M must be {n}x{n}")
    if not np.any(K.op):
        raise ValidationError("relative residual undefined for K = 0")
    Mp = pseudo_inverse(M, tol)
    if side == "right":
        dg = douglas_check(K.op, M, tol)
        X = Mp @ K.op
        res = relative_residual(M @ X - K.op, K.op)
    elif side == "left":
        dg = douglas_check(adjoint(K.op), adjoint(M), tol)
        X = K.op @ Mp
        res = relative_residual(X @ M - K.op, K.op)
    else:
        raise ValidationError(f"side must be 'left' or 'right', got {side!r}")
    exists = dg.holds and res <= tol.residual_rel
    return SideInverse(exists=exists, X=frozen(X) if exists else None, residual=res)


@dataclass(frozen=True)
class MultiplierLowerBound:
    predicted_A: float
    holds: bool
    min_slack: float


def dual_lower_bound_from_multiplier(
    spec: MultiplierSpec,
    case: str = "M_equals_K",
    L=None,
    tol: Tolerances = DEFAULT_TOL,
    seed=0,
) -> MultiplierLowerBound:
    """Lower K*-fusion bound of V predicted from ``M = K`` or from ``L M = K``."""
    analysisW = fusion_analyze(spec.W, spec.K, tol)
    mm = build_multiplier(spec, analysisW, tol)
    K = spec.K
    if not np.any(K.op):
        raise ValidationError("the bound is vacuous for K = 0")
    BW = analysisW.B_opt
    if case == "M_equals_K":
        res = relative_residual(mm.M - K.op, K.op)
        if res > tol.residual_rel:
            raise PreconditionError(f"multiplier differs from K: residual {res:.3e}")
        c = spec.sup * spectral_norm(adjoint(analysisW.D) @ K.op) * np.sqrt(BW)
    elif case == "left_inverse":
        if L is None:
            raise ValidationError("case left_inverse needs L")
        L = np.asarray(L)
        res = relative_residual(L @ mm.M - K.op, K.op)
        if res > tol.residual_rel:
            raise PreconditionError(f"L is not a K-left inverse: residual {res:.3e}")
        c = spec.sup * spectral_norm(L) * spectral_norm(analysisW.D) * K.norm * np.sqrt(BW)
    else:
        raise ValidationError(f"unknown case {case!r}")
    predicted = float(c ** -2)
    V = spec.V
    SV = V.frame_operator()
    _, eS = np.linalg.eigh(SV)
    _, _, Vh = np.linalg.svd(K.op)
    F = test_battery(K.dim, seed, 200, witnesses=(eS, adjoint(Vh)))
    F = F / np.linalg.norm(F, axis=0)
    lhs = np.real(np.einsum("ij,ij->j", F.conj(), SV @ F))
    slack = float((lhs - predicted * np.linalg.norm(K.op @ F, axis=0) ** 2).min())
    return MultiplierLowerBound(predicted_A=predicted, holds=slack >= -INEQ_SLACK, min_slack=slack)


@dataclass(frozen=True)
class InvertibilityReport:
    """Perturbation criterion for ``M_{1,V,W}`` and the direct invertibility facts.

    ``lhs`` uses the projected terms ``π_{R(K)} D_V* K π_{W_i} - π_{V_i}``;
    ``lhs_unprojected`` drops ``π_{R(K)}`` for comparison.  ``leakage`` is
    how far M sends R(K) outside S_V(R(K)).
    """

    lhs: float
    rhs: float
    criterion_holds: bool
    sigma_min_restricted: float
    invertible: bool
    neumann: float
    lhs_unprojected: float
    leakage: float


def invertibility_check(
    V: WeightedFamily, W: WeightedFamily, K: RangedOperator, tol: Tolerances = DEFAULT_TOL
) -> InvertibilityReport:
    if not (V.unit_weights() and W.unit_weights()):
        raise PreconditionError("invertibility criterion needs unit weights in V and W")
    if len(V) != len(W):
        raise ValidationError("V and W differ in length")
    aV = fusion_analyze(V, K, tol)
    aW = fusion_analyze(W, K, tol)
    _require_kfusion(aV, "V")
    _require_kfusion(aW, "W")
    DK = adjoint(aV.D) @ K.op
    P = K.projector
    lhs = lhs_u = 0.0
    for PW, PV in zip(W.projectors, V.projectors):
        X = DK @ PW - PV
        lhs += spectral_norm(P @ X) ** 2
        lhs_u += spectral_norm(X) ** 2
    rhs = aV.A_opt**2 / (aV.B_opt * K.pinv_norm**4)

    ones = np.ones(len(V))
    M = build_multiplier(MultiplierSpec(ones, V, W, K), aV, tol).M
    U = K.range_basis
    C = orthonormal_range_basis(aV.S_W @ U, tol)
    Mhat = adjoint(C) @ M @ U
    s = np.linalg.svd(Mhat, compute_uv=False)
    n = K.dim
    sigma_min = float(s[-1]) if s.size else 0.0
    invertible = bool(s.size) and sigma_min > n * np.finfo(float).eps * float(s[0])
    neumann = spectral_norm(np.eye(C.shape[1]) - adjoint(C) @ M @ aV.D @ C)
    leakage = spectral_norm(M @ U - C @ (adjoint(C) @ M @ U))
    return InvertibilityReport(
        lhs=float(lhs),
        rhs=float(rhs),
        criterion_holds=bool(lhs < rhs),
        sigma_min_restricted=sigma_min,
        invertible=invertible,
        neumann=neumann,
        lhs_unprojected=float(lhs_u),
        leakage=leakage,
    )


def cross_projector_residual(A: WeightedFamily, B: WeightedFamily) -> float:
    """Largest ``||π_{A_i} π_{B_j}||_F`` over ``i != j``."""
    worst = 0.0
    for i, BA in enumerate(A.bases):
        for j, BB in enumerate(B.bases):
            if i != j and BA.shape[1] and BB.shape[1]:
                worst = max(worst, float(np.linalg.norm(adjoint(BA) @ BB)))
    return worst


def _require_unit(*fams: Tuple[str, WeightedFamily]):
    for name, F in fams:
        if not F.unit_weights():
            raise PreconditionError(f"{name} must carry unit weights")


def composition_check(
    W: WeightedFamily,
    V: WeightedFamily,
    Z: WeightedFamily,
    X: WeightedFamily,
    K: RangedOperator,
    L: RangedOperator,
    tol: Tolerances = DEFAULT_TOL,
) -> float:
    """Gap between ``M_{1,W,V} M_{1,Z,X}`` and the ordinary multiplier of the paired vectors.

    V and X must both be biorthogonal to Z: ``π_{V_i} π_{Z_j} = 0`` and
    ``π_{X_i} π_{Z_j} = 0`` for ``i != j``.
    """
    _require_unit(("W", W), ("V", V), ("Z", Z), ("X", X))
    if not (len(W) == len(V) == len(Z) == len(X)):
        raise ValidationError("W, V, Z, X need equal lengths")
    for name, F in (("V", V), ("X", X)):
        res = cross_projector_residual(F, Z)
        if res > tol.residual_rel:
            raise PreconditionError(f"{name} and Z are not biorthogonal: cross residual {res:.3e}")
    aW = fusion_analyze(W, K, tol)
    aZ = fusion_analyze(Z, L, tol)
    _require_kfusion(aW, "W")
    if not aZ.is_kfusion:
        raise PreconditionError("Z is not an L-fusion frame")
    ones = np.ones(len(W))
    lhs = build_multiplier(MultiplierSpec(ones, W, V, K), aW, tol).M @ build_multiplier(
        MultiplierSpec(ones, Z, X, L), aZ, tol
    ).M

    n = K.dim
    E = np.eye(n)
    DK = adjoint(aW.D) @ K.op
    LD = adjoint(L.op) @ aZ.D
    phi = [PW @ DK @ PV @ PZ @ E for PW, PV, PZ in zip(W.projectors, V.projectors, Z.projectors)]
    psi = [PX @ LD @ E for PX in X.projectors]
    rhs = ordinary_multiplier(np.ones(n * len(W)), VectorFamily(tuple(phi)), VectorFamily(tuple(psi))).M
    return relative_residual(lhs - rhs, lhs, np.finfo(float).eps)


def _is_onb_fusion_basis(V: WeightedFamily, tol: Tolerances) -> bool:
    n = V.ambient_dim
    S = V.frame_operator()
    return (
        V.unit_weights()
        and relative_residual(S - np.eye(n), np.eye(n)) <= tol.residual_rel
        and cross_projector_residual(V, V) <= tol.residual_rel
    )


def onb_composition_check(
    W: WeightedFamily, V: WeightedFamily, H: WeightedFamily, K: RangedOperator, tol: Tolerances = DEFAULT_TOL
) -> float:
    """Gap ``||M_{1,W,V} M_{1,V,H} - M_{1,W,H}|| / ||M_{1,W,H}||`` for an orthonormal fusion basis V.

    Beyond ``H_i ⊆ V_i`` the identity needs ``π_{V_i} K π_{H_i} = π_{H_i}``
    (K acts as the identity on H_i up to V_i^⊥); with K = I this is automatic.
    Instances violating it are rejected rather than evaluated.
    """
    _require_unit(("W", W), ("V", V), ("H", H))
    if not (len(W) == len(V) == len(H)):
        raise ValidationError("W, V, H need equal lengths")
    if not _is_onb_fusion_basis(V, tol):
        raise PreconditionError("V is not an orthonormal fusion basis")
    for i, (BH, BV) in enumerate(zip(H.bases, V.bases)):
        res = membership_residual(BH, BV)
        if res > tol.residual_rel:
            raise PreconditionError(f"H_{i} is not inside V_{i}: membership residual {res:.3e}")
    for i, (PH, PV) in enumerate(zip(H.projectors, V.projectors)):
        res = float(np.linalg.norm(PV @ K.op @ PH - PH))
        if res > tol.residual_rel * max(1.0, K.norm):
            raise PreconditionError(
                f"K does not act as the identity on H_{i} modulo V_{i}^⊥: residual {res:.3e}"
            )
    aW = fusion_analyze(W, K, tol)
    aV = fusion_analyze(V, K, tol)
    _require_kfusion(aW, "W")
    ones = np.ones(len(W))
    M_wv = build_multiplier(MultiplierSpec(ones, W, V, K), aW, tol).M
    M_vh = build_multiplier(MultiplierSpec(ones, V, H, K), aV, tol).M
    M_wh = build_multiplier(MultiplierSpec(ones, W, H, K), aW, tol).M
    return relative_residual(M_wv @ M_vh - M_wh, M_wh, np.finfo(float).eps)
