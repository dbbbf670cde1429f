"""Dense linear-algebra substrate.

Every rank decision in the package goes through :func:`numerical_rank`, so
range bases, pseudo-inverses and projectors agree with one another.  Operators
are plain ``numpy`` arrays; adjoint means conjugate transpose.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DiagnosticError, NotAKFrameError, ValidationError

__all__ = [
    "Tolerances",
    "DEFAULT_TOL",
    "RangedOperator",
    "DouglasResult",
    "as_matrix",
    "adjoint",
    "hermitian",
    "frozen",
    "numerical_rank",
    "orthonormal_range_basis",
    "orthonormal_complement",
    "pseudo_inverse",
    "projector",
    "spectral_norm",
    "relative_residual",
    "membership_residual",
    "douglas_check",
    "optimal_lower_bound",
    "restricted_inverse",
]


@dataclass(frozen=True)
class Tolerances:
    """Rank and residual thresholds.

    ``rank_rel`` zeroes singular values below ``rank_rel * sigma_max``;
    ``residual_rel`` is the relative Frobenius threshold for equality checks.
    """

    rank_rel: float = 1e-10
    residual_rel: float = 1e-8

    def __post_init__(self):
        if not (self.rank_rel > 0 and self.residual_rel > 0):
            raise ValidationError("tolerances must be strictly positive")
        if not self.rank_rel < 1:
            raise ValidationError("rank_rel must be < 1")

    def with_residual(self, residual_rel: float) -> "Tolerances":
        return Tolerances(rank_rel=self.rank_rel, residual_rel=residual_rel)


DEFAULT_TOL = Tolerances()


def frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64/complex128 array with finite entries."""
    a = np.asarray(M)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ValidationError(f"{name}: expected a 2-D array, got shape {a.shape}")
    if np.iscomplexobj(a):
        a = a.astype(np.complex128, copy=False)
    else:
        a = a.astype(np.float64, copy=False)
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name}: entries must be finite")
    return a


def adjoint(M: np.ndarray) -> np.ndarray:
    return M.conj().T


def hermitian(S: np.ndarray) -> np.ndarray:
    """Symmetrized copy ``(S + S*)/2``."""
    return 0.5 * (S + adjoint(S))


def numerical_rank(s: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> int:
    """Count singular values above ``tol.rank_rel * max(s)``."""
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > tol.rank_rel * s[0]))


def _svd(M: np.ndarray):
    return np.linalg.svd(M, full_matrices=False)


def orthonormal_range_basis(M, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis (n x r) of the column space of ``M``.

    A zero matrix yields an ``n x 0`` basis.

    >>> orthonormal_range_basis(np.diag([1.0, 0.0])).shape
    (2, 1)
    """
    M = as_matrix(M)
    n = M.shape[0]
    if M.size == 0:
        return np.zeros((n, 0), dtype=M.dtype)
    U, s, _ = _svd(M)
    return U[:, : numerical_rank(s, tol)]


def orthonormal_complement(U: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of span(U), U orthonormal."""
    n, r = U.shape
    if r == 0:
        return np.eye(n, dtype=U.dtype)
    Q, _, _ = np.linalg.svd(U, full_matrices=True)
    return Q[:, r:]


def pseudo_inverse(M, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Moore-Penrose inverse at the package rank decision."""
    M = as_matrix(M)
    m, n = M.shape
    if M.size == 0:
        return np.zeros((n, m), dtype=M.dtype)
    U, s, Vh = _svd(M)
    r = numerical_rank(s, tol)
    return (adjoint(Vh[:r]) / s[:r]) @ adjoint(U[:, :r])


def projector(U: np.ndarray) -> np.ndarray:
    """Orthogonal projector ``U U*`` for orthonormal columns ``U``."""
    return U @ adjoint(U)


def spectral_norm(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def relative_residual(diff: np.ndarray, ref: np.ndarray, floor: float = 0.0) -> float:
    """``||diff||_F / max(||ref||_F, floor)``; zero when both vanish."""
    num = float(np.linalg.norm(diff))
    den = max(float(np.linalg.norm(ref)), floor)
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den


def membership_residual(B: np.ndarray, U: np.ndarray) -> float:
    """``||(I - U U*) B||_F``: how far the columns of B stick out of span(U)."""
    if B.size == 0:
        return 0.0
    return float(np.linalg.norm(B - U @ (adjoint(U) @ B)))


@dataclass(frozen=True)
class RangedOperator:
    """An operator K with its range basis, pseudo-inverse and ``||K^+||``."""

    op: np.ndarray
    range_basis: np.ndarray
    pinv: np.ndarray
    pinv_norm: float
    rank: int
    tol: Tolerances = field(default=DEFAULT_TOL, compare=False)

    @classmethod
    def from_matrix(cls, K, tol: Tolerances = DEFAULT_TOL) -> "RangedOperator":
        K = as_matrix(K, "K")
        U, s, Vh = _svd(K)
        r = numerical_rank(s, tol)
        pinv = (adjoint(Vh[:r]) / s[:r]) @ adjoint(U[:, :r])
        pinv_norm = float(1.0 / s[r - 1]) if r else 0.0
        return cls(
            op=frozen(K),
            range_basis=frozen(U[:, :r]),
            pinv=frozen(pinv),
            pinv_norm=pinv_norm,
            rank=r,
            tol=tol,
        )

    @property
    def dim(self) -> int:
        return self.op.shape[0]

    @property
    def projector(self) -> np.ndarray:
        return projector(self.range_basis)

    @property
    def norm(self) -> float:
        return spectral_norm(self.op)

    def adjoint(self) -> "RangedOperator":
        return RangedOperator.from_matrix(adjoint(self.op), self.tol)


@dataclass(frozen=True)
class DouglasResult:
    """Outcome of the three-way range-inclusion test for ``L1`` against ``L2``.

    ``range_residual``, ``inequality_residual`` and ``factor_residual`` are the
    relative residuals behind criteria (range inclusion, operator inequality,
    factorization); ``lam`` is the smallest admissible scale when ``holds``.
    """

    holds: bool
    factor: Optional[np.ndarray]
    lam: Optional[float]
    range_residual: float
    inequality_residual: float
    factor_residual: float


# relative inflation of lambda^2 used when testing the inequality on all of H
_LAMBDA_MARGIN = 1e-6


def _inv_sqrt_pd(G: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(hermitian(G))
    return (V / np.sqrt(w)) @ adjoint(V)


def douglas_check(L1, L2, tol: Tolerances = DEFAULT_TOL) -> DouglasResult:
    """Evaluate R(L1) ⊆ R(L2), L1 L1* <= lam^2 L2 L2* and L1 = L2 X separately.

    The three verdicts must coincide; a split decision raises
    :class:`DiagnosticError` since it can only come from an inconsistent rank
    or tolerance choice.
    """
    L1 = as_matrix(L1, "L1")
    L2 = as_matrix(L2, "L2")
    if L1.shape[0] != L2.shape[0]:
        raise ValidationError(f"row counts differ: {L1.shape[0]} vs {L2.shape[0]}")
    n = L1.shape[0]
    dtype = np.result_type(L1, L2)
    norm1_f = float(np.linalg.norm(L1))
    if norm1_f == 0.0:
        X = np.zeros((L2.shape[1], L1.shape[1]), dtype=dtype)
        return DouglasResult(True, X, 0.0, 0.0, 0.0, 0.0)
    norm1_2 = spectral_norm(L1)

    # range inclusion: column-space membership
    U2 = orthonormal_range_basis(L2, tol)
    r_range = membership_residual(L1, U2) / norm1_f

    # factorization through the pseudo-inverse
    X = pseudo_inverse(L2, tol) @ L1
    r_factor = relative_residual(L2 @ X - L1, L1)

    # operator inequality: smallest lam on R(L2), then PSD test on all of H
    # in the split H = R(L2) ⊕ R(L2)^⊥ via a block Schur complement
    Q = orthonormal_complement(U2)
    A = adjoint(U2) @ L1  # r x c
    B = adjoint(Q) @ L1  # (n-r) x c
    if U2.shape[1]:
        G = hermitian(adjoint(U2) @ L2 @ adjoint(L2) @ U2)
        Gm = _inv_sqrt_pd(G)
        lam2 = float(max(np.linalg.eigvalsh(hermitian(Gm @ A @ adjoint(A) @ Gm))[-1], 0.0))
        lam2_t = lam2 * (1.0 + _LAMBDA_MARGIN) + _LAMBDA_MARGIN * norm1_2**2 / np.linalg.eigvalsh(G)[-1]
        M_aa = hermitian(lam2_t * G - A @ adjoint(A))
        W = np.eye(A.shape[1]) + adjoint(A) @ np.linalg.solve(M_aa, A)
    else:
        lam2 = 0.0
        W = np.eye(L1.shape[1])
    if B.shape[0]:
        neg = hermitian(B @ W @ adjoint(B))
        r_ineq = float(np.sqrt(max(np.linalg.eigvalsh(neg)[-1], 0.0))) / norm1_2
    else:
        r_ineq = 0.0

    verdicts = (
        r_range <= tol.residual_rel,
        r_ineq <= tol.residual_rel,
        r_factor <= tol.residual_rel,
    )
    if len(set(verdicts)) != 1:
        raise DiagnosticError(
            "Douglas criteria disagree: "
            f"range={r_range:.3e} inequality={r_ineq:.3e} factor={r_factor:.3e}"
        )
    holds = verdicts[2]
    return DouglasResult(
        holds=holds,
        factor=X if holds else None,
        lam=float(np.sqrt(lam2)) if holds else None,
        range_residual=r_range,
        inequality_residual=r_ineq,
        factor_residual=r_factor,
    )


def optimal_lower_bound(S: np.ndarray, K: RangedOperator, tol: Tolerances = DEFAULT_TOL) -> float:
    """Largest A with ``A ||K* f||^2 <= <S f, f>`` for all f.

    Split f = u + v with u in R(K), v orthogonal to it.  K K* only sees u, so
    minimizing over v leaves the Schur complement of S on R(K); the bound is
    its smallest eigenvalue relative to ``G = U* K K* U``.  Returns 0 when the
    Schur complement is singular at the rank threshold and ``inf`` when K = 0.
    """
    U = K.range_basis
    if U.shape[1] == 0:
        return float("inf")
    S = hermitian(S)
    s_max = max(float(np.linalg.eigvalsh(S)[-1]), 0.0)
    Q = orthonormal_complement(U)
    S_uu = adjoint(U) @ S @ U
    if Q.shape[1]:
        S_uv = adjoint(U) @ S @ Q
        S_vv = hermitian(adjoint(Q) @ S @ Q)
        # PSD Schur rule needs R(S_vu) ⊆ R(S_vv)
        Uv = orthonormal_range_basis(S_vv, tol)
        if membership_residual(adjoint(S_uv), Uv) > tol.residual_rel * max(s_max, 1e-300):
            return 0.0
        schur = hermitian(S_uu - S_uv @ pseudo_inverse(S_vv, tol) @ adjoint(S_uv))
    else:
        schur = hermitian(S_uu)
    if np.linalg.eigvalsh(schur)[0] <= tol.rank_rel * s_max:
        return 0.0
    G = hermitian(adjoint(U) @ K.op @ adjoint(K.op) @ U)
    Gm = _inv_sqrt_pd(G)
    return float(np.linalg.eigvalsh(hermitian(Gm @ schur @ Gm))[0])


def restricted_inverse(S: np.ndarray, K: RangedOperator, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Matrix of ``S^{-1} π_{S(R(K))}``: ``U (S U)^+`` with U the range basis of K.

    Raises :class:`NotAKFrameError` when S is not injective on R(K).
    """
    U = K.range_basis
    n = S.shape[0]
    if U.shape[1] == 0:
        return np.zeros((n, n), dtype=np.result_type(S, U))
    SU = S @ U
    s = np.linalg.svd(SU, compute_uv=False)
    if numerical_rank(s, tol) < U.shape[1]:
        raise NotAKFrameError(
            f"frame operator is not injective on R(K): rank {numerical_rank(s, tol)} < {U.shape[1]}"
        )
    return U @ pseudo_inverse(SU, tol)
