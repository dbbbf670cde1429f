"""Subspaces, weighted families and seeded instance generation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .errors import ValidationError
from .numerics import (
    DEFAULT_TOL,
    Tolerances,
    adjoint,
    as_matrix,
    frozen,
    hermitian,
    numerical_rank,
    orthonormal_range_basis,
    projector,
)

__all__ = [
    "Subspace",
    "WeightedFamily",
    "VectorFamily",
    "Instance",
    "STRUCTURES",
    "make_subspace",
    "random_instance",
    "random_subspace",
    "random_matrix",
    "random_unit_vectors",
    "test_battery",
    "rotate_family",
    "orthonormal_fusion_basis",
]

STRUCTURES = ("generic", "k_invertible", "inside_pinv_range", "block_orthogonal")
MAX_RETRIES = 100


@dataclass(frozen=True)
class Subspace:
    """A subspace of C^n stored as an orthonormal basis.

    ``vectors`` keeps the spanning set it was built from (used for local
    frames and lossless serialization).
    """

    basis: np.ndarray
    vectors: np.ndarray

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return projector(self.basis)


def _stack(vectors, n: Optional[int] = None) -> np.ndarray:
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        return as_matrix(vectors, "vectors")
    vecs = [np.asarray(v).ravel() for v in vectors]
    if not vecs:
        if n is None:
            raise ValidationError("empty vector list needs an explicit ambient dimension")
        return np.zeros((n, 0))
    if len({v.size for v in vecs}) != 1:
        raise ValidationError("vectors have inconsistent dimensions")
    return as_matrix(np.column_stack(vecs), "vectors")


def make_subspace(vectors, tol: Tolerances = DEFAULT_TOL, n: Optional[int] = None) -> Subspace:
    """Orthonormalize the span of ``vectors`` (columns of a matrix, or a list).

    An all-zero spanning set gives the zero-dimensional subspace.
    """
    V = _stack(vectors, n)
    return Subspace(basis=frozen(orthonormal_range_basis(V, tol)), vectors=frozen(V))


@dataclass(frozen=True)
class WeightedFamily:
    """Ordered fusion sequence ``{(W_i, w_i)}``.

    Coordinates of the direct sum are the concatenated local coordinates with
    respect to each stored basis, so the synthesis operator is the block
    matrix ``[w_1 B_1 | ... | w_N B_N]``.
    """

    subspaces: Tuple[Subspace, ...]
    weights: Tuple[float, ...]

    def __post_init__(self):
        if len(self.subspaces) != len(self.weights):
            raise ValidationError("subspaces and weights differ in length")
        if not self.subspaces:
            raise ValidationError("a family needs at least one member")
        dims = {W.ambient_dim for W in self.subspaces}
        if len(dims) != 1:
            raise ValidationError(f"members live in different ambient dimensions {sorted(dims)}")
        for i, w in enumerate(self.weights):
            if not (np.isfinite(w) and w > 0):
                raise ValidationError(f"weight of member {i} must be positive, got {w}")

    @classmethod
    def from_bases(cls, bases: Iterable, weights=None, tol: Tolerances = DEFAULT_TOL) -> "WeightedFamily":
        bases = list(bases)
        n = None
        for B in bases:
            if isinstance(B, np.ndarray) and B.ndim == 2:
                n = B.shape[0]
                break
        subs = tuple(B if isinstance(B, Subspace) else make_subspace(B, tol, n) for B in bases)
        if weights is None:
            weights = [1.0] * len(subs)
        return cls(subs, tuple(float(w) for w in weights))

    def __len__(self) -> int:
        return len(self.subspaces)

    @property
    def ambient_dim(self) -> int:
        return self.subspaces[0].ambient_dim

    @property
    def coord_dims(self) -> Tuple[int, ...]:
        return tuple(W.dim for W in self.subspaces)

    @property
    def total_coord_dim(self) -> int:
        return sum(self.coord_dims)

    @property
    def bases(self) -> Tuple[np.ndarray, ...]:
        return tuple(W.basis for W in self.subspaces)

    @property
    def projectors(self) -> Tuple[np.ndarray, ...]:
        return tuple(W.projector for W in self.subspaces)

    def synthesis(self) -> np.ndarray:
        n = self.ambient_dim
        blocks = [w * W.basis for W, w in zip(self.subspaces, self.weights)]
        dtype = np.result_type(*blocks) if blocks else np.float64
        if self.total_coord_dim == 0:
            return np.zeros((n, 0), dtype=dtype)
        return np.hstack(blocks)

    def frame_operator(self) -> np.ndarray:
        n = self.ambient_dim
        S = np.zeros((n, n), dtype=np.result_type(*self.bases))
        for P, w in zip(self.projectors, self.weights):
            S = S + w**2 * P
        return hermitian(S)

    def with_weights(self, weights) -> "WeightedFamily":
        return WeightedFamily(self.subspaces, tuple(float(w) for w in weights))

    def unit_weights(self) -> bool:
        return all(w == 1.0 for w in self.weights)


@dataclass(frozen=True)
class VectorFamily:
    """Grouped vectors ``{f_ij}``; the flat view is ``{w_i f_ij}`` as columns."""

    groups: Tuple[np.ndarray, ...]
    weights: Tuple[float, ...] = ()

    def __post_init__(self):
        groups = tuple(frozen(as_matrix(g, "group")) for g in self.groups)
        if not groups:
            raise ValidationError("a vector family needs at least one group")
        if len({g.shape[0] for g in groups}) != 1:
            raise ValidationError("groups live in different ambient dimensions")
        object.__setattr__(self, "groups", groups)
        weights = self.weights or (1.0,) * len(groups)
        if len(weights) != len(groups):
            raise ValidationError("one weight per group required")
        object.__setattr__(self, "weights", tuple(float(w) for w in weights))

    @classmethod
    def from_vectors(cls, vectors) -> "VectorFamily":
        return cls((_stack(vectors),))

    @property
    def ambient_dim(self) -> int:
        return self.groups[0].shape[0]

    @property
    def flat(self) -> np.ndarray:
        return np.hstack([w * g for g, w in zip(self.groups, self.weights)])

    def __len__(self) -> int:
        return self.flat.shape[1]


@dataclass(frozen=True)
class Instance:
    """Everything one theorem check may need; families are keyed W, V, Z, X, H."""

    dim: int
    field: str
    K: np.ndarray
    families: Dict[str, WeightedFamily]
    L: Optional[np.ndarray] = None
    T: Optional[np.ndarray] = None
    symbol: Optional[np.ndarray] = None
    tol: Tolerances = DEFAULT_TOL
    meta: Dict[str, object] = field(default_factory=dict, compare=False)

    def family(self, name: str) -> WeightedFamily:
        return self.families[name]


# -- random generation --------------------------------------------------------


def random_matrix(rng: np.random.Generator, rows: int, cols: int, real: bool = False) -> np.ndarray:
    if real:
        return rng.standard_normal((rows, cols))
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)


def random_subspace(
    rng: np.random.Generator, n: int, d: int, real: bool = False, within: Optional[np.ndarray] = None
) -> Subspace:
    """Haar-like random d-dimensional subspace, optionally inside span(within)."""
    if within is None:
        V = random_matrix(rng, n, d, real)
    else:
        V = within @ random_matrix(rng, within.shape[1], d, real)
    Q, _ = np.linalg.qr(V) if d else (np.zeros((n, 0), dtype=V.dtype), None)
    return make_subspace(Q)


def random_unit_vectors(rng: np.random.Generator, n: int, count: int, real: bool = False) -> np.ndarray:
    F = random_matrix(rng, n, count, real)
    return F / np.linalg.norm(F, axis=0)


def test_battery(n: int, seed, count: int = 200, witnesses: Sequence[np.ndarray] = ()) -> np.ndarray:
    """Columns: ``count`` seeded unit vectors plus every column of each witness matrix."""
    rng = np.random.default_rng(seed)
    cols = [random_unit_vectors(rng, n, count)]
    for Wt in witnesses:
        if Wt.size:
            cols.append(np.asarray(Wt, dtype=np.complex128))
    return np.hstack(cols)


test_battery.__test__ = False  # not a pytest test


def orthonormal_fusion_basis(block_dims: Sequence[int], n: Optional[int] = None) -> WeightedFamily:
    """Coordinate blocks ``H = ⊕ span(e_j : j in block i)`` with unit weights."""
    n = sum(block_dims) if n is None else n
    subs = []
    start = 0
    for b in block_dims:
        B = np.zeros((n, b))
        B[start : start + b, :] = np.eye(b)
        subs.append(make_subspace(B))
        start += b
    return WeightedFamily(tuple(subs), (1.0,) * len(subs))


def rotate_family(W: WeightedFamily, angle: float, rng: np.random.Generator) -> WeightedFamily:
    """Rotate every member by its own unitary ``exp(i angle H)``, ``||H|| = 1``."""
    n = W.ambient_dim
    real = all(np.isrealobj(B) for B in W.bases)
    subs = []
    for Ws in W.subspaces:
        A = random_matrix(rng, n, n, real)
        if real:
            A = A - A.T
            A /= np.linalg.norm(A, 2)
            R = scipy.linalg.expm(angle * A)
        else:
            A = hermitian(A)
            A /= np.linalg.norm(A, 2)
            R = scipy.linalg.expm(1j * angle * A)
        subs.append(make_subspace(R @ Ws.basis))
    return WeightedFamily(tuple(subs), W.weights)


def _spans(bases: Sequence[np.ndarray], target_rank: int, tol: Tolerances) -> bool:
    mats = [B for B in bases if B.shape[1]]
    if not mats:
        return target_rank == 0
    s = np.linalg.svd(np.hstack(mats), compute_uv=False)
    return numerical_rank(s, tol) == target_rank


def _random_weights(rng, count: int) -> Tuple[float, ...]:
    return tuple(float(w) for w in rng.uniform(0.5, 2.0, size=count))


def _well_conditioned(rng, n: int, real: bool) -> np.ndarray:
    while True:
        M = random_matrix(rng, n, n, real)
        if np.linalg.cond(M) < 1e4:
            return M


def random_instance(
    seed: int,
    dim: int,
    n_subspaces: int,
    subspace_dims: Sequence[int],
    k_rank: int,
    structure: str = "generic",
    field: str = "complex",
    tol: Tolerances = DEFAULT_TOL,
) -> Instance:
    """Seeded instance whose structure satisfies a theorem's hypotheses.

    ``generic``            Gaussian subspaces W, V; K of rank ``k_rank``.
    ``k_invertible``       K invertible and W spanning, so S_W(R(K)) = H.
    ``inside_pinv_range``  R(K) = R(K*) of rank ``k_rank``; every W_i inside
                           R(K^+) and W spanning it; T random invertible.
    ``block_orthogonal``   coordinate blocks H_i of sizes ``subspace_dims``;
                           V_i = H_i, and Z_i, X_i, H-family members inside H_i;
                           W spanning with unit weights; L maps into span Z;
                           K acts as the identity on each H-member modulo V_i^⊥.

    Attempts that miss a stochastic precondition are redrawn from
    ``default_rng([seed, attempt])``, at most 100 times.
    """
    subspace_dims = [int(d) for d in subspace_dims]
    if structure not in STRUCTURES:
        raise ValidationError(f"unknown structure {structure!r}; choose from {STRUCTURES}")
    if field not in ("real", "complex"):
        raise ValidationError(f"field must be 'real' or 'complex', got {field!r}")
    if dim < 1 or n_subspaces < 1:
        raise ValidationError("dim and n_subspaces must be positive")
    if len(subspace_dims) != n_subspaces:
        raise ValidationError(f"need {n_subspaces} subspace dims, got {len(subspace_dims)}")
    if not 0 <= k_rank <= dim:
        raise ValidationError(f"k_rank must lie in [0, {dim}], got {k_rank}")
    if any(d < 0 or d > dim for d in subspace_dims):
        raise ValidationError(f"subspace dims must lie in [0, {dim}]")
    if structure == "block_orthogonal" and sum(subspace_dims) > dim:
        raise ValidationError(f"block dims {subspace_dims} exceed dim {dim}")
    if structure == "k_invertible" and sum(subspace_dims) < dim:
        raise ValidationError("k_invertible needs sum(subspace_dims) >= dim so W can span H")
    if structure == "inside_pinv_range" and sum(min(d, k_rank) for d in subspace_dims) < k_rank:
        raise ValidationError("inside_pinv_range needs the members to be able to span R(K*)")

    real = field == "real"
    build = {
        "generic": _gen_generic,
        "k_invertible": _gen_k_invertible,
        "inside_pinv_range": _gen_inside_pinv_range,
        "block_orthogonal": _gen_block_orthogonal,
    }[structure]
    for attempt in range(MAX_RETRIES):
        rng = np.random.default_rng([seed, attempt])
        parts = build(rng, dim, subspace_dims, k_rank, real, tol)
        if parts is not None:
            K, fams, extra = parts
            meta = {"seed": seed, "structure": structure, "attempt": attempt}
            return Instance(
                dim=dim,
                field=field,
                K=frozen(K),
                families=fams,
                tol=tol,
                meta=meta,
                **{k: frozen(v) for k, v in extra.items()},
            )
    raise ValidationError(f"could not satisfy {structure} preconditions in {MAX_RETRIES} attempts")


def _low_rank(rng, n: int, r: int, real: bool) -> np.ndarray:
    return random_matrix(rng, n, r, real) @ random_matrix(rng, r, n, real)


def _gen_generic(rng, n, dims, r, real, tol):
    K = _low_rank(rng, n, r, real)
    if numerical_rank(np.linalg.svd(K, compute_uv=False), tol) != r:
        return None
    W = WeightedFamily(tuple(random_subspace(rng, n, d, real) for d in dims), _random_weights(rng, len(dims)))
    V = WeightedFamily(tuple(random_subspace(rng, n, d, real) for d in dims), _random_weights(rng, len(dims)))
    return K, {"W": W, "V": V}, {}


def _gen_k_invertible(rng, n, dims, r, real, tol):
    K = _well_conditioned(rng, n, real)
    W = WeightedFamily(tuple(random_subspace(rng, n, d, real) for d in dims), _random_weights(rng, len(dims)))
    if not _spans(W.bases, n, tol):
        return None
    V = WeightedFamily(tuple(random_subspace(rng, n, d, real) for d in dims), _random_weights(rng, len(dims)))
    return K, {"W": W, "V": V}, {}


def _gen_inside_pinv_range(rng, n, dims, r, real, tol):
    Q, _ = np.linalg.qr(random_matrix(rng, n, r, real))
    A = _well_conditioned(rng, r, real) if r else np.zeros((0, 0))
    K = Q @ A @ adjoint(Q)
    subs = tuple(random_subspace(rng, n, min(d, r), real, within=Q) for d in dims)
    if not _spans([S.basis for S in subs], r, tol):
        return None
    W = WeightedFamily(subs, _random_weights(rng, len(dims)))
    V = WeightedFamily(tuple(random_subspace(rng, n, d, real) for d in dims), _random_weights(rng, len(dims)))
    T = _well_conditioned(rng, n, real)
    return K, {"W": W, "V": V}, {"T": T}


def _gen_block_orthogonal(rng, n, blocks, r, real, tol):
    V = orthonormal_fusion_basis(blocks, n)
    N = len(blocks)
    Zs, Xs, Hs = [], [], []
    for Vb, b in zip(V.bases, blocks):
        Zs.append(random_subspace(rng, n, int(rng.integers(1, b + 1)) if b else 0, real, within=Vb))
        Xs.append(random_subspace(rng, n, int(rng.integers(1, b + 1)) if b else 0, real, within=Vb))
        Hs.append(random_subspace(rng, n, max(b - 1, 1) if b else 0, real, within=Vb))
    ones = (1.0,) * N
    Z = WeightedFamily(tuple(Zs), ones)
    X = WeightedFamily(tuple(Xs), ones)
    H = WeightedFamily(tuple(Hs), ones)
    per = -(-n // N)
    W = WeightedFamily(tuple(random_subspace(rng, n, min(n, max(b, per) + 1), real) for b in blocks), ones)
    if not _spans(W.bases, n, tol):
        return None

    # K h - h ⊥ V_i for h in H_i: identity on each H_i up to V_i^⊥ leakage
    dtype = np.float64 if real else np.complex128
    K = np.zeros((n, n), dtype=dtype)
    P_all = np.zeros((n, n), dtype=dtype)
    for Hs_i, Vb in zip(H.subspaces, V.bases):
        P_h = Hs_i.projector
        leak = (np.eye(n) - projector(Vb)) @ random_matrix(rng, n, n, real)
        K = K + P_h + leak @ P_h
        P_all = P_all + P_h
    h_total = sum(S.dim for S in H.subspaces)
    rest = max(r - h_total, 0)
    K = K + _low_rank(rng, n, rest, real) @ (np.eye(n) - P_all)

    Zspan = orthonormal_range_basis(np.hstack([S.basis for S in Zs]), tol)
    L = projector(Zspan) @ random_matrix(rng, n, n, real)
    return K, {"W": W, "V": V, "Z": Z, "X": X, "H": H}, {"L": L}
