"""Seeded property-suite driver and the brute-force Rayleigh oracle.

Every theorem check runs on instances that satisfy its hypotheses and on one
engineered counter-instance that must fail (or be rejected), so a residual
routine that always returns zero cannot pass the suite.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np
import scipy.optimize

from .errors import DiagnosticError, PreconditionError, ValidationError
from .fusion import (
    INEQ_SLACK,
    canonical_kdual_fusion,
    canonical_local_duals,
    canonical_membership_residual,
    fusion_analyze,
    kstar_lower_bound_check,
    lemma_v_residual,
    local_dual_identities,
    local_to_global,
    map_family,
    reconstruct,
    sandwich_slacks,
    verify_kdual_fusion,
)
from .kframes import canonical_kdual_vec, kframe_analyze, restricted_inverse_vec, verify_kdual_vec
from .multipliers import (
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
from .numerics import (
    DEFAULT_TOL,
    RangedOperator,
    Tolerances,
    adjoint,
    douglas_check,
    hermitian,
    orthonormal_complement,
    projector,
)
from .spaces import (
    VectorFamily,
    WeightedFamily,
    make_subspace,
    orthonormal_fusion_basis,
    random_instance,
    random_matrix,
    random_subspace,
    random_unit_vectors,
    rotate_family,
)

__all__ = [
    "CheckRecord",
    "VerificationReport",
    "oracle_rayleigh_min",
    "run_suite",
    "SuiteAbort",
    "REPORT_SCHEMA_VERSION",
    "instance_seed",
]

REPORT_SCHEMA_VERSION = 1
KINDS = ("residual", "slack", "positive", "expect_fail")


class SuiteAbort(DiagnosticError):
    """A diagnostic failure inside the suite, tagged with the offending seed."""

    def __init__(self, seed: int, check: str, cause: Exception):
        super().__init__(f"diagnostic failure in {check} at seed {seed}: {cause}")
        self.seed = seed
        self.check = check


@dataclass(frozen=True)
class CheckRecord:
    """One verdict.

    ``kind`` fixes the pass rule: ``residual`` value <= threshold, ``slack``
    value >= -threshold, ``positive`` value > threshold, ``expect_fail`` the
    check was supposed to fail and did (value is the failing residual, or
    ``None`` when a precondition error rejected the input).
    """

    name: str
    seed: int
    dim: int
    kind: str
    value: Optional[float]
    threshold: float
    passed: bool
    detail: str = ""


def _rule(kind: str, value: Optional[float], threshold: float) -> bool:
    if kind == "residual":
        return value is not None and value <= threshold
    if kind == "slack":
        return value is not None and value >= -threshold
    if kind == "positive":
        return value is not None and value > threshold
    raise ValueError(kind)


@dataclass
class VerificationReport:
    records: List[CheckRecord]
    tol: Tolerances
    params: Dict[str, object] = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    @property
    def names(self) -> List[str]:
        return sorted({r.name for r in self.records})

    def summary(self) -> Dict[str, object]:
        per: Dict[str, Dict[str, object]] = {}
        for r in self.records:
            s = per.setdefault(r.name, {"count": 0, "failed": 0, "worst": None, "kind": r.kind})
            s["count"] += 1
            s["failed"] += 0 if r.passed else 1
            if r.value is not None and r.kind in ("residual", "slack", "positive"):
                v = r.value
                w = s["worst"]
                if w is None:
                    s["worst"] = v
                elif r.kind == "residual":
                    s["worst"] = max(w, v)
                else:
                    s["worst"] = min(w, v)
        failed = sum(1 for r in self.records if not r.passed)
        return {
            "checks": len(self.records),
            "passed": len(self.records) - failed,
            "failed": failed,
            "named_checks": len(per),
            "per_check": per,
        }

    def to_dict(self, timing: bool = False) -> Dict[str, object]:
        out = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "kind": "kfusion-report",
            "params": self.params,
            "tolerances": {"rank_rel": self.tol.rank_rel, "residual_rel": self.tol.residual_rel},
            "pass": self.passed,
            "summary": self.summary(),
            "records": [asdict(r) for r in self.records],
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out

    def format_text(self) -> str:
        lines = []
        for name, s in self.summary()["per_check"].items():
            flag = "PASS" if s["failed"] == 0 else "FAIL"
            worst = "-" if s["worst"] is None else f"{s['worst']:.3e}"
            lines.append(f"{flag}  {name:<32} n={s['count']:<4} worst={worst} ({s['kind']})")
        for r in self.records:
            if not r.passed:
                lines.append(f"  failed: {r.name} seed={r.seed} dim={r.dim} value={r.value} {r.detail}")
        summ = self.summary()
        lines.append(f"{summ['passed']}/{summ['checks']} records passed across {summ['named_checks']} checks")
        return "\n".join(lines)


# -- oracle -------------------------------------------------------------------


def _rayleigh_value_grad(z, S, G):
    n = S.shape[0]
    f = z[:n] + 1j * z[n:]
    Sf, Gf = S @ f, G @ f
    num = float(np.real(np.vdot(f, Sf)))
    den = float(np.real(np.vdot(f, Gf)))
    if den <= 0:
        return np.inf, np.zeros_like(z)
    q = num / den
    g = 2.0 * (Sf - q * Gf) / den
    return q, np.concatenate([g.real, g.imag])


def oracle_rayleigh_min(
    S, G, U, samples: int = 100_000, seed=0, refine: int = 4, chunk: int = 20_000
) -> float:
    """Minimum of ``<Sf, f> / <Gf, f>`` found by seeded sampling plus BFGS polish.

    Samples have the form f = U a + v (a nonzero coefficient vector for the
    range of G, v arbitrary); the ``refine`` best ones seed a local quasi-Newton
    descent.  No eigen-decomposition of the pencil is involved.
    """
    S = hermitian(np.asarray(S, dtype=np.complex128))
    G = hermitian(np.asarray(G, dtype=np.complex128))
    U = np.asarray(U)
    n = S.shape[0]
    if U.shape[1] == 0:
        return float("inf")
    rng = np.random.default_rng(seed)
    best_vals = np.full(0, np.inf)
    best_vecs = np.zeros((n, 0), dtype=np.complex128)
    remaining = samples
    while remaining > 0:
        m = min(chunk, remaining)
        remaining -= m
        a = random_matrix(rng, U.shape[1], m)
        v = random_matrix(rng, n, m) * rng.uniform(0, 2, size=m)
        F = U @ a + v
        num = np.real(np.einsum("ij,ij->j", F.conj(), S @ F))
        den = np.real(np.einsum("ij,ij->j", F.conj(), G @ F))
        ok = den > 0
        q = np.where(ok, num / np.where(ok, den, 1.0), np.inf)
        vals = np.concatenate([best_vals, q])
        vecs = np.hstack([best_vecs, F])
        keep = np.argsort(vals, kind="stable")[:refine]
        best_vals, best_vecs = vals[keep], vecs[:, keep]
    result = float(best_vals[0])
    for k in range(best_vecs.shape[1]):
        f = best_vecs[:, k] / np.linalg.norm(best_vecs[:, k])
        z0 = np.concatenate([f.real, f.imag])
        opt = scipy.optimize.minimize(
            _rayleigh_value_grad, z0, args=(S, G), jac=True, method="BFGS",
            options={"gtol": 1e-12 * max(abs(best_vals[k]), 1e-300), "maxiter": 5000},
        )
        if np.isfinite(opt.fun):
            result = min(result, float(opt.fun))
    return result


# -- suite ---------------------------------------------------------------------


def instance_seed(seed: int, dim: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, dim, trial]).generate_state(1)[0])


class _Collector:
    def __init__(self, seed: int, dim: int):
        self.seed = seed
        self.dim = dim
        self.records: List[CheckRecord] = []

    def add(self, name: str, kind: str, value, threshold: float, detail: str = ""):
        value = None if value is None else float(value)
        self.records.append(
            CheckRecord(name, self.seed, self.dim, kind, value, float(threshold), _rule(kind, value, threshold), detail)
        )

    def expect_fail(self, name: str, failed: bool, value=None, threshold: float = 0.0, detail: str = ""):
        value = None if value is None else float(value)
        self.records.append(CheckRecord(name, self.seed, self.dim, "expect_fail", value, float(threshold), bool(failed), detail))

    def expect_reject(self, name: str, fn: Callable[[], object], detail: str = "precondition"):
        try:
            fn()
        except PreconditionError as exc:
            self.expect_fail(name, True, None, 0.0, f"{detail}: {exc}")
        else:
            self.expect_fail(name, False, None, 0.0, "input was evaluated instead of rejected")


def _bound_slack(S, K: RangedOperator, A: float, B: float, F: np.ndarray):
    """Worst slacks of ``A|K*f|^2 <= <Sf,f> <= B|f|^2`` over unit columns of F."""
    q = np.real(np.einsum("ij,ij->j", F.conj(), S @ F))
    lower = q - A * np.linalg.norm(adjoint(K.op) @ F, axis=0) ** 2
    upper = B - q
    return float(lower.min()), float(upper.min())


def _pick(rng, lo: int, hi: int) -> int:
    return int(rng.integers(lo, hi + 1))


def _params(rng, n: int):
    N = _pick(rng, 2, 4)
    dims = [_pick(rng, 1, n) for _ in range(N)]
    return N, dims


def _partition(rng, n: int) -> List[int]:
    parts = min(_pick(rng, 2, 3), n)
    cuts = sorted(rng.choice(np.arange(1, n), size=parts - 1, replace=False).tolist())
    bounds = [0] + cuts + [n]
    return [b - a for a, b in zip(bounds, bounds[1:])]


def _check_douglas(c: _Collector, rng, n: int, tol: Tolerances):
    r = _pick(rng, 1, n - 1)
    L2 = random_matrix(rng, n, r) @ random_matrix(rng, r, n)
    L1 = L2 @ random_matrix(rng, n, n)
    res = douglas_check(L1, L2, tol)
    c.add("douglas", "residual", res.factor_residual, tol.residual_rel)
    neg = douglas_check(random_matrix(rng, n, n), L2, tol)
    c.expect_fail("douglas:negative", not neg.holds, neg.factor_residual, tol.residual_rel)


def _check_kframe(c: _Collector, rng, n: int, tol: Tolerances, oracle_samples: int):
    r = _pick(rng, 1, n)
    K = RangedOperator.from_matrix(random_matrix(rng, n, r) @ random_matrix(rng, r, n), tol)
    F = VectorFamily.from_vectors(random_matrix(rng, n, n + 2))
    a = kframe_analyze(F, K, tol)
    battery = random_unit_vectors(rng, n, 1000)
    lo, hi = _bound_slack(a.S_F, K, a.A_opt, a.B_opt, battery)
    c.add("kframe-bounds", "slack", min(lo, hi), INEQ_SLACK)
    G = K.op @ adjoint(K.op)
    orc = oracle_rayleigh_min(a.S_F, G, K.range_basis, oracle_samples, seed=int(rng.integers(2**31)))
    c.add("kframe-oracle", "residual", abs(orc - a.A_opt) / a.A_opt, 1e-4)
    c.add("kframe-oracle-floor", "slack", orc - a.A_opt, INEQ_SLACK)

    D = restricted_inverse_vec(F, K, tol)
    u = K.range_basis @ random_matrix(rng, r, 100)
    c.add("kframe-restricted-inverse", "residual",
          float((np.linalg.norm(D @ a.S_F @ u - u, axis=0) / np.linalg.norm(u, axis=0)).max()), 1e-9)
    f = a.S_F @ u
    f = f / np.linalg.norm(f, axis=0)
    Df = np.linalg.norm(D @ f, axis=0)
    sl = min((Df - 1 / a.B_opt).min(), (K.pinv_norm**2 / a.A_opt - Df).min())
    c.add("kframe-sandwich", "slack", sl, INEQ_SLACK)

    G_dual = canonical_kdual_vec(F, K, tol)
    c.add("kframe-canonical-dual", "residual", verify_kdual_vec(F, G_dual, K), tol.residual_rel)
    zero = VectorFamily.from_vectors(np.zeros((n, len(F))))
    res0 = verify_kdual_vec(F, zero, K)
    c.expect_fail("kframe-canonical-dual:negative", res0 > tol.residual_rel, res0, tol.residual_rel)

    # K = I: canonical K-dual is the classical canonical dual S^{-1} f_i
    I = RangedOperator.from_matrix(np.eye(n), tol)
    classical = np.linalg.solve(a.S_F, F.flat)
    got = canonical_kdual_vec(F, I, tol).flat
    c.add("kframe-classical-dual", "residual", float(np.linalg.norm(got - classical)), 1e-10 * max(1.0, float(np.linalg.norm(classical))))


def _check_fusion(c: _Collector, rng, n: int, tol: Tolerances, oracle_samples: int):
    N, dims = _params(rng, n)
    r = _pick(rng, 1, n)
    inst = random_instance(int(rng.integers(2**31)), n, N, [max(d, -(-n // N)) for d in dims], r, "generic", tol=tol)
    K = RangedOperator.from_matrix(inst.K, tol)
    W = inst.families["W"]
    a = fusion_analyze(W, K, tol)
    c.add("fusion-kfusion", "positive", a.A_opt, 0.0)
    battery = random_unit_vectors(rng, n, 1000)
    lo, hi = _bound_slack(a.S_W, K, a.A_opt, a.B_opt, battery)
    c.add("fusion-bounds", "slack", min(lo, hi), INEQ_SLACK)
    c.add("fusion-synthesis", "residual", float(np.linalg.norm(a.S_W - a.T_W @ adjoint(a.T_W))), 1e-12)
    orc = oracle_rayleigh_min(a.S_W, K.op @ adjoint(K.op), K.range_basis, oracle_samples, seed=int(rng.integers(2**31)))
    c.add("fusion-oracle", "residual", abs(orc - a.A_opt) / a.A_opt, 1e-4)
    c.add("fusion-oracle-floor", "slack", orc - a.A_opt, INEQ_SLACK)

    lo, hi = sandwich_slacks(a, K, random_matrix(rng, K.rank, 100))
    c.add("karan-sandwich", "slack", min(lo, hi), INEQ_SLACK)

    fs = random_matrix(rng, n, 100)
    worst = max(reconstruct(W, K, a, fs[:, j])[1] for j in range(fs.shape[1]))
    c.add("reconstruction", "residual", worst, tol.residual_rel)

    # counter-instance: a family inside ker K* cannot reach R(K)
    if K.rank < n:
        Q = orthonormal_complement(K.range_basis)
        bad = WeightedFamily.from_bases([Q], [1.0], tol)
        ab = fusion_analyze(bad, K, tol)
        c.expect_fail("fusion-kfusion:negative", not ab.is_kfusion and not ab.douglas.holds,
                      ab.douglas.factor_residual, tol.residual_rel)

    # ψ-factored and summed duality residuals are the same operator
    V = inst.families["V"]
    kd = verify_kdual_fusion(W, V, K, a)
    c.add("kdual-forms-agree", "residual", abs(kd.residual_sum - kd.residual_factored), 1e-12)

    # counter-instance: V orthogonal to R(K*) gives residual 1
    Kt = K.adjoint()
    if Kt.rank < n:
        Qs = orthonormal_complement(Kt.range_basis)
        Vbad = WeightedFamily.from_bases([Qs] * len(W), [1.0] * len(W), tol)
        kb = verify_kdual_fusion(W, Vbad, K, a)
        c.expect_fail("kdual-fusion:negative", kb.residual_sum > tol.residual_rel, kb.residual_sum, tol.residual_rel)

    # the canonical dual needs W_i ⊆ S_W(R(K)); a rank-deficient K usually breaks it
    if K.rank < n and canonical_membership_residual(W, K, a, tol) > tol.residual_rel:
        c.expect_reject("canonical-dual:negative", lambda: canonical_kdual_fusion(W, K, a, tol))

    # multipliers on the generic instance
    fac = factorization_check(MultiplierSpec(np.ones(N), W, V, K), a, tol)
    c.add("factorization", "residual", fac, 1e-12)
    m = random_matrix(rng, N, 1).ravel() * 2
    mm = build_multiplier(MultiplierSpec(m, W, V, K), a, tol)
    c.add("multiplier-norm-bound", "slack", mm.slack, INEQ_SLACK)
    Phi = VectorFamily.from_vectors(random_matrix(rng, n, n + 3))
    Psi = VectorFamily.from_vectors(random_matrix(rng, n, n + 3))
    om = ordinary_multiplier(random_matrix(rng, n + 3, 1).ravel(), Phi, Psi)
    c.add("ordinary-multiplier-bound", "slack", om.slack, INEQ_SLACK)


def _check_canonical(c: _Collector, rng, n: int, tol: Tolerances):
    N = _pick(rng, 2, 4)
    dims = [_pick(rng, 1, n) for _ in range(N)]
    while sum(dims) < n:
        dims[int(rng.integers(N))] = n
    inst = random_instance(int(rng.integers(2**31)), n, N, dims, n, "k_invertible", tol=tol)
    K = RangedOperator.from_matrix(inst.K, tol)
    W = inst.families["W"]
    a = fusion_analyze(W, K, tol)
    c.add("canonical-dual-membership", "residual", canonical_membership_residual(W, K, a, tol), 1e-10)
    Wt = canonical_kdual_fusion(W, K, a, tol)
    kd = verify_kdual_fusion(W, Wt, K, a)
    c.add("canonical-dual", "residual", max(kd.residual_sum, kd.residual_factored), tol.residual_rel)
    c.add("kdual-forms-agree", "residual", abs(kd.residual_sum - kd.residual_factored), 1e-12)
    B = float(np.linalg.eigvalsh(Wt.frame_operator())[-1])
    c.add("canonical-dual-bessel", "residual", 0.0 if np.isfinite(B) else np.inf, 0.0)

    lb = kstar_lower_bound_check(Wt, W, K, a, tol, seed=int(rng.integers(2**31)))
    c.add("kstar-lower-bound", "slack", lb.min_slack, INEQ_SLACK, f"predicted_A={lb.predicted_A:.3e}")
    c.add("kstar-lower-bound-exact", "slack", lb.exact_A - lb.predicted_A, INEQ_SLACK)
    doubled = Wt.with_weights([2 * w for w in Wt.weights])
    res = verify_kdual_fusion(W, doubled, K, a)
    # doubling the weights doubles the synthesized operator, so duality breaks
    c.expect_fail("kstar-lower-bound:negative-dual", res.residual_sum > tol.residual_rel, res.residual_sum, tol.residual_rel)

    # multiplier with V = canonical dual equals K (R(K) = H here)
    spec = MultiplierSpec(np.ones(N), W, Wt, K)
    mlb = dual_lower_bound_from_multiplier(spec, "M_equals_K", tol=tol, seed=int(rng.integers(2**31)))
    c.add("multiplier-lower-bound", "slack", mlb.min_slack, INEQ_SLACK, "M = K")

    # invertible multiplier: K-inverses on both sides, then the left-inverse bound
    V = inst.families["V"]
    m = 1.0 + rng.uniform(0, 1, size=N)
    spec2 = MultiplierSpec(m, W, V, K)
    M = build_multiplier(spec2, a, tol).M
    if np.linalg.cond(M) < 1e8:
        right = k_side_inverse(M, K, "right", tol)
        left = k_side_inverse(M, K, "left", tol)
        c.add("k-side-inverse", "residual", max(right.residual, left.residual), tol.residual_rel)
        c.add("k-side-inverse-exists", "residual", 0.0 if (right.exists and left.exists) else 1.0, 0.0)
        mlb2 = dual_lower_bound_from_multiplier(spec2, "left_inverse", L=left.X, tol=tol, seed=int(rng.integers(2**31)))
        c.add("multiplier-lower-bound", "slack", mlb2.min_slack, INEQ_SLACK, "left inverse")
    # a rank-one multiplier cannot have K-inverses for invertible K (n >= 2)
    e = np.zeros(N)
    e[0] = 1.0
    M1 = build_multiplier(MultiplierSpec(e, W, V, K), a, tol).M
    r1 = k_side_inverse(M1, K, "right", tol)
    l1 = k_side_inverse(M1, K, "left", tol)
    if W.subspaces[0].dim < n:
        c.expect_fail("k-side-inverse:negative", not (r1.exists or l1.exists), min(r1.residual, l1.residual), tol.residual_rel)


def _check_lemma(c: _Collector, rng, n: int, tol: Tolerances, pairs: int = 5):
    worst = 0.0
    for _ in range(pairs):
        V = random_subspace(rng, n, _pick(rng, 0, n))
        T = random_matrix(rng, n, n)
        if rng.uniform() < 0.5:
            r = _pick(rng, 0, n)
            T = random_matrix(rng, n, r) @ random_matrix(rng, r, n)
        worst = max(worst, lemma_v_residual(V, T, tol))
    c.add("lemma-v", "residual", worst, 1e-10)


def _non_parseval_locals(rng, W: WeightedFamily) -> VectorFamily:
    groups = []
    for B in W.bases:
        d = B.shape[1]
        extra = _pick(rng, 0, 2)
        G = np.hstack([B * rng.uniform(0.5, 2.0, size=d), B @ random_matrix(rng, d, extra), B[:, :1]]) if d else np.zeros((B.shape[0], 1))
        groups.append(G)
    return VectorFamily(tuple(groups))


def _check_local(c: _Collector, rng, n: int, tol: Tolerances):
    N, dims = _params(rng, n)
    r = _pick(rng, 1, n)
    inst = random_instance(int(rng.integers(2**31)), n, N, dims, r, "generic", tol=tol)
    K = RangedOperator.from_matrix(inst.K, tol)
    W = inst.families["W"]
    parseval = VectorFamily(W.bases)
    lg = local_to_global(W, parseval, K, tol)
    c.add("local-equivalence", "residual", 0.0 if lg.equiv else 1.0, 0.0, "parseval locals")
    c.add("local-parseval", "residual", float(np.linalg.norm(lg.kframe.S_F - lg.fusion.S_W)), 1e-12)
    scaled = _non_parseval_locals(rng, W)
    lg2 = local_to_global(W, scaled, K, tol)
    c.add("local-equivalence", "residual", 0.0 if lg2.equiv else 1.0, 0.0, "non-parseval locals")
    short = [G[:, :-1] if G.shape[1] == Ws.dim and Ws.dim else G for G, Ws in zip(W.bases, W.subspaces)]
    if any(G.shape[1] < Ws.dim for G, Ws in zip(short, W.subspaces)):
        c.expect_reject("local-equivalence:negative", lambda: local_to_global(W, VectorFamily(tuple(short)), K, tol))

    if lg.fusion.is_kfusion:
        ld = local_dual_identities(W, K, parseval, canonical_local_duals(W, parseval, tol), tol, seed=int(rng.integers(2**31)))
        c.add("local-duals", "residual", max(ld.res1, ld.res2), tol.residual_rel, "parseval locals")
        c.add("local-duals-coincide", "residual", ld.coincide, 1e-9)
        ld2 = local_dual_identities(W, K, scaled, canonical_local_duals(W, scaled, tol), tol, seed=int(rng.integers(2**31)))
        c.add("local-duals", "residual", max(ld2.res1, ld2.res2), tol.residual_rel, "non-parseval locals")
        c.expect_reject(
            "local-duals:negative",
            lambda: local_dual_identities(W, K, scaled, VectorFamily(tuple(2 * g for g in canonical_local_duals(W, scaled, tol).groups)), tol),
        )


def _check_kw(c: _Collector, rng, n: int, tol: Tolerances):
    N = _pick(rng, 2, 4)
    r = _pick(rng, 1, n)
    dims = [_pick(rng, 1, r) for _ in range(N)]
    while sum(dims) < r:
        dims[int(rng.integers(N))] = r
    inst = random_instance(int(rng.integers(2**31)), n, N, dims, r, "inside_pinv_range", tol=tol)
    K = RangedOperator.from_matrix(inst.K, tol)
    W = inst.families["W"]
    _, chk = map_family(None, W, K, "KW", tol)
    c.add("kw-theorem", "positive", chk.A_opt, 0.0)
    _, chk2 = map_family(inst.T, W, K, "TK", tol)
    c.add("tk-corollary", "positive", chk2.A_opt, 0.0)
    if r < n:
        V = inst.families["V"]
        c.expect_reject("kw-theorem:negative", lambda: map_family(None, V, K, "KW", tol))


def _check_invertibility(c: _Collector, rng, n: int, tol: Tolerances):
    # unit-weight V with K = S_V: D_V* K = I, so lhs vanishes at W = V
    N = _pick(rng, 2, 4)
    dims = [_pick(rng, 1, n) for _ in range(N)]
    while sum(dims) < n:
        dims[int(rng.integers(N))] = n
    V = WeightedFamily(tuple(random_subspace(rng, n, d) for d in dims), (1.0,) * N)
    K = RangedOperator.from_matrix(V.frame_operator(), tol)
    _run_invertibility(c, rng, V, K, tol, "K = S_V")

    # orthonormal fusion basis with K an orthogonal projector (rank-deficient K)
    blocks = _partition(rng, n)
    Vb = orthonormal_fusion_basis(blocks)
    r = _pick(rng, 1, n)
    Kp = RangedOperator.from_matrix(projector(random_subspace(rng, n, r).basis), tol)
    _run_invertibility(c, rng, Vb, Kp, tol, "ONB, K projector")


def _run_invertibility(c: _Collector, rng, V: WeightedFamily, K: RangedOperator, tol: Tolerances, label: str):
    base = invertibility_check(V, V, K, tol)
    c.add("invertibility-v-equals-w", "residual", base.lhs, 1e-20, label)
    theta = 0.5
    for _ in range(60):
        W = rotate_family(V, theta, rng)
        rep = invertibility_check(V, W, K, tol)
        if rep.lhs < rep.rhs / 2:
            break
        theta /= 2
    c.add("invertibility-criterion", "residual", 0.0 if rep.criterion_holds else 1.0, 0.0, label)
    c.add("invertibility-sigma", "positive", rep.sigma_min_restricted, 0.0, label)
    c.add("invertibility-neumann", "residual", rep.neumann, 1.0 - 1e-12, label)


def _check_composition(c: _Collector, rng, n: int, tol: Tolerances):
    blocks = _partition(rng, n)
    r = _pick(rng, 1, n)
    inst = random_instance(int(rng.integers(2**31)), n, len(blocks), blocks, r, "block_orthogonal", tol=tol)
    f = inst.families
    K = RangedOperator.from_matrix(inst.K, tol)
    L = RangedOperator.from_matrix(inst.L, tol)
    c.add("composition", "residual", composition_check(f["W"], f["V"], f["Z"], f["X"], K, L, tol), 1e-9)
    c.add("onb-composition", "residual", onb_composition_check(f["W"], f["V"], f["H"], K, tol), 1e-9)
    I = RangedOperator.from_matrix(np.eye(n), tol)
    c.add("onb-composition", "residual", onb_composition_check(f["W"], f["V"], f["H"], I, tol), 1e-9, "K = I")
    # counter-instances: rotated V breaks biorthogonality; generic K breaks the ONB identity
    Vrot = rotate_family(f["V"], 0.3, rng)
    c.expect_reject("composition:negative", lambda: composition_check(f["W"], Vrot, f["Z"], f["X"], K, L, tol))
    Kg = RangedOperator.from_matrix(random_matrix(rng, n, n), tol)
    c.expect_reject("onb-composition:negative", lambda: onb_composition_check(f["W"], f["V"], f["H"], Kg, tol))


CHECK_GROUPS = (
    ("douglas", _check_douglas),
    ("kframe", _check_kframe),
    ("fusion", _check_fusion),
    ("canonical", _check_canonical),
    ("lemma", _check_lemma),
    ("local", _check_local),
    ("kw", _check_kw),
    ("invertibility", _check_invertibility),
    ("composition", _check_composition),
)


def run_suite(
    seed: int = 0,
    trials: int = 1,
    dims: Iterable[int] = range(2, 9),
    tol: Tolerances = DEFAULT_TOL,
    oracle_samples: int = 100_000,
) -> VerificationReport:
    """Run every theorem check ``trials`` times per dimension.

    Records are sorted by (check, seed, dim) so the report does not depend on
    execution order.  A diagnostic failure aborts with :class:`SuiteAbort`.
    """
    dims = sorted(set(int(d) for d in dims))
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")
    if not dims or dims[0] < 2 or dims[-1] > 10:
        raise ValidationError(f"dims must be a nonempty subset of [2, 10], got {dims}")
    t0 = time.perf_counter()
    records: List[CheckRecord] = []
    for n in dims:
        for t in range(trials):
            s = instance_seed(seed, n, t)
            c = _Collector(s, n)
            for k, (group, fn) in enumerate(CHECK_GROUPS):
                rng = np.random.default_rng([s, k])
                try:
                    if group in ("kframe", "fusion"):
                        fn(c, rng, n, tol, oracle_samples)
                    else:
                        fn(c, rng, n, tol)
                except DiagnosticError as exc:
                    raise SuiteAbort(s, group, exc) from exc
            records.extend(c.records)
    records.sort(key=lambda r: (r.name, r.seed, r.dim, r.detail))
    params = {"seed": seed, "trials": trials, "dims": dims, "oracle_samples": oracle_samples}
    return VerificationReport(records=records, tol=tol, params=params, wall_time=time.perf_counter() - t0)
