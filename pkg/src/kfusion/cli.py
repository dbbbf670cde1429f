"""Command-line surface: instance files, analyses, named checks, suite runs.

Exit codes: 0 pass, 1 check failure, 2 parse/validation/usage error,
3 precondition violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DiagnosticError, PreconditionError, ValidationError
from .fusion import (
    INEQ_SLACK,
    canonical_kdual_fusion,
    canonical_local_duals,
    fusion_analyze,
    kstar_lower_bound_check,
    lemma_v_residual,
    local_dual_identities,
    local_to_global,
    map_family,
    reconstruct,
    verify_kdual_fusion,
)
from .harness import oracle_rayleigh_min, run_suite
from .kframes import kframe_analyze
from .multipliers import (
    MultiplierSpec,
    build_multiplier,
    composition_check,
    factorization_check,
    invertibility_check,
    k_side_inverse,
    onb_composition_check,
)
from .numerics import DEFAULT_TOL, RangedOperator, Tolerances, adjoint
from .spaces import (
    STRUCTURES,
    Instance,
    VectorFamily,
    WeightedFamily,
    make_subspace,
    random_instance,
    test_battery,
)

SCHEMA_VERSION = 1
ENV_TOL = "KFUSION_TOL_RESIDUAL"

EXIT_PASS, EXIT_FAIL, EXIT_INVALID, EXIT_PRECONDITION = 0, 1, 2, 3


class UsageError(ValidationError):
    """Bad command-line usage, such as a check missing its families."""


# -- serialization -------------------------------------------------------------


def _enc_scalar(x, complex_field: bool):
    if complex_field:
        x = complex(x)
        return [float(x.real), float(x.imag)]
    return float(np.real(x))


def encode_matrix(A: np.ndarray, complex_field: bool) -> list:
    """Row-major nested lists; complex entries as [re, im]."""
    return [[_enc_scalar(x, complex_field) for x in row] for row in np.asarray(A)]


def _dec_scalar(x, where: str, complex_field: bool):
    if isinstance(x, bool):
        raise ValidationError(f"{where}: expected a number, got {x!r}")
    if isinstance(x, (int, float)):
        v = complex(x) if complex_field else float(x)
    elif isinstance(x, list) and len(x) == 2 and all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in x):
        if not complex_field:
            if x[1] != 0:
                raise ValidationError(f"{where}: complex entry in a real instance")
        v = complex(x[0], x[1]) if complex_field else float(x[0])
    else:
        raise ValidationError(f"{where}: expected a number or [re, im], got {x!r}")
    if not np.isfinite(v):
        raise ValidationError(f"{where}: non-finite entry")
    return v


def decode_matrix(rows, where: str, complex_field: bool, shape: Optional[Tuple[int, int]] = None) -> np.ndarray:
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise ValidationError(f"{where}: expected a list of rows")
    dtype = np.complex128 if complex_field else np.float64
    if not rows:
        A = np.zeros((0, 0), dtype=dtype)
    else:
        width = len(rows[0])
        for i, r in enumerate(rows):
            if len(r) != width:
                raise ValidationError(f"{where}[{i}]: ragged row (length {len(r)}, expected {width})")
        A = np.array([[_dec_scalar(x, f"{where}[{i}][{j}]", complex_field) for j, x in enumerate(r)]
                      for i, r in enumerate(rows)], dtype=dtype).reshape(len(rows), width)
    if shape is not None and A.shape != shape:
        raise ValidationError(f"{where}: shape {A.shape}, expected {shape}")
    return A


def _family_to_json(W: WeightedFamily, complex_field: bool) -> list:
    # member vectors are stored as a list of vectors (the columns)
    return [
        {"basis": encode_matrix(S.vectors.T, complex_field), "weight": float(w)}
        for S, w in zip(W.subspaces, W.weights)
    ]


def _family_from_json(items, name: str, n: int, complex_field: bool, tol: Tolerances) -> WeightedFamily:
    where = f"families.{name}"
    if not isinstance(items, list) or not items:
        raise ValidationError(f"{where}: expected a nonempty list of members")
    subs, weights = [], []
    for i, item in enumerate(items):
        at = f"{where}[{i}]"
        if not isinstance(item, dict) or set(item) - {"basis", "weight"} or "basis" not in item:
            raise ValidationError(f"{at}: expected an object with keys 'basis' and 'weight'")
        w = item.get("weight", 1.0)
        if isinstance(w, bool) or not isinstance(w, (int, float)) or not np.isfinite(w) or w <= 0:
            raise ValidationError(f"{at}.weight: weights must be finite and > 0, got {w!r}")
        vecs = item["basis"]
        if not isinstance(vecs, list):
            raise ValidationError(f"{at}.basis: expected a list of vectors")
        if vecs:
            B = decode_matrix(vecs, f"{at}.basis", complex_field)
            if B.shape[1] != n:
                raise ValidationError(f"{at}.basis: vectors have length {B.shape[1]}, expected {n}")
            subs.append(make_subspace(B.T, tol))
        else:
            subs.append(make_subspace(np.zeros((n, 0)), tol))
        weights.append(float(w))
    return WeightedFamily(tuple(subs), tuple(weights))


def instance_to_json(inst: Instance) -> dict:
    cf = inst.field == "complex"
    out = {
        "schema_version": SCHEMA_VERSION,
        "dim": inst.dim,
        "field": inst.field,
        "K": encode_matrix(inst.K, cf),
        "families": {k: _family_to_json(v, cf) for k, v in inst.families.items()},
        "tol": {"rank_rel": inst.tol.rank_rel, "residual_rel": inst.tol.residual_rel},
    }
    if inst.L is not None:
        out["L"] = encode_matrix(inst.L, cf)
    if inst.T is not None:
        out["T"] = encode_matrix(inst.T, cf)
    if inst.symbol is not None:
        out["symbol"] = [_enc_scalar(x, cf) for x in np.asarray(inst.symbol).ravel()]
    if inst.meta:
        out["meta"] = inst.meta
    return out


def dumps_instance(inst: Instance) -> str:
    # json writes floats with repr, the shortest string that round-trips exactly
    return json.dumps(instance_to_json(inst), indent=1, ensure_ascii=False) + "\n"


_TOP_KEYS = {"schema_version", "dim", "field", "K", "families", "L", "T", "symbol", "tol", "meta"}


def instance_from_json(data, default_tol: Tolerances = DEFAULT_TOL) -> Instance:
    if not isinstance(data, dict):
        raise ValidationError("top level: expected a JSON object")
    extra = set(data) - _TOP_KEYS
    if extra:
        raise ValidationError(f"top level: unknown keys {sorted(extra)}")
    for key in ("schema_version", "dim", "field", "K", "families"):
        if key not in data:
            raise ValidationError(f"top level: missing required key {key!r}")
    if data["schema_version"] != SCHEMA_VERSION:
        raise ValidationError(f"schema_version: unsupported value {data['schema_version']!r}")
    n = data["dim"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ValidationError(f"dim: expected a positive integer, got {n!r}")
    field = data["field"]
    if field not in ("real", "complex"):
        raise ValidationError(f"field: expected 'real' or 'complex', got {field!r}")
    cf = field == "complex"
    tol = default_tol
    if "tol" in data:
        t = data["tol"]
        if not isinstance(t, dict) or set(t) - {"rank_rel", "residual_rel"}:
            raise ValidationError("tol: expected an object with rank_rel and/or residual_rel")
        try:
            tol = Tolerances(rank_rel=float(t.get("rank_rel", tol.rank_rel)),
                             residual_rel=float(t.get("residual_rel", tol.residual_rel)))
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"tol: {exc}") from None
    K = decode_matrix(data["K"], "K", cf, (n, n))
    fams = data["families"]
    if not isinstance(fams, dict):
        raise ValidationError("families: expected an object mapping names to member lists")
    families = {name: _family_from_json(items, name, n, cf, tol) for name, items in fams.items()}
    L = decode_matrix(data["L"], "L", cf, (n, n)) if "L" in data else None
    T = decode_matrix(data["T"], "T", cf, (n, n)) if "T" in data else None
    symbol = None
    if "symbol" in data:
        if not isinstance(data["symbol"], list):
            raise ValidationError("symbol: expected a list of scalars")
        symbol = np.array([_dec_scalar(x, f"symbol[{i}]", cf) for i, x in enumerate(data["symbol"])])
    meta = data.get("meta", {})
    if not isinstance(meta, dict):
        raise ValidationError("meta: expected an object")
    return Instance(dim=n, field=field, K=K, families=families, L=L, T=T, symbol=symbol, tol=tol, meta=meta)


def loads_instance(text: str, default_tol: Tolerances = DEFAULT_TOL) -> Instance:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return instance_from_json(data, default_tol)


def load_instance(path: str, default_tol: Tolerances = DEFAULT_TOL) -> Instance:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from None
    try:
        return loads_instance(text, default_tol)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def atomic_write(path: str, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def default_tolerances() -> Tolerances:
    """Built-in tolerances, with the residual one taken from the environment if set."""
    raw = os.environ.get(ENV_TOL)
    if raw is None or raw == "":
        return DEFAULT_TOL
    try:
        return DEFAULT_TOL.with_residual(float(raw))
    except ValueError as exc:
        raise ValidationError(f"{ENV_TOL}={raw!r}: {exc}") from None


# -- analyze -------------------------------------------------------------------


def analyze_instance(inst: Instance) -> dict:
    K = RangedOperator.from_matrix(inst.K, inst.tol)
    fams = {}
    for name, W in inst.families.items():
        a = fusion_analyze(W, K, inst.tol)
        fams[name] = {
            "members": len(W),
            "is_bessel": a.is_bessel,
            "is_kfusion": a.is_kfusion,
            "A_opt": a.A_opt,
            "B_opt": a.B_opt,
            "douglas": a.douglas.holds,
            "vacuous": a.vacuous,
        }
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "kfusion-analysis",
        "dim": inst.dim,
        "field": inst.field,
        "K": {"rank": K.rank, "norm": K.norm, "pinv_norm": K.pinv_norm},
        "families": fams,
    }


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def cmd_analyze(args) -> int:
    inst = load_instance(args.path, default_tolerances())
    rep = analyze_instance(inst)
    if args.json:
        print(json.dumps(rep, indent=1))
        return EXIT_PASS
    k = rep["K"]
    print(f"dim {rep['dim']} ({rep['field']}), rank K = {k['rank']}, |K| = {_fmt(k['norm'])}, |K^+| = {_fmt(k['pinv_norm'])}")
    for name, f in rep["families"].items():
        print(
            f"{name}: members={f['members']} is_bessel={_fmt(f['is_bessel'])} is_kfusion={_fmt(f['is_kfusion'])} "
            f"A_opt={_fmt(f['A_opt'])} B_opt={_fmt(f['B_opt'])} douglas={'holds' if f['douglas'] else 'fails'}"
        )
    return EXIT_PASS


# -- verify --------------------------------------------------------------------

# family requirements per check
REQUIRES: Dict[str, Tuple[str, ...]] = {
    "reconstruction": ("W",),
    "kdual": ("W", "V"),
    "canonical-dual": ("W",),
    "kframe": ("W",),
    "local": ("W",),
    "local-duals": ("W",),
    "kw": ("W",),
    "lemma-v": (),
    "multiplier": ("W", "V"),
    "factorization": ("W", "V"),
    "inverse": ("W", "V"),
    "lower-bound": ("W", "V"),
    "invertibility": ("W", "V"),
    "composition": ("W", "V", "Z", "X"),
    "onb-composition": ("W", "V", "H"),
}
CHECKS = tuple(REQUIRES) + ("all",)


class Line:
    """One printed verdict line of a verify run."""

    def __init__(self, name: str, kind: str, value: float, threshold: float, detail: str = ""):
        self.name, self.kind, self.value, self.threshold, self.detail = name, kind, float(value), float(threshold), detail
        if kind == "residual":
            self.passed = self.value <= self.threshold
        elif kind == "slack":
            self.passed = self.value >= -self.threshold
        elif kind == "positive":
            self.passed = self.value > self.threshold
        else:
            raise ValueError(kind)

    def as_dict(self):
        return {"name": self.name, "kind": self.kind, "value": self.value,
                "threshold": self.threshold, "passed": self.passed, "detail": self.detail}

    def __str__(self):
        rel = {"residual": "<=", "slack": ">= -", "positive": ">"}[self.kind]
        flag = "PASS" if self.passed else "FAIL"
        tail = f"  ({self.detail})" if self.detail else ""
        return f"{flag}  {self.name:<28} {self.value:.3e} {rel}{self.threshold:.1e}{tail}"


class _Ctx:
    def __init__(self, inst: Instance, tol: Tolerances, seed: int = 0):
        self.inst = inst
        self.tol = tol
        self.seed = seed
        self.K = RangedOperator.from_matrix(inst.K, tol)
        self._analysis: Dict[str, object] = {}

    def fam(self, name: str) -> WeightedFamily:
        return self.inst.families[name]

    def analysis(self, name: str = "W"):
        if name not in self._analysis:
            self._analysis[name] = fusion_analyze(self.fam(name), self.K, self.tol)
        return self._analysis[name]

    def symbol(self, N: int) -> np.ndarray:
        if self.inst.symbol is None:
            return np.ones(N)
        if self.inst.symbol.size != N:
            raise ValidationError(f"symbol has {self.inst.symbol.size} entries, families have {N} members")
        return self.inst.symbol

    def locals(self, W: WeightedFamily) -> VectorFamily:
        """The stored spanning vectors of each member act as its local frame."""
        return VectorFamily(tuple(S.vectors for S in W.subspaces))


def _chk_reconstruction(c: _Ctx) -> List[Line]:
    W, a = c.fam("W"), c.analysis("W")
    fs = test_battery(c.inst.dim, c.seed, 100)
    worst = max(reconstruct(W, c.K, a, fs[:, j])[1] for j in range(fs.shape[1]))
    return [Line("reconstruction", "residual", worst, c.tol.residual_rel, "100 seeded vectors")]


def _chk_kdual(c: _Ctx) -> List[Line]:
    r = verify_kdual_fusion(c.fam("W"), c.fam("V"), c.K, c.analysis("W"))
    return [Line("kdual", "residual", r.residual_sum, c.tol.residual_rel, "sum form"),
            Line("kdual-factored", "residual", r.residual_factored, c.tol.residual_rel, "psi-factored form")]


def _chk_canonical(c: _Ctx) -> List[Line]:
    W, a = c.fam("W"), c.analysis("W")
    Wt = canonical_kdual_fusion(W, c.K, a, c.tol)
    c.canonical = Wt
    r = verify_kdual_fusion(W, Wt, c.K, a)
    B = float(np.linalg.eigvalsh(Wt.frame_operator())[-1])
    return [Line("canonical-dual", "residual", max(r.residual_sum, r.residual_factored), c.tol.residual_rel),
            Line("canonical-dual-bessel", "residual", 0.0 if np.isfinite(B) else np.inf, 0.0, f"B = {B:.3e}")]


def _chk_kframe(c: _Ctx) -> List[Line]:
    W = c.fam("W")
    F = VectorFamily(tuple(S.vectors for S in W.subspaces), tuple(W.weights))
    a = kframe_analyze(F, c.K, c.tol)
    out = [Line("kframe-is-kframe", "positive", a.A_opt, 0.0, "weighted member vectors")]
    if not a.is_kframe:
        return out
    G = c.K.op @ adjoint(c.K.op)
    fs = test_battery(c.inst.dim, c.seed, 200)
    fs = fs / np.linalg.norm(fs, axis=0)
    q = np.real(np.einsum("ij,ij->j", fs.conj(), a.S_F @ fs))
    lower = float((q - a.A_opt * np.linalg.norm(adjoint(c.K.op) @ fs, axis=0) ** 2).min())
    upper = float((a.B_opt - q).min())
    orc = oracle_rayleigh_min(a.S_F, G, c.K.range_basis, 20_000, seed=c.seed)
    out += [Line("kframe-bounds", "slack", min(lower, upper), INEQ_SLACK),
            Line("kframe-oracle", "residual", abs(orc - a.A_opt) / a.A_opt, 1e-4, f"oracle {orc:.6g}")]
    return out


def _chk_local(c: _Ctx) -> List[Line]:
    W = c.fam("W")
    r = local_to_global(W, c.locals(W), c.K, c.tol)
    return [Line("local", "residual", 0.0 if r.equiv else 1.0, 0.0,
                 f"kframe={r.kframe.is_kframe} kfusion={r.fusion.is_kfusion}")]


def _chk_local_duals(c: _Ctx) -> List[Line]:
    W = c.fam("W")
    loc = c.locals(W)
    r = local_dual_identities(W, c.K, loc, canonical_local_duals(W, loc, c.tol), c.tol, seed=c.seed)
    return [Line("local-duals", "residual", max(r.res1, r.res2), c.tol.residual_rel),
            Line("local-duals-coincide", "residual", r.coincide, 1e-9)]


def _chk_kw(c: _Ctx) -> List[Line]:
    _, chk = map_family(None, c.fam("W"), c.K, "KW", c.tol)
    out = [Line("kw", "positive", chk.A_opt, 0.0, "image family KW")]
    if c.inst.T is not None:
        _, chk2 = map_family(c.inst.T, c.fam("W"), c.K, "TK", c.tol)
        out.append(Line("tk", "positive", chk2.A_opt, 0.0, "image family TW against TK"))
    return out


def _chk_lemma(c: _Ctx) -> List[Line]:
    T = c.inst.T if c.inst.T is not None else c.inst.K
    worst = 0.0
    for W in c.inst.families.values():
        for S in W.subspaces:
            worst = max(worst, lemma_v_residual(S, T, c.tol))
    return [Line("lemma-v", "residual", worst, 1e-10, "every member, T" if c.inst.T is not None else "every member, K")]


def _spec(c: _Ctx) -> MultiplierSpec:
    W, V = c.fam("W"), c.fam("V")
    return MultiplierSpec(c.symbol(len(W)), W, V, c.K)


def _chk_multiplier(c: _Ctx) -> List[Line]:
    mm = build_multiplier(_spec(c), c.analysis("W"), c.tol)
    return [Line("multiplier-norm-bound", "slack", mm.slack, INEQ_SLACK, f"|M| = {mm.norm:.3e}, bound {mm.bound:.3e}")]


def _chk_factorization(c: _Ctx) -> List[Line]:
    spec = MultiplierSpec(np.ones(len(c.fam("W"))), c.fam("W"), c.fam("V"), c.K)
    return [Line("factorization", "residual", factorization_check(spec, c.analysis("W"), c.tol), 1e-12)]


def _chk_inverse(c: _Ctx) -> List[Line]:
    M = build_multiplier(_spec(c), c.analysis("W"), c.tol).M
    out = []
    for side in ("right", "left"):
        r = k_side_inverse(M, c.K, side, c.tol)
        out.append(Line(f"inverse-{side}", "residual", r.residual, c.tol.residual_rel,
                        "exists" if r.exists else "no K-inverse"))
    return out


def _chk_lower_bound(c: _Ctx) -> List[Line]:
    r = kstar_lower_bound_check(c.fam("V"), c.fam("W"), c.K, c.analysis("W"), c.tol, seed=c.seed)
    return [Line("lower-bound", "slack", r.min_slack, INEQ_SLACK, f"predicted A = {r.predicted_A:.3e}"),
            Line("lower-bound-exact", "slack", r.exact_A - r.predicted_A, INEQ_SLACK, f"exact A = {r.exact_A:.3e}")]


def _chk_invertibility(c: _Ctx) -> List[Line]:
    r = invertibility_check(c.fam("V"), c.fam("W"), c.K, c.tol)
    detail = f"lhs {r.lhs:.3e}, rhs {r.rhs:.3e}"
    if not r.criterion_holds:
        raise PreconditionError(f"perturbation criterion does not hold ({detail}); nothing to conclude")
    return [Line("invertibility-sigma", "positive", r.sigma_min_restricted, 0.0, detail),
            Line("invertibility-neumann", "residual", r.neumann, 1.0 - 1e-12, "must stay below 1")]


def _chk_composition(c: _Ctx) -> List[Line]:
    if c.inst.L is None:
        raise UsageError("check composition needs the matrix L in the instance")
    L = RangedOperator.from_matrix(c.inst.L, c.tol)
    f = c.inst.families
    return [Line("composition", "residual", composition_check(f["W"], f["V"], f["Z"], f["X"], c.K, L, c.tol), 1e-9)]


def _chk_onb(c: _Ctx) -> List[Line]:
    f = c.inst.families
    return [Line("onb-composition", "residual", onb_composition_check(f["W"], f["V"], f["H"], c.K, c.tol), 1e-9)]


RUNNERS: Dict[str, Callable[[_Ctx], List[Line]]] = {
    "reconstruction": _chk_reconstruction,
    "kdual": _chk_kdual,
    "canonical-dual": _chk_canonical,
    "kframe": _chk_kframe,
    "local": _chk_local,
    "local-duals": _chk_local_duals,
    "kw": _chk_kw,
    "lemma-v": _chk_lemma,
    "multiplier": _chk_multiplier,
    "factorization": _chk_factorization,
    "inverse": _chk_inverse,
    "lower-bound": _chk_lower_bound,
    "invertibility": _chk_invertibility,
    "composition": _chk_composition,
    "onb-composition": _chk_onb,
}


def _missing(inst: Instance, check: str) -> List[str]:
    return [f for f in REQUIRES[check] if f not in inst.families]


def verify_instance(inst: Instance, check: str, tol: Tolerances, seed: int = 0):
    """Run one named check (or all applicable ones).

    Returns ``(lines, skipped, ctx)``.  A single named check propagates
    precondition errors; ``all`` records them as skipped.
    """
    ctx = _Ctx(inst, tol, seed)
    if check != "all":
        miss = _missing(inst, check)
        if miss:
            raise UsageError(f"check {check} needs families {list(REQUIRES[check])}; missing {miss}")
        return RUNNERS[check](ctx), [], ctx
    lines, skipped = [], []
    for name, fn in RUNNERS.items():
        miss = _missing(inst, name)
        if miss:
            skipped.append((name, f"missing families {miss}"))
            continue
        try:
            got = fn(ctx)
        except (PreconditionError, UsageError) as exc:
            skipped.append((name, str(exc)))
            continue
        if name == "kdual" and not all(l.passed for l in got):
            # a V that is not a K-dual is a property of the data, not a failed theorem
            skipped.append((name, f"V is not a K-dual of W (residual {got[0].value:.3e})"))
        else:
            lines.extend(got)
    return lines, skipped, ctx


def cmd_verify(args) -> int:
    base = default_tolerances()
    inst = load_instance(args.path, base)
    tol = inst.tol
    if args.tol is not None:
        tol = tol.with_residual(args.tol)
    lines, skipped, ctx = verify_instance(inst, args.check, tol, args.seed)
    ok = all(l.passed for l in lines)
    if args.write_dual:
        Wt = getattr(ctx, "canonical", None)
        if Wt is None:
            Wt = canonical_kdual_fusion(ctx.fam("W"), ctx.K, ctx.analysis("W"), tol)
        fams = dict(inst.families)
        fams["V"] = Wt
        out = Instance(dim=inst.dim, field="complex" if np.iscomplexobj(Wt.bases[0]) or inst.field == "complex" else "real",
                       K=inst.K, families=fams, L=inst.L, T=inst.T, symbol=inst.symbol, tol=inst.tol,
                       meta={**inst.meta, "derived": "canonical K-dual of W stored as V"})
        atomic_write(args.write_dual, dumps_instance(out))
    if args.json:
        print(json.dumps({
            "schema_version": SCHEMA_VERSION,
            "kind": "kfusion-verify",
            "check": args.check,
            "tolerances": {"rank_rel": tol.rank_rel, "residual_rel": tol.residual_rel},
            "pass": ok,
            "records": [l.as_dict() for l in lines],
            "skipped": [{"name": n, "reason": r} for n, r in skipped],
        }, indent=1))
    else:
        for l in lines:
            print(l)
        for n, r in skipped:
            print(f"SKIP  {n:<28} {r}")
    return EXIT_PASS if ok else EXIT_FAIL


# -- random --------------------------------------------------------------------


def cmd_random(args) -> int:
    if args.dim < 1:
        raise UsageError("--dim must be >= 1")
    if args.subspaces < 1:
        raise UsageError("--subspaces must be >= 1")
    rng = np.random.default_rng([args.seed, 0x5EED])
    n, N = args.dim, args.subspaces
    r = n if args.rank_k is None else args.rank_k
    if args.subspace_dims:
        dims = [int(d) for d in args.subspace_dims.split(",")]
    elif args.structure == "block_orthogonal":
        if N > n:
            raise UsageError(f"block_orthogonal needs --subspaces <= --dim ({N} > {n})")
        cuts = sorted(rng.choice(np.arange(1, n), size=N - 1, replace=False).tolist()) if N > 1 else []
        bounds = [0] + cuts + [n]
        dims = [b - a for a, b in zip(bounds, bounds[1:])]
    elif args.structure == "inside_pinv_range":
        dims = [max(1, -(-r // N))] * N if r else [0] * N
    else:
        dims = [max(1, -(-n // N))] * N
    field = "real" if args.real else "complex"
    inst = random_instance(args.seed, n, N, dims, r, args.structure, field, tol=default_tolerances())
    if args.symbol:
        inst = Instance(dim=inst.dim, field=inst.field, K=inst.K, families=inst.families, L=inst.L, T=inst.T,
                        symbol=rng.uniform(0.5, 2.0, size=N), tol=inst.tol, meta=inst.meta)
    text = dumps_instance(inst)
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_PASS


# -- suite ---------------------------------------------------------------------


def _dims(text: str) -> List[int]:
    try:
        if "-" in text and "," not in text:
            lo, hi = (int(t) for t in text.split("-"))
            return list(range(lo, hi + 1))
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'a-b' or 'a,b,c', got {text!r}") from None


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def cmd_suite(args) -> int:
    rep = run_suite(seed=args.seed, trials=args.trials, dims=args.dims, tol=default_tolerances(),
                    oracle_samples=args.oracle_samples)
    if args.json:
        text = json.dumps(rep.to_dict(), indent=1) + "\n"
        if args.out:
            atomic_write(args.out, text)
        else:
            sys.stdout.write(text)
    else:
        print(rep.format_text())
        if args.out:
            atomic_write(args.out, json.dumps(rep.to_dict(), indent=1) + "\n")
    return EXIT_PASS if rep.passed else EXIT_FAIL


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kfusion", description="K-fusion frame analysis and verification.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="bounds and verdicts for every family in an instance")
    a.add_argument("path")
    a.add_argument("--json", action="store_true", help="emit the machine-readable report")
    a.set_defaults(func=cmd_analyze)

    v = sub.add_parser("verify", help="run a named check on an instance")
    v.add_argument("path")
    v.add_argument("--check", choices=CHECKS, default="all")
    v.add_argument("--tol", type=float, default=None, help="residual tolerance for this run")
    v.add_argument("--seed", type=int, default=0, help="seed for test batteries")
    v.add_argument("--json", action="store_true")
    v.add_argument("--write-dual", metavar="PATH", help="write a copy of the instance with V = canonical K-dual of W")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("random", help="write a seeded random instance")
    r.add_argument("--dim", type=int, required=True)
    r.add_argument("--subspaces", type=int, required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--rank-k", type=int, default=None, help="rank of K (default: dim)")
    r.add_argument("--structure", choices=STRUCTURES, default="generic")
    r.add_argument("--subspace-dims", default=None, help="comma-separated member dimensions")
    r.add_argument("--real", action="store_true", help="real field instead of complex")
    r.add_argument("--symbol", action="store_true", help="attach a random positive symbol")
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_random)

    s = sub.add_parser("suite", help="run the seeded property suite")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trials", type=_positive, default=1)
    s.add_argument("--dims", type=_dims, default=list(range(2, 9)))
    s.add_argument("--oracle-samples", type=_positive, default=100_000)
    s.add_argument("--json", action="store_true")
    s.add_argument("--out", default=None, help="also write the JSON report here")
    s.set_defaults(func=cmd_suite)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_PASS
    try:
        return args.func(args)
    except PreconditionError as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except ValidationError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except DiagnosticError as exc:
        print(f"diagnostic failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
