import json
import os
import subprocess
import sys

import numpy as np
import pytest

from kfusion.cli import (
    EXIT_FAIL,
    EXIT_INVALID,
    EXIT_PASS,
    EXIT_PRECONDITION,
    dumps_instance,
    loads_instance,
    main,
)
from kfusion.errors import ValidationError
from kfusion.spaces import Instance, WeightedFamily, orthonormal_fusion_basis, random_instance


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj, encoding="utf-8")
    return str(p)


def identity_instance(n=3):
    return {
        "schema_version": 1,
        "dim": n,
        "field": "real",
        "K": np.eye(n).tolist(),
        "families": {"W": [{"basis": [list(e)], "weight": 1.0} for e in np.eye(n)]},
    }


class TestSerialization:
    @pytest.mark.parametrize("structure", ["generic", "k_invertible", "inside_pinv_range", "block_orthogonal"])
    @pytest.mark.parametrize("field", ["real", "complex"])
    def test_round_trip_bit_exact(self, structure, field):
        dims = [2, 2] if structure == "block_orthogonal" else [2, 3]
        inst = random_instance(5, 4, 2, dims, 2, structure, field)
        text = dumps_instance(inst)
        back = loads_instance(text)
        assert dumps_instance(back) == text
        np.testing.assert_array_equal(back.K, inst.K)
        for k, fam in inst.families.items():
            for a, b in zip(fam.subspaces, back.families[k].subspaces):
                np.testing.assert_array_equal(a.vectors, b.vectors)
                np.testing.assert_array_equal(a.basis, b.basis)

    def test_complex_pairs(self):
        inst = random_instance(1, 2, 1, [1], 1, "generic", "complex")
        data = json.loads(dumps_instance(inst))
        assert len(data["K"][0][0]) == 2

    def test_zero_weight_names_family_index(self):
        data = identity_instance()
        data["families"]["W"][1]["weight"] = 0
        with pytest.raises(ValidationError, match=r"families\.W\[1\]\.weight"):
            loads_instance(json.dumps(data))

    def test_syntax_error_has_line(self):
        with pytest.raises(ValidationError, match="line 2"):
            loads_instance('{\n "dim": ,\n}')

    @pytest.mark.parametrize("mutate", [
        lambda d: d.update(dim=0),
        lambda d: d.update(field="quaternion"),
        lambda d: d.update(schema_version=2),
        lambda d: d.update(K=[[1.0, 0.0]]),
        lambda d: d["K"][0].__setitem__(0, float("nan")) if False else d["K"][0].__setitem__(0, "x"),
        lambda d: d.pop("families"),
        lambda d: d.update(extra=1),
    ])
    def test_invalid_documents(self, mutate):
        data = identity_instance()
        mutate(data)
        with pytest.raises(ValidationError):
            loads_instance(json.dumps(data))


class TestAnalyze:
    def test_identity(self, tmp_path, capsys):
        p = write(tmp_path, "id.json", identity_instance())
        assert main(["analyze", p]) == EXIT_PASS
        out = capsys.readouterr().out
        assert "A_opt=1 " in out and "B_opt=1 " in out

    def test_json(self, tmp_path, capsys):
        p = write(tmp_path, "id.json", identity_instance())
        assert main(["analyze", p, "--json"]) == EXIT_PASS
        rep = json.loads(capsys.readouterr().out)
        assert rep["schema_version"] == 1
        assert rep["families"]["W"]["A_opt"] == pytest.approx(1.0)

    def test_family_orthogonal_to_coimage(self, tmp_path, capsys):
        data = identity_instance()
        data["K"] = np.diag([1.0, 1.0, 0.0]).tolist()
        data["families"]["V"] = [{"basis": [[0.0, 0.0, 1.0]], "weight": 1.0}]
        p = write(tmp_path, "neg.json", data)
        assert main(["analyze", p, "--json"]) == EXIT_PASS
        rep = json.loads(capsys.readouterr().out)
        assert rep["families"]["V"]["is_kfusion"] is False
        assert rep["families"]["W"]["is_kfusion"] is True

    def test_malformed_weight_exit_2(self, tmp_path, capsys):
        data = identity_instance()
        data["families"]["W"][2]["weight"] = 0
        p = write(tmp_path, "bad.json", data)
        assert main(["analyze", p]) == EXIT_INVALID
        assert "W[2]" in capsys.readouterr().err


class TestVerify:
    def test_reconstruction_identity(self, tmp_path, capsys):
        p = write(tmp_path, "id.json", identity_instance())
        assert main(["verify", p, "--check", "reconstruction"]) == EXIT_PASS
        assert "PASS  reconstruction" in capsys.readouterr().out

    def test_kdual_with_canonical_dual_file(self, tmp_path):
        src = str(tmp_path / "ki.json")
        dual = str(tmp_path / "dual.json")
        assert main(["random", "--dim", "5", "--subspaces", "3", "--seed", "4", "--structure", "k_invertible", "--out", src]) == 0
        assert main(["verify", src, "--check", "canonical-dual", "--write-dual", dual]) == EXIT_PASS
        assert main(["verify", dual, "--check", "kdual"]) == EXIT_PASS
        assert main(["verify", dual, "--check", "lower-bound"]) == EXIT_PASS

    def test_kdual_failure_exit_1(self, tmp_path):
        src = str(tmp_path / "g.json")
        main(["random", "--dim", "4", "--subspaces", "3", "--seed", "1", "--out", src])
        assert main(["verify", src, "--check", "kdual"]) == EXIT_FAIL

    def test_composition_non_block_orthogonal_exit_3(self, tmp_path, capsys):
        inst = random_instance(2, 4, 2, [2, 2], 4, "generic")
        W, V = inst.families["W"], inst.families["V"]
        bad = Instance(dim=4, field="complex", K=inst.K, L=np.eye(4),
                       families={"W": W.with_weights([1, 1]), "V": V.with_weights([1, 1]),
                                 "Z": V.with_weights([1, 1]), "X": W.with_weights([1, 1])})
        p = write(tmp_path, "bad.json", dumps_instance(bad))
        assert main(["verify", p, "--check", "composition"]) == EXIT_PRECONDITION
        assert "precondition" in capsys.readouterr().err

    def test_missing_family_is_usage_error(self, tmp_path, capsys):
        p = write(tmp_path, "id.json", identity_instance())
        assert main(["verify", p, "--check", "kdual"]) == EXIT_INVALID
        assert "'V'" in capsys.readouterr().err

    def test_block_orthogonal_all(self, tmp_path, capsys):
        src = str(tmp_path / "bo.json")
        assert main(["random", "--dim", "6", "--subspaces", "3", "--seed", "2", "--structure", "block_orthogonal", "--out", src]) == 0
        assert main(["verify", src, "--check", "composition"]) == EXIT_PASS
        assert main(["verify", src, "--check", "onb-composition"]) == EXIT_PASS
        assert main(["verify", src, "--check", "all", "--json"]) == EXIT_PASS
        capsys.readouterr()

    def test_tol_override(self, tmp_path, capsys):
        p = write(tmp_path, "id.json", identity_instance())
        assert main(["verify", p, "--check", "reconstruction", "--tol", "1e-3", "--json"]) == EXIT_PASS
        rep = json.loads(capsys.readouterr().out)
        assert rep["tolerances"]["residual_rel"] == 1e-3


class TestRandom:
    def test_deterministic_files(self, tmp_path):
        a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        for p in (a, b):
            assert main(["random", "--dim", "4", "--subspaces", "3", "--seed", "1", "--out", p]) == 0
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_zero_subspaces_usage_error(self):
        assert main(["random", "--dim", "2", "--subspaces", "0"]) == EXIT_INVALID

    def test_inside_pinv_range_passes_kw(self, tmp_path):
        p = str(tmp_path / "kw.json")
        assert main(["random", "--dim", "5", "--subspaces", "3", "--seed", "3", "--rank-k", "3",
                     "--structure", "inside_pinv_range", "--out", p]) == 0
        assert main(["verify", p, "--check", "kw"]) == EXIT_PASS

    def test_no_temp_files_left(self, tmp_path):
        p = str(tmp_path / "x.json")
        main(["random", "--dim", "3", "--subspaces", "2", "--out", p])
        assert os.listdir(tmp_path) == ["x.json"]


class TestSuite:
    def test_trials_zero(self):
        assert main(["suite", "--trials", "0"]) == EXIT_INVALID

    def test_json_report(self, capsys):
        assert main(["suite", "--seed", "7", "--trials", "1", "--dims", "3", "--json"]) == EXIT_PASS
        rep = json.loads(capsys.readouterr().out)
        assert rep["schema_version"] == 1 and rep["pass"] is True
        assert rep["summary"]["named_checks"] >= 16
        assert {"name", "seed", "dim", "kind", "value", "threshold", "passed"} <= set(rep["records"][0])

    def test_env_tolerance(self, tmp_path):
        p = write(tmp_path, "id.json", identity_instance())
        env = dict(os.environ, KFUSION_TOL_RESIDUAL="1e-6")
        out = subprocess.run([sys.executable, "-m", "kfusion", "verify", p, "--check", "reconstruction", "--json"],
                             capture_output=True, text=True, env=env)
        assert out.returncode == 0
        assert json.loads(out.stdout)["tolerances"]["residual_rel"] == 1e-6

    def test_bad_env_tolerance(self, tmp_path):
        p = write(tmp_path, "id.json", identity_instance())
        env = dict(os.environ, KFUSION_TOL_RESIDUAL="-1")
        out = subprocess.run([sys.executable, "-m", "kfusion", "verify", p], capture_output=True, text=True, env=env)
        assert out.returncode == EXIT_INVALID
