import io as stdio
import json

import pytest

from relaxmulti import io
from relaxmulti.algebra import CommDiffAlgebra, make_holomorphic_algebra
from relaxmulti.cli import Config, run
from relaxmulti.multimap import multimap_difference
from relaxmulti.series import parse_series


def call(*argv):
    buf = stdio.StringIO()
    rc = run(list(argv), stdout=buf)
    return rc, buf.getvalue()


TRIVIAL = {"name": "R", "trivial": True}


def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestTrees:
    def test_parse(self):
        assert call("trees", "parse", "((**)*)") == (0, "((**)*)\nleaves: 3\n")

    def test_graft(self):
        rc, out = call("trees", "graft", "(**)", "(**)", "--at", "2")
        assert rc == 0 and out.startswith("(*(**))")

    def test_refinements(self):
        rc, out = call("trees", "refinements", "(***)", "--binary")
        assert rc == 0 and "count: 2" in out

    def test_extensions_json(self):
        rc, out = call("--format", "json", "trees", "extensions", "((**)(**))")
        assert rc == 0 and len(json.loads(out)["shapes"]) == 2

    def test_dot(self):
        rc, out = call("trees", "dot", "(**)", "--format", "dot")
        assert rc == 0 and out.startswith("digraph")

    def test_syntax_error_exits_2(self, capsys):
        rc, _ = call("trees", "parse", "((**)")
        assert rc == 2 and "offset" in capsys.readouterr().err

    def test_graft_position_out_of_range(self):
        assert call("trees", "graft", "(**)", "*", "--at", "5")[0] == 2


class TestHopfAndSeries:
    def test_act(self):
        assert call("hopf", "act", "--h", "D2", "--k", "x^3") == (0, "3*x^1\n")

    def test_check(self):
        rc, out = call("hopf", "check", "--max-degree", "4")
        assert rc == 0 and "FAIL" not in out

    def test_expand(self):
        rc, out = call("series", "expand", "(x-y)^-1", "--order", "x,y")
        assert rc == 0 and "x^-2*y + x^-1 + O(w>6)" in out

    def test_agreement(self):
        assert call("series", "agree", "(x-y)^-1", "(x-y)^-1", "--orders", "x,y;y,x")[0] == 0
        rc, out = call("series", "agree", "(x-y)^-1", "-(y-x)^-1 + x", "--orders", "x,y")
        assert rc == 1 and out.startswith("disagree")

    def test_act_on_series(self):
        assert call("series", "act", "(x-y)^-1", "--h", "D1", "--var", "x") == (0, "-(x-y)^-2\n")

    def test_bad_series_exits_2(self):
        assert call("series", "expand", "x ** 2", "--order", "x")[0] == 2

    def test_unknown_command_exits_2(self, capsys):
        with pytest.raises(SystemExit) as err:
            run(["frobnicate"])
        assert err.value.code == 2
        assert "tree grammar" in capsys.readouterr().err


class TestMulti:
    def test_check_pass_and_fail(self, tmp_path):
        good = {"tree": "(***)", "leaves": [TRIVIAL], "root": TRIVIAL, "leaf_invariant": [False] * 3,
                "table": [{"inputs": ["1", "1", "1"], "series": "(x1-x2)^-1*[0]"}]}
        bad = dict(good, tree="((**)*)", table=[{"inputs": ["1", "1", "1"], "series": "(x1-x3)^-1*[0]"}])
        assert call("multi", "check", "--input", write(tmp_path, "g.json", good))[0] == 0
        rc, out = call("multi", "check", "--input", write(tmp_path, "b.json", bad))
        assert rc == 1 and out.startswith("FAIL profile")

    def test_compose_writes_output(self, tmp_path):
        alg = make_holomorphic_algebra(CommDiffAlgebra.rationals())
        path = write(tmp_path, "f2.json", io.multimap_to_json(alg.f2))
        target = tmp_path / "c.json"
        rc, _ = call("multi", "compose", "--input", path, "--inner", path, "--at", "1", "--output", str(target))
        assert rc == 0
        doc = json.loads(target.read_text())
        assert doc["tree"] == "((**)*)" and doc["table"][0]["series"] == "[0]"

    def test_refine_and_invariance(self, tmp_path):
        alg = make_holomorphic_algebra(CommDiffAlgebra.rationals())
        path = write(tmp_path, "f2.json", io.multimap_to_json(alg.f2))
        assert call("multi", "invariance", "--input", path)[0] == 0
        rc, out = call("multi", "refine", "--input", path, "--to", "((**))")
        assert rc == 0 and json.loads(out)["tree"] == "((**))"

    def test_missing_file_exits_2(self, tmp_path):
        assert call("multi", "check", "--input", str(tmp_path / "nope.json"))[0] == 2


class TestAlgebra:
    def test_demo(self):
        rc, out = call("algebra", "demo", "--example", "q-u", "--max-leaves", "3")
        assert rc == 0 and "f2(u, u) = x1*x2*[0] + x1*[1] + x2*[1] + [2]" in out

    def test_ope(self):
        rc, out = call("algebra", "ope", "--a", "u", "--b", "u")
        assert rc == 0 and out.startswith("order 0:")

    def test_ope_unknown_label(self):
        assert call("algebra", "ope", "--a", "v", "--b", "u")[0] == 2

    def test_check_from_products(self, tmp_path):
        doc = {"module": TRIVIAL, "products": [{"a": "1", "b": "1", "value": {"1": 1}}]}
        rc, out = call("algebra", "check", "--input", write(tmp_path, "a.json", doc), "--max-leaves", "3")
        assert rc == 0 and "FAIL" not in out

    def test_check_reports_broken_f2(self, tmp_path):
        doc = {"module": TRIVIAL, "f2": [{"inputs": ["1", "1"], "series": "2*[0]"}]}
        rc, out = call("algebra", "check", "--input", write(tmp_path, "a.json", doc), "--max-leaves", "3")
        assert rc == 1 and "FAIL" in out


class TestVerifyAndConfig:
    def test_verify_is_deterministic(self):
        first = call("verify", "--suite", "ord", "--seed", "3")
        assert first[0] == 0 and first == call("--seed", "3", "verify", "--suite", "ord")
        assert first[1].endswith("verify: PASS (seed 3)\n")

    def test_verify_json(self):
        rc, out = call("--format", "json", "verify", "--suite", "hopf")
        doc = json.loads(out)
        assert rc == 0 and doc["passed"] and doc["suites"][0]["suite"] == "hopf"

    def test_environment_override(self, monkeypatch):
        monkeypatch.setenv("RELAXMULTI_SEED", "11")
        assert call("verify", "--suite", "ord")[1].endswith("(seed 11)\n")
        monkeypatch.setenv("RELAXMULTI_SEED", "eleven")
        assert call("verify", "--suite", "ord")[0] == 2

    def test_dot_only_for_trees(self):
        assert call("--format", "dot", "hopf", "act", "--h", "D1", "--k", "x")[0] == 2

    def test_config_rejects_negative_bounds(self):
        with pytest.raises(ValueError):
            Config(ceiling=-1)


class TestDocuments:
    def test_multimap_round_trip(self, qu):
        back = io.multimap_from_json(json.loads(io.dump(io.multimap_to_json(qu.f2))))
        assert multimap_difference(back, qu.f2) is None

    def test_module_round_trip(self):
        doc = {"name": "N", "basis": ["1", "e"], "action": {"1": [[0, 1], [0, 0]]}}
        m = io.module_from_json(doc)
        assert io.module_from_json(io.module_to_json(m)).act(1, 1) == {0: 1}

    def test_representatives_rows(self):
        doc = {"tree": "(**)", "leaves": [TRIVIAL], "root": TRIVIAL, "leaf_invariant": [False, False],
               "table": [{"inputs": ["1", "1"], "representatives": {"a": "(x1-x2)^-1", "b": "(x1-x2)^-1"}}]}
        m = io.multimap_from_json(doc)
        assert m((0, 0)).terms == parse_series("(x1-x2)^-1", ("x1", "x2")).terms
