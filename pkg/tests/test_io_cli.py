from __future__ import annotations

import json
import subprocess
import sys
from fractions import Fraction

import pytest

from helpers import pair_instance
from lllsample import InstanceError, load_bundled, parse_instance, serialize_instance
from lllsample.cli import main
from lllsample.io import (
    REPORT_HEADER,
    SAMPLES_HEADER,
    bundled_names,
    parse_graph_text,
    parse_instance_text,
    parse_rational,
    report_text,
    samples_text,
    to_jsonable,
)

PAIR_TEXT = """lll-instance 1
var x1 2 1/2 1/2
var x2 2 1/2 1/2
event a vbl x1 x2 forbid 1,1
"""


class TestInstanceFormat:
    def test_pair(self):
        assert load_bundled("pair") == pair_instance()
        assert parse_instance_text(PAIR_TEXT) == pair_instance()

    @pytest.mark.parametrize(
        "text,line,needle",
        [
            ("lll-instance 2\n", 1, "header"),
            (PAIR_TEXT.replace("1/2 1/2\nvar x2", "0 1\nvar x2"), 2, "positive"),
            (PAIR_TEXT + "event b vbl x1 x3 forbid 1,1\n", 5, "undeclared"),
            (PAIR_TEXT + "event b vbl x1 x2 forbid 1,2\n", 5, "domain"),
            (PAIR_TEXT + "event b vbl x1 x2 forbid 1\n", 5, "entries"),
            (PAIR_TEXT + "event a vbl x1 forbid 1\n", 5, "duplicate"),
            ("lll-instance 1\n# comment\nvar x 2 1/2 1/3\n", 3, "sum"),
            ("lll-instance 1\nvar x 2 1/2\n", 2, "weights"),
            ("lll-instance 1\nvar x 2 a/2 1/2\n", 2, "rational"),
            (PAIR_TEXT + "bogus\n", 5, "unknown"),
            (PAIR_TEXT + "gamma 3/2\n", 5, "gamma"),
        ],
    )
    def test_errors_carry_line_numbers(self, text, line, needle):
        with pytest.raises(InstanceError) as info:
            parse_instance_text(text, "t.instance")
        assert info.value.line == line and needle in str(info.value)
        assert str(info.value).startswith(f"t.instance:{line}: ")

    @pytest.mark.parametrize("name", bundled_names())
    def test_round_trip_fixpoint(self, name):
        inst = load_bundled(name)
        text = serialize_instance(inst)
        again = parse_instance_text(text)
        assert again == inst and serialize_instance(again) == text

    def test_gamma_and_network(self):
        inst = parse_instance_text(PAIR_TEXT + "gamma 3/4\nnode a\n")
        assert inst.gamma == Fraction(3, 4) and inst.network == (("a",), ())

    def test_missing_file(self, tmp_path):
        with pytest.raises(InstanceError):
            parse_instance(tmp_path / "nope.instance")

    def test_graph(self):
        net = parse_graph_text("lll-graph 1\nnode 1\nnode 2\nedge 1 2\n")
        assert net.adj["1"] == {"2"}


class TestReports:
    def test_rationals_are_lossless(self):
        doc = json.loads(report_text({"p": Fraction(2, 3), "x": 0.1, "t": {(0, 1): Fraction(1, 3)}}))
        assert doc["format"] == REPORT_HEADER
        assert parse_rational(doc["p"]) == Fraction(2, 3) and doc["t"] == {"01": "1/3"}

    def test_empty_report(self):
        assert json.loads(report_text({"runs": 0})) == {"format": REPORT_HEADER, "runs": 0}

    def test_samples(self):
        text = samples_text(["x1", "x2"], [(0, 1)] * 10)
        lines = text.splitlines()
        assert lines[0] == f"{SAMPLES_HEADER} x1 x2" and len(lines) == 11

    def test_unserializable(self):
        with pytest.raises(TypeError):
            to_jsonable(object())


def run_cli(*argv):
    return main(list(argv))


class TestCli:
    def test_exact(self, capsys):
        assert run_cli("exact", "--instance", "pair") == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines == ["x1=0 x2=0 1/3", "x1=0 x2=1 1/3", "x1=1 x2=0 1/3"]

    def test_unknown_flag_exits_2(self, capsys):
        assert run_cli("exact", "--instance", "pair", "--bogus") == 2
        assert run_cli("frobnicate") == 2

    def test_parse_error_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.instance"
        bad.write_text("lll-instance 1\nvar x 2 0 1\n")
        assert run_cli("exact", "--instance", str(bad)) == 2
        assert f"{bad}:2:" in capsys.readouterr().err

    def test_unsatisfiable_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "unsat.instance"
        bad.write_text("lll-instance 1\nvar x 2 1/2 1/2\nevent a vbl x forbid 0 1\n")
        assert run_cli("sample", "--instance", str(bad), "--out", str(tmp_path / "o")) == 2

    def test_sample_is_byte_identical(self, tmp_path, capsys):
        outs = []
        for k in range(2):
            out = tmp_path / f"s{k}.txt"
            assert run_cli("sample", "--instance", "path3", "--seed", "5", "--runs", "50", "--out", str(out)) == 0
            outs.append((out.read_bytes(), (tmp_path / f"s{k}.txt.json").read_bytes()))
        assert outs[0][0] == outs[1][0]
        a, b = (json.loads(r) for _, r in outs)
        assert a == b and a["runs"] == 50 and len(outs[0][0].splitlines()) == 51

    def test_sample_report_path(self, tmp_path, capsys):
        rep = tmp_path / "r.json"
        assert run_cli("sample", "--instance", "pair", "--runs", "3", "--out", str(tmp_path / "o"),
                       "--report", str(rep)) == 0
        doc = json.loads(rep.read_text())
        assert doc["exact"] == {"00": "1/3", "01": "1/3", "10": "1/3"}

    def test_verify_pipeline_suite(self, tmp_path, capsys):
        rep = tmp_path / "v.json"
        assert run_cli("verify", "--instance", "path3", "--suite", "pipeline",
                       "--report", str(rep)) == 0
        assert capsys.readouterr().out.startswith("PASS pipeline")
        assert json.loads(rep.read_text())["checks"][0]["passed"] is True

    def test_augment(self, capsys):
        assert run_cli("augment", "--instance", "chain-cex-6", "--region", "e1", "--eps", "1/2", "--gamma",
                       "9/10", "--delta", "1/4", "--ell", "3", "--eps0", "8") == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["rings"] == [["x3"], ["x4"], ["x5"]] and parse_rational(doc["weight"]) <= Fraction(1, 4)

    def test_simulate_lv(self, tmp_path, capsys):
        rep = tmp_path / "lv.json"
        assert run_cli("simulate-lv", "--builtin", "3-coloring", "--graph", "cycle-4", "--runs", "20",
                       "--report", str(rep)) == 0
        rows = capsys.readouterr().out.splitlines()
        assert len(rows) == 20 and all(len(r.split()) == 4 for r in rows)
        assert json.loads(rep.read_text())["runs"] == 20

    def test_bench(self, capsys):
        assert run_cli("bench", "--instance", "two-component", "--seeds", "20") == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["rounds"]["count"] == 20

    def test_console_script_module(self):
        res = subprocess.run([sys.executable, "-m", "lllsample.cli", "exact", "--instance", "path3"],
                             capture_output=True, text=True)
        assert res.returncode == 0 and len(res.stdout.splitlines()) == 5
