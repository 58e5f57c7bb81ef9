import csv
import json
import subprocess
import sys

import pytest

from saturon.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def tree_bytes(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def test_construct_writes_three_files(tmp_path):
    out = tmp_path / "b07"
    assert run("construct", "--k", "bernoulli:0.7", "--stages", 5, "--transitive", "--seed", 0,
               "--out", out) == 0
    assert sorted(p.name for p in out.iterdir()) == ["certificate.csv", "schedule.json", "sequence.txt"]
    rows = list(csv.DictReader(open(out / "certificate.csv")))
    assert float(rows[-1]["distance"]) <= 0.05
    assert all(r["holds"] == "1" for r in rows)
    sched = json.loads((out / "schedule.json").read_text())
    assert sched["transitive"] and len(sched["stages"]) == 5


def test_construct_needs_seed(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("construct", "--k", "bernoulli:0.7", "--out", tmp_path / "x")
    assert exc.value.code == 2


def test_construct_refuses_overwrite(tmp_path):
    args = ["construct", "--k", "bernoulli:0.4", "--stages", 2, "--seed", 1, "--out", tmp_path / "o"]
    assert run(*args) == 0
    assert run(*args) == 2
    assert run(*args, "--force") == 0


def test_construct_precondition_errors(tmp_path):
    assert run("construct", "--k", "gauss:1", "--seed", 0, "--out", tmp_path / "a") == 2
    assert run("construct", "--seed", 0, "--out", tmp_path / "b") == 2
    assert run("construct", "--k", "bernoulli:0.3", "--stages", 13, "--transitive", "--seed", 0,
               "--out", tmp_path / "c") == 2


def test_level_roundtrip(tmp_path, capsys):
    out = tmp_path / "l3"
    assert run("construct", "--level", 3, "--seed", 0, "--out", out, "--packed") == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["target"] == "BR_3\\BR_2"
    capsys.readouterr()
    assert run("classify", out / "sequence.bin", "--manifest", out / "manifest.json") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["level_target"] == manifest["target"]
    assert report["br"] and not report["qw"]


def test_classify_periodic_file(tmp_path, capsys):
    f = tmp_path / "alt.txt"
    f.write_text("01" * 2048 + "\n")
    assert run("classify", f, "--table") == 0
    captured = capsys.readouterr()
    report = json.loads(captured.out)
    assert len(report["Mx"]["clusters"]) == 1
    assert report["recurrent"] and report["qw"] and report["br"]
    assert "clusters M_x" in captured.err


def test_classify_empty_file(tmp_path):
    f = tmp_path / "empty.txt"
    f.write_text("")
    assert run("classify", f) == 2
    assert run("classify", tmp_path / "missing.txt") == 2


def test_unknown_demo(tmp_path, capsys):
    assert run("demo", "nope", "--out", tmp_path / "d") == 2
    err = capsys.readouterr().err
    for name in ("thmB-irregular", "thmC-levelset", "case-table-5.3", "lemma21-check"):
        assert name in err


def test_demo_orbit_bound(tmp_path):
    out = tmp_path / "l21"
    assert run("demo", "lemma21-check", "--out", out) == 0
    rows = list(csv.DictReader(open(out / "orbit_bound.csv")))
    assert len(rows) == 100 and all(r["pass"] == "1" for r in rows)
    assert run("demo", "lemma21-check", "--out", out) == 2


def test_demo_level_set(tmp_path):
    out = tmp_path / "ls"
    assert run("demo", "thmC-levelset", "--a", 0.6, "--out", out) == 0
    rows = list(csv.DictReader(open(out / "ratio_trace.csv")))
    assert abs(float(rows[-1]["ratio"]) - 0.6) <= 0.03
    assert run("demo", "thmC-levelset", "--a", 1.5, "--out", tmp_path / "bad") == 2


def test_demo_determinism(tmp_path):
    for name in ("thmB-irregular", "case-table-5.3"):
        a, b = tmp_path / (name + "-a"), tmp_path / (name + "-b")
        assert run("demo", name, "--out", a) == 0
        assert run("demo", name, "--out", b) == 0
        assert tree_bytes(a) == tree_bytes(b)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "saturon", "demo", "nope"], capture_output=True,
                          text=True, cwd=tmp_path)
    assert proc.returncode == 2 and "available" in proc.stderr
