import json
import subprocess
import sys

import pytest

from maassdyn.cli import main, read_candidates


def run(tmp_path, *args):
    out = tmp_path / "out"
    code = main([*args, "--out", str(out)])
    return code, out


@pytest.mark.parametrize(
    "args, code",
    [
        (["analyze"], 0),
        (["analyze", "--group", "lambda17"], 3),
        (["analyze", "--group", "lambda17", "--word-bound", "2"], 4),
        (["analyze", "--group", "no-such-group"], 2),
        (["transfer", "--format", "pdf"], 2),
        (["scan", "--step", "0"], 2),
        (["scan", "--t0", "2", "--t1", "1"], 2),
        (["refine"], 2),
        (["verify", "--only", "x"], 2),
        (["frobnicate"], 2),
    ],
)
def test_exit_codes(tmp_path, args, code):
    assert run(tmp_path, *args)[0] == code


def test_analyze_writes_json_and_svg(tmp_path):
    code, out = run(tmp_path, "analyze")
    assert code == 0
    doc = json.loads((out / "analysis.json").read_text())
    assert doc["condition_A"]["holds"]
    assert doc["meta"]["tool"] == "maassdyn"
    assert (out / "domain.svg").read_text().lstrip().startswith("<")


@pytest.mark.parametrize(
    "args, name",
    [
        (["analyze"], "analysis.json"),
        (["transfer", "--format", "latex"], "transfer.tex"),
        (["transfer", "--group", "psl2z", "--format", "text-equations"], "transfer.txt"),
        (["transfer", "--group", "psl2z"], "transfer.json"),
    ],
)
def test_repeat_runs_are_byte_identical(tmp_path, args, name):
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main([*args, "--out", str(a)]) == 0
    assert main([*args, "--out", str(b)]) == 0
    assert (a / name).read_bytes() == (b / name).read_bytes()


def test_config_hash_tracks_options(tmp_path):
    main(["transfer", "--format", "latex", "--out", str(tmp_path / "a")])
    main(["transfer", "--format", "latex", "--order", "20", "--out", str(tmp_path / "b")])
    ha = (tmp_path / "a" / "transfer.tex").read_text().splitlines()[0]
    hb = (tmp_path / "b" / "transfer.tex").read_text().splitlines()[0]
    assert ha.startswith("% maassdyn") and ha != hb


def test_modular_text_equations(tmp_path):
    code, out = run(tmp_path, "transfer", "--group", "psl2z", "--format", "text-equations")
    assert code == 0
    text = (out / "transfer.txt").read_text()
    assert "f1 = tau_s(T) f1 + tau_s(T^2 S) f1" in text


def test_scan_refine_cocycle_pipeline(tmp_path):
    common = ["--group", "psl2z", "--order", "32"]
    code, out = run(tmp_path, "scan", *common, "--t0", "9.50", "--t1", "9.56", "--step", "0.01")
    assert code == 0
    csv_text = (out / "scan.csv").read_text()
    assert csv_text.startswith("# maassdyn")
    cands = read_candidates(str(out / "scan.csv"))
    assert any(abs(c - 9.5337) < 0.011 for c in cands)
    assert main(["refine", *common, "--candidates", str(out / "candidates.json"), "--out", str(out)]) == 0
    refined = json.loads((out / "refined.json").read_text())["refined"]
    assert abs(refined[0]["t"] - 9.533695261) < 1e-6
    assert main(["cocycle-verify", *common, "--candidates", str(out / "refined.json"), "--out", str(out)]) == 0
    res = json.loads((out / "cocycle.json").read_text())["results"][0]
    assert res["relations"]["passed"]


def test_refine_reports_total_failure(tmp_path):
    cands = tmp_path / "c.json"
    cands.write_text(json.dumps({"candidates": [9.9]}))
    code, out = run(tmp_path, "refine", "--group", "psl2z", "--order", "24", "--candidates", str(cands))
    assert code == 5
    assert json.loads((out / "refined.json").read_text())["failed"]


def test_console_script_version():
    r = subprocess.run([sys.executable, "-m", "maassdyn.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "maassdyn" in r.stdout
