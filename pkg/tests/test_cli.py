import csv
import json
import shutil
import subprocess

import pytest

from gfk.cli import main
from gfk.runner import git_blob_hash

FAST = """
M = 20000
N_steps = 20
dx = 0.02
dt_fd = 0.002
resamples = 2
"""


def _cfg(tmp_path, extra="", name="run.cfg", out="out"):
    p = tmp_path / name
    p.write_text(FAST + f"output = {tmp_path / out}\n" + extra)
    return p


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    text = capsys.readouterr().out
    assert "heat:" in text and "fisher-kpp:" in text and "violates H.3" in text


def test_solve_outputs_and_repeatability(tmp_path):
    cfg = _cfg(tmp_path)
    assert main(["solve", str(cfg)]) == 0
    out = tmp_path / "out"
    assert {p.name for p in out.iterdir()} == {"u_compare.csv", "fd_slices.csv", "manifest.json"}
    first = {n: (out / n).read_bytes() for n in ("u_compare.csv", "fd_slices.csv")}
    shutil.rmtree(out)
    assert main(["solve", str(cfg)]) == 0
    for n, data in first.items():
        assert (out / n).read_bytes() == data
    rows = list(csv.reader(open(out / "u_compare.csv")))
    assert rows[0] == ["t", "x", "u_bsde", "u_fd", "abs_err"]
    assert max(float(r[4]) for r in rows[1:]) < 0.1


def test_manifest_contents(tmp_path):
    cfg = _cfg(tmp_path)
    assert main(["solve", str(cfg)]) == 0
    out = tmp_path / "out"
    m = json.loads((out / "manifest.json").read_text())
    assert m["config"]["scenario"] == "heat" and m["config"]["M"] == 20000
    assert m["config"]["L_domain"] == 20.0 and m["config"]["theta"] == 0.5
    assert m["seeds"]["mc"] == 0 and m["exit_status"] == 0
    assert m["assumptions_violated"] is False
    assert "truncation_level" in m and "fd_cfl" in m
    for name, digest in m["outputs"].items():
        assert digest == git_blob_hash((out / name).read_bytes())


def test_blob_hash_matches_git(tmp_path):
    if shutil.which("git") is None:
        pytest.skip("git not installed")
    p = tmp_path / "blob"
    p.write_bytes(b"some bytes\n\x00 and more")
    got = subprocess.run(["git", "hash-object", str(p)], capture_output=True, text=True, check=True)
    assert git_blob_hash(p.read_bytes()) == got.stdout.strip()
    assert git_blob_hash(b"") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"


def test_verify_passes_and_fails(tmp_path, capsys):
    checks = "checks = validate_conditions, closed_form, representation_error, weak_form_residual\n"
    assert main(["verify", str(_cfg(tmp_path, checks))]) == 0
    text = capsys.readouterr().out
    assert "PASS closed_form_bsde" in text and "PASS closed_form_fd" in text
    rows = list(csv.reader(open(tmp_path / "out" / "verification.csv")))
    assert [r[0] for r in rows[1:]] == ["validate_conditions", "closed_form_bsde",
                                        "closed_form_fd", "representation_error",
                                        "weak_form_residual"]
    strict = _cfg(tmp_path, checks + "tol_representation = 1e-9\n", "strict.cfg", "strict")
    assert main(["verify", str(strict)]) == 1
    assert "FAIL representation_error" in capsys.readouterr().out


def test_fisher_kpp_warns(tmp_path, capsys):
    cfg = _cfg(tmp_path, "scenario = fisher-kpp\nchecks = validate_conditions\nfd = false\n")
    assert main(["verify", str(cfg)]) == 0
    text = capsys.readouterr().out
    assert "PASS validate_conditions" in text and "warning:" in text and "H.3" in text
    m = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert m["assumptions_violated"] is True and m["warnings"]


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("M = lots\n")
    assert main(["solve", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["solve", str(tmp_path / "missing.cfg")]) == 2
    assert main(["sweep-truncation", str(_cfg(tmp_path)), "--levels", "x"]) == 2


def test_stage_error_exit_3(tmp_path, capsys):
    cfg = _cfg(tmp_path, "checks = norm_equivalence\nsandwich_M = 10\n")
    assert main(["verify", str(cfg)]) == 3
    assert "stage 'norm_equivalence' failed: ValueError" in capsys.readouterr().err
    cfg = _cfg(tmp_path, "checks = representation_error\nfd = false\n", "nofd.cfg")
    assert main(["verify", str(cfg)]) == 3
    assert "stage 'representation_error' failed" in capsys.readouterr().err


def test_sweep(tmp_path):
    cfg = _cfg(tmp_path, "scenario = allen-cahn\n")
    assert main(["sweep-truncation", str(cfg), "--levels", "0.5", "1", "2", "5"]) == 0
    rows = list(csv.DictReader(open(tmp_path / "out" / "truncation_sweep.csv")))
    assert [float(r["n"]) for r in rows] == [0.5, 1, 2, 5]
    assert float(rows[0]["delta"]) > 0.1
    assert all(float(r["delta"]) < 1e-12 for r in rows[1:])
    assert all(r["within_bound"] == "true" for r in rows)


def test_two_dimensional_solve(tmp_path):
    cfg = _cfg(tmp_path, "d = 2\nn_quad = 41\n")
    assert main(["solve", str(cfg)]) == 0
    rows = list(csv.reader(open(tmp_path / "out" / "u_compare.csv")))
    assert rows[0] == ["t", "x1", "x2", "u_bsde", "u_fd", "abs_err"]
    assert all(r[4] == "nan" for r in rows[1:])
    assert not (tmp_path / "out" / "fd_slices.csv").exists()


def test_transform_run(tmp_path):
    checks = "checks = closed_form\n"
    direct = _cfg(tmp_path, "scenario = ou-linear\n" + checks, "a.cfg", "a")
    via = _cfg(tmp_path, "scenario = ou-linear\ntransform = true\n" + checks, "b.cfg", "b")
    assert main(["verify", str(direct)]) == 0
    assert main(["verify", str(via)]) == 0
