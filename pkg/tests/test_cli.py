import json

import numpy as np
import pytest

from fraclab.cli import main, run
from fraclab.config import ConfigParseError, parse_config


def cfg_file(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def invoke(tmp_path, text, *extra):
    path = cfg_file(tmp_path, text)
    out = tmp_path / "out"
    code = main(["--config", str(path), "--out", str(out), *extra])
    return code, out


def read(out, name):
    return json.loads((out / name).read_text())


def test_parse_basic_and_comments(tmp_path):
    cfg = parse_config("# comment\ncommand = solve\n\nn = 16\ns = 0.25  # trailing\nlambda = 1.5\n", tmp_path)
    assert (cfg.command, cfg.n, cfg.s, cfg.lam) == ("solve", 16, 0.25, 1.5)
    cfg = parse_config("command = scan-antimax\neps_rel = 0.01 0.02\nmirror = false\n", tmp_path)
    assert cfg.eps_rel == [0.01, 0.02] and cfg.mirror is False


@pytest.mark.parametrize(
    "text,line,key",
    [
        ("command = solve\nlambda = 1\nbogus = 3\n", 3, "bogus"),
        ("command = solve\nlambda = 1\nlambda = 2\n", 3, "lambda"),
        ("command = solve\nn = ten\nlambda = 1\n", 2, "n"),
        ("command = solve\nlambda = 1\nthis line has no equals\n", 3, None),
        ("command = solve\ns = 1.5\nlambda = 1\n", 2, "s"),
        ("command = solve\n", None, "lambda"),
        ("command = blowup\ndeltas = 0.1 0.2\n", 2, "deltas"),
        ("command = eigen\nscalings = 1 2\n", 2, "scalings"),
        ("command = solve\nlambda = 1\nlambda_rel = 0.5\n", 3, "lambda_rel"),
        ("command = solve\np = 3\nmethod = linear\nlambda = 1\n", 3, "method"),
    ],
)
def test_parse_errors_carry_line_and_key(tmp_path, text, line, key):
    with pytest.raises(ConfigParseError) as info:
        parse_config(text, tmp_path)
    assert info.value.line == line
    if key is not None:
        assert info.value.key == key


def test_s_message(tmp_path):
    with pytest.raises(ConfigParseError, match=r"s must lie in \(0,1\)"):
        parse_config("command = eigen\ns = 0\n", tmp_path)


def test_missing_forcing_file(tmp_path):
    code, out = invoke(tmp_path, "command = solve\nlambda = 1\nforcing = custom-file:nope.csv\n")
    assert code == 3
    err = read(out, "error.json")
    assert err["kind"] == "config" and err["key"] == "forcing" and err["line"] == 3


def test_eigen_run(tmp_path):
    code, out = invoke(tmp_path, "command = eigen\nn = 16\neigen2 = true\n")
    assert code == 0
    summ = read(out, "summary.json")
    assert summ["exit_code"] == 0
    assert set(summ["artifacts"]) == {"eigen1.json", "eigen1.csv", "eigen2.json", "eigen2.csv"}
    for name in summ["artifacts"]:
        assert (out / name).is_file()
    e1, e2 = read(out, "eigen1.json"), read(out, "eigen2.json")
    assert e2["value"] > e1["value"] > 0
    lines = (out / "eigen1.csv").read_text().splitlines()
    assert lines[0] == "x,value" and len(lines) == 17
    assert not (out / "error.json").exists()


def test_solve_matches_dense(tmp_path):
    code, out = invoke(tmp_path, "command = solve\nn = 12\nlambda = 2\n")
    assert code == 0
    got = np.loadtxt(out / "solve.csv", delimiter=",", skiprows=1)[:, 1]
    from fraclab.grid import build_grid
    from fraclab.operator import build_weights, linear_matrix
    from fraclab.scalar import FracParams

    A = linear_matrix(build_weights(FracParams(0.5, 2.0), build_grid(0, 1, 12)))
    assert np.allclose(got, np.linalg.solve(A - 2 * np.eye(12), np.ones(12)), rtol=1e-10)
    rep = read(out, "solve.json")
    assert rep["converged"] and not rep["diverged"] and rep["method"] == "subcritical"


def test_resonant_solve_exits_one(tmp_path):
    code, out = invoke(tmp_path, "command = solve\nn = 16\np = 3\nlambda_rel = 1\nmethod = homotopy\n")
    assert code == 1
    assert read(out, "error.json")["kind"] == "solver"
    assert read(out, "solve.json")["diverged"] is True
    assert read(out, "summary.json")["exit_code"] == 1


def test_custom_forcing_falsifies_antimax(tmp_path):
    # weight mostly on the right end: far from lambda_1 the solution changes sign
    x = np.arange(1, 65) / 65
    lines = ["x,value"] + ["%.17g,%.17g" % (t, 0.05 + (t > 0.7)) for t in x]
    (tmp_path / "f.csv").write_text("\n".join(lines) + "\n")
    code, out = invoke(tmp_path, "command = scan-antimax\nn = 64\nforcing = custom-file:f.csv\neps_rel = 1.3\n")
    assert code == 2
    err = read(out, "error.json")
    assert err["kind"] == "falsified"
    bad = err["detail"][0]
    assert bad["row"] == 0 and bad["converged"] and bad["min_u"] < 0 < bad["max_u"]


def test_scan_antimax_with_scalings(tmp_path):
    code, out = invoke(tmp_path, "command = scan-antimax\nn = 24\np = 3\neps_rel = 0.01\nscalings = 0.5 2\n")
    assert code == 0
    summ = read(out, "antimax.json")
    assert summ["all_pure"] and summ["negative_set"]["positive"] and summ["positive_set"]["positive"]
    assert summ["lambda2_estimate"] > summ["lambda1"]


@pytest.mark.parametrize(
    "text,files",
    [
        ("command = verify-max\nn = 16\nlambdas_rel = 0 0.5 0.9\n", {"verify_max.csv", "verify_max.json"}),
        ("command = blowup\nn = 16\ndeltas_rel = 0.1 0.01\n", {"blowup.csv", "blowup.json"}),
        ("command = verify-antimax-linear\nn = 16\ndeltas_rel = 0.1 0.01\n",
         {"antimax_linear.csv", "antimax_linear.json"}),
        ("command = oracle\nn = 8\n", {"oracle.json"}),
    ],
)
def test_commands_succeed(tmp_path, text, files):
    code, out = invoke(tmp_path, text)
    assert code == 0, (out / "error.json").read_text() if (out / "error.json").exists() else ""
    summ = read(out, "summary.json")
    assert files <= set(summ["artifacts"])
    for name in summ["artifacts"]:
        text = (out / name).read_text()
        if name.endswith(".json"):
            json.loads(text)


def test_seed_and_threads_do_not_change_output(tmp_path):
    text = "command = scan-antimax\nn = 16\np = 3\neps_rel = 0.01 0.05\n"
    path = cfg_file(tmp_path, text)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--config", str(path), "--out", str(a), "--threads", "1"]) == 0
    assert main(["--config", str(path), "--out", str(b), "--threads", "3"]) == 0
    assert (a / "antimax.csv").read_bytes() == (b / "antimax.csv").read_bytes()
    assert (a / "antimax.json").read_bytes() == (b / "antimax.json").read_bytes()


def test_run_reports_domain_error(tmp_path):
    # lambda not below lambda_1 for verify-max is a configuration problem
    cfg = parse_config("command = verify-max\nn = 8\nlambdas_rel = 1.5\n", tmp_path)
    code = run(cfg, tmp_path / "o")
    assert code == 3
    assert read(tmp_path / "o", "error.json")["kind"] == "config"
    assert "error.json" in read(tmp_path / "o", "summary.json")["artifacts"]


def test_module_entry_point(tmp_path):
    import subprocess
    import sys

    path = cfg_file(tmp_path, "command = eigen\nn = 4\n")
    res = subprocess.run([sys.executable, "-m", "fraclab", "--config", str(path), "--out", str(tmp_path / "o")],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "o" / "eigen1.json").is_file()
