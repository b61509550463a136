import json
import math
import subprocess
import sys

import numpy as np
import pytest

from weaknoise.cli import dispatch


def _run(tmp_path, name, *argv):
    out = tmp_path / name
    code = dispatch([*argv, "--out", str(out)])
    return code, out


def _json(path):
    return json.loads(path.read_text())


def test_kramers_example(tmp_path, capsys):
    code, out = _run(tmp_path, "k", "kramers", "--builtin", "kramers_cubic", "--gamma", "1", "--omega", "1",
                     "--epsilon", "0.01")
    assert code == 0
    rec = _json(out / "kramers.json")
    assert rec["R"] == pytest.approx(0.618, abs=5e-3)
    assert rec["R_exact"] == pytest.approx(2.0 / (1.0 + math.sqrt(5.0)), rel=1e-14)
    man = _json(out / "manifest.json")
    assert man["subcommand"] == "kramers" and man["rng_seed"] is None
    assert set(man["outputs"]) == {"kramers.json", "kramers_density.csv", "manifest.json"}
    assert all((out / f).exists() for f in man["outputs"])


def test_kramers_zero_friction(tmp_path):
    code, out = _run(tmp_path, "k0", "kramers", "--builtin", "kramers_cubic", "--gamma", "0",
                     "--epsilon", "0.01")
    assert code == 0
    rec = _json(out / "kramers.json")
    assert rec["rate"] == 0.0 and rec["x1"] == pytest.approx(-1.5)


def test_analyze_example(tmp_path):
    code, out = _run(tmp_path, "a", "analyze", "--builtin", "linear_ou")
    assert code == 0
    recs = [json.loads(s) for s in (out / "equilibria.jsonl").read_text().splitlines()]
    assert len(recs) == 1 and recs[0]["kind"] == "attractor" and recs[0]["chi"] == 0.0


def test_validate_example(tmp_path):
    code, out = _run(tmp_path, "v", "validate", "--builtin", "maier_stein", "--alpha", "2",
                     "--epsilon", "0.05", "--chi-if-undetermined", "0")
    assert code == 0
    rep = _json(out / "validate.json")
    assert rep["passed"]
    assert rep["checks"]["cross_oracle_rel_phi_gap"]["value"] <= 1e-4
    assert rep["cross_oracle"]["n_matched"] >= 100


def test_undetermined_chi_exit_code(tmp_path, capsys):
    code, _ = _run(tmp_path, "u", "analyze", "--builtin", "maier_stein", "--alpha", "2")
    assert code == 3
    assert "--chi-if-undetermined" in capsys.readouterr().err


def test_usage_errors(tmp_path):
    assert _run(tmp_path, "e1", "kramers", "--builtin", "linear_ou", "--epsilon", "0.1")[0] == 2
    assert _run(tmp_path, "e2", "kramers", "--builtin", "kramers_cubic", "--epsilon", "-1")[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert _run(tmp_path, "e3", "analyze", "--model", str(bad))[0] == 2
    with pytest.raises(SystemExit) as exc:
        dispatch(["analyze"])
    assert exc.value.code == 2


def test_mc_byte_identical(tmp_path):
    argv = ("mc", "--builtin", "linear_ou", "--epsilon", "0.5", "--dt", "1e-3", "--n", "50", "--seed", "9",
            "--radius", "1", "--predicted-time", "2")
    outs = [_run(tmp_path, f"mc{k}", *argv) for k in range(2)]
    assert all(code == 0 for code, _ in outs)
    for f in ("mc.json", "mc_histogram.csv", "manifest.json"):
        assert (outs[0][1] / f).read_bytes() == (outs[1][1] / f).read_bytes()
    assert _json(outs[0][1] / "manifest.json")["rng_seed"] == 9


def test_quasipotential_and_boundary_exit(tmp_path):
    code, out = _run(tmp_path, "q", "quasipotential", "--builtin", "linear_ou", "--grid=-1.5,1.5,31,-1.5,1.5,31")
    assert code == 0
    rows = np.genfromtxt(out / "grid.csv", delimiter=",", names=True)
    ok = rows["reached"] == 1
    assert np.max(np.abs(rows["phi"][ok] - 0.5 * (rows["x"][ok] ** 2 + rows["y"][ok] ** 2))) <= 1e-6

    th = np.linspace(0.0, 2 * np.pi, 200, endpoint=False)
    csv = tmp_path / "circle.csv"
    csv.write_text("x,y\n" + "".join(f"{float(np.cos(t))!r},{float(np.sin(t))!r}\n" for t in th))
    code, out = _run(tmp_path, "x", "exit", "--builtin", "linear_ou", "--epsilon", "0.05", "--boundary", str(csv),
                     "--reference", "1,0", "--inside", "0,0", "--grid=-1.5,1.5,61,-1.5,1.5,61",
                     "--n-traj", "128")
    assert code == 0
    rep = _json(out / "exit.json")
    assert rep["regime"] == "attracted"
    # uniform flux eps w0 c 2 pi with w0 = exp(-1/(2 eps)) / (2 pi eps); alpha = 1 and beta = -1
    # on the unit circle, so c = (1/eps) / (1 + eps)
    assert rep["coefficients"]["beta0"] == pytest.approx(-1.0, abs=1e-6)
    assert rep["rate"] == pytest.approx(math.exp(-0.5 / 0.05) / 0.05 / 1.05, rel=1e-2)


def test_singular_separatrix_exit(tmp_path):
    code, out = _run(tmp_path, "s", "analyze", "--builtin", "kramers_cubic")
    sid = next(json.loads(s)["id"] for s in (out / "equilibria.jsonl").read_text().splitlines()
               if json.loads(s)["kind"] == "saddle")
    code, out = _run(tmp_path, "sx", "exit", "--builtin", "kramers_cubic", "--epsilon", "0.01",
                     "--separatrix-from-saddle", str(sid))
    assert code == 0
    code, kout = _run(tmp_path, "sk", "kramers", "--builtin", "kramers_cubic", "--epsilon", "0.01")
    assert _json(out / "exit.json")["rate"] == pytest.approx(_json(kout / "kramers.json")["rate"], rel=1e-8)


def test_console_script_version():
    res = subprocess.run([sys.executable, "-m", "weaknoise.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("weaknoise ")
