import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from vanishpot.cli import main
from vanishpot.serialize import sha256_file

FAST = ["--grid.h=0.05"]


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, f"--output-dir={out}"])
    return code, out


def load(path):
    return json.loads(path.read_text())


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    ys = np.array([[float(r[k]) for k in ("y1", "y2", "y3")] for r in rows])
    vals = np.array([float(r["I"]) for r in rows])
    return ys, vals


def test_algebra_fermat(tmp_path):
    code, out = run(tmp_path, "algebra", "--germ=fermat:3", "--n=2")
    assert code == 0
    doc = load(out / "basis.json")
    assert doc["mu"] == 4
    assert doc["basis"] == ["x1*x2", "x1", "x2", "1"]
    assert doc["deformation"] == "x1^3 + x2^3 + lambda1*x1*x2 + lambda2*x1 + lambda3*x2 + lambda4"


@pytest.mark.parametrize("germ, mu", [("x1^2+x2^2", 1), ("x1^3+x2^2", 2)])
def test_algebra_germs(tmp_path, germ, mu):
    code, out = run(tmp_path, "algebra", f"--germ={germ}", "--n=2")
    assert code == 0
    assert load(out / "basis.json")["mu"] == mu


def test_algebra_bad_germ_is_config_error(tmp_path):
    code, out = run(tmp_path, "algebra", "--germ=x1^^2", "--n=2")
    assert code == 1
    assert load(out / "manifest.json")["exit_code"] == 1


def test_algebra_non_isolated_is_precondition_failure(tmp_path):
    code, _ = run(tmp_path, "algebra", "--germ=x1^2", "--n=2")
    assert code == 2


def test_unknown_key_and_command(tmp_path):
    assert run(tmp_path, "algebra", "--grid.nothing=1")[0] == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_config_file(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"germ": "fermat:4", "n": 2}))
    code, out = run(tmp_path, "algebra", f"--config={cfg}")
    assert code == 0
    assert load(out / "basis.json")["mu"] == 9


def test_reduce_fermat(tmp_path):
    code, a = run(tmp_path, "reduce", "--germ=fermat:3", "--n=2", "--reduce.form=x1^5", name="a")
    assert code == 0
    code, b = run(tmp_path, "reduce", "--germ=fermat:3", "--n=2", "--reduce.form=3*x1^2*x2^3", name="b")
    assert code == 0
    da, db = load(a / "reduction.json"), load(b / "reduction.json")
    assert da["normal_form"] == db["normal_form"]
    assert len(da["certificates"]) == 4
    assert all(c["full_rank"] for c in da["certificates"])


def test_reduce_box_monomial_is_fixed(tmp_path):
    code, out = run(tmp_path, "reduce", "--germ=fermat:3", "--n=2", "--reduce.form=x1*x2")
    assert code == 0
    nf = load(out / "reduction.json")["normal_form"]
    assert nf == {"x1*x2": "1"}
    assert load(out / "reduction.json")["chain_length"] == 0


def test_reduce_zero_lambda_mu(tmp_path):
    code, _ = run(tmp_path, "reduce", "--germ=fermat:3", "--n=2", "--lambda=[0,0,0,0]")
    assert code == 2


def test_reduce_needs_fermat(tmp_path):
    code, _ = run(tmp_path, "reduce", "--germ=x1^3+x2^2", "--n=2")
    assert code == 1


def test_levelset_morse(tmp_path):
    code, out = run(tmp_path, "levelset", *FAST)
    assert code == 0
    doc = load(out / "levelset.json")
    assert doc["components"] == 1 and doc["verdict"] == "regular"
    assert (out / "mesh.obj").read_text().startswith("# level set mesh")


def test_levelset_empty(tmp_path):
    code, out = run(tmp_path, "levelset", "--lambda=[1]", *FAST)
    assert code == 2


def test_potential_ball_law(tmp_path):
    code, out = run(tmp_path, "potential")
    assert code == 0
    ys, vals = read_csv(out / "potential.csv")
    prod = vals * np.linalg.norm(ys, axis=1)
    assert (prod.max() - prod.min()) / prod.mean() < 0.01
    assert prod.mean() == pytest.approx(4 * math.pi / 3, rel=0.01)
    assert load(out / "moments.json")["order"] >= 1
    assert (out / "surface_potential.csv").exists()


def test_potential_zero_density(tmp_path):
    code, out = run(tmp_path, "potential", "--psi=0", *FAST)
    assert code == 0
    _, vals = read_csv(out / "potential.csv")
    assert not np.any(vals)


def test_potential_shell(tmp_path):
    code, out = run(tmp_path, "potential", "--germ=shell", "--eval.sphere_radius=8")
    assert code == 0
    ys, vals = read_csv(out / "potential.csv")
    expected = 4 * math.pi / 3 * 7 / np.linalg.norm(ys, axis=1)
    assert np.max(np.abs(vals - expected) / expected) < 0.01


def test_potential_requires_three_dimensions(tmp_path):
    code, _ = run(tmp_path, "potential", "--n=2", "--germ=x1^2+x2^2")
    assert code == 1


def test_jacobian_morse(tmp_path):
    code, out = run(tmp_path, "jacobian", *FAST)
    assert code == 0
    cert = load(out / "certificate.json")
    assert cert["verdict"] and cert["rank"] == 1
    J = load(out / "jacobian.json")
    assert len(J["rows"]) == len(J["entries"])


def test_jacobian_zero_density_verdict_false(tmp_path):
    code, out = run(tmp_path, "jacobian", "--psi=0", *FAST)
    assert code == 2
    assert not load(out / "certificate.json")["verdict"]


def test_lambda_length_checked(tmp_path):
    code, _ = run(tmp_path, "levelset", "--lambda=[-1, 2]", *FAST)
    assert code == 1


def test_recover_morse_exact(tmp_path):
    code, out = run(tmp_path, "recover", "--recover.model=exact", "--recover.perturbation=0.2")
    assert code == 0
    doc = load(out / "recovery.json")
    assert doc["converged"] and doc["error"] < 1e-6


def test_verify_morse(tmp_path):
    code, out = run(tmp_path, "verify", *FAST)
    assert code == 0
    assert load(out / "certificate.json")["verdict"]
    sep = load(out / "separation.json")
    assert sep["all_positive"] and len(sep["pairs"]) == 10 and sep["seed"] == 0
    manifest = load(out / "manifest.json")
    assert {f["file"] for f in manifest["files"]} == {"certificate.json", "separation.json"}
    for f in manifest["files"]:
        assert f["sha256"] == sha256_file(out / f["file"])


def test_verify_empty_domain(tmp_path):
    code, out = run(tmp_path, "verify", "--lambda=[1]", *FAST)
    assert code == 2
    assert load(out / "certificate.json")["reason"] == "empty domain"


def test_verify_deterministic(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    _, a = run(tmp_path, "verify", *FAST, name="a")
    _, b = run(tmp_path, "verify", *FAST, name="b")
    for name in ("certificate.json", "separation.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ma, mb = load(a / "manifest.json"), load(b / "manifest.json")
    assert ma["files"] == mb["files"]
    assert ma["created"] == mb["created"] == "2023-11-14T22:13:20+00:00"


def test_console_script(tmp_path):
    out = tmp_path / "cli"
    proc = subprocess.run(
        [sys.executable, "-m", "vanishpot.cli", "algebra", "--germ=fermat:2", "--n=3", f"--output-dir={out}"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert load(out / "basis.json")["mu"] == 1
