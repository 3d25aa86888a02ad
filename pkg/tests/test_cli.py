from __future__ import annotations

import json
import math
import subprocess
import sys
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obatakit.cli import main


def run(argv: list[str], capsys) -> tuple[int, str, str]:
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def model(tmp_path: Path, spec: dict, name: str = "m.json") -> str:
    p = tmp_path / name
    p.write_text(json.dumps(spec))
    return str(p)


def test_verify_de_sitter(models_dir, capsys) -> None:
    code, out, _ = run(["verify", "--model", str(models_dir / "de-sitter.json")], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["report"]["h_mean"] == pytest.approx(1.0, abs=1e-9)
    assert rep["tool"] == "obatakit" and rep["seed"] == 0 and "residual" in rep["tolerances"]


def test_verify_wrong_kappa_fails(models_dir, capsys) -> None:
    assert run(["verify", "--model", str(models_dir / "de-sitter.json"), "--kappa", "2"], capsys)[0] == 1


def test_verify_signature_mismatch(models_dir, capsys) -> None:
    code, _, err = run(["verify", "--model", str(models_dir / "broken.json"), "--omega", "x0", "--kappa", "0"], capsys)
    assert code == 2 and "inertia" in err


def test_verify_numerical_failure_reports_point(tmp_path, capsys) -> None:
    path = model(tmp_path, {"schema": 1, "type": "flat", "signature": [0, 2], "omega": "ln(x0)", "kappa": 0})
    code, out, _ = run(["verify", "--model", path], capsys)
    assert code == 3
    rep = json.loads(out)
    assert len(rep["point"]) == 2 and rep["error"]


def test_verify_missing_field(models_dir, capsys) -> None:
    code, _, err = run(["verify", "--model", str(models_dir / "sphere.json")], capsys)
    assert code == 2 and "omega" in err


def test_verify_byte_identical(models_dir, tmp_path, capsys) -> None:
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    m = str(models_dir / "de-sitter.json")
    run(["verify", "--model", m, "--omega-ambient", "1,0,-1", "--out", str(a)], capsys)
    run(["verify", "--model", m, "--omega-ambient", "1,0,-1", "--out", str(b), "--threads", "2"], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_geodesic_escape_footer(models_dir, capsys) -> None:
    code, out, err = run(["geodesic", "--model", str(models_dir / "exp-warp.json"), "--x0", "0,0,0", "--v0=-5/3,4/3,0", "--smax", "3"], capsys)
    assert code == 0
    footer = json.loads(err.strip().splitlines()[-1])
    assert footer["termination"] == "domain_escape"
    assert footer["s_star"] == pytest.approx(math.log(2), abs=1e-4)
    assert out.splitlines()[0] == "s,x0,x1,x2,v0,v1,v2,norm"


def test_geodesic_flat_budget(models_dir, capsys) -> None:
    code, _, err = run(["geodesic", "--model", str(models_dir / "flat.json"), "--x0", "0,0", "--v0", "1,2", "--smax", "2"], capsys)
    assert code == 0 and json.loads(err)["termination"] == "budget_reached"


def test_geodesic_sphere_ambient(models_dir, tmp_path, capsys) -> None:
    csv = tmp_path / "g.csv"
    argv = ["geodesic", "--model", str(models_dir / "sphere.json"), "--ambient", "--x0", "1,0,0", "--v0", "0,1,0",
            "--smax", repr(2 * math.pi), "--out", str(csv)]
    code, _, err = run(argv, capsys)
    assert code == 0
    assert json.loads(err)["final"] == pytest.approx([1, 0, 0], abs=1e-6)
    assert csv.read_text().startswith("s,x0,x1,x2")


def test_geodesic_first_integral_column(models_dir, capsys) -> None:
    argv = ["geodesic", "--model", str(models_dir / "de-sitter.json"), "--x0", "0.1,0.2", "--v0", "0.3,0.1",
            "--smax", "1", "--omega-ambient", "0,1,0", "--kappa", "1"]
    code, out, err = run(argv, capsys)
    assert code == 0 and out.splitlines()[0].endswith("first_integral")
    assert json.loads(err)["integral_drift"] <= 1e-7


def test_geodesic_bad_input(models_dir, capsys) -> None:
    m = str(models_dir / "flat.json")
    assert run(["geodesic", "--model", m, "--x0", "0,0,0", "--v0", "1,0", "--smax", "1"], capsys)[0] == 2
    assert run(["geodesic", "--model", m, "--x0", "a,b", "--v0", "1,0", "--smax", "1"], capsys)[0] == 2
    assert run(["geodesic", "--model", m, "--x0", "0,0", "--v0", "1,0", "--smax", "-1"], capsys)[0] == 2


@pytest.mark.parametrize(
    "kappa, h, omega_type, structure",
    [("1", "1", "depends", "constant-curvature"), ("1", "0", "timelike or null", "asymptotically-flat-split"), ("0", "-1", "timelike", "direct-product")],
)
def test_classify(kappa: str, h: str, omega_type: str, structure: str, capsys) -> None:
    code, out, _ = run(["classify", "--kappa", kappa, "--h", h], capsys)
    case = json.loads(out)["case"]
    assert code == 0 and case["omega_type"] == omega_type and case["structure"] == structure


def test_classify_rejects_nan(capsys) -> None:
    assert run(["classify", "--kappa", "nan", "--h", "1"], capsys)[0] == 2


def test_probe(models_dir, capsys) -> None:
    code, out, _ = run(["probe", "--model", str(models_dir / "exp-warp.json"), "--samples", "3", "--budget", "5"], capsys)
    rep = json.loads(out)["report"]
    assert code == 0 and rep["complete_fraction"] < 1 and rep["escapes"]
    code, out, _ = run(["probe", "--model", str(models_dir / "flat.json"), "--samples", "4"], capsys)
    assert code == 0 and json.loads(out)["report"]["complete_fraction"] == 1.0


def test_instance_round_trip(tmp_path, capsys) -> None:
    f = tmp_path / "f.json"
    assert run(["instance", "--case", "thm4.2", "--kappa", "1", "--h", "-1", "--out", str(f)], capsys)[0] == 0
    assert run(["verify", "--model", str(f)], capsys)[0] == 0


def test_instance_direct_product(capsys) -> None:
    code, out, _ = run(["instance", "--case", "thm4.5i", "--kappa", "0", "--h", "4"], capsys)
    spec = json.loads(out)
    assert code == 0 and spec["alpha"] == "2" and spec["omega"] == "2 * x0" and spec["base_sign"] == 1


def test_instance_curvature_mismatch(models_dir, capsys) -> None:
    code, _, err = run(["instance", "--case", "thm4.1a", "--kappa", "1", "--h", "1", "--fiber", str(models_dir / "sin-warp.json")], capsys)
    assert code == 2 and "curvature mismatch" in err


def test_foliation_de_sitter(models_dir, capsys) -> None:
    code, out, _ = run(["foliation", "--model", str(models_dir / "de-sitter.json"), "--ambient-system"], capsys)
    rep = json.loads(out)
    assert code == 0
    assert rep["rank"]["max_rank"] == 2 and rep["rank"]["full_rank_fraction"] >= 0.99
    assert rep["pair_constants"][0][0] == pytest.approx(-1.0, abs=1e-9)
    assert rep["span_curvature"]["deviation"] <= 1e-6


def test_foliation_flat(models_dir, capsys) -> None:
    code, out, _ = run(["foliation", "--model", str(models_dir / "flat.json"), "--omegas", "x0", "x1"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["bracket_residuals"] == [[0.0, 0.0], [0.0, 0.0]]
    assert rep["pair_constants"] == [[-1.0, 0.0], [0.0, 1.0]]


def test_foliation_sphere_single(models_dir, capsys) -> None:
    code, out, _ = run(["foliation", "--model", str(models_dir / "sphere.json"), "--omegas", "x1"], capsys)
    assert code == 0 and json.loads(out)["pair_constants"][0][0] == pytest.approx(1.0, abs=1e-9)


def test_module_entry_point(models_dir) -> None:
    res = subprocess.run([sys.executable, "-m", "obatakit", "classify", "--kappa", "0", "--h", "0"], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["case"]["omega_type"] == "null"


@settings(max_examples=40, deadline=None)
@given(st.text(max_size=40))
def test_garbage_model_files_exit_2(tmp_path_factory, text: str) -> None:
    p = tmp_path_factory.mktemp("g") / "m.json"
    p.write_text(text)
    assert main(["verify", "--model", str(p), "--omega", "x0", "--kappa", "0"]) == 2


@settings(max_examples=40, deadline=None)
@given(st.text(alphabet="x0123+-*/^() sinexp.", max_size=12))
def test_omega_flag_exit_codes(text: str) -> None:
    models = Path(__file__).resolve().parent.parent / "models"
    code = main(["verify", "--model", str(models / "flat.json"), f"--omega={text}", "--samples", "5"])
    assert code in (0, 1, 2, 3)
