import json
import math
import subprocess
import sys

import pytest

from poissonmod import __version__
from poissonmod.cli import EXIT_CODES, Tolerances, field_text, main, run
from poissonmod.fixtures import FIXTURES, emit_fixtures, fixture
from poissonmod import expr as E

FIXTURE_NAMES = [
    "ex-basic-R4",
    "ex-basic-R2",
    "ex-2dim",
    "ex-leafR4",
    "ex-R3-action",
    "ex-sphere-R3",
    "ex-sphere-R3-shifted",
    "ex-ham-S1-R4",
    "ex-conormal-involution",
    "ex-rel-line",
]

# (fixture, subcommand, expected exit code)
MATRIX = [
    ("ex-basic-R2", "modular", 0),
    ("ex-basic-R2", "ham-witness", 4),
    ("ex-basic-R2", "path-integral", 0),
    ("ex-basic-R4", "check-map", 0),
    ("ex-basic-R4", "map-modular", 0),
    ("ex-basic-R4", "character", 0),
    ("ex-2dim", "map-modular", 0),
    ("ex-leafR4", "rel-modular", 0),
    ("ex-leafR4", "holonomy", 0),
    ("ex-R3-action", "modular", 0),
    ("ex-R3-action", "quotient", 0),
    ("ex-sphere-R3", "modular", 0),
    ("ex-sphere-R3", "ham-witness", 4),
    ("ex-sphere-R3-shifted", "ham-witness", 4),
    ("ex-ham-S1-R4", "quotient", 0),
    ("ex-ham-S1-R4", "moment-check", 0),
    ("ex-ham-S1-R4", "ham-quotient", 0),
    ("ex-conormal-involution", "rel-modular", 0),
    ("ex-conormal-involution", "holonomy", 0),
    ("ex-rel-line", "holonomy", 0),
]

# residuals gated by the symbolic tolerance; all others are gated by ode_tol
SYMBOLIC = {
    "schouten_pi_pi", "x_minus_xh", "poisson_map", "closedness", "compatibility", "poisson_submanifold",
    "structure_constants", "pi_invariance", "phi_invariance", "phi_poisson", "projectable", "related",
    "moment", "character_match",
}


def test_emit_fixtures(tmp_path):
    paths = emit_fixtures(tmp_path)
    assert len(paths) == 10
    assert sorted(p.name for p in tmp_path.iterdir()) == sorted(f"{n}.json" for n in FIXTURE_NAMES)
    for p in paths:
        data = json.loads(p.read_text(encoding="utf-8"))
        assert data == fixture(p.stem)


def test_emit_fixtures_command(tmp_path, capsys):
    assert main(["emit-fixtures", str(tmp_path)]) == 0
    assert len(capsys.readouterr().out.split()) == 10


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_fixture_passes_jacobi(name):
    rep, code, err = run("jacobi", fixture(name))
    assert err is None and code == 0 and rep.verdict == "pass"


@pytest.mark.parametrize("name,command,code", MATRIX)
def test_subcommand_matrix(name, command, code):
    rep, got, err = run(command, fixture(name))
    assert err is None and got == code
    again, _, _ = run(command, fixture(name))
    assert again.as_dict() == rep.as_dict()
    if rep.verdict == "pass":
        tol = Tolerances.from_manifest(fixture(name)["tolerances"])
        for key, value in rep.residuals.items():
            limit = tol.zero_tol if key in SYMBOLIC else tol.ode_tol
            assert value <= limit, (key, value)


def test_manifest_file_round_trip(tmp_path):
    (path,) = [p for p in emit_fixtures(tmp_path) if p.stem == "ex-basic-R2"]
    from_file, code, _ = run("modular", path)
    from_dict, _, _ = run("modular", fixture("ex-basic-R2"))
    assert code == 0 and from_file.as_dict() == from_dict.as_dict()


def test_modular_report_text():
    rep, _, _ = run("modular", fixture("ex-basic-R2"))
    assert rep.witness["modular_vf"] == "-∂b"
    assert rep.witness["vanishes"] == "no"
    rep, _, _ = run("modular", fixture("ex-R3-action"))
    assert rep.witness["modular_vf"] == "0"


def test_map_modular_reports():
    rep, _, _ = run("map-modular", fixture("ex-basic-R4"))
    assert rep.witness["map_modular_vf"] == "∂b"
    rep, _, _ = run("map-modular", fixture("ex-2dim"))
    assert rep.witness["map_modular_vf"] == "-∂u"


def test_holonomy_line_value():
    rep, code, _ = run("holonomy", fixture("ex-rel-line"))
    assert code == 0
    assert float(rep.witness["det_h"]) == pytest.approx(math.exp(-1), abs=1e-6)
    assert rep.residuals["identity"] < 1e-6


def test_holonomy_leaf_value():
    rep, _, _ = run("holonomy", fixture("ex-leafR4"))
    assert float(rep.witness["det_h"]) == pytest.approx(math.exp(-5 / 3), rel=1e-6)


def test_character_value():
    rep, _, _ = run("character", fixture("ex-basic-R4"))
    assert float(rep.witness["character"]) == pytest.approx(math.e ** 2, rel=1e-9)


def test_path_integral_endpoint():
    rep, _, _ = run("path-integral", fixture("ex-basic-R2"))
    assert rep.residuals["endpoint"] < 1e-8


def test_rel_modular_reports():
    rep, _, _ = run("rel-modular", fixture("ex-leafR4"))
    assert rep.witness["relative_modular_vf"] == "-∂y"
    assert rep.witness["tangent_to_N"] == "no" and rep.witness["conormal_abelian"] == "no"
    rep, _, _ = run("rel-modular", fixture("ex-conormal-involution"))
    assert rep.witness["conormal_abelian"] == "yes"


def test_quotient_reports():
    rep, _, _ = run("quotient", fixture("ex-R3-action"))
    assert rep.witness["density"] == "1"
    assert rep.witness["modular_vf"] == "-∂y" and rep.witness["quotient_modular_vf"] == "-∂b"


def test_moment_check_reports():
    rep, _, _ = run("moment-check", fixture("ex-ham-S1-R4"))
    assert rep.witness["theta0"] == '["0"]' and rep.witness["sign"] == "0"


def test_ham_witness_found():
    m = fixture("ex-basic-R2")
    m["vector_field"] = ["-2*a^2*b", "a*b^2"]  # hamiltonian field of a*b^2
    rep, code, _ = run("ham-witness", m)
    assert code == 0
    assert "hamiltonian" in rep.witness


def test_inconclusive_records_cap():
    rep, code, _ = run("ham-witness", fixture("ex-sphere-R3-shifted"), {"degree_cap": 2})
    assert code == EXIT_CODES["inconclusive"] == 4
    assert rep.verdict == "inconclusive" and rep.witness["no_witness_up_to_degree"] == "2"


def test_fail_exit_code():
    m = fixture("ex-basic-R4")
    m["map"]["components"] = ["y", "2*(z*w - x*y)"]
    rep, code, err = run("check-map", m)
    assert code == 1 and err is None and rep.verdict == "fail"
    assert set(json.loads(rep.witness["failure_point"])) <= {"x", "y", "z", "w"}


def test_jacobi_fail_exit_code():
    m = {"coordinates": ["x", "y", "z"], "poisson": [{"i": "x", "j": "y", "expr": "1"}, {"i": "y", "j": "z", "expr": "y"}]}
    rep, code, _ = run("jacobi", m)
    assert code == 1 and "failure_point" in rep.witness


@pytest.mark.parametrize(
    "mutate,field",
    [
        (lambda m: m["poisson"].append({"i": "x", "j": "q", "expr": "1"}), "poisson"),
        (lambda m: m.update(volume="x*"), "volume"),
        (lambda m: m.pop("coordinates"), "coordinates"),
        (lambda m: m["tolerances"].update(bogus=1), "tolerances.bogus"),
        (lambda m: m.pop("path"), "path"),
        (lambda m: m["path"].update(base=["t"]), "path.base"),
    ],
)
def test_input_errors_name_field(mutate, field):
    m = fixture("ex-leafR4")
    mutate(m)
    rep, code, err = run("holonomy", m)
    assert code == EXIT_CODES["input"] == 2
    assert field in err


def test_missing_manifest_file(tmp_path):
    _, code, err = run("jacobi", tmp_path / "absent.json")
    assert code == 2 and "--manifest" in err


def test_numerical_failure_exit_code():
    # a valid cotangent path on x < 0, integrating a field that involves log(x)
    m = {
        "coordinates": ["x", "y"],
        "poisson": [{"i": "x", "j": "y", "expr": "1"}],
        "path": {"base": ["-1 - t", "0"], "covector": ["0", "1"], "integrand": ["0", "log(x)"], "loop": False},
    }
    _, code, err = run("path-integral", m)
    assert code == EXIT_CODES["numerical"] == 3 and err.startswith("numerical failure")


def test_json_output_schema(capsys, tmp_path):
    (path,) = [p for p in emit_fixtures(tmp_path) if p.stem == "ex-basic-R2"]
    code = main(["modular", "--manifest", str(path), "--json", "--seed", "3"])
    data = json.loads(capsys.readouterr().out)
    assert code == 0
    assert set(data) == {"command", "verdict", "residuals", "witness", "tolerances", "seed", "version"}
    assert data["verdict"] in ("pass", "fail", "inconclusive")
    assert data["seed"] == 3 and data["tolerances"]["seed"] == 3
    assert data["version"] == __version__
    assert all(isinstance(v, float) for v in data["residuals"].values())
    assert all(isinstance(v, str) for v in data["witness"].values())


def test_human_output(capsys, tmp_path):
    (path,) = [p for p in emit_fixtures(tmp_path) if p.stem == "ex-rel-line"]
    assert main(["holonomy", "--manifest", str(path)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("holonomy: pass") and "det_h" in out


def test_console_entry_point(tmp_path):
    (path,) = [p for p in emit_fixtures(tmp_path) if p.stem == "ex-basic-R4"]
    proc = subprocess.run(
        [sys.executable, "-m", "poissonmod.cli", "check-map", "--manifest", str(path), "--json"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["verdict"] == "pass"


def test_field_text():
    names = ("x", "y", "z")
    x, z = E.var("x"), E.var("z")
    assert field_text([E.ZERO, E.ZERO, E.ZERO], names) == "0"
    assert field_text([E.ZERO, E.const(-1), E.ZERO], names) == "-∂y"
    assert field_text([E.ZERO, x, 1 + z], names) == "x*∂y + (1 + z)*∂z"
    assert field_text([E.ONE, -x, E.ZERO], names) == "∂x - x*∂y"


def test_fixture_tolerances_complete():
    for name in FIXTURE_NAMES:
        assert set(FIXTURES[name]["tolerances"]) == set(Tolerances().as_dict())
