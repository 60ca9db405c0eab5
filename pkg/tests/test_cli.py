import json

import pytest

from envberry.cli import compare_records, main
from envberry.config import load_config

CAP = """
[model]
kind = "gaussian_bump"
width = 0.0
weight = 25.0
regime = "classical"

[loop]
kind = "cap"
theta0 = 1.0471975511965976
t_p = 300.0

[sweep]
tp_min = 100.0
tp_max = 1000.0
n_points = 8
"""

BUMP = """
[model]
kind = "gaussian_bump"
width = 0.2
weight = 25.0
regime = "classical"

[loop]
kind = "cap"
theta0 = 1.0471975511965976
t_p = 60.0

[oracle]
n_modes = 32
n_realizations = 300
n_bootstrap = 100
seed = 11

[sweep]
tp_min = 40.0
tp_max = 60.0
n_points = 2

[compare]
d_tol = 1e-4
"""


@pytest.fixture
def cap(tmp_path):
    p = tmp_path / "cap.toml"
    p.write_text(CAP)
    return p


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def test_constants(cap, tmp_path, capsys):
    assert main(["constants", "-c", str(cap)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["g_dis"] == pytest.approx(25.0)
    assert out["gamma2"] == pytest.approx(8e-4)
    assert out["validity"]["gaussian_kernel_ok"] is True


def test_sweep_family(cap, tmp_path):
    out = tmp_path / "runs.jsonl"
    assert main(["sweep", "-c", str(cap), "-o", str(out), "--methods", "redfield"]) == 0
    recs = read_jsonl(out)
    assert len(recs) == 8
    assert len({r["config_hash"] for r in recs}) == 1
    assert recs[0]["t_p"] == pytest.approx(100.0) and recs[-1]["t_p"] == pytest.approx(1000.0)
    for key in ("seed", "phi_total", "d_total", "method", "timestamp", "stderr_phi"):
        assert key in recs[0]


def test_rerun_is_reproducible(tmp_path):
    p = tmp_path / "bump.toml"
    p.write_text(BUMP)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for out in (a, b):
        assert main(["sweep", "-c", str(p), "-o", str(out),
                     "--methods", "redfield", "oracle"]) == 0

    def strip(path):
        return [json.dumps({k: v for k, v in r.items() if k != "timestamp"}, sort_keys=True)
                for r in read_jsonl(path)]

    assert strip(a) == strip(b)


def test_output_directory_from_environment(cap, tmp_path, monkeypatch):
    monkeypatch.setenv("ENVBERRY_OUTPUT_DIR", str(tmp_path / "outdir"))
    assert main(["evolve", "-c", str(cap), "-o", "run.json", "--trace", "trace.csv"]) == 0
    payload = json.loads((tmp_path / "outdir" / "run.json").read_text())
    assert payload["phi_total"] == pytest.approx(-3.1415823, abs=1e-6)
    header = (tmp_path / "outdir" / "trace.csv").read_text().splitlines()[0]
    assert header == "t,re_s,im_s,omega_z,omega_perp"


def test_kernel_csv(cap, tmp_path):
    out = tmp_path / "k.csv"
    assert main(["kernel", "-c", str(cap), "-o", str(out), "--method", "gaussian",
                 "--points", "5"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("tau,a_even_sym")
    assert len(lines) == 6


def test_unknown_key_is_an_error(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(CAP + "\n[evolve]\nkernel = \"gaussian\"\n")
    assert main(["constants", "-c", str(p)]) == 1
    assert "unknown key" in capsys.readouterr().err


def test_override_and_bad_override(cap, capsys):
    assert main(["constants", "-c", str(cap), "-s", "model.weight=30.0"]) == 0
    assert json.loads(capsys.readouterr().out)["g_dis"] == pytest.approx(30.0)
    assert main(["constants", "-c", str(cap), "-s", "model.colour=1"]) == 1


def test_validity_warning_exit_code(tmp_path, capsys):
    p = tmp_path / "weak.toml"
    p.write_text(CAP.replace("weight = 25.0", "weight = 0.5"))
    assert main(["constants", "-c", str(p)]) == 2
    assert "WARNING" in capsys.readouterr().err
    assert main(["constants", "-c", str(p), "--force"]) == 0


def test_decompose_from_file_alone(cap, tmp_path, capsys):
    out = tmp_path / "runs.jsonl"
    main(["sweep", "-c", str(cap), "-o", str(out)])
    capsys.readouterr()
    assert main(["decompose", "-i", str(out)]) == 0
    reports = json.loads(capsys.readouterr().out)["reports"]
    assert {r["method"] for r in reports} == {"redfield", "closed_form"}


def test_compare_three_methods_agree(tmp_path, capsys):
    p = tmp_path / "bump.toml"
    p.write_text(BUMP)
    out = tmp_path / "runs.jsonl"
    assert main(["sweep", "-c", str(p), "-o", str(out), "-s", "sweep.rates=\"kernel\"",
                 "--methods", "redfield", "closed_form", "oracle"]) == 0
    assert main(["compare", "-c", str(p), "-s", "sweep.rates=\"kernel\"", "-i", str(out)]) == 0
    text = capsys.readouterr().out
    assert text.count("PASS") == 6 and "FAIL" not in text


def test_compare_flags_disagreement():
    base = {"config_hash": "h", "t_p": 100.0, "stderr_phi": None, "stderr_d": None}
    recs = [dict(base, method="redfield", phi_total=3.0, d_total=0.01),
            dict(base, method="closed_form", phi_total=3.1, d_total=0.01)]
    rows = compare_records(recs, 1e-6, 1e-6, 3.0)
    assert [r["status"] for r in rows] == ["FAIL"]


def test_config_hash_ignores_period(cap):
    a = load_config(cap)
    b = load_config(cap, overrides=["loop.t_p=500.0"])
    c = load_config(cap, overrides=["loop.theta0=1.0"])
    assert a.config_hash() == b.config_hash() != c.config_hash()
