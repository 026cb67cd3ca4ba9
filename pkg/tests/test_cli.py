import json
import shutil
import time

import numpy as np
import pytest

from vrleak import store
from vrleak.cli import main
from vrleak.telemetry import parse_trace_csv


def files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def pop12(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--n", "12", "--seed", "3", "--out", str(root / "pop")]) == 0
    assert main(["attack", str(root / "pop"), "--out", str(root / "reports")]) == 0
    return root


@pytest.fixture(scope="module")
def pop1(tmp_path_factory):
    out = tmp_path_factory.mktemp("one") / "pop"
    assert main(["simulate", "--n", "1", "--seed", "5", "--out", str(out)]) == 0
    return out


def test_single_user_layout(pop1):
    got = sorted(files(pop1))
    assert got == ["manifest.json"] + [f"u0000/{f}" for f in sorted(store.SESSION_FILES)]
    manifest = json.loads((pop1 / "manifest.json").read_text())
    assert manifest["users"] == ["u0000"] and manifest["n"] == 1 and manifest["tier"] == "PrivilegedII"


def test_rerun_is_byte_identical(pop1, tmp_path):
    assert main(["simulate", "--n", "1", "--seed", "5", "--out", str(tmp_path / "again")]) == 0
    assert files(tmp_path / "again") == files(pop1)


def test_attack_single_session(pop1, tmp_path):
    out = tmp_path / "r.json"
    assert main(["attack", str(pop1 / "u0000"), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["tier"] == "PrivilegedII" and "height" in rep["attributes"]


def test_denied_attacks_exit_4(pop1, tmp_path):
    assert main(["attack", str(pop1 / "u0000"), "--tier", "NonPrivileged", "--out", str(tmp_path / "r.json")]) == 4
    rep = json.loads((tmp_path / "r.json").read_text())
    assert "ipd" not in rep["attributes"] and "refresh_band" in rep["attributes"]


def test_malformed_trace_exits_2(pop1, tmp_path, capsys):
    bad = tmp_path / "bad"
    shutil.copytree(pop1 / "u0000", bad)
    lines = (bad / "trace.csv").read_text().splitlines()
    lines[4] = "1,2,3"
    (bad / "trace.csv").write_text("\n".join(lines) + "\n")
    assert main(["attack", str(bad), "--out", str(tmp_path / "r.json")]) == 2
    assert "line 5" in capsys.readouterr().err


def test_missing_input_exits_2(tmp_path):
    assert main(["attack", str(tmp_path / "nope"), "--out", str(tmp_path / "r.json")]) == 2


def test_bad_config_exits_3(tmp_path):
    (tmp_path / "noise.json").write_text('{"pos_sigma": 0.1}')
    assert main(["simulate", "--n", "1", "--noise", str(tmp_path / "noise.json"), "--out", str(tmp_path / "p")]) == 3
    assert main(["simulate", "--n", "0", "--out", str(tmp_path / "p")]) == 3


def test_defend(pop1, tmp_path):
    src = pop1 / "u0000" / "trace.csv"
    out = tmp_path / "noisy.csv"
    assert main(["defend", str(src), "--epsilon", "1e9", "--out", str(out)]) == 0
    a, b = parse_trace_csv(src.read_bytes()), parse_trace_csv(out.read_bytes())
    assert np.abs(a.pos - b.pos).max() <= 1e-6
    assert main(["defend", str(src), "--epsilon", "-1", "--out", str(out)]) == 3
    (tmp_path / "b.json").write_text('{"x": [-2, 2], "y": [0, 2], "z": [-2, 2]}')
    assert main(["defend", str(src), "--epsilon", "2", "--bounds", str(tmp_path / "b.json"), "--out", str(out)]) == 0
    pos = parse_trace_csv(out.read_bytes()).pos
    assert pos[..., 1].min() >= 0 and pos[..., 1].max() <= 2


def test_evaluate_writes_json_and_markdown(pop12, tmp_path):
    out = tmp_path / "accuracy.json"
    assert main(["evaluate", str(pop12 / "pop"), str(pop12 / "reports"), "--out", str(out)]) == 0
    result = json.loads(out.read_text())
    assert result["n_users"] == 12
    rows = {(r["attribute"], r["criterion"]): r["accuracy"] for r in result["rows"]}
    assert rows[("Handedness", "exact")] >= 0.9
    assert out.with_suffix(".md").read_text().startswith("| Attribute |")


def test_evaluate_id_mismatch_exits_3(pop12, tmp_path):
    reps = tmp_path / "reps"
    shutil.copytree(pop12 / "reports", reps)
    (reps / "u0003.json").unlink()
    assert main(["evaluate", str(pop12 / "pop"), str(reps), "--out", str(tmp_path / "a.json")]) == 3


def test_fit_then_attack_with_models(pop12, tmp_path):
    models = tmp_path / "models"
    assert main(["fit", str(pop12 / "pop"), str(pop12 / "reports"), "--out", str(models)]) == 0
    assert sorted(p.name for p in models.iterdir()) == [
        "age.json", "disability.json", "ethnicity.json", "gender.json", "identity.json"]
    out = tmp_path / "r.json"
    assert main(["attack", str(pop12 / "pop" / "u0002"), "--models", str(models), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert {"gender", "age", "identity_match"} <= set(rep["attributes"])


@pytest.mark.slow
def test_fifty_user_simulation_budget(tmp_path):
    start = time.perf_counter()
    assert main(["simulate", "--n", "50", "--seed", "0", "--out", str(tmp_path / "pop")]) == 0
    elapsed = time.perf_counter() - start
    print(f"simulate --n 50: {elapsed:.1f} s")
    assert elapsed < 60
