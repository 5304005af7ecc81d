"""The shipped config presets stay parseable and the desk ones runnable."""

import glob
import json
import os

import pytest

from fedoptlab.cli import main
from fedoptlab.datagen import ensemble_from_dict

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def _presets(prefix):
    return sorted(glob.glob(os.path.join(CONFIG_DIR, f"{prefix}*.json")))


def test_all_presets_are_valid_json():
    paths = sorted(glob.glob(os.path.join(CONFIG_DIR, "*.json")))
    assert len(paths) >= 10
    for path in paths:
        with open(path) as fh:
            json.load(fh)


@pytest.mark.parametrize("path", _presets("generate_") + _presets("study_") + _presets("floors_"))
def test_ensemble_presets_validate(path):
    with open(path) as fh:
        doc = json.load(fh)
    ens = dict(doc["ensemble"])
    ens.setdefault("kappa", 1.0) if ens["kind"] == "conditioned_lsq" else None
    spec = ensemble_from_dict(ens)
    assert spec.m >= 1 and spec.d >= 1


def test_desk_presets_run_end_to_end(tmp_path):
    out = str(tmp_path / "out")
    gen = os.path.join(CONFIG_DIR, "generate_nonconvergence_desk.json")
    assert main(["generate", "--config", gen, "--out", out]) == 0

    solve = tmp_path / "solve.json"
    with open(os.path.join(CONFIG_DIR, "solve_fedsplit_example.json")) as fh:
        doc = json.load(fh)
    doc["problem"] = os.path.join(out, "problem.json")
    doc["algorithm"]["rounds"] = 40
    solve.write_text(json.dumps(doc))
    assert main(["solve", "--config", str(solve), "--out", out]) == 0

    verify = tmp_path / "verify.json"
    with open(os.path.join(CONFIG_DIR, "verify_example.json")) as fh:
        doc = json.load(fh)
    doc["problem"] = os.path.join(out, "problem.json")
    verify.write_text(json.dumps(doc))
    assert main(["verify", "--config", str(verify), "--out", out]) == 0

    floors = os.path.join(CONFIG_DIR, "floors_desk.json")
    assert main(["floors", "--config", floors, "--out", str(tmp_path / "fl"),
                 "--set", "rounds=60"]) == 0
