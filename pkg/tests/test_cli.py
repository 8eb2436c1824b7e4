import json
import os

import pytest

from wbtree import cli
from wbtree.cli import (
    EXIT_CONTRACT_FAIL,
    EXIT_OK,
    EXIT_SPEC_ERROR,
    SpecInvalid,
    parse_spec,
    spec_hash,
)


def write_spec(tmp_path, obj, name="spec.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


RUIN_SPEC = {
    "model": "wb",
    "d": 3,
    "lambda": 2.0,
    "init": {"type": "origin"},
    "stop": {"extinction": True, "size_reaches": 20},
    "replicas": 400,
    "seed": 11,
    "observables": ["extinct", "n_events"],
}


def test_parse_spec_accepts_valid():
    spec = parse_spec(RUIN_SPEC)
    assert spec.model == "wb"
    assert spec.d == 3


@pytest.mark.parametrize("mutate", [
    {"model": "voter"},
    {"d": 2},
    {"lambda": 0.5},
    {"replicas": 0},
    {"observables": ["entropy"]},
    {"mystery_field": 1},
    {"init": {"type": "origin", "extra": True}},
    {"stop": {"t_mx": 1.0}},
])
def test_parse_spec_rejects_invalid(mutate):
    bad = dict(RUIN_SPEC)
    bad.update(mutate)
    with pytest.raises(SpecInvalid):
        parse_spec(bad)


def test_noncanonical_address_is_spec_error(tmp_path, capsys):
    bad = dict(RUIN_SPEC)
    bad["init"] = {"type": "set", "vertices": ["u2/0.1"]}
    code = cli.main(["simulate", "--spec", write_spec(tmp_path, bad),
                     "--out", str(tmp_path / "out")])
    assert code == EXIT_SPEC_ERROR
    assert "spec error" in capsys.readouterr().err


def test_missing_spec_file_is_spec_error(tmp_path):
    code = cli.main(["simulate", "--spec", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "out")])
    assert code == EXIT_SPEC_ERROR


def test_empty_init_extinct_at_zero(tmp_path):
    spec = dict(RUIN_SPEC)
    spec["init"] = {"type": "set", "vertices": []}
    spec["replicas"] = 1
    spec["observables"] = ["extinct", "final_time"]
    out = tmp_path / "out"
    code = cli.main(["simulate", "--spec", write_spec(tmp_path, spec),
                     "--out", str(out)])
    assert code == EXIT_OK
    lines = (out / "results.csv").read_text().strip().splitlines()
    rows = {line.split(",")[1]: line.split(",")[4] for line in lines[1:]}
    assert float(rows["extinct"]) == 1.0
    assert float(rows["final_time"]) == 0.0


def test_simulate_ruin_spec_within_tolerance(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["simulate", "--spec", write_spec(tmp_path, RUIN_SPEC),
                     "--out", str(out)])
    assert code == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    obs = summary["observables"]["extinct"]
    assert abs(obs["mean"] - 0.5) < 4.0 * max(obs["stderr"], 1e-9)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 11
    assert set(manifest["file_hashes"]) == {"events.csv", "results.csv",
                                            "summary.json"}


def test_identical_spec_seed_identical_results_hash(tmp_path):
    p = write_spec(tmp_path, RUIN_SPEC)
    for name in ("a", "b"):
        assert cli.main(["simulate", "--spec", p,
                         "--out", str(tmp_path / name)]) == EXIT_OK
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["results_hash"] == mb["results_hash"]
    assert ma["spec_sha256"] == mb["spec_sha256"]
    assert (tmp_path / "a" / "events.csv").read_bytes() == \
        (tmp_path / "b" / "events.csv").read_bytes()


def test_seed_changes_results_hash(tmp_path):
    p = write_spec(tmp_path, RUIN_SPEC)
    assert cli.main(["simulate", "--spec", p, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert cli.main(["simulate", "--spec", p, "--out", str(tmp_path / "b"),
                     "--seed", "12"]) == EXIT_OK
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["results_hash"] != mb["results_hash"]
    assert ma["spec_sha256"] != mb["spec_sha256"]


def test_worker_count_does_not_change_outputs(tmp_path):
    p = write_spec(tmp_path, RUIN_SPEC)
    assert cli.main(["simulate", "--spec", p, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert cli.main(["simulate", "--spec", p, "--out", str(tmp_path / "b"),
                     "--workers", "3"]) == EXIT_OK
    for name in ("events.csv", "results.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()


def test_env_seed_override(tmp_path, monkeypatch):
    p = write_spec(tmp_path, RUIN_SPEC)
    monkeypatch.setenv("WBTREE_SEED", "99")
    assert cli.main(["simulate", "--spec", p, "--out", str(tmp_path / "a")]) == EXIT_OK
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 99
    # The explicit flag wins over the environment.
    assert cli.main(["simulate", "--spec", p, "--out", str(tmp_path / "b"),
                     "--seed", "7"]) == EXIT_OK
    manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert manifest["seed"] == 7


def test_subcommand_model_mismatch(tmp_path):
    code = cli.main(["dual", "--spec", write_spec(tmp_path, RUIN_SPEC),
                     "--out", str(tmp_path / "out")])
    assert code == EXIT_SPEC_ERROR


def test_dual_subcommand(tmp_path):
    spec = {
        "model": "bcrw", "d": 3, "lambda": 2.0, "init": {"type": "origin"},
        "boundary": {"type": "minus", "region": {"type": "ball", "r": 3}},
        "stop": {"t_max": 0.5}, "replicas": 50, "seed": 2,
        "observables": ["final_size"],
    }
    out = tmp_path / "out"
    assert cli.main(["dual", "--spec", write_spec(tmp_path, spec),
                     "--out", str(out)]) == EXIT_OK
    assert (out / "results.csv").exists()


def test_graphical_check_subcommand(tmp_path):
    spec = {
        "model": "graphical", "d": 3, "lambda": 2.0, "lambda_max": 3.0,
        "radius": 1, "horizon": 1.0, "replicas": 100, "seed": 3,
    }
    out = tmp_path / "out"
    assert cli.main(["graphical-check", "--spec", write_spec(tmp_path, spec),
                     "--out", str(out)]) == EXIT_OK
    lines = (out / "results.csv").read_text().strip().splitlines()
    assert any("duality_failures" in line and ",0.0," in line for line in lines)


def test_scan_subcommand(tmp_path):
    spec = {
        "model": "wb", "d": 3, "lambda_grid": [1.5, 4.0],
        "proxy": {"type": "extinct_before_size", "size": 20},
        "replicas": 200, "seed": 5,
    }
    out = tmp_path / "out"
    assert cli.main(["scan", "--spec", write_spec(tmp_path, spec),
                     "--out", str(out)]) == EXIT_OK
    lines = (out / "results.csv").read_text().strip().splitlines()
    assert len(lines) == 3


def test_bounds_subcommand(capsys):
    assert cli.main(["bounds", "--d", "3"]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["lambda_l_upper"] == 6.0
    assert cli.main(["bounds", "--d", "2"]) == EXIT_SPEC_ERROR


def test_verify_unknown_suite_rejected():
    with pytest.raises(SystemExit):
        cli.main(["verify", "--suite", "bogus", "--out", "/tmp/x"])


def test_verify_exploratory_always_passes(tmp_path):
    code = cli.main(["verify", "--suite", "exploratory", "--seed", "1",
                     "--out", str(tmp_path / "out")])
    assert code == EXIT_OK
    assert (tmp_path / "out" / "exploratory.csv").exists()


def test_spec_hash_sensitivity():
    h1 = spec_hash(RUIN_SPEC, 1)
    assert h1 == spec_hash(dict(RUIN_SPEC), 1)
    assert h1 != spec_hash(RUIN_SPEC, 2)
    changed = dict(RUIN_SPEC)
    changed["lambda"] = 2.5
    assert h1 != spec_hash(changed, 1)
