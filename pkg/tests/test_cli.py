import csv
import json

import pytest

from nakernel.cli import main, rows_to_csv
from nakernel.config import load_config
from nakernel.errors import ConfigError

SMALL = """
seed = 4
alpha = [1.0, 1.0]
rho = [1.0, 2.0]

[budget]
n_sigma = 32
n_eta = 8
n_steps = 20
T = 2.0

[dufresne]
mus = [2.0]
n_samples = 2000
extra_forms = []

[reflection]
n_paths = 4000
n_steps = 400
interval_queries = [[1.0, -2.0, 0.0], [2.0, -1.0, 1.0]]

[kernel]
h = 1.0
box = 6.0
n_eta = 16

[bounds]
n_fit = 40
n_holdout = 40
max_violation_rate = 0.1

[poisson]
points = [[0.0, 0.0, 0.5]]
direction = [0.0, 0.0, 1.0]
radii = [1.0, 2.0]
"""


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


def run(args, out):
    return main(list(args) + ["--out", str(out)])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_exponents_section8(tmp_path, cfg_file):
    assert run(["exponents", "--config", str(cfg_file)], tmp_path) == 0
    rows = read_csv(tmp_path / "exponents.csv")
    got = {(r["theorem"], r["region"], r["q"]): float(r["exponent"]) for r in rows}
    assert got[("newupper", "both", "")] == 1.0
    assert got[("newupper", "v_large", "")] == 1.0
    assert got[("Thpota", "n/a", "2.0")] == 1.0
    th = next(r for r in rows if r["theorem"] == "thCM")
    assert float(th["gamma_alpha"]) == 2.0 and float(th["rho0_rho"]) == 6.0
    rec = json.loads((tmp_path / "exponents.json").read_text())
    assert rec["command"] == "exponents" and rec["seed"] == 4 and rec["passed"]
    assert len(rec["config_hash"]) == 64 and rec["version"]


@pytest.mark.parametrize("command", ["verify-dufresne", "verify-reflection", "kernel",
                                     "verify-bounds", "poisson"])
def test_determinism_and_replay(tmp_path, cfg_file, command):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    code = run([command, "--config", str(cfg_file), "--workers", "1"], a)
    assert code in (0, 1)
    assert run([command, "--config", str(cfg_file), "--workers", "1"], b) == code
    payload = (a / f"{command}.csv").read_bytes()
    assert payload == (b / f"{command}.csv").read_bytes()
    # the JSON sidecar is itself a valid config
    assert run([command, "--config", str(a / f"{command}.json"), "--workers", "2"], c) == code
    assert (c / f"{command}.csv").read_bytes() == payload
    ra = json.loads((a / f"{command}.json").read_text())
    rc = json.loads((c / f"{command}.json").read_text())
    assert ra["config_hash"] == rc["config_hash"]


def test_seed_flag_overrides(tmp_path, cfg_file):
    run(["verify-dufresne", "--config", str(cfg_file), "--seed", "9"], tmp_path)
    rec = json.loads((tmp_path / "verify-dufresne.json").read_text())
    assert rec["seed"] == 9 and rec["config"]["seed"] == 9


def test_reflection_skips_straddling(tmp_path, cfg_file):
    run(["verify-reflection", "--config", str(cfg_file)], tmp_path)
    rows = read_csv(tmp_path / "verify-reflection.csv")
    skipped = [r for r in rows if r["status"].startswith("skipped")]
    assert len(skipped) == 1 and skipped[0]["a"] == "1.0"


def test_kernel_grid_columns(tmp_path, cfg_file):
    run(["kernel", "--config", str(cfg_file)], tmp_path)
    rows = read_csv(tmp_path / "kernel.csv")
    assert list(rows[0]) == ["m1", "m2", "v1", "value", "stderr"]
    assert len(rows) == 13 ** 3


def test_zero_samples_is_an_error(tmp_path, cfg_file, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(SMALL.replace("n_samples = 2000", "n_samples = 0"))
    assert run(["verify-dufresne", "--config", str(bad)], tmp_path) == 2
    assert "n_samples" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[budget]\nn_paths = 3\n")
    assert run(["exponents", "--config", str(bad)], tmp_path) == 2
    assert "budget.n_paths" in capsys.readouterr().err
    with pytest.raises(ConfigError):
        load_config(None, {"colour": "red"})


def test_poisson_rejects_bad_alpha(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("alpha = [1.0, -2.0]\n[group]\nH_o = [1.0, 1.0]\n")
    assert run(["poisson", "--config", str(bad)], tmp_path) == 2
    assert "xi_1" in capsys.readouterr().err


def test_fit_failure_is_reported(tmp_path):
    cfg = tmp_path / "fail.toml"
    cfg.write_text(SMALL.replace("max_violation_rate = 0.1", "max_violation_rate = 0.1\nc_max = 1e-30"))
    assert run(["verify-bounds", "--config", str(cfg)], tmp_path) == 1
    rows = read_csv(tmp_path / "verify-bounds.csv")
    assert all(r["status"].startswith("fit-failure") for r in rows)


def test_explicit_group(tmp_path):
    cfg = tmp_path / "chain.toml"
    cfg.write_text("""
rho = [1.0, 1.0]
[group]
preset = "none"
xi = [[0.0, 1.0], [1.0, 1.0], [2.0, 1.0]]
theta = [[1.0, 0.0]]
ad = [[[1, 0, 1.0], [2, 1, 1.0]]]
[exponents]
q = [2.0]
""")
    assert run(["exponents", "--config", str(cfg)], tmp_path) == 0


def test_csv_format():
    text = rows_to_csv([{"a": 1.5, "b": True}, {"a": 0.1, "c": "x,y"}])
    assert text == 'a,b,c\n1.5,true,\n0.1,,"x,y"\n'
