import json
import math

import numpy as np
import pytest
import yaml

from multiplex_cutoff.cli import main
from multiplex_cutoff.config import load_config
from multiplex_cutoff.errors import ConfigError

TWO_TYPE = {
    "N": 100_000,
    "types": [
        {"out": [2, 3, 1], "in": [2, 3, 1], "fraction": "1/2"},
        {"out": [2, 1, 2], "in": [2, 1, 2], "fraction": "1/2"},
    ],
}


def write_config(path, model=TWO_TYPE, **extra):
    data = {"seed": 1, "model": model, **extra}
    path.write_text(yaml.safe_dump(data))
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def read_rows(path):
    return [l for l in path.read_text().splitlines() if not l.startswith("#")]


# -- config ------------------------------------------------------------------

def test_hash_ignores_threads_and_out_dir(tmp_path):
    cfg = write_config(tmp_path / "c.yaml")
    a = load_config(cfg, {"threads": 1, "out_dir": "x"})
    b = load_config(cfg, {"threads": 8, "out_dir": "y"})
    c = load_config(cfg, {"seed": 2})
    assert a.config_hash == b.config_hash != c.config_hash


def test_model_may_live_in_a_separate_file(tmp_path):
    (tmp_path / "model.yaml").write_text(yaml.safe_dump(TWO_TYPE))
    cfg = load_config(write_config(tmp_path / "c.yaml", model="model.yaml"))
    assert cfg.model().N == 100_000


def test_missing_seed_rejected(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"model": TWO_TYPE}))
    with pytest.raises(ConfigError):
        load_config(path)


def test_unknown_section_key_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path / "c.yaml", simulate={"sorces": 3}))


# -- validate ----------------------------------------------------------------

def test_validate_two_type(tmp_path, capsys):
    code, out = run(capsys, "validate", write_config(tmp_path / "c.yaml"),
                    "--out-dir", str(tmp_path))
    report = json.loads(out.out)
    assert code == 0 and report["valid"] and report["polytope_dim"] == 1
    assert json.loads((tmp_path / "validate.json").read_text())["header"]["seed"] == 1


def test_validate_unbalanced(tmp_path, capsys):
    model = {"types": [{"out": [2, 1], "in": [1, 1], "count": 10},
                       {"out": [1, 1], "in": [1, 1], "count": 10}]}
    code, out = run(capsys, "validate", write_config(tmp_path / "c.yaml", model),
                    "--out-dir", str(tmp_path))
    assert code == 2
    assert json.loads(out.out)["violations"][0]["kind"] == "balance"


def test_validate_missing_seed_is_a_usage_error(tmp_path, capsys):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"model": TWO_TYPE}))
    with pytest.raises(SystemExit) as exc:
        main(["validate", str(path)])
    assert exc.value.code == 2
    assert "usage:" in capsys.readouterr().err


def test_non_integer_count_is_a_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["validate", write_config(tmp_path / "c.yaml"), "--N", "99999"])
    assert exc.value.code == 2


# -- optimize ----------------------------------------------------------------

def test_optimize_two_type(tmp_path, capsys):
    code, out = run(capsys, "optimize", write_config(tmp_path / "c.yaml"),
                    "--out-dir", str(tmp_path))
    r = json.loads(out.out)
    assert code == 0
    assert r["mu_star"] == pytest.approx(1.66747, abs=5e-6)
    assert r["t_star"] == pytest.approx(math.log(1e5) / r["mu_star"])


@pytest.mark.xfail(strict=True, reason="printed variance constant disagrees with the chain; "
                   "see notes/decisions.md")
def test_optimize_two_type_printed_variance(tmp_path, capsys):
    _, out = run(capsys, "optimize", write_config(tmp_path / "c.yaml"), "--out-dir", str(tmp_path))
    assert json.loads(out.out)["sigma2_star"] == pytest.approx(0.760754, rel=1e-4)


def test_optimize_all_ones(tmp_path, capsys):
    model = {"types": [{"out": [1, 1, 1, 1], "in": [1, 1, 1, 1], "count": 40}]}
    code, out = run(capsys, "optimize", write_config(tmp_path / "c.yaml", model),
                    "--out-dir", str(tmp_path))
    r = json.loads(out.out)
    assert code == 0
    assert np.allclose(r["optimizer"]["p_star"], 0.25, atol=1e-8)
    assert r["mu_star"] == pytest.approx(math.log(4), abs=1e-10)
    assert r["optimizer"]["certificate"]["variance_applicable"] is False


def test_optimize_is_stable(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml")
    run(capsys, "optimize", cfg, "--out-dir", str(tmp_path / "a"))
    run(capsys, "optimize", cfg, "--out-dir", str(tmp_path / "b"))
    assert (tmp_path / "a/optimize.json").read_bytes() == (tmp_path / "b/optimize.json").read_bytes()


def test_optimize_without_interior_point(tmp_path, capsys):
    model = {"types": [{"out": [1, 1], "in": [1, 1], "count": 1},
                       {"out": [1, 2], "in": [1, 2], "count": 1}]}
    code, out = run(capsys, "optimize", write_config(tmp_path / "c.yaml", model),
                    "--out-dir", str(tmp_path))
    assert code == 3


# -- simulate ----------------------------------------------------------------

def test_simulate_uniform_start(tmp_path, capsys):
    code, _ = run(capsys, "simulate", write_config(tmp_path / "c.yaml"), "--N", "2000",
                  "--uniform-start", "--out-dir", str(tmp_path))
    assert code == 0
    rows = read_rows(tmp_path / "simulate.csv")[1:]
    assert max(abs(float(r.split(",")[1])) for r in rows) <= 1e-12


def test_simulate_default_time_range_and_header(tmp_path, capsys):
    code, out = run(capsys, "simulate", write_config(tmp_path / "c.yaml"), "--N", "4000",
                    "--sources", "8", "--out-dir", str(tmp_path))
    r = json.loads(out.out)
    prof = r["profile"]
    lines = (tmp_path / "simulate.csv").read_text().splitlines()
    assert lines[0].startswith("# command=simulate config_hash=")
    assert lines[0].endswith("seed=1")
    assert len(read_rows(tmp_path / "simulate.csv")) - 1 == math.ceil(prof["t_p"] + 6 * prof["w_p"]) + 1
    assert r["monotone"]


def test_simulate_byte_identical(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml")
    for name, threads in (("a", "1"), ("b", "3")):
        run(capsys, "simulate", cfg, "--N", "4000", "--threads", threads,
            "--out-dir", str(tmp_path / name))
    for f in ("simulate.csv", "simulate.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


# -- envelope ----------------------------------------------------------------

def test_envelope_grid_one_is_the_optimizer_curve(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml")
    run(capsys, "simulate", cfg, "--N", "4000", "--out-dir", str(tmp_path))
    code, _ = run(capsys, "envelope", cfg, "--N", "4000", "--grid-size", "1",
                  "--out-dir", str(tmp_path))
    assert code == 0
    sim = [r.split(",")[1] for r in read_rows(tmp_path / "simulate.csv")[1:]]
    env = [r.split(",")[1] for r in read_rows(tmp_path / "envelope.csv")[1:]]
    assert env == sim[:len(env)]


def test_envelope_bad_grid_sizes(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml")
    assert run(capsys, "envelope", cfg, "--N", "2000", "--grid-size", "0")[0] == 2
    assert run(capsys, "envelope", cfg, "--N", "2000", "--grid-size", "50", "--grid-cap", "10")[0] == 4


# -- props -------------------------------------------------------------------

def test_props_quick_pass_and_report(tmp_path, capsys):
    code, out = run(capsys, "props", write_config(tmp_path / "c.yaml"), "--quick",
                    "--instances", "500", "--out-dir", str(tmp_path))
    r = json.loads(out.out)
    names = {p["name"] for p in r["properties"]}
    assert code == 0 and r["passed"]
    assert {"mu_max", "square_entropy", "sigma2_max"} <= names


def test_props_fault_injection(tmp_path, capsys):
    code, out = run(capsys, "props", write_config(tmp_path / "c.yaml"), "--quick",
                    "--instances", "500", "--inject-bad-sigma", "--out-dir", str(tmp_path))
    assert code == 5
    assert "variance_sandwich" in json.loads(out.out)["failed"]
    assert "variance_sandwich" in out.err
