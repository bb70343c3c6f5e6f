import json
import subprocess
import sys

import pytest

from gibbs_lab.cli import main
from gibbs_lab.harness import (
    CSV_COLUMNS, ENV_OUT_DIR, EXPERIMENTS, ConfigError, ExperimentConfig, execute, grid_modes,
    load_config_file, run, validate,
)


def test_registry_lists_every_experiment():
    assert set(EXPERIMENTS) == {
        "constants", "normalizer", "wick-moments", "char-functional-sweep", "hypercontractivity",
        "exp-moment", "chi2-tail", "tail", "dyadic-audit", "kdv-conservation", "kdv-invariance",
        "white-noise-coupling",
    }


def test_grid_modes_rule():
    assert grid_modes(0.1) == 2048
    assert grid_modes(1e-6) == 10000


@pytest.mark.parametrize("exp", ["char-functional-sweep", "exp-moment", "tail", "kdv-invariance"])
def test_cutoff_precondition_is_named(exp):
    with pytest.raises(ConfigError) as info:
        validate(ExperimentConfig(exp, seed=1, cutoff_K=0.4))
    assert info.value.precondition == "K > 1/2"


@pytest.mark.parametrize("kw, needle", [
    ({"seed": None}, "seed"),
    ({"seed": 1, "power_p": 5}, "p is 3 or 4"),
    ({"seed": 1, "emit": "xml"}, "emit"),
    ({"seed": 1, "beta_grid": (0.1, -1.0)}, "positive"),
])
def test_validation_errors(kw, needle):
    with pytest.raises(ConfigError, match=needle):
        validate(ExperimentConfig("exp-moment", **kw))


def test_specific_preconditions():
    with pytest.raises(ConfigError, match="beta > 0"):
        validate(ExperimentConfig("normalizer", seed=1, beta=-0.5))
    with pytest.raises(ConfigError, match="lambda >= 1"):
        validate(ExperimentConfig("tail", seed=1, lambdas=(0.5, 2.0)))
    with pytest.raises(ConfigError, match="M >= max"):
        validate(ExperimentConfig("dyadic-audit", seed=1, M=16))
    with pytest.raises(ConfigError, match="beta >= 1e-2"):
        validate(ExperimentConfig("kdv-invariance", seed=1, beta=1e-3))
    with pytest.raises(ConfigError, match="unknown keys"):
        ExperimentConfig.from_dict({"experiment": "tail", "seed": 1, "temperature": 3})


def test_defaults_are_filled():
    cfg = validate(ExperimentConfig("kdv-invariance", seed=3))
    assert (cfg.beta, cfg.n_modes, cfg.power_p, cfg.coupling, cfg.n) == (0.1, 8, 3, 6.0, 100_000)
    assert validate(ExperimentConfig("white-noise-coupling", seed=3)).beta_grid == (1e-2, 1e-4, 1e-6)


def test_config_round_trips_through_dict():
    cfg = validate(ExperimentConfig("tail", seed=9))
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_config_file_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nseed = 4\nbeta-grid = 0.1, 0.01\nn = 1e3\n")
    d = load_config_file(path)
    cfg = ExperimentConfig.from_dict({"experiment": "exp-moment", **d})
    assert cfg.seed == 4 and cfg.beta_grid == (0.1, 0.01) and cfg.n == 1000
    path.write_text("seed 4\n")
    with pytest.raises(ConfigError):
        load_config_file(path)


def test_outputs_are_deterministic(tmp_path):
    kw = dict(seed=11, n=300, beta_grid=(0.1, 0.01))
    a = run(ExperimentConfig("exp-moment", out_dir=str(tmp_path / "a"), **kw))
    b = run(ExperimentConfig("exp-moment", out_dir=str(tmp_path / "b"), **kw))
    assert a.paths[0].read_bytes() == b.paths[0].read_bytes()
    ja, jb = (json.loads(r.paths[1].read_text()) for r in (a, b))
    ja["config"].pop("out_dir"), jb["config"].pop("out_dir")
    assert ja == jb
    header = a.paths[0].read_text().splitlines()[0]
    assert header == ",".join(CSV_COLUMNS)


def test_emit_json_only_embeds_rows(tmp_path):
    r = run(ExperimentConfig("chi2-tail", seed=1, M=8, emit="json", out_dir=str(tmp_path)))
    assert [p.suffix for p in r.paths] == [".json"]
    doc = json.loads(r.paths[0].read_text())
    assert doc["passed"] and doc["rows"] and doc["config"]["M"] == 8


def test_env_var_sets_default_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(ENV_OUT_DIR, str(tmp_path / "env"))
    r = run(ExperimentConfig("constants", seed=1))
    assert all(p.parent == tmp_path / "env" for p in r.paths)


def test_cli_config_overrides_flags(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"M = 4\nout_dir = {tmp_path}\n")
    code = main(["chi2-tail", "--seed", "2", "--M", "64", "--config", str(cfg)])
    assert code == 0
    doc = json.loads((tmp_path / "chi2-tail.json").read_text())
    assert doc["config"]["M"] == 4


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["exp-moment", "--seed", "1", "--K", "0.4", "--out-dir", str(tmp_path)]) == 2
    assert "K > 1/2" in capsys.readouterr().err
    assert main(["constants", "--out-dir", str(tmp_path)]) == 2
    # the tail fit fails its criterion at tiny n: exit status 1
    assert main(["tail", "--seed", "1", "--n", "3000", "--lambdas", "1,2", "--n-modes", "256",
                 "--out-dir", str(tmp_path)]) in (0, 1)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gibbs_lab", "white-noise-coupling", "--seed", "3",
                           "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "PASS" in proc.stdout


def test_small_experiments_execute():
    for exp, kw in [("normalizer", {"n": 500, "n_modes": 256}),
                    ("kdv-conservation", {"n_modes": 32, "t_final": 0.01}),
                    ("dyadic-audit", {"n": 100, "n_modes": 512, "lambdas": (1e-3,)})]:
        r = execute(ExperimentConfig(exp, seed=1, **kw))
        assert r.rows and r.checks
