from dataclasses import replace

import pytest

from fieldrobot import config
from fieldrobot.config import DropoutSection, MpcSection, ScenarioConfig
from fieldrobot.errors import ConfigError


def test_default_roundtrip():
    cfg = ScenarioConfig()
    assert config.loads(config.dumps(cfg)) == cfg


def test_modified_roundtrip(tmp_path):
    cfg = replace(ScenarioConfig(seed=9, duration=12.5),
                  dropout=DropoutSection(intervals=[[1.0, 2.0]], burst_start=4.0, burst_length=3),
                  mpc=MpcSection(n_c=15, input_reference="zero", use_estimated_traction=False))
    f = tmp_path / "s.toml"
    config.save(cfg, f)
    assert config.load(f) == cfg


def test_text_is_flat_dotted_keys():
    text = config.dumps(ScenarioConfig())
    lines = [ln for ln in text.splitlines() if ln]
    assert lines[0] == "schema_version = 1"
    assert all("[" not in ln.split("=")[0] for ln in lines)
    assert "mpc.omega_bound = 0.1" in lines


def test_partial_file_keeps_defaults():
    cfg = config.loads('seed = 4\npath.kind = "circle"\nmhe.n_e = 20\n')
    assert (cfg.seed, cfg.path.kind, cfg.mhe.n_e) == (4, "circle", 20)
    assert cfg.mpc.n_c == 20


def test_nested_table_syntax_also_accepted():
    cfg = config.loads("[mpc]\nn_c = 12\n")
    assert cfg.mpc.n_c == 12


@pytest.mark.parametrize("text", [
    "mpc.horizon = 3\n",
    "nosuch.key = 1\n",
    "seed = \"three\"\n",
    "mpc.n_c = 2.5\n",
    "schema_version = 2\n",
    "duration = -1.0\n",
    "mpc.omega_bound = 0\n",
    "path.kind = \"spiral\"\n",
    "traction.mu = 1.5\n",
    "counting.s_min = 1.0\n",
    "this is not toml\n",
])
def test_bad_files_rejected(text):
    with pytest.raises(ConfigError):
        config.loads(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        config.load(tmp_path / "nope.toml")


def test_derived_quantities():
    cfg = ScenarioConfig(duration=10.0)
    assert cfg.dt == pytest.approx(0.2)
    assert cfg.n_samples == 50
    assert cfg.with_seed(5).seed == 5
