import pytest

from mindloop.config import RunConfig, load_config, snapshot
from mindloop.errors import ConfigError


def test_defaults_validate():
    cfg = load_config()
    assert cfg.v3 == 128 and cfg.v4 == 32
    assert cfg.pfc_hidden == 512


def test_file_and_overrides(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(
        'seed = 7\nout_dir = "runs/x"\n\n'
        "[dims]\nv3 = 64\nv4 = 16\n\n"
        "[vision]\nsteps = 123\n\n"
        "[serve]\nport = 9000\n"
    )
    cfg = load_config(path, overrides={"seed": 9})
    assert cfg.seed == 9  # flag beats file
    assert cfg.v3 == 64 and cfg.v4 == 16
    assert cfg.vision_steps == 123
    assert cfg.port == 9000


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("[vision]\nstepz = 5\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_unknown_section_rejected(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("[visionary]\nsteps = 5\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_inconsistent_dims_rejected():
    with pytest.raises(ConfigError):
        load_config(overrides={"v3": 0})


def test_replay_range():
    with pytest.raises(ConfigError):
        load_config(overrides={"replay": 1.0})


def test_idx_paths_must_pair():
    with pytest.raises(ConfigError):
        load_config(overrides={"idx_images": "/nope.idx"})


def test_stage_syntax_validation(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(
        "[[pfc.stages]]\nname = \"bad\"\nsyntaxes = [1, 9]\nsteps = 10\n"
    )
    with pytest.raises(ConfigError):
        load_config(path)


def test_snapshot_round_trip(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(
        "[[pfc.stages]]\nname = \"move\"\nsyntaxes = [1, 2]\nsteps = 50\n"
        "[[pfc.stages]]\nname = \"rotate\"\nsyntaxes = [8]\nsteps = 20\ncriterion = 0.5\n"
    )
    cfg = load_config(path, overrides={"seed": 77})
    snap = tmp_path / "resolved.toml"
    snapshot(cfg, snap)
    back = load_config(snap)
    assert back == cfg


def test_missing_config_file():
    with pytest.raises(ConfigError):
        load_config("/does/not/exist.toml")
