import pytest
from hypothesis import given
from hypothesis import strategies as st

from casbench.config import SCHEMA, ConfigError, env_name, load_config, read_config_file, resolve_settings

# three distinct valid raw values per key, as (file, env, flag)
SAMPLES = {
    str: ("a", "b", "c"),
    int: (3, "4", 5),
    float: (1.5, "2.5", 3.5),
}


def samples(section, key):
    conv, default = SCHEMA[(section, key)]
    if conv in SAMPLES:
        return SAMPLES[conv]
    if isinstance(default, bool):
        return (False, "true", False)
    if isinstance(default, list):
        return (["x"], "y z", ["w"])
    return (7, "8", 9)  # optional ints, floats and strings all accept these


@given(st.sampled_from(sorted(SCHEMA)), st.booleans(), st.booleans(), st.booleans())
def test_precedence(skey, in_file, in_env, in_flag):
    section, key = skey
    conv, default = SCHEMA[skey]
    f, e, g = samples(section, key)
    file_data = {section: {key: f}} if in_file else {}
    env = {env_name(section, key): e} if in_env else {}
    flags = {skey: g} if in_flag else {}
    got = resolve_settings(file_data, env, flags)[skey]
    if in_flag:
        expected = conv(g)
    elif in_env:
        expected = conv(e)
    elif in_file:
        expected = conv(f)
    else:
        expected = default
    assert got == expected


def test_env_names():
    assert env_name("run", "max_turns") == "CASBENCH_RUN_MAX_TURNS"
    assert env_name("backend", "launch_command") == "CASBENCH_BACKEND_LAUNCH_COMMAND"


def test_defaults():
    cfg = load_config(env={})
    assert cfg.defaults.max_turns == 100
    assert cfg.defaults.params.model_id == ""
    assert cfg.backend.launch_command == ["maple", "-q"]
    assert cfg.backend.statement_timeout == 300.0
    assert cfg.workers == 1 and cfg.packs_dir is None


def test_file_env_flag_end_to_end(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('[run]\nmax_turns = 20\nworkers = 3\n[backend]\nlaunch_command = ["mycas", "-q"]\n')
    cfg = load_config(path, {"CASBENCH_RUN_MAX_TURNS": "30"}, {("run", "workers"): None})
    assert cfg.defaults.max_turns == 30
    assert cfg.workers == 3
    assert cfg.backend.launch_command == ["mycas", "-q"]


def test_unknown_key(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[run]\nmax_turn = 20\n")
    with pytest.raises(ConfigError):
        read_config_file(path)


def test_bad_values(tmp_path):
    with pytest.raises(ConfigError):
        resolve_settings(env={"CASBENCH_RUN_MAX_TURNS": "many"})
    with pytest.raises(ConfigError):
        load_config(env={"CASBENCH_RUN_MAX_TURNS": "0"})
    with pytest.raises(ConfigError):
        load_config(env={"CASBENCH_RUN_WORKERS": "0"})
    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "missing.toml")
