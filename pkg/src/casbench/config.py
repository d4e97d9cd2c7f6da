"""Harness configuration: TOML file, ``CASBENCH_*`` environment, command-line flags.

Precedence per key is flag > environment > file > built-in default. The
environment name of a key is ``CASBENCH_<SECTION>_<KEY>`` in upper case,
e.g. ``CASBENCH_RUN_MAX_TURNS``.
"""

from __future__ import annotations

import json
import shlex
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .agent import RunConfig
from .cas.session import PRETTYPRINT_OFF, BackendDescriptor
from .llm import GenerationParams

ENV_PREFIX = "CASBENCH"


class ConfigError(ValueError):
    pass


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _argv(v):
    if isinstance(v, list):
        return [str(x) for x in v]
    return shlex.split(str(v))


def _str_list(v):
    if isinstance(v, list):
        return [str(x) for x in v]
    s = str(v).strip()
    if s.startswith("["):
        return [str(x) for x in json.loads(s)]
    return [s] if s else []


def _opt(conv):
    def inner(v):
        if v is None or (isinstance(v, str) and v.strip().lower() in ("", "none")):
            return None
        return conv(v)

    return inner


# (section, key) -> (converter, default)
SCHEMA = {
    ("backend", "name"): (str, "maple"),
    ("backend", "launch_command"): (_argv, ["maple", "-q"]),
    ("backend", "prompt_marker"): (str, "> "),
    ("backend", "init_statements"): (_str_list, [PRETTYPRINT_OFF]),
    ("backend", "statement_timeout"): (float, 300.0),
    ("backend", "output_byte_limit"): (_opt(int), None),
    ("backend", "echo_input"): (_bool, True),
    ("backend", "use_pty"): (_bool, False),
    ("provider", "adapter"): (str, "anthropic"),
    ("provider", "endpoint"): (_opt(str), None),
    ("provider", "key_env"): (str, "ANTHROPIC_API_KEY"),
    ("provider", "model_id"): (str, ""),
    ("provider", "max_tokens"): (int, 1024),
    ("provider", "thinking_budget"): (_opt(int), None),
    ("provider", "temperature"): (_opt(float), None),
    ("provider", "token_budget"): (_opt(int), None),
    ("run", "max_turns"): (int, 100),
    ("run", "extraction_mode"): (str, "verbatim"),
    ("run", "attempt_limit"): (int, 1),
    ("run", "workers"): (int, 1),
    ("paths", "packs_dir"): (_opt(str), None),
    ("paths", "results_dir"): (str, "results"),
}


def env_name(section, key):
    return f"{ENV_PREFIX}_{section}_{key}".upper()


def read_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    for section, body in data.items():
        if not isinstance(body, dict):
            raise ConfigError(f"{path}: top-level key {section!r} must be a table")
        for key in body:
            if (section, key) not in SCHEMA:
                raise ConfigError(f"{path}: unknown setting {section}.{key}")
    return data


def resolve_settings(file_data=None, env=None, flags=None) -> dict:
    """Merge the three sources into {(section, key): value}.

    ``flags`` maps (section, key) to a value, with None meaning "not given".
    """
    file_data = file_data or {}
    env = env or {}
    flags = flags or {}
    out = {}
    for (section, key), (conv, default) in SCHEMA.items():
        name = env_name(section, key)
        try:
            if flags.get((section, key)) is not None:
                value = conv(flags[(section, key)])
            elif name in env:
                value = conv(env[name])
            elif key in file_data.get(section, {}):
                value = conv(file_data[section][key])
            else:
                value = default
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad value for {section}.{key}: {e}") from e
        out[(section, key)] = value
    return out


@dataclass
class ProviderConfig:
    adapter: str = "anthropic"
    endpoint: str | None = None
    key_env: str = "ANTHROPIC_API_KEY"
    token_budget: int | None = None


@dataclass
class HarnessConfig:
    backend: BackendDescriptor
    provider: ProviderConfig
    packs_dir: Path | None
    results_dir: Path
    defaults: RunConfig
    workers: int = 1


def build_config(settings: dict) -> HarnessConfig:
    s = settings
    try:
        backend = BackendDescriptor(
            name=s[("backend", "name")],
            launch_command=s[("backend", "launch_command")],
            prompt_marker=s[("backend", "prompt_marker")],
            init_statements=s[("backend", "init_statements")],
            statement_timeout=s[("backend", "statement_timeout")],
            output_byte_limit=s[("backend", "output_byte_limit")],
            echo_input=s[("backend", "echo_input")],
            use_pty=s[("backend", "use_pty")],
        )
        params = GenerationParams(
            model_id=s[("provider", "model_id")],
            max_tokens=s[("provider", "max_tokens")],
            thinking_budget=s[("provider", "thinking_budget")],
            temperature=s[("provider", "temperature")],
        )
        defaults = RunConfig(
            max_turns=s[("run", "max_turns")],
            extraction_mode=s[("run", "extraction_mode")],
            params=params,
            attempt_limit=s[("run", "attempt_limit")],
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e
    provider = ProviderConfig(
        s[("provider", "adapter")], s[("provider", "endpoint")],
        s[("provider", "key_env")], s[("provider", "token_budget")],
    )
    if s[("run", "workers")] < 1:
        raise ConfigError("run.workers must be >= 1")
    packs_dir = s[("paths", "packs_dir")]
    return HarnessConfig(
        backend, provider, Path(packs_dir) if packs_dir else None,
        Path(s[("paths", "results_dir")]), defaults, s[("run", "workers")],
    )


def load_config(path=None, env=None, flags=None) -> HarnessConfig:
    return build_config(resolve_settings(read_config_file(path), env, flags))
