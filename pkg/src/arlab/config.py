"""Run configuration: one JSON document with env / sac / arl / eval sections."""
from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import fields
from importlib import resources
from pathlib import Path

from .arl import ArlConfig
from .envs.disentangle import ArmConfig, DisentangleEnv, load_scenarios
from .envs.maze import MazeConfig, MazeEnv, load_maze
from .errors import ArlError, ConfigError
from .sac import SacConfig

log = logging.getLogger(__name__)

ENV_KINDS = ("maze", "disentangle2d")

MAZE_ENV = {"kind": "maze", "maze_file": None, "max_speed": 1.0, "step_penalty_coeff": 0.05,
            "goal_reward": 1.0, "horizon": 100}
DISENTANGLE_ENV = {"kind": "disentangle2d", "scenario_file": None, "link_lengths": [0.4, 0.4, 0.3],
                   "base": [0.0, 1.0], "max_joint_delta": 0.1, "horizon": 50, "gamma": 0.99,
                   "action_penalty": "scaled"}

# unit-scale rewards: an initial entropy coefficient of 1 swamps the task reward
SAC_COMMON = {"gamma": 0.99, "tau": 0.005, "lr": 3e-4, "batch_size": 64, "entropy_mode": "auto",
              "alpha_ent": 0.05, "target_entropy": None, "buffer_capacity": 200_000, "hidden": [64, 64]}

METHODS = {
    "sac": {"adversary_kind": "none", "K": 10},
    "ra": {"adversary_kind": "random", "K": 10},
    "asac10": {"adversary_kind": "learned", "K": 10},
    "asac100": {"adversary_kind": "learned", "K": 100},
    "asac1000": {"adversary_kind": "learned", "K": 1000},
}


def default_config(env_kind: str = "maze", method: str = "asac10", H_A=None, budget=None) -> dict:
    """A complete config for one of the preset methods (sac, ra, asac10/100/1000)."""
    if env_kind not in ENV_KINDS:
        raise ConfigError("env.kind", f"must be one of {ENV_KINDS}")
    if method not in METHODS:
        raise ConfigError("method", f"unknown preset {method!r}; choose from {sorted(METHODS)}")
    maze = env_kind == "maze"
    env = dict(MAZE_ENV if maze else DISENTANGLE_ENV)
    sac = dict(SAC_COMMON, grad_steps_per_env_step=1 if maze else 5)
    m = METHODS[method]
    kind = m["adversary_kind"]
    if H_A is None:
        H_A = 0 if kind == "none" else (100 if maze else 1)
    budget = budget or (4000 if maze else 10000)
    K = m["K"]
    name = method if kind != "learned" or maze else f"{method}_ha{H_A}"
    return {
        "method": name,
        "seed": 0,
        "env": env,
        "sac": {"protagonist": dict(sac), "adversary": dict(sac)},
        "arl": {"N": None, "episode_budget": budget, "K_A": K, "K_P": K, "H_A": H_A,
                "H_P": env["horizon"], "adversary_kind": kind, "relabel_adversary_rewards": False,
                "early_termination": True},
        "eval": {"n_per_cell": 5, "trials": 100, "every": 0, "at_end": True},
        "checkpoint_every": 0,
    }


def iterations_for_budget(budget: int, K_A: int, K_P: int) -> int:
    """Iterations N holding the total episode count fixed; floors with a warning if inexact."""
    per = K_A + K_P
    if budget % per:
        log.warning("episode budget %d is not divisible by K_A + K_P = %d; using N = %d", budget, per, budget // per)
    return max(1, budget // per)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: dict, overrides) -> dict:
    """Apply ``dotted.path=value`` overrides; values are parsed as JSON when possible."""
    config = copy.deepcopy(config)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(item, "override must look like key.path=value")
        key, value = item.split("=", 1)
        node = config
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(key, f"no section {p!r}")
            node = node[p]
        node[parts[-1]] = _parse_value(value)
    return config


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise ConfigError("--config", f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError("--config", f"{path} is not valid JSON: {e}") from None


def _env_data(config: dict) -> bytes:
    """Contents of the layout or scenario file the env section points at (bundled if unset)."""
    env = config.get("env", {}) if isinstance(config.get("env"), dict) else {}
    key, bundled = {"maze": ("maze_file", "maze10.txt"),
                    "disentangle2d": ("scenario_file", "scenarios.txt")}.get(env.get("kind"), (None, None))
    if key is None:
        return b""
    path = env.get(key)
    try:
        if path is None:
            return resources.files("arlab.data").joinpath(bundled).read_bytes()
        return Path(path).read_bytes()
    except OSError:
        return b""


def config_hash(config: dict) -> str:
    """Short digest of the config and the env data file it uses, so edited layouts get fresh run dirs."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob + b"\0" + _env_data(config)).hexdigest()[:10]


def _dataclass_from(cls, section: dict, prefix: str):
    names = {f.name for f in fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise ConfigError(f"{prefix}.{sorted(unknown)[0]}", "unknown field")
    try:
        return cls(**section)
    except ArlError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(prefix, str(e)) from None


def sac_configs(config: dict):
    sac = config.get("sac", {})
    prot = _dataclass_from(SacConfig, dict(sac.get("protagonist", {})), "sac.protagonist").validate("sac.protagonist")
    adv = _dataclass_from(SacConfig, dict(sac.get("adversary", sac.get("protagonist", {}))), "sac.adversary")
    return prot, adv.validate("sac.adversary")


def arl_config(config: dict) -> ArlConfig:
    section = dict(config.get("arl", {}))
    budget = section.pop("episode_budget", None)
    if section.get("N") is None:
        if budget is None:
            raise ConfigError("arl.N", "give either N or episode_budget")
        section["N"] = iterations_for_budget(int(budget), int(section.get("K_A", 10)), int(section.get("K_P", 10)))
    return _dataclass_from(ArlConfig, section, "arl").validate()


def make_env(config: dict):
    env_cfg = dict(config.get("env", {}))
    kind = env_cfg.pop("kind", None)
    if kind == "maze":
        maze_file = env_cfg.pop("maze_file", None)
        if maze_file is not None and not Path(maze_file).is_file():
            raise ConfigError("env.maze_file", f"maze file not found: {maze_file}")
        try:
            grid = load_maze(maze_file)
        except (ValueError, OSError) as e:
            raise ConfigError("env.maze_file", str(e)) from None
        return MazeEnv(grid, _dataclass_from(MazeConfig, env_cfg, "env"))
    if kind == "disentangle2d":
        scen_file = env_cfg.pop("scenario_file", None)
        if scen_file is not None and not Path(scen_file).is_file():
            raise ConfigError("env.scenario_file", f"scenario file not found: {scen_file}")
        arm = _dataclass_from(ArmConfig, {k: (tuple(v) if isinstance(v, list) else v) for k, v in env_cfg.items()}, "env")
        try:
            scenarios = load_scenarios(scen_file)
        except (ValueError, OSError) as e:
            raise ConfigError("env.scenario_file", str(e)) from None
        return DisentangleEnv(arm, scenarios=scenarios)
    raise ConfigError("env.kind", f"must be one of {ENV_KINDS}, got {kind!r}")


def validate(config: dict):
    """Build every component once so all field errors surface before any work starts."""
    for key in ("env", "sac", "arl"):
        if not isinstance(config.get(key), dict):
            raise ConfigError(key, "missing section")
    seed = config.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    env = make_env(config)
    prot, adv = sac_configs(config)
    arl = arl_config(config)
    if config["env"].get("kind") == "disentangle2d" and abs(config["env"].get("gamma", 0.99) - prot.gamma) > 0:
        raise ConfigError("env.gamma", "must equal sac.protagonist.gamma (the collision penalty uses it)")
    if arl.H_P != env.spec.horizon_P:
        raise ConfigError("arl.H_P", f"must equal the environment horizon {env.spec.horizon_P}")
    return env, prot, adv, arl

