"""Run configuration: JSON parsing, validation and per-system defaults.

A configuration file is a JSON object.  Only ``system`` is required; every
other field falls back to the system profile below.  Unknown keys are
rejected.  :func:`materialize` returns the complete dict with all defaults
filled in, which is what gets written as the run's config snapshot.
"""

import copy
import json
import math
from dataclasses import dataclass

import numpy as np

from . import env
from .adhdp import TrainConfig
from .exceptions import ConfigError
from .metrics import IndexConfig, PerfConfig

_COMMON = {
    "seed": 0,
    "reward": None,
    "landscape": {
        "projection": "pca",
        "random_seed": 0,
        "reference": "final",
        "n_alpha": 51,
        "n_beta": 51,
        "span_factor": 1.2,
        "workers": 1,
    },
    "indices": {
        "epsilon": None,
        "rho": 0.5,
        "r_fit": None,
        "n_angles": 64,
        "epsilon_fraction": 0.05,
        "r_fit_fraction": 0.10,
    },
    "perf": {"horizon": None, "gamma": 0.99},
}

PROFILES = {
    env.CARTPOLE: {
        "env": {
            "cart_mass": 1.0, "pole_mass": 0.1, "half_length": 0.5, "cart_friction": 0.0005,
            "pole_friction": 0.000002, "gravity": 9.8, "force_magnitude": 10.0, "dt": 0.02,
        },
        "limits": {"angle_deg": 12.0, "position": 2.4},
        "initial_condition": {"max_angle_deg": 3.0, "eval_angle_deg": 1.0},
        "network": {"critic_hidden": 6, "actor_hidden": 4, "init_scale": 0.5},
        "train": {
            "gamma": 0.95, "critic_lr": 1e-2, "actor_lr": 1e-3, "epochs_per_step": 30,
            "episodes": 100, "max_steps_per_episode": 5000, "lr_scale_ratio": 1.0,
            "lr_scale_bound": 1.0, "action_mapping": env.BANG_BANG, "weight_norm_limit": 1e4,
        },
        "snapshot_episode": 50,
    },
    env.SPACECRAFT: {
        "env": {
            "inertia": [list(r) for r in env.DEFAULT_INERTIA], "dt": 0.01, "torque_bound": 1.0,
            "singularity_margin": 1e-3,
        },
        "limits": {"angle": 1.0, "rate": 1.0},
        "reward": {"P": 0.01, "Q": 0.0, "cost_bound": None},
        "initial_condition": {"theta0": [0.1, -0.1, 0.05], "omega0": [0.0, 0.0, 0.0]},
        "network": {"critic_hidden": 10, "actor_hidden": 10, "init_scale": 0.5},
        "train": {
            "gamma": 0.95, "critic_lr": 1e-2, "actor_lr": 1e-3, "epochs_per_step": 30,
            "episodes": 300, "max_steps_per_episode": 10000, "lr_scale_ratio": 1.01,
            "lr_scale_bound": 1.2, "action_mapping": env.CONTINUOUS, "weight_norm_limit": 1e4,
        },
        "snapshot_episode": 150,
    },
}


def defaults(system):
    if system not in PROFILES:
        raise ConfigError("system", f"must be one of {sorted(PROFILES)}, got {system!r}")
    base = copy.deepcopy(_COMMON)
    base.update(copy.deepcopy(PROFILES[system]))
    base["system"] = system
    return base


def _merge(default, given, path):
    if isinstance(default, dict) and given is not None:
        if not isinstance(given, dict):
            raise ConfigError(path, "expected an object")
        unknown = sorted(set(given) - set(default))
        if unknown:
            raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown key")
        return {k: _merge(v, given.get(k, v), f"{path}.{k}" if path else k) for k, v in default.items()}
    return copy.deepcopy(given)


def materialize(raw):
    """Complete configuration dict for ``raw`` (validated)."""
    if not isinstance(raw, dict):
        raise ConfigError("", "configuration must be a JSON object")
    if "system" not in raw:
        raise ConfigError("system", "missing required key")
    data = dict(raw)
    data.pop("output_dir", None)
    full = _merge(defaults(raw["system"]), data, "")
    build(full)
    return full


def _number(value, path, integer=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if integer and (not float(value).is_integer()):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    return int(value) if integer else float(value)


def _vector(value, n, path):
    if not isinstance(value, list) or len(value) != n:
        raise ConfigError(path, f"expected a list of {n} numbers")
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(value))


def _section(cls, values, path, ints=(), optional=(), strings=()):
    kwargs = {}
    for k, v in values.items():
        p = f"{path}.{k}"
        if k in strings:
            if not isinstance(v, str):
                raise ConfigError(p, "expected a string")
            kwargs[k] = v
        else:
            kwargs[k] = _number(v, p, integer=k in ints, allow_none=k in optional)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


@dataclass(frozen=True)
class RunConfig:
    system: str
    seed: int
    task: object
    train: TrainConfig
    critic_hidden: int
    actor_hidden: int
    landscape: dict
    indices: IndexConfig
    perf: PerfConfig
    snapshot_episode: int
    eval_state: np.ndarray
    data: dict

    def to_json(self):
        return dumps(self.data)


def build(full):
    """Domain objects for a materialized configuration dict."""
    system = full["system"]
    seed = _number(full["seed"], "seed", integer=True)
    e = full["env"]
    if system == env.CARTPOLE:
        params = _section(env.CartPoleParams, e, "env")
        lim = full["limits"]
        try:
            limits = env.FailureLimits.cartpole(_number(lim["angle_deg"], "limits.angle_deg"),
                                                _number(lim["position"], "limits.position"))
        except ValueError as exc:
            raise ConfigError("limits", str(exc)) from None
        if full["reward"] is not None:
            raise ConfigError("reward", "cart-pole uses the failure signal; reward must be null")
        ic = full["initial_condition"]
        max_angle = _number(ic["max_angle_deg"], "initial_condition.max_angle_deg")
        eval_angle = _number(ic["eval_angle_deg"], "initial_condition.eval_angle_deg")
        task = env.CartPoleTask(params=params, limits=limits,
                                action_mapping=full["train"]["action_mapping"], initial_angle_deg=max_angle)
        eval_state = np.array([np.deg2rad(eval_angle), 0.0, 0.0, 0.0])
    else:
        inertia = e["inertia"]
        if not isinstance(inertia, list) or len(inertia) != 3:
            raise ConfigError("env.inertia", "expected a 3x3 nested list")
        inertia = tuple(_vector(row, 3, f"env.inertia[{i}]") for i, row in enumerate(inertia))
        rest = {k: v for k, v in e.items() if k != "inertia"}
        try:
            params = env.SpacecraftParams(inertia=inertia, **{k: _number(v, f"env.{k}") for k, v in rest.items()})
        except ValueError as exc:
            raise ConfigError("env", str(exc)) from None
        lim = full["limits"]
        try:
            limits = env.FailureLimits.spacecraft(_number(lim["angle"], "limits.angle"),
                                                  _number(lim["rate"], "limits.rate"))
        except ValueError as exc:
            raise ConfigError("limits", str(exc)) from None
        rw = full["reward"]
        if not isinstance(rw, dict):
            raise ConfigError("reward", "expected an object")
        reward = _section(env.RewardParams, rw, "reward", optional=("cost_bound",))
        ic = full["initial_condition"]
        theta0 = _vector(ic["theta0"], 3, "initial_condition.theta0")
        omega0 = _vector(ic["omega0"], 3, "initial_condition.omega0")
        try:
            task = env.SpacecraftTask(params=params, limits=limits, reward_params=reward,
                                      theta0=theta0, omega0=omega0)
            task.cost_bound
        except ValueError as exc:
            raise ConfigError("reward", str(exc)) from None
        eval_state = task.initial_state()

    nw = full["network"]
    critic_hidden = _number(nw["critic_hidden"], "network.critic_hidden", integer=True)
    actor_hidden = _number(nw["actor_hidden"], "network.actor_hidden", integer=True)
    if critic_hidden < 1 or actor_hidden < 1:
        raise ConfigError("network", "hidden sizes must be >= 1")
    tr = dict(full["train"])
    tr["seed"] = seed
    tr["init_scale"] = nw["init_scale"]
    train = _section(TrainConfig, tr, "train",
                     ints=("epochs_per_step", "episodes", "max_steps_per_episode", "seed"),
                     optional=("weight_norm_limit",), strings=("action_mapping",))

    ls = full["landscape"]
    if ls["projection"] not in ("pca", "random"):
        raise ConfigError("landscape.projection", "must be 'pca' or 'random'")
    parse_reference(ls["reference"], "landscape.reference")
    for k in ("random_seed", "n_alpha", "n_beta", "workers"):
        _number(ls[k], f"landscape.{k}", integer=True)
    for k in ("n_alpha", "n_beta"):
        if ls[k] < 3 or ls[k] % 2 == 0:
            raise ConfigError(f"landscape.{k}", "must be odd and >= 3")
    if _number(ls["span_factor"], "landscape.span_factor") <= 0:
        raise ConfigError("landscape.span_factor", "must be positive")
    if ls["workers"] < 1:
        raise ConfigError("landscape.workers", "must be >= 1")

    indices = _section(IndexConfig, full["indices"], "indices", ints=("n_angles",),
                       optional=("epsilon", "r_fit"))
    pf = full["perf"]
    horizon = _number(pf["horizon"], "perf.horizon", integer=True, allow_none=True)
    try:
        perf = PerfConfig(horizon=horizon if horizon is not None else train.max_steps_per_episode,
                          gamma=_number(pf["gamma"], "perf.gamma"))
    except ValueError as exc:
        raise ConfigError("perf", str(exc)) from None
    snap = _number(full["snapshot_episode"], "snapshot_episode", integer=True)
    return RunConfig(system=system, seed=seed, task=task, train=train, critic_hidden=critic_hidden,
                     actor_hidden=actor_hidden, landscape=dict(ls), indices=indices, perf=perf,
                     snapshot_episode=snap, eval_state=eval_state, data=full)


def parse_reference(value, path="reference"):
    """``'final'`` -> None, ``'episode=K'`` -> K (1-based episode number)."""
    if value == "final":
        return None
    if isinstance(value, str) and value.startswith("episode="):
        try:
            k = int(value.split("=", 1)[1])
        except ValueError:
            k = 0
        if k >= 1:
            return k
    raise ConfigError(path, f"expected 'final' or 'episode=K' with K >= 1, got {value!r}")


def dumps(data):
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def load(path):
    """Read, validate and build a configuration file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path} is not valid JSON: {exc}") from None
    return build(materialize(raw)), raw


def from_dict(raw):
    return build(materialize(raw))
