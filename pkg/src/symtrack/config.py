"""Run configuration: sectioned INI files parsed strictly.

Each environment has a packaged default file (``symtrack/configs/<env>.ini``).
A user file only needs to name the environment and whatever it overrides;
unknown sections or keys are rejected so typos never pass silently.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, fields
from importlib import resources

import numpy as np

from .dynamics import ParticleParams, QuadrotorParams, RigidParams
from .rl.agent import ActionTransform
from .rl.ppo import PpoConfig
from .symmetry import ReductionKind, check_compatible
from .tracking_mdp import (
    AstrobeeSystem,
    CostParams,
    EnvConfig,
    InitSpec,
    ParticleSystem,
    QuadrotorSystem,
    RefActionDist,
    TrackingSystem,
)

ENVS = ("particle", "astrobee", "quadrotor")

_SYSTEM_KEYS = {
    "particle": ("mass", "dt"),
    "astrobee": ("mass", "inertia", "dt"),
    "quadrotor": ("mass", "inertia", "arm", "drag", "gravity", "dt"),
}
_COST_KEYS = {
    "particle": ("c_r", "a_r", "c_v", "c_u"),
    "astrobee": ("c_r", "a_r", "c_v", "c_R", "c_xi", "c_u"),
    "quadrotor": ("c_r", "a_r", "c_v", "c_R", "c_xi", "c_u"),
}
_INIT_KEYS = {
    "particle": ("pos_range", "vel_range", "ref_vel_range"),
    "astrobee": ("pos_range", "vel_range", "rot_angle", "omega_range", "ref_vel_range"),
    "quadrotor": ("pos_range", "vel_range", "rot_angle", "omega_range", "ref_vel_range"),
}
_EVAL_KEYS = ("trajectories", "seed", "center", "every", "periodic_trajectories")


class ConfigError(ValueError):
    """Invalid configuration; ``fields`` names the offending keys."""

    def __init__(self, message: str, fields=()):
        super().__init__(message)
        self.fields = tuple(fields)


@dataclass(frozen=True)
class EvalSettings:
    trajectories: int = 20
    seed: int = 1000
    center: float = 3.0
    every: int = 0
    periodic_trajectories: int = 5


@dataclass
class RunConfig:
    env: str
    reduction: ReductionKind
    seed: int
    out: str
    system: TrackingSystem
    env_cfg: EnvConfig
    transform: ActionTransform
    ppo: PpoConfig
    eval: EvalSettings
    raw: dict

    def snapshot(self) -> str:
        """Complete INI text; loading it reproduces this run exactly."""
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for section, items in self.raw.items():
            cp[section] = items
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def config_hash(self) -> str:
        return hashlib.sha256(self.snapshot().encode()).hexdigest()


# ---------------------------------------------------------------- parsing

def _read_text(text: str, origin: str) -> dict:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case-sensitive (c_r vs c_R)
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as e:
        raise ConfigError(f"{origin}: {e}") from None
    return {s: dict(cp[s]) for s in cp.sections()}


def default_text(env: str) -> str:
    if env not in ENVS:
        raise ConfigError(f"run.env: unknown environment {env!r} (expected one of {', '.join(ENVS)})",
                          ["run.env"])
    return resources.files("symtrack.configs").joinpath(f"{env}.ini").read_text()


def _allowed(env: str) -> dict:
    return {
        "run": ("env", "reduction", "seed", "out"),
        "system": _SYSTEM_KEYS[env],
        "env": ("gamma", "episode_length", "ref_mean", "ref_std") + _COST_KEYS[env] + _INIT_KEYS[env],
        "action": ("offset", "scale"),
        "ppo": tuple(PpoConfig.field_names()),
        "eval": _EVAL_KEYS,
    }


def _merge(base: dict, over: dict, env: str) -> dict:
    allowed = _allowed(env)
    out = {s: dict(items) for s, items in base.items()}
    for s, items in over.items():
        if s not in allowed:
            raise ConfigError(f"unknown section [{s}]", [s])
        for k, v in items.items():
            if k not in allowed[s]:
                raise ConfigError(f"{s}.{k}: unknown key for env {env}", [f"{s}.{k}"])
            out.setdefault(s, {})[k] = v
    return out


def _floats(raw: str, key: str, n: int | None = None) -> np.ndarray:
    try:
        vals = np.array([float(p) for p in raw.split(",")])
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {raw!r}", [key]) from None
    if n is not None and vals.shape[0] not in (1, n):
        raise ConfigError(f"{key}: expected {n} values, got {vals.shape[0]}", [key])
    return np.broadcast_to(vals, (n,)).copy() if n is not None else vals


def _scalar(raw: str, key: str, typ):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if typ is int:
            return int(float(raw)) if float(raw).is_integer() else int(raw)
        return typ(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {typ.__name__}, got {raw!r}", [key]) from None


def _build_system(env: str, s: dict) -> TrackingSystem:
    g = lambda k: _scalar(s[k], f"system.{k}", float)  # noqa: E731
    if env == "particle":
        return ParticleSystem(ParticleParams(g("mass"), g("dt")))
    rigid = RigidParams(g("mass"), _floats(s["inertia"], "system.inertia", 3), g("dt"))
    if env == "astrobee":
        return AstrobeeSystem(rigid)
    return QuadrotorSystem(QuadrotorParams(rigid, g("arm"), g("drag"), g("gravity")))


def _action_vector(raw: str, key: str, system: TrackingSystem) -> np.ndarray:
    if raw.strip() == "hover":
        if system.name != "quadrotor":
            raise ConfigError(f"{key}: 'hover' only applies to the quadrotor", [key])
        return np.full(4, system.params.hover_thrust)
    return _floats(raw, key, system.action_dim)


def _check_keys(raw: dict, env: str) -> None:
    allowed = _allowed(env)
    for s, items in raw.items():
        if s not in allowed:
            raise ConfigError(f"unknown section [{s}]", [s])
        for k in items:
            if k not in allowed[s]:
                raise ConfigError(f"{s}.{k}: unknown key for env {env}", [f"{s}.{k}"])
    for s, keys in allowed.items():
        if s == "ppo":
            continue
        missing = [k for k in keys if k not in raw.get(s, {})]
        if missing:
            raise ConfigError(f"[{s}] missing keys: {', '.join(missing)}", [f"{s}.{k}" for k in missing])


def build(raw: dict) -> RunConfig:
    """Validate a merged section dict and construct every run object."""
    env = raw["run"]["env"].strip()
    default_text(env)
    _check_keys(raw, env)
    try:
        kind = ReductionKind.parse(raw["run"]["reduction"].strip())
    except ValueError as e:
        raise ConfigError(f"run.reduction: {e}", ["run.reduction"]) from None
    try:
        check_compatible(env, kind)
    except ValueError:
        raise ConfigError(f"run.reduction={kind.value!r} is not valid for run.env={env!r}",
                          ["run.env", "run.reduction"]) from None
    seed = _scalar(raw["run"]["seed"], "run.seed", int)
    if seed < 0:
        raise ConfigError("run.seed: must be >= 0", ["run.seed"])

    def guarded(section, fn):
        try:
            return fn()
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(f"[{section}] {e}", [section]) from None

    system = guarded("system", lambda: _build_system(env, raw["system"]))
    e = raw["env"]
    cost = guarded("env", lambda: CostParams(
        **{k: _scalar(e[k], f"env.{k}", float) for k in _COST_KEYS[env]}))
    init = guarded("env", lambda: InitSpec(
        **{k: _scalar(e[k], f"env.{k}", float) for k in _INIT_KEYS[env]}))
    std = _floats(e["ref_std"], "env.ref_std", system.action_dim)
    ref_dist = guarded("env", lambda: RefActionDist(
        _action_vector(e["ref_mean"], "env.ref_mean", system), std**2))
    env_cfg = guarded("env", lambda: EnvConfig(
        ref_dist, cost, init, _scalar(e["gamma"], "env.gamma", float),
        _scalar(e["episode_length"], "env.episode_length", int)))

    a = raw["action"]
    scale = _floats(a["scale"], "action.scale", system.action_dim)
    if not np.all(scale > 0):
        raise ConfigError("action.scale: entries must be > 0", ["action.scale"])
    transform = ActionTransform(_action_vector(a["offset"], "action.offset", system), scale)

    defaults = PpoConfig()
    for k in PpoConfig.field_names():
        raw["ppo"].setdefault(k, str(getattr(defaults, k)))
    raw["ppo"] = {k: raw["ppo"][k] for k in PpoConfig.field_names()}
    types = {f.name: f.type for f in fields(PpoConfig)}
    pytypes = {"float": float, "int": int, "bool": bool}
    kw = {k: _scalar(v, f"ppo.{k}", pytypes[types[k]] if isinstance(types[k], str) else types[k])
          for k, v in raw["ppo"].items()}
    ppo = guarded("ppo", lambda: PpoConfig(**kw))

    ev = raw["eval"]
    ev_kw = {k: _scalar(ev[k], f"eval.{k}", type(getattr(EvalSettings, k))) for k in _EVAL_KEYS}
    for k in ("trajectories", "periodic_trajectories"):
        if ev_kw[k] < 1:
            raise ConfigError(f"eval.{k}: must be >= 1", [f"eval.{k}"])
    if ev_kw["every"] < 0 or ev_kw["center"] < 0:
        raise ConfigError("eval.every and eval.center must be >= 0", ["eval.every", "eval.center"])
    return RunConfig(env, kind, seed, raw["run"]["out"].strip(), system, env_cfg, transform, ppo,
                     EvalSettings(**ev_kw), raw)


def load_config(path=None, *, text: str | None = None, env: str | None = None,
                overrides: dict | None = None) -> RunConfig:
    """Load a run config.

    The user file (``path`` or ``text``) is layered over the packaged
    defaults of its environment. ``overrides`` maps ``"section.key"`` to a
    value and is applied last, e.g. from command-line flags.
    """
    user = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
    if text is not None:
        user = _read_text(text, str(path or "<config>"))
    overrides = dict(overrides or {})
    env_name = overrides.pop("run.env", None) or env or user.get("run", {}).get("env")
    if env_name is None:
        raise ConfigError("run.env: missing (set it in [run] or pass --env)", ["run.env"])
    env_name = env_name.strip()
    base = _read_text(default_text(env_name), f"{env_name}.ini")
    merged = _merge(base, user, env_name)
    merged["run"]["env"] = env_name
    for key, val in overrides.items():
        section, _, name = key.partition(".")
        merged = _merge(merged, {section: {name: str(val)}}, env_name)
    return build(merged)


def with_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Rebuild ``cfg`` with ``section__key=value`` overrides."""
    raw = {s: dict(v) for s, v in cfg.raw.items()}
    for k, v in overrides.items():
        section, _, name = k.partition("__")
        raw = _merge(raw, {section: {name: str(v)}}, cfg.env)
    return build(raw)


__all__ = ["ConfigError", "EvalSettings", "RunConfig", "build", "default_text", "load_config",
           "with_overrides", "ENVS"]
