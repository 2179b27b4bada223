"""Portable text checkpoints.

A checkpoint is one JSON document. Arrays are stored as a shape plus a
space-separated string of values printed with 17 significant digits, which
round-trips float64 exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..symmetry import ReductionKind
from .agent import ActionTransform, Agent
from .normalize import ObsNormalizer, RunningMeanStd
from .ppo import architecture

FORMAT = "symtrack-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _enc(a) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": " ".join(f"{v:.17g}" for v in a.ravel())}


def _dec(d) -> np.ndarray:
    vals = [float(v) for v in d["data"].split()] if d["data"] else []
    return np.array(vals, dtype=float).reshape(d["shape"])


def to_dict(agent: Agent, env: str, config_hash: str = "", config_text: str = "",
            seed: int | None = None) -> dict:
    norm = None
    if agent.normalizer is not None:
        st = agent.normalizer.rms.state()
        norm = {"mean": _enc(st["mean"]), "var": _enc(st["var"]), "count": f"{st['count']:.17g}",
                "clip": agent.normalizer.clip, "eps": agent.normalizer.eps}
    arch = architecture(agent.params)
    return {
        "format": FORMAT,
        "version": VERSION,
        "env": env,
        "reduction": agent.kind.value,
        "seed": seed,
        "obs_dim": arch["pi"][0],
        "act_dim": arch["pi"][-1],
        "architecture": arch,
        "params": {k: _enc(v) for k, v in sorted(agent.params.items())},
        "normalizer": norm,
        "action_transform": {"offset": _enc(agent.transform.offset),
                             "scale": _enc(agent.transform.scale)},
        "config_hash": config_hash,
        "config": config_text,
    }


def save_checkpoint(path, agent: Agent, env: str, config_hash: str = "", config_text: str = "",
                    seed: int | None = None) -> None:
    text = json.dumps(to_dict(agent, env, config_hash, config_text, seed), indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def from_dict(d: dict) -> tuple[Agent, dict]:
    """Rebuild the agent; returns it with the checkpoint metadata."""
    if d.get("format") != FORMAT or d.get("version") != VERSION:
        raise CheckpointError("not a symtrack checkpoint (format/version mismatch)")
    try:
        params = {k: _dec(v) for k, v in d["params"].items()}
        kind = ReductionKind.parse(d["reduction"])
        norm = None
        if d["normalizer"] is not None:
            n = d["normalizer"]
            norm = ObsNormalizer(d["obs_dim"], clip=float(n["clip"]), eps=float(n["eps"]))
            norm.rms = RunningMeanStd.from_state(
                {"mean": _dec(n["mean"]), "var": _dec(n["var"]), "count": float(n["count"])})
        tr = d["action_transform"]
        transform = ActionTransform(_dec(tr["offset"]), _dec(tr["scale"]))
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"malformed checkpoint: {e}") from None
    if architecture(params) != d["architecture"]:
        raise CheckpointError("parameter shapes disagree with the recorded architecture")
    meta = {k: d[k] for k in ("env", "reduction", "seed", "obs_dim", "act_dim", "architecture",
                              "config_hash", "config")}
    return Agent(params, kind, norm, transform), meta


def load_checkpoint(path) -> tuple[Agent, dict]:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from None
    return from_dict(d)
