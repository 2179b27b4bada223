"""Zero-shot closed-loop evaluation on planned trajectories.

The reference channel follows the plan instead of being resampled. Errors
are RMS over time per trajectory, then aggregated per seed and across seeds.
"""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .dynamics import ParticleState, RigidState
from .geometry import rot_distance
from .references import ReferencePlan, TrajectorySetRanges, evaluation_set
from .tracking_mdp import (
    CostParams,
    InitSpec,
    TrackingState,
    TrackingSystem,
    reward,
    sample_reset_offset,
)

Policy = Callable[[TrackingState], np.ndarray]


@dataclass
class RolloutRecord:
    """Per-step actual/reference states (flat), actions and rewards."""

    system: str
    actual: np.ndarray
    reference: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        n = len(self.actual)
        if not (len(self.reference) == len(self.actions) == len(self.rewards) == n):
            raise ValueError("rollout record fields must have equal length")

    def __len__(self) -> int:
        return len(self.actual)


@dataclass(frozen=True)
class ErrorSummary:
    rms_r_cm: float
    rms_v_cmps: float
    rms_R_rad: float
    rms_w_radps: float

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def values(self) -> np.ndarray:
        return np.array(astuple(self))


def _stack_plans(plans) -> TrackingState:
    """Plans as one batched trajectory, time leading: fields ``(T, B, ...)``."""
    cls = type(plans[0].states)
    lengths = {len(p) for p in plans}
    if len(lengths) != 1:
        raise ValueError("batched evaluation needs plans of equal length")
    ref = cls(*[np.stack(f, axis=1) for f in zip(*[p.states for p in plans])])
    return TrackingState(None, ref, np.stack([p.actions for p in plans], axis=1))


def rollout_on_plans(policy: Policy, system: TrackingSystem, plans, offsets,
                     cost: CostParams | None = None) -> list[RolloutRecord]:
    """Roll ``policy`` along several equal-length plans at once.

    ``offsets[i]`` perturbs the start of trajectory i exactly like a training
    reset. ``policy`` maps a batched TrackingState to physical actions; the
    agent's deterministic mean is the intended choice.
    """
    for p in plans:
        if p.system != system.name:
            raise ValueError(f"plan for {p.system!r} does not match system {system.name!r}")
    cost = cost or CostParams()
    stacked = _stack_plans(plans)
    cls = type(stacked.reference)
    ref_at = lambda t: cls(*[f[t] for f in stacked.reference])  # noqa: E731
    offsets = np.asarray(offsets, dtype=float)
    x = system.offset_state(ref_at(0), offsets)
    T, B = len(plans[0]), len(plans)
    act, ref = np.zeros((T, B, x.flat().shape[-1])), np.zeros((T, B, x.flat().shape[-1]))
    acts, rews = np.zeros((T, B, system.action_dim)), np.zeros((T, B))
    for t in range(T):
        s = TrackingState(x, ref_at(t), stacked.ref_action[t])
        u = policy(s)
        act[t], ref[t], acts[t] = x.flat(), s.reference.flat(), u
        rews[t] = reward(system, s, u, cost)
        x = system.step(x, u)
    return [RolloutRecord(system.name, act[:, i], ref[:, i], acts[:, i], rews[:, i])
            for i in range(B)]


def rollout_on_plan(policy: Policy, system: TrackingSystem, plan: ReferencePlan, offset,
                    cost: CostParams | None = None) -> RolloutRecord:
    return rollout_on_plans(policy, system, [plan], np.asarray(offset)[None], cost)[0]


def feedforward_policy(s: TrackingState) -> np.ndarray:
    """Applies the reference action; exact on a feasible plan with no offset."""
    return np.array(s.ref_action)


def rms_errors(rec: RolloutRecord) -> ErrorSummary:
    if len(rec) == 0:
        raise ValueError("empty rollout record")
    rms = lambda e: float(np.sqrt(np.mean(np.sum(e**2, axis=-1))))  # noqa: E731
    if rec.system == "particle":
        x, xr = ParticleState.from_flat(rec.actual), ParticleState.from_flat(rec.reference)
        return ErrorSummary(100.0 * rms(x.r - xr.r), 100.0 * rms(x.v - xr.v), 0.0, 0.0)
    x, xr = RigidState.from_flat(rec.actual), RigidState.from_flat(rec.reference)
    rot = rot_distance(x.R, xr.R)
    return ErrorSummary(100.0 * rms(x.r - xr.r), 100.0 * rms(x.v - xr.v),
                        float(np.sqrt(np.mean(rot**2))), rms(x.w - xr.w))


def eval_offsets(init: InitSpec, n: int, seed: int) -> np.ndarray:
    """One reset offset per trajectory, each from its own stream."""
    streams = np.random.SeedSequence(seed).spawn(n)
    return np.stack([sample_reset_offset(init, np.random.Generator(np.random.Philox(s)))
                     for s in streams])


def standard_plans(system: TrackingSystem, n: int, seed: int, center: float = 3.0):
    return evaluation_set(system.name, system.params, n, seed=seed,
                          ranges=TrajectorySetRanges(center=center))


def evaluate_policy(policy: Policy, system: TrackingSystem, plans, init: InitSpec, seed: int,
                    cost: CostParams | None = None) -> list[ErrorSummary]:
    offsets = eval_offsets(init, len(plans), seed)
    return [rms_errors(r) for r in rollout_on_plans(policy, system, plans, offsets, cost)]


def seed_rms(summaries) -> ErrorSummary:
    """Pooled RMS over a trajectory set (equal-length trajectories)."""
    vals = np.array([s.values() for s in summaries])
    return ErrorSummary(*map(float, np.sqrt(np.mean(vals**2, axis=0))))


@dataclass(frozen=True)
class AggregateRow:
    env: str
    reduction: str
    n_seeds: int
    mean: ErrorSummary
    std: ErrorSummary


def aggregate(results) -> list[AggregateRow]:
    """Mean and sample std across seeds of the per-seed RMS.

    ``results`` is an iterable of ``(env, reduction, seed, traj_id, summary)``.
    Row order follows first appearance of each (env, reduction).
    """
    groups: dict = {}
    for env, red, seed, _, summ in results:
        groups.setdefault((env, red), {}).setdefault(seed, []).append(summ)
    if not groups:
        raise ValueError("aggregate needs at least one summary")
    rows = []
    for (env, red), by_seed in groups.items():
        per_seed = np.array([seed_rms(v).values() for v in by_seed.values()])
        std = per_seed.std(axis=0, ddof=1) if len(per_seed) > 1 else np.zeros(4)
        rows.append(AggregateRow(env, red, len(per_seed),
                                 ErrorSummary(*map(float, per_seed.mean(axis=0))),
                                 ErrorSummary(*map(float, std))))
    return rows


RESULT_COLUMNS = ["env", "reduction", "seed", "traj_id"] + ErrorSummary.names()
TABLE_COLUMNS = ["env", "reduction", "n_seeds"] + [
    f"{n}_{stat}" for n in ErrorSummary.names() for stat in ("mean", "std")]


def _fmt(v) -> str:
    return f"{v:.17g}" if isinstance(v, (float, np.floating)) else str(v)


def write_results_csv(results, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for env, red, seed, tid, s in results:
            w.writerow([env, red, seed, tid] + [_fmt(float(v)) for v in s.values()])


def write_table_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for r in rows:
            stats = [_fmt(float(v)) for pair in zip(r.mean.values(), r.std.values()) for v in pair]
            w.writerow([r.env, r.reduction, r.n_seeds] + stats)


def read_results_csv(path) -> list:
    out = []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append((row["env"], row["reduction"], int(row["seed"]), int(row["traj_id"]),
                        ErrorSummary(*[float(row[k]) for k in ErrorSummary.names()])))
    return out
