"""Command-line entry points: train, eval, verify, plan, sweep.

Exit codes: 0 success, 1 check or planning failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ENVS, ConfigError, RunConfig, load_config
from .evaluation import (
    aggregate,
    evaluate_policy,
    standard_plans,
    write_results_csv,
    write_table_csv,
)
from .references import LissajousSpec, PlanningError, ReferencePlan, plan_lissajous, replay_report
from .rl.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .rl.train import auc, format_value, train, write_log_csv
from .symmetry import TRAINABLE, ReductionKind, check_compatible, obs_dim, verify_symmetry

log = logging.getLogger("symtrack")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _overrides(args) -> dict:
    ov = {}
    if getattr(args, "env", None):
        ov["run.env"] = args.env
    if getattr(args, "reduction", None):
        ov["run.reduction"] = args.reduction
    if getattr(args, "seed", None) is not None:
        ov["run.seed"] = args.seed
    if getattr(args, "out", None):
        ov["run.out"] = args.out
    if getattr(args, "steps", None) is not None:
        ov["ppo.total_steps"] = args.steps
    return ov


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format_value(v) for v in r])


# ---------------------------------------------------------------- train

def run_training(cfg: RunConfig, out: Path) -> dict:
    """Train one configured run and write its artifacts into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.snapshot(), encoding="utf-8")
    progress = []
    callback = None
    if cfg.eval.every > 0:
        plans = standard_plans(cfg.system, cfg.eval.periodic_trajectories, cfg.eval.seed,
                               cfg.eval.center)
        (out / "checkpoints").mkdir(exist_ok=True)

        def callback(it, step, agent):
            if it % cfg.eval.every:
                return None
            summ = evaluate_policy(agent.act, cfg.system, plans, cfg.env_cfg.init, cfg.eval.seed,
                                   cfg.env_cfg.cost)
            vals = np.sqrt(np.mean([s.values() ** 2 for s in summ], axis=0))
            progress.append([it, step] + list(vals))
            save_checkpoint(out / "checkpoints" / f"step_{step:09d}.json", agent, cfg.env,
                            cfg.config_hash(), cfg.snapshot(), cfg.seed)
            return None

    res = train(cfg.system, cfg.env_cfg, cfg.reduction, cfg.ppo, seed=cfg.seed,
                transform=cfg.transform, callback=callback)
    write_log_csv(res.log, out / "training_log.csv")
    save_checkpoint(out / "checkpoint.json", res.agent, cfg.env, cfg.config_hash(),
                    cfg.snapshot(), cfg.seed)
    if progress:
        _write_csv(out / "eval_progress.csv",
                   ["iteration", "global_step", "rms_r_cm", "rms_v_cmps", "rms_R_rad", "rms_w_radps"],
                   progress)
    return {"result": res, "auc": auc(res.log) if res.log else float("nan")}


def cmd_train(args) -> int:
    cfg = load_config(args.config, overrides=_overrides(args))
    out = Path(cfg.out)
    info = run_training(cfg, out)
    res = info["result"]
    last = res.log[-1]["mean_reward"] if res.log else float("nan")
    print(f"trained {cfg.env}/{cfg.reduction.value} seed={cfg.seed}: "
          f"{len(res.log)} iterations, final mean reward {last:.4f}, artifacts in {out}")
    if res.stopped_early:
        print(f"warning: {res.message}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# ---------------------------------------------------------------- eval

def _is_plan_file(path: Path) -> bool:
    with open(path, encoding="utf-8") as fh:
        return fh.readline().startswith("# system=")


def _load_plans(directory: Path, system: str) -> list[ReferencePlan]:
    # plan reports and other CSVs may sit next to the plans
    files = [f for f in sorted(directory.glob("*.csv")) if _is_plan_file(f)]
    if not files:
        raise ConfigError(f"no plan CSV files in {directory}")
    plans = []
    for f in files:
        try:
            plans.append(ReferencePlan.from_csv(f))
        except (ValueError, KeyError, IndexError) as e:
            raise ConfigError(f"malformed plan {f.name}: {e}") from None
    for f, p in zip(files, plans):
        if p.system != system:
            raise ConfigError(f"plan {f.name} is for {p.system}, checkpoint is for {system}")
    return plans


def evaluate_checkpoints(paths, n_traj=None, plans_dir=None, eval_seed=None, center=None):
    """Evaluate checkpoints on a shared plan set; returns result rows."""
    results, plan_cache = [], {}
    for path in paths:
        agent, meta = load_checkpoint(path)
        cfg = load_config(text=meta["config"]) if meta["config"] else load_config(env=meta["env"])
        n_obs = obs_dim(agent.kind, cfg.system)
        if meta["obs_dim"] != n_obs or meta["act_dim"] != cfg.system.action_dim:
            raise CheckpointError(
                f"{path}: architecture {meta['architecture']['pi']} does not match "
                f"{meta['env']}/{agent.kind.value} (obs {n_obs}, act {cfg.system.action_dim})")
        n = n_traj or cfg.eval.trajectories
        seed = cfg.eval.seed if eval_seed is None else eval_seed
        c = cfg.eval.center if center is None else center
        key = (meta["env"], n, seed, c, str(plans_dir))
        if key not in plan_cache:
            plan_cache[key] = (_load_plans(Path(plans_dir), meta["env"]) if plans_dir
                               else standard_plans(cfg.system, n, seed, c))
        summ = evaluate_policy(agent.act, cfg.system, plan_cache[key], cfg.env_cfg.init, seed,
                               cfg.env_cfg.cost)
        run_seed = meta["seed"] if meta["seed"] is not None else 0
        results += [(meta["env"], agent.kind.value, run_seed, i, s) for i, s in enumerate(summ)]
    return results


def cmd_eval(args) -> int:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    try:
        results = evaluate_checkpoints(args.checkpoints, args.trajectories, args.plans,
                                       args.eval_seed, args.center)
    except CheckpointError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    write_results_csv(results, out / "eval_results.csv")
    rows = aggregate(results)
    write_table_csv(rows, out / "eval_table.csv")
    for r in rows:
        m, s = r.mean, r.std
        print(f"{r.env:10s} {r.reduction:22s} seeds={r.n_seeds}  r {m.rms_r_cm:8.2f}±{s.rms_r_cm:.2f} cm"
              f"  v {m.rms_v_cmps:8.2f}±{s.rms_v_cmps:.2f} cm/s  R {m.rms_R_rad:.3f}±{s.rms_R_rad:.3f} rad"
              f"  w {m.rms_w_radps:.3f}±{s.rms_w_radps:.3f} rad/s")
    return EXIT_OK


# ---------------------------------------------------------------- verify

def cmd_verify(args) -> int:
    env = args.env or (None if args.config else "particle")
    cfg = load_config(args.config, env=env, overrides={"run.env": env} if env else {})
    try:
        kind = ReductionKind.parse(args.reduction or cfg.reduction.value)
        check_compatible(cfg.env, kind, verify=True)
    except ValueError as e:
        raise ConfigError(f"run.env/run.reduction: {e}", ["run.env", "run.reduction"]) from None
    seed = cfg.seed if args.seed is None else args.seed
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    report = verify_symmetry(cfg.system, kind, args.samples, rng, cfg.env_cfg.cost)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "verify_report.csv").write_text(report.to_csv(), encoding="utf-8")
    print(report.to_text())
    return EXIT_OK if report.passed else EXIT_FAIL


# ---------------------------------------------------------------- plan

_PLAN_VECTORS = ("amplitudes", "freqs", "phases", "center", "rot_amplitudes", "rot_freqs",
                 "rot_phases")
_PLAN_SCALARS = ("yaw_amplitude", "yaw_freq", "yaw_phase", "duration")


def read_plan_spec(path) -> tuple[str, LissajousSpec, RunConfig]:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as e:
        raise ConfigError(f"cannot read plan spec {path}: {e}") from None
    if "plan" not in cp:
        raise ConfigError("plan spec needs a [plan] section", ["plan"])
    sec = dict(cp["plan"])
    system = sec.pop("system", None)
    if system not in ENVS:
        raise ConfigError(f"plan.system: expected one of {', '.join(ENVS)}, got {system!r}",
                          ["plan.system"])
    kw = {}
    for k, v in sec.items():
        try:
            if k in _PLAN_VECTORS:
                vals = tuple(float(p) for p in v.split(","))
                kw[k] = vals * 3 if len(vals) == 1 else vals
                if len(kw[k]) != 3:
                    raise ValueError
            elif k in _PLAN_SCALARS:
                kw[k] = float(v)
            else:
                raise ConfigError(f"plan.{k}: unknown key", [f"plan.{k}"])
        except ValueError:
            raise ConfigError(f"plan.{k}: bad value {v!r}", [f"plan.{k}"]) from None
    try:
        spec = LissajousSpec(**kw)
    except ValueError as e:
        raise ConfigError(f"[plan] {e}", ["plan"]) from None
    system_over = {f"system.{k}": v for k, v in cp["system"].items()} if "system" in cp else {}
    extra = set(cp.sections()) - {"plan", "system"}
    if extra:
        raise ConfigError(f"unknown section(s) {sorted(extra)}", sorted(extra))
    return system, spec, load_config(env=system, overrides=system_over)


def cmd_plan(args) -> int:
    if not args.config:
        raise ConfigError("plan needs --config pointing at a plan spec", ["--config"])
    system, spec, cfg = read_plan_spec(args.config)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    try:
        plan = plan_lissajous(system, spec, cfg.system.params)
    except PlanningError as e:
        print(f"planning failed: {e}", file=sys.stderr)
        return EXIT_FAIL
    plan.to_csv(out / "plan.csv")
    rep = replay_report(plan, cfg.system.params)
    keys = list(rep)
    _write_csv(out / "plan_report.csv", ["system", "steps"] + keys,
               [[system, len(plan)] + [rep[k] for k in keys]])
    print(f"{system} plan: {len(plan)} steps, dt={plan.dt}; replay max residual {rep['max']:.3e}")
    return EXIT_OK


# ---------------------------------------------------------------- sweep

def cmd_sweep(args) -> int:
    base = load_config(args.config, overrides=_overrides(args))
    reductions = ([ReductionKind.parse(r) for r in args.reductions.split(",")]
                  if args.reductions else list(TRAINABLE[base.env]))
    for k in reductions:
        try:
            check_compatible(base.env, k)
        except ValueError as e:
            raise ConfigError(f"run.reduction: {e}", ["run.env", "run.reduction"]) from None
    root = Path(base.out)
    summary, ckpts = [], []
    for k in reductions:
        for seed in range(base.seed, base.seed + args.seeds):
            ov = {"run.reduction": k.value, "run.seed": seed}
            if args.steps is not None:
                ov["ppo.total_steps"] = args.steps
            cfg = load_config(text=base.snapshot(), overrides=ov)
            out = root / base.env / k.value / f"seed{seed}"
            info = run_training(cfg, out)
            res = info["result"]
            print(f"{base.env}/{k.value} seed={seed}: auc {info['auc']:.4f}", flush=True)
            summary.append([base.env, k.value, seed, info["auc"],
                            res.log[-1]["mean_reward"] if res.log else float("nan"),
                            int(res.stopped_early)])
            ckpts.append(out / "checkpoint.json")
    _write_csv(root / "sweep_summary.csv",
               ["env", "reduction", "seed", "auc_mean_reward", "final_mean_reward", "stopped_early"],
               summary)
    results = evaluate_checkpoints(ckpts)
    write_results_csv(results, root / "eval_results.csv")
    write_table_csv(aggregate(results), root / "eval_table.csv")
    print(f"sweep done: {len(ckpts)} runs, tables in {root}")
    return EXIT_OK


# ---------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="symtrack", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, steps=True):
        sp.add_argument("--config", help="INI run config (defaults per --env otherwise)")
        sp.add_argument("--env", choices=ENVS)
        sp.add_argument("--reduction")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        if steps:
            sp.add_argument("--steps", type=int, help="override ppo.total_steps")

    common(sub.add_parser("train", help="train one policy"))
    e = sub.add_parser("eval", help="evaluate checkpoints on planned trajectories")
    e.add_argument("checkpoints", nargs="+")
    e.add_argument("--plans", help="directory of plan CSVs (default: seeded Lissajous set)")
    e.add_argument("--trajectories", type=int)
    e.add_argument("--eval-seed", type=int)
    e.add_argument("--center", type=float)
    e.add_argument("--out")
    v = sub.add_parser("verify", help="randomized symmetry and homomorphism checks")
    common(v, steps=False)
    v.add_argument("--samples", type=int, default=1000)
    pl = sub.add_parser("plan", help="plan a Lissajous reference from a spec file")
    pl.add_argument("--config", help="plan spec INI with a [plan] section")
    pl.add_argument("--out")
    s = sub.add_parser("sweep", help="train and evaluate seeds x reductions sequentially")
    common(s)
    s.add_argument("--seeds", type=int, default=3)
    s.add_argument("--reductions", help="comma list (default: all for the env)")
    return p


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "verify": cmd_verify, "plan": cmd_plan,
            "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
