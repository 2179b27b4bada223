"""Short tour on the point mass: symmetry checks, one quick training run per
reduction, then evaluation near the origin and 3 m away from it.

    python3 demos/particle_tour.py [steps] [outdir]

With the default 100k steps per run this takes a few minutes on one core.
The reduced policy only sees the tracking error, so its numbers barely move
with the evaluation centre. The baseline sees absolute positions and gets
worse far from where it was trained.
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

from symtrack.cli import evaluate_checkpoints, run_training
from symtrack.config import load_config
from symtrack.evaluation import aggregate
from symtrack.symmetry import verify_symmetry

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 100_000
root = Path(sys.argv[2]) if len(sys.argv) > 2 else Path(tempfile.mkdtemp(prefix="symtrack_"))

print("symmetry checks (worst deviation over 1000 random samples)")
for name in ("baseline", "translation", "translation-velocity", "full"):
    cfg = load_config(env="particle", overrides={"run.reduction": name})
    rep = verify_symmetry(cfg.system, cfg.reduction, 1000, np.random.default_rng(0))
    print(f"  {name:22s} {max(rep.deviations.values()):.1e}")

ckpts = []
for name in ("baseline", "full"):
    cfg = load_config(env="particle", overrides={"run.reduction": name, "ppo.total_steps": steps})
    info = run_training(cfg, root / name)
    print(f"trained {name}: auc {info['auc']:.3f}")
    ckpts.append(root / name / "checkpoint.json")

for center in (0.0, 3.0):
    rows = aggregate(evaluate_checkpoints(ckpts, n_traj=10, center=center))
    print(f"evaluation centre {center} m")
    for r in rows:
        m = r.mean
        print(f"  {r.reduction:10s} position {m.rms_r_cm:8.1f} cm   velocity {m.rms_v_cmps:8.1f} cm/s")
print(f"artifacts in {root}")
