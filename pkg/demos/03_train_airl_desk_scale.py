"""Desk-scale adversarial imitation on the straight-road fixture.

Generates scripted-expert demonstrations, trains the adversarial loop for a
handful of iterations (bump --iters for a model that actually imitates),
and plots the training signals.

Run:  python3 demos/03_train_airl_desk_scale.py --iters 40 --out run_demo
"""

import argparse
import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from condsim.airl import AirlConfig, airl_train
from condsim.presets import make_preset, validation_rmse, validation_situations
from condsim.rl_ppo import TrainerConfig


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--iters", type=int, default=40)
    parser.add_argument("--out", default="run_demo")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    preset = make_preset("straight")
    demos = preset.demonstrations(40, seed=args.seed)
    print(f"{len(demos)} expert pairs")
    envs = preset.make_envs(8, seed=args.seed)
    val = validation_situations(preset, 8)

    config = TrainerConfig(iterations=args.iters, n_envs=8)
    out = Path(args.out)
    result = airl_train(envs, demos, config, AirlConfig(), seed=args.seed,
                        out_dir=out, validate_fn=lambda p: validation_rmse(val, p),
                        validate_every=10, log_file=out / "train_log.jsonl",
                        quiet=False)
    print(f"best validation RMSE {result.best_metric:.2f} m "
          f"at iteration {result.best_iteration}")

    log = result.log
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.4))
    axes[0].plot([e["mean_reward"] for e in log])
    axes[0].set_title("mean surrogate reward")
    axes[1].plot([e["disc_loss"] for e in log])
    axes[1].axhline(2 * 0.6931, ls="--", c="gray", lw=1)
    axes[1].set_title("discriminator BCE (2 log 2 dashed)")
    axes[2].plot([e["mean_episode_length"] for e in log])
    axes[2].set_title("mean episode length (steps)")
    for ax in axes:
        ax.set_xlabel("iteration")
    fig.tight_layout()
    fig.savefig(out / "training.png", dpi=110)
    print(f"checkpoints and curves -> {out}/")


if __name__ == "__main__":
    main()
