"""The condsim command line.

Subcommands: train, bc-train, eval, predict, condition, ingest, serve.
All outputs are machine-readable (JSON / JSON-lines); exit status is
nonzero on any error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .airl import (AirlConfig, ExpertBuffer, airl_train, bc_train,
                   load_model_checkpoint, save_model_checkpoint)
from .conditional import (PlanError, PolicyModel, evaluate, plan_from_json,
                          predict, predict_conditional, rollout_to_jsonl,
                          situation_from_rollout)
from .experts import ScriptedExpert
from .fixtures import fixture_path
from .map_core import MapLoadError, load_map
from .nets import init_policy_params
from .presets import make_preset, validation_rmse, validation_situations
from .rl_ppo import TrainerConfig
from .sim_engine import SpawnError, spawn_situation


def _load_json(path):
    with open(path) as f:
        return json.load(f)


def _config_section(doc: dict, name: str, cls):
    """Build a config dataclass from a JSON section, rejecting unknown keys."""
    section = doc.get(name, {})
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ValueError(f"unknown {name} config keys: {sorted(unknown)}")
    return cls(**section)


def _resolve_map(spec: dict, scenario_file: Path):
    candidate = scenario_file.parent / spec["map"]
    if not candidate.exists():
        candidate = fixture_path(spec["map"])
    return load_map(candidate)


def _load_scenario(path_str: str):
    path = Path(path_str)
    if not path.exists():
        builtin = fixture_path(path_str)
        if builtin.exists():
            path = builtin
        else:
            raise FileNotFoundError(f"scenario file not found: {path_str}")
    spec = _load_json(path)
    return spec, _resolve_map(spec, path)


def _behavior(args, road_map):
    if getattr(args, "scripted", False):
        return ScriptedExpert(road_map)
    if not args.checkpoint:
        raise ValueError("pass --checkpoint PATH or --scripted")
    policy, _, _, _ = load_model_checkpoint(args.checkpoint)
    return PolicyModel(policy)


# ------------------------------------------------------------------ commands

def cmd_train(args) -> int:
    doc = _load_json(args.config) if args.config else {}
    trainer = _config_section(doc, "trainer", TrainerConfig)
    airl_cfg = _config_section(doc, "airl", AirlConfig)
    if args.iters is not None:
        trainer.iterations = args.iters
    preset = make_preset(doc.get("preset", args.preset))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    demos = preset.demonstrations(doc.get("demo_episodes", args.demo_episodes),
                                  seed=args.seed)
    envs = preset.make_envs(trainer.n_envs, seed=args.seed)
    val_sits = validation_situations(preset, doc.get("validation_rollouts", 16))
    result = airl_train(
        envs, demos, trainer, airl_cfg, seed=args.seed, out_dir=out,
        validate_fn=lambda p: validation_rmse(val_sits, p),
        validate_every=args.validate_every, log_file=out / "train_log.jsonl",
        quiet=args.quiet)
    save_model_checkpoint(out / "checkpoint.ckpt", result.policy, result.critic,
                          result.discriminator,
                          meta={"preset": preset.name, "iterations": trainer.iterations,
                                "best_rmse": result.best_metric,
                                "best_iteration": result.best_iteration})
    with open(out / "config.json", "w") as f:
        json.dump({"preset": preset.name,
                   "trainer": {fl.name: getattr(trainer, fl.name)
                               for fl in fields(trainer)},
                   "airl": {fl.name: getattr(airl_cfg, fl.name)
                            for fl in fields(airl_cfg)}}, f, indent=2)
    print(f"checkpoint written to {out / 'checkpoint.ckpt'}")
    return 0


def cmd_bc_train(args) -> int:
    preset = make_preset(args.preset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.buffer:
        demos = ExpertBuffer.load(args.buffer)
    else:
        demos = preset.demonstrations(args.demo_episodes, seed=args.seed)
    policy = init_policy_params(args.seed)
    train_losses, _ = bc_train(demos, policy, epochs=args.iters, seed=args.seed)
    save_model_checkpoint(out / "checkpoint.ckpt", policy,
                          meta={"method": "bc", "preset": preset.name,
                                "epochs": args.iters,
                                "final_nll": train_losses[-1] if train_losses else None})
    with open(out / "train_log.jsonl", "w") as f:
        for i, loss in enumerate(train_losses):
            f.write(json.dumps({"epoch": i, "nll": loss}) + "\n")
    print(f"checkpoint written to {out / 'checkpoint.ckpt'}")
    return 0


def _eval_situations(args):
    """Ground-truth situations for eval: scripted-expert rollouts on the
    given (or built-in) scenario files."""
    scenario_files = []
    if args.scenarios:
        root = Path(args.scenarios)
        scenario_files = sorted(root.glob("*.json")) if root.is_dir() else [root]
    else:
        scenario_files = [fixture_path(n) for n in
                          ("scenario_straight.json", "scenario_crossing.json",
                           "scenario_conflict.json")]
    situations = []
    for path in scenario_files:
        spec = _load_json(path)
        if "agents" not in spec:
            continue
        road_map = _resolve_map(spec, Path(path))
        horizon = int(spec.get("horizon_steps", 50))
        dt = float(spec.get("dt", 0.2))
        for e in range(args.episodes):
            world0 = spawn_situation(road_map, spec, args.seed + e)
            gt = predict(world0, ScriptedExpert(road_map), horizon=horizon,
                         dt=dt, seed=0, mode="mean")
            situations.append(situation_from_rollout(gt, horizon))
    return situations


def cmd_eval(args) -> int:
    situations = _eval_situations(args)
    policy, _, _, _ = load_model_checkpoint(args.checkpoint)
    report = evaluate(situations, policy, seed=args.seed, mode=args.mode)
    out = Path(args.out)
    with open(out, "w") as f:
        json.dump(report.to_dict(), f, indent=2)
    if args.hist_csv:
        with open(args.hist_csv, "w") as f:
            f.write(report.histograms_csv())
    print(f"rmse={report.rmse:.3f} collision_rate={report.collision_rate:.4f} "
          f"off_track_rate={report.off_track_rate:.4f} -> {out}")
    return 0


def cmd_predict(args) -> int:
    spec, road_map = _load_scenario(args.scenario)
    model = _behavior(args, road_map)
    world0 = spawn_situation(road_map, spec, args.seed)
    result = predict(world0, model, horizon=args.horizon, dt=args.dt,
                     seed=args.seed, mode=args.mode)
    Path(args.out).write_text(rollout_to_jsonl(result))
    print(f"trace written to {args.out}")
    return 0


def cmd_condition(args) -> int:
    spec, road_map = _load_scenario(args.scenario)
    model = _behavior(args, road_map)
    plan = plan_from_json(_load_json(args.plan))
    world0 = spawn_situation(road_map, spec, args.seed)
    result = predict_conditional(world0, model, args.av, plan,
                                 horizon=args.horizon, dt=args.dt,
                                 seed=args.seed, mode=args.mode)
    Path(args.out).write_text(rollout_to_jsonl(result))
    print(f"conditional trace written to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    from .data_ingest import (load_tracks, situation_to_pairs, slice_situations,
                              split_and_balance)

    road_map = load_map(args.map)
    tracks_path = Path(args.tracks)
    sources = []
    if tracks_path.is_dir():
        for sub in sorted(tracks_path.iterdir()):
            if sub.is_dir():
                for csv_file in sorted(sub.glob("*.csv")):
                    sources.append((sub.name, csv_file.stem, csv_file))
            elif sub.suffix == ".csv":
                sources.append((tracks_path.name, sub.stem, sub))
    else:
        sources.append((tracks_path.parent.name, tracks_path.stem, tracks_path))

    situations = []
    for location, recording, csv_file in sources:
        records = load_tracks(csv_file, location, recording)
        situations += slice_situations(records, road_map, location, recording)
    if not situations:
        print("no usable situations found", file=sys.stderr)
        return 1
    train, val, test = split_and_balance(situations, args.val, args.test, args.seed)
    pairs = []
    for sit in train:
        pairs += situation_to_pairs(sit)
    ExpertBuffer(pairs).save(args.out)
    manifest = {
        "locations": sorted({s.location for s in situations}),
        "counts": {"train": len(train), "val": len(val), "test": len(test)},
        "splits": {
            name: sorted({f"{s.location}/{s.recording}:{s.start_ms}" for s in split})
            for name, split in (("train", train), ("val", val), ("test", test))
        },
        "n_pairs": len(pairs),
    }
    if args.manifest:
        with open(args.manifest, "w") as f:
            json.dump(manifest, f, indent=2)
    print(f"{len(pairs)} expert pairs -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    from .service import run_server

    run_server(args.port, args.scenarios, checkpoint=args.checkpoint,
               scripted=args.scripted)
    return 0


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="condsim",
                                description="closed-loop conditional traffic prediction")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="adversarial imitation training")
    t.add_argument("--out", required=True)
    t.add_argument("--config", help="JSON with 'trainer'/'airl' sections")
    t.add_argument("--preset", default="intersection",
                   choices=("straight", "intersection"))
    t.add_argument("--iters", type=int, default=None)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--demo-episodes", type=int, default=150)
    t.add_argument("--validate-every", type=int, default=10)
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(fn=cmd_train)

    b = sub.add_parser("bc-train", help="behavior-cloning baseline")
    b.add_argument("--out", required=True)
    b.add_argument("--preset", default="intersection",
                   choices=("straight", "intersection"))
    b.add_argument("--buffer", help="expert buffer JSONL (else scripted demos)")
    b.add_argument("--iters", type=int, default=60, help="epochs")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--demo-episodes", type=int, default=150)
    b.set_defaults(fn=cmd_bc_train)

    e = sub.add_parser("eval", help="closed-loop metrics vs ground truth")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--scenarios", help="scenario file or directory (default: built-ins)")
    e.add_argument("--episodes", type=int, default=5, help="spawns per scenario")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--mode", default="mean", choices=("mean", "sample"))
    e.add_argument("--out", default="metrics.json")
    e.add_argument("--hist-csv")
    e.set_defaults(fn=cmd_eval)

    pr = sub.add_parser("predict", help="unconditional closed-loop rollout")
    pr.add_argument("--scenario", required=True)
    pr.add_argument("--checkpoint")
    pr.add_argument("--scripted", action="store_true",
                    help="drive with the scripted controller instead")
    pr.add_argument("--horizon", type=int, default=50)
    pr.add_argument("--dt", type=float, default=0.2)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--mode", default="mean", choices=("mean", "sample"))
    pr.add_argument("--out", default="trace.jsonl")
    pr.set_defaults(fn=cmd_predict)

    c = sub.add_parser("condition", help="rollout with a plan-driven vehicle")
    c.add_argument("--scenario", required=True)
    c.add_argument("--checkpoint")
    c.add_argument("--scripted", action="store_true")
    c.add_argument("--av", required=True, help="designated vehicle id")
    c.add_argument("--plan", required=True, help="plan JSON file")
    c.add_argument("--horizon", type=int, default=50)
    c.add_argument("--dt", type=float, default=0.2)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--mode", default="mean", choices=("mean", "sample"))
    c.add_argument("--out", default="trace.jsonl")
    c.set_defaults(fn=cmd_condition)

    i = sub.add_parser("ingest", help="track CSVs -> expert buffer + splits")
    i.add_argument("--tracks", required=True, help="CSV file or directory")
    i.add_argument("--map", required=True)
    i.add_argument("--out", default="expert_buffer.jsonl")
    i.add_argument("--manifest")
    i.add_argument("--val", type=float, default=0.2)
    i.add_argument("--test", type=float, default=0.3)
    i.add_argument("--seed", type=int, default=0)
    i.set_defaults(fn=cmd_ingest)

    s = sub.add_parser("serve", help="HTTP service for the what-if UI")
    s.add_argument("--port", type=int, default=8700)
    s.add_argument("--scenarios", required=True)
    s.add_argument("--checkpoint")
    s.add_argument("--scripted", action="store_true")
    s.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (MapLoadError, SpawnError, PlanError, FileNotFoundError,
            ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
