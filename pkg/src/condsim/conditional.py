"""Plan-conditioned closed-loop prediction and the evaluation metrics.

predict() rolls the world forward with every agent driven by a behavior
model. predict_conditional() overrides one designated vehicle with a Plan
(fixed poses, an action sequence, or a per-step callback) while everyone
else reacts through their observations of the realized states; each step
depends only on the previous world state, so conditioning and prediction
stay mutually consistent.

Determinism: every agent draws from its own seeded stream, so rollouts are
bit-reproducible and conditioning one agent never perturbs another's
sampling.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .map_core import RoadMap
from .nets import ActionDistribution, PolicyParams, policy_forward
from .observation import DEFAULT_RADIUS, build_observation
from .sim_engine import Action, WorldState, step

__all__ = [
    "Plan", "FixedTrajectory", "ActionSequence", "StepCallback", "PlanError",
    "RolloutResult", "MetricsReport", "PolicyModel", "predict",
    "predict_conditional", "evaluate", "EvalSituation", "rollout_to_jsonl",
    "replay_rollout", "plan_from_json", "agent_rng_streams",
    "ACCEL_BIN_EDGES", "STEER_BIN_EDGES",
]

ACCEL_BIN_EDGES = np.round(np.arange(-8.0, 4.0 + 1e-9, 0.25), 6)
STEER_BIN_EDGES = np.round(np.arange(-0.7, 0.7 + 1e-9, 0.02), 6)


class PlanError(ValueError):
    """Raised for malformed or too-short plans."""


@dataclass(frozen=True)
class FixedTrajectory:
    """Per-step (x, y, heading) poses applied directly, bypassing kinematics;
    speed is recovered by finite differences for the observers."""
    poses: tuple
    hold_last: bool = False


@dataclass(frozen=True)
class ActionSequence:
    """Per-step actions fed through the normal kinematics."""
    actions: tuple
    hold_last: bool = False


@dataclass(frozen=True)
class StepCallback:
    """Opaque per-step controller, the hook for tree-structured planners."""
    fn: object  # Callable[[WorldState], Action]


Plan = FixedTrajectory | ActionSequence | StepCallback


def plan_from_json(doc: dict) -> Plan:
    """Wire format for plans; see README for the schema."""
    if not isinstance(doc, dict) or "type" not in doc:
        raise PlanError("plan must be an object with a 'type' field")
    kind = doc["type"]
    if kind == "fixed_trajectory":
        poses = doc.get("poses")
        if not isinstance(poses, list) or not poses:
            raise PlanError("fixed_trajectory plan needs a non-empty 'poses' list")
        parsed = []
        for i, p in enumerate(poses):
            if not isinstance(p, (list, tuple)) or len(p) != 3:
                raise PlanError(f"poses[{i}]: expected [x, y, heading]")
            parsed.append((float(p[0]), float(p[1]), float(p[2])))
        return FixedTrajectory(tuple(parsed), bool(doc.get("hold_last", False)))
    if kind == "action_sequence":
        actions = doc.get("actions")
        if not isinstance(actions, list) or not actions:
            raise PlanError("action_sequence plan needs a non-empty 'actions' list")
        parsed = []
        for i, a in enumerate(actions):
            if not isinstance(a, (list, tuple)) or len(a) != 2:
                raise PlanError(f"actions[{i}]: expected [acceleration, steering]")
            parsed.append(Action(float(a[0]), float(a[1])))
        return ActionSequence(tuple(parsed), bool(doc.get("hold_last", False)))
    if kind == "reactive_brake":
        # the JSON-expressible StepCallback: brake whenever any other vehicle
        # is within trigger_m, else hold cruise_accel
        trigger = float(doc.get("trigger_m", 8.0))
        brake = float(doc.get("brake", -4.0))
        cruise = float(doc.get("cruise_accel", 0.0))
        av_id = doc.get("av_id")

        def fn(world: WorldState) -> Action:
            av = world.agent(av_id)
            for other in world.alive_agents():
                if other.id != av_id and np.hypot(*(other.position - av.position)) <= trigger:
                    return Action(brake, 0.0)
            return Action(cruise, 0.0)

        if av_id is None:
            raise PlanError("reactive_brake plan needs 'av_id'")
        return StepCallback(fn)
    raise PlanError(f"unknown plan type '{kind}'")


@dataclass
class RolloutResult:
    states: list                         # WorldState trace, length <= horizon+1
    actions: list                        # per step: dict id -> Action actually applied
    pose_overrides: list                 # per step: dict id -> (pos, heading, speed)
    events: list = field(default_factory=list)  # (step, kind, *ids)

    def trajectory(self, agent_id: str) -> np.ndarray:
        """(T, 5) rows of [x, y, heading, speed, alive] for one agent."""
        rows = []
        for w in self.states:
            a = w.agent(agent_id)
            rows.append([a.position[0], a.position[1], a.heading, a.speed,
                         1.0 if a.alive else 0.0])
        return np.asarray(rows)

    def removal_counts(self) -> dict:
        final = self.states[-1]
        counts = {"route_end": 0, "off_track": 0, "collision": 0}
        for a in final.agents:
            if not a.alive:
                counts[a.removal_reason] += 1
        return counts


class PolicyModel:
    """BehaviorModel adapter over learned policy parameters."""

    def __init__(self, params: PolicyParams, radius: float = DEFAULT_RADIUS):
        self.params = params
        self.radius = radius

    def reset(self):
        pass

    def act(self, world: WorldState, observations: dict, mode: str, rngs: dict) -> dict:
        actions = {}
        for aid in sorted(observations):
            dist: ActionDistribution = policy_forward(observations[aid], self.params)
            a = dist.mean if mode == "mean" else dist.sample(rngs[aid])
            actions[aid] = Action(float(a[0]), float(a[1]))
        return actions


def agent_rng_streams(seed: int, agent_ids) -> dict:
    """Independent per-agent generators: conditioning one agent away from the
    sampler must not shift anyone else's draws."""
    return {aid: np.random.default_rng(
        np.random.SeedSequence(entropy=seed,
                               spawn_key=(zlib.crc32(aid.encode()),)))
        for aid in agent_ids}


def _as_model(policy):
    return PolicyModel(policy) if isinstance(policy, PolicyParams) else policy


def predict(world0: WorldState, policy, horizon: int = 50, dt: float = 0.2,
            seed: int = 0, mode: str = "mean",
            radius: float = DEFAULT_RADIUS) -> RolloutResult:
    """Roll every agent forward with the behavior model for `horizon` steps."""
    if mode not in ("mean", "sample"):
        raise ValueError(f"mode must be 'mean' or 'sample', got '{mode}'")
    model = _as_model(policy)
    if hasattr(model, "reset"):
        model.reset()
    world = replace(world0, dt=dt)
    rngs = agent_rng_streams(seed, [a.id for a in world.agents])
    result = RolloutResult(states=[world], actions=[], pose_overrides=[])
    for k in range(horizon):
        alive = world.alive_ids()
        if not alive:
            break
        obs = {aid: build_observation(world, aid, radius) for aid in alive}
        actions = model.act(world, obs, mode, rngs)
        world = step(world, actions)
        result.states.append(world)
        result.actions.append(actions)
        result.pose_overrides.append({})
        for ev in world.events:
            result.events.append((k + 1,) + ev)
    return result


def _plan_action(plan, k: int, horizon: int, world: WorldState, av_id: str):
    """Returns (action, pose_override) for the AV at step k."""
    if isinstance(plan, ActionSequence):
        seq = plan.actions
        if k < len(seq):
            return seq[k], None
        if plan.hold_last:
            return seq[-1], None
        raise PlanError(f"action sequence of length {len(seq)} exhausted at step {k}")
    if isinstance(plan, FixedTrajectory):
        poses = plan.poses
        if k < len(poses):
            x, y, h = poses[k]
        elif plan.hold_last:
            x, y, h = poses[-1]
        else:
            raise PlanError(f"fixed trajectory of length {len(poses)} exhausted at step {k}")
        prev = world.agent(av_id).position
        speed = float(np.hypot(x - prev[0], y - prev[1])) / world.dt
        return None, (np.array([x, y]), h, speed)
    if isinstance(plan, StepCallback):
        return plan.fn(world), None
    raise PlanError(f"unsupported plan type {type(plan)}")


def predict_conditional(world0: WorldState, policy, av_id: str, plan: Plan,
                        horizon: int = 50, dt: float = 0.2, seed: int = 0,
                        mode: str = "mean",
                        radius: float = DEFAULT_RADIUS) -> RolloutResult:
    """predict(), except `av_id` follows `plan` and is exempt from removal
    (its collisions are still registered as events)."""
    av = world0.agent(av_id)  # raises KeyError for unknown ids
    if not av.alive:
        raise ValueError(f"designated vehicle '{av_id}' is not alive")
    if isinstance(plan, (ActionSequence, FixedTrajectory)):
        n = len(plan.actions if isinstance(plan, ActionSequence) else plan.poses)
        if n < horizon and not plan.hold_last:
            raise PlanError(f"plan covers {n} steps of a {horizon}-step horizon "
                            f"and does not hold_last")
    model = _as_model(policy)
    if hasattr(model, "reset"):
        model.reset()
    world = replace(world0, dt=dt)
    rngs = agent_rng_streams(seed, [a.id for a in world.agents])
    result = RolloutResult(states=[world], actions=[], pose_overrides=[])
    exempt = frozenset([av_id])
    for k in range(horizon):
        alive = world.alive_ids()
        if not alive:
            break
        others = [aid for aid in alive if aid != av_id]
        obs = {aid: build_observation(world, aid, radius) for aid in others}
        actions = model.act(world, obs, mode, rngs) if others else {}
        av_action, override = _plan_action(plan, k, horizon, world, av_id)
        overrides = {}
        if override is not None:
            overrides[av_id] = override
        else:
            actions[av_id] = av_action
        world = step(world, actions, pose_overrides=overrides,
                     exempt_from_removal=exempt)
        result.states.append(world)
        result.actions.append(actions)
        result.pose_overrides.append(overrides)
        for ev in world.events:
            result.events.append((k + 1,) + ev)
    return result


def replay_rollout(result: RolloutResult) -> bool:
    """Re-derive each state from its predecessor and the stored actions;
    True iff the trace is reproduced exactly (the rollout is Markov)."""
    for k in range(len(result.actions)):
        prev, nxt = result.states[k], result.states[k + 1]
        redo = step(prev, result.actions[k],
                    pose_overrides=result.pose_overrides[k],
                    exempt_from_removal=_replay_exempt(prev, nxt))
        for a, b in zip(redo.agents, nxt.agents):
            if (a.id != b.id or a.alive != b.alive
                    or not np.array_equal(a.position, b.position)
                    or a.heading != b.heading or a.speed != b.speed):
                return False
    return True


def _replay_exempt(prev: WorldState, nxt: WorldState) -> frozenset:
    """Agents that survived despite a registered collision were exempt."""
    colliding = set()
    for ev in nxt.events:
        if ev[0] == "collision_pair":
            colliding.update(ev[1:])
    return frozenset(aid for aid in colliding if nxt.agent(aid).alive)


# ------------------------------------------------------------------ metrics

@dataclass
class EvalSituation:
    """Initial world plus per-agent ground-truth positions at each step.

    gt_positions rows may contain NaN where the vehicle is absent."""
    world0: WorldState
    gt_positions: dict      # agent id -> (horizon+1, 2)
    horizon: int = 50


@dataclass
class MetricsReport:
    rmse: float
    collision_rate: float
    off_track_rate: float
    histograms: dict
    n_vehicles: int
    horizon_s: float

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "collision_rate": self.collision_rate,
            "off_track_rate": self.off_track_rate,
            "histograms": self.histograms,
            "n_vehicles": self.n_vehicles,
            "horizon_s": self.horizon_s,
        }

    def histograms_csv(self) -> str:
        lines = ["action,bin_left,bin_right,density"]
        for action in ("acceleration", "steering"):
            h = self.histograms[action]
            for left, right, value in zip(h["bin_edges"][:-1], h["bin_edges"][1:],
                                          h["density"]):
                lines.append(f"{action},{left},{right},{value}")
        return "\n".join(lines) + "\n"


def _action_histograms(accels, steers):
    out = {}
    for name, values, edges in (("acceleration", accels, ACCEL_BIN_EDGES),
                                ("steering", steers, STEER_BIN_EDGES)):
        counts, _ = np.histogram(values, bins=edges)
        total = counts.sum()
        density = counts / total if total else counts.astype(float)
        out[name] = {"bin_edges": [float(e) for e in edges],
                     "density": [float(d) for d in density]}
    return out


def evaluate(situations: list, policy, seed: int = 0, mode: str = "mean",
             radius: float = DEFAULT_RADIUS) -> MetricsReport:
    """Closed-loop prediction metrics against ground truth.

    RMSE is taken at the final step over vehicles present in the ground
    truth there; vehicles removed earlier in the prediction contribute
    their last predicted position. Collision/off-track rates count removed
    vehicles over initially present vehicles.
    """
    sq_errors = []
    n_initial = 0
    n_collision = 0
    n_off_track = 0
    accels, steers = [], []
    horizon_s = 0.0
    for i, sit in enumerate(situations):
        result = predict(sit.world0, policy, horizon=sit.horizon,
                         dt=sit.world0.dt, seed=seed + i, mode=mode, radius=radius)
        horizon_s = sit.horizon * sit.world0.dt
        n_initial += len(sit.world0.agents)
        counts = result.removal_counts()
        n_collision += counts["collision"]
        n_off_track += counts["off_track"]
        for step_actions in result.actions:
            for act in step_actions.values():
                accels.append(act.acceleration)
                steers.append(act.steering)
        for aid, gt in sit.gt_positions.items():
            gt_final = gt[min(sit.horizon, len(gt) - 1)]
            if np.isnan(gt_final).any():
                continue  # vehicle absent from ground truth at evaluation time
            # removed agents keep their last integrated position in the record
            traj = result.trajectory(aid)
            pred_final = traj[-1, :2]
            sq_errors.append(float(((pred_final - gt_final) ** 2).sum()))
    if not sq_errors:
        raise ValueError("no vehicles matched between prediction and ground truth")
    return MetricsReport(
        rmse=float(np.sqrt(np.mean(sq_errors))),
        collision_rate=n_collision / n_initial,
        off_track_rate=n_off_track / n_initial,
        histograms=_action_histograms(accels, steers),
        n_vehicles=n_initial,
        horizon_s=horizon_s,
    )


def situation_from_rollout(result: RolloutResult, horizon: int) -> EvalSituation:
    """Treat a completed rollout as ground truth (desk-scale evaluation)."""
    world0 = result.states[0]
    gt = {}
    for agent in world0.agents:
        rows = np.full((horizon + 1, 2), np.nan)
        for k, w in enumerate(result.states[:horizon + 1]):
            a = w.agent(agent.id)
            if a.alive or k == 0:
                rows[k] = a.position
            else:
                break
        gt[agent.id] = rows
    return EvalSituation(world0=world0, gt_positions=gt, horizon=horizon)


# -------------------------------------------------------------- wire format

def rollout_to_jsonl(result: RolloutResult) -> str:
    """One record per (step, agent); the single serialization used by both
    the CLI and the service so responses are byte-identical."""
    lines = []
    for k, w in enumerate(result.states):
        acts = result.actions[k - 1] if k > 0 else {}
        for a in w.agents:
            act = acts.get(a.id)
            lines.append(json.dumps({
                "step": k,
                "t": round(w.time, 9),
                "id": a.id,
                "x": float(a.position[0]),
                "y": float(a.position[1]),
                "heading": float(a.heading),
                "speed": float(a.speed),
                "alive": bool(a.alive),
                "reason": a.removal_reason,
                "action": ([float(act.acceleration), float(act.steering)]
                           if act is not None else None),
            }))
    return "\n".join(lines) + "\n"
