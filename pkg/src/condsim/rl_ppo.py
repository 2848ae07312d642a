"""Shared-policy experience collection, GAE, and PPO updates.

Every agent in every environment executes a copy of the same policy; their
observations are batched through one forward pass per step, which is
semantically identical to per-agent copies. Environments auto-reset with
fresh seeded spawns, so one collect() call yields contiguous per-agent
trajectories terminated either by removal (terminal) or by truncation
(bootstrapped with the critic's value of the next state).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import AdamState, Tape, adam_step
from .autodiff import ops
from .nets import (CriticParams, PolicyParams, critic_forward_batch,
                   named_tensors, pack_observations, policy_forward_batch)
from .observation import DEFAULT_RADIUS, build_observation
from .sim_engine import Action, WorldState, spawn_situation, step

__all__ = [
    "Experience", "AdvantageBatch", "TrainerConfig", "Environment",
    "collect", "gae", "compute_advantages", "ppo_update", "PPOUpdateResult",
]


@dataclass
class Experience:
    obs: object               # Observation
    action: np.ndarray        # (2,) raw sampled action
    reward: float
    value: float
    log_prob: float
    done: bool                # removal (terminal); horizon truncation keeps False
    bootstrap_value: float    # v(s_next) when truncated mid-trajectory, else 0
    agent_id: str
    env_id: int
    episode: int
    step_k: int
    last: bool = False        # final entry of this agent's contiguous segment


@dataclass
class TrainerConfig:
    gamma: float = 0.95
    gae_lambda: float = 0.95
    clip: float = 0.2
    batch_size: int = 1024
    policy_lr: float = 2e-4
    critic_lr: float = 2e-4
    epochs: int = 4
    rollout_steps: int = 64
    n_envs: int = 8
    iterations: int = 200
    entropy_coef: float = 0.0
    radius: float = DEFAULT_RADIUS

    def __post_init__(self):
        if not (0.0 <= self.gamma < 1.0 and 0.0 <= self.gae_lambda < 1.0):
            raise ValueError("gamma and gae_lambda must lie in [0, 1)")
        if self.clip <= 0.0:
            raise ValueError("clip must be positive")


class Environment:
    """One closed-loop world that respawns when its episode ends."""

    def __init__(self, road_map, scenario_fn, horizon: int, dt: float,
                 seed: int, env_id: int = 0):
        self.road_map = road_map
        self.scenario_fn = scenario_fn  # reset_index -> scenario spec dict
        self.horizon = horizon
        self.dt = dt
        self.seed = seed
        self.env_id = env_id
        self.episode = -1
        self.world: WorldState | None = None
        self.episode_lengths: list[int] = []
        self.removal_tally = {"route_end": 0, "off_track": 0, "collision": 0}
        self.reset()

    def _spawn_seed(self) -> int:
        ss = np.random.SeedSequence(entropy=self.seed,
                                    spawn_key=(self.env_id, self.episode))
        return int(ss.generate_state(1)[0])

    def reset(self) -> WorldState:
        if self.world is not None:
            self.episode_lengths.append(self.world.k)
            for a in self.world.agents:
                if not a.alive:
                    self.removal_tally[a.removal_reason] += 1
        self.episode += 1
        spec = self.scenario_fn(self.episode)
        spec = dict(spec, dt=self.dt)
        self.world = spawn_situation(self.road_map, spec, self._spawn_seed())
        return self.world

    def step(self, actions: dict) -> WorldState:
        self.world = step(self.world, actions)
        return self.world

    def episode_over(self) -> bool:
        return self.world.k >= self.horizon or not self.world.alive_ids()


def collect(envs: list[Environment], policy: PolicyParams, critic: CriticParams,
            steps: int, rng, radius: float = DEFAULT_RADIUS) -> list[Experience]:
    """Run all environments `steps` steps under the shared policy."""
    experiences: list[Experience] = []
    open_exps: dict[tuple, Experience] = {}  # (env, agent) -> last Experience

    def batch_values(items):
        """items: list of (env, agent_id, obs); returns critic values."""
        if not items:
            return []
        packed = pack_observations([obs for _, _, obs in items])
        return critic_forward_batch(None, packed, critic).data.astype(np.float64)

    for _ in range(steps):
        # gather observations of every alive agent in every env
        index = []
        for env in envs:
            for aid in sorted(env.world.alive_ids()):
                index.append((env, aid, build_observation(env.world, aid, radius)))
        if not index:
            break
        packed = pack_observations([obs for _, _, obs in index])
        mean_t, log_std_t = policy_forward_batch(None, packed, policy)
        means = mean_t.data.astype(np.float64)
        stds = np.exp(log_std_t.data.astype(np.float64))
        values = critic_forward_batch(None, packed, critic).data.astype(np.float64)
        noise = rng.standard_normal(means.shape)
        actions_arr = means + stds * noise
        log_probs = np.sum(-0.5 * np.log(2.0 * np.pi) - np.log(stds)
                           - 0.5 * noise * noise, axis=1)

        # step each environment with its agents' sampled actions
        row = 0
        per_env: dict[int, dict] = {}
        for env, aid, obs in index:
            per_env.setdefault(id(env), {})[aid] = row
            row += 1
        for env in envs:
            rows = per_env.get(id(env))
            if not rows:
                continue
            act_map = {aid: Action(float(actions_arr[r][0]), float(actions_arr[r][1]))
                       for aid, r in rows.items()}
            prev_k = env.world.k
            world = env.step(act_map)
            for aid, r in rows.items():
                agent = world.agent(aid)
                exp = Experience(
                    obs=index[r][2], action=actions_arr[r].copy(), reward=0.0,
                    value=float(values[r]), log_prob=float(log_probs[r]),
                    done=not agent.alive, bootstrap_value=0.0,
                    agent_id=aid, env_id=env.env_id, episode=env.episode,
                    step_k=prev_k)
                experiences.append(exp)
                open_exps[(env.env_id, aid)] = exp

            if env.episode_over():
                # horizon truncation: bootstrap the still-alive agents
                alive = sorted(world.alive_ids())
                if alive:
                    items = [(env, aid, build_observation(world, aid, radius))
                             for aid in alive]
                    vboots = batch_values(items)
                    for (e, aid, _), vb in zip(items, vboots):
                        key = (env.env_id, aid)
                        if key in open_exps:
                            open_exps[key].bootstrap_value = float(vb)
                            open_exps[key].last = True
                for a in world.agents:
                    open_exps.pop((env.env_id, a.id), None)
                env.reset()

    # truncation at the end of the collection window
    leftovers: dict[int, list] = {}
    for (env_id, aid), exp in open_exps.items():
        if not exp.done:
            leftovers.setdefault(env_id, []).append((aid, exp))
    for env in envs:
        pending = leftovers.get(env.env_id)
        if not pending:
            continue
        items = [(env, aid, build_observation(env.world, aid, radius))
                 for aid, _ in sorted(pending)]
        vboots = batch_values(items)
        for (aid, exp), vb in zip(sorted(pending), vboots):
            exp.bootstrap_value = float(vb)
    for exp in experiences:
        if exp.done:
            exp.last = True
    # mark segment tails (the last entry per (env, episode, agent))
    seen = set()
    for exp in reversed(experiences):
        key = (exp.env_id, exp.episode, exp.agent_id)
        if key not in seen:
            seen.add(key)
            exp.last = True
    return experiences


def gae(rewards, values, dones, gamma: float, lam: float,
        bootstrap_value: float = 0.0):
    """Generalized advantage estimation over one contiguous trajectory.

    delta_k = r_k + gamma * v_{k+1} - v_k, truncated at done; the final
    transition uses `bootstrap_value` unless done. Returns (advantages,
    returns) with returns = advantages + values.
    """
    rewards = np.asarray(rewards, np.float64)
    values = np.asarray(values, np.float64)
    dones = np.asarray(dones, bool)
    n = len(rewards)
    if n == 0:
        raise ValueError("gae needs a non-empty trajectory")
    adv = np.zeros(n)
    for k in reversed(range(n)):
        if dones[k]:
            next_value, next_adv = 0.0, 0.0
        elif k == n - 1:
            next_value, next_adv = bootstrap_value, 0.0
        else:
            next_value, next_adv = values[k + 1], adv[k + 1]
        delta = rewards[k] + gamma * next_value - values[k]
        adv[k] = delta + gamma * lam * next_adv
    return adv, adv + values


@dataclass
class AdvantageBatch:
    advantages: np.ndarray       # normalized (zero mean, unit std)
    returns: np.ndarray
    raw_advantages: np.ndarray = field(repr=False, default=None)


def compute_advantages(experiences: list[Experience],
                       config: TrainerConfig) -> AdvantageBatch:
    """GAE per contiguous (env, episode, agent) segment, then batch-normalize."""
    raw = np.zeros(len(experiences))
    rets = np.zeros(len(experiences))
    groups: dict[tuple, list[int]] = {}
    for i, exp in enumerate(experiences):
        groups.setdefault((exp.env_id, exp.episode, exp.agent_id), []).append(i)
    for idxs in groups.values():
        segment = [experiences[i] for i in idxs]
        adv, ret = gae([e.reward for e in segment], [e.value for e in segment],
                       [e.done for e in segment], config.gamma,
                       config.gae_lambda, segment[-1].bootstrap_value)
        raw[idxs] = adv
        rets[idxs] = ret
    std = raw.std()
    normalized = (raw - raw.mean()) / (std + 1e-8)
    return AdvantageBatch(advantages=normalized, returns=rets, raw_advantages=raw)


@dataclass
class PPOUpdateResult:
    policy_loss: float
    critic_loss: float
    aborted: bool = False


def clipped_surrogate(tape, log_prob_new, log_prob_old, advantages, clip: float):
    """mean(min(ratio * A, clip(ratio, 1 +- clip) * A)) as a tensor graph."""
    ratio = ops.exp(tape, ops.sub(tape, log_prob_new,
                                  np.asarray(log_prob_old, np.float32)))
    adv = np.asarray(advantages, np.float32)
    unclipped = ops.mul(tape, ratio, adv)
    clipped = ops.mul(tape, ops.clip(tape, ratio, 1.0 - clip, 1.0 + clip), adv)
    return ops.tmean(tape, ops.minimum(tape, unclipped, clipped))


def ppo_update(experiences: list[Experience], batch: AdvantageBatch,
               policy: PolicyParams, critic: CriticParams,
               config: TrainerConfig, policy_opt: AdamState,
               critic_opt: AdamState, rng) -> PPOUpdateResult:
    """Clipped-surrogate policy ascent plus squared-error critic regression."""
    if config.batch_size > len(experiences):
        minibatch = len(experiences)
    else:
        minibatch = config.batch_size
    n = len(experiences)
    policy_named = named_tensors(policy)
    critic_named = named_tensors(critic)
    policy_losses, critic_losses = [], []

    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n - minibatch + 1, minibatch):
            idx = order[start:start + minibatch]
            obs_list = [experiences[i].obs for i in idx]
            packed = pack_observations(obs_list)
            actions = np.stack([experiences[i].action for i in idx]).astype(np.float32)
            old_logp = np.array([experiences[i].log_prob for i in idx], np.float32)
            adv = batch.advantages[idx]
            rets = batch.returns[idx].astype(np.float32)

            tape = Tape()
            mean_t, log_std_t = policy_forward_batch(tape, packed, policy)
            logp = ops.gaussian_log_prob(tape, mean_t, log_std_t, actions)
            surrogate = clipped_surrogate(tape, logp, old_logp, adv, config.clip)
            loss = ops.mul(tape, surrogate, np.float32(-1.0))
            if config.entropy_coef > 0.0:
                ent = ops.tmean(tape, ops.tsum(tape, log_std_t, axis=1))
                loss = ops.sub(tape, loss, ops.mul(
                    tape, ent, np.float32(config.entropy_coef)))
            if not np.isfinite(loss.data):
                return PPOUpdateResult(float("nan"), float("nan"), aborted=True)
            tape.backward(loss)
            grads = {k: t.grad for k, t in policy_named.items() if t.grad is not None}
            adam_step(policy_named, grads, policy_opt, config.policy_lr)
            for t in policy_named.values():
                t.zero_grad()
            policy_losses.append(float(loss.data))

            tape = Tape()
            v = critic_forward_batch(tape, packed, critic)
            err = ops.sub(tape, v, rets)
            vloss = ops.tmean(tape, ops.mul(tape, err, err))
            if not np.isfinite(vloss.data):
                return PPOUpdateResult(float("nan"), float("nan"), aborted=True)
            tape.backward(vloss)
            grads = {k: t.grad for k, t in critic_named.items() if t.grad is not None}
            adam_step(critic_named, grads, critic_opt, config.critic_lr)
            for t in critic_named.values():
                t.zero_grad()
            critic_losses.append(float(vloss.data))

    return PPOUpdateResult(policy_loss=float(np.mean(policy_losses)),
                           critic_loss=float(np.mean(critic_losses)))
