"""Adversarial inverse reinforcement learning on top of the PPO trainer.

The discriminator's structured form D = exp(f) / (exp(f) + pi(a|o)) reduces
to a logistic in (f - log pi), so both its probability and the surrogate
reward r = f - log pi + c are computed in that stable parameterization.
Each iteration alternates: collect experience, one discriminator step on
expert-vs-generated pairs (expert actions perturbed with the policy's own
std), relabel rewards, PPO update. A behavior-cloning baseline trains the
same policy architecture by negative log-likelihood.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import AdamState, Tape, adam_step, load_checkpoint, save_checkpoint
from .autodiff import ops
from .nets import (CriticParams, DiscriminatorParams, PolicyParams,
                   discriminator_forward_batch, init_critic_params,
                   init_discriminator_params, init_policy_params,
                   load_named_tensors, named_tensors, pack_observations,
                   policy_forward_batch)
from .observation import build_observation, observation_from_json, observation_to_json
from .rl_ppo import (Environment, TrainerConfig, collect, compute_advantages,
                     ppo_update)
from .sim_engine import ACCEL_MAX, ACCEL_MIN, STEER_MAX

__all__ = [
    "AirlConfig", "ExpertBuffer", "discriminator_prob", "surrogate_reward",
    "discriminator_update", "noised_expert_actions", "relabel_rewards",
    "airl_train", "bc_train", "collect_demonstrations", "TrainResult",
    "save_model_checkpoint", "load_model_checkpoint",
]


@dataclass
class AirlConfig:
    c: float = 5.0                 # constant survival reward in r~
    disc_lr: float = 1e-4
    disc_batch: int = 1024
    disc_updates: int = 1          # discriminator steps per PPO iteration
    expert_noise: bool = True      # perturb expert actions with the policy std
    disc_weight_decay: float = 1e-3
    # generated-sample replay: how many past iterations' samples stay in the
    # discriminator's negative pool (keeps D aware of abandoned policy modes)
    disc_history_iters: int = 8
    disc_history_per_iter: int = 512

    def __post_init__(self):
        if not np.isfinite(self.c):
            raise ValueError("c must be finite")
        if self.disc_lr <= 0:
            raise ValueError("discriminator learning rate must be positive")


class ExpertBuffer:
    """Demonstrations: (Observation, action) pairs with JSONL persistence."""

    def __init__(self, pairs=None):
        self.pairs = list(pairs or [])
        for obs, action in self.pairs:
            a = np.asarray(action)
            if not (ACCEL_MIN <= a[0] <= ACCEL_MAX and abs(a[1]) <= STEER_MAX):
                raise ValueError(f"expert action {a} outside the actuation clamps")

    def __len__(self):
        return len(self.pairs)

    def sample(self, n: int, rng):
        idx = rng.choice(len(self.pairs), size=min(n, len(self.pairs)), replace=False)
        return [self.pairs[i] for i in idx]

    def save(self, path):
        with open(path, "w") as f:
            for obs, action in self.pairs:
                f.write(json.dumps({"observation": observation_to_json(obs),
                                    "action": [float(action[0]), float(action[1])]}))
                f.write("\n")

    @staticmethod
    def load(path) -> "ExpertBuffer":
        pairs = []
        with open(path) as f:
            for line in f:
                if not line.strip():
                    continue
                doc = json.loads(line)
                pairs.append((observation_from_json(doc["observation"]),
                              np.asarray(doc["action"], np.float64)))
        if not pairs:
            raise ValueError(f"expert buffer {path} is empty")
        return ExpertBuffer(pairs)


def discriminator_prob(f, log_pi):
    """D = exp(f) / (exp(f) + pi) computed as a stable logistic of f - log pi."""
    with np.errstate(over="ignore"):
        x = np.asarray(f, np.float64) - np.asarray(log_pi, np.float64)
        e = np.exp(-np.abs(x))
        out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def surrogate_reward(f, log_pi, c: float):
    """r~ = f - log pi + c (equivalently log D - log(1 - D) + c)."""
    out = np.asarray(f, np.float64) - np.asarray(log_pi, np.float64) + c
    return out if out.ndim else float(out)


def _policy_eval(policy: PolicyParams, obs_list):
    """Means and stds of the current policy at a batch of observations."""
    packed = pack_observations(obs_list)
    mean_t, log_std_t = policy_forward_batch(None, packed, policy)
    return (mean_t.data.astype(np.float64),
            np.exp(log_std_t.data.astype(np.float64)))


def _gaussian_logp(mean, std, x):
    z = (x - mean) / std
    return np.sum(-0.5 * np.log(2.0 * np.pi) - np.log(std) - 0.5 * z * z, axis=1)


def noised_expert_actions(policy: PolicyParams, obs_list, actions, rng):
    """Expert actions plus zero-mean Gaussian noise whose per-dimension std
    equals the current policy's std at each observation."""
    _, std = _policy_eval(policy, obs_list)
    return np.asarray(actions, np.float64) + std * rng.standard_normal(std.shape)


def discriminator_update(expert_batch, generated_batch, policy: PolicyParams,
                         params: DiscriminatorParams, opt: AdamState,
                         config: AirlConfig, rng) -> float:
    """One BCE minimization step; returns the loss.

    Expert actions are perturbed with zero-mean Gaussian noise matching the
    policy's per-observation std, smoothing the decision boundary. The
    generator is evaluated without a tape, so no gradient reaches it.
    """
    if not expert_batch or not generated_batch:
        raise ValueError("discriminator_update needs non-empty batches")
    e_obs = [p[0] for p in expert_batch]
    e_act = np.stack([np.asarray(p[1], np.float64) for p in expert_batch])
    g_obs = [p[0] for p in generated_batch]
    g_act = np.stack([np.asarray(p[1], np.float64) for p in generated_batch])

    e_mean, e_std = _policy_eval(policy, e_obs)
    noisy = e_act
    if config.expert_noise:
        noisy = e_act + e_std * rng.standard_normal(e_act.shape)
    log_pi_e = _gaussian_logp(e_mean, e_std, noisy)
    g_mean, g_std = _policy_eval(policy, g_obs)
    log_pi_g = _gaussian_logp(g_mean, g_std, g_act)

    tape = Tape()
    f_e = discriminator_forward_batch(tape, pack_observations(e_obs),
                                      noisy.astype(np.float32), params)
    f_g = discriminator_forward_batch(tape, pack_observations(g_obs),
                                      g_act.astype(np.float32), params)
    logit_e = ops.sub(tape, f_e, log_pi_e.astype(np.float32))
    logit_g = ops.sub(tape, f_g, log_pi_g.astype(np.float32))
    # -E_D[log D] - E_pi[log(1 - D)]
    loss = ops.add(tape,
                   ops.tmean(tape, ops.softplus(tape, ops.mul(
                       tape, logit_e, np.float32(-1.0)))),
                   ops.tmean(tape, ops.softplus(tape, logit_g)))
    if not np.isfinite(loss.data):
        return float("nan")
    tape.backward(loss)
    named = named_tensors(params)
    grads = {k: t.grad for k, t in named.items() if t.grad is not None}
    adam_step(named, grads, opt, config.disc_lr,
              weight_decay=config.disc_weight_decay)
    for t in named.values():
        t.zero_grad()
    return float(loss.data)


def relabel_rewards(experiences, disc: DiscriminatorParams, config: AirlConfig,
                    chunk: int = 2048) -> None:
    """Overwrite experience rewards with r~ = f - log pi + c in place."""
    for start in range(0, len(experiences), chunk):
        batch = experiences[start:start + chunk]
        packed = pack_observations([e.obs for e in batch])
        acts = np.stack([e.action for e in batch]).astype(np.float32)
        f = discriminator_forward_batch(None, packed, acts, disc).data
        for e, fi in zip(batch, f.astype(np.float64)):
            e.reward = surrogate_reward(fi, e.log_prob, config.c)


# ------------------------------------------------------------------ training

@dataclass
class TrainResult:
    policy: PolicyParams
    critic: CriticParams
    discriminator: DiscriminatorParams
    log: list = field(default_factory=list)
    best_metric: float = float("inf")
    best_iteration: int = -1


def save_model_checkpoint(path, policy, critic=None, discriminator=None,
                          meta=None):
    tensors = dict(named_tensors(policy, "policy/"))
    if critic is not None:
        tensors.update(named_tensors(critic, "critic/"))
    if discriminator is not None:
        tensors.update(named_tensors(discriminator, "discriminator/"))
    save_checkpoint(path, tensors, meta=meta or {})


def load_model_checkpoint(path):
    """Returns (policy, critic | None, discriminator | None, meta)."""
    arrays, meta = load_checkpoint(path)
    policy = init_policy_params(0)
    load_named_tensors(policy, arrays, "policy/")
    critic = discriminator = None
    if any(k.startswith("critic/") for k in arrays):
        critic = init_critic_params(0)
        load_named_tensors(critic, arrays, "critic/")
    if any(k.startswith("discriminator/") for k in arrays):
        discriminator = init_discriminator_params(0)
        load_named_tensors(discriminator, arrays, "discriminator/")
    return policy, critic, discriminator, meta


def airl_train(envs: list[Environment], expert: ExpertBuffer,
               trainer_config: TrainerConfig, airl_config: AirlConfig,
               seed: int = 0, out_dir=None, validate_fn=None,
               validate_every: int = 10, checkpoint_every: int = 0,
               log_file=None, quiet: bool = True) -> TrainResult:
    """The adversarial loop: collect -> discriminator step -> relabel -> PPO.

    If validate_fn(policy) is given, the returned parameters are the
    checkpoint with the lowest validation metric (RMSE after the prediction
    horizon); otherwise the final iterate.
    """
    rng = np.random.default_rng(seed)
    policy = init_policy_params(seed)
    critic = init_critic_params(seed + 1)
    disc = init_discriminator_params(seed + 2)
    policy_opt, critic_opt, disc_opt = AdamState(), AdamState(), AdamState()
    result = TrainResult(policy=policy, critic=critic, discriminator=disc)
    best_snapshot = None
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    def maybe_validate(iteration):
        nonlocal best_snapshot
        if validate_fn is None:
            return None
        metric = float(validate_fn(policy))
        if metric < result.best_metric:
            result.best_metric = metric
            result.best_iteration = iteration
            best_snapshot = {k: t.data.copy()
                             for k, t in named_tensors(policy).items()}
            if out_dir is not None:
                save_model_checkpoint(out_dir / "best.ckpt", policy, critic, disc,
                                      meta={"iteration": iteration, "rmse": metric})
        return metric

    from collections import deque
    history = deque(maxlen=max(1, airl_config.disc_history_iters))

    for it in range(trainer_config.iterations):
        for env in envs:
            env.episode_lengths.clear()
            env.removal_tally = {k: 0 for k in env.removal_tally}
        exps = collect(envs, policy, critic, trainer_config.rollout_steps, rng,
                       radius=trainer_config.radius)
        if not exps:
            raise RuntimeError("collection produced no experiences")

        keep = rng.choice(len(exps),
                          size=min(airl_config.disc_history_per_iter, len(exps)),
                          replace=False)
        history.append([(exps[i].obs, exps[i].action) for i in keep])
        pool = [pair for batch in history for pair in batch]

        disc_loss = float("nan")
        for _ in range(airl_config.disc_updates):
            e_batch = expert.sample(airl_config.disc_batch, rng)
            g_idx = rng.choice(len(pool), size=min(airl_config.disc_batch, len(pool)),
                               replace=False)
            g_batch = [pool[i] for i in g_idx]
            disc_loss = discriminator_update(e_batch, g_batch, policy, disc,
                                             disc_opt, airl_config, rng)

        relabel_rewards(exps, disc, airl_config)
        adv = compute_advantages(exps, trainer_config)
        upd = ppo_update(exps, adv, policy, critic, trainer_config,
                         policy_opt, critic_opt, rng)

        episode_lengths = [n for env in envs for n in env.episode_lengths]
        entry = {
            "iteration": it,
            "n_experiences": len(exps),
            "mean_reward": float(np.mean([e.reward for e in exps])),
            "disc_loss": disc_loss,
            "policy_loss": upd.policy_loss,
            "critic_loss": upd.critic_loss,
            "mean_episode_length": (float(np.mean(episode_lengths))
                                    if episode_lengths else float("nan")),
            "removals": {k: sum(env.removal_tally.get(k, 0) for env in envs)
                         for k in ("route_end", "off_track", "collision")},
        }
        if (it + 1) % validate_every == 0 or it == trainer_config.iterations - 1:
            metric = maybe_validate(it)
            if metric is not None:
                entry["validation_rmse"] = metric
        result.log.append(entry)
        if log_file is not None:
            with open(log_file, "a") as f:
                f.write(json.dumps(entry) + "\n")
        if not quiet:
            print(f"[airl] it={it} reward={entry['mean_reward']:.2f} "
                  f"disc={disc_loss:.3f} eplen={entry['mean_episode_length']:.1f}")
        if checkpoint_every and out_dir is not None and (it + 1) % checkpoint_every == 0:
            save_model_checkpoint(out_dir / f"it{it + 1:05d}.ckpt", policy,
                                  critic, disc, meta={"iteration": it})

    if best_snapshot is not None:
        load_named_tensors(policy, best_snapshot)
    if out_dir is not None:
        save_model_checkpoint(out_dir / "final.ckpt", policy, critic, disc,
                              meta={"iteration": trainer_config.iterations - 1,
                                    "best_iteration": result.best_iteration,
                                    "best_rmse": result.best_metric})
    return result


def bc_train(expert: ExpertBuffer, policy: PolicyParams, lr: float = 2e-4,
             batch_size: int = 1024, epochs: int = 50, seed: int = 0,
             holdout: float = 0.0):
    """Supervised NLL minimization of expert actions; the BC baseline.

    Returns (train_losses, holdout_losses) per epoch (holdout empty when
    holdout == 0).
    """
    if len(expert) == 0:
        raise ValueError("expert buffer is empty")
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(expert))
    n_hold = int(round(holdout * len(expert)))
    hold_idx, train_idx = idx[:n_hold], idx[n_hold:]
    named = named_tensors(policy)
    opt = AdamState()
    train_losses, hold_losses = [], []

    def nll(indices, tape):
        obs = [expert.pairs[i][0] for i in indices]
        acts = np.stack([expert.pairs[i][1] for i in indices]).astype(np.float32)
        packed = pack_observations(obs)
        mean_t, log_std_t = policy_forward_batch(tape, packed, policy)
        logp = ops.gaussian_log_prob(tape, mean_t, log_std_t, acts)
        return ops.mul(tape, ops.tmean(tape, logp), np.float32(-1.0))

    for _ in range(epochs):
        order = rng.permutation(train_idx)
        losses = []
        bs = min(batch_size, len(order))
        for start in range(0, len(order) - bs + 1, bs):
            tape = Tape()
            loss = nll(order[start:start + bs], tape)
            tape.backward(loss)
            grads = {k: t.grad for k, t in named.items() if t.grad is not None}
            adam_step(named, grads, opt, lr)
            for t in named.values():
                t.zero_grad()
            losses.append(float(loss.data))
        train_losses.append(float(np.mean(losses)))
        if n_hold:
            hold_losses.append(float(nll(hold_idx, None).data))
    return train_losses, hold_losses


def collect_demonstrations(road_map, scenario_fn, expert_model, n_episodes: int,
                           horizon: int = 50, dt: float = 0.2, seed: int = 0,
                           radius: float = 30.0) -> ExpertBuffer:
    """Closed-loop expert rollouts recorded as (observation, action) pairs,
    built with the same observation code the policy will see."""
    from .sim_engine import spawn_situation, step  # local to avoid cycle at import

    pairs = []
    for ep in range(n_episodes):
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(ep,))
        world = spawn_situation(road_map, dict(scenario_fn(ep), dt=dt),
                                int(ss.generate_state(1)[0]))
        if hasattr(expert_model, "reset"):
            expert_model.reset()
        for _ in range(horizon):
            alive = sorted(world.alive_ids())
            if not alive:
                break
            obs = {aid: build_observation(world, aid, radius) for aid in alive}
            actions = expert_model.act(world, obs, "mean", None)
            for aid in alive:
                a = actions[aid].clamped()
                pairs.append((obs[aid], np.array([a.acceleration, a.steering])))
            world = step(world, actions)
    return ExpertBuffer(pairs)
