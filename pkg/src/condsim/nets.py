"""Policy, critic and discriminator networks over graph observations.

All three share the same encoder architecture (private weights each): a
per-agent MLP, three message-passing layers over map polylines, max-pool
polyline readout, and single-head scaled-dot-product cross-attention from
the target agent onto all agent and polyline embeddings. Decoders differ:
policy -> 4 outputs (action means + log stds), critic -> 1 value,
discriminator -> 1 reward logit with the 2-dim action concatenated to its
decoder input.

Shapes (fixed):
    agent encoder        8 -> 64 -> 64
    MP layer 1 MLP      11 -> 64 -> 32, layers 2 & 3: 64 -> 64 -> 32
    attention q/k/v     64 x 64 each, no bias
    policy decoder      64 -> 64 -> 4
    critic decoder      64 -> 64 -> 1
    discriminator dec.  66 -> 64 -> 1
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Tensor
from .autodiff import ops
from .observation import Observation

__all__ = [
    "EncoderParams", "PolicyParams", "CriticParams", "DiscriminatorParams",
    "ActionDistribution", "init_policy_params", "init_critic_params",
    "init_discriminator_params", "encode", "encode_batch", "policy_forward",
    "policy_forward_batch", "critic_forward", "critic_forward_batch",
    "discriminator_forward", "discriminator_forward_batch", "pack_observations",
    "named_tensors", "count_parameters", "load_named_tensors",
    "LOG_STD_MIN", "LOG_STD_MAX", "EMBED_DIM",
]

EMBED_DIM = 64
LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
_ATTN_SCALE = 1.0 / np.sqrt(EMBED_DIM)
_NEG_MASK = np.float32(-1e9)


# ---------------------------------------------------------------- parameters

def _orthogonal(rng, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return (gain * q[:rows, :cols]).astype(np.float32)


def _mlp(rng, sizes, final_gain=1.0):
    """[(W, b), ...] with orthogonal weights (sqrt(2) gain on hidden layers)."""
    layers = []
    for i in range(len(sizes) - 1):
        gain = np.sqrt(2.0) if i < len(sizes) - 2 else final_gain
        w = Tensor(_orthogonal(rng, sizes[i], sizes[i + 1], gain))
        b = Tensor(np.zeros(sizes[i + 1], np.float32))
        layers.append((w, b))
    return layers


@dataclass
class EncoderParams:
    agent_mlp: list
    mp_mlps: list   # 3 MLPs
    wq: Tensor
    wk: Tensor
    wv: Tensor

    @staticmethod
    def init(rng) -> "EncoderParams":
        return EncoderParams(
            agent_mlp=_mlp(rng, (8, 64, 64), final_gain=np.sqrt(2.0)),
            mp_mlps=[_mlp(rng, (11, 64, 32), final_gain=np.sqrt(2.0)),
                     _mlp(rng, (64, 64, 32), final_gain=np.sqrt(2.0)),
                     _mlp(rng, (64, 64, 32), final_gain=np.sqrt(2.0))],
            wq=Tensor(_orthogonal(rng, 64, 64, 1.0)),
            wk=Tensor(_orthogonal(rng, 64, 64, 1.0)),
            wv=Tensor(_orthogonal(rng, 64, 64, 1.0)),
        )


@dataclass
class PolicyParams:
    encoder: EncoderParams
    decoder: list  # 64 -> 64 -> 4


@dataclass
class CriticParams:
    encoder: EncoderParams
    decoder: list  # 64 -> 64 -> 1


@dataclass
class DiscriminatorParams:
    encoder: EncoderParams
    decoder: list  # 66 -> 64 -> 1


LOG_STD_INIT = (-0.7, -2.0)  # acceleration, steering exploration priors


def init_policy_params(seed: int) -> PolicyParams:
    rng = np.random.default_rng(seed)
    # final layer scaled down so initial action means start near zero; the
    # log-std biases start at per-dimension priors (a 1-rad steering std
    # just oscillates vehicles off the road before learning can start)
    params = PolicyParams(EncoderParams.init(rng), _mlp(rng, (64, 64, 4), final_gain=0.01))
    params.decoder[-1][1].data = np.array(
        [0.0, 0.0, LOG_STD_INIT[0], LOG_STD_INIT[1]], np.float32)
    return params


def init_critic_params(seed: int) -> CriticParams:
    rng = np.random.default_rng(seed)
    return CriticParams(EncoderParams.init(rng), _mlp(rng, (64, 64, 1)))


def init_discriminator_params(seed: int) -> DiscriminatorParams:
    rng = np.random.default_rng(seed)
    return DiscriminatorParams(EncoderParams.init(rng), _mlp(rng, (66, 64, 1)))


def named_tensors(params, prefix: str = "") -> dict[str, Tensor]:
    """Flat name -> Tensor view of a parameter container (checkpoint keys)."""
    out = {}
    if isinstance(params, (PolicyParams, CriticParams, DiscriminatorParams)):
        out.update(named_tensors(params.encoder, prefix + "enc/"))
        for i, (w, b) in enumerate(params.decoder):
            out[f"{prefix}dec/{i}/w"] = w
            out[f"{prefix}dec/{i}/b"] = b
    elif isinstance(params, EncoderParams):
        for i, (w, b) in enumerate(params.agent_mlp):
            out[f"{prefix}agent/{i}/w"] = w
            out[f"{prefix}agent/{i}/b"] = b
        for k, mlp in enumerate(params.mp_mlps):
            for i, (w, b) in enumerate(mlp):
                out[f"{prefix}mp{k}/{i}/w"] = w
                out[f"{prefix}mp{k}/{i}/b"] = b
        out[prefix + "wq"] = params.wq
        out[prefix + "wk"] = params.wk
        out[prefix + "wv"] = params.wv
    else:
        raise TypeError(f"unknown parameter container {type(params)}")
    return out


def count_parameters(params) -> int:
    return sum(t.data.size for t in named_tensors(params).values())


def load_named_tensors(params, arrays: dict[str, np.ndarray], prefix: str = ""):
    """Copy checkpoint arrays into a parameter container, strict on shape."""
    named = named_tensors(params, prefix)
    for name, tensor in named.items():
        if name not in arrays:
            raise KeyError(f"checkpoint missing tensor '{name}'")
        arr = arrays[name]
        if arr.shape != tensor.data.shape:
            raise ValueError(f"checkpoint tensor '{name}' has shape {arr.shape}, "
                             f"expected {tensor.data.shape}")
        tensor.data = arr.astype(np.float32).copy()


# ------------------------------------------------------------------- packing

class PackedObservations:
    """Index structures for running a batch of variable-size observations
    through one set of tensor ops. Neighbor rows and polylines are put in
    canonical (id-sorted) order so outputs are permutation-invariant."""

    def __init__(self, observations: list[Observation]):
        agent_rows = []
        vec_rows = []
        target_rows = []
        poly_members = []   # list of row-index lists into vec_rows
        key_lists = []      # per obs: KV row indices (agents then polylines)
        n_agents_total = 0

        for obs in observations:
            order = [0] + sorted(range(1, len(obs.agent_ids)),
                                 key=lambda i: obs.agent_ids[i])
            target_rows.append(n_agents_total)
            my_agent_rows = list(range(n_agents_total, n_agents_total + len(order)))
            agent_rows.append(obs.agent_features[order])
            n_agents_total += len(order)

            my_poly_ids = []
            for pid, _etype, s, e in sorted(obs.polyline_slices, key=lambda t: t[0]):
                base = len(vec_rows)
                vec_rows.extend(obs.vector_features[s:e])
                poly_members.append(list(range(base, base + (e - s))))
                my_poly_ids.append(len(poly_members) - 1)
            key_lists.append((my_agent_rows, my_poly_ids))

        self.n_obs = len(observations)
        self.agent_feats = np.concatenate(agent_rows, axis=0).astype(np.float32)
        self.vec_feats = (np.asarray(vec_rows, np.float32) if vec_rows
                          else np.zeros((0, 11), np.float32))
        self.target_rows = np.asarray(target_rows, np.intp)
        self.n_polys = len(poly_members)

        if self.n_polys:
            lmax = max(len(m) for m in poly_members)
            gather = np.full((self.n_polys, lmax), -1, np.intp)
            vec_poly = np.zeros(len(self.vec_feats), np.intp)
            for p, members in enumerate(poly_members):
                gather[p, :len(members)] = members
                vec_poly[members] = p
            self.poly_gather = gather
            self.vec_poly = vec_poly
        else:
            self.poly_gather = np.zeros((0, 1), np.intp)
            self.vec_poly = np.zeros(0, np.intp)

        kmax = max(len(a) + len(p) for a, p in key_lists)
        key_gather = np.full((self.n_obs, kmax), -1, np.intp)
        for b, (arows, pids) in enumerate(key_lists):
            keys = arows + [n_agents_total + p for p in pids]
            key_gather[b, :len(keys)] = keys
        self.key_gather = key_gather
        self.key_mask = np.where(key_gather < 0, _NEG_MASK, np.float32(0.0))


def pack_observations(observations: list[Observation]) -> PackedObservations:
    return PackedObservations(observations)


# ------------------------------------------------------------------ forwards

def _mlp_forward(tape, x, layers, final_relu: bool):
    h = x
    for i, (w, b) in enumerate(layers):
        h = ops.add(tape, ops.matmul(tape, h, w), b)
        if i < len(layers) - 1 or final_relu:
            h = ops.relu(tape, h)
    return h


def encode_batch(tape, packed: PackedObservations, enc: EncoderParams) -> Tensor:
    """Target-agent embeddings, (B, 64)."""
    z = _mlp_forward(tape, packed.agent_feats, enc.agent_mlp, final_relu=True)

    if packed.n_polys:
        v = packed.vec_feats
        for layer_idx, mlp in enumerate(enc.mp_mlps):
            h = _mlp_forward(tape, v, mlp, final_relu=True)          # (N, 32)
            per_poly = ops.gather_rows(tape, h, packed.poly_gather,
                                       pad_value=-np.inf)            # (P, Lmax, 32)
            pooled = ops.maxpool(tape, per_poly, axis=1)             # (P, 32)
            ctx = ops.gather_rows(tape, pooled, packed.vec_poly)     # (N, 32)
            v = ops.concat(tape, [h, ctx], axis=1)                   # (N, 64)
        per_poly = ops.gather_rows(tape, v, packed.poly_gather, pad_value=-np.inf)
        q = ops.maxpool(tape, per_poly, axis=1)                      # (P, 64)
        kv = ops.concat(tape, [z, q], axis=0)
    else:
        kv = z

    z_target = ops.gather_rows(tape, z, packed.target_rows)          # (B, 64)
    queries = ops.matmul(tape, z_target, enc.wq)
    keys = ops.matmul(tape, kv, enc.wk)
    vals = ops.matmul(tape, kv, enc.wv)
    k3 = ops.gather_rows(tape, keys, packed.key_gather)              # (B, K, 64)
    v3 = ops.gather_rows(tape, vals, packed.key_gather)
    scores = ops.mul(tape, ops.bdot(tape, k3, queries),
                     np.float32(_ATTN_SCALE))                        # (B, K)
    scores = ops.add(tape, scores, packed.key_mask)
    weights = ops.softmax(tape, scores, axis=-1)
    return ops.bweight(tape, weights, v3)                            # (B, 64)


def encode(obs: Observation, enc: EncoderParams) -> np.ndarray:
    """Single-observation embedding (batch of one, no tape)."""
    return encode_batch(None, pack_observations([obs]), enc).data[0]


def policy_forward_batch(tape, packed, params: PolicyParams):
    """Returns (mean, log_std) tensors, each (B, 2); log_std clamped."""
    z = encode_batch(tape, packed, params.encoder)
    out = _mlp_forward(tape, z, params.decoder, final_relu=False)   # (B, 4)
    mean = ops.col_slice(tape, out, 0, 2)
    log_std = ops.clip(tape, ops.col_slice(tape, out, 2, 4),
                       LOG_STD_MIN, LOG_STD_MAX)
    return mean, log_std


def critic_forward_batch(tape, packed, params: CriticParams) -> Tensor:
    z = encode_batch(tape, packed, params.encoder)
    out = _mlp_forward(tape, z, params.decoder, final_relu=False)   # (B, 1)
    return ops.reshape(tape, out, (packed.n_obs,))


def discriminator_forward_batch(tape, packed, actions, params: DiscriminatorParams) -> Tensor:
    """Reward-network outputs f(o, a), (B,). `actions` is (B, 2)."""
    z = encode_batch(tape, packed, params.encoder)
    za = ops.concat(tape, [z, actions if isinstance(actions, Tensor)
                           else np.asarray(actions, np.float32)], axis=1)
    out = _mlp_forward(tape, za, params.decoder, final_relu=False)
    return ops.reshape(tape, out, (packed.n_obs,))


# -------------------------------------------------------- action distribution

@dataclass(frozen=True)
class ActionDistribution:
    """Diagonal Gaussian over (acceleration, steering)."""
    mean: np.ndarray
    log_std: np.ndarray

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)

    def sample(self, rng) -> np.ndarray:
        return self.mean + self.std * rng.standard_normal(self.mean.shape)

    def log_prob(self, action) -> float:
        a = np.asarray(action, np.float64)
        z = (a - self.mean) / self.std
        return float(np.sum(-0.5 * np.log(2.0 * np.pi) - self.log_std - 0.5 * z * z))

    def entropy(self) -> float:
        d = self.mean.size
        return float(0.5 * d * np.log(2.0 * np.pi * np.e) + np.sum(self.log_std))


def policy_forward(obs: Observation, params: PolicyParams) -> ActionDistribution:
    mean, log_std = policy_forward_batch(None, pack_observations([obs]), params)
    return ActionDistribution(mean.data[0].astype(np.float64),
                              log_std.data[0].astype(np.float64))


def critic_forward(obs: Observation, params: CriticParams) -> float:
    return float(critic_forward_batch(None, pack_observations([obs]), params).data[0])


def discriminator_forward(obs: Observation, action, params: DiscriminatorParams) -> float:
    packed = pack_observations([obs])
    return float(discriminator_forward_batch(
        None, packed, np.asarray(action, np.float32)[None, :], params).data[0])
