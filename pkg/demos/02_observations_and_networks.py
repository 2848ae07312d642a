"""What an agent sees, and what the networks do with it.

Builds the graph observation for one vehicle at the intersection, prints
its pieces, and pushes it through freshly initialized policy / critic /
discriminator networks.

Run:  python3 demos/02_observations_and_networks.py
"""

import numpy as np

from condsim.fixtures import conflict_scenario, load_fixture_map
from condsim.nets import (count_parameters, critic_forward,
                          discriminator_forward, init_critic_params,
                          init_discriminator_params, init_policy_params,
                          policy_forward)
from condsim.observation import build_observation
from condsim.sim_engine import spawn_situation


def main():
    road_map = load_fixture_map("four_way_stop.json")
    world = spawn_situation(road_map, conflict_scenario(), seed=3)

    obs = build_observation(world, "c3")
    print(f"observation of c3: {obs.n_neighbors} neighbors, "
          f"{obs.n_polylines} polylines, {len(obs.vector_features)} map vectors")
    print("self features [w l x y cos sin v limit]:",
          np.round(obs.agent_features[0], 2))
    flagged = sum(int(obs.vector_features[s:e, 10].any())
                  for _, _, s, e in obs.polyline_slices)
    print(f"route-flagged polylines: {flagged}")

    policy = init_policy_params(0)
    critic = init_critic_params(1)
    disc = init_discriminator_params(2)
    print("parameters: policy", count_parameters(policy),
          "critic", count_parameters(critic),
          "discriminator", count_parameters(disc))

    dist = policy_forward(obs, policy)
    print("policy mean:", np.round(dist.mean, 4), " std:", np.round(dist.std, 3))
    print("critic value:", round(critic_forward(obs, critic), 4))
    action = dist.sample(np.random.default_rng(0))
    f = discriminator_forward(obs, action, disc)
    print("sampled action:", np.round(action, 3), " reward logit f:", round(f, 4))


if __name__ == "__main__":
    main()
