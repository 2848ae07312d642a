"""Scripted behavior models: deterministic route followers that yield at
all-way stops. They serve as desk-scale experts for imitation training and
as a reliable reactive driver for conditional-prediction fixtures.

The controller is privileged (it reads the world state, not the graph
observation); demonstrations pair its actions with the standard
build_observation output, so the learned policy trains on exactly the
observations it will see at inference time.
"""

from __future__ import annotations

import numpy as np

from .geom import wrap_angle
from .map_core import RoadMap
from .sim_engine import (ACCEL_MAX, ACCEL_MIN, STEER_MAX, WHEELBASE_RATIO,
                         Action, WorldState)

__all__ = ["ScriptedExpert"]


class ScriptedExpert:
    """Pure-pursuit steering + IDM-style speed control + all-way-stop logic.

    Stateful within one rollout (arrival order at the stop lines); call
    reset() when starting a new rollout.
    """

    def __init__(self, road_map: RoadMap,
                 accel_comfort: float = 2.0, brake_comfort: float = 2.5,
                 min_gap: float = 2.5, time_headway: float = 1.2,
                 stop_wait_steps: int = 2):
        self.road_map = road_map
        self.accel_comfort = accel_comfort
        self.brake_comfort = brake_comfort
        self.min_gap = min_gap
        self.time_headway = time_headway
        self.stop_wait_steps = stop_wait_steps
        self._stop_zone = self._find_stop_zone(road_map)
        self._stop_s = {rid: self._stop_arclength(route)
                        for rid, route in road_map.routes.items()}
        self._zone_exit_s = {rid: self._zone_exit_arclength(route)
                             for rid, route in road_map.routes.items()}
        self.reset()

    def reset(self):
        self._arrival = {}       # agent id -> arrival sequence number
        self._waited = {}        # agent id -> steps held at the line
        self._cleared = set()    # agents released into the intersection
        self._next_arrival = 0

    # ------------------------------------------------------------ map prep

    @staticmethod
    def _find_stop_zone(road_map):
        """Conflict box spanned by the stop lines (center, half-extent)."""
        pts = []
        for pl in road_map.polylines.values():
            if pl.element_type == "stop_line":
                pts.append(pl.starts)
                pts.append(pl.ends)
        if not pts:
            return None
        pts = np.vstack(pts)
        center = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
        half = float(np.max(np.abs(pts - center)))
        return center, half

    def _stop_arclength(self, route):
        """Arclength at which the route crosses a stop line, if any."""
        if self._stop_zone is None:
            return None
        best = None
        for pl in self.road_map.polylines.values():
            if pl.element_type != "stop_line":
                continue
            mid = 0.5 * (pl.starts[0] + pl.ends[-1])
            s, dist = route.project(mid)
            # the line must actually span this route's lane
            if dist <= 2.0 and (best is None or s < best):
                best = s
        return best

    def _zone_exit_arclength(self, route):
        """Arclength past which a crossing vehicle has fully left the box."""
        if self._stop_zone is None:
            return None
        center, half = self._stop_zone
        inside = np.max(np.abs(route.points - center), axis=1) <= half + 2.5
        if not inside.any():
            return None
        last = int(np.where(inside)[0].max())
        return float(self.cum_s_of(route, min(last + 1, len(route.points) - 1)))

    @staticmethod
    def cum_s_of(route, point_index):
        return route.cum_s[point_index]

    # ------------------------------------------------------------- control

    def _box_distance(self, position) -> float:
        """L-inf distance outside the conflict box (0 inside)."""
        center, half = self._stop_zone
        return max(0.0, float(np.max(np.abs(np.asarray(position) - center))) - (half - 0.25))

    def _in_zone(self, position) -> bool:
        return self._box_distance(position) == 0.0

    def _leader_gap(self, world, agent, route, s):
        """Bumper gap and speed of the nearest vehicle ahead on my path."""
        best = None
        for other in world.alive_agents():
            if other.id == agent.id:
                continue
            os_, lateral = route.project(other.position)
            if lateral > 2.2:
                continue
            ahead = os_ - s
            if 0.0 < ahead <= 30.0:
                gap = ahead - 0.5 * (agent.length + other.length)
                if best is None or gap < best[0]:
                    best = (gap, other.speed)
        return best

    def _idm_accel(self, speed, v_des, gap_info):
        v_ratio = speed / max(v_des, 0.1)
        accel = self.accel_comfort * (1.0 - v_ratio ** 4)
        if gap_info is not None:
            gap, v_lead = gap_info
            gap = max(gap, 0.05)
            dv = speed - v_lead
            s_star = self.min_gap + max(
                0.0, speed * self.time_headway
                + speed * dv / (2.0 * np.sqrt(self.accel_comfort * self.brake_comfort)))
            accel = min(accel, self.accel_comfort * (1.0 - v_ratio ** 4 - (s_star / gap) ** 2))
        return accel

    def _update_bookkeeping(self, world):
        """Track stop-line waiters from the world state itself, so vehicles
        this controller does not drive (a plan-conditioned one) queue and
        clear exactly like its own: identical physical trajectories then
        yield identical decisions."""
        for agent in sorted(world.alive_agents(), key=lambda a: a.id):
            stop_s = self._stop_s.get(agent.route)
            if stop_s is None or agent.id in self._cleared:
                continue
            route = self.road_map.routes[agent.route]
            s, _ = route.project(agent.position)
            if agent.id in self._arrival:
                if s > stop_s + 0.5 or agent.speed > 1.5:
                    self._cleared.add(agent.id)  # rolled on without our say-so
                elif agent.speed <= 0.5:
                    self._waited[agent.id] += 1
                continue
            hold = (stop_s - s) - (0.5 * agent.length + 0.3)
            if -2.0 <= hold <= 1.0 and agent.speed <= 0.5:
                self._arrival[agent.id] = self._next_arrival
                self._next_arrival += 1
                self._waited[agent.id] = 1

    def _stop_line_accel(self, world, agent, dist_to_stop, dt):
        """Brake toward a hold point before the line; when held, decide
        whether to proceed."""
        speed = agent.speed
        hold = dist_to_stop - (0.5 * agent.length + 0.3)  # bumper at the line
        if agent.id in self._arrival:
            if (self._waited[agent.id] > self.stop_wait_steps
                    and self._may_enter(world, agent)):
                self._cleared.add(agent.id)
                return None  # resume free-flow control
            return -speed / dt  # hold (clamps to a full stop)
        if hold <= 1.0 and speed <= 0.5:
            return -speed / dt  # settling; bookkeeping registers next step
        # track a stopping speed profile into the hold point
        v_target = np.sqrt(2.0 * 1.8 * max(hold - 0.4, 0.0))
        if speed > v_target:
            return float(np.clip((v_target - speed) / dt, -6.0, 0.0))
        return None

    def _is_moving_threat(self, other) -> bool:
        """Anything still rolling toward the box blocks a release; stop-line
        holders have settled to ~0 speed and do not."""
        if other.speed <= 1.5:
            return False
        d = self._box_distance(other.position)
        if d == 0.0:
            return True
        if d > 4.0 * other.speed:
            return False
        ahead = other.position + 0.5 * np.array(
            [np.cos(other.heading), np.sin(other.heading)])
        return self._box_distance(ahead) < d - 0.05

    def _may_enter(self, world, agent) -> bool:
        # the box must be empty, nobody released earlier may still be
        # crossing, no moving vehicle may be about to enter, and earlier
        # arrivals go first
        for other in world.alive_agents():
            if other.id == agent.id:
                continue
            if self._in_zone(other.position) or self._is_moving_threat(other):
                return False
            if other.id in self._cleared:
                exit_s = self._zone_exit_s.get(other.route)
                if exit_s is not None:
                    s, _ = self.road_map.routes[other.route].project(other.position)
                    if s < exit_s:
                        return False
        alive_ids = set(world.alive_ids())
        mine = self._arrival[agent.id]
        for other_id, seq in self._arrival.items():
            if other_id == agent.id or other_id in self._cleared:
                continue
            if other_id not in alive_ids:
                continue
            if seq < mine or (seq == mine and other_id < agent.id):
                return False
        return True

    def _steering(self, agent, route, s):
        lookahead = float(np.clip(0.9 * agent.speed, 2.5, 9.0))
        target, _ = route.point_at(s + lookahead)
        rel = target - agent.position
        dist = max(float(np.hypot(*rel)), 0.3)
        alpha = float(wrap_angle(np.arctan2(rel[1], rel[0]) - agent.heading))
        wheelbase = WHEELBASE_RATIO * agent.length
        return float(np.clip(np.arctan2(2.0 * wheelbase * np.sin(alpha), dist),
                             -STEER_MAX, STEER_MAX))

    def action_for(self, world: WorldState, agent_id: str) -> Action:
        agent = world.agent(agent_id)
        route = self.road_map.routes[agent.route]
        s, _ = route.project(agent.position)
        steering = self._steering(agent, route, s)

        v_des = min(route.speed_limit_at(s), route.speed_limit_at(s + 6.0))
        accel = self._idm_accel(agent.speed, v_des, self._leader_gap(world, agent, route, s))

        stop_s = self._stop_s.get(agent.route)
        if (stop_s is not None and agent.id not in self._cleared
                and s < stop_s + 1.0):
            stop_accel = self._stop_line_accel(world, agent, stop_s - s, world.dt)
            if stop_accel is not None:
                accel = min(accel, stop_accel)

        return Action(float(np.clip(accel, ACCEL_MIN, ACCEL_MAX)), steering)

    # BehaviorModel interface used by the prediction rollouts: act for
    # exactly the agents whose observations were requested
    def act(self, world: WorldState, observations, mode: str, rngs) -> dict:
        del mode, rngs  # privileged controller; deterministic
        self._update_bookkeeping(world)
        return {aid: self.action_for(world, aid) for aid in sorted(observations)}
