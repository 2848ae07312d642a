"""Local HTTP service backing the what-if UI.

Endpoints (JSON in, JSON or JSON-lines out):
    GET  /scenarios                     -> ["name", ...]
    GET  /scenarios/<name>?seed=N       -> {name, spec, map, seed, initial: [...]}
    POST /rollout                       {scenario, seed?, mode?, horizon?}
    POST /rollout/conditional           {scenario, av_id, plan, seed?, mode?, horizon?}
    POST /observation                   {scenario, agent_id, seed?}

Rollout responses are the exact bytes the CLI writes for the same inputs
(one shared serializer). The service never writes; checkpoints, maps and
scenarios are read once and shared read-only across request threads.
"""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .airl import load_model_checkpoint
from .conditional import (PlanError, PolicyModel, plan_from_json, predict,
                          predict_conditional, rollout_to_jsonl)
from .experts import ScriptedExpert
from .map_core import parse_map
from .observation import build_observation, observation_to_json
from .sim_engine import SpawnError, spawn_situation

__all__ = ["SimService", "create_server", "run_server"]


class ServiceError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


class SimService:
    """Request-independent core so handlers stay trivial and testable."""

    def __init__(self, scenario_dir, checkpoint=None, scripted: bool = False):
        self.scenarios = {}
        scenario_dir = Path(scenario_dir)
        for path in sorted(scenario_dir.glob("*.json")):
            with open(path) as f:
                spec = json.load(f)
            if "agents" not in spec:
                continue  # not a scenario file (e.g. a map in the same dir)
            map_path = (scenario_dir / spec["map"]).resolve()
            if not map_path.exists():
                from .fixtures import fixture_path
                map_path = fixture_path(spec["map"])
            with open(map_path) as f:
                map_doc = json.load(f)
            self.scenarios[path.stem] = {
                "spec": spec,
                "map_doc": map_doc,
                "road_map": parse_map(map_doc),
            }
        self.scripted = scripted
        self.policy = None
        if not scripted:
            if checkpoint is None:
                raise ValueError("either a checkpoint or scripted=True is required")
            self.policy, _, _, _ = load_model_checkpoint(checkpoint)

    def _entry(self, name: str):
        if name not in self.scenarios:
            raise ServiceError(404, f"unknown scenario '{name}'")
        return self.scenarios[name]

    def _model(self, entry):
        if self.scripted:
            return ScriptedExpert(entry["road_map"])
        return PolicyModel(self.policy)

    def _spawn(self, entry, seed: int):
        try:
            return spawn_situation(entry["road_map"], entry["spec"], seed)
        except SpawnError as e:
            raise ServiceError(400, str(e)) from e

    def list_scenarios(self) -> list:
        return sorted(self.scenarios)

    def scenario_detail(self, name: str, seed: int = 0) -> dict:
        entry = self._entry(name)
        world = self._spawn(entry, seed)
        return {
            "name": name,
            "seed": seed,
            "spec": entry["spec"],
            "map": entry["map_doc"],
            "initial": [{
                "id": a.id, "x": float(a.position[0]), "y": float(a.position[1]),
                "heading": a.heading, "speed": a.speed, "length": a.length,
                "width": a.width, "route": a.route,
            } for a in world.agents],
        }

    def rollout(self, body: dict) -> str:
        entry = self._entry(_need(body, "scenario"))
        seed = int(body.get("seed", 0))
        mode = body.get("mode", "mean")
        horizon = int(body.get("horizon", entry["spec"].get("horizon_steps", 50)))
        dt = float(entry["spec"].get("dt", 0.2))
        world0 = self._spawn(entry, seed)
        result = predict(world0, self._model(entry), horizon=horizon, dt=dt,
                         seed=seed, mode=mode)
        return rollout_to_jsonl(result)

    def rollout_conditional(self, body: dict) -> str:
        entry = self._entry(_need(body, "scenario"))
        av_id = str(_need(body, "av_id"))
        try:
            plan = plan_from_json(_need(body, "plan"))
        except PlanError as e:
            raise ServiceError(400, f"invalid plan: {e}") from e
        seed = int(body.get("seed", 0))
        mode = body.get("mode", "mean")
        horizon = int(body.get("horizon", entry["spec"].get("horizon_steps", 50)))
        dt = float(entry["spec"].get("dt", 0.2))
        world0 = self._spawn(entry, seed)
        try:
            result = predict_conditional(world0, self._model(entry), av_id, plan,
                                         horizon=horizon, dt=dt, seed=seed, mode=mode)
        except (PlanError, KeyError, ValueError) as e:
            raise ServiceError(400, str(e)) from e
        return rollout_to_jsonl(result)

    def observation(self, body: dict) -> dict:
        entry = self._entry(_need(body, "scenario"))
        agent_id = str(_need(body, "agent_id"))
        world0 = self._spawn(entry, int(body.get("seed", 0)))
        try:
            return observation_to_json(build_observation(world0, agent_id))
        except (KeyError, ValueError) as e:
            raise ServiceError(400, str(e)) from e


def _need(body: dict, key: str):
    if key not in body:
        raise ServiceError(400, f"missing required field '{key}'")
    return body[key]


def _make_handler(service: SimService):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _send(self, status: int, payload: bytes, content_type: str):
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(payload)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(payload)

        def _send_json(self, status: int, doc):
            self._send(status, json.dumps(doc).encode(), "application/json")

        def _body(self) -> dict:
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length) if length else b"{}"
            try:
                doc = json.loads(raw or b"{}")
            except json.JSONDecodeError as e:
                raise ServiceError(400, f"request body is not valid JSON: {e}") from e
            if not isinstance(doc, dict):
                raise ServiceError(400, "request body must be a JSON object")
            return doc

        def do_OPTIONS(self):
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.end_headers()

        def do_GET(self):
            try:
                url = urlparse(self.path)
                parts = [p for p in url.path.split("/") if p]
                if parts == ["scenarios"]:
                    self._send_json(200, service.list_scenarios())
                elif len(parts) == 2 and parts[0] == "scenarios":
                    seed = int(parse_qs(url.query).get("seed", ["0"])[0])
                    self._send_json(200, service.scenario_detail(parts[1], seed))
                else:
                    self._send_json(404, {"error": f"no such endpoint {url.path}"})
            except ServiceError as e:
                self._send_json(e.status, {"error": e.message})
            except Exception as e:  # defensive: report, never crash the server
                self._send_json(500, {"error": str(e)})

        def do_POST(self):
            try:
                body = self._body()
                if self.path == "/rollout":
                    text = service.rollout(body)
                    self._send(200, text.encode(), "application/x-ndjson")
                elif self.path == "/rollout/conditional":
                    text = service.rollout_conditional(body)
                    self._send(200, text.encode(), "application/x-ndjson")
                elif self.path == "/observation":
                    self._send_json(200, service.observation(body))
                else:
                    self._send_json(404, {"error": f"no such endpoint {self.path}"})
            except ServiceError as e:
                self._send_json(e.status, {"error": e.message})
            except Exception as e:
                self._send_json(500, {"error": str(e)})

    return Handler


def create_server(port: int, scenario_dir, checkpoint=None,
                  scripted: bool = False, host: str = "127.0.0.1") -> ThreadingHTTPServer:
    service = SimService(scenario_dir, checkpoint=checkpoint, scripted=scripted)
    return ThreadingHTTPServer((host, port), _make_handler(service))


def run_server(port: int, scenario_dir, checkpoint=None, scripted: bool = False,
               host: str = "127.0.0.1"):
    server = create_server(port, scenario_dir, checkpoint, scripted, host)
    print(f"condsim service on http://{host}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
