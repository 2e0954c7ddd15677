"""Placement, population and selection strategies, plus the custom
processes (node failures, source movement) used by the larger scenarios.

Every policy talks to the run through a :class:`~fogsim.engine.SimHandle`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from fogsim.distributions import Distribution
from fogsim.distributions import from_json as distribution_from_json
from fogsim.errors import ScenarioError, SimulationError

# -- node designators -----------------------------------------------------------------


def resolve_nodes(topology, designator: Any) -> list[int]:
    """Turn ``3``, ``[1, 2]``, ``{"node": 3}``, ``{"nodes": [...]}`` or
    ``{"where": {attr: value}}`` into a list of node ids."""
    if isinstance(designator, bool):
        raise SimulationError(f"bad node designator {designator!r}")
    if isinstance(designator, int):
        return [designator]
    if isinstance(designator, list):
        return [int(n) for n in designator]
    if isinstance(designator, dict):
        if "node" in designator:
            return [int(designator["node"])]
        if "nodes" in designator:
            return [int(n) for n in designator["nodes"]]
        if "where" in designator:
            return topology.find(**designator["where"])
    raise SimulationError(f"bad node designator {designator!r}")


# -- selection ---------------------------------------------------------------------------


class ShortestPathSelection:
    """Nearest replica by hop count; ties by node id, then des id.

    With ``reply_to_origin`` a replica that already handled this message
    instance wins ties at equal distance, so replies return to the module
    that asked.
    """

    name = "shortest_path"

    def __init__(self, reply_to_origin: bool = False) -> None:
        self.reply_to_origin = reply_to_origin
        self._rankings: dict[tuple, list[tuple[int, int, int]]] = {}
        self._stamp: tuple[int, int] | None = None

    def _ranking(self, sim, app: str, module: str, node: int) -> list[tuple[int, int, int]]:
        """Reachable replicas as sorted ``(distance, node, des)``; cached
        until the topology or the replica set changes."""
        stamp = (sim.topology.generation, sim.replica_version)
        if stamp != self._stamp:
            self._rankings.clear()
            self._stamp = stamp
        key = (app, module, node)
        ranking = self._rankings.get(key)
        if ranking is None:
            dist = sim.topology.distances_from(node)
            ranking = sorted(
                (dist[p.node], p.node, p.des) for p in sim.replicas(app, module) if p.node in dist
            )
            self._rankings[key] = ranking
        return ranking

    def select(self, sim, msg, from_node: int | None = None):
        node = msg.src_node if from_node is None else from_node
        ranking = self._ranking(sim, msg.app, msg.module_dst, node)
        if not ranking:
            return None
        best = ranking[0]
        if self.reply_to_origin and msg.trail:
            for entry in ranking:
                if entry[0] != best[0]:
                    break
                if entry[2] in msg.trail:
                    best = entry
                    break
        return best[2], sim.topology.shortest_path(node, best[1])

    def broadcast(self, sim, msg):
        return _broadcast(sim, msg)

    def reroute(self, sim, msg, from_node: int):
        return _keep_or_select(self, sim, msg, from_node)

    def to_json(self) -> dict[str, Any]:
        return {"type": self.name, "reply_to_origin": self.reply_to_origin}


class RoundRobinSelection:
    """Cycle over replicas in ascending des id per (source process, message)."""

    name = "round_robin"

    def __init__(self) -> None:
        self._last: dict[tuple[int, str], int] = {}

    def select(self, sim, msg, from_node: int | None = None):
        node = msg.src_node if from_node is None else from_node
        topo = sim.topology
        reachable = sorted(
            (p for p in sim.replicas(msg.app, msg.module_dst) if topo.hop_distance(node, p.node) is not None),
            key=lambda p: p.des,
        )
        if not reachable:
            return None
        key = (msg.src_des, msg.name)
        last = self._last.get(key)
        chosen = reachable[0]
        if last is not None:
            for p in reachable:
                if p.des > last:
                    chosen = p
                    break
        self._last[key] = chosen.des
        return chosen.des, topo.shortest_path(node, chosen.node)

    def broadcast(self, sim, msg):
        return _broadcast(sim, msg)

    def reroute(self, sim, msg, from_node: int):
        return _keep_or_select(self, sim, msg, from_node)

    def to_json(self) -> dict[str, Any]:
        return {"type": self.name}


def _broadcast(sim, msg) -> list[tuple[int, list[int]]]:
    out = []
    for p in sorted(sim.replicas(msg.app, msg.module_dst), key=lambda p: p.des):
        path = sim.topology.shortest_path(msg.src_node, p.node)
        if path is not None:
            out.append((p.des, path))
    return out


def _keep_or_select(policy, sim, msg, from_node: int):
    # keep the original replica when it survived and is still reachable
    if sim.is_active(msg.dst_des):
        target = sim.process(msg.dst_des).node
        path = sim.topology.shortest_path(from_node, target)
        if path is not None:
            return msg.dst_des, path
    return policy.select(sim, msg, from_node)


def selection_from_json(doc: dict[str, Any]):
    kind = doc.get("type")
    if kind == "shortest_path":
        return ShortestPathSelection(bool(doc.get("reply_to_origin", False)))
    if kind == "round_robin":
        return RoundRobinSelection()
    raise ScenarioError(f"unknown selection type {kind!r}", "/selection/type")


# -- placement ---------------------------------------------------------------------------


@dataclass
class StaticPlacement:
    """Deploy each listed module once per designated node at start-up."""

    assignments: dict[str, Any] = field(default_factory=dict)
    activation: Distribution | None = None
    name: str = "static"

    def initial_allocation(self, sim, app: str) -> None:
        for module, where in self.assignments.items():
            for node in resolve_nodes(sim.topology, where):
                sim.deploy(app, module, node)

    def run(self, sim) -> None:
        pass

    def to_json(self) -> dict[str, Any]:
        return {"type": "static", "assignments": self.assignments}


@dataclass
class BetweennessPlacement:
    """Deploy ``module`` on the ``count`` most central nodes."""

    module: str
    count: int = 1
    activation: Distribution | None = None
    name: str = "betweenness"

    def initial_allocation(self, sim, app: str) -> None:
        for node in sim.topology.top_betweenness(self.count):
            sim.deploy(app, self.module, node)

    def run(self, sim) -> None:
        pass

    def to_json(self) -> dict[str, Any]:
        return {"type": "betweenness", "module": self.module, "count": self.count}


# -- population --------------------------------------------------------------------------


@dataclass
class SinkControl:
    module: str
    nodes: Any
    number: int = 1


@dataclass
class SourceControl:
    message: str
    nodes: Any
    distribution: Distribution
    number: int = 1


@dataclass
class StaticPopulation:
    sinks: list[SinkControl] = field(default_factory=list)
    sources: list[SourceControl] = field(default_factory=list)
    activation: Distribution | None = None
    name: str = "static"

    def initial_allocation(self, sim, app: str) -> None:
        for s in self.sinks:
            for node in resolve_nodes(sim.topology, s.nodes):
                for _ in range(s.number):
                    sim.deploy(app, s.module, node)
        for s in self.sources:
            for node in resolve_nodes(sim.topology, s.nodes):
                for _ in range(s.number):
                    sim.deploy_source(app, node, s.message, s.distribution)

    def run(self, sim) -> None:
        pass


@dataclass
class EvolutivePopulation(StaticPopulation):
    """Static part at start-up, then one deployment per tick on the next target.

    ``grow`` says what each tick adds: a workload source emitting
    ``message`` or a replica of ``module``.
    """

    targets: list[int] = field(default_factory=list)
    grow: str = "source"
    module: str | None = None
    message: str | None = None
    distribution: Distribution | None = None
    name: str = "evolutive"

    def __post_init__(self) -> None:
        if self.grow not in ("source", "sink"):
            raise SimulationError(f"evolutive population grows 'source' or 'sink', not {self.grow!r}")
        self._app: str | None = None
        self._next = 0

    def initial_allocation(self, sim, app: str) -> None:
        self._app = app
        super().initial_allocation(sim, app)

    def run(self, sim) -> None:
        if self._next >= len(self.targets):
            sim.log("population_exhausted", app=self._app)
            return
        node = self.targets[self._next]
        self._next += 1
        if node not in sim.topology:
            sim.log("population_skip", app=self._app, node=node)
            return
        if self.grow == "sink":
            des = sim.deploy(self._app, self.module, node)
        else:
            des = sim.deploy_source(self._app, node, self.message, self.distribution)
        sim.log("population_grow", app=self._app, node=node, des=des)


def _controls(doc: dict[str, Any]) -> tuple[list[SinkControl], list[SourceControl]]:
    sinks = [SinkControl(s["module"], _designator(s), int(s.get("number", 1))) for s in doc.get("sinks", [])]
    sources = [
        SourceControl(s["message"], _designator(s), distribution_from_json(s["distribution"]), int(s.get("number", 1)))
        for s in doc.get("sources", [])
    ]
    return sinks, sources


def _designator(doc: dict[str, Any]) -> Any:
    for key in ("node", "nodes", "where"):
        if key in doc:
            return {key: doc[key]}
    raise SimulationError("node designator needs one of node, nodes, where")


def placement_from_json(doc: dict[str, Any]):
    kind = doc.get("type")
    if kind == "static":
        return StaticPlacement(dict(doc.get("assignments", {})))
    if kind == "betweenness":
        return BetweennessPlacement(doc["module"], int(doc.get("count", 1)))
    raise SimulationError(f"unknown placement type {kind!r}")


def population_from_json(doc: dict[str, Any]):
    kind = doc.get("type")
    sinks, sources = _controls(doc)
    if kind == "static":
        return StaticPopulation(sinks, sources)
    if kind == "evolutive":
        return EvolutivePopulation(
            sinks,
            sources,
            activation=distribution_from_json(doc["activation"]),
            targets=[int(n) for n in doc.get("targets", [])],
            grow=doc.get("grow", "source"),
            module=doc.get("module"),
            message=doc.get("message"),
            distribution=distribution_from_json(doc["distribution"]) if "distribution" in doc else None,
        )
    raise SimulationError(f"unknown population type {kind!r}")


# -- custom processes ------------------------------------------------------------------


@dataclass
class FailureProcess:
    """Each tick removes the next surviving candidate node.

    Nodes hosting a workload source at tick time are skipped for good.
    """

    candidates: list[int]
    activation: Distribution
    protect_sources: bool = True
    name: str = "failure"

    def __post_init__(self) -> None:
        self._next = 0

    def run(self, sim) -> None:
        protected = {p.node for p in sim.sources()} if self.protect_sources else set()
        while self._next < len(self.candidates):
            node = self.candidates[self._next]
            self._next += 1
            if node in sim.topology and node not in protected:
                sim.fail_node(node)
                return
        sim.log("failure_exhausted")

    def to_json(self) -> dict[str, Any]:
        return {"type": "failure", "candidates": list(self.candidates), "activation": self.activation.to_json(),
                "protect_sources": self.protect_sources}


@dataclass
class MovementProcess:
    """Each tick moves every source of ``app`` one hop toward its receiver.

    The receiver is the replica the source last sent to, or the nearest one
    when that is gone. Co-located and disconnected sources stay put.
    """

    app: str
    activation: Distribution
    name: str = "movement"

    def _target_node(self, sim, src) -> int | None:
        last = sim.last_target(src.des)
        if last is not None and sim.is_active(last):
            return sim.process(last).node
        app = sim.app(self.app)
        dst = app.messages[src.message].dst
        best = None
        for p in sim.replicas(self.app, dst):
            d = sim.topology.hop_distance(src.node, p.node)
            if d is not None and (best is None or (d, p.node, p.des) < best[0]):
                best = ((d, p.node, p.des), p.node)
        return None if best is None else best[1]

    def run(self, sim) -> None:
        before = after = moved = 0
        for src in sorted(sim.sources(self.app), key=lambda p: p.des):
            target = self._target_node(sim, src)
            path = None if target is None else sim.topology.shortest_path(src.node, target)
            if path is None:
                sim.log("movement_stuck", des=src.des, node=src.node)
                continue
            hops = len(path) - 1
            before += hops
            if hops == 0:
                continue
            sim.undeploy(src.des)
            sim.deploy_source(self.app, path[1], src.message, src.distribution)
            moved += 1
            after += hops - 1
        sim.log("movement", app=self.app, moved=moved, distance_before=before, distance_after=after)

    def to_json(self) -> dict[str, Any]:
        return {"type": "movement", "app": self.app, "activation": self.activation.to_json()}


def process_from_json(doc: dict[str, Any]):
    kind = doc.get("type")
    if kind == "failure":
        return FailureProcess([int(n) for n in doc.get("candidates", [])], distribution_from_json(doc["activation"]),
                              bool(doc.get("protect_sources", True)))
    if kind == "movement":
        return MovementProcess(doc["app"], distribution_from_json(doc["activation"]))
    raise SimulationError(f"unknown process type {kind!r}")
