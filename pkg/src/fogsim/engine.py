"""Discrete-event core.

One heap of ``(time, seq, callback, args)`` drives everything: workload
sources, module servers (single-server FIFO each), link channels (one
message on the wire per direction, FIFO behind it), policy ticks and custom
processes. Equal-time events run in insertion order.

A message's path is fixed when it is emitted and only recomputed when a
node failure invalidates it.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Protocol

from fogsim import application as appmod
from fogsim.application import Application
from fogsim.distributions import Distribution, RandomStream
from fogsim.errors import SimulationError, TopologyError
from fogsim.results import (
    COMP_M,
    LINK,
    LINK_REMOVED,
    NO_PATH,
    NODE_REMOVED,
    SINK_M,
    UNDEPLOYED,
    ComputeRecord,
    DropRecord,
    LinkRecord,
    ResultSet,
    quantize,
)
from fogsim.topology import Topology

log = logging.getLogger(__name__)

SOURCE = "SOURCE"
MODULE_SERVER = "MODULE_SERVER"
SINK = "SINK"
POLICY_TICK = "POLICY_TICK"
CUSTOM = "CUSTOM"


@dataclass(eq=False, slots=True)
class Message:
    """One message instance in flight.

    ``id`` is shared by every message derived from the same workload
    emission. ``hop`` indexes the node of ``path`` the message is at (or is
    leaving, while on a link).
    """

    id: int
    app: str
    name: str
    module_src: str
    module_dst: str
    src_des: int
    src_node: int
    bytes: float
    instructions: float
    time_emit: float
    trail: tuple[int, ...] = ()
    dst_des: int = -1
    path: list[int] = field(default_factory=list)
    hop: int = 0
    generation: int = 0
    time_reception: float = 0.0
    time_in: float = 0.0
    enqueued: float = 0.0
    dropped: bool = False

    @property
    def node(self) -> int:
        return self.path[self.hop]

    @property
    def dst_node(self) -> int:
        return self.path[-1]


@dataclass(eq=False)
class Process:
    des: int
    kind: str
    node: int | None = None
    app: str | None = None
    module: str | None = None
    message: str | None = None
    distribution: Distribution | None = None
    parent: int | None = None
    name: str = ""
    active: bool = True
    emissions: int = 0
    rng: RandomStream | None = None
    queue: deque = field(default_factory=deque)
    current: Message | None = None
    children: list[int] = field(default_factory=list)


class _Channel:
    __slots__ = ("u", "v", "queue", "current", "flying", "alive")

    def __init__(self, u: int, v: int) -> None:
        self.u = u
        self.v = v
        self.queue: deque[Message] = deque()
        self.current: Message | None = None
        self.flying: dict[Message, None] = {}
        self.alive = True


class Selection(Protocol):
    def select(self, sim: SimHandle, msg: Message, from_node: int | None = None) -> tuple[int, list[int]] | None: ...

    def broadcast(self, sim: SimHandle, msg: Message) -> list[tuple[int, list[int]]]: ...

    def reroute(self, sim: SimHandle, msg: Message, from_node: int) -> tuple[int, list[int]] | None: ...


class SimHandle:
    """What policies and custom processes may touch while the run is live."""

    __slots__ = ("_sim",)

    def __init__(self, sim: Simulation) -> None:
        self._sim = sim

    @property
    def now(self) -> float:
        return self._sim.now

    @property
    def topology(self) -> Topology:
        return self._sim.topology

    @property
    def seed(self) -> int:
        return self._sim.seed

    @property
    def replica_version(self) -> int:
        return self._sim.replica_version

    def app(self, name: str) -> Application:
        return self._sim.apps[name]

    def replicas(self, app: str, module: str) -> list[Process]:
        return self._sim.replicas(app, module)

    def sources(self, app: str | None = None) -> list[Process]:
        return self._sim.sources(app)

    def process(self, des: int) -> Process:
        return self._sim.processes[des]

    def is_active(self, des: int) -> bool:
        p = self._sim.processes.get(des)
        return p is not None and p.active

    def last_target(self, src_des: int) -> int | None:
        return self._sim.last_target.get(src_des)

    def deploy_source(self, app: str, node: int, message: str, distribution: Distribution) -> int:
        return self._sim.deploy_source(app, node, message, distribution)

    def deploy_module(self, app: str, module: str, node: int) -> int:
        return self._sim.deploy_module(app, module, node)

    def deploy_sink(self, app: str, module: str, node: int) -> int:
        return self._sim.deploy_sink(app, module, node)

    def deploy(self, app: str, module: str, node: int) -> int:
        return self._sim.deploy(app, module, node)

    def undeploy(self, des: int) -> None:
        self._sim.undeploy(des)

    def stop_process(self, des: int) -> None:
        self._sim.stop_process(des)

    def fail_node(self, node: int) -> None:
        self._sim.fail_node(node)

    def rng(self, key: object) -> RandomStream:
        return RandomStream(self._sim.seed, key)

    def log(self, event: str, **data: Any) -> None:
        self._sim.log_event(event, **data)


@dataclass
class _AppDeployment:
    app: Application
    placement: Any
    populations: list[Any]
    selection: Any
    initialized: bool = False


class Simulation:
    """A single run. Build it, register apps and processes, call :meth:`run`."""

    def __init__(self, topology: Topology, seed: int = 0, trace: bool = False) -> None:
        self.topology = topology
        # (id, message, u, v, enqueue time, transmission start) per link service
        self.link_trace: list[tuple] | None = [] if trace else None
        self.seed = seed
        self.now = 0.0
        self.handle = SimHandle(self)
        self.apps: dict[str, Application] = {}
        self.processes: dict[int, Process] = {}
        self.results = ResultSet()
        self.buffer = 0
        self.replica_version = 0
        self.last_target: dict[int, int] = {}
        self._deployments: dict[str, _AppDeployment] = {}
        self._custom: list[Any] = []
        self._heap: list[tuple] = []
        self._seq = itertools.count()
        self._des = itertools.count()
        self._msg_ids = itertools.count(1)
        self._replicas: dict[tuple[str, str], list[int]] = {}
        self._channels: dict[tuple[int, int], _Channel] = {}
        self._in_flight: dict[Message, None] = {}
        self._ran = False
        self._initialized = False

    # -- scheduling ------------------------------------------------------------------

    def _at(self, t: float, fn: Callable, *args: Any) -> None:
        heapq.heappush(self._heap, (quantize(t), next(self._seq), fn, args))

    def log_event(self, event: str, **data: Any) -> None:
        self.results.events.append({"event": event, "time": self.now, **data})

    # -- registration ----------------------------------------------------------------

    def deploy_app(self, app: Application, placement: Any = None, populations: Iterable[Any] = (), selection: Any = None) -> None:
        from fogsim.policies import ShortestPathSelection

        if app.name in self.apps:
            raise SimulationError(f"application {app.name!r} already deployed")
        appmod.validate(app)
        self.apps[app.name] = app
        self._deployments[app.name] = _AppDeployment(
            app, placement, list(populations), selection if selection is not None else ShortestPathSelection()
        )

    def add_process(self, process: Any) -> None:
        """Register a custom process: an object with ``activation`` and ``run(sim)``."""
        self._custom.append(process)

    def _new_process(self, kind: str, **kw: Any) -> Process:
        des = next(self._des)
        p = Process(des, kind, **kw)
        p.rng = RandomStream(self.seed, des)
        self.processes[des] = p
        return p

    def _app(self, name: str) -> Application:
        try:
            return self.apps[name]
        except KeyError:
            raise SimulationError(f"unknown application {name!r}") from None

    def _check_node(self, node: int) -> None:
        if node not in self.topology:
            raise TopologyError(f"unknown node {node}")

    def replicas(self, app: str, module: str) -> list[Process]:
        return [self.processes[d] for d in self._replicas.get((app, module), ())]

    def sources(self, app: str | None = None) -> list[Process]:
        return [
            p
            for p in self.processes.values()
            if p.active and p.kind == SOURCE and p.parent is None and (app is None or p.app == app)
        ]

    def deploy_source(self, app: str, node: int, message: str, distribution: Distribution) -> int:
        a = self._app(app)
        self._check_node(node)
        if message not in a.source_messages:
            raise SimulationError(f"{app}: {message!r} is not a source message")
        p = self._new_process(SOURCE, node=node, app=app, module=a.message(message).src, message=message,
                              distribution=distribution)
        self._at(self.now + distribution.next_interval(p.rng, True), self._source_fire, p)
        self.log_event("deploy", des=p.des, kind=SOURCE, app=app, module=p.module, node=node, message=message)
        return p.des

    def _deploy_server(self, app: str, module: str, node: int, kind: str) -> int:
        a = self._app(app)
        self._check_node(node)
        mod = a.module(module)
        want = appmod.MODULE if kind == MODULE_SERVER else appmod.SINK
        if mod.kind != want:
            raise SimulationError(f"{app}: module {module!r} is {mod.kind}, expected {want}")
        if kind == MODULE_SERVER and not self.topology.nodes[node].ipt > 0:
            raise SimulationError(f"node {node} has no compute capacity (IPT) for module {module!r}")
        p = self._new_process(kind, node=node, app=app, module=module)
        self._replicas.setdefault((app, module), []).append(p.des)
        self.replica_version += 1
        self.log_event("deploy", des=p.des, kind=kind, app=app, module=module, node=node)
        if kind == MODULE_SERVER:
            for ss in a.service_sources:
                if ss.module == module:
                    child = self._new_process(SOURCE, node=node, app=app, module=module, message=ss.message_out,
                                              distribution=ss.distribution, parent=p.des)
                    p.children.append(child.des)
                    self._at(self.now + ss.distribution.next_interval(child.rng, True), self._source_fire, child)
        return p.des

    def deploy_module(self, app: str, module: str, node: int) -> int:
        return self._deploy_server(app, module, node, MODULE_SERVER)

    def deploy_sink(self, app: str, module: str, node: int) -> int:
        return self._deploy_server(app, module, node, SINK)

    def deploy(self, app: str, module: str, node: int) -> int:
        """Deploy a service or sink replica, whichever kind ``module`` is."""
        kind = self._app(app).kind_of(module)
        if kind == appmod.SINK:
            return self.deploy_sink(app, module, node)
        return self.deploy_module(app, module, node)

    def stop_process(self, des: int) -> None:
        self.undeploy(des)

    def undeploy(self, des: int, reason: str = UNDEPLOYED) -> None:
        p = self.processes.get(des)
        if p is None:
            raise SimulationError(f"unknown process {des}")
        if not p.active:
            return
        p.active = False
        if p.kind in (MODULE_SERVER, SINK):
            self._replicas[(p.app, p.module)].remove(des)
            self.replica_version += 1
            pending = ([p.current] if p.current is not None else []) + list(p.queue)
            p.current = None
            p.queue.clear()
            for m in pending:
                self._drop(m, reason, f"des={des};node={p.node}")
            for child in p.children:
                self.processes[child].active = False
        self.log_event("undeploy", des=des, kind=p.kind, app=p.app, module=p.module, node=p.node)

    # -- sources ---------------------------------------------------------------------

    def _source_fire(self, p: Process) -> None:
        if not p.active:
            return
        p.emissions += 1
        app = self.apps[p.app]
        mt = app.messages[p.message]
        if p.parent is None:
            src_des, trail = p.des, ()
        else:
            src_des, trail = p.parent, (p.parent,)
        msg = Message(next(self._msg_ids), p.app, mt.name, mt.src, mt.dst, src_des, p.node, mt.bytes,
                      mt.instructions, self.now, trail)
        self._dispatch(msg, mt.broadcast, track=p.parent is None)
        self._at(self.now + p.distribution.next_interval(p.rng, False), self._source_fire, p)

    # -- routing ---------------------------------------------------------------------

    def _dispatch(self, msg: Message, broadcast: bool, track: bool = False) -> None:
        sel = self._deployments[msg.app].selection
        if broadcast:
            targets = sel.broadcast(self.handle, msg)
            if not targets:
                self._drop(msg, NO_PATH, f"no reachable replica of {msg.module_dst} from node {msg.src_node}")
                return
            copies = [msg] + [replace(msg, path=[]) for _ in targets[1:]]
            for m, (des, path) in zip(copies, targets):
                self._launch(m, des, path)
            return
        choice = sel.select(self.handle, msg)
        if choice is None:
            self._drop(msg, NO_PATH, f"no reachable replica of {msg.module_dst} from node {msg.src_node}")
            return
        if track:
            self.last_target[msg.src_des] = choice[0]
        self._launch(msg, *choice)

    def _launch(self, msg: Message, des: int, path: list[int]) -> None:
        msg.dst_des = des
        msg.path = list(path)
        msg.hop = 0
        msg.generation = self.topology.generation
        self._advance(msg)

    def _advance(self, msg: Message) -> None:
        if msg.hop == len(msg.path) - 1:
            self._deliver(msg)
            return
        u, v = msg.path[msg.hop], msg.path[msg.hop + 1]
        link = self.topology.link(u, v)
        if link is None:
            self._reroute_here(msg, u)
            return
        ch = self._channels.get((u, v))
        if ch is None:
            ch = self._channels[(u, v)] = _Channel(u, v)
        tx, pr = quantize(msg.bytes / link.bw), quantize(link.pr)
        self._in_flight[msg] = None
        msg.enqueued = self.now
        if ch.current is None:
            self._start_link(ch, msg, tx, pr)
        else:
            ch.queue.append(msg)
            self.buffer += 1
        self.results.link.append(
            LinkRecord(msg.id, LINK, u, v, msg.app, tx + pr, msg.name, self.now, msg.bytes, self.buffer)
        )

    def _start_link(self, ch: _Channel, msg: Message, tx: float | None = None, pr: float | None = None) -> None:
        if tx is None:
            link = self.topology.link(ch.u, ch.v)
            tx, pr = quantize(msg.bytes / link.bw), quantize(link.pr)
        ch.current = msg
        if self.link_trace is not None:
            self.link_trace.append((msg.id, msg.name, ch.u, ch.v, msg.enqueued, self.now))
        self._at(self.now + tx, self._transmitted, ch, msg, pr)

    def _transmitted(self, ch: _Channel, msg: Message, pr: float) -> None:
        # the wire is free once the last byte is out; propagation overlaps
        if not ch.alive or ch.current is not msg:
            return
        ch.current = None
        ch.flying[msg] = None
        if ch.queue:
            nxt = ch.queue.popleft()
            self.buffer -= 1
            self._start_link(ch, nxt)
        self._at(self.now + pr, self._arrived, ch, msg)

    def _arrived(self, ch: _Channel, msg: Message) -> None:
        if not ch.alive or msg not in ch.flying:
            return
        del ch.flying[msg]
        self._in_flight.pop(msg, None)
        if msg.dropped:
            return
        msg.hop += 1
        self._advance(msg)

    def _reroute_here(self, msg: Message, node: int) -> None:
        sel = self._deployments[msg.app].selection
        res = sel.reroute(self.handle, msg, node)
        if res is None:
            self._drop(msg, NO_PATH, f"no route from node {node}")
            return
        des, path = res
        msg.path = msg.path[: msg.hop] + list(path)
        msg.dst_des = des
        msg.generation = self.topology.generation
        self._advance(msg)

    # -- service ---------------------------------------------------------------------

    def _deliver(self, msg: Message) -> None:
        p = self.processes.get(msg.dst_des)
        if p is None or not p.active:
            self._reroute_here(msg, msg.path[msg.hop])
            return
        msg.time_reception = self.now
        if p.current is None:
            self._start_service(p, msg)
        else:
            p.queue.append(msg)

    def _start_service(self, p: Process, msg: Message) -> None:
        p.current = msg
        msg.time_in = self.now
        if p.kind == SINK:
            service = 0.0
        else:
            service = quantize(msg.instructions / self.topology.nodes[p.node].ipt)
        self._at(self.now + service, self._service_done, p, msg)

    def _service_done(self, p: Process, msg: Message) -> None:
        if p.current is not msg:
            return
        p.current = None
        app = self.apps[p.app]
        if p.kind == SINK:
            raw = app.kind_of(msg.module_src) == appmod.SOURCE
            service = None if raw else self.now - msg.time_in
            rtype = SINK_M
        else:
            service = self.now - msg.time_in
            rtype = COMP_M
        self.results.compute.append(
            ComputeRecord(msg.id, rtype, msg.app, p.module, msg.name, msg.src_des, p.des, msg.src_node, p.node,
                          msg.module_src, service, msg.time_in, self.now, msg.time_emit, msg.time_reception)
        )
        if p.queue:
            self._start_service(p, p.queue.popleft())
        if p.kind != MODULE_SERVER:
            return
        trail = msg.trail + (p.des,)
        for name in appmod.transmissions_for(app, p.module, msg.name, p.rng):
            mt = app.messages[name]
            out = Message(msg.id, msg.app, name, p.module, mt.dst, p.des, p.node, mt.bytes, mt.instructions,
                          self.now, trail)
            self._dispatch(out, mt.broadcast)

    # -- drops and failures -------------------------------------------------------

    def _drop(self, msg: Message, reason: str, context: str) -> None:
        msg.dropped = True
        self._in_flight.pop(msg, None)
        self.results.drops.append(DropRecord(msg.id, reason, self.now, f"{msg.app}:{msg.name}:{context}"))

    def fail_node(self, node: int) -> list[tuple[int, int]]:
        """Remove ``node``: stop what it hosts, kill its links, reroute the rest."""
        self._check_node(node)
        hosted = [p for p in self.processes.values() if p.active and p.node == node]
        had_replica = any(p.kind in (MODULE_SERVER, SINK) for p in hosted)
        removed = self.topology.remove_node(node)

        for key in [k for k in self._channels if node in k]:
            ch = self._channels.pop(key)
            ch.alive = False
            ctx = f"link={ch.u}-{ch.v}"
            if ch.current is not None:
                self._drop(ch.current, LINK_REMOVED, ctx)
                ch.current = None
            while ch.queue:
                self.buffer -= 1
                self._drop(ch.queue.popleft(), LINK_REMOVED, ctx)
            for m in list(ch.flying):
                self._drop(m, LINK_REMOVED, ctx)
            ch.flying.clear()

        for p in hosted:
            self.undeploy(p.des, reason=NODE_REMOVED)

        sel_for = {name: dep.selection for name, dep in self._deployments.items()}
        for msg in list(self._in_flight):
            anchor = msg.hop + 1
            if node not in msg.path[anchor:]:
                continue
            res = sel_for[msg.app].reroute(self.handle, msg, msg.path[anchor])
            if res is None:
                self._remove_waiting(msg)
                self._drop(msg, NO_PATH, f"reroute around failed node {node} from {msg.path[anchor]}")
                continue
            des, path = res
            msg.path = msg.path[:anchor] + list(path)
            msg.dst_des = des
            msg.generation = self.topology.generation
            self.log_event("reroute", id=msg.id, message=msg.name, failed=node, path=list(msg.path))

        self.log_event("failure", node=node, links=[list(k) for k in removed], hosted=[p.des for p in hosted],
                       replica_host=had_replica)
        return removed

    def _remove_waiting(self, msg: Message) -> None:
        u, v = msg.path[msg.hop], msg.path[msg.hop + 1]
        ch = self._channels.get((u, v))
        if ch is not None and ch.current is not msg:
            try:
                ch.queue.remove(msg)
                self.buffer -= 1
            except ValueError:
                pass

    # -- main loop ---------------------------------------------------------------------

    def initialize(self) -> None:
        """Run initial allocations and schedule ticks; :meth:`run` calls it."""
        if self._initialized:
            return
        self._initialized = True
        for name, dep in self._deployments.items():
            if dep.initialized:
                continue
            dep.initialized = True
            policies = ([dep.placement] if dep.placement is not None else []) + dep.populations
            for pol in policies:
                pol.initial_allocation(self.handle, name)
            for pol in policies:
                self._schedule_ticks(pol, f"{type(pol).__name__}:{name}")
        for proc in self._custom:
            self._schedule_ticks(proc, type(proc).__name__)

    def _schedule_ticks(self, policy: Any, name: str) -> int | None:
        dist = getattr(policy, "activation", None)
        if dist is None:
            return None
        kind = POLICY_TICK if hasattr(policy, "initial_allocation") else CUSTOM
        p = self._new_process(kind, distribution=dist, name=name)
        self._at(self.now + dist.next_interval(p.rng, True), self._tick, p, policy)
        return p.des

    def _tick(self, p: Process, policy: Any) -> None:
        if not p.active:
            return
        p.emissions += 1
        policy.run(self.handle)
        self._at(self.now + p.distribution.next_interval(p.rng, False), self._tick, p, policy)

    def run(self, until: float) -> ResultSet:
        if not until > 0:
            raise SimulationError("until must be positive")
        if self._ran:
            raise SimulationError("a Simulation can only run once")
        self._ran = True
        self.initialize()
        heap = self._heap
        pop = heapq.heappop
        while heap and heap[0][0] <= until:
            t, _, fn, args = pop(heap)
            self.now = t
            fn(*args)
        self.now = until
        self.results.until = until
        return self.results
