"""Distributed data-flow applications: modules, typed messages and the
transmission rules that turn an incoming message into outgoing ones."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from fogsim.distributions import Distribution, RandomStream
from fogsim.distributions import from_json as distribution_from_json
from fogsim.errors import ApplicationError, UnroutableMessage

SOURCE = "SOURCE"
SINK = "SINK"
MODULE = "MODULE"
MODULE_KINDS = (SOURCE, SINK, MODULE)

FRACTIONAL = "FRACTIONAL"
BROADCAST = "BROADCAST"
ABSORB = "SINK"


@dataclass(frozen=True)
class AppModule:
    name: str
    kind: str = MODULE
    ram: float = 0.0


@dataclass(frozen=True)
class MessageType:
    name: str
    src: str
    dst: str
    instructions: float
    bytes: float
    broadcast: bool = False


@dataclass(frozen=True)
class TransmissionRule:
    module: str
    message_in: str
    message_out: str | None = None
    mode: str = FRACTIONAL
    threshold: float = 1.0


@dataclass(frozen=True)
class ServiceSource:
    module: str
    message_out: str
    distribution: Distribution


@dataclass
class Application:
    name: str
    modules: list[AppModule] = field(default_factory=list)
    messages: dict[str, MessageType] = field(default_factory=dict)
    rules: list[TransmissionRule] = field(default_factory=list)
    service_sources: list[ServiceSource] = field(default_factory=list)
    source_messages: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._rule_index: dict[tuple[str, str], list[TransmissionRule]] | None = None

    # -- builder helpers (mirror the usual declaration order) ---------------

    def add_module(self, name: str, kind: str = MODULE, ram: float = 0.0) -> None:
        self.modules.append(AppModule(name, kind, ram))

    def add_message(self, msg: MessageType) -> MessageType:
        self.messages[msg.name] = msg
        return msg

    def add_source_message(self, name: str) -> None:
        self.source_messages.append(name)

    def add_service_source(self, module: str, distribution: Distribution, message_out: str) -> None:
        self.service_sources.append(ServiceSource(module, message_out, distribution))

    def add_service_module(
        self,
        module: str,
        message_in: str,
        message_out: str | None = None,
        threshold: float = 1.0,
        broadcast: bool = False,
    ) -> None:
        if message_out is None:
            rule = TransmissionRule(module, message_in, None, ABSORB, 0.0)
        elif broadcast:
            rule = TransmissionRule(module, message_in, message_out, BROADCAST, 1.0)
        else:
            rule = TransmissionRule(module, message_in, message_out, FRACTIONAL, threshold)
        self.rules.append(rule)
        self._rule_index = None

    # -- queries ----------------------------------------------------------------

    def module(self, name: str) -> AppModule:
        for m in self.modules:
            if m.name == name:
                return m
        raise ApplicationError(f"application {self.name!r} has no module {name!r}")

    def has_module(self, name: str) -> bool:
        return any(m.name == name for m in self.modules)

    def message(self, name: str) -> MessageType:
        try:
            return self.messages[name]
        except KeyError:
            raise ApplicationError(f"application {self.name!r} has no message {name!r}") from None

    def kind_of(self, module: str) -> str:
        return self.module(module).kind

    def rules_for(self, module: str, message_in: str) -> list[TransmissionRule]:
        if self._rule_index is None:
            index: dict[tuple[str, str], list[TransmissionRule]] = {}
            for r in self.rules:
                index.setdefault((r.module, r.message_in), []).append(r)
            self._rule_index = index
        return self._rule_index.get((module, message_in), [])

    def sink_modules(self) -> list[str]:
        return [m.name for m in self.modules if m.kind == SINK]

    def source_modules(self) -> list[str]:
        return [m.name for m in self.modules if m.kind == SOURCE]

    def service_modules(self) -> list[str]:
        return [m.name for m in self.modules if m.kind == MODULE]


def validate(app: Application) -> None:
    """Check names, kinds, thresholds and acyclicity of the message flow."""
    seen: set[str] = set()
    for m in app.modules:
        if m.name in seen:
            raise ApplicationError(f"{app.name}: duplicate module {m.name!r}")
        if m.kind not in MODULE_KINDS:
            raise ApplicationError(f"{app.name}: module {m.name!r} has unknown kind {m.kind!r}")
        if m.ram < 0:
            raise ApplicationError(f"{app.name}: module {m.name!r} has negative RAM")
        seen.add(m.name)
    kinds = {m.name: m.kind for m in app.modules}

    for name, msg in app.messages.items():
        if name != msg.name:
            raise ApplicationError(f"{app.name}: message registered as {name!r} is named {msg.name!r}")
        for end in (msg.src, msg.dst):
            if end not in kinds:
                raise ApplicationError(f"{app.name}: message {name!r} references unknown module {end!r}")
        if not msg.bytes > 0:
            raise ApplicationError(f"{app.name}: message {name!r} must have positive bytes")
        if msg.instructions < 0:
            raise ApplicationError(f"{app.name}: message {name!r} has negative instructions")
        if kinds[msg.dst] == MODULE and not msg.instructions > 0:
            raise ApplicationError(
                f"{app.name}: message {name!r} is consumed by module {msg.dst!r} and needs positive instructions"
            )
        if kinds[msg.dst] == SOURCE:
            raise ApplicationError(f"{app.name}: message {name!r} is addressed to source module {msg.dst!r}")
        if kinds[msg.src] == SINK:
            raise ApplicationError(f"{app.name}: message {name!r} is emitted by sink module {msg.src!r}")

    for name in app.source_messages:
        if name not in app.messages:
            raise ApplicationError(f"{app.name}: unknown source message {name!r}")
        if kinds[app.messages[name].src] != SOURCE:
            raise ApplicationError(f"{app.name}: source message {name!r} does not start at a SOURCE module")

    edges: dict[str, set[str]] = {m: set() for m in app.messages}
    for r in app.rules:
        if r.module not in kinds:
            raise ApplicationError(f"{app.name}: rule references unknown module {r.module!r}")
        if r.message_in not in app.messages:
            raise ApplicationError(f"{app.name}: rule references unknown message {r.message_in!r}")
        if app.messages[r.message_in].dst != r.module:
            raise ApplicationError(
                f"{app.name}: rule on {r.module!r} consumes {r.message_in!r}, which is addressed to "
                f"{app.messages[r.message_in].dst!r}"
            )
        if r.mode not in (FRACTIONAL, BROADCAST, ABSORB):
            raise ApplicationError(f"{app.name}: unknown transmission mode {r.mode!r}")
        if r.mode == FRACTIONAL and not 0.0 <= r.threshold <= 1.0:
            raise ApplicationError(f"{app.name}: fractional threshold {r.threshold} outside [0, 1]")
        if r.mode == ABSORB:
            continue
        if r.message_out is None:
            raise ApplicationError(f"{app.name}: {r.mode} rule on {r.module!r} needs an output message")
        if r.message_out not in app.messages:
            raise ApplicationError(f"{app.name}: rule references unknown message {r.message_out!r}")
        out = app.messages[r.message_out]
        if out.src != r.module:
            raise ApplicationError(
                f"{app.name}: module {r.module!r} emits {r.message_out!r}, whose source module is {out.src!r}"
            )
        if out.dst == out.src:
            raise ApplicationError(
                f"{app.name}: rule on {r.module!r} emits self-addressed {r.message_out!r}; "
                "self-messages are only allowed as service sources (cycle)"
            )
        if r.mode == BROADCAST and not out.broadcast:
            raise ApplicationError(f"{app.name}: broadcast rule emits non-broadcast message {r.message_out!r}")
        if kinds[r.module] == SINK:
            raise ApplicationError(f"{app.name}: sink module {r.module!r} cannot emit messages")
        edges[r.message_in].add(r.message_out)

    handled = {(r.module, r.message_in) for r in app.rules}
    for name, msg in app.messages.items():
        if kinds[msg.dst] == MODULE and (msg.dst, name) not in handled:
            raise ApplicationError(f"{app.name}: module {msg.dst!r} has no transmission rule for {name!r}")

    for ss in app.service_sources:
        if kinds.get(ss.module) != MODULE:
            raise ApplicationError(f"{app.name}: service source must sit on a MODULE, not {ss.module!r}")
        if ss.message_out not in app.messages:
            raise ApplicationError(f"{app.name}: service source emits unknown message {ss.message_out!r}")
        if app.messages[ss.message_out].src != ss.module:
            raise ApplicationError(
                f"{app.name}: service source on {ss.module!r} emits {ss.message_out!r} from another module"
            )

    # Kahn's algorithm over the message transformation graph; modules may
    # exchange messages both ways (request/reply) as long as no chain repeats
    indeg = {m: 0 for m in edges}
    for src, dsts in edges.items():
        for d in dsts:
            indeg[d] += 1
    ready = sorted(m for m, k in indeg.items() if k == 0)
    visited = 0
    while ready:
        m = ready.pop()
        visited += 1
        for d in edges[m]:
            indeg[d] -= 1
            if indeg[d] == 0:
                ready.append(d)
    if visited != len(edges):
        cyclic = sorted(m for m, k in indeg.items() if k > 0)
        raise ApplicationError(f"{app.name}: transmission rules form a cycle through messages {cyclic}")


def transmissions_for(app: Application, module: str, message_in: str, rng: RandomStream) -> list[str]:
    """Names of messages emitted after ``module`` serves ``message_in``.

    Fractional rules fire iff a fresh uniform draw is below the threshold.
    Broadcast fan-out over replicas is left to the engine.
    """
    rules = app.rules_for(module, message_in)
    if not rules:
        raise UnroutableMessage(f"{app.name}: no rule for {message_in!r} at module {module!r}")
    out: list[str] = []
    for r in rules:
        if r.mode == ABSORB:
            continue
        if r.mode == BROADCAST:
            out.append(r.message_out)
        elif rng.uniform() < r.threshold:
            out.append(r.message_out)
    return out


# -- JSON ------------------------------------------------------------------------


def from_json(doc: dict[str, Any]) -> Application:
    app = Application(name=doc["name"])
    for m in doc.get("module", []):
        app.add_module(m["name"], m.get("type", MODULE), float(m.get("RAM", 0.0)))
    for m in doc.get("message", []):
        app.add_message(
            MessageType(
                m["name"], m["s"], m["d"], float(m["instructions"]), float(m["bytes"]), bool(m.get("broadcast", False))
            )
        )
    for name in doc.get("source_message", []):
        app.add_source_message(name)
    if "source_message" not in doc:
        # default: every message leaving a SOURCE module is injectable
        sources = {m.name for m in app.modules if m.kind == SOURCE}
        for msg in app.messages.values():
            if msg.src in sources:
                app.add_source_message(msg.name)
    for t in doc.get("transmission", []):
        out = t.get("message_out")
        if out is None:
            app.rules.append(TransmissionRule(t["module"], t["message_in"], None, ABSORB, 0.0))
        elif t.get("broadcast") or (out in app.messages and app.messages[out].broadcast and t.get("fractional") is None):
            app.rules.append(TransmissionRule(t["module"], t["message_in"], out, BROADCAST, 1.0))
        else:
            frac = t.get("fractional")
            app.rules.append(TransmissionRule(t["module"], t["message_in"], out, FRACTIONAL, 1.0 if frac is None else float(frac)))
    for s in doc.get("service_source", []):
        app.add_service_source(s["module"], distribution_from_json(s["distribution"]), s["message_out"])
    return app


def to_json(app: Application) -> dict[str, Any]:
    return {
        "name": app.name,
        "module": [{"name": m.name, "type": m.kind, "RAM": m.ram} for m in app.modules],
        "message": [
            {
                "name": m.name,
                "s": m.src,
                "d": m.dst,
                "instructions": m.instructions,
                "bytes": m.bytes,
                "broadcast": m.broadcast,
            }
            for m in app.messages.values()
        ],
        "source_message": list(app.source_messages),
        "transmission": [
            {
                "module": r.module,
                "message_in": r.message_in,
                "message_out": r.message_out,
                "fractional": r.threshold if r.mode == FRACTIONAL else None,
                **({"broadcast": True} if r.mode == BROADCAST else {}),
            }
            for r in app.rules
        ],
        "service_source": [
            {"module": s.module, "message_out": s.message_out, "distribution": s.distribution.to_json()}
            for s in app.service_sources
        ],
    }
