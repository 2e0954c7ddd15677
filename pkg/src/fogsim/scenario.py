"""Declarative scenarios: one JSON document binds a topology, applications,
placement/population/selection policies, custom processes, a seed and a
horizon.

Validation runs in two passes. A JSON schema checks shapes, then a
cross-reference pass resolves every module, message and node name so a
scenario that validates cannot fail name resolution mid-run.
"""

from __future__ import annotations

import copy
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import jsonschema

from fogsim import application as appmod
from fogsim import policies
from fogsim.engine import Simulation
from fogsim.errors import ApplicationError, ScenarioError, TopologyError
from fogsim.results import ResultSet
from fogsim.topology import Topology, load_topology

_POS = {"type": "number", "exclusiveMinimum": 0}
_NODE_ID = {"type": "integer"}
_NODE_LIST = {"type": "array", "items": _NODE_ID}

DISTRIBUTION_SCHEMA = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["deterministic", "deterministic_start", "exponential", "exponential_start"]},
        "time": _POS,
        "start": {"type": "number", "minimum": 0},
        "mean": _POS,
    },
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"type": {"const": "deterministic"}}}, "then": {"required": ["time"]}},
        {"if": {"properties": {"type": {"const": "deterministic_start"}}}, "then": {"required": ["time", "start"]}},
        {"if": {"properties": {"type": {"const": "exponential"}}}, "then": {"required": ["mean"]}},
        {"if": {"properties": {"type": {"const": "exponential_start"}}}, "then": {"required": ["mean", "start"]}},
    ],
}

_DESIGNATOR = {
    "oneOf": [
        {"required": ["node"]},
        {"required": ["nodes"]},
        {"required": ["where"]},
    ]
}
_DESIGNATOR_PROPS = {"node": _NODE_ID, "nodes": _NODE_LIST, "where": {"type": "object"}}

_SINK_CONTROL = {
    "type": "object",
    "required": ["module"],
    "properties": {"module": {"type": "string"}, "number": {"type": "integer", "minimum": 1}, **_DESIGNATOR_PROPS},
    "additionalProperties": False,
    **_DESIGNATOR,
}
_SOURCE_CONTROL = {
    "type": "object",
    "required": ["message", "distribution"],
    "properties": {
        "message": {"type": "string"},
        "distribution": DISTRIBUTION_SCHEMA,
        "number": {"type": "integer", "minimum": 1},
        **_DESIGNATOR_PROPS,
    },
    "additionalProperties": False,
    **_DESIGNATOR,
}

APPLICATION_SCHEMA = {
    "type": "object",
    "required": ["name", "module", "message"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "module": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name"],
                "properties": {
                    "name": {"type": "string"},
                    "type": {"enum": list(appmod.MODULE_KINDS)},
                    "RAM": {"type": "number", "minimum": 0},
                },
            },
        },
        "message": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "s", "d", "instructions", "bytes"],
                "properties": {
                    "name": {"type": "string"},
                    "s": {"type": "string"},
                    "d": {"type": "string"},
                    "instructions": {"type": "number", "minimum": 0},
                    "bytes": _POS,
                    "broadcast": {"type": "boolean"},
                },
            },
        },
        "source_message": {"type": "array", "items": {"type": "string"}},
        "transmission": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["module", "message_in"],
                "properties": {
                    "module": {"type": "string"},
                    "message_in": {"type": "string"},
                    "message_out": {"type": ["string", "null"]},
                    "fractional": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                    "broadcast": {"type": "boolean"},
                },
            },
        },
        "service_source": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["module", "message_out", "distribution"],
                "properties": {
                    "module": {"type": "string"},
                    "message_out": {"type": "string"},
                    "distribution": DISTRIBUTION_SCHEMA,
                },
            },
        },
    },
}

PLACEMENT_SCHEMA = {
    "type": "object",
    "required": ["app", "type"],
    "properties": {
        "app": {"type": "string"},
        "type": {"enum": ["static", "betweenness"]},
        "assignments": {
            "type": "object",
            "additionalProperties": {
                "oneOf": [
                    _NODE_LIST,
                    {
                        "type": "object",
                        "properties": _DESIGNATOR_PROPS,
                        "additionalProperties": False,
                        **_DESIGNATOR,
                    },
                ]
            },
        },
        "module": {"type": "string"},
        "count": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
    "allOf": [{"if": {"properties": {"type": {"const": "betweenness"}}}, "then": {"required": ["module"]}}],
}

POPULATION_SCHEMA = {
    "type": "object",
    "required": ["app", "type"],
    "properties": {
        "app": {"type": "string"},
        "type": {"enum": ["static", "evolutive"]},
        "sinks": {"type": "array", "items": _SINK_CONTROL},
        "sources": {"type": "array", "items": _SOURCE_CONTROL},
        "targets": _NODE_LIST,
        "grow": {"enum": ["source", "sink"]},
        "module": {"type": "string"},
        "message": {"type": "string"},
        "distribution": DISTRIBUTION_SCHEMA,
        "activation": DISTRIBUTION_SCHEMA,
    },
    "additionalProperties": False,
    "allOf": [{"if": {"properties": {"type": {"const": "evolutive"}}}, "then": {"required": ["activation", "targets"]}}],
}

PROCESS_SCHEMA = {
    "type": "object",
    "required": ["type", "activation"],
    "properties": {
        "type": {"enum": ["failure", "movement"]},
        "activation": DISTRIBUTION_SCHEMA,
        "candidates": _NODE_LIST,
        "protect_sources": {"type": "boolean"},
        "app": {"type": "string"},
    },
    "additionalProperties": False,
    "allOf": [{"if": {"properties": {"type": {"const": "movement"}}}, "then": {"required": ["app"]}}],
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["seed", "until", "topology", "application"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "seed": {"type": "integer"},
        "until": _POS,
        "topology": {
            "type": "object",
            "properties": {"entity": {"type": "array"}, "link": {"type": "array"}},
        },
        "application": {"type": "array", "items": APPLICATION_SCHEMA},
        "placement": {"type": "array", "items": PLACEMENT_SCHEMA},
        "population": {"type": "array", "items": POPULATION_SCHEMA},
        "selection": {
            "type": "object",
            "required": ["type"],
            "properties": {"type": {"enum": ["shortest_path", "round_robin"]}, "reply_to_origin": {"type": "boolean"}},
            "additionalProperties": False,
        },
        "process": {"type": "array", "items": PROCESS_SCHEMA},
    },
    "additionalProperties": False,
}

_VALIDATOR = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)


def _pointer(parts) -> str:
    return "".join(f"/{p}" for p in parts) or "/"


@dataclass(frozen=True)
class Scenario:
    """A validated scenario document. Treat ``doc`` as read-only."""

    doc: dict[str, Any]

    @property
    def seed(self) -> int:
        return self.doc["seed"]

    @property
    def until(self) -> float:
        return self.doc["until"]

    @property
    def name(self) -> str:
        return self.doc.get("name", "scenario")

    def with_overrides(self, seed: int | None = None, until: float | None = None) -> Scenario:
        doc = copy.deepcopy(self.doc)
        if seed is not None:
            doc["seed"] = seed
        if until is not None:
            doc["until"] = until
        return scenario_from_dict(doc)

    def topology(self) -> Topology:
        return load_topology(self.doc["topology"])

    def applications(self) -> list[appmod.Application]:
        return [appmod.from_json(a) for a in self.doc["application"]]

    def to_json(self) -> str:
        return json.dumps(self.doc, indent=2, sort_keys=True)


def load_scenario(path: str | Path) -> Scenario:
    """Read, parse and validate a scenario file. I/O errors propagate as
    :class:`OSError`."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg}", f"line {exc.lineno} column {exc.colno}") from None
    return scenario_from_dict(doc)


def scenario_from_dict(doc: Any) -> Scenario:
    validate_document(doc)
    return Scenario(copy.deepcopy(doc))


def validate_document(doc: Any) -> None:
    """Raise :class:`ScenarioError` on the first problem found."""
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ScenarioError(err.message, _pointer(err.absolute_path))
    _cross_validate(doc)


def _cross_validate(doc: dict[str, Any]) -> None:
    try:
        topo = load_topology(doc["topology"])
    except TopologyError as exc:
        text = str(exc)
        if text.startswith("/"):
            where, _, rest = text.partition(":")
            raise ScenarioError(rest.strip(), "/topology" + where.split(" ")[0]) from None
        raise ScenarioError(text, "/topology") from None

    apps: dict[str, appmod.Application] = {}
    for i, adoc in enumerate(doc["application"]):
        where = f"/application/{i}"
        try:
            app = appmod.from_json(adoc)
            appmod.validate(app)
        except (ApplicationError, ValueError) as exc:
            raise ScenarioError(str(exc), where) from None
        if app.name in apps:
            raise ScenarioError(f"duplicate application name {app.name!r}", f"{where}/name")
        apps[app.name] = app

    def need_app(name: str, where: str) -> appmod.Application:
        if name not in apps:
            raise ScenarioError(f"unknown application {name!r}", where)
        return apps[name]

    def need_nodes(designator: Any, where: str) -> list[int]:
        nodes = policies.resolve_nodes(topo, designator)
        for n in nodes:
            if n not in topo:
                raise ScenarioError(f"unknown node {n}", where)
        return nodes

    def need_deployable(app: appmod.Application, module: str, nodes: list[int], where: str) -> None:
        if not app.has_module(module):
            raise ScenarioError(f"application {app.name!r} has no module {module!r}", where)
        kind = app.kind_of(module)
        if kind == appmod.SOURCE:
            raise ScenarioError(f"module {module!r} of {app.name!r} is a SOURCE; deploy sources by message", where)
        if kind == appmod.MODULE:
            for n in nodes:
                if not topo.nodes[n].ipt > 0:
                    raise ScenarioError(f"module {module!r} placed on node {n} with no IPT", where)

    def need_source_message(app: appmod.Application, message: str, where: str) -> None:
        if message not in app.source_messages:
            raise ScenarioError(f"{message!r} is not a source message of {app.name!r}", where)

    for i, p in enumerate(doc.get("placement", [])):
        where = f"/placement/{i}"
        app = need_app(p["app"], f"{where}/app")
        if p["type"] == "static":
            for module, designator in p.get("assignments", {}).items():
                loc = f"{where}/assignments/{module}"
                need_deployable(app, module, need_nodes(designator, loc), loc)
        else:
            count = p.get("count", 1)
            if count > len(topo):
                raise ScenarioError(f"count {count} exceeds the {len(topo)} nodes", f"{where}/count")
            ranked = topo.top_betweenness(count) if len(topo) else []
            need_deployable(app, p["module"], ranked, f"{where}/module")

    for i, p in enumerate(doc.get("population", [])):
        where = f"/population/{i}"
        app = need_app(p["app"], f"{where}/app")
        for j, s in enumerate(p.get("sinks", [])):
            loc = f"{where}/sinks/{j}"
            need_deployable(app, s["module"], need_nodes(_designator(s), loc), f"{loc}/module")
        for j, s in enumerate(p.get("sources", [])):
            loc = f"{where}/sources/{j}"
            need_nodes(_designator(s), loc)
            need_source_message(app, s["message"], f"{loc}/message")
        if p["type"] == "evolutive":
            targets = need_nodes(p["targets"], f"{where}/targets")
            if p.get("grow", "source") == "sink":
                if "module" not in p:
                    raise ScenarioError("growing sinks needs 'module'", where)
                need_deployable(app, p["module"], targets, f"{where}/module")
            else:
                if "message" not in p or "distribution" not in p:
                    raise ScenarioError("growing sources needs 'message' and 'distribution'", where)
                need_source_message(app, p["message"], f"{where}/message")

    for i, p in enumerate(doc.get("process", [])):
        where = f"/process/{i}"
        if p["type"] == "failure":
            need_nodes(p.get("candidates", []), f"{where}/candidates")
        else:
            need_app(p["app"], f"{where}/app")


def _designator(doc: dict[str, Any]) -> dict[str, Any]:
    return {k: doc[k] for k in ("node", "nodes", "where") if k in doc}


# -- running -----------------------------------------------------------------------------


def build_simulation(scenario: Scenario) -> Simulation:
    """Fresh engine with fresh (stateful) policy objects."""
    doc = scenario.doc
    sim = Simulation(scenario.topology(), seed=scenario.seed)
    placements: dict[str, list[Any]] = {}
    for p in doc.get("placement", []):
        placements.setdefault(p["app"], []).append(policies.placement_from_json(p))
    populations: dict[str, list[Any]] = {}
    for p in doc.get("population", []):
        populations.setdefault(p["app"], []).append(policies.population_from_json(p))
    sel_doc = doc.get("selection", {"type": "shortest_path"})
    for app in scenario.applications():
        # placements run before populations; several placements chain in order
        pols = placements.get(app.name, [])
        sim.deploy_app(
            app,
            placement=pols[0] if pols else None,
            populations=pols[1:] + populations.get(app.name, []),
            selection=policies.selection_from_json(sel_doc),
        )
    for p in doc.get("process", []):
        sim.add_process(policies.process_from_json(p))
    return sim


def run_scenario(scenario: Scenario, seed: int | None = None, until: float | None = None) -> ResultSet:
    if seed is not None or until is not None:
        scenario = scenario.with_overrides(seed, until)
    return build_simulation(scenario).run(scenario.until)


def _run_one(args: tuple[dict[str, Any], int, Callable[[ResultSet], Any] | None]) -> Any:
    doc, seed, reduce = args
    rs = run_scenario(Scenario(doc), seed=seed)
    return rs if reduce is None else reduce(rs)


def run_replications(
    scenario: Scenario,
    n: int,
    workers: int | None = None,
    reduce: Callable[[ResultSet], Any] | None = None,
) -> list[Any]:
    """``n`` runs with seeds ``seed``, ``seed + 1``, ...; results in seed order.

    ``reduce`` (a picklable top-level function) is applied inside each
    worker so only its value travels back, not the full record lists.
    """
    jobs = [(scenario.doc, scenario.seed + i, reduce) for i in range(n)]
    workers = workers or min(n, os.cpu_count() or 1)
    if workers == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))
