"""Ready-made scenarios: the EGG online game on a cloud/gateway/mobile tree,
and three experiments on a 400-node random geometric graph (receiver
scaling, node failures, sender mobility).

Every preset is a pure function of its arguments (seed included) and
returns a validated :class:`~fogsim.scenario.Scenario`.

The EGG numbers that the game description leaves open (link bandwidth,
propagation delays, IPT per tier) are calibrated constants, not measured
values. See ``EGG_*`` below.
"""

from __future__ import annotations

import itertools
import math
import random
from typing import Any, Callable

import networkx as nx

from fogsim.scenario import Scenario, scenario_from_dict

# -- EGG game ------------------------------------------------------------------------------

EGG_APP = "EGG_GAME"
EGG_MOBILES_PER_GATEWAY = 4
# (BW, PR) per tier. Only the sensor hop and the proxy-cloud uplink have
# a bandwidth that matters: a 500-byte reading spends 4 units on the
# sensor radio, and the cloud link carries 200 bytes per unit, enough for
# the edge placement's state traffic but not for 64 raw readings per 100
# units.
EGG_LINKS = {
    "proxy-cloud": (200.0, 14.0),
    "gateway-proxy": (1e8, 10.0),
    "mobile-gateway": (1e8, 2.0),
    "sensor-mobile": (125.0, 5e-6),
    "actuator-mobile": (1e8, 1.0),
}
EGG_IPT = {"cloud": 44800.0, "proxy": 2800.0, "gateway": 6500.0, "mobile": 1000.0}
EGG_PERIOD = 100.0
EGG_LOOP = ("M.EGG", "M.Sensor", "M.Concentration")


def egg_topology(gateways: int) -> dict[str, Any]:
    """Cloud 0, proxy 1, then per gateway: the gateway followed by
    (mobile, sensor, actuator) triples."""
    ent = [
        {"id": 0, "model": "Cluster", "IPT": EGG_IPT["cloud"], "RAM": 40000},
        {"id": 1, "model": "Proxy-server", "IPT": EGG_IPT["proxy"], "RAM": 4000},
    ]

    def link(s: int, d: int, tier: str) -> dict[str, Any]:
        bw, pr = EGG_LINKS[tier]
        return {"s": s, "d": d, "BW": bw, "PR": pr}

    links = [link(0, 1, "proxy-cloud")]
    nid = 2
    for _ in range(gateways):
        gw = nid
        ent.append({"id": gw, "model": "d-", "IPT": EGG_IPT["gateway"], "RAM": 4000})
        links.append(link(1, gw, "gateway-proxy"))
        nid += 1
        for _ in range(EGG_MOBILES_PER_GATEWAY):
            mob, sen, act = nid, nid + 1, nid + 2
            ent.append({"id": mob, "model": "m-", "IPT": EGG_IPT["mobile"], "RAM": 1000})
            ent.append({"id": sen, "model": "s", "IPT": 0, "RAM": 0})
            ent.append({"id": act, "model": "a", "IPT": 0, "RAM": 0})
            links.append(link(gw, mob, "mobile-gateway"))
            links.append(link(mob, sen, "sensor-mobile"))
            links.append(link(mob, act, "actuator-mobile"))
            nid += 3
    return {"entity": ent, "link": links}


def egg_application() -> dict[str, Any]:
    def msg(name, s, d, instr, size, broadcast=False):
        return {"name": name, "s": s, "d": d, "instructions": instr, "bytes": size, "broadcast": broadcast}

    period = {"type": "deterministic", "time": EGG_PERIOD}
    return {
        "name": EGG_APP,
        "module": [
            {"name": "EGG", "type": "SOURCE"},
            {"name": "Display", "type": "SINK"},
            {"name": "Client", "type": "MODULE", "RAM": 10},
            {"name": "Calculator", "type": "MODULE", "RAM": 10},
            {"name": "Coordinator", "type": "MODULE", "RAM": 10},
        ],
        "message": [
            msg("M.EGG", "EGG", "Client", 2000, 500),
            msg("M.Sensor", "Client", "Calculator", 3500, 500),
            msg("M.Player_Game_State", "Calculator", "Coordinator", 1000, 1000),
            msg("M.Concentration", "Calculator", "Client", 14, 500),
            msg("M.Global_Game_State", "Coordinator", "Client", 28, 100, broadcast=True),
            msg("M.Global_State_Update", "Client", "Display", 1000, 500),
            msg("M.Self_State_Update", "Client", "Display", 1000, 500),
        ],
        "source_message": ["M.EGG"],
        "transmission": [
            {"module": "Client", "message_in": "M.EGG", "message_out": "M.Sensor", "fractional": 0.9},
            {"module": "Client", "message_in": "M.Concentration", "message_out": "M.Self_State_Update"},
            {"module": "Client", "message_in": "M.Global_Game_State", "message_out": "M.Global_State_Update"},
            {"module": "Calculator", "message_in": "M.Sensor", "message_out": "M.Concentration"},
            {"module": "Coordinator", "message_in": "M.Player_Game_State", "message_out": None},
        ],
        "service_source": [
            {"module": "Calculator", "message_out": "M.Player_Game_State", "distribution": period},
            {"module": "Coordinator", "message_out": "M.Global_Game_State", "distribution": period},
        ],
    }


def preset_egg(gateways: int = 4, policy: str = "edge", seed: int = 0, until: float = 1e5) -> Scenario:
    """EGG game with ``gateways`` gateways of four players each.

    ``edge``: Client on every mobile, one Calculator per gateway,
    Coordinator in the cloud. ``cloud``: one replica of every module on the
    cloud node.
    """
    if gateways < 1:
        raise ValueError("gateways must be at least 1")
    if policy == "edge":
        assignments = {
            "Client": {"where": {"model": "m-"}},
            "Calculator": {"where": {"model": "d-"}},
            "Coordinator": [0],
        }
    elif policy == "cloud":
        assignments = {"Client": [0], "Calculator": [0], "Coordinator": [0]}
    else:
        raise ValueError(f"policy must be 'edge' or 'cloud', not {policy!r}")
    return scenario_from_dict(
        {
            "name": f"egg-{policy}-{gateways}",
            "seed": seed,
            "until": until,
            "topology": egg_topology(gateways),
            "application": [egg_application()],
            "placement": [{"app": EGG_APP, "type": "static", "assignments": assignments}],
            "population": [
                {
                    "app": EGG_APP,
                    "type": "static",
                    "sinks": [{"module": "Display", "where": {"model": "a"}}],
                    "sources": [
                        {
                            "message": "M.EGG",
                            "where": {"model": "s"},
                            "distribution": {"type": "deterministic", "time": EGG_PERIOD},
                        }
                    ],
                }
            ],
            "selection": {"type": "shortest_path", "reply_to_origin": True},
        }
    )


# -- random geometric graph experiments --------------------------------------------

RGG_NODES = 400
RGG_EDGES = 2242
RGG_PR = 1.0
RGG_BW = 300.0
RGG_MESSAGE_BYTES = 100.0
RGG_SENDERS = 100
RGG_RECEIVERS = 20
RGG_APP = "sender_receiver"


def random_geometric(seed: int, n: int = RGG_NODES, m: int = RGG_EDGES) -> tuple[nx.Graph, dict[int, tuple[float, float]]]:
    """Connected unit-square geometric graph with exactly ``m`` edges.

    The radius is the ``m``-th smallest pairwise distance, so exactly ``m``
    pairs fall within it (ties have probability zero); disconnected draws
    are redrawn from the same seeded stream.
    """
    rng = random.Random(f"rgg:{seed}")
    while True:
        pos = {i: (rng.random(), rng.random()) for i in range(n)}
        pairs = sorted(
            (math.dist(pos[a], pos[b]), a, b) for a, b in itertools.combinations(range(n), 2)
        )
        g = nx.Graph()
        g.add_nodes_from(range(n))
        g.add_edges_from((a, b) for _, a, b in pairs[:m])
        if nx.is_connected(g):
            return g, pos


def _rgg_base(seed: int) -> tuple[dict[str, Any], list[int], list[int]]:
    g, pos = random_geometric(seed)
    topo = {
        "entity": [
            {"id": i, "IPT": 1.0, "RAM": 1.0, "x": round(pos[i][0], 6), "y": round(pos[i][1], 6)}
            for i in sorted(g.nodes)
        ],
        "link": [{"s": a, "d": b, "BW": RGG_BW, "PR": RGG_PR} for a, b in sorted(g.edges)],
    }
    scores = nx.betweenness_centrality(g, normalized=True)
    ranked = sorted(scores, key=lambda v: (-scores[v], v))
    rng = random.Random(f"senders:{seed}")
    senders = sorted(rng.sample(range(RGG_NODES), RGG_SENDERS))
    return topo, ranked, senders


def _rgg_app() -> dict[str, Any]:
    return {
        "name": RGG_APP,
        "module": [{"name": "sender", "type": "SOURCE"}, {"name": "receiver", "type": "SINK"}],
        "message": [{"name": "M.A", "s": "sender", "d": "receiver", "instructions": 0, "bytes": RGG_MESSAGE_BYTES}],
        "source_message": ["M.A"],
    }


def _senders(nodes: list[int], period: float) -> dict[str, Any]:
    return {"message": "M.A", "nodes": nodes, "distribution": {"type": "deterministic", "time": period}}


def preset_scaling(seed: int = 0, until: float = 10000.0) -> Scenario:
    """One receiver on the most central node, then one more every 300
    units from t=3000 on the next most central nodes, up to 20."""
    topo, ranked, senders = _rgg_base(seed)
    return scenario_from_dict(
        {
            "name": "scaling",
            "seed": seed,
            "until": until,
            "topology": topo,
            "application": [_rgg_app()],
            "placement": [{"app": RGG_APP, "type": "betweenness", "module": "receiver", "count": 1}],
            "population": [
                {"app": RGG_APP, "type": "static", "sources": [_senders(senders, 10.0)]},
                {
                    "app": RGG_APP,
                    "type": "evolutive",
                    "grow": "sink",
                    "module": "receiver",
                    "targets": ranked[1:RGG_RECEIVERS],
                    "activation": {"type": "deterministic_start", "start": 3000.0, "time": 300.0},
                },
            ],
            "selection": {"type": "shortest_path"},
        }
    )


def failure_candidates(seed: int, senders: list[int]) -> list[int]:
    rng = random.Random(f"failures:{seed}")
    pool = [n for n in range(RGG_NODES) if n not in set(senders)]
    rng.shuffle(pool)
    return pool


def preset_failures(seed: int = 0, until: float = 10000.0) -> Scenario:
    """Twenty receivers on the most central nodes; from t=500 nodes fail
    at exponential intervals (mean 100), never a sender's node."""
    topo, ranked, senders = _rgg_base(seed)
    return scenario_from_dict(
        {
            "name": "failures",
            "seed": seed,
            "until": until,
            "topology": topo,
            "application": [_rgg_app()],
            "placement": [{"app": RGG_APP, "type": "betweenness", "module": "receiver", "count": RGG_RECEIVERS}],
            "population": [{"app": RGG_APP, "type": "static", "sources": [_senders(senders, 10.0)]}],
            "selection": {"type": "shortest_path"},
            "process": [
                {
                    "type": "failure",
                    "candidates": failure_candidates(seed, senders),
                    "activation": {"type": "exponential_start", "start": 500.0, "mean": 100.0},
                }
            ],
        }
    )


def preset_mobility(seed: int = 0, until: float = 10000.0) -> Scenario:
    """Twenty receivers on the most central node, round-robin selection;
    every 400 units each sender moves one hop toward its receiver."""
    topo, ranked, senders = _rgg_base(seed)
    return scenario_from_dict(
        {
            "name": "mobility",
            "seed": seed,
            "until": until,
            "topology": topo,
            "application": [_rgg_app()],
            "placement": [
                {"app": RGG_APP, "type": "static", "assignments": {"receiver": [ranked[0]] * RGG_RECEIVERS}}
            ],
            "population": [{"app": RGG_APP, "type": "static", "sources": [_senders(senders, 100.0)]}],
            "selection": {"type": "round_robin"},
            "process": [
                {"type": "movement", "app": RGG_APP, "activation": {"type": "deterministic", "time": 400.0}}
            ],
        }
    )


PRESETS: dict[str, Callable[..., Scenario]] = {
    "egg": preset_egg,
    "scaling": preset_scaling,
    "failures": preset_failures,
    "mobility": preset_mobility,
}


def preset_senders(seed: int) -> list[int]:
    return _rgg_base(seed)[2]
