"""Small hand-sized scenarios (under 50 records each) with dyadic parameters,
so every time is exactly representable and the engine and the oracle can be
compared record by record."""

from __future__ import annotations

DET = "deterministic"


def _topo(nodes: dict[int, float], links: list[tuple[int, int, float, float]]) -> dict:
    return {
        "entity": [{"id": n, "IPT": ipt, "RAM": 10} for n, ipt in nodes.items()],
        "link": [{"s": s, "d": d, "BW": bw, "PR": pr} for s, d, bw, pr in links],
    }


def _msg(name, s, d, instructions=0, nbytes=50, **kw):
    return {"name": name, "s": s, "d": d, "instructions": instructions, "bytes": nbytes, **kw}


def cycle_path() -> dict:
    """Source and sink on opposite corners of a 4-cycle: two tied shortest paths."""
    return {
        "name": "micro-cycle",
        "seed": 1,
        "until": 9,
        "topology": _topo({0: 1, 1: 1, 2: 1, 3: 1, 4: 1},
                          [(0, 1, 100, 0.5), (1, 2, 100, 0.25), (2, 3, 100, 0.5), (3, 0, 100, 0.5), (2, 4, 50, 1)]),
        "application": [{
            "name": "A",
            "module": [{"name": "S", "type": "SOURCE"}, {"name": "K", "type": "SINK"}],
            "message": [_msg("m", "S", "K")],
        }],
        "population": [{"app": "A", "type": "static",
                        "sinks": [{"module": "K", "nodes": [2]}],
                        "sources": [{"message": "m", "nodes": [0], "distribution": {"type": DET, "time": 2}}]}],
    }


def contention() -> dict:
    """Two sources share one link and one server; replies travel back."""
    return {
        "name": "micro-contention",
        "seed": 2,
        "until": 14,
        "topology": _topo({0: 1, 1: 1, 2: 1, 3: 2},
                          [(0, 2, 100, 0.5), (1, 2, 100, 0.25), (2, 3, 100, 0.5)]),
        "application": [{
            "name": "B",
            "module": [{"name": "S", "type": "SOURCE"}, {"name": "W"}, {"name": "K", "type": "SINK"}],
            "message": [_msg("m", "S", "W", instructions=3), _msg("r", "W", "K", nbytes=25)],
            "transmission": [{"module": "W", "message_in": "m", "message_out": "r", "fractional": 1.0}],
        }],
        "placement": [{"app": "B", "type": "static", "assignments": {"W": [3]}}],
        "population": [{"app": "B", "type": "static",
                        "sinks": [{"module": "K", "nodes": [0]}],
                        "sources": [{"message": "m", "nodes": [0], "distribution": {"type": DET, "time": 3}},
                                    {"message": "m", "nodes": [1], "distribution": {"type": DET, "time": 4}}]}],
    }


def fractional_chain() -> dict:
    """Threshold 1 always fires, threshold 0 never does, a second module absorbs."""
    return {
        "name": "micro-chain",
        "seed": 3,
        "until": 22,
        "topology": _topo({0: 1, 1: 4, 2: 2}, [(0, 1, 200, 0.125), (1, 2, 200, 0.125), (0, 2, 100, 1)]),
        "application": [{
            "name": "C",
            "module": [{"name": "S", "type": "SOURCE"}, {"name": "X"}, {"name": "Y"}, {"name": "K", "type": "SINK"}],
            "message": [_msg("a", "S", "X", instructions=2), _msg("b", "X", "K"), _msg("c", "X", "K"),
                        _msg("d", "X", "Y", instructions=1, nbytes=100)],
            "transmission": [
                {"module": "X", "message_in": "a", "message_out": "b", "fractional": 1.0},
                {"module": "X", "message_in": "a", "message_out": "c", "fractional": 0.0},
                {"module": "X", "message_in": "a", "message_out": "d"},
                {"module": "Y", "message_in": "d", "message_out": None},
            ],
        }],
        "placement": [{"app": "C", "type": "static", "assignments": {"X": [1], "Y": [2]}}],
        "population": [{"app": "C", "type": "static",
                        "sinks": [{"module": "K", "nodes": [0]}],
                        "sources": [{"message": "a", "nodes": [0], "distribution": {"type": DET, "time": 5}}]}],
    }


def broadcast_star() -> dict:
    """A hub module's service source broadcasts to two replicas; a workload source feeds the hub."""
    return {
        "name": "micro-broadcast",
        "seed": 4,
        "until": 12,
        "topology": _topo({0: 8, 1: 1, 2: 2, 3: 1},
                          [(0, 1, 100, 0.25), (0, 2, 100, 0.5), (0, 3, 100, 0.125)]),
        "application": [{
            "name": "D",
            "module": [{"name": "S", "type": "SOURCE"}, {"name": "C"}, {"name": "R"}],
            "message": [_msg("p", "S", "C", instructions=1), _msg("g", "C", "R", instructions=0.5, broadcast=True)],
            "transmission": [{"module": "C", "message_in": "p", "message_out": None},
                             {"module": "R", "message_in": "g", "message_out": None}],
            "service_source": [{"module": "C", "message_out": "g",
                                "distribution": {"type": "deterministic_start", "start": 1, "time": 4}}],
        }],
        "placement": [{"app": "D", "type": "static", "assignments": {"C": [0], "R": [1, 2]}}],
        "population": [{"app": "D", "type": "static",
                        "sources": [{"message": "p", "nodes": [3], "distribution": {"type": DET, "time": 3}}]}],
    }


def round_robin() -> dict:
    """Three sink replicas at different distances served in rotation."""
    return {
        "name": "micro-rr",
        "seed": 5,
        "until": 6.5,
        "topology": _topo({0: 1, 1: 1, 2: 1, 3: 1},
                          [(0, 1, 400, 0.0625), (1, 2, 400, 0.0625), (1, 3, 200, 0.25)]),
        "application": [{
            "name": "E",
            "module": [{"name": "S", "type": "SOURCE"}, {"name": "T", "type": "SINK"}],
            "message": [_msg("m", "S", "T")],
        }],
        "selection": {"type": "round_robin"},
        "population": [{"app": "E", "type": "static",
                        "sinks": [{"module": "T", "nodes": [2], "number": 2}, {"module": "T", "nodes": [3]}],
                        "sources": [{"message": "m", "nodes": [0], "distribution": {"type": DET, "time": 1}}]}],
    }


ALL = [cycle_path, contention, fractional_chain, broadcast_star, round_robin]
