"""Property-based checks of the simulator invariants."""

from __future__ import annotations

import copy
import itertools
import random
import tempfile
from collections import Counter, defaultdict
from dataclasses import astuple

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

import micro
import oracles
from builders import source_module_sink, source_sink
from fogsim import application as appmod
from fogsim import distributions as dist
from fogsim import results
from fogsim.application import MODULE, Application, MessageType, transmissions_for
from fogsim.distributions import RandomStream
from fogsim.engine import Simulation
from fogsim.errors import ApplicationError
from fogsim.policies import RoundRobinSelection, ShortestPathSelection, SinkControl, SourceControl, StaticPlacement, StaticPopulation
from fogsim.scenario import Scenario, run_scenario
from fogsim.results import ComputeRecord, DropRecord, LinkRecord, ResultSet, quantize
from fogsim.topology import LinkAttrs, NodeAttrs, Topology

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def graphs(draw, min_nodes=1, max_nodes=9):
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = list(itertools.combinations(range(n), 2))
    edges = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    return n, edges


def _build(n, edges, order=None, bw=100.0, pr=1.0):
    t = Topology()
    for i in (order or range(n)):
        t.add_node(NodeAttrs(i, 10.0, 1.0))
    for a, b in edges:
        t.add_link(LinkAttrs(a, b, bw, pr))
    return t


# -- topology -------------------------------------------------------------------------


@SETTINGS
@given(graphs(min_nodes=2), st.data())
def test_mutations_keep_integrity_and_bump_generation(g, data):
    n, edges = g
    t = _build(n, edges)
    alive = set(range(n))
    for _ in range(data.draw(st.integers(1, 5))):
        if len(alive) < 2:
            break
        gen = t.generation
        victim = data.draw(st.sampled_from(sorted(alive)))
        survivors = sorted(alive - {victim})
        a, b = survivors[0], survivors[-1]
        t.remove_node(victim)
        alive.discard(victim)
        assert t.generation > gen
        t.check_integrity()
        assert all(x in t.nodes and y in t.nodes for x, y in t.links)
        for p in t.shortest_paths(a, b):
            assert victim not in p


@SETTINGS
@given(graphs(min_nodes=2), st.randoms(use_true_random=False))
def test_shortest_paths_are_simple_minimal_and_order_free(g, rnd):
    n, edges = g
    t = _build(n, edges)
    order = list(range(n))
    rnd.shuffle(order)
    shuffled_edges = list(edges)
    rnd.shuffle(shuffled_edges)
    u = _build(n, shuffled_edges, order=order)
    for a, b in itertools.combinations(range(n), 2):
        paths = t.shortest_paths(a, b)
        assert paths == u.shortest_paths(a, b)
        if not paths:
            assert t.hop_distance(a, b) is None
            continue
        assert len({len(p) for p in paths}) == 1
        assert all(len(set(p)) == len(p) for p in paths)
        assert len(paths[0]) - 1 == t.hop_distance(a, b)
        assert t.shortest_path(a, b) == paths[0]


@SETTINGS
@given(graphs(min_nodes=3, max_nodes=8))
def test_betweenness_matches_enumeration(g):
    n, edges = g
    ours = _build(n, edges).betweenness_centrality()
    ref = oracles.brute_betweenness(list(range(n)), edges)
    assert all(abs(ours[v] - ref[v]) <= 1e-9 for v in range(n))


# -- applications and distributions -------------------------------------------------------


@SETTINGS
@given(st.sampled_from([0.0, 1.0]), st.integers(0, 2**32), st.integers(1, 200))
def test_extreme_thresholds(threshold, seed, n):
    app = source_module_sink()
    app.rules[0] = appmod.TransmissionRule("W", "m", "r", appmod.FRACTIONAL, threshold)
    rng = RandomStream(seed, "w")
    emitted = sum(len(transmissions_for(app, "W", "m", rng)) for _ in range(n))
    assert emitted == (n if threshold == 1.0 else 0)


@SETTINGS
@given(st.integers(0, 3), st.booleans())
def test_validate_is_pure(variant, break_it):
    app = source_module_sink()
    if break_it:
        app.add_message(MessageType(f"x{variant}", "W", "Ghost", 0, 1))

    def verdict():
        try:
            appmod.validate(app)
            return None
        except ApplicationError as exc:
            return str(exc)

    assert verdict() == verdict()


@SETTINGS
@given(st.integers(0, 2**31), st.floats(1e-6, 1e6), st.integers(0, 1000))
def test_exponential_draws_are_positive(seed, mean, key):
    rng = RandomStream(seed, key)
    assert all(rng.exponential(mean) > 0 for _ in range(50))
    assert dist.exponential_start(5.0, mean).next_interval(RandomStream(seed, key), True) > 5.0


# -- engine ---------------------------------------------------------------------------


@st.composite
def runs(draw):
    """A random connected topology with a source -> module -> sink chain."""
    n = draw(st.integers(2, 7))
    rnd = random.Random(draw(st.integers(0, 10**6)))
    edges = [(rnd.randrange(i), i) for i in range(1, n)]
    extra = [p for p in itertools.combinations(range(n), 2) if p not in edges]
    edges += rnd.sample(extra, min(len(extra), draw(st.integers(0, 4))))
    t = Topology()
    for i in range(n):
        t.add_node(NodeAttrs(i, draw(st.sampled_from([1.0, 2.5, 10.0])), 1.0))
    for a, b in edges:
        t.add_link(LinkAttrs(a, b, draw(st.sampled_from([3.0, 50.0, 400.0])), draw(st.sampled_from([0.0, 0.3, 2.0]))))
    app = source_module_sink(instructions=draw(st.sampled_from([0.5, 4.0, 20.0])),
                             nbytes=draw(st.sampled_from([10.0, 100.0])), reply_bytes=30.0)
    app.rules[0] = appmod.TransmissionRule("W", "m", "r", appmod.FRACTIONAL, draw(st.sampled_from([0.5, 1.0])))
    nodes = list(range(n))
    w_nodes = draw(st.lists(st.sampled_from(nodes), min_size=1, max_size=3))
    k_nodes = draw(st.lists(st.sampled_from(nodes), min_size=1, max_size=2))
    srcs = draw(st.lists(st.sampled_from(nodes), min_size=1, max_size=3))
    d = draw(st.sampled_from([dist.exponential(3.0), dist.deterministic(2.0), dist.exponential(20.0)]))
    selection = draw(st.sampled_from(["sp", "rr"]))
    seed = draw(st.integers(0, 1000))
    until = draw(st.sampled_from([30.0, 120.0]))

    def make(trace=False):
        sim = Simulation(_copy(t), seed=seed, trace=trace)
        pop = StaticPopulation([SinkControl("K", k_nodes)], [SourceControl("m", srcs, d)])
        sel = RoundRobinSelection() if selection == "rr" else ShortestPathSelection()
        sim.deploy_app(app, StaticPlacement({"W": w_nodes}), [pop], selection=sel)
        return sim

    return make, until


def _copy(t: Topology) -> Topology:
    u = Topology()
    for node in t.nodes.values():
        u.add_node(node)
    for link in t.links.values():
        u.add_link(link)
    return u


def _pending(sim):
    out = set()
    for m in sim._in_flight:
        out.add((m.id, m.name))
    for p in sim.processes.values():
        for m in ([p.current] if p.current is not None else []) + list(p.queue):
            out.add((m.id, m.name))
    return out


@SETTINGS
@given(runs())
def test_engine_invariants(case):
    make, until = case
    sim = make(trace=True)
    rs = sim.run(until)

    # causality and exact algebra
    for r in rs.compute:
        t = results.times(r)
        assert r.time_emit <= r.time_reception <= r.time_in <= r.time_out
        assert t.waiting + t.service == t.response and t.latency + t.response == t.total_response

    # clock monotonicity per log
    for seq in ([e["time"] for e in rs.events], [r.ctime for r in rs.link], [r.time_out for r in rs.compute]):
        assert seq == sorted(seq)

    # conservation: every hop is logged once, every instance ends somewhere
    hops = Counter((r.id, r.message) for r in rs.link)
    done = {(r.id, r.message): r for r in rs.compute}
    dropped = {d.id for d in rs.drops}
    pending = _pending(sim)
    for key, count in hops.items():
        assert key in done or key in pending or key[0] in dropped, key
        if key in done:
            r = done[key]
            assert count == sim.topology.hop_distance(r.topo_src, r.topo_dst)

    # link FIFO
    by_link = defaultdict(list)
    for mid, name, u, v, enq, start in sim.link_trace:
        by_link[(u, v)].append((enq, start))
    for services in by_link.values():
        for (e1, s1), (e2, s2) in itertools.combinations(services, 2):
            if e1 < e2:
                assert s1 < s2
            assert s1 <= s2

    # the gauge counts services logged so far that had to wait and have not started yet
    start_of = {(mid, name, u, v): start for mid, name, u, v, _, start in sim.link_trace}
    waited = []
    for r in rs.link:
        s = start_of.get((r.id, r.message, r.src, r.dst), float("inf"))
        if r.buffer and s == r.ctime:
            s = float("nan")  # waited zero time behind a transmission ending now; order decides
        if s != r.ctime:
            waited.append(s)
        if any(x != x or x == r.ctime for x in waited):
            continue
        assert r.buffer == sum(1 for x in waited if x > r.ctime)
    assert sim.buffer == sum(1 for x in waited if x == float("inf"))

    # replay determinism
    again = make().run(until)
    assert [astuple(r) for r in again.compute] == [astuple(r) for r in rs.compute]
    assert [astuple(r) for r in again.link] == [astuple(r) for r in rs.link]
    assert again.events == rs.events


@SETTINGS
@given(st.integers(1, 5), st.integers(1, 5))
def test_round_robin_exact_fairness(k, n):
    t = Topology()
    t.add_node(NodeAttrs(0, 1.0, 1.0))
    sim = Simulation(t)
    pop = StaticPopulation([SinkControl("K", [0], k)], [SourceControl("m", [0], dist.deterministic(1))])
    sim.deploy_app(source_sink(), populations=[pop], selection=RoundRobinSelection())
    rs = sim.run(n * k)
    assert sorted(Counter(r.des_dst for r in rs.compute).values()) == [n] * k


@SETTINGS
@given(graphs(min_nodes=2, max_nodes=7), st.data())
def test_unique_replica_gives_one_path_per_source(g, data):
    n, edges = g
    t = _build(n, edges, bw=1e3, pr=0.5)
    k = data.draw(st.integers(0, n - 1))
    srcs = data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=3, unique=True))
    sim = Simulation(t)
    pop = StaticPopulation([SinkControl("K", [k])], [SourceControl("m", srcs, dist.deterministic(3))])
    sim.deploy_app(source_sink(), populations=[pop])
    rs = sim.run(40)
    paths = defaultdict(list)
    for r in rs.link:
        paths[r.id].append((r.src, r.dst))
    by_source = defaultdict(set)
    first_hop = {r.id: r.topo_src for r in rs.compute}
    for mid, hops_ in paths.items():
        if mid in first_hop:
            by_source[first_hop[mid]].add(tuple(hops_))
    assert all(len(v) == 1 for v in by_source.values())
    unreachable = [s for s in srcs if t.hop_distance(s, k) is None]
    assert {d.reason for d in rs.drops} <= {results.NO_PATH}
    assert bool(rs.drops) == bool(unreachable)


@SETTINGS
@given(st.integers(1, 6), st.integers(0, 3))
def test_broadcast_fans_out_to_every_replica(k, hub_extra):
    app = Application("b")
    app.add_module("H", MODULE)
    app.add_module("R", MODULE)
    app.add_message(MessageType("g", "H", "R", 1.0, 10.0, broadcast=True))
    app.add_service_module("R", "g", None)
    app.add_service_source("H", dist.deterministic(10), "g")
    t = Topology()
    for i in range(k + hub_extra + 1):
        t.add_node(NodeAttrs(i, 100.0, 1.0))
    for i in range(1, k + hub_extra + 1):
        t.add_link(LinkAttrs(0, i, 1e4, 0.25))
    sim = Simulation(t)
    sim.deploy_app(app, StaticPlacement({"H": [0], "R": list(range(1, k + 1))}))
    rs = sim.run(15)
    assert Counter(r.id for r in rs.compute) == {1: k}


@SETTINGS
@given(st.integers(1, 5), st.integers(1, 5), st.sampled_from([10.0, 64.0, 300.0]), st.sampled_from([0.0, 0.5, 3.0]),
       st.sampled_from([1.0, 8.0]))
def test_uncontended_sequence_latency_is_analytic(h1, h2, bw, pr, ipt):
    n = h1 + h2 + 1
    t = Topology()
    for i in range(n):
        t.add_node(NodeAttrs(i, ipt, 1.0))
    for i in range(n - 1):
        t.add_link(LinkAttrs(i, i + 1, bw, pr))
    app = source_module_sink(instructions=6.0, nbytes=40.0, reply_bytes=20.0)
    sim = Simulation(t)
    pop = StaticPopulation([SinkControl("K", [n - 1])], [SourceControl("m", [0], dist.deterministic(1000))])
    sim.deploy_app(app, StaticPlacement({"W": [h1]}), [pop])
    rs = sim.run(999 + 1000)
    sl = results.sequence_latency(rs.compute, ["m", "r"])
    expected = h1 * (40.0 / bw + pr) + 6.0 / ipt + h2 * (20.0 / bw + pr)
    assert sl.complete == 1
    assert sl.mean == pytest.approx(expected, abs=1e-6)


_times = st.floats(0, 1e4, allow_nan=False).map(quantize)


@SETTINGS
@given(st.lists(st.tuples(_times, _times, _times, _times), max_size=8),
       st.lists(st.tuples(_times, st.integers(0, 50)), max_size=8))
def test_csv_roundtrip_is_lossless(stamps, links):
    comp = []
    for i, ts in enumerate(stamps):
        a, b, c, d = sorted(ts)
        comp.append(ComputeRecord(i, "COMP_M", "app", "W", "m", 0, 1, 2, 3, "S", d - c, c, d, a, b))
    link = [LinkRecord(i, "LINK", 0, 1, "app", quantize(t / 7), "m", t, 40.0, b) for i, (t, b) in enumerate(links)]
    rs = ResultSet(comp, link, [DropRecord(9, "NO_PATH", 1.5, "ctx")])
    with tempfile.TemporaryDirectory() as d:
        results.write_csv(rs, d)
        back = results.read_csv(d)
    assert back.compute == rs.compute and back.link == rs.link and back.drops == rs.drops



def _canon(rows):
    return sorted(tuple("" if x is None else x for x in row) for row in rows)


@st.composite
def dyadic_docs(draw):
    """Random small contention scenarios whose times are all exactly representable."""
    doc = micro.contention()
    doc["seed"] = draw(st.integers(0, 100))
    doc["until"] = draw(st.sampled_from([8, 14, 20]))
    for e in doc["topology"]["entity"]:
        e["IPT"] = draw(st.sampled_from([1, 2, 4]))
    for link in doc["topology"]["link"]:
        link["BW"] = draw(st.sampled_from([25, 50, 100, 200]))
        link["PR"] = draw(st.sampled_from([0, 0.125, 0.5, 1]))
    app = doc["application"][0]
    app["message"][0]["instructions"] = draw(st.sampled_from([1, 2, 3]))
    app["message"][1]["bytes"] = draw(st.sampled_from([12.5, 25, 50]))
    doc["placement"][0]["assignments"]["W"] = draw(st.lists(st.integers(0, 3), min_size=1, max_size=2, unique=True))
    doc["population"][0]["sinks"][0]["nodes"] = [draw(st.integers(0, 3))]
    for src in doc["population"][0]["sources"]:
        src["distribution"]["time"] = draw(st.sampled_from([1.5, 2, 3, 5]))
    doc["selection"] = {"type": draw(st.sampled_from(["shortest_path", "round_robin"]))}
    return doc


@SETTINGS
@given(dyadic_docs())
def test_engine_agrees_with_oracle_on_random_instances(doc):
    try:
        compute, links = oracles.OracleSim(copy.deepcopy(doc)).run()
    except oracles.Ambiguous:
        return
    rs = run_scenario(Scenario(doc))
    assert _canon(astuple(r) for r in rs.compute) == _canon(compute)
    assert _canon(astuple(r) for r in rs.link) == _canon(links)
