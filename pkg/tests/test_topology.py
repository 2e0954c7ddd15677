from __future__ import annotations

import networkx as nx
import pytest

from builders import topo
from fogsim.errors import TopologyError
from fogsim.topology import LinkAttrs, NodeAttrs, Topology, load_edgelist, load_topology, parse_edgelist


def test_load_keeps_custom_attributes():
    t = load_topology({
        "entity": [{"id": 0, "IPT": 10, "RAM": 4, "model": "cloud"}, {"id": 1, "IPT": 1, "RAM": 1, "model": "edge"}],
        "link": [{"s": 0, "d": 1, "BW": 5, "PR": 2, "kind": "wan"}],
    })
    assert t.nodes[0].custom == {"model": "cloud"}
    assert t.find(model="edge") == [1]
    assert t.link(1, 0).custom == {"kind": "wan"}
    assert t.link(0, 1).latency(10) == 4.0


@pytest.mark.parametrize("doc, fragment", [
    ({"entity": [{"id": 0, "IPT": 1, "RAM": 1}, {"id": 5, "RAM": 1}]}, "/entity/1 (node 5): missing mandatory attribute 'IPT'"),
    ({"entity": [{"IPT": 1, "RAM": 1}]}, "/entity/0: missing mandatory attribute 'id'"),
    ({"entity": [{"id": 0, "IPT": "fast", "RAM": 1}]}, "must be a number"),
    ({"entity": [{"id": 0, "IPT": 1, "RAM": 1}], "link": [{"s": 0, "d": 9, "BW": 1, "PR": 1}]}, "not a declared node"),
    ({"entity": [{"id": 0, "IPT": 1, "RAM": 1}, {"id": 1, "IPT": 1, "RAM": 1}],
      "link": [{"s": 0, "d": 1, "BW": 1}]}, "/link/0: missing mandatory attribute 'PR'"),
    ({"entity": [{"id": 0, "IPT": 1, "RAM": 1}, {"id": 0, "IPT": 1, "RAM": 1}]}, "duplicate node id 0"),
])
def test_load_errors_name_the_entity(doc, fragment):
    with pytest.raises(TopologyError, match=fragment.replace("(", r"\(").replace(")", r"\)")):
        load_topology(doc)


def test_link_validation():
    t = topo([(0, 1)])
    with pytest.raises(TopologyError, match="duplicate link"):
        t.add_link(LinkAttrs(1, 0, 1.0, 0.0))
    with pytest.raises(TopologyError, match="self-loop"):
        t.add_link(LinkAttrs(1, 1, 1.0, 0.0))
    with pytest.raises(TopologyError, match="BW must be positive"):
        t.add_node(NodeAttrs(2, 1.0, 1.0))
        t.add_link(LinkAttrs(1, 2, 0.0, 0.0))


def test_shortest_path_prefers_smallest_ids():
    t = topo([(0, 3), (3, 2), (0, 1), (1, 2)])
    assert t.shortest_path(0, 2) == [0, 1, 2]
    assert t.shortest_paths(0, 2) == [[0, 1, 2], [0, 3, 2]]
    assert t.hop_distance(0, 2) == 2
    assert t.shortest_path(2, 2) == [2]


def test_mutation_invalidates_caches():
    t = topo([(0, 1), (1, 2), (0, 3), (3, 4), (4, 2)])
    assert t.shortest_path(0, 2) == [0, 1, 2]
    gen = t.generation
    assert t.remove_node(1) == [(0, 1), (1, 2)]
    assert t.generation > gen
    assert t.shortest_path(0, 2) == [0, 3, 4, 2]
    t.remove_link(3, 4)
    assert t.shortest_path(0, 2) is None
    assert t.hop_distance(0, 2) is None
    t.check_integrity()


def test_neighbors_and_degree():
    t = topo([(2, 0), (2, 1), (2, 3)])
    assert t.neighbors(2) == [0, 1, 3]
    assert t.degree(0) == 1
    assert len(t) == 4 and 3 in t and 7 not in t


def test_betweenness_star_and_ranking():
    t = topo([(0, i) for i in range(1, 6)])
    scores = t.betweenness_centrality()
    assert scores[0] == pytest.approx(1.0)
    assert all(scores[i] == 0 for i in range(1, 6))
    assert t.top_betweenness(3) == [0, 1, 2]
    with pytest.raises(TopologyError):
        t.top_betweenness(7)


def test_betweenness_empty_graph_rejected():
    with pytest.raises(TopologyError):
        Topology().betweenness_centrality()


def test_to_networkx_and_json_roundtrip():
    t = topo([(0, 1, 3.0, 0.5), (1, 2)])
    g = t.to_networkx()
    assert nx.utils.graphs_equal(g, nx.path_graph(3))
    again = load_topology(t.to_json())
    assert again.to_json() == t.to_json()


def test_edgelist(tmp_path):
    doc = parse_edgelist(["# s d BW PR", "0 1 10 0.5", "", "1 2 20 1  # trailing"], ipt=3)
    assert [e["id"] for e in doc["entity"]] == [0, 1, 2]
    assert doc["entity"][0]["IPT"] == 3
    assert doc["link"][1] == {"s": 1, "d": 2, "BW": 20.0, "PR": 1.0}
    with pytest.raises(TopologyError, match="line 1"):
        parse_edgelist(["0 1 x 1"])
    p = tmp_path / "g.txt"
    p.write_text("0 1 10 1\n1 2 10 1\n")
    assert load_edgelist(p).shortest_path(0, 2) == [0, 1, 2]
