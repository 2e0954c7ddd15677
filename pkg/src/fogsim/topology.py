"""Attributed network topology: nodes with compute capacity, links with
bandwidth and propagation delay, hop-count routing queries and centrality.

The graph is undirected. Routing is by hop count only; ``BW`` and ``PR``
feed the transmission timing in the engine, never the path choice.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import networkx as nx

from fogsim.errors import TopologyError

NODE_KEYS = ("id", "IPT", "RAM")
LINK_KEYS = ("s", "d", "BW", "PR")


@dataclass
class NodeAttrs:
    id: int
    ipt: float
    ram: float = 0.0
    custom: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {"id": self.id, "IPT": self.ipt, "RAM": self.ram, **self.custom}


@dataclass
class LinkAttrs:
    s: int
    d: int
    bw: float
    pr: float
    custom: dict[str, Any] = field(default_factory=dict)

    @property
    def pair(self) -> tuple[int, int]:
        return link_key(self.s, self.d)

    def latency(self, size: float) -> float:
        """Per-hop time for a message of ``size`` bytes."""
        return size / self.bw + self.pr

    def to_json(self) -> dict[str, Any]:
        return {"s": self.s, "d": self.d, "BW": self.bw, "PR": self.pr, **self.custom}


def link_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a <= b else (b, a)


class Topology:
    """Mutable undirected graph of network entities.

    Every mutation bumps ``generation`` so cached routes can be detected as
    stale. Distance maps and chosen paths are cached per generation.
    """

    def __init__(self) -> None:
        self.nodes: dict[int, NodeAttrs] = {}
        self.links: dict[tuple[int, int], LinkAttrs] = {}
        self._adj: dict[int, dict[int, LinkAttrs]] = {}
        self.generation = 0
        self._dist_cache: dict[int, dict[int, int]] = {}
        self._path_cache: dict[tuple[int, int], tuple[int, ...] | None] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node: int) -> bool:
        return node in self.nodes

    def _bump(self) -> None:
        self.generation += 1
        self._dist_cache.clear()
        self._path_cache.clear()

    # -- mutation -----------------------------------------------------------

    def add_node(self, attrs: NodeAttrs) -> int:
        if attrs.id in self.nodes:
            raise TopologyError(f"duplicate node id {attrs.id}")
        if attrs.ipt < 0 or attrs.ram < 0:
            raise TopologyError(f"node {attrs.id}: IPT and RAM must be non-negative")
        self.nodes[attrs.id] = attrs
        self._adj[attrs.id] = {}
        self._bump()
        return attrs.id

    def remove_node(self, node: int) -> list[tuple[int, int]]:
        """Remove ``node`` and its incident links; return the removed pairs."""
        if node not in self.nodes:
            raise TopologyError(f"unknown node {node}")
        removed = sorted(link_key(node, nb) for nb in self._adj[node])
        for nb in list(self._adj[node]):
            del self._adj[nb][node]
            del self.links[link_key(node, nb)]
        del self._adj[node]
        del self.nodes[node]
        self._bump()
        return removed

    def add_link(self, attrs: LinkAttrs) -> None:
        for end in (attrs.s, attrs.d):
            if end not in self.nodes:
                raise TopologyError(f"link ({attrs.s}, {attrs.d}) references unknown node {end}")
        if attrs.s == attrs.d:
            raise TopologyError(f"self-loop on node {attrs.s}")
        if attrs.pair in self.links:
            raise TopologyError(f"duplicate link {attrs.pair}")
        if not attrs.bw > 0:
            raise TopologyError(f"link {attrs.pair}: BW must be positive")
        if attrs.pr < 0:
            raise TopologyError(f"link {attrs.pair}: PR must be non-negative")
        self.links[attrs.pair] = attrs
        self._adj[attrs.s][attrs.d] = attrs
        self._adj[attrs.d][attrs.s] = attrs
        self._bump()

    def remove_link(self, a: int, b: int) -> None:
        key = link_key(a, b)
        if key not in self.links:
            raise TopologyError(f"unknown link {key}")
        del self.links[key]
        del self._adj[a][b]
        del self._adj[b][a]
        self._bump()

    # -- queries --------------------------------------------------------------

    def link(self, a: int, b: int) -> LinkAttrs | None:
        return self._adj.get(a, {}).get(b)

    def neighbors(self, node: int) -> list[int]:
        return sorted(self._adj[node])

    def degree(self, node: int) -> int:
        return len(self._adj[node])

    def find(self, **attrs: Any) -> list[int]:
        """Node ids whose custom attributes match every ``key=value`` given."""
        return [
            nid
            for nid, n in sorted(self.nodes.items())
            if all(n.custom.get(k) == v for k, v in attrs.items())
        ]

    def distances_from(self, node: int) -> dict[int, int]:
        """Hop distance from ``node`` to every reachable node (BFS, cached)."""
        cached = self._dist_cache.get(node)
        if cached is not None:
            return cached
        if node not in self.nodes:
            raise TopologyError(f"unknown node {node}")
        dist = {node: 0}
        queue = deque([node])
        adj = self._adj
        while queue:
            u = queue.popleft()
            du = dist[u] + 1
            for v in adj[u]:
                if v not in dist:
                    dist[v] = du
                    queue.append(v)
        self._dist_cache[node] = dist
        return dist

    def hop_distance(self, src: int, dst: int) -> int | None:
        return self.distances_from(dst).get(src)

    def shortest_path(self, src: int, dst: int) -> list[int] | None:
        """The lexicographically smallest hop-minimal path, or None."""
        key = (src, dst)
        if key in self._path_cache:
            cached = self._path_cache[key]
            return None if cached is None else list(cached)
        if src not in self.nodes:
            raise TopologyError(f"unknown node {src}")
        dist = self.distances_from(dst)
        if src not in dist:
            self._path_cache[key] = None
            return None
        path = [src]
        cur = src
        while cur != dst:
            want = dist[cur] - 1
            cur = min(v for v in self._adj[cur] if dist.get(v) == want)
            path.append(cur)
        self._path_cache[key] = tuple(path)
        return path

    def shortest_paths(self, src: int, dst: int) -> list[list[int]]:
        """All hop-minimal simple paths from ``src`` to ``dst``, sorted."""
        for end in (src, dst):
            if end not in self.nodes:
                raise TopologyError(f"unknown node {end}")
        dist = self.distances_from(dst)
        if src not in dist:
            return []
        out: list[list[int]] = []

        def extend(path: list[int]) -> None:
            cur = path[-1]
            if cur == dst:
                out.append(list(path))
                return
            want = dist[cur] - 1
            for v in sorted(self._adj[cur]):
                if dist.get(v) == want:
                    path.append(v)
                    extend(path)
                    path.pop()

        extend([src])
        return out

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(sorted(self.nodes))
        g.add_edges_from(sorted(self.links))
        return g

    def betweenness_centrality(self) -> dict[int, float]:
        """Normalized shortest-path betweenness (unweighted, endpoints excluded)."""
        if not self.nodes:
            raise TopologyError("betweenness of an empty graph")
        scores = nx.betweenness_centrality(self.to_networkx(), normalized=True)
        return {n: float(scores[n]) for n in sorted(scores)}

    def top_betweenness(self, k: int, scores: dict[int, float] | None = None) -> list[int]:
        """The ``k`` most central nodes, ties broken by lower id."""
        if k > len(self.nodes):
            raise TopologyError(f"requested {k} nodes from a topology of {len(self.nodes)}")
        scores = scores if scores is not None else self.betweenness_centrality()
        ranked = sorted(scores, key=lambda n: (-scores[n], n))
        return ranked[:k]

    def check_integrity(self) -> None:
        for (a, b), link in self.links.items():
            if a not in self.nodes or b not in self.nodes:
                raise TopologyError(f"link {(a, b)} has a missing endpoint")
            if self._adj[a].get(b) is not link or self._adj[b].get(a) is not link:
                raise TopologyError(f"adjacency out of sync for link {(a, b)}")

    def to_json(self) -> dict[str, Any]:
        return {
            "entity": [self.nodes[n].to_json() for n in sorted(self.nodes)],
            "link": [self.links[k].to_json() for k in sorted(self.links)],
        }


def _number(doc: dict, key: str, where: str) -> float:
    if key not in doc:
        raise TopologyError(f"{where}: missing mandatory attribute {key!r}")
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise TopologyError(f"{where}: attribute {key!r} must be a number, got {val!r}")
    return val


def load_topology(doc: dict[str, Any]) -> Topology:
    """Build a topology from ``{"entity": [...], "link": [...]}``.

    Keys other than the mandatory ones are kept verbatim in ``custom``.
    """
    if not isinstance(doc, dict):
        raise TopologyError("topology document must be an object")
    topo = Topology()
    for i, ent in enumerate(doc.get("entity", [])):
        where = f"/entity/{i}"
        if not isinstance(ent, dict):
            raise TopologyError(f"{where}: entity must be an object")
        if "id" not in ent:
            raise TopologyError(f"{where}: missing mandatory attribute 'id'")
        nid = ent["id"]
        if isinstance(nid, bool) or not isinstance(nid, int):
            raise TopologyError(f"{where}: id must be an integer, got {nid!r}")
        where = f"{where} (node {nid})"
        ipt = _number(ent, "IPT", where)
        ram = _number(ent, "RAM", where)
        custom = {k: v for k, v in ent.items() if k not in NODE_KEYS}
        topo.add_node(NodeAttrs(nid, float(ipt), float(ram), custom))
    for i, ln in enumerate(doc.get("link", [])):
        where = f"/link/{i}"
        if not isinstance(ln, dict):
            raise TopologyError(f"{where}: link must be an object")
        for end in ("s", "d"):
            if end not in ln:
                raise TopologyError(f"{where}: missing mandatory attribute {end!r}")
            if ln[end] not in topo.nodes:
                raise TopologyError(f"{where}: link endpoint {ln[end]} is not a declared node")
        bw = _number(ln, "BW", where)
        pr = _number(ln, "PR", where)
        custom = {k: v for k, v in ln.items() if k not in LINK_KEYS}
        try:
            topo.add_link(LinkAttrs(ln["s"], ln["d"], float(bw), float(pr), custom))
        except TopologyError as exc:
            raise TopologyError(f"{where}: {exc}") from None
    return topo


def parse_edgelist(lines: Iterable[str], ipt: float = 1.0, ram: float = 0.0) -> dict[str, Any]:
    """Convert ``s d BW PR`` lines into a topology document.

    Nodes are created implicitly with the given IPT/RAM. Blank lines and
    ``#`` comments are skipped.
    """
    nodes: set[int] = set()
    links = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise TopologyError(f"edge list line {lineno}: expected 's d BW PR', got {raw.strip()!r}")
        try:
            s, d = int(parts[0]), int(parts[1])
            bw, pr = float(parts[2]), float(parts[3])
        except ValueError:
            raise TopologyError(f"edge list line {lineno}: cannot parse {raw.strip()!r}") from None
        nodes.update((s, d))
        links.append({"s": s, "d": d, "BW": bw, "PR": pr})
    return {
        "entity": [{"id": n, "IPT": ipt, "RAM": ram} for n in sorted(nodes)],
        "link": links,
    }


def load_edgelist(path: str | Path, ipt: float = 1.0, ram: float = 0.0) -> Topology:
    with open(path, encoding="utf-8") as fh:
        return load_topology(parse_edgelist(fh, ipt=ipt, ram=ram))
