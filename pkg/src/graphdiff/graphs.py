"""Computation graphs: labeled DAGs of operator invocations.

Nodes carry an operator name; edges carry the destination parameter that
receives the source node's output. Model graphs and mined patterns share the
same representation; mined patterns are additionally connected.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .signatures import REGISTRY, ParamKind


class GraphError(ValueError):
    """Raised for malformed graph files or violated graph invariants."""


@dataclass(frozen=True)
class Node:
    id: int
    api: str


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    dst_param: str


@dataclass(frozen=True)
class ComputationGraph:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]

    def node_ids(self) -> tuple[int, ...]:
        return tuple(n.id for n in self.nodes)

    def api_of(self, node_id: int) -> str:
        for n in self.nodes:
            if n.id == node_id:
                return n.api
        raise KeyError(f"unknown node id {node_id}")

    def in_edges(self, node_id: int) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.dst == node_id)

    def out_edges(self, node_id: int) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.src == node_id)

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class GraphCorpus:
    graphs: tuple[tuple[str, ComputationGraph], ...]

    def __post_init__(self) -> None:
        ids = [gid for gid, _ in self.graphs]
        if len(ids) != len(set(ids)):
            dupes = sorted({g for g in ids if ids.count(g) > 1})
            raise GraphError(f"duplicate graph ids: {dupes}")

    def __iter__(self):
        return iter(self.graphs)

    def __len__(self) -> int:
        return len(self.graphs)

    def get(self, graph_id: str) -> ComputationGraph:
        for gid, g in self.graphs:
            if gid == graph_id:
                return g
        raise KeyError(f"unknown graph id {graph_id!r}")


def make_graph(nodes: Iterable[tuple[int, str]],
               edges: Iterable[tuple[int, int, str]] = (),
               *, where: str = "graph", connected: bool = False) -> ComputationGraph:
    """Build and validate a graph from (id, api) and (src, dst, param) tuples."""
    g = ComputationGraph(
        nodes=tuple(Node(int(i), str(a)) for i, a in nodes),
        edges=tuple(Edge(int(s), int(d), str(p)) for s, d, p in edges),
    )
    validate_graph(g, where=where, connected=connected)
    return g


def validate_graph(g: ComputationGraph, *, where: str = "graph",
                   connected: bool = False) -> None:
    ids = [n.id for n in g.nodes]
    seen: set[int] = set()
    for i in ids:
        if i in seen:
            raise GraphError(f"{where}: duplicate node id {i}")
        seen.add(i)

    for n in g.nodes:
        if n.api not in REGISTRY:
            raise GraphError(f"{where}: node {n.id} has unknown api {n.api!r}")

    taken: set[tuple[int, str]] = set()
    for e in g.edges:
        if e.src not in seen:
            raise GraphError(f"{where}: edge {e.src}->{e.dst} references unknown src node {e.src}")
        if e.dst not in seen:
            raise GraphError(f"{where}: edge {e.src}->{e.dst} references unknown dst node {e.dst}")
        sig = REGISTRY[g.api_of(e.dst)]
        try:
            spec = sig.param(e.dst_param)
        except KeyError:
            raise GraphError(
                f"{where}: edge {e.src}->{e.dst} targets {sig.name!r} parameter "
                f"{e.dst_param!r} which does not exist"
            ) from None
        if spec.kind is not ParamKind.TENSOR or not spec.dependent_capable:
            raise GraphError(
                f"{where}: edge {e.src}->{e.dst} targets parameter {e.dst_param!r} of "
                f"{sig.name!r}, which is not a dependent-capable tensor parameter"
            )
        key = (e.dst, e.dst_param)
        if key in taken:
            raise GraphError(
                f"{where}: node {e.dst} parameter {e.dst_param!r} has more than one incoming edge"
            )
        taken.add(key)

    topo_order(g)  # raises on cycles

    if connected and len(g.nodes) > 1:
        undirected: dict[int, set[int]] = {i: set() for i in seen}
        for e in g.edges:
            undirected[e.src].add(e.dst)
            undirected[e.dst].add(e.src)
        start = g.nodes[0].id
        reached = {start}
        stack = [start]
        while stack:
            for nxt in undirected[stack.pop()]:
                if nxt not in reached:
                    reached.add(nxt)
                    stack.append(nxt)
        if reached != seen:
            missing = sorted(seen - reached)
            raise GraphError(f"{where}: graph is not connected (unreachable nodes {missing})")


def topo_order(g: ComputationGraph) -> list[int]:
    """Topological order of node ids; ties broken by ascending node id."""
    indeg = {n.id: 0 for n in g.nodes}
    succs: dict[int, list[int]] = {n.id: [] for n in g.nodes}
    for e in g.edges:
        indeg[e.dst] += 1
        succs[e.src].append(e.dst)

    ready = [i for i, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for j in succs[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(ready, j)
    if len(order) != len(g.nodes):
        raise GraphError(f"cycle detected: {_find_cycle(g)}")
    return order


def _find_cycle(g: ComputationGraph) -> list[int]:
    succs: dict[int, list[int]] = {n.id: [] for n in g.nodes}
    for e in g.edges:
        succs[e.src].append(e.dst)
    color: dict[int, int] = {}
    stack_path: list[int] = []

    def visit(u: int) -> Optional[list[int]]:
        color[u] = 1
        stack_path.append(u)
        for v in succs[u]:
            if color.get(v, 0) == 1:
                return stack_path[stack_path.index(v):] + [v]
            if color.get(v, 0) == 0:
                cyc = visit(v)
                if cyc:
                    return cyc
        stack_path.pop()
        color[u] = 2
        return None

    for n in g.nodes:
        if color.get(n.id, 0) == 0:
            cyc = visit(n.id)
            if cyc:
                return cyc
    return []


def ancestors(g: ComputationGraph, node_id: int) -> set[int]:
    """All nodes with a directed path to node_id, excluding node_id itself."""
    if node_id not in {n.id for n in g.nodes}:
        raise KeyError(f"unknown node id {node_id}")
    preds: dict[int, list[int]] = {n.id: [] for n in g.nodes}
    for e in g.edges:
        preds[e.dst].append(e.src)
    out: set[int] = set()
    stack = list(preds[node_id])
    while stack:
        u = stack.pop()
        if u not in out:
            out.add(u)
            stack.extend(preds[u])
    return out


def entry_nodes(g: ComputationGraph) -> set[int]:
    """Nodes with no incoming edge."""
    has_in = {e.dst for e in g.edges}
    return {n.id for n in g.nodes if n.id not in has_in}


# ---------------------------------------------------------------------------
# Graph file format: a JSON array of graphs, each
#   {"id": str, "nodes": [{"id": int, "api": str}], "edges": [{"src", "dst", "param"}]}
# ---------------------------------------------------------------------------

def _parse_graph(obj: dict, index: int, *, connected: bool) -> tuple[str, ComputationGraph]:
    where = f"graph #{index}"
    if not isinstance(obj, dict):
        raise GraphError(f"{where}: expected an object, got {type(obj).__name__}")
    gid = obj.get("id")
    if not isinstance(gid, str) or not gid:
        raise GraphError(f"{where}: missing or non-string 'id'")
    where = f"graph {gid!r}"
    for key in ("nodes", "edges"):
        if key not in obj or not isinstance(obj[key], list):
            raise GraphError(f"{where}: missing or non-array {key!r}")
    nodes = []
    for k, n in enumerate(obj["nodes"]):
        if not isinstance(n, dict) or not isinstance(n.get("id"), int) \
                or not isinstance(n.get("api"), str):
            raise GraphError(f"{where}: nodes[{k}] must be {{'id': int, 'api': str}}")
        nodes.append((n["id"], n["api"]))
    edges = []
    for k, e in enumerate(obj["edges"]):
        if not isinstance(e, dict) or not isinstance(e.get("src"), int) \
                or not isinstance(e.get("dst"), int) or not isinstance(e.get("param"), str):
            raise GraphError(f"{where}: edges[{k}] must be {{'src': int, 'dst': int, 'param': str}}")
        edges.append((e["src"], e["dst"], e["param"]))
    return gid, make_graph(nodes, edges, where=where, connected=connected)


def load_corpus(path: str, *, connected: bool = False) -> GraphCorpus:
    """Load and validate a graph file. ``connected=True`` for pattern files."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GraphError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, list):
        raise GraphError(f"{path}: top level must be a JSON array of graphs")
    graphs = tuple(_parse_graph(obj, i, connected=connected) for i, obj in enumerate(doc))
    return GraphCorpus(graphs=graphs)


def graph_to_obj(gid: str, g: ComputationGraph) -> dict:
    return {
        "id": gid,
        "nodes": [{"id": n.id, "api": n.api} for n in g.nodes],
        "edges": [{"src": e.src, "dst": e.dst, "param": e.dst_param} for e in g.edges],
    }


def save_corpus(corpus: GraphCorpus, path: str) -> None:
    doc = [graph_to_obj(gid, g) for gid, g in corpus]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
