"""Frequent-subgraph mining over operator graphs.

Pattern-growth search in the gSpan style: start from single edges, extend one
edge at a time along embeddings found in supporting graphs, prune by support
(transaction semantics: a graph counts once no matter how many embeddings it
holds), and deduplicate isomorphism classes by canonical minimum DFS code.

The DFS code extends the classic form to directed, parameter-labeled edges:
each skeleton edge becomes a tuple

    (i, j, label_i, direction, dst_param, label_j)

where i/j are DFS discovery indices, direction is 0 when the arc points
i -> j and 1 when it points j -> i, and the canonical code is the
lexicographically smallest complete tuple sequence over all rightmost-path
DFS enumerations. Two patterns get equal codes iff they are isomorphic as
labeled directed graphs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

from .graphs import ComputationGraph, Edge, GraphCorpus, Node, make_graph

DfsCode = tuple[tuple[int, int, str, int, str, str], ...]


class MiningError(ValueError):
    pass


@dataclass(frozen=True)
class MiningConfig:
    min_support: int
    min_nodes: int = 2
    max_nodes: int = 7

    def __post_init__(self) -> None:
        if self.min_support < 1:
            raise MiningError("min_support must be >= 1")
        if self.min_nodes < 2:
            raise MiningError("min_nodes must be >= 2")
        if self.min_nodes > self.max_nodes:
            raise MiningError("min_nodes must not exceed max_nodes")


@dataclass(frozen=True)
class FrequentSubgraph:
    pattern: ComputationGraph
    support: int
    supporting_graphs: frozenset[str]
    code: DfsCode


# ------------------------------------------------------------- canonical code

def canonical_code(pattern: ComputationGraph) -> DfsCode:
    """Minimum DFS code; equal for two patterns iff they are isomorphic.

    Requires a connected pattern (single nodes get a degenerate one-tuple
    code). Raises MiningError on disconnected patterns.
    """
    label = {n.id: n.api for n in pattern.nodes}
    if not pattern.nodes:
        raise MiningError("cannot encode an empty pattern")
    edges = list(pattern.edges)
    if not edges:
        if len(pattern.nodes) == 1:
            api = pattern.nodes[0].api
            return ((0, 0, api, 0, "", api),)
        raise MiningError("pattern is disconnected (isolated nodes)")

    incident: dict[int, list[int]] = {n.id: [] for n in pattern.nodes}
    for ei, e in enumerate(edges):
        incident[e.src].append(ei)
        if e.dst != e.src:
            incident[e.dst].append(ei)

    n_edges = len(edges)
    best: Optional[list[tuple]] = None

    def emit(ei: int, vi: int, vj: int, i: int, j: int) -> tuple:
        e = edges[ei]
        direction = 0 if e.src == vi else 1
        return (i, j, label[vi], direction, e.dst_param, label[vj])

    def grow(code: list, index: dict[int, int], rmpath: list[int],
             used: set[int]) -> None:
        nonlocal best
        if len(code) == n_edges:
            if best is None or code < best:
                best = list(code)
            return
        rmv = rmpath[-1]
        candidates: list[tuple[tuple, int, Optional[int], int]] = []
        # backward: unused edge between the rightmost vertex and a path vertex
        for ei in incident[rmv]:
            if ei in used:
                continue
            e = edges[ei]
            other = e.dst if e.src == rmv else e.src
            if other in index and other in rmpath[:-1]:
                candidates.append((emit(ei, rmv, other, index[rmv], index[other]),
                                   ei, None, -1))
        # forward: unused edge from any path vertex to an undiscovered vertex
        nxt = len(index)
        for depth, v in enumerate(rmpath):
            for ei in incident[v]:
                if ei in used:
                    continue
                e = edges[ei]
                other = e.dst if e.src == v else e.src
                if other not in index:
                    candidates.append((emit(ei, v, other, index[v], nxt),
                                       ei, other, depth))
        for tup, ei, newv, depth in candidates:
            code.append(tup)
            if best is not None and code > best[:len(code)]:
                code.pop()
                continue
            used.add(ei)
            if newv is None:
                grow(code, index, rmpath, used)
            else:
                index[newv] = nxt
                grow(code, index, rmpath[:depth + 1] + [newv], used)
                del index[newv]
            used.remove(ei)
            code.pop()

    for start in sorted(label):
        if not incident[start]:
            raise MiningError("pattern is disconnected (isolated nodes)")
        grow([], {start: 0}, [start], set())
    if best is None or len(best) != n_edges:
        raise MiningError("pattern is disconnected")
    return tuple(best)


def code_to_graph(code: DfsCode) -> ComputationGraph:
    """Rebuild the pattern with canonical node ids (DFS discovery order)."""
    if len(code) == 1 and code[0][0] == code[0][1] == 0 and code[0][4] == "":
        return make_graph([(0, code[0][2])], [], where="pattern")
    nodes: dict[int, str] = {}
    edges = []
    for i, j, li, direction, param, lj in code:
        nodes.setdefault(i, li)
        nodes.setdefault(j, lj)
        src, dst = (i, j) if direction == 0 else (j, i)
        edges.append((src, dst, param))
    return make_graph(sorted(nodes.items()), edges, where="pattern", connected=True)


# ------------------------------------------------------------------ embedding

class _HostIndex:
    def __init__(self, g: ComputationGraph):
        self.by_api: dict[str, list[int]] = {}
        for n in g.nodes:
            self.by_api.setdefault(n.api, []).append(n.id)
        self.out: dict[int, set[tuple[int, str]]] = {n.id: set() for n in g.nodes}
        self.in_: dict[int, set[tuple[int, str]]] = {n.id: set() for n in g.nodes}
        self.out_all: dict[int, list[Edge]] = {n.id: [] for n in g.nodes}
        self.in_all: dict[int, list[Edge]] = {n.id: [] for n in g.nodes}
        for e in g.edges:
            self.out[e.src].add((e.dst, e.dst_param))
            self.in_[e.dst].add((e.src, e.dst_param))
            self.out_all[e.src].append(e)
            self.in_all[e.dst].append(e)


def _match_order(pattern: ComputationGraph) -> list[int]:
    """Pattern nodes ordered so each (after the first of its component) touches
    an earlier one; components in sequence. Keeps the matcher edge-connected."""
    neigh: dict[int, set[int]] = {n.id: set() for n in pattern.nodes}
    for e in pattern.edges:
        neigh[e.src].add(e.dst)
        neigh[e.dst].add(e.src)
    order: list[int] = []
    placed: set[int] = set()
    for root in sorted(neigh):
        if root in placed:
            continue
        queue = [root]
        placed.add(root)
        while queue:
            u = queue.pop(0)
            order.append(u)
            for v in sorted(neigh[u]):
                if v not in placed:
                    placed.add(v)
                    queue.append(v)
    return order


def iter_embeddings(host: ComputationGraph, pattern: ComputationGraph,
                    host_index: Optional[_HostIndex] = None) -> Iterator[dict[int, int]]:
    """Injective maps pattern node -> host node preserving labels, edges,
    directions and destination-parameter labels."""
    hi = host_index or _HostIndex(host)
    order = _match_order(pattern)
    p_label = {n.id: n.api for n in pattern.nodes}
    p_out: dict[int, list[tuple[int, str]]] = {n.id: [] for n in pattern.nodes}
    p_in: dict[int, list[tuple[int, str]]] = {n.id: [] for n in pattern.nodes}
    for e in pattern.edges:
        p_out[e.src].append((e.dst, e.dst_param))
        p_in[e.dst].append((e.src, e.dst_param))

    mapping: dict[int, int] = {}
    used: set[int] = set()

    def consistent(p: int, h: int) -> bool:
        for q, param in p_out[p]:
            if q in mapping and (mapping[q], param) not in hi.out[h]:
                return False
        for q, param in p_in[p]:
            if q in mapping and (mapping[q], param) not in hi.in_[h]:
                return False
        return True

    def place(k: int) -> Iterator[dict[int, int]]:
        if k == len(order):
            yield dict(mapping)
            return
        p = order[k]
        for h in hi.by_api.get(p_label[p], ()):
            if h in used or not consistent(p, h):
                continue
            mapping[p] = h
            used.add(h)
            yield from place(k + 1)
            del mapping[p]
            used.remove(h)

    yield from place(0)


def contains_embedding(host: ComputationGraph, pattern: ComputationGraph) -> bool:
    return next(iter_embeddings(host, pattern), None) is not None


# ----------------------------------------------------------------------- mine

def _pattern_from(nodes: dict[int, str], edges: list[tuple[int, int, str]]) -> ComputationGraph:
    return ComputationGraph(
        nodes=tuple(Node(i, a) for i, a in sorted(nodes.items())),
        edges=tuple(Edge(s, d, p) for s, d, p in sorted(edges)),
    )


def _extensions(pattern: ComputationGraph, hosts: list[tuple[str, ComputationGraph, _HostIndex]],
                max_nodes: int) -> list[ComputationGraph]:
    """Every one-edge growth of pattern witnessed by an embedding in a host."""
    p_nodes = {n.id: n.api for n in pattern.nodes}
    p_edges = [(e.src, e.dst, e.dst_param) for e in pattern.edges]
    next_id = max(p_nodes) + 1
    seen: set[DfsCode] = set()
    out: list[ComputationGraph] = []
    for _, host, hi in hosts:
        for emb in iter_embeddings(host, pattern, hi):
            inv = {h: p for p, h in emb.items()}
            mapped = {(emb[s], emb[d], p) for s, d, p in p_edges}
            touched: set[tuple] = set()
            for h in emb.values():
                for e in hi.out_all[h]:
                    touched.add((e.src, e.dst, e.dst_param))
                for e in hi.in_all[h]:
                    touched.add((e.src, e.dst, e.dst_param))
            for hs, hd, hp in touched:
                if (hs, hd, hp) in mapped:
                    continue
                s_in, d_in = hs in inv, hd in inv
                if s_in and d_in:
                    cand = _pattern_from(p_nodes, p_edges + [(inv[hs], inv[hd], hp)])
                elif s_in and len(p_nodes) < max_nodes:
                    nodes = dict(p_nodes)
                    nodes[next_id] = host.api_of(hd)
                    cand = _pattern_from(nodes, p_edges + [(inv[hs], next_id, hp)])
                elif d_in and len(p_nodes) < max_nodes:
                    nodes = dict(p_nodes)
                    nodes[next_id] = host.api_of(hs)
                    cand = _pattern_from(nodes, p_edges + [(next_id, inv[hd], hp)])
                else:
                    continue
                code = canonical_code(cand)
                if code not in seen:
                    seen.add(code)
                    out.append(cand)
    return out


def mine(corpus: GraphCorpus, cfg: MiningConfig) -> list[FrequentSubgraph]:
    """All frequent connected patterns within the size bounds, one per
    isomorphism class, sorted by (support desc, node count asc, code)."""
    if len(corpus) == 0:
        raise MiningError("corpus is empty")
    hosts = [(gid, g, _HostIndex(g)) for gid, g in corpus]

    seeds: dict[DfsCode, ComputationGraph] = {}
    for _, g, _hi in hosts:
        apis = {n.id: n.api for n in g.nodes}
        for e in g.edges:
            cand = _pattern_from({0: apis[e.src], 1: apis[e.dst]}, [(0, 1, e.dst_param)])
            seeds.setdefault(canonical_code(cand), cand)

    visited: set[DfsCode] = set()
    results: list[FrequentSubgraph] = []

    def visit(pattern: ComputationGraph, code: DfsCode,
              parent_support: frozenset[str]) -> None:
        if code in visited:
            return
        visited.add(code)
        supporting = frozenset(
            gid for gid, g, hi in hosts
            if gid in parent_support and contains_embedding(g, pattern))
        if len(supporting) < cfg.min_support:
            return
        size = len(pattern.nodes)
        if cfg.min_nodes <= size <= cfg.max_nodes:
            results.append(FrequentSubgraph(
                pattern=code_to_graph(code),
                support=len(supporting),
                supporting_graphs=supporting,
                code=code,
            ))
        sup_hosts = [(gid, g, hi) for gid, g, hi in hosts if gid in supporting]
        for cand in _extensions(pattern, sup_hosts, cfg.max_nodes):
            visit(cand, canonical_code(cand), supporting)

    all_ids = frozenset(gid for gid, _, _ in hosts)
    for code in sorted(seeds):
        visit(seeds[code], code, all_ids)

    results.sort(key=lambda f: (-f.support, len(f.pattern.nodes), f.code))
    return results
