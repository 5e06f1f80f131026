"""Supernet data model: nodes, multi-choice edges, and subgraph indices.

A supernet is a labelled multigraph whose edges each carry an ordered list of
candidate choices; fixing one choice per edge selects a subgraph. Edge
identity is positional (1-based) so that the parameter block attached to edge
t binds unambiguously. Parallel edges and self-loops are allowed. Direction
is kept as metadata only; nothing downstream distinguishes u from v beyond
slot naming.

Supernets are immutable after construction and safe to share across threads.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterator

from .errors import EnumerationCapError, SupernetFormatError
from .utils import canonical_json, sha256_text

# One pick per edge, 1-based: picks[t-1] in {1..C_t}.
SubgraphIndex = tuple

DEFAULT_ENUMERATION_CAP = 10**6


@dataclass(frozen=True)
class Edge:
    id: int  # 1-based position in the edge list
    u: str
    v: str
    choices: tuple[str, ...]

    def __post_init__(self):
        if len(self.choices) == 0:
            raise SupernetFormatError(f"edge {self.id}: empty choice list")
        if len(set(self.choices)) != len(self.choices):
            raise SupernetFormatError(f"edge {self.id}: duplicate choice labels")

    @property
    def num_choices(self) -> int:
        return len(self.choices)

    @property
    def is_self_loop(self) -> bool:
        return self.u == self.v


@dataclass(frozen=True)
class Supernet:
    name: str
    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]

    def __post_init__(self):
        if len(self.nodes) == 0:
            raise SupernetFormatError("supernet has no nodes")
        if len(set(self.nodes)) != len(self.nodes):
            raise SupernetFormatError("duplicate node identifiers")
        if len(self.edges) == 0:
            raise SupernetFormatError("supernet has no edges")
        known = set(self.nodes)
        for pos, e in enumerate(self.edges, start=1):
            if e.id != pos:
                raise SupernetFormatError(
                    f"edge at position {pos} carries id {e.id}; ids must be 1..T in order"
                )
            for endpoint in (e.u, e.v):
                if endpoint not in known:
                    raise SupernetFormatError(
                        f"edge {e.id}: unknown endpoint {endpoint!r}"
                    )

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def choice_counts(self) -> tuple[int, ...]:
        return tuple(e.num_choices for e in self.edges)

    def edge(self, edge_id: int) -> Edge:
        if not 1 <= edge_id <= len(self.edges):
            raise SupernetFormatError(f"no edge with id {edge_id}")
        return self.edges[edge_id - 1]

    def node_position(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.nodes)}


def supernet_to_dict(s: Supernet) -> dict:
    return {
        "name": s.name,
        "nodes": list(s.nodes),
        "edges": [
            {"u": e.u, "v": e.v, "choices": list(e.choices)} for e in s.edges
        ],
    }


def serialize_supernet(s: Supernet) -> str:
    return json.dumps(supernet_to_dict(s), indent=2)


def supernet_sha256(s: Supernet) -> str:
    return sha256_text(canonical_json(supernet_to_dict(s)))


def load_supernet(document: str | dict) -> Supernet:
    """Parse a supernet from JSON text or an already-decoded mapping.

    Schema: {"name": str, "nodes": [str], "edges": [{"u","v","choices"}]}.
    Array order of "edges" defines the edge ids 1..T.
    """
    if isinstance(document, str):
        try:
            raw = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SupernetFormatError(f"not valid JSON: {exc}") from exc
    else:
        raw = document
    if not isinstance(raw, dict):
        raise SupernetFormatError("top-level value must be an object")
    try:
        name = raw["name"]
        nodes = raw["nodes"]
        edges_raw = raw["edges"]
    except KeyError as exc:
        raise SupernetFormatError(f"missing required key: {exc.args[0]}") from exc
    if not isinstance(nodes, list) or not all(isinstance(n, str) for n in nodes):
        raise SupernetFormatError('"nodes" must be a list of strings')
    if not isinstance(edges_raw, list):
        raise SupernetFormatError('"edges" must be a list')
    edges = []
    for pos, entry in enumerate(edges_raw, start=1):
        if not isinstance(entry, dict):
            raise SupernetFormatError(f"edge {pos}: not an object")
        try:
            u, v, choices = entry["u"], entry["v"], entry["choices"]
        except KeyError as exc:
            raise SupernetFormatError(
                f"edge {pos}: missing key {exc.args[0]!r}"
            ) from exc
        if not isinstance(choices, list) or not all(
            isinstance(c, str) for c in choices
        ):
            raise SupernetFormatError(f"edge {pos}: choices must be a list of strings")
        edges.append(Edge(id=pos, u=u, v=v, choices=tuple(choices)))
    return Supernet(name=str(name), nodes=tuple(nodes), edges=tuple(edges))


def load_supernet_file(path) -> Supernet:
    with open(path, "r", encoding="utf-8") as fh:
        return load_supernet(fh.read())


def space_size(s: Supernet) -> int:
    """Number of subgraphs, prod_t C_t, as an exact Python integer."""
    return math.prod(e.num_choices for e in s.edges)


def validate_index(s: Supernet, idx: SubgraphIndex) -> None:
    if len(idx) != s.num_edges:
        raise SupernetFormatError(
            f"index length {len(idx)} != number of edges {s.num_edges}"
        )
    for e, pick in zip(s.edges, idx):
        if not 1 <= pick <= e.num_choices:
            raise SupernetFormatError(
                f"edge {e.id}: pick {pick} outside 1..{e.num_choices}"
            )


def enumerate_indices(
    s: Supernet, cap: int = DEFAULT_ENUMERATION_CAP
) -> Iterator[SubgraphIndex]:
    """All subgraph indices in lexicographic order (edge 1 most significant)."""
    size = space_size(s)
    if size > cap:
        raise EnumerationCapError(
            f"search space has {size} indices, above the enumeration cap {cap}"
        )
    ranges = [range(1, e.num_choices + 1) for e in s.edges]
    return itertools.product(*ranges)


def incident_edges(s: Supernet, node: str) -> list[tuple[int, str]]:
    """Every (edge id, slot) whose endpoint is `node`; slot is "first"/"second".

    Self-loops report both slots, so each edge always contributes exactly two
    slot incidences across the whole node set.
    """
    if node not in set(s.nodes):
        raise SupernetFormatError(f"unknown node {node!r}")
    out = []
    for e in s.edges:
        if e.u == node:
            out.append((e.id, "first"))
        if e.v == node:
            out.append((e.id, "second"))
    return out


def _default_choices(num_choices: int) -> tuple[str, ...]:
    return tuple(f"op{i}" for i in range(1, num_choices + 1))


def make_chain(num_edges: int, num_choices: int, name: str = "chain") -> Supernet:
    """Linear supernet: nodes n0..nT, edge t joins n(t-1) and n(t)."""
    nodes = tuple(f"n{i}" for i in range(num_edges + 1))
    edges = tuple(
        Edge(id=t, u=f"n{t-1}", v=f"n{t}", choices=_default_choices(num_choices))
        for t in range(1, num_edges + 1)
    )
    return Supernet(name=name, nodes=nodes, edges=edges)


def make_ring(num_edges: int, num_choices: int, name: str = "ring") -> Supernet:
    """Cyclic supernet: the last edge closes back onto the first node."""
    if num_edges < 2:
        raise SupernetFormatError("a ring needs at least 2 edges")
    nodes = tuple(f"n{i}" for i in range(num_edges))
    edges = tuple(
        Edge(
            id=t,
            u=f"n{t-1}",
            v=f"n{t % num_edges}",
            choices=_default_choices(num_choices),
        )
        for t in range(1, num_edges + 1)
    )
    return Supernet(name=name, nodes=nodes, edges=edges)


def make_star(num_leaves: int, num_choices: int, name: str = "star") -> Supernet:
    """Hub-and-spoke supernet: edge t joins the hub to leaf t."""
    if num_leaves < 1:
        raise SupernetFormatError("a star needs at least 1 leaf")
    nodes = ("hub",) + tuple(f"leaf{i}" for i in range(1, num_leaves + 1))
    edges = tuple(
        Edge(id=t, u="hub", v=f"leaf{t}", choices=_default_choices(num_choices))
        for t in range(1, num_leaves + 1)
    )
    return Supernet(name=name, nodes=nodes, edges=edges)
