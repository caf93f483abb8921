"""Lazy graph interface shared by every construction.

``neighbors(spec, v)`` returns the full neighbor multiset of ``v`` as
``(u, multiplicity)`` pairs; everything else (degrees, balls, edge ids) is
derived from it.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

from . import constructions as cons
from .constructions import ConstructionSpec, Family
from .errors import AddressError, BudgetError


def neighbors(spec: ConstructionSpec, v, check: bool = True) -> list:
    fam = spec.family
    if fam in (Family.H, Family.H_TILDE):
        from . import hierarchy

        return hierarchy.neighbors(spec, v, check=check)
    if check:
        cons.validate(spec, v)
    if fam in (Family.CANOPY, Family.MULTI_EDGE):
        return cons.canopy_neighbors(spec, v)
    if fam in (Family.TORI, Family.TORI_SCHEDULE):
        return [(u, 1) for u in cons.tori_neighbors(spec, v)]
    if fam == Family.SUBDIVIDED:
        return cons.subdivided_neighbors(spec, v)
    raise AddressError(f"unsupported family {fam}")


def degree(spec: ConstructionSpec, v, check: bool = True) -> int:
    return sum(m for _, m in neighbors(spec, v, check=check))


def level(v) -> int:
    """|v|: canopy height, torus level, the lower level of a path, or |v1| in H."""
    tag = v[0]
    if tag == "C" or tag == "T":
        return v[2]
    if tag == "P":
        return v[1][2]
    if tag == "H":
        return level(v[1])
    if tag == "Q":
        return level(v[1])
    raise AddressError(f"unknown vertex tag in {v!r}")


def height_key(spec: ConstructionSpec, v) -> float:
    """Level, refined to ``l + pos/m(l)`` on path interiors."""
    if v[0] == "P":
        lv = v[1][2]
        return lv + v[3] / spec.m(lv)
    return float(level(v))


def edge_id(u, v, slot: int = 0) -> tuple:
    return (u, v, slot) if u <= v else (v, u, slot)


@dataclass
class Ball:
    center: tuple
    radius: int
    vertices: list  # sorted
    dist: dict = field(repr=False)
    edges: list = field(repr=False)  # sorted EdgeIds (u, v, slot), u <= v

    def __len__(self):
        return len(self.vertices)

    def adjacency(self) -> dict:
        adj = {v: [] for v in self.vertices}
        for u, v, _ in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def index(self) -> dict:
        return {v: k for k, v in enumerate(self.vertices)}

    def to_json(self) -> str:
        return json.dumps({
            "center": _encode(self.center),
            "radius": self.radius,
            "vertices": [_encode(v) for v in self.vertices],
            "distances": [self.dist[v] for v in self.vertices],
            "edges": [[_encode(u), _encode(v), s] for u, v, s in self.edges],
        }, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Ball":
        obj = json.loads(text)
        verts = [_decode(v) for v in obj["vertices"]]
        return cls(_decode(obj["center"]), obj["radius"], verts,
                   dict(zip(verts, obj["distances"])),
                   [(_decode(u), _decode(v), s) for u, v, s in obj["edges"]])


def _encode(x):
    if isinstance(x, tuple):
        return [_encode(y) for y in x]
    return x


def _decode(x):
    if isinstance(x, list):
        return tuple(_decode(y) for y in x)
    return x


def ball(spec: ConstructionSpec, center, radius: int, budget: int | None = None,
         nbr=None) -> Ball:
    """BFS ball of ``radius`` around ``center``.

    ``budget`` caps the number of vertices; exceeding it raises
    :class:`BudgetError` whose ``partial`` is the ball built so far
    (complete up to the layer being expanded).
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if nbr is None:
        neighbors(spec, center)  # validates the center
        nbr = lambda v: neighbors(spec, v, check=False)  # noqa: E731
    dist = {center: 0}
    adj = {}
    queue = deque([center])
    while queue:
        v = queue.popleft()
        dv = dist[v]
        nb = nbr(v)
        adj[v] = nb
        if dv == radius:
            continue
        for u, _ in nb:
            if u not in dist:
                dist[u] = dv + 1
                queue.append(u)
                if budget is not None and len(dist) > budget:
                    partial = _finish(center, dv, dist, adj, nbr, limit=dv)
                    raise BudgetError(f"ball of radius {radius} exceeds {budget} vertices",
                                      partial=partial)
    return _finish(center, radius, dist, adj, nbr, limit=radius)


def _finish(center, radius, dist, adj, nbr, limit) -> Ball:
    verts = sorted(v for v, dv in dist.items() if dv <= limit)
    inside = set(verts)
    edges = []
    for v in verts:
        nb = adj.get(v)
        if nb is None:
            nb = nbr(v)
        for u, m in nb:
            if u in inside and v <= u:
                if u == v:
                    continue
                edges.extend((v, u, s) for s in range(m))
    edges.sort()
    return Ball(center, radius, verts, {v: dist[v] for v in verts}, edges)
