"""Concrete graph families: canopy tree, trees of tori (fixed ratio and
schedule driven), the multi-edge canopy G_{d,gamma}, and path subdivision.

Vertex addresses are plain tuples whose first entry is a tag:

* ``("C", i, j)``           canopy vertex at height ``j``
* ``("T", i, j, x)``        torus vertex over canopy vertex ``(i, j)``, ``x`` an n-tuple
* ``("P", lo, hi, pos)``    interior vertex of the path replacing the edge
                            ``lo -- hi`` (``lo`` the lower-level endpoint),
                            ``pos`` in ``1..m-1`` counted from ``lo``
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from enum import Enum

from .analytics import Schedule, m_gamma
from .errors import AddressError, ConfigError


class Family(str, Enum):
    CANOPY = "CanopyTree"
    TORI = "TreeOfTori"
    TORI_SCHEDULE = "TreeOfToriSchedule"
    MULTI_EDGE = "MultiEdgeCanopy"
    SUBDIVIDED = "SubdividedTreeOfTori"
    H = "HGraph"
    H_TILDE = "HTildeGraph"

    @classmethod
    def parse(cls, text) -> "Family":
        if isinstance(text, cls):
            return text
        for f in cls:
            if text in (f.value, f.name, f.name.lower()):
                return f
        raise ConfigError(f"unknown family {text!r}; expected one of {[f.value for f in cls]}")


TORUS_FAMILIES = (Family.TORI, Family.TORI_SCHEDULE, Family.SUBDIVIDED, Family.H, Family.H_TILDE)


@dataclass(frozen=True)
class ConstructionSpec:
    """Parameters of one graph family.

    For the subdivided family and the H graphs the torus side is ``r**level``
    unless ``r_schedule`` is given, in which case it is ``2**r_schedule(level)``.
    """

    family: Family
    d: int = 3
    n: int = 1
    r: int = 2
    gamma: float = 0.0
    q: float = 0.6
    M: int = 1
    m_schedule: Schedule | None = None
    r_schedule: Schedule | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if self.d < 2:
            raise ConfigError("d must be >= 2")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.family in (Family.TORI,) and self.r < 2:
            raise ConfigError("r must be >= 2")
        if self.family == Family.TORI_SCHEDULE and self.r_schedule is None:
            raise ConfigError("TreeOfToriSchedule needs an r schedule")
        if self.family in (Family.SUBDIVIDED, Family.H, Family.H_TILDE) and self.m_schedule is None:
            raise ConfigError(f"{self.family.value} needs an m schedule")
        if not 0 < self.q < 1:
            raise ConfigError("q must lie in (0, 1)")
        if self.M < 1:
            raise ConfigError("M must be >= 1")

    # ------------------------------------------------------------ geometry

    def side(self, level: int) -> int:
        """Torus side at ``level``."""
        if self.r_schedule is not None:
            return 2 ** self.r_schedule(level)
        return self.r ** level

    def m(self, level: int) -> int:
        """Length of the path replacing an edge from ``level`` to ``level + 1``."""
        if self.m_schedule is None:
            return 1
        return self.m_schedule(level)

    def multiplicity(self, level: int) -> int:
        """Parallel-edge count from height ``level`` to ``level + 1``."""
        if self.family == Family.MULTI_EDGE:
            return m_gamma(level, self.gamma)
        return 1

    def torus_count(self, level: int) -> int:
        return self.side(level) ** self.n

    @property
    def has_tori(self) -> bool:
        return self.family in TORUS_FAMILIES

    def base(self) -> "ConstructionSpec":
        """The underlying graph G of an H / H-tilde spec."""
        return replace(self, family=Family.SUBDIVIDED)

    def to_dict(self) -> dict:
        return {
            "family": self.family.value, "d": self.d, "n": self.n, "r": self.r,
            "gamma": self.gamma, "q": self.q, "M": self.M,
            "m_schedule": None if self.m_schedule is None else str(self.m_schedule),
            "r_schedule": None if self.r_schedule is None else str(self.r_schedule),
            "seed": self.seed,
        }


# ---------------------------------------------------------------- spec helpers


def canopy(d: int = 3) -> ConstructionSpec:
    return ConstructionSpec(Family.CANOPY, d=d)


def multi_edge(d: int = 3, gamma: float = 0.0) -> ConstructionSpec:
    return ConstructionSpec(Family.MULTI_EDGE, d=d, gamma=gamma)


def tree_of_tori(d: int, r: int, n: int = 1) -> ConstructionSpec:
    return ConstructionSpec(Family.TORI, d=d, r=r, n=n)


def tree_of_tori_schedule(d: int, r_schedule: Schedule, n: int = 2) -> ConstructionSpec:
    return ConstructionSpec(Family.TORI_SCHEDULE, d=d, n=n, r_schedule=r_schedule)


def subdivided(d: int = 5, r: int = 2, n: int = 2, m_schedule: Schedule | None = None,
               q: float = 0.6, r_schedule: Schedule | None = None) -> ConstructionSpec:
    """G(d, r, m); ``m_schedule`` defaults to ``m_pc(q)``."""
    if m_schedule is None:
        m_schedule = Schedule("m_pc", q)
    return ConstructionSpec(Family.SUBDIVIDED, d=d, r=r, n=n, q=q, m_schedule=m_schedule,
                            r_schedule=r_schedule)


def section4_graph(q: float = 0.6, d: int = 100) -> ConstructionSpec:
    """The tree of tori with r_section4 sides and m_section4 paths (dimension 2)."""
    return ConstructionSpec(Family.SUBDIVIDED, d=d, n=2, q=q,
                            m_schedule=Schedule("m_section4", q),
                            r_schedule=Schedule("r_section4"))


def h_graph(q: float = 0.6, seed: int = 0, d: int = 100, M: int = 1) -> ConstructionSpec:
    fam = Family.H if M == 1 else Family.H_TILDE
    return ConstructionSpec(fam, d=d, n=2, q=q, M=M, seed=seed,
                            m_schedule=Schedule("m_section4", q),
                            r_schedule=Schedule("r_section4"))


# ---------------------------------------------------------------- canopy tree


def canopy_parent(d: int, v):
    _, i, j = v
    return ("C", i // d, j + 1)


def canopy_children(d: int, v) -> list:
    _, i, j = v
    if j == 0:
        return []
    return [("C", d * i + c, j - 1) for c in range(d)]


def multi_edge_multiplicity(gamma: float, level: int) -> int:
    return m_gamma(level, gamma)


def canopy_neighbors(spec: ConstructionSpec, v) -> list:
    _, _, j = v
    out = [(c, spec.multiplicity(j - 1)) for c in canopy_children(spec.d, v)]
    out.append((canopy_parent(spec.d, v), spec.multiplicity(j)))
    return out


# ---------------------------------------------------------------- trees of tori


def _torus_internal(x: tuple, s: int) -> list:
    if s == 1:
        return []
    out = []
    for a in range(len(x)):
        steps = (1,) if s == 2 else (1, -1)
        for st in steps:
            y = list(x)
            y[a] = (y[a] + st) % s
            out.append(tuple(y))
    return out


def down_coords(x: tuple, child_side: int) -> tuple:
    return tuple(c % child_side for c in x)


def up_coords(x: tuple, side: int, parent_side: int) -> list:
    """All preimages of ``x`` under reduction from ``parent_side`` to ``side``."""
    k = parent_side // side
    return [tuple(c + t * side for c, t in zip(x, ts))
            for ts in itertools.product(range(k), repeat=len(x))]


def tori_neighbors(spec: ConstructionSpec, v) -> list:
    """Neighbors of a torus vertex in the (unsubdivided) tree of tori."""
    _, i, j, x = v
    d = spec.d
    s = spec.side(j)
    out = [("T", i, j, y) for y in _torus_internal(x, s)]
    if j > 0:
        cs = spec.side(j - 1)
        xd = down_coords(x, cs)
        out.extend(("T", d * i + c, j - 1, xd) for c in range(d))
    ps = spec.side(j + 1)
    out.extend(("T", i // d, j + 1, y) for y in up_coords(x, s, ps))
    return out


def is_inter_level(u, v) -> bool:
    return u[2] != v[2]


def subdivided_neighbors(spec: ConstructionSpec, v) -> list:
    """Neighbors in the graph where each level-l inter-level edge is a path of m(l) edges."""
    if v[0] == "P":
        _, lo, hi, pos = v
        m = spec.m(lo[2])
        prev = lo if pos == 1 else ("P", lo, hi, pos - 1)
        nxt = hi if pos == m - 1 else ("P", lo, hi, pos + 1)
        return [(prev, 1), (nxt, 1)]
    out = []
    j = v[2]
    for u in tori_neighbors(spec, v):
        if u[2] == j:
            out.append((u, 1))
            continue
        lo, hi = (u, v) if u[2] < j else (v, u)
        m = spec.m(lo[2])
        if m == 1:
            out.append((u, 1))
        elif u[2] < j:
            out.append((("P", lo, hi, m - 1), 1))
        else:
            out.append((("P", lo, hi, 1), 1))
    return out


def subdivide_inter_level(spec: ConstructionSpec):
    """Neighbor function of the subdivided graph view of ``spec``."""
    return lambda v: subdivided_neighbors(spec, v)


# ---------------------------------------------------------------- validation


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def validate_torus_vertex(spec: ConstructionSpec, v):
    if not (isinstance(v, tuple) and len(v) == 4 and v[0] == "T"):
        raise AddressError(f"{v!r} is not a torus vertex address")
    _, i, j, x = v
    if not (_is_int(i) and _is_int(j) and j >= 0):
        raise AddressError(f"bad tree coordinates in {v!r}")
    if not (isinstance(x, tuple) and len(x) == spec.n):
        raise AddressError(f"{v!r} needs {spec.n} torus coordinates")
    s = spec.side(j)
    if not all(_is_int(c) and 0 <= c < s for c in x):
        raise AddressError(f"coordinates of {v!r} must lie in [0, {s})")


def validate(spec: ConstructionSpec, v):
    """Raise :class:`AddressError` unless ``v`` is a vertex of the (non-H) ``spec``."""
    fam = spec.family
    if fam in (Family.CANOPY, Family.MULTI_EDGE):
        if not (isinstance(v, tuple) and len(v) == 3 and v[0] == "C"
                and _is_int(v[1]) and _is_int(v[2]) and v[2] >= 0):
            raise AddressError(f"{v!r} is not a canopy vertex address")
        return
    if fam in (Family.TORI, Family.TORI_SCHEDULE):
        validate_torus_vertex(spec, v)
        return
    if fam == Family.SUBDIVIDED:
        if isinstance(v, tuple) and v and v[0] == "P":
            if len(v) != 4:
                raise AddressError(f"{v!r} is not a path vertex address")
            _, lo, hi, pos = v
            validate_torus_vertex(spec, lo)
            validate_torus_vertex(spec, hi)
            if hi[2] != lo[2] + 1 or hi[1] != lo[1] // spec.d:
                raise AddressError(f"{v!r}: endpoints are not on adjacent levels")
            if down_coords(hi[3], spec.side(lo[2])) != lo[3]:
                raise AddressError(f"{v!r}: endpoints are not adjacent")
            if not (_is_int(pos) and 1 <= pos < spec.m(lo[2])):
                raise AddressError(f"{v!r}: position out of range 1..{spec.m(lo[2]) - 1}")
            return
        validate_torus_vertex(spec, v)
        return
    raise AddressError(f"family {fam.value} is validated by the hierarchy module")
