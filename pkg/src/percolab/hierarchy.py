"""Hierarchical partition of the 4-regular plane tree and the composite graphs
H and H-tilde(M).

Plane tree S
    Vertices are reduced words over ``{0,1,2,3}`` (no letter repeated twice in
    a row); the origin is ``()``. The edge ``w -- w+(a,)`` carries label ``a``
    at both ends and the cyclic order at every vertex is ``0,1,2,3``.

Copies of S_n
    The deterministic partition V_n is indexed by keys
    ``(parity, c_1, ..., c_{n-1})``. The key of length ``n`` names a copy of
    the bipartite plane tree S_n whose vertex set is the V_{n-1} class
    ``key[:-1]`` (all of S when ``n = 1``) and whose primary vertices form the
    V_n class ``key``. Colors of a copy are ``0..F_{n-1}-1`` internally and are
    fixed by one seeded cyclic shift per copy.

Intermediated partition
    A class of the randomly intermediated partition is addressed by its path
    in the tree D (one child index per level).
"""
from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import AddressError, AuditError, ConfigError
from .prf import seeded, shuffled

# ---------------------------------------------------------------- the plane tree S


def s_neighbors(w: tuple) -> list:
    """The 4 neighbors of ``w`` in label (clockwise) order."""
    last = w[-1] if w else -1
    return [w[:-1] if a == last else w + (a,) for a in range(4)]


def s_step(x: tuple, t: tuple) -> tuple:
    """Next vertex on the S-geodesic from ``x`` to ``t`` (``x != t``)."""
    k = len(x)
    if len(t) > k and t[:k] == x:
        return t[: k + 1]
    return x[:-1]


def s_dist(u: tuple, v: tuple) -> int:
    k = 0
    for a, b in zip(u, v):
        if a != b:
            break
        k += 1
    return len(u) + len(v) - 2 * k


def is_reduced(w) -> bool:
    return (isinstance(w, tuple) and all(isinstance(a, int) and 0 <= a < 4 for a in w)
            and all(w[i] != w[i + 1] for i in range(len(w) - 1)))


def s_sphere(radius: int) -> list:
    """Vertices of S at exactly ``radius``, in lexicographic order."""
    layer = [()]
    for _ in range(radius):
        layer = [w + (a,) for w in layer for a in range(4) if not w or a != w[-1]]
    return layer


def s_ball(radius: int) -> list:
    """Layers 0..radius of S; children of a vertex are contiguous in the next layer."""
    layers = [[()]]
    for _ in range(radius):
        layers.append([w + (a,) for w in layers[-1] for a in range(4) if not w or a != w[-1]])
    return layers


# ---------------------------------------------------------------- F, a, b


@dataclass(frozen=True)
class FSequence:
    F: tuple
    a: tuple
    b: tuple


def _ceil_log4(x: int) -> int:
    a = 0
    while 4 ** a < x:
        a += 1
    return a


@lru_cache(maxsize=None)
def f_sequence(limit: int = 10) -> FSequence:
    """F_0..F_limit with F_0 = F_1 = 4, F_{n+1} = F_n (F_{n-1} - 1); exact integers."""
    if limit < 2:
        raise ValueError("limit must be >= 2")
    F = [4, 4]
    while len(F) <= limit:
        F.append(F[-1] * (F[-2] - 1))
    a = [_ceil_log4(f) for f in F]
    b = list(np.cumsum(a).tolist())
    return FSequence(tuple(F), tuple(a), tuple(int(x) for x in b))


def c_index(k: int) -> int:
    """Largest n with b_n <= k (k >= 1)."""
    fs = f_sequence(12)
    n = 0
    while n + 1 < len(fs.b) and fs.b[n + 1] <= k:
        n += 1
    return n


def isolation_bound(k: int) -> int:
    """2 floor(log2 k - 1), clamped below at 0."""
    if k <= 2:
        return 0
    return max(0, 2 * math.floor(math.log2(k) - 1))


# ---------------------------------------------------------------- partition engine


class Partition:
    """Seeded hierarchical partition of S with lazily computed colorings.

    All quantities are pure functions of ``seed``; the memo tables only cache.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.fs = f_sequence(12)
        self._nbrs: dict = {}
        self._color: dict = {}
        self._anchor: dict = {}
        self._groups: dict = {}

    # -- copies of S_n ---------------------------------------------------

    def colors(self, key: tuple) -> int:
        """Number of colors used on the copy ``key`` (F_{n-1})."""
        return self.fs.F[len(key) - 1]

    def is_primary(self, key: tuple, x: tuple) -> bool:
        if len(key) == 1:
            return len(x) % 2 == key[0]
        parent = key[:-1]
        return self.is_primary(parent, x) and self.color(parent, x) == key[-1]

    def nbrs(self, key: tuple, x: tuple) -> tuple:
        """Neighbors of ``x`` in the copy ``key`` of S_n, in cyclic order."""
        if len(key) == 1:
            return tuple(s_neighbors(x))
        mk = (key, x)
        got = self._nbrs.get(mk)
        if got is not None:
            return got
        parent, i = key[:-1], key[-1]
        F = self.colors(parent)
        c = self.color(parent, x)
        out = []
        for s in self.nbrs(parent, x):
            L = self.nbrs(parent, s)
            h = L.index(x)
            if c == i:
                out.extend(L[(h + t) % F] for t in range(1, F))
            else:
                out.append(L[(h + i - c) % F])
        got = tuple(out)
        self._nbrs[mk] = got
        return got

    def step(self, key: tuple, x: tuple, t: tuple) -> tuple:
        """Next vertex from ``x`` towards ``t`` in the copy ``key``."""
        if len(key) == 1:
            return s_step(x, t)
        parent, i = key[:-1], key[-1]
        s = self.step(parent, x, t)
        y = self.step(parent, s, t)
        if self.color(parent, x) == i or self.color(parent, y) == i:
            return y
        L = self.nbrs(parent, s)
        F = self.colors(parent)
        return L[(L.index(x) + i - self.color(parent, x)) % F]

    def distance(self, key: tuple, u: tuple, v: tuple) -> int:
        k = 0
        while u != v:
            u = self.step(key, u, v)
            k += 1
        return k

    def anchor(self, key: tuple) -> tuple:
        """Canonical primary vertex of the copy ``key``."""
        got = self._anchor.get(key)
        if got is not None:
            return got
        self._check_key(key)
        if len(key) == 1:
            got = () if key[0] == 0 else (0,)
        else:
            parent, i = key[:-1], key[-1]
            a = self.anchor(parent)
            c = self.color(parent, a)
            if c == i:
                got = a
            else:
                s = self.nbrs(parent, a)[0]
                L = self.nbrs(parent, s)
                got = L[(L.index(a) + i - c) % self.colors(parent)]
        self._anchor[key] = got
        return got

    def _check_key(self, key: tuple):
        ok = len(key) >= 1 and key[0] in (0, 1)
        for j in range(1, len(key)):
            ok = ok and isinstance(key[j], int) and 0 <= key[j] < self.colors(key[:j])
        if not ok:
            raise AddressError(f"{key!r} is not a copy key")

    def shift(self, key: tuple) -> int:
        return seeded(self.seed, "shift", key) % self.colors(key)

    def color(self, key: tuple, x: tuple) -> int:
        """Color of the primary vertex ``x`` of copy ``key`` (0-based)."""
        mk = (key, x)
        got = self._color.get(mk)
        if got is not None:
            return got
        a = self.anchor(key)
        F = self.colors(key)
        chain = []
        cur = x
        while True:
            got = self._color.get((key, cur))
            if got is not None:
                break
            if cur == a:
                got = self.shift(key)
                self._color[(key, cur)] = got
                break
            s = self.step(key, cur, a)
            y = self.step(key, s, a)
            chain.append((cur, s, y))
            cur = y
        for cur, s, y in reversed(chain):
            L = self.nbrs(key, s)
            got = (got + L.index(cur) - L.index(y)) % F
            self._color[(key, cur)] = got
        return self._color[mk]

    def v_key(self, x: tuple, n: int) -> tuple:
        """Key of the V_n class containing ``x`` (n >= 1)."""
        key = (len(x) % 2,)
        while len(key) < n:
            key = key + (self.color(key, x),)
        return key

    # -- intermediation --------------------------------------------------

    def grouping(self, addr: tuple, n: int):
        """Grouping tree between the V_{n-1} class at ``addr`` and its V_n children.

        Returns ``(paths, free_depth)`` where ``paths[c]`` is the tuple of
        ``a_n`` digits leading to child color ``c`` and ``free_depth`` is the
        number of leading digits that are forced (singleton nodes).
        """
        mk = (addr, n)
        got = self._groups.get(mk)
        if got is not None:
            return got
        fs = self.fs
        c = 2 if n == 1 else fs.F[n - 2]
        levels = fs.a[n] - 1
        nodes = list(range(c))  # each node: a leaf int or a tuple of nodes
        for t in range(levels):
            order = shuffled(self.seed, nodes, "group", addr, n, t)
            nodes = [tuple(order[q:q + 4]) for q in range(0, len(order), 4)]
        top = shuffled(self.seed, nodes, "top", addr, n)
        if len(top) > 4:
            raise AuditError(f"grouping at {addr} has {len(top)} top children")
        paths = {}

        def walk(node, prefix):
            if isinstance(node, int):
                paths[node] = prefix
                return
            for idx, child in enumerate(node):
                walk(child, prefix + (idx,))

        walk(tuple(top), ())
        free = 0
        node = tuple(top)
        while not isinstance(node, int) and len(node) == 1:
            free += 1
            node = node[0]
        got = (paths, free, tuple(top))
        self._groups[mk] = got
        return got

    def class_of(self, x: tuple, k: int) -> tuple:
        """Address of the class of ``x`` in the k-th intermediated partition."""
        if k <= 0:
            return ()
        path = [0]
        if k == 1:
            return (0,)
        fs = self.fs
        key = None
        n = 1
        while len(path) < k:
            # descend from the V_{n-1} class at ``path`` to V_n
            paths, free, _ = self.grouping(tuple(path), n)
            need = k - len(path)
            if need <= free:
                path.extend([0] * need)
                break
            if n == 1:
                col = len(x) % 2
                key = (col,)
            else:
                col = self.color(key, x)
                key = key + (col,)
            digits = paths[col]
            path.extend(digits[:need])
            n += 1
        return tuple(path)

    def child_count(self, W: tuple) -> int:
        """Number of children of the class ``W`` in D."""
        if len(W) == 0:
            return 1
        fs = self.fs
        n = 1
        while fs.b[n] <= len(W):
            n += 1
        # W lies strictly above V_n: descend from its V_{n-1} ancestor
        start = fs.b[n - 1]
        _, _, top = self.grouping(W[:start], n)
        node = top
        for digit in W[start:]:
            if digit >= len(node):
                raise AddressError(f"{W!r} is not a class address")
            node = node[digit]
        if isinstance(node, int):
            raise AddressError(f"{W!r} is not a class address")
        return len(node)

    def valid_class(self, W: tuple) -> bool:
        if not isinstance(W, tuple):
            return False
        for j in range(len(W)):
            try:
                if not (isinstance(W[j], int) and 0 <= W[j] < self.child_count(W[:j])):
                    return False
            except AddressError:
                return False
        return True

    def contains(self, W: tuple, x: tuple) -> bool:
        return self.class_of(x, len(W)) == W


@lru_cache(maxsize=16)
def partition(seed: int) -> Partition:
    return Partition(seed)


def class_of(seed: int, v2: tuple, k: int) -> tuple:
    if not is_reduced(v2):
        raise AddressError(f"{v2!r} is not a reduced word over 0..3")
    return partition(seed).class_of(v2, k)


def coloring(seed: int, key: tuple, region) -> dict:
    """Colors ``1..F`` of the primary vertices of copy ``key`` found in ``region``."""
    P = partition(seed)
    region = list(region)
    _check_connected(P, key, region)
    return {x: P.color(key, x) + 1 for x in region if P.is_primary(key, x)}


def _check_connected(P: Partition, key: tuple, region: list):
    if not region:
        return
    inside = set(region)
    seen = {region[0]}
    todo = [region[0]]
    while todo:
        v = todo.pop()
        for u in P.nbrs(key, v):
            if u in inside and u not in seen:
                seen.add(u)
                todo.append(u)
    if len(seen) != len(inside):
        raise AddressError("coloring region is not connected in the copy")


# ---------------------------------------------------------------- isolation audit


def _min_same_class_distance(layers: list, cls: np.ndarray, n_classes: int):
    """Exact minimum S-distance between distinct same-class vertices of a ball.

    ``cls`` lists class indices in layer order. Bottom-up DP on the rooted
    tree: ``best[z, c]`` is the smallest depth below ``z`` of a class-``c``
    vertex in the subtree of ``z``.
    """
    INF = np.int32(1 << 20)
    sizes = [len(layer) for layer in layers]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    best_child = None
    answer = int(INF)
    for depth in range(len(layers) - 1, -1, -1):
        lo, hi = offsets[depth], offsets[depth + 1]
        nz = hi - lo
        own = np.full((nz, n_classes), INF, dtype=np.int32)
        own[np.arange(nz), cls[lo:hi]] = 0
        if best_child is None:
            best = own
        else:
            fan = 4 if depth == 0 else 3
            ch = best_child.reshape(nz, fan, n_classes) + 1
            ch = np.minimum(ch, INF)
            srt = np.sort(ch, axis=1)
            pair = srt[:, 0, :] + srt[:, 1, :]
            answer = min(answer, int(pair.min()))
            mine = own == 0
            if mine.any():
                answer = min(answer, int(srt[:, 0, :][mine].min()))
            best = np.minimum(own, srt[:, 0, :])
        best_child = best
    return answer if answer < INF else None


def isolation_audit(seed: int, k: int, radius: int) -> dict:
    """Classes of the k-th partition inside the S-ball of ``radius``.

    Reports the exact minimum distance between distinct same-class vertices,
    the largest fold observed between consecutive levels, and whether the
    isolation bound holds.
    """
    bound = isolation_bound(k)
    if radius < bound + 2:
        raise ConfigError(f"radius must be >= {bound + 2} for k={k}")
    P = partition(seed)
    layers = s_ball(radius)
    index = {}
    cls = []
    for layer in layers:
        for x in layer:
            W = P.class_of(x, k)
            cls.append(index.setdefault(W, len(index)))
    cls = np.asarray(cls, dtype=np.int64)
    dmin = _min_same_class_distance(layers, cls, len(index))
    fold = 0
    for j in range(k):
        kids = {}
        for W in index:
            kids.setdefault(W[:j], set()).add(W[j])
        fold = max(fold, max(len(v) for v in kids.values()))
    return {
        "k": k,
        "radius": radius,
        "vertices": int(len(cls)),
        "classes_observed": len(index),
        "min_same_class_distance": dmin,
        "max_fold": fold,
        "isolation_bound": bound,
        "passed": (dmin is None or dmin >= bound) and fold <= 4,
    }


# ---------------------------------------------------------------- H and H-tilde


def _base(spec):
    return spec.base()


def h_level(v) -> int:
    from .graph import level

    return level(v[1])


def is_type1(spec, v) -> bool:
    _, v1, v2, W = v
    return partition(spec.seed).contains(W, v2)


def validate_h(spec, v):
    from .constructions import validate

    if not (isinstance(v, tuple) and len(v) == 4 and v[0] == "H"):
        raise AddressError(f"{v!r} is not an H vertex")
    _, v1, v2, W = v
    validate(_base(spec), v1)
    if not is_reduced(v2):
        raise AddressError(f"{v2!r} is not a vertex of S")
    from .graph import level

    if not isinstance(W, tuple) or len(W) != level(v1):
        raise AddressError(f"class {W!r} must have length |v1| = {level(v1)}")
    if not partition(spec.seed).valid_class(W):
        raise AddressError(f"{W!r} is not a class address")


def h_s_neighbors(v) -> list:
    _, v1, v2, W = v
    return [("H", v1, u2, W) for u2 in s_neighbors(v2)]


def h_g_neighbors(spec, v) -> list:
    """G-edges at ``v`` (empty for type-2 vertices)."""
    from .graph import level, neighbors as g_neighbors

    _, v1, v2, W = v
    P = partition(spec.seed)
    if not P.contains(W, v2):
        return []
    lv = level(v1)
    out = []
    for u1, mult in g_neighbors(_base(spec), v1, check=False):
        lu = level(u1)
        if lu == lv:
            Wu = W
        elif lu == lv + 1:
            Wu = P.class_of(v2, lv + 1)
        else:
            Wu = W[:-1]
        out.append(("H", u1, v2, Wu))
    return out


def h_neighbors(spec, v, check: bool = True) -> list:
    if check:
        validate_h(spec, v)
    return h_g_neighbors(spec, v) + h_s_neighbors(v)


def h_tilde_neighbors(spec, v, check: bool = True) -> list:
    """Neighbors in H-tilde(M): S-edges become paths of ``spec.M`` edges.

    Path interiors are ``("Q", a, b, pos)`` with ``a < b`` the H endpoints and
    ``pos`` in ``1..M-1`` counted from ``a``.
    """
    M = spec.M
    if v[0] == "Q":
        if check:
            _validate_q(spec, v)
        _, a, b, pos = v
        prev = a if pos == 1 else ("Q", a, b, pos - 1)
        nxt = b if pos == M - 1 else ("Q", a, b, pos + 1)
        return [prev, nxt]
    if check:
        validate_h(spec, v)
    out = h_g_neighbors(spec, v)
    for u in h_s_neighbors(v):
        if M == 1:
            out.append(u)
        elif v < u:
            out.append(("Q", v, u, 1))
        else:
            out.append(("Q", u, v, M - 1))
    return out


def _validate_q(spec, v):
    if len(v) != 4:
        raise AddressError(f"{v!r} is not a path vertex")
    _, a, b, pos = v
    validate_h(spec, a)
    if not (a < b and b in h_s_neighbors(a)):
        raise AddressError(f"{v!r}: endpoints are not an S-edge in canonical order")
    if not (isinstance(pos, int) and 1 <= pos < spec.M):
        raise AddressError(f"{v!r}: position out of range")


def neighbors(spec, v, check: bool = True) -> list:
    """graph-core entry point for the H families (all multiplicities 1)."""
    from .constructions import Family

    if spec.family == Family.H:
        return [(u, 1) for u in h_neighbors(spec, v, check=check)]
    return [(u, 1) for u in h_tilde_neighbors(spec, v, check=check)]


def g_max_degree(spec, horizon: int = 2000) -> int:
    """Largest torus-vertex degree of the base graph over levels ``<= horizon``."""
    base = _base(spec)
    best = 0
    for lv in range(horizon + 1):
        s = base.side(lv)
        internal = 0 if s == 1 else (base.n if s == 2 else 2 * base.n)
        down = base.d if lv > 0 else 0
        up = (base.side(lv + 1) // s) ** base.n
        best = max(best, internal + down + up)
    return best


def h_max_degree(spec) -> int:
    return max(g_max_degree(spec) + 4, 2)


def root(spec, rng, type2: bool = False):
    """Root of H: G-root from its measure, origin of S, the origin's class."""
    from .graph import level
    from .measures import sample_root

    v1 = sample_root(_base(spec), rng)
    k = level(v1)
    P = partition(spec.seed)
    W = P.class_of((), k)
    v2 = ()
    if type2:
        # walk along label-0/1 edges until leaving W (possible once W != V(S))
        for step in range(64):
            if not P.contains(W, v2):
                break
            v2 = v2 + ((step % 2),)
    return ("H", v1, v2, W)


# ---------------------------------------------------------------- H structure audits


def type1_copy_audit(spec, v, radius: int = 4) -> bool:
    """Projection of the G-edge ball at a type-1 vertex is an isomorphism onto the G ball."""
    from .graph import ball as g_ball

    if not is_type1(spec, v):
        raise AuditError(f"{v!r} is not type-1")
    hb = g_ball(spec, v, radius, nbr=lambda u: [(w, 1) for w in h_g_neighbors(spec, u)])
    gb = g_ball(_base(spec), v[1], radius)
    proj = {u: u[1] for u in hb.vertices}
    if len(set(proj.values())) != len(proj):
        return False
    if sorted(proj.values()) != gb.vertices:
        return False
    if any(u[2] != v[2] for u in hb.vertices):
        return False
    mapped = sorted(tuple(sorted((proj[a], proj[b]))) + (s,) for a, b, s in hb.edges)
    return mapped == gb.edges and all(is_type1(spec, u) for u in hb.vertices)


def edge_boundary(spec, K: set) -> int:
    from .graph import neighbors as any_neighbors

    return sum(m for v in K for u, m in any_neighbors(spec, v, check=False) if u not in K)


def random_connected_set(spec, start, size: int, rng: random.Random) -> set:
    from .graph import neighbors as any_neighbors

    K = {start}
    frontier = [start]
    while len(K) < size and frontier:
        v = frontier[rng.randrange(len(frontier))]
        cand = [u for u, _ in any_neighbors(spec, v, check=False) if u not in K]
        if not cand:
            frontier.remove(v)
            continue
        u = cand[rng.randrange(len(cand))]
        K.add(u)
        frontier.append(u)
    return K


def nonamenability_audit(spec, n_sets: int = 100, max_size: int = 200, seed: int = 0,
                         radius: int = 3) -> dict:
    """Check |boundary(K)| >= |K| on random connected K grown inside a ball of H."""
    from .graph import ball as g_ball

    rng = random.Random(seed)
    nrng = np.random.default_rng(seed)
    worst = math.inf
    failures = 0
    sizes = []
    for t in range(n_sets):
        c = root(spec, nrng)
        region = g_ball(spec, c, radius).vertices
        start = region[rng.randrange(len(region))]
        K = random_connected_set(spec, start, rng.randint(1, max_size), rng)
        b = edge_boundary(spec, K)
        worst = min(worst, b / len(K))
        sizes.append(len(K))
        if b < len(K):
            failures += 1
    return {"sets": n_sets, "failures": failures, "min_ratio": worst,
            "max_size": max(sizes), "passed": failures == 0}
