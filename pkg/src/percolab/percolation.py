"""Seeded Bernoulli bond percolation on the lazy graphs and on finite tori."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import prf
from .analytics import m_gamma
from .constructions import ConstructionSpec, Family
from .graph import level, neighbors


@dataclass(frozen=True)
class PercolationSample:
    p: float
    seed: int

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError("p must lie in [0, 1]")


def edge_uniform(sample: PercolationSample, e) -> float:
    u, v, slot = e
    return prf.edge_uniform(sample.seed, u, v, slot)


def edge_state(sample: PercolationSample, e) -> bool:
    """True iff the edge ``(u, v, slot)`` is open."""
    return edge_uniform(sample, e) < sample.p


@dataclass
class ClusterReport:
    size: int
    open_edges: int
    truncated: bool
    frontier: int
    levels: frozenset
    vertices: frozenset = field(default=frozenset(), repr=False)

    def key(self) -> tuple:
        return (self.size, self.open_edges, self.truncated, self.frontier,
                tuple(sorted(self.levels)), tuple(sorted(self.vertices)))


def explore_cluster(spec: ConstructionSpec, sample: PercolationSample, start, budget: int,
                    nbr=None, keep_vertices: bool = True) -> ClusterReport:
    """BFS over open edges from ``start``; stops once ``budget`` vertices are found.

    ``nbr`` overrides the neighbor function (used for finite test graphs).
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if nbr is None:
        neighbors(spec, start)
        nbr = lambda v: neighbors(spec, v, check=False)  # noqa: E731
    seed, p = sample.seed, sample.p
    hashes: dict = {}

    def h(v):
        x = hashes.get(v)
        if x is None:
            x = prf.key_hash(v)
            hashes[v] = x
        return x

    def is_open(hu, hv, m):
        for s in range(m):
            if prf.to_unit(prf.edge_word(seed, hu, hv, s)) < p:
                return True
        return False

    seen = {start}
    queue = deque([start])
    while queue and len(seen) < budget:
        v = queue.popleft()
        hv = h(v)
        for u, m in nbr(v):
            if u == v or u in seen:
                continue
            if is_open(hv, h(u), m):
                seen.add(u)
                queue.append(u)
                if len(seen) >= budget:
                    break
    truncated = len(seen) >= budget
    open_edges = 0
    for v in seen:
        hv = h(v)
        for u, m in nbr(v):
            if u in seen and v < u:
                hu = h(u)
                open_edges += sum(prf.to_unit(prf.edge_word(seed, hv, hu, s)) < p
                                  for s in range(m))
    lv = frozenset(_safe_level(v) for v in seen)
    return ClusterReport(len(seen), open_edges, truncated, len(queue) if truncated else 0, lv,
                         frozenset(seen) if keep_vertices else frozenset())


def _safe_level(v):
    try:
        return level(v)
    except Exception:
        return -1


# ---------------------------------------------------------------- union-find oracle


class DisjointSet:
    def __init__(self, items=()):
        self.parent = {}
        self.size = {}
        for x in items:
            self.add(x)

    def add(self, x):
        if x not in self.parent:
            self.parent[x] = x
            self.size[x] = 1

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True

    def groups(self) -> dict:
        out: dict = {}
        for x in self.parent:
            out.setdefault(self.find(x), set()).add(x)
        return out


def ball_components(ball, sample: PercolationSample) -> DisjointSet:
    """Open components of the subgraph induced on a finite ball (oracle)."""
    ds = DisjointSet(ball.vertices)
    for e in ball.edges:
        if edge_state(sample, e):
            ds.union(e[0], e[1])
    return ds


# ---------------------------------------------------------------- survival on G_{d,gamma}


def _canopy_cluster_fast(d: int, gamma: float, p: float, seed: int, budget: int) -> tuple:
    """Cluster of ("C", 0, 0) in G_{d,gamma}[p]; vectorised over BFS generations.

    Uses the same edge uniforms as :func:`explore_cluster`. Returns
    ``(size, truncated, max_height)``.
    """
    # frontier entries: (i, j, came_from_parent, child_index_to_skip)
    fi = np.array([0], dtype=np.int64)
    fj = np.array([0], dtype=np.int64)
    from_parent = np.array([False])
    skip = np.array([-1], dtype=np.int64)
    size = 1
    top = 0
    while fi.size:
        hv = prf.canopy_hash_np(fi, fj)
        # upward edges
        up = ~from_parent
        new_i, new_j, new_fp, new_skip = [], [], [], []
        if up.any():
            ui, uj, uh = fi[up], fj[up], hv[up]
            pi, pj = np.floor_divide(ui, d), uj + 1
            ph = prf.canopy_hash_np(pi, pj)
            ok = _any_open(seed, uh, ph, _mult(gamma, uj), p)
            new_i.append(pi[ok])
            new_j.append(pj[ok])
            new_fp.append(np.zeros(ok.sum(), dtype=bool))
            new_skip.append((ui - d * pi)[ok])
        # downward edges
        down = fj > 0
        if down.any():
            di_, dj, dh, dsk = fi[down], fj[down], hv[down], skip[down]
            ci = (d * di_)[:, None] + np.arange(d)[None, :]
            cj = np.repeat((dj - 1)[:, None], d, axis=1)
            keep = np.arange(d)[None, :] != dsk[:, None]
            ci, cj = ci[keep], cj[keep]
            ph = np.repeat(dh[:, None], d, axis=1)[keep]
            ch = prf.canopy_hash_np(ci, cj)
            ok = _any_open(seed, ch, ph, _mult(gamma, cj), p)
            new_i.append(ci[ok])
            new_j.append(cj[ok])
            new_fp.append(np.ones(ok.sum(), dtype=bool))
            new_skip.append(np.full(ok.sum(), -1, dtype=np.int64))
        if not new_i:
            break
        fi = np.concatenate(new_i)
        fj = np.concatenate(new_j)
        from_parent = np.concatenate(new_fp)
        skip = np.concatenate(new_skip)
        if fj.size:
            top = max(top, int(fj.max()))
        size += int(fi.size)
        if size >= budget:
            return min(size, budget), True, top
    return size, False, top


def _mult(gamma: float, j: np.ndarray) -> np.ndarray:
    """m_gamma at each height in ``j`` (edge from height j to j+1)."""
    uniq, inv = np.unique(j, return_inverse=True)
    table = np.array([m_gamma(int(u), gamma) for u in uniq], dtype=np.int64)
    return table[inv]


def _any_open(seed: int, ha: np.ndarray, hb: np.ndarray, mult: np.ndarray, p: float) -> np.ndarray:
    ok = np.zeros(ha.shape, dtype=bool)
    if ha.size == 0:
        return ok
    for s in range(int(mult.max())):
        live = (mult > s) & ~ok
        if not live.any():
            break
        u = prf.edge_uniform_np(seed, ha[live], hb[live], s)
        ok[live] = u < p
    return ok


def truncation_allowance(d: int, gamma: float, p: float, budget: int, level0: int = 0) -> float:
    """Upper bound on P(cluster hits budget) - theta for the canopy root at ``level0``.

    A cluster with ``budget`` vertices must reach height ``h_min`` (the least h with
    sum_{j<=h} d^j >= budget), which happens only if the first ``h_min`` ancestor
    edges are open.
    """
    from .analytics import theta_product

    h, tot = 0, 1
    while tot < budget:
        h += 1
        tot += d ** h
    reach = math.prod(1 - (1 - p) ** m_gamma(n, gamma) for n in range(level0, level0 + h))
    theta = theta_product(level0, p, gamma, tolerance=1e-9).lower
    return max(0.0, reach - theta)


def survival_estimate(spec: ConstructionSpec, p: float, budget: int, trials: int,
                      seed: int = 0, fast: bool = True) -> dict:
    """Fraction of trials whose root cluster reaches ``budget`` vertices.

    For the multi-edge canopy the root is the level-0 vertex ``("C", 0, 0)``
    and the vectorised explorer is used; other families use the generic
    explorer from roots drawn by :func:`percolab.measures.sample_root`.
    """
    hits = 0
    sizes = []
    for t in range(trials):
        tseed = prf.seeded(seed, "trial", t)
        if fast and spec.family in (Family.MULTI_EDGE, Family.CANOPY):
            gamma = spec.gamma if spec.family == Family.MULTI_EDGE else None
            if gamma is None:
                rep = explore_cluster(spec, PercolationSample(p, tseed), ("C", 0, 0), budget,
                                      keep_vertices=False)
                size, trunc = rep.size, rep.truncated
            else:
                size, trunc, _ = _canopy_cluster_fast(spec.d, gamma, p, tseed, budget)
        else:
            from .measures import sample_root

            rng = np.random.default_rng(tseed)
            start = ("C", 0, 0) if spec.family in (Family.MULTI_EDGE, Family.CANOPY) \
                else sample_root(spec, rng)
            rep = explore_cluster(spec, PercolationSample(p, tseed), start, budget,
                                  keep_vertices=False)
            size, trunc = rep.size, rep.truncated
        hits += trunc
        sizes.append(size)
    est = hits / trials
    return {"p": p, "budget": budget, "trials": trials, "estimate": est,
            "stderr": math.sqrt(max(est * (1 - est), 0.0) / trials),
            "mean_size": float(np.mean(sizes))}


# ---------------------------------------------------------------- finite tori and boxes


def _torus_edges(n: int) -> tuple:
    idx = np.arange(n * n).reshape(n, n)
    right = np.roll(idx, -1, axis=1)
    down = np.roll(idx, -1, axis=0)
    if n == 2:
        # a single edge per axis between the two residues
        a = np.concatenate([idx[:, 0], idx[0, :]])
        b = np.concatenate([idx[:, 1], idx[1, :]])
        return a, b
    return (np.concatenate([idx.ravel(), idx.ravel()]),
            np.concatenate([right.ravel(), down.ravel()]))


def _box_edges(L: int) -> tuple:
    idx = np.arange(L * L).reshape(L, L)
    return (np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()]),
            np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()]))


def _labels(nv: int, a: np.ndarray, b: np.ndarray, open_mask: np.ndarray) -> np.ndarray:
    g = coo_matrix((np.ones(int(open_mask.sum()), dtype=np.int8), (a[open_mask], b[open_mask])),
                   shape=(nv, nv))
    return connected_components(g, directed=False)[1]


def torus_largest_fraction(n: int, p: float, rng) -> tuple:
    """One sample: (largest open cluster fraction, labels) on the n x n torus."""
    a, b = _torus_edges(n)
    lab = _labels(n * n, a, b, rng.random(a.size) < p)
    counts = np.bincount(lab)
    return counts.max() / (n * n), lab


def torus_giant(n: int, p: float, trials: int, seed: int = 0, threshold: float = 0.75) -> dict:
    """Distribution of the largest-cluster fraction on the n x n torus."""
    if n < 2:
        raise ValueError("side must be >= 2")
    rng = np.random.default_rng(seed)
    fr = np.array([torus_largest_fraction(n, p, rng)[0] for _ in range(trials)])
    fail = float(np.mean(fr < threshold))
    return {"n": n, "p": p, "trials": trials, "fractions": fr, "mean": float(fr.mean()),
            "threshold": threshold, "failure": fail,
            "failure_stderr": math.sqrt(fail * (1 - fail) / trials)}


def _box_theta(L: int, p: float, rng) -> float:
    a, b = _box_edges(L)
    lab = _labels(L * L, a, b, rng.random(a.size) < p)
    grid = lab.reshape(L, L)
    boundary = np.unique(np.concatenate([grid[0], grid[-1], grid[:, 0], grid[:, -1]]))
    w = max(L // 16, 1)
    lo, hi = L // 2 - w, L // 2 + w
    centre = grid[lo:hi, lo:hi]
    return float(np.isin(centre, boundary).mean())


def theta_Z2_estimate(p: float, L: int, trials: int, seed: int = 0) -> dict:
    """Fraction of the central L/8 x L/8 square of an L x L box joined to the box boundary.

    Reported at ``L`` and ``L // 2``; the estimate is biased upward and the bias
    shrinks with L.
    """
    if p <= 0:
        raise ValueError("p must be > 0")
    out = {"p": p, "trials": trials}
    for tag, side in (("L", L), ("L_half", max(L // 2, 4))):
        rng = np.random.default_rng(prf.seeded(seed, "box", side) >> 1)
        vals = np.array([_box_theta(side, p, rng) for _ in range(trials)])
        out[tag] = side
        out[f"theta_{tag}"] = float(vals.mean())
        out[f"stderr_{tag}"] = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    out["theta"] = out["theta_L"]
    out["stderr"] = out["stderr_L"]
    return out


def find_q_star(L: int = 512, trials: int = 20, seed: int = 0, start: float = 0.50,
                step: float = 0.01, target: float = 0.75) -> dict:
    """Smallest p on the grid ``start, start+step, ...`` with estimated theta > target."""
    k = 0
    scan = []
    while True:
        p = round(start + k * step, 10)
        if p > 1:
            raise ValueError("no grid point exceeds the target")
        est = theta_Z2_estimate(p, L, trials, seed)
        scan.append((p, est["theta"], est["stderr"]))
        if est["theta"] > target:
            return {"q_star": p, "theta": est["theta"], "stderr": est["stderr"], "L": L,
                    "trials": trials, "scan": scan}
        k += 1


# ---------------------------------------------------------------- giant chain


def giant_chain_experiment(spec: ConstructionSpec, q: float, levels, trials: int,
                           seed: int = 0, threshold: float = 0.75) -> list:
    """For each level i: giant of the side-r^i torus joined to the giant of its parent torus.

    The two tori are percolated independently; each of the ``r^{n(i+1)}``
    inter-level paths of length ``m(i)`` is open with probability ``q^m(i)``.
    """
    if spec.n != 2 or spec.family != Family.SUBDIVIDED:
        raise ValueError("giant chain needs a subdivided tree of 2-dimensional tori")
    out = []
    for i in levels:
        rng = np.random.default_rng(prf.seeded(seed, "chain", i) >> 1)
        s0, s1 = spec.side(i), spec.side(i + 1)
        k = s1 // s0
        m = spec.m(i)
        p_path = q ** m
        success = any_path = fail0 = fail1 = 0
        for _ in range(trials):
            f0, lab0 = torus_largest_fraction(s0, q, rng) if s0 >= 2 else (1.0, np.zeros(1, int))
            f1, lab1 = torus_largest_fraction(s1, q, rng)
            g0 = lab0 == np.bincount(lab0).argmax()
            g1 = lab1 == np.bincount(lab1).argmax()
            ok0, ok1 = f0 >= threshold, f1 >= threshold
            fail0 += not ok0
            fail1 += not ok1
            # path from child coordinate x to each preimage x + s0 * t
            x = np.arange(s0 * s0)
            xr, xc = np.divmod(x, s0)
            tr, tc = np.divmod(np.arange(k * k), k)
            yr = xr[:, None] + s0 * tr[None, :]
            yc = xc[:, None] + s0 * tc[None, :]
            y = yr * s1 + yc
            open_ = rng.random(y.shape) < p_path
            any_path += bool(open_.any())
            if ok0 and ok1:
                success += bool((open_ & g0[:, None] & g1[y]).any())
        out.append({
            "level": i, "side_child": s0, "side_parent": s1, "m": m,
            "paths": s0 * s0 * k * k, "path_open_prob": p_path, "trials": trials,
            "success": success / trials, "any_open_path": any_path / trials,
            "torus_failure_child": fail0 / trials, "torus_failure_parent": fail1 / trials,
            "bound": 1 - math.exp(-q * i * i / 2),
        })
    return out


# ---------------------------------------------------------------- susceptibility


def chi_mc(spec: ConstructionSpec, q: float, level0: int, max_k: int, budget: int,
           trials: int, seed: int = 0) -> dict:
    """Mean number of level-k torus vertices in the open cluster of a level-``level0`` vertex."""
    start = ("T", 0, level0, (0,) * spec.n)
    counts = np.zeros((trials, max_k + 1))
    truncated = 0
    for t in range(trials):
        rep = explore_cluster(spec, PercolationSample(q, prf.seeded(seed, "chi", t)), start,
                              budget)
        truncated += rep.truncated
        for v in rep.vertices:
            if v[0] == "T" and v[2] <= max_k:
                counts[t, v[2]] += 1
    chi = counts.mean(axis=0)
    se = counts.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 else np.zeros(max_k + 1)
    k = np.arange(max_k + 1)
    ratio = chi / (k + 1) ** 2
    return {"level": level0, "q": q, "budget": budget, "trials": trials, "chi": chi.tolist(),
            "stderr": se.tolist(), "ratio": ratio.tolist(), "C_hat": float(ratio.max()),
            "truncated": truncated}
