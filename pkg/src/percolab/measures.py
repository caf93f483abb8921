"""Root measures over vertex orbits, root sampling, and a statistical
mass-transport check."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .constructions import ConstructionSpec, Family
from .errors import NormalizabilityError
from .graph import degree, height_key, level, neighbors

TAIL_TOL = 1e-13


@dataclass
class LevelMeasure:
    """Probability vector over orbits ``(level, role, position)``.

    ``role`` is ``"vertex"`` for canopy/torus vertices and ``"path"`` for
    subdivision interiors (``position`` 1..m-1); ``tail`` bounds the mass
    beyond the last listed level before normalisation.
    """

    orbits: list
    weights: np.ndarray
    tail: float = 0.0
    series: str = ""
    cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.cdf = np.cumsum(self.weights)

    def level_marginal(self) -> dict:
        out: dict = {}
        for (lv, _, _), w in zip(self.orbits, self.weights):
            out[lv] = out.get(lv, 0.0) + float(w)
        return out

    def role_mass(self, lv: int) -> dict:
        out = {"vertex": 0.0, "path": 0.0}
        for (l2, role, _), w in zip(self.orbits, self.weights):
            if l2 == lv:
                out[role] += float(w)
        return out

    def draw(self, rng) -> tuple:
        k = int(np.searchsorted(self.cdf, rng.random() * self.cdf[-1], side="right"))
        return self.orbits[min(k, len(self.orbits) - 1)]

    def rows(self):
        for (lv, role, pos), w in zip(self.orbits, self.weights):
            yield lv, role, pos, float(w)


def _log_n(spec: ConstructionSpec, lv: int) -> float:
    """log of the number of vertices per tree vertex at level ``lv``."""
    if spec.family in (Family.CANOPY, Family.MULTI_EDGE):
        return 0.0
    return spec.n * math.log(spec.side(lv))


def _terms(spec: ConstructionSpec, lv: int) -> list:
    """Unnormalised log-weights of the orbits at level ``lv``."""
    base = -lv * math.log(spec.d) + _log_n(spec, lv)
    out = [((lv, "vertex", 0), base)]
    if spec.family in (Family.SUBDIVIDED, Family.H, Family.H_TILDE):
        m = spec.m(lv)
        if m > 1:
            lp = -lv * math.log(spec.d) + _log_n(spec, lv + 1)
            out.extend(((lv, "path", j), lp) for j in range(1, m))
    return out


def level_measure(spec: ConstructionSpec, horizon: int = 5000) -> LevelMeasure:
    """Normalised orbit weights ``d^-l N(l)`` (plus path orbits), tail below 1e-13."""
    fam = spec.family
    if fam == Family.TORI and spec.r ** spec.n >= spec.d:
        raise NormalizabilityError(
            f"sum_l d^-l r^(n l) diverges: r^n = {spec.r ** spec.n} >= d = {spec.d}",
            series="d^-l r^(n l)", partial_sums=_trace(spec, 20))
    orbits, logs, level_logs = [], [], []
    for lv in range(horizon + 1):
        t = _terms(spec, lv)
        orbits.extend(o for o, _ in t)
        logs.extend(x for _, x in t)
        level_logs.append(_logsumexp([x for _, x in t]))
        if lv >= 8:
            tail = _tail(level_logs, logs)
            if tail is not None and tail < TAIL_TOL:
                w = np.exp(np.asarray(logs) - max(logs))
                w /= w.sum()
                return LevelMeasure(orbits, w, tail, _series_name(spec))
    raise NormalizabilityError(
        f"could not certify convergence of {_series_name(spec)} within {horizon} levels",
        series=_series_name(spec), partial_sums=_trace(spec, 20))


def _tail(level_logs, logs):
    """Relative tail bound from the largest level-to-level ratio in the recent window."""
    half = len(level_logs) // 2
    window = np.diff(level_logs[half:])
    rho = float(np.exp(window.max()))
    if rho >= 1:
        return None
    total = _logsumexp(logs)
    return math.exp(level_logs[-1] - total) * rho / (1 - rho)


def _logsumexp(xs) -> float:
    m = max(xs)
    return m + math.log(sum(math.exp(x - m) for x in xs))


def _series_name(spec) -> str:
    fam = spec.family
    if fam in (Family.CANOPY, Family.MULTI_EDGE):
        return "d^-l"
    if fam == Family.TORI:
        return "d^-l r^(n l)"
    if spec.r_schedule is not None:
        return "d^-l 2^(n r(l)) [m(l)]"
    return "d^-l r^(n l) m(l)"


def _trace(spec, k: int) -> list:
    out, acc = [], 0.0
    for lv in range(k):
        acc += sum(math.exp(x) for _, x in _terms(spec, lv))
        out.append(acc)
    return out


# ---------------------------------------------------------------- root sampling


def sample_root(spec: ConstructionSpec, rng, measure: LevelMeasure | None = None):
    """Random root: orbit from the level measure, uniform position inside the orbit.

    The horizontal tree coordinate is fixed to 0 since the rooted isomorphism
    class only depends on the level.
    """
    if spec.family in (Family.H, Family.H_TILDE):
        from .hierarchy import root

        return root(spec, rng)
    if measure is None:
        measure = _cached_measure(spec)
    lv, role, pos = measure.draw(rng)
    if spec.family in (Family.CANOPY, Family.MULTI_EDGE):
        return ("C", 0, lv)
    s = spec.side(lv)
    x = _uniform_coords(rng, s, spec.n)
    v = ("T", 0, lv, x)
    if role == "vertex":
        return v
    k = spec.side(lv + 1) // s
    y = tuple(c + s * t for c, t in zip(x, _uniform_coords(rng, k, spec.n)))
    return ("P", v, ("T", 0, lv + 1, y), pos)


def _uniform_coords(rng, s: int, n: int) -> tuple:
    if s < (1 << 62):
        return tuple(int(c) for c in rng.integers(0, s, size=n))
    # sides beyond int64: draw exact big-integer residues from random bits
    bits = s.bit_length() + 64
    return tuple(int.from_bytes(rng.bytes(bits // 8 + 1), "little") % s for _ in range(n))


_MEASURES: dict = {}


def _cached_measure(spec) -> LevelMeasure:
    key = (spec.family, spec.d, spec.n, spec.r, spec.m_schedule, spec.r_schedule)
    got = _MEASURES.get(key)
    if got is None:
        got = level_measure(spec)
        _MEASURES[key] = got
    return got


# ---------------------------------------------------------------- mass transport


@dataclass
class Local:
    """Radius-2 neighborhood data around a root, enough for the battery."""

    spec: ConstructionSpec
    root: tuple
    nbrs: dict  # vertex -> list of (neighbor, multiplicity) for root and its neighbors

    def deg(self, v) -> int:
        nb = self.nbrs.get(v)
        if nb is None:
            nb = neighbors(self.spec, v, check=False)
            self.nbrs[v] = nb
        return sum(m for _, m in nb)

    def h(self, v) -> float:
        return height_key(self.spec, v)


@dataclass
class TransportFn:
    """``out(local)`` = sum_x f(root, x); ``into(local)`` = sum_x f(x, root)."""

    name: str
    radius: int
    out: Callable
    into: Callable


def local(spec, rho) -> Local:
    nb = {rho: neighbors(spec, rho, check=False)}
    for u, _ in nb[rho]:
        if u not in nb:
            nb[u] = neighbors(spec, u, check=False)
    return Local(spec, rho, nb)


def _up(L: Local, u):
    hu = L.h(u)
    return [(x, m) for x, m in L.nbrs[u] if L.h(x) > hu]


def _down(L: Local, u):
    hu = L.h(u)
    return [(x, m) for x, m in L.nbrs[u] if L.h(x) < hu]


def _ups_out(L):
    return sum(m for _, m in _up(L, L.root))


def _ups_in(L):
    return sum(m for _, m in _down(L, L.root))


def _two_up_out(L):
    tot = 0
    for w, m1 in _up(L, L.root):
        tot += m1 * sum(m for _, m in _up(L, w))
    return tot


def _two_up_in(L):
    tot = 0
    for w, m1 in _down(L, L.root):
        tot += m1 * sum(m for _, m in _down(L, w))
    return tot


def battery() -> list:
    """Five level-asymmetric transport functions with support radius <= 2."""
    return [
        TransportFn("up_edges", 1, _ups_out, _ups_in),
        TransportFn("up_edges_over_deg", 1,
                    lambda L: _ups_out(L) / L.deg(L.root),
                    lambda L: sum(m / L.deg(x) for x, m in _down(L, L.root))),
        TransportFn("up_two_steps", 2, _two_up_out, _two_up_in),
        TransportFn("up_edges_over_level", 1,
                    lambda L: _ups_out(L) / (1 + level(L.root)),
                    lambda L: sum(m / (1 + level(x)) for x, m in _down(L, L.root))),
        TransportFn("down_edges_deg_ratio", 1,
                    lambda L: sum(m * L.deg(x) for x, m in _down(L, L.root)) / L.deg(L.root),
                    lambda L: sum(m * L.deg(L.root) / L.deg(x) for x, m in _up(L, L.root))),
    ]


def adjacency_fn() -> TransportFn:
    return TransportFn("adjacency", 1, lambda L: L.deg(L.root), lambda L: L.deg(L.root))


def zero_fn() -> TransportFn:
    return TransportFn("zero", 0, lambda L: 0.0, lambda L: 0.0)


def mtp_check(spec: ConstructionSpec, fns, trials: int, seed: int = 0) -> list:
    """Paired estimates of E sum_x f(rho, x) and E sum_x f(x, rho) with z-scores."""
    if isinstance(fns, TransportFn):
        fns = [fns]
    rng = np.random.default_rng(seed)
    measure = None if spec.family in (Family.H, Family.H_TILDE) else _cached_measure(spec)
    lhs = np.zeros((len(fns), trials))
    rhs = np.zeros((len(fns), trials))
    for t in range(trials):
        rho = sample_root(spec, rng, measure)
        L = local(spec, rho)
        for k, f in enumerate(fns):
            lhs[k, t] = f.out(L)
            rhs[k, t] = f.into(L)
    out = []
    for k, f in enumerate(fns):
        diff = lhs[k] - rhs[k]
        se = float(diff.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf
        mean = float(diff.mean())
        z = 0.0 if se == 0 and mean == 0 else (math.inf if se == 0 else mean / se)
        out.append({"name": f.name, "lhs": float(lhs[k].mean()), "rhs": float(rhs[k].mean()),
                    "stderr": se, "z": z, "trials": trials})
    return out


def expected_degree(spec: ConstructionSpec, trials: int, seed: int = 0) -> tuple:
    """Monte Carlo E[deg rho] with its standard error."""
    rng = np.random.default_rng(seed)
    measure = _cached_measure(spec)
    vals = np.array([degree(spec, sample_root(spec, rng, measure), check=False)
                     for _ in range(trials)], dtype=float)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(trials))
