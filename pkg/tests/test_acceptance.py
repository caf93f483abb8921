"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Parameters (trial counts, seeds, q*) are fixed up front and are not tuned to
the outcome.  Slow; run with ``pytest tests/test_acceptance.py -v``.
"""
import math
import re

import numpy as np
import pytest

from percolab import cli
from percolab import hierarchy as hy
from percolab import percolation as pc
from percolab.analytics import chi_tilde_recursion, m_gamma, survival_positive, theta_product
from percolab.constructions import (Family, canopy, h_graph, multi_edge, section4_graph,
                                    subdivided, tree_of_tori)
from percolab.errors import NormalizabilityError
from percolab.graph import ball, degree, neighbors
from percolab.measures import battery, expected_degree, level_measure, mtp_check

Q_STAR_L, Q_STAR_TRIALS, Q_STAR_SEED = 512, 100, 0
TORUS_SIDES = (16, 32, 64, 128)


@pytest.fixture
def report(capsys):
    def _report(label, ok, detail=""):
        with capsys.disabled():
            print(f"\n{label}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
        return ok
    return _report


@pytest.fixture(scope="module")
def q_star():
    return pc.find_q_star(L=Q_STAR_L, trials=Q_STAR_TRIALS, seed=Q_STAR_SEED)


# ---------------------------------------------------------------- criterion 1


def _expected_degree(spec, v):
    """Degree from the closed-form description of each family."""
    if v[0] == "P":
        return 2
    if v[0] == "C":
        j = v[2]
        up = m_gamma(j, spec.gamma) if spec.family == Family.MULTI_EDGE else 1
        down = 0
        if j > 0:
            down = spec.d * (m_gamma(j - 1, spec.gamma) if spec.family == Family.MULTI_EDGE else 1)
        return up + down
    j, s = v[2], spec.side(v[2])
    internal = 0 if s == 1 else (spec.n if s == 2 else 2 * spec.n)
    down = spec.d if j > 0 else 0
    up = (spec.side(j + 1) // s) ** spec.n
    return internal + down + up


def _far_end(v, u):
    """Collapse a path-interior neighbor to the torus vertex at its far end."""
    if u[0] != "P":
        return u
    _, lo, hi, _ = u
    return hi if v == lo else lo


def _level_correspondence(spec, v, nb) -> bool:
    j = v[2]
    ends = [_far_end(v, u) for u, m in nb for _ in range(m)]
    down = [u for u in ends if u[2] == j - 1]
    up = [u for u in ends if u[2] == j + 1]
    if v[0] == "C":
        mult_down = m_gamma(j - 1, spec.gamma) if spec.family == Family.MULTI_EDGE and j else 1
        kids = {u[1] for u in down}
        ok_down = j == 0 or (kids == set(range(spec.d * v[1], spec.d * v[1] + spec.d))
                             and len(down) == spec.d * mult_down)
        return ok_down and {u[1] for u in up} == {v[1] // spec.d}
    x = v[3]
    if j > 0:
        cs = spec.side(j - 1)
        if sorted(u[1] for u in down) != list(range(spec.d * v[1], spec.d * v[1] + spec.d)):
            return False
        if any(u[3] != tuple(c % cs for c in x) for u in down):
            return False
    s = spec.side(j)
    ratio = spec.side(j + 1) // s
    return (len(set(up)) == len(up) == ratio ** spec.n
            and all(u[1] == v[1] // spec.d and tuple(c % s for c in u[3]) == x for u in up))


STRUCT_CASES = [
    ("T3", canopy(3), ("C", 0, 3)),
    ("T1(3,2)", tree_of_tori(3, 2, 1), ("T", 0, 2, (1,))),
    ("T2(5,2)", tree_of_tori(5, 2, 2), ("T", 0, 2, (1, 3))),
    ("G_{3,2}", multi_edge(3, 2.0), ("C", 0, 3)),
    ("G(5,2,m)", subdivided(5, 2, 2, q=0.6), ("T", 0, 2, (1, 3))),
]


def test_criterion_1_structural_audits(report):
    details, ok = [], True
    for name, spec, c in STRUCT_CASES:
        b = ball(spec, c, 5)
        adj = {v: neighbors(spec, v, check=False) for v in b.vertices}
        sym = all(dict(neighbors(spec, u, check=False)).get(v) == m
                  for v, nb in adj.items() for u, m in nb)
        interior = [v for v in b.vertices if b.dist[v] < 5]
        deg = all(degree(spec, v, check=False) == _expected_degree(spec, v) for v in interior)
        corr = all(_level_correspondence(spec, v, adj[v]) for v in interior if v[0] != "P")
        ok &= sym and deg and corr
        details.append(f"{name}[{len(b)}v sym={sym} deg={deg} lvl={corr}]")
    # max degree of H-tilde(M): observe it at the G level of largest torus degree
    for seed, M in ((0, 1), (1, 2), (2, 5)):
        spec = h_graph(0.6, seed=seed, M=M)
        base = spec.base()
        g_deg = [degree(base, ("T", 0, lv, (0, 0)), check=False) for lv in range(2001)]
        lv = int(np.argmax(g_deg))
        v = ("H", ("T", 0, lv, (0, 0)), (), hy.class_of(seed, (), lv))
        observed = len(neighbors(spec, v))
        rng = np.random.default_rng(seed)
        local_max = max(len(neighbors(spec, u, check=False))
                        for _ in range(5) for u in ball(spec, hy.root(spec, rng), 2).vertices)
        bound = hy.h_max_degree(spec)
        good = observed == bound and local_max <= bound
        ok &= good
        details.append(f"H~(seed={seed},M={M})[max={observed} const={bound}]")
    assert report("CRITERION 1 structural audits", ok, " ".join(details))


# ---------------------------------------------------------------- criterion 2


def test_criterion_2_measures(report):
    specs = [canopy(2), canopy(3), canopy(5), tree_of_tori(3, 2, 1), tree_of_tori(5, 2, 2),
             multi_edge(3, 2.0), subdivided(5, 2, 2, q=0.6), section4_graph(0.6)]
    worst = max(abs(float(level_measure(s).weights.sum()) - 1) for s in specs)
    sums_ok = worst <= 1e-12
    marg = level_measure(tree_of_tori(5, 2, 2)).level_marginal()
    ratios = [marg[lv + 1] / marg[lv] for lv in range(30)]
    ratio_ok = all(abs(r - 0.8) <= 1e-12 for r in ratios)
    try:
        level_measure(tree_of_tori(3, 2, 2))
        raised = False
    except NormalizabilityError:
        raised = True
    ok = sums_ok and ratio_ok and raised
    assert report("CRITERION 2 measures", ok,
                  f"max|sum-1|={worst:.1e} ratio4/5={ratio_ok} T2(3,2)raises={raised}")


# ---------------------------------------------------------------- criterion 3


def test_criterion_3_mass_transport(report):
    details, ok = [], True
    for name, spec in (("T3", canopy(3)), ("T2(5,2)", tree_of_tori(5, 2, 2)),
                       ("G(5,2,m)", subdivided(5, 2, 2, q=0.6))):
        res = mtp_check(spec, battery(), 100_000, seed=1)
        zmax = max(abs(r["z"]) for r in res)
        ok &= zmax <= 4
        details.append(f"{name}|z|max={zmax:.2f}")
    for d in (2, 3, 5):
        mean, se = expected_degree(canopy(d), 100_000, seed=2)
        ok &= abs(mean - 2) <= 4 * se
        details.append(f"E[deg]T{d}={mean:.4f}+-{se:.4f}")
    assert report("CRITERION 3 mass transport", ok, " ".join(details))


# ---------------------------------------------------------------- criterion 4

GRID_P = (0.3, 0.45, 0.49, 0.5, 0.51, 0.6)
GRID_GAMMA = (0.0, 0.5, 1.0, 1.5, 3.0)


def _series_converges(p, gamma):
    """Integral test on sum n^-a (log n)^-(a gamma), a = log2(1/(1-p))."""
    a = math.log(1 / (1 - p)) / math.log(2)
    return a > 1 or (a == 1 and a * gamma > 1)


def test_criterion_4_survival(report):
    grid = [(p, g) for p in GRID_P for g in GRID_GAMMA]
    assert len(grid) == 30
    mism = [(p, g) for p, g in grid if survival_positive(p, g) != _series_converges(p, g)]
    spec = multi_edge(3, 2.0)
    theta = theta_product(0, 0.6, 2.0).value
    details, ok = [f"grid mismatches={len(mism)}"], not mism
    for budget in (10_000, 100_000):
        est = pc.survival_estimate(spec, 0.6, budget, trials=400, seed=0)
        allow = pc.truncation_allowance(3, 2.0, 0.6, budget)
        gap = abs(est["estimate"] - theta)
        good = gap <= 3 * est["stderr"] + allow
        ok &= good
        details.append(f"B={budget}: est={est['estimate']:.4f} theta={theta:.4f} "
                       f"gap={gap:.4f} <= {3 * est['stderr'] + allow:.4f}")
    assert report("CRITERION 4 survival (grid + p=0.6)", ok, "; ".join(details))


def test_criterion_4_subcritical_budget_factor(report):
    spec = multi_edge(3, 2.0)
    e1 = pc.survival_estimate(spec, 0.48, 10_000, trials=400, seed=0)["estimate"]
    e2 = pc.survival_estimate(spec, 0.48, 100_000, trials=400, seed=0)["estimate"]
    ok = e2 <= e1 / 3
    assert report("CRITERION 4 p=0.48 factor-3 decrease", ok,
                  f"est(1e4)={e1:.4f} est(1e5)={e2:.4f} ratio={e1 / max(e2, 1e-300):.3f}")


# ---------------------------------------------------------------- criterion 5


def test_criterion_5_torus_surrogate(report, q_star):
    q = q_star["q_star"]
    eps = q_star["theta"] - 0.75
    fails = [pc.torus_giant(n, q, 500, seed=0)["failure"] for n in TORUS_SIDES]
    ok = q_star["theta"] > 0.75 and all(a >= b for a, b in zip(fails, fails[1:]))
    shape = ", ".join(f"n={n}:{f:.3f}" for n, f in zip(TORUS_SIDES, fails))
    assert report("CRITERION 5 torus surrogate", ok,
                  f"q*={q} theta={q_star['theta']:.3f} eps={eps:.3f} failures {shape}")


# ---------------------------------------------------------------- criterion 6


def test_criterion_6_giant_chain(report, q_star):
    q = q_star["q_star"]
    spec = subdivided(5, 2, 2, q=q)
    rows = pc.giant_chain_experiment(spec, q, range(3, 7), trials=200, seed=0)
    details, ok = [], True
    for r in rows:
        fail = max(r["torus_failure_child"], r["torus_failure_parent"])
        need = r["bound"] - 2 * fail
        ok &= r["success"] >= need
        details.append(f"i={r['level']}:{r['success']:.3f}>={need:.3f}")
    sub = pc.giant_chain_experiment(spec, q / 2, [6], trials=200, seed=0)[0]
    ok &= sub["any_open_path"] < 0.05
    details.append(f"p=q*/2 i=6 cross={sub['any_open_path']:.3f}<0.05")
    assert report("CRITERION 6 giant chain", ok, " ".join(details))


# ---------------------------------------------------------------- criterion 7


def _random_word(rng, max_len=10):
    w = ()
    for _ in range(int(rng.integers(0, max_len + 1))):
        w = hy.s_neighbors(w)[int(rng.integers(4))]
    return w


def test_criterion_7_partition(report):
    fs = hy.f_sequence(10)
    exact = fs.F[2:5] == (12, 36, 396)
    bounds = all(fs.F[n] <= 4 ** (2 ** n) and fs.b[n] <= 2 ** (n + 1) for n in range(11))
    audits = [hy.isolation_audit(0, 4, 8), hy.isolation_audit(0, 8, 12)]
    aud_ok = all(a["max_fold"] <= 4 and (a["min_same_class_distance"] is None or
                                         a["min_same_class_distance"] >= 2 *
                                         math.floor(math.log2(a["k"]) - 1))
                 for a in audits)
    rng = np.random.default_rng(7)
    P = hy.partition(0)
    refine_ok = True
    for _ in range(1000):
        w = _random_word(rng)
        classes = [P.class_of(w, k) for k in range(11)]
        refine_ok &= all(classes[k + 1][:k] == classes[k] for k in range(10))
    ok = exact and bounds and aud_ok and refine_ok
    aud = " ".join(f"(k={a['k']},R={a['radius']}):fold={a['max_fold']},"
                   f"dist={a['min_same_class_distance']}" for a in audits)
    assert report("CRITERION 7 hierarchical partition", ok,
                  f"F exact={exact} bounds={bounds} {aud} refinement={refine_ok}")


# ---------------------------------------------------------------- criterion 8


def test_criterion_8_h_structure(report, q_star):
    spec = h_graph(q_star["q_star"], seed=0)
    rng = np.random.default_rng(0)
    iso = [hy.type1_copy_audit(spec, hy.root(spec, rng), 4) for _ in range(20)]
    # measure-drawn roots sit almost surely at level 0, where W is all of S;
    # type-2 vertices are drawn directly at levels with nontrivial classes
    P = hy.partition(spec.seed)
    type2 = set()
    for lv in range(2, 13):
        v1 = ("T", 0, lv, (0, 0))
        while sum(1 for v in type2 if v[1] == v1) < 20:
            w0, v2 = (tuple(_random_word(rng)) for _ in range(2))
            W = P.class_of(w0, lv)
            if not P.contains(W, v2):
                type2.add(("H", v1, v2, W))
    degs = {len(neighbors(spec, v)) for v in type2}
    amen = hy.nonamenability_audit(spec, n_sets=100, max_size=200, seed=0)
    ok = all(iso) and degs == {4} and amen["passed"]
    assert report("CRITERION 8 H structure", ok,
                  f"isomorphic {sum(iso)}/{len(iso)} type2 degrees {sorted(degs)} "
                  f"({len(type2)} vertices) boundary/|K| min={amen['min_ratio']:.3f} "
                  f"failures={amen['failures']}")


# ---------------------------------------------------------------- criterion 9


def test_criterion_9_susceptibility(report, q_star):
    q = q_star["q_star"]
    mc = pc.chi_mc(section4_graph(q), q, 0, 8, budget=10_000, trials=200, seed=0)
    ratio = mc["ratio"]
    C = mc["C_hat"]
    bounded = all(math.isfinite(r) for r in ratio) and max(ratio[5:]) <= max(ratio[:5])
    t = chi_tilde_recursion(C, 1.0, q, None, i_max=12, k_max=20)
    ok = bounded and math.isfinite(t.M) and t.contraction <= 0.5 and t.bound_holds()
    assert report("CRITERION 9 susceptibility", ok,
                  f"C_hat={C:.3f} ratios={[round(r, 4) for r in ratio]} M={t.M} "
                  f"contraction={t.contraction:.3f} table bound={t.bound_holds()}")


# ---------------------------------------------------------------- criterion 10


def _cli_output(tmp_path, *args):
    out = tmp_path / "run.out"
    assert cli.main([*args, "--out", str(out)]) == 0
    return re.sub(r'"duration_s": [0-9.eE+-]+', '"duration_s": 0', out.read_text())


def _restricted(spec, b):
    inside = set(b.vertices)
    return lambda v: [(u, m) for u, m in neighbors(spec, v, check=False) if u in inside]


FINITE = [(canopy(3), ("C", 0, 2), 4), (multi_edge(3, 1.0), ("C", 1, 3), 4),
          (tree_of_tori(5, 2, 2), ("T", 0, 2, (1, 2)), 2),
          (subdivided(5, 2, 2, q=0.6), ("T", 0, 1, (1, 0)), 4)]


def test_criterion_10_determinism_and_oracles(report, tmp_path):
    runs = [("ball-dump", "--family", "TreeOfTori", "--radius", "3"),
            ("survival-curve", "--p-grid", "0.55,0.6", "--trials", "50", "--budget", "1000")]
    replay = all(_cli_output(tmp_path, "--experiment", a[0], *a[1:]) ==
                 _cli_output(tmp_path, "--experiment", a[0], *a[1:]) for a in runs)
    spec = subdivided(5, 2, 2, q=0.6)
    r1 = pc.explore_cluster(spec, pc.PercolationSample(0.7, 3), ("T", 0, 2, (0, 1)), 2000)
    r2 = pc.explore_cluster(spec, pc.PercolationSample(0.7, 3), ("T", 0, 2, (0, 1)), 2000)
    replay &= r1.key() == r2.key()

    rng = np.random.default_rng(10)
    balls = [(s, ball(s, c, R)) for s, c, R in FINITE]
    equiv = 0
    for t in range(200):
        s, b = balls[t % len(balls)]
        sample = pc.PercolationSample(float(rng.uniform(0.1, 0.9)), int(rng.integers(2**32)))
        start = b.vertices[int(rng.integers(len(b.vertices)))]
        ds = pc.ball_components(b, sample)
        rep = pc.explore_cluster(s, sample, start, 10**9, nbr=_restricted(s, b))
        equiv += set(rep.vertices) == ds.groups()[ds.find(start)] and not rep.truncated

    cspec = multi_edge(3, 0.5)
    cball = ball(cspec, ("C", 0, 3), 6)
    nbr = _restricted(cspec, cball)
    contained = 0
    for t in range(100):
        seed = int(rng.integers(2**32))
        start = cball.vertices[int(rng.integers(len(cball.vertices)))]
        lo = pc.explore_cluster(cspec, pc.PercolationSample(0.3, seed), start, 10**9, nbr=nbr)
        hi = pc.explore_cluster(cspec, pc.PercolationSample(0.6, seed), start, 10**9, nbr=nbr)
        contained += lo.vertices <= hi.vertices
    ok = replay and equiv == 200 and contained == 100
    assert report("CRITERION 10 determinism and oracles", ok,
                  f"replay={replay} explorer=union-find {equiv}/200 coupling {contained}/100")
