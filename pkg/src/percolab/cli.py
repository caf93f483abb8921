"""Command-line experiment runner.

Configuration comes from an optional YAML (or ``key: value``) file and from
flags; flags win. Every output starts with a header echoing the resolved
configuration, the seed, the package version, and the wall-clock duration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import AuditError, ConfigError, PercolabError, PrecisionError

EXPERIMENTS = ("ball-dump", "measure-dump", "mtp-check", "theta-curve", "survival-curve",
               "torus-sweep", "giant-chain", "partition-audit", "h-structure-audit",
               "chi-scan", "min-m-search")

DEFAULTS = {
    "experiment": None, "family": None, "d": None, "n": None, "r": None, "gamma": 0.0,
    "q": 0.6, "M": 1, "m_schedule": None, "r_schedule": None, "seed": 0,
    "p": None, "p_grid": None, "trials": 100, "budget": 10_000, "radius": 2, "k": 4,
    "level": 0, "max_k": 8, "levels": "3:6", "sides": "16,32,64,128", "epsilon": None,
    "C": None, "C_prime": 1.0, "i_max": 12, "k_max": 20, "workers": 1, "out": None,
    "format": None,
}
OUT_DIR_ENV = "PERCOLAB_OUT_DIR"


def version_string() -> str:
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                              capture_output=True, text=True, timeout=5,
                              cwd=Path(__file__).resolve().parent)
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# ---------------------------------------------------------------- config


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="percolab", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="YAML or key: value file; flags override it")
    ap.add_argument("--experiment", choices=EXPERIMENTS)
    ap.add_argument("--family")
    ap.add_argument("--d", type=int)
    ap.add_argument("--n", type=int)
    ap.add_argument("--r", type=int)
    ap.add_argument("--gamma", type=float)
    ap.add_argument("--q", type=float)
    ap.add_argument("--M", type=int)
    ap.add_argument("--m-schedule", dest="m_schedule")
    ap.add_argument("--r-schedule", dest="r_schedule")
    ap.add_argument("--p", type=float)
    ap.add_argument("--p-grid", dest="p_grid", help="start:stop:step or a comma list")
    ap.add_argument("--trials", type=int)
    ap.add_argument("--budget", help="an integer or a comma list")
    ap.add_argument("--radius", type=int)
    ap.add_argument("--k", type=int)
    ap.add_argument("--level", type=int)
    ap.add_argument("--max-k", dest="max_k", type=int)
    ap.add_argument("--levels", help="i0:i1 (inclusive) for giant-chain")
    ap.add_argument("--sides", help="comma list of torus sides for torus-sweep")
    ap.add_argument("--epsilon", type=float)
    ap.add_argument("--C", type=float)
    ap.add_argument("--C-prime", dest="C_prime", type=float)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out")
    ap.add_argument("--format", choices=("csv", "json"))
    return ap


def load_config_file(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML/key-value: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    data = {str(k).replace("-", "_"): v for k, v in data.items()}
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return data


def resolve(argv=None) -> dict:
    args = build_parser().parse_args(argv)
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(load_config_file(args.config))
    for key, val in vars(args).items():
        if key != "config" and val is not None:
            cfg[key] = val
    if cfg["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
    if cfg["format"] is None:
        cfg["format"] = "json" if cfg["experiment"] in (
            "ball-dump", "giant-chain", "partition-audit", "h-structure-audit",
            "min-m-search") else "csv"
    if cfg["format"] not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    return cfg


def parse_grid(text) -> list:
    if text is None:
        raise ConfigError("this experiment needs --p-grid or --p")
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    text = str(text)
    try:
        if ":" in text:
            a, b, s = (float(x) for x in text.split(":"))
            n = int(math.floor((b - a) / s + 1e-9)) + 1
            return [round(a + i * s, 12) for i in range(n)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}") from exc


def parse_ints(text) -> list:
    if isinstance(text, int):
        return [text]
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    try:
        return [int(float(x)) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad integer list {text!r}") from exc


def parse_range(text) -> list:
    s = str(text)
    try:
        if ":" in s:
            a, b = (int(x) for x in s.split(":"))
            return list(range(a, b + 1))
        return parse_ints(s)
    except ValueError as exc:
        raise ConfigError(f"bad level range {text!r}") from exc


def spec_from(cfg: dict, default_family: str):
    from .analytics import Schedule
    from .constructions import ConstructionSpec, Family

    fam = Family.parse(cfg["family"] or default_family)
    kw = {"family": fam, "seed": int(cfg["seed"]), "gamma": float(cfg["gamma"]),
          "q": float(cfg["q"]), "M": int(cfg["M"])}
    presets = {
        Family.CANOPY: dict(d=3),
        Family.MULTI_EDGE: dict(d=3),
        Family.TORI: dict(d=5, r=2, n=2),
        Family.TORI_SCHEDULE: dict(d=100, n=2, r_schedule="r_section4"),
        Family.SUBDIVIDED: dict(d=5, r=2, n=2, m_schedule=f"m_pc:{cfg['q']}"),
        Family.H: dict(d=100, n=2, r_schedule="r_section4", m_schedule=f"m_section4:{cfg['q']}"),
        Family.H_TILDE: dict(d=100, n=2, r_schedule="r_section4",
                             m_schedule=f"m_section4:{cfg['q']}"),
    }[fam]
    for key in ("d", "n", "r", "m_schedule", "r_schedule"):
        val = cfg[key] if cfg[key] is not None else presets.get(key)
        if val is None:
            continue
        if key.endswith("schedule"):
            val = val if isinstance(val, Schedule) else Schedule.parse(val)
        else:
            val = int(val)
        kw[key] = val
    if fam == Family.H and kw["M"] > 1:
        kw["family"] = Family.H_TILDE
    return ConstructionSpec(**kw)


# ---------------------------------------------------------------- experiments


def _pool_map(fn, items: list, workers: int) -> list:
    """Map preserving index order regardless of completion order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _default_center(spec):
    from .constructions import Family

    if spec.family in (Family.CANOPY, Family.MULTI_EDGE):
        return ("C", 0, 0)
    if spec.family in (Family.H, Family.H_TILDE):
        from .hierarchy import root

        return root(spec, np.random.default_rng(spec.seed))
    return ("T", 0, 0, (0,) * spec.n)


def exp_ball_dump(cfg):
    from .graph import ball

    spec = spec_from(cfg, "CanopyTree")
    b = ball(spec, _default_center(spec), int(cfg["radius"]), budget=int(parse_ints(cfg["budget"])[0]) * 100)
    obj = json.loads(b.to_json())
    rows = [{"vertex": json.dumps(v), "distance": dd}
            for v, dd in zip(obj["vertices"], obj["distances"])]
    return {"spec": spec.to_dict(), "ball": obj}, rows, \
        f"ball-dump: {len(b.vertices)} vertices, {len(b.edges)} edges"


def exp_measure_dump(cfg):
    from .measures import level_measure

    spec = spec_from(cfg, "CanopyTree")
    m = level_measure(spec)
    rows = [{"level": lv, "role": role, "position": pos, "weight": repr(w)}
            for lv, role, pos, w in m.rows()]
    total = math.fsum(float(w) for w in m.weights)
    return {"spec": spec.to_dict(), "tail": m.tail, "rows": rows}, rows, \
        f"measure-dump: {len(rows)} orbits, total weight {total:.15f}"


def exp_mtp(cfg):
    from .measures import battery, mtp_check

    spec = spec_from(cfg, "CanopyTree")
    res = mtp_check(spec, battery(), int(cfg["trials"]), int(cfg["seed"]))
    worst = max(abs(r["z"]) for r in res)
    if worst > 4:
        raise AuditError(f"mass transport check failed: max |z| = {worst:.2f} > 4",
                         ) from None
    return {"spec": spec.to_dict(), "results": res}, res, f"mtp-check: max |z| = {worst:.2f}"


def _theta_point(args):
    from .analytics import survival_positive, theta_product

    level, p, gamma = args
    # near p = 1/2 the tail decays like a power of log n; loosen until certifiable
    for tol in (1e-9, 1e-6, 1e-4, 1e-3, 1e-2, 1e-1):
        try:
            r = theta_product(level, p, gamma, tolerance=tol)
            break
        except PrecisionError:
            continue
    else:
        raise PrecisionError(f"theta at p={p}, gamma={gamma} not certifiable to 0.1")
    return {"p": p, "gamma": gamma, "level": level, "value": r.value, "error": r.error,
            "lower": r.lower, "upper": r.upper, "survival_positive": survival_positive(p, gamma)}


def exp_theta(cfg):
    grid = parse_grid(cfg["p_grid"] if cfg["p_grid"] is not None else cfg["p"])
    rows = _pool_map(_theta_point, [(int(cfg["level"]), p, float(cfg["gamma"])) for p in grid],
                     int(cfg["workers"]))
    mono = all(a["value"] <= b["value"] + a["error"] + b["error"] for a, b in zip(rows, rows[1:]))
    return {"rows": rows, "monotone": mono}, rows, \
        f"theta-curve: {len(rows)} points, monotone={mono}"


def _survival_point(args):
    from .analytics import theta_product
    from .percolation import survival_estimate, truncation_allowance

    spec, p, budget, trials, seed = args
    r = survival_estimate(spec, p, budget, trials, seed)
    if spec.family.value == "MultiEdgeCanopy" and p > 0.5:
        th = theta_product(0, p, spec.gamma).value
        r["theta"] = th
        r["allowance"] = truncation_allowance(spec.d, spec.gamma, p, budget)
    return r


def exp_survival(cfg):
    spec = spec_from(cfg, "MultiEdgeCanopy")
    grid = parse_grid(cfg["p_grid"] if cfg["p_grid"] is not None else cfg["p"])
    budgets = parse_ints(cfg["budget"])
    items = [(spec, p, b, int(cfg["trials"]), int(cfg["seed"])) for p in grid for b in budgets]
    rows = _pool_map(_survival_point, items, int(cfg["workers"]))
    return {"spec": spec.to_dict(), "rows": rows}, rows, f"survival-curve: {len(rows)} points"


def _torus_point(args):
    from .percolation import torus_giant

    n, p, trials, seed, eps = args
    r = torus_giant(n, p, trials, seed, threshold=0.75 - (eps or 0.0))
    return {"n": n, "p": p, "epsilon": eps, "trials": trials, "failure": r["failure"],
            "failure_stderr": r["failure_stderr"], "mean_fraction": r["mean"]}


def exp_torus(cfg):
    sides = parse_ints(cfg["sides"])
    if cfg["p"] is None:
        raise ConfigError("torus-sweep needs --p")
    items = [(n, float(cfg["p"]), int(cfg["trials"]), int(cfg["seed"]), cfg["epsilon"])
             for n in sides]
    rows = _pool_map(_torus_point, items, int(cfg["workers"]))
    mono = all(b["failure"] <= a["failure"] for a, b in zip(rows, rows[1:]))
    return {"rows": rows, "nonincreasing": mono}, rows, \
        f"torus-sweep: failures {[r['failure'] for r in rows]}, nonincreasing={mono}"


def exp_giant_chain(cfg):
    from .percolation import giant_chain_experiment

    spec = spec_from(cfg, "SubdividedTreeOfTori")
    q = float(cfg["p"] if cfg["p"] is not None else cfg["q"])
    rows = giant_chain_experiment(spec, q, parse_range(cfg["levels"]), int(cfg["trials"]),
                                  int(cfg["seed"]))
    return {"spec": spec.to_dict(), "q": q, "rows": rows}, rows, \
        "giant-chain: success " + ", ".join(f"i={r['level']}:{r['success']:.3f}" for r in rows)


def exp_partition(cfg):
    from .hierarchy import isolation_audit

    rep = isolation_audit(int(cfg["seed"]), int(cfg["k"]), int(cfg["radius"]))
    if not rep["passed"]:
        raise AuditError(f"partition audit failed: {rep}")
    return rep, [rep], (f"partition-audit: k={rep['k']} R={rep['radius']} "
                        f"min distance {rep['min_same_class_distance']} max fold {rep['max_fold']}")


def exp_h_structure(cfg):
    from .graph import neighbors
    from .hierarchy import (h_max_degree, is_type1, nonamenability_audit, root,
                            type1_copy_audit)

    spec = spec_from(cfg, "HGraph")
    rng = np.random.default_rng(int(cfg["seed"]))
    trials = int(cfg["trials"])
    iso = [type1_copy_audit(spec, root(spec, rng), int(cfg["radius"])) for _ in range(min(trials, 20))]
    deg2 = []
    for _ in range(min(trials, 50)):
        v = root(spec, rng, type2=True)
        if not is_type1(spec, v):
            deg2.append(len(neighbors(spec, v)))
    amen = nonamenability_audit(spec, n_sets=trials, seed=int(cfg["seed"]))
    rep = {"spec": spec.to_dict(), "type1_isomorphic": all(iso), "type1_checked": len(iso),
           "type2_degrees": sorted(set(deg2)), "type2_checked": len(deg2),
           "max_degree_bound": h_max_degree(spec), "nonamenability": amen}
    rep["passed"] = rep["type1_isomorphic"] and set(deg2) <= {4} and amen["passed"]
    if not rep["passed"]:
        raise AuditError(f"H structure audit failed: {rep}")
    return rep, [{k: v for k, v in rep.items() if k not in ("spec", "nonamenability")}], \
        f"h-structure-audit: passed ({len(iso)} copies, {amen['sets']} sets)"


def exp_chi(cfg):
    from .constructions import section4_graph
    from .percolation import chi_mc

    q = float(cfg["q"])
    spec = section4_graph(q)
    r = chi_mc(spec, q, int(cfg["level"]), int(cfg["max_k"]), int(parse_ints(cfg["budget"])[0]),
               int(cfg["trials"]), int(cfg["seed"]))
    rows = [{"k": k, "chi": c, "stderr": s, "ratio": rt}
            for k, (c, s, rt) in enumerate(zip(r["chi"], r["stderr"], r["ratio"]))]
    return r, rows, f"chi-scan: C_hat = {r['C_hat']:.4g}"


def exp_min_m(cfg):
    from .analytics import chi_tilde_recursion

    if cfg["C"] is None:
        raise ConfigError("min-m-search needs --C (e.g. the C_hat reported by chi-scan)")
    t = chi_tilde_recursion(float(cfg["C"]), float(cfg["C_prime"]), float(cfg["q"]), None,
                            int(cfg["i_max"]), int(cfg["k_max"]))
    rep = {"M": t.M, "alpha": t.alpha, "contraction": t.contraction,
           "contraction_prev": t.contraction_prev, "bound_holds": t.bound_holds(),
           "total": t.total(), "C": t.C, "C_prime": t.C_prime, "q": t.q,
           "table": t.chi_tilde.tolist()}
    rows = [{"i": i, "k": k, "chi_tilde": float(t.chi_tilde[i, k])}
            for i in range(t.chi_tilde.shape[0]) for k in range(t.chi_tilde.shape[1])]
    if not rep["bound_holds"]:
        raise AuditError("chi-tilde table violates C 2^-i (k+1)^2")
    return rep, rows, f"min-m-search: M = {t.M}, contraction = {t.contraction:.4g}"


RUNNERS = {
    "ball-dump": exp_ball_dump, "measure-dump": exp_measure_dump, "mtp-check": exp_mtp,
    "theta-curve": exp_theta, "survival-curve": exp_survival, "torus-sweep": exp_torus,
    "giant-chain": exp_giant_chain, "partition-audit": exp_partition,
    "h-structure-audit": exp_h_structure, "chi-scan": exp_chi, "min-m-search": exp_min_m,
}


# ---------------------------------------------------------------- output


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, (frozenset, set)):
        return sorted(_jsonable(v) for v in x)
    return x


def render(cfg: dict, result, rows, duration: float) -> str:
    header = {"config": _jsonable(cfg), "seed": cfg["seed"], "version": version_string(),
              "duration_s": round(duration, 3)}
    if cfg["format"] == "json":
        return json.dumps({"header": header, "result": _jsonable(result)}, sort_keys=True,
                          indent=1) + "\n"
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    rows = [_jsonable(r) for r in rows]
    if rows:
        cols = list(rows[0].keys())
        w = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (json.dumps(v) if isinstance(v, (list, dict)) else v)
                        for k, v in r.items()})
    return buf.getvalue()


def run(cfg: dict) -> int:
    t0 = time.perf_counter()
    result, rows, summary = RUNNERS[cfg["experiment"]](cfg)
    text = render(cfg, result, rows, time.perf_counter() - t0)
    out = cfg["out"]
    if out is None and os.environ.get(OUT_DIR_ENV):
        out = str(Path(os.environ[OUT_DIR_ENV]) / f"{cfg['experiment']}.{cfg['format']}")
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    print(summary, file=sys.stderr if out in (None, "-") else sys.stdout)
    return 0


def main(argv=None) -> int:
    try:
        cfg = resolve(argv)
        return run(cfg)
    except PercolabError as exc:
        print(f"percolab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:  # argparse usage errors
        return 2 if exc.code not in (0, None) else 0


if __name__ == "__main__":
    sys.exit(main())


def main_exit() -> None:
    sys.exit(main())
