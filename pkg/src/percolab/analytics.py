"""Closed-form layer: schedules, the survival product on the multi-edge canopy
tree, series criteria, and the susceptibility bound recursion."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DivergenceError, PrecisionError, ScheduleError

LOG2 = math.log(2.0)
LOG4 = math.log(4.0)
LOG10 = math.log(10.0)


def log_plus(x) -> float:
    """``1`` for ``x <= e`` and ``log x`` above; continuous at ``e``.

    Accepts arbitrarily large Python ints.
    """
    if x < 0:
        raise ValueError("log_plus is defined for x >= 0")
    if x <= math.e:
        return 1.0
    return math.log(x)


# ---------------------------------------------------------------- schedules


def m_gamma(n: int, gamma: float) -> int:
    """Multiplicity of the height-``n`` to ``n+1`` edge bundle in G_{d,gamma}."""
    val = math.ceil((log_plus(n) + gamma * log_plus(log_plus(n))) / LOG2)
    if val <= 0:
        raise ScheduleError(f"m_gamma({n}, {gamma}) = {val} is not positive")
    return val


def m_pc(level: int, q: float) -> int:
    """Path length making ``q**m(l)`` comparable to ``4**-l (l+1)**2``."""
    _check_q(q)
    return max(1, math.ceil(((level + 2) * LOG4 - 2 * log_plus(level)) / math.log(1 / q)))


def m_section4(level: int, q: float) -> int:
    _check_q(q)
    return max(1, math.ceil((2 * log_plus(level) + 4 * LOG10) / math.log(1 / q)))


def r_section4(level: int) -> int:
    return math.ceil(log_plus(level) / LOG2)


def _check_q(q):
    if not 0 < q < 1:
        raise ScheduleError(f"q must lie in (0, 1), got {q}")


_KINDS = ("const", "m_gamma", "m_pc", "m_section4", "r_section4")


@lru_cache(maxsize=1 << 16)
def _schedule_value(kind: str, param, level: int) -> int:
    if kind == "const":
        return int(param)
    if kind == "m_gamma":
        return m_gamma(level, param)
    if kind == "m_pc":
        return m_pc(level, param)
    if kind == "m_section4":
        return m_section4(level, param)
    if kind == "r_section4":
        return r_section4(level)
    raise ScheduleError(f"unknown schedule kind {kind!r}")


@dataclass(frozen=True, order=True)
class Schedule:
    """A named integer schedule ``level -> value`` (memoised lazily)."""

    kind: str
    param: float | int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ScheduleError(f"unknown schedule kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind in ("m_pc", "m_section4"):
            _check_q(self.param)
        if self.kind == "const" and (self.param is None or int(self.param) < 0):
            raise ScheduleError("const schedule needs a nonnegative value")

    def __call__(self, level: int) -> int:
        if level < 0:
            raise ScheduleError("schedules are defined on levels >= 0")
        return _schedule_value(self.kind, self.param, level)

    @classmethod
    def parse(cls, text: str) -> "Schedule":
        """Parse ``kind`` or ``kind:param`` (e.g. ``m_pc:0.6``, ``const:1``)."""
        kind, _, param = str(text).partition(":")
        kind = kind.strip()
        if not param:
            return cls(kind)
        value = float(param)
        if kind == "const":
            value = int(value)
        return cls(kind, value)

    def __str__(self):
        return self.kind if self.param is None else f"{self.kind}:{self.param:g}"

    def check(self, horizon: int = 10_000, max_increment: int | None = None) -> int:
        """Assert nondecreasing with bounded increments up to ``horizon``.

        Returns the largest increment seen.
        """
        prev = self(0)
        worst = 0
        for level in range(1, horizon + 1):
            cur = self(level)
            if cur < prev:
                raise ScheduleError(f"schedule {self} decreases at level {level}")
            worst = max(worst, cur - prev)
            prev = cur
        if max_increment is not None and worst > max_increment:
            raise ScheduleError(f"schedule {self} has increment {worst} > {max_increment}")
        return worst


# ---------------------------------------------------------------- survival on G_{d,gamma}


def survival_positive(p: float, gamma: float) -> bool:
    """Exact criterion for an infinite cluster at a vertex of G_{d,gamma}."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    return p > 0.5 or (p == 0.5 and gamma > 1)


def _run_end(n: int, gamma: float, m: int) -> int:
    """Largest n' >= n with m_gamma(n') == m, assuming monotonicity past n."""
    step = 1
    hi = n
    while m_gamma(hi + step, gamma) == m:
        hi += step
        step *= 2
    lo, up = hi, hi + step  # m(lo) == m, m(up) > m
    while up - lo > 1:
        mid = (lo + up) // 2
        if m_gamma(mid, gamma) == m:
            lo = mid
        else:
            up = mid
    return lo


def _tail_bound(N: int, p: float, gamma: float) -> float:
    """Upper bound on sum_{n>=N} (1-p)^{m_gamma(n)} for N in the monotone region."""
    a = math.log(1 / (1 - p)) / LOG2
    b = gamma * a
    u0 = math.log(N)
    # first term plus integral of the decreasing envelope t^-a (log t)^-b
    first = math.exp(-a * u0 - b * math.log(u0))
    if a > 1:
        if b >= 0:
            integral = math.exp(-(a - 1) * u0 - b * math.log(u0)) / (a - 1)
        else:
            if u0 < 2 * -b / (a - 1):
                return math.inf
            integral = 2 * math.exp(-b * math.log(u0) - (a - 1) * u0) / (a - 1)
    else:
        if b <= 1:
            return math.inf
        integral = math.exp((1 - b) * math.log(u0)) / (b - 1)
    return first + integral


@dataclass
class ThetaResult:
    value: float
    error: float
    lower: float
    upper: float
    terms: int = 0  # number of n values folded into the partial product

    def __float__(self):
        return self.value


def theta_product(level: int, p: float, gamma: float, tolerance: float = 1e-9,
                  max_runs: int = 50_000) -> ThetaResult:
    """prod_{n>=level} (1 - (1-p)^{m_gamma(n)}) with a certified error bound.

    The partial product is accumulated over runs of constant ``m_gamma``; the
    remainder is controlled through ``-log(1-x) <= x/(1-x)`` and an integral
    bound on the power-log envelope of ``(1-p)^{m_gamma(n)}``.
    """
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    if p == 1:
        return ThetaResult(1.0, 0.0, 1.0, 1.0)
    if not survival_positive(p, gamma):
        return ThetaResult(0.0, 0.0, 0.0, 0.0)

    q = 1.0 - p
    # below n0 m_gamma need not be monotone; fold those terms one by one
    n0 = max(16, level, math.ceil(math.exp(min(-gamma, 50.0))) + 2)
    if -gamma > math.log(1e7):
        raise PrecisionError(f"gamma={gamma} puts the monotone region beyond reach")
    log_v = 0.0
    for n in range(level, n0):
        log_v += math.log1p(-q ** m_gamma(n, gamma))
    n = max(level, n0)
    if gamma < 0:
        a = math.log(1 / q) / LOG2
        if a > 1:
            u_min = 2 * -gamma * a / (a - 1)
            if u_min > math.log(1e7):
                raise PrecisionError(f"p={p}, gamma={gamma}: tail envelope starts beyond 1e7")
            n = max(n, math.ceil(math.exp(u_min)) + 1)
        for k in range(max(level, n0), n):
            log_v += math.log1p(-q ** m_gamma(k, gamma))
    runs = 0
    while True:
        m = m_gamma(n, gamma)
        x_n = q ** m
        tail = _tail_bound(n, p, gamma)
        v = math.exp(log_v)
        if math.isfinite(tail):
            lower = v * math.exp(-tail / (1 - x_n))
            if v - lower <= 2 * tolerance:
                return ThetaResult((v + lower) / 2, (v - lower) / 2, lower, v, terms=n - level)
        if runs >= max_runs or n.bit_length() > 1000:
            raise PrecisionError(f"tolerance {tolerance} not reached after {runs} runs (n={n})")
        end = _run_end(n, gamma, m)
        log_v += (end - n + 1) * math.log1p(-x_n)
        n = end + 1
        runs += 1


def partial_series(p: float, gamma: float, n_max: int, start: int = 0) -> float:
    """sum_{start<=n<=n_max} (1-p)^{m_gamma(n)} evaluated term by term (vectorised)."""
    n = np.arange(start, n_max + 1, dtype=np.float64)
    lp = np.where(n <= math.e, 1.0, np.log(np.maximum(n, 1.0)))
    llp = np.where(lp <= math.e, 1.0, np.log(lp))
    m = np.ceil((lp + gamma * llp) / LOG2)
    return float(np.sum((1 - p) ** m))


# ---------------------------------------------------------------- schedule report


def schedule_checks(q: float, horizon: int = 10_000) -> dict:
    """Evaluate the schedule constraints of both constructions over ``1..horizon``."""
    _check_q(q)
    lq = math.log(q)
    levels = range(1, horizon + 1)

    # m_pc sandwich: c 4^-l (l+1)^2 <= q^m <= 4^-l (l+1)^2, in logs
    ratios = [m_pc(l, q) * lq + l * LOG4 - 2 * math.log(l + 1) for l in levels]
    pc_upper_ok = max(ratios) <= 1e-12
    pc = {
        "upper_bound_holds": pc_upper_ok,
        "max_ratio": math.exp(max(ratios)),
        "best_c": math.exp(min(ratios)),
        "violations": [l for l, r in zip(levels, ratios) if r > 1e-12][:20],
        "max_increment": Schedule("m_pc", q).check(horizon),
    }

    r_ratio = [2.0 ** r_section4(l) / (l + 1) for l in levels]
    r_report = {
        "min_ratio": min(r_ratio),
        "max_ratio": max(r_ratio),
        "within_half_to_four": min(r_ratio) >= 0.5 and max(r_ratio) <= 4.0,
        "max_increment": Schedule("r_section4").check(horizon),
    }

    m4 = [m_section4(l, q) * lq + 2 * math.log(l + 1) for l in levels]
    m4_report = {
        "min_ratio": math.exp(min(m4)),
        "max_ratio": math.exp(max(m4)),
        "max_increment": Schedule("m_section4", q).check(horizon),
    }

    prod_levels = range(0, horizon + 1)
    prod = [2 * r_section4(l) * LOG2 + m_section4(l, q) * lq for l in prod_levels]
    worst = max(prod)
    worst_level = prod.index(worst)
    target = math.log(1e-4)
    bump = 0 if worst <= target else math.ceil((worst - target) / -lq)
    product = {
        "max_value": math.exp(worst),
        "argmax_level": worst_level,
        "bound": 1e-4,
        "holds": worst <= target,
        "suggested_m_bump": bump,
    }
    return {"q": q, "horizon": horizon, "m_pc": pc, "r_section4": r_report,
            "m_section4": m4_report, "section4_product": product}


# ---------------------------------------------------------------- traversals and chi-tilde


def alpha(M: int, q: float) -> float:
    return 2 * M * math.log(1 / q) / LOG2 - 4


def traversal_bound(k: float, M: int, q: float) -> float:
    """(4 q^M)^k / (1 - 4 q^M): expected open tree vertices beyond distance k."""
    x = 4 * q ** M
    if x >= 1:
        raise DivergenceError(f"4 q^M = {x:g} >= 1; the branching sum diverges")
    return x ** k / (1 - x)


def traversal_min_length(level: int) -> float:
    return 2 * log_plus(level) / LOG2


def traversal_sum_bound(level: int, M: int, q: float) -> float:
    """Bound on the total open probability of traversals leaving a level-``level`` vertex."""
    return traversal_bound(traversal_min_length(level), M, q)


def _weighted_square_sum(a: float, j_cap: int) -> tuple[np.ndarray, float]:
    """Weights (j v e)^-a for j <= j_cap and a bound on sum_{j>j_cap} (j v e)^-a (j+1)^2."""
    j = np.arange(j_cap + 1, dtype=np.float64)
    w = np.maximum(j, math.e) ** (-a)
    J = float(j_cap)
    tail = (1 + 1 / J) ** 2 * J ** (3 - a) / (a - 3)
    return w, tail


def contraction_factor(C: float, C_prime: float, q: float, M: int, j_cap: int = 10_000) -> float:
    """2 C C' / (1 - 4q^M) * sum_j (j v e)^-alpha(M) (j+1)^2  (upper bound)."""
    x = 4 * q ** M
    if x >= 1:
        raise DivergenceError(f"4 q^M = {x:g} >= 1")
    a = alpha(M, q)
    if a <= 3:
        raise DivergenceError(f"alpha(M)={a:g} <= 3; sum_j j^-alpha (j+1)^2 diverges")
    w, tail = _weighted_square_sum(a, j_cap)
    j = np.arange(j_cap + 1, dtype=np.float64)
    s = float(np.sum(w * (j + 1) ** 2)) + tail
    return 2 * C * C_prime / (1 - x) * s


def min_M(C: float, C_prime: float, q: float, M_cap: int = 100_000) -> int:
    """Smallest integer M with contraction factor <= 1/2."""
    _check_q(q)
    M = 1
    while 4 * q ** M >= 1 or alpha(M, q) <= 3:
        M += 1
    while M <= M_cap:
        if contraction_factor(C, C_prime, q, M) <= 0.5:
            return M
        M += 1
    raise PrecisionError(f"no M <= {M_cap} reaches contraction 1/2")


@dataclass
class ChiTable:
    chi_tilde: np.ndarray  # shape (i_max+1, k_max+1), level l fixed
    C: float
    C_prime: float
    q: float
    M: int
    alpha: float
    contraction: float
    contraction_prev: float | None = None
    extras: dict = field(default_factory=dict)

    def total(self) -> float:
        return float(self.chi_tilde.sum())

    def bound_holds(self) -> bool:
        i = np.arange(self.chi_tilde.shape[0])[:, None]
        k = np.arange(self.chi_tilde.shape[1])[None, :]
        bound = self.C * 2.0 ** (-i) * (k + 1.0) ** 2
        return bool(np.all(self.chi_tilde <= bound * (1 + 1e-12)))


def chi_tilde_recursion(C: float, C_prime: float, q: float, M: int | None = None,
                        i_max: int = 12, k_max: int = 20, j_cap: int = 10_000) -> ChiTable:
    """Evaluate the traversal-count recursion with chi(j,k) replaced by C (k+1)^2.

    ``M=None`` selects the minimal M whose contraction factor is <= 1/2.
    Row ``i`` is evaluated on ``j <= j_cap``; beyond that the row is dominated
    by its own largest ratio ``chi_tilde/(j+1)^2`` and the remainder is
    bounded analytically.
    """
    if M is None:
        M = min_M(C, C_prime, q)
    x = 4 * q ** M
    if x >= 1:
        raise DivergenceError(f"4 q^M = {x:g} >= 1")
    a = alpha(M, q)
    if a <= 3:
        raise DivergenceError(f"alpha(M)={a:g} <= 3")
    w, tail = _weighted_square_sum(a, j_cap)
    j = np.arange(j_cap + 1, dtype=np.float64)
    sq = (j + 1) ** 2
    pref = C_prime / (1 - x)
    row = C * sq  # i = 0: chi_tilde_0 <= chi <= C (k+1)^2
    rows = [row]
    for _ in range(i_max):
        amp = float(np.max(row / sq))
        s = float(np.sum(w * row)) + amp * tail
        row = pref * s * C * sq
        rows.append(row)
    table = np.array([r[: k_max + 1] for r in rows])
    prev = None
    try:
        prev = contraction_factor(C, C_prime, q, M - 1)
    except DivergenceError:
        pass
    return ChiTable(table, C, C_prime, q, M, a, contraction_factor(C, C_prime, q, M, j_cap),
                    prev)


def chi_mc(*args, **kwargs):
    """Monte Carlo susceptibility row; see :func:`percolab.percolation.chi_mc`."""
    from .percolation import chi_mc as _chi_mc

    return _chi_mc(*args, **kwargs)
