"""Closed-form convergence bounds for FCFL and numeric checks of their lemmas.

Natural logarithms throughout.  Shorthand used in names and docstrings:

    dt    = (delta + 1 - b) / (delta + 1)   per-slot survival factor
    k     = 1 + 2 ln(2 / (2 - b))
    alpha = b / (delta + 1)
    gamma = b / D
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Iterable, Optional

import numpy as np
from scipy import optimize

__all__ = [
    "DriftParams",
    "BoundReport",
    "phi",
    "psi_tight",
    "psi_loose",
    "drift_recursion",
    "lemma4_oracle",
    "lemma4_relaxed",
    "lemma5_checks",
    "lemma6_f",
    "lemma6_monotone",
    "alpha_star",
    "lemma7_terms",
    "lemma7_check",
    "expected_z_bound",
    "theorem2_bound",
    "theorem1_bound",
    "eval_formula",
    "FORMULAS",
]

LEMMA4_MAX_N = 8
_LOG_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class DriftParams:
    N: int
    delta: int
    b: float = 1.0
    D: Optional[int] = None

    def __post_init__(self):
        if self.delta < 1:
            raise ValueError("maximum degree must be >= 1")
        if not (0.0 < self.b <= 1.0):
            raise ValueError("b must lie in (0, 1]")

    @property
    def log_dt(self) -> float:
        return math.log1p(-self.b / (self.delta + 1))

    @property
    def dt(self) -> float:
        return (self.delta + 1 - self.b) / (self.delta + 1)

    @property
    def k(self) -> float:
        return 1.0 + 2.0 * math.log(2.0 / (2.0 - self.b))

    @property
    def alpha(self) -> float:
        return self.b / (self.delta + 1)

    @property
    def gamma(self) -> Optional[float]:
        return None if self.D is None else self.b / self.D


@dataclass
class BoundReport:
    formula_id: str
    inputs: dict
    value: float
    valid: bool = True
    flags: dict = field(default_factory=dict)
    log_value: Optional[float] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("value", "log_value"):
            v = d[key]
            if v is not None and not math.isfinite(v):
                d[key] = "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        return d


# -- drift bounds -------------------------------------------------------------

def phi(Z: float, p: DriftParams) -> float:
    """Expected non-permanent vertices left after one slot, non-permanent part."""
    if Z < 0:
        raise ValueError("Z must be >= 0")
    return p.dt * Z


def psi_tight(Z: float, N: float, p: DriftParams) -> float:
    """Concave bound on permanent vertices knocked out at a reset slot."""
    if not (0 <= Z <= N):
        raise ValueError("need 0 <= Z <= N")
    if Z == N:
        return 0.0
    expo = p.delta * Z / (N - Z)
    return -math.expm1(expo * p.log_dt) * (N - Z)


def psi_loose(Z: float, N: float, p: DriftParams) -> float:
    """Linear bound: every permanent vertex faces delta possible colliders."""
    if not (0 <= Z <= N):
        raise ValueError("need 0 <= Z <= N")
    return -math.expm1(p.delta * p.log_dt) * (N - Z)


def drift_recursion(Z: float, N: float, p: DriftParams) -> float:
    """Upper bound on E[Z] after a reset slot entered with Z non-permanent vertices."""
    return phi(Z, p) + psi_tight(Z, N, p)


def lemma4_oracle(N: int, Z: int, delta: int, b: float = 1.0):
    """Exhaustive integer maximum of sum_i (1 - dt^n_i) with sum n_i <= delta*Z.

    The sum runs over the ``N - Z`` permanent vertices; ``n_i`` is how many
    non-permanent neighbours vertex i has.  Returns ``(max, argmax)``.
    """
    if N > LEMMA4_MAX_N:
        raise ValueError(f"exhaustive search is limited to N <= {LEMMA4_MAX_N}")
    if not (0 <= Z <= N):
        raise ValueError("need 0 <= Z <= N")
    p = DriftParams(N, delta, b)
    m, budget = N - Z, delta * Z
    if m == 0:
        return 0.0, ()
    # stars and bars with a slack bin: bar positions among budget + m cells
    bars = np.array(list(combinations(range(budget + m), m)), dtype=np.int64)
    n = np.diff(np.concatenate([np.full((bars.shape[0], 1), -1), bars], axis=1), axis=1) - 1
    vals = -np.expm1(n * p.log_dt).sum(axis=1)
    best = int(np.argmax(vals))
    return float(vals[best]), tuple(int(x) for x in n[best])


def lemma4_relaxed(N: int, Z: int, delta: int, b: float = 1.0):
    """Numerical optimum of the continuous relaxation (SLSQP), for cross-checking."""
    p = DriftParams(N, delta, b)
    m, budget = N - Z, delta * Z
    if m == 0 or budget == 0:
        return 0.0, np.zeros(m)
    obj = lambda x: np.expm1(x * p.log_dt).sum()
    jac = lambda x: np.exp(x * p.log_dt) * p.log_dt
    x0 = np.linspace(0.1, 1.9, m) * budget / m / 2
    res = optimize.minimize(obj, x0, jac=jac, method="SLSQP", bounds=[(0, None)] * m,
                            constraints=[{"type": "ineq", "fun": lambda x: budget - x.sum(),
                                          "jac": lambda x: -np.ones(m)}],
                            options={"ftol": 1e-14, "maxiter": 500})
    return float(-res.fun), res.x


# -- identities -------------------------------------------------------------------

def lemma5_checks(b: float = 1.0, delta_grid: Optional[Iterable[int]] = None,
                  alpha_grid: Optional[Iterable[float]] = None,
                  b_grid: Optional[Iterable[float]] = None) -> dict:
    """Numeric checks of the dt identities.  ``report["failed"]`` names violations.

    range_stated   dt^(a/(1-a))       lies in [e^(-a/(1-a)), 1]
    range_proof    dt^(a*delta/(1-a)) lies in [e^(-a/(1-a)), 1]
    monotone       dt^(delta+1) increases with delta
    limit          dt^(delta+1) is within 1e-3 of e^-b at delta = 10^6
    k_over_eb      k / e^b < 1
    """
    deltas = np.asarray(list(delta_grid) if delta_grid is not None
                        else np.unique(np.round(np.logspace(0, 6, 400))).astype(int))
    alphas = np.asarray(list(alpha_grid) if alpha_grid is not None else np.linspace(0.01, 0.99, 99))
    bs = np.asarray(list(b_grid) if b_grid is not None else np.linspace(0.01, 1.0, 100))
    log_dt = np.log1p(-b / (deltas + 1.0))
    report = {"failed": []}

    r = alphas[None, :] / (1 - alphas[None, :])
    lo = np.exp(-r)
    stated = np.exp(log_dt[:, None] * r)
    proof = np.exp(log_dt[:, None] * deltas[:, None] * r)
    report["range_stated"] = bool(np.all((stated >= lo - 1e-12) & (stated <= 1 + 1e-12)))
    report["range_proof"] = bool(np.all((proof >= lo - 1e-12) & (proof <= 1 + 1e-12)))

    pw = np.exp((deltas + 1.0) * log_dt)
    report["monotone"] = bool(np.all(np.diff(pw) > 0))
    big = math.exp(1_000_001 * math.log1p(-b / 1_000_001))
    report["limit_gap"] = abs(big - math.exp(-b))
    report["limit"] = report["limit_gap"] < 1e-3
    ks = 1 + 2 * np.log(2 / (2 - bs))
    report["k_over_eb_max"] = float(np.max(ks / np.exp(bs)))
    report["k_over_eb"] = report["k_over_eb_max"] < 1
    report["failed"] = [name for name in ("range_stated", "range_proof", "monotone", "limit", "k_over_eb")
                        if not report[name]]
    return report


def lemma6_f(Z: float, N: float, delta: int, b: float = 1.0) -> float:
    return psi_tight(Z, N, DriftParams(int(N), delta, b))


def _h_of_exp(lx):
    # h(e^lx) without forming log(e^lx)
    x = math.exp(lx)
    return x * lx / math.expm1(lx)


def alpha_star(xtol: float = 1e-10) -> float:
    """Root of a = h(exp(-a/(1-a))), h(x) = x ln x / (x - 1), on (1/2, 1)."""
    g = lambda a: a - _h_of_exp(-a / (1 - a))
    return optimize.bisect(g, 0.5, 0.99, xtol=xtol)


def lemma6_monotone(N: int, delta: int, b: float = 1.0, alpha: float = 0.5) -> bool:
    """f is non-decreasing on the integers 0..floor(alpha*N)."""
    zs = range(int(math.floor(alpha * N)) + 1)
    vals = np.array([lemma6_f(z, N, delta, b) for z in zs])
    return bool(np.all(np.diff(vals) >= -1e-12 * np.maximum(1.0, vals[1:])))


def lemma7_terms(delta: int, tau: int, b: float):
    """``(lhs, rhs, X)`` of the one-epoch clean bound, fractions of N."""
    p = DriftParams(2, delta, b)
    log_x = tau * (delta + 1) * p.log_dt + (tau - 1) * math.log(p.k)
    X = math.exp(log_x)
    dt = p.dt
    knocked = -math.expm1(delta * X / (1 - X) * p.log_dt)
    lhs = dt * X + knocked * (1 - X)
    rhs = p.k * dt * X
    return lhs, rhs, X


def lemma7_check(delta_grid: Iterable[int], tau_grid: Iterable[int], b_grid: Iterable[float],
                 rtol: float = 1e-12) -> dict:
    """Evaluate the clean bound and the monotonicity claims behind it on a grid."""
    deltas, taus, bs = list(delta_grid), list(tau_grid), list(b_grid)
    violations, aux = [], []
    worst = -math.inf
    for b in bs:
        k = 1 + 2 * math.log(2 / (2 - b))
        X = np.empty((len(deltas), len(taus)))
        for i, d in enumerate(deltas):
            for j, t in enumerate(taus):
                lhs, rhs, X[i, j] = lemma7_terms(d, t, b)
                worst = max(worst, lhs / rhs)
                if lhs > rhs * (1 + rtol):
                    violations.append((d, t, b, lhs, rhs))
        if len(deltas) > 1 and not np.all(np.diff(X, axis=0) >= -1e-15):
            aux.append(("X increasing in delta", b))
        if len(taus) > 1 and not np.all(np.diff(X, axis=1) <= 1e-15):
            aux.append(("X decreasing in tau", b))
        if np.any(X > math.exp(-b) * (1 + 1e-12)):
            aux.append(("X <= e^-b", b))
        d_arr = np.asarray(deltas, dtype=float)
        f_star = 1 - (d_arr + 1) * np.log1p(-b / (d_arr + 1))
        if np.any(f_star > k * (1 + 1e-12)):
            aux.append(("F*(delta) <= k", b))
        if len(deltas) > 1 and not np.all(np.diff(f_star) <= 1e-15):
            aux.append(("F* decreasing in delta", b))
        f1 = 1 - 2 * math.log1p(-b / 2)
        if abs(f1 - k) > 1e-12:
            aux.append(("F*(1) = k", b))
    return {"violations": violations, "aux_failures": aux, "max_ratio": worst,
            "points": len(deltas) * len(taus) * len(bs)}


# -- convergence bounds ------------------------------------------------------------

def expected_z_bound(tau: int, N: float, delta: int, b: float = 1.0) -> float:
    """Bound on expected non-permanent vertices entering the tau-th reset slot."""
    if tau < 1:
        raise ValueError("tau starts at 1")
    p = DriftParams(int(N), delta, b)
    return math.exp((tau - 1) * math.log(p.k) + math.log(N) + tau * (delta + 1) * p.log_dt)


def theorem2_bound(N: float, delta: int, eps: float, b: float = 1.0, *,
                   form: str = "canonical") -> BoundReport:
    """Reset epochs after which P(still improper) <= eps.

    ``form="canonical"`` is the expression that follows from the
    expected-Z recursion: ``(ln N + ln 1/eps - ln k) / ((delta+1) ln(1/dt) - ln k)``.
    ``form="statement"`` divides the ``-ln k`` term of the denominator by
    ``delta + 1``; it is kept only for comparison.
    """
    if N < 2 or delta < 1 or not (0 < eps < 1):
        raise ValueError("need N >= 2, delta >= 1, 0 < eps < 1")
    p = DriftParams(int(N), delta, b)
    log_k = math.log(p.k)
    num = math.log(N) + math.log(1 / eps) - log_k
    if form == "canonical":
        den = -(delta + 1) * p.log_dt - log_k
        fid = "theorem2"
    elif form == "statement":
        den = -(delta + 1) * p.log_dt - log_k / (delta + 1)
        fid = "theorem2_statement"
    else:
        raise ValueError("form is 'canonical' or 'statement'")
    flags = {"denominator_positive": den > 0, "b_is_one": b == 1.0}
    value = num / den if den > 0 else math.inf
    return BoundReport(fid, {"N": N, "delta": delta, "eps": eps, "b": b}, value,
                       valid=bool(den > 0), flags=flags)


def theorem1_bound(M: int, N: int, D: int, eps: float) -> BoundReport:
    """General-graph iteration bound ``M N exp(M N (N+1)/2 ln D) ln(1/eps)``.

    Evaluated in log space; values beyond float range come back as +inf
    with ``flags["overflow"]`` set and the exact logarithm in ``log_value``.
    """
    if M < 1 or N < 1 or D < 1 or not (0 < eps < 1):
        raise ValueError("need M, N, D >= 1 and 0 < eps < 1")
    log_v = math.log(M * N) + M * N * (N + 1) / 2 * math.log(D) + math.log(math.log(1 / eps))
    overflow = log_v >= _LOG_MAX
    value = math.inf if overflow else math.exp(log_v)
    return BoundReport("theorem1", {"M": M, "N": N, "D": D, "eps": eps}, value,
                       valid=True, flags={"overflow": overflow}, log_value=log_v)


FORMULAS = ("phi", "psi_tight", "psi_loose", "expected_z", "theorem2", "theorem2_statement",
            "theorem1", "alpha_star", "lemma6_f")


def eval_formula(formula: str, *, N=None, delta=None, b=1.0, eps=None, tau=None, Z=None,
                 M=None, D=None) -> BoundReport:
    """Evaluate a named formula; used by the command line."""

    def need(**kw):
        missing = [k for k, v in kw.items() if v is None]
        if missing:
            raise ValueError(f"{formula} needs --{' --'.join(missing)}")

    inputs = {k: v for k, v in dict(N=N, delta=delta, b=b, eps=eps, tau=tau, Z=Z, M=M, D=D).items()
              if v is not None}
    if formula == "theorem2" or formula == "theorem2_statement":
        need(N=N, delta=delta, eps=eps)
        return theorem2_bound(N, delta, eps, b, form="canonical" if formula == "theorem2" else "statement")
    if formula == "theorem1":
        need(N=N, eps=eps)
        D = D if D is not None else (delta + 1 if delta is not None else None)
        M = M if M is not None else (delta + 1 if delta is not None else None)
        need(D=D, M=M)
        return theorem1_bound(M, N, D, eps)
    if formula == "alpha_star":
        return BoundReport("alpha_star", inputs, alpha_star())
    if formula == "expected_z":
        need(N=N, delta=delta, tau=tau)
        return BoundReport(formula, inputs, expected_z_bound(tau, N, delta, b))
    if formula in ("phi", "psi_tight", "psi_loose", "lemma6_f"):
        need(N=N, delta=delta, Z=Z)
        p = DriftParams(int(N), delta, b)
        fn = {"phi": lambda: phi(Z, p), "psi_tight": lambda: psi_tight(Z, N, p),
              "psi_loose": lambda: psi_loose(Z, N, p), "lemma6_f": lambda: psi_tight(Z, N, p)}[formula]
        return BoundReport(formula, inputs, fn())
    raise ValueError(f"unknown formula {formula!r}; choose from {', '.join(FORMULAS)}")
