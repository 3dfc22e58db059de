"""Heavy-tailed i.i.d. sums: exact-tail samplers, scaling sequences, and
fluctuation statistics for the partial sums ``S_n``.

A :class:`HeavyTailSpec` defines the law of ``|xi|`` through its tail
``T(t) = min(1, t^-alpha L(t))`` for ``t >= 1``; the remaining mass
``1 - T(1)`` is spread uniformly over ``[0, 1)``. Draws are exact inverse-CDF
samples of that law.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats

_LOG_GRID = np.linspace(0.0, math.log(1e15), 4001)


@dataclass(frozen=True)
class SlowlyVarying:
    """``L(t)`` for t >= 1.

    ``constant``: c. ``log-power``: c (1 + log t)^beta.
    ``oscillating``: c (1 + sin(log(1 + log t)) / 2).
    """

    kind: str = "constant"
    c: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "log-power", "oscillating"):
            raise ValueError(f"unknown slowly varying kind {self.kind!r}")
        if not self.c > 0:
            raise ValueError("c must be positive")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, self.c)
        lt = np.log(np.maximum(t, 1.0))
        if self.kind == "log-power":
            return self.c * (1.0 + lt) ** self.beta
        return self.c * (1.0 + 0.5 * np.sin(np.log1p(lt)))


@dataclass(frozen=True)
class HeavyTailSpec:
    """Law of ``xi``: tail index ``alpha``, slowly varying factor ``L``, and
    ``sign_kind`` in {"nonnegative", "symmetric"}.

    ``point_mass`` turns the spec into the degenerate law ``xi = point_mass``.
    """

    alpha: float
    L: SlowlyVarying = field(default_factory=SlowlyVarying)
    sign_kind: str = "nonnegative"
    point_mass: float | None = None

    def __post_init__(self):
        if self.sign_kind not in ("nonnegative", "symmetric"):
            raise ValueError(f"unknown sign kind {self.sign_kind!r}")
        if self.point_mass is not None:
            return
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        tail = self.tail(np.exp(_LOG_GRID))
        if np.any(np.diff(tail) > 1e-12 * tail[:-1]):
            raise ValueError("tail t^-alpha L(t) is not non-increasing on [1, inf)")

    @classmethod
    def pareto(cls, alpha: float, sign_kind: str = "nonnegative") -> "HeavyTailSpec":
        return cls(alpha, SlowlyVarying(), sign_kind)

    @classmethod
    def degenerate(cls, value: float) -> "HeavyTailSpec":
        return cls(math.inf, SlowlyVarying(), "nonnegative", point_mass=float(value))

    def tail(self, t):
        """``P(|xi| > t)`` for t >= 1."""
        t = np.asarray(t, dtype=float)
        return np.minimum(1.0, t ** -self.alpha * self.L(t))

    def log_tail_u(self, u: float) -> float:
        """``log(t^-alpha L(t))`` at ``t = e^u``, without the cap at 1."""
        L = self.L
        if L.kind == "constant":
            logL = math.log(L.c)
        elif L.kind == "log-power":
            logL = math.log(L.c) + L.beta * math.log1p(u)
        else:
            logL = math.log(L.c) + math.log1p(0.5 * math.sin(math.log1p(u)))
        return -self.alpha * u + logL

    def survival(self, t):
        """``P(|xi| > t)`` for all t >= 0."""
        t = np.asarray(t, dtype=float)
        t1 = float(self.tail(1.0))
        low = 1.0 - np.clip(t, 0.0, 1.0) * (1.0 - t1)
        return np.where(t >= 1.0, self.tail(np.maximum(t, 1.0)), low)

    @property
    def mu(self) -> float:
        """``E xi`` (0 for symmetric specs, inf when alpha <= 1)."""
        if self.point_mass is not None:
            return self.point_mass
        if self.sign_kind == "symmetric":
            return 0.0
        if self.alpha <= 1:
            return math.inf
        return _mean_abs(self)

    def f(self, t):
        """``t^alpha / L(t)``."""
        t = np.asarray(t, dtype=float)
        return t ** self.alpha / self.L(t)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "sv_kind": self.L.kind, "c": self.L.c, "beta": self.L.beta,
                "sign_kind": self.sign_kind, "point_mass": self.point_mass}


def _mean_abs(spec: HeavyTailSpec) -> float:
    t1 = float(spec.tail(1.0))
    below = 1.0 - 0.5 * (1.0 - t1)
    if spec.L.kind == "constant":
        c, a = spec.L.c, spec.alpha
        t0 = max(1.0, c ** (1.0 / a))
        return below + (t0 - 1.0) + c * t0 ** (1.0 - a) / (a - 1.0)
    # substitute t = e^u so the integrand decays like e^{(1 - alpha) u}
    def integrand(u):
        return math.exp(min(0.0, spec.log_tail_u(u)) + u)

    val, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=0.0, epsrel=1e-12, limit=500)
    return below + val


def _inverse_tail(spec: HeavyTailSpec, u: np.ndarray) -> np.ndarray:
    """``inf{t >= 1: T(t) <= u}`` for u in (0, T(1)]."""
    if spec.L.kind == "constant":
        c, a = spec.L.c, spec.alpha
        return np.maximum(1.0, (c / u) ** (1.0 / a))
    lo = np.zeros_like(u)
    hi = np.full_like(u, 1.0)
    while True:
        bad = spec.tail(np.exp(hi)) > u
        if not bad.any():
            break
        hi = np.where(bad, hi * 2.0, hi)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        above = spec.tail(np.exp(mid)) > u
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return np.exp(hi)


def _draw(spec: HeavyTailSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if spec.point_mass is not None:
        return np.full(n, spec.point_mass)
    u = 1.0 - rng.random(n)  # in (0, 1]
    t1 = float(spec.tail(1.0))
    if t1 >= 1.0:
        out = _inverse_tail(spec, u)
    else:
        out = np.empty(n)
        big = u <= t1
        out[big] = _inverse_tail(spec, u[big])
        out[~big] = (1.0 - u[~big]) / (1.0 - t1)
    if spec.sign_kind == "symmetric":
        out *= np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return out


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(replica)])))


def sample_xi(spec: HeavyTailSpec, n: int, seed: int) -> np.ndarray:
    return _draw(spec, int(n), replica_rng(seed, 0))


# ---------------------------------------------------------------------------
# scaling sequence


class _Monotone:
    """Running-maximum monotonisation of ``f`` on a fine log grid."""

    def __init__(self, spec: HeavyTailSpec):
        self.spec = spec
        self.grid = _LOG_GRID
        self.cummax = np.maximum.accumulate(spec.f(np.exp(self.grid)))

    def __call__(self, logt: float) -> float:
        i = np.searchsorted(self.grid, logt, side="right") - 1
        prior = self.cummax[i] if i >= 0 else -math.inf
        return max(prior, float(self.spec.f(math.exp(logt))))


def scaling_a_n(spec: HeavyTailSpec, n: float, rtol: float = 1e-9) -> float:
    """``a_n = g(n)``: the least t >= 1 where the monotonised
    ``t^alpha / L(t)`` reaches ``n``, by bisection in log t."""
    if n < 1:
        raise ValueError("n must be at least 1")
    mono = _Monotone(spec)
    if mono(0.0) >= n:
        return 1.0
    lo, hi = 0.0, 1.0
    while mono(hi) < n:
        lo, hi = hi, hi * 2.0
        if hi > 1e4:
            raise ArithmeticError("bisection failed to bracket a_n; L looks malformed")
    for _ in range(400):
        if hi - lo <= rtol:
            break
        mid = 0.5 * (lo + hi)
        if mono(mid) >= n:
            hi = mid
        else:
            lo = mid
    else:
        raise ArithmeticError("bisection for a_n did not converge")
    return math.exp(hi)


def scaling_sequence(spec: HeavyTailSpec, n_list: Sequence[float]) -> np.ndarray:
    return np.array([scaling_a_n(spec, n) for n in n_list])


# ---------------------------------------------------------------------------
# partial sums


def partial_sum_replicas(spec: HeavyTailSpec, n_list: Sequence[int], replicas: int, seed: int,
                         chunk: int = 1 << 20, replica_offset: int = 0) -> np.ndarray:
    """``S_n`` for each replica (rows) and each n in ``n_list`` (columns).

    Replica r draws from its own stream ``(seed, replica_offset + r)``; one
    pass over ``max(n_list)`` draws gives every requested n.
    """
    if replicas < 1:
        raise ValueError("replicas must be at least 1")
    ns = np.asarray(n_list, dtype=np.int64)
    if (ns < 0).any():
        raise ValueError("n must be non-negative")
    order = np.argsort(ns, kind="stable")
    out = np.zeros((replicas, ns.shape[0]))
    n_max = int(ns.max(initial=0))
    for r in range(replicas):
        rng = replica_rng(seed, replica_offset + r)
        total, done, j = 0.0, 0, 0
        while j < len(order) and ns[order[j]] == 0:
            j += 1
        while done < n_max:
            m = min(chunk, n_max - done)
            cs = np.cumsum(_draw(spec, m, rng)) + total
            while j < len(order) and ns[order[j]] <= done + m:
                out[r, order[j]] = cs[ns[order[j]] - done - 1]
                j += 1
            total = cs[-1]
            done += m
    return out


def _binomial_ci(k: np.ndarray, n: int, level: float = 0.99) -> tuple[np.ndarray, np.ndarray]:
    """Clopper-Pearson interval."""
    a = 1.0 - level
    k = np.asarray(k, dtype=float)
    lo = np.where(k > 0, stats.beta.ppf(a / 2, k, n - k + 1), 0.0)
    hi = np.where(k < n, stats.beta.ppf(1 - a / 2, k + 1, n - k), 1.0)
    return lo, hi


@dataclass
class FluctuationTable:
    """Empirical probabilities on an n x lambda grid with a fitted power-law constant."""

    kind: str
    n_list: list
    lambda_grid: list
    rho: float
    prob: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    valid: np.ndarray
    C: float
    C_ci: tuple
    C_per_n: np.ndarray
    holds: bool
    replicas: int
    notes: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        out = []
        for i, n in enumerate(self.n_list):
            for j, lam in enumerate(self.lambda_grid):
                out.append({"n": n, "lambda": lam, "prob": self.prob[i, j], "ci_low": self.ci_low[i, j],
                            "ci_high": self.ci_high[i, j], "valid": bool(self.valid[i, j])})
        return out


def _fit_constant(prob, lo, hi, lam, rho_sign, valid):
    w = lam[None, :] ** rho_sign
    scaled = np.where(valid, prob * w, -np.inf)
    C_per_n = scaled.max(axis=1)
    C = float(C_per_n.max())
    C_ci = (float(np.where(valid, lo * w, -np.inf).max()), float(np.where(valid, hi * w, -np.inf).max()))
    return C, C_ci, C_per_n


def upper_fluctuation_check(spec: HeavyTailSpec, n_list: Sequence[int], replicas: int, rho: float,
                            lambda_grid: Sequence[float], seed: int = 0, sums: np.ndarray | None = None,
                            anchor_factor: float = 10.0) -> FluctuationTable:
    """``P(|S_n - n mu| / a_n > lambda)`` against ``C lambda^-rho``.

    ``C`` is the smallest constant valid on the whole grid. The bound is
    declared to hold when, for every n, the tail stays below
    ``anchor_factor`` times the power law anchored at the smallest lambda.
    """
    if not rho < spec.alpha:
        raise ValueError("rho must be smaller than alpha")
    lam = np.asarray(lambda_grid, dtype=float)
    if (lam < 1).any():
        raise ValueError("lambda must be at least 1")
    S = partial_sum_replicas(spec, n_list, replicas, seed) if sums is None else sums
    ns = np.asarray(n_list, dtype=float)
    a = scaling_sequence(spec, ns)
    dev = np.abs(S - ns[None, :] * spec.mu) / a[None, :]
    counts = (dev[:, :, None] > lam[None, None, :]).sum(axis=0)
    prob = counts / replicas
    lo, hi = _binomial_ci(counts, replicas)
    valid = np.ones_like(prob, dtype=bool)
    C, C_ci, C_per_n = _fit_constant(prob, lo, hi, lam, rho, valid)
    j0 = int(np.argmin(lam))
    anchored = anchor_factor * prob[:, [j0]] * (lam[None, :] / lam[j0]) ** -rho
    holds = bool(np.isfinite(C) and (prob <= anchored + 1e-15).all())
    return FluctuationTable("upper", list(n_list), list(lam), rho, prob, lo, hi, valid, C, C_ci, C_per_n,
                            holds, replicas, {"a_n": a.tolist(), "mu": spec.mu})


def anticoncentration_check(spec: HeavyTailSpec, n_list: Sequence[int], replicas: int, rho: float,
                            lambda_grid: Sequence[float], centering="median", seed: int = 0,
                            sums: np.ndarray | None = None, anchor_factor: float = 10.0) -> FluctuationTable:
    """``P(|S_n - c_n| / a_n < lambda)`` against ``C lambda^rho``.

    ``centering`` is "mean", "median" (per-n median over replicas) or an
    explicit sequence ``c_n``. Cells with ``lambda < 1 / a_n`` are excluded.
    The table's notes carry the symmetrisation diagnostic: a sign-flip KS
    test on ``S_n - S'_n`` from paired replicas.
    """
    if not rho < spec.alpha / 4:
        raise ValueError("rho must be smaller than alpha / 4")
    lam = np.asarray(lambda_grid, dtype=float)
    S = partial_sum_replicas(spec, n_list, replicas, seed) if sums is None else sums
    ns = np.asarray(n_list, dtype=float)
    a = scaling_sequence(spec, ns)
    if isinstance(centering, str):
        if centering == "mean":
            c = ns * spec.mu
        elif centering == "median":
            c = np.median(S, axis=0)
        else:
            raise ValueError(f"unknown centering {centering!r}")
    else:
        c = np.asarray(centering, dtype=float)
    dev = np.abs(S - c[None, :]) / a[None, :]
    counts = (dev[:, :, None] < lam[None, None, :]).sum(axis=0)
    prob = counts / replicas
    lo, hi = _binomial_ci(counts, replicas)
    valid = lam[None, :] >= 1.0 / a[:, None]
    C, C_ci, C_per_n = _fit_constant(prob, lo, hi, lam, -rho, valid)
    j0 = int(np.argmax(lam))
    anchored = anchor_factor * prob[:, [j0]] * (lam[None, :] / lam[j0]) ** rho
    monotone = bool((np.diff(prob, axis=1) >= 0).all()) if np.all(np.diff(lam) > 0) else True
    holds = bool(np.isfinite(C) and monotone and (np.where(valid, prob <= anchored + 1e-15, True)).all())
    half = S.shape[0] // 2
    sym = S[0:2 * half:2] - S[1:2 * half:2]
    ks_p = [float(stats.ks_2samp(sym[:, i], -sym[:, i], method="asymp").pvalue) for i in range(sym.shape[1])]
    notes = {"a_n": a.tolist(), "centering": np.asarray(c).tolist(), "monotone": monotone,
             "symmetrised_ks_p": ks_p, "max_deviation": dev.max(axis=0).tolist()}
    return FluctuationTable("lower", list(n_list), list(lam), rho, prob, lo, hi, valid, C, C_ci, C_per_n,
                            holds, replicas, notes)


# ---------------------------------------------------------------------------
# pathwise statistics


@dataclass
class LogRatioRun:
    n: np.ndarray
    ratio: np.ndarray
    ratio_plus: np.ndarray
    running_max: np.ndarray
    burn_in: int
    return_threshold_exp: float
    returns: np.ndarray

    @property
    def final_running_max(self) -> float:
        return float(self.running_max[-1])

    def returns_beyond(self, n0: int) -> int:
        return int((self.returns > n0).sum())


def running_log_ratio(spec: HeavyTailSpec, n_max: int, seed: int, mu: float | None = None,
                      burn_in: int = 10_000, return_exp: float = 0.1,
                      chunk: int = 1 << 22) -> LogRatioRun:
    """``r_n = log|S_n - n mu| / log n`` along one path, for 2 <= n <= n_max.

    The running maximum of ``r_n`` over ``n >= burn_in`` stands in for the
    limsup; ``returns`` lists every n with ``|S_n - n mu| <= n^return_exp``,
    the liminf witness. ``ratio_plus`` uses ``log_+``.
    """
    if n_max < 10:
        raise ValueError("n_max must be at least 10")
    mu = spec.mu if mu is None else float(mu)
    burn_in = min(max(int(burn_in), 2), n_max)
    rng = replica_rng(seed, 0)
    dev = np.empty(n_max)
    total, done = 0.0, 0
    while done < n_max:
        m = min(chunk, n_max - done)
        cs = np.cumsum(_draw(spec, m, rng) - mu) + total
        dev[done:done + m] = cs
        total = float(cs[-1])
        done += m
    np.abs(dev, out=dev)
    n = np.arange(1, n_max + 1, dtype=float)
    with np.errstate(divide="ignore"):
        logdev = np.log(dev)
    ln = np.log(n[1:])
    ratio = logdev[1:] / ln
    ratio_plus = np.maximum(logdev[1:], 0.0) / ln
    rm = np.full(ratio.shape, -np.inf)
    rm[burn_in - 2:] = np.maximum.accumulate(ratio[burn_in - 2:])
    returns = np.nonzero(dev <= n ** return_exp)[0] + 1
    return LogRatioRun(n[1:].astype(np.int64), ratio, ratio_plus, rm, burn_in, return_exp,
                       returns.astype(np.int64))


@dataclass
class PotterReport:
    delta: float
    A: float
    violations: list


def potter_envelope_check(L: Callable | SlowlyVarying, delta: float, grid,
                          A: float | None = None) -> PotterReport:
    """Smallest ``A`` with ``L(x) / L(y) <= A max((x/y)^delta, (y/x)^delta)`` on
    all pairs drawn from ``grid``; ``violations`` lists pairs breaking the bound
    for a given ``A`` (empty when ``A`` is None, since the minimal one is used)."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    g = np.asarray(grid, dtype=float)
    if (g < 1).any():
        raise ValueError("grid points must be at least 1")
    vals = np.asarray(L(g), dtype=float)
    lx, ly = np.log(vals)[:, None], np.log(vals)[None, :]
    gap = np.abs(np.log(g)[:, None] - np.log(g)[None, :])
    excess = lx - ly - delta * gap
    A_min = float(np.exp(excess.max()))
    if A is None:
        return PotterReport(delta, A_min, [])
    bad = np.argwhere(excess > math.log(A) + 1e-12)
    return PotterReport(delta, A_min, [(float(g[i]), float(g[j])) for i, j in bad])
