"""Estimators: survival-tail exponents, speed, scaling slopes and block diagnostics."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

SURVIVAL_FLOOR = 10.0
N_BATCHES = 20
MIN_NONZERO_POINTS = 5
MIN_FIT_POINTS = 3


@dataclass(frozen=True)
class TailEstimate:
    exponent: float
    intercept: float
    stderr: float
    fit_range: tuple
    r2: float
    method: str
    n_samples: int = 0
    n_points: int = 0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.stderr >= 0:
            raise ValueError("stderr must be non-negative")
        if not self.fit_range[0] < self.fit_range[1]:
            raise ValueError("fit range must be increasing")

    def ci(self, level: float = 0.95) -> tuple[float, float]:
        z = stats.norm.ppf(0.5 + level / 2)
        return self.exponent - z * self.stderr, self.exponent + z * self.stderr

    def is_power_law(self, min_r2: float = 0.98) -> bool:
        return self.r2 >= min_r2

    def to_json(self) -> dict:
        out = asdict(self)
        out["estimate"] = out.pop("exponent")
        out["fit_range"] = list(self.fit_range)
        return out


def _linfit(x: np.ndarray, y: np.ndarray):
    res = stats.linregress(x, y)
    r2 = float(res.rvalue ** 2) if np.ptp(y) > 0 else 1.0
    return float(res.slope), float(res.intercept), float(res.stderr), r2


def _lattice_step(values: np.ndarray) -> float | None:
    u = np.unique(values)
    if u.size < 2:
        return None
    step = float(np.min(np.diff(u)))
    if (u[-1] - u[0]) / step > 1e5:
        return None
    if np.allclose(u / step, np.round(u / step), rtol=0.0, atol=1e-6):
        return step
    return None


def _survival(sorted_x: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Empirical ``P(X > t)`` at each grid point."""
    n = sorted_x.shape[0]
    return (n - np.searchsorted(sorted_x, grid, side="right")) / n


def _fit_points(x: np.ndarray, grid: np.ndarray, log_x: bool):
    surv = _survival(np.sort(x), grid)
    keep = surv >= SURVIVAL_FLOOR / x.shape[0]
    g = grid[keep]
    return (np.log(g) if log_x else g), np.log(surv[keep]), g


def _bootstrap_stderr(x, grid, log_x, n_boot, seed) -> float:
    rng = np.random.default_rng(seed)
    slopes = []
    for _ in range(n_boot):
        xb = x[rng.integers(0, x.shape[0], x.shape[0])]
        gx, gy, _ = _fit_points(xb, grid, log_x)
        if gx.shape[0] >= 2:
            slopes.append(_linfit(gx, gy)[0])
    return float(np.std(slopes, ddof=1)) if len(slopes) > 1 else math.inf


def _survival_fit(samples, fit_range, log_x: bool, n_grid: int, method: str,
                  n_boot: int, seed: int) -> TailEstimate:
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise ValueError("no finite samples")
    if np.ptp(x) == 0:
        raise ValueError("all samples are equal; the survival function is degenerate")
    n = x.shape[0]
    srt = np.sort(x)
    lo, hi = fit_range
    if hi is None:
        # largest value keeping the survival floor
        k = int(math.ceil(SURVIVAL_FLOOR))
        hi = float(srt[n - k - 1]) if n > k else float(srt[-1])
    if lo is None:
        lo = float(np.median(x)) if log_x else 0.0
    if log_x and lo <= 0:
        raise ValueError("log-log fit needs a positive lower end")
    if not hi > lo:
        raise ValueError(f"empty fit range ({lo}, {hi}); the tail is degenerate")
    step = None
    if log_x:
        grid = np.exp(np.linspace(math.log(lo), math.log(hi), n_grid))
    else:
        step = _lattice_step(x)
        if step is not None and (hi - lo) / step + 1 <= 4 * n_grid:
            grid = np.arange(math.ceil(lo / step - 1e-9), math.floor(hi / step + 1e-9) + 1) * step
        else:
            grid = np.linspace(lo, hi, n_grid)
    # the range check extends past the floor: every grid step with any mass counts
    if not log_x and step is not None:
        ext = np.arange(grid[0] / step, srt[-1] / step + 1) * step
    else:
        ext = grid
    nonzero = int((_survival(srt, ext[ext >= lo]) > 0).sum())
    if nonzero < MIN_NONZERO_POINTS:
        raise ValueError(f"only {nonzero} grid points with nonzero survival from {lo}; need {MIN_NONZERO_POINTS}")
    gx, gy, g = _fit_points(x, grid, log_x)
    if gx.shape[0] < MIN_FIT_POINTS:
        raise ValueError(f"only {gx.shape[0]} grid points with survival above {SURVIVAL_FLOOR}/N in "
                         f"({lo}, {hi}); need {MIN_FIT_POINTS}")
    slope, intercept, se, r2 = _linfit(gx, gy)
    if n_boot:
        se = _bootstrap_stderr(x, grid, log_x, n_boot, seed)
    return TailEstimate(-slope, intercept, se, (float(g[0]), float(g[-1])), r2, method, n, int(gx.shape[0]))


def zeta_estimate(bk_samples, fit_range=(None, None), n_grid: int = 20, n_boot: int = 0,
                  seed: int = 0) -> TailEstimate:
    """Exponential decay rate of ``P(BK > h)``: minus the least-squares slope
    of the log empirical survival against ``h`` on an equally spaced grid
    (the lattice of realised values when there is one)."""
    return _survival_fit(bk_samples, fit_range, False, n_grid, "log-linear", n_boot, seed)


def regen_tail_fit(increments, fit_range=(None, None), n_grid: int = 20, n_boot: int = 0,
                   seed: int = 0, min_samples: int = 1000) -> TailEstimate:
    """Power-law index of ``P(T > t)`` by a log-log survival fit on a
    log-spaced grid; defaults to the range from the median out to the last
    point above the survival floor."""
    x = np.asarray(increments, dtype=float)
    if x.shape[0] < min_samples:
        raise ValueError(f"need at least {min_samples} increments, got {x.shape[0]}")
    return _survival_fit(x, fit_range, True, n_grid, "log-log", n_boot, seed)


def hill_estimate(samples, k: int) -> TailEstimate:
    """Hill estimator on the top ``k`` order statistics (cross-check only)."""
    x = np.sort(np.asarray(samples, dtype=float))[::-1]
    if not 1 <= k < x.shape[0]:
        raise ValueError("k must lie in [1, n)")
    if x[k] <= 0:
        raise ValueError("Hill estimator needs positive order statistics")
    inv = float(np.mean(np.log(x[:k])) - math.log(x[k]))
    alpha = 1.0 / inv
    return TailEstimate(alpha, 0.0, alpha / math.sqrt(k), (float(x[k]), float(x[0]) + 1e-300), 0.0, "hill",
                        int(x.shape[0]), k)


def gamma_from_zeta(zeta_hat: float, lam: float) -> float:
    if not (zeta_hat > 0 and lam > 0):
        raise ValueError("zeta and lambda must be positive")
    return zeta_hat / (2.0 * lam)


def lambda_for_gamma(zeta_hat: float, gamma: float) -> float:
    if not (zeta_hat > 0 and gamma > 0):
        raise ValueError("zeta and gamma must be positive")
    return zeta_hat / (2.0 * gamma)


def _pooled_increments(records) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(records, "increments"):
        records = [records]
    dts, dls = [], []
    for rec in records:
        dt, dl = rec.increments()
        dts.append(np.asarray(dt, dtype=float))
        dls.append(np.asarray(dl, dtype=float))
    if not dts:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(dts), np.concatenate(dls)


def batch_means_ratio(num: np.ndarray, den: np.ndarray, n_batches: int = N_BATCHES,
                      level: float = 0.95) -> tuple[float, tuple[float, float]]:
    """``sum(num) / sum(den)`` with a batch-means confidence interval."""
    est = float(num.sum() / den.sum())
    batches = np.array_split(np.arange(num.shape[0]), n_batches)
    vals = np.array([num[b].sum() / den[b].sum() for b in batches])
    half = stats.t.ppf(0.5 + level / 2, n_batches - 1) * vals.std(ddof=1) / math.sqrt(n_batches)
    return est, (est - half, est + half)


def velocity_estimate(records, min_blocks: int = 100) -> tuple[float, tuple[float, float]]:
    """Speed along the unit direction from confirmed regeneration blocks:
    total level gained over total time, with a 20-batch-means CI."""
    dt, dl = _pooled_increments(records)
    if dt.shape[0] < min_blocks:
        raise ValueError(f"need at least {min_blocks} confirmed blocks, got {dt.shape[0]}")
    return batch_means_ratio(dl, dt)


def scaling_slope(pairs: Iterable[tuple[float, float]], min_points: int = 5,
                  min_decades: float = 2.0) -> TailEstimate:
    """Least-squares slope of log dispersion against log scale."""
    arr = np.asarray(list(pairs), dtype=float)
    if arr.ndim != 2 or arr.shape[0] < min_points:
        raise ValueError(f"need at least {min_points} scales")
    n, disp = arr[:, 0], arr[:, 1]
    if (n <= 0).any() or (disp <= 0).any():
        raise ValueError("scales and dispersions must be positive")
    span = math.log10(n.max() / n.min())
    if span < min_decades - 1e-9:
        raise ValueError(f"scales span {span:.2f} decades, need {min_decades}")
    slope, intercept, se, r2 = _linfit(np.log(n), np.log(disp))
    return TailEstimate(slope, intercept, se, (float(n.min()), float(n.max())), r2, "log-log",
                        int(arr.shape[0]), int(arr.shape[0]))


@dataclass
class ThetaTable:
    n_grid: list
    D: float
    eta_hat: float
    fraction: np.ndarray
    excluded: np.ndarray
    used: np.ndarray
    decays: bool

    def rows(self) -> list[dict]:
        return [{"n": n, "fraction": float(f), "used": int(u), "excluded": int(e)}
                for n, f, u, e in zip(self.n_grid, self.fraction, self.used, self.excluded)]


def theta_deviation_check(records, n_grid: Sequence[float], D: float) -> ThetaTable:
    """Fraction of replicas with ``|theta_n - n eta| > D sqrt(n) log n``,
    ``theta_n`` being the number of confirmed regenerations at level <= n and
    ``eta`` the reciprocal mean level increment. Replicas that never reach
    level n are excluded at that n."""
    from .regen import regens_before_level

    records = list(records)
    _, dl = _pooled_increments(records)
    if dl.shape[0] == 0:
        raise ValueError("no confirmed increments")
    eta = 1.0 / float(dl.mean())
    frac, excl, used = [], [], []
    for n in n_grid:
        dev, skipped = [], 0
        for rec in records:
            try:
                theta = regens_before_level(rec, n)
            except ValueError:
                skipped += 1
                continue
            dev.append(abs(theta - n * eta))
        bound = D * math.sqrt(n) * math.log(n)
        frac.append(float(np.mean(np.asarray(dev) > bound)) if dev else math.nan)
        excl.append(skipped)
        used.append(len(dev))
    frac = np.asarray(frac)
    ok = frac[np.isfinite(frac)]
    decays = bool(np.all(np.diff(ok) <= 1e-12))
    return ThetaTable(list(n_grid), D, eta, frac, np.asarray(excl), np.asarray(used), decays)


def autocorrelation(series, lag: int = 1) -> float:
    x = np.asarray(series, dtype=float)
    if x.shape[0] <= lag + 1:
        raise ValueError("series too short for this lag")
    xc = x - x.mean()
    den = float(np.dot(xc, xc))
    if den == 0:
        raise ValueError("autocorrelation undefined for a constant series")
    return float(np.dot(xc[:-lag], xc[lag:]) / den)


def pooled_autocorrelation(series_list, lag: int = 1) -> tuple[float, int]:
    """Lag autocorrelation over several independent series, using the pooled
    mean and variance and only within-series pairs. Returns (value, pairs)."""
    xs = [np.asarray(x, dtype=float) for x in series_list]
    allx = np.concatenate(xs) if xs else np.zeros(0)
    if allx.shape[0] < 2:
        raise ValueError("not enough data")
    m = allx.mean()
    var = float(np.mean((allx - m) ** 2))
    if var == 0:
        raise ValueError("autocorrelation undefined for a constant series")
    num, n_pairs = 0.0, 0
    for x in xs:
        if x.shape[0] > lag:
            num += float(np.dot(x[:-lag] - m, x[lag:] - m))
            n_pairs += x.shape[0] - lag
    if n_pairs == 0:
        raise ValueError("no within-series pairs at this lag")
    return num / (n_pairs * var), n_pairs


def ks_two_sample(a, b) -> tuple[float, float]:
    res = stats.ks_2samp(np.asarray(a, dtype=float), np.asarray(b, dtype=float), method="asymp")
    return float(res.statistic), float(res.pvalue)


def diagnostics(series, lags: Sequence[int] = (1,),
                quantiles: Sequence[float] = (0.1, 0.25, 0.5, 0.75, 0.9, 0.99)) -> dict:
    """Autocorrelations, a KS test between the two halves, and quantiles."""
    x = np.asarray(series, dtype=float)
    if x.shape[0] < 10:
        raise ValueError("series must have at least 10 entries")
    half = x.shape[0] // 2
    ks_stat, ks_p = ks_two_sample(x[:half], x[half:])
    return {
        "n": int(x.shape[0]),
        "autocorrelation": {int(k): autocorrelation(x, k) for k in lags},
        "autocorrelation_bound": 4.0 / math.sqrt(x.shape[0]),
        "ks_halves": {"statistic": ks_stat, "pvalue": ks_p},
        "quantiles": {float(q): float(v) for q, v in zip(quantiles, np.quantile(x, quantiles))},
    }
