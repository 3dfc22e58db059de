"""Replica pipelines shared by the command line and the acceptance suite.

Every replica is a pure function of ``(parameters, seed, index)``; results are
gathered in index order, so serial and parallel runs agree exactly.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable, Sequence

import numpy as np

from . import nearstable as ns
from .env import DEFAULT_R_CHECK, Direction, sample_conditioned, stream_seed
from .regen import (DEFAULT_CONFIRM_HORIZON, DEFAULT_ESCAPE_RADIUS, find_regenerations,
                    ladder_regens_oracle)
from .stats import (ks_two_sample, pooled_autocorrelation, regen_tail_fit, scaling_slope, velocity_estimate,
                    zeta_estimate)
from .traps import DEFAULT_TRAP_RADIUS, backtrack_BK, deep_trap_events
from .walk import hitting_times, simulate


def default_threads() -> int:
    env = os.environ.get("THREADS")
    if env:
        return max(1, int(env))
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


def map_replicas(fn: Callable[[int], object], n: int, threads: int | None = None) -> list:
    """``[fn(0), ..., fn(n - 1)]``; with several workers each gets one
    contiguous block of indices."""
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or n <= 1:
        return [fn(i) for i in range(n)]
    chunk = math.ceil(n / threads)
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n), chunksize=chunk))


# ---------------------------------------------------------------------------
# environments and backtrack depths


def conditioned_env(seed: int, index: int, p: float, d: int, R_check: int = DEFAULT_R_CHECK):
    """Environment of replica ``index``, conditioned on the origin passing the
    infinite-cluster proxy."""
    return sample_conditioned(stream_seed(seed, 2 * index), p, d, R_check)


def _bk_one(i, *, seed, p, d, v, box_radius, R_check):
    env, rejections = conditioned_env(seed, i, p, d, R_check)
    bias = Direction(tuple(v), 1.0)
    return backtrack_BK(env, bias, (0,) * d, box_radius=box_radius), rejections


def bk_census(p: float, d: int, v: Sequence[int], n_envs: int, seed: int, box_radius: int = DEFAULT_TRAP_RADIUS,
              R_check: int = DEFAULT_R_CHECK, threads: int | None = None) -> dict:
    """``BK(0)`` over ``n_envs`` conditioned environments (escape to the box shell)."""
    fn = partial(_bk_one, seed=seed, p=p, d=d, v=tuple(v), box_radius=box_radius, R_check=R_check)
    out = map_replicas(fn, n_envs, threads)
    bk = np.array([o[0] for o in out])
    rej = np.array([o[1] for o in out], dtype=np.int64)
    return {"bk": bk, "rejections": rej}


@dataclass(frozen=True)
class _EnvCensus:
    seed: int
    p: float
    d: int
    R_check: int

    def __call__(self, i):
        return conditioned_env(self.seed, i, self.p, self.d, self.R_check)[1]


def env_census(p: float, d: int, n_envs: int, seed: int, R_check: int = DEFAULT_R_CHECK,
               threads: int | None = None) -> dict:
    """Rejection counts of the conditioned sampler; ``acceptance`` estimates
    the probability that the origin passes the cluster proxy."""
    rej = np.array(map_replicas(_EnvCensus(seed, p, d, R_check), n_envs, threads), dtype=np.int64)
    return {"rejections": rej, "acceptance": float(n_envs / (n_envs + rej.sum()))}


# ---------------------------------------------------------------------------
# walks and regenerations


@dataclass(frozen=True)
class WalkParams:
    p: float
    v: tuple
    lam: float
    n_steps: int
    s_list: tuple = ()
    n_list: tuple = ()
    regen: bool = True
    confirm_horizon: int = DEFAULT_CONFIRM_HORIZON
    escape_radius: int = DEFAULT_ESCAPE_RADIUS
    R_check: int = DEFAULT_R_CHECK

    @property
    def d(self) -> int:
        return len(self.v)

    @property
    def bias(self) -> Direction:
        return Direction(tuple(self.v), self.lam)


def _no_backtrack_ok(levels: np.ndarray, taus: np.ndarray) -> bool:
    """Exact scan: strictly above everything before, never undercut after."""
    if taus.size == 0:
        return True
    prefix = np.maximum.accumulate(levels)
    suffix = np.minimum.accumulate(levels[::-1])[::-1]
    before = np.where(taus > 0, prefix[np.maximum(taus - 1, 0)], np.iinfo(np.int64).min)
    return bool(np.all(levels[taus] > before) and np.all(suffix[taus] >= levels[taus]))


def walk_replica(i: int, params: WalkParams, seed: int) -> dict:
    env, rejections = conditioned_env(seed, i, params.p, params.d, params.R_check)
    bias = params.bias
    traj = simulate(env, bias, (0,) * params.d, params.n_steps, stream_seed(seed, 2 * i + 1))
    out = {
        "index": i,
        "rejections": rejections,
        "final_level": float(traj.levels[-1] / bias.norm),
        "max_level": float(traj.running_max[-1] / bias.norm),
        "hitting": hitting_times(traj, params.s_list) if params.s_list else np.zeros(0, dtype=np.int64),
        "levels_at": traj.levels[np.asarray(params.n_list, dtype=np.int64)] / bias.norm
        if params.n_list else np.zeros(0),
    }
    if params.regen:
        rec = find_regenerations(env, bias, traj, params.confirm_horizon, params.escape_radius)
        lad = ladder_regens_oracle(traj, params.confirm_horizon)
        dt, dl = rec.increments()
        out.update({
            "n_candidates": len(rec),
            "n_confirmed": int(rec.confirmed.sum()),
            "scan_ok": _no_backtrack_ok(traj.levels, rec.confirmed_taus),
            "subset_ok": bool(np.isin(rec.taus, lad.taus).all()),
            "confirmed_level_ints": rec.confirmed_level_ints,
            "dt": dt,
            "dl": dl,
        })
    return out


def run_walks(params: WalkParams, replicas: int, seed: int, threads: int | None = None) -> list[dict]:
    return map_replicas(partial(walk_replica, params=params, seed=seed), replicas, threads)


class _Blocks:
    """Minimal record stand-in carrying pooled increments."""

    def __init__(self, dt, dl):
        self._dt, self._dl = dt, dl

    def increments(self):
        return self._dt, self._dl


def summarize_walks(results: list[dict], params: WalkParams, gamma_hat: float | None = None) -> dict:
    """Pooled regeneration statistics and scaling slopes of a walk run."""
    out: dict = {"replicas": len(results)}
    if params.regen:
        dts = [r["dt"] for r in results]
        dls = [r["dl"] for r in results]
        dt = np.concatenate(dts)
        dl = np.concatenate(dls)
        out["scan_ok"] = all(r["scan_ok"] for r in results)
        out["subset_ok"] = all(r["subset_ok"] for r in results)
        out["n_increments"] = int(dt.shape[0])
        out["autocorr_dt"], n_pairs = pooled_autocorrelation(dts)
        out["autocorr_dl"], _ = pooled_autocorrelation(dls)
        out["autocorr_bound"] = 4.0 / math.sqrt(n_pairs)
        first = np.concatenate([x[: x.shape[0] // 2] for x in dts])
        second = np.concatenate([x[x.shape[0] // 2:] for x in dts])
        out["ks_halves_dt"] = ks_two_sample(first, second)
        first_l = np.concatenate([x[: x.shape[0] // 2] for x in dls])
        second_l = np.concatenate([x[x.shape[0] // 2:] for x in dls])
        out["ks_halves_dl"] = ks_two_sample(first_l, second_l)
        out["errors"] = {}
        try:
            out["v_hat"], out["v_ci"] = velocity_estimate(_Blocks(dt, dl))
        except ValueError as exc:
            out["v_hat"], out["v_ci"] = None, None
            out["errors"]["velocity"] = str(exc)
        try:
            out["regen_tail"] = regen_tail_fit(dt, n_boot=200, seed=1)
        except ValueError as exc:
            out["regen_tail"] = None
            out["errors"]["regen_tail"] = str(exc)
    if params.s_list:
        H = np.stack([r["hitting"] for r in results])
        reached = (H >= 0).all(axis=1)
        out["hitting_reached"] = int(reached.sum())
        if params.regen and out["v_hat"] is not None:
            s = np.asarray(params.s_list, dtype=float)
            dev = np.abs(H[reached] - s[None, :] / out["v_hat"])
            med = np.median(dev, axis=0)
            out["delta_medians"] = med
            try:
                out["delta_slope"] = scaling_slope(zip(s, med), min_decades=1.5)
            except ValueError as exc:
                out["delta_slope"] = None
                out["errors"]["delta_slope"] = str(exc)
    if params.n_list:
        Lv = np.stack([r["levels_at"] for r in results])
        n = np.asarray(params.n_list, dtype=float)
        med = np.median(Lv, axis=0)
        out["level_medians"] = med
        out["speed_by_n"] = (Lv / n[None, :]).mean(axis=0)
        try:
            out["level_slope"] = scaling_slope(zip(n, med), min_decades=1.5)
        except ValueError as exc:
            out["level_slope"] = None
            out["errors"]["level_slope"] = str(exc)
    return out


# ---------------------------------------------------------------------------
# traps


def _trap_one(i, *, params: WalkParams, seed: int, n_scale: float, eps: float, zeta_hat: float,
              trap_radius: int | None):
    env, _ = conditioned_env(seed, i, params.p, params.d, params.R_check)
    bias = params.bias
    traj = simulate(env, bias, (0,) * params.d, params.n_steps, stream_seed(seed, 2 * i + 1))
    events = deep_trap_events(env, bias, traj, n_scale, eps, zeta_hat, trap_radius)
    return [(i, e.k, e.T, int(e.deep), int(e.explored), -1 if e.theta is None else e.theta, int(e.censored))
            for e in events]


def trap_census(params: WalkParams, replicas: int, seed: int, n_scale: float, eps: float, zeta_hat: float,
                trap_radius: int | None = None, threads: int | None = None) -> list[tuple]:
    """Rows ``(replica, k, T, deep, explored, theta, censored)`` over all slabs."""
    fn = partial(_trap_one, params=params, seed=seed, n_scale=n_scale, eps=eps, zeta_hat=zeta_hat,
                 trap_radius=trap_radius)
    return [row for block in map_replicas(fn, replicas, threads) for row in block]


# ---------------------------------------------------------------------------
# heavy-tailed sums


def _sum_block(r, *, spec, n_list, seed):
    return ns.partial_sum_replicas(spec, n_list, 1, seed, replica_offset=r)[0]


def partial_sums(spec: ns.HeavyTailSpec, n_list: Sequence[int], replicas: int, seed: int,
                 threads: int | None = None) -> np.ndarray:
    """Same matrix as :func:`nearstable.partial_sum_replicas`, computed in parallel."""
    threads = default_threads() if threads is None else threads
    if threads == 1:
        return ns.partial_sum_replicas(spec, n_list, replicas, seed)
    fn = partial(_sum_block, spec=spec, n_list=tuple(n_list), seed=seed)
    return np.stack(map_replicas(fn, replicas, threads))


def slope_pipeline(spec: ns.HeavyTailSpec, n_list: Sequence[int], replicas: int, seed: int,
                   threads: int | None = None, sums: np.ndarray | None = None) -> dict:
    """Slope of log median ``|S_n - n mu|`` against log n."""
    S = partial_sums(spec, n_list, replicas, seed, threads) if sums is None else sums
    n = np.asarray(n_list, dtype=float)
    med = np.median(np.abs(S - n[None, :] * spec.mu), axis=0)
    fit = scaling_slope(zip(n, med))
    return {"medians": med, "slope": fit, "sums": S}


def zeta_pipeline(bk: np.ndarray, fit_range=(0.0, None), n_boot: int = 200, seed: int = 0):
    return zeta_estimate(bk, fit_range, n_boot=n_boot, seed=seed)
