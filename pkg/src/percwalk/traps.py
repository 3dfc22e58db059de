"""Trap geometry: backtrack depth, one-headed traps, directional depth and slabs."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .env import (DEFAULT_BUDGET, Direction, EdgeId, Environment, _vec, cluster_bfs,
                  closed_edge_view, is_open, open_neighbors)
from .errors import BudgetExceeded, MismatchError
from .walk import Trajectory

DEFAULT_TRAP_RADIUS = 32
DEFAULT_DEPTH_RADIUS = 32
BRUTE_FORCE_MAX_RADIUS = 7


def _target_args(bias: Direction, escape_radius, box_radius):
    if escape_radius is None:
        if box_radius is None:
            raise ValueError("give escape_radius or box_radius")
        return int(box_radius), 0, 0
    if escape_radius < 1:
        raise ValueError("escape_radius must be at least 1")
    R = int(escape_radius if box_radius is None else box_radius)
    return R, 1, int(escape_radius) ** 2 * bias.q


def backtrack_BK(env: Environment, bias: Direction, x, escape_radius: int | None = None, *,
                 box_radius: int | None = None, budget: int = DEFAULT_BUDGET) -> float:
    """Least depth against the bias that an escape from ``x`` must concede.

    Exploration is confined to the l-infinity box of radius ``box_radius``
    (default ``escape_radius``). An escape reaches level
    ``x . unit + escape_radius``, or the box shell when ``escape_radius`` is
    None. If no escape exists at any depth, ``x`` is taken to be outside the
    infinite cluster and the value is 0.

    The answer is found by binary search over the deficits actually realised
    by vertices of the explored cluster, each probe being a BFS restricted to
    ``{level >= x . unit - h}``.
    """
    R, mode, thr2 = _target_args(bias, escape_radius, box_radius)
    seed, p, closed = env.kernel_args
    h, status = K.backtrack_deficit(seed, p, closed, _vec(x, env.d), R, bias.v_array, int(budget), mode, thr2)
    if status == 2:
        raise BudgetExceeded(f"backtrack search from {tuple(x)} exceeded {budget} vertices")
    return int(h) / bias.norm


def brute_force_BK(env: Environment, bias: Direction, x, box_radius: int,
                   escape_radius: int | None = None) -> float:
    """Minimum over self-avoiding open paths from ``x`` to the escape set of
    the largest deficit ``(x - y) . unit`` along the path, by enumeration."""
    if box_radius > BRUTE_FORCE_MAX_RADIUS:
        raise ValueError(f"box_radius {box_radius} too large for enumeration (max {BRUTE_FORCE_MAX_RADIUS})")
    x = tuple(int(c) for c in x)
    R = box_radius
    lx = bias.level(x)

    def inside(y):
        return all(abs(a - b) <= R for a, b in zip(y, x))

    def is_target(y):
        if escape_radius is None:
            return any(abs(a - b) == R for a, b in zip(y, x))
        dl = bias.level(y) - lx
        return dl >= 0 and dl * dl >= escape_radius ** 2 * bias.q

    adj = {}

    def nbrs(y):
        if y not in adj:
            adj[y] = sorted((z for z in open_neighbors(env, y) if inside(z)),
                            key=lambda z: -bias.level(z))
        return adj[y]

    # plain flood fill: is any escape reachable at all?
    seen, stack, reachable = {x}, [x], False
    while stack:
        y = stack.pop()
        if is_target(y):
            reachable = True
            break
        for z in nbrs(y):
            if z not in seen:
                seen.add(z)
                stack.append(z)
    if not reachable:
        return 0.0

    best = math.inf
    on_path = {x}

    def dfs(y, worst):
        nonlocal best
        if is_target(y):
            best = min(best, worst)
            return
        for z in nbrs(y):
            if z in on_path:
                continue
            w = max(worst, lx - bias.level(z))
            if w >= best:
                continue
            on_path.add(z)
            dfs(z, w)
            on_path.discard(z)

    dfs(x, 0)
    return best / bias.norm


@dataclass(frozen=True)
class TrapInfo:
    head: tuple
    body: frozenset
    apex: tuple
    depth: float
    size: int
    bias: Direction


def trap_apex(trap: TrapInfo) -> tuple:
    """Body vertex of highest level; ties go to the lexicographically smallest."""
    if not trap.body:
        raise ValueError("empty trap body")
    return _apex(trap.body, trap.bias)


def _apex(body, bias: Direction) -> tuple:
    return min(body, key=lambda y: (-bias.level(y), y))


def _plus_e1(x, bias: Direction) -> tuple:
    return tuple(a + b for a, b in zip(x, bias.e1_vector))


def detect_one_headed_trap(env: Environment, bias: Direction, x,
                           trap_radius: int = DEFAULT_TRAP_RADIUS,
                           budget: int = DEFAULT_BUDGET) -> TrapInfo | None:
    """One-headed trap with head ``x``, or None.

    The body is the cluster of ``x + e1`` once ``[x, x + e1]`` is closed; it
    counts as finite when that cluster stays off the shell of the box of
    radius ``trap_radius`` around ``x + e1``.
    """
    x = tuple(int(c) for c in x)
    y0 = _plus_e1(x, bias)
    edge = EdgeId.between(x, y0)
    if not is_open(env, edge):
        return None
    body, reached = cluster_bfs(closed_edge_view(env, edge), y0, trap_radius, budget)
    if reached:
        return None
    floor = bias.level(y0)
    if any(bias.level(y) < floor for y in body):
        return None
    apex = _apex(body, bias)
    depth = (bias.level(apex) - bias.level(x)) / bias.norm
    return TrapInfo(x, frozenset(body), apex, depth, len(body), bias)


def direction_depth(env: Environment, bias: Direction, x, radius: int = DEFAULT_DEPTH_RADIUS,
                    budget: int = DEFAULT_BUDGET) -> float:
    """Furthest reach in the bias direction from ``x`` without dropping below
    its level; 0 if that half-space cluster reaches the box shell."""
    seed, p, closed = env.kernel_args
    xa = _vec(x, env.d)
    lx = int(K.level_of(xa, bias.v_array))
    order, _, hit, exhausted = K.box_bfs(seed, p, closed, xa, int(radius), bias.v_array, lx,
                                         int(budget), 0, 0, False)
    if exhausted:
        raise BudgetExceeded(f"depth search from {tuple(x)} exceeded {budget} vertices")
    if hit:
        return 0.0
    pts = K.decode_many(order, xa, int(radius))
    top = int((pts @ bias.v_array).max())
    return (top - lx) / bias.norm


def slab_width(n: float) -> float:
    if n < 2:
        raise ValueError("slab scale n must be at least 2")
    return math.log(n) ** 3


def slab_index(x, n: float, bias: Direction) -> int:
    """k with ``x . unit`` in ``[k w, (k + 1) w)``, ``w = (log n)^3``."""
    return math.floor(bias.level(x) / bias.norm / slab_width(n))


def _slab_of_levels(level_ints: np.ndarray, n: float, bias: Direction) -> np.ndarray:
    return np.floor(level_ints / bias.norm / slab_width(n)).astype(np.int64)


def slab_entries(traj: Trajectory, n: float, bias: Direction | None = None) -> list:
    """``[(T_k, Y_k) or None for k = 0 .. floor(max level / w)]``."""
    bias = bias or traj.bias
    slabs = _slab_of_levels(K.levels_of(traj.positions, bias.v_array), n, bias)
    top = int(slabs.max())
    out: list = [None] * (max(top, 0) + 1)
    ks, first = np.unique(slabs, return_index=True)
    for k, t in zip(ks, first):
        if 0 <= k <= top:
            out[int(k)] = (int(t), tuple(int(c) for c in traj.positions[t]))
    return out


@dataclass(frozen=True)
class SlabEvent:
    k: int
    T: int
    Y: tuple
    deep: bool
    explored: bool
    theta: int | None
    censored: bool = False


def _first_visit(positions: np.ndarray, after: int, target) -> int | None:
    hits = np.nonzero((positions[after + 1:] == np.asarray(target)).all(axis=1))[0]
    return None if hits.size == 0 else int(hits[0]) + after + 1


def deep_trap_events(env: Environment, bias: Direction, traj: Trajectory, n: float, eps: float,
                     zeta_hat: float, trap_radius: int | None = None,
                     budget: int = DEFAULT_BUDGET) -> list[SlabEvent]:
    """Deep-trap flags and first-excursion durations for slabs ``k >= 1``.

    ``deep`` is the trap-at-entry event (nonempty trap, directional depth of
    ``Y + e1`` at least ``(1 - eps) log(n) / zeta_hat``, body at most
    ``(log n)^2``); ``explored`` additionally needs the walk to reach the
    apex before returning to ``Y``; ``theta`` is that return time minus
    ``T``, or 0 when not explored. A return not observed in the trajectory
    leaves ``theta`` None with ``censored`` set.
    """
    if traj.env.triple != env.triple or traj.env.closed != env.closed or traj.bias != bias:
        raise MismatchError("trajectory does not belong to this environment and bias")
    if not zeta_hat > 0:
        raise ValueError("zeta_hat must be positive")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    logn = math.log(n)
    if trap_radius is None:
        trap_radius = max(4, math.ceil(2 * logn ** 2))
    min_depth = (1 - eps) * logn / zeta_hat
    max_size = logn ** 2
    events = []
    for k, entry in enumerate(slab_entries(traj, n, bias)):
        if k == 0 or entry is None:
            continue
        T, Y = entry
        trap = detect_one_headed_trap(env, bias, Y, trap_radius, budget)
        deep = False
        if trap is not None and trap.size <= max_size:
            deep = direction_depth(env, bias, _plus_e1(Y, bias), trap_radius + 1, budget) >= min_depth
        if not deep:
            events.append(SlabEvent(k, T, Y, False, False, 0))
            continue
        back = _first_visit(traj.positions, T, Y)
        top = _first_visit(traj.positions, T, trap.apex)
        explored = top is not None and (back is None or back > top)
        if not explored:
            events.append(SlabEvent(k, T, Y, True, False, 0))
        elif back is None:
            events.append(SlabEvent(k, T, Y, True, True, None, censored=True))
        else:
            events.append(SlabEvent(k, T, Y, True, True, back - T))
    return events
