"""Lazily evaluated bond percolation on Z^d.

An :class:`Environment` never stores edges. Whether an edge is open is a pure
function of ``(seed, p, edge)`` computed by a counter-based hash, so walks can
roam arbitrarily far with memory proportional to what they touch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import _kernels as K
from .errors import BudgetExceeded, ConditioningError

PRF_ID = "splitmix64-edge-hash"
PRF_VERSION = "1"

DEFAULT_R_CHECK = 64
DEFAULT_MAX_ATTEMPTS = 100_000
DEFAULT_BUDGET = 1_000_000

Vertex = tuple


def _mix64(z: int) -> int:
    z &= K.MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & K.MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & K.MASK64
    return z ^ (z >> 31)


def stream_seed(master: int, index: int) -> int:
    """Seed of the ``index``-th independent stream derived from ``master``."""
    return _mix64(_mix64(master + 0x9E3779B97F4A7C15) ^ _mix64(index * 0xD1B54A32D192ED03 + 1))


def _as_u64(seed: int) -> np.uint64:
    return np.uint64(int(seed) & K.MASK64)


def ceil_scaled(s, q: int) -> int:
    """Exact ``ceil(s * sqrt(q))`` for a real (float or rational) ``s``."""
    fs = Fraction(s)
    if fs < 0:
        return -floor_scaled(-fs, q)
    t = fs * fs * q
    k = math.isqrt(t.numerator // t.denominator)
    while k * k < t:
        k += 1
    return k


def floor_scaled(s, q: int) -> int:
    """Exact ``floor(s * sqrt(q))``."""
    fs = Fraction(s)
    if fs < 0:
        return -ceil_scaled(-fs, q)
    t = fs * fs * q
    return math.isqrt(t.numerator // t.denominator)


@dataclass(frozen=True)
class Direction:
    """Bias direction ``v`` (integer, nonzero) with strength ``lam``.

    Levels ``x . v`` are exact integers; a level measured along the unit
    vector is ``x . v / |v|``.
    """

    v: tuple
    lam: float

    def __post_init__(self):
        v = tuple(int(c) for c in self.v)
        object.__setattr__(self, "v", v)
        if len(v) < 2:
            raise ValueError("dimension must be at least 2")
        if not any(v):
            raise ValueError("direction vector must be nonzero")
        if not self.lam > 0:
            raise ValueError("bias strength must be positive")

    @property
    def d(self) -> int:
        return len(self.v)

    @property
    def q(self) -> int:
        """Squared norm ``|v|^2``."""
        return sum(c * c for c in self.v)

    @property
    def norm(self) -> float:
        return math.sqrt(self.q)

    @cached_property
    def v_array(self) -> np.ndarray:
        return np.asarray(self.v, dtype=np.int64)

    @cached_property
    def unit(self) -> np.ndarray:
        return self.v_array / self.norm

    @cached_property
    def ell(self) -> np.ndarray:
        return self.lam * self.unit

    def level(self, x) -> int:
        return int(sum(a * b for a, b in zip(x, self.v)))

    def threshold(self, s) -> int:
        """Integer level ``k`` such that ``x . unit >= s`` iff ``x . v >= k``."""
        return ceil_scaled(s, self.q)

    @cached_property
    def e1(self) -> tuple[int, int]:
        """(axis, sign) of the signed basis vector maximising ``e . v``."""
        axis = max(range(self.d), key=lambda i: (abs(self.v[i]), -i))
        return axis, (1 if self.v[axis] > 0 else -1)

    @cached_property
    def e1_vector(self) -> tuple:
        axis, sign = self.e1
        return tuple(sign if i == axis else 0 for i in range(self.d))

    @cached_property
    def b_vectors(self) -> np.ndarray:
        """Signed unit vectors ``e`` with ``e . v == e1 . v``."""
        top = max(abs(c) for c in self.v)
        rows = []
        for i, c in enumerate(self.v):
            if abs(c) == top:
                rows.append(tuple((1 if c > 0 else -1) if j == i else 0 for j in range(self.d)))
        return np.asarray(rows, dtype=np.int64)

    def to_dict(self) -> dict:
        return {"v": list(self.v), "lambda": self.lam}


class EdgeId(NamedTuple):
    """Edge ``{base, base + e_axis}``; ``axis`` is 0-based."""

    base: tuple
    axis: int

    @classmethod
    def between(cls, x, y) -> "EdgeId":
        x, y = tuple(int(c) for c in x), tuple(int(c) for c in y)
        diff = [b - a for a, b in zip(x, y)]
        if sorted(map(abs, diff)) != [0] * (len(diff) - 1) + [1]:
            raise ValueError(f"{x} and {y} are not nearest neighbours")
        axis = next(i for i, c in enumerate(diff) if c)
        return cls(x if diff[axis] == 1 else y, axis)

    @property
    def tip(self) -> tuple:
        return tuple(c + (1 if i == self.axis else 0) for i, c in enumerate(self.base))


@dataclass(frozen=True)
class Environment:
    """Bernoulli(p) bond configuration keyed by ``seed``.

    ``closed`` lists edges forced closed on top of the hashed configuration,
    which is how ``omega([x, y])`` views and hand-built instances are made.
    """

    seed: int
    p: float
    d: int
    closed: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & K.MASK64)
        if self.d < 2:
            raise ValueError("dimension must be at least 2")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        for e in self.closed:
            if len(e.base) != self.d:
                raise ValueError(f"edge {e} has wrong dimension")

    @property
    def triple(self) -> tuple:
        return (self.seed, self.p, self.d)

    @cached_property
    def closed_array(self) -> np.ndarray:
        arr = np.zeros((len(self.closed), self.d + 1), dtype=np.int64)
        for r, e in enumerate(self.closed):
            arr[r, : self.d] = e.base
            arr[r, self.d] = e.axis
        return arr

    @cached_property
    def kernel_args(self) -> tuple:
        return _as_u64(self.seed), float(self.p), self.closed_array

    def to_dict(self) -> dict:
        out = {"seed": self.seed, "p": self.p, "d": self.d, "prf": PRF_ID, "prf_version": PRF_VERSION}
        if self.closed:
            out["closed"] = [[list(e.base), e.axis] for e in self.closed]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Environment":
        if data.get("prf", PRF_ID) != PRF_ID or str(data.get("prf_version", PRF_VERSION)) != PRF_VERSION:
            raise ValueError(f"unsupported edge hash {data.get('prf')}/{data.get('prf_version')}")
        closed = tuple(EdgeId(tuple(b), int(a)) for b, a in data.get("closed", ()))
        return cls(int(data["seed"]), float(data["p"]), int(data["d"]), closed)


def _vec(x, d: int) -> np.ndarray:
    arr = np.asarray(x, dtype=np.int64)
    if arr.shape != (d,):
        raise ValueError(f"expected a vertex in Z^{d}, got {x!r}")
    return arr


def is_open(env: Environment, e: EdgeId) -> bool:
    seed, p, closed = env.kernel_args
    return bool(K.edge_open(seed, p, closed, _vec(e.base, env.d), int(e.axis), False))


def open_neighbors(env: Environment, x) -> list:
    """Open neighbours of ``x``, ordered by axis with the minus side first."""
    seed, p, closed = env.kernel_args
    xa = _vec(x, env.d)
    out = []
    for axis in range(env.d):
        for minus in (True, False):
            if K.edge_open(seed, p, closed, xa, axis, minus):
                y = list(x)
                y[axis] += -1 if minus else 1
                out.append(tuple(int(c) for c in y))
    return out


def _zero_direction(d: int) -> np.ndarray:
    v = np.zeros(d, dtype=np.int64)
    v[0] = 1
    return v


def cluster_bfs(env: Environment, x, R: int, budget: int = DEFAULT_BUDGET) -> tuple[set, bool]:
    """Open cluster of ``x`` inside the l-infinity ball of radius ``R`` around it.

    Exploration stops at the shell: vertices at l-infinity distance ``R`` are
    reached but not expanded. ``reached_shell`` is true iff such a vertex is in
    the cluster.
    """
    if R < 0:
        raise ValueError("R must be non-negative")
    seed, p, closed = env.kernel_args
    xa = _vec(x, env.d)
    order, _, hit, exhausted = K.shell_truncated_bfs(seed, p, closed, xa, int(R), int(budget))
    if exhausted:
        raise BudgetExceeded(f"cluster exploration from {tuple(x)} exceeded {budget} vertices")
    pts = K.decode_many(order, xa, int(R))
    return {tuple(int(c) for c in row) for row in pts}, bool(hit)


def in_infinite_cluster(env: Environment, x, R_check: int = DEFAULT_R_CHECK, budget: int = DEFAULT_BUDGET) -> bool:
    """Finite proxy for ``x`` in the infinite cluster: its cluster reaches the
    l-infinity shell at radius ``R_check``. False positives decay with
    ``R_check`` when p is supercritical."""
    if R_check < 1:
        raise ValueError("R_check must be at least 1")
    seed, p, closed = env.kernel_args
    _, _, hit, exhausted = K.box_bfs(seed, p, closed, _vec(x, env.d), int(R_check), _zero_direction(env.d),
                                     K.NO_LEVEL, int(budget), 0, 0, True)
    if exhausted and not hit:
        raise BudgetExceeded(f"infinite-cluster check from {tuple(x)} exceeded {budget} vertices")
    return bool(hit)


def sample_conditioned(
    seed_stream: int | Iterable[int],
    p: float,
    d: int,
    R_check: int = DEFAULT_R_CHECK,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> tuple[Environment, int]:
    """First environment of ``seed_stream`` whose origin passes the
    infinite-cluster proxy, together with the number of rejections.

    An integer ``seed_stream`` is expanded to ``stream_seed(seed_stream, i)``.
    """
    if isinstance(seed_stream, (int, np.integer)):
        base = int(seed_stream)
        seeds = (stream_seed(base, i) for i in range(max_attempts))
    else:
        seeds = iter(seed_stream)
    origin = (0,) * d
    for attempt, seed in enumerate(seeds):
        if attempt >= max_attempts:
            break
        env = Environment(seed, p, d)
        if in_infinite_cluster(env, origin, R_check):
            return env, attempt
    raise ConditioningError(
        f"no environment with the origin in the R_check={R_check} cluster proxy after "
        f"{max_attempts} attempts at p={p}, d={d}; p is likely subcritical"
    )


def closed_edge_view(env: Environment, e: EdgeId) -> Environment:
    """``env`` with ``e`` additionally closed."""
    e = EdgeId(tuple(int(c) for c in e.base), int(e.axis))
    if e in env.closed:
        return env
    return replace(env, closed=env.closed + (e,))


def close_edges(env: Environment, edges: Sequence[EdgeId]) -> Environment:
    for e in edges:
        env = closed_edge_view(env, e)
    return env


def incident_edges(x) -> list:
    x = tuple(int(c) for c in x)
    out = []
    for axis in range(len(x)):
        lower = tuple(c - (1 if i == axis else 0) for i, c in enumerate(x))
        out.append(EdgeId(lower, axis))
        out.append(EdgeId(x, axis))
    return out
