"""Conductance-biased random walk on a percolation environment."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels as K
from .env import Direction, EdgeId, Environment, _as_u64, _vec, is_open

_CODES = "0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A sampled path ``positions[0..n_steps]`` with its provenance."""

    start: tuple
    positions: np.ndarray
    env: Environment
    walk_seed: int
    bias: Direction

    @property
    def env_ref(self) -> tuple:
        return self.env.triple

    @property
    def n_steps(self) -> int:
        return self.positions.shape[0] - 1

    @cached_property
    def levels(self) -> np.ndarray:
        """Exact integer levels ``X_m . v``."""
        return K.levels_of(self.positions, self.bias.v_array)

    @cached_property
    def running_max(self) -> np.ndarray:
        return np.maximum.accumulate(self.levels)

    def tobytes(self) -> bytes:
        return self.positions.tobytes()

    def step_codes(self) -> np.ndarray:
        """0 for a loop, ``2*axis + 1`` for ``-e_axis``, ``2*axis + 2`` for ``+e_axis``."""
        steps = np.diff(self.positions, axis=0)
        codes = np.zeros(steps.shape[0], dtype=np.int64)
        for axis in range(steps.shape[1]):
            codes[steps[:, axis] == -1] = 2 * axis + 1
            codes[steps[:, axis] == 1] = 2 * axis + 2
        return codes

    def header(self) -> dict:
        return {
            "env": self.env.to_dict(),
            "bias": self.bias.to_dict(),
            "walk_seed": self.walk_seed,
            "start": list(self.start),
            "n_steps": self.n_steps,
        }

    def write_steps(self, path) -> None:
        """Header line (JSON) followed by one character per step."""
        codes = self.step_codes()
        text = "".join(_CODES[c] for c in codes)
        Path(path).write_text(json.dumps(self.header(), sort_keys=True) + "\n" + text + "\n")

    @classmethod
    def read_steps(cls, path) -> "Trajectory":
        head, body = Path(path).read_text().split("\n", 1)
        meta = json.loads(head)
        env = Environment.from_dict(meta["env"])
        bias = Direction(tuple(meta["bias"]["v"]), meta["bias"]["lambda"])
        lookup = {c: i for i, c in enumerate(_CODES)}
        codes = np.array([lookup[c] for c in body.strip()], dtype=np.int64)
        d = env.d
        steps = np.zeros((codes.shape[0], d), dtype=np.int64)
        moving = codes > 0
        axis = (codes[moving] - 1) // 2
        sign = np.where((codes[moving] - 1) % 2 == 0, -1, 1)
        steps[np.nonzero(moving)[0], axis] = sign
        pos = np.vstack([np.asarray(meta["start"], dtype=np.int64)[None, :], steps]).cumsum(axis=0)
        return cls(tuple(meta["start"]), pos, env, int(meta["walk_seed"]), bias)

    def write_level_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "level"])
            norm = self.bias.norm
            for t, lv in enumerate(self.levels):
                w.writerow([t, repr(lv / norm)])


def conductance(env: Environment, bias: Direction, x, y) -> float:
    """``exp((x + y) . ell)`` if the edge is open, else 0."""
    e = EdgeId.between(x, y)
    if not is_open(env, e):
        return 0.0
    return math.exp(float(np.dot(np.add(x, y), bias.ell)))


def _step_weights(env: Environment, bias: Direction, x) -> list:
    # conductances divided by the common factor exp(2 x . ell)
    seed, p, closed = env.kernel_args
    xa = _vec(x, env.d)
    out = []
    for axis in range(env.d):
        for minus in (True, False):
            if K.edge_open(seed, p, closed, xa, axis, minus):
                y = list(x)
                y[axis] += -1 if minus else 1
                w = math.exp(-bias.ell[axis]) if minus else math.exp(bias.ell[axis])
                out.append((tuple(int(c) for c in y), w))
    return out


def transition_distribution(env: Environment, bias: Direction, x) -> dict:
    x = tuple(int(c) for c in x)
    weights = _step_weights(env, bias, x)
    if not weights:
        return {x: 1.0}
    total = math.fsum(w for _, w in weights)
    return {y: w / total for y, w in weights}


def simulate(env: Environment, bias: Direction, start, n_steps: int, walk_seed: int) -> Trajectory:
    """Sample ``n_steps`` steps from ``start``; replayable from the seeds."""
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    if bias.d != env.d:
        raise ValueError("bias and environment dimensions differ")
    seed, p, closed = env.kernel_args
    start = tuple(int(c) for c in start)
    pos = K.simulate_walk(seed, p, closed, np.asarray(bias.ell, dtype=np.float64),
                          _vec(start, env.d), int(n_steps), _as_u64(walk_seed))
    return Trajectory(start, pos, env, int(walk_seed) & K.MASK64, bias)


def hitting_time_delta(traj: Trajectory, s: float) -> int | None:
    """First ``m`` with ``X_m . unit >= s``, or None if never reached."""
    thr = traj.bias.threshold(s)
    rm = traj.running_max
    if rm[-1] < thr:
        return None
    return int(np.searchsorted(rm, thr, side="left"))


def hitting_times(traj: Trajectory, s_values) -> np.ndarray:
    """Vectorised :func:`hitting_time_delta`; -1 marks levels never reached."""
    thr = np.array([traj.bias.threshold(s) for s in np.atleast_1d(s_values)], dtype=np.int64)
    rm = traj.running_max
    idx = np.searchsorted(rm, thr, side="left").astype(np.int64)
    idx[thr > rm[-1]] = -1
    return idx


def max_level(traj: Trajectory, n: int) -> float:
    """``max_{j <= n} X_j . unit``."""
    if not 0 <= n <= traj.n_steps:
        raise ValueError(f"n={n} outside the trajectory")
    return float(traj.running_max[n]) / traj.bias.norm
