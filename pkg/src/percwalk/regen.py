"""Regeneration times of a simulated walk and the counting sequences built on them.

Two constructions are offered. :func:`find_regenerations` follows the
sigma/R/M ladder with the two-step ``e1`` pattern and the local edge set B;
:func:`ladder_regens_oracle` is the purely trajectory-based cross-check
(strict fresh maximum, never undercut afterwards).

Each construction restarted at a new start measures its levels relative to
that start, and the ``sigma`` attempt after a backtrack starts at the first
time the level is at least ``M_k`` (the hitting-time convention used
everywhere else).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .env import DEFAULT_BUDGET, Direction, Environment, _vec, ceil_scaled, floor_scaled
from .errors import BudgetExceeded, MismatchError
from .walk import Trajectory

DEFAULT_CONFIRM_HORIZON = 10_000
DEFAULT_ESCAPE_RADIUS = 8


@dataclass(frozen=True, eq=False)
class RegenRecord:
    """Regeneration candidates of one trajectory.

    ``level_ints`` are exact levels ``X_tau . v``. Only confirmed entries are
    used by the statistics; unconfirmed ones are trailing candidates with
    fewer than ``confirm_horizon`` observed steps after them.
    """

    taus: np.ndarray
    positions: np.ndarray
    level_ints: np.ndarray
    confirmed: np.ndarray
    construction: str
    bias: Direction
    n_steps: int
    max_level_int: int
    confirm_horizon: int
    provenance: dict = field(default_factory=dict)

    @property
    def levels(self) -> np.ndarray:
        return self.level_ints / self.bias.norm

    @property
    def confirmed_taus(self) -> np.ndarray:
        return self.taus[self.confirmed]

    @property
    def confirmed_level_ints(self) -> np.ndarray:
        return self.level_ints[self.confirmed]

    @classmethod
    def from_levels(cls, taus, level_ints, bias: Direction, confirmed=None,
                    construction: str = "manual") -> "RegenRecord":
        """Record built directly from regeneration times and exact levels
        (positions are not tracked)."""
        taus = np.asarray(taus, dtype=np.int64)
        lv = np.asarray(level_ints, dtype=np.int64)
        conf = np.ones(taus.shape[0], bool) if confirmed is None else np.asarray(confirmed, dtype=bool)
        return cls(taus, np.zeros((taus.shape[0], bias.d), np.int64), lv, conf, construction, bias,
                   int(taus.max(initial=0)), int(lv.max(initial=0)), 1)

    def __len__(self) -> int:
        return int(self.taus.shape[0])

    def increments(self) -> tuple[np.ndarray, np.ndarray]:
        """(time increments, level increments along the unit direction)
        between consecutive confirmed regenerations."""
        t = self.confirmed_taus
        lv = self.confirmed_level_ints
        return np.diff(t), np.diff(lv) / self.bias.norm

    def write_csv(self, path, extra_header: dict | None = None) -> None:
        head = {"construction": self.construction, "bias": self.bias.to_dict(),
                "confirm_horizon": self.confirm_horizon, "n_steps": self.n_steps, **self.provenance}
        if extra_header:
            head.update(extra_header)
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(head, sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow(["k", "tau", "level", "confirmed"])
            for k in range(len(self)):
                w.writerow([k + 1, int(self.taus[k]), repr(float(self.levels[k])), int(self.confirmed[k])])


def _record(traj: Trajectory, taus, conf, construction: str, horizon: int) -> RegenRecord:
    taus = np.asarray(taus, dtype=np.int64)
    return RegenRecord(
        taus=taus,
        positions=traj.positions[taus].copy(),
        level_ints=traj.levels[taus].copy(),
        confirmed=np.asarray(conf, dtype=bool),
        construction=construction,
        bias=traj.bias,
        n_steps=traj.n_steps,
        max_level_int=int(traj.running_max[-1]),
        confirm_horizon=horizon,
        provenance={"env": traj.env.to_dict(), "walk_seed": traj.walk_seed, "start": list(traj.start)},
    )


def escape_steps_J(env: Environment, bias: Direction, x, escape_radius: int = DEFAULT_ESCAPE_RADIUS,
                   budget: int = DEFAULT_BUDGET) -> float:
    """Steps needed before an escaping open path from ``x`` can stay at or
    above the level of ``x`` for good.

    An escape at radius r is a path reaching level ``x . unit + r`` inside the
    l-infinity box of radius r. Starting from ``r = escape_radius`` the radius
    doubles while no escape exists, up to eight times the start; ``inf`` if
    none is found even then.
    """
    if escape_radius < 1:
        raise ValueError("escape_radius must be at least 1")
    seed, p, closed = env.kernel_args
    j, status = K.escape_steps_adaptive(seed, p, closed, _vec(x, env.d), int(escape_radius), bias.v_array,
                                        bias.q, int(budget))
    if status == 2:
        raise BudgetExceeded(f"escape search from {tuple(x)} exceeded {budget} vertices")
    return math.inf if j < 0 else int(j)


def _check_pair(env: Environment, bias: Direction, traj: Trajectory) -> None:
    if traj.env.triple != env.triple or traj.env.closed != env.closed:
        raise MismatchError("trajectory was not simulated on this environment")
    if traj.bias != bias:
        raise MismatchError("trajectory was simulated with a different bias")


def find_regenerations(env: Environment, bias: Direction, traj: Trajectory,
                       confirm_horizon: int = DEFAULT_CONFIRM_HORIZON,
                       escape_radius: int = DEFAULT_ESCAPE_RADIUS,
                       budget: int = DEFAULT_BUDGET) -> RegenRecord:
    """Regeneration times from the sigma/R/M ladder.

    A candidate is accepted when no backtrack below its level is observed in
    the rest of the trajectory; it is confirmed when at least
    ``confirm_horizon`` steps follow it.
    """
    _check_pair(env, bias, traj)
    if confirm_horizon < 1:
        raise ValueError("confirm_horizon must be at least 1")
    seed, p, closed = env.kernel_args
    axis, sign = bias.e1
    taus, conf, status = K.paper_regenerations(
        seed, p, closed, traj.positions, bias.v_array, bias.q, bias.threshold(1.0),
        axis, sign, bias.b_vectors, int(escape_radius), int(budget), int(confirm_horizon))
    if status == 2:
        raise BudgetExceeded("escape search exceeded its budget during the regeneration scan")
    return _record(traj, taus, conf, "paper", confirm_horizon)


def ladder_regens_oracle(traj: Trajectory, confirm_horizon: int = DEFAULT_CONFIRM_HORIZON) -> RegenRecord:
    """Times ``t >= 1`` at a strict running maximum that the rest of the
    observed path never undercuts."""
    if confirm_horizon < 1:
        raise ValueError("confirm_horizon must be at least 1")
    taus, conf = K.ladder_times(traj.levels, int(confirm_horizon))
    return _record(traj, taus, conf, "ladder", confirm_horizon)


def regens_before_level(record: RegenRecord, n: float) -> int:
    """Number of confirmed regenerations at level ``<= n`` along the unit direction."""
    if ceil_scaled(n, record.bias.q) > record.max_level_int:
        raise ValueError(f"level {n} was not reached by the trajectory")
    cut = floor_scaled(n, record.bias.q)
    return int(np.searchsorted(record.confirmed_level_ints, cut, side="right"))


def regens_before_time(record: RegenRecord, n: int) -> int:
    return int(np.searchsorted(record.confirmed_taus, n, side="right"))


def centered_increments(record: RegenRecord, traj: Trajectory | None, v_hat: float) -> np.ndarray:
    """``(X_{tau_{m+1}} - X_{tau_m}) . unit - v_hat (tau_{m+1} - tau_m)``."""
    if traj is not None and traj.n_steps != record.n_steps:
        raise MismatchError("record does not belong to this trajectory")
    if int(record.confirmed.sum()) < 2:
        raise ValueError("need at least two confirmed regenerations")
    dt, dl = record.increments()
    return dl - v_hat * dt
