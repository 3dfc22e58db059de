"""Experiment manifests: YAML files with nested sections, validated and hashed.

Example::

    kind: nearstable
    seed: 7
    replicas: 2000
    nearstable:
      alpha: 1.5
      n_list: [1024, 4096, 16384, 65536, 262144, 1048576]
    tolerances:
      slope: 0.05
"""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

KINDS = ("env-census", "bk-tail", "walk", "regen", "trap-census", "nearstable", "pipeline")

DEFAULTS: dict = {
    "kind": None,
    "seed": 0,
    "replicas": 100,
    "out": "results",
    "env": {"p": 0.7, "d": 2, "R_check": 64},
    "bias": {"v": [1, 0], "lambda": 0.5},
    "walk": {"n_steps": 100_000, "s_list": [], "n_list": [], "confirm_horizon": 10_000, "escape_radius": 8},
    "bk": {"box_radius": 32, "fit_range": [0.0, None], "n_boot": 200},
    "traps": {"n_scale": None, "eps": 0.5, "zeta_hat": None, "trap_radius": None},
    "nearstable": {"alpha": 1.5, "sv_kind": "constant", "c": 1.0, "beta": 0.0, "sign_kind": "nonnegative",
                   "n_list": [2 ** k for k in range(10, 21, 2)],
                   "rho_upper": None, "lambda_upper": [1, 2, 4, 8, 16, 32, 64, 128],
                   "rho_lower": None, "lambda_lower": [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
                   "centering": "median"},
    "pipeline": {"gamma_target": 1.5, "bk_envs": 10_000},
    "tolerances": {"slope": 0.05, "min_r2": 0.98, "gamma_gap": 0.2, "delta_slope": 0.15, "ks_p": 0.001},
}


class ManifestError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load(path: str | Path | None) -> dict:
    if path is None:
        return {}
    data = yaml.safe_load(Path(path).read_text())
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ManifestError("manifest must be a mapping")
    return data


def resolve(raw: dict, overrides: dict | None = None) -> dict:
    """Defaults, then the file, then command-line overrides."""
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ManifestError(f"unknown manifest keys: {sorted(unknown)}")
    m = _merge(DEFAULTS, raw)
    for k, v in (overrides or {}).items():
        if v is not None:
            m[k] = v
    return m


def validate(m: dict) -> list[str]:
    """Schema and range violations (empty when the manifest is usable)."""
    errs = []
    if m.get("kind") not in KINDS:
        errs.append(f"kind must be one of {KINDS}, got {m.get('kind')!r}")
    if not isinstance(m.get("seed"), int) or not 0 <= m["seed"] < 2 ** 64:
        errs.append("seed must be an unsigned 64-bit integer")
    if not isinstance(m.get("replicas"), int) or m["replicas"] < 1:
        errs.append("replicas must be a positive integer")
    env = m.get("env", {})
    p, d = env.get("p"), env.get("d")
    if not isinstance(p, (int, float)) or not 0 < p < 1:
        errs.append(f"env.p must lie in (0, 1), got {p!r}")
    if not isinstance(d, int) or d < 2:
        errs.append(f"env.d must be an integer >= 2, got {d!r}")
    bias = m.get("bias", {})
    v = bias.get("v")
    if not isinstance(v, list) or not all(isinstance(c, int) for c in v) or not any(v):
        errs.append("bias.v must be a nonzero integer vector")
    elif isinstance(d, int) and len(v) != d:
        errs.append(f"bias.v has length {len(v)} but env.d is {d}")
    lam = bias.get("lambda")
    if not isinstance(lam, (int, float)) or not lam > 0:
        errs.append(f"bias.lambda must be positive, got {lam!r}")
    walk = m.get("walk", {})
    if not isinstance(walk.get("n_steps"), int) or walk["n_steps"] < 1:
        errs.append("walk.n_steps must be a positive integer")
    for key in ("s_list", "n_list"):
        vals = walk.get(key, [])
        if not isinstance(vals, list) or any(not isinstance(x, (int, float)) or x <= 0 for x in vals):
            errs.append(f"walk.{key} must be a list of positive numbers")
        elif key == "n_list" and any(x > walk.get("n_steps", 0) for x in vals):
            errs.append("walk.n_list entries cannot exceed walk.n_steps")
    nst = m.get("nearstable", {})
    if not isinstance(nst.get("alpha"), (int, float)) or nst["alpha"] <= 0:
        errs.append("nearstable.alpha must be positive")
    if nst.get("sv_kind") not in ("constant", "log-power", "oscillating"):
        errs.append("nearstable.sv_kind must be constant, log-power or oscillating")
    if nst.get("sign_kind") not in ("nonnegative", "symmetric"):
        errs.append("nearstable.sign_kind must be nonnegative or symmetric")
    if not nst.get("n_list") or any(not isinstance(x, int) or x < 1 for x in nst["n_list"]):
        errs.append("nearstable.n_list must be a list of positive integers")
    if m.get("kind") == "pipeline":
        g = m.get("pipeline", {}).get("gamma_target")
        if not isinstance(g, (int, float)) or g <= 0:
            errs.append("pipeline.gamma_target must be positive")
    if m.get("kind") == "trap-census":
        t = m.get("traps", {})
        if not isinstance(t.get("zeta_hat"), (int, float)) or t["zeta_hat"] <= 0:
            errs.append("traps.zeta_hat must be positive for trap-census")
        if not 0 < t.get("eps", 0) < 1:
            errs.append("traps.eps must lie in (0, 1)")
    return errs


def canonical(m: dict) -> str:
    return json.dumps(m, sort_keys=True, separators=(",", ":"))


def manifest_hash(m: dict) -> str:
    """Hash of everything that determines the results (the output directory
    does not)."""
    body = {k: v for k, v in m.items() if k != "out"}
    return hashlib.sha256(canonical(body).encode()).hexdigest()
