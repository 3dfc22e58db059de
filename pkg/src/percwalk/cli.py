"""Command line entry point: ``percwalk <subcommand> [--config FILE] ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import manifest as mf
from . import nearstable as ns
from .errors import BudgetExceeded, ConditioningError
from .stats import TailEstimate, gamma_from_zeta, lambda_for_gamma, zeta_estimate

log = logging.getLogger("percwalk")

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_BUDGET = 0, 2, 3, 4

COLUMNS = {
    "env-census": "env_census.csv: replica, rejections",
    "bk-tail": "bk_samples.csv: replica, bk, rejections",
    "walk": "walks.csv: replica, final_level, max_level, level_at_<n>..., hit_<s>... (-1 = not reached)",
    "regen": "increments.csv: replica, k, dt, dl (confirmed regeneration blocks)",
    "trap-census": "slabs.csv: replica, k, T, deep, explored, theta, censored (theta -1 = censored)",
    "nearstable": "medians.csv: n, a_n, median_abs_dev; upper.csv / lower.csv: n, lambda, prob, ci_low, ci_high, valid",
    "pipeline": "bk_samples.csv and increments.csv as above; delta.csv: s, median_abs_dev",
}


def _jsonable(x):
    if isinstance(x, TailEstimate):
        return x.to_json()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")


class Outputs:
    """Writes every artifact tagged with the manifest hash."""

    def __init__(self, out_dir, mhash: str):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.hash = mhash

    def csv(self, name: str, columns, rows) -> Path:
        path = self.dir / name
        with open(path, "w", newline="") as fh:
            fh.write(f"# manifest_sha256={self.hash}\n")
            w = csv.writer(fh)
            w.writerow(columns)
            for r in rows:
                w.writerow([repr(float(c)) if isinstance(c, (float, np.floating)) else c for c in r])
        return path

    def json(self, name: str, obj: dict) -> Path:
        path = self.dir / name
        body = {"manifest_sha256": self.hash, **obj}
        path.write_text(json.dumps(body, sort_keys=True, indent=2, default=_jsonable) + "\n")
        return path


def _spec(m: dict) -> ns.HeavyTailSpec:
    c = m["nearstable"]
    return ns.HeavyTailSpec(float(c["alpha"]), ns.SlowlyVarying(c["sv_kind"], float(c["c"]), float(c["beta"])),
                            c["sign_kind"])


def _walk_params(m: dict, lam: float | None = None, regen: bool = True) -> ex.WalkParams:
    w = m["walk"]
    return ex.WalkParams(
        p=float(m["env"]["p"]), v=tuple(m["bias"]["v"]), lam=float(m["bias"]["lambda"] if lam is None else lam),
        n_steps=int(w["n_steps"]), s_list=tuple(w["s_list"]), n_list=tuple(int(n) for n in w["n_list"]),
        regen=regen, confirm_horizon=int(w["confirm_horizon"]), escape_radius=int(w["escape_radius"]),
        R_check=int(m["env"]["R_check"]))


def _check(checks: dict, name: str, ok: bool, **detail) -> None:
    checks[name] = {"pass": bool(ok), **detail}


# ---------------------------------------------------------------------------
# runners: each returns (summary dict, checks dict)


def run_env_census(m, out: Outputs, threads):
    res = ex.env_census(m["env"]["p"], m["env"]["d"], m["replicas"], m["seed"], m["env"]["R_check"], threads)
    out.csv("env_census.csv", ["replica", "rejections"], enumerate(res["rejections"].tolist()))
    return {"acceptance": res["acceptance"], "mean_rejections": float(res["rejections"].mean())}, {}


def _bk(m, out: Outputs, threads, n_envs):
    res = ex.bk_census(m["env"]["p"], m["env"]["d"], m["bias"]["v"], n_envs, m["seed"], m["bk"]["box_radius"],
                       m["env"]["R_check"], threads)
    out.csv("bk_samples.csv", ["replica", "bk", "rejections"],
            ((i, b, r) for i, (b, r) in enumerate(zip(res["bk"].tolist(), res["rejections"].tolist()))))
    lo, hi = m["bk"]["fit_range"]
    return res["bk"], zeta_estimate(res["bk"], (lo, hi), n_boot=m["bk"]["n_boot"], seed=m["seed"])


def run_bk_tail(m, out: Outputs, threads):
    checks: dict = {}
    bk, zeta = _bk(m, out, threads, m["replicas"])
    _check(checks, "tail_linearity", zeta.r2 >= m["tolerances"]["min_r2"], r2=zeta.r2)
    return {"zeta": zeta, "zeta_ci": zeta.ci(), "trap_fraction": float((bk > 0).mean())}, checks


def _walk_rows(results, params):
    for r in results:
        yield [r["index"], r["final_level"], r["max_level"], *r["levels_at"].tolist(), *r["hitting"].tolist()]


def run_walk(m, out: Outputs, threads):
    params = _walk_params(m, regen=False)
    results = ex.run_walks(params, m["replicas"], m["seed"], threads)
    cols = ["replica", "final_level", "max_level"] + [f"level_at_{n}" for n in params.n_list] + \
        [f"hit_{s}" for s in params.s_list]
    out.csv("walks.csv", cols, _walk_rows(results, params))
    summ = ex.summarize_walks(results, params)
    return summ, {}


def _regen_checks(summ, tol) -> dict:
    checks: dict = {}
    _check(checks, "no_backtrack_scan", summ["scan_ok"])
    _check(checks, "subset_of_ladder", summ["subset_ok"])
    bound = summ["autocorr_bound"]
    _check(checks, "lag1_autocorrelation", abs(summ["autocorr_dt"]) <= bound and abs(summ["autocorr_dl"]) <= bound,
           dt=summ["autocorr_dt"], dl=summ["autocorr_dl"], bound=bound)
    p_dt, p_dl = summ["ks_halves_dt"][1], summ["ks_halves_dl"][1]
    _check(checks, "ks_halves", min(p_dt, p_dl) >= tol["ks_p"], p_dt=p_dt, p_dl=p_dl)
    return checks


def _increment_rows(results):
    for r in results:
        for k, (dt, dl) in enumerate(zip(r["dt"].tolist(), r["dl"].tolist())):
            yield r["index"], k + 1, dt, dl


def run_regen(m, out: Outputs, threads, lam=None):
    params = _walk_params(m, lam=lam, regen=True)
    results = ex.run_walks(params, m["replicas"], m["seed"], threads)
    out.csv("increments.csv", ["replica", "k", "dt", "dl"], _increment_rows(results))
    summ = ex.summarize_walks(results, params)
    return summ, _regen_checks(summ, m["tolerances"])


def run_trap_census(m, out: Outputs, threads):
    t = m["traps"]
    params = _walk_params(m, regen=False)
    n_scale = t["n_scale"] or params.n_steps
    rows = ex.trap_census(params, m["replicas"], m["seed"], n_scale, t["eps"], t["zeta_hat"], t["trap_radius"], threads)
    out.csv("slabs.csv", ["replica", "k", "T", "deep", "explored", "theta", "censored"], rows)
    arr = np.array(rows, dtype=np.int64).reshape(-1, 7)
    theta = arr[(arr[:, 4] == 1) & (arr[:, 6] == 0), 5]
    summ = {"slabs": int(arr.shape[0]), "deep": int(arr[:, 3].sum()), "explored": int(arr[:, 4].sum()),
            "censored": int(arr[:, 6].sum()),
            "theta_quantiles": np.quantile(theta, [0.5, 0.9, 0.99]).tolist() if theta.size else []}
    return summ, {}


def run_nearstable(m, out: Outputs, threads):
    c, tol = m["nearstable"], m["tolerances"]
    spec = _spec(m)
    res = ex.slope_pipeline(spec, c["n_list"], m["replicas"], m["seed"], threads)
    a = ns.scaling_sequence(spec, c["n_list"])
    out.csv("medians.csv", ["n", "a_n", "median_abs_dev"], zip(c["n_list"], a.tolist(), res["medians"].tolist()))
    target = 1.0 / spec.alpha if spec.alpha < 2 else 0.5
    checks: dict = {}
    slope = res["slope"]
    _check(checks, "slope", abs(slope.exponent - target) <= tol["slope"], slope=slope.exponent, target=target)
    summ = {"slope": slope, "target": target, "mu": spec.mu}
    for kind in ("upper", "lower"):
        rho = c[f"rho_{kind}"]
        if rho is None:
            continue
        if kind == "upper":
            table = ns.upper_fluctuation_check(spec, c["n_list"], m["replicas"], rho, c["lambda_upper"],
                                               sums=res["sums"])
        else:
            table = ns.anticoncentration_check(spec, c["n_list"], m["replicas"], rho, c["lambda_lower"],
                                               c["centering"], sums=res["sums"])
        out.csv(f"{kind}.csv", ["n", "lambda", "prob", "ci_low", "ci_high", "valid"],
                ([r["n"], r["lambda"], r["prob"], r["ci_low"], r["ci_high"], int(r["valid"])] for r in table.rows()))
        summ[kind] = {"C": table.C, "C_ci": table.C_ci, "holds": table.holds}
        _check(checks, f"{kind}_bound", table.holds, C=table.C)
    return summ, checks


def run_pipeline(m, out: Outputs, threads):
    tol = m["tolerances"]
    _, zeta = _bk(m, out, threads, m["pipeline"]["bk_envs"])
    lam = lambda_for_gamma(zeta.exponent, m["pipeline"]["gamma_target"])
    summ, checks = run_regen(m, out, threads, lam=lam)
    gamma_hat = gamma_from_zeta(zeta.exponent, lam)
    # delta-method CI for gamma from the zeta CI
    g_lo, g_hi = (z / (2 * lam) for z in zeta.ci())
    tail = summ["regen_tail"]
    if tail is None:
        _check(checks, "gamma_consistency", False, error=summ["errors"]["regen_tail"], gamma_hat=gamma_hat)
    else:
        t_lo, t_hi = tail.ci()
        _check(checks, "gamma_consistency",
               abs(tail.exponent - gamma_hat) <= tol["gamma_gap"] and t_lo <= g_hi and g_lo <= t_hi,
               regen_tail=tail.exponent, gamma_hat=gamma_hat)
    if "delta_slope" in summ or "delta_slope" in summ["errors"]:
        ds = summ.get("delta_slope")
        if ds is None:
            _check(checks, "delta_slope", False, error=summ["errors"]["delta_slope"])
        else:
            _check(checks, "delta_slope", abs(ds.exponent - 1.0 / gamma_hat) <= tol["delta_slope"],
                   slope=ds.exponent, target=1.0 / gamma_hat)
        out.csv("delta.csv", ["s", "median_abs_dev"], zip(m["walk"]["s_list"], summ["delta_medians"].tolist()))
    summ.update({"zeta": zeta, "lambda": lam, "gamma_hat": gamma_hat, "gamma_ci": (g_lo, g_hi)})
    return summ, checks


RUNNERS = {
    "env-census": run_env_census, "bk-tail": run_bk_tail, "walk": run_walk, "regen": run_regen,
    "trap-census": run_trap_census, "nearstable": run_nearstable, "pipeline": run_pipeline,
}


def run(manifest: dict, threads: int | None = None) -> tuple[dict, int]:
    """Execute a resolved, valid manifest; returns (summary, exit code)."""
    mhash = mf.manifest_hash(manifest)
    out = Outputs(manifest["out"], mhash)
    try:
        summ, checks = RUNNERS[manifest["kind"]](manifest, out, threads)
    except (BudgetExceeded, ConditioningError) as exc:
        summary = {"manifest": manifest, "error": str(exc), "status": "budget"}
        out.json("summary.json", summary)
        return summary, EXIT_BUDGET
    passed = all(c["pass"] for c in checks.values())
    summary = {"manifest": manifest, "results": summ, "checks": checks, "status": "pass" if passed else "fail"}
    summary["results"] = {k: v for k, v in summ.items() if k not in ("sums",)}
    out.json("summary.json", summary)
    return summary, EXIT_OK if passed else EXIT_TOLERANCE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="percwalk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML manifest")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--replicas", type=int)
    common.add_argument("--out", type=str, help="output directory")
    common.add_argument("--threads", type=int, help="worker processes (default: $THREADS or CPU count)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("validate", parents=[common], help="check a manifest and list violations")
    for kind in mf.KINDS:
        sub.add_parser(kind, parents=[common], help=f"run a {kind} experiment",
                       epilog=f"CSV output: {COLUMNS[kind]}; summary.json holds estimates and checks.")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        raw = mf.load(args.config)
        overrides = {"seed": args.seed, "replicas": args.replicas, "out": args.out}
        if args.command != "validate":
            overrides["kind"] = args.command
        manifest = mf.resolve(raw, overrides)
    except (mf.ManifestError, OSError, ValueError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    errs = mf.validate(manifest)
    if errs:
        for e in errs:
            print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print("ok")
        return EXIT_OK
    summary, code = run(manifest, args.threads)
    print(json.dumps({"status": summary["status"], "checks": summary.get("checks", {}),
                      "manifest_sha256": mf.manifest_hash(manifest)}, default=_jsonable, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
