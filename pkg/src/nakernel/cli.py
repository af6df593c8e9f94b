"""Command-line entry point: ``nakernel <command> [--config F] [--seed S] [--workers W] [--out D]``.

Each command writes ``<out>/<command>.csv`` (flat table, one header line) and
``<out>/<command>.json`` (metadata, the fully resolved config and a summary).
Exit status is 0 when every check passes, 1 when checks ran and some failed,
and 2 on configuration or runtime errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import subprocess
import sys
import time
from itertools import product
from pathlib import Path

import numpy as np
from scipy.stats import kstest

from . import __version__
from .bounds import (count_violations, exponent_newupper, exponent_report, fit_constants,
                     simulate_bound_samples)
from .config import build_group, config_hash, load_config
from .errors import (ConfigError, DivergentDriftError, FitFailureError, NAKernelError,
                     UnsupportedRegionError)
from .evolker import estimate_on_grid
from .expfun import perpetuity_law, sample_perpetuities
from .liegroup import GroupElement, MetaAbelianGroup
from .poisson import check_drift, decay_regression, estimate_nu_many
from .randpath import DiscretePath, sample_bm_drift, uniform_grid
from .reflect import (SupEventQuery, bound_abs_sup_interval, density_limit_bound,
                      prob_hit_then_below, simulate_sup_paths, sup_tail_bound)
from .rng import derive_rng, derive_seed, resolve_workers

COMMANDS = ("verify-dufresne", "verify-reflection", "kernel", "verify-bounds", "poisson",
            "exponents")


def _flat(g: GroupElement) -> list:
    return [float(c) for c in g.as_array()]


def _element(G: MetaAbelianGroup, coords) -> GroupElement:
    coords = np.asarray(coords, dtype=float)
    if coords.shape != (G.m + G.n,):
        raise ConfigError(f"points need {G.m + G.n} coordinates (M part then V part)")
    return G.element(coords[:G.m], coords[G.m:])


# -- commands ---------------------------------------------------------------------------------
# each returns (rows, summary, passed)

def cmd_verify_dufresne(cfg: dict, workers: int):
    c = cfg["dufresne"]
    seed = cfg["seed"]
    cases = [(f"mu={mu:g}", [1.0], [mu / 2.0]) for mu in c["mus"]]
    cases += [(f"form={list(f)}", f, c["extra_alpha"]) for f in c["extra_forms"]]
    rows = []
    for i, (label, form, alpha) in enumerate(cases):
        law = perpetuity_law(2.0, form, alpha)
        samples = sample_perpetuities(2.0, form, alpha, int(c["n_samples"]),
                                      derive_seed(seed, i), n_steps_per_unit=c["n_steps_per_unit"],
                                      tol=c["tol"], workers=workers)
        ks = float(kstest(samples, law.cdf).statistic)
        rows.append({"case": label, "d": 2.0, "shape": law.shape, "scale": law.scale,
                     "n_samples": samples.size, "ks": ks, "ks_max": c["ks_max"],
                     "pass": ks <= c["ks_max"]})
    passed = all(r["pass"] for r in rows)
    return rows, {"max_ks": max(r["ks"] for r in rows)}, passed


def _reflection_continuity(rng, n=100):
    gaps = []
    for a, t in zip(rng.uniform(0.1, 3, n), rng.uniform(0.2, 3, n)):
        lo = prob_hit_then_below(a, np.nextafter(a, -np.inf), t)
        gaps.append(abs(prob_hit_then_below(a, a, t) - lo))
        gaps.append(abs(density_limit_bound(a, np.nextafter(a, -np.inf), t)
                        - density_limit_bound(a, a, t)))
    return max(gaps)


def cmd_verify_reflection(cfg: dict, workers: int):
    c = cfg["reflection"]
    t = float(c["t"])
    rng = derive_rng(cfg["seed"], 0)
    hi, lo, end = simulate_sup_paths(rng, int(c["n_paths"]), t, int(c["n_steps"]))
    absmax = np.maximum(hi, -lo)
    N = hi.size
    rows = []

    def mc(mask):
        p = float(mask.mean())
        return p, float(np.sqrt(p * (1 - p) / N))

    for a, x in c["hit_queries"]:
        exact = prob_hit_then_below(a, x, t)
        p, se = mc((hi >= a) & (end <= x))
        rows.append({"kind": "hit_then_below", "a": a, "x": x, "y": "", "formula": exact,
                     "mc": p, "mc_stderr": se, "status": "checked",
                     "pass": abs(exact - p) <= c["exact_tol"]})
    for a, x, y in c["interval_queries"]:
        try:
            bound = bound_abs_sup_interval(SupEventQuery(a, x, y, t))
        except UnsupportedRegionError as exc:
            rows.append({"kind": "abs_sup_interval", "a": a, "x": x, "y": y, "formula": "",
                         "mc": "", "mc_stderr": "", "status": f"skipped: {exc}", "pass": True})
            continue
        p, se = mc((absmax >= a) & (end >= x) & (end <= y))
        rows.append({"kind": "abs_sup_interval", "a": a, "x": x, "y": y, "formula": bound,
                     "mc": p, "mc_stderr": se, "status": "checked",
                     "pass": bound >= p - c["bound_margin"]})
    for x, y in c["tail_queries"]:
        bound = sup_tail_bound(x, y, t)
        p, se = mc(np.maximum(np.abs(x + hi), np.abs(x + lo)) >= y)
        rows.append({"kind": "sup_tail", "a": "", "x": x, "y": y, "formula": bound, "mc": p,
                     "mc_stderr": se, "status": "checked",
                     "pass": bound >= p - c["bound_margin"]})
    eps = float(c["density_eps"])
    for a, n in c["density_queries"]:
        bound = density_limit_bound(a, n, t)
        p, se = mc((absmax >= a) & (np.abs(end - n) <= eps / 2))
        rows.append({"kind": "density_limit", "a": a, "x": n, "y": "", "formula": bound,
                     "mc": p / eps, "mc_stderr": se / eps, "status": "checked",
                     "pass": bound >= p / eps - 3 * se / eps})
    gap = _reflection_continuity(derive_rng(cfg["seed"], 1))
    passed = all(r["pass"] for r in rows) and gap <= 1e-10
    return rows, {"branch_gap": gap, "n_paths": N, "n_steps": int(c["n_steps"])}, passed


def _kernel_sigma(cfg: dict, G: MetaAbelianGroup) -> DiscretePath:
    c = cfg["kernel"]
    t = float(c["t"])
    if c["sigma_values"] is not None:
        vals = np.asarray(c["sigma_values"], dtype=float)
        return DiscretePath(uniform_grid(t, vals.shape[0] - 1), vals.reshape(vals.shape[0], -1))
    sseed = derive_seed(cfg["seed"], 0) if c["sigma_seed"] is None else int(c["sigma_seed"])
    return sample_bm_drift(G.roots.k, 0.0, -2.0 * G.roots.alpha, t, int(c["n_steps"]), sseed)


def cmd_kernel(cfg: dict, workers: int):
    c = cfg["kernel"]
    G = build_group(cfg)
    sigma = _kernel_sigma(cfg, G)
    h, box = float(c["h"]), float(c["box"])
    ax = np.arange(-box, box + h / 2, h)
    m_pts = np.array(list(product(ax, repeat=G.m)))
    eseed = derive_seed(cfg["seed"], 1)
    rows, total = [], 0.0
    for v in product(ax, repeat=G.n):
        mean, se = estimate_on_grid(G, sigma, list(v), m_pts, float(c["t"]), int(c["n_eta"]),
                                    eseed, workers=workers)
        total += float(mean.sum())
        for m, val, s in zip(m_pts, mean, se):
            rows.append({**{f"m{i + 1}": float(q) for i, q in enumerate(m)},
                         **{f"v{j + 1}": float(q) for j, q in enumerate(v)},
                         "value": float(val), "stderr": float(s)})
    total *= h ** (G.m + G.n)
    passed = abs(total - 1.0) <= c["normalization_tol"]
    return rows, {"total_mass": total, "grid_points": len(rows)}, passed


def cmd_verify_bounds(cfg: dict, workers: int):
    c = cfg["bounds"]
    G = build_group(cfg)
    kw = dict(t=c["t"], n_steps=c["n_steps"], n_eta=c["n_eta"], box=c["box"], workers=workers)
    fit = simulate_bound_samples(G, int(c["n_fit"]), derive_seed(cfg["seed"], 0), **kw)
    hold = simulate_bound_samples(G, int(c["n_holdout"]), derive_seed(cfg["seed"], 1), **kw)
    rows = []
    for bound in c["bounds"]:
        try:
            consts = fit_constants(fit, bound, G, strategy=c["strategy"], c_max=c["c_max"])
        except FitFailureError as exc:
            rows.append({"bound": bound, "status": f"fit-failure: {exc}", "C": "", "D": "",
                         "n_fit": len(fit), "n_holdout": len(hold), "violations": "",
                         "violation_rate": "", "pass": False})
            continue
        bad = count_violations(hold, bound, G, consts)
        rate = bad / len(hold)
        rows.append({"bound": bound, "status": "fitted", "C": consts.C, "D": consts.D,
                     "n_fit": len(fit), "n_holdout": len(hold), "violations": bad,
                     "violation_rate": rate, "pass": rate <= c["max_violation_rate"]})
    return rows, {"strategy": c["strategy"]}, all(r["pass"] for r in rows)


def cmd_poisson(cfg: dict, workers: int):
    c, b = cfg["poisson"], cfg["budget"]
    G = build_group(cfg)
    try:
        check_drift(G)
    except DivergentDriftError as exc:
        raise ConfigError(str(exc)) from exc
    kw = dict(T=b["T"], n_sigma=int(b["n_sigma"]), n_eta=int(b["n_eta"]),
              n_steps_per_unit=int(b["n_steps"]), workers=workers)
    rows, summary, passed = [], {}, True
    if c["points"]:
        pts = [_element(G, p) for p in c["points"]]
        for x, e in zip(pts, estimate_nu_many(G, pts, seed=derive_seed(cfg["seed"], 0), **kw)):
            rows.append({"kind": "point", "radius": "", "coords": json.dumps(_flat(x)),
                         "mean": e.value.mean, "stderr": e.value.stderr, "mom": e.value.mom,
                         "half_horizon_mean": e.half_horizon_value,
                         "converged": e.convergence_flag})
    if c["radii"]:
        direction = _element(G, c["direction"])
        gamma = exponent_newupper(G.roots, cfg["rho"], c["region"])
        fit = decay_regression(G, direction, cfg["rho"], c["radii"],
                               seed=derive_seed(cfg["seed"], 1), which=c["estimator"], **kw)
        for r, e in zip(c["radii"], fit.estimates):
            rows.append({"kind": "radius", "radius": float(r), "coords": json.dumps(_flat(e.point)),
                         "mean": e.value.mean, "stderr": e.value.stderr, "mom": e.value.mom,
                         "half_horizon_mean": e.half_horizon_value,
                         "converged": e.convergence_flag})
        threshold = -gamma + c["slope_tolerance"]
        passed = fit.slope <= threshold
        summary.update(slope=fit.slope, slope_stderr=fit.slope_stderr, exponent=gamma,
                       region=c["region"], threshold=threshold, excluded=list(fit.excluded),
                       estimator=c["estimator"])
    return rows, summary, passed


def cmd_exponents(cfg: dict, workers: int):
    G = build_group(cfg)
    roots, rho = G.roots, cfg["rho"]
    reps = [exponent_report(roots, "thCM", rho=rho)]
    reps += [exponent_report(roots, "Thpota", q=q) for q in cfg["exponents"]["q"]]
    reps += [exponent_report(roots, "newupper", region=r, rho=rho)
             for r in cfg["exponents"]["regions"]]
    rows = [{"theorem": r.theorem, "region": r.region, "q": r.inputs.get("q", ""),
             "exponent": r.exponent, "gamma_alpha": r.inputs.get("gamma_alpha", ""),
             "rho0_rho": r.inputs.get("rho0_rho", ""), "note": r.note} for r in reps]
    return rows, {"alpha": list(map(float, roots.alpha)), "rho": list(map(float, rho))}, True


HANDLERS = {
    "verify-dufresne": cmd_verify_dufresne,
    "verify-reflection": cmd_verify_reflection,
    "kernel": cmd_kernel,
    "verify-bounds": cmd_verify_bounds,
    "poisson": cmd_poisson,
    "exponents": cmd_exponents,
}


# -- output -----------------------------------------------------------------------------------

def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def rows_to_csv(rows) -> str:
    """Union of row keys in first-seen order; empty cells where a key is absent."""
    fields: list = []
    for r in rows:
        fields.extend(k for k in r if k not in fields)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, restval="", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(v) for k, v in r.items()})
    return buf.getvalue()


def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def run_command(command: str, cfg: dict, workers: int = 1, out_dir=None) -> dict:
    """Run one command on a resolved config; write outputs when ``out_dir`` is set."""
    t0 = time.perf_counter()
    rows, summary, passed = HANDLERS[command](cfg, workers)
    payload = rows_to_csv(rows)
    record = {
        "command": command,
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "version": version_string(),
        "wall_time": time.perf_counter() - t0,
        "workers": workers,
        "passed": bool(passed),
        "summary": _jsonable(summary),
        "config": cfg,
        "payload_file": f"{command}.csv",
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{command}.csv").write_text(payload)
        (out / f"{command}.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    record["payload"] = payload
    return record


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nakernel", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="TOML config, or a JSON record to replay")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--workers", type=int,
                    help="worker processes (default: $NAKERNEL_WORKERS or 1)")
    ap.add_argument("--out", default="results", help="output directory (default: results)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, {"seed": args.seed})
        workers = resolve_workers(args.workers)
        record = run_command(args.command, cfg, workers, args.out)
    except (NAKernelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    status = "PASS" if record["passed"] else "FAIL"
    print(f"{args.command}: {status}  {json.dumps(record['summary'])}")
    print(f"wrote {Path(args.out) / record['payload_file']} and "
          f"{Path(args.out) / (args.command + '.json')}")
    return 0 if record["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
