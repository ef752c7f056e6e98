"""Command-line interface.

Subcommands: validate-profile, variational, corridor, simulate, experiment,
fit.  Configuration is JSON (unknown keys rejected), outputs are CSV with
'#' metadata headers plus a JSON manifest per output directory.  Exit codes:
0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import corridor as corridor_mod
from . import experiments as exp_mod
from . import profiles as profiles_mod
from .bbm import SimConfig, outcomes_to_array, simulate_ensemble
from .output import ManifestWriter, config_digest, read_csv, write_csv
from .variational import constraint_curve, solve_constrained, speed_closed_form


class ConfigError(ValueError):
    pass


def _load_json(path: str):
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno}, col {e.colno}: {e.msg}") from e


def _check_keys(obj: dict, allowed: set, where: str, required: set = frozenset()):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ConfigError(f"{where}: missing required key(s) {sorted(missing)}")


def _profile_from(cfg, where: str):
    try:
        return profiles_mod.from_config(cfg)
    except profiles_mod.ProfileError as e:
        raise ConfigError(f"{where}: {e}") from e


_SIM_KEYS = {"profile", "T", "mode", "prune_beta", "barrier_c", "substep_h",
             "seed", "max_particles", "branch_rate", "min_position_coeff",
             "corridor_width", "corridor_offset", "corridor_bridge"}


def _sim_config_from(cfg: dict, where: str, T_override=None, seed_override=None) -> SimConfig:
    _check_keys(cfg, _SIM_KEYS, where)
    cfg = dict(cfg)
    if "profile" not in cfg:
        raise ConfigError(f"{where}: a profile is required")
    profile = _profile_from(cfg.pop("profile"), where + ".profile")
    T = float(cfg.pop("T")) if "T" in cfg else None
    if T_override is not None:
        T = float(T_override)
    if T is None:
        raise ConfigError(f"{where}: horizon T is required")
    seed = int(cfg.pop("seed", 0))
    if seed_override is not None:
        seed = int(seed_override)
    try:
        return SimConfig(profile=profile, T=T, seed=seed, **cfg)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--out", help="output directory (manifest + CSV files)")
    p.add_argument("--seed", type=int, default=None, help="master seed override")
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads (default: machine parallelism or BBMFRONT_WORKERS)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bbmfront",
                                 description="branching diffusion front toolkit")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("validate-profile", help="check a profile config")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", type=int, default=1001)
    _add_common(p)

    p = sub.add_parser("variational", help="front speed and optimal path")
    p.add_argument("--config", required=True, help="profile JSON")
    p.add_argument("--n-grid", type=int, default=512)
    _add_common(p)

    p = sub.add_parser("corridor", help="strip/corridor survival estimates")
    p.add_argument("--config", required=True)
    p.add_argument("--method", required=True,
                   choices=("spectral", "mc", "tilted", "soft", "good-logprob"))
    _add_common(p)

    p = sub.add_parser("simulate", help="branching replicates")
    p.add_argument("--config", required=True, help="sim JSON (profile, T, ...)")
    p.add_argument("--T", type=float, default=None, help="horizon override")
    p.add_argument("--replicates", type=int, default=100)
    _add_common(p)

    p = sub.add_parser("experiment", help="ensemble over a horizon grid")
    p.add_argument("--plan", required=True)
    _add_common(p)

    p = sub.add_parser("fit", help="re-fit correction laws from a summary.csv")
    p.add_argument("--summary", required=True)
    p.add_argument("--model", choices=("power", "log", "both"), default="both")
    _add_common(p)
    return ap


def _emit(args, name: str, schema: str, header, rows, payload: dict,
          seed: int, digest: str, manifest: ManifestWriter | None):
    """Write one tabular result to --out (csv or json) or stdout."""
    if manifest is not None:
        if args.format == "json":
            path = manifest.path(name + ".json")
            path.write_text(json.dumps(payload, indent=2, default=_js) + "\n")
        else:
            write_csv(manifest.path(name + ".csv"), schema, header, rows,
                      seed=seed, digest=digest)
    else:
        if args.format == "json":
            print(json.dumps(payload, indent=2, default=_js))
        else:
            print(",".join(header))
            for r in rows:
                print(",".join(repr(v) if isinstance(v, float) else str(v) for v in r))


def _js(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def cmd_validate_profile(args) -> int:
    cfg = _load_json(args.config)
    profile = _profile_from(cfg, "profile")
    rep = profile.validate(args.grid)
    digest = config_digest(cfg)
    manifest = ManifestWriter(args.out, "validate-profile", digest, args.seed or 0) if args.out else None
    d = rep.as_dict()
    _emit(args, "profile_report", "profile-report", list(d), [list(d.values())],
          d, args.seed or 0, digest, manifest)
    if manifest:
        manifest.finalize()
    return 0


def cmd_variational(args) -> int:
    cfg = _load_json(args.config)
    profile = _profile_from(cfg, "profile")
    sol = solve_constrained(profile, args.n_grid)
    digest = config_digest(cfg)
    J = constraint_curve(sol.path, profile)
    print(f"speed {sol.speed:.6f}  (closed form {speed_closed_form(profile):.6f}, "
          f"gap {sol.solver_gap:.2e})")
    rows = [
        (float(t), float(f), float(j), int(b))
        for t, f, j, b in zip(sol.path.grid, sol.path.values, J,
                              np.concatenate([[True], sol.binding]))
    ]
    manifest = ManifestWriter(args.out, "variational", digest, args.seed or 0) if args.out else None
    payload = {"speed": sol.speed, "solver_gap": sol.solver_gap,
               "dual_bound": sol.dual_bound, "unique": sol.unique,
               "path": rows}
    _emit(args, "path", "variational-path", ["t", "f", "J_t", "binding"], rows,
          payload, args.seed or 0, digest, manifest)
    if manifest:
        manifest.finalize()
    return 0


_STRIP_KEYS = {"lower", "upper", "start", "horizon", "clock_total"}


def _strip_from(cfg, where):
    _check_keys(cfg, _STRIP_KEYS, where, required=_STRIP_KEYS)
    try:
        return corridor_mod.StripSpec(**{k: float(cfg[k]) for k in _STRIP_KEYS})
    except corridor_mod.CorridorError as e:
        raise ConfigError(f"{where}: {e}") from e


def cmd_corridor(args) -> int:
    cfg = _load_json(args.config)
    digest = config_digest(cfg)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0)) if isinstance(cfg, dict) else 0
    method = args.method
    if method == "spectral":
        _check_keys(cfg, {"strip"}, "config", {"strip"})
        spec = _strip_from(cfg["strip"], "config.strip")
        res = corridor_mod.strip_survival_spectral(spec)
        row = (spec.lower, spec.upper, spec.start, spec.horizon, spec.clock_total,
               res.probability, 0.0, res.log_probability, res.truncation_bound, "spectral")
        header = ["lower", "upper", "start", "horizon", "clock_total",
                  "estimate", "stderr", "log_probability", "truncation_bound", "method"]
        payload = {"estimate": res.probability, "log_probability": res.log_probability,
                   "truncation_bound": res.truncation_bound, "method": "spectral"}
    elif method == "mc":
        _check_keys(cfg, {"strip", "n_paths", "dt", "seed"}, "config", {"strip", "n_paths"})
        spec = _strip_from(cfg["strip"], "config.strip")
        est = corridor_mod.strip_survival_mc(spec, int(cfg["n_paths"]),
                                             cfg.get("dt"), seed=seed,
                                             workers=args.workers)
        row = (spec.lower, spec.upper, spec.start, spec.horizon, spec.clock_total,
               est.estimate, est.stderr, math.log(est.estimate) if est.estimate > 0 else math.nan,
               0.0, "mc")
        header = ["lower", "upper", "start", "horizon", "clock_total",
                  "estimate", "stderr", "log_probability", "truncation_bound", "method"]
        payload = {"estimate": est.estimate, "stderr": est.stderr,
                   "n_paths": est.n_paths, "dt": est.dt, "method": "mc"}
    elif method == "good-logprob":
        _check_keys(cfg, {"profile", "T", "start_depth"}, "config", {"profile", "T"})
        profile = _profile_from(cfg["profile"], "config.profile")
        logp, spec, res = corridor_mod.good_corridor_logprob(
            profile, float(cfg["T"]), cfg.get("start_depth"))
        row = (spec.lower, spec.upper, spec.start, spec.horizon, spec.clock_total,
               res.probability, 0.0, logp, res.truncation_bound, "good-logprob")
        header = ["lower", "upper", "start", "horizon", "clock_total",
                  "estimate", "stderr", "log_probability", "truncation_bound", "method"]
        payload = {"log_probability": logp, "width": spec.width,
                   "start_depth": -spec.start, "clock_total": spec.clock_total,
                   "method": "good-logprob"}
    elif method == "tilted":
        _check_keys(cfg, {"profile", "T", "band", "n_paths", "dt", "bridge", "seed"},
                    "config", {"profile", "T", "band", "n_paths"})
        profile = _profile_from(cfg["profile"], "config.profile")
        band = cfg["band"]
        if not (isinstance(band, list) and len(band) == 2):
            raise ConfigError("config.band: expected [lower_width, upper_offset]")
        est = corridor_mod.tilted_corridor_estimate(
            profile, float(cfg["T"]), (float(band[0]), float(band[1])),
            int(cfg["n_paths"]), float(cfg.get("dt", 0.02)), seed=seed,
            bridge=bool(cfg.get("bridge", True)), workers=args.workers)
        row = (-float(band[0]), float(band[1]), 0.0, float(cfg["T"]), math.nan,
               est.estimate, est.stderr, math.nan, 0.0, "tilted")
        header = ["lower", "upper", "start", "horizon", "clock_total",
                  "estimate", "stderr", "log_probability", "truncation_bound", "method"]
        payload = {"estimate": est.estimate, "stderr": est.stderr,
                   "n_paths": est.n_paths, "dt": est.dt, "method": "tilted"}
    else:  # soft
        _check_keys(cfg, {"horizon", "c3", "endpoint_halfwidth", "start",
                          "n_paths", "dt", "occupancy_halfwidth", "seed"},
                    "config", {"horizon", "c3", "endpoint_halfwidth", "n_paths"})
        try:
            spec = corridor_mod.SoftCorridorSpec(
                horizon=float(cfg["horizon"]), c3=float(cfg["c3"]),
                endpoint_halfwidth=float(cfg["endpoint_halfwidth"]),
                start=float(cfg.get("start", 0.0)))
        except corridor_mod.CorridorError as e:
            raise ConfigError(f"config: {e}") from e
        est = corridor_mod.soft_corridor_functional(
            spec, int(cfg["n_paths"]), float(cfg.get("dt", 0.01)), seed=seed,
            occupancy_halfwidth=cfg.get("occupancy_halfwidth"),
            workers=args.workers)
        row = (-math.inf, 0.0, spec.start, spec.horizon, math.nan,
               est.estimate, est.stderr, math.nan, 0.0, "soft")
        header = ["lower", "upper", "start", "horizon", "clock_total",
                  "estimate", "stderr", "log_probability", "truncation_bound", "method"]
        payload = {"estimate": est.estimate, "stderr": est.stderr,
                   "n_paths": est.n_paths, "dt": est.dt,
                   "occupation_quantiles": est.occupation_quantiles().tolist(),
                   "method": "soft"}
    manifest = ManifestWriter(args.out, "corridor", digest, seed) if args.out else None
    _emit(args, "corridor", "corridor-estimate", header, [row], payload, seed,
          digest, manifest)
    if manifest:
        manifest.finalize()
    return 0


_SIM_CSV_COLUMNS = ["replicate", "m_max", "n_final", "upper_crossed", "theta",
                    "good_count", "min_position", "pruned_count", "truncated"]


def cmd_simulate(args) -> int:
    cfg = _load_json(args.config)
    if not isinstance(cfg, dict):
        raise ConfigError("config: expected an object")
    config = _sim_config_from(cfg, "config", T_override=args.T,
                              seed_override=args.seed)
    outcomes = simulate_ensemble(config, args.replicates, workers=args.workers)
    rows = []
    for i, o in enumerate(outcomes):
        d = o.as_row()
        rows.append((i, d["m_max"], d["n_final"], d["upper_crossed"], d["theta"],
                     d["good_count"], d["min_position"], d["pruned_count"],
                     d["truncated"]))
    digest = config_digest(cfg)
    manifest = ManifestWriter(args.out, "simulate", digest, config.seed) if args.out else None
    payload = {"replicates": [dict(zip(_SIM_CSV_COLUMNS, r)) for r in rows]}
    _emit(args, "replicates", "sim-replicates", _SIM_CSV_COLUMNS, rows, payload,
          config.seed, digest, manifest)
    if manifest:
        manifest.finalize()
    return 0


_PLAN_KEYS = {"profile", "t_grid", "replicates_per_t", "sim", "estimator",
              "bootstrap_n", "seed", "prune_from", "reports"}
_REPORT_KEYS = {"barrier_c_grid", "paley_zygmund"}

SUMMARY_COLUMNS = ["T", "n_effective", "n_empty", "med", "med_lo", "med_hi",
                   "mean", "mean_stderr", "g", "p_upper_crossed",
                   "p_good_nonempty", "mean_good", "mode", "valid"]


def _plan_from(cfg: dict, seed_override) -> tuple[exp_mod.ExperimentPlan, dict]:
    _check_keys(cfg, _PLAN_KEYS, "plan", {"profile", "t_grid", "replicates_per_t"})
    profile = _profile_from(cfg["profile"], "plan.profile")
    reports = cfg.get("reports", {})
    _check_keys(reports, _REPORT_KEYS, "plan.reports")
    sim_cfg = dict(cfg.get("sim", {}))
    _check_keys(sim_cfg, _SIM_KEYS - {"profile", "T", "seed"}, "plan.sim")
    seed = seed_override if seed_override is not None else int(cfg.get("seed", 0))
    try:
        sim = SimConfig(profile=profile, T=1.0, **sim_cfg)
        plan = exp_mod.ExperimentPlan(
            profile=profile,
            t_grid=tuple(cfg["t_grid"]),
            replicates_per_t=cfg["replicates_per_t"],
            sim=sim,
            estimator=cfg.get("estimator", "median"),
            bootstrap_n=int(cfg.get("bootstrap_n", 400)),
            seed=seed,
            prune_from=float(cfg.get("prune_from", math.inf)),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"plan: {e}") from e
    return plan, reports


def _summary_rows(rows):
    return [(r.T, r.n_effective, r.n_empty, r.med, r.med_lo, r.med_hi,
             r.mean, r.mean_stderr, r.g, r.p_upper_crossed,
             r.p_good_nonempty, r.mean_good, r.mode, int(r.valid)) for r in rows]


def _fit_series(rows, bootstrap_n, seed, model="both"):
    ts = [r.T for r in rows if r.valid]
    gs = [r.g for r in rows if r.valid]
    fits = {}
    errors = {}
    for name, fn in (("power", exp_mod.fit_power), ("log", exp_mod.fit_log)):
        if model not in (name, "both"):
            continue
        try:
            fits[name] = fn(np.array(ts), np.array(gs), bootstrap_n, seed).as_dict()
        except exp_mod.EstimationError as e:
            errors[name] = str(e)
    return {"fits": fits, "errors": errors, "n_points": len(ts)}


def cmd_experiment(args) -> int:
    if not args.out:
        raise ConfigError("experiment requires --out")
    cfg = _load_json(args.plan)
    plan, reports = _plan_from(cfg, args.seed)
    digest = config_digest(cfg)
    manifest = ManifestWriter(args.out, "experiment", digest, plan.seed)
    rows, records = exp_mod.run_plan(plan, workers=args.workers)
    write_csv(manifest.path("summary.csv"), "experiment-summary",
              SUMMARY_COLUMNS, _summary_rows(rows), seed=plan.seed, digest=digest)
    fits = _fit_series(rows, 400, plan.seed)
    manifest.path("fits.json").write_text(json.dumps(fits, indent=2) + "\n")
    if reports.get("paley_zygmund"):
        pz = exp_mod.paley_zygmund_report(records, seed=plan.seed)
        write_csv(manifest.path("reports/pz.csv"), "paley-zygmund",
                  ["T", "n", "p_nonempty", "p_nonempty_stderr", "mean_good",
                   "mean_good_stderr", "mean_good_sq", "pz_ratio",
                   "pz_ratio_stderr", "inequality_ok", "oracle_first_moment"],
                  [(r.T, r.n, r.p_nonempty, r.p_nonempty_stderr, r.mean_good,
                    r.mean_good_stderr, r.mean_good_sq, r.pz_ratio,
                    r.pz_ratio_stderr, int(r.inequality_ok), r.oracle_first_moment)
                   for r in pz],
                  seed=plan.seed, digest=digest)
    c_grid = reports.get("barrier_c_grid")
    if c_grid:
        br = exp_mod.barrier_crossing_report(records, plan.profile, c_grid)
        write_csv(manifest.path("reports/barrier.csv"), "barrier-crossing",
                  ["T", "C", "p_crossed", "p_stderr", "bound", "vacuous",
                   "exceeds_bound"],
                  [(r.T, r.C, r.p_crossed, r.p_stderr, r.bound, int(r.vacuous),
                    int(r.exceeds_bound)) for r in br],
                  seed=plan.seed, digest=digest)
    manifest.finalize()
    medians = ", ".join(f"T={r.T:g}: med={r.med:.3f} g={r.g:.3f}" for r in rows)
    print(f"experiment done ({medians})")
    return 0


def cmd_fit(args) -> int:
    meta, header, rows = read_csv(args.summary)
    try:
        i_t = header.index("T")
        i_g = header.index("g")
        i_valid = header.index("valid")
    except ValueError as e:
        raise ConfigError(f"{args.summary}: not a summary.csv ({e})") from e
    seed = args.seed if args.seed is not None else int(meta.get("seed", 0))
    ts, gs = [], []
    for r in rows:
        if int(r[i_valid]):
            ts.append(float(r[i_t]))
            gs.append(float(r[i_g]))

    class _Row:
        def __init__(self, T, g):
            self.T, self.g, self.valid = T, g, True

    fits = _fit_series([_Row(t, g) for t, g in zip(ts, gs)], 400, seed, args.model)
    out = json.dumps(fits, indent=2)
    if args.out:
        manifest = ManifestWriter(args.out, "fit", config_digest({"summary": meta}), seed)
        manifest.path("fits.json").write_text(out + "\n")
        manifest.finalize()
    else:
        print(out)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "validate-profile":
            return cmd_validate_profile(args)
        if args.cmd == "variational":
            return cmd_variational(args)
        if args.cmd == "corridor":
            return cmd_corridor(args)
        if args.cmd == "simulate":
            return cmd_simulate(args)
        if args.cmd == "experiment":
            return cmd_experiment(args)
        if args.cmd == "fit":
            return cmd_fit(args)
        raise ConfigError(f"unknown subcommand {args.cmd!r}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
