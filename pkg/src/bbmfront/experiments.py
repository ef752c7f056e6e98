"""Ensemble orchestration and front-correction measurement.

Runs replicate ensembles over a horizon grid, estimates the median and mean
of the maximum, forms the correction g(T) = v T - Med(M_T), fits the two
candidate correction laws (c T^alpha and a + b log T) with pairs-bootstrap
confidence intervals, and produces the second-moment (Paley-Zygmund) and
barrier-crossing reports.

All randomness descends from the plan seed; aggregation order is fixed by
replicate index, so outputs are identical at any worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .bbm import SimConfig, outcomes_to_array, simulate_ensemble
from .profiles import SigmaProfile
from .rng import derive_key, label
from .variational import solve_constrained, speed_closed_form


@dataclass(frozen=True)
class ExperimentPlan:
    profile: SigmaProfile
    t_grid: tuple
    replicates_per_t: tuple        # one count per grid point
    sim: SimConfig                 # template; T and seed are set per point
    estimator: str = "median"      # median | mean
    bootstrap_n: int = 400
    seed: int = 0
    prune_from: float = math.inf   # switch to pruned mode for T >= this

    def __post_init__(self):
        ts = tuple(float(t) for t in self.t_grid)
        if not ts:
            raise ValueError("t_grid must be nonempty")
        if any(t <= 0 for t in ts):
            raise ValueError("t_grid entries must be positive")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("t_grid must be increasing")
        reps = self.replicates_per_t
        if isinstance(reps, int):
            reps = tuple([reps] * len(ts))
        else:
            reps = tuple(int(r) for r in reps)
        if len(reps) != len(ts):
            raise ValueError("replicates_per_t must match t_grid length")
        if any(r < 10 for r in reps):
            raise ValueError("need at least 10 replicates per grid point")
        if self.estimator not in ("median", "mean"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        object.__setattr__(self, "t_grid", ts)
        object.__setattr__(self, "replicates_per_t", reps)


@dataclass(frozen=True)
class SummaryRow:
    T: float
    n_effective: int
    n_empty: int            # pruned replicates with no survivor (enter med as -inf)
    med: float
    med_lo: float
    med_hi: float
    mean: float
    mean_stderr: float
    g: float
    p_upper_crossed: float
    p_good_nonempty: float
    mean_good: float
    mode: str
    valid: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class FitResult:
    model: str                    # power | log
    params: dict                  # power: alpha, c; log: a, b
    ci: dict                      # param -> (lo, hi), 95% pairs bootstrap
    r_squared: float
    residuals: tuple
    n_used: int
    n_dropped: int

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "params": self.params,
            "ci": {k: list(v) for k, v in self.ci.items()},
            "r_squared": self.r_squared,
            "residuals": list(self.residuals),
            "n_used": self.n_used,
            "n_dropped": self.n_dropped,
        }


class EstimationError(ValueError):
    pass


def estimate_median(samples, bootstrap_n: int = 400, seed: int = 0):
    """Sample median with a 95% percentile-bootstrap interval.

    NaN samples are dropped; infinite values are legal (a pruned replicate
    with no survivor contributes -inf as a vacuous lower bound).
    """
    x = np.asarray(samples, dtype=float)
    x = x[~np.isnan(x)]
    if x.size < 10:
        raise EstimationError(f"need >= 10 samples, got {x.size}")
    med = float(np.median(x))
    if bootstrap_n > 0:
        rng = np.random.default_rng(derive_key(seed, label("median-bootstrap")))
        idx = rng.integers(0, x.size, size=(bootstrap_n, x.size))
        meds = np.median(x[idx], axis=1)
        lo, hi = np.percentile(meds, [2.5, 97.5])
    else:
        lo = hi = med
    return med, float(lo), float(hi)


def front_speed(profile: SigmaProfile) -> float:
    """v from the closed form for decreasing profiles, else from the solver."""
    if profile.monotone_decreasing:
        return speed_closed_form(profile)
    return solve_constrained(profile, 512).speed


def run_point(plan: ExperimentPlan, index: int, workers: int | None = None,
              backend: str | None = None):
    """Simulate one grid point; returns (SummaryRow, outcome record array)."""
    T = plan.t_grid[index]
    reps = plan.replicates_per_t[index]
    mode = "pruned" if T >= plan.prune_from else "full"
    cfg = replace(plan.sim, profile=plan.profile, T=T, mode=mode,
                  seed=derive_key(plan.seed, label("experiment-point"), index))
    outcomes = simulate_ensemble(cfg, reps, workers=workers, backend=backend)
    rec = outcomes_to_array(outcomes)
    return summarize_point(plan, T, rec, mode), rec


def summarize_point(plan: ExperimentPlan, T: float, rec: np.ndarray,
                    mode: str) -> SummaryRow:
    ok = rec["truncated"] == 0
    n_eff = int(ok.sum())
    sub = rec[ok]
    valid = n_eff >= 10
    raw = sub["m_max"]
    n_empty = int(np.isnan(raw).sum())
    # a replicate whose whole population was pruned bounds its maximum below
    # by nothing: feed -inf to the (robust) median, drop from the mean
    med_input = np.where(np.isnan(raw), -np.inf, raw)
    finite = raw[np.isfinite(raw)]
    if valid and finite.size >= 10 and n_empty < n_eff / 2:
        med, lo, hi = estimate_median(med_input, plan.bootstrap_n,
                                      seed=derive_key(plan.seed, label("row"), int(T * 1e6)))
        mean = float(finite.mean())
        mean_se = float(finite.std(ddof=1) / math.sqrt(finite.size))
    else:
        med = lo = hi = mean = mean_se = math.nan
        valid = False
    v = front_speed(plan.profile)
    center = med if plan.estimator == "median" else mean
    g = v * T - center if valid else math.nan
    return SummaryRow(
        T=T,
        n_effective=n_eff,
        n_empty=n_empty,
        med=med, med_lo=lo, med_hi=hi,
        mean=mean, mean_stderr=mean_se,
        g=g,
        p_upper_crossed=float(sub["upper_crossed"].mean()) if n_eff else math.nan,
        p_good_nonempty=float((sub["good_count"] > 0).mean()) if n_eff else math.nan,
        mean_good=float(sub["good_count"].mean()) if n_eff else math.nan,
        mode=mode,
        valid=valid,
    )


def run_plan(plan: ExperimentPlan, workers: int | None = None,
             backend: str | None = None):
    """All grid points; returns (rows, {T: record array})."""
    rows = []
    records = {}
    for i in range(len(plan.t_grid)):
        row, rec = run_point(plan, i, workers=workers, backend=backend)
        rows.append(row)
        records[plan.t_grid[i]] = rec
    return rows, records


def correction_curve(rows, profile: SigmaProfile):
    """(T, g) series from summary rows, g = v T - Med(M_T)."""
    v = front_speed(profile)
    ts = np.array([r.T for r in rows if r.valid])
    g = np.array([v * r.T - r.med for r in rows if r.valid])
    return ts, g


def _ols(x: np.ndarray, y: np.ndarray):
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), max(min(r2, 1.0), 0.0), y - fitted


def _pairs_bootstrap(x, y, stat, n_boot, seed):
    rng = np.random.default_rng(derive_key(seed, label("fit-bootstrap")))
    n = x.size
    out = np.empty((n_boot, 2))
    for b in range(n_boot):
        idx = rng.integers(0, n, n)
        while np.unique(x[idx]).size < 2:
            idx = rng.integers(0, n, n)
        out[b] = stat(x[idx], y[idx])
    lo = np.percentile(out, 2.5, axis=0)
    hi = np.percentile(out, 97.5, axis=0)
    return (float(lo[0]), float(hi[0])), (float(lo[1]), float(hi[1]))


def fit_power(ts, gs, bootstrap_n: int = 200, seed: int = 0) -> FitResult:
    """Least squares of log g on log T: g = c T^alpha; drops g <= 0 points."""
    ts = np.asarray(ts, dtype=float)
    gs = np.asarray(gs, dtype=float)
    keep = gs > 0
    n_dropped = int((~keep).sum())
    ts, gs = ts[keep], gs[keep]
    if ts.size < 4:
        raise EstimationError("need >= 4 positive-g points for a power fit")
    x, y = np.log(ts), np.log(gs)
    slope, intercept, r2, resid = _ols(x, y)

    def stat(xx, yy):
        s, i = np.polyfit(xx, yy, 1)
        return s, i

    ci_a, ci_logc = _pairs_bootstrap(x, y, stat, max(bootstrap_n, 200), seed)
    return FitResult(
        model="power",
        params={"alpha": slope, "c": math.exp(intercept)},
        ci={"alpha": ci_a, "c": (math.exp(ci_logc[0]), math.exp(ci_logc[1]))},
        r_squared=r2,
        residuals=tuple(resid),
        n_used=int(ts.size),
        n_dropped=n_dropped,
    )


def fit_log(ts, gs, bootstrap_n: int = 200, seed: int = 0) -> FitResult:
    """Least squares of g on log T: g = a + b log T."""
    ts = np.asarray(ts, dtype=float)
    gs = np.asarray(gs, dtype=float)
    keep = np.isfinite(gs)
    n_dropped = int((~keep).sum())
    ts, gs = ts[keep], gs[keep]
    if ts.size < 4:
        raise EstimationError("need >= 4 points for a log fit")
    x = np.log(ts)
    slope, intercept, r2, resid = _ols(x, gs)

    def stat(xx, yy):
        s, i = np.polyfit(xx, yy, 1)
        return s, i

    ci_b, ci_a = _pairs_bootstrap(x, gs, stat, max(bootstrap_n, 200), seed)
    return FitResult(
        model="log",
        params={"a": intercept, "b": slope},
        ci={"a": ci_a, "b": ci_b},
        r_squared=r2,
        residuals=tuple(resid),
        n_used=int(ts.size),
        n_dropped=n_dropped,
    )


@dataclass(frozen=True)
class PZRow:
    T: float
    n: int
    p_nonempty: float
    p_nonempty_stderr: float
    mean_good: float
    mean_good_stderr: float
    mean_good_sq: float
    pz_ratio: float
    pz_ratio_stderr: float
    inequality_ok: bool
    oracle_first_moment: float     # e^T * P0(corridor), nan when not supplied


def paley_zygmund_report(records: dict, corridor_logprobs: dict | None = None,
                         seed: int = 0) -> list[PZRow]:
    """Per-T second-moment diagnostics for the good-particle count.

    Checks the second-moment bound P(count >= 1) >= (E count)^2 / E count^2
    within propagated (bootstrap) error; attaches e^T * P0(corridor) when the
    caller supplies matched strip log-probabilities.
    """
    rows = []
    for T in sorted(records):
        rec = records[T]
        good = rec["good_count"][rec["truncated"] == 0].astype(float)
        n = good.size
        p = float((good > 0).mean()) if n else math.nan
        p_se = math.sqrt(max(p * (1 - p), 1e-300) / n) if n else math.nan
        m1 = float(good.mean()) if n else math.nan
        m1_se = float(good.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
        m2 = float((good ** 2).mean()) if n else math.nan
        ratio = (m1 * m1 / m2) if m2 > 0 else 0.0
        if n > 1 and m2 > 0:
            rng = np.random.default_rng(derive_key(seed, label("pz-bootstrap"), int(T * 1e6)))
            idx = rng.integers(0, n, size=(400, n))
            g_b = good[idx]
            m1_b = g_b.mean(axis=1)
            m2_b = (g_b ** 2).mean(axis=1)
            r_b = np.where(m2_b > 0, m1_b * m1_b / np.maximum(m2_b, 1e-300), 0.0)
            ratio_se = float(r_b.std(ddof=1))
        else:
            ratio_se = 0.0
        ok = p >= ratio - 3.0 * math.hypot(ratio_se, p_se)
        oracle = math.nan
        if corridor_logprobs and T in corridor_logprobs:
            lp = corridor_logprobs[T] + T
            oracle = math.exp(lp) if lp < 700 else math.inf
        rows.append(PZRow(T, n, p, p_se, m1, m1_se, m2, ratio, ratio_se, ok, oracle))
    return rows


@dataclass(frozen=True)
class BarrierRow:
    T: float
    C: float
    p_crossed: float
    p_stderr: float
    bound: float
    vacuous: bool
    exceeds_bound: bool


def barrier_crossing_report(records: dict, profile: SigmaProfile,
                            c_grid) -> list[BarrierRow]:
    """Empirical barrier-crossing frequencies against the first-moment bound
    T exp(1 - sqrt(2) C log T / sigma(0)), for every C in c_grid.

    Uses the recorded per-replicate max excess above the reference path, so
    one ensemble serves every C.
    """
    sigma0 = float(profile.eval(0.0))
    out = []
    for T in sorted(records):
        rec = records[T]
        excess = rec["max_excess"][rec["truncated"] == 0]
        n = excess.size
        logT = max(math.log(T), 0.0)
        for C in c_grid:
            p = float((excess > C * logT).mean()) if n else math.nan
            se = math.sqrt(max(p * (1 - p), 1e-300) / n) if n else math.nan
            log_bound = math.log(T) + 1.0 - math.sqrt(2.0) * C * logT / sigma0
            bound = math.exp(log_bound) if log_bound < 700 else math.inf
            vacuous = bound >= 1.0
            exceeds = (not vacuous) and (p - 3.0 * se > bound)
            out.append(BarrierRow(T, float(C), p, se, bound, vacuous, exceeds))
    return out
