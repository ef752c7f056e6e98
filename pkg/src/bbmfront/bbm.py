"""Event-driven branching Brownian motion with a macroscopic variance profile.

Each particle carries an exponential(1) lifetime; between events its
displacement over [t1, t2] is a centered Gaussian with variance
tau(t2) - tau(t1), so positions at event times and at the horizon are exact
samples (there is no Euler error in M_T).  Barrier, corridor and pruning
checks happen at trajectory checkpoints: the global grid of spacing
substep_h plus every birth/death time.  Crossings strictly between
checkpoints are missed by design; the optional corridor_bridge mode closes
that gap for the good-particle census by drawing per-segment Bernoulli
bridge survivals, which reproduces the continuous-time corridor count
exactly in distribution.

Replicates are strictly sequential; parallelism happens across replicates,
each deriving its stream key from (seed, replicate index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .parallel import map_blocks
from .profiles import ProfileTable, SigmaProfile
from .rng import derive_key, label, uniform as rng_uniform
from .variational import optimal_path

_REPLICATE_LABEL = label("bbm-replicate")


@dataclass(frozen=True)
class SimConfig:
    profile: SigmaProfile
    T: float
    mode: str = "full"                 # full | pruned
    prune_beta: float = 2.0            # pruning depth in units of T^(1/3)
    barrier_c: float = 0.0             # upper-barrier log coefficient
    substep_h: float = 0.05            # max checkpoint spacing
    seed: int = 0
    max_particles: int = 100_000_000
    branch_rate: float = 1.0           # 0 disables branching (test hook)
    min_position_coeff: float = 1.0    # checkpoint time A * T^(1/3)
    corridor_width: float | None = None    # default T^(1/3)
    corridor_offset: float = 0.0       # lift both corridor walls by this much
    corridor_bridge: bool = False

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        if not 0 < self.substep_h <= 1.0:
            raise ValueError("substep_h must lie in (0, 1]")
        if self.max_particles < 1:
            raise ValueError("max_particles must be >= 1")
        if self.mode not in ("full", "pruned"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.branch_rate < 0:
            raise ValueError("branch_rate must be nonnegative")


@dataclass(frozen=True)
class SimOutcome:
    m_max: float           # max position at the horizon (nan if no survivor)
    n_final: int           # particles alive at T (survivors in pruned mode)
    upper_crossed: bool    # some particle exceeded the barrier at a checkpoint
    theta: float           # first barrier-crossing checkpoint time (nan if none)
    good_count: int        # particles at T whose whole path stayed in corridor
    min_position: float    # min position at the A*T^(1/3) checkpoint
    max_excess: float      # max over checkpoints of position - T fbar(t/T)
    pruned_count: int
    truncated: bool
    births: int
    first_split: float = math.nan   # root branching time (nan if none before T)

    def as_row(self) -> dict:
        return {
            "m_max": self.m_max,
            "n_final": self.n_final,
            "upper_crossed": int(self.upper_crossed),
            "theta": self.theta,
            "good_count": self.good_count,
            "min_position": self.min_position,
            "max_excess": self.max_excess,
            "pruned_count": self.pruned_count,
            "truncated": int(self.truncated),
        }


def upper_barrier(profile: SigmaProfile, T: float, C: float, t) -> float:
    """Barrier T*fbar(t/T) + C log T (log term floored at 0 for T <= 1)."""
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0) or np.any(tt > T):
        raise ValueError("t must lie in [0, T]")
    out = T * optimal_path(profile, tt / T) + C * max(math.log(T), 0.0)
    return float(out) if np.isscalar(t) else out


def good_corridor_test(profile: SigmaProfile, T: float, t: float, x: float,
                       width: float | None = None, offset: float = 0.0) -> bool:
    """Is x inside [T fbar(t/T) - width + offset, T fbar(t/T) + offset]?"""
    if width is None:
        width = T ** (1.0 / 3.0)
    center = T * optimal_path(profile, t / T)
    return center - width + offset <= x <= center + offset


def prune_rule(profile: SigmaProfile, T: float, beta: float, t: float, x: float) -> bool:
    """True = keep. Kill below T fbar(t/T) - beta T^(1/3) - 10."""
    cut = T * optimal_path(profile, t / T) - beta * T ** (1.0 / 3.0) - 10.0
    return x >= cut


def _build_grid(config: SimConfig):
    T = config.T
    h = config.substep_h
    n = int(math.ceil(T / h))
    grid = np.unique(np.concatenate([np.arange(n) * h, [T]]))
    t_min = min(config.min_position_coeff * T ** (1.0 / 3.0), T)
    # snap the min-position checkpoint onto the grid (within h/2)
    idx_min = int(np.argmin(np.abs(grid - t_min)))
    return grid, idx_min


@dataclass
class _Prepared:
    grid: np.ndarray
    tau_grid: np.ndarray
    path_grid: np.ndarray
    table: ProfileTable
    idx_min: int
    barrier_add: float
    corr_lo: float
    corr_up: float
    prune_gap: float


def _prepare(config: SimConfig) -> _Prepared:
    profile = config.profile
    T = config.T
    grid, idx_min = _build_grid(config)
    tau_grid = np.asarray(profile.clock(grid, T), dtype=float)
    path_grid = T * np.asarray(optimal_path(profile, grid / T), dtype=float)
    table = ProfileTable.build(profile)
    width = config.corridor_width if config.corridor_width is not None else T ** (1.0 / 3.0)
    corr_up = config.corridor_offset
    corr_lo = config.corridor_offset - width
    barrier_add = config.barrier_c * max(math.log(T), 0.0) if T > 0 else 0.0
    prune_gap = config.prune_beta * T ** (1.0 / 3.0) + 10.0
    return _Prepared(grid, tau_grid, path_grid, table, idx_min, barrier_add,
                     corr_lo, corr_up, prune_gap)


def replicate_key(seed: int, replicate: int) -> int:
    return derive_key(seed, _REPLICATE_LABEL, replicate)


def simulate(config: SimConfig, replicate: int = 0,
             prepared: _Prepared | None = None,
             backend: str | None = None) -> SimOutcome:
    """Run one replicate; deterministic in (config, replicate)."""
    if config.T == 0.0:
        width = config.corridor_width if config.corridor_width is not None else 0.0
        good = 1 if config.corridor_offset - width <= 0.0 <= config.corridor_offset else 0
        return SimOutcome(0.0, 1, False, math.nan, good, 0.0, 0.0, 0, False, 1)
    prep = prepared if prepared is not None else _prepare(config)
    kern = kernels.get_backend(backend)
    key = np.uint64(replicate_key(config.seed, replicate))
    (m_max, n_final, theta, good_count, min_pos, max_excess,
     pruned_count, births, truncated) = kern.bbm_replicate(
        key, config.T, config.branch_rate,
        prep.grid, prep.tau_grid, prep.path_grid,
        prep.table.F, prep.table.sig, prep.table.S2, prep.table.sig2,
        prep.table.n,
        prep.idx_min, prep.barrier_add, prep.corr_lo, prep.corr_up,
        1 if config.corridor_bridge else 0,
        1 if config.mode == "pruned" else 0,
        prep.prune_gap, config.max_particles,
    )
    # the root lifetime is draw 0 of the replicate stream, same as the kernel's
    if config.branch_rate > 0:
        first = -math.log(rng_uniform(int(key), 0)) / config.branch_rate
        first_split = first if first < config.T else math.nan
    else:
        first_split = math.nan
    return SimOutcome(
        m_max=float(m_max) if math.isfinite(m_max) else math.nan,
        n_final=int(n_final),
        upper_crossed=bool(math.isfinite(theta)),
        theta=float(theta) if math.isfinite(theta) else math.nan,
        good_count=int(good_count),
        min_position=float(min_pos) if math.isfinite(min_pos) else math.nan,
        max_excess=float(max_excess),
        pruned_count=int(pruned_count),
        truncated=bool(truncated),
        births=int(births),
        first_split=first_split,
    )


def simulate_ensemble(config: SimConfig, n_replicates: int,
                      workers: int | None = None,
                      backend: str | None = None) -> list[SimOutcome]:
    """n_replicates independent replicates; order and values are identical
    for every worker count."""
    if config.T == 0.0:
        return [simulate(config, r) for r in range(n_replicates)]
    prep = _prepare(config)
    out: list[SimOutcome | None] = [None] * n_replicates

    def run_block(a: int, b: int):
        for r in range(a, b):
            out[r] = simulate(config, r, prepared=prep, backend=backend)

    map_blocks(run_block, n_replicates, workers, min_block=1)
    return out  # type: ignore[return-value]


def outcomes_to_array(outcomes: list[SimOutcome]) -> np.ndarray:
    """Structured array over replicates (row order = replicate index)."""
    dtype = [
        ("m_max", float), ("n_final", np.int64), ("upper_crossed", np.int8),
        ("theta", float), ("good_count", np.int64), ("min_position", float),
        ("max_excess", float), ("pruned_count", np.int64), ("truncated", np.int8),
        ("births", np.int64), ("first_split", float),
    ]
    arr = np.zeros(len(outcomes), dtype=dtype)
    for i, o in enumerate(outcomes):
        arr[i] = (o.m_max, o.n_final, int(o.upper_crossed), o.theta,
                  o.good_count, o.min_position, o.max_excess, o.pruned_count,
                  int(o.truncated), o.births, o.first_split)
    return arr
