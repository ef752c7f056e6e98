"""Strip and corridor survival probabilities.

The precision instrument is the Dirichlet eigenfunction series for a
Brownian motion in a strip: with width w, start offset x0 from the lower
wall and variance time tau,

    P = sum_{k>=1} (2/(k pi)) (1 - cos k pi) sin(k pi x0 / w)
        exp(-k^2 pi^2 tau / (2 w^2)),

evaluated in log space once the leading exponent is large (the survival
scale exp(-c T^(1/3)) underflows long before the quantities of interest stop
being meaningful).  Monte Carlo estimators cross-validate the series and
extend it to path functionals the series cannot reach: the exponentially
tilted corridor estimator (which turns the moving-corridor first-moment
computation into a centered-strip expectation) and the soft corridor
functional with an endpoint window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .parallel import map_blocks
from .profiles import SigmaProfile
from .rng import keys_for_range

_LOG_FORM_THRESHOLD = 0.05  # leading exponent above which the log form is used
_SERIES_TOL = 1e-16
# barrier displacement per monitoring step of an Euler walk, in units of
# sqrt(dt): zeta(1/2)/sqrt(2 pi) (Broadie-Glasserman-Kou); the allowance
# doubles it for margin
_BGK_BETA = 0.5826


class CorridorError(ValueError):
    pass


@dataclass(frozen=True)
class StripSpec:
    """Two-sided absorbing strip for a (time-changed) Brownian motion.

    clock_total is the variance time actually elapsed; it equals horizon for
    a standard Brownian motion.
    """

    lower: float
    upper: float
    start: float
    horizon: float
    clock_total: float

    def __post_init__(self):
        if not self.upper > self.lower:
            raise CorridorError(f"degenerate strip: width {self.upper - self.lower}")
        if not (self.lower <= self.start <= self.upper):
            raise CorridorError("start must lie in [lower, upper]")
        if self.horizon < 0 or self.clock_total < 0:
            raise CorridorError("horizon and clock_total must be nonnegative")
        if (self.clock_total == 0) != (self.horizon == 0):
            raise CorridorError("clock_total vanishes exactly when horizon does")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def offset(self) -> float:
        return self.start - self.lower


@dataclass(frozen=True)
class SoftCorridorSpec:
    """Penalized one-sided corridor with an endpoint window (reflected form):
    E[exp(-(c3/T) int_0^T |B_s| ds) 1{|B_T| <= endpoint_halfwidth}]."""

    horizon: float
    c3: float
    endpoint_halfwidth: float
    start: float = 0.0

    def __post_init__(self):
        if self.horizon <= 0:
            raise CorridorError("horizon must be positive")
        if self.c3 < 0 or self.endpoint_halfwidth < 0:
            raise CorridorError("c3 and endpoint_halfwidth must be nonnegative")


@dataclass(frozen=True)
class SpectralResult:
    probability: float
    log_probability: float
    truncation_bound: float
    n_terms: int


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    stderr: float
    n_paths: int
    dt: float
    method: str

    def agrees_with(self, value: float, n_sigma: float = 3.0, extra: float = 0.0) -> bool:
        return abs(self.estimate - value) <= n_sigma * self.stderr + extra


def _series_direct(w: float, x0: float, c: float):
    """Probability form; c = pi^2 tau / (2 w^2) is the leading exponent."""
    total = 0.0
    k = 1
    n_terms = 0
    while True:
        term = (4.0 / (k * math.pi)) * math.sin(k * math.pi * x0 / w) * math.exp(-k * k * c)
        total += term
        n_terms += 1
        nxt = k + 2
        bound = (4.0 / (nxt * math.pi)) * math.exp(-nxt * nxt * c)
        if bound < _SERIES_TOL or k > 2_000_000:
            # geometric domination: successive exponents drop by >= (4k+4)c
            damp = -math.expm1(-(4.0 * nxt + 4.0) * c)
            return max(total, 0.0), bound / max(damp, 1e-300), n_terms
        k += 2


def _series_log(w: float, x0: float, c: float):
    """Log form: leading odd term plus log1p of the rapidly vanishing rest."""
    s1 = math.sin(math.pi * x0 / w)
    if s1 <= 0.0:
        return -math.inf, 0.0, 1
    log_first = math.log(4.0 / math.pi) + math.log(s1) - c
    corr = 0.0
    k = 3
    n_terms = 1
    while True:
        corr += (math.sin(k * math.pi * x0 / w) / (k * s1)) * math.exp(-(k * k - 1) * c)
        n_terms += 1
        nxt = k + 2
        bound = math.exp(-(nxt * nxt - 1) * c) / (nxt * s1)
        if bound < 1e-18:
            break
        k += 2
    logp = log_first + math.log1p(max(corr, -0.999999999))
    # absolute truncation bound on the probability itself
    abs_bound = math.exp(logp) * bound if logp > -700 else 0.0
    return logp, abs_bound, n_terms


def strip_survival_spectral(spec: StripSpec) -> SpectralResult:
    """Eigenseries survival probability with a truncation bound.

    Returns probability 0 (log -inf) for a boundary start; probability 1 for
    zero elapsed clock.
    """
    if spec.clock_total == 0.0:
        return SpectralResult(1.0, 0.0, 0.0, 0)
    w = spec.width
    x0 = spec.offset
    if x0 <= 0.0 or x0 >= w:
        return SpectralResult(0.0, -math.inf, 0.0, 0)
    c = math.pi * math.pi * spec.clock_total / (2.0 * w * w)
    if c >= _LOG_FORM_THRESHOLD:
        logp, bound, n_terms = _series_log(w, x0, c)
        prob = math.exp(logp) if logp > -745.0 else 0.0
        return SpectralResult(prob, logp, bound, n_terms)
    prob, bound, n_terms = _series_direct(w, x0, c)
    logp = math.log(prob) if prob > 0 else -math.inf
    return SpectralResult(prob, logp, bound, n_terms)


def strip_survival_logprob(spec: StripSpec) -> float:
    return strip_survival_spectral(spec).log_probability


def strip_survival_mc(spec: StripSpec, n_paths: int, dt: float | None = None,
                      seed: int = 0, workers: int | None = None,
                      backend: str | None = None) -> MCEstimate:
    """Euler walk with per-step absorption checks (no bridge correction).

    Monitoring bias inflates survival by roughly the barrier-shift allowance
    of `discretization_allowance`; validation tests budget for it explicitly.
    """
    if n_paths < 1:
        raise CorridorError("n_paths must be >= 1")
    if dt is None:
        dt = min(spec.clock_total * 1e-4, 1e-2)
    if spec.clock_total == 0.0:
        return MCEstimate(1.0, 0.0, n_paths, 0.0, "mc")
    if dt <= 0 or dt > spec.clock_total:
        raise CorridorError("dt must lie in (0, clock_total]")
    kern = kernels.get_backend(backend)
    keys = keys_for_range(seed, "strip-mc", 0, n_paths)
    alive = np.zeros(n_paths, dtype=np.int8)
    map_blocks(
        lambda a, b: kern.strip_mc(keys, spec.start, spec.lower, spec.upper,
                                   spec.clock_total, dt, alive, a, b),
        n_paths, workers,
    )
    k = int(alive.sum())
    p = k / n_paths
    stderr = math.sqrt(max(p * (1.0 - p), 1e-300) / n_paths)
    return MCEstimate(p, stderr, n_paths, dt, "mc")


def discretization_allowance(spec: StripSpec, dt: float) -> float:
    """Bias budget 2 sqrt(dt) * dP/d(wall shift) for step-dt monitoring."""
    base = strip_survival_spectral(spec).probability
    delta = max(math.sqrt(dt), 1e-6)
    widened = StripSpec(spec.lower - delta, spec.upper + delta, spec.start,
                        spec.horizon, spec.clock_total)
    g = (strip_survival_spectral(widened).probability - base) / delta
    return 2.0 * math.sqrt(dt) * max(g, 0.0)


def good_corridor_logprob(profile: SigmaProfile, T: float,
                          start_depth: float | None = None):
    """log P0(X stays in a width-T^(1/3) strip for the full variance clock).

    The motion is the time-changed Brownian motion with clock tau(T), so this
    is the corridor factor behind the exp(-c T^(1/3)) survival scale.  The
    strip start must be interior for the continuous-time probability to be
    positive; the default starts halfway down (recorded in the result).
    """
    if T <= 0:
        raise CorridorError("T must be positive")
    width = T ** (1.0 / 3.0)
    if start_depth is None:
        start_depth = width / 2.0
    if not 0.0 < start_depth < width:
        raise CorridorError("start_depth must lie strictly inside the corridor")
    clock = profile.clock(T, T)
    spec = StripSpec(-width, 0.0, -start_depth, T, clock)
    res = strip_survival_spectral(spec)
    return res.log_probability, spec, res


def tilted_corridor_estimate(profile: SigmaProfile, T: float,
                             band: tuple[float, float],
                             n_paths: int, dt: float = 0.02, seed: int = 0,
                             bridge: bool = True, tilt: bool = True,
                             workers: int | None = None,
                             backend: str | None = None) -> MCEstimate:
    """Estimate e^T * P0(corridor around the reference path T fbar(t/T)).

    Simulates the centered motion under its own law and reweights by the
    exact exponential-tilt density, evaluated through the integration by
    parts that needs only the endpoint and a Riemann integral of the path.
    band = (lower_width, upper_offset) places the corridor at
    [T fbar - lower_width, T fbar + upper_offset].  With bridge=True the
    corridor indicator includes per-segment bridge survival factors, making
    the estimator unbiased for the continuous-time corridor event; with
    tilt=False the weight is 1 and the estimate is e^T * direct-P0.
    """
    lower_width, upper_offset = band
    if lower_width <= 0 or upper_offset < 0:
        raise CorridorError("band widths must be positive (upper offset >= 0)")
    if bridge and upper_offset == 0.0 and math.isfinite(lower_width):
        raise CorridorError("bridge mode needs an interior start: upper offset > 0")
    m = max(1, int(math.ceil(T / dt)))
    times = np.linspace(0.0, T, m + 1)
    u = times / T
    tau_grid = np.asarray(profile.clock(times, T), dtype=float)
    if tilt:
        sig = np.asarray(profile.eval(u), dtype=float)
        dsig = np.asarray(profile.deriv(u), dtype=float)
        kw = math.sqrt(2.0) / T * dsig / (sig * sig)
        inv_sig1 = math.sqrt(2.0) / float(profile.eval(1.0))
    else:
        kw = np.zeros(m + 1)
        inv_sig1 = 0.0
    lower = -float(lower_width)
    upper = float(upper_offset)
    kern = kernels.get_backend(backend)
    keys = keys_for_range(seed, "tilted-corridor", 0, n_paths)
    contrib = np.zeros(n_paths)
    map_blocks(
        lambda a, b: kern.tilted_corridor(keys, times, tau_grid, kw, inv_sig1,
                                          lower, upper, 1 if bridge else 0,
                                          contrib, a, b),
        n_paths, workers,
    )
    scale = 1.0 if tilt else math.exp(T)
    est = float(contrib.mean()) * scale
    stderr = float(contrib.std(ddof=1)) / math.sqrt(n_paths) * scale
    return MCEstimate(est, stderr, n_paths, dt, "tilted" if tilt else "direct")


def direct_corridor_estimate(profile: SigmaProfile, T: float,
                             band: tuple[float, float], n_paths: int,
                             dt: float = 0.02, seed: int = 0,
                             bridge: bool = True,
                             workers: int | None = None,
                             backend: str | None = None) -> MCEstimate:
    """e^T * P0(corridor) by unweighted simulation; feasible for small T."""
    return tilted_corridor_estimate(profile, T, band, n_paths, dt, seed,
                                    bridge=bridge, tilt=False,
                                    workers=workers, backend=backend)


@dataclass(frozen=True)
class SoftCorridorEstimate:
    estimate: float
    stderr: float
    n_paths: int
    dt: float
    occupation_fraction: np.ndarray  # per-path fraction of time in the band

    def occupation_quantiles(self, qs=(0.1, 0.5, 0.9)) -> np.ndarray:
        return np.quantile(self.occupation_fraction, qs)


def soft_corridor_functional(spec: SoftCorridorSpec, n_paths: int,
                             dt: float = 0.01, seed: int = 0,
                             occupancy_halfwidth: float | None = None,
                             workers: int | None = None,
                             backend: str | None = None) -> SoftCorridorEstimate:
    """Monte Carlo for the penalized-corridor functional.

    Also records, per path, the Lebesgue fraction of [0, T] spent with
    |B_s| <= occupancy_halfwidth (default: the endpoint halfwidth), the
    occupation statistic behind the probabilistic decay argument.
    """
    if n_paths < 1:
        raise CorridorError("n_paths must be >= 1")
    T = spec.horizon
    n_steps = max(1, int(math.ceil(T / dt)))
    if occupancy_halfwidth is None:
        occupancy_halfwidth = spec.endpoint_halfwidth
    kern = kernels.get_backend(backend)
    keys = keys_for_range(seed, "soft-corridor", 0, n_paths)
    values = np.zeros(n_paths)
    occ = np.zeros(n_paths)
    map_blocks(
        lambda a, b: kern.soft_corridor(keys, spec.start, T, n_steps, spec.c3,
                                        spec.endpoint_halfwidth,
                                        occupancy_halfwidth, values, occ, a, b),
        n_paths, workers,
    )
    est = float(values.mean())
    stderr = float(values.std(ddof=1)) / math.sqrt(n_paths) if n_paths > 1 else 0.0
    return SoftCorridorEstimate(est, stderr, n_paths, T / n_steps, occ)
