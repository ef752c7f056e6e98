"""Diffusivity profiles sigma: [0,1] -> (0, inf).

A profile supplies the macroscopic variance schedule of the particle motion:
at physical time t with horizon T the instantaneous variance is sigma(t/T)**2.
Four families are shipped:

* ``constant``            sigma(u) = c
* ``affine``              sigma(u) = a + b u
* ``exponential-decay``   sigma(u) = a exp(-b u)
* ``tabulated``           monotone-cubic (PCHIP) interpolation of knots

Closed-form kinds evaluate sigma, its derivative, int sigma and int sigma^2
exactly; tabulated profiles use the interpolant's exact antiderivative for
int sigma and adaptive quadrature (abs tol 1e-12) for int sigma^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

KINDS = ("constant", "affine", "exponential-decay", "tabulated")

_VALIDATION_GRID = 2001


class ProfileError(ValueError):
    """Raised for invalid profile parameters or out-of-domain arguments."""


def _check_unit_interval(u, name: str = "u") -> np.ndarray:
    arr = np.asarray(u, dtype=float)
    if np.any(arr < -1e-12) or np.any(arr > 1.0 + 1e-12):
        raise ProfileError(f"{name} must lie in [0, 1], got {u!r}")
    return np.clip(arr, 0.0, 1.0)


@dataclass(frozen=True)
class SigmaProfile:
    """Immutable diffusivity profile with bounds and monotonicity metadata.

    Attributes
    ----------
    kind : str
        One of ``constant | affine | exponential-decay | tabulated``.
    params : tuple of float
        ``(c,)`` for constant, ``(a, b)`` for affine (sigma = a + b u) and
        exponential-decay (sigma = a exp(-b u)); empty for tabulated.
    knots : tuple of (u, sigma) pairs or None
        Interpolation data for tabulated profiles.
    sigma_min, sigma_max : float
        Infimum and supremum of sigma over [0, 1] (grid-sampled for
        tabulated kinds).
    monotone_decreasing : bool
        True when sigma' <= -margin with margin > 0 everywhere.
    decrease_margin : float
        Largest delta >= 0 with sigma' <= -delta on the grid; 0 when the
        profile is not decreasing.
    """

    kind: str
    params: tuple = ()
    knots: tuple | None = None
    sigma_min: float = field(init=False, default=0.0)
    sigma_max: float = field(init=False, default=0.0)
    monotone_decreasing: bool = field(init=False, default=False)
    decrease_margin: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ProfileError(f"unknown profile kind {self.kind!r}")
        if self.kind == "tabulated":
            if self.knots is None or len(self.knots) < 2:
                raise ProfileError("tabulated profile needs at least 2 knots")
            us = np.array([k[0] for k in self.knots], dtype=float)
            vs = np.array([k[1] for k in self.knots], dtype=float)
            if us[0] != 0.0 or us[-1] != 1.0 or np.any(np.diff(us) <= 0):
                raise ProfileError("knot abscissae must increase from 0 to 1")
            if np.any(vs <= 0):
                raise ProfileError("knot sigma values must be positive")
            object.__setattr__(self, "knots", tuple((float(a), float(b)) for a, b in self.knots))
            interp = PchipInterpolator(us, vs)
            object.__setattr__(self, "_interp", interp)
            object.__setattr__(self, "_interp_d", interp.derivative())
            object.__setattr__(self, "_interp_i", interp.antiderivative())
        else:
            p = tuple(float(x) for x in self.params)
            n_expected = 1 if self.kind == "constant" else 2
            if len(p) != n_expected:
                raise ProfileError(f"{self.kind} profile takes {n_expected} parameter(s), got {len(p)}")
            object.__setattr__(self, "params", p)

        grid = np.linspace(0.0, 1.0, _VALIDATION_GRID)
        vals = self.eval(grid)
        if np.any(vals <= 0.0) or not np.all(np.isfinite(vals)):
            raise ProfileError("sigma must be positive and finite on [0, 1]")
        dv = self.deriv(grid)
        margin = float(-np.max(dv))
        object.__setattr__(self, "sigma_min", float(vals.min()))
        object.__setattr__(self, "sigma_max", float(vals.max()))
        object.__setattr__(self, "monotone_decreasing", margin > 0.0)
        object.__setattr__(self, "decrease_margin", max(margin, 0.0))

    # -- evaluation ---------------------------------------------------------

    def eval(self, u):
        """sigma(u) for u in [0, 1]; accepts scalars or arrays."""
        uu = _check_unit_interval(u)
        if self.kind == "constant":
            out = np.full_like(uu, self.params[0])
        elif self.kind == "affine":
            a, b = self.params
            out = a + b * uu
        elif self.kind == "exponential-decay":
            a, b = self.params
            out = a * np.exp(-b * uu)
        else:
            out = self._interp(uu)
        return float(out) if np.isscalar(u) else out

    def deriv(self, u):
        """sigma'(u); exact for closed forms, interpolant derivative otherwise."""
        uu = _check_unit_interval(u)
        if self.kind == "constant":
            out = np.zeros_like(uu)
        elif self.kind == "affine":
            out = np.full_like(uu, self.params[1])
        elif self.kind == "exponential-decay":
            a, b = self.params
            out = -a * b * np.exp(-b * uu)
        else:
            out = self._interp_d(uu)
        return float(out) if np.isscalar(u) else out

    def integral_sigma(self, t):
        """int_0^t sigma(u) du for t in [0, 1]."""
        tt = _check_unit_interval(t, "t")
        if self.kind == "constant":
            out = self.params[0] * tt
        elif self.kind == "affine":
            a, b = self.params
            out = a * tt + 0.5 * b * tt * tt
        elif self.kind == "exponential-decay":
            a, b = self.params
            if b == 0.0:
                out = a * tt
            else:
                out = a * (1.0 - np.exp(-b * tt)) / b
        else:
            out = self._interp_i(tt) - self._interp_i(0.0)
        return float(out) if np.isscalar(t) else out

    def integral_sigma_sq(self, t):
        """int_0^t sigma(u)^2 du; closed form, else quadrature to 1e-12 abs."""
        tt = _check_unit_interval(t, "t")
        if self.kind == "constant":
            out = self.params[0] ** 2 * tt
        elif self.kind == "affine":
            a, b = self.params
            out = a * a * tt + a * b * tt**2 + (b * b / 3.0) * tt**3
        elif self.kind == "exponential-decay":
            a, b = self.params
            if b == 0.0:
                out = a * a * tt
            else:
                out = a * a * (1.0 - np.exp(-2.0 * b * tt)) / (2.0 * b)
        else:
            pts = [k[0] for k in self.knots]
            f = lambda u: self._interp(u) ** 2

            def one(x):
                if x == 0.0:
                    return 0.0
                inner = [p for p in pts if 0.0 < p < x]
                val, _ = quad(f, 0.0, x, points=inner or None, limit=200, epsabs=1e-12)
                return val

            out = one(float(tt)) if np.isscalar(t) else np.array([one(float(x)) for x in tt])
        return float(out) if np.isscalar(t) else out

    def clock(self, t, T: float):
        """Variance clock tau(t) = int_0^t sigma(s/T)^2 ds = T * int_0^{t/T} sigma^2."""
        if T <= 0:
            raise ProfileError(f"horizon T must be positive, got {T}")
        tt = np.asarray(t, dtype=float)
        if np.any(tt < -1e-12) or np.any(tt > T * (1 + 1e-12)):
            raise ProfileError(f"t must lie in [0, T], got t={t!r}, T={T}")
        out = T * self.integral_sigma_sq(np.clip(tt / T, 0.0, 1.0))
        return float(out) if np.isscalar(t) else out

    def inv_sq_integral(self, t1, t2):
        """int_{t1}^{t2} du / (2 sigma(u)^2), elementwise over interval arrays.

        This is the per-interval action coefficient of a unit-slope path.
        """
        a1 = _check_unit_interval(t1, "t1")
        a2 = _check_unit_interval(t2, "t2")
        if self.kind == "constant":
            c = self.params[0]
            out = (a2 - a1) / (2.0 * c * c)
        elif self.kind == "affine":
            a, b = self.params
            if b == 0.0:
                out = (a2 - a1) / (2.0 * a * a)
            else:
                out = (1.0 / (a + b * a1) - 1.0 / (a + b * a2)) / (2.0 * b)
        elif self.kind == "exponential-decay":
            a, b = self.params
            if b == 0.0:
                out = (a2 - a1) / (2.0 * a * a)
            else:
                out = (np.exp(2.0 * b * a2) - np.exp(2.0 * b * a1)) / (4.0 * a * a * b)
        else:
            # 16-point Gauss-Legendre per interval; integrand is piecewise
            # smooth and intervals in practice are far shorter than the knot
            # spacing, so this is quadrature-exact at double precision.
            nodes, weights = np.polynomial.legendre.leggauss(16)
            mid = 0.5 * (a1 + a2)
            half = 0.5 * (a2 - a1)
            u = mid[..., None] + half[..., None] * nodes
            vals = 1.0 / (2.0 * self._interp(np.clip(u, 0.0, 1.0)) ** 2)
            out = half * np.sum(weights * vals, axis=-1)
        return float(out) if np.isscalar(t1) and np.isscalar(t2) else out

    def validate(self, n_grid: int = 1001, fd_step: float = 1e-6) -> "ValidationReport":
        """Grid-sample sigma and report bounds, monotonicity and deriv consistency."""
        if n_grid < 2:
            raise ProfileError("n_grid must be >= 2")
        grid = np.linspace(0.0, 1.0, n_grid)
        vals = self.eval(grid)
        dv = self.deriv(grid)
        interior = grid[(grid > fd_step) & (grid < 1.0 - fd_step)]
        fd = (self.eval(interior + fd_step) - self.eval(interior - fd_step)) / (2.0 * fd_step)
        dv_i = self.deriv(interior)
        scale = np.maximum(np.abs(dv_i), 1.0)
        max_fd_mismatch = float(np.max(np.abs(dv_i - fd) / scale)) if interior.size else 0.0
        margin = float(-np.max(dv))
        return ValidationReport(
            kind=self.kind,
            n_grid=n_grid,
            sigma_min=float(vals.min()),
            sigma_max=float(vals.max()),
            positive=bool(vals.min() > 0.0),
            monotone_decreasing=bool(margin > 0.0),
            decrease_margin=max(margin, 0.0),
            max_fd_mismatch=max_fd_mismatch,
        )

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "tabulated":
            d["knots"] = [list(k) for k in self.knots]
        else:
            d["params"] = list(self.params)
        return d


@dataclass(frozen=True)
class ValidationReport:
    kind: str
    n_grid: int
    sigma_min: float
    sigma_max: float
    positive: bool
    monotone_decreasing: bool
    decrease_margin: float
    max_fd_mismatch: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def constant(c: float) -> SigmaProfile:
    return SigmaProfile("constant", (c,))


def affine(a: float, b: float) -> SigmaProfile:
    """sigma(u) = a + b*u."""
    return SigmaProfile("affine", (a, b))


def exponential_decay(a: float, b: float) -> SigmaProfile:
    """sigma(u) = a * exp(-b*u)."""
    return SigmaProfile("exponential-decay", (a, b))


def tabulated(knots) -> SigmaProfile:
    return SigmaProfile("tabulated", (), tuple(tuple(k) for k in knots))


def from_config(cfg: dict) -> SigmaProfile:
    """Build a profile from its JSON object form; rejects unknown keys."""
    if not isinstance(cfg, dict):
        raise ProfileError(f"profile config must be an object, got {type(cfg).__name__}")
    kind = cfg.get("kind")
    if kind is None:
        raise ProfileError("profile config requires a 'kind' key")
    allowed = {"kind", "knots"} if kind == "tabulated" else {"kind", "params"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ProfileError(f"profile config: unknown key(s) {sorted(unknown)}")
    if kind == "tabulated":
        return tabulated(cfg.get("knots", ()))
    return SigmaProfile(kind, tuple(cfg.get("params", ())))


# ---------------------------------------------------------------------------
# sampled tables consumed by the compute kernels

TABLE_SIZE = 4096


@dataclass(frozen=True)
class ProfileTable:
    """Cubic-Hermite tables of F(v) = int_0^v sigma and S2(v) = int_0^v sigma^2.

    Node values and node derivatives (sigma, sigma^2) are exact, so the
    Hermite error is O(n^-4) ~ 1e-14 at the default resolution; kernels use
    these tables to evaluate the variance clock and the reference path at
    arbitrary event times without calling back into Python.
    """

    n: int
    F: np.ndarray
    sig: np.ndarray
    S2: np.ndarray
    sig2: np.ndarray

    @staticmethod
    def build(profile: SigmaProfile, n: int = TABLE_SIZE) -> "ProfileTable":
        v = np.linspace(0.0, 1.0, n + 1)
        sig = np.asarray(profile.eval(v), dtype=float)
        F = np.asarray(profile.integral_sigma(v), dtype=float)
        if profile.kind == "tabulated":
            # cumulative Gauss-Legendre between nodes (vectorized); exact
            # antiderivatives exist only for F
            nodes, weights = np.polynomial.legendre.leggauss(12)
            mid = 0.5 * (v[:-1] + v[1:])
            half = 0.5 * (v[1:] - v[:-1])
            u = mid[:, None] + half[:, None] * nodes
            seg = half * np.sum(weights * profile.eval(np.clip(u, 0, 1)) ** 2, axis=1)
            S2 = np.concatenate([[0.0], np.cumsum(seg)])
        else:
            S2 = np.asarray(profile.integral_sigma_sq(v), dtype=float)
        return ProfileTable(n=n, F=F, sig=sig, S2=S2, sig2=sig * sig)

    def fbar(self, v):
        """sqrt(2) * F(v), the unit-horizon reference path."""
        return math.sqrt(2.0) * hermite_eval(self.F, self.sig, self.n, v)

    def clock_unit(self, v):
        """S2(v); multiply by T for the physical variance clock."""
        return hermite_eval(self.S2, self.sig2, self.n, v)


def hermite_eval(values: np.ndarray, derivs: np.ndarray, n: int, v):
    """Evaluate the cubic Hermite interpolant of (values, derivs) on [0, 1]."""
    vv = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
    h = 1.0 / n
    idx = np.minimum((vv * n).astype(np.int64), n - 1)
    u = vv * n - idx
    u2 = u * u
    u3 = u2 * u
    out = (
        (1.0 - 3.0 * u2 + 2.0 * u3) * values[idx]
        + (3.0 * u2 - 2.0 * u3) * values[idx + 1]
        + h * (u - 2.0 * u2 + u3) * derivs[idx]
        + h * (u3 - u2) * derivs[idx + 1]
    )
    return float(out) if np.isscalar(v) else out
