"""Energy ladders along radii: derivative identity, almost-monotonicity,
epiperimetric decay certificates and the excess-to-L2 convergence bound.

Ladders are geometric by default (log-uniform sampling matches the r^gamma
scalings under test); the radial derivative is a centered finite difference
on the nonuniform ladder.  Profiles are computed for fields already pulled
back to identity coefficients, so every energy here is evaluated with the
identity matrix and frozen measure weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .energy import excess, one_hom_extension, rescale, weiss
from .errors import RejectedInput
from .geometry import circle_trace
from .grids import CircleTrace, CoeffData, ScalarField2D, _as_point


def geometric_ladder(r0: float, q: float = 0.8, rungs: int = 25) -> np.ndarray:
    """Radii r0 * q^k, k = 0..rungs-1, strictly decreasing."""
    if not (0 < q < 1) or r0 <= 0 or rungs < 2:
        raise RejectedInput("need r0 > 0, q in (0,1), rungs >= 2")
    return r0 * q ** np.arange(rungs)


@dataclass(frozen=True)
class WeissProfile:
    """Per-radius boundary adjusted energy W, excess E and the energy z_W of
    the one-homogeneous extension of the trace; theta estimates the density
    as W at the smallest computed radius (the analytic value is kept
    alongside to expose discretization bias)."""

    x0: np.ndarray
    radii: np.ndarray
    W_values: np.ndarray
    E_values: np.ndarray
    z_W_values: np.ndarray
    theta: float
    theta_analytic: float
    mode: str = "OP"
    lambdas: tuple = (1.0,)

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        if np.any(np.diff(r) >= 0) or np.any(r <= 0):
            raise RejectedInput("radii must be strictly decreasing and positive")
        for name in ("W_values", "E_values", "z_W_values"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != r.shape:
                raise RejectedInput("profile sequences must share the ladder length")
            object.__setattr__(self, name, v)
        if np.asarray(self.E_values).min() < -1e-12:
            raise RejectedInput("excess values must be nonnegative")
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "x0", _as_point(self.x0))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("r,W,E,z_W\n")
            for r, w, e, zw in zip(self.radii, self.W_values,
                                   self.E_values, self.z_W_values):
                fh.write("%.17g,%.17g,%.17g,%.17g\n" % (r, w, e, zw))

    @classmethod
    def from_csv(cls, path, x0=(0.0, 0.0), mode="OP", lambdas=(1.0,)):
        raw = np.genfromtxt(path, delimiter=",", names=True)
        W = np.atleast_1d(raw["W"])
        return cls(_as_point(x0), np.atleast_1d(raw["r"]), W,
                   np.atleast_1d(raw["E"]), np.atleast_1d(raw["z_W"]),
                   theta=float(W[-1]), theta_analytic=float("nan"),
                   mode=mode, lambdas=tuple(np.atleast_1d(lambdas)))


def frozen_lambdas(coeffs: CoeffData, point, mode: str) -> tuple:
    if mode == "OP":
        return (coeffs.q_at(point, "op"),)
    return (coeffs.q_at(point, "tp_plus"), coeffs.q_at(point, "tp_minus"))


def analytic_theta(mode: str, lambdas) -> float:
    lam = np.asarray(lambdas, dtype=float).ravel()
    if mode == "OP":
        return float(lam[0] * np.pi / 2.0)
    return float((lam[0] + lam[1]) * np.pi / 2.0)


def weiss_profile(u: ScalarField2D, x0, radii, coeffs: CoeffData | None = None,
                  mode: str = "OP", lambdas=None, n_out: int | None = None,
                  n_theta: int = 256, freeze_point=None) -> WeissProfile:
    """Ladder of W, E and z_W at a point.

    The field is expected to be already pulled back to identity coefficients
    (freeze_pullback); ``coeffs`` only supplies the frozen measure weights
    at ``freeze_point`` (default x0) unless ``lambdas`` is given directly.
    """
    x0 = _as_point(x0)
    radii = np.asarray(radii, dtype=float)
    if lambdas is None:
        if coeffs is None:
            raise RejectedInput("need coeffs or explicit lambdas")
        lambdas = frozen_lambdas(coeffs, x0 if freeze_point is None else freeze_point, mode)
    lambdas = tuple(np.atleast_1d(np.asarray(lambdas, dtype=float)))
    if n_out is None:
        n_out = min(u.n, 161)
    W = np.empty(radii.size)
    E = np.empty(radii.size)
    zW = np.empty(radii.size)
    for k, r in enumerate(radii):
        ur = rescale(u, x0, r, n_out)
        W[k] = weiss(ur, mode, lambdas).total
        E[k] = max(excess(ur), 0.0)
        tr = circle_trace(u, x0, r, n_theta)
        zW[k] = weiss(one_hom_extension(tr, n_out), mode, lambdas).total
    return WeissProfile(x0, radii, W, E, zW, theta=float(W[-1]),
                        theta_analytic=analytic_theta(mode, lambdas),
                        mode=mode, lambdas=lambdas)


def derivative_identity_residual(profile: WeissProfile, d: int = 2):
    """Residual of dW/dr = (d/r)(z_W - W) + E/r at interior ladder points.

    Returns (radii, residuals) for the interior rungs; the radial derivative
    is the second-order nonuniform centered difference.
    """
    if profile.radii.size < 3:
        raise RejectedInput("need at least 3 rungs for the centered difference")
    dWdr = np.gradient(profile.W_values, profile.radii)
    r = profile.radii
    rhs = (d / r) * (profile.z_W_values - profile.W_values) + profile.E_values / r
    res = np.abs(dWdr - rhs)
    return r[1:-1], res[1:-1]


@dataclass(frozen=True)
class MonotoneReport:
    violations: list
    max_violation: float
    tol: float
    m_values: np.ndarray

    @property
    def passed(self) -> bool:
        return not self.violations


def check_monotone(profile: WeissProfile, C: float, delta: float,
                   d: int = 2, tol_mono: float | None = None) -> MonotoneReport:
    """Check that m(r) = W(r) + (C d / delta) r^delta is nondecreasing in r.

    Reports every adjacent rung pair with m(r_small) > m(r_big) + tol_mono
    and the maximal violation magnitude.
    """
    if C < 0 or delta <= 0:
        raise RejectedInput("need C >= 0 and delta > 0")
    r = profile.radii
    m = profile.W_values + (C * d / delta) * r ** delta
    if tol_mono is None:
        tol_mono = 1e-3 * abs(profile.W_values[0])
    violations = []
    worst = 0.0
    for k in range(r.size - 1):
        gap = m[k + 1] - m[k]  # rung k+1 has the smaller radius
        if gap > tol_mono:
            violations.append((float(r[k]), float(r[k + 1]), float(gap)))
            worst = max(worst, gap)
    return MonotoneReport(violations, worst, tol_mono, m)


@dataclass(frozen=True)
class DecayCertificate:
    gamma: float
    I: float
    holds: bool
    f_values: np.ndarray
    excess_integral: float
    f_nondecreasing: bool
    integral_bounded: bool
    theta: float


def decay_certificate(profile: WeissProfile, eps: float, delta: float,
                      C: float, d: int = 2, tol: float = 1e-6) -> DecayCertificate:
    """Certificate that the energy gap decays geometrically along the ladder.

    Admissible range is the open interval 0 < eps < delta / (2d + delta);
    gamma = d eps / (1 - eps) and
    I = r0^{-gamma} (W(r0) - theta) + d C / (delta - gamma) r0^{delta - gamma}.
    The certificate holds iff f(r) = (W - theta)/r^gamma
    + d C/(delta - gamma) r^{delta-gamma} is nondecreasing on the ladder and
    the ladder integral of E / r^{1+gamma} is at most f(r0) (1 + tol).
    """
    if not (0.0 < eps < delta / (2.0 * d + delta)):
        raise RejectedInput(
            f"eps must lie in the open interval (0, {delta / (2 * d + delta):.6g})")
    gamma = d * eps / (1.0 - eps)
    r = profile.radii
    r0 = r[0]
    theta = profile.theta
    f = (profile.W_values - theta) / r ** gamma \
        + d * C / (delta - gamma) * r ** (delta - gamma)
    I = float(f[0])
    scale = max(abs(I), 1e-30)
    diffs = np.diff(f)  # along decreasing radii: f should not increase
    f_nondec = bool(np.all(diffs <= tol * scale + 1e-30))
    integrand = profile.E_values / r ** (1.0 + gamma)
    integral = float(np.trapezoid(integrand[::-1], r[::-1]))
    bounded = integral <= f[0] * (1.0 + tol) + 1e-30
    return DecayCertificate(gamma, I, f_nondec and bounded, f, integral,
                            f_nondec, bounded, theta)


@dataclass(frozen=True)
class ExcessL2Report:
    ratios: np.ndarray
    max_ratio: float
    holds: bool
    excess_integral: float
    bound_I: float
    limit_trace: CircleTrace = field(repr=False, default=None)


def excess_L2_bound(u: ScalarField2D, x0, gamma: float, r0: float, I: float,
                    radii, n_theta: int = 256, n_out: int | None = None,
                    tol: float = 0.05) -> ExcessL2Report:
    """Check the trace-convergence bound ||trace(r) - u_lim||^2 <= I r^gamma / gamma.

    The limit trace is estimated at the smallest ladder radius; the
    precondition is that the ladder integral of E / r^{1+gamma} does not
    exceed I.
    """
    x0 = _as_point(x0)
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) >= 0) or radii[0] > r0 + 1e-12:
        raise RejectedInput("radii must decrease and start at or below r0")
    if n_out is None:
        n_out = min(u.n, 161)
    E = np.array([max(excess(rescale(u, x0, r, n_out)), 0.0) for r in radii])
    integrand = E / radii ** (1.0 + gamma)
    integral = float(np.trapezoid(integrand[::-1], radii[::-1]))
    if integral > I * (1.0 + 1e-9):
        raise RejectedInput(
            f"excess integral {integral:.6g} exceeds the bound I = {I:.6g}")
    traces = [circle_trace(u, x0, r, n_theta) for r in radii]
    u_lim = traces[-1]
    dev2 = np.array([t.l2_distance_sq(u_lim) for t in traces])
    bound = I * radii ** gamma / gamma
    ratios = dev2 / np.maximum(bound, 1e-300)
    max_ratio = float(ratios[:-1].max()) if ratios.size > 1 else 0.0
    return ExcessL2Report(ratios, max_ratio, max_ratio <= 1.0 + tol,
                          integral, I, u_lim)
