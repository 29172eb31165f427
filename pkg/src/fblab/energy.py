"""One-phase / two-phase functionals, boundary adjusted energies and the excess.

All values are quadrature approximations on the field's grid: the Dirichlet
and measure terms integrate over the masked disk with 4x4 subcell weights,
the circle integral of the boundary adjusted energy is a trapezoid rule on
the homogeneity-corrected trace at radius 1 - h, and the excess samples the
gradient at radius 1 - 2h.  The O(h) bias of the two boundary radii is
accepted and documented.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainOverflow, RejectedInput
from .geometry import circle_trace
from .grids import CircleTrace, CoeffData, ScalarField2D, _as_point


@dataclass(frozen=True)
class EnergyBreakdown:
    """Summands of a functional or boundary adjusted energy.

    total = dirichlet - boundary_term + positive_measure_term +
    negative_measure_term; the boundary term is zero for the plain
    functionals and nonzero for the boundary adjusted energies.
    """

    dirichlet: float
    boundary_term: float
    positive_measure_term: float
    negative_measure_term: float

    @property
    def total(self) -> float:
        return (self.dirichlet - self.boundary_term
                + self.positive_measure_term + self.negative_measure_term)

    def to_json(self) -> str:
        d = {"dirichlet": self.dirichlet, "boundary": self.boundary_term,
             "pos_measure": self.positive_measure_term,
             "neg_measure": self.negative_measure_term, "total": self.total}
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "EnergyBreakdown":
        d = json.loads(s)
        return cls(d["dirichlet"], d["boundary"], d["pos_measure"], d["neg_measure"])


def _dirichlet_integrand(u: ScalarField2D, coeffs: CoeffData | None, frozen: bool):
    gx, gy = u.gradient()
    if frozen or coeffs is None:
        return gx * gx + gy * gy
    a11, a12, a22 = coeffs.a_fields_on(u)
    return a11 * gx * gx + 2.0 * a12 * gx * gy + a22 * gy * gy


def energy_J(u: ScalarField2D, x0, r: float, coeffs: CoeffData,
             mode: str = "OP", frozen: bool = False,
             freeze_point=None) -> EnergyBreakdown:
    """Variable-coefficient (or frozen) functional over the disk B_r(x0).

    frozen=True evaluates the gradient with the identity matrix and the Q
    weights as constants at ``freeze_point`` (default x0); frozen=False uses
    a_ij(x) and Q(x) pointwise.
    """
    x0 = _as_point(x0)
    if mode not in ("OP", "TP"):
        raise RejectedInput(f"unknown mode {mode!r}")
    if np.abs(x0 - u.center).max() + r > u.half_width + 1e-12:
        raise DomainOverflow("ball exits the field domain")
    if mode == "OP" and u.values.min() < -1e-9 * max(1.0, np.abs(u.values).max()):
        raise RejectedInput("OP mode requires a nonnegative field")
    if freeze_point is None:
        freeze_point = x0
    h2 = u.spacing ** 2
    w_disk = u.disk_weights(x0, r)
    dirichlet = float((_dirichlet_integrand(u, coeffs, frozen) * w_disk).sum() * h2)
    floor = u.positivity_floor()
    w_pos = u.sign_region_weights(x0, r, +1, floor)
    if mode == "OP":
        if frozen:
            pos = coeffs.q_at(freeze_point, "op") * float(w_pos.sum() * h2)
        else:
            q = coeffs.q_field_on(u, "op")
            pos = float((q * w_pos).sum() * h2)
        return EnergyBreakdown(dirichlet, 0.0, pos, 0.0)
    w_neg = u.sign_region_weights(x0, r, -1, floor)
    if frozen:
        pos = coeffs.q_at(freeze_point, "tp_plus") * float(w_pos.sum() * h2)
        neg = coeffs.q_at(freeze_point, "tp_minus") * float(w_neg.sum() * h2)
    else:
        pos = float((coeffs.q_field_on(u, "tp_plus") * w_pos).sum() * h2)
        neg = float((coeffs.q_field_on(u, "tp_minus") * w_neg).sum() * h2)
    return EnergyBreakdown(dirichlet, 0.0, pos, neg)


def rescale(u: ScalarField2D, x0, r: float, n_out: int | None = None) -> ScalarField2D:
    """One-homogeneous rescaling u(x0 + r x) / r sampled on [-1, 1]^2.

    The bilinear stencil of the square output grid needs the circumscribed
    square x0 + r [-1,1]^2 inside u's domain (slightly stronger than the
    ball); violations raise DomainOverflow.
    """
    x0 = _as_point(x0)
    if r <= 0:
        raise RejectedInput("rescaling radius must be positive")
    if np.abs(x0 - u.center).max() + r > u.half_width + 1e-12:
        raise DomainOverflow("rescaling square exits the field domain")
    if n_out is None:
        n_out = u.n
    out = ScalarField2D.from_function(lambda X, Y: 0.0 * X, n_out, 1.0)
    X, Y = out.meshgrid()
    pts = np.stack([x0[0] + r * X, x0[1] + r * Y], axis=-1)
    vals = u.sample(pts) / r
    return ScalarField2D(vals, np.zeros(2), out.spacing,
                         lipschitz_bound=u.lipschitz_bound, sign_mode=u.sign_mode)


def one_hom_extension(c: CircleTrace, n_out: int = 129) -> ScalarField2D:
    """The cone z(x) = |x| c(x/|x|) over a circle trace, z(0) = 0."""
    out = ScalarField2D.from_function(lambda X, Y: 0.0 * X, n_out, 1.0)
    X, Y = out.meshgrid()
    rho = np.hypot(X, Y)
    theta = np.arctan2(Y, X)
    vals = rho * c.value_at(theta)
    vals[rho == 0.0] = 0.0
    sign_mode = "nonnegative" if c.samples.min() >= 0.0 else "signed"
    return ScalarField2D(vals, np.zeros(2), out.spacing, sign_mode=sign_mode)


def weiss(u: ScalarField2D, mode: str = "OP", lambdas=1.0,
          n_theta: int | None = None) -> EnergyBreakdown:
    """Boundary adjusted energy on the unit ball around the field's center.

    W = int_{B1} |grad u|^2 - int_{dB1} u^2 + Lam |{u>0} cap B1|
    (+ Lam2 |{u<0} cap B1| in TP mode).  The circle integral uses the
    homogeneity-corrected trace at radius 1 - h, which is exact for
    1-homogeneous fields.
    """
    if mode not in ("OP", "TP"):
        raise RejectedInput(f"unknown mode {mode!r}")
    if u.half_width < 1.0 - 1e-12:
        raise DomainOverflow("field does not cover the unit ball")
    h = u.spacing
    h2 = h * h
    if n_theta is None:
        n_theta = max(128, 4 * (u.n // 2))
    w_disk = u.disk_weights(u.center, 1.0)
    gx, gy = u.gradient()
    dirichlet = float(((gx * gx + gy * gy) * w_disk).sum() * h2)
    tr = circle_trace(u, u.center, 1.0 - h, n_theta)
    boundary = tr.integral(lambda s: s * s)
    floor = u.positivity_floor()
    pos_area = float(u.sign_region_weights(u.center, 1.0, +1, floor).sum() * h2)
    if mode == "OP":
        lam = float(np.asarray(lambdas).ravel()[0])
        return EnergyBreakdown(dirichlet, boundary, lam * pos_area, 0.0)
    lam1, lam2 = (float(v) for v in np.asarray(lambdas).ravel()[:2])
    neg_area = float(u.sign_region_weights(u.center, 1.0, -1, floor).sum() * h2)
    return EnergyBreakdown(dirichlet, boundary, lam1 * pos_area, lam2 * neg_area)


def excess(u: ScalarField2D, n_theta: int | None = None) -> float:
    """Circle integral of |x . grad u - u|^2; zero exactly for 1-homogeneous u.

    The gradient is sampled at radius 1 - 2h to keep the stencil interior.
    """
    h = u.spacing
    rho = 1.0 - 2.0 * h
    if rho <= 0.5:
        raise RejectedInput("grid too coarse to form the excess stencil")
    if u.half_width < 1.0 - 1e-12:
        raise DomainOverflow("field does not cover the unit ball")
    if n_theta is None:
        n_theta = max(128, 4 * (u.n // 2))
    th = 2.0 * np.pi * np.arange(n_theta) / n_theta
    pts = u.center + rho * np.stack([np.cos(th), np.sin(th)], axis=-1)
    gx, gy = u.gradient()
    gxf = ScalarField2D(gx, u.center, h)
    gyf = ScalarField2D(gy, u.center, h)
    px = pts[:, 0] - u.center[0]
    py = pts[:, 1] - u.center[1]
    e = px * gxf.sample(pts) + py * gyf.sample(pts) - u.sample(pts)
    return float((e * e).sum() * 2.0 * np.pi / n_theta)
