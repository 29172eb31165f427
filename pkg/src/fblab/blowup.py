"""Free-boundary extraction, blow-up fitting and classification, convergence
rates, flatness bands, oscillation exponents, graph reconstruction and the
flatness certificate.

Half-plane fits search 720 directions then refine by golden section (the
objective is smooth in the slope, non-convex in the direction); the slope is
closed-form least squares given the direction.  Fits with relative residual
above 0.1 are flagged "not half-plane-like" and excluded from downstream
regressions, never silently included.  Hoelder exponents come from an upper
envelope (0.95 quantile per log-distance bin) because the estimates verify
one-sided bounds, not asymptotics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from skimage import measure as skmeasure

from .energy import excess, rescale
from .errors import RejectedInput
from .geometry import matrix_sqrt
from .grids import CoeffData, HalfPlaneModel, ScalarField2D, _as_point

FIT_REJECT_REL = 0.1      # residual threshold relative to the model L2 norm
KIND_PLUS = "plus_only"
KIND_MINUS = "minus_only"
KIND_TP = "two_phase"
KIND_BOX = "box_contact"


@dataclass(frozen=True)
class RateFit:
    """Power-law fit y ~ constant * x^exponent over [r_range]; residual is
    the max absolute log deviation of the fitted points."""

    exponent: float
    constant: float
    r_range: tuple
    residual: float
    status: str = "ok"   # "ok", "at-limit", "constant"

    def to_json(self) -> str:
        return json.dumps({"exponent": self.exponent, "constant": self.constant,
                           "r_min": self.r_range[0], "r_max": self.r_range[1],
                           "residual": self.residual, "status": self.status},
                          sort_keys=True)


def loglog_fit(x, y, status_floor: float = 0.0) -> RateFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > status_floor)
    if keep.sum() < 2:
        return RateFit(float("nan"), float("nan"),
                       (float(x.min(initial=0)), float(x.max(initial=0))),
                       float("nan"), status="at-limit")
    lx, ly = np.log(x[keep]), np.log(y[keep])
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = float(np.abs(ly - A @ coef).max())
    return RateFit(float(coef[0]), float(np.exp(coef[1])),
                   (float(x[keep].min()), float(x[keep].max())), resid)


def envelope_fit(dist, dev, n_bins: int = 10, quantile: float = 0.95,
                 const_tol: float = 1e-8) -> RateFit:
    """Upper-envelope log-log regression of dev against dist."""
    dist = np.asarray(dist, dtype=float)
    dev = np.asarray(dev, dtype=float)
    keep = dist > 0
    dist, dev = dist[keep], dev[keep]
    if dist.size < 10:
        raise RejectedInput("need at least 10 pairs for the envelope fit")
    if dev.max() < const_tol:
        return RateFit(float("nan"), 0.0,
                       (float(dist.min()), float(dist.max())), 0.0,
                       status="constant")
    edges = np.geomspace(dist.min() * 0.999, dist.max() * 1.001, n_bins + 1)
    xs, ys = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (dist >= a) & (dist < b)
        if sel.sum() >= 3:
            xs.append(np.sqrt(a * b))
            ys.append(np.quantile(dev[sel], quantile))
    if len(xs) < 3:
        raise RejectedInput("too few populated bins for the envelope fit")
    return loglog_fit(np.array(xs), np.array(ys))


@dataclass
class BlowupFit:
    model: HalfPlaneModel
    residual: float
    accepted: bool
    deltas: dict
    mu_A_plus: float = float("nan")   # slope in the stretched frame
    mu_A_minus: float = float("nan")
    offset_to_boundary: float = 0.0   # fitted boundary offset along nu (original units)


@dataclass
class FreeBoundaryCurve:
    """Ordered polyline of boundary points with per-point classification and
    half-plane fits."""

    points: np.ndarray
    kinds: list
    fits: list              # BlowupFit or None per point
    closed: bool = False
    phase: int = +1         # +1: boundary of {u>0}; -1: boundary of {u<0}

    def accepted_indices(self):
        return [k for k, f in enumerate(self.fits)
                if f is not None and f.accepted]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("x,y,kind,nu_x,nu_y,mu_plus,mu_minus,residual\n")
            for p, kind, fit in zip(self.points, self.kinds, self.fits):
                if fit is None:
                    fh.write("%.17g,%.17g,%s,nan,nan,nan,nan,nan\n"
                             % (p[0], p[1], kind))
                else:
                    m = fit.model
                    fh.write("%.17g,%.17g,%s,%.17g,%.17g,%.17g,%.17g,%.17g\n"
                             % (p[0], p[1], kind, m.nu[0], m.nu[1],
                                m.mu_plus, m.mu_minus, fit.residual))


def _classify_point(u: ScalarField2D, p, box_mask_field=None,
                    radius_cells: float = 3.0) -> str:
    h = u.spacing
    r = radius_cells * h
    offs = np.linspace(-r, r, 7)
    OX, OY = np.meshgrid(offs, offs, indexing="ij")
    pts = np.stack([p[0] + OX, p[1] + OY], axis=-1)
    vals = u.sample(pts, mode="clamp")
    floor = u.positivity_floor()
    has_pos = bool((vals > floor).any())
    has_neg = bool((vals < -floor).any())
    near_box = False
    if box_mask_field is not None:
        bw = box_mask_field.sample(pts, mode="clamp")
        near_box = bool((bw < 0.5).any())
    if has_pos and has_neg:
        return KIND_TP
    if near_box:
        return KIND_BOX
    return KIND_PLUS if has_pos else KIND_MINUS


def snap_to_boundary(point, curves) -> np.ndarray:
    """Nearest extracted-boundary point to a nominal center (fits require
    centers on the discrete free boundary, which sits O(h) off analytic
    positions)."""
    point = _as_point(point)
    best, dist = point, np.inf
    for c in curves:
        d = np.hypot(*(c.points - point).T)
        k = int(np.argmin(d))
        if d[k] < dist:
            dist = float(d[k])
            best = c.points[k]
    return np.asarray(best, dtype=float)


def refine_boundary_point(u: ScalarField2D, p, sign: int = +1,
                          max_step: float = 3.0) -> np.ndarray:
    """Sub-cell boundary location: walk along the local gradient of the
    phase (sign * u) and extrapolate the ramp root from samples clear of the
    kink smear (the raw marching-squares contour hugs the outer fringe of
    the support)."""
    p = _as_point(p)
    h = u.spacing
    gx, gy = u.gradient()
    gxf = ScalarField2D(gx, u.center, h)
    gyf = ScalarField2D(gy, u.center, h)
    g = sign * np.array([float(gxf.sample(p, mode="clamp")),
                         float(gyf.sample(p, mode="clamp"))])
    nn = np.hypot(g[0], g[1])
    if nn < 1e-12:
        return p
    g /= nn
    t1, t2 = 1.5 * h, 2.5 * h
    lo = u.center - u.half_width
    hi = u.center + u.half_width
    v1 = sign * float(u.sample(np.clip(p + t1 * g, lo, hi), mode="clamp"))
    v2 = sign * float(u.sample(np.clip(p + t2 * g, lo, hi), mode="clamp"))
    if v2 > v1 > 0.0:
        root = t1 - v1 * (t2 - t1) / (v2 - v1)
        root = float(np.clip(root, -max_step * h, max_step * h))
        return p + root * g
    return p


def fit_blowup(u: ScalarField2D, x0, r: float, coeffs: CoeffData | None = None,
               kind: str = KIND_PLUS, n_fit: int = 65, n_dirs: int = 720,
               reject_rel: float = FIT_REJECT_REL,
               fit_offset: bool = False) -> BlowupFit:
    """Least-squares half-plane (or two-plane) fit of the rescaled field.

    The direction search runs over A(x0)^{-1/2}-transformed unit directions
    (720 then golden-section refinement); slopes are closed-form given the
    direction.  Consistency deltas compare the stretched-frame slope(s)
    against the measure weights.  With fit_offset the boundary offset along
    the normal is fitted too (a few cells), absorbing the half-cell
    uncertainty of centers that come from an extracted contour.
    """
    x0 = _as_point(x0)
    ur = rescale(u, x0, r, n_fit)
    X, Y = ur.meshgrid()
    w = ur.disk_weights(np.zeros(2), 1.0).ravel()
    vals = ur.values.ravel()
    A_half = np.eye(2)
    if coeffs is not None:
        A_half = matrix_sqrt(coeffs.A_at(x0))
    A_inv_half = np.linalg.inv(A_half)
    two_sided = kind == KIND_TP
    if fit_offset:
        offsets = np.linspace(-1.5, 1.5, 13) * u.spacing / r
    else:
        offsets = np.array([0.0])

    P = np.stack([X.ravel(), Y.ravel()], axis=-1)

    def score(angles):
        nus = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
        dirs = nus @ A_inv_half.T          # stretched directions
        best = None
        for b in offsets:
            S = P @ dirs.T - b             # (cells, n_angles)
            Sp = np.maximum(S, 0.0)
            wp = w[:, None]
            mu_p = np.maximum((vals[:, None] * Sp * wp).sum(0)
                              / np.maximum((Sp * Sp * wp).sum(0), 1e-300), 0.0)
            res2 = ((vals[:, None] - mu_p * Sp) ** 2 * wp).sum(0)
            mu_m = np.zeros_like(mu_p)
            if two_sided:
                Sm = np.minimum(S, 0.0)
                mu_m = np.maximum((vals[:, None] * Sm * wp).sum(0)
                                  / np.maximum((Sm * Sm * wp).sum(0), 1e-300), 0.0)
                res2 = ((vals[:, None] - mu_p * Sp - mu_m * Sm) ** 2 * wp).sum(0)
            if best is None or res2.min() < best[0].min():
                best = (res2, mu_p, mu_m, np.full_like(mu_p, b))
        return best

    angles = 2.0 * np.pi * np.arange(n_dirs) / n_dirs
    res2, mu_p, mu_m, _ = score(angles)
    kbest = int(np.argmin(res2))
    # golden-section refinement around the best direction
    lo = angles[kbest] - 2.0 * np.pi / n_dirs
    hi = angles[kbest] + 2.0 * np.pi / n_dirs
    gr = 0.5 * (np.sqrt(5.0) - 1.0)
    for _ in range(24):
        m1 = hi - gr * (hi - lo)
        m2 = lo + gr * (hi - lo)
        r1 = score(np.array([m1]))[0]
        r2 = score(np.array([m2]))[0]
        if r1[0] <= r2[0]:
            hi = m2
        else:
            lo = m1
    ang = 0.5 * (lo + hi)
    res2b, mu_pb, mu_mb, b_best = score(np.array([ang]))
    h2 = ur.spacing ** 2
    residual = float(np.sqrt(res2b[0] * h2))
    nu0 = np.array([np.cos(ang), np.sin(ang)])
    wdir = A_inv_half @ nu0
    nrm = np.hypot(wdir[0], wdir[1])
    nu_unit = wdir / nrm
    mu_plus_eff = float(mu_pb[0] * nrm)   # slope along the unit normal
    mu_minus_eff = float(mu_mb[0] * nrm)
    b_unit = float(b_best[0]) / nrm   # zero set at x.nu_unit = b_unit (rescaled)
    model = HalfPlaneModel(mu_plus_eff, nu_unit, mu_minus_eff)
    model_vals = mu_plus_eff * np.maximum(P @ nu_unit - b_unit, 0.0) \
        + mu_minus_eff * np.minimum(P @ nu_unit - b_unit, 0.0)
    model_norm = float(np.sqrt((model_vals ** 2 * w).sum() * h2))
    accepted = residual <= reject_rel * max(model_norm, 1e-300)

    # stretched-frame slopes mu_A = mu_eff * |A^{1/2} nu_unit|
    stretch = float(np.linalg.norm(A_half @ nu_unit))
    mu_A_p = mu_plus_eff * stretch
    mu_A_m = mu_minus_eff * stretch
    deltas = {}
    if coeffs is not None:
        if kind == KIND_TP:
            qp = coeffs.q_at(x0, "tp_plus")
            qm = coeffs.q_at(x0, "tp_minus")
            deltas["tp_balance"] = abs((mu_A_p ** 2 - mu_A_m ** 2) - (qp - qm))
            deltas["tp_scale"] = qp + qm
        elif kind == KIND_BOX:
            qo = coeffs.q_at(x0, "op")
            deltas["constrained_lower_bound"] = max(0.0, np.sqrt(qo) - mu_A_p)
            deltas["q_op"] = qo
        else:
            qo = coeffs.q_at(x0, "op")
            deltas["op_consistency"] = abs(mu_A_p ** 2 - qo)
            deltas["q_op"] = qo
    return BlowupFit(model, residual, accepted, deltas, mu_A_p, mu_A_m,
                     offset_to_boundary=b_unit * r)


def extract_free_boundary(u: ScalarField2D, box_mask_field: ScalarField2D = None,
                          fit_radius: float | None = None,
                          coeffs: CoeffData | None = None,
                          fit_stride: int = 1, max_fit_points: int = 400,
                          n_fit: int = 49, n_dirs: int = 360,
                          refine_centers: bool = True,
                          usable_radius: float | None = None) -> list:
    """Marching-squares boundary of {u > 0} (and {u < 0} for signed fields)
    with per-point classification and half-plane fits.

    Returns a list of FreeBoundaryCurve.  Points whose fit ball leaves the
    domain keep fit=None.  An empty level set gives an empty list.
    """
    floor = max(u.positivity_floor(), 1e-300)
    curves = []
    specs = [(+1, floor)]
    if u.sign_mode == "signed" and (u.values < -floor).any():
        specs.append((-1, floor))
    for sign, flo in specs:
        vals = sign * u.values
        if not (vals > flo).any():
            continue
        contours = skmeasure.find_contours(vals, flo)
        for cont in contours:
            if cont.shape[0] < 3:
                continue
            pts = np.empty_like(cont)
            pts[:, 0] = u.center[0] + (cont[:, 0] - 0.5 * (u.n - 1)) * u.spacing
            pts[:, 1] = u.center[1] + (cont[:, 1] - 0.5 * (u.n - 1)) * u.spacing
            closed = bool(np.allclose(cont[0], cont[-1]))
            kinds = [_classify_point(u, p, box_mask_field) for p in pts]
            fits = [None] * len(pts)
            stride = max(fit_stride, int(np.ceil(len(pts) / max_fit_points)))
            if fit_radius is not None:
                for k in range(0, len(pts), stride):
                    p = pts[k]
                    if np.abs(p - u.center).max() + fit_radius > u.half_width:
                        continue
                    if usable_radius is not None and \
                            np.hypot(*(p - u.center)) + fit_radius > usable_radius:
                        continue
                    kind = kinds[k] if sign > 0 else KIND_MINUS
                    center = refine_boundary_point(u, p, sign) if refine_centers else p
                    try:
                        fits[k] = fit_blowup(u, center, fit_radius, coeffs, kind,
                                             n_fit=n_fit, n_dirs=n_dirs)
                    except RejectedInput:
                        pass
            curves.append(FreeBoundaryCurve(pts, kinds, fits, closed, sign))
    return curves


@dataclass
class ConvergenceReport:
    rate: RateFit
    deviations: np.ndarray
    excess_values: np.ndarray
    dirichlet_values: np.ndarray
    limit_fit: BlowupFit
    at_limit: bool


def blowup_convergence(u: ScalarField2D, x0, radii, coeffs=None,
                       kind: str = KIND_PLUS, n_out: int = 97,
                       radius_cap: float | None = None,
                       at_limit_tol: float | None = None) -> ConvergenceReport:
    """Rate of convergence of the rescalings to the fitted limit profile.

    The limit is the half-plane fit at the smallest rung; the report carries
    the L-infinity deviations with their log-log rate, the excess along the
    ladder (homogeneity diagnostic) and the Dirichlet energies of the
    rescalings (strong-convergence diagnostic).
    """
    x0 = _as_point(x0)
    radii = np.asarray(radii, dtype=float)
    if radii.size < 5:
        raise RejectedInput("need at least 5 ladder rungs")
    if radius_cap is not None:
        radii = radii[radii < radius_cap]
        if radii.size < 5:
            raise RejectedInput("radius cap leaves fewer than 5 rungs")
    fit = fit_blowup(u, x0, radii[-1], coeffs, kind, n_fit=min(n_out, 65))
    devs = np.empty(radii.size)
    exs = np.empty(radii.size)
    dirs = np.empty(radii.size)
    for k, r in enumerate(radii):
        ur = rescale(u, x0, r, n_out)
        X, Y = ur.meshgrid()
        w = ur.disk_weights(np.zeros(2), 1.0)
        model_vals = fit.model(X, Y)
        devs[k] = np.abs((ur.values - model_vals))[w > 0.5].max()
        exs[k] = excess(ur)
        gx, gy = ur.gradient()
        dirs[k] = float(((gx * gx + gy * gy) * w).sum() * ur.spacing ** 2)
    if at_limit_tol is None:
        at_limit_tol = 1.5 * u.spacing * max(1.0, fit.model.mu_plus,
                                             fit.model.mu_minus)
    # rescaling at rung r amplifies grid-level noise by 1/r
    at_limit = bool(np.all(devs <= at_limit_tol * (1.0 + 1.0 / radii)))
    rate = loglog_fit(radii, devs) if not at_limit else \
        RateFit(float("nan"), float("nan"),
                (float(radii.min()), float(radii.max())), 0.0, status="at-limit")
    return ConvergenceReport(rate, devs, exs, dirs, fit, at_limit)


@dataclass
class FlatnessReport:
    rate: RateFit
    widths: np.ndarray
    used_radii: np.ndarray
    flagged_rungs: list
    eps_cone: float
    cone_radius: float


def flatness_profile(u: ScalarField2D, x0, radii, nu, mode: str = "OP",
                     n_out: int = 97) -> FlatnessReport:
    """Band half-widths w(r): {x.nu > w} inside the positivity set and (OP)
    the set empty below -w; for TP each phase contains its half-band.

    Log-log fit of w(r); rungs with w >= 1 are flagged and excluded.  The
    cone report gives the smallest aperture eps such that u > 0 on the
    upward cone and (OP) u = 0 on the downward cone within the largest
    fitting ball.
    """
    x0 = _as_point(x0)
    nu = _as_point(nu)
    nu = nu / np.hypot(nu[0], nu[1])
    radii = np.asarray(radii, dtype=float)
    widths = np.full(radii.size, np.nan)
    flagged = []
    for k, r in enumerate(radii):
        ur = rescale(u, x0, r, n_out)
        X, Y = ur.meshgrid()
        disk = np.hypot(X, Y) <= 1.0
        s = X * nu[0] + Y * nu[1]
        floor = ur.positivity_floor()
        pos = ur.values > floor
        w1 = float(np.max(s[disk & ~pos], initial=-1.0))
        if mode == "TP":
            neg = ur.values < -floor
            w2 = float(np.max(-s[disk & ~neg], initial=-1.0))
        else:
            w2 = float(np.max(-s[disk & pos], initial=-1.0))
        wr = max(w1, w2, 0.0)
        if wr >= 1.0 - 1e-9:
            flagged.append(k)
        else:
            widths[k] = wr
    keep = ~np.isnan(widths)
    floor_w = 2.0 * u.spacing / max(radii.min(), 1e-300)
    if keep.sum() >= 2 and np.nanmax(widths) > floor_w:
        rate = loglog_fit(radii[keep], np.maximum(widths[keep], 1e-12))
    else:
        rate = RateFit(float("nan"), float("nan"),
                       (float(radii.min()), float(radii.max())),
                       0.0, status="at-limit")

    # cone condition in the original coordinates
    rho = radii.max()
    X, Y = u.meshgrid()
    d = np.stack([X - x0[0], Y - x0[1]], axis=-1)
    dist = np.hypot(d[..., 0], d[..., 1])
    inside = (dist <= rho) & (dist > 2.0 * u.spacing)
    sdir = np.where(dist > 0, (d[..., 0] * nu[0] + d[..., 1] * nu[1]) / np.maximum(dist, 1e-300), 0.0)
    floor = u.positivity_floor()
    pos = u.values > floor
    need_pos = inside & (sdir > 0) & ~pos
    eps1 = float(np.max(sdir[need_pos], initial=0.0))
    if mode == "OP":
        bad_zero = inside & (sdir < 0) & pos
        eps2 = float(np.max(-sdir[bad_zero], initial=0.0))
    else:
        neg = u.values < -floor
        bad = inside & (sdir < 0) & ~neg
        eps2 = float(np.max(-sdir[bad], initial=0.0))
    return FlatnessReport(rate, widths, radii, flagged,
                          float(min(max(eps1, eps2) + 1e-12, 1.0)), rho)


@dataclass
class OscillationReport:
    nu_fit: RateFit
    mu_plus_fit: RateFit
    mu_minus_fit: RateFit | None
    n_pairs: int
    vector_recovery_constant: float   # empirical constant of the pair-distance identity


def oscillation_holder(curve: FreeBoundaryCurve, window=(0.0, np.inf),
                       n_bins: int = 10, quantile: float = 0.95) -> OscillationReport:
    """Hoelder exponents of the fitted normal and slope along the curve.

    Upper-envelope log-log regression over all accepted point pairs within
    the distance window; straight boundaries come back flagged "constant".
    """
    idx = curve.accepted_indices()
    if len(idx) < 10:
        raise RejectedInput("need at least 10 accepted fitted points")
    pts = curve.points[idx]
    nus = np.array([curve.fits[k].model.nu for k in idx])
    mups = np.array([curve.fits[k].model.mu_plus for k in idx])
    mums = np.array([curve.fits[k].model.mu_minus for k in idx])
    has_tp = bool((mums > 1e-12).any())

    ii, jj = np.triu_indices(len(idx), k=1)
    dist = np.hypot(*(pts[ii] - pts[jj]).T)
    sel = (dist > window[0]) & (dist < window[1])
    ii, jj, dist = ii[sel], jj[sel], dist[sel]
    if dist.size < 10:
        raise RejectedInput("distance window leaves fewer than 10 pairs")
    dnu = np.hypot(*(nus[ii] - nus[jj]).T)
    dmup = np.abs(mups[ii] - mups[jj])
    scale = max(np.median(mups), 1e-12)
    nu_fit = envelope_fit(dist, dnu, n_bins, quantile, const_tol=1e-6)
    mu_fit = envelope_fit(dist, dmup, n_bins, quantile, const_tol=1e-6 * scale)
    mum_fit = None
    if has_tp:
        dmum = np.abs(mums[ii] - mums[jj])
        mum_fit = envelope_fit(dist, dmum, n_bins, quantile, const_tol=1e-6 * scale)

    # empirical constant kappa in |v1 - v2|^2 = kappa * int_{B1} |(v1-v2).x|^2
    rng = np.random.default_rng(0)
    sub = rng.choice(dist.size, size=min(64, dist.size), replace=False)
    m = 41
    lin = np.linspace(-1, 1, m)
    GX, GY = np.meshgrid(lin, lin, indexing="ij")
    disk = GX ** 2 + GY ** 2 <= 1.0
    cell = (2.0 / (m - 1)) ** 2
    kappas = []
    for s in sub:
        v1 = mups[ii[s]] * nus[ii[s]]
        v2 = mups[jj[s]] * nus[jj[s]]
        dv = v1 - v2
        if np.hypot(dv[0], dv[1]) < 1e-12:
            continue
        integ = float((((dv[0] * GX + dv[1] * GY) ** 2)[disk]).sum() * cell)
        kappas.append(float(dv @ dv) / max(integ, 1e-300))
    kappa = float(np.median(kappas)) if kappas else float("nan")
    return OscillationReport(nu_fit, mu_fit, mum_fit, int(dist.size), kappa)


@dataclass
class GraphReport:
    s_grid: np.ndarray
    g_samples: np.ndarray
    g_prime: np.ndarray
    epigraph_ok: bool
    flagged_columns: list
    holder_scales: np.ndarray
    holder_seminorms: np.ndarray
    gprime_holder: RateFit | None


def reconstruct_graph(u: ScalarField2D, x0, delta: float, nu,
                      n_cols: int = 64, n_rows: int = 128,
                      abort_frac: float = 0.05) -> GraphReport:
    """Boundary graph g(s) = sup{t : u(x0 + s tau + t nu) > 0} per column in
    the rotated frame, with the epigraph property verified cell by cell.

    Columns whose positive samples are not an up-set (a zero gap inside the
    positive range) are flagged; more than abort_frac flagged columns aborts.
    """
    x0 = _as_point(x0)
    nu = _as_point(nu)
    nu = nu / np.hypot(nu[0], nu[1])
    tau = np.array([nu[1], -nu[0]])  # (tau, nu) is a rotated (e1, e2) frame
    s_grid = np.linspace(-delta, delta, n_cols)
    t_grid = np.linspace(-delta, delta, n_rows)
    SS, TT = np.meshgrid(s_grid, t_grid, indexing="ij")
    pts = x0 + SS[..., None] * tau + TT[..., None] * nu
    if not u.contains(pts.reshape(-1, 2)).all():
        raise RejectedInput("rotated square leaves the field domain")
    vals = u.sample(pts)
    floor = u.positivity_floor()
    pos = vals > floor
    dt = t_grid[1] - t_grid[0]
    g = np.empty(n_cols)
    flagged = []
    for k in range(n_cols):
        col = pos[k]
        if not col.any():
            g[k] = delta
            continue
        if col.all():
            g[k] = -delta
            continue
        first = int(np.argmax(col))            # lowest positive sample
        # epigraph: above the interpolation smear band the column must be a
        # single positive run reaching the top (holes there are real)
        skip_band = int(np.ceil(1.5 * u.spacing / dt))
        run_ok = bool(col[min(first + skip_band, n_rows - 1):].all())
        if not run_ok:
            flagged.append(k)
        if first == 0:
            g[k] = t_grid[0] - 0.5 * dt
            continue
        # the field is exactly zero below the boundary, so the root is
        # extrapolated down the ramp; start clear of the band smeared by the
        # interpolation kink (about 1.5 field cells above the boundary)
        skip = int(np.ceil(1.5 * u.spacing / dt))
        j0 = min(first + skip, n_rows - 2)
        v1 = vals[k, j0]
        v2 = vals[k, j0 + 1]
        if v2 > v1 > 0.0:
            root = t_grid[j0] - v1 * dt / (v2 - v1)
            # the clip only guards pathological profiles; the overshoot band
            # of the kink can flag samples up to ~2 field cells early
            g[k] = float(np.clip(root, t_grid[first - 1] - 2.0 * u.spacing,
                                 t_grid[first] + 2.0 * u.spacing))
        else:
            g[k] = t_grid[first] - 0.5 * dt
    epigraph_ok = len(flagged) == 0
    if len(flagged) > abort_frac * n_cols:
        raise RejectedInput(
            f"{len(flagged)} of {n_cols} columns violate the epigraph property")
    ds = s_grid[1] - s_grid[0]
    gp = np.gradient(g, ds, edge_order=1)
    scales = []
    seminorms = []
    npts = n_cols
    for lag in (1, 2, 4, 8, 16):
        if lag >= npts:
            break
        dgp = np.abs(gp[lag:] - gp[:-lag])
        scales.append(lag * ds)
        seminorms.append(float(dgp.max()))
    scales = np.array(scales)
    seminorms = np.array(seminorms)
    fit = None
    if seminorms.max() > 1e-10:
        fit = loglog_fit(scales, np.maximum(seminorms, 1e-14))
    return GraphReport(s_grid, g, gp, epigraph_ok, flagged, scales,
                       seminorms, fit)


def differentiability_check(u: ScalarField2D, x0, r0: float,
                            model: HalfPlaneModel, gamma: float,
                            exclude_cells: float = 2.0) -> float:
    """Sup over the positive phase in B_r0(x0) of
    |u_+ - mu_+ (x - x0) . nu| / |x - x0|^{1+gamma}, excluding the noisy
    h-neighborhood of the center."""
    x0 = _as_point(x0)
    X, Y = u.meshgrid()
    d = np.hypot(X - x0[0], Y - x0[1])
    floor = u.positivity_floor()
    sel = (d <= r0) & (d > exclude_cells * u.spacing) & (u.values > floor)
    if not sel.any():
        raise RejectedInput("no positive phase inside the ball")
    up = np.maximum(u.values, 0.0)
    lin = model.mu_plus * ((X - x0[0]) * model.nu[0] + (Y - x0[1]) * model.nu[1])
    quot = np.abs(up - lin)[sel] / d[sel] ** (1.0 + gamma)
    return float(quot.max())


@dataclass
class FlatnessCertificate:
    geometric_ok: bool
    geometric_worst: float
    coeff_ok: bool
    coeff_worst: float
    f_ok: bool
    f_worst: float
    gradient_ok: bool
    gradient_fraction_ok: float
    gradient_worst: float

    @property
    def all_ok(self) -> bool:
        return self.geometric_ok and self.coeff_ok and self.f_ok and self.gradient_ok

    def to_json(self) -> str:
        return json.dumps({
            "geometric_ok": self.geometric_ok, "geometric_worst": self.geometric_worst,
            "coeff_ok": self.coeff_ok, "coeff_worst": self.coeff_worst,
            "f_ok": self.f_ok, "f_worst": self.f_worst,
            "gradient_ok": self.gradient_ok,
            "gradient_fraction_ok": self.gradient_fraction_ok,
            "gradient_worst": self.gradient_worst, "all_ok": self.all_ok},
            sort_keys=True)


def flatness_certificate(u: ScalarField2D, nu, eps: float,
                         coeffs: CoeffData | None = None,
                         grad_tol_cells: float = 3.0) -> FlatnessCertificate:
    """Check the flatness hypotheses on the unit ball: the geometric sandwich
    max(0, x.nu - eps) <= u <= max(0, x.nu + eps), the coefficient bounds
    (|f| <= eps, |a_ij - delta_ij| <= eps^2), and the gradient pinching
    |grad u| in [1 - eps^2, 1 + eps^2] on the extracted boundary in the
    classical sense (one-sided stencils from the positive side)."""
    nu = _as_point(nu)
    nu = nu / np.hypot(nu[0], nu[1])
    X, Y = u.meshgrid()
    disk = np.hypot(X, Y) <= 1.0
    s = X * nu[0] + Y * nu[1]
    lower = np.maximum(s - eps, 0.0)
    upper = np.maximum(s + eps, 0.0)
    slack = 1e-9 * max(1.0, np.abs(u.values).max())
    viol = np.maximum(lower - u.values, u.values - upper)[disk]
    geometric_worst = float(viol.max(initial=0.0))
    geometric_ok = geometric_worst <= slack

    coeff_worst = 0.0
    f_worst = 0.0
    if coeffs is not None:
        zf = ScalarField2D(np.zeros_like(u.values), u.center, u.spacing)
        a11, a12, a22 = coeffs.a_fields_on(zf)
        coeff_worst = float(max(np.abs(a11 - 1.0)[disk].max(),
                                np.abs(a22 - 1.0)[disk].max(),
                                np.abs(a12)[disk].max()))
        X2, Y2 = zf.meshgrid()
        fp = ScalarField2D(coeffs.f_plus, coeffs.center, coeffs.spacing) \
            .sample(np.stack([X2, Y2], axis=-1), mode="clamp")
        fm = ScalarField2D(coeffs.f_minus, coeffs.center, coeffs.spacing) \
            .sample(np.stack([X2, Y2], axis=-1), mode="clamp")
        f_worst = float(max(np.abs(fp)[disk].max(), np.abs(fm)[disk].max()))
    coeff_ok = coeff_worst <= eps * eps + 1e-12
    f_ok = f_worst <= eps + 1e-12

    # classical gradient check on the extracted boundary
    curves = extract_free_boundary(u)
    gx, gy = u.gradient()
    gxf = ScalarField2D(gx, u.center, u.spacing)
    gyf = ScalarField2D(gy, u.center, u.spacing)
    h = u.spacing
    n_ok = 0
    n_tot = 0
    worst = 0.0
    tol = grad_tol_cells * h
    for curve in curves:
        for p in curve.points[::2]:
            if np.hypot(p[0], p[1]) > 1.0 - 4.0 * h:
                continue
            gdir = np.array([float(gxf.sample(p, mode="clamp")),
                             float(gyf.sample(p, mode="clamp"))])
            nn = np.hypot(gdir[0], gdir[1])
            if nn < 1e-12:
                continue
            gdir /= nn
            p1 = p + h * gdir
            p2 = p + 2.0 * h * gdir
            slope = (float(u.sample(p2, mode="clamp"))
                     - float(u.sample(p1, mode="clamp"))) / h
            n_tot += 1
            dev = max(1.0 - eps * eps - slope, slope - (1.0 + eps * eps))
            worst = max(worst, dev)
            if dev <= tol:
                n_ok += 1
    gradient_ok = n_tot > 0 and n_ok == n_tot
    frac = n_ok / n_tot if n_tot else float("nan")
    return FlatnessCertificate(geometric_ok, geometric_worst, coeff_ok,
                               coeff_worst, f_ok, f_worst, gradient_ok,
                               frac, worst)
