"""Discrete minimizers of the one-phase and two-phase functionals, the first
Dirichlet eigenpair, and the certification checks run on them.

The measure term is handled by a smoothed Heaviside whose width shrinks to
one cell (projected gradient descent finds the basin), followed by a
sharpening pass that solves the PDE on the current positivity set and moves
the boundary with the signed speed |grad u| - sqrt(Q).  Local minimality is
certified by descent stagnation plus a harmonic-replacement test; global
minimality is not claimed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage as ndi
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .energy import energy_J, one_hom_extension
from .errors import RejectedInput
from .grids import CircleTrace, CoeffData, ScalarField2D, _as_point
from .pde import (fb_sweep_one_phase, fb_sweep_two_phase, solve_dirichlet,
                  tp_initial_labels)

COLLAR_CELLS = 2.2  # Dirichlet collar width (cells) inside the unit circle


@dataclass(frozen=True)
class SolveConfig:
    """Solver knobs: grid size, smoothing schedule, iteration budget."""

    n: int = 161
    beta0_cells: float = 4.0      # initial smoothing width, in cells
    beta_decay: float = 0.5
    max_outer: int = 3
    n_inner: int = 150
    tau: float = 0.1
    sharpen_sweeps: int = 240
    hysteresis: float = 0.1
    tol_energy: float = 1e-5
    tol_replacement: float = 5e-3
    seed: int = 0

    def __post_init__(self):
        if self.beta0_cells < 1.0:
            raise RejectedInput("smoothing floor is one cell; beta0_cells >= 1")
        if self.tol_energy <= 0 or self.tol_replacement <= 0:
            raise RejectedInput("tolerances must be positive")
        if self.n < 17:
            raise RejectedInput("solver grid too small")


@dataclass
class SolveInfo:
    energy_history: list
    restarts: list
    L_measured: float = 0.0
    final_energy: float = float("nan")
    replacement_margins: list = field(default_factory=list)
    stagnated: bool = False
    flags: list = field(default_factory=list)
    sweep_history: list = field(default_factory=list)
    seed: int = 0

    def to_dict(self):
        return {"energy_history": [float(e) for e in self.energy_history],
                "restarts": self.restarts, "L_measured": self.L_measured,
                "final_energy": self.final_energy,
                "replacement_margins": self.replacement_margins,
                "stagnated": self.stagnated, "flags": self.flags,
                "sweep_history": self.sweep_history, "seed": self.seed}


def _as_trace(datum, n_theta=256) -> CircleTrace:
    if isinstance(datum, CircleTrace):
        return datum
    return CircleTrace.from_function(datum, n_theta)


def _graph_laplacian_apply(u):
    out = -4.0 * u
    out[1:, :] += u[:-1, :]
    out[:-1, :] += u[1:, :]
    out[:, 1:] += u[:, :-1]
    out[:, :-1] += u[:, 1:]
    return out


def _discrete_objective(u, free, h, q1, q2, beta):
    h2 = h * h
    dir_part = (np.diff(u, axis=0) ** 2).sum() + (np.diff(u, axis=1) ** 2).sum()
    pos = np.clip(u / beta, 0.0, 1.0)
    obj = dir_part + h2 * float((q1 * pos)[free].sum())
    if q2 is not None:
        neg = np.clip(-u / beta, 0.0, 1.0)
        obj += h2 * float((q2 * neg)[free].sum())
    return obj


def _pgd_phase(u, free, collar_vals, h, q1, q2, cfg: SolveConfig, zero_mask=None):
    energies, restarts = [], []
    beta = cfg.beta0_cells * h
    h2 = h * h

    def block(beta):
        nonlocal u
        for _ in range(cfg.n_inner):
            g = -2.0 * _graph_laplacian_apply(u)
            g += q1 * h2 / beta * ((u > 0.0) & (u < beta))
            if q2 is not None:
                g -= q2 * h2 / beta * ((u < 0.0) & (u > -beta))
            u -= cfg.tau * np.where(free, g, 0.0)
            if q2 is None:
                np.maximum(u, 0.0, out=u)
            if zero_mask is not None:
                u[zero_mask] = 0.0
            u[~free] = collar_vals[~free]
        energies.append(_discrete_objective(u, free, h, q1, q2, beta))

    for outer in range(cfg.max_outer):
        block(beta)
        if beta > h:
            beta = max(beta * cfg.beta_decay, h)
            restarts.append(len(energies))
    # repeat floor-width blocks until the objective stagnates at fixed beta
    for _ in range(8):
        prev = energies[-1]
        block(beta)
        if abs(energies[-1] - prev) <= cfg.tol_energy * max(abs(prev), 1.0):
            break
    return u, energies, restarts


def solve_one_phase(datum, coeffs: CoeffData, constraint: str | None = None,
                    cfg: SolveConfig | None = None):
    """Minimize the one-phase functional on the unit disk with a trace datum.

    constraint "upper_half" restricts competitors to {y > 0} (the field is
    zero on the lower half-plane).  Returns (field, SolveInfo); the field
    covers [-1,1]^2 with the one-homogeneous extension of the datum outside
    the Dirichlet collar.
    """
    cfg = cfg or SolveConfig()
    c = _as_trace(datum)
    if c.samples.min() < -1e-12 * max(1.0, np.abs(c.samples).max()):
        raise RejectedInput("one-phase datum must be nonnegative")
    z = one_hom_extension(c, cfg.n)
    h = z.spacing
    X, Y = z.meshgrid()
    rho = np.hypot(X, Y)
    free = rho < 1.0 - COLLAR_CELLS * h
    collar_vals = z.values.copy()
    zero_mask = None
    if constraint == "upper_half":
        zero_mask = Y <= 0.0
        if np.abs(collar_vals[zero_mask & (rho >= 1.0 - COLLAR_CELLS * h)
                              & (rho <= 1.0 + h)]).max(initial=0.0) \
                > 1e-9 * max(1.0, np.abs(c.samples).max()):
            raise RejectedInput("datum incompatible with the upper-half constraint")
        collar_vals[zero_mask] = 0.0
        free = free & ~zero_mask
    elif constraint is not None:
        raise RejectedInput(f"unknown constraint {constraint!r}")

    zf = ScalarField2D(np.zeros_like(collar_vals), np.zeros(2), h)
    q_grid = coeffs.q_field_on(zf, "op")
    sqrt_q = np.sqrt(q_grid)

    u = collar_vals.copy()
    np.maximum(u, 0.0, out=u)
    u, energies, restarts = _pgd_phase(u, free, collar_vals, h, q_grid, None,
                                       cfg, zero_mask)
    floor = 1e-12 * max(1.0, np.abs(c.samples).max())
    support = (u > max(floor, 0.05 * h * sqrt_q.min())) & free
    u, support, sweeps = fb_sweep_one_phase(
        support, free, collar_vals, sqrt_q, h,
        n_sweeps=cfg.sharpen_sweeps, hysteresis=cfg.hysteresis)
    np.maximum(u, 0.0, out=u)

    fld = ScalarField2D(u, np.zeros(2), h, sign_mode="nonnegative")
    fld = fld.with_lipschitz()
    info = SolveInfo(energies, restarts, seed=cfg.seed)
    info.sweep_history = sweeps
    info.L_measured = fld.lipschitz_bound
    info.final_energy = energy_J(fld, (0, 0), 1.0, coeffs, "OP").total
    pgd_plateau = len(energies) >= 2 and abs(energies[-1] - energies[-2]) \
        <= cfg.tol_energy * max(abs(energies[-1]), 1.0)
    settled = bool(sweeps) and len(sweeps) < cfg.sharpen_sweeps
    info.stagnated = pgd_plateau or settled
    if not settled:
        info.flags.append("sharpening did not settle within the sweep budget")
    _replacement_test(fld, coeffs, "OP", info, cfg, zero_mask)
    return fld, info


def solve_two_phase(datum, coeffs: CoeffData, cfg: SolveConfig | None = None):
    """Minimize the two-phase functional on the unit disk with a signed datum."""
    cfg = cfg or SolveConfig()
    c = _as_trace(datum)
    z = one_hom_extension(c, cfg.n)
    h = z.spacing
    X, Y = z.meshgrid()
    rho = np.hypot(X, Y)
    free = rho < 1.0 - COLLAR_CELLS * h
    collar_vals = z.values.copy()
    zf = ScalarField2D(np.zeros_like(collar_vals), np.zeros(2), h)
    qp = coeffs.q_field_on(zf, "tp_plus")
    qm = coeffs.q_field_on(zf, "tp_minus")

    u = collar_vals.copy()
    u, energies, restarts = _pgd_phase(u, free, collar_vals, h, qp, qm, cfg)
    floor = 1e-12 * max(1.0, np.abs(c.samples).max())
    thr_p = max(floor, 0.05 * h * float(np.sqrt(qp.min())))
    thr_m = max(floor, 0.05 * h * float(np.sqrt(qm.min())))
    label = tp_initial_labels(u, thr_p, thr_m, free)
    u, label, sweeps = fb_sweep_two_phase(
        label, free, collar_vals, np.sqrt(qp), np.sqrt(qm), h,
        n_sweeps=cfg.sharpen_sweeps, hysteresis=cfg.hysteresis)

    fld = ScalarField2D(u, np.zeros(2), h, sign_mode="signed").with_lipschitz()
    info = SolveInfo(energies, restarts, seed=cfg.seed)
    info.sweep_history = sweeps
    info.L_measured = fld.lipschitz_bound
    info.final_energy = energy_J(fld, (0, 0), 1.0, coeffs, "TP").total
    pgd_plateau = len(energies) >= 2 and abs(energies[-1] - energies[-2]) \
        <= cfg.tol_energy * max(abs(energies[-1]), 1.0)
    settled = bool(sweeps) and len(sweeps) < cfg.sharpen_sweeps
    info.stagnated = pgd_plateau or settled
    if not settled:
        info.flags.append("sharpening did not settle within the sweep budget")
    _replacement_test(fld, coeffs, "TP", info, cfg, None)
    return fld, info


def _replacement_test(fld, coeffs, mode, info: SolveInfo, cfg: SolveConfig,
                      zero_mask, n_balls: int = 8):
    """Harmonic replacement on random interior balls must not lower J by
    more than the tolerance (stationarity certificate)."""
    rng = np.random.default_rng(cfg.seed + 1)
    h = fld.spacing
    X, Y = fld.meshgrid()
    for _ in range(n_balls):
        x0 = rng.uniform(-0.5, 0.5, size=2)
        r = rng.uniform(0.1, 0.22)
        v = harmonic_replacement(fld, x0, r, zero_mask=zero_mask, mode=mode)
        J_u = energy_J(fld, x0, r, coeffs, mode).total
        J_v = energy_J(v, x0, r, coeffs, mode).total
        info.replacement_margins.append(float(J_v - J_u))
    worst = min(info.replacement_margins)
    scale = max(abs(info.final_energy), 1.0)
    if worst < -cfg.tol_replacement * scale:
        info.flags.append(
            f"harmonic replacement lowered J by {-worst:.3e} (not stationary)")


def harmonic_replacement(u: ScalarField2D, x0, r: float, zero_mask=None,
                         mode: str = "OP", keep_sign: bool = True) -> ScalarField2D:
    """Replace u inside B_r(x0) by the PDE solution with u's boundary values.

    In OP mode (or on the positive part) the replacement respects the sign
    constraint automatically by the maximum principle; with keep_sign the
    support structure is preserved by solving per phase.
    """
    x0 = _as_point(x0)
    X, Y = u.meshgrid()
    ball = (X - x0[0]) ** 2 + (Y - x0[1]) ** 2 < r * r
    if zero_mask is not None:
        ball = ball & ~zero_mask
    vals = u.values.copy()
    if mode == "OP" or not keep_sign:
        act = ball.copy()
        if mode == "OP" and keep_sign:
            # replace only inside the positive phase to preserve supports
            act = ball & (u.values > u.positivity_floor())
        out = solve_dirichlet(act, vals, u.spacing)
        if mode == "OP":
            np.maximum(out, 0.0, out=out)
    else:
        floor = u.positivity_floor()
        pos = ball & (u.values > floor)
        neg = ball & (u.values < -floor)
        outp = solve_dirichlet(pos, np.maximum(vals, 0.0), u.spacing)
        outm = solve_dirichlet(neg, np.maximum(-vals, 0.0), u.spacing)
        out = np.where(pos, outp, np.where(neg, -outm, vals))
    return ScalarField2D(out, u.center.copy(), u.spacing, sign_mode=u.sign_mode)


# ---------------------------------------------------------------------------
# Dirichlet eigenpair


def laplacian_matrix(mask: np.ndarray, h: float):
    """5-point Dirichlet Laplacian on the masked nodes."""
    n, m = mask.shape
    idx = -np.ones((n, m), dtype=int)
    ii, jj = np.nonzero(mask)
    idx[ii, jj] = np.arange(ii.size)
    rows, cols, vals = [], [], []
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ni, nj = ii + di, jj + dj
        inside = (ni >= 0) & (ni < n) & (nj >= 0) & (nj < m)
        nidx = np.where(inside, idx[np.clip(ni, 0, n - 1), np.clip(nj, 0, m - 1)], -1)
        link = nidx >= 0
        rows.append(np.nonzero(link)[0])
        cols.append(nidx[link])
        vals.append(np.full(link.sum(), -1.0 / (h * h)))
    A = sp.csr_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(ii.size, ii.size))
    return A + sp.diags(np.full(ii.size, 4.0 / (h * h))), (ii, jj)


def solve_eigen(mask: np.ndarray, h: float, cfg: SolveConfig | None = None,
                center=(0.0, 0.0), potential: np.ndarray | None = None,
                v0: np.ndarray | None = None, max_iter: int = 200,
                tol: float = 1e-12):
    """First Dirichlet eigenpair on a mask by inverse power iteration.

    Returns (lambda1, field, info).  Disconnected masks are reduced to the
    component of largest measure and flagged.  The eigenfunction is
    nonnegative and normalized to int u^2 = 1.
    """
    cfg = cfg or SolveConfig()
    mask = np.asarray(mask, dtype=bool)
    if mask.sum() < 4:
        raise RejectedInput("mask too small for an eigenpair")
    flags = []
    labels, n_comp = ndi.label(mask)
    if n_comp > 1:
        sizes = ndi.sum_labels(np.ones_like(labels), labels, np.arange(1, n_comp + 1))
        keep = 1 + int(np.argmax(sizes))
        mask = labels == keep
        flags.append(f"mask disconnected; using largest of {n_comp} components")
    A, (ii, jj) = laplacian_matrix(mask, h)
    if potential is not None:
        A = A + sp.diags(potential[ii, jj])
    lu = spla.splu(A.tocsc())
    rng = np.random.default_rng(cfg.seed)
    v = np.abs(rng.standard_normal(ii.size)) if v0 is None else v0[ii, jj].copy()
    v /= np.linalg.norm(v)
    lam_prev = np.inf
    for it in range(max_iter):
        v = lu.solve(v)
        v /= np.linalg.norm(v)
        lam = float(v @ (A @ v))
        if abs(lam - lam_prev) <= tol * abs(lam):
            break
        lam_prev = lam
    if v.sum() < 0:
        v = -v
    if v.min() < -1e-8 * max(abs(v).max(), 1e-30):
        flags.append("eigenvector has a sign change beyond tolerance")
    v = np.maximum(v, 0.0)
    v /= np.sqrt((v * v).sum() * h * h)  # int u^2 = 1
    vals = np.zeros(mask.shape)
    vals[ii, jj] = v
    fld = ScalarField2D(vals, _as_point(center), h, sign_mode="nonnegative")
    rq = float(v @ (A @ v)) * h * h / float((v * v).sum() * h * h)
    info = {"iterations": it + 1, "rayleigh": rq, "flags": flags}
    return lam, fld, info


# ---------------------------------------------------------------------------
# Almost-minimality and non-degeneracy checks


@dataclass(frozen=True)
class AlmostMinReport:
    margins: list
    worst_margin: float
    smallest_C: float
    passed: bool
    competitors: list


def default_competitors(u: ScalarField2D, x0, r: float, mode: str,
                        seed: int = 0, zero_mask=None):
    """Generator of admissible competitors agreeing with u outside B_r(x0):
    harmonic replacement, truncation, local inflation, random perturbation."""
    x0 = _as_point(x0)
    X, Y = u.meshgrid()
    d2 = (X - x0[0]) ** 2 + (Y - x0[1]) ** 2
    ball = d2 < r * r
    if zero_mask is not None:
        ball = ball & ~zero_mask
    cut = np.where(ball, np.cos(0.5 * np.pi * np.sqrt(d2) / r) ** 2, 0.0)
    L = u.measured_lipschitz()
    yield "harmonic_replacement", harmonic_replacement(u, x0, r, zero_mask, mode)
    t = 0.1 * L * r
    if mode == "OP":
        trunc = np.maximum(u.values - t * cut, 0.0)
    else:
        trunc = np.sign(u.values) * np.maximum(np.abs(u.values) - t * cut, 0.0)
    yield "truncation", ScalarField2D(trunc, u.center.copy(), u.spacing,
                                      sign_mode=u.sign_mode)
    yield "inflation", ScalarField2D(u.values * (1.0 + 0.2 * cut),
                                     u.center.copy(), u.spacing,
                                     sign_mode=u.sign_mode)
    rng = np.random.default_rng(seed)
    bump_c = x0 + rng.uniform(-0.3, 0.3, 2) * r
    w = np.exp(-((X - bump_c[0]) ** 2 + (Y - bump_c[1]) ** 2) / (0.1 * r) ** 2)
    pert = u.values + 0.05 * L * r * w * cut
    if mode == "OP":
        pert = np.maximum(pert, 0.0)
    if zero_mask is not None:
        pert = np.where(zero_mask, 0.0, pert)
    yield "random_perturbation", ScalarField2D(pert, u.center.copy(), u.spacing,
                                               sign_mode=u.sign_mode)


def verify_almost_min(u: ScalarField2D, coeffs: CoeffData, mode: str, x0,
                      r: float, competitors=None, C: float = 1.0,
                      delta: float = 1.0, flavor: str = "standard",
                      lam: float | None = None, tol: float = 1e-9,
                      seed: int = 0, zero_mask=None, d: int = 2) -> AlmostMinReport:
    """Check J(u) <= (1 + C r^delta) J(v) + C r^{2+delta} over competitors.

    flavor "standard" uses the functional on both sides; flavor "eigen"
    multiplies only the Dirichlet part of the competitor, with the additive
    constant C2 = lam * C (normalization slack of the eigen problem), and
    exponent delta = d + 2 implied by the L2 renormalization.
    """
    x0 = _as_point(x0)
    if competitors is None:
        competitors = default_competitors(u, x0, r, mode, seed, zero_mask)
    margins, names = [], []
    smallest_C = 0.0
    J_u = energy_J(u, x0, r, coeffs, mode).total
    X, Y = u.meshgrid()
    outside = np.hypot(X - x0[0], Y - x0[1]) > r
    for name, v in competitors:
        dev = np.abs(v.values - u.values)[outside]
        if dev.size and dev.max() > 1e-9 * max(1.0, np.abs(u.values).max()):
            raise RejectedInput(f"competitor {name} changes u outside the ball")
        if flavor == "eigen":
            dpow = d + 2
            e_v = energy_J(v, x0, r, coeffs, mode)
            rhs = (1.0 + C * r ** dpow) * e_v.dirichlet \
                + e_v.positive_measure_term + e_v.negative_measure_term \
                + (0.0 if lam is None else lam * C) * r ** dpow
            denom = r ** dpow * e_v.dirichlet + r ** dpow
        else:
            J_v = energy_J(v, x0, r, coeffs, mode).total
            rhs = (1.0 + C * r ** delta) * J_v + C * r ** (2.0 + delta)
            denom = r ** delta * J_v + r ** (2.0 + delta)
        margins.append(float(rhs - J_u))
        names.append(name)
        if denom > 0:
            if flavor == "eigen":
                lhs_gap = J_u - (e_v.dirichlet + e_v.positive_measure_term
                                 + e_v.negative_measure_term)
            else:
                lhs_gap = J_u - J_v
            smallest_C = max(smallest_C, lhs_gap / denom)
    scale = max(abs(J_u), 1.0)
    worst = min(margins) if margins else 0.0
    return AlmostMinReport(list(zip(names, margins)), worst, smallest_C,
                           worst >= -tol * scale, names)


@dataclass(frozen=True)
class NondegeneracyReport:
    entries: list   # (center, r, circle_integral, hypothesis, conclusion, violated)
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations


def nondegeneracy_check(u: ScalarField2D, coeffs, eta: float, eps_nd: float,
                        r0: float, centers, n_radii: int = 6,
                        n_theta: int = 128) -> NondegeneracyReport:
    """Test the implication: small circle average of the pulled-back field
    forces vanishing on the concentric eps*r ball.

    For each center and ladder radius, the circle integral of u o F_{x0} on
    the radius-r circle is compared with eta r^2; when it is smaller, the
    pulled-back field must vanish (positivity floor) on B_{eps r}.
    """
    if eta <= 0 or not (0.0 < eps_nd < 1.0):
        raise RejectedInput("need eta > 0 and eps_nd in (0,1)")
    from .geometry import matrix_sqrt
    radii = r0 * 0.7 ** np.arange(n_radii)
    floor = 10.0 * u.positivity_floor() + 1e-14
    th = 2.0 * np.pi * np.arange(n_theta) / n_theta
    circ = np.stack([np.cos(th), np.sin(th)], axis=-1)
    entries, violations = [], []
    for ctr in centers:
        ctr = _as_point(ctr)
        if isinstance(coeffs, CoeffData):
            S = matrix_sqrt(coeffs.A_at(ctr))
        else:
            S = matrix_sqrt(np.asarray(coeffs, dtype=float))
        for r in radii:
            pts = ctr + (r * circ) @ S.T
            if not u.contains(pts).all():
                continue
            integral = float(u.sample(pts).sum() * r * 2.0 * np.pi / n_theta)
            hyp = integral < eta * r * r
            concl = True
            if hyp:
                m = 24
                lin = np.linspace(-eps_nd * r, eps_nd * r, m)
                gx, gy = np.meshgrid(lin, lin, indexing="ij")
                keep = gx ** 2 + gy ** 2 <= (eps_nd * r) ** 2
                pts_in = ctr + np.stack([gx[keep], gy[keep]], axis=-1) @ S.T
                ok = u.contains(pts_in)
                concl = bool(np.abs(u.sample(pts_in[ok], mode="clamp")).max(
                    initial=0.0) <= floor)
            entry = (tuple(ctr), float(r), integral, bool(hyp), bool(concl),
                     bool(hyp and not concl))
            entries.append(entry)
            if hyp and not concl:
                violations.append(entry)
    return NondegeneracyReport(entries, violations)
