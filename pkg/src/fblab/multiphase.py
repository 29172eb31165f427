"""Optimal partitions: minimize the sum of first Dirichlet eigenvalues plus
volume terms over disjoint open subsets of a box.

Alternating minimization: each phase does penalized eigen-descent (the
disjointness penalty (1/eps_p) int u_i^2 u_j^2 decays on a halving schedule
until the overlap drops below tolerance), then supports are sharpened by a
level-set line search on the exact per-phase objective followed by trial
boundary sweeps with the speed |grad u| - sqrt(q); interface ties go to the
phase with the larger value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalFailure, RejectedInput
from .grids import ScalarField2D
from .pde import _shift, neighbors_in, phase_slopes
from .solvers import SolveConfig, laplacian_matrix, solve_eigen

TOL_NORM = 1e-8
TOL_OVERLAP = 1e-6


@dataclass
class MultiphaseState:
    """Phase eigenfunctions (each >= 0, int u^2 = 1), their eigenvalues,
    disjoint supports and the achieved energy."""

    fields: list
    lambdas: list
    supports: np.ndarray          # label array: -1 vacuum, i >= 0 phase index
    weights: list
    box_mask: np.ndarray
    spacing: float
    penalty_eps: float
    overlap: float
    energy: float
    energy_history: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def __post_init__(self):
        h2 = self.spacing ** 2
        for i, f in enumerate(self.fields):
            nrm = (f.values ** 2).sum() * h2
            if abs(nrm - 1.0) > 1e-4:
                raise RejectedInput(f"phase {i} normalization off by {nrm - 1.0:.2e}")
        if self.overlap > max(10.0 * TOL_OVERLAP, 1e-5):
            raise RejectedInput(f"phase overlap {self.overlap:.2e} above target")

    def phase_areas(self):
        h2 = self.spacing ** 2
        return [float((self.supports == i).sum() * h2) for i in range(len(self.fields))]

    def phase_energies(self):
        return [lam + q * a for lam, q, a in
                zip(self.lambdas, self.weights, self.phase_areas())]


def _overlap(us, h):
    tot = 0.0
    for i in range(len(us)):
        for j in range(i + 1, len(us)):
            tot += float((us[i] ** 2 * us[j] ** 2).sum() * h * h)
    return tot


def _eigen_step(mask, h, potential, v0, shift_solves=2):
    A, (ii, jj) = laplacian_matrix(mask, h)
    if potential is not None:
        A = A + sp.diags(potential[ii, jj])
    lu = spla.splu(A.tocsc())
    v = v0[ii, jj].copy()
    if np.linalg.norm(v) == 0.0:
        v = np.ones(ii.size)
    v /= np.linalg.norm(v)
    for _ in range(shift_solves):
        v = lu.solve(v)
        v /= np.linalg.norm(v)
    lam = float(v @ (A @ v))
    out = np.zeros(mask.shape)
    out[ii, jj] = np.maximum(v, 0.0)
    nrm = np.sqrt((out ** 2).sum() * h * h)
    if nrm <= 0:
        raise NumericalFailure("eigen step collapsed")
    return lam, out / nrm


def _phase_objective(support, h, q):
    if support.sum() < 4:
        return np.inf, None, np.inf
    lam, fld, _ = solve_eigen(support, h)
    area = float(support.sum() * h * h)
    return lam + q * area, fld, lam


def _level_set_search(u, allowed, h, q, n_tau=8):
    """Pick the superlevel set of u (within allowed) minimizing lam1 + q area."""
    umax = u.max()
    if umax <= 0:
        return None, np.inf
    best_S, best_E = None, np.inf
    for tau in np.linspace(0.02, 0.6, n_tau) * umax:
        S = (u > tau) & allowed
        E, _, _ = _phase_objective(S, h, q)
        if E < best_E:
            best_E, best_S = E, S
    return best_S, best_E


def triple_points(supports: list) -> list:
    """Cells whose 3x3 neighborhood meets at least three distinct supports."""
    counts = np.zeros(supports[0].shape, dtype=int)
    for S in supports:
        near = S.copy()
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                near |= _shift(S, di, dj, False)
        counts += near
    ii, jj = np.nonzero(counts >= 3)
    return list(zip(ii.tolist(), jj.tolist()))


def two_phase_box_contacts(supports: list, box_mask: np.ndarray) -> list:
    """Cells where two distinct supports and the box boundary meet a 3x3 block."""
    rim = box_mask & (neighbors_in(box_mask) < 4)
    counts = np.zeros(box_mask.shape, dtype=int)
    for S in supports:
        near = S.copy()
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                near |= _shift(S, di, dj, False)
        counts += near
    near_rim = rim.copy()
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            near_rim |= _shift(rim, di, dj, False)
    ii, jj = np.nonzero((counts >= 2) & near_rim)
    return list(zip(ii.tolist(), jj.tolist()))


def solve_multiphase(box_mask: np.ndarray, h: float, n: int, weights,
                     cfg: SolveConfig | None = None, n_outer: int = 14,
                     eps0: float = 0.5, sweeps: int = 40,
                     center=(0.0, 0.0)) -> MultiphaseState:
    """Alternating minimization for the n-phase partition problem.

    Returns a MultiphaseState with disjoint supports, per-phase eigenpairs
    computed on them, and the achieved energy sum(lam_i + q_i |S_i|).
    """
    cfg = cfg or SolveConfig()
    box_mask = np.asarray(box_mask, dtype=bool)
    q = [float(w) for w in (weights if np.ndim(weights) else [weights] * n)]
    if len(q) != n or min(q) <= 0:
        raise RejectedInput("need one positive weight per phase")
    rng = np.random.default_rng(cfg.seed)
    N, M = box_mask.shape
    X, Y = np.meshgrid(np.arange(N), np.arange(M), indexing="ij")
    ii, jj = np.nonzero(box_mask)
    flags = []

    # seeded Gaussian bumps at spread locations
    order = rng.permutation(ii.size)
    picks = order[np.linspace(0, ii.size - 1, n).astype(int)]
    us = []
    for k in range(n):
        ci, cj = ii[picks[k]], jj[picks[k]]
        g = np.exp(-((X - ci) ** 2 + (Y - cj) ** 2) / (0.08 * N) ** 2)
        g = np.where(box_mask, g, 0.0)
        us.append(g / np.sqrt((g ** 2).sum() * h * h))

    # relaxed phase: penalized eigen-descent on the box
    eps_p = eps0
    history = []
    for outer in range(n_outer):
        for i in range(n):
            V = np.zeros_like(us[i])
            for j in range(n):
                if j != i:
                    V += us[j] ** 2
            V /= eps_p
            lam, us[i] = _eigen_step(box_mask, h, V, us[i])
        ov = _overlap(us, h)
        relaxed = sum(float((np.gradient(ui, h)[0] ** 2
                             + np.gradient(ui, h)[1] ** 2).sum() * h * h)
                      for ui in us) + ov / eps_p
        history.append(relaxed)
        if ov < TOL_OVERLAP and outer >= 3:
            break
        eps_p = max(eps_p * 0.5, 1e-8)

    # sharpening: disjoint level-set supports, then trial boundary sweeps
    stack = np.stack(us)
    arg = np.argmax(stack, axis=0)
    supports = []
    for i in range(n):
        allowed = box_mask & (arg == i)
        S, _ = _level_set_search(us[i], allowed, h, q[i])
        if S is None or S.sum() < 9:
            flags.append(f"phase {i} collapsed; rerun advised with a different seed")
            S = allowed & (us[i] > 0.3 * max(us[i].max(), 1e-30))
        supports.append(S)

    lams = [0.0] * n
    flds = [None] * n
    for sweep in range(sweeps):
        changed = 0
        label = -np.ones(box_mask.shape, dtype=int)
        for i in range(n):
            label[supports[i]] = i
        for i in range(n):
            E_i, fld_i, lam_i = _phase_objective(supports[i], h, q[i])
            if fld_i is None:
                continue
            flds[i], lams[i] = fld_i, lam_i
        slopes = [phase_slopes(flds[i].values, supports[i], h)
                  if flds[i] is not None else np.zeros(box_mask.shape)
                  for i in range(n)]
        newlabel = label.copy()
        for i in range(n):
            if flds[i] is None:
                continue
            g = slopes[i]
            sq = np.sqrt(q[i])
            adj = neighbors_in(supports[i]) > 0
            grow = box_mask & (label == -1) & adj & (g > sq * (1 + cfg.hysteresis))
            newlabel[grow & (newlabel == -1)] = i
            vac_adj = neighbors_in(box_mask & (label == -1)) > 0
            shrink = supports[i] & vac_adj & (g < sq * (1 - cfg.hysteresis))
            newlabel[shrink & (label == i)] = -1
            for j in range(n):
                if j == i or flds[j] is None:
                    continue
                bal = (slopes[j] ** 2 - q[j]) - (g ** 2 - q[i])
                take = supports[i] & (neighbors_in(supports[j]) > 0) \
                    & (bal > cfg.hysteresis * (q[i] + q[j]))
                newlabel[take] = j
        changed = int((newlabel != label).sum())
        supports = [(newlabel == i) for i in range(n)]
        if changed == 0:
            break

    for i in range(n):
        E_i, fld_i, lam_i = _phase_objective(supports[i], h, q[i])
        if fld_i is None:
            flags.append(f"phase {i} empty after sharpening")
            raise NumericalFailure("multiphase sharpening lost a phase")
        flds[i], lams[i] = fld_i, lam_i

    label = -np.ones(box_mask.shape, dtype=int)
    for i in range(n):
        label[supports[i]] = i
    h2 = h * h
    energy = sum(lams[i] + q[i] * float(supports[i].sum() * h2) for i in range(n))
    fields = [ScalarField2D(flds[i].values, np.asarray(center, float), h,
                            sign_mode="nonnegative") for i in range(n)]
    ov = _overlap([f.values for f in fields], h)
    return MultiphaseState(fields, lams, label, q, box_mask, h, eps_p, ov,
                           energy, history, flags)
