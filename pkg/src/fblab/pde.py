"""Shared finite-difference kernels: masked Dirichlet solves and the
free-boundary trial sweeps used by the competitor search and the solvers.

The sharpening iteration alternates a 5-point Dirichlet solve on the current
positivity set with single-cell boundary moves driven by the signed speed
|grad u| - sqrt(Q) (the optimality condition of the free boundary), with a
hysteresis band to avoid cell flicker.  One-sided slopes are taken one cell
into the phase so sub-grid boundary offsets do not bias the test.
"""

from __future__ import annotations

import numpy as np
import scipy.ndimage as ndi
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalFailure

BAND_CELLS = 14        # width of the local re-solve band around the boundary
FULL_SOLVE_EVERY = 12  # periodic full solve to re-sync the band solution


def solve_dirichlet(active: np.ndarray, boundary_values: np.ndarray, h: float,
                    rhs: np.ndarray | None = None) -> np.ndarray:
    """Solve -lap u = rhs on the active set, u = boundary_values elsewhere."""
    n, m = active.shape
    idx = -np.ones((n, m), dtype=int)
    ii, jj = np.nonzero(active)
    k = ii.size
    if k == 0:
        return boundary_values.copy()
    idx[ii, jj] = np.arange(k)
    h2 = h * h
    b = np.zeros(k) if rhs is None else rhs[ii, jj] * h2
    rows, cols, vals = [], [], []
    diag = np.full(k, 4.0)
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ni = ii + di
        nj = jj + dj
        inside = (ni >= 0) & (ni < n) & (nj >= 0) & (nj < m)
        # out-of-array neighbors are treated as zero Dirichlet
        nidx = np.where(inside, idx[np.clip(ni, 0, n - 1), np.clip(nj, 0, m - 1)], -1)
        link = inside & (nidx >= 0)
        rows.append(np.nonzero(link)[0])
        cols.append(nidx[link])
        vals.append(np.full(link.sum(), -1.0))
        fixed = inside & (nidx < 0)
        b[fixed] += boundary_values[ni[fixed], nj[fixed]]
    A = sp.csr_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))), shape=(k, k))
    A = A + sp.diags(diag)
    try:
        sol = spla.spsolve(A, b)
    except Exception as exc:  # pragma: no cover - singular systems
        raise NumericalFailure(f"Dirichlet solve failed: {exc}")
    if not np.all(np.isfinite(sol)):
        raise NumericalFailure("Dirichlet solve returned non-finite values")
    out = boundary_values.copy()
    out[ii, jj] = sol
    return out


def _shift(a: np.ndarray, di: int, dj: int, fill=0.0) -> np.ndarray:
    """a evaluated at (i + di, j + dj), padded with fill."""
    out = np.full_like(a, fill)
    n, m = a.shape
    si = slice(max(0, -di), min(n, n - di))
    sj = slice(max(0, -dj), min(m, m - dj))
    ti = slice(max(0, di), min(n, n + di))
    tj = slice(max(0, dj), min(m, m + dj))
    out[si, sj] = a[ti, tj]
    return out


def phase_slopes(u: np.ndarray, phase: np.ndarray, h: float) -> np.ndarray:
    """|grad u| estimated per cell by one-sided differences into the phase.

    For each axis the slope is the largest difference quotient
    (u[c + 2d] - u[c + d]) / h over directions d whose two stencil cells lie
    in the phase; robust to the boundary sitting between grid rows.
    """
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    for axis, acc in ((0, gx), (1, gy)):
        for s in (+1, -1):
            di, dj = (s, 0) if axis == 0 else (0, s)
            u1 = _shift(u, di, dj)
            u2 = _shift(u, 2 * di, 2 * dj)
            ok = _shift(phase, di, dj, False) & _shift(phase, 2 * di, 2 * dj, False)
            cand = np.abs(u2 - u1) / h
            np.maximum(acc, np.where(ok, cand, 0.0), out=acc)
    return np.hypot(gx, gy)


def neighbors_in(mask: np.ndarray) -> np.ndarray:
    """Count of 4-neighbors inside the mask."""
    cnt = np.zeros(mask.shape, dtype=int)
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        cnt += _shift(mask, di, dj, False)
    return cnt


def discrete_energy_one_phase(u: np.ndarray, support: np.ndarray,
                              sqrt_q: np.ndarray, h: float) -> float:
    """Edge-based Dirichlet energy plus the sharp measure term on the support."""
    dir_part = (np.diff(u, axis=0) ** 2).sum() + (np.diff(u, axis=1) ** 2).sum()
    return float(dir_part + h * h * (sqrt_q[support] ** 2).sum())


def fb_sweep_one_phase(support: np.ndarray, free: np.ndarray,
                       boundary_values: np.ndarray, sqrt_q: np.ndarray,
                       h: float, n_sweeps: int = 30, hysteresis: float = 0.1,
                       rhs: np.ndarray | None = None):
    """Trial free-boundary iteration for the one-phase problem.

    support: current positivity set (free cells only); collar data lives in
    boundary_values on the non-free cells.  The hysteresis band shrinks once
    the sweep settles, and the best configuration by the exact discrete
    energy is returned, so band-edge bias and cell flicker cannot degrade
    the output.  Returns (u, support, history).
    """
    support = support & free
    history = []
    bv = np.where(free, 0.0, boundary_values)
    u = solve_dirichlet(support, bv, h, rhs)
    best = (discrete_energy_one_phase(u, support, sqrt_q, h), u, support)
    hyst = hysteresis
    stale = 0
    since_full = 0

    def resolve(support, u_prev, moved):
        """Full solve periodically, narrow-band solve otherwise (boundary
        moves are local, so the update decays within a few cells)."""
        nonlocal since_full
        since_full += 1
        if since_full >= FULL_SOLVE_EVERY or moved is None:
            since_full = 0
            return solve_dirichlet(support, bv, h, rhs)
        band = ndi.binary_dilation(moved, iterations=BAND_CELLS)
        out = solve_dirichlet(support & band, np.where(support & ~band,
                                                       u_prev, bv), h, rhs)
        return np.where(support & ~band, u_prev, out)

    for sweep in range(n_sweeps):
        phase = support | ((~free) & (boundary_values > 0.0))
        g = phase_slopes(u, phase, h)
        nb = neighbors_in(phase)
        grow = free & ~support & (nb > 0) & (g > sqrt_q * (1.0 + hyst))
        shrink = support & (neighbors_in(~phase & free) > 0) \
            & (g < sqrt_q * (1.0 - hyst))
        changed = int(grow.sum() + shrink.sum())
        history.append(changed)
        if changed == 0:
            if hyst <= 0.021:
                break
            hyst = max(0.5 * hyst, 0.02)
            continue
        support = (support | grow) & ~shrink
        u = resolve(support, u, grow | shrink)
        J = discrete_energy_one_phase(u, support, sqrt_q, h)
        if J < best[0] - 1e-10 * abs(best[0]):
            best = (J, u, support)
            stale = 0
        else:
            stale += 1
            # the iteration has entered a cycle: stop once the exact energy
            # has stopped improving for a while
            if stale >= 60:
                break
    u_fin = solve_dirichlet(best[2], bv, h, rhs)
    J_final = discrete_energy_one_phase(u_fin, best[2], sqrt_q, h)
    best = (J_final, u_fin, best[2])
    return best[1], best[2], history


def tp_initial_labels(u: np.ndarray, thr_p: float, thr_m: float,
                      free: np.ndarray) -> np.ndarray:
    """Initial +1/0/-1 labels for the two-phase sweep.

    Cells above the per-phase thresholds are labeled; the low-amplitude
    smear band BETWEEN the two phases is assigned by sign so the interface
    starts closed (two detached fronts cannot rejoin through the one-phase
    growth rules when the slopes sit inside their dead bands).  Smear next
    to only one phase stays vacuum.
    """
    lab = np.zeros(u.shape, dtype=int)
    pos = (u > thr_p) & free
    neg = (u < -thr_m) & free
    lab[pos] = 1
    lab[neg] = -1
    near_p = ndi.binary_dilation(pos, iterations=3)
    near_m = ndi.binary_dilation(neg, iterations=3)
    band = free & (lab == 0) & near_p & near_m
    lab[band & (u > 0.0)] = 1
    lab[band & (u <= 0.0)] = -1
    return lab


def fb_sweep_two_phase(label: np.ndarray, free: np.ndarray,
                       boundary_values: np.ndarray, sqrt_qp: np.ndarray,
                       sqrt_qm: np.ndarray, h: float, n_sweeps: int = 30,
                       hysteresis: float = 0.1):
    """Trial iteration for the two-phase problem.

    label is +1/0/-1 per cell (free cells only); one-phase edges use the
    |grad u| vs sqrt(Q) rule per phase, two-phase interfaces move with the
    balance speed (g+^2 - g-^2) - (Q+ - Q-).  Ties (a cell claimed by both
    phases in one sweep) go to the phase with the larger solved |u|.
    """
    label = np.where(free, label, 0)
    history = []
    bvp = np.where(free, 0.0, np.maximum(boundary_values, 0.0))
    bvm = np.where(free, 0.0, np.maximum(-boundary_values, 0.0))

    since_full = [FULL_SOLVE_EVERY]

    def solve_both(lab, prev=None, moved=None):
        since_full[0] += 1
        if prev is None or moved is None or since_full[0] >= FULL_SOLVE_EVERY:
            since_full[0] = 0
            up = solve_dirichlet(lab > 0, bvp, h)
            um = solve_dirichlet(lab < 0, bvm, h)
        else:
            band = ndi.binary_dilation(moved, iterations=BAND_CELLS)
            up0, um0 = prev
            up = np.where((lab > 0) & ~band, up0,
                          solve_dirichlet((lab > 0) & band,
                                          np.where((lab > 0) & ~band, up0, bvp), h))
            um = np.where((lab < 0) & ~band, um0,
                          solve_dirichlet((lab < 0) & band,
                                          np.where((lab < 0) & ~band, um0, bvm), h))
        dir_part = (np.diff(up - um, axis=0) ** 2).sum() \
            + (np.diff(up - um, axis=1) ** 2).sum()
        J = dir_part + h * h * ((sqrt_qp[lab > 0] ** 2).sum()
                                + (sqrt_qm[lab < 0] ** 2).sum())
        return up, um, float(J)

    up, um, J = solve_both(label)
    best = (J, up, um, label)
    hyst = hysteresis
    stale = 0
    for sweep in range(n_sweeps):
        pos = (label > 0) | (~free & (boundary_values > 0.0))
        neg = (label < 0) | (~free & (boundary_values < 0.0))
        gp = phase_slopes(up, pos, h)
        gm = phase_slopes(um, neg, h)
        nb_p = neighbors_in(pos)
        nb_m = neighbors_in(neg)
        q2p = sqrt_qp ** 2
        q2m = sqrt_qm ** 2
        scale = np.maximum(q2p + q2m, 1e-30)
        # one-phase style growth into empty cells
        grow_p = free & (label == 0) & (nb_p > 0) & (gp > sqrt_qp * (1 + hyst))
        grow_m = free & (label == 0) & (nb_m > 0) & (gm > sqrt_qm * (1 + hyst))
        both = grow_p & grow_m
        grow_p &= ~both | (np.abs(gp) >= np.abs(gm))
        grow_m &= ~both | (np.abs(gm) > np.abs(gp))
        # retreat of a phase bordering vacuum
        empty_adj = neighbors_in(free & (label == 0)) > 0
        shrink_p = (label > 0) & empty_adj & (nb_m == 0) \
            & (gp < sqrt_qp * (1 - hyst))
        shrink_m = (label < 0) & empty_adj & (nb_p == 0) \
            & (gm < sqrt_qm * (1 - hyst))
        # interface balance: positive-phase cells adjacent to the negative phase
        bal = (gp ** 2 - gm ** 2 - (q2p - q2m)) / scale
        take_m = (label < 0) & (nb_p > 0) & (bal > hyst)
        take_p = (label > 0) & (nb_m > 0) & (bal < -hyst)
        new = label.copy()
        new[grow_p] = 1
        new[grow_m] = -1
        new[shrink_p | shrink_m] = 0
        new[take_m] = 1
        new[take_p] = -1
        changed = int((new != label).sum())
        history.append(changed)
        if changed == 0:
            if hyst <= 0.021:
                break
            hyst = max(0.5 * hyst, 0.02)
            continue
        moved = new != label
        label = new
        up, um, J = solve_both(label, (up, um), moved)
        if J < best[0] - 1e-10 * abs(best[0]):
            best = (J, up, um, label)
            stale = 0
        else:
            stale += 1
            if stale >= 60:
                break
    lab = best[3]
    up = solve_dirichlet(lab > 0, bvp, h)
    um = solve_dirichlet(lab < 0, bvm, h)
    return up - um, lab, history
