"""Seeded synthetic fields and traces so every diagnostic is reproducible
from the command line alone: half-planes, two-planes, perturbations,
prescribed boundary graphs, random trace families."""

from __future__ import annotations

import numpy as np

from .errors import RejectedInput
from .grids import CircleTrace, HalfPlaneModel, ScalarField2D


def half_plane_field(mu: float = 1.0, angle: float = 0.0, n: int = 161,
                     half_width: float = 1.3, mu_minus: float = 0.0) -> ScalarField2D:
    """mu max(0, x.nu) + mu_minus min(0, x.nu) with nu at the given angle
    from the vertical."""
    nu = np.array([-np.sin(angle), np.cos(angle)])
    model = HalfPlaneModel(mu, nu, mu_minus)
    sign = "nonnegative" if mu_minus == 0.0 else "signed"
    return ScalarField2D.from_function(model, n, half_width, sign_mode=sign)


def perturbed_half_plane(mu: float = 1.0, eps: float = 0.05, kind: str = "quadratic",
                         n: int = 161, half_width: float = 1.3,
                         seed: int = 0) -> ScalarField2D:
    """Half-plane profile plus a controlled perturbation; "quadratic" adds
    eps |x|^2 (deviation rate exactly one), "mode3" bends the trace."""
    rng = np.random.default_rng(seed)
    if kind == "quadratic":
        f = lambda X, Y: mu * np.maximum(Y, 0.0) + eps * (X * X + Y * Y)
    elif kind == "mode3":
        f = lambda X, Y: np.maximum(
            mu * Y + eps * np.hypot(X, Y) * np.sin(3 * np.arctan2(Y, X)), 0.0)
    elif kind == "random_smooth":
        a, b = rng.uniform(-1.0, 1.0, 2)
        f = lambda X, Y: np.maximum(
            mu * Y + eps * (a * X * Y + b * (X * X - Y * Y)), 0.0)
    else:
        raise RejectedInput(f"unknown perturbation kind {kind!r}")
    return ScalarField2D.from_function(f, n, half_width, sign_mode="nonnegative")


def graph_field(g, n: int = 257, half_width: float = 1.3,
                slope: float = 1.0) -> ScalarField2D:
    """Epigraph profile slope * max(0, y - g(x)) for a boundary graph g."""
    return ScalarField2D.from_function(
        lambda X, Y: slope * np.maximum(Y - g(X), 0.0), n, half_width,
        sign_mode="nonnegative")


def half_plane_trace(mu: float = 1.0, n_theta: int = 256) -> CircleTrace:
    return CircleTrace.from_function(
        lambda th: mu * np.maximum(np.sin(th), 0.0), n_theta)


def two_plane_trace(mu_plus: float, mu_minus: float, n_theta: int = 256) -> CircleTrace:
    return CircleTrace.from_function(
        lambda th: mu_plus * np.maximum(np.sin(th), 0.0)
        + mu_minus * np.minimum(np.sin(th), 0.0), n_theta)


def bumped_trace(t: float, mode: int = 3, n_theta: int = 256) -> CircleTrace:
    """Half-plane trace plus the positive part of a higher harmonic."""
    return CircleTrace.from_function(
        lambda th: np.maximum(np.sin(th), 0.0)
        + t * np.maximum(np.sin(mode * th), 0.0), n_theta)


def constrained_trace(coeffs=(0.25,), n_theta: int = 256, base: float = 1.0) -> CircleTrace:
    """Nonnegative trace supported on the upper half circle: modes sin(k th)
    for k >= 2 added on top of base*sin(th), clipped outside (0, pi)."""
    def f(th):
        up = np.sin(th) > 0.0
        val = base * np.sin(th)
        for k, a in enumerate(coeffs, start=2):
            val = val + a * np.sin(k * th)
        return np.where(up, np.maximum(val, 0.0), 0.0)
    return CircleTrace.from_function(f, n_theta)


def random_trace(seed: int, n_theta: int = 256, decay: float = 2.0,
                 n_modes: int = 8, floor_mass: float = 0.3) -> CircleTrace:
    """Random nonnegative trace: positive part of a random Fourier sum with
    power-law decaying coefficients, plus a mass floor."""
    rng = np.random.default_rng(seed)
    th = 2.0 * np.pi * np.arange(n_theta) / n_theta
    vals = np.zeros(n_theta)
    for k in range(1, n_modes + 1):
        a, b = rng.standard_normal(2) / k ** decay
        vals += a * np.cos(k * th) + b * np.sin(k * th)
    vals = np.maximum(vals + floor_mass, 0.0)
    return CircleTrace(vals)


def random_signed_trace(seed: int, n_theta: int = 256, decay: float = 2.0,
                        n_modes: int = 6, base: float = 1.0) -> CircleTrace:
    """Signed trace with both phases massive: a two-plane trace plus a random
    smooth perturbation."""
    rng = np.random.default_rng(seed)
    th = 2.0 * np.pi * np.arange(n_theta) / n_theta
    vals = 2.0 * base * np.maximum(np.sin(th), 0.0) + base * np.minimum(np.sin(th), 0.0)
    for k in range(2, n_modes + 2):
        a = rng.standard_normal() / k ** decay
        vals += 0.4 * a * np.sin(k * th + rng.uniform(0, 2 * np.pi))
    return CircleTrace(vals)


def op_curved_datum(amp: float = 0.25, n_theta: int = 256,
                    lam: float = 1.0) -> CircleTrace:
    """Datum whose minimizer has a gently curved interior free boundary."""
    return CircleTrace.from_function(
        lambda th: np.sqrt(lam) * np.maximum(np.sin(th + amp * np.sin(th)), 0.0),
        n_theta)


def box_datum(base: float = 1.4, tilt: float = 0.3, n_theta: int = 256) -> CircleTrace:
    """Constrained-scenario datum: positive on the upper half circle with a
    slope everywhere above one, so the free boundary stays pinned to the
    box edge {y = 0}."""
    def f(th):
        up = np.sin(th) > 0.0
        return np.where(up, (base + tilt * np.cos(th)) * np.sin(th), 0.0)
    return CircleTrace.from_function(f, n_theta)


def tp_curved_datum(mu_plus: float = 2.0, mu_minus: float = 1.0,
                    amp: float = 0.25, n_theta: int = 256) -> CircleTrace:
    """Two-phase datum with a bent interface."""
    def f(th):
        s = np.sin(th + amp * np.sin(2 * th))
        return mu_plus * np.maximum(s, 0.0) + mu_minus * np.minimum(s, 0.0)
    return CircleTrace.from_function(f, n_theta)


def disk_mask(n: int, half_width: float, radius: float, center=(0.0, 0.0)):
    h = 2.0 * half_width / (n - 1)
    coords = (np.arange(n) - 0.5 * (n - 1)) * h
    X, Y = np.meshgrid(coords, coords, indexing="ij")
    return (X - center[0]) ** 2 + (Y - center[1]) ** 2 < radius ** 2, h


def rect_mask(n: int, half_width: float, wx: float, wy: float):
    h = 2.0 * half_width / (n - 1)
    coords = (np.arange(n) - 0.5 * (n - 1)) * h
    X, Y = np.meshgrid(coords, coords, indexing="ij")
    return (np.abs(X) < 0.5 * wx) & (np.abs(Y) < 0.5 * wy), h
