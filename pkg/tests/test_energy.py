"""Functionals, boundary adjusted energies, rescalings, excess."""

import json

import numpy as np
import pytest

from fblab.energy import (EnergyBreakdown, energy_J, excess, one_hom_extension,
                          rescale, weiss)
from fblab.errors import DomainOverflow, RejectedInput
from fblab.grids import CircleTrace, CoeffData, ScalarField2D


def half_plane(mu=1.0, n=129, hw=1.3):
    return ScalarField2D.from_function(lambda X, Y: mu * np.maximum(Y, 0.0),
                                       n, hw, sign_mode="nonnegative")


def test_breakdown_total_and_json():
    e = EnergyBreakdown(2.0, 0.5, 1.0, 0.25)
    assert e.total == pytest.approx(2.0 - 0.5 + 1.0 + 0.25)
    d = json.loads(e.to_json())
    assert set(d) == {"dirichlet", "boundary", "pos_measure", "neg_measure",
                      "total"}
    assert EnergyBreakdown.from_json(e.to_json()).total == pytest.approx(e.total)


def test_energy_J_zero_field():
    co = CoeffData.constant(q_op=2.0)
    z = ScalarField2D(np.zeros((65, 65)), spacing=0.05, sign_mode="nonnegative")
    for mode in ("OP", "TP"):
        e = energy_J(z, (0, 0), 1.0, co, mode)
        assert e.total == 0.0


def test_energy_J_half_plane_closed_form():
    # u = x2+ on B1 with A = Id, Q = lam: dirichlet = pi/2 (gradient 1 on the
    # half disk), measure = lam * pi/2
    lam = 2.0
    co = CoeffData.constant(q_op=lam)
    u = half_plane()
    e = energy_J(u, (0, 0), 1.0, co, "OP", frozen=True)
    assert e.dirichlet == pytest.approx(np.pi / 2, rel=0.03)
    assert e.positive_measure_term == pytest.approx(lam * np.pi / 2, rel=0.03)
    assert e.boundary_term == 0.0


def test_energy_J_two_phase_closed_form():
    # u = 2 x2+ + min(0, x2): dirichlet = 4 pi/2 + pi/2; measures pi/2, 2 pi/2
    co = CoeffData.constant(q_tp_plus=1.0, q_tp_minus=2.0)
    u = ScalarField2D.from_function(
        lambda X, Y: 2 * np.maximum(Y, 0.0) + np.minimum(Y, 0.0), 129, 1.3)
    e = energy_J(u, (0, 0), 1.0, co, "TP", frozen=True)
    assert e.dirichlet == pytest.approx(4 * np.pi / 2 + np.pi / 2, rel=0.03)
    assert e.positive_measure_term == pytest.approx(np.pi / 2, rel=0.03)
    assert e.negative_measure_term == pytest.approx(2 * np.pi / 2, rel=0.03)


def test_energy_J_errors():
    co = CoeffData.constant()
    u = half_plane()
    with pytest.raises(DomainOverflow):
        energy_J(u, (1.0, 0.0), 1.0, co, "OP")
    signed = ScalarField2D.from_function(lambda X, Y: Y, 65, 1.3)
    with pytest.raises(RejectedInput):
        energy_J(signed, (0, 0), 1.0, co, "OP")


def test_energy_scaling_consistency():
    # J(rescale(u, x0, r), 0, 1, frozen) = J(u, x0, r, frozen) / r^2
    co = CoeffData.constant(q_op=1.5)
    u = ScalarField2D.from_function(
        lambda X, Y: np.maximum(Y - 0.1 * X * X, 0.0), 193, 1.3,
        sign_mode="nonnegative")
    r, x0 = 0.5, (0.1, 0.0)
    a = energy_J(rescale(u, x0, r, 161), (0, 0), 1.0, co, "OP", frozen=True,
                 freeze_point=x0).total
    b = energy_J(u, x0, r, co, "OP", frozen=True).total / r ** 2
    assert a == pytest.approx(b, rel=0.02)


def test_rescale_examples():
    u = half_plane(n=161, hw=1.6)
    ur = rescale(u, (0, 0), 0.5, 129)
    X, Y = ur.meshgrid()
    assert np.abs(ur.values - np.maximum(Y, 0.0)).max() <= u.spacing
    q = ScalarField2D.from_function(lambda X, Y: X * X + Y * Y, 161, 1.6)
    qr = rescale(q, (0, 0), 0.5, 129)
    Xr, Yr = qr.meshgrid()
    assert np.abs(qr.values - 0.5 * (Xr ** 2 + Yr ** 2)).max() <= 1e-3
    c = ScalarField2D(np.full((33, 33), 3.0), spacing=0.1)
    cr = rescale(c, (0, 0), 0.5, 33)
    assert np.allclose(cr.values, 6.0)
    with pytest.raises(DomainOverflow):
        rescale(u, (1.5, 0.0), 0.5)


def test_one_hom_extension_examples():
    zero = one_hom_extension(CircleTrace(np.zeros(32)), 65)
    assert np.abs(zero.values).max() == 0.0
    c = CircleTrace.from_function(lambda th: np.maximum(np.sin(th), 0.0), 256)
    z = one_hom_extension(c, 129)
    X, Y = z.meshgrid()
    assert np.abs(z.values - np.maximum(Y, 0.0)).max() <= 2e-4
    ones = one_hom_extension(CircleTrace(np.ones(64)), 129)
    Xo, Yo = ones.meshgrid()
    assert np.abs(ones.values - np.hypot(Xo, Yo)).max() <= 1e-12
    assert excess(ones) <= 1e-6  # 1-homogeneous by construction


def test_weiss_half_plane_density():
    # the boundary adjusted energy of sqrt(lam) x2+ is lam pi / 2
    for lam in (0.5, 1.0, 2.0):
        u = half_plane(np.sqrt(lam), n=129, hw=1.0)
        W = weiss(u, "OP", lam).total
        assert W == pytest.approx(lam * np.pi / 2, rel=0.01)


def test_weiss_two_plane_density_any_slopes():
    # W_tp(mu+ x2+ + mu- min(0,x2)) = (Lam1 + Lam2) pi/2 for any mu+-
    lam = (4.0, 1.0)
    for mup, mum in ((2.0, 1.0), (1.3, 0.4), (0.8, 2.0)):
        u = ScalarField2D.from_function(
            lambda X, Y: mup * np.maximum(Y, 0) + mum * np.minimum(Y, 0),
            129, 1.0)
        W = weiss(u, "TP", lam).total
        assert W == pytest.approx(sum(lam) * np.pi / 2, rel=0.01)


def test_weiss_zero_field():
    z = ScalarField2D(np.zeros((65, 65)), spacing=2.0 / 64)
    assert weiss(z, "OP", 1.0).total == pytest.approx(0.0, abs=1e-12)


def test_weiss_op_equals_tp_for_nonnegative():
    u = half_plane(1.2, n=97, hw=1.0)
    w_op = weiss(u, "OP", 2.0).total
    w_tp = weiss(u, "TP", (2.0, 17.0)).total   # Lam2 arbitrary
    assert w_op == pytest.approx(w_tp, abs=1e-12)


def test_weiss_extension_grid_consistency():
    c = CircleTrace.from_function(
        lambda th: np.maximum(np.sin(th), 0.0) + 0.2 * np.cos(2 * th) + 0.3, 256)
    w1 = weiss(one_hom_extension(c, 97), "OP", 1.0).total
    w2 = weiss(one_hom_extension(c, 193), "OP", 1.0).total
    assert abs(w1 - w2) <= 6.0 * (2.0 / 96)   # O(h)


def test_excess_homogeneous_and_closed_forms():
    hp = half_plane(1.0, n=129, hw=1.0)
    assert excess(hp) <= 5.0 * hp.spacing      # ~0 up to O(h)
    cone = ScalarField2D.from_function(lambda X, Y: np.hypot(X, Y), 129, 1.0)
    assert excess(cone) <= 1e-5
    # u = |x|^2: the integrand is |x|^2 = 1 on the circle, E = 2 pi; the
    # gradient circle at 1-2h biases by (1-2h)^4
    q = ScalarField2D.from_function(lambda X, Y: X * X + Y * Y, 129, 1.0)
    h = q.spacing
    assert excess(q) == pytest.approx(2 * np.pi, abs=2 * np.pi * 10 * h)
    assert abs(excess(q) - 2 * np.pi * (1 - 2 * h) ** 4) <= 0.02
    # constant c: x . grad u = 0, E = 2 pi c^2
    const = ScalarField2D(np.full((129, 129), 0.7), spacing=2.0 / 128)
    assert excess(const) == pytest.approx(2 * np.pi * 0.49, rel=1e-6)


def test_excess_margin_error():
    tiny = ScalarField2D(np.zeros((5, 5)), spacing=0.5)
    with pytest.raises(RejectedInput):
        excess(tiny)


def test_extension_excess_independent_of_trace():
    rng = np.random.default_rng(3)
    for _ in range(5):
        vals = rng.standard_normal(64) * 0.3 + 1.0
        z = one_hom_extension(CircleTrace(vals), 129)
        assert excess(z) <= 5.0 * z.spacing
