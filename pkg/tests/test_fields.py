"""Field substrate: grids, traces, coefficient data, geometric maps."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fblab.errors import DomainOverflow, RejectedInput
from fblab.geometry import (check_roundtrip, circle_trace, freeze_pullback,
                            matrix_sqrt, straighten_boundary)
from fblab.grids import (TOL_ALG, CircleTrace, CoeffData, HalfPlaneModel,
                         ScalarField2D)


def test_field_invariants():
    with pytest.raises(RejectedInput):
        ScalarField2D(np.zeros((2, 2)))                     # N >= 3
    with pytest.raises(RejectedInput):
        ScalarField2D(np.zeros((4, 4)), spacing=0.0)        # h > 0
    with pytest.raises(RejectedInput):
        ScalarField2D(-np.ones((4, 4)), sign_mode="nonnegative")
    # Lipschitz annotation: adjacent step L*h is fine, more is not
    vals = np.linspace(0, 1, 5)[None, :] * np.ones((5, 1))
    f = ScalarField2D(vals, spacing=0.25, lipschitz_bound=1.0)
    assert f.lipschitz_bound == 1.0
    with pytest.raises(RejectedInput):
        ScalarField2D(vals, spacing=0.25, lipschitz_bound=0.5)


def test_field_immutable():
    f = ScalarField2D(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_bilinear_sampling_exact_on_affine():
    f = ScalarField2D.from_function(lambda X, Y: 2.0 * X - 3.0 * Y + 0.5, 33, 1.0)
    pts = np.array([[0.1, 0.2], [-0.731, 0.519], [0.0, 0.0]])
    expect = 2.0 * pts[:, 0] - 3.0 * pts[:, 1] + 0.5
    assert np.allclose(f.sample(pts), expect, atol=1e-12)
    with pytest.raises(DomainOverflow):
        f.sample(np.array([1.5, 0.0]))


def test_matrix_sqrt_identity_and_diagonal():
    assert np.allclose(matrix_sqrt(np.eye(2)), np.eye(2), atol=TOL_ALG)
    assert np.allclose(matrix_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]),
                       atol=TOL_ALG)


def test_matrix_sqrt_random_spd_remultiplication():
    rng = np.random.default_rng(42)
    for _ in range(20):
        B = rng.standard_normal((2, 2))
        M = B @ B.T + 0.1 * np.eye(2)
        S = matrix_sqrt(M)
        assert np.allclose(S, S.T, atol=1e-13)
        assert np.linalg.norm(S @ S - M) <= 1e-12
        # eigenvectors shared with M
        wM, VM = np.linalg.eigh(M)
        wS, VS = np.linalg.eigh(S)
        assert np.allclose(np.abs(VM.T @ VS), np.eye(2), atol=1e-8)


def test_matrix_sqrt_rejects_bad_input():
    with pytest.raises(RejectedInput):
        matrix_sqrt(np.array([[1.0, 2.0], [0.0, 1.0]]))     # not symmetric
    with pytest.raises(RejectedInput):
        matrix_sqrt(np.array([[1.0, 0.0], [0.0, -2.0]]))    # not positive


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(-np.pi, np.pi))
def test_matrix_sqrt_idempotence(l1, l2, ang):
    # matrix_sqrt(S S) = S for any symmetric-positive S
    R = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
    S = R @ np.diag([l1, l2]) @ R.T
    S = 0.5 * (S + S.T)
    assert np.linalg.norm(matrix_sqrt(S @ S) - S) <= 1e-9 * max(l1, l2) ** 2


def test_freeze_pullback_identity_and_translation():
    u = ScalarField2D.from_function(lambda X, Y: np.sin(X) * np.cos(Y), 65, 2.0)
    out = freeze_pullback(u, (0.0, 0.0), np.eye(2), radius=1.0, n_out=33)
    X, Y = out.meshgrid()
    assert np.abs(out.values - np.sin(X) * np.cos(Y)).max() <= 5e-3  # O(h^2)
    out2 = freeze_pullback(u, (0.5, -0.3), np.eye(2), radius=1.0, n_out=33)
    assert np.abs(out2.values - np.sin(X + 0.5) * np.cos(Y - 0.3)).max() <= 5e-3


def test_freeze_pullback_diagonal_stretch():
    # A = diag(4, 1): the pullback of u(x) = x1 is 2 x1
    u = ScalarField2D.from_function(lambda X, Y: X, 65, 2.0)
    out = freeze_pullback(u, (0.0, 0.0), np.diag([4.0, 1.0]), radius=0.9,
                          n_out=33)
    X, _ = out.meshgrid()
    assert np.abs(out.values - 2.0 * X).max() <= 1e-10  # affine: exact


def test_freeze_pullback_lipschitz_and_overflow():
    u = ScalarField2D.from_function(lambda X, Y: X, 33, 1.0).with_lipschitz()
    co = CoeffData.constant(A=np.diag([4.0, 1.0]))
    out = freeze_pullback(u, (0.0, 0.0), co, radius=0.4)
    assert out.lipschitz_bound == pytest.approx(np.sqrt(co.M_A) * u.lipschitz_bound)
    with pytest.raises(DomainOverflow):
        freeze_pullback(u, (0.0, 0.0), np.diag([4.0, 1.0]), radius=0.9)


def test_straighten_flat_and_linear():
    sb = straighten_boundary(np.zeros(11), 0.1)
    assert np.abs(sb.A_at(0.0) - np.eye(2)).max() <= TOL_ALG
    pts = np.array([[0.1, 0.2], [-0.3, 0.05]])
    assert np.allclose(sb.psi(pts), pts)
    a = 0.7
    s = np.linspace(-0.5, 0.5, 21)
    sb2 = straighten_boundary(a * s, s)
    expect = np.array([[1.0, -a], [-a, 1.0 + a * a]])
    assert np.abs(sb2.A_at(0.2) - expect).max() <= 1e-9
    assert check_roundtrip(sb2) <= TOL_ALG


def test_straighten_quadratic_symbolic_oracle():
    # g(x1) = x1^2 on (-.5,.5): a12 = -2 x1 (central differences are exact
    # for quadratics) and det A = 1 pointwise
    s = np.linspace(-0.5, 0.5, 41)
    sb = straighten_boundary(s ** 2, s)
    for x1 in (-0.3, 0.0, 0.25):
        A = sb.A_at(x1)
        assert A[0, 1] == pytest.approx(-2.0 * x1, abs=1e-9)
        assert np.linalg.det(A) == pytest.approx(1.0, abs=1e-9)
    assert check_roundtrip(sb) <= TOL_ALG


def test_straighten_rejects_nonuniform():
    with pytest.raises(RejectedInput):
        straighten_boundary([0.0, 0.1, 0.0], np.array([0.0, 0.1, 0.5]))


def test_circle_trace_homogeneous_and_quadratic():
    u = ScalarField2D.from_function(lambda X, Y: np.maximum(Y, 0.0), 129, 1.0,
                                    sign_mode="nonnegative")
    tr = circle_trace(u, (0.0, 0.0), 0.5, 64)
    th = tr.thetas()
    assert np.abs(tr.samples - np.maximum(np.sin(th), 0.0)).max() <= 2e-2
    z = ScalarField2D.from_function(lambda X, Y: 0.0 * X, 65, 1.0)
    assert np.abs(circle_trace(z, (0, 0), 0.5, 32).samples).max() == 0.0
    q = ScalarField2D.from_function(lambda X, Y: X * X + Y * Y, 129, 1.0)
    trq = circle_trace(q, (0.0, 0.0), 0.25, 64)
    assert np.abs(trq.samples - 0.25).max() <= 2e-3  # u(r theta)/r = r


def test_circle_trace_r_independence_for_homogeneous():
    u = ScalarField2D.from_function(lambda X, Y: np.hypot(X, Y), 257, 1.0)
    t1 = circle_trace(u, (0, 0), 0.3, 64).samples
    t2 = circle_trace(u, (0, 0), 0.6, 64).samples
    assert np.abs(t1 - t2).max() <= 5e-3


def test_circle_trace_errors():
    u = ScalarField2D.from_function(lambda X, Y: X, 33, 1.0)
    with pytest.raises(DomainOverflow):
        circle_trace(u, (0.9, 0.0), 0.5, 32)
    with pytest.raises(RejectedInput):
        circle_trace(u, (0.0, 0.0), 0.3, 33)   # odd sample count


def test_trace_invariants():
    with pytest.raises(RejectedInput):
        CircleTrace(np.zeros(8))                 # too few
    with pytest.raises(RejectedInput):
        CircleTrace(np.full(16, np.nan))


def test_half_plane_model():
    m = HalfPlaneModel(2.0, (0.0, 1.0), 1.0)
    assert m(0.0, 1.0) == pytest.approx(2.0)
    assert m(0.0, -1.0) == pytest.approx(-1.0)
    with pytest.raises(RejectedInput):
        HalfPlaneModel(1.0, (1.0, 1.0))          # not unit
    with pytest.raises(RejectedInput):
        HalfPlaneModel(-1.0, (0.0, 1.0))


def test_coeffdata_validation():
    co = CoeffData.constant(A=np.diag([2.0, 0.5]), q_op=3.0)
    assert co.M_A >= 2.0
    assert np.allclose(co.A_at((0.1, 0.2)), np.diag([2.0, 0.5]))
    assert co.q_at((0.0, 0.0), "op") == pytest.approx(3.0)
    with pytest.raises(RejectedInput):
        CoeffData.constant(A=np.diag([2.0, 0.5]), M_A=1.5)  # ellipticity violated
    with pytest.raises(RejectedInput):
        CoeffData.constant(q_op=3.0, C_Q=2.0)               # Q out of [1/C, C]


def test_coeffdata_hoelder_sampling():
    n = 33
    coords = np.linspace(-2, 2, n)
    X, _ = np.meshgrid(coords, coords, indexing="ij")
    rough = 1.0 + 0.5 * np.sign(X)   # a jump: Hoelder quotient blows up
    ones = np.ones((n, n))
    with pytest.raises(RejectedInput):
        CoeffData(rough, 0 * ones, rough, ones, ones, ones, 0 * ones, 0 * ones,
                  (0, 0), 4.0 / (n - 1), C_A=0.1, M_A=2.0)


def test_delta_min():
    co = CoeffData.constant(delta_A=0.4, delta_Q=0.7)
    assert co.delta_min(0.5) == pytest.approx(0.4)
    assert co.delta_min(0.2) == pytest.approx(0.2)


def test_csv_roundtrip(tmp_path):
    f = ScalarField2D.from_function(lambda X, Y: X * Y + 0.3, 17, 0.8,
                                    center=(0.25, -0.5))
    path = tmp_path / "field.csv"
    f.to_csv(path)
    g = ScalarField2D.from_csv(path)
    assert np.allclose(g.values, f.values)
    assert g.spacing == pytest.approx(f.spacing)
    assert np.allclose(g.center, f.center)


def test_binary_roundtrip(tmp_path):
    f = ScalarField2D.from_function(lambda X, Y: np.abs(X) + 0.1, 17, 0.8,
                                    sign_mode="nonnegative").with_lipschitz()
    path = tmp_path / "field.bin"
    f.to_binary(path)
    g = ScalarField2D.from_binary(path)
    assert np.array_equal(g.values, f.values)
    assert g.sign_mode == "nonnegative"
    assert g.lipschitz_bound == pytest.approx(f.lipschitz_bound)
    with open(path, "rb") as fh:
        assert fh.read(4) == b"FBL1"
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(RejectedInput):
        ScalarField2D.from_binary(bad)
