import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from eshelby_lab.errors import Rejection
from eshelby_lab.geometry import Box, Ellipsoid, ball
from eshelby_lab.materials import random_rotation
from eshelby_lab.potentials import (
    Method,
    PotentialKind,
    QuadSpec,
    biharmonic_H,
    build_quadrature,
    d2H_axis,
    evaluate,
    evaluate_raw,
    fd_bilaplacian,
    fd_jacobian,
    fd_laplacian,
    ferrers_coefficients,
    n_tilde,
    newtonian,
    newtonian_ellipsoid,
    potential_gradient,
    quadratic_fit,
    write_samples_csv,
)
from eshelby_lab.rng import make_rng

BALL = ball(1.0)


@pytest.mark.parametrize("x", [(0, 0, 0), (0.5, 0, 0), (0.3, -0.4, 0.2), (0.9, 0.1, 0), (2, 0, 0), (0, 1.3, 0.4)])
def test_newtonian_ball(x):
    s = newtonian(BALL, np.array(x, float))
    assert s.value == pytest.approx(float(oracles.ball_N(x)[0]), abs=1e-4)
    assert s.method is Method.QUADRATURE and s.est_error >= 0


@pytest.mark.parametrize("x", [(0, 0, 0), (0.5, 0, 0), (0, 0, 1.5)])
def test_biharmonic_ball(x):
    s = biharmonic_H(BALL, np.array(x, float))
    assert s.value == pytest.approx(float(oracles.ball_H(x)[0]), abs=1e-4)


def test_ntilde_ball_origin():
    for q in range(3):
        assert n_tilde(BALL, np.zeros(3), q).value == pytest.approx(oracles.ball_ntilde_origin(), abs=1e-4)


def test_ntilde_axes_sum_to_N():
    # sum_q (x_q - y_q)^2 / r^3 = 1 / r, so the three companions add up to N
    q = build_quadrature(Ellipsoid(np.array([1.0, 0.6, 0.5])), QuadSpec(32))
    x = np.array([[0.1, 0.2, -0.1], [1.2, 0.0, 0.3]])
    r = evaluate_raw(q, x, ("N", "Nt"))
    assert np.allclose(r["Nt"].sum(axis=1), r["N"], rtol=1e-12)


@given(st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3))
def test_ferrers_matches_carlson(a):
    c0, c = ferrers_coefficients(a)
    r0, rc = oracles.ferrers_carlson(a)
    assert c0 == pytest.approx(r0, rel=1e-10)
    assert np.allclose(c, rc, rtol=1e-11)
    # the interior Laplacian of N is 1
    assert 2 * c.sum() == pytest.approx(1.0, rel=1e-12)


def test_quadrature_reproduces_the_ferrers_quadratic():
    rng = make_rng(4)
    e = Ellipsoid(np.array([1.0, 0.6, 0.45]), np.array([0.2, -0.1, 0.0]), random_rotation(rng))
    exact = newtonian_ellipsoid(e)
    pts = e.center + 0.5 * (e.boundary_samples(10) - e.center)
    vals = evaluate_raw(build_quadrature(e, QuadSpec()), pts, ("N",))["N"]
    assert np.allclose(vals, exact(pts), atol=5e-5)


def test_newtonian_ellipsoid_rejects_outside_point(ref_ellipsoid):
    with pytest.raises(Rejection):
        newtonian_ellipsoid(ref_ellipsoid, [2.0, 0.0, 0.0])


def _one_cell_probes(shape, h, count=4, seed=0):
    u = make_rng(seed).normal(size=(count, 3))
    b = u / shape.gauge(u)[:, None]
    n = shape.outward_normal(b)
    return np.vstack([b - h * n, b + h * n]), np.r_[np.ones(count), np.zeros(count)]


def test_laplacian_of_N_is_the_indicator_near_the_boundary():
    q = build_quadrature(BALL, QuadSpec(48))
    h = q.spacing
    pts, chi = _one_cell_probes(BALL, h)
    lap = [fd_laplacian(lambda p, x=x: evaluate_raw(q, p, ("N",), x)["N"], x, h) for x in pts]
    assert np.allclose(lap, chi, atol=5e-3)


def test_bilaplacian_of_H_is_the_indicator_near_the_boundary():
    q = build_quadrature(BALL, QuadSpec(48))
    h = q.spacing
    pts, chi = _one_cell_probes(BALL, h, count=2)
    bil = [fd_bilaplacian(lambda p, x=x: evaluate_raw(q, p, ("H",), x)["H"], x, h / 2) for x in pts]
    assert np.allclose(bil, chi, atol=1e-2)


def test_d2H_closed_form_matches_finite_differences_of_H(ref_ellipsoid):
    q = build_quadrature(ref_ellipsoid, QuadSpec(48))
    h = q.spacing / 4
    x = np.array([[0.2, 0.1, 0.05], [1.3, 0.0, 0.2]])
    for axis in range(3):
        closed = np.array([d2H_axis(ref_ellipsoid, p, axis, q).value for p in x])
        e = h * np.eye(3)[axis]
        fd = np.array([
            (lambda v: (v[0] - 2 * v[1] + v[2]) / h**2)(
                evaluate_raw(q, np.array([p + e, p, p - e]), ("H",), p)["H"])
            for p in x
        ])
        assert np.allclose(fd, closed, rtol=0, atol=1e-5)


def test_kernel_gradient_matches_finite_differences(ref_ellipsoid):
    q = build_quadrature(ref_ellipsoid, QuadSpec(32))
    x = np.array([0.3, -0.2, 0.1])
    g = potential_gradient(ref_ellipsoid, x, PotentialKind.N, quad=q)
    fd = fd_jacobian(lambda p: evaluate_raw(q, p, ("N",), x)["N"], x, 1e-4)
    # both sides carry the quadrature error of the near-field rule
    assert np.allclose(np.ravel(g), fd, atol=2e-4 * np.abs(fd).max())


def test_evaluate_axis_validation(ref_ellipsoid):
    with pytest.raises(Rejection):
        evaluate(ref_ellipsoid, np.zeros((1, 3)), PotentialKind.D2H, axis=3, quad=QuadSpec(16))


def test_unknown_quantity_rejected(ref_ellipsoid):
    with pytest.raises(Rejection):
        evaluate_raw(build_quadrature(ref_ellipsoid, QuadSpec(16)), np.zeros((1, 3)), ("Q",))


@settings(max_examples=5)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_translation_covariance(shift):
    shift = np.asarray(shift)
    box = Box(np.array([0.5, 0.4, 0.3]))
    moved = Box(np.array([0.5, 0.4, 0.3]), shift)
    x = np.array([0.1, 0.2, 0.0])
    a = evaluate_raw(build_quadrature(box, QuadSpec(24)), x, ("N", "H"))
    b = evaluate_raw(build_quadrature(moved, QuadSpec(24)), x + shift, ("N", "H"))
    assert a["N"][0] == pytest.approx(b["N"][0], rel=1e-9)
    assert a["H"][0] == pytest.approx(b["H"][0], rel=1e-9)


def test_quadratic_fit_recovers_an_exact_quadratic():
    rng = make_rng(1)
    A = np.array([[1.0, 0.2, -0.1], [0.2, 0.5, 0.0], [-0.1, 0.0, 0.3]])
    b = np.array([0.1, -0.2, 0.3])
    X = rng.uniform(-1, 1, (40, 3)) + 5.0
    y = 0.7 + X @ b + np.einsum("ni,ij,nj->n", X, A, X)
    f = quadratic_fit(X, y)
    assert np.allclose(f.A, A, atol=1e-9) and np.allclose(f.b, b, atol=1e-7)
    assert f.c0 == pytest.approx(0.7, abs=1e-6)
    assert f.fit_rms < 1e-10
    assert np.allclose(f.hessian, 2 * A, atol=1e-9)
    assert f.laplacian == pytest.approx(2 * np.trace(A), abs=1e-9)


def test_quadratic_fit_rejects_degenerate_designs():
    with pytest.raises(Rejection, match="at least 10"):
        quadratic_fit(np.zeros((5, 3)), np.zeros(5))
    t = np.linspace(0, 1, 20)
    line = np.stack([t, 2 * t, -t], axis=1)
    with pytest.raises(Rejection, match="rank-deficient"):
        quadratic_fit(line, t**2)


def test_non_quadratic_data_have_a_large_residual():
    X = make_rng(2).uniform(-1, 1, (60, 3))
    y = np.abs(X).sum(axis=1) ** 3
    assert quadratic_fit(X, y).fit_rms > 1e-2


def test_samples_csv_layout(ref_ellipsoid):
    s = evaluate(ref_ellipsoid, np.array([[0.0, 0.0, 0.0]]), PotentialKind.NTILDE, axis=2, quad=QuadSpec(16))
    buf = io.StringIO()
    write_samples_csv(buf, s, ["tool = test"])
    lines = buf.getvalue().split("\n")
    assert lines[0] == "# tool = test"
    assert lines[1] == "x1,x2,x3,kind,axis,value,est_error,method"
    assert lines[2].split(",")[3:5] == ["Ntilde_axis", "3"]
