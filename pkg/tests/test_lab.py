import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eshelby_lab.errors import Rejection
from eshelby_lab.geometry import Box, Difference, Ellipsoid, Superellipsoid, ball
from eshelby_lab.lab import (
    Verdict,
    _cone,
    appendix_checks,
    axis_ratios,
    check_theorem1,
    check_theorem2,
    ellipsoid_from_hessian,
    find_potential_minimum,
    flux_test,
    hessian_N,
    inscribed_scale,
    materials_independent,
)
from eshelby_lab.materials import LameMaterial, random_rotation
from eshelby_lab.potentials import QuadSpec, build_quadrature, ferrers_coefficients
from eshelby_lab.rng import make_rng

UNIT = LameMaterial(1.0, 1.0)
Q48 = QuadSpec(48)


@given(st.lists(st.floats(0.2, 1.0), min_size=2, max_size=2), st.integers(0, 1000))
def test_ellipsoid_from_hessian_round_trip(b, seed):
    a = np.array([1.0, *b])
    R = random_rotation(make_rng(seed))
    h = R @ np.diag(2 * ferrers_coefficients(a)[1]) @ R.T
    e = ellipsoid_from_hessian(h, scale_hint=1.0)
    assert np.allclose(axis_ratios(e), np.sort(a)[::-1], rtol=1e-7)
    # same quadratic form: E^T diag(1/a^2) E is frame independent
    A_in = R @ np.diag(a**-2.0) @ R.T
    A_out = e.rotation @ np.diag(e.semi_axes**-2.0) @ e.rotation.T
    assert np.allclose(A_in, A_out, rtol=1e-6, atol=1e-6)


@pytest.mark.parametrize("h, match", [
    (np.diag([0.5, 0.5, 0.5]), "trace"),
    (np.diag([1.2, 0.1, -0.3]), "positive definite"),
    (np.array([[0.4, 0.1, 0], [0, 0.3, 0], [0, 0, 0.3]]), "symmetric"),
    (np.ones((2, 2)), "symmetric"),
])
def test_ellipsoid_from_hessian_rejections(h, match):
    with pytest.raises(Rejection, match=match):
        ellipsoid_from_hessian(h)


def test_ellipsoid_from_hessian_rejects_unreachable_ratio():
    # a nearly flat Hessian eigenvalue asks for an axis ratio beyond 1e3
    with pytest.raises(Rejection, match="semi-axis"):
        ellipsoid_from_hessian(np.diag([1e-7, 0.5 - 5e-8, 0.5 - 5e-8]))


def test_inscribed_scale_ball_in_box():
    t = inscribed_scale(ball(1.0), Box(np.full(3, 0.5)), samples=20000)
    assert t == pytest.approx(0.5, abs=5e-3) and t >= 0.5 - 1e-12


def test_inscribed_scale_rejects_outside_center():
    with pytest.raises(Rejection, match="outside"):
        inscribed_scale(ball(1.0, (3.0, 0, 0)), ball(1.0))


def test_potential_minimum_of_offset_ball():
    c = np.array([0.2, -0.1, 0.05])
    mn = find_potential_minimum(ball(1.0, c), Q48)
    assert np.allclose(mn.M, c, atol=1e-5)
    assert np.allclose(mn.hessian, np.eye(3) / 3, atol=1e-4)
    assert mn.gradient_norm < 1e-5


def test_potential_minimum_rejects_nonconvex():
    shell = Difference(ball(1.0), ball(0.5))
    with pytest.raises(Rejection, match="convex"):
        find_potential_minimum(shell, QuadSpec(16))


def test_hessian_of_N_inside_an_ellipsoid_is_ferrers(ref_ellipsoid):
    q = build_quadrature(ref_ellipsoid, QuadSpec())
    H = hessian_N(q, [[0.0, 0.0, 0.0], [0.4, -0.2, 0.1]])
    ref = np.diag(2 * ferrers_coefficients(ref_ellipsoid.semi_axes)[1])
    assert np.allclose(H, ref, atol=5e-5)


def test_theorem1_ellipsoid_is_consistent(ref_ellipsoid):
    r = check_theorem1(ref_ellipsoid, UNIT, 1.0, 2.0, Q48)
    assert r.consistent and r.hessian_posdef
    assert r.residual_x3 < 1e-3 and r.trace_err < 1e-3
    assert np.allclose(axis_ratios(r.ellipsoid_E), [1.0, 0.7, 0.4], atol=2e-4)
    assert r.n_columns >= 3 and r.n_probes == 7 * r.n_columns
    assert r.constants.gamma == pytest.approx(0.0, abs=1e-14)


def test_theorem1_cube_is_inconsistent():
    r = check_theorem1(Box(np.full(3, 0.5)), UNIT, 1.0, 2.0, Q48)
    assert not r.consistent and r.residual_x3 > 1e-2


@pytest.mark.parametrize("kw, match", [(dict(k1=1.0, k3=1.0), "k1 != k3"), (dict(k1=1.0, k3=2.0, per_column=3), "5 samples")])
def test_theorem1_argument_rejections(ref_ellipsoid, kw, match):
    with pytest.raises(Rejection, match=match):
        check_theorem1(ref_ellipsoid, UNIT, quad=QuadSpec(8), **kw)


def test_materials_independence():
    assert not materials_independent(LameMaterial(1, 1), LameMaterial(2, 2))[0]
    ok, det = materials_independent(LameMaterial(1, 1), LameMaterial(0.5, 1))
    assert ok and det == pytest.approx(0.5)


def test_theorem2_dependent_materials_skip(ref_ellipsoid):
    r = check_theorem2(ref_ellipsoid, [LameMaterial(1, 1), LameMaterial(2, 2)], 1.0, 2.0)
    assert r.verdict is Verdict.SKIPPED and r.fit is None and r.n_probes == 0


@pytest.mark.parametrize("shape, verdict", [
    (Ellipsoid(np.array([1.0, 0.7, 0.4])), Verdict.ELLIPSOID_CONSISTENT),
    (Box(np.full(3, 0.5)), Verdict.NOT_ELLIPSOID),
    (Superellipsoid(np.array([1.0, 0.8, 0.6]), 4.0), Verdict.NOT_ELLIPSOID),
], ids=["ellipsoid", "cube", "superellipsoid4"])
def test_theorem2_verdicts(shape, verdict):
    r = check_theorem2(shape, [LameMaterial(1, 1), LameMaterial(0.5, 1)], 1.0, 2.0, Q48)
    assert r.verdict is verdict and r.independent


def test_theorem2_needs_two_materials(ref_ellipsoid):
    with pytest.raises(Rejection, match="two materials"):
        check_theorem2(ref_ellipsoid, [UNIT], 1.0, 2.0)


def test_flux_offset_ball_is_positive():
    r = flux_test(ball(1.0), ball(0.5, (0.3, 0.0, 0.0)), UNIT, 1.0, 2.0, n=48, cone_directions=10)
    assert r.t_star == pytest.approx(0.8, abs=1e-9)
    assert np.allclose(r.Q, [0.8, 0, 0], atol=1e-9) and r.unique_contact
    assert r.n_dot_F > 0 and r.n_dot_F > 3 * r.est_error
    assert r.cone_min > 0


def test_flux_vanishes_when_omega_is_E(ref_ellipsoid):
    r = flux_test(ref_ellipsoid, ref_ellipsoid, n=32)
    assert r.t_star == pytest.approx(1.0)
    assert np.linalg.norm(r.F_at_Q) <= 3 * r.est_error
    assert r.shell_volume == 0.0


def test_flux_rejects_equal_eigenvalues():
    with pytest.raises(Rejection):
        flux_test(ball(1.0), ball(0.5), UNIT, 1.0, 1.0)


def test_cone_directions():
    n = np.array([1.0, 2.0, -0.5])
    n /= np.linalg.norm(n)
    d = _cone(n, 15, 10.0)
    assert len(d) == 15
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
    assert np.all(d @ n >= math.cos(math.radians(10.0)) - 1e-12)
    assert np.allclose(_cone(np.array([0, 0, -1.0]), 3, 5.0)[:, 2], -1.0, atol=1 - math.cos(math.radians(5)))


@settings(max_examples=3)
@given(st.integers(0, 100))
def test_appendix_ellipsoid_mixed_derivatives_constant(seed):
    e = Ellipsoid(np.array([1.0, 0.8, 0.6]), rotation=random_rotation(make_rng(seed)))
    r = appendix_checks(e, QuadSpec(32), resolution=48, n_probes=10, seed=seed)
    assert r.mixed_constant and max(r.mixed_dev.values()) < 1e-2
    assert r.identical_case_err < 5e-2


def test_appendix_cube_mixed_derivatives_vary():
    r = appendix_checks(Box(np.full(3, 0.5)), QuadSpec(32), resolution=32, n_probes=10)
    assert not r.mixed_constant and max(r.mixed_dev.values()) > 1e-2
