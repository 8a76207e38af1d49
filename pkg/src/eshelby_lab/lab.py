"""
Numerical checks of the shape conditions attached to the uniformity property.

* ``check_theorem1``: builds the ellipsoid E whose Newtonian potential has the
  same Hessian as N_Omega at its interior minimum and measures how much
  D = N_Omega - N_E depends on x3 inside E.
* ``check_theorem2``: with two independent isotropic materials the interior
  potential must be quadratic; decided by a least-squares quadratic fit.
* ``flux_test``: the vector F(Q) integrated over the shell between Omega and
  the smallest scaled ellipsoid E* containing it, at the contact point Q.
* ``appendix_checks``: constancy of mixed second derivatives of N and the
  all-equal field identity grad_u = k/(lam + 2 mu) HessN.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import Rejection
from .fields import default_erosion, interior_nodes, solve_spectral
from .geometry import (
    Ellipsoid,
    GridSpec,
    Shape,
    contact_scale,
    sample_interior,
    scale_about_origin,
    voxelize,
)
from .materials import LameMaterial, MaterialConstants, material_constants
from .potentials import (
    QuadraticForm,
    Quadrature,
    _as_quadrature,
    evaluate_raw,
    ferrers_coefficients,
    newtonian_ellipsoid,
    quadratic_fit,
)
from .rng import make_rng

__all__ = [
    "MinimumResult",
    "Theorem1Report",
    "Theorem2Report",
    "Verdict",
    "FluxReport",
    "AppendixReport",
    "hessian_N",
    "find_potential_minimum",
    "ellipsoid_from_hessian",
    "inscribed_scale",
    "check_theorem1",
    "check_theorem2",
    "flux_test",
    "flux_integral",
    "appendix_checks",
    "axis_ratios",
]

RATIO_BOUNDS = (1e-3, 1e3)


def hessian_N(quad: Quadrature, points, step: Optional[float] = None) -> np.ndarray:
    """Second derivatives of N by central differences of the kernel gradient.

    Returns (P, 3, 3), symmetrised; ``step`` defaults to one quadrature cell.
    """
    h = quad.spacing if step is None else float(step)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    E = np.eye(3)
    stencil = np.concatenate([np.concatenate([x + h * E, x - h * E]) for x in pts])
    g = evaluate_raw(quad, stencil, ("gN",), np.repeat(pts, 6, axis=0))["gN"].reshape(len(pts), 2, 3, 3)
    H = np.swapaxes((g[:, 0] - g[:, 1]) / (2 * h), 1, 2)
    return 0.5 * (H + np.swapaxes(H, 1, 2))


@dataclass(frozen=True)
class MinimumResult:
    M: np.ndarray
    hessian: np.ndarray
    gradient_norm: float
    iterations: int


def find_potential_minimum(shape: Shape, quad=None, scan: int = 6, max_iter: int = 6,
                           step_tol: float = 1e-7) -> MinimumResult:
    """Interior minimum of N: coarse scan, then Newton steps on the kernel gradient.

    The Hessian is the central-difference Jacobian of grad N at the minimum.
    """
    if not shape.convex:
        raise Rejection("find_potential_minimum requires a shape declared convex")
    q = _as_quadrature(shape, quad)
    lo, hi = shape.bounds()
    ax = [lo[i] + (np.arange(scan) + 0.5) / scan * (hi[i] - lo[i]) for i in range(3)]
    pts = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1).reshape(-1, 3)
    pts = pts[shape.contains(pts)]
    if len(pts) == 0:
        raise Rejection("no scan point falls inside the shape; increase scan")
    vals = evaluate_raw(q, pts, ("N",))["N"]
    x = pts[int(np.argmin(vals))].copy()
    size = float((hi - lo).max())
    it = 0
    for it in range(1, max_iter + 1):
        g = evaluate_raw(q, x, ("gN",))["gN"][0]
        H = hessian_N(q, x)[0]
        if np.linalg.eigvalsh(H)[0] <= 0:
            raise Rejection("Hessian of N is not positive definite along the search; no interior minimum")
        step = np.linalg.solve(H, g)
        x = x - step
        if np.linalg.norm(step) < step_tol * size:
            break
    h = q.spacing
    if not np.all(shape.contains(x + h * np.vstack([np.eye(3), -np.eye(3)]))):
        raise Rejection("potential minimum lies on the boundary (non-convex or degenerate input)")
    g = evaluate_raw(q, x, ("gN",))["gN"][0]
    return MinimumResult(x, hessian_N(q, x)[0], float(np.linalg.norm(g)), it)


def _ellipsoid_residual(z, w):
    a = np.exp(np.concatenate([[0.0], z]))
    return 2.0 * ferrers_coefficients(a)[1][1:] - w[1:]


def ellipsoid_from_hessian(h, scale_hint: float = 1.0, center=(0.0, 0.0, 0.0),
                           trace_tol: float = 1e-2, residual_tol: float = 1e-8) -> Ellipsoid:
    """Ellipsoid whose interior Newtonian potential has Hessian ``h``.

    ``h`` is rescaled to unit trace, diagonalised, and the semi-axis ratios
    solved from 2 c_i(a) = h_i by least squares on the two log-ratios.  The
    largest semi-axis equals ``scale_hint``.
    """
    h = np.asarray(h, dtype=float)
    if h.shape != (3, 3) or not np.allclose(h, h.T, rtol=1e-10, atol=1e-14):
        raise Rejection("Hessian must be a symmetric 3x3 matrix")
    tr = float(np.trace(h))
    if not abs(tr - 1.0) < trace_tol:
        raise Rejection(f"Hessian trace {tr:.6g} violates |tr - 1| < {trace_tol}")
    w, V = np.linalg.eigh(h / tr)
    if w[0] <= 0:
        raise Rejection("Hessian is not positive definite")
    if np.linalg.det(V) < 0:
        V[:, 2] = -V[:, 2]
    lo, hi = (math.log(b) for b in RATIO_BOUNDS)
    if w[-1] - w[0] <= 1e-14:
        z = np.zeros(2)
    else:
        z0 = np.clip(0.5 * np.log(w[0] / w[1:]), lo + 1e-9, hi - 1e-9)
        sol = optimize.least_squares(_ellipsoid_residual, z0, args=(w,), bounds=(lo, hi),
                                     xtol=1e-15, ftol=1e-15, gtol=1e-15)
        z = sol.x
    res = _ellipsoid_residual(z, w)
    if np.abs(res).max() > residual_tol:
        raise Rejection(f"no semi-axis ratios within {RATIO_BOUNDS} reproduce the Hessian "
                        f"(residual {np.abs(res).max():.3g})")
    a = np.exp(np.concatenate([[0.0], z]))
    return Ellipsoid(scale_hint * a, np.asarray(center, dtype=float), V)


def axis_ratios(e: Ellipsoid) -> np.ndarray:
    """Semi-axes sorted in decreasing order, divided by the largest."""
    a = np.sort(e.semi_axes)[::-1]
    return a / a[0]


def inscribed_scale(e: Ellipsoid, omega: Shape, samples: int = 4000, iters: int = 60) -> float:
    """Largest t with the boundary samples of t*E (scaled about its center) inside omega."""
    u = e.boundary_samples(samples) - e.center

    def fits(t):
        return bool(np.all(omega.contains(e.center + t * u)))

    if not omega.contains(e.center):
        raise Rejection("ellipsoid center is outside omega")
    lo, hi = 0.0, 1.0
    while fits(hi):
        lo, hi = hi, 2 * hi
        if hi > 1e6:
            raise Rejection("omega does not bound the scaled ellipsoid")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if fits(mid) else (lo, mid)
    if lo == 0.0:
        raise Rejection("no positive scale of the ellipsoid fits inside omega")
    return lo


@dataclass(frozen=True)
class Theorem1Report:
    min_point: np.ndarray
    hessian: np.ndarray
    hessian_posdef: bool
    trace_err: float
    ellipsoid_E: Ellipsoid
    residual_x3: float
    consistent: bool
    threshold: float
    n_columns: int
    n_probes: int
    constants: MaterialConstants


def _columns(e: Ellipsoid, columns: int, per_column: int, fill: float = 0.8):
    """Probe columns parallel to x3, on a regular (x1, x2) lattice inside E."""
    lo, hi = e.bounds()
    c = e.center
    R, a = e.rotation, e.semi_axes
    d = R.T @ np.array([0.0, 0.0, 1.0]) / a
    span = [c[i] + fill * (np.arange(columns) + 0.5) / columns * (hi[i] - lo[i]) - fill * 0.5 * (hi[i] - lo[i])
            for i in range(2)]
    x3_ext = hi[2] - lo[2]
    out = []
    for x1 in span[0]:
        for x2 in span[1]:
            p0 = np.array([x1, x2, c[2]])
            y = R.T @ (p0 - c) / a
            A, B, C = d @ d, 2 * y @ d, y @ y - 1.0
            disc = B * B - 4 * A * C
            if disc <= 0:
                continue
            s1, s2 = (-B - math.sqrt(disc)) / (2 * A), (-B + math.sqrt(disc)) / (2 * A)
            if s2 - s1 < 0.2 * x3_ext:
                continue
            mid, half = 0.5 * (s1 + s2), 0.5 * fill * (s2 - s1)
            s = mid + np.linspace(-half, half, per_column)
            out.append(p0 + s[:, None] * np.array([0.0, 0.0, 1.0]))
    return out


def check_theorem1(shape: Shape, material: LameMaterial, k1: float, k3: float, quad=None,
                   columns: int = 7, per_column: int = 7, threshold: float = 1e-2,
                   trace_tol: float = 2e-2) -> Theorem1Report:
    """Minimum, Hessian, ellipsoid E and the x3-dependence of N_Omega - N_E inside E.

    residual_x3 is the RMS over all probes of D minus its column mean,
    divided by the standard deviation of N_Omega over the same probes.  A
    small value is consistent with the necessary condition; a large one is
    inconsistent with it for this material and eigenstress.
    """
    if k1 == k3:
        raise Rejection("check_theorem1 needs k1 != k3")
    if per_column < 5:
        raise Rejection("each probe column needs at least 5 samples")
    material.require_admissible()
    consts = material_constants(material, k1, k3)
    q = _as_quadrature(shape, quad)
    mn = find_potential_minimum(shape, q)
    H = mn.hessian
    posdef = bool(np.linalg.eigvalsh(H)[0] > 0)
    trace_err = abs(float(np.trace(H)) - 1.0)
    E1 = ellipsoid_from_hessian(H, 1.0, mn.M, trace_tol=trace_tol)
    t = inscribed_scale(E1, shape)
    E = Ellipsoid(E1.semi_axes * t, mn.M, E1.rotation, True)
    cols = _columns(E, columns, per_column)
    if len(cols) < 3:
        raise Rejection("too few probe columns fit inside E")
    pts = np.concatenate(cols)
    n_omega = evaluate_raw(q, pts, ("N",))["N"]
    D = (n_omega - newtonian_ellipsoid(E)(pts)).reshape(len(cols), per_column)
    dev = D - D.mean(axis=1, keepdims=True)
    scale = float(np.std(n_omega))
    resid = float(np.sqrt(np.mean(dev**2)) / scale) if scale > 0 else 0.0
    return Theorem1Report(mn.M, H, posdef, trace_err, E, resid, resid < threshold, threshold,
                          len(cols), len(pts), consts)


class Verdict(enum.Enum):
    ELLIPSOID_CONSISTENT = "ellipsoid-consistent"
    NOT_ELLIPSOID = "not-ellipsoid"
    SKIPPED = "skipped"


@dataclass(frozen=True)
class Theorem2Report:
    independent: bool
    determinant: float
    fit: Optional[QuadraticForm]
    verdict: Verdict
    threshold: float
    n_probes: int


def materials_independent(m1: LameMaterial, m2: LameMaterial, tol: float = 1e-12) -> tuple[bool, float]:
    """Linear independence of two isotropic tensors: lam1 mu2 - lam2 mu1 != 0 (scaled)."""
    a, b = m1.lam * m2.mu, m2.lam * m1.mu
    det = a - b
    return abs(det) > tol * max(abs(a), abs(b), abs(m1.mu * m2.mu)), det


def check_theorem2(shape: Shape, materials: Sequence[LameMaterial], k1: float, k3: float, quad=None,
                   n_probes: int = 60, seed: int = 0, threshold: float = 1e-3,
                   margin_frac: float = 0.1) -> Theorem2Report:
    """Quadratic-interior test of N_Omega, gated on independence of the two materials."""
    if k1 == k3:
        raise Rejection("check_theorem2 needs k1 != k3")
    if len(materials) != 2:
        raise Rejection("check_theorem2 takes exactly two materials")
    for m in materials:
        m.require_admissible()
    indep, det = materials_independent(*materials)
    if not indep:
        return Theorem2Report(False, det, None, Verdict.SKIPPED, threshold, 0)
    fit, n = interior_fit(shape, quad, n_probes, seed, margin_frac)
    verdict = Verdict.ELLIPSOID_CONSISTENT if fit.fit_rms < threshold else Verdict.NOT_ELLIPSOID
    return Theorem2Report(True, det, fit, verdict, threshold, n)


def interior_fit(shape: Shape, quad=None, n_probes: int = 60, seed: int = 0,
                 margin_frac: float = 0.1) -> tuple[QuadraticForm, int]:
    """Quadratic fit of N at random interior probes (margin relative to the smallest half-extent)."""
    q = _as_quadrature(shape, quad)
    margin = margin_frac * 0.5 * float(shape.extent.min())
    pts = sample_interior(shape, n_probes, make_rng(seed, 1), margin)
    vals = evaluate_raw(q, pts, ("N",))["N"]
    return quadratic_fit(pts, vals), len(pts)


# --- flux test ---------------------------------------------------------------

@dataclass(frozen=True)
class FluxReport:
    Q: np.ndarray
    n: np.ndarray
    F_at_Q: np.ndarray
    n_dot_F: float
    shell_volume: float
    est_error: float
    t_star: float
    unique_contact: bool
    cone_min: Optional[float] = None


def flux_integral(e_star: Ellipsoid, omega: Shape, Q, n: int = 64, subsamples: int = 4):
    """F(Q) = 3/(4 pi) sum over the shell of (Q3 - y3)^2 (Q - y) / |Q - y|^5.

    Shell weights are occupancy(E*) - occupancy(omega), clamped to [0, 1], on a
    cubic-voxel grid around E*.  Returns (F, shell volume, roundoff bound).
    """
    lo, hi = e_star.bounds()
    h = float((hi - lo).max()) / n
    counts = np.ceil((hi - lo) / h - 1e-9).astype(int) + 2
    lengths = counts * h
    grid = GridSpec(tuple(int(c) for c in counts), 0.5 * (lo + hi) - 0.5 * lengths, lengths)
    fe = voxelize(e_star, grid, subsamples, check_connected=False).fractions
    fo = voxelize(omega, grid, subsamples, check_connected=False).fractions
    d = np.clip(fe - fo, 0.0, 1.0)
    idx = np.argwhere(d > 0)
    if len(idx) == 0:
        return np.zeros(3), 0.0, 0.0
    y = grid.centers()[tuple(idx.T)]
    w = d[tuple(idx.T)] * grid.voxel_volume
    u = np.asarray(Q, dtype=float) - y
    r2 = (u * u).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(r2 > 0, 3.0 * u[:, 2] ** 2 / (4 * math.pi * r2**2.5), 0.0)
    terms = (w * k)[:, None] * u
    F = terms.sum(axis=0)
    roundoff = 64 * np.finfo(float).eps * float(np.abs(terms).sum())
    return F, float(w.sum()), roundoff


def flux_test(E: Ellipsoid, omega: Shape, material: Optional[LameMaterial] = None,
              k1: Optional[float] = None, k3: Optional[float] = None, n: int = 64,
              subsamples: int = 4, samples: int = 20000,
              cone_directions: int = 0, cone_angle_deg: float = 10.0) -> FluxReport:
    """F(Q) at the contact point of the minimal scaled ellipsoid E* containing omega.

    E* = t_star E with t_star from ``contact_scale``, so omega lies inside E*
    and touches it at Q.  F involves no material symbols; ``material``, ``k1``
    and ``k3`` are only validated.  est_error combines |F(n) - F(n/2)| with a roundoff bound.
    ``cone_directions > 0`` also reports the smallest d.F over that many unit
    directions d within ``cone_angle_deg`` of n.
    """
    if material is not None:
        material.require_admissible()
    if k1 is not None and k3 is not None and k1 == k3:
        raise Rejection("flux_test needs k1 != k3")
    contact = contact_scale(E, omega, samples)
    t = contact.t_star
    e_star = scale_about_origin(E, t)
    if np.any(e_star.gauge(omega.boundary_samples(samples)) > 1.0 + 1e-9):
        raise Rejection("omega is not inside E* at its sampled boundary points")
    Q, nrm = contact.Q, e_star.outward_normal(contact.Q)
    F, vol, rnd = flux_integral(e_star, omega, Q, n, subsamples)
    Fc, _, rndc = flux_integral(e_star, omega, Q, max(n // 2, 4), subsamples)
    err = float(np.linalg.norm(F - Fc)) + rnd + rndc
    cone_min = None
    if cone_directions > 0:
        cone_min = float(np.min(_cone(nrm, cone_directions, cone_angle_deg) @ F))
    return FluxReport(Q, nrm, F, float(nrm @ F), vol, err, t, contact.unique, cone_min)


def _cone(n, count, angle_deg):
    # Fibonacci spiral on the spherical cap around +z (area-uniform in z)
    i = np.arange(count) + 0.5
    z = 1.0 - (1.0 - math.cos(math.radians(angle_deg))) * i / count
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    rho = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    u = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    # rotate the +z cap onto n
    z = np.array([0.0, 0.0, 1.0])
    v = np.cross(z, n)
    s, c = np.linalg.norm(v), float(z @ n)
    if s < 1e-15:
        R = np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    else:
        K = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
        R = np.eye(3) + K + K @ K * ((1 - c) / s**2)
    return u @ R.T


# --- appendix ----------------------------------------------------------------

@dataclass(frozen=True)
class AppendixReport:
    mixed_dev: dict
    mixed_mean: dict
    mixed_constant: bool
    identical_case_err: float
    threshold: float
    n_probes: int
    n_field_probes: int


def appendix_checks(shape: Shape, quad=None, resolution: int = 128, padding: float = 3.0,
                    subsamples: int = 8, material: LameMaterial = LameMaterial(1.0, 1.0), k: float = 1.0,
                    n_probes: int = 30, seed: int = 0, margin_frac: float = 0.1,
                    threshold: float = 1e-2) -> AppendixReport:
    """Mixed-derivative constancy of N and the all-equal field identity.

    mixed_dev[ij] is the standard deviation of d_i d_j N over interior probes
    divided by the mean of tr(HessN) over the same probes (which is 1 in the
    continuum).  identical_case_err is the largest relative Frobenius
    difference between the spectral grad_u for sigma = k I and
    k / (lam + 2 mu) HessN, over eroded interior nodes.
    """
    q = _as_quadrature(shape, quad)
    rng = make_rng(seed, 2)
    margin = margin_frac * 0.5 * float(shape.extent.min())
    pts = sample_interior(shape, n_probes, rng, margin)
    H = hessian_N(q, pts)
    tr = float(np.mean(np.trace(H, axis1=1, axis2=2)))
    dev = {f"{i + 1}{j + 1}": float(np.std(H[:, i, j]) / tr) for i, j in ((0, 1), (0, 2), (1, 2))}
    mean = {f"{i + 1}{j + 1}": float(np.mean(H[:, i, j])) for i, j in ((0, 1), (0, 2), (1, 2))}

    grid = GridSpec.for_shape(shape, resolution, padding)
    mask = voxelize(shape, grid, subsamples, check_connected=False)
    fld = solve_spectral(mask, material, k * np.eye(3))
    idx, _ = interior_nodes(mask, default_erosion(mask, shape), min_count=n_probes)
    sel = idx[np.sort(rng.choice(len(idx), n_probes, replace=False))]
    nodes = grid.centers()[tuple(sel.T)]
    ref = k / (material.lam + 2 * material.mu) * hessian_N(q, nodes)
    G = fld.at_index(sel)
    err = np.linalg.norm(G - ref, axis=(1, 2)) / np.linalg.norm(ref, axis=(1, 2))
    return AppendixReport(dev, mean, all(v < threshold for v in dev.values()), float(err.max()),
                          threshold, len(pts), len(sel))
