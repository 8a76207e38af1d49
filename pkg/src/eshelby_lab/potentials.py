"""
Real-space volume potentials of an inclusion.

    N(x)      = -1/(4 pi) int 1/|x-y| dy                 (Newtonian)
    H(x)      = -1/(8 pi) int |x-y| dy                   (biharmonic)
    Nt_q(x)   = -1/(4 pi) int (x_q-y_q)^2/|x-y|^3 dy
    d2H_q(x)  = d^2 H / dx_q^2 = (N - Nt_q) / 2

Quadrature runs over a partial-volume voxelization of the shape.  Far cells
use a one-point rule at the centroid of their occupied part; the block of
cells around the evaluation point is integrated exactly with the closed-form
box integrals in ``_prism`` (scaled by the cell's occupancy).  Error
estimates compare against the same rule on a grid with half the resolution.
"""

from __future__ import annotations

import enum
import functools
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy import integrate

from . import _prism
from .errors import Rejection
from .geometry import Ellipsoid, GridSpec, Shape, VoxelMask, voxelize

__all__ = [
    "QuadSpec",
    "Quadrature",
    "build_quadrature",
    "PotentialKind",
    "Method",
    "PotentialSample",
    "QuadraticForm",
    "newtonian",
    "biharmonic_H",
    "d2H_axis",
    "n_tilde",
    "potential_gradient",
    "evaluate",
    "evaluate_raw",
    "newtonian_ellipsoid",
    "ferrers_coefficients",
    "quadratic_fit",
    "fd_laplacian",
    "fd_bilaplacian",
    "fd_jacobian",
    "write_samples_csv",
]

FOUR_PI = 4.0 * math.pi
EIGHT_PI = 8.0 * math.pi


@dataclass(frozen=True)
class QuadSpec:
    """Quadrature resolution.

    ``n`` cells span the largest extent of the shape; ``subsamples`` sets the
    stratified sampling of boundary cells; ``near`` is the half-width (in
    cells) of the block integrated in closed form.
    """

    n: int = 64
    subsamples: int = 6
    near: int = 2

    def coarse(self) -> "QuadSpec":
        return QuadSpec(max(self.n // 2, 4), self.subsamples, self.near)


class Quadrature:
    """Voxel quadrature rule for one shape at one resolution."""

    def __init__(self, shape: Shape, spec: QuadSpec):
        self.shape = shape
        self.spec = spec
        if isinstance(shape, VoxelMask):
            mask = shape
            if mask.centroids is None:
                mask = VoxelMask(mask.grid, mask.fractions, mask.grid.centers(), check_connected=False)
        else:
            lo, hi = shape.bounds()
            h = float((hi - lo).max()) / spec.n
            counts = np.ceil((hi - lo) / h - 1e-9).astype(int) + 2
            lengths = counts * h
            origin = 0.5 * (lo + hi) - 0.5 * lengths
            grid = GridSpec(tuple(int(c) for c in counts), origin, lengths)
            mask = voxelize(shape, grid, spec.subsamples, with_centroids=True, check_connected=False)
        self.mask = mask
        self.grid = mask.grid
        self.h = self.grid.spacing
        if not np.allclose(self.h, self.h[0], rtol=1e-12):
            raise Rejection("quadrature requires cubic voxels")
        self.c2 = float(self.h[0]) ** 2 / 24.0
        f = mask.fractions
        occ = np.argwhere(f > 0)  # lexicographic order fixes the summation order
        self.nodes = np.ascontiguousarray(mask.centroids[occ[:, 0], occ[:, 1], occ[:, 2]])
        self.weights = f[occ[:, 0], occ[:, 1], occ[:, 2]] * self.grid.voxel_volume

    @property
    def spacing(self) -> float:
        return float(self.h[0])

    @property
    def volume(self) -> float:
        return float(self.weights.sum())


@functools.lru_cache(maxsize=16)
def build_quadrature(shape: Shape, spec: QuadSpec) -> Quadrature:
    return Quadrature(shape, spec)


def _as_quadrature(shape: Shape, quad) -> Quadrature:
    if isinstance(quad, Quadrature):
        return quad
    if quad is None:
        quad = QuadSpec()
    return build_quadrature(shape, quad)


# Quantities computed by the engine and their output shapes per point.
_GROUPS = {"N": (), "Nt": (3,), "gN": (3,), "gNt": (3, 3), "H": (), "gH": (3,)}
_SINGULAR = ("N", "Nt", "gN", "gNt", "H", "gH")
_CHUNK = 1 << 18


def _point_rule(u, w, want, out, c2=0.0):
    """Accumulate one-point-rule sums for relative vectors ``u = x - y``.

    ``c2 = h^2 / 24`` adds the second-order midpoint term w c2 (Laplacian of
    the kernel) for the kernels that are not harmonic (Nt, H and their
    gradients).  Without it the far-field error of Nt has Hessian O(1) in h,
    which finite differences of Nt pick up as a resolution-independent bias.
    """
    r2 = np.einsum("ij,ij->i", u, u)
    r = np.sqrt(r2)
    zero = r == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_r = np.where(zero, 0.0, 1.0 / r)
    inv_r3 = inv_r**3
    inv_r5 = inv_r3 * inv_r * inv_r
    if "N" in want:
        out["N"] += -(w * inv_r).sum() / FOUR_PI
    if "gN" in want:
        out["gN"] += (w * inv_r3) @ u / FOUR_PI
    if "Nt" in want:
        # kernel u_q^2 / r^3, Laplacian 2 / r^3 - 6 u_q^2 / r^5
        uu = u * u
        val = (w * inv_r3) @ uu + c2 * (2.0 * (w * inv_r3).sum() - 6.0 * ((w * inv_r5) @ uu))
        out["Nt"] += -val / FOUR_PI
    if "gNt" in want:
        inv_r7 = inv_r5 * inv_r * inv_r
        for q in range(3):
            uq = u[:, q]
            g = (-3.0 * w * uq * uq * inv_r5) @ u
            g[q] += 2.0 * (w * uq * inv_r3).sum()
            if c2:
                g += c2 * ((30.0 * w * uq * uq * inv_r7 - 6.0 * w * inv_r5) @ u)
                g[q] -= c2 * 12.0 * (w * uq * inv_r5).sum()
            out["gNt"][q] += -g / FOUR_PI
    if "H" in want:
        # kernel r, Laplacian 2 / r
        out["H"] += -((w * r).sum() + 2.0 * c2 * (w * inv_r).sum()) / EIGHT_PI
    if "gH" in want:
        out["gH"] += -((w * (inv_r - 2.0 * c2 * inv_r3)) @ u) / EIGHT_PI


def _near_exact(quad: Quadrature, x, want, out, anchor=None, extra=0):
    """Replace the point rule on the (2R+1)^3 block around x by exact box integrals.

    The block is centred on the cell containing ``anchor`` (default ``x``)
    and widened by ``extra`` cells on every side.
    """
    R = quad.spec.near + extra
    h = quad.h
    res = quad.grid.resolution
    lo_idx = np.floor(((x if anchor is None else anchor) - quad.grid.origin) / h).astype(int) - R
    ids, valid = [], []
    for i in range(3):
        ii = lo_idx[i] + np.arange(2 * R + 1)
        ok = (ii >= 0) & (ii < res[i])
        if not ok.any():
            return  # block misses the grid: all its cells are empty
        ids.append(np.clip(ii, 0, res[i] - 1))
        valid.append(ok)
    ix = np.ix_(*ids)
    frac = quad.mask.fractions[ix] * (valid[0][:, None, None] & valid[1][None, :, None] & valid[2][None, None, :])
    if not frac.any():
        return
    w = frac.reshape(-1) * quad.grid.voxel_volume
    nodes = quad.mask.centroids[ix].reshape(-1, 3)
    keep = w > 0
    sub = {k: np.zeros(_GROUPS[k]) for k in want}
    _point_rule(x - nodes[keep], w[keep], want, sub, quad.c2)
    for k in want:
        out[k] -= sub[k]

    axes = [quad.grid.origin[i] + (lo_idx[i] + np.arange(2 * R + 2)) * h[i] for i in range(3)]
    corners = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pieces = [(x - corners, frac)]

    # Partial cells: exact integrals over the occupied sub-boxes, i.e. the same
    # stratified sub-cells whose centres set the occupancy fraction.
    if not isinstance(quad.shape, VoxelMask):
        part = np.argwhere((frac > 0) & (frac < 1))
        if len(part):
            s = quad.spec.subsamples
            lo = corners[part[:, 0], part[:, 1], part[:, 2]]
            t = np.arange(s + 1) / s
            sub = np.stack(np.meshgrid(t, t, t, indexing="ij"), axis=-1)
            ycorn = lo[:, None, None, None, :] + sub[None] * h
            mid = lo[:, None, None, None, :] + (sub[None, :-1, :-1, :-1] + 0.5 / s) * h
            inside = quad.shape.contains(mid).astype(float)
            full = frac.copy()
            full[part[:, 0], part[:, 1], part[:, 2]] = 0.0
            pieces = [(x - corners, full), (x - ycorn, inside)]

    def integral(fn, *args):
        return float(sum((_prism.box_sum(fn(u, *args)) * wgt).sum() for u, wgt in pieces))

    if "N" in want:
        out["N"] += -integral(_prism.phi) / FOUR_PI
    if "gN" in want:
        out["gN"] += np.array([-integral(_prism.phi_grad, m) for m in range(3)]) / FOUR_PI
    if "Nt" in want:
        out["Nt"] += np.array([-integral(_prism.ntilde, q) for q in range(3)]) / FOUR_PI
    if "gNt" in want:
        out["gNt"] += np.array(
            [[-integral(_prism.ntilde_grad, q, m) for m in range(3)] for q in range(3)]
        ) / FOUR_PI
    if "H" in want:
        out["H"] += -integral(_prism.rprism) / EIGHT_PI
    if "gH" in want:
        out["gH"] += np.array([-integral(_prism.rprism_grad, m) for m in range(3)]) / EIGHT_PI


def _evaluate_point(quad: Quadrature, x, want, anchor=None, extra=0) -> dict:
    x = np.asarray(x, dtype=float)
    out = {k: np.zeros(_GROUPS[k]) for k in want}
    for s in range(0, len(quad.weights), _CHUNK):
        _point_rule(x - quad.nodes[s:s + _CHUNK], quad.weights[s:s + _CHUNK], want, out, quad.c2)
    sing = [k for k in want if k in _SINGULAR]
    if sing:
        _near_exact(quad, x, sing, out, anchor, extra)
    return out


def evaluate_raw(quad: Quadrature, points, want: Iterable[str], anchors=None) -> dict:
    """Evaluate the requested groups at every point; arrays indexed by point first.

    ``anchors`` (one point, or one per point) fixes where the closed-form
    near block sits.  Finite-difference stencils should share one anchor so
    that the rule is a smooth function of position across the stencil; the
    block is then widened by the largest point-to-anchor offset, so every
    point keeps at least ``near`` exact cells around it.
    """
    want = tuple(want)
    for k in want:
        if k not in _GROUPS:
            raise Rejection(f"unknown potential quantity {k!r}")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    res = {k: np.empty((len(pts),) + _GROUPS[k]) for k in want}
    extra = 0
    if anchors is not None:
        anchors = np.broadcast_to(np.asarray(anchors, dtype=float), pts.shape)
        reach = np.abs(pts - anchors).max() / quad.spacing if len(pts) else 0.0
        extra = int(math.ceil(reach - 1e-9))
    for i, x in enumerate(pts):
        o = _evaluate_point(quad, x, want, None if anchors is None else anchors[i], extra)
        for k in want:
            res[k][i] = o[k]
    return res


class PotentialKind(enum.Enum):
    N = "N"
    H = "H"
    D2H = "d2H_axis"
    NTILDE = "Ntilde_axis"


class Method(enum.Enum):
    QUADRATURE = "quadrature"
    ANALYTIC_ELLIPSOID = "analytic_ellipsoid"
    FINITE_DIFFERENCE = "finite_difference"


@dataclass(frozen=True)
class PotentialSample:
    point: np.ndarray
    kind: PotentialKind
    value: float
    method: Method
    est_error: float
    axis: Optional[int] = None


def _scalar(quad: Quadrature, points, kind: PotentialKind, axis: Optional[int]) -> np.ndarray:
    if kind is PotentialKind.N:
        return evaluate_raw(quad, points, ("N",))["N"]
    if kind is PotentialKind.H:
        return evaluate_raw(quad, points, ("H",))["H"]
    if axis not in (0, 1, 2):
        raise Rejection(f"axis must be 0, 1 or 2, got {axis}")
    if kind is PotentialKind.NTILDE:
        return evaluate_raw(quad, points, ("Nt",))["Nt"][:, axis]
    r = evaluate_raw(quad, points, ("N", "Nt"))
    return 0.5 * (r["N"] - r["Nt"][:, axis])


def evaluate(shape: Shape, points, kind: PotentialKind, axis: Optional[int] = None,
             quad=None) -> list[PotentialSample]:
    """Batch evaluation with Richardson-style error estimates."""
    spec = quad.spec if isinstance(quad, Quadrature) else (quad or QuadSpec())
    fine = _as_quadrature(shape, quad)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    v = _scalar(fine, pts, kind, axis)
    vc = _scalar(build_quadrature(shape, spec.coarse()), pts, kind, axis)
    err = np.abs(v - vc)
    return [PotentialSample(p.copy(), kind, float(a), Method.QUADRATURE, float(e), axis)
            for p, a, e in zip(pts, v, err)]


def newtonian(shape: Shape, x, quad=None) -> PotentialSample:
    return evaluate(shape, x, PotentialKind.N, None, quad)[0]


def biharmonic_H(shape: Shape, x, quad=None) -> PotentialSample:
    return evaluate(shape, x, PotentialKind.H, None, quad)[0]


def d2H_axis(shape: Shape, x, q: int, quad=None) -> PotentialSample:
    return evaluate(shape, x, PotentialKind.D2H, q, quad)[0]


def n_tilde(shape: Shape, x, q: int, quad=None) -> PotentialSample:
    return evaluate(shape, x, PotentialKind.NTILDE, q, quad)[0]


def potential_gradient(shape: Shape, x, kind: PotentialKind, axis: Optional[int] = None,
                       quad=None) -> np.ndarray:
    """First derivatives from the differentiated kernels."""
    q = _as_quadrature(shape, quad)
    if kind is PotentialKind.N:
        return evaluate_raw(q, x, ("gN",))["gN"][0]
    if kind is PotentialKind.H:
        return evaluate_raw(q, x, ("gH",))["gH"][0]
    if axis not in (0, 1, 2):
        raise Rejection(f"axis must be 0, 1 or 2, got {axis}")
    if kind is PotentialKind.NTILDE:
        return evaluate_raw(q, x, ("gNt",))["gNt"][0, axis]
    r = evaluate_raw(q, x, ("gN", "gNt"))
    return 0.5 * (r["gN"][0] - r["gNt"][0, axis])


# --- finite differences ------------------------------------------------------

_E = np.eye(3)


def fd_jacobian(fun: Callable[[np.ndarray], np.ndarray], x, h: float) -> np.ndarray:
    """Central differences of a vector-valued ``fun``: J[..., l] = d fun / dx_l.

    ``fun`` takes an array of points (P, 3) and returns (P, ...).
    """
    x = np.asarray(x, dtype=float)
    pts = np.concatenate([x + h * _E, x - h * _E])
    v = np.asarray(fun(pts))
    return np.moveaxis((v[:3] - v[3:]) / (2 * h), 0, -1)


def fd_laplacian(fun: Callable[[np.ndarray], np.ndarray], x, h: float) -> float:
    """7-point Laplacian of a scalar ``fun`` (vectorised over points)."""
    x = np.asarray(x, dtype=float)
    pts = np.vstack([x[None], x + h * _E, x - h * _E])
    v = np.asarray(fun(pts), dtype=float)
    return float((v[1:].sum() - 6.0 * v[0]) / h**2)


def fd_bilaplacian(fun: Callable[[np.ndarray], np.ndarray], x, h: float) -> float:
    """13-point stencil: the 7-point Laplacian applied twice (25 distinct nodes)."""
    x = np.asarray(x, dtype=float)
    offs = {(0, 0, 0): 0.0}
    lap = [((0, 0, 0), -6.0)] + [(tuple(s * _E[i].astype(int)), 1.0) for i in range(3) for s in (1, -1)]
    for o1, c1 in lap:
        for o2, c2 in lap:
            o = tuple(a + b for a, b in zip(o1, o2))
            offs[o] = offs.get(o, 0.0) + c1 * c2
    keys = [k for k, c in offs.items() if c != 0.0]
    pts = x + h * np.array(keys, dtype=float)
    v = np.asarray(fun(pts), dtype=float)
    return float(sum(offs[k] * val for k, val in zip(keys, v)) / h**4)


# --- quadratic forms ---------------------------------------------------------

@dataclass(frozen=True)
class QuadraticForm:
    """``value(x) = c0 + b.x + x.A.x``; the Hessian is ``2 A``."""

    c0: float
    b: np.ndarray
    A: np.ndarray
    fit_rms: float = 0.0
    fit_max: float = 0.0
    condition: float = 1.0
    n_samples: int = 0

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.c0 + x @ self.b + np.einsum("...i,ij,...j->...", x, self.A, x)

    @property
    def hessian(self) -> np.ndarray:
        return 2.0 * self.A

    @property
    def laplacian(self) -> float:
        return 2.0 * float(np.trace(self.A))

    def gradient(self, x) -> np.ndarray:
        return self.b + 2.0 * np.asarray(x, dtype=float) @ self.A


_IJ = [(0, 1), (0, 2), (1, 2)]


def quadratic_fit(points, values, max_condition: float = 1e12) -> QuadraticForm:
    """Least-squares quadratic through (point, value) samples.

    Residual statistics are divided by the sample standard deviation of the
    values so that thresholds do not depend on the size of the shape.
    """
    X = np.asarray(points, dtype=float)
    y = np.asarray(values, dtype=float)
    if X.ndim != 2 or X.shape[1] != 3 or len(X) != len(y):
        raise Rejection("quadratic_fit expects (n, 3) points and n values")
    if len(X) < 10:
        raise Rejection(f"quadratic_fit needs at least 10 samples, got {len(X)}")
    shift = X.mean(axis=0)
    scale = max(float(np.abs(X - shift).max()), 1e-300)
    Z = (X - shift) / scale
    cols = [np.ones(len(Z))] + [Z[:, i] for i in range(3)] + [Z[:, i] ** 2 for i in range(3)]
    cols += [2.0 * Z[:, i] * Z[:, j] for i, j in _IJ]
    D = np.column_stack(cols)
    sv = np.linalg.svd(D, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    if not cond < max_condition:
        raise Rejection(f"rank-deficient quadratic design (condition number {cond:.3g})")
    coef, *_ = np.linalg.lstsq(D, y, rcond=None)
    Az = np.diag(coef[7 - 3:7])
    for k, (i, j) in enumerate(_IJ):
        Az[i, j] = Az[j, i] = coef[7 + k]
    bz = coef[1:4]
    # Undo z = (x - shift) / scale.
    A = Az / scale**2
    b = bz / scale - 2.0 * A @ shift
    c0 = coef[0] - bz @ shift / scale + shift @ A @ shift
    res = D @ coef - y
    sd = float(np.std(y))
    norm = sd if sd > 0 else max(1.0, float(np.abs(y).max())) * np.finfo(float).eps
    return QuadraticForm(
        float(c0), b, A,
        fit_rms=float(np.sqrt(np.mean(res**2)) / norm),
        fit_max=float(np.max(np.abs(res)) / norm),
        condition=cond,
        n_samples=len(y),
    )


# --- ellipsoids --------------------------------------------------------------

def _ferrers_integral(a, weight_axis: Optional[int]) -> float:
    """int_0^inf ds / Delta(s), optionally divided by (a_i^2 + s).

    With s = s0 u / (1 - u), s0 = max a_i^2, the integrand becomes a smooth
    function of u times (1 - u)^(-1/2) (or (1 - u)^(1/2) when weighted); the
    endpoint factor is handled by an algebraic-weight rule on the last piece
    and the interval is split where s crosses each a_i^2.
    """
    a2 = np.asarray(a, dtype=float) ** 2
    s0 = float(a2.max())
    beta = 0.5 if weight_axis is not None else -0.5

    def smooth(u):
        p = s0 * u + a2 * (1.0 - u)
        g = s0 / math.sqrt(p[0] * p[1] * p[2])
        if weight_axis is not None:
            g /= p[weight_axis]
        return g

    cuts = sorted({float(x / (x + s0)) for x in a2})
    edges = [0.0] + [c for c in cuts if 0.0 < c < 1.0] + [1.0]
    total = 0.0
    with warnings.catch_warnings():
        # quadpack flags roundoff once the relative tolerance nears machine precision
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for lo, hi in zip(edges[:-1], edges[1:]):
            if hi == 1.0:
                v, _ = integrate.quad(smooth, lo, hi, weight="alg", wvar=(0.0, beta),
                                      epsabs=0.0, epsrel=1e-13, limit=200)
            else:
                v, _ = integrate.quad(lambda u: smooth(u) * (1.0 - u) ** beta, lo, hi,
                                      epsabs=0.0, epsrel=1e-13, limit=200)
            total += v
    return total


def ferrers_coefficients(semi_axes) -> tuple[float, np.ndarray]:
    """``(c0, c)`` with interior ``N = c0 + sum_i c_i x_i^2`` in the body frame."""
    a = np.asarray(semi_axes, dtype=float)
    pref = float(np.prod(a)) / 4.0
    c = np.array([pref * _ferrers_integral(a, i) for i in range(3)])
    c0 = -pref * _ferrers_integral(a, None)
    return c0, c


def newtonian_ellipsoid(e: Ellipsoid, x=None) -> QuadraticForm:
    """Interior Newtonian potential of an ellipsoid as an exact quadratic form.

    If ``x`` is given it is checked to lie inside ``e``.
    """
    if x is not None and not np.all(e.contains(np.asarray(x, dtype=float))):
        raise Rejection("newtonian_ellipsoid: point outside the ellipsoid")
    c0, c = ferrers_coefficients(e.semi_axes)
    R = e.rotation
    A = (R * c) @ R.T
    ctr = e.center
    return QuadraticForm(float(c0 + ctr @ A @ ctr), -2.0 * A @ ctr, A)


# --- output ------------------------------------------------------------------

def write_samples_csv(path_or_file, samples: Sequence[PotentialSample], preamble=()) -> None:
    """Columns ``x1,x2,x3,kind,axis,value,est_error,method``; axis is 1-based or empty."""
    from .io import write_csv

    rows = []
    for s in samples:
        rows.append([*s.point, s.kind.value, "" if s.axis is None else s.axis + 1,
                     s.value, s.est_error, s.method.value])
    write_csv(path_or_file, ["x1", "x2", "x3", "kind", "axis", "value", "est_error", "method"], rows,
              preamble)
