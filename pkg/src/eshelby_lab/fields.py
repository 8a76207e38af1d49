"""
Interior displacement gradient induced by a uniform eigenstress, computed two
independent ways:

* ``solve_spectral``: discrete Fourier transform of the occupancy, multiplied
  by Gamma_pl(xi) = L_pq(xi) sigma_qj xi_j xi_l on the lattice of the
  periodic box, inverse transformed.
* ``solve_potential``: the same operator written in real space through second
  derivatives of N and of d2H_q, evaluated by voxel quadrature.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import fft as sp_fft
from scipy import ndimage

from .errors import Rejection
from .geometry import GridSpec, Shape, VoxelMask
from .materials import Eigenstress, LameMaterial
from .potentials import QuadSpec, _as_quadrature, evaluate_raw

__all__ = [
    "FieldMethod",
    "FieldSample",
    "SpectralField",
    "UniformityReport",
    "solve_spectral",
    "solve_potential",
    "uniformity",
    "gamma_sphere_average",
    "interior_nodes",
    "clearance",
    "default_erosion",
    "lanczos_factors",
    "spectral_uniformity",
    "uniformity_from_array",
    "DualPathReport",
    "compare_paths",
    "write_field_csv",
    "write_field_dump",
]

MIN_SPECTRAL_PADDING = 3.0


class FieldMethod(enum.Enum):
    SPECTRAL = "spectral"
    POTENTIAL = "potential"


@dataclass(frozen=True)
class FieldSample:
    point: np.ndarray
    grad_u: np.ndarray
    method: FieldMethod
    inside: bool

    @property
    def strain(self) -> np.ndarray:
        return 0.5 * (self.grad_u + self.grad_u.T)

    @property
    def rotation(self) -> np.ndarray:
        return 0.5 * (self.grad_u - self.grad_u.T)


def _sigma_matrix(sigma) -> np.ndarray:
    if isinstance(sigma, Eigenstress):
        return np.asarray(sigma.tensor, dtype=float)
    s = np.asarray(sigma, dtype=float)
    if s.shape != (3, 3):
        raise Rejection(f"eigenstress must be 3x3, got {s.shape}")
    return s


def gamma_sphere_average(material: LameMaterial, sigma) -> np.ndarray:
    """Average of Gamma_pl(n) over unit directions n.

    With c = (lam + mu) / (mu (lam + 2 mu)):
    <Gamma_pl> = sigma_pl / (3 mu) - c (2 sigma_pl + tr(sigma) delta_pl) / 15.
    """
    s = _sigma_matrix(sigma)
    lam, mu = material.lam, material.mu
    c = (mu + lam) / (mu * (2 * mu + lam))
    return s / (3 * mu) - c * (2 * s + np.trace(s) * np.eye(3)) / 15.0


@dataclass
class SpectralField:
    """Displacement gradient on the nodes (voxel centers) of a periodic grid.

    ``grad_u`` has shape (3, 3, n1, n2, n3).
    """

    grid: GridSpec
    grad_u: np.ndarray
    mask: VoxelMask

    def at_index(self, idx) -> np.ndarray:
        idx = np.atleast_2d(idx)
        return np.moveaxis(self.grad_u[:, :, idx[:, 0], idx[:, 1], idx[:, 2]], -1, 0)

    def at_points(self, points) -> np.ndarray:
        """Trilinear interpolation between nodes; returns (P, 3, 3)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        coords = ((pts - self.grid.origin) / self.grid.spacing - 0.5).T
        out = np.empty((len(pts), 3, 3))
        for p in range(3):
            for l in range(3):
                out[:, p, l] = ndimage.map_coordinates(self.grad_u[p, l], coords, order=1, mode="wrap")
        return out

    def samples(self, idx, shape: Optional[Shape] = None) -> list[FieldSample]:
        idx = np.atleast_2d(idx)
        pts = self.grid.centers()[idx[:, 0], idx[:, 1], idx[:, 2]]
        g = self.at_index(idx)
        inside = shape.contains(pts) if shape is not None else self.mask.fractions[tuple(idx.T)] > 0.5
        return [FieldSample(p, gi, FieldMethod.SPECTRAL, bool(s)) for p, gi, s in zip(pts, g, inside)]


def lanczos_factors(grid: GridSpec) -> np.ndarray:
    """Product over axes of sinc(xi_i h_i / pi), on the half-spectrum layout of rfftn."""
    n = grid.resolution
    f = [np.sinc(np.fft.fftfreq(n[0]) * 2)[:, None, None],
         np.sinc(np.fft.fftfreq(n[1]) * 2)[None, :, None],
         np.sinc(np.fft.rfftfreq(n[2]) * 2)[None, None, :]]
    return f[0] * f[1] * f[2]


def solve_spectral(mask: VoxelMask, material: LameMaterial, sigma, zero_mode: str = "sphere_average",
                   smoothing: str = "lanczos", min_padding: float = MIN_SPECTRAL_PADDING) -> SpectralField:
    """Single application of the Fourier-space Green operator to the occupancy.

    ``zero_mode`` selects the xi = 0 coefficient: ``"zero"`` gives a field with
    zero mean over the periodic box; ``"sphere_average"`` (default) restores
    the infinite-body constant, volume fraction times the direction average
    of Gamma, which is the limit of spherically summed periodic images.

    ``smoothing="lanczos"`` (default) multiplies every coefficient by the
    Lanczos sigma factors, which vanish at the Nyquist frequency and damp the
    truncation ringing that otherwise reaches several voxels into the
    inclusion.  Gamma itself is always evaluated at the continuous xi; the
    filter leaves constants and the zero mode untouched.  ``"none"`` gives the
    bare operator.
    """
    if mask.grid.padding_factor < min_padding:
        raise Rejection(
            f"spectral solve requires padding_factor >= {min_padding}, got {mask.grid.padding_factor}"
        )
    material.require_admissible()
    if zero_mode not in ("zero", "sphere_average"):
        raise Rejection(f"unknown zero_mode {zero_mode!r}")
    if smoothing not in ("none", "lanczos"):
        raise Rejection(f"unknown smoothing {smoothing!r}")
    s = _sigma_matrix(sigma)
    lam, mu = material.lam, material.mu
    c = (mu + lam) / (mu * (2 * mu + lam))

    grid = mask.grid
    n = grid.resolution
    h = grid.spacing
    xi = [2 * np.pi * np.fft.fftfreq(n[0], h[0])[:, None, None],
          2 * np.pi * np.fft.fftfreq(n[1], h[1])[None, :, None],
          2 * np.pi * np.fft.rfftfreq(n[2], h[2])[None, None, :]]
    k2 = xi[0] ** 2 + xi[1] ** 2 + xi[2] ** 2
    k2[0, 0, 0] = 1.0
    chi = sp_fft.rfftn(mask.fractions)
    if smoothing == "lanczos":
        chi *= lanczos_factors(grid)

    # v = sigma xi ; w_p = L_pq v_q ; Gamma_pl chi = w_p xi_l chi
    v = [s[p, 0] * xi[0] + s[p, 1] * xi[1] + s[p, 2] * xi[2] for p in range(3)]
    xv = xi[0] * v[0] + xi[1] * v[1] + xi[2] * v[2]
    grad_u = np.empty((3, 3) + n)
    mean_frac = float(mask.fractions.mean())
    g0 = gamma_sphere_average(material, s) if zero_mode == "sphere_average" else np.zeros((3, 3))
    for p in range(3):
        w = (v[p] / (mu * k2) - c * xi[p] * xv / k2**2) * chi
        for l in range(3):
            g = w * xi[l]
            g[0, 0, 0] = 0.0
            grad_u[p, l] = sp_fft.irfftn(g, s=n, axes=(0, 1, 2)) + g0[p, l] * mean_frac
    return SpectralField(grid, grad_u, mask)


def clearance(mask: VoxelMask) -> np.ndarray:
    """Approximate distance from each node to the boundary (0 outside).

    Euclidean distance to the nearest exterior node, less half a voxel.
    """
    solid = mask.fractions > 0.5
    dist = ndimage.distance_transform_edt(solid, sampling=mask.grid.spacing)
    return np.where(solid, dist - 0.5 * float(mask.grid.spacing.max()), 0.0)


def interior_nodes(mask: VoxelMask, margin: float, min_count: int = 0) -> tuple[np.ndarray, float]:
    """Indices of nodes at least ``margin`` inside, and the margin actually used.

    When fewer than ``min_count`` nodes qualify (coarse grids, thin shapes),
    the ``min_count`` deepest nodes are taken instead and the returned margin
    is their smallest clearance.
    """
    c = clearance(mask)
    idx = np.argwhere(c > margin)
    if len(idx) >= min_count:
        return idx, float(margin)
    order = np.argsort(c, axis=None, kind="stable")[::-1][:min_count]
    idx = np.array(np.unravel_index(order, c.shape)).T
    idx = idx[np.lexsort(idx.T[::-1])]
    used = float(c[tuple(idx.T)].min())
    if used <= 0:
        raise Rejection("mask has too few interior nodes")
    return idx, used


def default_erosion(mask_or_grid, shape: Shape) -> float:
    """2 voxels plus 5% of the smallest semi-extent of the shape."""
    grid = mask_or_grid.grid if isinstance(mask_or_grid, VoxelMask) else mask_or_grid
    return 2.0 * float(grid.spacing.max()) + 0.05 * 0.5 * float(shape.extent.min())


def solve_potential(shape: Shape, material: LameMaterial, sigma, points,
                    quad=None, diag_tol: float = 1e-12) -> list[FieldSample]:
    """Real-space evaluation at arbitrary points.

    grad_u_pl = (s_pp / mu) d_p d_l N - c sum_q s_qq d_p d_l (d2H_q),
    c = (lam + mu) / (mu (lam + 2 mu)), d2H_q = (N - Nt_q) / 2.

    Second derivatives are central differences (step = quadrature cell) of the
    kernel-differentiated first derivatives.  ``sigma`` must be diagonal in
    the frame of ``shape`` and ``points``.
    """
    material.require_admissible()
    s = _sigma_matrix(sigma)
    off = s - np.diag(np.diag(s))
    if np.abs(off).max() > diag_tol * max(1.0, np.abs(s).max()):
        raise Rejection("solve_potential needs the eigenstress in its principal frame (rotate first)")
    quad = _as_quadrature(shape, quad if quad is not None else QuadSpec())
    lam, mu = material.lam, material.mu
    c = (mu + lam) / (mu * (2 * mu + lam))
    d = np.diag(s)
    h = quad.spacing
    E = np.eye(3)

    pts = np.atleast_2d(np.asarray(points, dtype=float))
    inside = shape.contains(pts)
    out = []
    for x, ins in zip(pts, inside):
        stencil = np.concatenate([x + h * E, x - h * E])
        r = evaluate_raw(quad, stencil, ("gN", "gNt"), x)
        # hess[p, l] = d_l (d_p N); hnt[q, p, l] = d_l (d_p Nt_q)
        hess = ((r["gN"][:3] - r["gN"][3:]) / (2 * h)).T
        hnt = np.moveaxis((r["gNt"][:3] - r["gNt"][3:]) / (2 * h), 0, -1)
        d2h = 0.5 * (hess[None] - hnt)
        g = d[:, None] / mu * hess - c * np.einsum("q,qpl->pl", d, d2h)
        out.append(FieldSample(x.copy(), g, FieldMethod.POTENTIAL, bool(ins)))
    return out


@dataclass(frozen=True)
class UniformityReport:
    mean_grad_u: np.ndarray
    rms_dev: float
    max_dev: float
    n_samples: int
    erosion_margin: float


def uniformity(samples: Sequence[FieldSample], erosion_margin: float = 0.0,
               min_samples: int = 20) -> UniformityReport:
    """Normalized deviation of grad_u from its mean over interior samples.

    rms_dev is the root mean square of g_s - m over all samples and all nine
    components, and max_dev the largest absolute entry; both are divided by
    the Frobenius norm of the mean m.
    """
    if not samples:
        raise Rejection("uniformity needs at least one sample")
    methods = {s.method for s in samples}
    if len(methods) != 1:
        raise Rejection("uniformity samples must all come from one method")
    if len(samples) < min_samples:
        raise Rejection(f"uniformity needs at least {min_samples} samples, got {len(samples)}")
    g = np.stack([s.grad_u for s in samples])
    return uniformity_from_array(g, erosion_margin)


def uniformity_from_array(g: np.ndarray, erosion_margin: float = 0.0) -> UniformityReport:
    m = g.mean(axis=0)
    dev = g - m
    norm = float(np.linalg.norm(m))
    if norm == 0.0:
        rms = 0.0 if not dev.any() else float("inf")
        mx = rms
    else:
        rms = float(np.sqrt(np.mean(dev**2)) / norm)
        mx = float(np.abs(dev).max() / norm)
    return UniformityReport(m, rms, mx, len(g), erosion_margin)


def spectral_uniformity(field: SpectralField, shape: Shape, margin: Optional[float] = None,
                        min_samples: int = 20) -> UniformityReport:
    """Uniformity over every eroded interior node of a spectral solution."""
    if margin is None:
        margin = default_erosion(field.mask, shape)
    idx, used = interior_nodes(field.mask, margin, min_count=min_samples)
    return uniformity_from_array(field.at_index(idx), used)


@dataclass(frozen=True)
class DualPathReport:
    """Spectral against potential grad_u at eroded interior nodes.

    ``rel_diff[i]`` is max |G_spec - G_pot| over the nine components at probe
    i divided by max |G_pot| at the same probe.
    """

    points: np.ndarray
    spectral: np.ndarray
    potential: np.ndarray
    rel_diff: np.ndarray

    @property
    def max_rel_diff(self) -> float:
        return float(self.rel_diff.max())

    @property
    def n_probes(self) -> int:
        return len(self.points)


def compare_paths(field: SpectralField, shape: Shape, material: LameMaterial, sigma,
                  n_probes: int, rng: np.random.Generator, quad=None,
                  margin: Optional[float] = None) -> DualPathReport:
    """Evaluate both paths at ``n_probes`` random eroded nodes of ``field``."""
    if n_probes < 1:
        raise Rejection("compare_paths needs at least one probe")
    if margin is None:
        margin = default_erosion(field.mask, shape)
    idx, _ = interior_nodes(field.mask, margin, min_count=n_probes)
    sel = idx[np.sort(rng.choice(len(idx), n_probes, replace=False))]
    pts = field.grid.centers()[tuple(sel.T)]
    gs = field.at_index(sel)
    gp = np.stack([f.grad_u for f in solve_potential(shape, material, sigma, pts, quad)])
    rel = np.abs(gs - gp).max(axis=(1, 2)) / np.abs(gp).max(axis=(1, 2))
    return DualPathReport(pts, gs, gp, rel)


_COMP = [f"du{p + 1}{l + 1}" for p in range(3) for l in range(3)]


def write_field_csv(path_or_file, samples: Sequence[FieldSample], preamble=()) -> None:
    from .io import write_csv

    rows = [[*s.point, *s.grad_u.reshape(-1), s.method.value] for s in samples]
    write_csv(path_or_file, ["x1", "x2", "x3", *_COMP, "method"], rows, preamble)


def write_field_dump(path, field: SpectralField) -> None:
    from .io import write_grid_dump

    n = field.grid.resolution
    write_grid_dump(path, field.grid, field.grad_u.reshape((9,) + n))
