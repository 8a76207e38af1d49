"""
Inclusion shapes, voxel grids and the contact construction between a scaled
ellipsoid and an inner shape.

All shapes are immutable.  ``contains`` is vectorised: it accepts an array of
points with trailing dimension 3 and returns a boolean array of the leading
shape.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import ndimage
from scipy.special import gamma as gamma_fn

from .errors import Rejection

__all__ = [
    "Shape",
    "Ellipsoid",
    "Box",
    "Superellipsoid",
    "VoxelMask",
    "Difference",
    "GridSpec",
    "Contact",
    "ball",
    "contains",
    "voxelize",
    "volume",
    "monte_carlo_volume",
    "sample_interior",
    "scale_about_origin",
    "contact_scale",
    "fibonacci_sphere",
    "save_voxel_mask",
    "load_voxel_mask",
    "VOXEL_MAGIC",
]

VOXEL_MAGIC = b"ESHV1"
DEGENERATE_AXIS_RATIO = 1e-9


def _vec3(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float).reshape(-1)
    if a.shape != (3,):
        raise Rejection(f"{name} must have 3 components, got {a.size}")
    if not np.all(np.isfinite(a)):
        raise Rejection(f"{name} must be finite")
    return a


def fibonacci_sphere(n: int) -> np.ndarray:
    """Deterministic, antipodally symmetric low-discrepancy unit vectors.

    Half of the points come from a Fibonacci lattice on the sphere, the other
    half are their negatives, so centrally symmetric shapes produce exact ties.
    """
    m = max(1, n // 2)
    i = np.arange(m) + 0.5
    z = 1.0 - i / m
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    half = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    return np.vstack([half, -half])


class Shape:
    """Base class; concrete shapes implement ``contains`` and ``bounds``."""

    convex: bool = False

    def contains(self, x) -> np.ndarray:
        raise NotImplementedError

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def boundary_samples(self, n: int) -> np.ndarray:
        raise NotImplementedError

    def volume(self) -> float:
        raise NotImplementedError

    @property
    def extent(self) -> np.ndarray:
        lo, hi = self.bounds()
        return hi - lo

    @property
    def bbox_center(self) -> np.ndarray:
        lo, hi = self.bounds()
        return 0.5 * (lo + hi)


@dataclass(frozen=True, eq=False)
class Ellipsoid(Shape):
    """Ellipsoid ``{x : |diag(1/a) R^T (x - c)| <= 1}``.

    Columns of ``rotation`` are the body axes expressed in the lab frame.
    """

    semi_axes: np.ndarray
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    convex: bool = True

    def __post_init__(self):
        a = _vec3(self.semi_axes, "semi_axes")
        if np.any(a <= 0) or a.min() < DEGENERATE_AXIS_RATIO * a.max():
            raise Rejection(f"degenerate ellipsoid semi-axes {a.tolist()}")
        R = np.asarray(self.rotation, dtype=float)
        if R.shape != (3, 3) or not np.allclose(R.T @ R, np.eye(3), atol=1e-10):
            raise Rejection("ellipsoid rotation must be an orthonormal 3x3 matrix")
        if np.linalg.det(R) < 0:
            raise Rejection("ellipsoid rotation must have determinant +1")
        object.__setattr__(self, "semi_axes", a)
        object.__setattr__(self, "center", _vec3(self.center, "center"))
        object.__setattr__(self, "rotation", R)

    def to_body(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.center) @ self.rotation

    def gauge(self, x) -> np.ndarray:
        """Minkowski gauge: the smallest t with x in t*(E - c) + c."""
        return np.linalg.norm(self.to_body(x) / self.semi_axes, axis=-1)

    def contains(self, x) -> np.ndarray:
        return self.gauge(x) <= 1.0

    def bounds(self):
        half = np.sqrt(((self.rotation * self.semi_axes) ** 2).sum(axis=1))
        return self.center - half, self.center + half

    def boundary_samples(self, n: int) -> np.ndarray:
        u = np.vstack([fibonacci_sphere(n), np.eye(3), -np.eye(3)])
        return self.center + (u * self.semi_axes) @ self.rotation.T

    def outward_normal(self, x) -> np.ndarray:
        g = (self.to_body(x) / self.semi_axes**2) @ self.rotation.T
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def volume(self) -> float:
        return 4.0 * math.pi * float(np.prod(self.semi_axes)) / 3.0

    def scaled(self, t: float) -> "Ellipsoid":
        """Scale about the ellipsoid's own center."""
        return Ellipsoid(self.semi_axes * t, self.center, self.rotation, self.convex)

    def translated(self, c) -> "Ellipsoid":
        return Ellipsoid(self.semi_axes, _vec3(c, "center"), self.rotation, self.convex)


def ball(radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> Ellipsoid:
    return Ellipsoid(np.full(3, float(radius)), np.asarray(center, dtype=float))


@dataclass(frozen=True, eq=False)
class Box(Shape):
    half_extents: np.ndarray
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    convex: bool = True

    def __post_init__(self):
        h = _vec3(self.half_extents, "half_extents")
        if np.any(h <= 0):
            raise Rejection(f"box half-extents must be positive, got {h.tolist()}")
        object.__setattr__(self, "half_extents", h)
        object.__setattr__(self, "center", _vec3(self.center, "center"))

    def contains(self, x) -> np.ndarray:
        d = np.abs(np.asarray(x, dtype=float) - self.center)
        return np.all(d <= self.half_extents, axis=-1)

    def bounds(self):
        return self.center - self.half_extents, self.center + self.half_extents

    def boundary_samples(self, n: int) -> np.ndarray:
        u = fibonacci_sphere(n)
        s = 1.0 / np.max(np.abs(u) / self.half_extents, axis=1)
        corners = np.array(np.meshgrid(*([[-1.0, 1.0]] * 3), indexing="ij")).reshape(3, -1).T
        return np.vstack([self.center + u * s[:, None], self.center + corners * self.half_extents])

    def volume(self) -> float:
        return 8.0 * float(np.prod(self.half_extents))


@dataclass(frozen=True, eq=False)
class Superellipsoid(Shape):
    """``sum_i |(x_i - c_i) / a_i|^p <= 1`` with ``p >= 2``."""

    semi_axes: np.ndarray
    exponent: float = 4.0
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    convex: bool = True

    def __post_init__(self):
        a = _vec3(self.semi_axes, "semi_axes")
        if np.any(a <= 0):
            raise Rejection(f"superellipsoid semi-axes must be positive, got {a.tolist()}")
        if not self.exponent >= 2:
            raise Rejection(f"superellipsoid exponent must be >= 2, got {self.exponent}")
        object.__setattr__(self, "semi_axes", a)
        object.__setattr__(self, "center", _vec3(self.center, "center"))

    def _level(self, x) -> np.ndarray:
        d = np.abs(np.asarray(x, dtype=float) - self.center) / self.semi_axes
        return np.sum(d**self.exponent, axis=-1)

    def contains(self, x) -> np.ndarray:
        return self._level(x) <= 1.0

    def bounds(self):
        return self.center - self.semi_axes, self.center + self.semi_axes

    def boundary_samples(self, n: int) -> np.ndarray:
        u = np.vstack([fibonacci_sphere(n), np.eye(3), -np.eye(3)])
        s = np.sum((np.abs(u) / self.semi_axes) ** self.exponent, axis=1) ** (-1.0 / self.exponent)
        return self.center + u * s[:, None]

    def volume(self) -> float:
        p = self.exponent
        return 8.0 * float(np.prod(self.semi_axes)) * gamma_fn(1 + 1 / p) ** 3 / gamma_fn(1 + 3 / p)


@dataclass(frozen=True)
class GridSpec:
    """Regular voxel grid on the box ``[origin, origin + lengths]``.

    Voxel ``(i, j, k)`` has center ``origin + (index + 0.5) * spacing``.
    """

    resolution: tuple[int, int, int]
    origin: np.ndarray
    lengths: np.ndarray
    padding_factor: float = 1.0

    def __post_init__(self):
        res = tuple(int(n) for n in self.resolution)
        if len(res) != 3 or min(res) < 1:
            raise Rejection(f"grid resolution must be three positive integers, got {self.resolution}")
        lengths = _vec3(self.lengths, "grid lengths")
        if np.any(lengths <= 0):
            raise Rejection("grid lengths must be positive")
        if not self.padding_factor >= 1:
            raise Rejection(f"padding_factor must be >= 1, got {self.padding_factor}")
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "origin", _vec3(self.origin, "grid origin"))
        object.__setattr__(self, "lengths", lengths)
        h = self.spacing
        if h.max() / h.min() > 2.0:
            warnings.warn(f"voxel aspect ratio {h.max() / h.min():.3g} outside [0.5, 2]", stacklevel=3)

    @classmethod
    def for_shape(cls, shape: Shape, n: int, padding: float = 3.0, cubic_box: bool = True) -> "GridSpec":
        """Grid around ``shape`` with cubic voxels.

        ``n`` voxels span the padded largest extent.  With ``cubic_box`` every
        axis gets ``n`` voxels (the layout used by the spectral solver);
        otherwise each axis gets just enough voxels to cover its padded extent.
        """
        lo, hi = shape.bounds()
        ext = hi - lo
        h = padding * ext.max() / n
        if cubic_box:
            counts = np.array([n, n, n])
        else:
            counts = np.maximum(np.ceil(padding * ext / h - 1e-9).astype(int), 1)
        lengths = counts * h
        origin = 0.5 * (lo + hi) - 0.5 * lengths
        return cls(tuple(int(c) for c in counts), origin, lengths, padding)

    @property
    def spacing(self) -> np.ndarray:
        return self.lengths / np.asarray(self.resolution)

    @property
    def voxel_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        h = self.spacing
        return [self.origin[i] + (np.arange(self.resolution[i]) + 0.5) * h[i] for i in range(3)]

    def centers(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def index_of(self, x) -> np.ndarray:
        return np.floor((np.asarray(x, dtype=float) - self.origin) / self.spacing).astype(int)

    def check_fits(self, shape: Shape) -> None:
        lo, hi = shape.bounds()
        c, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * self.padding_factor
        tol = 1e-9 * float(self.lengths.max())
        if np.any(c - half < self.origin - tol) or np.any(c + half > self.origin + self.lengths + tol):
            raise Rejection(
                "grid too small: shape bounding box times padding_factor "
                f"({self.padding_factor}) does not fit in the physical box"
            )


@dataclass(frozen=True, eq=False)
class VoxelMask(Shape):
    """Occupancy fractions on a grid.

    ``centroids`` (optional) holds, for every voxel, the mean position of the
    occupied subsample points; quadrature uses it as the node of partially
    filled voxels.
    """

    grid: GridSpec
    fractions: np.ndarray
    centroids: Optional[np.ndarray] = None
    convex: bool = False
    check_connected: bool = True

    def __post_init__(self):
        f = np.asarray(self.fractions, dtype=float)
        if f.shape != self.grid.resolution:
            raise Rejection(f"fractions shape {f.shape} does not match grid {self.grid.resolution}")
        if np.any(f < 0) or np.any(f > 1):
            raise Rejection("occupancy fractions must lie in [0, 1]")
        object.__setattr__(self, "fractions", f)
        if self.check_connected:
            n = self.components()
            if n != 1:
                raise Rejection(f"voxel mask must be one connected component, found {n}")

    def components(self) -> int:
        _, n = ndimage.label(self.fractions > 0.5)
        return int(n)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        idx = self.grid.index_of(x)
        res = np.asarray(self.grid.resolution)
        ok = np.all((idx >= 0) & (idx < res), axis=-1)
        out = np.zeros(x.shape[:-1], dtype=bool)
        sel = idx[ok]
        out[ok] = self.fractions[sel[..., 0], sel[..., 1], sel[..., 2]] > 0.5
        return out

    def bounds(self):
        occ = np.argwhere(self.fractions > 0)
        if occ.size == 0:
            raise Rejection("empty voxel mask has no bounding box")
        h = self.grid.spacing
        return self.grid.origin + occ.min(axis=0) * h, self.grid.origin + (occ.max(axis=0) + 1) * h

    def boundary_samples(self, n: int) -> np.ndarray:
        solid = self.fractions > 0.5
        edge = solid & ~ndimage.binary_erosion(solid, border_value=0)
        return self.grid.centers()[edge]

    def volume(self) -> float:
        return float(self.fractions.sum()) * self.grid.voxel_volume


@dataclass(frozen=True, eq=False)
class Difference(Shape):
    """``outer`` minus ``inner``; requires ``inner`` inside ``outer``."""

    outer: Shape
    inner: Shape
    convex: bool = False
    check_samples: int = 4096

    def __post_init__(self):
        pts = self.inner.boundary_samples(self.check_samples)
        pts = pts[self.inner.contains(pts)]
        if pts.size and not np.all(self.outer.contains(pts)):
            raise Rejection("Difference requires inner shape to lie inside outer shape")

    def contains(self, x) -> np.ndarray:
        return self.outer.contains(x) & ~self.inner.contains(x)

    def bounds(self):
        return self.outer.bounds()

    def boundary_samples(self, n: int) -> np.ndarray:
        return np.vstack([self.outer.boundary_samples(n), self.inner.boundary_samples(n)])

    def volume(self) -> float:
        return self.outer.volume() - self.inner.volume()


def contains(shape: Shape, x) -> Union[bool, np.ndarray]:
    out = shape.contains(x)
    return bool(out) if np.ndim(out) == 0 else out


def volume(shape: Shape) -> float:
    return shape.volume()


def monte_carlo_volume(shape: Shape, n: int, rng: np.random.Generator) -> tuple[float, float]:
    """Uniform sampling of the bounding box; returns (estimate, standard error)."""
    lo, hi = shape.bounds()
    pts = lo + (hi - lo) * rng.random((n, 3))
    hit = shape.contains(pts).astype(float)
    box = float(np.prod(hi - lo))
    p = hit.mean()
    return box * p, box * math.sqrt(max(p * (1 - p), 0.0) / n)


_PROBE_DIRS = np.delete(
    np.array(np.meshgrid([-1, 0, 1], [-1, 0, 1], [-1, 0, 1], indexing="ij"), dtype=float).reshape(3, -1).T, 13, axis=0
)
_PROBE_DIRS /= np.linalg.norm(_PROBE_DIRS, axis=1, keepdims=True)


def sample_interior(shape: Shape, n: int, rng: np.random.Generator, margin: float = 0.0,
                    max_rounds: int = 200) -> np.ndarray:
    """``n`` uniform random points of ``shape`` lying at least ``margin`` inside.

    A candidate is kept when it and its 26 neighbours at distance ``margin``
    (face, edge and corner directions) are all inside the shape.
    """
    lo, hi = shape.bounds()
    kept = []
    total = 0
    for _ in range(max_rounds):
        cand = lo + (hi - lo) * rng.random((max(4 * n, 256), 3))
        ok = shape.contains(cand)
        if margin > 0:
            for d in _PROBE_DIRS:
                ok &= shape.contains(cand + margin * d)
        kept.append(cand[ok])
        total += int(ok.sum())
        if total >= n:
            return np.concatenate(kept)[:n]
    raise Rejection(f"could not place {n} interior probes with margin {margin}")


def _subsample_offsets(s: int) -> np.ndarray:
    t = (np.arange(s) + 0.5) / s - 0.5
    return np.stack(np.meshgrid(t, t, t, indexing="ij"), axis=-1).reshape(-1, 3)


def voxelize(
    shape: Shape,
    grid: GridSpec,
    subsamples: int = 3,
    with_centroids: bool = False,
    check_connected: bool = True,
    chunk: int = 4096,
) -> VoxelMask:
    """Partial-volume voxelization.

    Voxels whose eight corners and center agree on membership are assigned 0
    or 1 directly; the rest are estimated from ``subsamples**3`` stratified
    points (cell-centred, so identical for every run).
    """
    if subsamples < 1:
        raise Rejection("subsamples must be >= 1")
    grid.check_fits(shape)
    n1, n2, n3 = grid.resolution
    h = grid.spacing
    corner_axes = [grid.origin[i] + np.arange(grid.resolution[i] + 1) * h[i] for i in range(3)]
    corners = shape.contains(np.stack(np.meshgrid(*corner_axes, indexing="ij"), axis=-1))
    centers = grid.centers()
    inside_c = shape.contains(centers)

    c = corners.astype(np.int8)
    csum = (
        c[:-1, :-1, :-1] + c[1:, :-1, :-1] + c[:-1, 1:, :-1] + c[:-1, :-1, 1:]
        + c[1:, 1:, :-1] + c[1:, :-1, 1:] + c[:-1, 1:, 1:] + c[1:, 1:, 1:]
    ) + inside_c.astype(np.int8)
    fractions = (csum == 9).astype(float)
    mixed = np.argwhere((csum > 0) & (csum < 9))

    cent = None
    if with_centroids:
        cent = centers.copy()
    if len(mixed):
        offs = _subsample_offsets(subsamples) * h
        for start in range(0, len(mixed), chunk):
            idx = mixed[start:start + chunk]
            ctr = centers[idx[:, 0], idx[:, 1], idx[:, 2]]
            pts = ctr[:, None, :] + offs[None, :, :]
            hit = shape.contains(pts)
            frac = hit.mean(axis=1)
            fractions[idx[:, 0], idx[:, 1], idx[:, 2]] = frac
            if cent is not None:
                cnt = hit.sum(axis=1)
                mean = np.where(
                    cnt[:, None] > 0,
                    (pts * hit[..., None]).sum(axis=1) / np.maximum(cnt, 1)[:, None],
                    ctr,
                )
                cent[idx[:, 0], idx[:, 1], idx[:, 2]] = mean
    if not fractions.any():
        raise Rejection("voxelization produced an empty mask")
    return VoxelMask(grid, fractions, cent, convex=shape.convex, check_connected=check_connected)


def scale_about_origin(e: Ellipsoid, t: float) -> Ellipsoid:
    if not t > 0:
        raise Rejection(f"scale factor must be positive, got {t}")
    if np.any(e.center != 0):
        raise Rejection("scale_about_origin requires an ellipsoid centered at the origin")
    return Ellipsoid(e.semi_axes * t, e.center, e.rotation, e.convex)


@dataclass(frozen=True)
class Contact:
    t_star: float
    Q: np.ndarray
    n: np.ndarray
    unique: bool
    n_ties: int = 1


def contact_scale(e: Ellipsoid, omega: Shape, samples: int = 20000, tie_tol: float = 1e-9) -> Contact:
    """Smallest ``t`` with ``t*E`` containing the sampled boundary of ``omega``.

    ``Q`` is the maximising sample point and ``n`` the outward unit normal of
    ``t*E`` there.
    """
    if np.any(e.center != 0):
        raise Rejection("contact_scale requires E centered at the origin")
    lo, hi = omega.bounds()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise Rejection("omega must be bounded")
    pts = omega.boundary_samples(samples)
    if len(pts) == 0:
        raise Rejection("omega produced no boundary samples")
    g = e.gauge(pts)
    k = int(np.argmax(g))
    t_star = float(g[k])
    ties = np.flatnonzero(g >= t_star - tie_tol * max(t_star, 1.0))
    Q = pts[k]
    return Contact(t_star, Q, e.outward_normal(Q), unique=len(ties) == 1, n_ties=len(ties))


def save_voxel_mask(path, mask: VoxelMask) -> None:
    """Little-endian: magic, 3 x int32 dims, origin and lengths (float64), float32 fractions (C order)."""
    g = mask.grid
    with open(path, "wb") as fh:
        fh.write(VOXEL_MAGIC)
        fh.write(struct.pack("<3i", *g.resolution))
        fh.write(struct.pack("<3d", *g.origin))
        fh.write(struct.pack("<3d", *g.lengths))
        fh.write(np.ascontiguousarray(mask.fractions, dtype="<f4").tobytes())


def read_grid_header(fh, magic: bytes) -> GridSpec:
    head = fh.read(len(magic))
    if head != magic:
        raise Rejection(f"bad magic {head!r}, expected {magic!r}")
    dims = struct.unpack("<3i", fh.read(12))
    origin = struct.unpack("<3d", fh.read(24))
    lengths = struct.unpack("<3d", fh.read(24))
    return GridSpec(dims, np.array(origin), np.array(lengths))


def load_voxel_mask(path, check_connected: bool = True) -> VoxelMask:
    with open(path, "rb") as fh:
        grid = read_grid_header(fh, VOXEL_MAGIC)
        data = np.frombuffer(fh.read(), dtype="<f4")
    n = int(np.prod(grid.resolution))
    if data.size != n:
        raise Rejection(f"voxel file holds {data.size} values, expected {n}")
    return VoxelMask(grid, data.reshape(grid.resolution).astype(float), check_connected=check_connected)
