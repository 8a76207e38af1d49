"""
Isotropic elastic constants, eigenstress classification and the scalar
material constants that appear in the two-identical-eigenvalue reduction.

Conventions
-----------
* Lame parameters ``(lam, mu)`` are admissible when ``mu > 0`` and
  ``3 lam + 2 mu > 0``.
* Eigenstresses are symmetric 3x3 tensors.  In the principal frame of a
  ``TwoEqual`` eigenstress the repeated eigenvalue ``k1`` sits on axes 1 and 2
  and the distinct eigenvalue ``k3`` on axis 3.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import Rejection

__all__ = [
    "LameMaterial",
    "SpectralClass",
    "Eigenstress",
    "MaterialConstants",
    "RayReport",
    "Eta2Report",
    "JointReport",
    "make_isotropic_stiffness",
    "classify_eigenstress",
    "acoustic_tensor",
    "acoustic_inverse",
    "material_constants",
    "special_material_gamma0",
    "special_material_eta2",
    "special_material_joint",
    "eigenstress_from_eigenstrain",
    "stress_from_strain",
    "random_rotation",
    "rotate_stiffness",
]

DEFAULT_CLASS_TOL = 1e-9


@dataclass(frozen=True)
class LameMaterial:
    lam: float
    mu: float

    def violations(self) -> list[str]:
        """Names of the admissibility inequalities that fail (empty if none)."""
        out = []
        if not self.mu > 0:
            out.append("mu > 0")
        if not 3 * self.lam + 2 * self.mu > 0:
            out.append("3*lambda + 2*mu > 0")
        return out

    @property
    def admissible(self) -> bool:
        return not self.violations()

    def require_admissible(self) -> None:
        bad = self.violations()
        if bad:
            raise Rejection(
                f"inadmissible Lame parameters (lambda={self.lam}, mu={self.mu}): "
                + ", ".join(f'"{b}" fails' for b in bad)
            )

    @property
    def ratio(self) -> float:
        return self.lam / self.mu


def make_isotropic_stiffness(material: LameMaterial) -> np.ndarray:
    """Rank-4 isotropic stiffness C_ijkl = lam d_ij d_kl + mu (d_ik d_jl + d_il d_jk)."""
    material.require_admissible()
    d = np.eye(3)
    return (
        material.lam * np.einsum("ij,kl->ijkl", d, d)
        + material.mu * (np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d))
    )


def rotate_stiffness(C: np.ndarray, R: np.ndarray) -> np.ndarray:
    return np.einsum("ia,jb,kc,ld,abcd->ijkl", R, R, R, R, C)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed rotation matrix (det +1)."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


class SpectralClass(enum.Enum):
    ALL_EQUAL = "AllEqual"
    TWO_EQUAL = "TwoEqual"
    ALL_DISTINCT = "AllDistinct"


@dataclass(frozen=True)
class Eigenstress:
    """Symmetric eigenstress with its principal decomposition.

    ``principal_values`` are sorted descending, except for ``TWO_EQUAL`` where
    they read ``(k1, k1, k3)`` with the distinct value last.  ``frame`` holds
    the corresponding unit eigenvectors as columns, so that
    ``tensor == frame @ diag(principal_values) @ frame.T``.
    """

    tensor: np.ndarray
    principal_values: tuple[float, float, float]
    frame: np.ndarray
    spectral_class: SpectralClass

    @property
    def k1(self) -> float:
        return self.principal_values[0]

    @property
    def k3(self) -> float:
        return self.principal_values[2]

    def in_principal_frame(self) -> np.ndarray:
        return np.diag(self.principal_values)

    def scaled(self, factor: float) -> "Eigenstress":
        vals = tuple(factor * v for v in self.principal_values)
        return Eigenstress(factor * self.tensor, vals, self.frame, self.spectral_class)


def _close(a: float, b: float, rel_tol: float) -> bool:
    return abs(a - b) <= rel_tol * max(1.0, abs(a), abs(b))


def _complete_frame(e3: np.ndarray) -> np.ndarray:
    # Gram-Schmidt of the fixed reference axis least aligned with e3.
    e3 = e3 / np.linalg.norm(e3)
    ref = np.eye(3)[int(np.argmin(np.abs(e3)))]
    e1 = ref - (ref @ e3) * e3
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e3, e1)
    return np.column_stack([e1, e2, e3])


def classify_eigenstress(sigma, rel_tol: float = DEFAULT_CLASS_TOL) -> Eigenstress:
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (3, 3):
        raise Rejection(f"eigenstress must be 3x3, got shape {sigma.shape}")
    scale = max(1.0, float(np.max(np.abs(sigma))))
    if np.max(np.abs(sigma - sigma.T)) > 1e-12 * scale:
        raise Rejection("eigenstress is not symmetric")
    sigma = 0.5 * (sigma + sigma.T)

    w, v = np.linalg.eigh(sigma)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    eq01 = _close(w[0], w[1], rel_tol)
    eq12 = _close(w[1], w[2], rel_tol)

    if eq01 and eq12:
        k = float(np.mean(w))
        return Eigenstress(sigma, (k, k, k), np.eye(3), SpectralClass.ALL_EQUAL)
    if eq01 or eq12:
        if eq01:
            k1, k3, e3 = 0.5 * (w[0] + w[1]), w[2], v[:, 2]
        else:
            k1, k3, e3 = 0.5 * (w[1] + w[2]), w[0], v[:, 0]
        if e3[int(np.argmax(np.abs(e3)))] < 0:
            e3 = -e3
        frame = _complete_frame(e3)
        return Eigenstress(sigma, (float(k1), float(k1), float(k3)), frame, SpectralClass.TWO_EQUAL)

    if np.linalg.det(v) < 0:
        v[:, 2] = -v[:, 2]
    return Eigenstress(sigma, tuple(float(x) for x in w), v, SpectralClass.ALL_DISTINCT)


def acoustic_tensor(material: LameMaterial, xi) -> np.ndarray:
    """K_qm = C_qlmn xi_l xi_n."""
    xi = np.asarray(xi, dtype=float)
    return material.mu * (xi @ xi) * np.eye(3) + (material.lam + material.mu) * np.outer(xi, xi)


def acoustic_inverse(material: LameMaterial, xi) -> np.ndarray:
    """Inverse of the acoustic tensor, L_pq(xi), in closed form."""
    xi = np.asarray(xi, dtype=float)
    n2 = float(xi @ xi)
    if n2 == 0.0:
        raise Rejection("acoustic inverse undefined at xi = 0")
    lam, mu = material.lam, material.mu
    return np.eye(3) / (mu * n2) - (mu + lam) / (mu * (2 * mu + lam)) * np.outer(xi, xi) / n2**2


@dataclass(frozen=True)
class MaterialConstants:
    alpha: float
    beta: float
    gamma: float
    eta: float


def material_constants(material: LameMaterial, k1: float, k3: float) -> MaterialConstants:
    if k1 == k3:
        raise Rejection("constants undefined when eigenvalues coincide (k1 == k3)")
    lam, mu = material.lam, material.mu
    if lam + mu == 0:
        raise Rejection("constants undefined when lambda + mu == 0")
    denom = (lam + mu) * (k1 - k3)
    return MaterialConstants(
        alpha=-(mu * k1) / denom,
        beta=-(k3 * (lam + 2 * mu) - k1 * (lam + mu)) / denom,
        gamma=(k3 * (lam + mu) - k1 * (lam + 3 * mu)) / denom,
        eta=(k3 * (lam + 3 * mu) - k1 * (lam + mu)) / denom,
    )


@dataclass(frozen=True)
class RayReport:
    """A ray ``lambda = ratio * mu`` (mu > 0) of Lame parameters.

    ``admissible`` is true when points of the ray with ``mu > 0`` satisfy
    ``3 lambda + 2 mu > 0``, i.e. ``ratio > -2/3``.
    """

    ratio: float
    admissible: bool
    same_sign: bool

    def material(self, mu: float = 1.0) -> LameMaterial:
        return LameMaterial(self.ratio * mu, mu)


def _ray(ratio: float, k1: float, k3: float) -> RayReport:
    return RayReport(ratio=ratio, admissible=3 * ratio + 2 > 0, same_sign=k1 * k3 > 0)


def special_material_gamma0(k1: float, k3: float) -> RayReport:
    """Lame ratio making gamma vanish: k1 (lam + 3 mu) = k3 (lam + mu)."""
    if k1 == k3:
        raise Rejection("gamma = 0 ray undefined when k1 == k3")
    return _ray((k3 - 3 * k1) / (k1 - k3), k1, k3)


@dataclass(frozen=True)
class Eta2Report:
    printed: RayReport
    literal: RayReport
    agree: bool


def special_material_eta2(k1: float, k3: float) -> Eta2Report:
    """Two candidate rays for eta = 2.

    ``printed`` solves k1 (lam + mu) = k3 (mu - lam).  ``literal`` solves
    eta(lam, mu, k1, k3) = 2 with eta as computed by ``material_constants``,
    i.e. 3 lam (k3 - k1) + mu (5 k3 - 3 k1) = 0.  The two generally disagree
    and both are reported.
    """
    if k1 == k3:
        raise Rejection("eta = 2 ray undefined when k1 == k3")
    if k1 + k3 == 0:
        raise Rejection("eta = 2 ray undefined when k1 + k3 == 0")
    printed = _ray((k3 - k1) / (k1 + k3), k1, k3)
    literal = _ray((3 * k1 - 5 * k3) / (3 * (k3 - k1)), k1, k3)
    agree = abs(printed.ratio - literal.ratio) <= 1e-9 * max(1.0, abs(printed.ratio))
    return Eta2Report(printed, literal, agree)


@dataclass(frozen=True)
class JointReport:
    determinant: float
    solvable: bool
    ratio: Optional[float] = None
    admissible: Optional[bool] = None
    same_sign: bool = field(default=False)


def joint_determinant(k1: float, k3: float) -> float:
    return 2.0 * (k3 * k3 - 2.0 * k1 * k3 - k1 * k1)


def special_material_joint(k1: float, k3: float, rel_tol: float = 1e-9) -> JointReport:
    """Impose the gamma = 0 and printed eta = 2 conditions simultaneously.

    As a homogeneous system in (lam, mu)::

        (k1 - k3) lam + (3 k1 - k3) mu = 0
        (k1 + k3) lam + (k1 - k3)   mu = 0

    a non-trivial ray exists only when the determinant vanishes, which happens
    on k3 / k1 = 1 +- sqrt(2).
    """
    if k1 == k3:
        raise Rejection("joint system undefined when k1 == k3")
    det = joint_determinant(k1, k3)
    same_sign = k1 * k3 > 0
    if abs(det) > rel_tol * 2.0 * (k1 * k1 + k3 * k3):
        return JointReport(det, False, same_sign=same_sign)
    r_gamma = (k3 - 3 * k1) / (k1 - k3)
    r_eta = (k3 - k1) / (k1 + k3)
    ratio = 0.5 * (r_gamma + r_eta)
    return JointReport(det, True, ratio, 3 * ratio + 2 > 0, same_sign)


def eigenstress_from_eigenstrain(material: LameMaterial, eps) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    return material.lam * np.trace(eps) * np.eye(3) + 2 * material.mu * eps


def stress_from_strain(material: LameMaterial, grad_u, eigenstrain) -> np.ndarray:
    """sigma = C : (sym(grad_u) - eps*), broadcasting over leading axes."""
    grad_u = np.asarray(grad_u, dtype=float)
    e = 0.5 * (grad_u + np.swapaxes(grad_u, -1, -2)) - np.asarray(eigenstrain, dtype=float)
    tr = np.trace(e, axis1=-2, axis2=-1)[..., None, None]
    return material.lam * tr * np.eye(3) + 2 * material.mu * e


def sqrt2_roots(k1: float) -> tuple[float, float]:
    """The two k3 values at which the joint determinant vanishes."""
    return k1 * (1 + math.sqrt(2)), k1 * (1 - math.sqrt(2))
