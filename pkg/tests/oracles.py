"""Independent reference values used by the tests.

Nothing here calls into eshelby_lab; every function is built from closed-form
radial solutions, Carlson's symmetric integral, or direct scipy quadrature of
the classical ellipsoid integrals.
"""

import math

import numpy as np
from scipy import integrate
from scipy.special import elliprd


# --- unit ball, radial solutions ------------------------------------------------

def ball_N(x):
    """Newtonian potential (kernel -1/(4 pi r)) of the unit ball."""
    r = np.linalg.norm(np.atleast_2d(x), axis=-1)
    return np.where(r <= 1, (r**2 - 3) / 6, -1 / (3 * np.maximum(r, 1e-300)))


def ball_H(x):
    """Biharmonic potential (kernel -r/(8 pi)) of the unit ball."""
    r = np.linalg.norm(np.atleast_2d(x), axis=-1)
    return np.where(r <= 1, r**4 / 120 - r**2 / 12 - 1 / 8, -r / 6 - 1 / (30 * np.maximum(r, 1e-300)))


def ball_ntilde_origin() -> float:
    """Kernel -(x3 - y3)^2 / (4 pi |x - y|^3) over the unit ball at x = 0.

    The angular mean of cos^2 is 1/3 and the radial integral of r^2 / r is 1/2.
    """
    return -(1.0 / 3.0) * 0.5


# --- ellipsoids -------------------------------------------------------------------

def ferrers_carlson(a):
    """Interior N = c0 + sum c_i x_i^2 via Carlson R_D (body frame)."""
    a = np.asarray(a, dtype=float)
    a2 = a**2
    c = np.empty(3)
    for i in range(3):
        j, k = [t for t in range(3) if t != i]
        # int_0^inf ds / ((a_i^2 + s) Delta(s)) = (2/3) R_D(a_j^2, a_k^2, a_i^2)
        c[i] = np.prod(a) / 4 * (2.0 / 3.0) * elliprd(a2[j], a2[k], a2[i])
    # the constant term by direct quadrature of int_0^inf ds / Delta(s)
    f = lambda s: 1.0 / math.sqrt((a2[0] + s) * (a2[1] + s) * (a2[2] + s))
    i0 = integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-12, limit=500)[0]
    c0 = -np.prod(a) / 4 * i0
    return c0, c


def _mura_integrals(a):
    a2 = np.asarray(a, dtype=float) ** 2
    V = 2 * math.pi * float(np.prod(a))
    delta = lambda s: math.sqrt((a2[0] + s) * (a2[1] + s) * (a2[2] + s))

    def q(f):
        return integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-11, limit=500)[0]

    I = np.array([V * q(lambda s, i=i: 1 / ((a2[i] + s) * delta(s))) for i in range(3)])
    II = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            II[i, j] = V * q(lambda s, i=i, j=j: 1 / ((a2[i] + s) * (a2[j] + s) * delta(s)))
    return I, II


def eshelby_strain(a, lam, mu, sigma_diag):
    """Interior strain of an axis-aligned ellipsoid with diagonal eigenstress.

    Classical Eshelby tensor S (Mura's integral form) applied to the
    eigenstrain C^-1 sigma*.  Returns the diagonal of the uniform strain.
    """
    a = np.asarray(a, dtype=float)
    a2 = a**2
    nu = lam / (2 * (lam + mu))
    I, II = _mura_integrals(a)
    S = np.empty((3, 3))  # S[i, j] = S_iijj
    f = 8 * math.pi * (1 - nu)
    for i in range(3):
        for j in range(3):
            if i == j:
                S[i, i] = 3 * a2[i] * II[i, i] / f + (1 - 2 * nu) * I[i] / f
            else:
                S[i, j] = a2[j] * II[i, j] / f - (1 - 2 * nu) * I[i] / f
    s = np.asarray(sigma_diag, dtype=float)
    eps_star = (s - lam / (3 * lam + 2 * mu) * s.sum()) / (2 * mu)
    return S @ eps_star


def gamma_direction_average(lam, mu, sigma, n=200):
    """<Gamma> over the unit sphere by Gauss-Legendre x trapezoid quadrature.

    Gamma_pl(xi) = L_pq(xi) sigma_qj xi_j xi_l with L the acoustic inverse.
    """
    sigma = np.asarray(sigma, dtype=float)
    t, wt = np.polynomial.legendre.leggauss(n)
    ph = np.linspace(0, 2 * math.pi, 2 * n, endpoint=False)
    ct, ph = np.meshgrid(t, ph, indexing="ij")
    st = np.sqrt(1 - ct**2)
    xi = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1).reshape(-1, 3)
    w = (wt[:, None] * np.full(ph.shape[1], 2 * math.pi / ph.shape[1])[None]).reshape(-1)
    c = (mu + lam) / (mu * (2 * mu + lam))
    L = np.eye(3)[None] / mu - c * xi[:, :, None] * xi[:, None, :]
    v = xi @ sigma.T
    G = np.einsum("npq,nq,nl->npl", L, v, xi)
    return np.einsum("n,npl->pl", w, G) / (4 * math.pi)
