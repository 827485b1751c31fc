"""Reference computations that share no code with the package.

Each oracle uses a different route to the same quantity: scipy's complex
spherical harmonics, a one-dimensional Legendre-Galerkin solver for zonal
curvature functions, and closed forms for dilation factors.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.optimize import root
from scipy.special import sph_harm_y


def real_harmonic(l: int, m: int, colat, lon):
    """Real orthonormal harmonic without Condon-Shortley phase, built from scipy's complex ones."""
    colat = np.asarray(colat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    Y = sph_harm_y(l, abs(m), colat, lon)
    if m == 0:
        return Y.real
    sign = (-1.0) ** m
    return np.sqrt(2.0) * sign * (Y.real if m > 0 else Y.imag)


def zonal_solve(K_of_z, n: int = 40, u0=None, nquad: int | None = None):
    """Solve  -((1 - z^2) u')' + 1 = K(z) e^{2u}  for u = sum_l a_l P_l(z), l < n.

    Galerkin in Legendre polynomials with Gauss quadrature; returns the
    coefficient vector (numpy Legendre series) and the max residual at the nodes.
    """
    nq = nquad or 3 * n
    z, w = npleg.leggauss(nq)
    P = np.stack([npleg.legval(z, np.eye(n)[l]) for l in range(n)])
    lam = np.arange(n) * (np.arange(n) + 1.0)
    norm = 2.0 / (2.0 * np.arange(n) + 1.0)
    K = K_of_z(z)

    def F(a):
        u = a @ P
        return lam * norm * a + P @ (w * (1.0 - K * np.exp(2.0 * u)))

    def J(a):
        u = a @ P
        return np.diag(lam * norm) - 2.0 * (P * (w * K * np.exp(2.0 * u))) @ P.T

    a0 = np.zeros(n) if u0 is None else np.asarray(u0, dtype=float)
    sol = root(F, a0, jac=J, method="hybr", tol=1e-14)
    a = sol.x
    return a, float(np.max(np.abs(F(a))))


def dilation_factor(z_along_axis, t: float, sign: float = 1.0):
    """Conformal factor of y -> t y in stereographic coordinates, as a function of x . p.

    ``sign`` picks which of the two poles the dilation concentrates at.
    """
    s = np.asarray(z_along_axis, dtype=float)
    return 2.0 * t / ((1.0 + t * t) - sign * (1.0 - t * t) * s)


def gauss_legendre_mp(n: int, dps: int = 40):
    """Gauss-Legendre nodes and weights polished in extended precision with mpmath."""
    import mpmath as mp

    mp.mp.dps = dps
    x0, _ = npleg.leggauss(n)
    xs, ws = [], []
    for x in x0:
        r = mp.findroot(lambda t: mp.legendre(n, t), mp.mpf(float(x)))
        dp = mp.diff(lambda t: mp.legendre(n, t), r)
        xs.append(float(r))
        ws.append(float(2 / ((1 - r * r) * dp * dp)))
    return np.array(xs), np.array(ws)
