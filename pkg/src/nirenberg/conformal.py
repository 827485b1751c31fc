"""Conformal transformations of S^2 acting on conformal factors.

A map is stored as phi = R o D_{p,t}: the dilation D_{p,t} acts as x -> t x
in the stereographic chart that sends p to 0 and -p to infinity (so for t > 1
the pole p is the source and -p the sink), followed by the rotation R.

Internally every map is the Lorentz matrix acting on null vectors (1, x) of
Minkowski space; S^2 is the projectivised light cone.  Composition is matrix
multiplication and the conformal factor is chi(x) = 1 / (time component of
Lambda (1, x)).  D_{p,t} is the boost with rapidity vector -log(t) p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ResolutionExceeded, SliceProjectionFailed
from .sphere import SphereGrid, SpectralField, evaluate, project, tail_ratio

TAIL_TOL = 1e-6
SLICE_TOL = 1e-9


def _boost(c) -> np.ndarray:
    """Lorentz boost with rapidity vector c (rapidity |c|, direction c/|c|)."""
    c = np.asarray(c, dtype=float)
    eta = float(np.linalg.norm(c))
    B = np.eye(4)
    if eta == 0.0:
        return B
    n = c / eta
    ch, sh = math.cosh(eta), math.sinh(eta)
    B[0, 0] = ch
    B[0, 1:] = sh * n
    B[1:, 0] = sh * n
    B[1:, 1:] += (ch - 1.0) * np.outer(n, n)
    return B


def _rot4(R) -> np.ndarray:
    K = np.eye(4)
    K[1:, 1:] = R
    return K


@dataclass(frozen=True, eq=False)
class ConformalMap:
    rotation: np.ndarray
    pole: np.ndarray
    t: float

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        p = np.array(self.pole, dtype=float).reshape(3)
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-10):
            raise ValueError("rotation is not orthogonal")
        if self.t <= 0:
            raise ValueError("dilation factor must be positive")
        n = np.linalg.norm(p)
        if n == 0:
            raise ValueError("pole must be a nonzero vector")
        R.setflags(write=False)
        p = p / n
        p.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "pole", p)
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def identity(cls) -> "ConformalMap":
        return cls(np.eye(3), np.array([0.0, 0.0, 1.0]), 1.0)

    @classmethod
    def dilation(cls, pole, t: float) -> "ConformalMap":
        return cls(np.eye(3), pole, t)

    @classmethod
    def from_rotation(cls, R) -> "ConformalMap":
        return cls(R, np.array([0.0, 0.0, 1.0]), 1.0)

    @classmethod
    def from_coords(cls, b) -> "ConformalMap":
        """Pure dilation with coordinates b = log(t) p in R^3."""
        b = np.asarray(b, dtype=float)
        r = float(np.linalg.norm(b))
        if r == 0.0:
            return cls.identity()
        return cls(np.eye(3), b / r, math.exp(r))

    @property
    def coords(self) -> np.ndarray:
        return math.log(self.t) * self.pole

    @property
    def lorentz(self) -> np.ndarray:
        return _rot4(self.rotation) @ _boost(-math.log(self.t) * self.pole)

    @classmethod
    def from_lorentz(cls, L: np.ndarray) -> "ConformalMap":
        L = np.asarray(L, dtype=float)
        # polar decomposition L = K B with B a boost: L^T L = B^2
        B2 = L.T @ L
        v = B2[1:, 0]
        s = float(np.linalg.norm(v))
        if s < 1e-300:
            return cls.from_rotation(L[1:, 1:])
        eta = 0.5 * math.asinh(s)
        n = v / s
        K = L @ _boost(-eta * n)
        R = K[1:, 1:]
        # re-orthogonalise against roundoff
        U, _, Vt = np.linalg.svd(R)
        return cls(U @ Vt, -n, math.exp(eta))

    def compose(self, other: "ConformalMap") -> "ConformalMap":
        """self o other."""
        return ConformalMap.from_lorentz(self.lorentz @ other.lorentz)

    def __matmul__(self, other):
        return self.compose(other)

    def inverse(self) -> "ConformalMap":
        eta = np.diag([1.0, -1.0, -1.0, -1.0])
        return ConformalMap.from_lorentz(eta @ self.lorentz.T @ eta)

    def _act(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=float))
        L = self.lorentz
        time = L[0, 0] + x @ L[0, 1:]
        space = L[1:, 0][None, :] + x @ L[1:, 1:].T
        return space, time

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        space, time = self._act(pts)
        y = space / time[:, None]
        y /= np.linalg.norm(y, axis=1)[:, None]
        return y[0] if pts.ndim == 1 else y

    def factor(self, points) -> np.ndarray:
        """chi_phi, with phi^* g_{+1} = chi^2 g_{+1}."""
        pts = np.asarray(points, dtype=float)
        _, time = self._act(pts)
        chi = 1.0 / time
        return chi[0] if pts.ndim == 1 else chi

    def to_dict(self) -> dict:
        return {
            "rotation": [float(v) for v in self.rotation.ravel()],
            "pole": [float(v) for v in self.pole],
            "t": float(self.t),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConformalMap":
        return cls(np.array(d["rotation"], dtype=float).reshape(3, 3), d["pole"], d["t"])


def apply_map(point, phi: ConformalMap) -> np.ndarray:
    return phi(point)


def conformal_factor(phi: ConformalMap, point) -> np.ndarray:
    return phi.factor(point)


def pullback_u(u: SpectralField, phi: ConformalMap, g: SphereGrid, tail_tol: float = TAIL_TOL) -> SpectralField:
    """(u o phi) + log chi_phi re-projected to the grid band limit.

    Raises ResolutionExceeded when more than ``tail_tol`` of the energy of
    the resampled field lies above the band limit.
    """
    pts = g.points
    vals = evaluate(u, phi(pts)) + np.log(phi.factor(pts))
    full = project(vals.reshape(g.shape), g, g.capacity)
    ratio = tail_ratio(full, g.lmax)
    if ratio > tail_tol:
        raise ResolutionExceeded(
            f"pullback under t={phi.t:.4g} not resolved at lmax={g.lmax} (tail ratio {ratio:.2e})",
            tail_ratio=ratio,
        )
    return full.with_lmax(g.lmax)


def center_of_mass(u: SpectralField, g: SphereGrid) -> np.ndarray:
    """The three moments  int e^{2u} x_i dv_{+1}."""
    from .sphere import values_on

    w = np.exp(2.0 * values_on(u, g)) * g.area_weights
    return np.einsum("ijk,jk->i", g.xyz, w)


@dataclass(frozen=True, eq=False)
class SlicePoint:
    u: SpectralField
    moments: np.ndarray

    @property
    def moment_norm(self) -> float:
        return float(np.linalg.norm(self.moments))


def _pushed_moments(density: np.ndarray, pts: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Moments of the pulled-back metric under the dilation with coordinates b.

    By change of variables,  int e^{2 psi^* u} x dv = int e^{2u(y)} psi^{-1}(y) dv(y),
    and psi^{-1} for coordinates b is the boost with rapidity vector b.
    """
    B = _boost(b)
    time = B[0, 0] + pts @ B[0, 1:]
    space = B[1:, 0][None, :] + pts @ B[1:, 1:].T
    y = space / time[:, None]
    return density @ y


def project_to_slice(
    u: SpectralField,
    g: SphereGrid,
    tol: float = SLICE_TOL,
    max_iter: int = 50,
    start=None,
    tail_tol: float = TAIL_TOL,
) -> tuple[SlicePoint, ConformalMap]:
    """Find the dilation psi with  int e^{2 psi^* u} x_i dv = 0  (damped Newton in log(t) p)."""
    from .sphere import values_on

    pts = g.points
    density = (np.exp(2.0 * values_on(u, g)) * g.area_weights).ravel()
    area = density.sum()
    b = np.zeros(3) if start is None else np.asarray(start, dtype=float).copy()
    m = _pushed_moments(density, pts, b)
    h = 1e-6
    for _ in range(max_iter):
        if np.linalg.norm(m) < tol:
            break
        J = np.empty((3, 3))
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            J[:, k] = (_pushed_moments(density, pts, b + e) - _pushed_moments(density, pts, b - e)) / (2 * h)
        try:
            step = -np.linalg.solve(J, m)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(J, m, rcond=None)[0]
        # trust region: rapidity changes beyond 1 per step are damped
        sn = np.linalg.norm(step)
        if sn > 1.0:
            step /= sn
        lam = 1.0
        norm0 = np.linalg.norm(m)
        while lam > 1e-6:
            trial = b + lam * step
            mt = _pushed_moments(density, pts, trial)
            if np.linalg.norm(mt) < norm0:
                b, m = trial, mt
                break
            lam *= 0.5
        else:
            break
    mnorm = float(np.linalg.norm(m))
    if mnorm >= tol:
        raise SliceProjectionFailed(
            f"slice projection did not converge: moment norm {mnorm:.3e} (area {area:.4g})",
            moment_norm=mnorm,
        )
    psi = ConformalMap.from_coords(b)
    if not b.any():
        return SlicePoint(u.with_lmax(g.lmax), m), psi
    u_slice = pullback_u(u, psi, g, tail_tol=tail_tol)
    return SlicePoint(u_slice, m), psi


def bubble_factor(p, t: float, g: SphereGrid) -> SpectralField:
    """log chi of the dilation D_{p,t}, projected to the grid band limit."""
    phi = ConformalMap.dilation(p, t)
    vals = np.log(phi.factor(g.points)).reshape(g.shape)
    return project(vals, g, g.lmax)
