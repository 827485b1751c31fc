"""The curvature map u -> e^{-2u}(1 - Delta u), the functional J_K and their variations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import NonpositiveMass, NotASingularPoint, ResolutionExceeded
from .sphere import (
    FOUR_PI,
    SphereGrid,
    SpectralField,
    gradient_sq,
    laplacian,
    project,
    tail_ratio,
    values_on,
)

TAIL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class ConformalMetric:
    """g = e^{2u} g_{+1} with its density cached on a grid."""

    u: SpectralField
    grid: SphereGrid

    @cached_property
    def u_values(self) -> np.ndarray:
        return values_on(self.u, self.grid)

    @cached_property
    def density(self) -> np.ndarray:
        return np.exp(2.0 * self.u_values)

    @cached_property
    def area(self) -> float:
        return float(np.sum(self.density * self.grid.area_weights))

    def integrate(self, values) -> float:
        """int f dv_g for grid samples f."""
        return float(np.sum(np.asarray(values) * self.density * self.grid.area_weights))


def _check_tail(f: SpectralField, lmax: int, what: str, tol: float) -> None:
    r = tail_ratio(f, lmax)
    if r > tol:
        raise ResolutionExceeded(f"{what} not resolved at lmax={lmax} (tail ratio {r:.2e})", tail_ratio=r)


def curvature_values(u: SpectralField, g: SphereGrid) -> np.ndarray:
    """Pointwise e^{-2u}(1 - Delta u) on the grid."""
    return np.exp(-2.0 * values_on(u, g)) * (1.0 - values_on(laplacian(u), g))


def gauss_curvature(u: SpectralField, g: SphereGrid, tail_tol: float = TAIL_TOL) -> SpectralField:
    full = project(curvature_values(u, g), g, g.capacity)
    _check_tail(full, g.lmax, "curvature", tail_tol)
    return full.with_lmax(g.lmax)


def gauss_bonnet_defect(u: SpectralField, g: SphereGrid) -> float:
    """int K e^{2u} dv_{+1} - 4 pi with K = gauss_curvature(u)."""
    K = gauss_curvature(u, g)
    return float(np.sum(values_on(K, g) * np.exp(2.0 * values_on(u, g)) * g.area_weights) - FOUR_PI)


def linearization_apply(u: SpectralField, K: SpectralField, v: SpectralField, g: SphereGrid) -> SpectralField:
    """D_u pi (v) = -e^{-2u} Delta v - 2 K v."""
    vals = -np.exp(-2.0 * values_on(u, g)) * values_on(laplacian(v), g) - 2.0 * values_on(K, g) * values_on(v, g)
    return project(vals, g, g.lmax)


@dataclass(frozen=True, eq=False)
class FunctionalState:
    J: float
    kappa: float
    gradient: SpectralField
    mass: float = field(default=float("nan"))

    @property
    def gradient_norm(self) -> float:
        return self.gradient.norm()


def mass(u: SpectralField, K: SpectralField, g: SphereGrid) -> float:
    """int K e^{2u} dv_{+1}."""
    return float(np.sum(values_on(K, g) * np.exp(2.0 * values_on(u, g)) * g.area_weights))


def functional_J(u: SpectralField, K: SpectralField, g: SphereGrid) -> FunctionalState:
    """J = avg(|du|^2 + 2u) - log avg(K e^{2u}), averages over the unit-mass round measure.

    The gradient returned is half the L2(dv_0) gradient:  -Delta u + 1 - kappa K e^{2u}.
    """
    uv = values_on(u, g)
    a = values_on(K, g) * np.exp(2.0 * uv)
    m = float(np.sum(a * g.area_weights))
    if not m > 0:
        raise NonpositiveMass(f"int K e^(2u) = {m:.6g} is not positive")
    l = np.arange(u.lmax + 1)
    lam = np.repeat(l * (l + 1), 2 * l + 1)
    dirichlet = float(np.sum(lam * u.coeffs**2))
    mean_u = u.coeffs[0] * math.sqrt(FOUR_PI)
    J = (dirichlet + 2.0 * mean_u) / FOUR_PI - math.log(m / FOUR_PI)
    kappa = FOUR_PI / m
    grad = project(-values_on(laplacian(u), g) + 1.0 - kappa * a, g, g.lmax)
    return FunctionalState(J, kappa, grad, m)


def hessian_quadratic_form(
    u: SpectralField, K: SpectralField, v: SpectralField, g: SphereGrid, w: SpectralField | None = None
) -> float:
    """int v (-Delta w - 2 K e^{2u} w) dv_{+1}; w defaults to v.

    On {v : int K e^{2u} v = 0} at a solution this is 2 pi times the second
    derivative of J along v.
    """
    w = v if w is None else w
    a = values_on(K, g) * np.exp(2.0 * values_on(u, g))
    L = max(v.lmax, w.lmax)
    vv, ww = v.with_lmax(L), w.with_lmax(L)
    l = np.arange(L + 1)
    lam = np.repeat(l * (l + 1), 2 * l + 1)
    stiff = float(np.sum(vv.coeffs * lam * ww.coeffs))
    return stiff - 2.0 * float(np.sum(values_on(v, g) * values_on(w, g) * a * g.area_weights))


@dataclass(frozen=True, eq=False)
class BifurcationData:
    """Forms S_w(a, b) = int K w_a w_b w e^{2u} dv_{+1} over a kernel basis.

    ``forms[k]`` is the matrix for the k-th basis element as w.  For a one
    dimensional kernel, ``second_derivative`` is <D^2 pi(w, w), w> = -4 S and
    the cubic coefficient <D^3 pi(w, w, w), w> is given two ways: from
    8 int K w^4 dv_g and from 12 int w^2 |dw|^2 dv_{+1}.
    """

    forms: np.ndarray
    nondegenerate: bool
    det_ratio: float
    second_derivative: float | None = None
    cubic_from_K: float | None = None
    cubic_from_gradient: float | None = None


def bifurcation_form(
    u: SpectralField, K: SpectralField, basis: list[SpectralField], g: SphereGrid, rel_tol: float = 1e-8
) -> BifurcationData:
    if not basis:
        raise NotASingularPoint("empty kernel basis")
    a = values_on(K, g) * np.exp(2.0 * values_on(u, g)) * g.area_weights
    dens = np.exp(2.0 * values_on(u, g)) * g.area_weights
    W = np.stack([values_on(w, g) for w in basis])
    # normalise in L2(g) so the forms are scale free
    norms = np.sqrt(np.einsum("kij,ij->k", W * W, dens))
    W = W / norms[:, None, None]
    d = len(basis)
    forms = np.einsum("aij,bij,kij,ij->kab", W, W, W, a)
    scale = float(np.max(np.abs(values_on(K, g))))
    # Nondegenerate for some direction in N iff det(sum c_k S_k) is not
    # identically zero; probe coordinate directions and a few fixed mixtures.
    rng = np.random.default_rng(12345)
    probes = list(np.eye(d)) + list(rng.standard_normal((4, d)))
    best = 0.0
    for c in probes:
        c = c / np.linalg.norm(c)
        S = np.tensordot(c, forms, axes=1)
        best = max(best, abs(float(np.linalg.det(S))) / scale**d)
    out = dict(forms=forms, nondegenerate=best > rel_tol, det_ratio=best)
    if d == 1:
        w = basis[0] / float(norms[0])
        wv = W[0]
        out["second_derivative"] = -4.0 * float(forms[0, 0, 0])
        out["cubic_from_K"] = 8.0 * float(np.sum(wv**4 * a))
        out["cubic_from_gradient"] = 12.0 * float(np.sum(wv**2 * gradient_sq(w, g).values * g.area_weights))
    return BifurcationData(**out)
