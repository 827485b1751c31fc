"""Closed-form (u, K) pairs used as ground truth, and a registry of named presets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .conformal import ConformalMap, bubble_factor
from .curvature import gauss_curvature
from .errors import ClassificationFailed, InvalidBandLimit, ResolutionExceeded, ZeroInput
from .morse import MorseReport, classify_regions, find_critical_points
from .sphere import (
    FOUR_PI,
    SpectralField,
    from_function,
    lm_index,
    make_grid,
    project,
    values_on,
)


@dataclass(frozen=True, eq=False)
class EigenPair:
    """u a degree-l harmonic, K = e^{-2u}(1 + lam u) with lam = l(l+1), plus analytic predictions."""

    l: int
    u: SpectralField
    K: SpectralField

    @property
    def lam(self) -> int:
        return self.l * (self.l + 1)

    @property
    def critical_level(self) -> float:
        """Level of u on which grad K = e^{-2u}((lam - 2) - 2 lam u) grad u also vanishes."""
        return (self.lam - 2) / (2.0 * self.lam)

    def K_exact(self, u_values):
        u_values = np.asarray(u_values)
        return np.exp(-2.0 * u_values) * (1.0 + self.lam * u_values)

    def gradient_factor(self, u_values):
        """grad K / grad u = e^{-2u}((lam - 2) - 2 lam u)."""
        u_values = np.asarray(u_values)
        return np.exp(-2.0 * u_values) * ((self.lam - 2) - 2.0 * self.lam * u_values)

    def lap_at_critical(self, u_values):
        """Delta K at critical points of u:  -e^{-2u}((lam - 2) - 2 lam u) lam u."""
        u_values = np.asarray(u_values)
        return -self.gradient_factor(u_values) * self.lam * u_values

    @property
    def below_critical_level(self) -> bool:
        """True when max u < critical level, so crit(K) = crit(u)."""
        g = make_grid(max(self.u.lmax, 2), 4)
        return float(np.max(values_on(self.u, g))) < self.critical_level

    # membership predictions: 0 is a critical value of every harmonic of
    # degree >= 2, where Delta K = 0 with K = 1 > 0; the Laplacian formula also
    # rules out zero-level maxima
    predicted_in_N = False
    predicted_in_C = True

    def critical_points_of_u(self):
        return find_critical_points(self.u)


def eigenfunction_pair(l: int, coeffs, scale: float = 1.0, lmax: int = 24) -> EigenPair:
    """Pair for u = scale * sum_m coeffs[m] Y_{l,m}.

    ``coeffs`` is either a mapping m -> value or a sequence of 2l + 1 values
    ordered m = -l..l.  K is projected to degree ``lmax``.
    """
    if l < 1:
        raise InvalidBandLimit("eigenfunction degree must be >= 1")
    if lmax < l:
        raise InvalidBandLimit(f"lmax {lmax} below the harmonic degree {l}")
    c = np.zeros(2 * l + 1)
    if isinstance(coeffs, dict):
        for m, v in coeffs.items():
            if abs(m) > l:
                raise ValueError(f"order {m} out of range for degree {l}")
            c[m + l] = v
    else:
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (2 * l + 1,):
            raise ValueError(f"expected {2 * l + 1} coefficients for degree {l}")
    c = c * scale
    if not np.any(c):
        raise ZeroInput("u must not vanish identically")
    u = SpectralField.zeros(lmax)
    coeffs_full = u.coeffs.copy()
    coeffs_full[lm_index(l, -l) : lm_index(l, l) + 1] = c
    u = SpectralField(lmax, coeffs_full)
    g = make_grid(lmax, 2)
    lam = l * (l + 1)
    uv = values_on(u, g)
    K = project(np.exp(-2.0 * uv) * (1.0 + lam * uv), g, lmax)
    return EigenPair(l, u, K)


def harmonic_coefficients(func: Callable, l: int) -> np.ndarray:
    """Coefficients (m = -l..l) of a degree-l harmonic given as a function of (x, y, z)."""
    f = from_function(func, l + 2)
    c = f.coeffs
    own = c[lm_index(l, -l) : lm_index(l, l) + 1].copy()
    rest = np.delete(c, np.arange(lm_index(l, -l), lm_index(l, l) + 1))
    if np.max(np.abs(rest), initial=0.0) > 1e-12 * max(1.0, float(np.max(np.abs(own)))):
        raise ValueError(f"function is not a pure degree-{l} harmonic")
    return own


def quadrupole_pair(lmax: int = 24) -> EigenPair:
    """u = (x^2 - y^2) / 4, the l = 2 example with saddles of vanishing Laplacian at the poles."""
    return eigenfunction_pair(2, harmonic_coefficients(lambda x, y, z: 0.25 * (x * x - y * y), 2), lmax=lmax)


@dataclass(frozen=True, eq=False)
class BubblePair:
    u: SpectralField
    K: SpectralField
    map: ConformalMap
    curvature_error: float
    area: float


def bubble_pair(p, t: float, lmax: int = 24) -> BubblePair:
    """u = log chi of the dilation about p by t, with K = 1; checked through the forward map.

    Raises ResolutionExceeded when the factor is not resolved at ``lmax``.
    """
    if t <= 0:
        raise ValueError("dilation factor must be positive")
    g = make_grid(lmax, 2)
    u = bubble_factor(p, t, g)
    K = gauss_curvature(u, g)
    err = float(np.max(np.abs(values_on(K, g) - 1.0)))
    area = float(np.sum(np.exp(2.0 * values_on(u, g)) * g.area_weights))
    if err > 1e-6:
        raise ResolutionExceeded(f"bubble t={t:g} not resolved at lmax={lmax} (curvature error {err:.2e})")
    return BubblePair(u, SpectralField.constant(1.0, lmax), ConformalMap.dilation(p, t), err, area)


def _flat_bump(zeta: np.ndarray, k: int = 6, flat: int = 3) -> np.ndarray:
    """(1 - zeta)^k times the Taylor polynomial of (1 - zeta)^-k: 1 + O(zeta^flat) near zeta = 0."""
    return (1.0 - zeta) ** k * sum(math.comb(k - 1 + j, j) * zeta**j for j in range(flat))


@dataclass(frozen=True, eq=False)
class SaddleFamily:
    K: SpectralField
    u: SpectralField
    signs: tuple[str, str]
    eps: tuple[float, float]
    report: MorseReport

    @property
    def degree(self) -> int | None:
        return self.report.degree


def perturbed_saddle_family(signs=("+", "+"), eps: float = 0.01, lmax: int = 30, k: int = 6) -> SaddleFamily:
    """K = curvature of u = u* + e_N eta_N w + e_S eta_S w, u* = (x^2 - y^2)/4, w = z^2 - y^2.

    eta_N, eta_S are polynomial bumps of degree k in (1 - z)/2 and (1 + z)/2
    that are flat to second order at their pole, so u is band limited at k + 4
    and K at 3(k + 4).  Near a pole u* + e w is still a degree-2 harmonic with
    value e there, so Delta K = -24 e + O(e^2): the requested sign '+' uses
    e = -|eps| and '-' uses e = +|eps|.  Larger amplitudes split the maxima
    into extra critical points, so the result is classified and
    ClassificationFailed is raised unless the poles carry the requested signs
    and the other four critical points are the only ones.
    """
    if len(signs) != 2 or any(s not in ("+", "-") for s in signs):
        raise ValueError("signs must be a pair of '+' / '-'")
    e = tuple(-abs(eps) if s == "+" else abs(eps) for s in signs)
    L = k + 4
    LK = max(3 * L, lmax)
    g = make_grid(LK, 2)
    x, y, z = g.xyz
    w = z * z - y * y
    v = 0.25 * (x * x - y * y) + (e[0] * _flat_bump((1.0 - z) / 2.0, k) + e[1] * _flat_bump((1.0 + z) / 2.0, k)) * w
    u = project(v, g, L).with_lmax(LK)
    K = gauss_curvature(u, g)
    report = classify_regions(K)
    for target, pole, s in ((1.0, "north", signs[0]), (-1.0, "south", signs[1])):
        near = [p for p in report.points if p.location[2] * target > 1 - 1e-6]
        if len(near) != 1 or near[0].kind != "saddle" or (near[0].lap > 0) != (s == "+") or abs(near[0].lap) <= report.eps_n:
            raise ClassificationFailed(f"{pole} pole did not become a saddle with Delta K sign {s} at eps={eps:g}")
    if not report.degree_defined:
        raise ClassificationFailed("perturbed curvature is not a Morse function in C and N: " + "; ".join(report.notes))
    if (report.maxima, report.minima, report.saddles) != (2, 2, 2):
        raise ClassificationFailed(
            f"perturbation at eps={eps:g} created extra critical points "
            f"({report.maxima} max, {report.minima} min, {report.saddles} saddles)"
        )
    return SaddleFamily(K, u, tuple(signs), e, report)


# ---------------------------------------------------------------------------
# presets


def _linear(axis: int, c: float, lmax: int = 1) -> SpectralField:
    f = SpectralField.constant(1.0, max(lmax, 1)).coeffs.copy()
    f[lm_index(1, (1, -1, 0)[axis])] = c * math.sqrt(FOUR_PI / 3.0)
    return SpectralField(max(lmax, 1), f)


def _preset_eig(lmax):
    p = quadrupole_pair(lmax)
    return {"K": p.K, "u": p.u}


def _preset_bubble(lmax):
    b = bubble_pair((0.0, 0.0, 1.0), 2.0, max(lmax, 24))
    return {"K": SpectralField.constant(1.0, lmax), "u": b.u}


def _preset_saddles(signs):
    def make(lmax):
        fam = perturbed_saddle_family(signs, lmax=max(lmax, 30))
        return {"K": fam.K, "u": fam.u}

    return make


PRESETS: dict[str, Callable[[int], dict]] = {
    "round": lambda lmax: {"K": SpectralField.constant(1.0, lmax), "u": SpectralField.zeros(lmax)},
    "linear-z": lambda lmax: {"K": _linear(2, 1.0)},
    "tilt-0.1z": lambda lmax: {"K": _linear(2, 0.1)},
    "eig-l2-xy": _preset_eig,
    "bubble-t2": _preset_bubble,
    "saddles-plus-plus": _preset_saddles(("+", "+")),
    "saddles-minus-minus": _preset_saddles(("-", "-")),
    "saddles-plus-minus": _preset_saddles(("+", "-")),
}


def preset(name: str, lmax: int = 24) -> dict:
    """Named field set: always has "K"; "u" when a solution is known in closed form."""
    try:
        make = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None
    return make(lmax)


# ---------------------------------------------------------------------------
# continuation paths


def _zonal_polynomial(coeffs, degree: int) -> SpectralField:
    """sum_k coeffs[k] z^k as a field of band ``degree``."""
    return from_function(lambda x, y, z: sum(c * z**k for k, c in enumerate(coeffs)), degree)


def fold_path():
    """K(t) = 1 + z^2/2 + t z over t in [0, 1.5]: the even solution at t = 0 meets a
    second branch at a fold before the monotone-in-z region t >= 1 (no solutions there)."""
    from .continuation import ContinuationOptions, LinearPath

    base = _zonal_polynomial([1.0, 0.0, 0.5], 2)
    direction = _zonal_polynomial([0.0, 1.0], 2)
    return LinearPath(base, direction, 0.0, 1.5), ContinuationOptions(lmax=16, symmetry="axisymmetric"), SpectralField.zeros(16)


def _pole_max_family(h: float) -> SpectralField:
    # with s = 1 - z^2:  K = h - s + (2 - h) s^2, local maxima of height h at both
    # poles, a ring maximum K = 1 on the equator
    s = [1.0, 0.0, -1.0]
    s2 = [1.0, 0.0, -2.0, 0.0, 1.0]
    c = np.zeros(5)
    c[0] += h
    c[: len(s)] -= s
    c += (2.0 - h) * np.array(s2)
    return _zonal_polynomial(c, 4)


def boundary_c_path(decreasing: bool = True):
    """Path through a zero-level local maximum at the poles.

    decreasing=True: the polar maxima go from +0.3 to -0.1, following the
    solution concentrated at the north pole (its area grows like 4 pi / h).
    decreasing=False: from -0.1 to +0.3 following the solution at u = 0 start.
    """
    from .continuation import ContinuationOptions, LinearPath

    h0, h1 = (0.3, -0.1) if decreasing else (-0.1, 0.3)
    base = _pole_max_family(h0)
    direction = _pole_max_family(h1) - base
    opts = ContinuationOptions(lmax=96, symmetry="axisymmetric", ds_max=0.1)
    g = make_grid(96, 2)
    start = bubble_factor((0.0, 0.0, 1.0), 2.0, g) + 1.0 if decreasing else SpectralField.zeros(96)
    return LinearPath(base, direction, 0.0, 1.0), opts, start


PATH_PRESETS = {
    "fold": fold_path,
    "boundary-c-decreasing": lambda: boundary_c_path(True),
    "boundary-c-increasing": lambda: boundary_c_path(False),
}
