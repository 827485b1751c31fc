"""Critical points of a curvature candidate K, region membership and degree."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConstantInput, InternalInconsistency, UndefinedDegree
from .sphere import (
    SphereGrid,
    SpectralField,
    ambient_gradient,
    evaluate_many,
    grad_dot,
    laplacian,
    linear_functions,
    make_grid,
)

KINDS = ("max", "min", "saddle", "degenerate")
_INDEX = {"min": 0, "saddle": 1, "max": 2}


@dataclass(frozen=True)
class CriticalPoint:
    location: np.ndarray
    value: float
    grad_norm: float
    hessian_eigenvalues: tuple[float, float]
    kind: str
    lap: float
    converged: bool = True

    @property
    def index(self) -> int | None:
        return _INDEX.get(self.kind)

    def to_dict(self) -> dict:
        return {
            "location": [float(v) for v in self.location],
            "value": float(self.value),
            "grad_norm": float(self.grad_norm),
            "hessian_eigenvalues": [float(v) for v in self.hessian_eigenvalues],
            "type": self.kind,
            "lapK": float(self.lap),
        }


@dataclass(frozen=True)
class Tolerances:
    eps_c: float | None = None
    eps_n: float | None = None
    critical: float = 1e-8
    degenerate: float = 1e-6
    dedup: float = 1e-3


def fibonacci_points(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _tangent_frames(Q: np.ndarray) -> np.ndarray:
    """Orthonormal tangent frames, shape (n, 3, 2)."""
    a = np.zeros_like(Q)
    use_y = np.abs(Q[:, 0]) >= 0.9
    a[~use_y, 0] = 1.0
    a[use_y, 1] = 1.0
    e1 = a - np.sum(a * Q, axis=1)[:, None] * Q
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(Q, e1)
    return np.stack([e1, e2], axis=2)


class _Derivatives:
    """K, its ambient gradient, ambient Hessian and Laplacian as spectral fields."""

    def __init__(self, K: SpectralField):
        L = K.lmax
        gd = make_grid(L + 2, 2)
        self.K = K
        self.G = ambient_gradient(K, gd)
        xs = linear_functions()
        self.H = [[grad_dot(Gi, xj, gd) for xj in xs] for Gi in self.G]
        self.lap = laplacian(K)
        self.fields = [K, *self.G, self.lap, *(h for row in self.H for h in row)]

    def at(self, Q: np.ndarray):
        """Values, ambient gradients (n, 3), Laplacians and ambient Hessians (n, 3, 3)."""
        v = evaluate_many(self.fields, Q)
        return v[0], v[1:4].T, v[4], v[5:].T.reshape(-1, 3, 3)


def _tangent_data(D: _Derivatives, Q: np.ndarray):
    val, G, lap, H = D.at(Q)
    E = _tangent_frames(Q)
    gt = np.einsum("nia,ni->na", E, G)
    Ht = np.einsum("nia,nij,njb->nab", E, H, E)
    Ht = 0.5 * (Ht + np.swapaxes(Ht, 1, 2))
    return val, gt, lap, Ht, E


def _polish(D: _Derivatives, Q: np.ndarray, tol: float, max_step: float, max_iter: int = 60):
    """Newton on the tangential gradient for many starting points at once."""
    Q = np.array(Q, dtype=float)
    active = np.ones(len(Q), dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        _, gt, _, Ht, E = _tangent_data(D, Q[active])
        done = np.linalg.norm(gt, axis=1) < tol
        lam, V = np.linalg.eigh(Ht)
        inv = np.where(np.abs(lam) > 1e-14, 1.0 / np.where(lam == 0, 1.0, lam), 0.0)
        step = -np.einsum("nab,nb,ncb,nc->na", V, inv, V, gt)
        n = np.linalg.norm(step, axis=1)
        step *= np.minimum(1.0, max_step / np.maximum(n, 1e-300))[:, None]
        step[done] = 0.0
        Qa = Q[active] + np.einsum("nia,na->ni", E, step)
        Q[active] = Qa / np.linalg.norm(Qa, axis=1)[:, None]
        idx = np.nonzero(active)[0]
        active[idx[done]] = False
    _, gt, _, _, _ = _tangent_data(D, Q)
    return Q, np.linalg.norm(gt, axis=1) < tol


@dataclass
class _Scan:
    K: np.ndarray
    grad: np.ndarray
    lap: np.ndarray


def _scan(D: _Derivatives, pts: np.ndarray) -> _Scan:
    v = evaluate_many([D.K, *D.G, D.lap], pts)
    return _Scan(v[0], np.linalg.norm(v[1:4], axis=0), v[4])


def _scan_points(lmax: int) -> np.ndarray:
    # about 4 samples per wavelength of the highest degree in each direction
    n = max(20000, int(2 * (4 * lmax) ** 2))
    return fibonacci_points(n)


def find_critical_points(
    K: SpectralField, g: SphereGrid | None = None, tol: Tolerances | None = None, _cache=None
) -> list[CriticalPoint]:
    """All critical points found by a dense scan of |grad K| followed by Newton polish."""
    tol = tol or Tolerances()
    if np.max(np.abs(K.coeffs[1:])) < 1e-14 * max(1.0, abs(K.coeffs[0])):
        raise ConstantInput("K is constant; every point is critical")
    D = _Derivatives(K)
    pts = _scan_points(K.lmax)
    sc = _scan(D, pts)
    if _cache is not None:
        _cache["scan"] = sc
    scale = float(sc.grad.max())
    tree = cKDTree(pts)
    # 4-neighbour minima: elongated valleys of |grad K| around weakly curved
    # critical points still produce seeds
    _, nbr = tree.query(pts, k=5)
    g2 = sc.grad
    seeds = np.nonzero(np.all(g2[:, None] <= g2[nbr[:, 1:]], axis=1))[0]
    seeds = seeds[np.argsort(g2[seeds], kind="stable")]
    ctol = tol.critical * scale
    # Newton steps stay within the scan spacing so seeds do not jump to a neighbour
    max_step = 2.0 * math.sqrt(4.0 * math.pi / len(pts))
    c2 = float(np.max(np.abs(sc.K)) + scale + np.max(np.abs(sc.lap)))
    Q, ok = _polish(D, pts[seeds], ctol, max_step)
    Q = Q[ok]
    keep: list[int] = []
    for i, q in enumerate(Q):
        if all(math.acos(max(-1.0, min(1.0, float(q @ Q[j])))) >= tol.dedup for j in keep):
            keep.append(i)
    Q = Q[keep]
    found: list[CriticalPoint] = []
    if len(Q):
        val, gt, lap, Ht, _ = _tangent_data(D, Q)
        lams = np.linalg.eigvalsh(Ht)
        for q, v, gv, lp, lam in zip(Q, val, gt, lap, lams):
            if abs(lam[0] * lam[1]) < tol.degenerate * c2 * c2:
                kind = "degenerate"
            elif lam[1] < 0:
                kind = "max"
            elif lam[0] > 0:
                kind = "min"
            else:
                kind = "saddle"
            q = q.copy()
            q.setflags(write=False)
            found.append(CriticalPoint(q, float(v), float(np.linalg.norm(gv)), (float(lam[0]), float(lam[1])), kind, float(lp)))
    found.sort(key=lambda c: (-c.value, tuple(-c.location)))
    return found


@dataclass
class MorseReport:
    points: list[CriticalPoint]
    maxima: int
    minima: int
    saddles: int
    positive_maxima: int
    s_plus: int
    s_minus: int
    in_C: bool
    in_N: bool
    boundary_C: bool
    boundary_N: bool
    is_morse: bool
    positivity: bool
    eps_c: float
    eps_n: float
    witnesses_C: list[int] = field(default_factory=list)
    witnesses_N: list[int] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    constant: bool = False

    @property
    def degree_defined(self) -> bool:
        return self.in_C and self.in_N and self.is_morse and self.positivity

    @property
    def status(self) -> str:
        """interior (K in C and N), boundary (a tolerance band is hit) or outside (no positive values)."""
        if not self.positivity:
            return "outside"
        if self.in_C and self.in_N:
            return "interior"
        return "boundary"

    @property
    def degree(self) -> int | None:
        return degree(self) if self.degree_defined else None

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "in_C": self.in_C,
            "in_N": self.in_N,
            "boundary_C": self.boundary_C,
            "boundary_N": self.boundary_N,
            "is_morse": self.is_morse,
            "positivity": self.positivity,
            "constant": self.constant,
            "degree": self.degree,
            "counts": {
                "maxima": self.maxima,
                "positive_maxima": self.positive_maxima,
                "minima": self.minima,
                "saddles": self.saddles,
                "s_plus": self.s_plus,
                "s_minus": self.s_minus,
            },
            "tolerances": {"eps_c": self.eps_c, "eps_n": self.eps_n},
            "witnesses_C": self.witnesses_C,
            "witnesses_N": self.witnesses_N,
            "notes": self.notes,
            "points": [p.to_dict() for p in self.points],
        }


def _sup(K: SpectralField) -> float:
    from .sphere import values_on

    g = make_grid(max(K.lmax, 2), 2)
    return float(np.max(np.abs(values_on(K, g))))


def classify_regions(K: SpectralField, g: SphereGrid | None = None, tol: Tolerances | None = None) -> MorseReport:
    tol = tol or Tolerances()
    sup = _sup(K)
    eps_c = tol.eps_c if tol.eps_c is not None else 1e-6 * sup
    eps_n = tol.eps_n if tol.eps_n is not None else 1e-6 * sup
    try:
        pts = find_critical_points(K, g, tol)
    except ConstantInput:
        c = K.mean()
        # every point is critical with Laplacian 0: a zero constant is a flat
        # maximum at level 0, a positive one violates nondegeneracy
        zero = abs(c) <= eps_c
        return MorseReport(
            points=[], maxima=0, minima=0, saddles=0, positive_maxima=0, s_plus=0, s_minus=0,
            in_C=not zero, in_N=not (c > eps_c), boundary_C=zero, boundary_N=c > eps_c,
            is_morse=False, positivity=c > eps_c, eps_c=eps_c, eps_n=eps_n,
            notes=["constant input: every point is critical"], constant=True,
        )
    kinds = [p.kind for p in pts]
    maxima = kinds.count("max")
    minima = kinds.count("min")
    saddles = kinds.count("saddle")
    positive_maxima = sum(1 for p in pts if p.kind == "max" and p.value > eps_c)
    s_minus = sum(1 for p in pts if p.kind == "saddle" and p.value > eps_c and p.lap < -eps_n)
    wc = [i for i, p in enumerate(pts) if p.kind in ("max", "degenerate") and abs(p.value) <= eps_c and p.hessian_eigenvalues[1] <= 0]
    wn = [i for i, p in enumerate(pts) if p.value > eps_c and abs(p.lap) <= eps_n]
    notes = []
    near = [i for i, p in enumerate(pts) if abs(p.value) <= 10 * eps_c and i not in wc]
    if near:
        notes.append(f"critical values within 10*eps_c of 0 at points {near}; membership near K=0 is a tolerance convention")
    is_morse = "degenerate" not in kinds
    report = MorseReport(
        points=pts,
        maxima=maxima,
        minima=minima,
        saddles=saddles,
        positive_maxima=positive_maxima,
        s_plus=saddles - s_minus,
        s_minus=s_minus,
        in_C=not wc,
        in_N=not wn,
        boundary_C=bool(wc),
        boundary_N=bool(wn),
        is_morse=is_morse,
        positivity=any(p.value > eps_c for p in pts),
        eps_c=eps_c,
        eps_n=eps_n,
        witnesses_C=wc,
        witnesses_N=wn,
        notes=notes,
    )
    if is_morse and maxima - saddles + minima != 2:
        report.notes.append(
            f"Euler count M - s + m = {maxima - saddles + minima} != 2: critical point search is incomplete"
        )
        report.is_morse = False
    return report


def degree(report: MorseReport) -> int:
    """M - s^- - 1, cross-checked against  sum over Z of (-1)^ind - 1."""
    if not report.degree_defined:
        missing = [n for n, ok in (("in_C", report.in_C), ("in_N", report.in_N), ("Morse", report.is_morse), ("positivity", report.positivity)) if not ok]
        raise UndefinedDegree("degree undefined: fails " + ", ".join(missing))
    d1 = report.positive_maxima - report.s_minus - 1
    Z = [p for p in report.points if p.value > report.eps_c and p.lap < -report.eps_n]
    d2 = sum((-1) ** p.index for p in Z) - 1
    if d1 != d2:
        raise InternalInconsistency(f"degree formulas disagree: M - s^- - 1 = {d1}, signed sum = {d2}")
    return d1
