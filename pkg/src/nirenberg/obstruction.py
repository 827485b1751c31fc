"""Kazdan-Warner integrals and pointwise-sign non-existence certificates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize

from .sphere import SphereGrid, SpectralField, ambient_gradient, evaluate, evaluate_many, linear_functions, make_grid, values_on


def kw_vector(K: SpectralField, u: SpectralField, g: SphereGrid) -> np.ndarray:
    """int <grad x_i, grad K> e^{2u} dv_{+1} for i = x, y, z."""
    gd = g if g.capacity >= K.lmax + 2 else make_grid(K.lmax + 2, 2)
    G = ambient_gradient(K, gd)
    w = np.exp(2.0 * values_on(u, g)) * g.area_weights
    if gd is g:
        return np.array([float(np.sum(values_on(Gi, g) * w)) for Gi in G])
    vals = evaluate_many(G, g.points)
    return vals @ w.ravel()


@dataclass(frozen=True)
class SignCertificate:
    """``obstructed`` means some linear l has <grad l, grad K> >= 0 everywhere and > eps somewhere."""

    obstructed: bool
    direction: np.ndarray | None
    margin: float
    min_value: float
    eps: float
    notes: list = field(default_factory=list)

    @property
    def verdict(self) -> str:
        return "obstructed" if self.obstructed else "inconclusive"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "direction": None if self.direction is None else [float(v) for v in self.direction],
            "margin": float(self.margin),
            "min_value": float(self.min_value),
            "eps": float(self.eps),
        }


def _gradient_samples(K: SpectralField, oversample: float = 4):
    """Ambient gradient fields of K and their samples on a fine grid, with quadrature weights."""
    gf = make_grid(max(K.lmax + 2, 2), oversample)
    G = ambient_gradient(K, gf)
    vals = np.stack([values_on(Gi, gf).ravel() for Gi in G])
    return G, vals, gf.area_weights.ravel()


def _pairing_minimum(G: list[SpectralField], p: np.ndarray, starts: int = 6) -> float:
    """Minimum over the sphere of <grad l, grad K> for l = <p, x>, polished off-grid."""
    f = sum((Gi * float(pi) for Gi, pi in zip(G, p)), SpectralField.zeros(G[0].lmax))
    gv = make_grid(f.lmax + 2, 8)
    v = values_on(f, gv).ravel()
    pts = gv.points
    best = float(v.min())
    fun = lambda q: float(evaluate(f, q / np.linalg.norm(q)))
    for i in np.argsort(v)[:starts]:
        r = minimize(fun, pts[i], method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-16, "maxiter": 1000})
        best = min(best, float(r.fun))
    return best


def sign_certificate(K: SpectralField, g: SphereGrid | None = None, oversample: float = 4) -> SignCertificate:
    """Search all linear functions l = <p, x> for a pointwise-positive X(K) with X = grad l.

    A linear program maximises int <grad l, grad K> over |p_i| <= 1 subject to
    <grad l, grad K> >= -floor at every node of a fine grid, where ``floor``
    absorbs roundoff (1e-12 of sup |grad K|).  Node constraints leave a thin
    cone of directions that dip below zero between nodes, so a second program
    picks the optimal direction closest to int grad K, and that direction is
    then checked off-grid by local minimisation.  If it stays above -floor and
    is positive somewhere by more than eps = 1e-8 sup |grad K|, the
    Kazdan-Warner identity fails for every conformal factor and K has no
    solution.
    """
    G, vals, w = _gradient_samples(K, oversample)
    gmax = float(np.max(np.linalg.norm(vals, axis=0)))
    eps = 1e-8 * gmax
    if gmax <= 1e-12 * max(1.0, float(np.max(np.abs(K.coeffs)))):
        return SignCertificate(False, None, 0.0, 0.0, eps, ["grad K vanishes identically"])
    floor = 1e-12 * gmax
    b = vals @ w
    nodes = dict(A_ub=-vals.T, b_ub=np.full(vals.shape[1], floor))
    res = linprog(c=-b, bounds=[(-1.0, 1.0)] * 3, method="highs", **nodes)
    if res.status != 0 or res.x is None:
        return SignCertificate(False, None, 0.0, 0.0, eps, [f"linear program: {res.message}"])
    best = -float(res.fun)
    notes = []
    if best > 0:
        # variables (p, t) with t >= |p - p0|, keeping the objective at its optimum
        p0 = b / np.max(np.abs(b))
        I = np.eye(3)
        A = np.vstack([
            np.hstack([-vals.T, np.zeros((vals.shape[1], 3))]),
            np.hstack([-b[None, :], np.zeros((1, 3))]),
            np.hstack([I, -I]),
            np.hstack([-I, -I]),
        ])
        rhs = np.concatenate([nodes["b_ub"], [-(best - 1e-9 * abs(best))], p0, -p0])
        res2 = linprog(np.r_[np.zeros(3), np.ones(3)], A_ub=A, b_ub=rhs,
                       bounds=[(-1.0, 1.0)] * 3 + [(0, None)] * 3, method="highs")
        if res2.status == 0 and res2.x is not None:
            res = res2
        else:
            notes.append(f"centring program: {res2.message}")
    p = np.asarray(res.x[:3])
    n = float(np.linalg.norm(p))
    if n == 0.0:
        return SignCertificate(False, None, 0.0, 0.0, eps, notes)
    p = p / n
    s = p @ vals
    margin = float(s.max())
    low = min(float(s.min()), _pairing_minimum(G, p)) if margin > eps else float(s.min())
    ok = margin > eps and low >= -floor
    if margin > eps and not ok:
        notes.append(f"direction {np.round(p, 6).tolist()} dips to {low:.3g} between grid nodes")
    return SignCertificate(ok, p if ok else None, margin, low, eps, notes)


@dataclass
class SweepRow:
    c: float
    obstructed: bool
    solve_converged: bool | None
    kw_norm: float


@dataclass
class SweepResult:
    axis: np.ndarray
    rows: list[SweepRow]
    threshold: float | None

    def to_csv(self) -> str:
        from .fileio import table_csv

        return table_csv(
            ["c", "certificate", "solve_converged", "kw_norm"],
            [
                (r.c, "obstructed" if r.obstructed else "inconclusive",
                 "" if r.solve_converged is None else int(r.solve_converged), r.kw_norm)
                for r in self.rows
            ],
        )


def large_linear_sweep(
    K: SpectralField,
    axis,
    cs,
    g: SphereGrid | None = None,
    solve: bool = False,
    opts=None,
    n_starts: int = 4,
    seed: int = 0,
) -> SweepResult:
    """Certificate (and optionally a multistart solve) for K + c <axis, x> over c in ``cs``.

    The reported threshold is the smallest sampled c from which every larger
    sampled c is obstructed or unsolved; None if the last row is still solvable.
    """
    p = np.asarray(axis, dtype=float)
    p = p / np.linalg.norm(p)
    L = K.lmax
    ell = sum((xi * float(pi) for pi, xi in zip(p, linear_functions(max(L, 1)))), SpectralField.zeros(max(L, 1)))
    rows = []
    for c in cs:
        Kc = K.with_lmax(max(L, 1)) + ell * float(c)
        cert = sign_certificate(Kc)
        conv, kw = None, float("nan")
        if solve and not cert.obstructed:
            from .solver import SolveOptions, multistart_enumerate

            o = opts or SolveOptions(lmax=max(L, 16))
            res = multistart_enumerate(Kc, o, n_starts=n_starts, seed=seed)
            conv = bool(res)
            if res:
                kw = max(float(np.linalg.norm(r.kw)) for r in res)
        rows.append(SweepRow(float(c), cert.obstructed, conv, kw))
    threshold = None
    for r in reversed(rows):
        if r.obstructed or r.solve_converged is False:
            threshold = r.c
        else:
            break
    return SweepResult(p, rows, threshold)
