"""Pseudo-arclength continuation of solutions along a curvature path K(t) = base + t * direction."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import FieldFormatError, NotASolution
from .fileio import load_field, table_csv
from .solver import (
    SolveOptions,
    _check_invariant,
    _constraint_index,
    _lam,
    newton_solve,
    parse_symmetry,
    reduced_basis,
)
from .sphere import FOUR_PI, SphereGrid, SpectralField, basis_matrix, make_grid, ncoeffs, orders, values_on


@dataclass(frozen=True, eq=False)
class LinearPath:
    base: SpectralField
    direction: SpectralField
    t0: float = 0.0
    t1: float = 1.0

    def __post_init__(self):
        L = max(self.base.lmax, self.direction.lmax)
        object.__setattr__(self, "base", self.base.with_lmax(L))
        object.__setattr__(self, "direction", self.direction.with_lmax(L))
        if self.t0 == self.t1:
            raise ValueError("path has zero length")

    def at(self, t: float) -> SpectralField:
        return self.base + self.direction * float(t)


@dataclass(frozen=True)
class ContinuationOptions:
    lmax: int = 16
    oversample: float = 2
    symmetry: str = "none"
    ds: float = 0.05
    ds_min: float = 1e-6
    ds_max: float = 0.25
    max_steps: int = 400
    corrector_tol: float = 1e-10
    corrector_max_iter: int = 10
    area_cap: float = 100.0 * FOUR_PI
    sup_cap: float = 8.0
    fold_tol: float = 1e-6
    # reject a step when the corrector moves farther than this times ds
    max_correction: float = 0.5
    compute_index: bool = True

    def solve_options(self) -> SolveOptions:
        return SolveOptions(lmax=self.lmax, oversample=self.oversample, symmetry=self.symmetry, slice=False)


@dataclass(frozen=True, eq=False)
class BranchPoint:
    t: float
    s: float
    u: SpectralField
    residual: float
    min_eigenvalue: float
    negative_count: int
    area: float
    sup_u: float
    index: int | None
    dt_ds: float
    fold: bool = False


@dataclass
class Branch:
    points: list[BranchPoint]
    status: str
    message: str = ""
    folds: list[BranchPoint] = field(default_factory=list)

    @property
    def regular_points(self) -> list[BranchPoint]:
        return [p for p in self.points if not p.fold]

    def to_csv(self) -> str:
        return table_csv(
            ["t", "arclength", "residual", "min_eigenvalue", "area", "index", "fold"],
            [
                (p.t, p.s, p.residual, p.min_eigenvalue, p.area, "" if p.index is None else p.index, int(p.fold))
                for p in self.points
            ],
        )

    def summary(self) -> dict:
        return {
            "status": self.status,
            "message": self.message,
            "points": len(self.points),
            "t_range": [min(p.t for p in self.points), max(p.t for p in self.points)],
            "final_t": self.points[-1].t,
            "final_area": self.points[-1].area,
            "folds": [{"t": p.t, "s": p.s, "min_eigenvalue": p.min_eigenvalue} for p in self.folds],
        }


def gnuplot_script(csv_name: str) -> str:
    return (
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "set multiplot layout 1,2\n"
        "set xlabel 't'\n"
        "set ylabel 'area'\n"
        f"plot '{csv_name}' using 1:5 with linespoints, "
        f"'' using ($7 > 0 ? $1 : 1/0):5 with points pt 7 ps 1.5 title 'fold'\n"
        "set xlabel 'arclength'\n"
        "set ylabel 'smallest weighted eigenvalue'\n"
        f"plot '{csv_name}' using 2:4 with linespoints\n"
        "unset multiplot\n"
    )


class _Problem:
    """F(c, t) = Z^T P_L(-Delta u + 1 - K(t) e^{2u}) with u = Z c, and its derivatives."""

    def __init__(self, path: LinearPath, opts: ContinuationOptions):
        self.g: SphereGrid = make_grid(opts.lmax, opts.oversample)
        L = opts.lmax
        grp = parse_symmetry(opts.symmetry)
        base, direction = path.base.with_lmax(max(path.base.lmax, L)), path.direction.with_lmax(max(path.direction.lmax, L))
        if grp is not None:
            _check_invariant(path.base, grp)
            _check_invariant(path.direction, grp)
        n = ncoeffs(L)
        if grp is None:
            self.Z = np.eye(n)
            self.YZ = basis_matrix(self.g, L)
        else:
            self.Z = grp.invariant_basis(L)
            self.YZ = reduced_basis(self.g, self.Z)
        lam = _lam(L)
        self.LZ = (self.Z.T * lam) @ self.Z
        one = np.zeros(n)
        one[0] = math.sqrt(FOUR_PI)
        self.oneZ = self.Z.T @ one
        w = self.g.area_weights
        K0 = values_on(base, self.g)
        dK = values_on(direction, self.g)
        if grp is not None and np.all(orders(L)[np.any(self.Z != 0, axis=1)] == 0):
            # zonal fields: one longitude column integrates exactly
            k = self.YZ.shape[1]
            self.YZ = np.ascontiguousarray(self.YZ.reshape(self.g.nlat, self.g.nlon, k)[:, 0, :])
            w, K0, dK = w.sum(axis=1, keepdims=True), K0[:, :1], dK[:, :1]
        self.w = w.reshape(-1)
        self.K0 = K0.reshape(-1)
        self.dK = dK.reshape(-1)
        self.L = L

    def u_values(self, c):
        return self.YZ @ c

    def F(self, c, t):
        with np.errstate(over="ignore", invalid="ignore"):
            e = np.exp(2.0 * self.u_values(c))
            return self.LZ @ c + self.oneZ - self.YZ.T @ (self.w * (self.K0 + t * self.dK) * e)

    def jac(self, c, t):
        e = np.exp(2.0 * self.u_values(c))
        a = (self.K0 + t * self.dK) * e
        Fc = self.LZ - 2.0 * self.YZ.T @ (self.YZ * (self.w * a)[:, None])
        Ft = -self.YZ.T @ (self.w * self.dK * e)
        return Fc, Ft, e, a

    def field(self, c) -> SpectralField:
        return SpectralField(self.L, self.Z @ c)

    def grid_residual(self, c, t) -> float:
        return float(np.max(np.abs(self.YZ @ self.F(c, t))))


def _tangent(Fc, Ft, prev):
    n = Fc.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = Fc
    M[:n, n] = Ft
    M[n] = prev
    rhs = np.zeros(n + 1)
    rhs[n] = 1.0
    tau = np.linalg.solve(M, rhs)
    tau /= np.linalg.norm(tau)
    return tau if tau @ prev > 0 else -tau


def _correct(prob: _Problem, x_pred, tau, opts: ContinuationOptions):
    """Newton on F(x) = 0, tau . (x - x_pred) = 0; returns x or None."""
    x = x_pred.copy()
    n = x.size - 1
    for k in range(opts.corrector_max_iter + 1):
        c, t = x[:n], x[n]
        F = prob.F(c, t)
        if not np.all(np.isfinite(F)):
            return None, k
        r = float(np.max(np.abs(F)))
        if r < opts.corrector_tol:
            return x, k
        if k == opts.corrector_max_iter:
            break
        Fc, Ft, _, _ = prob.jac(c, t)
        M = np.zeros((n + 1, n + 1))
        M[:n, :n] = Fc
        M[:n, n] = Ft
        M[n] = tau
        rhs = -np.concatenate([F, [tau @ (x - x_pred)]])
        try:
            dx = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            return None, k
        x = x + dx
    return None, opts.corrector_max_iter


def _analyse(prob: _Problem, x, s, tau, opts: ContinuationOptions, fold=False) -> BranchPoint:
    n = x.size - 1
    c, t = x[:n], x[n]
    Fc, _, e, a = prob.jac(c, t)
    B = prob.YZ.T @ (prob.YZ * (prob.w * e)[:, None])
    mu = scipy.linalg.eigh(Fc, B, eigvals_only=True)
    i0 = int(np.argmin(np.abs(mu)))
    index = None
    if opts.compute_index:
        cvec = prob.YZ.T @ (prob.w * a)
        index = _constraint_index(Fc, cvec)
    uv = prob.u_values(c)
    return BranchPoint(
        t=float(t),
        s=float(s),
        u=prob.field(c),
        residual=prob.grid_residual(c, t),
        min_eigenvalue=float(mu[i0]),
        negative_count=int(np.sum(mu < 0)),
        area=float(np.sum(prob.w * e)),
        sup_u=float(np.max(np.abs(uv))),
        index=index,
        dt_ds=float(tau[n]),
        fold=fold,
    )


def _locate_fold(prob, x_prev, tau_prev, s_prev, p_prev: BranchPoint, ds, opts):
    """Bisect the arclength interval (s_prev, s_prev + ds] for the sign change of the
    eigenvalue crossing zero; returns the fold point and the bracket width."""
    lo, hi = 0.0, ds
    best = None
    while hi - lo > opts.fold_tol:
        mid = 0.5 * (lo + hi)
        x, _ = _correct(prob, x_prev + mid * tau_prev, tau_prev, opts)
        if x is None:
            break
        p = _analyse(prob, x, s_prev + mid, tau_prev, opts, fold=True)
        best = (x, p)
        if p.negative_count == p_prev.negative_count:
            lo = mid
        else:
            hi = mid
    if best is None:
        return None, hi - lo
    x, _ = _correct(prob, x_prev + 0.5 * (lo + hi) * tau_prev, tau_prev, opts)
    if x is None:
        return best[1], hi - lo
    Fc, Ft, _, _ = prob.jac(x[:-1], x[-1])
    tau = _tangent(Fc, Ft, tau_prev)
    return _analyse(prob, x, s_prev + 0.5 * (lo + hi), tau, opts, fold=True), hi - lo


def continuation(path: LinearPath, u_start: SpectralField, opts: ContinuationOptions | None = None) -> Branch:
    """Follow the solution branch through (u, t) starting from a solve at t = path.t0.

    Stops with status ``completed`` at t1, ``returned`` when the branch turns
    back past t0 (after a fold), ``boundary-degeneration`` when the area or
    sup |u| cap is exceeded, ``step-failure`` when the corrector fails at the
    minimum step and ``max-steps`` otherwise.
    """
    opts = opts or ContinuationOptions()
    prob = _Problem(path, opts)
    start = newton_solve(path.at(path.t0), u_start, opts.solve_options())
    if not start.converged:
        raise NotASolution(f"no solution at t0 = {path.t0} from the given start ({start.status})")
    n = prob.Z.shape[1]
    x = np.concatenate([prob.Z.T @ start.u.with_lmax(opts.lmax).coeffs, [path.t0]])
    direction = 1.0 if path.t1 > path.t0 else -1.0
    tmin, tmax = min(path.t0, path.t1), max(path.t0, path.t1)
    prev = np.zeros(n + 1)
    prev[n] = direction
    Fc, Ft, _, _ = prob.jac(x[:n], x[n])
    tau = _tangent(Fc, Ft, prev)
    s = 0.0
    point = _analyse(prob, x, s, tau, opts)
    points, folds = [point], []
    ds = opts.ds
    status, message = "max-steps", ""
    for _ in range(opts.max_steps):
        x_new, iters = _correct(prob, x + ds * tau, tau, opts)
        if x_new is None:
            ds *= 0.5
            if ds < opts.ds_min:
                status, message = "step-failure", f"corrector failed at t = {x[n]:.6g} with ds below {opts.ds_min:g}"
                break
            continue
        # a corrector that lands far from the predictor has jumped branches
        if np.linalg.norm(x_new - (x + ds * tau)) > opts.max_correction * ds:
            ds *= 0.5
            if ds < opts.ds_min:
                status, message = "step-failure", f"corrector drifted at t = {x[n]:.6g} with ds below {opts.ds_min:g}"
                break
            continue
        t_new = x_new[n]
        if (t_new - tmax) * direction > 0 and direction > 0 or (tmin - t_new) * direction < 0 and direction < 0:
            # overshoot past t1: land exactly on it with a natural-parameter solve
            t_end = path.t1
            frac = (t_end - x[n]) / (t_new - x[n])
            e = np.zeros(n + 1)
            e[n] = 1.0
            x_end, _ = _correct(prob, x + frac * (x_new - x), e, opts)
            if x_end is not None:
                Fc, Ft, _, _ = prob.jac(x_end[:n], x_end[n])
                tau_end = _tangent(Fc, Ft, tau)
                s_end = s + float(np.linalg.norm(x_end - x))
                points.append(_analyse(prob, x_end, s_end, tau_end, opts))
                status = "completed"
                break
            ds *= 0.5
            continue
        Fc, Ft, _, _ = prob.jac(x_new[:n], x_new[n])
        tau_new = _tangent(Fc, Ft, tau)
        p = _analyse(prob, x_new, s + ds, tau_new, opts)
        if np.sign(p.dt_ds) != np.sign(point.dt_ds) and p.negative_count != point.negative_count:
            fp, width = _locate_fold(prob, x, tau, s, point, ds, opts)
            if fp is not None:
                points.append(fp)
                folds.append(fp)
                message += f"fold at t = {fp.t:.8g} (s = {fp.s:.8g}, bracket {width:.1e}); "
        points.append(p)
        x, tau, s, point = x_new, tau_new, s + ds, p
        if p.area > opts.area_cap or p.sup_u > opts.sup_cap:
            status = "boundary-degeneration"
            message += f"blow-up guard at t = {p.t:.6g}: area {p.area:.4g}, sup|u| {p.sup_u:.3g}; "
            break
        if (x[n] - tmin) < -1e-12 or (x[n] - tmax) > 1e-12:
            status = "returned"
            break
        if iters <= 3:
            ds = min(ds * 1.5, opts.ds_max)
        elif iters >= 6:
            ds = max(ds * 0.5, opts.ds_min)
    return Branch(points, status, message, folds)


def load_run_config(path) -> tuple[LinearPath, ContinuationOptions, SpectralField]:
    """Read {"path": {"base", "direction", "t0", "t1"}, "opts": {...}, "start": field-file?}.

    Field file names are resolved relative to the configuration file.
    """
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
        p = cfg["path"]
        root = path.parent
        base = load_field(root / p["base"])
        direction = load_field(root / p["direction"])
        lp = LinearPath(base, direction, float(p.get("t0", 0.0)), float(p.get("t1", 1.0)))
        known = set(ContinuationOptions.__dataclass_fields__)
        o = cfg.get("opts", {})
        unknown = set(o) - known
        if unknown:
            raise FieldFormatError(f"unknown continuation options: {sorted(unknown)}")
        opts = ContinuationOptions(**o)
        start = load_field(root / cfg["start"]) if cfg.get("start") else SpectralField.zeros(opts.lmax)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FieldFormatError(f"bad run configuration {path}: {exc}") from exc
    return lp, opts, start
