"""Solving e^{2u} K = 1 - Delta u for u: Newton, gradient flow, spectra, multistart, symmetry."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .conformal import ConformalMap, SlicePoint, project_to_slice
from .curvature import functional_J, gauss_bonnet_defect
from .errors import (
    NirenbergError,
    NotASolution,
    NotInCPlus,
    NotInvariant,
    NonpositiveMass,
)
from .obstruction import kw_vector
from .sphere import (
    FOUR_PI,
    SphereGrid,
    SpectralField,
    basis_at,
    basis_columns,
    basis_matrix,
    degrees,
    laplacian,
    make_grid,
    ncoeffs,
    orders,
    project,
    random_field,
    values_on,
    weighted_mass,
)


@dataclass(frozen=True)
class SolveOptions:
    lmax: int = 24
    max_iter: int = 60
    tol: float = 1e-10
    backtrack: float = 0.5
    min_step: float = 1e-6
    # Levenberg shift mu^2 added when the smallest |eigenvalue| of the Newton
    # matrix falls below levenberg * (largest |eigenvalue|)
    levenberg: float = 1e-8
    symmetry: str = "none"
    oversample: float = 2
    spectrum_count: int = 6
    # gradient norm at which the flow hands over to Newton
    flow_tol: float = 1e-3
    flow_max_iter: int = 3000
    # project converged solutions onto the zero-center-of-mass slice
    slice: bool = True

    def __post_init__(self):
        if self.tol <= 0 or self.min_step <= 0 or self.levenberg <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtracking factor must lie in (0, 1)")

    def grid(self) -> SphereGrid:
        return make_grid(self.lmax, self.oversample)


@dataclass
class SolveResult:
    u: SpectralField
    residual_inf: float
    residual_l2: float
    iterations: int
    converged: bool
    status: str
    trace: list[float]
    kernel_estimate: np.ndarray | None = None
    morse_index: int | None = None
    slice: SlicePoint | None = None
    slice_map: ConformalMap | None = None
    kw: np.ndarray | None = None
    gb_defect: float | None = None
    kernel_basis: list[SpectralField] = field(default_factory=list)
    J_trace: list[float] = field(default_factory=list)
    message: str = ""
    # "full", or the symmetry tag when spectrum and index are computed on invariant fields only
    spectrum_scope: str = "full"

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "status": self.status,
            "iterations": self.iterations,
            "residual_inf": self.residual_inf,
            "residual_l2": self.residual_l2,
            "morse_index": self.morse_index,
            "spectrum_scope": self.spectrum_scope,
            "kernel_estimate": None if self.kernel_estimate is None else [float(v) for v in self.kernel_estimate],
            "kw": None if self.kw is None else [float(v) for v in self.kw],
            "gauss_bonnet_defect": self.gb_defect,
            "slice_map": None if self.slice_map is None else self.slice_map.to_dict(),
            "trace": [float(v) for v in self.trace],
            "message": self.message,
        }


# ---------------------------------------------------------------------------
# operators


def _lam(L: int) -> np.ndarray:
    l = degrees(L)
    return (l * (l + 1)).astype(float)


def residual(u: SpectralField, K: SpectralField, g: SphereGrid) -> SpectralField:
    """Galerkin residual  P_L(-Delta u + 1 - K e^{2u})."""
    a = values_on(K, g) * np.exp(2.0 * values_on(u, g))
    return project(-values_on(laplacian(u), g) + 1.0 - a, g, g.lmax)


def _linf(f: SpectralField, g: SphereGrid) -> float:
    return float(np.max(np.abs(values_on(f, g))))


def newton_matrix(u: SpectralField, K: SpectralField, g: SphereGrid) -> np.ndarray:
    """Spectral matrix of v -> -Delta v - 2 K e^{2u} v (symmetric)."""
    a = values_on(K, g) * np.exp(2.0 * values_on(u, g))
    return np.diag(_lam(g.lmax)) - 2.0 * weighted_mass(a, g)


def linearization_spectrum(u: SpectralField, K: SpectralField, k: int, g: SphereGrid, weighted: bool = True):
    """k smallest-magnitude eigenpairs of -Delta w - 2 K e^{2u} w = mu e^{2u} w.

    With ``weighted=False`` the plain spectrum of -Delta - 2 K e^{2u} is used.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    u = u.with_lmax(g.lmax)
    A = newton_matrix(u, K, g)
    if weighted:
        B = weighted_mass(np.exp(2.0 * values_on(u, g)), g)
        mu, V = scipy.linalg.eigh(A, B)
    else:
        mu, V = np.linalg.eigh(A)
    order = np.argsort(np.abs(mu), kind="stable")[:k]
    return [(float(mu[i]), SpectralField(g.lmax, V[:, i].copy())) for i in order]


def _constraint_index(A: np.ndarray, c: np.ndarray, rel: float = 1e-9) -> int:
    Z = scipy.linalg.null_space(c[None, :])
    ev = np.linalg.eigvalsh(Z.T @ A @ Z)
    return int(np.sum(ev < -rel * max(1.0, float(np.max(np.abs(ev))))))


def morse_index(u: SpectralField, K: SpectralField, g: SphereGrid, residual_tol: float = 1e-6) -> int:
    """Negative directions of v -> int v(-Delta v - 2 K e^{2u} v) on {int K e^{2u} v = 0}."""
    u = u.with_lmax(g.lmax)
    r = _linf(residual(u, K, g), g)
    if r > residual_tol:
        raise NotASolution(f"residual {r:.3e} exceeds {residual_tol:g}")
    a = values_on(K, g) * np.exp(2.0 * values_on(u, g))
    c = project(a, g, g.lmax).coeffs
    return _constraint_index(newton_matrix(u, K, g), c)


def hersch_eigenvalue(u: SpectralField, g: SphereGrid) -> float:
    """First nonzero eigenvalue of the metric e^{2u} g_{+1} rescaled to area 4 pi.

    Computed as a Ritz value over degree <= L, hence an upper bound.
    """
    u = u.with_lmax(g.lmax)
    dens = np.exp(2.0 * values_on(u, g))
    B = weighted_mass(dens, g)
    ev = scipy.linalg.eigh(np.diag(_lam(g.lmax)), B, eigvals_only=True)
    area = float(np.sum(dens * g.area_weights))
    return float(ev[1]) * area / FOUR_PI


# ---------------------------------------------------------------------------
# symmetry


@dataclass(frozen=True, eq=False)
class SymmetryGroup:
    """Finite group of orthogonal maps given by generators; ``tag`` is the user-facing name."""

    tag: str
    generators: tuple

    def representation(self, R: np.ndarray, L: int) -> np.ndarray:
        """Matrix D with coeffs(f o R) = D coeffs(f)."""
        g = make_grid(L, 2)
        Y = basis_matrix(g, L)
        YR = basis_at(L, g.points @ R.T)
        return Y.T @ (YR * g.area_weights.reshape(-1)[:, None])

    def coordinate_mask(self, L: int) -> np.ndarray | None:
        """Invariant coefficient slots when the invariant space is spanned by basis functions."""
        if self.tag == "even":
            return degrees(L) % 2 == 0
        if self.tag == "axisymmetric":
            return orders(L) == 0
        if self.tag == "axisymmetric-even":
            return (orders(L) == 0) & (degrees(L) % 2 == 0)
        return None

    def invariant_basis(self, L: int) -> np.ndarray:
        mask = self.coordinate_mask(L)
        if mask is not None:
            return np.eye(ncoeffs(L))[:, mask]
        n = ncoeffs(L)
        S = np.vstack([self.representation(R, L) - np.eye(n) for R in self.generators])
        return scipy.linalg.null_space(S, rcond=1e-10)

    def defect(self, f: SpectralField) -> float:
        mask = self.coordinate_mask(f.lmax)
        if mask is not None:
            return float(np.max(np.abs(f.coeffs[~mask]), initial=0.0))
        L = f.lmax
        return max(float(np.max(np.abs(self.representation(R, L) @ f.coeffs - f.coeffs))) for R in self.generators)


def reduced_basis(g: SphereGrid, Z: np.ndarray) -> np.ndarray:
    """Grid values of the columns of Z, i.e. basis_matrix(g) @ Z, cheaply when Z selects coefficients."""
    nz = np.count_nonzero(Z, axis=0)
    if np.all(nz == 1) and np.all(Z[Z != 0] == 1.0):
        return basis_columns(g, g.lmax, np.argmax(Z != 0, axis=0))
    return basis_matrix(g, g.lmax) @ Z


def _half_turn(axis) -> np.ndarray:
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    return 2.0 * np.outer(a, a) - np.eye(3)


_AXES = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}


def parse_symmetry(tag: str | None) -> SymmetryGroup | None:
    """'none', 'even' (antipodal map), 'axisymmetric' (rotations about z),
    'axisymmetric-even' or 'half-turns:A,B,...' with axes x, y, z or 'a/b/c'."""
    if tag is None or tag == "none":
        return None
    if tag in ("axisymmetric", "axisymmetric-even"):
        return SymmetryGroup(tag, ())
    if tag == "even":
        return SymmetryGroup("even", (-np.eye(3),))
    if tag.startswith("half-turns:"):
        gens = []
        for item in tag.split(":", 1)[1].split(","):
            item = item.strip()
            axis = _AXES.get(item) or tuple(float(v) for v in item.split("/"))
            if len(axis) != 3:
                raise ValueError(f"bad axis {item!r}")
            gens.append(_half_turn(axis))
        if not gens:
            raise ValueError("half-turns needs at least one axis")
        return SymmetryGroup(tag, tuple(gens))
    raise ValueError(f"unknown symmetry tag {tag!r}")


# ---------------------------------------------------------------------------
# Newton


def _deflation(u: np.ndarray, roots: list[np.ndarray], power: float = 2.0, shift: float = 1.0):
    """Multiplier M(u) = prod(|u - r|^-p + shift) and grad log M."""
    m, grad = 1.0, np.zeros_like(u)
    for r in roots:
        d = u - r
        n2 = float(d @ d)
        if n2 == 0.0:
            return math.inf, grad
        f = n2 ** (-power / 2) + shift
        m *= f
        grad += (-power * n2 ** (-power / 2 - 1) * d) / f
    return m, grad


def _newton(
    K: SpectralField,
    u0: SpectralField,
    opts: SolveOptions,
    g: SphereGrid,
    Z: np.ndarray | None = None,
    roots: list[np.ndarray] | None = None,
) -> SolveResult:
    L = g.lmax
    u = u0.with_lmax(L).coeffs.copy()
    if Z is not None:
        u = Z @ (Z.T @ u)
    roots = roots or []
    lam = _lam(L)
    if Z is not None:
        YZ = reduced_basis(g, Z)
        LZ = (Z.T * lam) @ Z

    def F_of(c):
        # overflow in a trial step just means the step is rejected
        with np.errstate(over="ignore", invalid="ignore"):
            out = residual(SpectralField(L, c), K, g).coeffs
        return out if np.all(np.isfinite(out)) else np.full_like(out, np.inf)

    def merit(c, F):
        m, _ = _deflation(c, roots) if roots else (1.0, None)
        return m * float(np.linalg.norm(F))

    F = F_of(u)
    trace: list[float] = []
    status, kernel = "max-iterations", []
    it = 0
    for it in range(opts.max_iter + 1):
        r = _linf(SpectralField(L, F), g)
        trace.append(r)
        if r < opts.tol:
            status = "converged"
            break
        if it == opts.max_iter:
            break
        a = values_on(K, g) * np.exp(2.0 * values_on(SpectralField(L, u), g))
        if Z is None:
            A = np.diag(lam) - 2.0 * weighted_mass(a, g)
            rhs = -F
        else:
            A = LZ - 2.0 * YZ.T @ (YZ * (a * g.area_weights).reshape(-1, 1))
            rhs = -(Z.T @ F)
        w, V = np.linalg.eigh(A)
        wmax = float(np.max(np.abs(w)))
        small = np.abs(w) < opts.levenberg * wmax
        if small.any():
            mu2 = (opts.levenberg * wmax) ** 2
            coef = w / (w * w + mu2)
        else:
            coef = 1.0 / w
        d = V @ (coef * (V.T @ rhs))
        if Z is not None:
            d = Z @ d
        if roots:
            m, glog = _deflation(u, roots)
            denom = 1.0 - float(glog @ d)
            if abs(denom) > 1e-12:
                d = d / denom
        m0 = merit(u, F)
        step = 1.0
        accepted = False
        while step >= opts.min_step:
            trial = u + step * d
            Ft = F_of(trial)
            if merit(trial, Ft) < (1.0 - 1e-4 * step) * m0:
                u, F = trial, Ft
                accepted = True
                break
            step *= opts.backtrack
        if not accepted:
            if small.any():
                status = "singular-stall"
                basis = V[:, small]
                if Z is not None:
                    basis = Z @ basis
                kernel = [SpectralField(L, basis[:, j].copy()) for j in range(basis.shape[1])]
            else:
                status = "line-search-failed"
            break
    Ff = SpectralField(L, F)
    return SolveResult(
        u=SpectralField(L, u),
        residual_inf=trace[-1] if status == "converged" else _linf(Ff, g),
        residual_l2=Ff.norm(),
        iterations=it,
        converged=status == "converged",
        status=status,
        trace=trace,
        kernel_basis=kernel,
    )


def _class_spectrum(u: SpectralField, K: SpectralField, g: SphereGrid, Z: np.ndarray, k: int):
    """Weighted spectrum and constrained index restricted to span(Z)."""
    YZ = reduced_basis(g, Z)
    w = g.area_weights.reshape(-1)
    e = np.exp(2.0 * (YZ @ (Z.T @ u.coeffs)))
    a = values_on(K, g).reshape(-1) * e
    A = (Z.T * _lam(g.lmax)) @ Z - 2.0 * YZ.T @ (YZ * (w * a)[:, None])
    B = YZ.T @ (YZ * (w * e)[:, None])
    mu = scipy.linalg.eigh(A, B, eigvals_only=True)
    mu = mu[np.argsort(np.abs(mu), kind="stable")[:k]]
    return mu, _constraint_index(A, YZ.T @ (w * a))


def _finish(
    res: SolveResult,
    K: SpectralField,
    opts: SolveOptions,
    g: SphereGrid,
    with_slice: bool = True,
    Z: np.ndarray | None = None,
) -> SolveResult:
    u = res.u
    res.kw = kw_vector(K, u, g)
    if not res.converged:
        return res
    try:
        res.gb_defect = gauss_bonnet_defect(u, g)
    except NirenbergError as exc:
        res.message += f"{exc}; "
    if res.gb_defect is None or abs(res.gb_defect) >= 1e-8:
        # a Galerkin root whose curvature is not resolved (typically a
        # concentrating bubble) is not accepted as a solution
        res.converged = False
        res.status = "unresolved"
        return res
    if Z is None:
        spec = linearization_spectrum(u, K, opts.spectrum_count, g)
        res.kernel_estimate = np.array([m for m, _ in spec])
        res.morse_index = morse_index(u, K, g, residual_tol=max(1e-6, 10 * opts.tol))
    else:
        res.kernel_estimate, res.morse_index = _class_spectrum(u, K, g, Z, opts.spectrum_count)
        res.spectrum_scope = opts.symmetry
    if with_slice and opts.slice:
        try:
            res.slice, res.slice_map = project_to_slice(u, g)
        except NirenbergError as exc:
            res.message += f"slice projection failed: {exc}; "
    return res


def _check_cplus(K: SpectralField, g: SphereGrid) -> None:
    if float(np.max(values_on(K, g))) <= 0.0:
        raise NotInCPlus("K has no positive values")


def newton_solve(K: SpectralField, u0: SpectralField, opts: SolveOptions | None = None, _roots=None) -> SolveResult:
    """Damped Newton on -Delta u + 1 - K e^{2u} = 0 with dense spectral Jacobians."""
    opts = opts or SolveOptions()
    g = opts.grid()
    K = K.with_lmax(max(K.lmax, 0))
    _check_cplus(K, g)
    grp = parse_symmetry(opts.symmetry)
    Z = None
    if grp is not None:
        _check_invariant(K, grp)
        Z = grp.invariant_basis(g.lmax)
    res = _newton(K, u0, opts, g, Z=Z, roots=_roots)
    return _finish(res, K, opts, g, Z=Z)


def _check_invariant(K: SpectralField, grp: SymmetryGroup, tol: float = 1e-10) -> None:
    d = grp.defect(K)
    if d > tol:
        raise NotInvariant(f"K is not invariant under {grp.tag} (defect {d:.2e})")


def solve_symmetric(K: SpectralField, group: str, opts: SolveOptions | None = None, u0: SpectralField | None = None) -> SolveResult:
    """Newton restricted to fields invariant under ``group`` (e.g. 'even')."""
    opts = replace(opts or SolveOptions(), symmetry=group)
    u0 = u0 if u0 is not None else SpectralField.zeros(opts.lmax)
    return newton_solve(K, u0, opts)


def symmetric_kernel_dimension(u: SpectralField, K: SpectralField, group: str, g: SphereGrid, rel: float = 1e-9) -> int:
    """Number of (near-)zero eigenvalues of the Newton matrix on invariant fields."""
    grp = parse_symmetry(group)
    A = newton_matrix(u.with_lmax(g.lmax), K, g)
    if grp is not None:
        Z = grp.invariant_basis(g.lmax)
        A = Z.T @ A @ Z
    ev = np.linalg.eigvalsh(A)
    return int(np.sum(np.abs(ev) < rel * max(1.0, float(np.max(np.abs(ev))))))


# ---------------------------------------------------------------------------
# gradient flow


def flow_solve(K: SpectralField, u0: SpectralField, opts: SolveOptions | None = None) -> SolveResult:
    """Preconditioned descent on J_K, then a constant shift to kappa = 1 and Newton polish.

    Descent only settles at local minima of J (modulo constants).  Saddle
    solutions can still be reached when they are minima within a symmetry
    class, so ``opts.symmetry`` restricts both the iterates and the steps.
    """
    opts = opts or SolveOptions()
    g = opts.grid()
    L = g.lmax
    _check_cplus(K, g)
    grp = parse_symmetry(opts.symmetry)
    P = None
    if grp is not None:
        _check_invariant(K, grp)
        Z = grp.invariant_basis(L)
        P = Z @ Z.T
    u = u0.with_lmax(L)
    if P is not None:
        u = SpectralField(L, P @ u.coeffs)
    st = functional_J(u, K, g)
    precond = 1.0 / (1.0 + _lam(L))
    J_trace = [st.J]
    it = 0
    for it in range(opts.flow_max_iter):
        if st.gradient.norm() < opts.flow_tol:
            break
        dc = -precond * st.gradient.coeffs
        d = SpectralField(L, dc if P is None else P @ dc)
        slope = 2.0 / FOUR_PI * float(d.coeffs @ st.gradient.coeffs)
        step = 1.0
        while step >= 1e-12:
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    trial = functional_J(u + d * step, K, g)
            except NonpositiveMass:
                trial = None
            if trial is not None and not math.isfinite(trial.J):
                trial = None
            if trial is not None and trial.J <= st.J + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            break
        u = u + d * step
        st = trial
        J_trace.append(st.J)
    u = u + 0.5 * math.log(st.kappa)
    res = newton_solve(K, u, opts)
    res.J_trace = J_trace
    res.message = f"flow iterations {it}; " + res.message
    return res


# ---------------------------------------------------------------------------
# multistart enumeration


def _starts(L: int, n: int, seed: int, amplitude: float) -> list[SpectralField]:
    rng = np.random.default_rng(seed)
    out = [SpectralField.zeros(L)]
    band = min(L, 6)
    while len(out) < n:
        out.append(random_field(band, rng, amplitude, 0.3).with_lmax(L))
    return out[:n]


def _run_start(args):
    K, u0, opts, roots = args
    try:
        return newton_solve(K, u0, opts, _roots=roots)
    except NirenbergError:
        return None


def _same(a: SolveResult, b: SolveResult, tol: float) -> bool:
    if a.slice is not None and b.slice is not None:
        return (a.slice.u - b.slice.u).norm() < tol
    return (a.u - b.u).norm() < tol


BATCH = 4


def multistart_enumerate(
    K: SpectralField,
    opts: SolveOptions | None = None,
    n_starts: int = 12,
    deflation: bool = True,
    seed: int = 0,
    jobs: int = 1,
    amplitude: float = 0.5,
    dedup_tol: float = 1e-6,
) -> list[SolveResult]:
    """Distinct solutions up to conformal equivalence found from random starts.

    Starts run in fixed batches of four; each batch deflates the roots found by
    earlier batches, so results do not depend on ``jobs``.
    """
    opts = opts or SolveOptions()
    L = opts.lmax
    starts = _starts(L, n_starts, seed, amplitude)
    found: list[SolveResult] = []
    pool = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        for b in range(0, len(starts), BATCH):
            roots = [r.u.coeffs for r in found] if deflation else []
            args = [(K, u0, opts, roots) for u0 in starts[b : b + BATCH]]
            results = list(pool.map(_run_start, args)) if pool else [_run_start(a) for a in args]
            for res in results:
                if res is None or not res.converged:
                    continue
                if not any(_same(res, f, dedup_tol) for f in found):
                    found.append(res)
    finally:
        if pool:
            pool.shutdown()
    return found


def signed_count(results: list[SolveResult]) -> int:
    """sum (-1)^index over solutions.

    For a complete list of nondegenerate solutions this is the degree up to a
    fixed orientation sign.  Random-start enumeration is rarely complete.
    """
    return sum((-1) ** r.morse_index for r in results if r.morse_index is not None)
