"""Real spherical harmonics on the unit sphere.

Fields are stored as real coefficients in the orthonormal basis

    Y_{l,0}  = Theta_l^0(cos t) / sqrt(2 pi)
    Y_{l,m}  = Theta_l^m(cos t) cos(m p) / sqrt(pi)      m > 0
    Y_{l,-m} = Theta_l^m(cos t) sin(m p) / sqrt(pi)      m > 0

where Theta_l^m are associated Legendre functions normalised to unit L2 norm
on [-1, 1] (no Condon-Shortley phase), so Y_{1,-1}, Y_{1,0}, Y_{1,1} are
sqrt(3/4pi) times y, z, x.  The flat coefficient index of (l, m) is l*l + l + m.

Grids are Gauss-Legendre in cos(colatitude) times uniform longitude.  A grid
built for band limit L with oversampling s has nlat = s*L + 1 rings and
nlon = 2*s*L + 1 meridians; it can analyse fields up to degree nlat - 1
("capacity"), which is what the product rules below rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .errors import BandLimitMismatch, InvalidBandLimit

FOUR_PI = 4.0 * math.pi


def ncoeffs(lmax: int) -> int:
    return (lmax + 1) ** 2


def lm_index(l: int, m: int) -> int:
    return l * l + l + m


def degrees(lmax: int) -> np.ndarray:
    """Degree l of every flat coefficient slot."""
    return np.repeat(np.arange(lmax + 1), 2 * np.arange(lmax + 1) + 1)


def orders(lmax: int) -> np.ndarray:
    return np.concatenate([np.arange(-l, l + 1) for l in range(lmax + 1)])


def _legendre_table(lmax: int, x: np.ndarray) -> np.ndarray:
    """Normalised Legendre factors P[m, l, :] of Y_{l,+-m} at cos(colat) = x.

    The 1/sqrt(2pi) (m = 0) and 1/sqrt(pi) (m > 0) longitude normalisations
    are folded in, so Y_{l,m} = P[|m|, l] * trig_m(lon).
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    P = np.zeros((lmax + 1, lmax + 1) + x.shape)
    pmm = np.full(x.shape, 1.0 / math.sqrt(2.0))
    for m in range(lmax + 1):
        if m > 0:
            pmm = math.sqrt((2 * m + 1) / (2 * m)) * s * pmm
        P[m, m] = pmm
        if m + 1 <= lmax:
            P[m, m + 1] = math.sqrt(2 * m + 3) * x * pmm
        for l in range(m + 2, lmax + 1):
            a = math.sqrt((4 * l * l - 1) / (l * l - m * m))
            b = math.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
            P[m, l] = a * (x * P[m, l - 1] - b * P[m, l - 2])
    P[0] /= math.sqrt(2.0 * math.pi)
    P[1:] /= math.sqrt(math.pi)
    return P


def _split(coeffs: np.ndarray, lmax: int) -> tuple[np.ndarray, np.ndarray]:
    """Flat coefficients -> (cos block, sin block), each indexed [m, l]."""
    ccos = np.zeros((lmax + 1, lmax + 1))
    csin = np.zeros((lmax + 1, lmax + 1))
    for l in range(lmax + 1):
        base = l * l + l
        ccos[: l + 1, l] = coeffs[base : base + l + 1]
        csin[1 : l + 1, l] = coeffs[base - 1 : base - l - 1 : -1] if l > 0 else 0.0
    return ccos, csin


def _merge(ccos: np.ndarray, csin: np.ndarray, lmax: int) -> np.ndarray:
    out = np.empty(ncoeffs(lmax))
    for l in range(lmax + 1):
        base = l * l + l
        out[base : base + l + 1] = ccos[: l + 1, l]
        if l > 0:
            out[base - l : base] = csin[l:0:-1, l]
    return out


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Gauss-Legendre x uniform-longitude grid with transform tables."""

    lmax: int
    oversample: float
    nlat: int
    nlon: int
    cos_colat: np.ndarray
    weights: np.ndarray
    lon: np.ndarray
    _leg: np.ndarray = field(repr=False)
    _cos: np.ndarray = field(repr=False)
    _sin: np.ndarray = field(repr=False)

    @property
    def capacity(self) -> int:
        """Highest degree this grid analyses exactly (for band-limited data)."""
        return self.nlat - 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nlat, self.nlon)

    @cached_property
    def colat(self) -> np.ndarray:
        return np.arccos(self.cos_colat)

    @cached_property
    def xyz(self) -> np.ndarray:
        """Cartesian coordinates, shape (3, nlat, nlon)."""
        st = np.sqrt(1.0 - self.cos_colat**2)[:, None]
        return np.stack(
            [
                st * np.cos(self.lon)[None, :],
                st * np.sin(self.lon)[None, :],
                np.repeat(self.cos_colat[:, None], self.nlon, axis=1),
            ]
        )

    @cached_property
    def points(self) -> np.ndarray:
        """Grid nodes as an (nlat*nlon, 3) array of unit vectors."""
        return self.xyz.reshape(3, -1).T.copy()

    @cached_property
    def area_weights(self) -> np.ndarray:
        """Quadrature weights per node; they sum to 4 pi."""
        return np.outer(self.weights, np.full(self.nlon, 2.0 * math.pi / self.nlon))


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights, ascending.

    numpy's rule carries relative weight errors near 1e-11 at the endpoints,
    which shows up as a spurious point mass at the poles once derivatives are
    taken.  Polishing with Newton in extended precision removes it.
    """
    x0, _ = np.polynomial.legendre.leggauss(n)
    x = x0.astype(np.longdouble)

    def legendre_pair(x):
        p0, p1 = np.ones_like(x), x.copy()
        for k in range(2, n + 1):
            p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        return p1, n * (x * p1 - p0) / (x * x - 1)

    for _ in range(3):
        p, dp = legendre_pair(x)
        x = x - p / dp
    _, dp = legendre_pair(x)
    w = 2 / ((1 - x * x) * dp * dp)
    return x.astype(float), w.astype(float)


def make_grid(lmax: int, oversample: float = 2) -> SphereGrid:
    if int(lmax) != lmax or lmax < 2:
        raise InvalidBandLimit(f"band limit must be an integer >= 2, got {lmax!r}")
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    lmax = int(lmax)
    nlat = int(math.ceil(oversample * lmax)) + 1
    nlon = 2 * (nlat - 1) + 1
    x, w = gauss_legendre(nlat)
    # north to south
    x, w = x[::-1].copy(), w[::-1].copy()
    lon = 2.0 * math.pi * np.arange(nlon) / nlon
    cap = nlat - 1
    # reduce m*k mod nlon in integers so high orders carry no phase error
    phase = 2.0 * math.pi * ((np.arange(cap + 1)[:, None] * np.arange(nlon)[None, :]) % nlon) / nlon
    return SphereGrid(
        lmax=lmax,
        oversample=oversample,
        nlat=nlat,
        nlon=nlon,
        cos_colat=x,
        weights=w,
        lon=lon,
        _leg=_legendre_table(cap, x),
        _cos=np.cos(phase),
        _sin=np.sin(phase),
    )


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Band-limited real function on S^2 in the real orthonormal harmonic basis."""

    lmax: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (ncoeffs(self.lmax),):
            raise ValueError(
                f"expected {ncoeffs(self.lmax)} coefficients for lmax={self.lmax}, got shape {c.shape}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, lmax: int) -> "SpectralField":
        return cls(lmax, np.zeros(ncoeffs(lmax)))

    @classmethod
    def constant(cls, value: float, lmax: int) -> "SpectralField":
        c = np.zeros(ncoeffs(lmax))
        c[0] = value * math.sqrt(FOUR_PI)
        return cls(lmax, c)

    @classmethod
    def from_lm(cls, lmax: int, entries) -> "SpectralField":
        """Build from {(l, m): value} or an iterable of (l, m, value)."""
        c = np.zeros(ncoeffs(lmax))
        items = entries.items() if isinstance(entries, dict) else (((e[0], e[1]), e[2]) for e in entries)
        for (l, m), v in items:
            if not (0 <= l <= lmax and -l <= m <= l):
                raise ValueError(f"(l, m) = ({l}, {m}) outside band limit {lmax}")
            c[lm_index(l, m)] += v
        return cls(lmax, c)

    def coeff(self, l: int, m: int) -> float:
        return float(self.coeffs[lm_index(l, m)])

    def with_lmax(self, lmax: int) -> "SpectralField":
        """Zero-pad or truncate to another band limit."""
        n = ncoeffs(lmax)
        c = np.zeros(n)
        k = min(n, self.coeffs.size)
        c[:k] = self.coeffs[:k]
        return SpectralField(lmax, c)

    def mean(self) -> float:
        return self.coeffs[0] / math.sqrt(FOUR_PI)

    def norm(self) -> float:
        """L2(S^2) norm (Parseval)."""
        return float(np.linalg.norm(self.coeffs))

    def degree_energy(self) -> np.ndarray:
        """Sum of squared coefficients per degree l."""
        return np.bincount(degrees(self.lmax), weights=self.coeffs**2, minlength=self.lmax + 1)

    def _binary(self, other, op):
        if isinstance(other, SpectralField):
            L = max(self.lmax, other.lmax)
            return SpectralField(L, op(self.with_lmax(L).coeffs, other.with_lmax(L).coeffs))
        if np.isscalar(other):
            # scalars act on the constant mode only for + and -
            c = np.zeros_like(self.coeffs)
            c[0] = other * math.sqrt(FOUR_PI)
            return SpectralField(self.lmax, op(self.coeffs, c))
        return NotImplemented

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return SpectralField(self.lmax, -self.coeffs)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return SpectralField(self.lmax, scalar * self.coeffs)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SpectralField(self.lmax, self.coeffs / scalar)

    def allclose(self, other: "SpectralField", atol: float) -> bool:
        L = max(self.lmax, other.lmax)
        return bool(np.max(np.abs(self.with_lmax(L).coeffs - other.with_lmax(L).coeffs)) <= atol)


@dataclass(frozen=True, eq=False)
class GridField:
    """Point samples of a function on a SphereGrid."""

    values: np.ndarray
    grid: SphereGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise BandLimitMismatch(f"grid field shape {v.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    def _val(self, other):
        if isinstance(other, GridField):
            if other.grid is not self.grid and other.grid.shape != self.grid.shape:
                raise BandLimitMismatch("grid fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return GridField(self.values + self._val(other), self.grid)

    __radd__ = __add__

    def __sub__(self, other):
        return GridField(self.values - self._val(other), self.grid)

    def __rsub__(self, other):
        return GridField(self._val(other) - self.values, self.grid)

    def __mul__(self, other):
        return GridField(self.values * self._val(other), self.grid)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return GridField(self.values / self._val(other), self.grid)

    def __neg__(self):
        return GridField(-self.values, self.grid)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


# ---------------------------------------------------------------------------
# transforms


def _synth(coeffs: np.ndarray, lmax: int, g: SphereGrid) -> np.ndarray:
    if lmax > g.capacity:
        raise BandLimitMismatch(f"degree {lmax} exceeds grid capacity {g.capacity}")
    ccos, csin = _split(coeffs, lmax)
    leg = g._leg[: lmax + 1, : lmax + 1]
    acos = np.einsum("ml,mlj->mj", ccos, leg)
    asin = np.einsum("ml,mlj->mj", csin, leg)
    return acos.T @ g._cos[: lmax + 1] + asin.T @ g._sin[: lmax + 1]


def _anal(values: np.ndarray, lmax: int, g: SphereGrid) -> np.ndarray:
    if lmax > g.capacity:
        raise BandLimitMismatch(f"degree {lmax} exceeds grid capacity {g.capacity}")
    scale = 2.0 * math.pi / g.nlon
    bcos = (values @ g._cos[: lmax + 1].T) * scale
    bsin = (values @ g._sin[: lmax + 1].T) * scale
    lw = g._leg[: lmax + 1, : lmax + 1] * g.weights
    ccos = np.einsum("mlj,jm->ml", lw, bcos)
    csin = np.einsum("mlj,jm->ml", lw, bsin)
    return _merge(ccos, csin, lmax)


def synthesize(f: SpectralField, g: SphereGrid) -> GridField:
    """Point values of a band-limited field on the grid."""
    if f.lmax > g.lmax:
        raise BandLimitMismatch(f"field band limit {f.lmax} exceeds grid band limit {g.lmax}")
    return GridField(_synth(f.coeffs, f.lmax, g), g)


def analyze(v: GridField, lmax: int | None = None) -> SpectralField:
    """Quadrature projection onto harmonics of degree <= lmax (default: grid band limit).

    ``lmax`` may go up to the grid capacity; this is how products and
    other band-raising operations are resolved exactly.
    """
    g = v.grid
    L = g.lmax if lmax is None else lmax
    return SpectralField(L, _anal(v.values, L, g))


def project(values, g: SphereGrid, lmax: int | None = None) -> SpectralField:
    """Analyse raw grid samples (array or GridField)."""
    arr = values.values if isinstance(values, GridField) else np.asarray(values)
    return analyze(GridField(arr, g), lmax)


def values_on(f: SpectralField, g: SphereGrid) -> np.ndarray:
    """Grid samples of f allowing any degree up to the grid capacity."""
    return _synth(f.coeffs, f.lmax, g)


def laplacian(f: SpectralField) -> SpectralField:
    l = degrees(f.lmax)
    return SpectralField(f.lmax, -l * (l + 1) * f.coeffs)


def inverse_laplacian(f: SpectralField) -> SpectralField:
    """Mean-zero solution of  Delta h = f - mean(f)."""
    l = degrees(f.lmax)
    c = np.zeros_like(f.coeffs)
    c[1:] = -f.coeffs[1:] / (l[1:] * (l[1:] + 1))
    return SpectralField(f.lmax, c)


def integrate(v: GridField) -> float:
    g = v.grid
    return float(g.weights @ v.values.sum(axis=1) * (2.0 * math.pi / g.nlon))


def tail_ratio(f: SpectralField, lmax: int, floor: float = 4 * np.pi) -> float:
    """Fraction of L2 energy of f above degree lmax.

    The denominator is at least ``floor`` (default: the energy of the constant
    function 1) so that fields which are nearly zero are not flagged for tails
    at roundoff level.
    """
    e = f.degree_energy()
    total = max(float(e.sum()), floor)
    if total == 0.0:
        return 0.0
    return float(e[lmax + 1 :].sum() / total)


def product(f: SpectralField, h: SpectralField, g: SphereGrid, lmax: int | None = None) -> SpectralField:
    """Spectral product, exact when f.lmax + h.lmax <= lmax <= g.capacity."""
    L = min(f.lmax + h.lmax, g.capacity) if lmax is None else lmax
    return project(values_on(f, g) * values_on(h, g), g, L)


def gradient_sq(f: SpectralField, g: SphereGrid) -> GridField:
    """Pointwise |grad f|^2 from  |grad f|^2 = Delta(f^2)/2 - f Delta f."""
    vf = values_on(f, g)
    L2 = min(2 * f.lmax, g.capacity)
    f2 = project(vf * vf, g, L2)
    out = 0.5 * values_on(laplacian(f2), g) - vf * values_on(laplacian(f), g)
    return GridField(out, g)


def grad_dot(f: SpectralField, h: SpectralField, g: SphereGrid) -> SpectralField:
    """<grad f, grad h> by polarisation; exact if f.lmax + h.lmax <= g.capacity."""
    fh = product(f, h, g)
    L = fh.lmax
    vf, vh = values_on(f, g), values_on(h, g)
    rest = project(vf * values_on(laplacian(h), g) + vh * values_on(laplacian(f), g), g, L)
    return SpectralField(L, 0.5 * (laplacian(fh).coeffs - rest.coeffs))


def linear_functions(lmax: int = 1) -> list[SpectralField]:
    """x, y, z as spectral fields."""
    s = math.sqrt(FOUR_PI / 3.0)
    return [
        SpectralField.from_lm(lmax, {(1, 1): s}),
        SpectralField.from_lm(lmax, {(1, -1): s}),
        SpectralField.from_lm(lmax, {(1, 0): s}),
    ]


def ambient_gradient(f: SpectralField, g: SphereGrid | None = None) -> list[SpectralField]:
    """Ambient components <grad f, grad x_i> of the tangential gradient (degree f.lmax + 1)."""
    if g is None:
        g = make_grid(f.lmax + 2, 2)
    return [grad_dot(f, x, g).with_lmax(f.lmax + 1) for x in linear_functions()]


# ---------------------------------------------------------------------------
# pointwise evaluation


def _to_angles(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.linalg.norm(p, axis=1)
    z = np.clip(p[:, 2] / r, -1.0, 1.0)
    lon = np.arctan2(p[:, 1], p[:, 0])
    return z, lon


def basis_at(lmax: int, points: np.ndarray) -> np.ndarray:
    """Matrix of basis values, shape (npoints, ncoeffs(lmax))."""
    z, lon = _to_angles(points)
    P = _legendre_table(lmax, z)
    out = np.empty((z.size, ncoeffs(lmax)))
    for l in range(lmax + 1):
        base = l * l + l
        out[:, base] = P[0, l]
        for m in range(1, l + 1):
            out[:, base + m] = P[m, l] * np.cos(m * lon)
            out[:, base - m] = P[m, l] * np.sin(m * lon)
    return out


def _legendre_orders(lmax: int, x: np.ndarray):
    """Yield (m, rows) with rows[l - m] the normalised factor of Y_{l,+-m} at x."""
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    pmm = np.full(x.shape, 1.0 / math.sqrt(2.0))
    for m in range(lmax + 1):
        if m > 0:
            pmm = math.sqrt((2 * m + 1) / (2 * m)) * s * pmm
        rows = np.empty((lmax + 1 - m,) + x.shape)
        rows[0] = pmm
        if m + 1 <= lmax:
            rows[1] = math.sqrt(2 * m + 3) * x * pmm
        for l in range(m + 2, lmax + 1):
            a = math.sqrt((4 * l * l - 1) / (l * l - m * m))
            b = math.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
            rows[l - m] = a * (x * rows[l - m - 1] - b * rows[l - m - 2])
        yield m, rows / math.sqrt(2.0 * math.pi if m == 0 else math.pi)


def _evaluate_coeffs(C: np.ndarray, lmax: int, points: np.ndarray) -> np.ndarray:
    """Values at points for a coefficient matrix C of shape (ncoeffs, k); returns (npoints, k)."""
    z, lon = _to_angles(points)
    out = np.zeros((z.size, C.shape[1]))
    starts = np.arange(lmax + 1) ** 2 + np.arange(lmax + 1)
    for m, rows in _legendre_orders(lmax, z):
        idx = starts[m:] + m
        out += (rows.T @ C[idx]) * np.cos(m * lon)[:, None]
        if m > 0:
            out += (rows.T @ C[starts[m:] - m]) * np.sin(m * lon)[:, None]
    return out


def evaluate(f: SpectralField, points: np.ndarray) -> np.ndarray:
    """Values of f at arbitrary unit vectors (array of shape (n, 3) or (3,))."""
    pts = np.asarray(points, dtype=float)
    vals = _evaluate_coeffs(f.coeffs[:, None], f.lmax, np.atleast_2d(pts))[:, 0]
    return vals[0] if pts.ndim == 1 else vals


def evaluate_many(fields, points: np.ndarray) -> np.ndarray:
    """Values of several fields at the same points, shape (nfields, npoints)."""
    flat = np.atleast_2d(np.asarray(points, dtype=float))
    L = max(f.lmax for f in fields)
    C = np.stack([f.with_lmax(L).coeffs for f in fields], axis=1)
    return _evaluate_coeffs(C, L, flat).T


def from_function(func, lmax: int, g: SphereGrid | None = None) -> SpectralField:
    """Project func(x, y, z) (vectorised) onto degree <= lmax."""
    if g is None:
        g = make_grid(lmax, 2)
    x, y, z = g.xyz
    return project(func(x, y, z), g, lmax)


def random_field(lmax: int, rng: np.random.Generator, amplitude: float = 1.0, decay: float = 0.0) -> SpectralField:
    """Gaussian coefficients with per-degree damping exp(-decay * l), scaled to max |f| = amplitude.

    The constant mode is zero.  The max is measured on an oversampled grid.
    """
    l = degrees(lmax)
    c = rng.standard_normal(ncoeffs(lmax)) * np.exp(-decay * l)
    c[0] = 0.0
    f = SpectralField(lmax, c)
    g = make_grid(max(lmax, 2), 2)
    peak = np.max(np.abs(values_on(f, g)))
    return f * (amplitude / peak) if peak > 0 else f


def rotate_points(points: np.ndarray, R: np.ndarray) -> np.ndarray:
    return np.asarray(points) @ np.asarray(R).T


def compose_with_rotation(f: SpectralField, R: np.ndarray, g: SphereGrid | None = None) -> SpectralField:
    """The field x -> f(R x), exact for band-limited f."""
    if g is None:
        g = make_grid(max(f.lmax, 2), 2)
    vals = evaluate(f, rotate_points(g.points, R)).reshape(g.shape)
    return project(vals, g, f.lmax)


@lru_cache(maxsize=4)
def _basis_matrix_cached(glmax: int, oversample: float, lmax: int) -> np.ndarray:
    g = make_grid(glmax, oversample)
    Y = basis_at(lmax, g.points)
    Y.setflags(write=False)
    return Y


def basis_matrix(g: SphereGrid, lmax: int) -> np.ndarray:
    """Basis values at the grid nodes, shape (nlat*nlon, ncoeffs(lmax)); cached."""
    return _basis_matrix_cached(g.lmax, g.oversample, lmax)


def basis_columns(g: SphereGrid, lmax: int, columns) -> np.ndarray:
    """Selected columns of the grid basis matrix, built without forming the rest."""
    cols = np.asarray(columns, dtype=int)
    out = np.empty((g.nlat, g.nlon, cols.size))
    for k, j in enumerate(cols):
        l = int(math.isqrt(int(j)))
        m = int(j) - l * l - l
        trig = g._cos[m] if m >= 0 else g._sin[-m]
        out[:, :, k] = g._leg[abs(m), l][:, None] * trig[None, :]
    return out.reshape(-1, cols.size)


def weighted_mass(weight: np.ndarray, g: SphereGrid, lmax: int | None = None) -> np.ndarray:
    """Gram matrix  M[a, b] = int Y_a Y_b w dv  for grid samples w."""
    L = g.lmax if lmax is None else lmax
    Y = basis_matrix(g, L)
    w = (np.asarray(weight) * g.area_weights).reshape(-1)
    return Y.T @ (Y * w[:, None])
