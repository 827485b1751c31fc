"""Acceptance gate: each test carries the number of the criterion it checks.

The terminal summary (see conftest.py) prints one PASS/FAIL line per criterion.
"""

import re
import time

import numpy as np
import pytest

from nirenberg.continuation import continuation
from nirenberg.curvature import gauss_bonnet_defect, gauss_curvature
from nirenberg.exact import PATH_PRESETS, bubble_pair, perturbed_saddle_family, quadrupole_pair
from nirenberg.morse import classify_regions
from nirenberg.obstruction import kw_vector, large_linear_sweep, sign_certificate
from nirenberg.solver import (
    SolveOptions,
    hersch_eigenvalue,
    linearization_spectrum,
    morse_index,
    multistart_enumerate,
    newton_solve,
    solve_symmetric,
    symmetric_kernel_dimension,
)
from nirenberg.sphere import (
    GridField,
    SpectralField,
    analyze,
    degrees,
    from_function,
    laplacian,
    make_grid,
    ncoeffs,
    random_field,
    synthesize,
    values_on,
)

criterion = pytest.mark.criterion


def _even_curvature(seed: int, band: int = 4, amplitude: float = 0.3) -> SpectralField:
    """1 + an even field of sup norm ``amplitude``."""
    c = np.random.default_rng(seed).standard_normal(ncoeffs(band))
    c[degrees(band) % 2 == 1] = 0.0
    c[0] = 0.0
    f = SpectralField(band, c)
    f = f * (amplitude / np.max(np.abs(values_on(f, make_grid(band, 4)))))
    return SpectralField.constant(1.0, band) + f


@pytest.fixture(scope="module")
def even_solves():
    out = []
    for seed in range(10):
        K = _even_curvature(seed)
        out.append((K, solve_symmetric(K, "even", SolveOptions(lmax=16))))
    return out


@pytest.fixture(scope="module")
def corpus(even_solves):
    """Converged solutions as (name, K, u, lmax)."""
    sols = []
    p = quadrupole_pair(24)
    noise = random_field(6, np.random.default_rng(0), 1e-2).with_lmax(24)
    r = newton_solve(p.K, p.u + noise, SolveOptions(lmax=24))
    sols.append(("eigenfunction", p.K, r, 24))
    zonal = from_function(lambda x, y, z: 1 + 0.3 * z * z + 0.2 * z, 2)
    sols.append(("zonal", zonal, newton_solve(zonal, SpectralField.zeros(24), SolveOptions(lmax=24)), 24))
    mixed = from_function(lambda x, y, z: 1 + 0.3 * z * z + 0.2 * z + 0.1 * x * y, 2)
    sols.append(("mixed", mixed, newton_solve(mixed, SpectralField.zeros(24), SolveOptions(lmax=24)), 24))
    for i, (K, res) in enumerate(even_solves):
        sols.append((f"even-{i}", K, res, 16))
    saddle = from_function(lambda x, y, z: 1 + 0.3 * z * z + 0.1 * x * y, 2)
    for i, res in enumerate(multistart_enumerate(saddle, SolveOptions(lmax=12), n_starts=4, seed=0)):
        sols.append((f"multistart-{i}", saddle, res, 12))
    return sols


# ---------------------------------------------------------------------------


@criterion(1)
def test_forward_map_oracle():
    t = time.perf_counter()
    g = make_grid(24)
    x, y, z = g.xyz
    ustar = 0.25 * (x * x - y * y)
    u = analyze(GridField(ustar, g), 24)
    K = gauss_curvature(u, g)
    err = np.max(np.abs(values_on(K, g) - np.exp(-2 * ustar) * (1 + 6 * ustar)))
    elapsed = time.perf_counter() - t
    assert err < 1e-10
    assert elapsed < 1.0


@criterion(2)
def test_inverse_recovery():
    p = quadrupole_pair(24)
    noise = random_field(6, np.random.default_rng(0), 1e-2).with_lmax(24)
    t = time.perf_counter()
    res = newton_solve(p.K, p.u + noise, SolveOptions(lmax=24))
    elapsed = time.perf_counter() - t
    assert res.converged and res.residual_inf < 1e-10
    assert res.iterations <= 15
    assert (res.u - p.u).norm() < 1e-9
    assert elapsed < 5.0


@criterion(3)
def test_eigenfunction_critical_points():
    r = classify_regions(quadrupole_pair(24).K)
    assert len(r.points) == 6
    expected = {0: "max", 1: "min", 2: "saddle"}
    for q in r.points:
        axis = int(np.argmax(np.abs(q.location)))
        assert abs(abs(q.location[axis]) - 1) < 1e-10
        assert q.kind == expected[axis]
        if axis == 0:
            assert q.lap < 0
        elif axis == 1:
            assert q.lap > 0
        else:
            assert abs(q.lap) < 1e-7
    assert r.boundary_N and not r.in_N


@criterion(4)
def test_degree_formulas_on_random_samples():
    accepted = 0
    for seed in range(200):
        K = SpectralField.constant(0.6, 4) + random_field(4, np.random.default_rng(seed), 1.0, 0.2)
        r = classify_regions(K)
        if not r.is_morse:
            continue
        # every Morse sample has to pass the Euler count, not just the accepted ones
        assert r.maxima - r.saddles + r.minima == 2
        if not r.degree_defined:
            continue
        M = sum(1 for q in r.points if q.kind == "max" and q.value > 0)
        s_minus = sum(1 for q in r.points if q.kind == "saddle" and q.value > 0 and q.lap < 0)
        Z = [q for q in r.points if q.value > 0 and q.lap < 0]
        assert M - s_minus - 1 == sum((-1) ** q.index for q in Z) - 1 == r.degree
        accepted += 1
        if accepted == 25:
            break
    assert accepted >= 20


@criterion(5)
@pytest.mark.parametrize("signs,expected", [(("+", "+"), 1), (("-", "-"), -1), (("+", "-"), 0)])
def test_wall_crossing_degrees(signs, expected):
    assert perturbed_saddle_family(signs).degree == expected


@criterion(6)
def test_round_kernel():
    g = make_grid(16)
    u, K = SpectralField.zeros(16), SpectralField.constant(1.0, 16)
    mus = [m for m, _ in linearization_spectrum(u, K, 4, g)]
    assert sum(abs(m) < 1e-9 for m in mus) == 3
    assert abs(mus[3]) > 1
    assert morse_index(u, K, g) == 0


@criterion(7)
def test_kw_vanishes_across_corpus(corpus):
    assert len(corpus) >= 13
    for name, K, res, L in corpus:
        assert res.converged, name
        assert np.linalg.norm(kw_vector(K, res.u, make_grid(L, 2))) < 1e-8, name


@criterion(7)
def test_certificates_and_thresholds():
    assert sign_certificate(from_function(lambda x, y, z: 1 + z, 2)).obstructed
    cs = np.round(np.arange(0.0, 1.01, 0.05), 2)
    for base, expected in [
        (from_function(lambda x, y, z: 1 + 0.3 * z * z, 2), 0.6),
        (from_function(lambda x, y, z: 1 + 0.4 * x * y, 2), 0.4),
    ]:
        assert not sign_certificate(base).obstructed
        sweep = large_linear_sweep(base, (0, 0, 1), cs)
        assert sweep.threshold == pytest.approx(expected)
        assert not sweep.rows[0].obstructed


@criterion(8)
def test_hersch_bound(corpus):
    values = []
    for name, K, res, L in corpus:
        if np.min(values_on(K.with_lmax(L), make_grid(L, 2))) <= 0:
            continue
        lam = hersch_eigenvalue(res.u, make_grid(L, 2))
        assert lam <= 2 + 1e-6, name
        assert abs(lam - 2) > 1e-6, name
        values.append(lam)
    assert len(values) >= 10
    # the round metric and its conformal images reach the bound
    assert hersch_eigenvalue(SpectralField.zeros(16), make_grid(16, 2)) == pytest.approx(2, abs=1e-6)
    b = bubble_pair((0.0, 0.0, 1.0), 2.0, 48)
    assert hersch_eigenvalue(b.u, make_grid(48, 2)) == pytest.approx(2, abs=1e-6)


@criterion(9)
@pytest.mark.slow
def test_fold():
    path, opts, start = PATH_PRESETS["fold"]()
    assert opts.lmax == 16
    t = time.perf_counter()
    b = continuation(path, start, opts)
    elapsed = time.perf_counter() - t
    assert len(b.folds) == 1
    f = b.folds[0]
    i = b.points.index(f)
    before, after = b.points[i - 1], b.points[i + 1]
    assert (before.index - after.index) % 2 == 1
    assert before.min_eigenvalue < 0 < after.min_eigenvalue
    width = float(re.search(r"bracket ([0-9.e+-]+)\)", b.message).group(1))
    assert width <= 1e-6
    # past the fold the path reaches K = 1 + z^2 / 2 + z, which the certificate rules out
    assert sign_certificate(path.at(1.0)).obstructed
    assert elapsed < 120


@criterion(10)
@pytest.mark.slow
def test_boundary_asymmetry():
    path, opts, start = PATH_PRESETS["boundary-c-decreasing"]()
    down = continuation(path, start, opts)
    assert down.status == "boundary-degeneration"
    areas = np.array([p.area for p in down.points[-10:]])
    assert np.all(np.diff(areas) > 0)

    path, opts, start = PATH_PRESETS["boundary-c-increasing"]()
    up = continuation(path, start, opts)
    assert up.status == "completed"
    assert max(p.area for p in up.points) <= 3 * up.points[0].area


@criterion(11)
def test_even_solves(even_solves):
    assert len(even_solves) == 10
    odd = degrees(16) % 2 == 1
    g = make_grid(16, 2)
    for K, res in even_solves:
        assert np.max(np.abs(values_on(K, make_grid(4, 4)) - 1)) <= 0.3 + 1e-12
        assert res.converged and res.residual_inf < 1e-10
        assert np.max(np.abs(res.u.coeffs[odd])) < 1e-14
        assert abs(gauss_bonnet_defect(res.u, g)) < 1e-8
    assert symmetric_kernel_dimension(SpectralField.zeros(16), SpectralField.constant(1.0, 16), "even", g) == 0


@criterion(12)
@pytest.mark.parametrize("L", [8, 16, 32])
def test_spectral_invariants(L):
    rng = np.random.default_rng(L)
    g = make_grid(L)
    for _ in range(5):
        f, h = random_field(L, rng), random_field(L, rng)
        v = synthesize(f, g)
        assert np.max(np.abs(analyze(v, L).coeffs - f.coeffs)) < 1e-12
        assert float(np.sum(v.values**2 * g.area_weights)) == pytest.approx(float(f.coeffs @ f.coeffs), rel=1e-12)
        lhs = float(np.sum(values_on(laplacian(f), g) * values_on(h, g) * g.area_weights))
        rhs = float(np.sum(values_on(f, g) * values_on(laplacian(h), g) * g.area_weights))
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))
    band, amp = {8: (2, 0.1), 16: (4, 0.3), 32: (8, 0.3)}[L]
    for _ in range(5):
        u = random_field(band, rng, amp, 1.0).with_lmax(L)
        assert abs(gauss_bonnet_defect(u, g)) < 1e-9
