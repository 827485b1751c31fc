import numpy as np
import pytest
import scipy.linalg
from numpy.polynomial import legendre as npleg

from nirenberg.conformal import bubble_factor
from nirenberg.curvature import functional_J, gauss_bonnet_defect
from nirenberg.errors import NotASolution, NotInCPlus, NotInvariant
from nirenberg.exact import quadrupole_pair
from nirenberg.obstruction import sign_certificate
from nirenberg.solver import (
    SolveOptions,
    flow_solve,
    hersch_eigenvalue,
    linearization_spectrum,
    morse_index,
    multistart_enumerate,
    newton_matrix,
    newton_solve,
    parse_symmetry,
    residual,
    signed_count,
    solve_symmetric,
    symmetric_kernel_dimension,
)
from nirenberg.sphere import (
    FOUR_PI,
    SpectralField,
    degrees,
    evaluate,
    from_function,
    linear_functions,
    make_grid,
    project,
    random_field,
    values_on,
)

from oracles import zonal_solve


def _points(n, seed=0):
    p = np.random.default_rng(seed).standard_normal((n, 3))
    return p / np.linalg.norm(p, axis=1)[:, None]


def _check_converged(res, K, L):
    g = make_grid(L)
    assert res.converged and res.status == "converged"
    assert res.residual_inf < 1e-10
    assert abs(gauss_bonnet_defect(res.u, g)) < 1e-8
    assert np.linalg.norm(res.kw) < 1e-6


def test_zonal_solution_matches_legendre_oracle():
    f = lambda z: 1 + 0.3 * z**2 + 0.2 * z
    K = from_function(lambda x, y, z: f(z), 2)
    res = newton_solve(K, SpectralField.zeros(24), SolveOptions(lmax=24))
    _check_converged(res, K, 24)
    a, r = zonal_solve(f, 30)
    assert r < 1e-12
    q = _points(40)
    assert np.max(np.abs(evaluate(res.u, q) - npleg.legval(q[:, 2], a))) < 1e-8


def test_newton_recovers_eigenfunction_solution():
    p = quadrupole_pair(24)
    noise = random_field(6, np.random.default_rng(0), 1e-2).with_lmax(24)
    res = newton_solve(p.K, p.u + noise, SolveOptions(lmax=24))
    _check_converged(res, p.K, 24)
    assert (res.u - p.u).norm() < 1e-10
    assert res.iterations <= 15
    # residual history decreases to the tolerance
    assert res.trace[-1] < 1e-10 and res.trace[0] > res.trace[-1]


def test_eigenfunction_solution_has_two_unstable_directions():
    p = quadrupole_pair(24)
    g = make_grid(24)
    assert morse_index(p.u, p.K, g) == 2
    # second differences of J confirm the sign and size of the constrained spectrum
    A = newton_matrix(p.u, p.K, g)
    c = project(values_on(p.K, g) * np.exp(2 * values_on(p.u, g)), g, 24).coeffs
    Z = scipy.linalg.null_space(c[None, :])
    ev, V = np.linalg.eigh(Z.T @ A @ Z)
    h = 1e-3
    J = lambda u: functional_J(u, p.K, g).J
    for k in range(3):
        w = SpectralField(24, Z @ V[:, k])
        d2 = (J(p.u + w * h) - 2 * J(p.u) + J(p.u - w * h)) / h**2
        assert d2 * FOUR_PI / 2 == pytest.approx(ev[k], abs=1e-4)
    assert ev[1] < 0 < ev[2]
    # x alone already lowers J to second order
    x = linear_functions(24)[0]
    assert J(p.u + x * h) - 2 * J(p.u) + J(p.u - x * h) < 0


def test_round_kernel_and_index():
    g = make_grid(16)
    u, K = SpectralField.zeros(16), SpectralField.constant(1.0, 16)
    spec = linearization_spectrum(u, K, 4, g)
    mus = [m for m, _ in spec]
    assert sum(1 for m in mus if abs(m) < 1e-9) == 3
    assert abs(mus[3]) > 1
    # the kernel is spanned by the coordinate functions
    for _, w in spec[:3]:
        assert np.sum(w.coeffs[1:4] ** 2) == pytest.approx(np.sum(w.coeffs**2), rel=1e-10)
    assert morse_index(u, K, g) == 0
    assert hersch_eigenvalue(u, g) == pytest.approx(2.0, abs=1e-12)


def test_morse_index_requires_a_solution():
    g = make_grid(8)
    with pytest.raises(NotASolution):
        morse_index(SpectralField.constant(0.3, 8), SpectralField.constant(1.0, 8), g)


def test_round_solutions_project_to_the_round_metric():
    g = make_grid(24)
    K = SpectralField.constant(1.0, 24)
    res = newton_solve(K, bubble_factor((0.0, 0.0, 1.0), 1.5, g), SolveOptions(lmax=24))
    assert res.converged
    assert res.slice is not None and res.slice.u.norm() < 1e-9


def test_even_solve_returns_even_solution():
    K = from_function(lambda x, y, z: 1 + 0.2 * x * y + 0.25 * z * z, 2)
    res = solve_symmetric(K, "even", SolveOptions(lmax=16))
    _check_converged(res, K, 16)
    odd = degrees(16) % 2 == 1
    assert np.max(np.abs(res.u.coeffs[odd])) < 1e-14
    assert res.spectrum_scope == "even"
    assert symmetric_kernel_dimension(SpectralField.zeros(16), SpectralField.constant(1.0, 16), "even", make_grid(16)) == 0
    assert symmetric_kernel_dimension(SpectralField.zeros(16), SpectralField.constant(1.0, 16), "none", make_grid(16)) == 3


def test_symmetry_errors():
    K = from_function(lambda x, y, z: 1 + 0.1 * z, 2)
    with pytest.raises(NotInvariant):
        solve_symmetric(K, "even", SolveOptions(lmax=8))
    with pytest.raises(ValueError):
        parse_symmetry("dihedral")
    grp = parse_symmetry("half-turns:x,z")
    Kxz = from_function(lambda x, y, z: 1 + 0.2 * x * x - 0.1 * y * y, 2)
    assert grp.defect(Kxz) < 1e-12
    assert grp.defect(from_function(lambda x, y, z: 1 + 0.2 * x * y + 0.1 * y, 2)) > 1e-3


def test_half_turn_class_solve():
    K = from_function(lambda x, y, z: 1 + 0.2 * x * x - 0.1 * y * y, 2)
    res = newton_solve(K, SpectralField.zeros(12), SolveOptions(lmax=12, symmetry="half-turns:x,z"))
    assert res.converged
    assert parse_symmetry("half-turns:x,z").defect(res.u) < 1e-10


def test_nowhere_positive_curvature_is_rejected():
    with pytest.raises(NotInCPlus):
        newton_solve(SpectralField.constant(-1.0, 8), SpectralField.zeros(8), SolveOptions(lmax=8))


def test_flow_reaches_even_class_minimum():
    # u* is a saddle of J overall but the minimum within even fields
    p = quadrupole_pair(24)
    res = flow_solve(p.K, SpectralField.zeros(24), SolveOptions(lmax=24, symmetry="even"))
    assert res.converged
    assert (res.u - p.u).norm() < 1e-10
    assert np.all(np.diff(res.J_trace) <= 1e-12)


def test_multistart_independent_of_jobs():
    K = from_function(lambda x, y, z: 1 + 0.3 * z * z + 0.1 * x * y, 2)
    a = multistart_enumerate(K, SolveOptions(lmax=12), n_starts=4, seed=0, jobs=1)
    b = multistart_enumerate(K, SolveOptions(lmax=12), n_starts=4, seed=0, jobs=2)
    assert len(a) == len(b) >= 1
    for x, y in zip(a, b):
        assert np.array_equal(x.u.coeffs, y.u.coeffs)
    assert signed_count(a) == sum((-1) ** r.morse_index for r in a)


def test_obstructed_curvature_has_no_solutions():
    K = from_function(lambda x, y, z: 1 + z, 2)
    assert sign_certificate(K).obstructed
    found = multistart_enumerate(K, SolveOptions(lmax=16), n_starts=8, seed=0)
    assert found == []
    res = newton_solve(K, SpectralField.zeros(16), SolveOptions(lmax=16))
    assert not res.converged
    # the Kazdan-Warner integral along z stays positive on the failed iterate
    assert res.kw is not None and res.kw[2] > 0


def test_residual_vanishes_at_solution():
    p = quadrupole_pair(24)
    g = make_grid(24)
    assert np.max(np.abs(values_on(residual(p.u, p.K, g), g))) < 1e-12


def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(tol=0)
    with pytest.raises(ValueError):
        SolveOptions(backtrack=1.5)


def test_summary_is_plain_data():
    p = quadrupole_pair(16)
    res = newton_solve(p.K, p.u, SolveOptions(lmax=16))
    s = res.summary()
    assert s["converged"] is True and s["morse_index"] == 2
    assert isinstance(s["kw"], list) and len(s["kw"]) == 3
