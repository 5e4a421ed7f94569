import math

import numpy as np
import pytest
import scipy.sparse as sp

from irgnm.errors import PDESolveError
from irgnm.gauss_newton import gn_step_identity
from irgnm.grid import Grid, load_field_csv, save_field_csv
from irgnm.potential import PotentialProblem, discontinuous_truth, smooth_truth, truth_field


def zero(x, y):
    return 0.0 * x


def one(x, y):
    return 1.0 + 0.0 * x


def random_triple(model, rng):
    u = rng.uniform(0, 2, model.dim_param)
    h = rng.standard_normal(model.dim_param)
    g = rng.standard_normal(model.dim_obs)
    return u, h, g


def test_manufactured_solution_is_exact(potential33):
    p = potential33.solve_pde(potential33.u_true)
    x, y = potential33.grid.coords()
    assert np.max(np.abs(p - (x + y))) <= 1e-10


def test_manufactured_solution_discontinuous_truth():
    prob = PotentialProblem(17, truth="discontinuous")
    x, y = prob.grid.coords()
    assert np.max(np.abs(prob.apply(prob.u_true) - (x + y))) <= 1e-10


def test_zero_data_gives_zero_state(potential9):
    p = potential9.solve_pde(np.zeros(81), f=zero, g=zero)
    assert np.array_equal(p, np.zeros(81))


def test_refinement_order_non_manufactured():
    # Richardson-style: successive differences at shared nodes. Grids with
    # 17, 33 and 65 node lines (boundary included) have 15, 31, 63 interior nodes.
    states = []
    for n in (15, 31, 63):
        prob = PotentialProblem(n, f=one, g=zero)
        states.append(prob.solve_pde(prob.u_true).reshape(n, n))
    coarse = states[0]
    mid = states[1][1::2, 1::2]
    fine = states[2][3::4, 3::4]
    order = math.log2(np.max(np.abs(coarse - mid)) / np.max(np.abs(mid - fine)))
    assert 1.9 <= order <= 2.1


def test_singular_system_reports_pivot(potential9):
    # -lap_h has a known eigenvalue; shifting by its negative makes A singular.
    n, h = 9, potential9.grid.h
    lam = 2 * (2 - 2 * math.cos(math.pi * h)) / h**2
    with pytest.raises(PDESolveError, match="pivot|singular"):
        potential9.solve_pde(np.full(n * n, -lam))


def test_deriv_zero_and_linearity(potential17, rng):
    u, h1, _ = random_triple(potential17, rng)
    h2 = rng.standard_normal(potential17.dim_param)
    lin = potential17.linearize(u)
    assert np.array_equal(lin.deriv(np.zeros_like(h1)), np.zeros_like(h1))
    combo = lin.deriv(2.5 * h1 - 0.75 * h2)
    ref = 2.5 * lin.deriv(h1) - 0.75 * lin.deriv(h2)
    assert np.linalg.norm(combo - ref) <= 1e-12 * np.linalg.norm(ref)


def test_deriv_accepts_column_blocks(potential9, rng):
    u, _, _ = random_triple(potential9, rng)
    lin = potential9.linearize(u)
    block = rng.standard_normal((81, 3))
    cols = np.column_stack([lin.deriv(block[:, k]) for k in range(3)])
    np.testing.assert_allclose(lin.deriv(block), cols, rtol=1e-13, atol=1e-15)


def test_taylor_order(potential17, rng):
    u = potential17.u_true + 0.1
    h = rng.standard_normal(potential17.dim_param)
    lin = potential17.linearize(u)
    ts = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    rem = [np.linalg.norm(potential17.apply(u + t * h) - lin.value - t * lin.deriv(h)) for t in ts]
    slope = np.polyfit(np.log(ts), np.log(rem), 1)[0]
    assert 1.9 <= slope <= 2.1


def test_adjoint_zero(potential9, rng):
    u, _, _ = random_triple(potential9, rng)
    assert np.array_equal(potential9.adjoint(u, np.zeros(81)), np.zeros(81))


def test_dot_product_17(potential17, rng):
    inner = potential17.inner_param
    for _ in range(5):
        u, h, g = random_triple(potential17, rng)
        lin = potential17.linearize(u)
        lhs = potential17.inner_obs(lin.deriv(h), g)
        rhs = inner(h, lin.adjoint(g))
        assert abs(lhs - rhs) / (abs(lhs) + 1e-300) < 1e-8


def test_operator_symmetry(potential17, rng):
    u, _, _ = random_triple(potential17, rng)
    lin = potential17.linearize(u)
    g1, g2 = rng.standard_normal((2, potential17.dim_obs))
    a = np.dot(lin.lu.solve(g1), g2)
    b = np.dot(g1, lin.lu.solve(g2))
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


def test_operator_is_symmetric_matrix(potential9, rng):
    a = potential9.system_matrix(rng.uniform(0, 1, 81))
    assert abs(a - a.T).max() == 0.0
    assert isinstance(a, sp.csr_matrix)


def test_kkt_fixed_point(potential9, rng):
    u = rng.uniform(0, 1, 81)
    w = potential9.apply(u)
    out = potential9.kkt_step(u, u, w, 1e-3)
    np.testing.assert_allclose(out, u, rtol=0, atol=1e-14)


def test_kkt_matches_identity_step(potential9, rng):
    for _ in range(3):
        u_n = rng.uniform(0, 1, 81)
        u_anchor = rng.uniform(0, 0.5, 81)
        w = potential9.exact_data() + 1e-3 * rng.standard_normal(81)
        alpha = 10 ** rng.uniform(-5, -2)
        ref = gn_step_identity(potential9, u_n, u_anchor, w, alpha, tol=1e-12)
        kkt = potential9.kkt_step(u_n, u_anchor, w, alpha)
        assert np.linalg.norm(kkt - ref) / np.linalg.norm(ref) < 1e-8


def test_kkt_alpha_scaling(potential9, rng):
    # For tiny residuals and large alpha, u - u0 ~ J* r / alpha.
    u = rng.uniform(0, 1, 81)
    r = 1e-7 * rng.standard_normal(81)
    assert np.linalg.norm(r) <= 1e-6
    w = potential9.apply(u) + r
    d1 = np.linalg.norm(potential9.kkt_step(u, u, w, 1.0) - u)
    d2 = np.linalg.norm(potential9.kkt_step(u, u, w, 2.0) - u)
    assert d2 / d1 == pytest.approx(0.5, rel=0.05)


def test_kkt_rejects_non_positive_alpha(potential9):
    with pytest.raises(ValueError):
        potential9.kkt_step(np.zeros(81), np.zeros(81), np.zeros(81), 0.0)


def test_truth_values():
    assert smooth_truth(0.3, 0.7) == pytest.approx(1.0, abs=1e-11)
    assert discontinuous_truth(0.7, 0.35) == 0.5
    assert discontinuous_truth(0.05, 0.05) == 0.0
    assert discontinuous_truth(0.3, 0.7) == 1.0


def test_truth_ranges():
    grid = Grid(65)
    smooth = truth_field("smooth", grid)
    assert smooth.min() >= 0 and smooth.max() <= 1 + 1e-6
    assert set(np.unique(truth_field("discontinuous", grid))) <= {0.0, 0.5, 1.0}
    with pytest.raises(ValueError):
        truth_field("wavy", grid)


def test_observation_space_is_parameter_space(potential9):
    assert potential9.dim_obs == potential9.dim_param == 81
    a = np.arange(81.0)
    assert potential9.inner_obs(a, a) == pytest.approx(potential9.grid.h**2 * a @ a)


def test_field_csv_roundtrip(tmp_path, potential9):
    path = tmp_path / "field.csv"
    save_field_csv(path, potential9.u_true, potential9.grid)
    assert path.read_text().startswith("# nx=9,ny=9,h=")
    values, grid = load_field_csv(path)
    assert grid == potential9.grid
    np.testing.assert_array_equal(values, potential9.u_true)
