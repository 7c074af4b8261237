import numpy as np
import pytest

from plaplace.grid import (
    Grid,
    GridFunction,
    RectDomain,
    VectorField,
    gradient,
    lp_norm,
    project_mean_zero,
    weighted_mean,
)
from plaplace.matrix_weight import MatrixWeightField, lq_norm
from plaplace.solver import (
    ConfigError,
    DegenerateProblemError,
    NeumannProblem,
    SobolevPair,
    SolverConfig,
    apply_gamma,
    apply_t,
    check_hemicontinuous,
    check_monotone,
    coercivity_threshold,
    energy,
    energy_gradient,
    residual,
    solve,
    verify_regularity,
)

from conftest import band_limited


def make_problem(n=32, p=2.0, fn=None, grid=None):
    grid = grid or Grid(RectDomain(1.0, 1.0), n, n)
    q = MatrixWeightField.identity(grid)
    fn = fn or (lambda x, y: np.cos(np.pi * x))
    f = GridFunction.from_callable(grid, fn)
    return NeumannProblem(grid, p, q, 1.0, f)


def random_pair(grid, seed):
    return SobolevPair.from_function(band_limited(grid, np.random.default_rng(seed)))


# -- pairings ------------------------------------------------------------------


def test_apply_t_self_pairing_equals_lq_power():
    grid = Grid(RectDomain(1, 1), 16, 16)
    q = MatrixWeightField.identity(grid)
    for p in (1.5, 2.0, 3.0):
        pair = random_pair(grid, 21)
        val = apply_t(pair, pair, q, p)
        assert val == pytest.approx(lq_norm(pair.g, q, p) ** p, rel=1e-12)


def test_apply_t_zero_field():
    grid = Grid(RectDomain(1, 1), 8, 8)
    q = MatrixWeightField.identity(grid)
    zero = SobolevPair(GridFunction.zeros(grid), VectorField.zeros(grid))
    assert apply_t(zero, random_pair(grid, 1), q, 2.5) == 0.0


def test_apply_t_orthogonal_directions():
    grid = Grid(RectDomain(1, 1), 8, 8)
    q = MatrixWeightField.identity(grid)
    ones = np.ones(grid.cell_shape)
    zeros = np.zeros(grid.cell_shape)
    gx = SobolevPair(GridFunction.zeros(grid), VectorField(grid, ones, zeros))
    hy = SobolevPair(GridFunction.zeros(grid), VectorField(grid, zeros, ones))
    assert apply_t(gx, hy, q, 2.0) == 0.0


def test_apply_t_bilinear_in_test_leg():
    grid = Grid(RectDomain(1, 1), 8, 8)
    q = MatrixWeightField.identity(grid)
    u = random_pair(grid, 2)
    w1 = random_pair(grid, 3)
    w2 = random_pair(grid, 4)
    combo = SobolevPair(
        w1.u, VectorField(grid, 2.0 * w1.g.gx - w2.g.gx, 2.0 * w1.g.gy - w2.g.gy)
    )
    lhs = apply_t(u, combo, q, 3.0)
    rhs = 2.0 * apply_t(u, w1, q, 3.0) - apply_t(u, w2, q, 3.0)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_apply_t_bounded_by_norm_product():
    grid = Grid(RectDomain(1, 1), 12, 12)
    q = MatrixWeightField.identity(grid)
    for p in (1.5, 2.0, 3.0):
        for seed in range(5):
            u = random_pair(grid, seed)
            w = random_pair(grid, 50 + seed)
            bound = lq_norm(u.g, q, p) ** (p - 1.0) * lq_norm(w.g, q, p)
            assert abs(apply_t(u, w, q, p)) <= bound * (1 + 1e-12)


def test_apply_gamma_zero_and_quadratic_case():
    grid = Grid(RectDomain(1, 1), 16, 16)
    zero = GridFunction.zeros(grid)
    w = random_pair(grid, 5)
    assert apply_gamma(zero, 1.0, 2.0, w) == 0.0
    f = GridFunction.from_callable(grid, lambda x, y: np.cos(np.pi * x))
    pair_f = SobolevPair.from_function(f)
    assert apply_gamma(f, 1.0, 2.0, pair_f) == pytest.approx(
        -lp_norm(f, 1.0, 2.0) ** 2, rel=1e-12
    )


def test_apply_gamma_holder_bound():
    grid = Grid(RectDomain(1, 1), 12, 12)
    for p in (1.5, 2.0, 3.0):
        for seed in range(5):
            f = band_limited(grid, np.random.default_rng(seed))
            w = random_pair(grid, 60 + seed)
            bound = lp_norm(f, 1.0, p) ** (p - 1.0) * lp_norm(w.u, 1.0, p)
            assert abs(apply_gamma(f, 1.0, p, w)) <= bound * (1 + 1e-12)


def test_datum_tested_with_itself_reproduces_norm():
    # quadrature-level identity: -Gamma(f, grad f) = |f|_p^p
    grid = Grid(RectDomain(1, 1), 24, 24)
    for p in (1.5, 2.0, 3.0):
        f = project_mean_zero(band_limited(grid, np.random.default_rng(7)), 1.0)
        pair = SobolevPair.from_function(f)
        assert -apply_gamma(f, 1.0, p, pair) == pytest.approx(
            lp_norm(f, 1.0, p) ** p, rel=1e-10
        )


# -- energy ---------------------------------------------------------------------


def test_energy_zero_function():
    prob = make_problem(16)
    assert energy(GridFunction.zeros(prob.grid), prob, 0.0) == 0.0


def test_energy_p2_specialization():
    prob = make_problem(16, p=2.0)
    u = band_limited(prob.grid, np.random.default_rng(8))
    g = gradient(u)
    om = prob.grid.cell_area
    quad = 0.5 * om * np.sum(g.gx**2 + g.gy**2)
    from plaplace.grid import cell_average

    data = om * np.sum(cell_average(prob.f) * cell_average(u))
    assert energy(u, prob, 0.0) == pytest.approx(quad + data, rel=1e-12)


@pytest.mark.parametrize("p,eps", [(1.5, 1e-6), (2.0, 0.0), (3.0, 0.0)])
def test_energy_directional_derivative_vs_central_difference(p, eps):
    prob = make_problem(16, p=p)
    rng = np.random.default_rng(42)
    for _ in range(10):
        u = band_limited(prob.grid, rng)
        phi = band_limited(prob.grid, rng)
        dd = float(np.sum(energy_gradient(u, prob, eps) * phi.values))
        h = 1e-5
        jp = energy(GridFunction(prob.grid, u.values + h * phi.values), prob, eps)
        jm = energy(GridFunction(prob.grid, u.values - h * phi.values), prob, eps)
        assert dd == pytest.approx((jp - jm) / (2 * h), rel=1e-5)


def test_directional_derivative_is_weak_form_pairing():
    prob = make_problem(16, p=3.0)
    rng = np.random.default_rng(9)
    u = band_limited(prob.grid, rng)
    phi = band_limited(prob.grid, rng)
    pair_u = SobolevPair.from_function(u)
    pair_phi = SobolevPair.from_function(phi)
    dd = float(np.sum(energy_gradient(u, prob, 0.0) * phi.values))
    weak = apply_t(pair_u, pair_phi, prob.q_field, 3.0) - apply_gamma(
        prob.f, 1.0, 3.0, pair_phi
    )
    assert dd == pytest.approx(weak, rel=1e-12)


# -- solve ------------------------------------------------------------------------


def test_solve_p2_single_mode_against_series():
    errs = []
    for n in (16, 32):
        prob = make_problem(n)
        rep = solve(prob, SolverConfig(tol=1e-11))
        assert rep.converged
        target = project_mean_zero(
            GridFunction.from_callable(prob.grid, lambda x, y: -np.cos(np.pi * x) / np.pi**2),
            1.0,
        )
        diff = GridFunction(prob.grid, rep.pair.u.values - target.values)
        errs.append(lp_norm(diff, 1.0, 2.0) / lp_norm(target, 1.0, 2.0))
    assert errs[0] < 1e-2
    assert np.log2(errs[0] / errs[1]) > 1.7


def test_solve_zero_datum():
    prob = make_problem(16, fn=lambda x, y: np.zeros_like(x))
    rep = solve(prob)
    assert rep.converged
    assert np.max(np.abs(rep.pair.u.values)) < 1e-14
    assert rep.energy_history[0] == 0.0


def test_solve_p3_residual_and_identity():
    prob = make_problem(48, p=3.0)
    rep = solve(prob, SolverConfig(tol=1e-9))
    assert rep.converged
    assert rep.residual <= 1e-8
    lhs = rep.norm_g**3
    rhs = abs(apply_gamma(prob.f, 1.0, 3.0, rep.pair))
    assert lhs == pytest.approx(rhs, rel=1e-6)


def test_solve_mean_zero_and_energy_descent():
    prob = make_problem(24, p=3.0)
    rep = solve(prob)
    assert abs(weighted_mean(rep.pair.u, 1.0)) < 1e-12
    hist = rep.energy_history
    assert all(hist[k + 1] <= hist[k] + 1e-14 for k in range(len(hist) - 1))


def test_solve_p2_matches_dense_direct_solve():
    prob = make_problem(12)
    n = prob.grid.node_shape[0] * prob.grid.node_shape[1]
    zero = GridFunction.zeros(prob.grid)
    g0 = energy_gradient(zero, prob, 0.0).ravel()
    cols = np.empty((n, n))
    basis = np.zeros(prob.grid.node_shape)
    for j in range(n):
        basis.flat[j] = 1.0
        cols[:, j] = energy_gradient(GridFunction(prob.grid, basis), prob, 0.0).ravel() - g0
        basis.flat[j] = 0.0
    n_mat = np.stack([prob.c_node.ravel(), prob.cb_node.ravel()], axis=1)
    kkt = np.block([[cols, n_mat], [n_mat.T, np.zeros((2, 2))]])
    rhs = np.concatenate([-g0, [0.0, 0.0]])
    direct = np.linalg.solve(kkt, rhs)[:n].reshape(prob.grid.node_shape)
    rep = solve(prob, SolverConfig(tol=1e-12))
    scale = np.max(np.abs(direct))
    assert np.max(np.abs(rep.pair.u.values - direct)) <= 1e-8 * scale


def test_residual_matches_linear_defect_at_p2():
    prob = make_problem(12)
    rng = np.random.default_rng(10)
    u = project_mean_zero(band_limited(prob.grid, rng), 1.0)
    pair = SobolevPair.from_function(u)
    res = residual(pair, prob)
    num = energy_gradient(u, prob, 0.0) - (prob.c_node / prob.v_mass) * prob.s_total
    oracle = float(np.max(np.abs(num) / prob.test_denominators()))
    assert res == pytest.approx(oracle, rel=1e-12)
    assert res > 0


def test_residual_grows_with_perturbation():
    prob = make_problem(16)
    rep = solve(prob, SolverConfig(tol=1e-11))
    base = rep.residual
    rng = np.random.default_rng(11)
    noise = rng.standard_normal(prob.grid.node_shape)
    vals = []
    for delta in (1e-6, 1e-4, 1e-2):
        pert = GridFunction(prob.grid, rep.pair.u.values + delta * noise)
        vals.append(residual(SobolevPair.from_function(pert), prob))
    assert vals[0] > base
    assert vals[0] < vals[1] < vals[2]


def test_solve_nonconvergence_flagged_not_raised():
    prob = make_problem(24, p=3.0)
    rep = solve(prob, SolverConfig(tol=1e-13, max_iter=1, warm_start=False))
    assert not rep.converged


def test_degenerate_weight_rejected():
    grid = Grid(RectDomain(1, 1), 8, 8)
    q = MatrixWeightField.identity(grid)
    f = GridFunction.from_callable(grid, lambda x, y: np.cos(np.pi * x))
    with pytest.raises(DegenerateProblemError):
        NeumannProblem(grid, 2.0, q, 0.0, f)


def test_eps_required_below_two():
    prob = make_problem(8, p=1.5)
    with pytest.raises(ConfigError):
        solve(prob, SolverConfig(eps=0.0))


def test_solve_p15_with_regularization():
    prob = make_problem(24, p=1.5)
    rep = solve(prob, SolverConfig(eps=1e-6, tol=1e-9))
    assert rep.converged
    assert rep.residual <= 1e-9
    assert rep.eps == 1e-6


def test_eps_consistency_first_order():
    prob = make_problem(24, p=3.0)
    sols = {}
    for eps in (2e-3, 1e-3, 5e-4):
        rep = solve(prob, SolverConfig(eps=eps, tol=1e-11))
        sols[eps] = rep.pair.u.values
    d1 = np.max(np.abs(sols[2e-3] - sols[1e-3]))
    d2 = np.max(np.abs(sols[1e-3] - sols[5e-4]))
    assert d2 <= 0.75 * d1  # O(eps) difference halves with eps


def test_degenerate_cells_flagged():
    grid = Grid(RectDomain(1, 1), 12, 12)
    w2 = np.ones(grid.cell_shape)
    w2[3:5, 3:5] = 0.0
    q = MatrixWeightField.diagonal(grid, 1.0, w2)
    f = GridFunction.from_callable(grid, lambda x, y: np.cos(np.pi * x))
    rep = solve(NeumannProblem(grid, 2.0, q, 1.0, f), SolverConfig(tol=1e-8))
    assert rep.flags.get("degenerate_cells") == 4
    assert "degeneracy_witness" in rep.flags


# -- operator property checks ------------------------------------------------------


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_monotone_sampled(p):
    grid = Grid(RectDomain(1, 1), 8, 8)
    q = MatrixWeightField.identity(grid)
    rep = check_monotone(q, p, n_trials=100, seed=2)
    assert rep.min_normalized >= -1e-10
    assert rep.min_cellwise >= -1e-12
    assert rep.max_identity_gap <= 1e-10


def test_monotone_identical_pair_is_zero():
    grid = Grid(RectDomain(1, 1), 8, 8)
    q = MatrixWeightField.identity(grid)
    pair = random_pair(grid, 12)
    diff = SobolevPair(pair.u, VectorField.zeros(grid))
    assert apply_t(pair, diff, q, 2.0) - apply_t(pair, diff, q, 2.0) == 0.0


def test_monotone_against_zero_is_norm_power():
    grid = Grid(RectDomain(1, 1), 8, 8)
    q = MatrixWeightField.identity(grid)
    pair = random_pair(grid, 13)
    zero = SobolevPair(GridFunction.zeros(grid), VectorField.zeros(grid))
    inner = apply_t(pair, pair, q, 3.0) - apply_t(zero, pair, q, 3.0)
    assert inner == pytest.approx(lq_norm(pair.g, q, 3.0) ** 3, rel=1e-12)
    assert inner >= 0


def test_hemicontinuity_zero_offset():
    grid = Grid(RectDomain(1, 1), 8, 8)
    q = MatrixWeightField.identity(grid)
    u, w = random_pair(grid, 14), random_pair(grid, 15)
    rep = check_hemicontinuous(u, w, q, 2.5, offsets=np.array([1e-9]))
    assert rep.moduli[0] <= 1e-6 * lq_norm(u.g, q, 2.5) ** 2.5


def test_hemicontinuity_p2_exactly_affine():
    grid = Grid(RectDomain(1, 1), 10, 10)
    q = MatrixWeightField.identity(grid)
    rep = check_hemicontinuous(random_pair(grid, 16), random_pair(grid, 17), q, 2.0)
    assert rep.linear_defect is not None
    assert rep.linear_defect <= 1e-10


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_hemicontinuity_modulus_exponent(p):
    grid = Grid(RectDomain(1, 1), 10, 10)
    q = MatrixWeightField.identity(grid)
    rep = check_hemicontinuous(random_pair(grid, 18), random_pair(grid, 19), q, p)
    assert rep.within_bound
    assert rep.exponent_fit >= min(1.0, p - 1.0) - 0.1


# -- coercivity and regularity ------------------------------------------------------


def test_coercivity_threshold_values():
    grid = Grid(RectDomain(1, 1), 16, 16)
    zero = GridFunction.zeros(grid)
    assert coercivity_threshold(zero, 1.0, 2.0, 1.0) == 1.0
    f = GridFunction.from_callable(grid, lambda x, y: np.cos(np.pi * x))
    norm = lp_norm(f, 1.0, 2.0)
    scaled = GridFunction(grid, f.values / norm)
    assert coercivity_threshold(scaled, 1.0, 2.0, 1.0) == pytest.approx(2.0, rel=1e-12)


def test_coercivity_holds_above_threshold():
    from plaplace.poincare import poincare_p2_eigen

    grid = Grid(RectDomain(1, 1), 24, 24)
    q = MatrixWeightField.identity(grid)
    f = GridFunction.from_callable(grid, lambda x, y: np.cos(np.pi * x))
    c2 = poincare_p2_eigen(q, 1.0, grid).c_p
    lam = coercivity_threshold(f, 1.0, 2.0, np.sqrt(c2))
    rng = np.random.default_rng(20)
    for _ in range(30):
        u = project_mean_zero(band_limited(grid, rng), 1.0)
        pair = SobolevPair.from_function(u)
        h = pair.h_norm(q, 1.0, 2.0)
        if h == 0:
            continue
        scale = rng.uniform(1.05, 4.0) * lam / h
        pair = SobolevPair.from_function(GridFunction(grid, u.values * scale))
        assert apply_t(pair, pair, q, 2.0) >= apply_gamma(f, 1.0, 2.0, pair)


def test_verify_regularity_zero_datum():
    prob = make_problem(12, fn=lambda x, y: np.zeros_like(x))
    rep = solve(prob)
    chk = verify_regularity(rep, prob.f, 1.0, 2.0)
    assert chk.norm_ratio == 0.0 and chk.chain_defect == 0.0


def test_verify_regularity_single_mode_ratio():
    prob = make_problem(48)
    rep = solve(prob, SolverConfig(tol=1e-11))
    chk = verify_regularity(rep, prob.f, 1.0, 2.0)
    assert chk.norm_ratio == pytest.approx(1.0 / np.pi**2, rel=0.02)
    assert chk.chain_defect <= 1e-10 * chk.chain_scale


def test_verify_regularity_corpus_defect():
    grid = Grid(RectDomain(1, 1), 24, 24)
    q = MatrixWeightField.identity(grid)
    rng = np.random.default_rng(23)
    for _ in range(5):
        f = project_mean_zero(band_limited(grid, rng), 1.0)
        prob = NeumannProblem(grid, 3.0, q, 1.0, f)
        rep = solve(prob, SolverConfig(tol=1e-10))
        assert rep.converged
        chk = verify_regularity(rep, f, 1.0, 3.0)
        assert chk.chain_defect <= 1e-6 * chk.chain_scale


def test_report_serialization():
    rep = solve(make_problem(8), SolverConfig(tol=1e-10))
    d = rep.to_dict()
    assert set(d) >= {
        "u",
        "g",
        "residual",
        "iterations",
        "energy_trace",
        "ratio_hypoest",
        "ratio_a1",
        "flags",
    }
    assert len(d["u"]) == 9
