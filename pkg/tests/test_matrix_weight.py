import numpy as np
import pytest

from plaplace.grid import Grid, GridFunction, RectDomain, VectorField, gradient
from plaplace.matrix_weight import (
    AsymmetricMatrixError,
    MatrixWeightField,
    NotPositiveSemidefiniteError,
    eigendecompose,
    eigensum_identity_check,
    ellipticity_audit,
    holder_pairing_bound,
    lq_norm,
    matrix_power,
    operator_norm,
)

from conftest import band_limited


def random_spd_field(grid, rng, floor=0.05):
    a = rng.uniform(floor, 2.0, grid.cell_shape)
    c = rng.uniform(floor, 2.0, grid.cell_shape)
    # |b| < sqrt(ac) keeps every cell positive definite
    b = rng.uniform(-1.0, 1.0, grid.cell_shape) * np.sqrt(a * c) * 0.9
    return MatrixWeightField(grid, a, b, c)


def test_eigendecompose_identity_and_diagonal():
    assert eigendecompose(np.eye(2)) == pytest.approx((1.0, 1.0, 0.0))
    lam1, lam2, theta = eigendecompose(np.diag([4.0, 1.0]))
    assert (lam1, lam2, theta) == pytest.approx((4.0, 1.0, 0.0))


def test_eigendecompose_rotated():
    lam1, lam2, theta = eigendecompose(np.array([[2.0, 1.0], [1.0, 2.0]]))
    # characteristic polynomial (2-l)^2 - 1: roots 3 and 1, eigenvector (1,1)
    assert (lam1, lam2) == pytest.approx((3.0, 1.0))
    assert theta == pytest.approx(np.pi / 4.0)


def test_eigendecompose_rejects_asymmetric():
    with pytest.raises(AsymmetricMatrixError):
        eigendecompose(np.array([[1.0, 0.5], [0.2, 1.0]]))


def test_eigendecompose_reconstruction_random():
    rng = np.random.default_rng(3)
    grid = Grid(RectDomain(1, 1), 8, 8)
    q = random_spd_field(grid, rng)
    assert q.reconstruction_error() <= 1e-10


def test_sign_convention_first_component_nonnegative():
    for mat in (np.array([[2.0, -1.0], [-1.0, 2.0]]), np.diag([1.0, 4.0])):
        _, _, theta = eigendecompose(mat)
        v1 = np.array([np.cos(theta), np.sin(theta)])
        first_nonzero = v1[np.nonzero(np.abs(v1) > 1e-14)[0][0]]
        assert first_nonzero >= 0


def test_matrix_power_diagonal_and_identity():
    assert np.allclose(matrix_power(np.diag([4.0, 9.0]), 0.5), np.diag([2.0, 3.0]))
    for r in (0.5, 1.0, 2.0, 3.7):
        assert np.allclose(matrix_power(np.eye(2), r), np.eye(2))


def test_matrix_power_square():
    q = np.array([[2.0, 1.0], [1.0, 2.0]])
    assert np.allclose(matrix_power(q, 2.0), q @ q)
    assert np.allclose(matrix_power(q, 2.0), [[5.0, 4.0], [4.0, 5.0]])


def test_matrix_power_one_is_identity_map():
    q = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert np.allclose(matrix_power(q, 1.0), q, atol=1e-12)


def test_matrix_sqrt_squares_back():
    q = np.array([[2.0, 1.0], [1.0, 2.0]])
    root = matrix_power(q, 0.5)
    assert np.allclose(root @ root, q, atol=1e-10)


def test_power_roundtrip_field():
    rng = np.random.default_rng(4)
    grid = Grid(RectDomain(1, 1), 6, 6)
    q = random_spd_field(grid, rng)
    for r in (0.5, 2.0):
        back = q.power(r).power(1.0 / r)
        for attr in ("q11", "q12", "q22"):
            assert np.allclose(getattr(back, attr), getattr(q, attr), atol=1e-8)


def test_operator_norm_examples():
    assert operator_norm(np.eye(2)) == pytest.approx(1.0)
    assert operator_norm(np.diag([4.0, 1.0])) == pytest.approx(4.0)
    assert operator_norm(np.array([[2.0, 1.0], [1.0, 2.0]])) == pytest.approx(3.0)


def test_operator_norm_dominates_quadratic_form():
    rng = np.random.default_rng(5)
    grid = Grid(RectDomain(1, 1), 6, 6)
    q = random_spd_field(grid, rng)
    g = VectorField(grid, rng.standard_normal(grid.cell_shape), rng.standard_normal(grid.cell_shape))
    qf = q.quadratic_form(g)
    gamma = q.operator_norms()
    assert np.all(qf <= gamma * (g.gx**2 + g.gy**2) * (1 + 1e-12) + 1e-14)


def test_lq_norm_identity_unit_field():
    grid = Grid(RectDomain(1, 1), 16, 16)
    q = MatrixWeightField.identity(grid)
    g = VectorField(grid, np.ones(grid.cell_shape), np.zeros(grid.cell_shape))
    assert lq_norm(g, q, 2.0) == pytest.approx(1.0, rel=1e-12)


def test_lq_norm_homogeneity_and_diag_example():
    grid = Grid(RectDomain(1, 1), 8, 8)
    q = MatrixWeightField.diagonal(grid, 4.0, 1.0)
    g = VectorField(grid, np.ones(grid.cell_shape), np.ones(grid.cell_shape))
    # |sqrt(Q) g|^2 = 4 + 1 pointwise
    assert lq_norm(g, q, 2.0) == pytest.approx(np.sqrt(5.0), rel=1e-12)
    scaled = VectorField(grid, -2.5 * g.gx, -2.5 * g.gy)
    assert lq_norm(scaled, q, 3.0) == pytest.approx(2.5 * lq_norm(g, q, 3.0), rel=1e-12)


def test_lq_norm_triangle_inequality():
    rng = np.random.default_rng(6)
    grid = Grid(RectDomain(1, 1), 8, 8)
    q = random_spd_field(grid, rng)
    for p in (1.0, 1.5, 2.0, 3.0):
        for _ in range(5):
            g = VectorField(grid, rng.standard_normal(grid.cell_shape), rng.standard_normal(grid.cell_shape))
            h = VectorField(grid, rng.standard_normal(grid.cell_shape), rng.standard_normal(grid.cell_shape))
            s = VectorField(grid, g.gx + h.gx, g.gy + h.gy)
            assert lq_norm(s, q, p) <= lq_norm(g, q, p) + lq_norm(h, q, p) + 1e-12


def test_eigensum_identity():
    grid = Grid(RectDomain(1, 1), 8, 8)
    rng = np.random.default_rng(7)
    g = VectorField(grid, rng.standard_normal(grid.cell_shape), rng.standard_normal(grid.cell_shape))
    for q in (
        MatrixWeightField.identity(grid),
        MatrixWeightField.diagonal(grid, 4.0, 1.0),
        random_spd_field(grid, rng),
    ):
        assert eigensum_identity_check(g, q) <= 1e-10


def test_holder_pairing_bound():
    rng = np.random.default_rng(8)
    grid = Grid(RectDomain(1, 1), 12, 12)
    q = random_spd_field(grid, rng)
    for p in (1.5, 2.0, 3.0):
        for seed in range(4):
            g = gradient(band_limited(grid, np.random.default_rng(seed)))
            phi = band_limited(grid, np.random.default_rng(100 + seed))
            pairing, bound = holder_pairing_bound(g, phi, q, p)
            assert pairing <= bound * (1.0 + 1e-12)


def test_ellipticity_saturated():
    grid = Grid(RectDomain(1, 1), 8, 8)
    p = 3.0
    w = lambda x, y: 1.0 + x  # noqa: E731
    wpow = lambda x, y: (1.0 + x) ** (2.0 / p)  # noqa: E731
    q = MatrixWeightField.diagonal(grid, wpow, wpow)
    rep = ellipticity_audit(q, w, p)
    assert rep.lam_low == pytest.approx(1.0, rel=1e-12)
    assert rep.lam_high == pytest.approx(1.0, rel=1e-12)
    assert rep.lower_ok


def test_ellipticity_diag_pair_lower_bound():
    # Q = diag(w, v) with v >= w satisfies the scalar lower ellipticity for w
    grid = Grid(RectDomain(1.0, 1.0, origin=(1.0, 1.0)), 12, 12)
    w = lambda x, y: np.hypot(x, y) ** 0.5  # noqa: E731
    v = lambda x, y: np.hypot(x, y) ** 1.5  # noqa: E731
    q = MatrixWeightField.diagonal(grid, w, v)
    rep = ellipticity_audit(q, w, 2.0)
    assert rep.lower_ok
    assert rep.lam_low >= 1.0 - 1e-12


def test_ellipticity_failure_witness():
    grid = Grid(RectDomain(1, 1), 8, 8)
    q = MatrixWeightField.identity(grid)
    rep = ellipticity_audit(q, 2.0, 2.0)
    assert not rep.lower_ok
    assert rep.lower_witness is not None


def test_ellipticity_zero_weight_cells_reported():
    grid = Grid(RectDomain(1, 1), 8, 8)
    q = MatrixWeightField.identity(grid)
    w = np.ones(grid.cell_shape)
    w[0, 0] = 0.0
    rep = ellipticity_audit(q, w, 2.0)
    assert (0, 0) in rep.zero_weight_cells


def test_psd_validation_rejects_indefinite():
    grid = Grid(RectDomain(1, 1), 4, 4)
    with pytest.raises(NotPositiveSemidefiniteError):
        MatrixWeightField.diagonal(grid, 1.0, -1.0)


def test_scalar_elliptic_constructor():
    grid = Grid(RectDomain(1, 1), 4, 4)
    a = np.array([[2.0, 0.5], [0.5, 1.0]])
    q = MatrixWeightField.scalar_elliptic(grid, lambda x, y: 1.0 + x, a)
    assert np.all(q.lam2 > 0)
    with pytest.raises(NotPositiveSemidefiniteError):
        MatrixWeightField.scalar_elliptic(grid, 1.0, np.array([[1.0, 2.0], [2.0, 1.0]]))
