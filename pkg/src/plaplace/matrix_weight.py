"""Matrix weight fields: per-cell symmetric positive-semidefinite 2x2 matrices.

A field stores the entries ``Q11, Q12, Q22`` sampled at cell centers together
with cached eigendata ``lam1 >= lam2 >= 0`` and the rotation angle of the
leading eigenvector.  The decomposition is the deterministic one with
eigenvalues sorted descending and the leading eigenvector's first nonzero
component nonnegative, so matrix powers ``Q^r = U^t D^r U`` are reproducible.

Descriptors (also accepted by the config/CLI grammar):

* ``identity``
* ``diag:w1,w2`` with scalar weight descriptors ``w1, w2``
* ``scalar_elliptic:m,A11,A12,A22`` for ``m(x) * A`` with constant symmetric
  uniformly elliptic ``A``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, GridFunction, GridMismatchError, VectorField, cell_weight

SYMMETRY_RTOL = 1e-10
#: eigenvalues are clamped to 0 when negative but within this fraction of the trace
PSD_CLAMP_RTOL = 1e-12


class AsymmetricMatrixError(ValueError):
    """Input matrix is not symmetric within tolerance."""


class NotPositiveSemidefiniteError(ValueError):
    """A cell matrix has an eigenvalue below the PSD clamping band."""


def _eig_sym_2x2(q11, q12, q22):
    """Closed-form eigendata of symmetric 2x2 matrices (vectorized).

    Returns ``(lam1, lam2, theta)`` with ``lam1 >= lam2`` and the leading
    eigenvector ``(cos theta, sin theta)``, ``theta in (-pi/2, pi/2]``.
    """
    q11 = np.asarray(q11, dtype=float)
    q12 = np.asarray(q12, dtype=float)
    q22 = np.asarray(q22, dtype=float)
    half_tr = 0.5 * (q11 + q22)
    half_diff = 0.5 * (q11 - q22)
    disc = np.hypot(half_diff, q12)
    lam1 = half_tr + disc
    lam2 = half_tr - disc
    theta = 0.5 * np.arctan2(2.0 * q12, q11 - q22)
    return lam1, lam2, theta


def eigendecompose(q_cell: np.ndarray, *, rtol: float = SYMMETRY_RTOL):
    """Eigendata ``(lam1, lam2, theta)`` of a single symmetric 2x2 matrix.

    Raises :class:`AsymmetricMatrixError` when ``|Q12 - Q21|`` exceeds
    ``rtol`` times the matrix scale.
    """
    q = np.asarray(q_cell, dtype=float)
    if q.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {q.shape}")
    scale = max(float(np.max(np.abs(q))), 1e-300)
    if abs(q[0, 1] - q[1, 0]) > rtol * scale:
        raise AsymmetricMatrixError(
            f"off-diagonal mismatch |{q[0, 1]} - {q[1, 0]}| exceeds {rtol} * {scale}"
        )
    q12 = 0.5 * (q[0, 1] + q[1, 0])
    lam1, lam2, theta = _eig_sym_2x2(q[0, 0], q12, q[1, 1])
    return float(lam1), float(lam2), float(theta)


def _recompose(lam1, lam2, theta):
    """Entries of ``U^t diag(lam1, lam2) U`` for rotation angle ``theta``."""
    c = np.cos(theta)
    s = np.sin(theta)
    q11 = lam1 * c * c + lam2 * s * s
    q22 = lam1 * s * s + lam2 * c * c
    q12 = (lam1 - lam2) * c * s
    return q11, q12, q22


def matrix_power(q_cell: np.ndarray, r: float) -> np.ndarray:
    """``Q^r = U^t D^r U`` for a single PSD symmetric 2x2 matrix, ``r > 0``."""
    if r <= 0:
        raise ValueError(f"need r > 0, got {r}")
    lam1, lam2, theta = eigendecompose(q_cell)
    lam1, lam2 = _clamp_psd(lam1, lam2)
    q11, q12, q22 = _recompose(lam1**r, lam2**r, theta)
    return np.array([[q11, q12], [q12, q22]])


def operator_norm(q_cell: np.ndarray) -> float:
    """Largest eigenvalue of a PSD symmetric 2x2 matrix."""
    lam1, _, _ = eigendecompose(q_cell)
    return lam1


def _clamp_psd(lam1, lam2):
    trace = np.asarray(lam1) + np.asarray(lam2)
    floor = -PSD_CLAMP_RTOL * np.maximum(np.abs(trace), 1.0)
    if np.any(np.asarray(lam2) < floor):
        worst = float(np.min(np.asarray(lam2)))
        raise NotPositiveSemidefiniteError(f"eigenvalue {worst} below PSD clamping band")
    return np.maximum(lam1, 0.0), np.maximum(lam2, 0.0)


@dataclass
class MatrixWeightField:
    """Per-cell symmetric PSD 2x2 matrices with cached eigendata."""

    grid: Grid
    q11: np.ndarray
    q12: np.ndarray
    q22: np.ndarray
    descriptor: str = ""

    def __post_init__(self) -> None:
        shape = self.grid.cell_shape
        self.q11 = np.asarray(self.q11, dtype=float)
        self.q12 = np.asarray(self.q12, dtype=float)
        self.q22 = np.asarray(self.q22, dtype=float)
        for name, arr in (("q11", self.q11), ("q12", self.q12), ("q22", self.q22)):
            if arr.shape != shape:
                raise GridMismatchError(f"{name} shape {arr.shape} != cell shape {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        lam1, lam2, theta = _eig_sym_2x2(self.q11, self.q12, self.q22)
        self.lam1, self.lam2 = _clamp_psd(lam1, lam2)
        self.theta = theta

    # -- constructors ------------------------------------------------------

    @classmethod
    def identity(cls, grid: Grid) -> "MatrixWeightField":
        one = np.ones(grid.cell_shape)
        return cls(grid, one, np.zeros(grid.cell_shape), one.copy(), descriptor="identity")

    @classmethod
    def diagonal(cls, grid: Grid, w1_like, w2_like, descriptor: str = "") -> "MatrixWeightField":
        w1 = cell_weight(w1_like, grid)
        w2 = cell_weight(w2_like, grid)
        return cls(grid, w1, np.zeros(grid.cell_shape), w2, descriptor=descriptor or "diag")

    @classmethod
    def scalar_elliptic(
        cls, grid: Grid, m_like, a_mat: np.ndarray, descriptor: str = ""
    ) -> "MatrixWeightField":
        a = np.asarray(a_mat, dtype=float)
        lam1, lam2, _ = eigendecompose(a)
        if lam2 <= 0:
            raise NotPositiveSemidefiniteError(
                f"scalar_elliptic base matrix must be uniformly elliptic, eigenvalues "
                f"({lam1}, {lam2})"
            )
        m = cell_weight(m_like, grid)
        if np.any(m < 0):
            raise ValueError("scalar factor must be nonnegative")
        return cls(
            grid,
            m * a[0, 0],
            m * 0.5 * (a[0, 1] + a[1, 0]),
            m * a[1, 1],
            descriptor=descriptor or "scalar_elliptic",
        )

    # -- per-field operations ----------------------------------------------

    def power(self, r: float) -> "MatrixWeightField":
        """Field of ``Q(x)^r`` built from the cached eigendata."""
        if r <= 0:
            raise ValueError(f"need r > 0, got {r}")
        q11, q12, q22 = _recompose(self.lam1**r, self.lam2**r, self.theta)
        return MatrixWeightField(self.grid, q11, q12, q22, descriptor=f"({self.descriptor})^{r}")

    def operator_norms(self) -> np.ndarray:
        return self.lam1.copy()

    def quadratic_form(self, g: VectorField) -> np.ndarray:
        """``g^t Q g`` per cell (equals ``|sqrt(Q) g|^2``)."""
        if g.grid != self.grid:
            raise GridMismatchError("vector field and matrix field on different grids")
        return self.q11 * g.gx**2 + 2.0 * self.q12 * g.gx * g.gy + self.q22 * g.gy**2

    def apply(self, g: VectorField) -> VectorField:
        """``Q g`` per cell."""
        if g.grid != self.grid:
            raise GridMismatchError("vector field and matrix field on different grids")
        return VectorField(
            self.grid, self.q11 * g.gx + self.q12 * g.gy, self.q12 * g.gx + self.q22 * g.gy
        )

    def sqrt_apply(self, g: VectorField) -> VectorField:
        """``sqrt(Q) g`` per cell, via the eigendecomposition."""
        return self.power(0.5).apply(g)

    def reconstruction_error(self) -> float:
        """Max relative defect of ``U^t D U`` against the stored entries."""
        q11, q12, q22 = _recompose(self.lam1, self.lam2, self.theta)
        scale = np.maximum(self.lam1, 1e-300)
        err = np.maximum(
            np.abs(q11 - self.q11), np.maximum(np.abs(q12 - self.q12), np.abs(q22 - self.q22))
        )
        return float(np.max(err / scale))


def lq_norm(g: VectorField, q_field: MatrixWeightField, p: float) -> float:
    """Matrix-weighted norm ``(sum |sqrt(Q) g|^p dx)^(1/p)`` by cell quadrature."""
    if p < 1:
        raise ValueError(f"need p >= 1, got {p}")
    dens = q_field.quadratic_form(g) ** (p / 2.0)
    return float((g.grid.cell_area * np.sum(dens)) ** (1.0 / p))


def eigensum_identity_check(g: VectorField, q_field: MatrixWeightField) -> float:
    """Max relative cellwise gap between ``g^t Q g`` and ``sum_j lam_j g_j^2``.

    The two sides are computed independently: the left from the stored matrix
    entries, the right from eigendata and eigenbasis components.
    """
    direct = q_field.quadratic_form(g)
    c = np.cos(q_field.theta)
    s = np.sin(q_field.theta)
    g1 = c * g.gx + s * g.gy
    g2 = -s * g.gx + c * g.gy
    via_eigen = q_field.lam1 * g1**2 + q_field.lam2 * g2**2
    scale = np.maximum(np.maximum(np.abs(direct), np.abs(via_eigen)), 1e-300)
    return float(np.max(np.abs(direct - via_eigen) / scale))


@dataclass
class EllipticityReport:
    """Sampled two-sided comparison of ``Q`` against ``w^(2/p) * I``.

    ``lam_low``/``lam_high`` are the extreme ratios ``lam2/w^(2/p)`` and
    ``lam1/w^(2/p)`` over cells with positive weight.  ``lower_ok`` records the
    pointwise verdict ``lam2^(p/2) >= w`` (the scalar lower ellipticity bound
    ``w |xi|^p <= |sqrt(Q) xi|^p``).
    """

    lam_low: float
    lam_high: float
    p: float
    lower_ok: bool
    low_witness: tuple[int, int]
    high_witness: tuple[int, int]
    lower_witness: tuple[int, int] | None
    zero_weight_cells: list[tuple[int, int]]

    def to_dict(self) -> dict:
        return {
            "lam_low": self.lam_low,
            "lam_high": self.lam_high,
            "p": self.p,
            "lower_ok": self.lower_ok,
            "low_witness": list(self.low_witness),
            "high_witness": list(self.high_witness),
            "lower_witness": None if self.lower_witness is None else list(self.lower_witness),
            "zero_weight_cells": [list(c) for c in self.zero_weight_cells],
        }


def ellipticity_audit(
    q_field: MatrixWeightField, w_like, p: float, *, slack: float = 1e-12
) -> EllipticityReport:
    """Best sampled constants in ``lam w^(2/p) |xi|^2 <= xi^t Q xi <= Lam w^(2/p) |xi|^2``.

    Cells where the weight vanishes are reported as witnesses instead of being
    divided through.
    """
    grid = q_field.grid
    w = cell_weight(w_like, grid)
    if np.any(w < 0):
        raise ValueError("ellipticity audit needs a nonnegative weight")
    pos = w > 0
    zero_cells = [tuple(map(int, idx)) for idx in np.argwhere(~pos)]
    if not np.any(pos):
        raise ZeroDivisionError("weight vanishes on every cell")
    wpow = np.where(pos, w, 1.0) ** (2.0 / p)
    low = np.where(pos, q_field.lam2 / wpow, np.inf)
    high = np.where(pos, q_field.lam1 / wpow, -np.inf)
    low_idx = np.unravel_index(int(np.argmin(low)), grid.cell_shape)
    high_idx = np.unravel_index(int(np.argmax(high)), grid.cell_shape)
    defect = np.where(pos, q_field.lam2 ** (p / 2.0) - w, 0.0)
    lower_ok = bool(np.all(defect >= -slack * np.maximum(w, 1.0)))
    lower_witness = None
    if not lower_ok:
        lower_witness = tuple(map(int, np.unravel_index(int(np.argmin(defect)), grid.cell_shape)))
    return EllipticityReport(
        lam_low=float(low[low_idx]),
        lam_high=float(high[high_idx]),
        p=p,
        lower_ok=lower_ok,
        low_witness=tuple(map(int, low_idx)),
        high_witness=tuple(map(int, high_idx)),
        lower_witness=lower_witness,
        zero_weight_cells=zero_cells,
    )


def holder_pairing_bound(
    g: VectorField, phi: GridFunction, q_field: MatrixWeightField, p: float
) -> tuple[float, float]:
    """Pairing ``|int |sqrt(Q)g|^(p-2) (grad phi)^t Q g|`` and its Holder bound.

    Returns ``(pairing, lq_norm(g)^(p-1) * lq_norm(grad phi))``; the first
    never exceeds the second (Cauchy-Schwarz in the ``Q`` inner product, then
    Holder over cells).
    """
    from .grid import gradient

    gp = gradient(phi)
    q_g = q_field.quadratic_form(g)
    qg = q_field.apply(g)
    cross = gp.gx * qg.gx + gp.gy * qg.gy
    dens = np.where(q_g > 0, q_g ** ((p - 2.0) / 2.0), 0.0) * cross
    pairing = abs(float(g.grid.cell_area * np.sum(dens)))
    bound = lq_norm(g, q_field, p) ** (p - 1.0) * lq_norm(gp, q_field, p)
    return pairing, bound
