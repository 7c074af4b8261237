"""Closed-form cosine-series solution of the Neumann Poisson problem on a rectangle.

On ``R = (0, a) x (0, b)`` every mean-zero datum expands in the Neumann
eigenbasis ``cos(n pi x / a) cos(m pi y / b)``; the Poisson solution divides
each coefficient by the eigenvalue ``lambda_mn = pi^2 (n^2/a^2 + m^2/b^2)`` and
flips the sign, with the constant mode pinned to zero.  This is the ground
truth for p = 2 solves and for Poincare constants (the smallest nonzero
eigenvalue).

Coefficients are computed with trapezoid node quadrature, which is exactly
orthogonal on the discrete cosine lattice, so band-limited reconstruction is
exact up to roundoff.  The normalization is the standard orthogonal one,
``4/(ab)`` with a factor ``1/2`` per zero index; any consistent choice cancels
in the Poisson division and the round-trip test pins this one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, GridFunction, RectDomain


class NonZeroMeanError(ValueError):
    """Cosine data must have zero unweighted mean on the rectangle."""


def lambda_mn(m: int, n: int, a: float, b: float) -> float:
    """Neumann Laplace eigenvalue ``pi^2 (n^2/a^2 + m^2/b^2)``; ``m + n > 0``.

    ``n`` counts the x-oscillation (period ``2a/n``), ``m`` the y-oscillation.
    """
    if m < 0 or n < 0 or m + n == 0:
        raise ValueError(f"need m, n >= 0 with m + n > 0, got ({m}, {n})")
    return np.pi**2 * (n**2 / a**2 + m**2 / b**2)


@dataclass
class CosineExpansion:
    """Coefficient table ``coeffs[m, n]`` against ``cos(n pi x/a) cos(m pi y/b)``."""

    a: float
    b: float
    coeffs: np.ndarray
    tail_bound: float = field(default=0.0)

    def __post_init__(self) -> None:
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim != 2:
            raise ValueError("coefficient table must be 2-d")

    @property
    def m_max(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def n_max(self) -> int:
        return self.coeffs.shape[1] - 1

    def reconstruct(self, grid: Grid) -> GridFunction:
        """Evaluate the series at the grid nodes."""
        basis_x = _cos_table(grid, self.n_max, axis="x", a=self.a)
        basis_y = _cos_table(grid, self.m_max, axis="y", a=self.b)
        vals = np.einsum("ni,mj,mn->ij", basis_x, basis_y, self.coeffs)
        return GridFunction(grid, vals)

    def l2_norm(self) -> float:
        """Parseval norm ``sqrt(sum F_mn^2 * e_mn)`` with the mode L2 masses."""
        return float(np.sqrt(np.sum(self.coeffs**2 * _mode_masses(self))))

    def laplacian_coeffs(self) -> np.ndarray:
        """Coefficients of the (negative-definite) Laplacian of the series."""
        lam = _lambda_table(self.a, self.b, self.m_max, self.n_max)
        return -lam * self.coeffs


def _cos_table(grid: Grid, k_max: int, axis: str, a: float) -> np.ndarray:
    if axis == "x":
        t = grid.hx * np.arange(grid.nx + 1)
    else:
        t = grid.hy * np.arange(grid.ny + 1)
    k = np.arange(k_max + 1)
    return np.cos(np.pi * np.outer(k, t) / a)


def _lambda_table(a: float, b: float, m_max: int, n_max: int) -> np.ndarray:
    n2 = (np.arange(n_max + 1) / a) ** 2
    m2 = (np.arange(m_max + 1) / b) ** 2
    return np.pi**2 * (n2[None, :] + m2[:, None])


def _mode_masses(exp: CosineExpansion) -> np.ndarray:
    """L2 mass ``e_mn = (a / c_n)(b / c_m)`` of each basis mode, ``c = 2`` off zero."""
    cn = np.where(np.arange(exp.n_max + 1) == 0, 1.0, 2.0)
    cm = np.where(np.arange(exp.m_max + 1) == 0, 1.0, 2.0)
    return (exp.a / cn)[None, :] * (exp.b / cm)[:, None]


def _trapezoid_weights(k: int, h: float) -> np.ndarray:
    w = np.full(k + 1, h)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def cosine_coeffs(
    f,
    a: float,
    b: float,
    m_max: int = 64,
    n_max: int = 64,
    *,
    grid: Grid | None = None,
    mean_rtol: float = 1e-8,
) -> CosineExpansion:
    """Cosine coefficients of a mean-zero function on ``(0, a) x (0, b)``.

    ``f`` is a :class:`GridFunction` (its own grid is used) or a callable
    sampled on ``grid`` (default ``4 * max(m_max, n_max)`` cells per axis).
    Node trapezoid quadrature is discretely orthogonal, so the expansion of a
    band-limited function is exact as long as ``m_max < ny`` and
    ``n_max < nx``.  Data with nonzero rectangle mean is rejected.
    """
    if isinstance(f, GridFunction):
        g = f.grid
        vals = f.values
    else:
        g = grid or Grid(RectDomain(a, b), max(4 * n_max, 64), max(4 * m_max, 64))
        vals = GridFunction.from_callable(g, f).values
    if abs(g.domain.a - a) > 1e-12 * a or abs(g.domain.b - b) > 1e-12 * b:
        raise ValueError("grid rectangle does not match the requested (a, b)")
    wx = _trapezoid_weights(g.nx, g.hx)
    wy = _trapezoid_weights(g.ny, g.hy)
    mean = float(wx @ vals @ wy) / (a * b)
    scale = float(np.max(np.abs(vals))) or 1.0
    if abs(mean) > mean_rtol * scale:
        raise NonZeroMeanError(f"rectangle mean {mean} is not zero (scale {scale})")
    bx = _cos_table(g, n_max, "x", a) * wx[None, :]
    by = _cos_table(g, m_max, "y", b) * wy[None, :]
    raw = np.einsum("ni,mj,ij->mn", bx, by, vals)
    cn = np.where(np.arange(n_max + 1) == 0, 1.0, 2.0)
    cm = np.where(np.arange(m_max + 1) == 0, 1.0, 2.0)
    coeffs = raw * (cn[None, :] * cm[:, None]) / (a * b)
    coeffs[0, 0] = 0.0
    return CosineExpansion(a, b, coeffs)


def solve_poisson_neumann_rect(
    f,
    a: float,
    b: float,
    m_max: int = 64,
    n_max: int = 64,
    *,
    grid: Grid | None = None,
) -> tuple[CosineExpansion, GridFunction]:
    """Series solution of ``laplace(u) = f`` with zero Neumann flux on the rectangle.

    ``u_mn = -f_mn / lambda_mn`` for ``m + n > 0`` and ``u_00 = 0`` (zero-mean
    normalization).  Returns the expansion and its node samples; the
    expansion's ``tail_bound`` sums ``|f_mn| / lambda_mn`` over the outermost
    coefficient band as a truncation-error proxy.
    """
    fexp = cosine_coeffs(f, a, b, m_max, n_max, grid=grid)
    out_grid = f.grid if isinstance(f, GridFunction) else (
        grid or Grid(RectDomain(a, b), max(4 * n_max, 64), max(4 * m_max, 64))
    )
    lam = _lambda_table(a, b, m_max, n_max)
    lam[0, 0] = np.inf
    ucoef = -fexp.coeffs / lam
    band = np.zeros_like(ucoef, dtype=bool)
    band[-1, :] = True
    band[:, -1] = True
    tail = float(np.sum(np.abs(fexp.coeffs[band]) / lam[band]))
    uexp = CosineExpansion(a, b, ucoef, tail_bound=tail)
    return uexp, uexp.reconstruct(out_grid)


def l2_bound_check(u: CosineExpansion, f: CosineExpansion) -> dict:
    """Norm-ratio check ``|u| <= (1/lambda_min) |f|`` and the eigenvalue-sum bound.

    Returns the measured Parseval ratio, the sharp mode-wise bound
    ``1/lambda_min``, and ``Lambda = sqrt(sum lambda_mn^-2)`` over the
    truncation (an upper bound for the ratio because every coefficient is
    bounded by the norm).  A zero datum returns ratio 0.
    """
    fn = f.l2_norm()
    un = u.l2_norm()
    lam = _lambda_table(f.a, f.b, f.m_max, f.n_max)
    lam[0, 0] = np.inf
    lam_min = float(np.min(lam))
    lam_sum = float(np.sqrt(np.sum(1.0 / lam**2)))
    ratio = 0.0 if fn == 0.0 else un / fn
    return {
        "ratio": ratio,
        "modewise_bound": 1.0 / lam_min,
        "lambda_bound": lam_sum,
        "modewise_ok": ratio <= 1.0 / lam_min * (1.0 + 1e-12),
        "lambda_ok": ratio <= lam_sum * (1.0 + 1e-12),
    }
