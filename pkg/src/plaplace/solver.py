"""Discrete weak solutions of the weighted degenerate p-Laplacian Neumann problem.

The problem ``div(|sqrt(Q) grad u|^(p-2) Q grad u) = |f|^(p-2) f v`` with zero
conormal flux is discretized on the staggered grid of :mod:`plaplace.grid` and
solved by minimizing the convex energy

``J(u) = (1/p) int (|sqrt(Q) grad u|^2 + eps^2)^(p/2) dx + int |f|^(p-2) f u v dx``

over node functions with zero v-weighted mean.  Stationarity of ``J`` at
``eps = 0`` is exactly the discrete weak form tested against every mean-zero
nodal basis function, so the solver's convergence criterion *is* the reported
weak-form residual.  The quadratic regularization is required for ``p < 2``
(the p-Laplacian density is not differentiable at a vanishing gradient) and
optional above.

Minimization runs a projected Newton method with Armijo backtracking and a
projected-gradient fallback; iterates stay in the admissible subspace because
search directions are solved from a KKT system that also pins the checkerboard
null mode of the discrete gradient.  For ``p != 2`` the iteration is warm
started from the ``p = 2`` solution of the same data, where the energy Hessian
is safely nondegenerate.

The module also exposes the bilinear pairings behind the weak form (the
nonlinear operator and the data functional) plus sampled property checks:
monotonicity and hemicontinuity of the operator, the almost-coercivity
threshold, and the regularity chain tying the solution norms to the datum.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (
    Grid,
    GridFunction,
    GridMismatchError,
    VectorField,
    cell_average,
    cell_weight,
    checkerboard_mode,
    gradient,
    lp_norm,
)
from .matrix_weight import MatrixWeightField, lq_norm


class DegenerateProblemError(ValueError):
    """The weight ``v`` has no mass, so mean-zero projection is undefined."""


class ConfigError(ValueError):
    """Inconsistent solver configuration (e.g. ``eps = 0`` with ``p < 2``)."""


@dataclass
class SobolevPair:
    """A scalar/vector pair ``(u, g)``; ``g`` plays the role of ``grad u``.

    For degenerate matrix weights the vector part is genuinely independent
    data; pairs built from a function via :meth:`from_function` carry its
    discrete gradient.
    """

    u: GridFunction
    g: VectorField

    def __post_init__(self) -> None:
        if self.u.grid != self.g.grid:
            raise GridMismatchError("pair components live on different grids")

    @classmethod
    def from_function(cls, u: GridFunction) -> "SobolevPair":
        return cls(u, gradient(u))

    def h_norm(self, q_field: MatrixWeightField, v_like, p: float) -> float:
        """Sobolev pair norm ``|u|_{L^p(v)} + |g|_{L^p_Q}``."""
        return lp_norm(self.u, v_like, p) + lq_norm(self.g, q_field, p)


@dataclass
class SolverConfig:
    """Newton/line-search parameters; ``eps=None`` picks 0 for ``p >= 2`` and
    ``1e-6 * (1 + max|f|)`` below."""

    eps: float | None = None
    tol: float = 1e-9
    max_iter: int = 60
    armijo: float = 1e-4
    backtrack: float = 0.5
    min_step: float = 1e-14
    warm_start: bool = True
    seed: int = 0


@dataclass
class NeumannProblem:
    """Datum ``(grid, p, Q, v, f)`` of the discrete Neumann problem."""

    grid: Grid
    p: float
    q_field: MatrixWeightField
    v: object
    f: GridFunction

    def __post_init__(self) -> None:
        if not self.p > 1:
            raise ValueError(f"need p > 1, got {self.p}")
        if self.q_field.grid != self.grid or self.f.grid != self.grid:
            raise GridMismatchError("problem pieces live on different grids")
        self.v_cells = cell_weight(self.v, self.grid)
        if np.any(self.v_cells < 0):
            raise ValueError("weight v must be nonnegative")
        om = self.grid.cell_area
        self.v_mass = float(om * np.sum(self.v_cells))
        if self.v_mass <= 0:
            raise DegenerateProblemError("v has zero total mass on the grid")
        fc = cell_average(self.f)
        mag = np.abs(fc)
        self.s_cells = np.where(mag > 0, mag ** (self.p - 1.0) * np.sign(fc), 0.0) * self.v_cells
        self.s_total = float(om * np.sum(self.s_cells))
        # node vector representing the mean-zero constraint: c^t u = int u_c v dx
        self.c_node = _scatter(self.grid, None, None, om * self.v_cells)
        self.cb_node = checkerboard_mode(self.grid)
        self._denoms: np.ndarray | None = None

    def weighted_mean_values(self, values: np.ndarray) -> float:
        return float(np.sum(self.c_node * values) / self.v_mass)

    def test_denominators(self) -> np.ndarray:
        """Pair norms of the mean-zero-projected nodal basis functions."""
        if self._denoms is None:
            self._denoms = _basis_pair_norms(self)
        return self._denoms


# ---------------------------------------------------------------------------
# staggered-operator plumbing


@lru_cache(maxsize=32)
def _corner_ids(node_shape: tuple[int, int]) -> np.ndarray:
    nxp, nyp = node_shape
    ids = np.arange(nxp * nyp).reshape(nxp, nyp)
    corners = np.stack(
        [
            ids[:-1, :-1].ravel(),
            ids[1:, :-1].ravel(),
            ids[:-1, 1:].ravel(),
            ids[1:, 1:].ravel(),
        ],
        axis=1,
    )
    return corners


def _scatter(grid: Grid, sx, sy, s) -> np.ndarray:
    """Adjoint of (gradient, cell-average): ``Gx^t sx + Gy^t sy + A^t s`` on nodes."""
    out = np.zeros(grid.node_shape)
    if sx is not None:
        cx = sx / (2.0 * grid.hx)
        out[:-1, :-1] -= cx
        out[1:, :-1] += cx
        out[:-1, 1:] -= cx
        out[1:, 1:] += cx
    if sy is not None:
        cy = sy / (2.0 * grid.hy)
        out[:-1, :-1] -= cy
        out[:-1, 1:] += cy
        out[1:, :-1] -= cy
        out[1:, 1:] += cy
    if s is not None:
        sq = 0.25 * s
        out[:-1, :-1] += sq
        out[1:, :-1] += sq
        out[:-1, 1:] += sq
        out[1:, 1:] += sq
    return out


def _density(base: np.ndarray, expo: float) -> np.ndarray:
    """``base**expo`` with ``0**negative`` mapped to 0 (null gradient cells)."""
    if expo == 0.0:
        return np.ones_like(base)
    if expo > 0:
        return base**expo
    safe = np.where(base > 0, base, 1.0)
    return np.where(base > 0, safe**expo, 0.0)


# ---------------------------------------------------------------------------
# weak-form pairings


def apply_t(
    u_pair: SobolevPair,
    w_pair: SobolevPair,
    q_field: MatrixWeightField,
    p: float,
    eps: float = 0.0,
) -> float:
    """Nonlinear operator pairing ``int |sqrt(Q) g|^(p-2) h^t Q g dx``.

    ``g`` comes from ``u_pair``, ``h`` from ``w_pair``; for ``p < 2`` the
    density is the regularized ``(|sqrt(Q) g|^2 + eps^2)^((p-2)/2)``.
    """
    if u_pair.g.grid != w_pair.g.grid:
        raise GridMismatchError("pairs live on different grids")
    g = u_pair.g
    h = w_pair.g
    qf = q_field.quadratic_form(g)
    rho = _density(qf + eps * eps, (p - 2.0) / 2.0)
    qg = q_field.apply(g)
    dens = rho * (h.gx * qg.gx + h.gy * qg.gy)
    return float(g.grid.cell_area * np.sum(dens))


def apply_gamma(f: GridFunction, v_like, p: float, w_pair: SobolevPair) -> float:
    """Data functional ``-int |f|^(p-2) f w v dx`` (note the sign)."""
    if f.grid != w_pair.u.grid:
        raise GridMismatchError("datum and test pair live on different grids")
    vc = cell_weight(v_like, f.grid)
    fc = cell_average(f)
    mag = np.abs(fc)
    s = np.where(mag > 0, mag ** (p - 1.0) * np.sign(fc), 0.0)
    return float(-f.grid.cell_area * np.sum(s * cell_average(w_pair.u) * vc))


def energy(u: GridFunction, problem: NeumannProblem, eps: float = 0.0) -> float:
    """``J(u) = (1/p) int (|sqrt(Q) grad u|^2 + eps^2)^(p/2) + int |f|^(p-2) f u v``."""
    g = gradient(u)
    qf = problem.q_field.quadratic_form(g)
    p = problem.p
    om = problem.grid.cell_area
    bulk = np.sum((qf + eps * eps) ** (p / 2.0)) / p
    data = np.sum(problem.s_cells * cell_average(u))
    return float(om * (bulk + data))


def energy_gradient(u: GridFunction, problem: NeumannProblem, eps: float = 0.0) -> np.ndarray:
    """Nodal gradient of the discrete energy (the raw weak-form residues)."""
    g = gradient(u)
    q = problem.q_field
    qf = q.quadratic_form(g)
    rho = _density(qf + eps * eps, (problem.p - 2.0) / 2.0)
    qg = q.apply(g)
    om = problem.grid.cell_area
    return _scatter(problem.grid, om * rho * qg.gx, om * rho * qg.gy, om * problem.s_cells)


# ---------------------------------------------------------------------------
# residual of the weak form


def _basis_pair_norms(problem: NeumannProblem) -> np.ndarray:
    grid = problem.grid
    p = problem.p
    om = grid.cell_area
    q = problem.q_field
    i4hx2 = 1.0 / (4.0 * grid.hx**2)
    i4hy2 = 1.0 / (4.0 * grid.hy**2)
    ixy = 2.0 / (4.0 * grid.hx * grid.hy)
    qd_plus = np.maximum(q.q11 * i4hx2 + q.q22 * i4hy2 + q.q12 * ixy, 0.0)
    qd_minus = np.maximum(q.q11 * i4hx2 + q.q22 * i4hy2 - q.q12 * ixy, 0.0)
    dp = om * qd_plus ** (p / 2.0)
    dm = om * qd_minus ** (p / 2.0)
    grad_part = np.zeros(grid.node_shape)
    grad_part[:-1, :-1] += dp
    grad_part[1:, 1:] += dp
    grad_part[1:, :-1] += dm
    grad_part[:-1, 1:] += dm

    means = problem.c_node / problem.v_mass
    wv = om * problem.v_cells
    w4 = np.zeros(grid.node_shape)
    for sl in ((slice(None, -1),) * 2, (slice(1, None), slice(None, -1)),
               (slice(None, -1), slice(1, None)), (slice(1, None),) * 2):
        w4[sl] += wv
    near = np.zeros(grid.node_shape)
    for sl in ((slice(None, -1),) * 2, (slice(1, None), slice(None, -1)),
               (slice(None, -1), slice(1, None)), (slice(1, None),) * 2):
        near[sl] += wv * np.abs(0.25 - means[sl]) ** p
    u_part = near + (problem.v_mass - w4) * np.abs(means) ** p
    denoms = u_part ** (1.0 / p) + grad_part ** (1.0 / p)
    floor = 1e-14 * max(float(np.max(denoms)), 1e-300)
    return np.maximum(denoms, floor)


def _residual_field(
    problem: NeumannProblem, u_values: np.ndarray, g: VectorField, eps: float
) -> np.ndarray:
    """Weak-form defect ``<T(u,g), phi_k> - <Gamma, phi_k>`` per projected basis phi_k."""
    q = problem.q_field
    qf = q.quadratic_form(g)
    rho = _density(qf + eps * eps, (problem.p - 2.0) / 2.0)
    qg = q.apply(g)
    om = problem.grid.cell_area
    raw = _scatter(problem.grid, om * rho * qg.gx, om * rho * qg.gy, om * problem.s_cells)
    return raw - (problem.c_node / problem.v_mass) * problem.s_total


def residual(pair: SobolevPair, problem: NeumannProblem, eps: float = 0.0) -> float:
    """Max over mean-zero-projected nodal test functions of the normalized defect."""
    if pair.u.grid != problem.grid:
        raise GridMismatchError("pair and problem live on different grids")
    num = _residual_field(problem, pair.u.values, pair.g, eps)
    return float(np.max(np.abs(num) / problem.test_denominators()))


# ---------------------------------------------------------------------------
# Newton solve


def _assemble_hessian(problem: NeumannProblem, u_values: np.ndarray, eps: float) -> sp.csr_matrix:
    grid = problem.grid
    p = problem.p
    g = gradient(GridFunction(grid, u_values))
    q = problem.q_field
    qf = q.quadratic_form(g)
    base = qf + eps * eps
    rho = _density(base, (p - 2.0) / 2.0)
    kap = (p - 2.0) * _density(base, (p - 4.0) / 2.0)
    qg = q.apply(g)
    om = grid.cell_area
    bxx = om * (rho * q.q11 + kap * qg.gx**2)
    bxy = om * (rho * q.q12 + kap * qg.gx * qg.gy)
    byy = om * (rho * q.q22 + kap * qg.gy**2)
    sx = np.array([-1.0, 1.0, -1.0, 1.0]) / (2.0 * grid.hx)
    sy = np.array([-1.0, -1.0, 1.0, 1.0]) / (2.0 * grid.hy)
    corners = _corner_ids(grid.node_shape)
    ncell = corners.shape[0]
    rows = np.empty(16 * ncell, dtype=np.int64)
    cols = np.empty(16 * ncell, dtype=np.int64)
    vals = np.empty(16 * ncell)
    k = 0
    for a in range(4):
        for b in range(4):
            vals[k * ncell : (k + 1) * ncell] = (
                bxx.ravel() * sx[a] * sx[b]
                + bxy.ravel() * (sx[a] * sy[b] + sy[a] * sx[b])
                + byy.ravel() * sy[a] * sy[b]
            )
            rows[k * ncell : (k + 1) * ncell] = corners[:, a]
            cols[k * ncell : (k + 1) * ncell] = corners[:, b]
            k += 1
    n = grid.node_shape[0] * grid.node_shape[1]
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def _kkt_solve(h_mat: sp.csr_matrix, n_mat: np.ndarray, rhs: np.ndarray) -> np.ndarray | None:
    """Solve ``[[H + delta I, N], [N^t, 0]] [d; mu] = [rhs; 0]``, escalating the
    Tikhonov shift until the factorization yields a finite direction."""
    n = h_mat.shape[0]
    scale = float(np.max(np.abs(h_mat.data))) if h_mat.nnz else 0.0
    if scale <= 1e-250:
        return None
    full_rhs = np.concatenate([rhs, np.zeros(n_mat.shape[1])])
    for delta in (0.0, 1e-12 * scale, 1e-8 * scale, 1e-4 * scale):
        shifted = h_mat + delta * sp.eye(n, format="csr") if delta else h_mat
        kkt = sp.bmat(
            [[shifted, sp.csr_matrix(n_mat)], [sp.csr_matrix(n_mat.T), None]], format="csc"
        )
        try:
            with np.errstate(all="ignore"), warnings.catch_warnings():
                warnings.simplefilter("ignore")
                sol = spla.spsolve(kkt, full_rhs)
        except Exception:
            continue
        if np.all(np.isfinite(sol)):
            return sol[:n]
    return None


def _project_constraints(vec: np.ndarray, n_mat: np.ndarray) -> np.ndarray:
    coef = np.linalg.lstsq(n_mat, vec, rcond=None)[0]
    return vec - n_mat @ coef


@dataclass
class SolveReport:
    """Solution pair with convergence diagnostics and the regularity ratios."""

    problem: NeumannProblem
    pair: SobolevPair
    converged: bool
    iterations: int
    residual: float
    eps: float
    energy_history: list[float]
    norm_f: float
    norm_u: float
    norm_g: float
    ratio_hypoest: float
    ratio_a1: float
    flags: dict = field(default_factory=dict)

    def to_dict(self, include_arrays: bool = True) -> dict:
        out = {
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": self.residual,
            "eps": self.eps,
            "energy_trace": list(self.energy_history),
            "norm_f": self.norm_f,
            "norm_u": self.norm_u,
            "norm_g": self.norm_g,
            "ratio_hypoest": self.ratio_hypoest,
            "ratio_a1": self.ratio_a1,
            "flags": self.flags,
            "p": self.problem.p,
            "grid": {"nx": self.problem.grid.nx, "ny": self.problem.grid.ny},
        }
        if include_arrays:
            out["u"] = self.pair.u.values.tolist()
            out["g"] = {"x": self.pair.g.gx.tolist(), "y": self.pair.g.gy.tolist()}
        return out


def _resolve_eps(problem: NeumannProblem, config: SolverConfig) -> float:
    if config.eps is None:
        if problem.p < 2:
            return 1e-6 * (1.0 + float(np.max(np.abs(problem.f.values))))
        return 0.0
    if problem.p < 2 and config.eps <= 0:
        raise ConfigError("p < 2 requires a positive regularization eps")
    return float(config.eps)


def _newton_minimize(
    problem: NeumannProblem,
    config: SolverConfig,
    eps: float,
    u0: np.ndarray,
    energies: list[float],
) -> tuple[np.ndarray, float, int, bool, dict]:
    grid = problem.grid
    n_mat = np.stack([problem.c_node.ravel(), problem.cb_node.ravel()], axis=1)
    cb_nsq = float(np.sum(problem.cb_node**2))
    flags: dict = {}

    def reproject(vals: np.ndarray) -> np.ndarray:
        vals = vals - (np.sum(problem.cb_node * vals) / cb_nsq) * problem.cb_node
        return vals - problem.weighted_mean_values(vals)

    u = reproject(u0.copy())
    denoms = problem.test_denominators()
    j_curr = energy(GridFunction(grid, u), problem, eps)
    energies.append(j_curr)
    res = np.inf
    it = 0
    for it in range(1, config.max_iter + 1):
        grad = energy_gradient(GridFunction(grid, u), problem, eps)
        num = grad - (problem.c_node / problem.v_mass) * problem.s_total
        res = float(np.max(np.abs(num) / denoms))
        if res <= config.tol:
            return u, res, it - 1, True, flags
        h_mat = _assemble_hessian(problem, u, eps)
        d = _kkt_solve(h_mat, n_mat, -grad.ravel())
        gscale = float(np.sum(grad**2))
        use_fallback = d is None
        if not use_fallback:
            d = d.reshape(grid.node_shape)
            slope = float(np.sum(grad * d))
            use_fallback = not np.isfinite(slope) or slope >= -1e-16 * gscale
        if use_fallback:
            flags["gradient_fallback"] = flags.get("gradient_fallback", 0) + 1
            d = -_project_constraints(grad.ravel(), n_mat).reshape(grid.node_shape)
            dn = float(np.linalg.norm(d))
            if dn > 0:
                d *= (1.0 + float(np.linalg.norm(u))) / dn
            slope = float(np.sum(grad * d))
        alpha = 1.0
        accepted = False
        while alpha >= config.min_step:
            trial = u + alpha * d
            with np.errstate(over="ignore", invalid="ignore"):
                j_trial = energy(GridFunction(grid, trial), problem, eps)
            if np.isfinite(j_trial) and j_trial <= j_curr + config.armijo * alpha * slope:
                accepted = True
                break
            alpha *= config.backtrack
        if not accepted:
            flags["line_search_stalled"] = True
            return u, res, it, False, flags
        u = reproject(trial)
        j_curr = energy(GridFunction(grid, u), problem, eps)
        energies.append(j_curr)
    grad = energy_gradient(GridFunction(grid, u), problem, eps)
    num = grad - (problem.c_node / problem.v_mass) * problem.s_total
    res = float(np.max(np.abs(num) / denoms))
    return u, res, it, res <= config.tol, flags


def solve(problem: NeumannProblem, config: SolverConfig | None = None) -> SolveReport:
    """Minimize the energy over the mean-zero subspace and report the solution.

    The returned pair has zero v-weighted mean and satisfies the discrete weak
    form against every mean-zero-projected nodal basis function up to the
    reported residual.  Non-convergence is reported through ``converged`` and
    ``flags``, not raised.
    """
    config = config or SolverConfig()
    eps = _resolve_eps(problem, config)
    energies: list[float] = []
    flags: dict = {}
    lam1 = problem.q_field.lam1
    lam2 = problem.q_field.lam2
    degenerate = lam2 <= 1e-14 * np.maximum(lam1, 1.0)
    if np.any(degenerate):
        idx = np.argwhere(degenerate)[0]
        flags["degenerate_cells"] = int(np.count_nonzero(degenerate))
        flags["degeneracy_witness"] = [int(idx[0]), int(idx[1])]

    u0 = np.zeros(problem.grid.node_shape)
    if problem.p != 2.0 and config.warm_start:
        companion = NeumannProblem(problem.grid, 2.0, problem.q_field, problem.v, problem.f)
        u0, _, _, _, _ = _newton_minimize(
            companion, replace(config, max_iter=8), 0.0, u0, []
        )
        flags["warm_started"] = True

    u, res, iters, converged, newton_flags = _newton_minimize(
        problem, config, eps, u0, energies
    )
    flags.update(newton_flags)
    pair = SobolevPair.from_function(GridFunction(problem.grid, u))
    norm_f = lp_norm(problem.f, problem.v, problem.p)
    norm_u = lp_norm(pair.u, problem.v, problem.p)
    norm_g = lq_norm(pair.g, problem.q_field, problem.p)
    return SolveReport(
        problem=problem,
        pair=pair,
        converged=converged,
        iterations=iters,
        residual=res,
        eps=eps,
        energy_history=energies,
        norm_f=norm_f,
        norm_u=norm_u,
        norm_g=norm_g,
        ratio_hypoest=0.0 if norm_f == 0 else norm_u / norm_f,
        ratio_a1=0.0 if norm_f == 0 else (norm_u + norm_g) / norm_f,
        flags=flags,
    )


# ---------------------------------------------------------------------------
# sampled operator properties


def _random_field(grid: Grid, rng: np.random.Generator) -> VectorField:
    return VectorField(grid, rng.standard_normal(grid.cell_shape), rng.standard_normal(grid.cell_shape))


@dataclass
class MonotoneReport:
    p: float
    n_trials: int
    min_normalized: float
    min_cellwise: float
    max_identity_gap: float


def check_monotone(
    q_field: MatrixWeightField,
    p: float,
    n_trials: int = 1000,
    seed: int = 0,
    eps: float = 0.0,
) -> MonotoneReport:
    """Sampled monotonicity ``<T(u) - T(w), u - w> >= 0`` of the operator.

    Each trial also recomputes the pairing cell by cell from the raw vectors
    ``s = sqrt(Q) g`` and ``r = sqrt(Q) h`` (an independent route through the
    matrix square root) and records the worst per-cell value and the largest
    gap between the two routes, both normalized by ``(|g| + |h|)^p``.
    """
    grid = q_field.grid
    rng = np.random.default_rng(seed)
    zero = GridFunction.zeros(grid)
    sqrt_q = q_field.power(0.5)
    om = grid.cell_area
    min_norm = np.inf
    min_cell = np.inf
    max_gap = 0.0
    for _ in range(n_trials):
        g = _random_field(grid, rng)
        h = _random_field(grid, rng)
        diff = VectorField(grid, g.gx - h.gx, g.gy - h.gy)
        pair_diff = SobolevPair(zero, diff)
        inner = apply_t(SobolevPair(zero, g), pair_diff, q_field, p, eps) - apply_t(
            SobolevPair(zero, h), pair_diff, q_field, p, eps
        )
        s = sqrt_q.apply(g)
        r = sqrt_q.apply(h)
        smag2 = s.gx**2 + s.gy**2 + eps * eps
        rmag2 = r.gx**2 + r.gy**2 + eps * eps
        ss = _density(smag2, (p - 2.0) / 2.0)
        rr = _density(rmag2, (p - 2.0) / 2.0)
        cellwise = (ss * s.gx - rr * r.gx) * (s.gx - r.gx) + (ss * s.gy - rr * r.gy) * (
            s.gy - r.gy
        )
        scale = (lq_norm(g, q_field, p) + lq_norm(h, q_field, p)) ** p
        min_norm = min(min_norm, inner / scale)
        min_cell = min(min_cell, float(np.min(cellwise)) / scale)
        max_gap = max(max_gap, abs(inner - float(om * np.sum(cellwise))) / scale)
    return MonotoneReport(p, n_trials, float(min_norm), float(min_cell), float(max_gap))


@dataclass
class HemicontinuityReport:
    p: float
    offsets: list[float]
    moduli: list[float]
    bounds: list[float]
    within_bound: bool
    exponent_fit: float
    linear_defect: float | None


def check_hemicontinuous(
    u_pair: SobolevPair,
    w_pair: SobolevPair,
    q_field: MatrixWeightField,
    p: float,
    offsets: np.ndarray | None = None,
    eps: float = 0.0,
) -> HemicontinuityReport:
    """Sampled modulus of ``z -> <T(u + z w), w>`` around ``z = 0``.

    For ``p >= 2`` each modulus is compared against
    ``(p-1) |z| int |sqrt(Q) h|^2 (|r|^(p-2) + |s|^(p-2))``; for ``p < 2``
    against ``2^(2-p) |z|^(p-1) |h|_{L^p_Q}^p``; at ``p = 2`` the map is affine
    and the affine defect is reported.  The exponent of the modulus is fit by
    log-log regression over the sampled offsets.
    """
    if offsets is None:
        offsets = np.geomspace(1e-3, 1.0, 8)
    grid = q_field.grid
    g = u_pair.g
    h = w_pair.g
    om = grid.cell_area

    def phi(z: float) -> float:
        shifted = SobolevPair(u_pair.u, VectorField(grid, g.gx + z * h.gx, g.gy + z * h.gy))
        return apply_t(shifted, w_pair, q_field, p, eps)

    phi0 = phi(0.0)
    moduli = [abs(phi(z) - phi0) for z in offsets]
    qh = q_field.quadratic_form(h)
    bounds = []
    for z, mod in zip(offsets, moduli):
        if p >= 2:
            qz = q_field.quadratic_form(
                VectorField(grid, g.gx + z * h.gx, g.gy + z * h.gy)
            )
            q0 = q_field.quadratic_form(g)
            mix = qh * (
                _density(qz + eps * eps, (p - 2.0) / 2.0)
                + _density(q0 + eps * eps, (p - 2.0) / 2.0)
            )
            bounds.append((p - 1.0) * z * float(om * np.sum(mix)))
        else:
            bounds.append(2.0 ** (2.0 - p) * z ** (p - 1.0) * lq_norm(h, q_field, p) ** p)
    scale = max(max(moduli), 1e-300)
    within = all(m <= 2.0 * b + 1e-12 * scale for m, b in zip(moduli, bounds))
    pos = [(z, m) for z, m in zip(offsets, moduli) if m > 0]
    if len(pos) >= 2:
        zs = np.log([z for z, _ in pos])
        ms = np.log([m for _, m in pos])
        exponent = float(np.polyfit(zs, ms, 1)[0])
    else:
        exponent = float("nan")
    linear_defect = None
    if p == 2:
        t_hh = apply_t(w_pair, w_pair, q_field, 2.0)
        linear_defect = max(
            abs((phi(z) - phi0) - z * t_hh) for z in offsets
        ) / max(abs(t_hh), 1e-300)
    return HemicontinuityReport(
        p=p,
        offsets=[float(z) for z in offsets],
        moduli=moduli,
        bounds=bounds,
        within_bound=within,
        exponent_fit=exponent,
        linear_defect=linear_defect,
    )


def coercivity_threshold(f: GridFunction, v_like, p: float, c_p: float) -> float:
    """Almost-coercivity threshold ``max(1, (C_p^p + 1)^(1/(p-1)) |f|_{L^p(v)})``.

    ``c_p`` is the norm-level Poincare constant, i.e. the best ``C`` in
    ``|u|_{L^p(v)} <= C |g|_{L^p_Q}`` on the mean-zero subspace.
    """
    if c_p <= 0:
        raise ValueError(f"need a positive Poincare constant, got {c_p}")
    return max(1.0, (c_p**p + 1.0) ** (1.0 / (p - 1.0)) * lp_norm(f, v_like, p))


@dataclass
class RegularityCheck:
    norm_ratio: float
    full_ratio: float
    chain_defect: float
    chain_scale: float


def verify_regularity(report: SolveReport, f: GridFunction, v_like, p: float) -> RegularityCheck:
    """Norm ratios of a solve plus the defect of the solution-tested chain.

    The chain tests the weak form with the solution itself:
    ``|g|^p = |int |f|^(p-2) f u v| <= |f|^(p-1) |u|``, so on a converged solve
    ``chain_defect = max(0, |g|^p - |f|^(p-1) |u|)`` vanishes up to the
    residual scale.  The norm-level and pair-level ratios agree up to the
    additive ``|g|/|f|`` term, which is how the two regularity formulations
    imply one another.
    """
    norm_f = lp_norm(f, v_like, p)
    norm_u = lp_norm(report.pair.u, v_like, p)
    norm_g = lq_norm(report.pair.g, report.problem.q_field, p)
    if norm_f == 0:
        return RegularityCheck(0.0, 0.0, 0.0, 1.0)
    chain_scale = norm_f ** (p - 1.0) * norm_u
    defect = max(0.0, norm_g**p - chain_scale)
    return RegularityCheck(
        norm_ratio=norm_u / norm_f,
        full_ratio=(norm_u + norm_g) / norm_f,
        chain_defect=defect,
        chain_scale=max(chain_scale, norm_f**p),
    )
