"""Scalar weight fields and sampled auditors for Muckenhoupt-type conditions.

A weight is a product of a nonnegative constant and power factors
``|x - c|^a`` in dimension ``n in {1, 2, 3}``.  The auditors estimate, over a
finite sampled family of balls/boxes:

* the A_p constant ``sup_B avg_B(w) * avg_B(w^(1-p'))^(p-1)``,
* the doubling constant ``sup v(B(x, 2r)) / v(B(x, r))``,
* the two-weight balance constant: the best ``C`` in
  ``(r/s) (v(B1)/v(B2))^(1/q) <= C (w(B1)/w(B2))^(1/p)`` over nested pairs,
* and the conjunction of these plus a pointwise ``v >= w`` sweep
  (p-admissibility of the pair ``(w, v)``).

Averages use midpoint quadrature on an even subgrid (so lattice points avoid
power centers), with a graded dyadic refinement of the single subcell hosting
each power center.  Regions are clipped to the audit domain.  Quadrature depth
grows with the refinement level, so a non-integrable dual weight shows up as a
refinement trace that keeps growing; the report then flags divergence instead
of asserting a constant.

Families are enumerated deterministically and samplers are seeded, so audits
are reproducible and safe to evaluate concurrently per region.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

#: base midpoint resolution per axis, by dimension (kept even, see module doc)
_BASE_M = {1: 512, 2: 48, 3: 18}
#: graded refinement depth of singular subcells at refinement level k
def _graded_depth(level: int) -> int:
    return 8 + 6 * level


#: relative growth of the trace at the last level that flags divergence
DIVERGENCE_GROWTH = 0.10


class SingularWeightError(ValueError):
    """Evaluation at a power center with negative exponent."""


class NonIntegrableWeightError(ValueError):
    """A required weight (or its A_p dual) is not locally integrable."""


class ZeroMassError(ValueError):
    """A ball with zero weight mass appeared in a denominator."""


class NestingError(ValueError):
    """A balance pair violates ``B1 subset B2``."""


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d = pts - np.asarray(self.center)
        return np.einsum("ij,ij->i", d, d) <= self.radius**2

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius

    def to_dict(self) -> dict:
        return {"type": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.lo) != len(self.hi):
            raise ValueError("box corner dimensions differ")
        if not all(h > l for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"box must have positive extent, got {self.lo}..{self.hi}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)

    def to_dict(self) -> dict:
        return {"type": "box", "lo": list(self.lo), "hi": list(self.hi)}


Region = Ball | Box


# ---------------------------------------------------------------------------
# weight fields


@dataclass(frozen=True)
class PowerFactor:
    exponent: float
    center: tuple[float, ...]


@dataclass(frozen=True)
class ScalarWeightField:
    """Nonnegative weight ``const * prod_i |x - c_i|^(a_i)``."""

    dim: int
    constant: float = 1.0
    powers: tuple[PowerFactor, ...] = ()
    domain: Box | None = None

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if self.constant < 0:
            raise ValueError(f"constant factor must be nonnegative, got {self.constant}")
        for p in self.powers:
            if len(p.center) != self.dim:
                raise ValueError(f"power center {p.center} has wrong dimension")

    # construction -----------------------------------------------------------

    @classmethod
    def const(cls, c: float, dim: int, domain: Box | None = None) -> "ScalarWeightField":
        return cls(dim=dim, constant=float(c), domain=domain)

    @classmethod
    def power(
        cls,
        exponent: float,
        dim: int,
        center: tuple[float, ...] | None = None,
        domain: Box | None = None,
    ) -> "ScalarWeightField":
        ctr = tuple(0.0 for _ in range(dim)) if center is None else tuple(center)
        if exponent == 0.0:
            return cls(dim=dim, constant=1.0, domain=domain)
        return cls(
            dim=dim, powers=(PowerFactor(float(exponent), ctr),), domain=domain
        )

    def __mul__(self, other: "ScalarWeightField") -> "ScalarWeightField":
        if other.dim != self.dim:
            raise ValueError("cannot multiply weights of different dimensions")
        merged: dict[tuple[float, ...], float] = {}
        for p in self.powers + other.powers:
            merged[p.center] = merged.get(p.center, 0.0) + p.exponent
        powers = tuple(
            PowerFactor(a, c) for c, a in sorted(merged.items()) if a != 0.0
        )
        return ScalarWeightField(
            dim=self.dim,
            constant=self.constant * other.constant,
            powers=powers,
            domain=self.domain or other.domain,
        )

    def __pow__(self, t: float) -> "ScalarWeightField":
        powers = tuple(PowerFactor(p.exponent * t, p.center) for p in self.powers)
        return ScalarWeightField(
            dim=self.dim, constant=self.constant**t, powers=powers, domain=self.domain
        )

    # inspection --------------------------------------------------------------

    @property
    def descriptor(self) -> str:
        parts = []
        if self.constant != 1.0 or not self.powers:
            parts.append(f"const:{self.constant:g}")
        for p in self.powers:
            ctr = ":".join(f"c{ax}={v:g}" for ax, v in zip("xyz", p.center) if v != 0.0)
            parts.append(f"power:a={p.exponent:g}" + (":" + ctr if ctr else ""))
        return "*".join(parts)

    @property
    def is_locally_integrable(self) -> bool:
        """Power weight integrable iff every exponent exceeds ``-dim``."""
        return all(p.exponent > -self.dim for p in self.powers)

    def integrability_margin(self) -> float:
        """``min_i (a_i + dim)``; nonpositive means not locally integrable."""
        if not self.powers:
            return float("inf")
        return min(p.exponent + self.dim for p in self.powers)

    def singular_centers(self) -> list[tuple[float, ...]]:
        return [p.center for p in self.powers if p.exponent < 0]

    def power_centers(self) -> list[tuple[float, ...]]:
        return [p.center for p in self.powers]

    # evaluation ---------------------------------------------------------------

    def eval(self, points: np.ndarray, *, floor_dist: float = 0.0) -> np.ndarray:
        """Values at an ``(k, dim)`` point array.

        With ``floor_dist = 0`` an evaluation at a negative-exponent center
        raises :class:`SingularWeightError`; quadrature passes a tiny positive
        floor instead so offset subgrids never blow up.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ValueError(f"points have dimension {pts.shape[1]}, weight has {self.dim}")
        vals = np.full(pts.shape[0], self.constant)
        for p in self.powers:
            d = np.linalg.norm(pts - np.asarray(p.center), axis=1)
            if floor_dist > 0.0:
                d = np.maximum(d, floor_dist)
            elif p.exponent < 0 and np.any(d == 0.0):
                raise SingularWeightError(
                    f"evaluation at singular center {p.center} (exponent {p.exponent})"
                )
            vals = vals * d**p.exponent
        return vals


def eval_weight(w: ScalarWeightField, x) -> float:
    """Value of ``w`` at a single point (raises at negative-exponent centers)."""
    return float(w.eval(np.asarray(x, dtype=float).reshape(1, -1))[0])


# ---------------------------------------------------------------------------
# quadrature over regions


def _graded_points(
    lo: np.ndarray, hi: np.ndarray, center: np.ndarray, depth: int
) -> tuple[np.ndarray, np.ndarray]:
    """Midpoints/volumes of a dyadic refinement of a cell graded toward ``center``."""
    n = lo.size
    pts = []
    vols = []
    clo = lo.copy()
    chi = hi.copy()
    for _ in range(depth):
        mid = 0.5 * (clo + chi)
        host = center > mid
        for bits in itertools.product((0, 1), repeat=n):
            if tuple(bits) == tuple(host.astype(int)):
                continue
            b = np.asarray(bits, dtype=bool)
            sublo = np.where(b, mid, clo)
            subhi = np.where(b, chi, mid)
            pts.append(0.5 * (sublo + subhi))
            vols.append(np.prod(subhi - sublo))
        clo = np.where(host, mid, clo)
        chi = np.where(host, chi, mid)
    pts.append(0.5 * (clo + chi))
    vols.append(np.prod(chi - clo))
    return np.asarray(pts), np.asarray(vols)


def _region_quadrature(
    weights: list[ScalarWeightField],
    region: Region,
    domain: Box,
    m: int,
    depth: int,
) -> tuple[list[float], float]:
    """Integrals of several weights over ``region n domain`` plus its measure.

    All weights share one geometry (points, membership mask, graded cells), so
    ratios of the returned integrals are exactly scale-covariant.
    """
    n = domain.dim
    rlo, rhi = region.bbox()
    dlo, dhi = domain.bbox()
    lo = np.maximum(rlo, dlo)
    hi = np.minimum(rhi, dhi)
    if np.any(hi - lo <= 0):
        return [0.0] * len(weights), 0.0

    cellw = (hi - lo) / m
    axes = [lo[k] + cellw[k] * (np.arange(m) + 0.5) for k in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([ax.ravel() for ax in mesh])
    vol = float(np.prod(cellw))
    mask = region.contains(pts)
    inside = pts[mask]
    floor = 1e-9 * float(np.min(cellw))
    integrals = [float(np.sum(w.eval(inside, floor_dist=floor))) * vol for w in weights]
    measure = float(np.count_nonzero(mask)) * vol

    centers = {c for w in weights for c in w.power_centers()}
    graded_cells: set[tuple[int, ...]] = set()
    for c in centers:
        carr = np.asarray(c, dtype=float)
        if np.any(carr < lo) or np.any(carr > hi):
            continue
        # grade every subcell whose closure touches the center (a center on a
        # subgrid edge leaves a large midpoint defect in each touching cell)
        base = (carr - lo) / cellw
        axis_choices = []
        for k in range(n):
            cand = {int(np.floor(base[k] - 1e-9)), int(np.floor(base[k] + 1e-9))}
            axis_choices.append(sorted(min(max(i, 0), m - 1) for i in cand))
        for idx in itertools.product(*axis_choices):
            if idx in graded_cells:
                continue
            graded_cells.add(idx)
            clo = lo + np.asarray(idx) * cellw
            chi = clo + cellw
            mid = 0.5 * (clo + chi)
            if region.contains(mid[None, :])[0]:
                for k, w in enumerate(weights):
                    integrals[k] -= float(w.eval(mid[None, :], floor_dist=floor)[0]) * vol
                measure -= vol
            gpts, gvols = _graded_points(clo, chi, carr, depth)
            gmask = region.contains(gpts)
            gfloor = 1e-9 * float(np.min(cellw)) * 2.0 ** (-depth)
            for k, w in enumerate(weights):
                integrals[k] += float(
                    np.sum(w.eval(gpts[gmask], floor_dist=gfloor) * gvols[gmask])
                )
            measure += float(np.sum(gvols[gmask]))
    return integrals, measure


def region_mass(
    w: ScalarWeightField, region: Region, domain: Box, *, level: int = 2, m: int | None = None
) -> float:
    """Weight mass ``integral of w over region n domain`` (quadrature)."""
    mm = m if m is not None else _BASE_M[domain.dim]
    ints, _ = _region_quadrature([w], region, domain, mm, _graded_depth(level))
    return ints[0]


# ---------------------------------------------------------------------------
# reports


@dataclass
class WeightAuditReport:
    """Sampled-family audit: the estimate, its witness, and a refinement trace.

    ``trace[k]`` is the running maximum after auditing refinement level ``k``
    (quadrature depth grows with the level), hence nondecreasing; ``diverged``
    flags a trace still growing at the last level.
    """

    kind: str
    estimate: float
    witness: dict
    trace: list[float]
    sample_count: int
    diverged: bool
    config: dict
    extras: dict = field(default_factory=dict)
    sub_reports: dict | None = None
    verdict: bool | None = None

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "estimate": self.estimate,
            "witness": self.witness,
            "trace": list(self.trace),
            "sample_count": self.sample_count,
            "diverged": self.diverged,
            "config": self.config,
            "extras": self.extras,
        }
        if self.sub_reports is not None:
            out["sub_reports"] = {k: v.to_dict() for k, v in self.sub_reports.items()}
        if self.verdict is not None:
            out["verdict"] = self.verdict
        return out


def _finish_trace(per_level_max: list[float]) -> tuple[list[float], bool]:
    trace: list[float] = []
    best = -np.inf
    for v in per_level_max:
        best = max(best, v)
        trace.append(best)
    diverged = bool(np.isinf(trace[-1])) or (
        len(trace) >= 2
        and trace[-1] > 0
        and (trace[-1] - trace[-2]) > DIVERGENCE_GROWTH * trace[-1]
    )
    return trace, diverged


# ---------------------------------------------------------------------------
# families


def _budgeted_dyadic_boxes(domain: Box, level: int, centers, rng: np.random.Generator):
    """All dyadic cells at `level`, or (over budget) the cells near power centers
    plus a seeded sample."""
    n = domain.dim
    lo, hi = domain.bbox()
    splits = 2**level
    total = splits**n
    budget = 4096
    width = (hi - lo) / splits

    def cell_at(multi) -> Box:
        clo = lo + width * np.asarray(multi)
        return Box(tuple(clo), tuple(clo + width))

    if total <= budget:
        idx_iter = itertools.product(range(splits), repeat=n)
        return [cell_at(m) for m in idx_iter]
    chosen: set[tuple[int, ...]] = set()
    for c in centers:
        base = np.clip(((np.asarray(c) - lo) // width).astype(int), 0, splits - 1)
        for offs in itertools.product((-1, 0, 1), repeat=n):
            cand = base + np.asarray(offs)
            if np.all(cand >= 0) and np.all(cand < splits):
                chosen.add(tuple(int(v) for v in cand))
    while len(chosen) < budget // 4:
        cand = tuple(int(v) for v in rng.integers(0, splits, size=n))
        chosen.add(cand)
    return [cell_at(m) for m in sorted(chosen)]


def dyadic_family(
    domain: Box, levels: int, w: ScalarWeightField | None = None, seed: int = 0
) -> list[list[Region]]:
    """Dyadic boxes per level plus concentric balls at power centers.

    Level ``k`` contributes the ``2^k``-per-axis dyadic cells and, for each
    power center inside the domain, the two concentric balls of radii
    ``R * 2^-(2k)`` and ``R * 2^-(2k+1)`` (deeper balls at deeper levels, where
    power-weight extremizers concentrate).
    """
    rng = np.random.default_rng(seed)
    lo, hi = domain.bbox()
    rmax = 0.5 * float(np.min(hi - lo))
    centers = [] if w is None else [c for c in w.power_centers() if Box(tuple(lo), tuple(hi)).contains(np.asarray(c)[None, :])[0]]
    fam: list[list[Region]] = []
    for k in range(levels):
        regions: list[Region] = list(_budgeted_dyadic_boxes(domain, k, centers, rng))
        for c in centers:
            for j in (2 * k, 2 * k + 1):
                regions.append(Ball(tuple(c), rmax * 2.0 ** (-j)))
        fam.append(regions)
    return fam


def doubling_ball_family(
    domain: Box, levels: int, v: ScalarWeightField | None = None
) -> list[list[Ball]]:
    """Balls ``B(x, r)`` whose doubling ratio is audited against ``B(x, 2r)``.

    Level ``k`` uses a ``(k+2)``-per-axis interior lattice of centers with
    radius ``R * 2^-(k+1)`` plus, when ``v`` has power centers in the domain,
    concentric balls there.
    """
    lo, hi = domain.bbox()
    n = domain.dim
    rmax = 0.5 * float(np.min(hi - lo))
    centers = [] if v is None else [
        c for c in v.power_centers() if Box(tuple(lo), tuple(hi)).contains(np.asarray(c)[None, :])[0]
    ]
    fam: list[list[Ball]] = []
    for k in range(levels):
        r = rmax * 2.0 ** (-(k + 1))
        axes = [np.linspace(lo[d] + r, hi[d] - r, k + 2) for d in range(n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        lattice = np.column_stack([a.ravel() for a in mesh])
        regions = [Ball(tuple(float(v_) for v_ in x), r) for x in lattice]
        for c in centers:
            regions.append(Ball(tuple(c), r))
        fam.append(regions)
    return fam


def nested_pair_family(
    domain: Box,
    levels: int,
    n_pairs: int,
    seed: int,
    sweep_center: tuple[float, ...] | None = None,
) -> tuple[list[list[tuple[Ball, Ball]]], list[tuple[Ball, Ball]]]:
    """Seeded nested ball pairs, audited in full at every refinement level.

    Repeating the whole sample per level makes the refinement trace a pure
    quadrature-stability statement.  Returns ``(levels, sweep)`` where the
    sweep pairs ``B(c, R 2^-k) c B(c, R)`` probe the small-radius limit at
    ``sweep_center`` (default: domain center).
    """
    rng = np.random.default_rng(seed)
    lo, hi = domain.bbox()
    n = domain.dim
    ext = 0.5 * float(np.min(hi - lo))
    pairs = []
    for _ in range(n_pairs):
        s = ext * rng.uniform(0.15, 0.45)
        y = np.array([rng.uniform(lo[d] + s, hi[d] - s) for d in range(n)])
        r = s * rng.uniform(0.2, 0.95)
        direction = rng.normal(size=n)
        direction /= max(np.linalg.norm(direction), 1e-300)
        x = y + rng.uniform(0.0, s - r) * direction
        pairs.append((Ball(tuple(x), float(r)), Ball(tuple(y), float(s))))
    fam = [list(pairs) for _ in range(levels)]
    center = sweep_center if sweep_center is not None else tuple(0.5 * (lo + hi))
    outer = Ball(tuple(center), ext)
    sweep = [(Ball(tuple(center), ext * 2.0 ** (-k)), outer) for k in range(1, 2 * levels + 1)]
    return fam, sweep


# ---------------------------------------------------------------------------
# auditors


def _check_integrable(w: ScalarWeightField, what: str) -> None:
    # strictly worse than the borderline exponent is rejected; the borderline
    # itself is audited and reported through the divergence flag
    if w.integrability_margin() < -1e-12:
        raise NonIntegrableWeightError(f"{what} is not locally integrable ({w.descriptor})")


def ap_constant(
    w: ScalarWeightField,
    p: float,
    domain: Box,
    family: list[list[Region]] | None = None,
    *,
    levels: int = 5,
    m: int | None = None,
) -> WeightAuditReport:
    """Sampled Muckenhoupt constant ``sup_B avg_B(w) avg_B(w^(1-p'))^(p-1)``."""
    if p <= 1:
        raise ValueError(f"A_p needs p > 1, got {p}")
    _check_integrable(w, "weight")
    dual = w ** (1.0 - p / (p - 1.0))
    _check_integrable(dual, "dual weight w^(1-p')")
    fam = family if family is not None else dyadic_family(domain, levels, w)
    mm = m if m is not None else _BASE_M[domain.dim]
    best = -np.inf
    witness: Region | None = None
    per_level: list[float] = []
    count = 0
    for k, regions in enumerate(fam):
        depth = _graded_depth(k)
        level_best = -np.inf
        for region in regions:
            (iw, idual), meas = _region_quadrature([w, dual], region, domain, mm, depth)
            count += 1
            if meas <= 0:
                continue
            ratio = (iw / meas) * (idual / meas) ** (p - 1.0)
            if ratio > best:
                best, witness = ratio, region
            level_best = max(level_best, ratio)
        per_level.append(level_best)
    trace, diverged = _finish_trace(per_level)
    return WeightAuditReport(
        kind="ap",
        estimate=float(best),
        witness=witness.to_dict() if witness is not None else {},
        trace=trace,
        sample_count=count,
        diverged=diverged,
        config={
            "weight": w.descriptor,
            "p": p,
            "domain": domain.to_dict(),
            "levels": len(fam),
            "m": mm,
        },
    )


def doubling_constant(
    v: ScalarWeightField,
    domain: Box,
    family: list[list[Ball]] | None = None,
    *,
    levels: int = 4,
    m: int | None = None,
) -> WeightAuditReport:
    """Sampled doubling constant ``sup v(B(x, 2r)) / v(B(x, r))`` (balls clipped)."""
    _check_integrable(v, "weight")
    fam = family if family is not None else doubling_ball_family(domain, levels, v)
    mm = m if m is not None else _BASE_M[domain.dim]
    best = -np.inf
    witness: Ball | None = None
    per_level: list[float] = []
    count = 0
    for k, balls in enumerate(fam):
        depth = _graded_depth(k)
        level_best = -np.inf
        for ball in balls:
            (m1,), _ = _region_quadrature([v], ball, domain, mm, depth)
            (m2,), _ = _region_quadrature(
                [v], Ball(ball.center, 2.0 * ball.radius), domain, mm, depth
            )
            count += 1
            if m1 <= 0:
                raise ZeroMassError(f"v(B) = 0 for ball {ball.to_dict()}")
            ratio = m2 / m1
            if ratio > best:
                best, witness = ratio, ball
            level_best = max(level_best, ratio)
        per_level.append(level_best)
    trace, diverged = _finish_trace(per_level)
    return WeightAuditReport(
        kind="doubling",
        estimate=float(best),
        witness=witness.to_dict() if witness is not None else {},
        trace=trace,
        sample_count=count,
        diverged=diverged,
        config={
            "weight": v.descriptor,
            "domain": domain.to_dict(),
            "levels": len(fam),
            "m": mm,
        },
    )


def balance_check(
    w: ScalarWeightField,
    v: ScalarWeightField,
    p: float,
    q: float,
    domain: Box,
    pairs: list[list[tuple[Ball, Ball]]] | None = None,
    *,
    n_pairs: int = 500,
    seed: int = 7,
    levels: int = 4,
    m: int | None = None,
) -> WeightAuditReport:
    """Best sampled constant in the two-weight balance condition.

    For each nested pair ``B1 = B(x, r) c B2 = B(y, s)`` the audited ratio is
    ``(r/s) (v(B1)/v(B2))^(1/q) / (w(B1)/w(B2))^(1/p)``; the estimate is its
    maximum.  A concentric small-radius sweep is recorded in
    ``extras["sweep"]`` as ``(radius_ratio, ratio)`` rows with no pass/fail
    asserted.
    """
    _check_integrable(w, "w")
    _check_integrable(v, "v")
    sweep_center = None
    for c in w.power_centers() + v.power_centers():
        if domain.contains(np.asarray(c)[None, :])[0]:
            sweep_center = c
            break
    if pairs is None:
        fam, sweep_pairs = nested_pair_family(domain, levels, n_pairs, seed, sweep_center)
    else:
        fam, sweep_pairs = pairs, []
    mm = m if m is not None else _BASE_M[domain.dim]

    def pair_ratio(b1: Ball, b2: Ball, depth: int) -> float:
        gap = np.linalg.norm(np.asarray(b1.center) - np.asarray(b2.center)) + b1.radius
        if gap > b2.radius * (1.0 + 1e-9):
            raise NestingError(f"pair not nested: {b1.to_dict()} in {b2.to_dict()}")
        (w1, v1), _ = _region_quadrature([w, v], b1, domain, mm, depth)
        (w2, v2), _ = _region_quadrature([w, v], b2, domain, mm, depth)
        if w1 <= 0 or w2 <= 0 or v2 <= 0:
            raise ZeroMassError("zero mass in balance denominator")
        lhs = (b1.radius / b2.radius) * (v1 / v2) ** (1.0 / q)
        rhs = (w1 / w2) ** (1.0 / p)
        return lhs / rhs

    best = -np.inf
    witness: tuple[Ball, Ball] | None = None
    per_level: list[float] = []
    count = 0
    for k, level_pairs in enumerate(fam):
        depth = _graded_depth(k)
        level_best = -np.inf
        for b1, b2 in level_pairs:
            ratio = pair_ratio(b1, b2, depth)
            count += 1
            if ratio > best:
                best, witness = ratio, (b1, b2)
            level_best = max(level_best, ratio)
        per_level.append(level_best)
    trace, diverged = _finish_trace(per_level)
    sweep_rows = [
        [b1.radius / b2.radius, pair_ratio(b1, b2, _graded_depth(levels))]
        for b1, b2 in sweep_pairs
    ]
    return WeightAuditReport(
        kind="balance",
        estimate=float(best),
        witness={
            "inner": witness[0].to_dict() if witness else {},
            "outer": witness[1].to_dict() if witness else {},
        },
        trace=trace,
        sample_count=count,
        diverged=diverged,
        config={
            "w": w.descriptor,
            "v": v.descriptor,
            "p": p,
            "q": q,
            "domain": domain.to_dict(),
            "n_pairs": n_pairs,
            "seed": seed,
            "levels": len(fam),
            "m": mm,
        },
        extras={"sweep": sweep_rows},
    )


def admissible_pair_check(
    w: ScalarWeightField,
    v: ScalarWeightField,
    p: float,
    q: float,
    domain: Box,
    *,
    levels: int = 4,
    n_pairs: int = 200,
    seed: int = 7,
    pointwise_m: int | None = None,
) -> WeightAuditReport:
    """Conjunction audit for p-admissibility of ``(w, v)``.

    Checks, over sampled families: pointwise ``v >= w`` on a midpoint lattice,
    the A_p condition for ``w``, doubling for ``v``, and the balance condition.
    The verdict is the conjunction of the pointwise sweep and the finiteness
    (non-divergence) of the three estimates.
    """
    if not q > p:
        raise ValueError(f"admissibility needs q > p, got q={q}, p={p}")
    mm = pointwise_m if pointwise_m is not None else _BASE_M[domain.dim]
    lo, hi = domain.bbox()
    n = domain.dim
    cellw = (hi - lo) / mm
    axes = [lo[k] + cellw[k] * (np.arange(mm) + 0.5) for k in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([a.ravel() for a in mesh])
    floor = 1e-9 * float(np.min(cellw))
    wv = w.eval(pts, floor_dist=floor)
    vv = v.eval(pts, floor_dist=floor)
    gap = vv - wv
    worst = int(np.argmin(gap))
    pointwise_ok = bool(gap[worst] >= -1e-12 * max(1.0, float(wv[worst])))
    pointwise = WeightAuditReport(
        kind="pointwise",
        estimate=float(gap[worst]),
        witness={"point": [float(x) for x in pts[worst]], "w": float(wv[worst]), "v": float(vv[worst])},
        trace=[float(gap[worst])],
        sample_count=pts.shape[0],
        diverged=False,
        config={"m": mm},
        verdict=pointwise_ok,
    )
    ap = ap_constant(w, p, domain, levels=levels)
    doubling = doubling_constant(v, domain, levels=levels)
    balance = balance_check(
        w, v, p, q, domain, n_pairs=n_pairs, seed=seed, levels=levels
    )
    sub = {"pointwise": pointwise, "ap_w": ap, "doubling_v": doubling, "balance": balance}
    verdict = (
        pointwise_ok
        and not ap.diverged
        and np.isfinite(ap.estimate)
        and not doubling.diverged
        and np.isfinite(doubling.estimate)
        and not balance.diverged
        and np.isfinite(balance.estimate)
    )
    return WeightAuditReport(
        kind="admissible",
        estimate=balance.estimate,
        witness={"balance": balance.witness},
        trace=balance.trace,
        sample_count=sum(r.sample_count for r in sub.values()),
        diverged=any(r.diverged for r in sub.values()),
        config={
            "w": w.descriptor,
            "v": v.descriptor,
            "p": p,
            "q": q,
            "domain": domain.to_dict(),
        },
        sub_reports=sub,
        verdict=bool(verdict),
    )
