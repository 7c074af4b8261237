"""Descriptor grammars and TOML experiment/problem configuration.

Weight descriptors (no commas, so they can sit inside comma-separated matrix
descriptors):

* ``const:2.0`` or a bare number
* ``power:a=0.5`` with optional center keys ``cx=/cy=/cz=``, all ``:``-separated
* products joined with ``*``, e.g. ``power:a=0.5*const:2``

Matrix descriptors: ``identity``, ``diag:w1,w2``,
``scalar_elliptic:m,A11,A12,A22``.

Cosine data descriptors: ``cos:kx=1,ky=0`` with optional ``amp=``, summed with
``+``.

Problem/experiment files are TOML with sections ``[domain]``, ``[grid]``,
``[weights]``, ``[matrix]``, ``[data]``, ``[solver]``, ``[corpus]``,
``[harness]``, ``[outputs]``.  The parsed table is kept verbatim on the config
object so reports can echo it for reproducibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .grid import Grid, GridFunction, RectDomain
from .matrix_weight import MatrixWeightField
from .solver import NeumannProblem, SolverConfig
from .weights import Box, ScalarWeightField


class DescriptorError(ValueError):
    """A descriptor string does not match the grammar."""


def parse_weight(text: str, dim: int, domain: Box | None = None) -> ScalarWeightField:
    """Parse a scalar weight descriptor."""
    text = text.strip()
    if not text:
        raise DescriptorError("empty weight descriptor")
    out = ScalarWeightField.const(1.0, dim, domain)
    for factor in text.split("*"):
        factor = factor.strip()
        head, _, rest = factor.partition(":")
        if head == "const":
            try:
                out = out * ScalarWeightField.const(float(rest), dim)
            except ValueError as exc:
                raise DescriptorError(f"bad constant factor {factor!r}") from exc
        elif head == "power":
            exponent = None
            center = [0.0] * dim
            for item in rest.split(":"):
                key, _, val = item.partition("=")
                key = key.strip()
                if key == "a":
                    exponent = float(val)
                elif key in ("cx", "cy", "cz"):
                    axis = "xyz".index(key[1])
                    if axis >= dim:
                        raise DescriptorError(f"center key {key} beyond dimension {dim}")
                    center[axis] = float(val)
                else:
                    raise DescriptorError(f"unknown power key {key!r} in {factor!r}")
            if exponent is None:
                raise DescriptorError(f"power factor {factor!r} is missing a=")
            out = out * ScalarWeightField.power(exponent, dim, tuple(center))
        else:
            try:
                out = out * ScalarWeightField.const(float(factor), dim)
            except ValueError as exc:
                raise DescriptorError(f"unknown weight factor {factor!r}") from exc
    return ScalarWeightField(dim=out.dim, constant=out.constant, powers=out.powers, domain=domain)


def parse_matrix(text: str, grid: Grid) -> MatrixWeightField:
    """Parse a matrix weight descriptor onto a grid."""
    text = text.strip()
    if text == "identity":
        return MatrixWeightField.identity(grid)
    head, _, rest = text.partition(":")
    if head == "diag":
        parts = rest.split(",")
        if len(parts) != 2:
            raise DescriptorError(f"diag needs two weights, got {text!r}")
        w1 = parse_weight(parts[0], 2)
        w2 = parse_weight(parts[1], 2)
        return MatrixWeightField.diagonal(grid, w1, w2, descriptor=text)
    if head == "scalar_elliptic":
        parts = rest.split(",")
        if len(parts) != 4:
            raise DescriptorError(f"scalar_elliptic needs m,A11,A12,A22, got {text!r}")
        m = parse_weight(parts[0], 2)
        a11, a12, a22 = (float(p) for p in parts[1:])
        return MatrixWeightField.scalar_elliptic(
            grid, m, np.array([[a11, a12], [a12, a22]]), descriptor=text
        )
    raise DescriptorError(f"unknown matrix descriptor {text!r}")


def parse_cosine_data(text: str):
    """Parse ``cos:kx=..,ky=..[,amp=..]`` terms (joined by ``+``) into a callable.

    The wavenumbers count half-periods across the rectangle, matching the
    Neumann cosine basis, so the parsed function is mean-zero whenever every
    term has ``kx + ky > 0``.
    """
    terms = []
    for piece in text.split("+"):
        piece = piece.strip()
        head, _, rest = piece.partition(":")
        if head != "cos":
            raise DescriptorError(f"unknown data descriptor {piece!r}")
        kx = ky = 0
        amp = 1.0
        for item in rest.split(","):
            key, _, val = item.partition("=")
            key = key.strip()
            if key == "kx":
                kx = int(val)
            elif key == "ky":
                ky = int(val)
            elif key == "amp":
                amp = float(val)
            else:
                raise DescriptorError(f"unknown cosine key {key!r} in {piece!r}")
        if kx == 0 and ky == 0:
            raise DescriptorError("cosine data term must have kx + ky > 0")
        terms.append((kx, ky, amp))

    def fn(x, y, _terms=tuple(terms)):
        out = np.zeros_like(np.asarray(x, dtype=float))
        for kx, ky, amp in _terms:
            out = out + amp * np.cos(np.pi * kx * x) * np.cos(np.pi * ky * y)
        return out

    fn.terms = tuple(terms)
    return fn


# ---------------------------------------------------------------------------
# TOML configs


@dataclass
class ProblemSetup:
    """A fully built problem plus its solver settings and raw config echo."""

    problem: NeumannProblem
    solver: SolverConfig
    v_field: ScalarWeightField
    w_field: ScalarWeightField | None
    raw: dict


@dataclass
class ExperimentSetup:
    """Problem setup plus corpus and harness tolerances for equivalence runs."""

    base: ProblemSetup
    corpus_count: int
    corpus_seed: int
    corpus_max_mode: int
    identity_rtol: float
    ratio_slack: float
    defect_rtol: float
    max_fail_fraction: float
    out_dir: str
    raw: dict = field(default_factory=dict)


def _domain_from(table: dict) -> RectDomain:
    dom = table.get("domain", {})
    origin = dom.get("origin", [0.0, 0.0])
    return RectDomain(float(dom.get("a", 1.0)), float(dom.get("b", 1.0)), (float(origin[0]), float(origin[1])))


def _grid_from(table: dict, domain: RectDomain) -> Grid:
    g = table.get("grid", {})
    return Grid(domain, int(g.get("nx", 64)), int(g.get("ny", 64)))


def _shift_to_unit(domain: RectDomain):
    """Map grid coordinates to the (0,1)^2-normalized frame the data grammar uses."""
    ox, oy = domain.origin

    def wrap(fn):
        def shifted(x, y):
            return fn((x - ox) / domain.a, (y - oy) / domain.b)

        return shifted

    return wrap


def load_problem_setup(path: str | Path) -> ProblemSetup:
    raw = tomllib.loads(Path(path).read_text())
    return build_problem_setup(raw)


def build_problem_setup(raw: dict) -> ProblemSetup:
    domain = _domain_from(raw)
    grid = _grid_from(raw, domain)
    weights_tab = raw.get("weights", {})
    v_field = parse_weight(str(weights_tab.get("v", "const:1")), 2)
    w_text = weights_tab.get("w")
    w_field = parse_weight(str(w_text), 2) if w_text else None
    matrix_text = str(raw.get("matrix", {}).get("Q", "identity"))
    q_field = parse_matrix(matrix_text, grid)
    data_tab = raw.get("data", {})
    f_text = str(data_tab.get("f", "cos:kx=1,ky=0"))
    fn = _shift_to_unit(domain)(parse_cosine_data(f_text))
    f = GridFunction.from_callable(grid, fn)
    solver_tab = raw.get("solver", {})
    p = float(solver_tab.get("p", 2.0))
    eps = solver_tab.get("eps")
    config = SolverConfig(
        eps=None if eps is None else float(eps),
        tol=float(solver_tab.get("tol", 1e-9)),
        max_iter=int(solver_tab.get("max_iter", 60)),
        seed=int(solver_tab.get("seed", 0)),
    )
    problem = NeumannProblem(grid, p, q_field, v_field, f)
    return ProblemSetup(problem=problem, solver=config, v_field=v_field, w_field=w_field, raw=raw)


def load_experiment_setup(path: str | Path) -> ExperimentSetup:
    return build_experiment_setup(tomllib.loads(Path(path).read_text()))


def build_experiment_setup(raw: dict) -> ExperimentSetup:
    base = build_problem_setup(raw)
    corpus = raw.get("corpus", {})
    harness = raw.get("harness", {})
    outputs = raw.get("outputs", {})
    return ExperimentSetup(
        base=base,
        corpus_count=int(corpus.get("count", 12)),
        corpus_seed=int(corpus.get("seed", 7)),
        corpus_max_mode=int(corpus.get("max_mode", 0)),
        identity_rtol=float(harness.get("identity_rtol", 1e-6)),
        ratio_slack=float(harness.get("ratio_slack", 0.05)),
        defect_rtol=float(harness.get("defect_rtol", 1e-6)),
        max_fail_fraction=float(harness.get("max_fail_fraction", 0.05)),
        out_dir=str(outputs.get("dir", "results")),
        raw=raw,
    )
