"""Command-line interface.

Subcommands::

    plaplace weights check-ap --weight "power:a=0.5" --p 2 --dim 1 --levels 5 --out report.json
    plaplace weights check-balance --w "power:a=0.5" --v "power:a=1.5" --p 2 --q 2.2 --pairs 500 --seed 7
    plaplace weights check-doubling --weight "const:1" --dim 2
    plaplace weights check-admissible --w ... --v ... --p 2 --q 2.2 --dim 3
    plaplace solve --config problem.toml --out report.json
    plaplace poincare --config problem.toml --method eigen --p 2 --out est.json
    plaplace oracle spectral --f "cos:kx=1,ky=0" --a 1 --b 1 --out oracle.json
    plaplace harness equivalence --config exp.toml --out results/

``harness equivalence`` exits 0 only when every asserted per-direction check
passes; the output directory can be overridden with the ``PLAPLACE_OUT``
environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfg
from . import harness
from .grid import Grid, RectDomain
from .poincare import poincare_from_neumann, poincare_p2_eigen, poincare_rayleigh_max
from .solver import solve
from .spectral import l2_bound_check, solve_poisson_neumann_rect
from .weights import (
    Box,
    admissible_pair_check,
    ap_constant,
    balance_check,
    doubling_constant,
)


def _write_json(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _default_domain(dim: int, bounds: list[float] | None) -> Box:
    if bounds is None:
        return Box(tuple(-1.0 for _ in range(dim)), tuple(1.0 for _ in range(dim)))
    if len(bounds) != 2 * dim:
        raise SystemExit(f"--domain needs {2 * dim} numbers (lo..., hi...)")
    return Box(tuple(bounds[:dim]), tuple(bounds[dim:]))


def _cmd_weights(args: argparse.Namespace) -> int:
    dim = args.dim
    domain = _default_domain(dim, args.domain)
    if args.weights_cmd == "check-ap":
        w = cfg.parse_weight(args.weight, dim, domain)
        report = ap_constant(w, args.p, domain, levels=args.levels)
    elif args.weights_cmd == "check-doubling":
        w = cfg.parse_weight(args.weight, dim, domain)
        report = doubling_constant(w, domain, levels=args.levels)
    elif args.weights_cmd == "check-balance":
        w = cfg.parse_weight(args.w, dim, domain)
        v = cfg.parse_weight(args.v, dim, domain)
        report = balance_check(
            w, v, args.p, args.q, domain, n_pairs=args.pairs, seed=args.seed, levels=args.levels
        )
    else:
        w = cfg.parse_weight(args.w, dim, domain)
        v = cfg.parse_weight(args.v, dim, domain)
        report = admissible_pair_check(
            w, v, args.p, args.q, domain, levels=args.levels, n_pairs=args.pairs, seed=args.seed
        )
    _write_json(report.to_dict(), args.out)
    return 0


def _cmd_solve(args: argparse.Namespace) -> int:
    setup = cfg.load_problem_setup(args.config)
    report = solve(setup.problem, setup.solver)
    payload = report.to_dict(include_arrays=not args.no_arrays)
    payload["config"] = setup.raw
    _write_json(payload, args.out)
    return 0 if report.converged else 1


def _cmd_poincare(args: argparse.Namespace) -> int:
    setup = cfg.load_problem_setup(args.config)
    problem = setup.problem
    p = args.p if args.p is not None else problem.p
    if args.method == "eigen":
        if p != 2.0:
            raise SystemExit("the eigen route is specific to p = 2")
        est = poincare_p2_eigen(problem.q_field, problem.v, problem.grid, seed=setup.solver.seed)
    elif args.method == "rayleigh":
        est = poincare_rayleigh_max(
            problem.q_field, problem.v, p, problem.grid, seed=setup.solver.seed
        )
    else:
        spec = harness.CorpusSpec(args.corpus, setup.solver.seed)
        corpus = harness.generate_corpus(spec, problem.grid, problem.v)
        from .solver import NeumannProblem

        reports = [
            solve(NeumannProblem(problem.grid, p, problem.q_field, problem.v, f), setup.solver)
            for f in corpus
        ]
        est = poincare_from_neumann(reports, p)
    payload = est.to_dict()
    payload["config"] = setup.raw
    _write_json(payload, args.out)
    return 0


def _cmd_oracle(args: argparse.Namespace) -> int:
    fn = cfg.parse_cosine_data(args.f)
    grid = Grid(RectDomain(args.a, args.b), args.nx, args.nx)
    fexp_modes = args.modes
    uexp, ugrid = solve_poisson_neumann_rect(
        lambda x, y: fn(x / args.a, y / args.b), args.a, args.b, fexp_modes, fexp_modes, grid=grid
    )
    from .spectral import cosine_coeffs

    fexp = cosine_coeffs(
        lambda x, y: fn(x / args.a, y / args.b), args.a, args.b, fexp_modes, fexp_modes, grid=grid
    )
    bound = l2_bound_check(uexp, fexp)
    nz = np.argwhere(np.abs(uexp.coeffs) > 1e-14)
    payload = {
        "a": args.a,
        "b": args.b,
        "f": args.f,
        "modes": fexp_modes,
        "tail_bound": uexp.tail_bound,
        "l2_check": bound,
        "active_modes": [
            {"m": int(m), "n": int(n), "coeff": float(uexp.coeffs[m, n])} for m, n in nz
        ],
        "u": ugrid.values.tolist() if args.arrays else None,
    }
    _write_json(payload, args.out)
    return 0


def _cmd_harness(args: argparse.Namespace) -> int:
    setup = cfg.load_experiment_setup(args.config)
    out_dir = os.environ.get("PLAPLACE_OUT", args.out or setup.out_dir)
    report = harness.run_equivalence(setup)
    paths = harness.emit_report(report, out_dir)
    summary = {
        "ok": report.ok,
        "direction_a": report.direction_a.summary,
        "direction_b": report.direction_b.summary,
        "consistency_factor": report.consistency_factor,
        "outputs": paths,
    }
    sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0 if report.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plaplace", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="cmd", required=True)

    w = sub.add_parser("weights", help="weight condition auditors")
    wsub = w.add_subparsers(dest="weights_cmd", required=True)
    for name in ("check-ap", "check-doubling"):
        p_ = wsub.add_parser(name)
        p_.add_argument("--weight", required=True)
        p_.add_argument("--p", type=float, default=2.0)
        p_.add_argument("--dim", type=int, default=1)
        p_.add_argument("--levels", type=int, default=5 if name == "check-ap" else 4)
        p_.add_argument("--domain", type=float, nargs="*", default=None)
        p_.add_argument("--out", default=None)
        p_.set_defaults(func=_cmd_weights)
    for name in ("check-balance", "check-admissible"):
        p_ = wsub.add_parser(name)
        p_.add_argument("--w", required=True)
        p_.add_argument("--v", required=True)
        p_.add_argument("--p", type=float, default=2.0)
        p_.add_argument("--q", type=float, required=True)
        p_.add_argument("--dim", type=int, default=3)
        p_.add_argument("--pairs", type=int, default=500)
        p_.add_argument("--seed", type=int, default=7)
        p_.add_argument("--levels", type=int, default=4)
        p_.add_argument("--domain", type=float, nargs="*", default=None)
        p_.add_argument("--out", default=None)
        p_.set_defaults(func=_cmd_weights)

    s = sub.add_parser("solve", help="solve a Neumann problem from a TOML config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None)
    s.add_argument("--no-arrays", action="store_true")
    s.set_defaults(func=_cmd_solve)

    pc = sub.add_parser("poincare", help="estimate the Poincare constant")
    pc.add_argument("--config", required=True)
    pc.add_argument("--method", choices=("eigen", "rayleigh", "neumann"), default="eigen")
    pc.add_argument("--p", type=float, default=None)
    pc.add_argument("--corpus", type=int, default=12)
    pc.add_argument("--out", default=None)
    pc.set_defaults(func=_cmd_poincare)

    orc = sub.add_parser("oracle", help="closed-form oracles")
    osub = orc.add_subparsers(dest="oracle_cmd", required=True)
    spec = osub.add_parser("spectral")
    spec.add_argument("--f", required=True)
    spec.add_argument("--a", type=float, default=1.0)
    spec.add_argument("--b", type=float, default=1.0)
    spec.add_argument("--modes", type=int, default=64)
    spec.add_argument("--nx", type=int, default=128)
    spec.add_argument("--arrays", action="store_true")
    spec.add_argument("--out", default=None)
    spec.set_defaults(func=_cmd_oracle)

    h = sub.add_parser("harness", help="experiment orchestration")
    hsub = h.add_subparsers(dest="harness_cmd", required=True)
    eq = hsub.add_parser("equivalence")
    eq.add_argument("--config", required=True)
    eq.add_argument("--out", default=None)
    eq.set_defaults(func=_cmd_harness)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
