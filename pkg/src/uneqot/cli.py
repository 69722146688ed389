"""Command-line interface: ``uneqot <command> [--config PATH] [flags]``.

Exit codes: 0 success, 2 hypothesis violation (outputs describing it are
still written), 1 numerical failure or malformed configuration (nothing is
written).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import congestion, core, hedonic, nested, reproduce
from .best_reply import generalized_nestedness_check, quantile_particles, solve_fixed_point
from .config import RunConfig, build_cost, build_domain, build_interaction, build_target, parse_config
from .exceptions import ConfigurationError, DivergenceError, HypothesisViolation, UneqOTError
from .io import SCHEMA_VERSION, csv_from_arrays, dumps, write_outputs

log = logging.getLogger("uneqot")

Outputs = Dict[str, str]


def _envelope(cfg: RunConfig, body: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": cfg.command, "config": cfg.as_dict(), **body}


# -- handlers --------------------------------------------------------------------------
# each returns (exit_code, files, console_text)

def _run_solve_nested(cfg: RunConfig) -> Tuple[int, Outputs, str]:
    p = cfg.problem
    mu = build_domain(p["domain"])
    cost = build_cost(p["cost"], mu.dim)
    nu = build_target(p["target"], cfg.grid)
    sol = nested.solve_nested(cost, mu, nu, n_samples=int(p["n_samples"]), seed=cfg.seed)
    kp = sol.kprofile
    files = {
        "kprofile.csv": csv_from_arrays({"y": kp.grid, "k": kp.k, "kprime": kp.kprime, "v": kp.v,
                                         "nu_density": sol.nu_density.values}),
        "summary.json": dumps(_envelope(cfg, {
            "nested": sol.nested, "witness": sol.witness, "min_margin": sol.min_margin,
            "ks_statistic": sol.ks_statistic, "ambiguous": sol.ambiguous,
            "csv_columns": ["y", "k", "kprime", "v", "nu_density"],
        })),
    }
    text = f"nested={sol.nested} witness={sol.witness} ks={sol.ks_statistic:.3g}"
    return (0 if sol.nested else 2), files, text


def _run_check_nestedness(cfg: RunConfig) -> Tuple[int, Outputs, str]:
    p = cfg.problem
    mu = build_domain(p["domain"])
    cost = build_cost(p["cost"], mu.dim)
    nu = build_target(p["target"], cfg.grid)
    kp = nested.solve_k_profile(cost, mu, nu)
    res = nested.check_nestedness(cost, mu, kp, nu, tol=cfg.tol)
    pairs = []
    for item in p["dmin_pairs"]:
        if len(item) != 3:
            raise ConfigurationError("problem.dmin_pairs entries must be [y0, y1, k0]")
        y0, y1, k0 = map(float, item)
        pairs.append({"y0": y0, "y1": y1, "k0": k0,
                      "dmin": nested.minimal_mass_difference(cost, mu, y0, y1, k0)})
    ys = np.linspace(*nu.interval, 9)
    dmin_max = 0.0
    for i in range(len(ys) - 1):
        kmin, kmax = core.k_range(cost, mu, float(ys[i]))
        k0s = np.linspace(kmin, kmax, 7)[1:-1]
        for j in range(i + 1, len(ys)):
            dmin_max = max(dmin_max, nested._dmin_sup(cost, mu, float(ys[i]), float(ys[j]), k0s))
    files = {
        "kprofile.csv": csv_from_arrays({"y": kp.grid, "k": kp.k, "kprime": kp.kprime, "v": kp.v,
                                         "nu_density": nu.values}),
        "nestedness.json": dumps(_envelope(cfg, {
            "nested": res.nested, "witness": res.witness, "min_margin": res.min_margin,
            "dmin_max_sampled": dmin_max, "dmin_pairs": pairs,
        })),
    }
    text = f"nested={res.nested} witness={res.witness} min_margin={res.min_margin:.3g} D^min(max sampled)={dmin_max:.3g}"
    return (0 if res.nested else 2), files, text


def _run_solve_congestion(cfg: RunConfig) -> Tuple[int, Outputs, str]:
    p = cfg.problem
    mu = build_domain(p["domain"])
    cost = build_cost(p["cost"], mu.dim)
    spec = congestion.CongestionSpec(p["f"], float(p["p"]), allow_nonconforming=bool(p["allow_nonconforming"]))
    interval = (float(p["y_lo"]), float(p["ybar"]))
    res = congestion.solve_congestion_bvp(cost, mu, spec, interval, grid=cfg.grid, tol=cfg.tol)
    bounds = congestion.density_bounds(cost, spec, interval, mu=mu)
    ys = res.density.grid
    thresholds = {}
    quarter = cost.family == "bilinear_arc" and mu.domain == "quarter_disk" and mu.values is None
    if quarter and spec.f_family == "entropy":
        thresholds["closed_form"] = congestion.entropy_threshold_closed_form()
        thresholds["refined"] = congestion.appendix_refined_threshold()
    files = {
        "congestion.csv": csv_from_arrays({"y": ys, "k": res.kprofile.k, "v": res.kprofile.v,
                                           "nu": res.density.values, "lower_bound": bounds.lower(ys),
                                           "upper_bound": bounds.upper(ys)}),
        "summary.json": dumps(_envelope(cfg, {
            "C": res.C, "residual": res.residual, "coarea_residual": res.coarea_residual, "mass": res.mass,
            "nested": res.nested, "witness": res.witness, "min_margin": res.min_margin,
            "clipped": res.clipped, "verified_threshold": res.verified_threshold, "thresholds": thresholds,
            "info": res.info,
        })),
    }
    text = f"C={res.C:.12g} mass={res.mass:.12g} nested={res.nested}"
    return (0 if res.nested else 2), files, text


def _run_best_reply(cfg: RunConfig) -> Tuple[int, Outputs, str]:
    p = cfg.problem
    src = build_domain(p["domain"])
    cost = build_cost(p["cost"], src.dim)
    spec = build_interaction(p)
    Y = tuple(float(v) for v in p["Y"])
    mu = quantile_particles(src, int(p["n_particles"]))
    try:
        nu, it = solve_fixed_point(cost, spec, mu, tol=cfg.tol, max_iter=int(p["max_iter"]), Y=Y, source=src)
    except DivergenceError as exc:
        body = {"error": str(exc), "log": exc.log.as_dict() if exc.log is not None else None}
        return 1, {"iteration_log.json": dumps(_envelope(cfg, body))}, f"diverged: {exc}"
    rep = generalized_nestedness_check(cost, spec, nu, mu, Y=Y, source=src)
    cols = {f"x{i + 1}": mu.points[:, i] for i in range(mu.dim)}
    cols.update({f"y{i + 1}": nu.points[:, i] for i in range(nu.dim)})
    cols["weight"] = nu.weights
    files = {
        "particles.csv": csv_from_arrays(cols),
        "iteration_log.json": dumps(_envelope(cfg, {
            **it.as_dict(), "mean": nu.mean().tolist(),
            "generalized_nested": rep.nested, "max_deviation": rep.max_deviation,
        })),
    }
    text = f"converged={it.converged} iterations={it.iterations} mean={nu.mean().tolist()} nested={rep.nested}"
    return (0 if it.converged else 1), files, text


def _run_hedonic(cfg: RunConfig) -> Tuple[int, Outputs, str]:
    p = cfg.problem
    sides = []
    for name in ("buyer", "seller"):
        mu = build_domain(p[name]["domain"])
        sides.append((build_cost(p[name]["cost"], mu.dim), mu))
    inst = hedonic.HedonicInstance(sides[0], sides[1], tuple(p["interval"]))
    sol = hedonic.solve_M(inst, grid=cfg.grid)
    chk = hedonic.hedonic_nestedness_check(inst, sol)
    bnd = hedonic.boundary_vanishing_check(inst, sol)
    margins = {}
    for side in (1, 2):
        m = hedonic.condition_margins(inst, sol, side)
        margins[f"side_{side}_max"] = float(np.nanmax(m)) if np.any(np.isfinite(m)) else None
    g = sol.support_grid
    files = {
        "hedonic.csv": csv_from_arrays({"y": g, "M": sol.M[sol.in_support], "k1": sol.k1.k, "k2": sol.k2.k,
                                        "nu": sol.nu.values[sol.in_support]}),
        "summary.json": dumps(_envelope(cfg, {
            "nested": chk.nested, "witness": chk.witness, "side_nested": list(chk.side_nested),
            "monotone": chk.monotone, "support": list(sol.support), "transitions": sol.transition_points,
            "residual": sol.residual, "potential_deviation": sol.potential_deviation(),
            "condition_margins": margins,
            "boundary": {"lo": bnd.lo, "hi": bnd.hi, "nu_lo": bnd.nu_lo, "nu_hi": bnd.nu_hi,
                         "precondition_lo": bnd.precondition_lo, "precondition_hi": bnd.precondition_hi},
        })),
    }
    text = f"support={sol.support} transitions={sol.transition_points} nested={chk.nested}"
    return (0 if chk.nested else 2), files, text


def _table(rows) -> str:
    width = max(len(r.quantity) for r in rows)
    lines = [f"{'check':<{width}}  {'obtained':>14}  result"]
    for r in rows:
        val = r.obtained
        val = f"{val:.6g}" if isinstance(val, (float, np.floating)) else str(val)
        lines.append(f"{r.quantity:<{width}}  {val:>14}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)


def _rows_json(cfg: RunConfig, rows) -> str:
    return dumps(_envelope(cfg, {"all_passed": all(r.passed for r in rows), "checks": [
        {"criterion": r.criterion, "quantity": r.quantity, "expected": r.expected, "obtained": r.obtained,
         "passed": r.passed} for r in rows]}))


def _run_oracle_validate(cfg: RunConfig) -> Tuple[int, Outputs, str]:
    p = cfg.problem
    rows = reproduce.oracle_validation_suite(cfg.seed, int(p["n_pairs"]), int(p["n_samples"]))
    ok = all(r.passed for r in rows)
    return (0 if ok else 1), {"oracle_validation.json": _rows_json(cfg, rows)}, _table(rows)


def _run_reproduce(cfg: RunConfig) -> Tuple[int, Outputs, str]:
    rows = reproduce.run_acceptance(cfg.problem["criteria"], seed=cfg.seed)
    ok = all(r.passed for r in rows)
    files = {"report.md": reproduce.render_markdown(rows), "acceptance.json": _rows_json(cfg, rows)}
    return (0 if ok else 1), files, _table(rows)


HANDLERS = {
    "solve-nested": _run_solve_nested,
    "check-nestedness": _run_check_nestedness,
    "solve-congestion": _run_solve_congestion,
    "best-reply": _run_best_reply,
    "hedonic": _run_hedonic,
    "oracle-validate": _run_oracle_validate,
    "reproduce-paper": _run_reproduce,
}


# -- argument parsing --------------------------------------------------------------------

def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=_u64, metavar="U64")
    common.add_argument("--grid", type=int, metavar="N")
    common.add_argument("--tol", type=float, metavar="F")
    common.add_argument("--threads", type=int, metavar="N",
                        help="BLAS/OpenMP thread cap; UNEQ_OT_THREADS overrides it")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="uneqot", description="Unequal-dimensional optimal transport solvers.")
    sub = parser.add_subparsers(dest="command", required=True)

    def source_flags(sp):
        sp.add_argument("--cost", help="cost family")
        sp.add_argument("--domain", help="source domain kind")

    for name in ("solve-nested", "check-nestedness"):
        sp = sub.add_parser(name, parents=[common])
        source_flags(sp)
        sp.add_argument("--target", choices=("uniform", "exponential"))
        sp.add_argument("--interval", nargs=2, type=float, metavar=("LO", "HI"))
        sp.add_argument("--rate", type=float)
        if name == "solve-nested":
            sp.add_argument("--n-samples", type=int)

    sp = sub.add_parser("solve-congestion", parents=[common])
    source_flags(sp)
    sp.add_argument("--f", choices=("entropy", "power"))
    sp.add_argument("--ybar", type=float)

    sp = sub.add_parser("best-reply", parents=[common])
    source_flags(sp)
    sp.add_argument("--V", choices=("quadratic", "polynomial", "none"))
    sp.add_argument("--W", choices=("quadratic_interaction", "none"))
    sp.add_argument("--n-particles", type=int)
    sp.add_argument("--max-iter", type=int)

    sp = sub.add_parser("hedonic", parents=[common])
    sp.add_argument("--buyer-cost")
    sp.add_argument("--seller-cost")
    sp.add_argument("--domains", nargs=2, metavar=("BUYER", "SELLER"))
    sp.add_argument("--interval", nargs=2, type=float, metavar=("LO", "HI"))

    sp = sub.add_parser("oracle-validate", parents=[common])
    sp.add_argument("--n-pairs", type=int)
    sp.add_argument("--n-samples", type=int)

    sp = sub.add_parser("reproduce-paper", parents=[common])
    sp.add_argument("--criteria", nargs="+", type=int)
    return parser


def _set(tree: dict, path: List[str], value) -> None:
    for key in path[:-1]:
        node = tree.get(key)
        if not isinstance(node, dict):
            node = {}
            tree[key] = node
        tree = node
    tree[path[-1]] = value


_FLAG_PATHS = {
    "cost": ["cost", "family"], "domain": ["domain", "kind"], "target": ["target", "kind"],
    "interval": None, "rate": ["target", "rate"], "n_samples": ["n_samples"], "f": ["f"], "ybar": ["ybar"],
    "V": ["V", "kind"], "W": ["W", "kind"], "n_particles": ["n_particles"], "max_iter": ["max_iter"],
    "buyer_cost": ["buyer", "cost", "family"], "seller_cost": ["seller", "cost", "family"],
    "n_pairs": ["n_pairs"], "criteria": ["criteria"],
}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge the YAML file (if any) with command-line overrides and validate."""
    if args.config:
        import yaml

        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"malformed YAML in {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigurationError("config must be a mapping at top level")
        if raw.get("command", args.command) != args.command:
            raise ConfigurationError(f"config is for {raw.get('command')!r}, not {args.command!r}")
    else:
        raw = {}
    raw["command"] = args.command
    for key in ("seed", "grid", "tol", "threads"):
        if getattr(args, key, None) is not None:
            raw[key] = getattr(args, key)
    if args.out is not None:
        raw["output_dir"] = args.out
    problem = raw.setdefault("problem", {}) or {}
    raw["problem"] = problem
    for flag, path in _FLAG_PATHS.items():
        value = getattr(args, flag, None)
        if value is None or path is None:
            continue
        _set(problem, path, value)
    if getattr(args, "interval", None) is not None:
        if args.command == "hedonic":
            problem["interval"] = list(args.interval)
        else:
            _set(problem, ["target", "interval"], list(args.interval))
    if getattr(args, "domains", None) is not None:
        _set(problem, ["buyer", "domain", "kind"], args.domains[0])
        _set(problem, ["seller", "domain", "kind"], args.domains[1])
    return parse_config(raw)


def _thread_limit(cfg: RunConfig) -> Optional[int]:
    env = os.environ.get("UNEQ_OT_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigurationError(f"UNEQ_OT_THREADS must be an integer, got {env!r}") from exc
        if n < 1:
            raise ConfigurationError("UNEQ_OT_THREADS must be positive")
        return n
    return cfg.threads


def run(cfg: RunConfig) -> int:
    """Execute one configured command and write its outputs atomically."""
    from threadpoolctl import threadpool_limits

    n_threads = _thread_limit(cfg)
    with threadpool_limits(limits=n_threads):
        code, files, text = HANDLERS[cfg.command](cfg)
    paths = write_outputs(cfg.output_dir, files)
    print(text)
    for pth in paths:
        print(f"wrote {pth}")
    return code


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return run(cfg)
    except HypothesisViolation as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return 2
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (UneqOTError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
