"""Command-line front end: JSON config in, CSV/JSON artifacts out.

Exit codes: 0 success, 1 configuration error, 2 negative solver verdict
(divergence/saturation or failed conditions), 3 ambiguous verdict
(iteration cap), 4 partial failure in a sweep.

Determinism contract: identical config + seed produce bit-identical
outputs, so no timestamps or machine data are ever written; every JSON
artifact embeds the fully resolved configuration (defaults included).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .extremal import lambda_star_bisect, stability_inequality_probe
from .mesh import OperatorSpec, assemble, build_domain
from .minimal import IterationCaps, l1_norm, minimal_solution
from .nonlinearity import SampleSpec, make_example, verify_conditions
from .spectral import ComposedOperator, H_of, lambda_star, stability_eigen, theta_star

__all__ = [
    "ConfigError",
    "ProblemConfig",
    "load_config",
    "cmd_solve",
    "cmd_trace",
    "cmd_spectral",
    "cmd_stability",
    "cmd_verify",
    "main",
]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_AMBIGUOUS = 3
EXIT_PARTIAL = 4


class ConfigError(ValueError):
    """Configuration rejected; the message names the offending field."""


_PARAM_DEFAULTS = {
    "lambda": None,
    "sigma_grid": None,
    "tol_lambda": 1e-4,
    "tol_solve": 1e-10,
    "tol_spectral": 1e-8,
    "kappa": 1.0,
    "trials": 100,
    "modes": 4,
    "profile_margin": 0.01,
    "saturate_threshold": 0.01,
    "profile_doublings": 12,
    "t_max": 20.0,
    "n_t": 250,
    "n_pairs": 1000,
}

_CAPS_DEFAULTS = {
    "ceiling": 1e8,
    "growth_window": 25,
    "growth_delta": 1e-3,
    "max_iter": 50000,
}


@dataclass(frozen=True)
class ProblemConfig:
    domain: object
    op_specs: tuple
    nlmap: object
    parameters: dict
    output: dict
    seed: int
    jobs: int
    resolved: dict


def _expect(cond, where, msg):
    if not cond:
        raise ConfigError(f"{where}: {msg}")


def _number(block, key, where, default=None, minimum=None, integer=False):
    val = block.get(key, default)
    _expect(val is not None, f"{where}.{key}", "required")
    _expect(isinstance(val, (int, float)) and not isinstance(val, bool),
            f"{where}.{key}", "must be a number")
    if integer:
        _expect(float(val).is_integer(), f"{where}.{key}", "must be an integer")
        val = int(val)
    if minimum is not None:
        _expect(val >= minimum, f"{where}.{key}", f"must be >= {minimum}")
    return val


def load_config(path, out_dir=None, tol_lambda=None, seed=0, jobs=1) -> ProblemConfig:
    """Parse and validate a JSON problem configuration.

    Command-line overrides (--out, --tol-lambda, --seed) are merged into
    the resolved configuration before anything is built, so the provenance
    block in every artifact reflects what actually ran.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror or e}")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}")
    _expect(isinstance(raw, dict), str(path), "top level must be an object")

    dom_block = raw.get("domain")
    _expect(isinstance(dom_block, dict), "domain", "required object")
    kind = dom_block.get("kind")
    _expect(kind in ("interval", "ball", "rectangle"), "domain.kind",
            "must be one of interval|ball|rectangle")
    resolution = _number(dom_block, "resolution", "domain", default=129,
                         minimum=3, integer=True)
    dimension = _number(dom_block, "dimension", "domain", default=3,
                        minimum=2, integer=True)
    width = _number(dom_block, "width", "domain", default=1.0, minimum=0.0)
    height = _number(dom_block, "height", "domain", default=1.0, minimum=0.0)
    try:
        domain = build_domain(kind, resolution, dimension=dimension,
                              width=width, height=height)
    except ValueError as e:
        raise ConfigError(f"domain: {e}")

    nl_block = raw.get("nonlinearity")
    _expect(isinstance(nl_block, dict), "nonlinearity", "required object")
    nl_resolved = dict(nl_block)
    nl_kind = nl_resolved.pop("kind", None)
    _expect(isinstance(nl_kind, str), "nonlinearity.kind", "required string")
    try:
        nlmap = make_example(nl_kind, nl_resolved)
    except (ValueError, TypeError, KeyError) as e:
        raise ConfigError(f"nonlinearity: {e}")
    m = nlmap.m

    ops_block = raw.get("operators", {})
    if isinstance(ops_block, dict):
        ops_block = [ops_block] * m
    _expect(isinstance(ops_block, list) and len(ops_block) == m, "operators",
            f"must be one coefficient object or a list of {m}")
    op_specs = []
    for i, entry in enumerate(ops_block):
        _expect(isinstance(entry, dict), f"operators[{i}]", "must be an object")
        a = _number(entry, "a", f"operators[{i}]", default=1.0)
        b = _number(entry, "b", f"operators[{i}]", default=0.0)
        c = _number(entry, "c", f"operators[{i}]", default=0.0)
        op_specs.append(OperatorSpec(a=a, b=b, c=c))
    ops_resolved = [{"a": s.a, "b": s.b, "c": s.c} for s in op_specs]

    par_block = raw.get("parameters", {})
    _expect(isinstance(par_block, dict), "parameters", "must be an object")
    params = dict(_PARAM_DEFAULTS)
    params["caps"] = dict(_CAPS_DEFAULTS)
    for key, val in par_block.items():
        if key == "caps":
            _expect(isinstance(val, dict), "parameters.caps", "must be an object")
            for ck, cv in val.items():
                _expect(ck in _CAPS_DEFAULTS, f"parameters.caps.{ck}", "unknown key")
                params["caps"][ck] = cv
        else:
            _expect(key in _PARAM_DEFAULTS, f"parameters.{key}", "unknown key")
            params[key] = val
    if tol_lambda is not None:
        params["tol_lambda"] = tol_lambda
    for key in ("tol_lambda", "tol_solve", "tol_spectral"):
        _expect(isinstance(params[key], (int, float)) and params[key] > 0,
                f"parameters.{key}", "must be a positive number")
    if params["lambda"] is not None:
        lam = params["lambda"]
        if isinstance(lam, (int, float)):
            lam = [lam]
        _expect(isinstance(lam, list) and len(lam) == m
                and all(isinstance(v, (int, float)) and v > 0 for v in lam),
                "parameters.lambda", f"must be {m} positive numbers")
        params["lambda"] = [float(v) for v in lam]
    if params["sigma_grid"] is None:
        params["sigma_grid"] = [[float(s)] * (m - 1)
                                for s in np.geomspace(1 / 16, 16, 5)] if m > 1 else []
    else:
        grid = params["sigma_grid"]
        _expect(isinstance(grid, list) and grid, "parameters.sigma_grid",
                "must be a nonempty list")
        rows = []
        for i, row in enumerate(grid):
            if isinstance(row, (int, float)):
                row = [row] * (m - 1)
            _expect(isinstance(row, list) and len(row) == m - 1
                    and all(isinstance(v, (int, float)) and v > 0 for v in row),
                    f"parameters.sigma_grid[{i}]",
                    f"must be {m - 1} positive numbers")
            rows.append([float(v) for v in row])
        params["sigma_grid"] = rows

    out_block = raw.get("output", {})
    _expect(isinstance(out_block, dict), "output", "must be an object")
    output = {"dir": out_block.get("dir", "."),
              "prefix": out_block.get("prefix", "ellstar")}
    if out_dir is not None:
        output["dir"] = str(out_dir)
    _expect(isinstance(output["dir"], str), "output.dir", "must be a string")
    _expect(isinstance(output["prefix"], str), "output.prefix", "must be a string")

    resolved = {
        "domain": {"kind": kind, "resolution": resolution, "dimension": dimension,
                   "width": width, "height": height},
        "operators": ops_resolved,
        "nonlinearity": {"kind": nl_kind, **nl_resolved},
        "parameters": params,
        "output": output,
        "seed": int(seed),
    }
    return ProblemConfig(domain=domain, op_specs=tuple(op_specs), nlmap=nlmap,
                         parameters=params, output=output, seed=int(seed),
                         jobs=max(1, int(jobs)), resolved=resolved)


def _operators(config, domain=None):
    dom = domain if domain is not None else config.domain
    try:
        return tuple(assemble(spec, dom) for spec in config.op_specs)
    except ValueError as e:
        raise ConfigError(f"operators: {e}")


def _caps(config):
    c = config.parameters["caps"]
    return IterationCaps(ceiling=float(c["ceiling"]),
                         growth_window=int(c["growth_window"]),
                         growth_delta=float(c["growth_delta"]),
                         max_iter=int(c["max_iter"]))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _write_json(path, record):
    path.write_text(json.dumps(_jsonable(record), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _fmt(v):
    return repr(float(v))


def _write_field_csv(path, domain, u):
    m = u.shape[0]
    coords = domain.coords
    two_d = coords.ndim == 2
    header = ("coord1,coord2," if two_d else "coord1,") \
        + ",".join(f"u{i + 1}" for i in range(m))
    lines = [header]
    for k in range(coords.shape[0]):
        cs = [_fmt(coords[k, 0]), _fmt(coords[k, 1])] if two_d else [_fmt(coords[k])]
        lines.append(",".join(cs + [_fmt(u[i, k]) for i in range(m)]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _outpaths(config):
    outdir = Path(config.output["dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    return outdir, config.output["prefix"]


def _resolve_lambda(config, lam_text):
    m = config.nlmap.m
    if lam_text is not None:
        try:
            vals = [float(v) for v in str(lam_text).split(",")]
        except ValueError:
            raise ConfigError(f"--lambda: cannot parse {lam_text!r}")
        _expect(len(vals) == m and all(v > 0 for v in vals), "--lambda",
                f"must be {m} positive comma-separated numbers")
        return np.asarray(vals)
    if config.parameters["lambda"] is not None:
        return np.asarray(config.parameters["lambda"])
    raise ConfigError("parameters.lambda: required (or pass --lambda)")


def cmd_solve(config: ProblemConfig, lam_text=None) -> int:
    """Minimal solve at one parameter tuple; profile CSV + outcome JSON."""
    Lam = _resolve_lambda(config, lam_text)
    Ls = _operators(config)
    out = minimal_solution(Ls, Lam, config.nlmap,
                           tol=config.parameters["tol_solve"], caps=_caps(config))
    outdir, prefix = _outpaths(config)
    record = {
        "config": config.resolved,
        "lambda": list(Lam),
        "status": out.status,
        "iterations": out.iterations,
        "sup_norm": float(out.sup_history[-1]),
        "residuals": None if out.residuals is None else list(out.residuals),
    }
    if out.status == "converged":
        record["l1_norm"] = l1_norm(out.solution, config.domain)
        _write_field_csv(outdir / f"{prefix}_profile.csv", config.domain,
                         out.solution)
    _write_json(outdir / f"{prefix}_solve.json", record)
    if out.status == "converged":
        return EXIT_OK
    if out.status == "iteration-cap":
        return EXIT_AMBIGUOUS
    return EXIT_DIVERGED


def _trace_one(config, sig):
    # each worker assembles its own operators: factorizations are not shared
    Ls = _operators(config)
    return lambda_star_bisect(Ls, config.nlmap, sig,
                              tol_lambda=config.parameters["tol_lambda"],
                              tol=config.parameters["tol_solve"],
                              caps=_caps(config))


def cmd_trace(config: ProblemConfig) -> int:
    """Sweep the sigma grid; threshold CSV plus a JSON manifest."""
    if config.nlmap.m < 2:
        raise ConfigError("nonlinearity: trace requires m >= 2")
    grid = config.parameters["sigma_grid"]
    rows = [None] * len(grid)
    errors = []
    with ThreadPoolExecutor(max_workers=config.jobs) as pool:
        futures = {pool.submit(_trace_one, config, sig): i
                   for i, sig in enumerate(grid)}
        for fut, i in futures.items():
            try:
                rows[i] = fut.result()
            except Exception as e:
                errors.append({"sigma": list(map(float, grid[i])), "error": str(e)})

    outdir, prefix = _outpaths(config)
    mm1 = config.nlmap.m - 1
    header = ",".join(f"sigma{j + 1}" for j in range(mm1)) \
        + ",lambda_star,lambda_lo,lambda_hi,eta1_near_star,l1_last"
    lines = [header]
    for s in rows:
        if s is None:
            continue
        l1_last = s.l1_history[-1, 1] if s.l1_history.size else float("nan")
        cells = [_fmt(v) for v in s.sigma]
        cells += [_fmt(s.lambda_star_est), _fmt(s.lambda_lo), _fmt(s.lambda_hi),
                  _fmt(s.eta1_near_star if s.eta1_near_star is not None
                       else float("nan")), _fmt(l1_last)]
        lines.append(",".join(cells))
    (outdir / f"{prefix}_trace.csv").write_text("\n".join(lines) + "\n",
                                                encoding="utf-8")
    manifest = {
        "config": config.resolved,
        "rows_written": sum(r is not None for r in rows),
        "errors": errors,
        "warnings": [list(s.warnings) for s in rows if s is not None],
        "spectral_bounds": [None if s is None else s.spectral_bound for s in rows],
    }
    _write_json(outdir / f"{prefix}_trace_manifest.json", manifest)
    return EXIT_OK if not errors else EXIT_PARTIAL


def cmd_spectral(config: ProblemConfig) -> int:
    """Power-iteration lambda_*, per-sigma theta_* with the identity residual."""
    Ls = _operators(config)
    dom = config.domain
    nlmap = config.nlmap
    rho_tab = np.broadcast_to(nlmap.rho(dom.interior_coords()),
                              (nlmap.m, dom.n_interior)).copy()
    op = ComposedOperator.build(Ls, rho_tab, nlmap.alpha)
    pair = lambda_star(op, tol=config.parameters["tol_spectral"])
    table = []
    for sig in config.parameters["sigma_grid"]:
        sig = np.asarray(sig, dtype=float)
        th = theta_star(sig, pair.lambda_star, nlmap.alpha)
        Lam = np.concatenate(([th], th * sig))
        table.append({
            "sigma": list(sig),
            "theta_star": th,
            "H_residual": abs(H_of(Lam, nlmap.alpha) - pair.lambda_star)
            / pair.lambda_star,
        })
    outdir, prefix = _outpaths(config)
    _write_json(outdir / f"{prefix}_spectral.json", {
        "config": config.resolved,
        "lambda_star": pair.lambda_star,
        "iterations": pair.iterations,
        "residual": pair.residual,
        "sigma_table": table,
    })
    return EXIT_OK


def cmd_stability(config: ProblemConfig, lam_text=None) -> int:
    """Minimal solve, then the linearized principal eigenvalue at it."""
    Lam = _resolve_lambda(config, lam_text)
    Ls = _operators(config)
    nlmap = config.nlmap
    out = minimal_solution(Ls, Lam, nlmap, tol=config.parameters["tol_solve"],
                           caps=_caps(config))
    outdir, prefix = _outpaths(config)
    record = {"config": config.resolved, "lambda": list(Lam),
              "status": out.status, "warnings": []}
    if out.status != "converged":
        _write_json(outdir / f"{prefix}_stability.json", record)
        return EXIT_AMBIGUOUS if out.status == "iteration-cap" else EXIT_DIVERGED

    res = stability_eigen(Ls, Lam, nlmap, out.solution,
                          tol=config.parameters["tol_spectral"])
    record["eta1"] = res.eta1
    record["eigen_residual"] = res.residual
    record["eigenfield_positive"] = res.positive
    quick = verify_conditions(nlmap, config.domain,
                              SampleSpec(n_t=50, n_pairs=50, seed=config.seed))
    if not quick.cond_D:
        record["warnings"].append(
            "condition (D) failed: Jacobian sparsity pattern is not irreducible")
    if not res.positive:
        record["warnings"].append(
            "eigenfield is not strictly positive on interior nodes")
    if nlmap.potential:
        probe = stability_inequality_probe(
            Ls, Lam, nlmap, out.solution, trials=int(config.parameters["trials"]),
            seed=config.seed, modes=int(config.parameters["modes"]))
        record["inequality_probe"] = {"max_gap": probe.max_gap,
                                      "violations": probe.violations,
                                      "trials": probe.trials}
    _write_json(outdir / f"{prefix}_stability.json", record)
    return EXIT_OK


def cmd_verify(config: ProblemConfig) -> int:
    """Run the finite condition checks; nonzero exit when any fails."""
    p = config.parameters
    report = verify_conditions(config.nlmap, config.domain,
                               SampleSpec(t_max=float(p["t_max"]),
                                          n_t=int(p["n_t"]),
                                          n_pairs=int(p["n_pairs"]),
                                          seed=config.seed))
    outdir, prefix = _outpaths(config)
    _write_json(outdir / f"{prefix}_verify.json", {
        "config": config.resolved,
        "conditions": {"A": report.cond_A, "B": report.cond_B,
                       "C": report.cond_C, "D": report.cond_D},
        "M_by_kappa": report.M_by_kappa,
        "samples": report.samples,
        "witness": report.witness,
    })
    return EXIT_OK if report.all_pass() else EXIT_DIVERGED


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ellstar",
        description="Minimal solutions, extremal thresholds, and spectral "
                    "hypersurfaces of coupled semilinear elliptic systems.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_lambda in (("solve", True), ("trace", False),
                               ("spectral", False), ("stability", True),
                               ("verify", False)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON problem configuration")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--jobs", type=int, default=1, help="worker pool size")
        p.add_argument("--seed", type=int, default=0,
                       help="seed for all randomized probes")
        p.add_argument("--tol-lambda", type=float, default=None,
                       help="relative bisection tolerance override")
        if needs_lambda:
            p.add_argument("--lambda", dest="lam", default=None,
                           help="parameter tuple v[,v...], one entry per component")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config, out_dir=args.out,
                             tol_lambda=args.tol_lambda, seed=args.seed,
                             jobs=args.jobs)
        if args.command == "solve":
            return cmd_solve(config, args.lam)
        if args.command == "trace":
            return cmd_trace(config)
        if args.command == "spectral":
            return cmd_spectral(config)
        if args.command == "stability":
            return cmd_stability(config, args.lam)
        return cmd_verify(config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
