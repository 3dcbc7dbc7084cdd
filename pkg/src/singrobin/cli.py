"""Command-line surface: check | subsolution | solve | verify | sweep.

All inputs come from a JSON config (see configs/ for annotated examples);
all outputs are JSON reports and CSV data written under --out.  Exit codes:
0 success, 1 numeric/convergence failure (reports still written where
possible), 2 malformed configuration with a diagnostic naming the JSON path.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
from pathlib import Path

import numpy as np

from . import operators, reactions
from .energy import build_subsolution
from .errors import ConfigError, RefusedInstance, SolverError
from .fem import build_mesh, norms, read_field_csv, write_field_csv
from .iteration import ProblemInstance, Tolerances, iterate_gamma, prepare
from .verification import uniqueness_multistart, verification_suite

__all__ = ["main", "load_config", "instance_from_config"]


def _get(cfg, path, expected=None, default=...):
    node = cfg
    walked = []
    for part in path.split("."):
        walked.append(part)
        if not isinstance(node, dict) or part not in node:
            if default is not ...:
                return default
            raise ConfigError("missing required entry", ".".join(walked))
        node = node[part]
    if expected is not None and not isinstance(node, expected):
        raise ConfigError(
            f"expected {getattr(expected, '__name__', expected)}, got {type(node).__name__}",
            path,
        )
    return node


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", str(path))
    if not isinstance(cfg, dict):
        raise ConfigError("top level must be a JSON object", str(path))
    return cfg


def instance_from_config(cfg, mesh_override=None):
    """Build a ProblemInstance from a config dict, reporting bad paths."""
    try:
        op = operators.OperatorSpec.from_dict(_get(cfg, "operator", dict))
    except ConfigError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc), "operator")
    try:
        reac = reactions.ReactionSpec.from_dict(_get(cfg, "reaction", dict))
    except ConfigError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc), "reaction")
    domain = _get(cfg, "domain", list, [0.0, 1.0])
    if len(domain) != 2:
        raise ConfigError("domain must be [x_l, x_r]", "domain")
    mesh_n = mesh_override if mesh_override else int(_get(cfg, "mesh_n", int, 200))
    tol_cfg = _get(cfg, "tolerances", dict, {})
    try:
        tols = Tolerances(
            inner=float(tol_cfg.get("inner", 1e-8)),
            outer=float(tol_cfg.get("outer", 1e-8)),
            positivity=float(tol_cfg.get("positivity", 1e-10)),
        )
        return ProblemInstance(
            operator=op,
            reaction=reac,
            beta=float(_get(cfg, "beta", (int, float), 1.0)),
            mesh=build_mesh(float(domain[0]), float(domain[1]), mesh_n),
            mode=_get(cfg, "mode", str, "robin"),
            tolerances=tols,
            max_outer=int(_get(cfg, "max_outer", int, 50)),
            s_level=float(_get(cfg, "s_level", (int, float), 1.0)),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc))


def _np_default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_np_default)
        fh.write("\n")


def _fmt(x):
    return format(float(x), ".17g")


def _write_history_csv(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "delta_c1", "energy", "w1p_norm", "residual"])
        for rec in history:
            w.writerow(
                [rec.step, _fmt(rec.delta_c1), _fmt(rec.energy), _fmt(rec.w1p_norm), _fmt(rec.residual)]
            )


def _cmd_check(args):
    cfg = load_config(args.config)
    instance = instance_from_config(cfg, args.mesh)
    hyp = operators.validate_operator(instance.operator, n_samples=10_000, seed=args.seed)
    prep = prepare(instance, seed=args.seed)
    payload = {
        "operator": {
            "ok": hyp.ok,
            "n_samples": hyp.n_samples,
            "monotonicity_violations": len(hyp.monotonicity_violations),
            "jacobian_bound_violations": len(hyp.jacobian_bound_violations),
            "ellipticity_violations": len(hyp.ellipticity_violations),
            "envelope": hyp.envelope,
        },
        "constants": {"c1": prep.c1, "c2": prep.c2, "c6": prep.c6},
        "growth": vars(prep.growth),
        "verdicts": prep.verdicts.to_dict(),
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "check.json", payload)
    return 0 if hyp.ok else 1


def _cmd_subsolution(args):
    cfg = load_config(args.config)
    instance = instance_from_config(cfg, args.mesh)
    u_lower, delta_used = build_subsolution(
        instance.operator, instance.reaction, instance.beta, instance.mesh, mode=instance.mode
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_field_csv(u_lower, out / "subsolution.csv")
    summary = {
        "delta_used": delta_used,
        "min": float(np.min(u_lower.values)),
        "sup": float(np.max(u_lower.values)),
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    _write_json(out / "subsolution.json", summary)
    return 0


def _cmd_solve(args):
    cfg = load_config(args.config)
    instance = instance_from_config(cfg, args.mesh)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        report = iterate_gamma(instance, override=args.override, seed=args.seed)
    except RefusedInstance as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 1
    write_field_csv(report.final, out / "solution.csv")
    _write_history_csv(out / "history.csv", report.history)
    _write_json(out / "report.json", report.to_dict())
    print(
        f"converged={report.converged} outer={report.outer_iterations} "
        f"residual={report.history[-1].residual:.3e} bounded={report.bounded_flag}"
    )
    return 0 if report.converged else 1


def _cmd_verify(args):
    cfg = load_config(args.config)
    instance = instance_from_config(cfg, args.mesh)
    solution_path = args.solution or Path(args.out) / "solution.csv"
    field = read_field_csv(solution_path)
    if field.mesh.n_nodes != instance.mesh.n_nodes:
        raise ConfigError(
            f"solution has {field.mesh.n_nodes} nodes, instance mesh has {instance.mesh.n_nodes}",
            "mesh_n",
        )
    records = verification_suite(field, instance)
    if args.starts >= 2 and instance.p == 2.0:
        spread = uniqueness_multistart(instance, args.starts, seed=args.seed)
        tol = 10.0 * instance.tolerances.outer
        records.append(
            {
                "name": "multistart_spread",
                "tolerance": tol,
                "observed": spread.max_pairwise_H1,
                # Collapse is only promised when the uniqueness budget holds;
                # otherwise the spread is informational.
                "pass": bool(
                    spread.max_pairwise_H1 <= tol or not spread.verdict.holds
                ),
            }
        )
    payload = {"checks": records, "all_pass": all(r["pass"] for r in records)}
    print(json.dumps(payload, indent=2, sort_keys=True))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "verification.json", payload)
    return 0 if payload["all_pass"] else 1


def _set_path(cfg, dotted, value):
    node = cfg
    parts = dotted.split(".")
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError("sweep path does not exist in base config", dotted)
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError("sweep path does not exist in base config", dotted)
    node[parts[-1]] = value


def _cmd_sweep(args):
    cfg = load_config(args.config)
    base = _get(cfg, "base", dict)
    grid = _get(cfg, "grid", dict)
    if not grid:
        raise ConfigError("sweep grid must not be empty", "grid")
    names = sorted(grid)
    for name in names:
        if not isinstance(grid[name], list) or not grid[name]:
            raise ConfigError("each grid entry must be a nonempty list", f"grid.{name}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    ok = True
    for combo in itertools.product(*(grid[n] for n in names)):
        point = json.loads(json.dumps(base))
        for name, value in zip(names, combo):
            _set_path(point, name, value)
        instance = instance_from_config(point, args.mesh)
        row = {name: value for name, value in zip(names, combo)}
        try:
            report = iterate_gamma(instance, override=args.override, seed=args.seed)
            row.update(
                converged=int(report.converged),
                outer_iters=report.outer_iterations,
                residual=report.history[-1].residual,
                min_u=float(np.min(report.final.values)),
                w1p=norms(report.final, instance.p, instance.beta).W1p,
            )
            ok = ok and report.converged
        except RefusedInstance:
            row.update(converged="refused", outer_iters=0, residual="", min_u="", w1p="")
        except SolverError as exc:
            row.update(converged=f"error:{type(exc).__name__}", outer_iters=0, residual="", min_u="", w1p="")
            ok = False
        rows.append(row)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["converged", "outer_iters", "residual", "min_u", "w1p"])
        for row in rows:
            w.writerow(
                [_fmt(row[n]) if isinstance(row[n], float) else row[n] for n in names]
                + [
                    row["converged"],
                    row["outer_iters"],
                    _fmt(row["residual"]) if isinstance(row["residual"], float) else row["residual"],
                    _fmt(row["min_u"]) if isinstance(row["min_u"], float) else row["min_u"],
                    _fmt(row["w1p"]) if isinstance(row["w1p"], float) else row["w1p"],
                ]
            )
    print(f"swept {len(rows)} instances -> {out / 'sweep.csv'}")
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="singrobin",
        description="Constructive solver for singular Robin problems with convection terms",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("check", _cmd_check),
        ("subsolution", _cmd_subsolution),
        ("solve", _cmd_solve),
        ("verify", _cmd_verify),
        ("sweep", _cmd_sweep),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=0, help="top-level RNG seed")
        p.add_argument("--mesh", type=int, default=None, help="override mesh_n")
        p.add_argument("--override", action="store_true", help="iterate despite failed conditions")
        p.add_argument("--starts", type=int, default=1, help="multi-start count where applicable")
        if name == "verify":
            p.add_argument("--solution", default=None, help="solution CSV (default <out>/solution.csv)")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
