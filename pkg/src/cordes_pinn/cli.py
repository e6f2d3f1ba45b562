"""Benchmark harness command line.

Verbs:
  run <config.toml>        train per the config (mode=both pairs cordes/plain)
  list-problems            print the registry
  check-cordes <problem>   sampled Cordes verification, JSON to stdout/file
  fd-ref <problem> --n N   finite-difference reference field to CSV
  landscape <config.toml>  loss-landscape probe around trained parameters

Exit codes: 0 success, 2 configuration error, 3 numerical failure. The output
root can be overridden with CORDES_PINN_OUT_ROOT.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import io as out_io
from .autodiff import NetworkArch, eval_values, init_network
from .cordes import check_cordes
from .exceptions import ConfigError, CordesPinnError, RegistryError
from .fdref import fd_reference_solve
from .nonlinear import OuterConfig, solve_nonlinear
from .problems import eval_grid, get_problem, list_problems, sample_interior
from .problems.domains import Ball, Ellipsoid, Rectangle, hypercube
from .problems.expressions import compile_expression, compile_matrix
from .problems.registry import ExactSolution, ProblemSpec
from .training import LossConfig, landscape_probe, prepare_system, system_losses, train
from .training.loop import errors_l2_linf
from .transport import pushforward_check, solve_transport, transport_map

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


@dataclass
class RunConfig:
    problem: str
    mode: str = "cordes"  # cordes | plain | both
    epochs: int = 20_000
    seed: int = 0
    eval_every: int = 500
    out_dir: str = "runs/out"
    grid_resolution: int = 200
    hidden: tuple[int, ...] = (32, 32)
    lr: float = 3e-4
    loss: LossConfig = field(default_factory=LossConfig)
    outer: OuterConfig | None = None
    landscape: dict | None = None
    custom_spec: object | None = None
    dump_field: bool = True

    def resolve_spec(self):
        if self.custom_spec is not None:
            return self.custom_spec
        return get_problem(self.problem)

    def resolved_out_dir(self) -> Path:
        root = os.environ.get("CORDES_PINN_OUT_ROOT")
        path = Path(self.out_dir)
        if root and not path.is_absolute():
            path = Path(root) / path
        return path


def _domain_from_table(table: dict):
    kind = table.get("kind")
    if kind == "rectangle":
        return Rectangle(tuple(table["lo"]), tuple(table["hi"]))
    if kind == "hypercube":
        return hypercube(int(table["dim"]), float(table["lo"]), float(table["hi"]))
    if kind == "ball":
        return Ball(tuple(table["center"]), float(table["radius"]))
    if kind == "ellipsoid":
        return Ellipsoid(tuple(table["semi_axes"]))
    raise ConfigError(f"[problem.domain] unknown kind {kind!r}")


def _custom_spec_from_table(table: dict) -> ProblemSpec:
    try:
        domain = _domain_from_table(table["domain"])
        d = domain.dim
        a_field = compile_matrix(table["A"], d)
        b_field = None
        if "b" in table:
            comps = [compile_expression(expr, d) for expr in table["b"]]
            if len(comps) != d:
                raise ConfigError("[problem] drift b must have one expression per axis")

            def b_field(points, comps=comps):
                return np.stack([fn(points) for fn in comps], axis=1)

        c_field = None
        if "c" in table:
            c_expr = compile_expression(str(table["c"]), d)
            c_field = c_expr
        f_field = compile_expression(table["f"], d)
        g_field = compile_expression(table.get("g", "0"), d)
        exact = None
        if "exact" in table:
            exact_value = compile_expression(table["exact"], d)
            exact = ExactSolution(value=exact_value, grad=None, hess=None)
        return ProblemSpec(
            name=table.get("name", "custom"),
            domain=domain,
            a_field=a_field,
            b_field=b_field,
            c_field=c_field,
            f_field=f_field,
            g_field=g_field,
            exact=exact,
            singular_sets=tuple(table.get("singular_sets", ())),
        )
    except KeyError as err:
        raise ConfigError(f"[problem] missing required field {err.args[0]!r}") from err


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}")

    run = data.get("run", {})
    if "problem" not in run and "problem" not in data:
        raise ConfigError(f"{path}: [run] section must name a problem")
    loss_table = data.get("loss", {})
    try:
        loss = LossConfig(**loss_table)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{path}: [loss] {err}")
    arch_table = data.get("arch", {})
    outer = None
    if "outer" in data:
        try:
            outer = OuterConfig(**data["outer"])
        except (TypeError, ValueError) as err:
            raise ConfigError(f"{path}: [outer] {err}")
    custom = None
    if "problem" in data:
        custom = _custom_spec_from_table(data["problem"])
    optimizer = data.get("optimizer", {})
    try:
        return RunConfig(
            problem=run.get("problem", custom.name if custom else ""),
            mode=run.get("mode", "cordes"),
            epochs=int(run.get("epochs", 20_000)),
            seed=int(run.get("seed", 0)),
            eval_every=int(run.get("eval_every", 500)),
            out_dir=run.get("out_dir", "runs/out"),
            grid_resolution=int(run.get("grid_resolution", 200)),
            hidden=tuple(int(w) for w in arch_table.get("hidden", (32, 32))),
            lr=float(optimizer.get("lr", 3e-4)),
            loss=loss,
            outer=outer,
            landscape=data.get("landscape"),
            custom_spec=custom,
            dump_field=bool(run.get("dump_field", True)),
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{path}: [run] {err}")


def _final_metrics(arch, theta, spec, resolution):
    if spec.exact is None or getattr(spec.exact, "value", None) is None:
        return None, None, None, None
    grid = eval_grid(spec.domain, resolution)
    exact_vals = spec.exact.value(grid)
    predicted = eval_values(arch, theta, grid)
    l2, linf = errors_l2_linf(predicted, exact_vals, grid)
    return l2, linf, grid, (exact_vals, predicted)


def _run_linear_mode(spec, config: RunConfig, mode: str, out_dir: Path) -> dict:
    arch = NetworkArch(spec.dim, config.hidden)
    cfg = LossConfig(**{**config.loss.to_dict(), "mode": mode})
    start = time.perf_counter()
    result = train(
        spec, arch, cfg, config.epochs, config.seed,
        eval_every=config.eval_every, lr=config.lr,
        grid_resolution=config.grid_resolution,
    )
    wall = time.perf_counter() - start
    history_path = out_io.write_history_csv(out_dir / f"history_{mode}.csv", result.history)
    l2, linf, grid, fields = _final_metrics(arch, result.params, spec, config.grid_resolution)
    summary = {
        "problem": spec.name,
        "mode": mode,
        "seed": config.seed,
        "epochs": config.epochs,
        "final_l2": l2,
        "final_linf": linf,
        "total_wall_s": wall,
        "history_csv": str(history_path),
        "config": result.config,
    }
    if config.dump_field:
        grid = grid if grid is not None else eval_grid(spec.domain, config.grid_resolution)
        predicted = fields[1] if fields else eval_values(arch, result.params, grid)
        exact_vals = fields[0] if fields else None
        dump = out_io.write_field_dump(out_dir / f"field_{mode}.csv", grid, predicted, exact_vals)
        summary["field_csv"] = str(dump)
    out_io.write_summary_json(out_dir / f"summary_{mode}.json", summary)
    return summary


def cmd_run(args) -> int:
    config = load_config(args.config)
    spec = config.resolve_spec()
    out_dir = config.resolved_out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    problem_class = getattr(spec, "problem_class", "linear")

    if problem_class == "linear":
        modes = ("cordes", "plain") if config.mode == "both" else (config.mode,)
        summaries = {}
        for mode in modes:
            summaries[mode] = _run_linear_mode(spec, config, mode, out_dir)
        if config.mode == "both":
            comparison = {
                "problem": spec.name,
                "seed": config.seed,
                "final_l2": {m: summaries[m]["final_l2"] for m in modes},
                "final_linf": {m: summaries[m]["final_linf"] for m in modes},
                "cordes_beats_plain": (
                    summaries["cordes"]["final_l2"] is not None
                    and summaries["plain"]["final_l2"] is not None
                    and summaries["cordes"]["final_l2"] < summaries["plain"]["final_l2"]
                ),
            }
            out_io.write_summary_json(out_dir / "comparison.json", comparison)
        return EXIT_OK

    if problem_class in ("hjb", "monge_ampere"):
        arch = NetworkArch(spec.dim, config.hidden)
        outer = config.outer or OuterConfig.from_total(config.epochs)
        start = time.perf_counter()
        result = solve_nonlinear(
            spec, arch, outer, config.loss, config.seed,
            eval_every=config.eval_every, lr=config.lr,
            grid_resolution=config.grid_resolution,
        )
        wall = time.perf_counter() - start
        history_path = out_io.write_history_csv(out_dir / "history_cordes.csv", result.history)
        l2, linf, grid, fields = _final_metrics(arch, result.params, spec, config.grid_resolution)
        summary = {
            "problem": spec.name,
            "mode": "cordes-dual-loop",
            "seed": config.seed,
            "final_l2": l2,
            "final_linf": linf,
            "total_wall_s": wall,
            "history_csv": str(history_path),
            "config": result.config,
        }
        if config.dump_field and fields is not None:
            dump = out_io.write_field_dump(out_dir / "field_cordes.csv", grid,
                                           fields[1], fields[0])
            summary["field_csv"] = str(dump)
        out_io.write_summary_json(out_dir / "summary_cordes.json", summary)
        return EXIT_OK

    if problem_class == "transport":
        arch = NetworkArch(spec.dim, config.hidden)
        outer = config.outer or OuterConfig.from_total(config.epochs)
        start = time.perf_counter()
        state, result = solve_transport(
            spec, arch, outer, config.loss, config.seed,
            eval_every=config.eval_every, lr=config.lr,
            grid_resolution=config.grid_resolution,
        )
        wall = time.perf_counter() - start
        history_path = out_io.write_history_csv(out_dir / "history_transport.csv",
                                                result.history)
        grid_res = min(config.grid_resolution, 41)
        grid = eval_grid(spec.source_domain, grid_res)
        mapped = transport_map(state, grid)
        out_io.write_transport_grid_csv(out_dir / "transport_grid.csv", grid, mapped)
        push = pushforward_check(state, spec, seed=config.seed)
        summary = {
            "problem": spec.name,
            "mode": "transport-dual-loop",
            "seed": config.seed,
            "final_map_l2": result.final.l2,
            "final_map_linf": result.final.linf,
            "pushforward": push,
            "total_wall_s": wall,
            "history_csv": str(history_path),
            "config": result.config,
        }
        out_io.write_summary_json(out_dir / "summary_transport.json", summary)
        out_io.write_summary_json(out_dir / "pushforward.json", push)
        return EXIT_OK

    raise ConfigError(f"unsupported problem class {problem_class!r}")


def cmd_list_problems(_args) -> int:
    for name in list_problems():
        spec = get_problem(name)
        print(f"{name:22s} {spec.problem_class:14s} dim={spec.dim}")
    return EXIT_OK


def cmd_check_cordes(args) -> int:
    spec = get_problem(args.problem)
    if getattr(spec, "problem_class", None) == "transport":
        raise ConfigError("check-cordes applies to PDE problems, not transport densities")
    if spec.problem_class == "hjb":
        spec = spec.branch(spec.controls[0])
    points = sample_interior(spec.domain, args.samples, args.seed, spec.singular_sets)
    report = check_cordes(spec.coefficients, points, aux_lambda=args.aux_lambda)
    payload = report.to_dict()
    print(json.dumps(payload, indent=2, sort_keys=True))
    if args.out:
        out_io.write_summary_json(args.out, payload)
    return EXIT_OK


def cmd_fd_ref(args) -> int:
    spec = get_problem(args.problem)
    solution = fd_reference_solve(spec, args.n)
    points = solution.points()
    exact = spec.exact.value(points) if spec.exact is not None else None
    out = Path(args.out) if args.out else Path(f"fd_{args.problem}_{args.n}.csv")
    root = os.environ.get("CORDES_PINN_OUT_ROOT")
    if root and not out.is_absolute():
        out = Path(root) / out
    out_io.write_field_dump(out, points, solution.flat(), exact)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_landscape(args) -> int:
    config = load_config(args.config)
    spec = config.resolve_spec()
    if getattr(spec, "problem_class", "linear") != "linear":
        raise ConfigError("landscape probes are wired for linear problems")
    out_dir = config.resolved_out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    arch = NetworkArch(spec.dim, config.hidden)
    mode = "plain" if config.mode == "plain" else "cordes"
    cfg = LossConfig(**{**config.loss.to_dict(), "mode": mode})
    result = train(
        spec, arch, cfg, config.epochs, config.seed,
        eval_every=config.eval_every, lr=config.lr,
        grid_resolution=config.grid_resolution,
    )
    probe_cfg = config.landscape or {}
    points = sample_interior(spec.domain, cfg.n_interior, config.seed + 1,
                             spec.singular_sets)
    from .problems.domains import sample_boundary

    bc_points = sample_boundary(spec.domain, cfg.n_boundary, config.seed + 2)
    system = prepare_system(spec, points, bc_points, cfg)

    def loss_fn(theta):
        from .autodiff import tape as T

        tape = T.Tape()
        li, lb = system_losses(tape, arch, theta, system)
        return float(li.value) * cfg.w_int + float(lb.value) * cfg.w_bc

    probe = landscape_probe(
        arch, result.params, loss_fn,
        half_width=float(probe_cfg.get("half_width", 1.0)),
        grid_n=int(probe_cfg.get("grid_n", 21)),
        seed=int(probe_cfg.get("seed", 0)),
    )
    path = out_io.write_landscape_csv(out_dir / "landscape.csv", probe)
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cordes-pinn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train per a TOML config")
    p_run.add_argument("config")
    p_run.set_defaults(func=cmd_run)

    p_list = sub.add_parser("list-problems", help="print the registry")
    p_list.set_defaults(func=cmd_list_problems)

    p_check = sub.add_parser("check-cordes", help="sampled Cordes verification")
    p_check.add_argument("problem")
    p_check.add_argument("--samples", type=int, default=10_000)
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--aux-lambda", type=float, default=None)
    p_check.add_argument("--out", default=None)
    p_check.set_defaults(func=cmd_check_cordes)

    p_fd = sub.add_parser("fd-ref", help="finite-difference reference field")
    p_fd.add_argument("problem")
    p_fd.add_argument("--n", type=int, required=True)
    p_fd.add_argument("--out", default=None)
    p_fd.set_defaults(func=cmd_fd_ref)

    p_land = sub.add_parser("landscape", help="loss landscape probe")
    p_land.add_argument("config")
    p_land.set_defaults(func=cmd_landscape)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, RegistryError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except CordesPinnError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
