"""Command-line entry point: run/resume/bench-eval/bench-evolve/eval/render/check.

Exit codes: 0 success, 1 validation findings (check), 2 usage or config
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import bench, engine, expr, persistence
from .evaluate import eval_iterative, eval_vectorized
from .primitives import default_set
from .tensor import DomainError, DomainSpec, rmse, set_num_threads

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _parse_domain(text: str) -> DomainSpec:
    try:
        resolution = tuple(int(p) for p in text.lower().split("x"))
        return DomainSpec(resolution)
    except (ValueError, DomainError) as e:
        raise engine.ConfigError(f"domain: bad specification {text!r} ({e})") from e


def _objective(text: str) -> str:
    return {"min": "minimize", "max": "maximize",
            "minimize": "minimize", "maximize": "maximize"}.get(text, text)


def _config_from_args(args) -> engine.RunConfig:
    kv = {}
    if getattr(args, "config", None):
        kv = persistence.read_kv_file(args.config)
    overrides = {
        "seed": args.seed, "pop_size": args.pop, "generations": args.gens,
        "max_depth": args.depth, "domain": args.domain, "target": args.target,
        "engine": args.engine, "cache_budget": args.cache_budget,
        "acceptable_error": args.acceptable_error,
        "objective": None if args.objective is None else _objective(args.objective),
        "function_list": args.functions, "initial_population": args.initial_pop,
    }
    for key, value in overrides.items():
        if value is not None:
            kv[key] = str(value)
    kv.setdefault("seed", "0")
    kv.setdefault("pop_size", "50")
    kv.setdefault("max_depth", "12")
    kv.setdefault("generations", "50")
    kv.setdefault("domain", "64x64")
    return persistence.config_from_kv(kv)


def _progress_hook(state, stats) -> None:
    best = state.best.fitness if state.best is not None else float("nan")
    print(f"generation {state.generation}: best fitness {best:.9g}")


def cmd_run(args) -> int:
    config = _config_from_args(args)
    config.validate(default_set())
    state = engine.run(config, default_set(), hooks=[_progress_hook],
                       out_root=args.out)
    print(f"best: {expr.to_string(state.best.tree)}")
    return EXIT_OK


def cmd_resume(args) -> int:
    pset = default_set()
    path = args.path
    state_file = path if os.path.isfile(path) else os.path.join(path, "state.txt")
    state = persistence.load_state(state_file, pset)
    folder = None
    if os.path.isdir(path):
        folder = persistence.RunFolder.open(path)
    try:
        state = engine.resume(state, pset, hooks=[_progress_hook], folder=folder)
    finally:
        if folder is not None:
            folder.close()
    print(f"best: {expr.to_string(state.best.tree)}")
    return EXIT_OK


def _resolve_cli_target(args, domain: DomainSpec, pset) -> np.ndarray:
    config = engine.RunConfig(domain=domain, target=args.target or "pagie")
    return engine.resolve_target(config, pset)


def cmd_eval(args) -> int:
    pset = default_set()
    domain = _parse_domain(args.domain)
    tree = _parse_expr_or_exit(args.expr, pset, domain.rank)
    target = _resolve_cli_target(args, domain, pset)
    if args.engine == "iterative":
        phenotype, _ = eval_iterative(tree, domain, pset)
    else:
        phenotype, _ = eval_vectorized(tree, domain, pset)
    print(f"rmse: {rmse(phenotype, target):.9g}")
    if args.out_image:
        persistence.export_image(phenotype, args.out_image)
    if args.out_tensor:
        np.save(args.out_tensor, phenotype)
    return EXIT_OK


def _parse_expr_or_exit(text: str, pset, rank: int):
    try:
        return expr.parse(text, pset, rank)
    except expr.ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        print(text, file=sys.stderr)
        print(" " * e.position + "^", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def cmd_render(args) -> int:
    pset = default_set()
    domain = _parse_domain(args.domain)
    if domain.rank not in (2, 3):
        print("render needs a rank-2 or rank-3 domain", file=sys.stderr)
        return EXIT_USAGE
    tree = _parse_expr_or_exit(args.expr, pset, domain.rank)
    phenotype, _ = eval_vectorized(tree, domain, pset)
    persistence.export_image(phenotype, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_check(args) -> int:
    pset = default_set()
    domain = _parse_domain(args.domain)
    try:
        with open(args.path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        print(f"cannot read {args.path!r}: {e}", file=sys.stderr)
        return EXIT_IO
    findings = 0
    checked = 0
    for lineno, raw in enumerate(lines, start=1):
        body = raw.partition("#")[0].strip()
        if not body:
            continue
        checked += 1
        try:
            tree = expr.parse(body, pset, domain.rank)
        except expr.ParseError as e:
            print(f"line {lineno}: INVALID ({e})")
            findings += 1
            continue
        d = expr.depth(tree)
        if d > args.depth:
            print(f"line {lineno}: INVALID (depth {d} exceeds limit {args.depth})")
            findings += 1
        else:
            print(f"line {lineno}: ok (depth {d}, {expr.node_count(tree)} nodes)")
    if checked == 0:
        print("warning: no expressions found")
    return EXIT_FINDINGS if findings else EXIT_OK


def _bench_plan(args) -> bench.BenchPlan:
    sizes = tuple(int(s) for s in args.sizes.split(",")) if args.sizes else \
        (bench.FULL_SIZES if args.full else bench.DESK_SIZES)
    plan = bench.BenchPlan(sizes=sizes, runs=args.runs,
                           time_budget=args.time_budget)
    if args.approaches:
        plan.approaches = tuple(args.approaches.split(","))
    if args.gens is not None:
        plan.generations = args.gens
    return plan


def _emit_bench(result: bench.BenchResult, out_dir: str, stem: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    bench.emit_plot_data(result, os.path.join(out_dir, f"{stem}.tsv"),
                         os.path.join(out_dir, f"{stem}.svg"))
    print(f"wrote {out_dir}/{stem}.tsv and {stem}.svg")


def cmd_bench_eval(args) -> int:
    plan = _bench_plan(args)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    result = bench.bench_tree_eval(plan, args.seed or 0,
                                   os.path.join(out_dir, "timings.csv"))
    _emit_bench(result, out_dir, "tree_eval")
    return EXIT_OK


def cmd_bench_evolve(args) -> int:
    plan = _bench_plan(args)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    result = bench.bench_evolution(
        plan, args.seed or 0, os.path.join(out_dir, "timings.csv"),
        os.path.join(out_dir, "generation_timings.csv"))
    _emit_bench(result, out_dir, "evolution")
    return EXIT_OK


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key-value config file (state-file grammar)")
    p.add_argument("--seed", type=int)
    p.add_argument("--pop", type=int, help="population size")
    p.add_argument("--gens", type=int, help="generation limit")
    p.add_argument("--depth", type=int, help="maximum tree depth")
    p.add_argument("--domain", help="grid, e.g. 64x64 or 128x128x3")
    p.add_argument("--target", help="pagie | expression | tensor .npy file")
    p.add_argument("--engine", choices=["vectorized", "iterative"])
    p.add_argument("--cache-budget", type=int, help="cache size in bytes (0 disables)")
    p.add_argument("--acceptable-error", type=float)
    p.add_argument("--objective", choices=["min", "max", "minimize", "maximize"])
    p.add_argument("--functions", help="comma-separated operator subset")
    p.add_argument("--initial-pop", help="population file for generation 0")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vecgp",
        description="Vectorized genetic-programming engine with an "
                    "iterative baseline and benchmark harness.")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker-pool cap for elementwise kernels")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="start an evolutionary run")
    _add_config_flags(p)
    p.add_argument("--out", default=".", help="directory for the run folder")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("resume", help="continue a saved run")
    p.add_argument("path", help="run folder or state file")
    p.set_defaults(fn=cmd_resume)

    for name, fn in (("bench-eval", cmd_bench_eval),
                     ("bench-evolve", cmd_bench_evolve)):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} benchmark")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--sizes", help="comma-separated square sides")
        p.add_argument("--full", action="store_true",
                       help="use the full size ladder up to 2048")
        p.add_argument("--runs", type=int, default=5)
        p.add_argument("--gens", type=int, default=None)
        p.add_argument("--time-budget", type=float, default=300.0)
        p.add_argument("--approaches", help="comma-separated approach subset")
        p.add_argument("--out", default="bench_out")
        p.set_defaults(fn=fn)

    p = sub.add_parser("eval", help="evaluate one expression against a target")
    p.add_argument("expr")
    p.add_argument("--domain", default="64x64")
    p.add_argument("--target", default="pagie")
    p.add_argument("--engine", choices=["vectorized", "iterative"],
                   default="vectorized")
    p.add_argument("--out-image", help="write the phenotype as PNG")
    p.add_argument("--out-tensor", help="write the phenotype as .npy")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("render", help="render an expression to PNG")
    p.add_argument("expr")
    p.add_argument("--domain", default="256x256")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("check", help="validate a population file")
    p.add_argument("path")
    p.add_argument("--domain", default="64x64")
    p.add_argument("--depth", type=int, default=12)
    p.set_defaults(fn=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        set_num_threads(args.threads)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    except (engine.ConfigError, persistence.StateError,
            persistence.PopulationFileError, expr.ParseError,
            DomainError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
