"""Benchmark harness: raw tree-evaluation and full evolutionary timing
comparisons across a ladder of square domain sizes.

Two experiments are provided: ``bench_tree_eval`` times fitness evaluation
of fixed population batches, ``bench_evolution`` times whole evolutionary
runs.  Cells whose measurement exceeds the time budget are recorded as DNF
(did not finish) instead of extrapolated.
"""

from __future__ import annotations

import math
import os
import random
import time
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .engine import RunConfig, initialize, should_stop, step_generation
from .evaluate import DEFAULT_CACHE_BUDGET, EvalCache, eval_population
from .primitives import PrimitiveSet, default_set, elementwise_names
from .tensor import DomainSpec, make_coordinate_tensors

APPROACHES = ("iterative", "vectorized-nocache", "vectorized-cache")
DESK_SIZES = (64, 128, 256, 512)
FULL_SIZES = (64, 128, 256, 512, 1024, 2048)

TIMINGS_HEADER = "approach,side,points,run,seconds,dnf"


@dataclass
class BenchPlan:
    sizes: tuple[int, ...] = DESK_SIZES
    runs: int = 5
    approaches: tuple[str, ...] = APPROACHES
    pop_size: int = 50
    min_depth: int = 2
    max_depth: int = 12
    generations: int = 50
    time_budget: float | None = 300.0

    def validate(self) -> None:
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if list(self.sizes) != sorted(set(self.sizes)):
            raise ValueError("sizes must be strictly increasing")
        for a in self.approaches:
            if a not in APPROACHES:
                raise ValueError(f"unknown approach {a!r}")


@dataclass
class CellStats:
    avg: float | None
    std: float | None
    runs_completed: int
    dnf: bool


@dataclass
class BenchResult:
    approaches: tuple[str, ...]
    sizes: tuple[int, ...]
    cells: dict[tuple[str, int], CellStats] = field(default_factory=dict)
    rows: list[tuple] = field(default_factory=list)  # csv rows


def pagie_target(domain: DomainSpec) -> np.ndarray:
    """Benchmark target 1/(1+x^-4) + 1/(1+y^-4) in the equivalent stable
    form x^4/(1+x^4) + y^4/(1+y^4), defined at x==0 / y==0."""
    if domain.rank != 2:
        raise ValueError("target is defined over a rank-2 domain")
    x, y = (c.astype(np.float64) for c in make_coordinate_tensors(domain))
    x4 = x**4
    y4 = y**4
    out = x4 / (1.0 + x4) + y4 / (1.0 + y4)
    return out.astype(np.float32)


def _finish_cell(result: BenchResult, approach: str, size: int,
                 seconds: list[float], dnf: bool) -> None:
    if seconds and not dnf:
        avg = sum(seconds) / len(seconds)
        std = math.sqrt(sum((s - avg) ** 2 for s in seconds) / len(seconds))
    elif seconds:
        avg = sum(seconds) / len(seconds)
        std = None
    else:
        avg = std = None
    result.cells[(approach, size)] = CellStats(avg, std, len(seconds), dnf)


def _write_rows(path: str | None, rows: list[tuple]) -> None:
    if path is None:
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TIMINGS_HEADER + "\n")
        for approach, side, points, run, seconds, dnf in rows:
            sec = "nan" if seconds is None else f"{seconds:.6f}"
            fh.write(f"{approach},{side},{points},{run},{sec},{int(dnf)}\n")


def make_populations(plan: BenchPlan, seed: int,
                     pset: PrimitiveSet | None = None) -> list[list[ex.Individual]]:
    """The fixed elementwise population batches reused by every cell."""
    pset = pset or default_set()
    rng = random.Random(seed)
    return [ex.ramped_half_and_half(plan.pop_size, plan.min_depth, plan.max_depth,
                                    pset, 2, rng, elementwise_names())
            for _ in range(plan.runs)]


def bench_tree_eval(plan: BenchPlan, seed: int,
                    csv_path: str | None = None) -> BenchResult:
    """Time fitness evaluation of the fixed population batches per
    approach and size."""
    plan.validate()
    pset = default_set()
    populations = make_populations(plan, seed, pset)
    result = BenchResult(plan.approaches, plan.sizes)
    for approach in plan.approaches:
        blocked = False
        for size in plan.sizes:
            if blocked:
                result.rows.append((approach, size, size * size, 0, None, True))
                _finish_cell(result, approach, size, [], True)
                continue
            domain = DomainSpec((size, size))
            target = pagie_target(domain)
            engine = "iterative" if approach == "iterative" else "vectorized"

            def one_eval(pop):
                cache = (EvalCache(DEFAULT_CACHE_BUDGET)
                         if approach == "vectorized-cache" else None)
                t0 = time.perf_counter()
                eval_population(pop, target, domain, pset, cache, engine)
                return time.perf_counter() - t0

            one_eval(populations[0])  # warm-up, untimed
            seconds: list[float] = []
            dnf = False
            for r, pop in enumerate(populations):
                elapsed = one_eval(pop)
                if plan.time_budget is not None and elapsed > plan.time_budget:
                    result.rows.append((approach, size, size * size, r, elapsed, True))
                    dnf = True
                    break
                seconds.append(elapsed)
                result.rows.append((approach, size, size * size, r, elapsed, False))
            _finish_cell(result, approach, size, seconds, dnf)
            blocked = dnf
    _write_rows(csv_path, result.rows)
    return result


def bench_evolution(plan: BenchPlan, seed: int, csv_path: str | None = None,
                    gen_csv_path: str | None = None) -> BenchResult:
    """Time full evolutionary runs per approach and size; per-generation
    evaluation times are logged separately."""
    plan.validate()
    pset = default_set()
    result = BenchResult(plan.approaches, plan.sizes)
    gen_rows: list[str] = []
    for approach in plan.approaches:
        blocked = False
        for size in plan.sizes:
            if blocked:
                result.rows.append((approach, size, size * size, 0, None, True))
                _finish_cell(result, approach, size, [], True)
                continue
            seconds: list[float] = []
            dnf = False
            for r in range(plan.runs):
                config = RunConfig(
                    seed=seed + r,
                    pop_size=plan.pop_size,
                    min_depth=plan.min_depth,
                    max_depth=plan.max_depth,
                    generations=plan.generations,
                    domain=DomainSpec((size, size)),
                    target="pagie",
                    engine="iterative" if approach == "iterative" else "vectorized",
                    cache_budget=(DEFAULT_CACHE_BUDGET
                                  if approach == "vectorized-cache" else 0),
                )
                t0 = time.perf_counter()
                state, stats = initialize(config, pset)
                gen_rows.append(f"{approach},{size},{r},0,{stats.wall_time:.6f},"
                                f"{stats.primitive_applications},{stats.cache_hits}")
                over = False
                while not should_stop(state)[0]:
                    stats = step_generation(state, pset)
                    gen_rows.append(
                        f"{approach},{size},{r},{state.generation},"
                        f"{stats.wall_time:.6f},{stats.primitive_applications},"
                        f"{stats.cache_hits}")
                    if (plan.time_budget is not None
                            and time.perf_counter() - t0 > plan.time_budget):
                        over = True
                        break
                elapsed = time.perf_counter() - t0
                if over:
                    result.rows.append((approach, size, size * size, r, elapsed, True))
                    dnf = True
                    break
                seconds.append(elapsed)
                result.rows.append((approach, size, size * size, r, elapsed, False))
            _finish_cell(result, approach, size, seconds, dnf)
            blocked = dnf
    _write_rows(csv_path, result.rows)
    if gen_csv_path is not None:
        with open(gen_csv_path, "w", encoding="utf-8") as fh:
            fh.write("approach,side,run,generation,eval_seconds,"
                     "primitive_applications,cache_hits\n")
            fh.write("\n".join(gen_rows) + "\n")
    return result


def emit_plot_data(result: BenchResult, tsv_path: str,
                   svg_path: str | None = None) -> None:
    """Tab-separated (points, approach, avg, std) series plus an optional
    log-log SVG chart; DNF cells appear as 'DNF' in the TSV and are left
    off the chart."""
    with open(tsv_path, "w", encoding="utf-8") as fh:
        fh.write("points\tapproach\tavg_seconds\tstd_seconds\n")
        for approach in result.approaches:
            for size in result.sizes:
                cell = result.cells.get((approach, size))
                if cell is None:
                    continue
                if cell.dnf or cell.avg is None:
                    fh.write(f"{size * size}\t{approach}\tDNF\tDNF\n")
                else:
                    std = "" if cell.std is None else f"{cell.std:.6f}"
                    fh.write(f"{size * size}\t{approach}\t{cell.avg:.6f}\t{std}\n")
    if svg_path is None:
        return
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 5))
    for approach in result.approaches:
        xs, ys = [], []
        for size in result.sizes:
            cell = result.cells.get((approach, size))
            if cell is not None and not cell.dnf and cell.avg is not None:
                xs.append(size * size)
                ys.append(cell.avg)
        if xs:
            ax.plot(xs, ys, marker="o", label=approach)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("evaluation points")
    ax.set_ylabel("seconds")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(svg_path, format="svg")
    plt.close(fig)
