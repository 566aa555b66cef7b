"""Run-folder layout, CSV logging, resumable state files and PNG export.

Everything on disk is plain text (key: value lines, prefix expressions,
CSV) so runs are diffable and state files double as population files.
"""

from __future__ import annotations

import math
import os
import random
import time

import numpy as np
from PIL import Image

from . import expr as ex

STATE_VERSION = 1
EVOLUTION_HEADER = "generation,individual,fitness,depth,nodes"
TIMINGS_HEADER = ("generation,eval_seconds,primitive_applications,"
                  "cache_hits,cache_misses,cache_evictions")


class StateError(ValueError):
    """Missing/malformed state file content; message names the key."""


class PopulationFileError(ValueError):
    """Bad population file line; message carries the line number."""


class LockError(RuntimeError):
    """Another writer owns the run folder."""


def _fmt_fitness(f: float | None) -> str:
    if f is None:
        return "nan"
    return "%.9g" % f


# ---------------------------------------------------------------------------
# key-value files (config files, state files)

def parse_kv(lines, *, stop_at_block: bool = True) -> dict[str, str]:
    out = {}
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line == "population:" and stop_at_block:
            break
        if ":" not in line:
            raise StateError(f"malformed line (expected 'key: value'): {line!r}")
        key, _, value = line.partition(":")
        out[key.strip()] = value.strip()
    return out


def read_kv_file(path: str) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return parse_kv(fh)


def _config_items(config) -> list[tuple[str, str]]:
    d = config.domain
    return [
        ("seed", str(config.seed)),
        ("pop_size", str(config.pop_size)),
        ("min_depth", str(config.min_depth)),
        ("max_depth", str(config.max_depth)),
        ("generations", str(config.generations)),
        ("acceptable_error", "none" if config.acceptable_error is None
         else repr(config.acceptable_error)),
        ("objective", config.objective),
        ("domain", "x".join(str(r) for r in d.resolution)),
        ("domain_range", f"{d.range_lo!r},{d.range_hi!r}"),
        ("target", config.target),
        ("crossover_rate", repr(config.crossover_rate)),
        ("mutation_rate", repr(config.mutation_rate)),
        ("tournament_size", str(config.tournament_size)),
        ("elitism", str(config.elitism)),
        ("engine", config.engine),
        ("cache_budget", str(config.cache_budget)),
        ("function_list", ",".join(config.function_list)
         if config.function_list else "default"),
        ("initial_population", config.initial_population or "none"),
        ("save_images", "true" if config.save_images else "false"),
    ]


def config_from_kv(kv: dict[str, str]):
    from .engine import RunConfig
    from .tensor import DomainSpec

    def need(key: str) -> str:
        if key not in kv:
            raise StateError(f"missing key: {key}")
        return kv[key]

    resolution = tuple(int(p) for p in need("domain").split("x"))
    lo_s, _, hi_s = kv.get("domain_range", "-1.0,1.0").partition(",")
    acceptable = kv.get("acceptable_error", "none")
    functions = kv.get("function_list", "default")
    initial = kv.get("initial_population", "none")
    return RunConfig(
        seed=int(need("seed")),
        pop_size=int(need("pop_size")),
        min_depth=int(kv.get("min_depth", "2")),
        max_depth=int(need("max_depth")),
        generations=int(need("generations")),
        acceptable_error=None if acceptable == "none" else float(acceptable),
        objective=kv.get("objective", "minimize"),
        domain=DomainSpec(resolution, float(lo_s), float(hi_s)),
        target=kv.get("target", "pagie"),
        crossover_rate=float(kv.get("crossover_rate", "0.9")),
        mutation_rate=float(kv.get("mutation_rate", "0.1")),
        tournament_size=int(kv.get("tournament_size", "3")),
        elitism=int(kv.get("elitism", "1")),
        engine=kv.get("engine", "vectorized"),
        cache_budget=int(kv.get("cache_budget", str(512 * 1024 * 1024))),
        function_list=None if functions == "default" else functions.split(","),
        initial_population=None if initial == "none" else initial,
        save_images=kv.get("save_images", "false") == "true",
    )


def write_config(config, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in _config_items(config):
            fh.write(f"{key}: {value}\n")


# ---------------------------------------------------------------------------
# RNG state <-> text

def rng_state_to_text(rng: random.Random) -> str:
    version, internal, gauss = rng.getstate()
    gauss_s = "none" if gauss is None else repr(gauss)
    return f"v{version}:{','.join(str(i) for i in internal)}:{gauss_s}"


def rng_state_from_text(text: str) -> random.Random:
    try:
        vpart, ints, gauss_s = text.split(":")
        version = int(vpart.lstrip("v"))
        internal = tuple(int(p) for p in ints.split(","))
        gauss = None if gauss_s == "none" else float(gauss_s)
    except ValueError as e:
        raise StateError(f"malformed key: rng_state ({e})") from e
    rng = random.Random()
    rng.setstate((version, internal, gauss))
    return rng


# ---------------------------------------------------------------------------
# state files

def save_state(state, path: str) -> None:
    lines = [f"version: {STATE_VERSION}",
             f"generation: {state.generation}"]
    lines += [f"{k}: {v}" for k, v in _config_items(state.config)]
    lines.append(f"rng_state: {rng_state_to_text(state.rng)}")
    if state.best is not None:
        lines.append(f"best_fitness: {state.best.fitness!r}")
        lines.append(f"best_expr: {ex.to_string(state.best.tree)}")
    lines.append("population:")
    for ind in state.population:
        fit = "none" if ind.fitness is None else repr(ind.fitness)
        lines.append(f"{ex.to_string(ind.tree)}  # fitness={fit}")
    lines.append("end_population")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def load_state(path: str, pset):
    from .engine import RunState

    try:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read().splitlines()
    except OSError as e:
        raise StateError(f"cannot read state file {path!r}: {e}") from e

    kv = parse_kv(raw)
    if "version" not in kv:
        raise StateError("missing key: version")
    if int(kv["version"]) != STATE_VERSION:
        raise StateError(f"unsupported state version {kv['version']}")
    for key in ("generation", "rng_state"):
        if key not in kv:
            raise StateError(f"missing key: {key}")
    config = config_from_kv(kv)
    rng = rng_state_from_text(kv["rng_state"])

    try:
        block_start = raw.index("population:")
    except ValueError:
        raise StateError("missing key: population") from None
    if "end_population" not in raw[block_start:]:
        raise StateError("missing key: end_population (truncated file?)")
    pop = []
    rank = config.domain.rank
    for offset, line in enumerate(raw[block_start + 1:], start=block_start + 2):
        if line.strip() == "end_population":
            break
        tree, fitness = _parse_population_line(line, pset, rank, offset)
        if tree is not None:
            pop.append(ex.Individual.from_tree(tree, fitness))

    best = None
    if "best_expr" in kv:
        best_tree = ex.parse(kv["best_expr"], pset, rank)
        best = ex.Individual.from_tree(best_tree, float(kv["best_fitness"]))
    state = RunState(generation=int(kv["generation"]), population=pop,
                     rng=rng, best=best, config=config)
    return state


def _parse_population_line(line: str, pset, rank: int, lineno: int):
    body, _, comment = line.partition("#")
    body = body.strip()
    fitness = None
    comment = comment.strip()
    if comment.startswith("fitness="):
        value = comment[len("fitness="):].strip()
        if value != "none":
            fitness = float(value)
    if not body:
        return None, None
    try:
        tree = ex.parse(body, pset, rank)
    except ex.ParseError as e:
        raise PopulationFileError(f"line {lineno}: {e}") from e
    return tree, fitness


def load_population(path: str, pset, rank: int,
                    max_depth: int | None = None) -> list[tuple[ex.ProgramTree, float | None]]:
    """Read one prefix expression per line; ``#`` comments allowed.

    State files are accepted too: when a ``population:`` block is present,
    only its lines are read.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read().splitlines()
    except OSError as e:
        raise PopulationFileError(f"cannot read {path!r}: {e}") from e
    start, end = 0, len(raw)
    stripped = [l.strip() for l in raw]
    if "population:" in stripped:
        start = stripped.index("population:") + 1
        if "end_population" in stripped[start:]:
            end = stripped.index("end_population", start)
    out = []
    for lineno in range(start, end):
        tree, fitness = _parse_population_line(raw[lineno], pset, rank, lineno + 1)
        if tree is None:
            continue
        if max_depth is not None and ex.depth(tree) > max_depth:
            raise PopulationFileError(
                f"line {lineno + 1}: tree depth {ex.depth(tree)} exceeds "
                f"limit {max_depth}")
        out.append((tree, fitness))
    return out


# ---------------------------------------------------------------------------
# CSV logging

def append_generation_csv(path: str, generation: int, population) -> None:
    new = not os.path.exists(path)
    with open(path, "a", encoding="utf-8") as fh:
        if new:
            fh.write(EVOLUTION_HEADER + "\n")
        for i, ind in enumerate(population):
            fh.write(f"{generation},{i},{_fmt_fitness(ind.fitness)},"
                     f"{ind.depth},{ind.nodes}\n")


def append_timings_csv(path: str, generation: int, stats) -> None:
    new = not os.path.exists(path)
    with open(path, "a", encoding="utf-8") as fh:
        if new:
            fh.write(TIMINGS_HEADER + "\n")
        fh.write(f"{generation},{stats.wall_time:.6f},"
                 f"{stats.primitive_applications},{stats.cache_hits},"
                 f"{stats.cache_misses},{stats.cache_evictions}\n")


# ---------------------------------------------------------------------------
# image export

def export_image(phenotype: np.ndarray, path: str) -> None:
    """Map [-1, 1] to 8-bit PNG; rank 2 -> grayscale, rank 3 (last axis 3)
    -> RGB.  Non-finite values render as 0."""
    arr = np.asarray(phenotype, dtype=np.float32)
    if arr.ndim == 2:
        mode = "L"
    elif arr.ndim == 3 and arr.shape[-1] == 3:
        mode = "RGB"
    else:
        raise ValueError(f"unsupported phenotype shape {arr.shape} "
                         "(need rank 2 or rank 3 with 3 channels)")
    with np.errstate(all="ignore"):
        scaled = np.rint((arr.astype(np.float64) + 1.0) / 2.0 * 255.0)
    scaled = np.where(np.isfinite(scaled), scaled, 0.0)
    pixels = np.clip(scaled, 0, 255).astype(np.uint8)
    Image.fromarray(pixels, mode=mode).save(path, format="PNG")


# ---------------------------------------------------------------------------
# run folders

class RunFolder:
    """Single-writer folder ``run_<timestamp>_<seed>`` holding all logs."""

    def __init__(self, path: str):
        self.path = path
        self.evolution_csv = os.path.join(path, "evolution.csv")
        self.timings_csv = os.path.join(path, "timings.csv")
        self.state_file = os.path.join(path, "state.txt")
        self.best_dir = os.path.join(path, "best")
        self._lock = os.path.join(path, "lock")

    @classmethod
    def create(cls, root: str, config) -> "RunFolder":
        stamp = time.strftime("%Y%m%d-%H%M%S")
        base = os.path.join(root, f"run_{stamp}_{config.seed}")
        path = base
        n = 1
        while os.path.exists(path):
            path = f"{base}-{n}"
            n += 1
        os.makedirs(os.path.join(path, "best"))
        folder = cls(path)
        folder._acquire_lock()
        write_config(config, os.path.join(path, "config.txt"))
        return folder

    @classmethod
    def open(cls, path: str) -> "RunFolder":
        if not os.path.isdir(path):
            raise StateError(f"run folder {path!r} does not exist")
        folder = cls(path)
        folder._acquire_lock()
        return folder

    def _acquire_lock(self) -> None:
        try:
            fd = os.open(self._lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LockError(f"run folder {self.path!r} is locked") from None
        os.close(fd)

    def close(self) -> None:
        try:
            os.remove(self._lock)
        except FileNotFoundError:
            pass

    def log_generation(self, state, stats) -> None:
        append_generation_csv(self.evolution_csv, state.generation, state.population)
        append_timings_csv(self.timings_csv, state.generation, stats)
        save_state(state, self.state_file)
        if state.best is not None:
            best_path = os.path.join(self.best_dir, f"gen_{state.generation:04d}.txt")
            with open(best_path, "w", encoding="utf-8") as fh:
                fh.write(f"{ex.to_string(state.best.tree)}  "
                         f"# fitness={_fmt_fitness(state.best.fitness)}\n")
            if state.config.save_images and state.config.domain.rank in (2, 3):
                from .evaluate import eval_vectorized
                from .primitives import default_set
                phenotype, _ = eval_vectorized(state.best.tree, state.config.domain,
                                               default_set(), state.cache)
                try:
                    export_image(phenotype,
                                 os.path.join(self.best_dir,
                                              f"gen_{state.generation:04d}.png"))
                except ValueError:
                    pass
