"""The evolutionary loop: init, tournament selection, subtree variation,
elitism, stop criteria and per-generation logging hooks.

The loop owns one sequential RNG stream, so runs are reproducible for a
given (seed, config) no matter how many threads the evaluators use.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace

import numpy as np

from . import expr as ex
from . import persistence
from .evaluate import (DEFAULT_CACHE_BUDGET, EvalCache, EvalStats,
                       eval_population, eval_vectorized)
from .primitives import PrimitiveSet, default_set, elementwise_names
from .tensor import DomainSpec

MUTATION_MAX_DEPTH = 4


class ConfigError(ValueError):
    """Invalid run configuration; message names the offending field."""


@dataclass
class RunConfig:
    seed: int = 0
    pop_size: int = 50
    min_depth: int = 2
    max_depth: int = 12
    generations: int = 50
    acceptable_error: float | None = None
    objective: str = "minimize"
    domain: DomainSpec = field(default_factory=lambda: DomainSpec((64, 64)))
    target: str = "pagie"
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    tournament_size: int = 3
    elitism: int = 1
    engine: str = "vectorized"
    cache_budget: int = DEFAULT_CACHE_BUDGET
    function_list: list[str] | None = None
    initial_population: str | None = None
    save_images: bool = False

    def validate(self, pset: PrimitiveSet | None = None) -> None:
        if self.pop_size < 2:
            raise ConfigError("pop_size: must be >= 2")
        if not 0 <= self.min_depth <= self.max_depth:
            raise ConfigError("min_depth/max_depth: need 0 <= min <= max")
        if self.generations < 0:
            raise ConfigError("generations: must be >= 0")
        if self.objective not in ("minimize", "maximize"):
            raise ConfigError("objective: must be 'minimize' or 'maximize'")
        if self.crossover_rate < 0 or self.mutation_rate < 0:
            raise ConfigError("crossover_rate/mutation_rate: must be >= 0")
        if self.crossover_rate + self.mutation_rate > 1.0 + 1e-12:
            raise ConfigError("crossover_rate + mutation_rate: must be <= 1")
        if self.tournament_size < 1:
            raise ConfigError("tournament_size: must be >= 1")
        if not 0 <= self.elitism < self.pop_size:
            raise ConfigError("elitism: must satisfy 0 <= elitism < pop_size")
        if self.engine not in ("vectorized", "iterative"):
            raise ConfigError("engine: must be 'vectorized' or 'iterative'")
        if self.cache_budget < 0:
            raise ConfigError("cache_budget: must be >= 0")
        if pset is not None:
            for name in self.functions():
                if name not in pset:
                    raise ConfigError(f"function_list: unknown operator {name!r}")
                if self.engine == "iterative" and pset.get(name).kind != "elementwise":
                    raise ConfigError(
                        f"function_list: {name!r} is spatial, unusable with "
                        "the iterative engine")

    def functions(self) -> list[str]:
        return list(self.function_list) if self.function_list else elementwise_names()


@dataclass
class RunState:
    generation: int
    population: list[ex.Individual]
    rng: random.Random
    best: ex.Individual
    config: RunConfig
    # runtime only, rebuilt on resume
    target_tensor: np.ndarray | None = None
    cache: EvalCache | None = None


def _fitness_key(ind: ex.Individual, objective: str) -> float:
    f = ind.fitness
    if f is None or math.isnan(f):
        return math.inf if objective == "minimize" else -math.inf
    return f


def _better(a: ex.Individual, b: ex.Individual, objective: str) -> bool:
    ka, kb = _fitness_key(a, objective), _fitness_key(b, objective)
    return ka < kb if objective == "minimize" else ka > kb


def resolve_target(config: RunConfig, pset: PrimitiveSet) -> np.ndarray:
    """Target spec -> tensor: 'pagie', a .npy file path, or an expression."""
    spec = config.target
    if spec == "pagie":
        from .bench import pagie_target
        return pagie_target(config.domain)
    if spec.endswith(".npy"):
        try:
            arr = np.load(spec)
        except OSError as e:
            raise ConfigError(f"target: cannot read {spec!r}: {e}") from e
        if tuple(arr.shape) != config.domain.resolution:
            raise ConfigError(
                f"target: tensor shape {tuple(arr.shape)} does not match "
                f"domain {config.domain.resolution}")
        return np.ascontiguousarray(arr, dtype=np.float32)
    try:
        tree = ex.parse(spec, pset, config.domain.rank)
    except ex.ParseError as e:
        raise ConfigError(f"target: {e}") from e
    out, _ = eval_vectorized(tree, config.domain, pset)
    return out


def _attach_runtime(state: RunState, pset: PrimitiveSet) -> None:
    cfg = state.config
    if state.target_tensor is None:
        state.target_tensor = resolve_target(cfg, pset)
    if state.cache is None and cfg.engine == "vectorized" and cfg.cache_budget > 0:
        state.cache = EvalCache(cfg.cache_budget)


def initialize(config: RunConfig, pset: PrimitiveSet | None = None) -> tuple[RunState, EvalStats]:
    """Build and evaluate generation 0."""
    pset = pset or default_set()
    config.validate(pset)
    rng = random.Random(config.seed)
    functions = config.functions()
    pop: list[ex.Individual] = []
    if config.initial_population:
        loaded = persistence.load_population(
            config.initial_population, pset, config.domain.rank,
            max_depth=config.max_depth)
        pop = [ex.Individual.from_tree(t) for t, _ in loaded[:config.pop_size]]
    if len(pop) < config.pop_size:
        remainder = config.pop_size - len(pop)
        generated = ex.ramped_half_and_half(
            max(remainder, 2), config.min_depth, config.max_depth, pset,
            config.domain.rank, rng, functions)
        pop.extend(generated[:remainder])
    state = RunState(generation=0, population=pop, rng=rng,
                     best=pop[0], config=config)
    _attach_runtime(state, pset)
    stats = eval_population(pop, state.target_tensor, config.domain, pset,
                            state.cache, config.engine)
    state.best = _snapshot_best(pop, config.objective)
    return state, stats


def _snapshot_best(pop: list[ex.Individual], objective: str,
                   current: ex.Individual | None = None) -> ex.Individual:
    best = current
    for ind in pop:
        if best is None or _better(ind, best, objective):
            best = ex.Individual.from_tree(ind.tree, ind.fitness)
    return best


def _tournament(state: RunState) -> ex.Individual:
    cfg = state.config
    pick = state.population[state.rng.randrange(len(state.population))]
    for _ in range(cfg.tournament_size - 1):
        rival = state.population[state.rng.randrange(len(state.population))]
        if _better(rival, pick, cfg.objective):
            pick = rival
    return pick


def _crossover(state: RunState) -> tuple[ex.ProgramTree, ex.Individual]:
    p1 = _tournament(state)
    p2 = _tournament(state)
    i = state.rng.randrange(ex.node_count(p1.tree))
    j = state.rng.randrange(ex.node_count(p2.tree))
    return ex.replace_node(p1.tree, i, ex.get_node(p2.tree, j)), p1


def _mutation(state: RunState, pset: PrimitiveSet,
              functions: list[str]) -> tuple[ex.ProgramTree, ex.Individual]:
    p = _tournament(state)
    i = state.rng.randrange(ex.node_count(p.tree))
    sub = ex.random_tree("grow", 0, state.rng.randint(1, MUTATION_MAX_DEPTH),
                         pset, state.config.domain.rank, state.rng, functions)
    return ex.replace_node(p.tree, i, sub), p


def step_generation(state: RunState, pset: PrimitiveSet | None = None) -> EvalStats:
    """Produce, evaluate and install the next generation in place."""
    pset = pset or default_set()
    cfg = state.config
    _attach_runtime(state, pset)
    functions = cfg.functions()

    ranked = sorted(range(len(state.population)),
                    key=lambda i: (_fitness_key(state.population[i], cfg.objective), i),
                    reverse=(cfg.objective == "maximize"))
    new_pop: list[ex.Individual] = []
    for i in ranked[:cfg.elitism]:
        src = state.population[i]
        new_pop.append(ex.Individual.from_tree(src.tree, src.fitness))

    while len(new_pop) < cfg.pop_size:
        r = state.rng.random()
        if r < cfg.crossover_rate:
            child_tree, parent = _crossover(state)
        elif r < cfg.crossover_rate + cfg.mutation_rate:
            child_tree, parent = _mutation(state, pset, functions)
        else:
            parent = _tournament(state)
            child_tree = parent.tree
        if ex.depth(child_tree) > cfg.max_depth:
            # depth-safe variation: the parent passes through unchanged
            new_pop.append(ex.Individual.from_tree(parent.tree, parent.fitness))
        else:
            new_pop.append(ex.Individual.from_tree(child_tree))

    fresh = [ind for ind in new_pop if not ind.valid]
    stats = eval_population(fresh, state.target_tensor, cfg.domain, pset,
                            state.cache, cfg.engine)
    state.population = new_pop
    state.generation += 1
    state.best = _snapshot_best(new_pop, cfg.objective, state.best)
    return stats


def should_stop(state: RunState) -> tuple[bool, str]:
    cfg = state.config
    if cfg.acceptable_error is not None and state.best is not None:
        f = _fitness_key(state.best, cfg.objective)
        if cfg.objective == "minimize" and f <= cfg.acceptable_error:
            return True, "acceptable-error"
        if cfg.objective == "maximize" and f >= cfg.acceptable_error:
            return True, "acceptable-error"
    if state.generation >= cfg.generations:
        return True, "generation-limit"
    return False, ""


def run(config: RunConfig, pset: PrimitiveSet | None = None, hooks=(),
        out_root: str | None = None) -> RunState:
    """Full run: initialize, loop to a stop criterion, log each generation."""
    pset = pset or default_set()
    state, stats = initialize(config, pset)
    folder = None
    if out_root is not None:
        folder = persistence.RunFolder.create(out_root, config)
    try:
        _log_generation(state, stats, folder, hooks)
        return _loop(state, pset, hooks, folder)
    finally:
        if folder is not None:
            folder.close()


def resume(state: RunState, pset: PrimitiveSet | None = None, hooks=(),
           folder: "persistence.RunFolder | None" = None) -> RunState:
    """Continue a loaded run to its stop criterion."""
    pset = pset or default_set()
    _attach_runtime(state, pset)
    return _loop(state, pset, hooks, folder)


def _loop(state: RunState, pset: PrimitiveSet, hooks, folder) -> RunState:
    while True:
        stop, _reason = should_stop(state)
        if stop:
            break
        stats = step_generation(state, pset)
        _log_generation(state, stats, folder, hooks)
    return state


def _log_generation(state: RunState, stats: EvalStats, folder, hooks) -> None:
    if folder is not None:
        folder.log_generation(state, stats)
    for hook in hooks:
        hook(state, stats)
