"""Vectorized genetic-programming engine with bounded subtree-result
caching and a per-point iterative baseline interpreter."""

from .tensor import (DomainSpec, DomainError, ShapeError, constant_tensor,
                     make_coordinate_tensors, map_elementwise, rmse,
                     set_num_threads, get_num_threads)
from .primitives import (Primitive, PrimitiveSet, RegistrationError,
                         default_set, elementwise_names)
from .expr import (Individual, ParseError, depth, node_count, parse,
                   ramped_half_and_half, random_tree, subtree_hash, to_string)
from .evaluate import (EvalCache, EvalStats, UnsupportedOperatorError,
                       eval_iterative, eval_population, eval_vectorized)
from .engine import (ConfigError, RunConfig, RunState, initialize, resume,
                     run, should_stop, step_generation)
from .bench import (BenchPlan, BenchResult, bench_evolution, bench_tree_eval,
                    emit_plot_data, pagie_target)

__version__ = "0.1.0"
