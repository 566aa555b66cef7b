"""The two evaluation engines plus population-level fitness evaluation.

``eval_vectorized`` walks the tree once, applying each operator to whole
float32 tensors; an optional bounded cache memoizes subtree results by
structural hash.  ``eval_iterative`` is the baseline: the tree is compiled
once into a scalar Python expression which is then called for every domain
point independently (double precision, identical protection rules).
"""

from __future__ import annotations

import time
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .primitives import PrimitiveSet, SCALAR_FUNCS
from .tensor import DomainSpec, constant_tensor, make_coordinate_tensors, rmse

DEFAULT_CACHE_BUDGET = 512 * 1024 * 1024
DEFAULT_CACHE_MIN_NODES = 4


class UnsupportedOperatorError(ValueError):
    """The iterative engine only interprets elementwise operators."""


@dataclass
class EvalStats:
    wall_time: float = 0.0
    primitive_applications: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    cache_evictions: int = 0

    def add(self, other: "EvalStats") -> None:
        self.wall_time += other.wall_time
        self.primitive_applications += other.primitive_applications
        self.cache_hits += other.cache_hits
        self.cache_misses += other.cache_misses
        self.cache_evictions += other.cache_evictions


class EvalCache:
    """LRU map from structural subtree hash to result tensor, bounded by a
    total byte budget.  Scoped to one domain; cleared when the domain
    changes."""

    def __init__(self, byte_budget: int = DEFAULT_CACHE_BUDGET,
                 min_nodes: int = DEFAULT_CACHE_MIN_NODES):
        self.byte_budget = int(byte_budget)
        self.min_nodes = int(min_nodes)
        self.hits = 0
        self.misses = 0
        self.evictions = 0
        self._map: OrderedDict[int, np.ndarray] = OrderedDict()
        self._bytes = 0
        self._domain: DomainSpec | None = None

    def __len__(self) -> int:
        return len(self._map)

    @property
    def cached_bytes(self) -> int:
        return self._bytes

    def ensure_domain(self, domain: DomainSpec) -> None:
        if self._domain != domain:
            self.clear()
            self._domain = domain

    def clear(self) -> None:
        self._map.clear()
        self._bytes = 0

    def lookup(self, key: int) -> np.ndarray | None:
        hit = self._map.get(key)
        if hit is None:
            self.misses += 1
            return None
        self._map.move_to_end(key)
        self.hits += 1
        return hit

    def insert(self, key: int, value: np.ndarray) -> None:
        if key in self._map or value.nbytes > self.byte_budget:
            return
        while self._bytes + value.nbytes > self.byte_budget and self._map:
            _, old = self._map.popitem(last=False)
            self._bytes -= old.nbytes
            self.evictions += 1
        value = value.view()
        value.setflags(write=False)
        self._map[key] = value
        self._bytes += value.nbytes


def eval_vectorized(tree: ex.ProgramTree, domain: DomainSpec, pset: PrimitiveSet,
                    cache: EvalCache | None = None) -> tuple[np.ndarray, EvalStats]:
    """Whole-domain evaluation; output does not depend on the cache."""
    stats = EvalStats()
    start = time.perf_counter()
    coords: list[np.ndarray] | None = None
    if cache is not None:
        cache.ensure_domain(domain)
        base = (cache.hits, cache.misses, cache.evictions)

    def rec(node: ex.ProgramTree) -> np.ndarray:
        nonlocal coords
        if isinstance(node, ex.Var):
            if coords is None:
                coords = make_coordinate_tensors(domain)
            return coords[node.index]
        if isinstance(node, ex.Const):
            return constant_tensor(node.value, domain)
        cacheable = cache is not None and ex.node_count(node) >= cache.min_nodes
        if cacheable:
            key = ex.subtree_hash(node)
            hit = cache.lookup(key)
            if hit is not None:
                return hit
        args = [rec(c) for c in node.children]
        result = pset.get(node.name).apply(args, domain)
        stats.primitive_applications += 1
        if cacheable:
            cache.insert(key, result)
        return result

    out = rec(tree)
    if cache is not None:
        stats.cache_hits = cache.hits - base[0]
        stats.cache_misses = cache.misses - base[1]
        stats.cache_evictions = cache.evictions - base[2]
    stats.wall_time = time.perf_counter() - start
    return out, stats


# ---------------------------------------------------------------------------
# iterative baseline
#
# The per-point interpreter computes in double precision but rounds every
# operation result to float32 (via an array('f') store), mirroring the
# rounding chain of the vectorized kernels.  Without this the two engines
# drift apart through value-amplifying subtrees.  The rounding buffers are
# shared module state: eval_iterative is not reentrant across threads.

import math as _math
from array import array as _array

_F32 = _array("f", [0.0])
_PI32 = float(np.float32(np.pi))
_I32_MIN = -(2**31)
_I32_MAX = 2**31 - 1
_nan = float("nan")
_inf = float("inf")


def f32(v: float, _a=_F32) -> float:
    """Round a scalar to the nearest float32 value (overflow -> +-inf)."""
    try:
        _a[0] = v
    except OverflowError:
        return _inf if v > 0 else -_inf
    return _a[0]


def _r_add(x, y, _a=_F32):
    try:
        _a[0] = x + y
    except OverflowError:
        return _inf if x + y > 0 else -_inf
    return _a[0]


def _r_sub(x, y, _a=_F32):
    try:
        _a[0] = x - y
    except OverflowError:
        return _inf if x - y > 0 else -_inf
    return _a[0]


def _r_mult(x, y, _a=_F32):
    try:
        _a[0] = x * y
    except OverflowError:
        return _inf if x * y > 0 else -_inf
    return _a[0]


def _r_div(x, y, _a=_F32):
    if y == 0.0:
        return 0.0
    try:
        _a[0] = x / y
    except OverflowError:
        return _inf if x / y > 0 else -_inf
    return _a[0]


def _r_sin(x, _a=_F32):
    t = f32(_PI32 * x)
    try:
        _a[0] = _math.sin(t)
    except ValueError:
        return _nan
    return _a[0]


def _r_cos(x, _a=_F32):
    t = f32(_PI32 * x)
    try:
        _a[0] = _math.cos(t)
    except ValueError:
        return _nan
    return _a[0]


def _r_tan(x, _a=_F32):
    t = f32(_PI32 * x)
    try:
        _a[0] = _math.tan(t)
    except (ValueError, OverflowError):
        return _nan
    return _a[0]


def _r_exp(x, _a=_F32):
    try:
        v = _math.exp(x)
    except OverflowError:
        return _inf
    return f32(v)


def _r_log(x, _a=_F32):
    if x > 0.0:
        _a[0] = _math.log(x)
        return _a[0]
    return -1.0


def _r_pow(x, y):
    if x == 0.0 and y == 0.0:
        return 0.0
    try:
        return f32(abs(x) ** y)
    except OverflowError:
        return _inf
    except ZeroDivisionError:
        return _inf


def _r_min(x, y):
    if x != x or y != y:
        return _nan
    return x if x < y else y


def _r_max(x, y):
    if x != x or y != y:
        return _nan
    return x if x > y else y


def _r_mdist(x, y, _a=_F32):
    try:
        _a[0] = x + y
    except OverflowError:
        return (_inf if x + y > 0 else -_inf)
    _a[0] = _a[0] * 0.5
    return _a[0]


def _r_sqrt(x, _a=_F32):
    if x >= 0.0:
        _a[0] = _math.sqrt(x)
        return _a[0]
    return 0.0


def _r_sign(x):
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0 if x == 0.0 else _nan


def _r_clip(x, y, z):
    if x != x or y != y or z != z:
        return _nan
    return max(min(z, x), y)


def _r_mod(x, y, _a=_F32):
    if y == 0.0:
        return 0.0
    try:
        _a[0] = x % y
    except (ValueError, ZeroDivisionError, OverflowError):
        return _nan
    return _a[0]


def _r_frac(x, _a=_F32):
    try:
        _a[0] = x - _math.floor(x)
    except (ValueError, OverflowError):
        return _nan
    return 0.0 if _a[0] >= 1.0 else _a[0]


def _s_i32(x):
    if x != x:
        return 0
    if x >= _I32_MAX:
        return _I32_MAX
    if x <= _I32_MIN:
        return _I32_MIN
    return int(x)


def _r_or(x, y):
    return f32(float(_s_i32(x) | _s_i32(y)))


def _r_xor(x, y):
    return f32(float(_s_i32(x) ^ _s_i32(y)))


def _r_and(x, y):
    return f32(float(_s_i32(x) & _s_i32(y)))


def _r_sstep(x, _a=_F32):
    # matches the vectorized rounding chain: x*x, (3 - 2x), product
    _a[0] = x * x
    t1 = _a[0]
    try:
        _a[0] = 3.0 - 2.0 * x
    except OverflowError:
        return _nan  # inf * inf sign games; unreachable for finite x
    t2 = _a[0]
    return _r_mult(t1, t2)


def _r_sstepp(x):
    t1 = _r_mult(x, x)
    t2 = _r_mult(t1, x)
    t3 = _r_mult(6.0, x)
    t4 = _r_sub(t3, 15.0)
    t5 = _r_mult(x, t4)
    t6 = _r_add(t5, 10.0)
    return _r_mult(t2, t6)


def _r_len(x, y, _a=_F32):
    t = _r_add(_r_mult(x, x), _r_mult(y, y))
    try:
        _a[0] = _math.sqrt(t)
    except ValueError:
        return _nan
    return _a[0]


def _r_lerp(x, y, z):
    return _r_add(x, _r_mult(_r_sub(y, x), _r_frac(z)))


_ROUNDED_SCALARS = {
    "add": _r_add, "sub": _r_sub, "mult": _r_mult, "div": _r_div,
    "sin": _r_sin, "cos": _r_cos, "tan": _r_tan,
    "exp": _r_exp, "log": _r_log, "pow": _r_pow,
    "min": _r_min, "max": _r_max, "mdist": _r_mdist,
    "sqrt": _r_sqrt, "sign": _r_sign, "clip": _r_clip,
    "mod": _r_mod, "frac": _r_frac,
    "or": _r_or, "xor": _r_xor, "and": _r_and,
    "sstep": _r_sstep, "sstepp": _r_sstepp,
    "len": _r_len, "lerp": _r_lerp,
}

# Exact operators (no new rounding) stay inline; placeholders appear once.
_INLINE = {
    "neg": "(-{0})",
    "abs": "abs({0})",
    "if": "(({1}) if ({0}) >= 0.0 else ({2}))",
    "step": "(-1.0 if ({0}) < 0.0 else 1.0)",
}


def _scalar_name(op: str) -> str:
    return "_f_" + op


def compile_scalar(tree: ex.ProgramTree, pset: PrimitiveSet, rank: int):
    """Compile a tree into one scalar function of the coordinate values."""
    env = {"abs": abs, "_f32": f32}

    def gen(node: ex.ProgramTree) -> str:
        if isinstance(node, ex.Var):
            return f"_v{node.index}"
        if isinstance(node, ex.Const):
            return repr(node.value)
        prim = pset.get(node.name)
        if prim.kind != "elementwise":
            raise UnsupportedOperatorError(
                f"operator {node.name!r} is spatial; the iterative engine "
                "only supports elementwise trees")
        parts = [gen(c) for c in node.children]
        if node.name in _INLINE:
            return _INLINE[node.name].format(*parts)
        fn = _ROUNDED_SCALARS.get(node.name)
        if fn is not None:
            env[_scalar_name(node.name)] = fn
            return f"{_scalar_name(node.name)}({', '.join(parts)})"
        if prim.scalar is not None:
            # custom operator: pure scalar semantics, rounded afterwards
            env[_scalar_name(node.name)] = prim.scalar
            return f"_f32({_scalar_name(node.name)}({', '.join(parts)}))"
        raise UnsupportedOperatorError(
            f"operator {node.name!r} has no scalar implementation")

    body = gen(tree)
    args = ", ".join(f"_v{k}" for k in range(rank))
    return eval(f"lambda {args}: {body}", env)


def _function_nodes(tree: ex.ProgramTree) -> int:
    return sum(1 for n in ex.iter_nodes(tree) if isinstance(n, ex.Func))


def eval_iterative(tree: ex.ProgramTree, domain: DomainSpec,
                   pset: PrimitiveSet) -> tuple[np.ndarray, EvalStats]:
    """Per-point interpretation of an elementwise-only tree."""
    stats = EvalStats()
    start = time.perf_counter()
    fn = compile_scalar(tree, pset, domain.rank)
    coords = [c.reshape(-1).astype(np.float64).tolist()
              for c in make_coordinate_tensors(domain)]
    values = list(map(fn, *coords))
    out = np.asarray(values, dtype=np.float32).reshape(domain.resolution)
    stats.primitive_applications = _function_nodes(tree) * domain.num_points
    stats.wall_time = time.perf_counter() - start
    return out, stats


# ---------------------------------------------------------------------------
# population-level fitness

def eval_population(pop: list[ex.Individual], target: np.ndarray, domain: DomainSpec,
                    pset: PrimitiveSet, cache: EvalCache | None = None,
                    engine: str = "vectorized") -> EvalStats:
    """Assign ``rmse(phenotype, target)`` as fitness to every individual.

    The cache, when given, persists across individuals within the call.
    Returns aggregate statistics (cache counters are deltas for this call).
    """
    if engine not in ("vectorized", "iterative"):
        raise ValueError(f"unknown engine {engine!r}")
    total = EvalStats()
    start = time.perf_counter()
    base_hits = cache.hits if cache is not None else 0
    base_misses = cache.misses if cache is not None else 0
    base_evictions = cache.evictions if cache is not None else 0
    for ind in pop:
        if engine == "vectorized":
            phenotype, stats = eval_vectorized(ind.tree, domain, pset, cache)
        else:
            phenotype, stats = eval_iterative(ind.tree, domain, pset)
        total.primitive_applications += stats.primitive_applications
        ind.fitness = rmse(phenotype, target)
        ind.depth = ex.depth(ind.tree)
        ind.nodes = ex.node_count(ind.tree)
        ind.valid = True
    if cache is not None:
        total.cache_hits = cache.hits - base_hits
        total.cache_misses = cache.misses - base_misses
        total.cache_evictions = cache.evictions - base_evictions
    total.wall_time = time.perf_counter() - start
    return total
