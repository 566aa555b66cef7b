"""Operator set: protected vectorized kernels plus scalar counterparts.

Every operator exists in two forms that implement the same protection
rules: a vectorized kernel applied to whole float32 tensors (through
``map_elementwise``) and a scalar float64 function used by the per-point
interpreter.  ``warp`` is the one spatial operator; everything else is
purely elementwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .tensor import DomainSpec, ShapeError, check_same_shape, map_elementwise

PI = math.pi
_I32_MIN = -(2**31)
_I32_MAX = 2**31 - 1

# Sentinel arity for warp: one source tensor plus one coordinate tensor
# per domain axis.
RANK_PLUS_ONE = -1


class RegistrationError(ValueError):
    """Rejected primitive registration (duplicate name or bad arity)."""


# ---------------------------------------------------------------------------
# vectorized kernels (operate on float32 chunks, protection included)

# Transcendentals are computed in float64 and rounded to float32 on output:
# numpy's single-precision SIMD routines are a few ulp off, which would make
# the vectorized and per-point engines drift apart.  Algebraic float32 ops
# (+ - * / sqrt) are correctly rounded in hardware and stay in float32.

def _v_div(x, y):
    out = np.zeros_like(x)
    np.divide(x, y, out=out, where=(y != 0))
    return out


def _v_trig(fn):
    pi32 = np.float64(np.float32(np.pi))

    def kernel(x):
        arg = (pi32 * x.astype(np.float64)).astype(np.float32)
        return fn(arg.astype(np.float64))
    return kernel


def _v_exp(x):
    return np.exp(x.astype(np.float64))


def _v_log(x):
    x64 = x.astype(np.float64)
    out = np.full_like(x64, -1.0)
    np.log(x64, out=out, where=(x64 > 0))
    return out


def _v_pow(x, y):
    r = np.power(np.abs(x.astype(np.float64)), y.astype(np.float64))
    return np.where((x == 0) & (y == 0), 0.0, r)


def _v_sqrt(x):
    out = np.zeros_like(x)
    np.sqrt(x, out=out, where=(x >= 0))
    return out


def _v_mod(x, y):
    x64, y64 = x.astype(np.float64), y.astype(np.float64)
    out = np.zeros_like(x64)
    np.mod(x64, y64, out=out, where=(y64 != 0))
    return out


def _v_frac(x):
    x64 = x.astype(np.float64)
    r = (x64 - np.floor(x64)).astype(np.float32)
    # float rounding can push x - floor(x) to exactly 1.0 for tiny negatives
    return np.where(r >= 1.0, np.float32(0.0), r)


def _v_if(x, y, z):
    return np.where(x >= 0, y, z)


def _to_i64(x):
    # clamp in float64: the int32 bounds are not float32-representable
    xi = np.nan_to_num(np.trunc(x.astype(np.float64)),
                       nan=0.0, posinf=_I32_MAX, neginf=_I32_MIN)
    return np.clip(xi, _I32_MIN, _I32_MAX).astype(np.int64)


def _v_bit(op):
    def kernel(x, y):
        return op(_to_i64(x), _to_i64(y)).astype(np.float32)
    return kernel


def _v_step(x):
    return np.where(x < 0, np.float32(-1.0), np.float32(1.0))


def _v_sstep(x):
    return x * x * (np.float32(3.0) - np.float32(2.0) * x)


def _v_sstepp(x):
    return x * x * x * (x * (np.float32(6.0) * x - np.float32(15.0)) + np.float32(10.0))


def _v_len(x, y):
    return np.sqrt(x * x + y * y)


def _v_lerp(x, y, z):
    return x + (y - x) * _v_frac(z)


_PI32 = np.float32(PI)

_ELEMENTWISE_KERNELS: dict[str, tuple[int, Callable]] = {
    "add": (2, lambda x, y: x + y),
    "sub": (2, lambda x, y: x - y),
    "mult": (2, lambda x, y: x * y),
    "div": (2, _v_div),
    "sin": (1, _v_trig(np.sin)),
    "cos": (1, _v_trig(np.cos)),
    "tan": (1, _v_trig(np.tan)),
    "exp": (1, _v_exp),
    "log": (1, _v_log),
    "pow": (2, _v_pow),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
    "mdist": (2, lambda x, y: (x + y) * np.float32(0.5)),
    "neg": (1, np.negative),
    "sqrt": (1, _v_sqrt),
    "sign": (1, np.sign),
    "abs": (1, np.abs),
    "clip": (3, lambda x, y, z: np.maximum(np.minimum(z, x), y)),
    "mod": (2, _v_mod),
    "frac": (1, _v_frac),
    "if": (3, _v_if),
    "or": (2, _v_bit(np.bitwise_or)),
    "xor": (2, _v_bit(np.bitwise_xor)),
    "and": (2, _v_bit(np.bitwise_and)),
    "step": (1, _v_step),
    "sstep": (1, _v_sstep),
    "sstepp": (1, _v_sstepp),
    "len": (2, _v_len),
    "lerp": (3, _v_lerp),
}


def warp_apply(args: list[np.ndarray], domain: DomainSpec) -> np.ndarray:
    """Gather: remap every point of the source through coordinate tensors.

    Each coordinate value is converted back to a grid index along its axis
    (rounded, clamped to the valid range).
    """
    source, coords = args[0], args[1:]
    if len(coords) != domain.rank:
        raise ShapeError(f"warp needs {domain.rank + 1} arguments, got {len(args)}")
    check_same_shape(source, *coords)
    lo, hi = domain.range_lo, domain.range_hi
    indices = []
    for d, c in enumerate(coords):
        res = domain.resolution[d]
        with np.errstate(all="ignore"):
            idx = np.rint((c.astype(np.float64) - lo) / (hi - lo) * (res - 1))
        idx = np.nan_to_num(idx, nan=0.0, posinf=res - 1, neginf=0.0)
        indices.append(np.clip(idx, 0, res - 1).astype(np.intp))
    return source[tuple(indices)]


# ---------------------------------------------------------------------------
# scalar counterparts (float64; same protection rules; never raise)

def s_div(x, y):
    return 0.0 if y == 0.0 else x / y


def s_sin(x):
    try:
        return math.sin(PI * x)
    except ValueError:
        return math.nan


def s_cos(x):
    try:
        return math.cos(PI * x)
    except ValueError:
        return math.nan


def s_tan(x):
    try:
        return math.tan(PI * x)
    except ValueError:
        return math.nan


def s_exp(x):
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def s_log(x):
    return math.log(x) if x > 0.0 else -1.0


def s_pow(x, y):
    if x == 0.0 and y == 0.0:
        return 0.0
    try:
        return abs(x) ** y
    except OverflowError:
        return math.inf
    except ZeroDivisionError:
        return math.inf


def s_min(x, y):
    if x != x or y != y:
        return math.nan
    return x if x < y else y


def s_max(x, y):
    if x != x or y != y:
        return math.nan
    return x if x > y else y


def s_mdist(x, y):
    return (x + y) * 0.5


def s_sqrt(x):
    return math.sqrt(x) if x >= 0.0 else 0.0


def s_sign(x):
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0 if x == 0.0 else math.nan


def s_clip(x, y, z):
    if x != x or y != y or z != z:
        return math.nan
    return max(min(z, x), y)


def s_mod(x, y):
    if y == 0.0:
        return 0.0
    try:
        return x % y
    except (ValueError, ZeroDivisionError):
        return math.nan


def s_frac(x):
    try:
        r = x - math.floor(x)
    except (ValueError, OverflowError):
        return math.nan
    return 0.0 if r >= 1.0 else r


def s_if(x, y, z):
    return y if x >= 0.0 else z


def _s_i32(x):
    if x != x:
        return 0
    if x >= _I32_MAX:
        return _I32_MAX
    if x <= _I32_MIN:
        return _I32_MIN
    return int(x)


def s_or(x, y):
    return float(_s_i32(x) | _s_i32(y))


def s_xor(x, y):
    return float(_s_i32(x) ^ _s_i32(y))


def s_and(x, y):
    return float(_s_i32(x) & _s_i32(y))


def s_step(x):
    return -1.0 if x < 0.0 else 1.0


def s_sstep(x):
    return x * x * (3.0 - 2.0 * x)


def s_sstepp(x):
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0)


def s_len(x, y):
    try:
        return math.sqrt(x * x + y * y)
    except ValueError:
        return math.nan


def s_lerp(x, y, z):
    return x + (y - x) * s_frac(z)


def s_neg(x):
    return -x


def s_add(x, y):
    return x + y


def s_sub(x, y):
    return x - y


def s_mult(x, y):
    return x * y


def s_abs(x):
    return abs(x)


SCALAR_FUNCS: dict[str, Callable] = {
    "add": s_add, "sub": s_sub, "mult": s_mult, "div": s_div,
    "sin": s_sin, "cos": s_cos, "tan": s_tan,
    "exp": s_exp, "log": s_log, "pow": s_pow,
    "min": s_min, "max": s_max, "mdist": s_mdist,
    "neg": s_neg, "sqrt": s_sqrt, "sign": s_sign, "abs": s_abs,
    "clip": s_clip, "mod": s_mod, "frac": s_frac,
    "if": s_if, "or": s_or, "xor": s_xor, "and": s_and,
    "step": s_step, "sstep": s_sstep, "sstepp": s_sstepp,
    "len": s_len, "lerp": s_lerp,
}


# ---------------------------------------------------------------------------
# registry

@dataclass(frozen=True)
class Primitive:
    name: str
    arity: int  # RANK_PLUS_ONE for warp-style operators
    kind: str  # "elementwise" | "spatial"
    apply: Callable[[list[np.ndarray], DomainSpec], np.ndarray]
    scalar: Callable | None = None

    def arity_for(self, rank: int) -> int:
        return rank + 1 if self.arity == RANK_PLUS_ONE else self.arity


class PrimitiveSet:
    """Immutable name -> Primitive registry."""

    def __init__(self, entries: dict[str, Primitive]):
        self._entries = dict(entries)

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, name: str) -> Primitive:
        return self._entries[name]

    def names(self) -> list[str]:
        return list(self._entries)

    def register(self, p: Primitive) -> "PrimitiveSet":
        """Return a new set with ``p`` added."""
        if p.name in self._entries:
            raise RegistrationError(f"operator {p.name!r} already registered")
        if p.arity != RANK_PLUS_ONE and p.arity < 1:
            raise RegistrationError(f"operator {p.name!r} must have arity >= 1")
        entries = dict(self._entries)
        entries[p.name] = p
        return PrimitiveSet(entries)


def _elementwise_primitive(name: str, arity: int, kernel: Callable) -> Primitive:
    def apply(args, domain):
        return map_elementwise(kernel, args)

    return Primitive(name=name, arity=arity, kind="elementwise", apply=apply,
                     scalar=SCALAR_FUNCS.get(name))


_DEFAULT: PrimitiveSet | None = None


def default_set() -> PrimitiveSet:
    """The full 30-operator set."""
    global _DEFAULT
    if _DEFAULT is None:
        entries = {}
        for name, (arity, kernel) in _ELEMENTWISE_KERNELS.items():
            entries[name] = _elementwise_primitive(name, arity, kernel)
        entries["warp"] = Primitive(name="warp", arity=RANK_PLUS_ONE, kind="spatial",
                                    apply=warp_apply)
        _DEFAULT = PrimitiveSet(entries)
    return _DEFAULT


def elementwise_names() -> list[str]:
    return list(_ELEMENTWISE_KERNELS)
