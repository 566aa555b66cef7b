"""Genotype representation: expression trees over the operator registry.

Trees are immutable after construction; subtree sharing between trees is
safe and exploited by the variation operators.  The prefix grammar
(``add(x, mult(y, 0.5))``) is the single text format used by population
files, state files and the command line.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass, field

import numpy as np

from .primitives import PrimitiveSet

_VAR_NAMES = "xyzw"


class ParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class Var:
    __slots__ = ("index", "_hash64", "_depth", "_nodes")

    def __init__(self, index: int):
        self.index = index
        self._hash64 = None
        self._depth = 0
        self._nodes = 1

    children = ()

    def __eq__(self, other):
        return isinstance(other, Var) and other.index == self.index

    def __hash__(self):
        return hash(("v", self.index))

    def __repr__(self):
        return f"Var({self.index})"


class Const:
    __slots__ = ("value", "_hash64", "_depth", "_nodes")

    def __init__(self, value: float):
        # constants live in float32, like everything evaluated
        self.value = float(np.float32(value))
        self._hash64 = None
        self._depth = 0
        self._nodes = 1

    children = ()

    def __eq__(self, other):
        if not isinstance(other, Const):
            return False
        return struct.pack("<f", self.value) == struct.pack("<f", other.value)

    def __hash__(self):
        return hash(("c", struct.pack("<f", self.value)))

    def __repr__(self):
        return f"Const({self.value})"


class Func:
    __slots__ = ("name", "children", "_hash64", "_depth", "_nodes")

    def __init__(self, name: str, children):
        self.name = name
        self.children = tuple(children)
        self._hash64 = None
        self._depth = None
        self._nodes = None

    def __eq__(self, other):
        return (isinstance(other, Func) and other.name == self.name
                and other.children == self.children)

    def __hash__(self):
        return hash(("f", self.name, self.children))

    def __repr__(self):
        return f"Func({self.name}, {list(self.children)})"


ProgramTree = Var | Const | Func


def depth(tree: ProgramTree) -> int:
    """Single node has depth 0."""
    if tree._depth is None:
        tree._depth = 1 + max(depth(c) for c in tree.children)
    return tree._depth


def node_count(tree: ProgramTree) -> int:
    if tree._nodes is None:
        tree._nodes = 1 + sum(node_count(c) for c in tree.children)
    return tree._nodes


def _digest(tree: ProgramTree) -> bytes:
    if tree._hash64 is None:
        h = hashlib.blake2b(digest_size=8)
        if isinstance(tree, Var):
            h.update(b"v")
            h.update(tree.index.to_bytes(4, "little"))
        elif isinstance(tree, Const):
            h.update(b"c")
            h.update(struct.pack("<f", tree.value))
        else:
            h.update(b"f")
            h.update(tree.name.encode())
            h.update(b"(")
            for c in tree.children:
                h.update(_digest(c))
        tree._hash64 = h.digest()
    return tree._hash64


def subtree_hash(tree: ProgramTree) -> int:
    """Structural 64-bit hash; equal trees always hash equal."""
    return int.from_bytes(_digest(tree), "little")


# ---------------------------------------------------------------------------
# text form

def var_token(index: int) -> str:
    return _VAR_NAMES[index] if index < 4 else f"v{index}"


def to_string(tree: ProgramTree) -> str:
    if isinstance(tree, Var):
        return var_token(tree.index)
    if isinstance(tree, Const):
        # shortest digits that uniquely identify the float32 value
        return np.format_float_positional(np.float32(tree.value), unique=True,
                                          trim="0")
    args = ", ".join(to_string(c) for c in tree.children)
    return f"{tree.name}({args})"


_TOKEN_RE = re.compile(r"""
    (?P<num>[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<lpar>\() | (?P<rpar>\)) | (?P<comma>,) | (?P<ws>\s+)
""", re.VERBOSE)


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            out.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


def _var_index(name: str, rank: int, pos: int) -> int:
    if len(name) == 1 and name in _VAR_NAMES:
        idx = _VAR_NAMES.index(name)
    elif name[0] == "v" and name[1:].isdigit():
        idx = int(name[1:])
    else:
        return -1
    if idx >= rank:
        raise ParseError(f"variable {name!r} exceeds domain rank {rank}", pos)
    return idx


def parse(text: str, pset: PrimitiveSet, rank: int) -> ProgramTree:
    """Parse prefix notation against the registered operator set."""
    tokens = _tokenize(text)
    i = 0

    def expect(kind):
        nonlocal i
        tkind, tval, tpos = tokens[i]
        if tkind != kind:
            raise ParseError(f"expected {kind!r}, found {tval or 'end of input'!r}", tpos)
        i += 1
        return tval, tpos

    def expression() -> ProgramTree:
        nonlocal i
        kind, value, pos = tokens[i]
        if kind == "num":
            i += 1
            return Const(float(value))
        if kind != "name":
            raise ParseError(f"expected expression, found {value or 'end of input'!r}", pos)
        i += 1
        if tokens[i][0] != "lpar":
            idx = _var_index(value, rank, pos)
            if idx < 0:
                raise ParseError(f"unknown terminal {value!r}", pos)
            return Var(idx)
        if value not in pset:
            raise ParseError(f"unknown operator {value!r}", pos)
        prim = pset.get(value)
        arity = prim.arity_for(rank)
        expect("lpar")
        children = [expression()]
        while tokens[i][0] == "comma":
            i += 1
            children.append(expression())
        _, rpos = expect("rpar")
        if len(children) != arity:
            raise ParseError(
                f"operator {value!r} expects {arity} arguments, got {len(children)}", rpos)
        return Func(value, children)

    tree = expression()
    kind, value, pos = tokens[i]
    if kind != "end":
        raise ParseError(f"unexpected trailing input {value!r}", pos)
    return tree


# ---------------------------------------------------------------------------
# random generation

@dataclass
class Individual:
    tree: ProgramTree
    fitness: float | None = None
    depth: int = 0
    nodes: int = 0
    valid: bool = False

    @classmethod
    def from_tree(cls, tree: ProgramTree, fitness: float | None = None) -> "Individual":
        return cls(tree=tree, fitness=fitness, depth=depth(tree),
                   nodes=node_count(tree), valid=fitness is not None)


def _terminal(rank: int, rng) -> ProgramTree:
    # uniform among the rank variables plus one ephemeral-constant slot
    pick = rng.randrange(rank + 1)
    if pick < rank:
        return Var(pick)
    return Const(rng.uniform(-1.0, 1.0))


def random_tree(method: str, min_depth: int, max_depth: int, pset: PrimitiveSet,
                rank: int, rng, functions: list[str] | None = None) -> ProgramTree:
    """Build a random tree; ``full`` puts every leaf at exactly ``max_depth``,
    ``grow`` lets branches terminate anywhere in ``[min_depth, max_depth]``."""
    if not 0 <= min_depth <= max_depth:
        raise ValueError("need 0 <= min_depth <= max_depth")
    if functions is None:
        functions = pset.names()
    n_term = rank + 1

    def build(d: int) -> ProgramTree:
        if d >= max_depth or not functions:
            return _terminal(rank, rng)
        if method == "full" or d < min_depth:
            name = functions[rng.randrange(len(functions))]
        else:
            # grow: uniform among functions and terminal options
            pick = rng.randrange(len(functions) + n_term)
            if pick >= len(functions):
                return _terminal(rank, rng)
            name = functions[pick]
        arity = pset.get(name).arity_for(rank)
        return Func(name, [build(d + 1) for _ in range(arity)])

    return build(0)


def ramped_half_and_half(pop_size: int, min_depth: int, max_depth: int,
                         pset: PrimitiveSet, rank: int, rng,
                         functions: list[str] | None = None) -> list[Individual]:
    """Depth targets ramp over [min_depth, max_depth]; each bucket is half
    'full' and half 'grow' trees."""
    if pop_size < 2:
        raise ValueError("pop_size must be >= 2")
    n_levels = max_depth - min_depth + 1
    out = []
    bucket_fill = {}
    for i in range(pop_size):
        target = min_depth + (i * n_levels) // pop_size
        k = bucket_fill.get(target, 0)
        bucket_fill[target] = k + 1
        method = "full" if k % 2 == 0 else "grow"
        tree = random_tree(method, min(1, target), target, pset, rank, rng, functions)
        out.append(Individual.from_tree(tree))
    return out


# ---------------------------------------------------------------------------
# node addressing (used by crossover/mutation)

def iter_nodes(tree: ProgramTree):
    """Preorder traversal."""
    stack = [tree]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def get_node(tree: ProgramTree, index: int) -> ProgramTree:
    for i, node in enumerate(iter_nodes(tree)):
        if i == index:
            return node
    raise IndexError(index)


def replace_node(tree: ProgramTree, index: int, replacement: ProgramTree) -> ProgramTree:
    """Return a new tree with the preorder-``index`` node swapped out;
    untouched subtrees are shared with the original."""
    counter = [0]

    def rebuild(node: ProgramTree) -> ProgramTree:
        my_index = counter[0]
        counter[0] += 1
        if my_index == index:
            # skip the subtree being replaced in the preorder count
            counter[0] += node_count(node) - 1
            return replacement
        if not node.children:
            return node
        end = my_index + node_count(node)
        if not (my_index < index < end):
            counter[0] = end
            return node
        return Func(node.name, [rebuild(c) for c in node.children])

    if index == 0:
        return replacement
    if index >= node_count(tree):
        raise IndexError(index)
    return rebuild(tree)
