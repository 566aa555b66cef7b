import random

import numpy as np
import pytest

from vecgp.expr import (Const, Func, Individual, ParseError, Var, depth,
                        get_node, iter_nodes, node_count, parse,
                        ramped_half_and_half, random_tree, replace_node,
                        subtree_hash, to_string)
from vecgp.primitives import default_set, elementwise_names

PSET = default_set()


def sample_tree(seed, max_depth=6):
    rng = random.Random(seed)
    return random_tree("grow", 1, max_depth, PSET, 2, rng, elementwise_names())


class TestStructure:
    def test_depth_of_leaf_is_zero(self):
        assert depth(Var(0)) == 0
        assert depth(Const(1.0)) == 0

    def test_depth_and_node_count(self):
        t = Func("add", [Var(0), Func("neg", [Const(2.0)])])
        assert depth(t) == 2
        assert node_count(t) == 4

    def test_const_quantized_to_float32(self):
        c = Const(0.1)
        assert c.value == float(np.float32(0.1))

    def test_structural_equality(self):
        a = Func("add", [Var(0), Const(0.5)])
        b = Func("add", [Var(0), Const(0.5)])
        assert a == b
        assert a != Func("add", [Var(1), Const(0.5)])

    def test_hash_agrees_with_equality(self):
        a = Func("mult", [Var(0), Var(1)])
        b = Func("mult", [Var(0), Var(1)])
        assert subtree_hash(a) == subtree_hash(b)
        assert subtree_hash(a) != subtree_hash(Func("add", [Var(0), Var(1)]))

    def test_hash_distinguishes_child_boundaries(self):
        # same leaf multiset, different arrangement
        a = Func("add", [Func("neg", [Var(0)]), Var(1)])
        b = Func("add", [Var(0), Func("neg", [Var(1)])])
        assert subtree_hash(a) != subtree_hash(b)

    def test_no_collisions_over_many_distinct_trees(self):
        seen = {}
        for i in range(200000):
            t = Func("add", [Const(float(i)), Var(0)])
            h = subtree_hash(t)
            assert h not in seen
            seen[h] = i


class TestTextRoundTrip:
    def test_simple(self):
        t = parse("add(x, mult(y, 0.5))", PSET, 2)
        assert to_string(t) == "add(x, mult(y, 0.5))"

    def test_random_trees_round_trip(self):
        for seed in range(300):
            t = sample_tree(seed)
            assert parse(to_string(t), PSET, 2) == t

    def test_awkward_constants_round_trip(self):
        for v in (0.1, 1e-7, -3.4e38, 1.1754944e-38, 123456.78, -0.0):
            t = Const(v)
            assert parse(to_string(t), PSET, 2) == t

    def test_extended_variables(self):
        t = parse("add(z, v3)", PSET, 4)
        assert isinstance(t.children[0], Var) and t.children[0].index == 2
        assert t.children[1].index == 3

    def test_whitespace_tolerated(self):
        assert parse(" add( x ,\ty ) ", PSET, 2) == parse("add(x,y)", PSET, 2)

    def test_scientific_notation(self):
        t = parse("1.5e-3", PSET, 2)
        assert t == Const(1.5e-3)


class TestParseErrors:
    @pytest.mark.parametrize("text,fragment", [
        ("bogus(x)", "unknown operator"),
        ("add(x)", "expects 2 arguments"),
        ("add(x, y, y)", "expects 2 arguments"),
        ("add(x, y", "expected"),
        ("add(x, y))", "trailing"),
        ("q", "unknown terminal"),
        ("z", "exceeds domain rank"),
        ("add(x, $)", "unexpected character"),
        ("", "expected expression"),
    ])
    def test_message(self, text, fragment):
        with pytest.raises(ParseError) as e:
            parse(text, PSET, 2)
        assert fragment in str(e.value)

    def test_position_points_at_offender(self):
        with pytest.raises(ParseError) as e:
            parse("add(x, bogus(y))", PSET, 2)
        assert e.value.position == 7


class TestRandomGeneration:
    def test_full_trees_reach_max_depth(self):
        for seed in range(20):
            rng = random.Random(seed)
            t = random_tree("full", 3, 3, PSET, 2, rng, elementwise_names())
            assert depth(t) == 3

    def test_grow_trees_respect_bounds(self):
        for seed in range(50):
            rng = random.Random(seed)
            t = random_tree("grow", 1, 5, PSET, 2, rng, elementwise_names())
            assert depth(t) <= 5

    def test_function_subset_respected(self):
        rng = random.Random(0)
        t = random_tree("full", 4, 4, PSET, 2, rng, ["add", "mult"])
        for node in iter_nodes(t):
            if isinstance(node, Func):
                assert node.name in ("add", "mult")

    def test_rhh_population_shape(self):
        rng = random.Random(1)
        pop = ramped_half_and_half(40, 2, 8, PSET, 2, rng, elementwise_names())
        assert len(pop) == 40
        depths = [ind.depth for ind in pop]
        assert max(depths) <= 8
        # ramp produces a spread of depths, not a single bucket
        assert len(set(depths)) >= 4

    def test_rhh_is_seed_deterministic(self):
        pop1 = ramped_half_and_half(20, 2, 6, PSET, 2, random.Random(9),
                                    elementwise_names())
        pop2 = ramped_half_and_half(20, 2, 6, PSET, 2, random.Random(9),
                                    elementwise_names())
        assert [to_string(a.tree) for a in pop1] == \
               [to_string(b.tree) for b in pop2]

    def test_rhh_rejects_tiny_population(self):
        with pytest.raises(ValueError):
            ramped_half_and_half(1, 2, 6, PSET, 2, random.Random(0))


class TestNodeAddressing:
    def test_iter_nodes_is_preorder(self):
        t = parse("add(neg(x), y)", PSET, 2)
        kinds = [to_string(n) for n in iter_nodes(t)]
        assert kinds == ["add(neg(x), y)", "neg(x)", "x", "y"]

    def test_get_node(self):
        t = parse("add(neg(x), y)", PSET, 2)
        assert to_string(get_node(t, 1)) == "neg(x)"
        assert to_string(get_node(t, 3)) == "y"
        with pytest.raises(IndexError):
            get_node(t, 4)

    def test_replace_node(self):
        t = parse("add(neg(x), y)", PSET, 2)
        out = replace_node(t, 2, Const(1.0))
        assert to_string(out) == "add(neg(1.0), y)"
        assert to_string(t) == "add(neg(x), y)"  # original untouched

    def test_replace_root(self):
        t = parse("add(x, y)", PSET, 2)
        assert replace_node(t, 0, Var(1)) == Var(1)

    def test_replace_shares_untouched_subtrees(self):
        t = parse("add(neg(x), sub(y, x))", PSET, 2)
        out = replace_node(t, 2, Const(0.0))
        assert out.children[1] is t.children[1]

    def test_replace_every_position_round_trips_count(self):
        t = sample_tree(11)
        n = node_count(t)
        for i in range(n):
            out = replace_node(t, i, Const(0.0))
            expected = n - node_count(get_node(t, i)) + 1
            assert node_count(out) == expected


def test_individual_from_tree():
    t = parse("add(x, y)", PSET, 2)
    ind = Individual.from_tree(t)
    assert (ind.depth, ind.nodes, ind.valid) == (1, 3, False)
    ind = Individual.from_tree(t, 0.5)
    assert ind.valid and ind.fitness == 0.5
