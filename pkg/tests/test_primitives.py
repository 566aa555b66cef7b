import math

import numpy as np
import pytest

from vecgp.primitives import (Primitive, PrimitiveSet, RANK_PLUS_ONE,
                              RegistrationError, default_set,
                              elementwise_names, warp_apply)
from vecgp.tensor import DomainSpec, make_coordinate_tensors


PSET = default_set()
DOMAIN = DomainSpec((8, 8))


def apply_op(name, *arrays):
    args = [np.asarray(a, dtype=np.float32) for a in arrays]
    return PSET.get(name).apply(args, DOMAIN)


def test_registry_contents():
    assert len(PSET) == 30
    assert len(elementwise_names()) == 29
    assert "warp" in PSET
    for name in elementwise_names():
        assert PSET.get(name).kind == "elementwise"
    assert PSET.get("warp").kind == "spatial"


def test_warp_arity_tracks_rank():
    warp = PSET.get("warp")
    assert warp.arity == RANK_PLUS_ONE
    assert warp.arity_for(2) == 3
    assert warp.arity_for(3) == 4
    assert PSET.get("add").arity_for(3) == 2


class TestProtection:
    def test_div_by_zero(self):
        out = apply_op("div", [1.0, -2.0, 0.0], [0.0, 0.0, 0.0])
        np.testing.assert_array_equal(out, np.float32([0, 0, 0]))

    def test_mod_by_zero(self):
        out = apply_op("mod", [5.0, -3.0], [0.0, 0.0])
        np.testing.assert_array_equal(out, np.float32([0, 0]))

    def test_log_nonpositive(self):
        out = apply_op("log", [-2.0, 0.0, 1.0])
        np.testing.assert_array_equal(out, np.float32([-1, -1, 0]))

    def test_pow_zero_zero(self):
        out = apply_op("pow", [0.0, 2.0], [0.0, 3.0])
        np.testing.assert_array_equal(out, np.float32([0, 8]))

    def test_pow_uses_abs_base(self):
        out = apply_op("pow", [-2.0], [2.0])
        np.testing.assert_array_equal(out, np.float32([4]))

    def test_sqrt_negative(self):
        out = apply_op("sqrt", [-4.0, 4.0])
        np.testing.assert_array_equal(out, np.float32([0, 2]))

    def test_sign_three_way(self):
        out = apply_op("sign", [-3.0, 0.0, 7.0])
        np.testing.assert_array_equal(out, np.float32([-1, 0, 1]))

    def test_step_boundary(self):
        out = apply_op("step", [-0.5, 0.0, 0.5])
        np.testing.assert_array_equal(out, np.float32([-1, 1, 1]))


class TestSemantics:
    def test_trig_scales_by_pi(self):
        out = apply_op("sin", [0.5])
        assert out[0] == pytest.approx(1.0, abs=1e-6)
        out = apply_op("cos", [1.0])
        assert out[0] == pytest.approx(-1.0, abs=1e-6)

    def test_mdist_is_average(self):
        out = apply_op("mdist", [1.0, 3.0], [3.0, -1.0])
        np.testing.assert_array_equal(out, np.float32([2, 1]))

    def test_clip_orders_bounds(self):
        # clip(hi, lo, value)
        out = apply_op("clip", [1.0, 1.0, 1.0], [-1.0, -1.0, -1.0],
                       [5.0, -5.0, 0.25])
        np.testing.assert_array_equal(out, np.float32([1, -1, 0.25]))

    def test_if_selects_on_sign(self):
        out = apply_op("if", [1.0, -1.0, 0.0], [10.0, 10.0, 10.0],
                       [20.0, 20.0, 20.0])
        np.testing.assert_array_equal(out, np.float32([10, 20, 10]))

    def test_lerp_endpoints(self):
        out = apply_op("lerp", [2.0, 2.0], [6.0, 6.0], [0.0, 0.25])
        np.testing.assert_array_equal(out, np.float32([2, 3]))

    def test_len_is_euclidean(self):
        out = apply_op("len", [3.0], [4.0])
        np.testing.assert_array_equal(out, np.float32([5]))

    def test_frac_in_unit_interval(self):
        rng = np.random.default_rng(3)
        x = (rng.standard_normal(10000) * 100).astype(np.float32)
        out = apply_op("frac", x)
        assert np.all(out >= 0.0) and np.all(out < 1.0)

    def test_smoothstep_fixpoints(self):
        for name in ("sstep", "sstepp"):
            out = apply_op(name, [0.0, 0.5, 1.0])
            np.testing.assert_allclose(out, [0, 0.5, 1], atol=1e-6)


class TestBitwise:
    def test_known_values(self):
        np.testing.assert_array_equal(apply_op("or", [5.0], [3.0]),
                                      np.float32([7]))
        np.testing.assert_array_equal(apply_op("xor", [5.0], [3.0]),
                                      np.float32([6]))
        np.testing.assert_array_equal(apply_op("and", [5.0], [3.0]),
                                      np.float32([1]))

    def test_truncates_toward_zero(self):
        np.testing.assert_array_equal(apply_op("and", [5.9], [3.9]),
                                      np.float32([1]))
        np.testing.assert_array_equal(apply_op("or", [-1.5], [0.0]),
                                      np.float32([-1]))

    def test_nonfinite_operands(self):
        out = apply_op("or", [math.nan, math.inf], [0.0, 0.0])
        assert out[0] == 0.0
        assert out[1] == np.float32(2**31 - 1)

    def test_clamps_to_int32_range(self):
        # operands beyond int32 clamp, so the result stays in int32 range
        out = apply_op("or", [1e12], [1.0])
        assert out[0] == np.float32(2**31 - 1)
        out = apply_op("xor", [-1e12], [0.0])
        assert out[0] == np.float32(-2**31)


class TestWarp:
    def test_identity_on_coordinates(self):
        coords = make_coordinate_tensors(DOMAIN)
        rng = np.random.default_rng(5)
        src = rng.standard_normal(DOMAIN.resolution).astype(np.float32)
        out = warp_apply([src] + coords, DOMAIN)
        np.testing.assert_array_equal(out, src)

    def test_constant_coordinates_broadcast_one_point(self):
        coords = make_coordinate_tensors(DOMAIN)
        src = np.arange(64, dtype=np.float32).reshape(8, 8)
        ones = np.ones_like(src)
        out = warp_apply([src, ones, ones], DOMAIN)
        assert np.all(out == src[7, 7])

    def test_out_of_range_coordinates_clamp(self):
        src = np.arange(64, dtype=np.float32).reshape(8, 8)
        big = np.full_like(src, 100.0)
        out = warp_apply([src, big, -big], DOMAIN)
        assert np.all(out == src[7, 0])

    def test_nonfinite_coordinates(self):
        src = np.arange(64, dtype=np.float32).reshape(8, 8)
        nans = np.full_like(src, np.nan)
        zeros = np.zeros_like(src)
        out = warp_apply([src, nans, zeros], DOMAIN)
        # nan indexes as the first grid cell along its axis
        assert np.all(out == src[0, 4])

    def test_wrong_argument_count(self):
        src = np.zeros((8, 8), dtype=np.float32)
        with pytest.raises(Exception):
            warp_apply([src, src], DOMAIN)


class TestRegistration:
    def test_register_returns_new_set(self):
        custom = Primitive(name="half", arity=1, kind="elementwise",
                           apply=lambda args, domain: args[0] * np.float32(0.5),
                           scalar=lambda x: x * 0.5)
        extended = PSET.register(custom)
        assert "half" in extended and "half" not in PSET
        assert len(extended) == len(PSET) + 1

    def test_duplicate_name_rejected(self):
        dup = Primitive(name="add", arity=2, kind="elementwise",
                        apply=lambda args, domain: args[0])
        with pytest.raises(RegistrationError):
            PSET.register(dup)

    def test_bad_arity_rejected(self):
        bad = Primitive(name="nullary", arity=0, kind="elementwise",
                        apply=lambda args, domain: args[0])
        with pytest.raises(RegistrationError):
            PSET.register(bad)
