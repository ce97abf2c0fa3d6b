import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from equicine.autodiff import Tape, Tensor, mul, tsum
from equicine.group import GroupFeatureMap, RotationGroup, cyclic_shift_group, group_act, rotate90_spatial


def test_group_table():
    g = RotationGroup(4)
    assert [g.compose(a, b) for a, b in [(1, 3), (2, 3), (0, 1)]] == [0, 1, 1]
    assert [g.inverse(k) for k in g.elements] == [0, 3, 2, 1]
    assert g.quarter_turns(1) == 1 and RotationGroup(2).quarter_turns(1) == 2
    with pytest.raises(ValueError):
        RotationGroup(8).quarter_turns(1)
    with pytest.raises(ValueError):
        RotationGroup(0)


def test_rotate_ccw_example():
    assert np.array_equal(rotate90_spatial(np.array([[1, 2], [3, 4]]), 1), [[2, 4], [1, 3]])


def test_rotation_identity_cycle_and_errors():
    x = np.random.default_rng(0).normal(size=(2, 3, 5, 5))
    assert np.array_equal(rotate90_spatial(x, 0), x)
    y = x
    for _ in range(4):
        y = rotate90_spatial(y, 1)
    assert np.array_equal(y, x)
    with pytest.raises(ValueError):
        rotate90_spatial(np.zeros((3, 4)), 1)


@pytest.mark.parametrize("k", range(-2, 6))
def test_tensor_rotation_matches_numpy_and_differentiates(k):
    rng = np.random.default_rng(k + 10)
    x = Tensor(rng.normal(size=(2, 4, 4)), requires_grad=True)
    w = rng.normal(size=(2, 4, 4))
    assert np.array_equal(rotate90_spatial(x, k).data, np.rot90(x.data, k, axes=(-2, -1)))
    with Tape() as tape:
        loss = tsum(mul(rotate90_spatial(x, k), w))
        g = tape.backward(loss, [x])[x].data
    # the adjoint of a rotation is the inverse rotation
    assert np.array_equal(g, np.rot90(w, -k, axes=(-2, -1)))


def test_cyclic_shift_examples():
    f = np.arange(4.0).reshape(1, 4, 1, 1, 1)
    assert cyclic_shift_group(f, 1)[0, :, 0, 0, 0].tolist() == [3.0, 0.0, 1.0, 2.0]
    assert np.array_equal(cyclic_shift_group(f, 0), f)
    assert np.array_equal(cyclic_shift_group(cyclic_shift_group(f, 2), 2), f)


def test_group_act_identity_and_type_errors():
    rng = np.random.default_rng(1)
    img = rng.normal(size=(2, 3, 6, 6))
    assert np.array_equal(group_act(img, 0, "base"), img)
    fmap = GroupFeatureMap(rng.normal(size=(2, 4, 3, 6, 6)), RotationGroup(4))
    with pytest.raises(TypeError):
        group_act(fmap, 1, "base")
    with pytest.raises(TypeError):
        group_act(img, 1, "regular")
    with pytest.raises(ValueError):
        GroupFeatureMap(np.zeros((2, 3, 1, 4, 4)), RotationGroup(4))
    back = group_act(group_act(fmap, 1, "regular"), 3, "regular")
    assert np.array_equal(back.values, fmap.values)


@pytest.mark.parametrize("order", [1, 2, 4])
def test_regular_action_is_a_homomorphism(order):
    grp = RotationGroup(order)
    f = GroupFeatureMap(np.random.default_rng(order).normal(size=(2, order, 2, 5, 5)), grp)
    for g1 in grp.elements:
        for g2 in grp.elements:
            lhs = group_act(group_act(f, g1, "regular"), g2, "regular").values
            rhs = group_act(f, grp.compose(g1, g2), "regular").values
            assert np.array_equal(lhs, rhs)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(0, 3))
def test_action_is_an_entry_permutation(seed, g):
    f = np.random.default_rng(seed).normal(size=(2, 4, 2, 5, 5))
    out = group_act(f, g, "regular")
    assert np.array_equal(np.sort(out, axis=None), np.sort(f, axis=None))
    assert np.array_equal(rotate90_spatial(np.tanh(f), g), np.tanh(rotate90_spatial(f, g)))
