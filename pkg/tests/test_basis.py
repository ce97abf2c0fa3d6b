import numpy as np
import pytest

from equicine.autodiff import Tape, Tensor, finite_difference_gradient, mul, tsum
from equicine.basis import (build_basis_1d, build_basis_2d, build_delta_basis, build_delta_basis_1d,
                            synthesize_filters)
from equicine.group import RotationGroup

G4 = RotationGroup(4)


def test_p1_is_single_constant():
    b = build_basis_2d(1, G4)
    assert b.n_basis == 1
    assert np.array_equal(b.sampled, np.ones((1, 4, 1, 1)))


@pytest.mark.parametrize("p, count", [(1, 1), (3, 5), (5, 13), (7, 29)])
def test_basis_counts_and_full_rank_on_disc(p, count):
    b = build_basis_2d(p, G4)
    assert b.n_basis == count
    on_disc = b.sampled[:, 0][:, b.support]
    assert np.linalg.matrix_rank(on_disc) == count
    assert np.all(b.sampled[:, :, ~b.support] == 0)
    assert np.allclose(np.sqrt((b.sampled[:, 0] ** 2).sum(axis=(-2, -1))), 1.0)


def test_constant_basis_is_isotropic():
    b = build_basis_2d(3, G4)
    const = b.sampled[b.functions.index(("const", 0, 0))]
    for g in G4.elements:
        assert np.array_equal(const[g], const[0])


def test_x_frequency_rotates_into_y_frequency():
    b = build_basis_2d(3, G4)
    cx = b.sampled[b.functions.index(("cos", 1, 0))]
    cy = b.sampled[b.functions.index(("cos", 0, 1))]
    assert np.allclose(cx[1], cy[0], atol=1e-15)
    # closed form: cos(2*pi/3 * y) on the plus-shaped disc, unit-normalised
    y = np.array([[1, 1, 1], [0, 0, 0], [-1, -1, -1]])
    ref = np.where(b.support, np.cos(2 * np.pi / 3 * y), 0.0)
    assert np.allclose(cy[0], ref / np.linalg.norm(ref))


@pytest.mark.parametrize("p", [3, 5, 7])
@pytest.mark.parametrize("order", [1, 2, 4])
def test_sampled_stack_is_exact_rotation(p, order):
    grp = RotationGroup(order)
    for build in (build_basis_2d, build_delta_basis):
        b = build(p, grp)
        for g in grp.elements:
            rot = np.rot90(b.sampled[:, 0], grp.quarter_turns(g), axes=(-2, -1))
            assert np.max(np.abs(b.sampled[:, g] - rot)) <= 1e-12


def test_eight_fold_group_builds():
    b = build_basis_2d(5, RotationGroup(8))
    assert b.sampled.shape == (13, 8, 5, 5)
    with pytest.raises(ValueError):
        build_delta_basis(3, RotationGroup(8))


def test_even_sizes_rejected():
    for fn in (lambda: build_basis_2d(4, G4), lambda: build_basis_1d(2), lambda: build_delta_basis(2, G4),
               lambda: build_delta_basis_1d(4)):
        with pytest.raises(ValueError):
            fn()


@pytest.mark.parametrize("p_t, count", [(1, 1), (3, 3), (5, 5)])
def test_1d_basis_count_and_orthogonality(p_t, count):
    b = build_basis_1d(p_t)
    assert b.n_basis == count
    gram = b.sampled @ b.sampled.T
    assert np.allclose(gram, np.eye(count), atol=1e-12)


def test_synthesis_examples_and_linearity():
    b = build_basis_2d(3, G4)
    assert np.array_equal(synthesize_filters(np.zeros((2, 2, 5)), b).data, np.zeros((2, 2, 4, 3, 3)))
    c = np.zeros((1, 1, 5))
    c[..., 0] = 2.0
    f = synthesize_filters(c, b).data
    assert np.allclose(f[0, 0][:, b.support], 2.0 / np.sqrt(5))
    rng = np.random.default_rng(0)
    c = rng.normal(size=(3, 2, 5))
    assert np.allclose(synthesize_filters(2.5 * c, b).data, 2.5 * synthesize_filters(c, b).data)
    with pytest.raises(ValueError):
        synthesize_filters(np.zeros((1, 1, 4)), b)


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("p", [3, 5])
def test_synthesized_filters_rotate_exactly(seed, p):
    b = build_basis_2d(p, G4)
    f = synthesize_filters(np.random.default_rng(seed).normal(size=(2, 3, b.n_basis)), b).data
    for g in G4.elements:
        assert np.max(np.abs(f[:, :, g] - np.rot90(f[:, :, 0], g, axes=(-2, -1)))) <= 1e-12


def test_coefficient_gradient_matches_finite_differences():
    b = build_basis_2d(5, G4)
    rng = np.random.default_rng(4)
    c = Tensor(rng.normal(size=(2, b.n_basis)), requires_grad=True)
    w = rng.normal(size=(2, 4, 5, 5))

    def f(t):
        return tsum(mul(mul(synthesize_filters(t, b), synthesize_filters(t, b)), w))

    with Tape() as tape:
        g = tape.backward(f(c), [c])[c].data
    fd = finite_difference_gradient(f, c).data
    assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) <= 1e-6
