"""Cyclic planar rotation groups and their actions on images and group feature maps.

Rotations are counter-clockwise on arrays whose row index increases
downward, i.e. the convention of ``np.rot90`` applied to the two trailing
axes. Exact grid rotation is only available for quarter turns, so feature
map actions require an order dividing 4.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, permute, take

__all__ = [
    "RotationGroup",
    "GroupFeatureMap",
    "rotate90_spatial",
    "cyclic_shift_group",
    "group_act",
]


@dataclass(frozen=True)
class RotationGroup:
    """Rotations by 2*pi*k/order, k = 0..order-1."""

    order: int

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("group order must be a positive integer")

    @property
    def elements(self) -> range:
        return range(self.order)

    def compose(self, a: int, b: int) -> int:
        return (a + b) % self.order

    def inverse(self, a: int) -> int:
        return (-a) % self.order

    def angle(self, k: int) -> float:
        return 2 * np.pi * k / self.order

    def quarter_turns(self, k: int) -> int:
        """Number of 90-degree turns realising element ``k`` on the grid."""
        if 4 % self.order:
            raise ValueError(f"exact grid rotation needs order in {{1, 2, 4}}, got {self.order}")
        return (k % self.order) * (4 // self.order)

    @property
    def grid_exact(self) -> bool:
        return 4 % self.order == 0


@dataclass
class GroupFeatureMap:
    """Real features indexed (channel, group element, time, height, width)."""

    values: Tensor
    group: RotationGroup

    def __post_init__(self):
        if self.values.ndim != 5:
            raise ValueError(f"group feature map must be 5-D, got shape {self.values.shape}")
        if self.values.shape[1] != self.group.order:
            raise ValueError(
                f"group axis has extent {self.values.shape[1]}, group order is {self.group.order}")

    @property
    def shape(self):
        return self.values.shape


def rotate90_spatial(x, quarter_turns: int):
    """Rotate the trailing (H, W) planes counter-clockwise by ``quarter_turns``.

    Works on numpy arrays and (differentiably) on tensors.
    """
    shape = x.shape
    if shape[-1] != shape[-2]:
        raise ValueError(f"rotation needs square planes, got {shape[-2]}x{shape[-1]}")
    k = quarter_turns % 4
    if not isinstance(x, Tensor):
        return np.rot90(x, k, axes=(-2, -1))
    if k == 0:
        return x
    n = x.ndim
    swap = tuple(range(n - 2)) + (n - 1, n - 2)
    rev = np.arange(shape[-1])[::-1]
    if k == 1:
        return take(permute(x, swap), rev, axis=n - 2)
    if k == 2:
        return take(take(x, rev, axis=n - 2), rev, axis=n - 1)
    return take(permute(x, swap), rev, axis=n - 1)


def cyclic_shift_group(f, offset: int, axis: int = 1):
    """Output sub-channel g holds input sub-channel (g - offset) mod N."""
    values = f.values if isinstance(f, GroupFeatureMap) else f
    n = values.shape[axis]
    idx = (np.arange(n) - offset) % n
    if isinstance(values, Tensor):
        out = take(values, idx, axis=axis)
    else:
        out = np.take(values, idx, axis=axis)
    if isinstance(f, GroupFeatureMap):
        return GroupFeatureMap(out, f.group)
    return out


def group_act(x, g: int, representation: str = "base", group: RotationGroup | None = None):
    """Act with group element ``g`` on an image (``base``) or a feature map (``regular``).

    ``base`` rotates the spatial planes only. ``regular`` additionally shifts
    the group axis cyclically; it expects a :class:`GroupFeatureMap` or an
    array laid out (C, N_G, T, H, W).
    """
    if representation == "base":
        if isinstance(x, GroupFeatureMap):
            raise TypeError("base representation acts on plain images, not group feature maps")
        order = group.order if group is not None else 4
        return rotate90_spatial(x, RotationGroup(order).quarter_turns(g))
    if representation == "regular":
        if isinstance(x, GroupFeatureMap):
            grp = x.group
            shifted = cyclic_shift_group(x.values, g % grp.order)
            return GroupFeatureMap(rotate90_spatial(shifted, grp.quarter_turns(g)), grp)
        if x.ndim != 5:
            raise TypeError("regular representation needs a (C, N_G, T, H, W) feature map")
        grp = group if group is not None else RotationGroup(x.shape[1])
        shifted = cyclic_shift_group(x, g % grp.order)
        return rotate90_spatial(shifted, grp.quarter_turns(g))
    raise ValueError(f"unknown representation {representation!r}")
