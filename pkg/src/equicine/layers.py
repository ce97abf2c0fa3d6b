"""Rotation-equivariant (2+1)D convolution layers.

Every layer builds one dense correlation kernel from a small set of
learnable coefficients and hands it to :func:`correlate`. The group
structure lives entirely in how that kernel is assembled:

* input:        K[(o, g), c]        = filter(o, c) rotated to g
* intermediate: K[(o, b), (c, a)]   = filter(o, c, slot (a-b) mod N) rotated to b
* temporal:     K[(o, d), (c, a)]   = 1D filter(o, c, offset (a-d) mod N)
* output:       K[o, (c, d)]        = filter(o, c) rotated to d

Feature maps are laid out (C, N_G, T, H, W). Plain convolutional networks
are the special case N_G = 1 with raw-tap bases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (Tensor, add, correlate, init_params, leaky_relu,
                       mul, permute, reshape, take)
from .basis import (FourierBasis1D, FourierBasis2D, build_basis_1d,
                    build_basis_2d, build_delta_basis, build_delta_basis_1d,
                    synthesize_filters)
from .group import RotationGroup

__all__ = [
    "SrecLayer",
    "SrecBlock",
    "make_layer",
    "layer_kernel",
    "layer_forward",
    "input_layer_forward",
    "intermediate_layer_forward",
    "temporal_layer_forward",
    "output_layer_forward",
    "srec_block_forward",
    "build_block",
]

KINDS = ("input", "intermediate", "temporal", "temporal_naive", "output")


@dataclass
class SrecLayer:
    kind: str
    c_in: int
    c_out: int
    group: RotationGroup
    basis: FourierBasis2D | FourierBasis1D
    coeffs: Tensor
    bias: Tensor | None = None
    circular_time: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    @property
    def params(self) -> list[Tensor]:
        return [self.coeffs] + ([self.bias] if self.bias is not None else [])

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    @property
    def expanded_size(self) -> int:
        """Entries of the dense kernel the coefficients expand into (plus bias)."""
        n = self.group.order
        if self.kind in ("temporal", "temporal_naive"):
            taps = self.basis.size
        else:
            taps = self.basis.size ** 2
        rows = self.c_out * (1 if self.kind == "output" else n)
        cols = self.c_in * (1 if self.kind == "input" else n)
        return rows * cols * taps + (self.bias.size if self.bias is not None else 0)


def _coeff_shape(kind, c_in, c_out, n, n_basis):
    if kind in ("input", "output"):
        return (c_out, c_in, n_basis)
    return (c_out, c_in, n, n_basis)


def make_layer(kind: str, c_in: int, c_out: int, group: RotationGroup, *, p: int = 3,
               p_t: int = 3, param_filters: bool = True, bias: bool = True, seed: int = 0,
               init: str = "uniform-fan-in", scale: float = 1.0,
               circular_time: bool = False) -> SrecLayer:
    """Construct a layer with deterministically initialised coefficients."""
    if kind in ("temporal", "temporal_naive"):
        basis = build_basis_1d(p_t) if param_filters else build_delta_basis_1d(p_t)
    else:
        basis = build_basis_2d(p, group) if param_filters else build_delta_basis(p, group)
    n = group.order
    shape = _coeff_shape(kind, c_in, c_out, n, basis.n_basis)
    # fan-in counts every tap feeding one output value
    if kind == "input":
        fan_in = c_in * int(np.count_nonzero(_support(basis)))
    elif kind == "output":
        fan_in = c_in * n * int(np.count_nonzero(_support(basis)))
    elif kind in ("temporal", "temporal_naive"):
        fan_in = c_in * (1 if kind == "temporal_naive" else n) * basis.size
    else:
        fan_in = c_in * n * int(np.count_nonzero(_support(basis)))
    coeffs = init_params(shape, init, seed=seed, fan_in=fan_in)
    coeffs.data *= scale
    b = init_params((c_out,), "zeros", seed=seed) if bias else None
    return SrecLayer(kind, c_in, c_out, group, basis, coeffs, b, circular_time)


def _support(basis):
    if isinstance(basis, FourierBasis1D):
        return np.ones(basis.size, bool)
    return basis.support


def layer_kernel(layer: SrecLayer) -> Tensor:
    """Dense correlation kernel (C_out', C_in', kt, kh, kw) of a layer."""
    n = layer.group.order
    co, ci = layer.c_out, layer.c_in
    if layer.kind in ("temporal", "temporal_naive"):
        pt = layer.basis.size
        lam = synthesize_filters(layer.coeffs, layer.basis)            # (co, ci, N, pt)
        if layer.kind == "temporal":
            b, a = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            full = take(lam, (a - b) % n, axis=2)                      # (co, ci, d, a, pt)
        else:
            full = take(lam, np.repeat(np.arange(n)[:, None], n, axis=1), axis=2)
            full = mul(full, np.eye(n)[None, None, :, :, None])
        full = permute(full, (0, 2, 1, 3, 4))                          # (co, d, ci, a, pt)
        return reshape(full, (co * n, ci * n, pt, 1, 1))
    p = layer.basis.size
    filt = synthesize_filters(layer.coeffs, layer.basis)
    if layer.kind == "input":                                          # (co, ci, g, p, p)
        full = permute(filt, (0, 2, 1, 3, 4))
        return reshape(full, (co * n, ci, 1, p, p))
    if layer.kind == "output":                                         # (co, ci, d, p, p)
        return reshape(filt, (co, ci * n, 1, p, p))
    # intermediate: filt is (co, ci, slot, g, p, p)
    flat = reshape(filt, (co, ci, n * n, p, p))
    b, a = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    full = take(flat, ((a - b) % n) * n + b, axis=2)                   # (co, ci, b, a, p, p)
    full = permute(full, (0, 2, 1, 3, 4, 5))
    return reshape(full, (co * n, ci * n, 1, p, p))


def _correlate_layer(layer: SrecLayer, x: Tensor) -> Tensor:
    kernel = layer_kernel(layer)
    if layer.kind in ("temporal", "temporal_naive"):
        support = None
        circular = (layer.circular_time, False, False)
    else:
        support = layer.basis.support[None]
        circular = None
    return correlate(x, kernel, support=support, circular=circular)


def _add_bias(layer, out):
    if layer.bias is None:
        return out
    shape = (layer.c_out,) + (1,) * (out.ndim - 1)
    return add(out, reshape(layer.bias, shape))


def _check_kind(layer, *kinds):
    if layer.kind not in kinds:
        raise ValueError(f"expected a {' or '.join(kinds)} layer, got {layer.kind!r}")


def _check_square(x):
    if x.shape[-1] != x.shape[-2]:
        raise ValueError(f"frames must be square, got {x.shape[-2]}x{x.shape[-1]}")


def input_layer_forward(layer: SrecLayer, x) -> Tensor:
    """(C_in, T, H, W) -> (C_out, N_G, T, H, W)."""
    _check_kind(layer, "input")
    _check_square(x)
    n = layer.group.order
    _, t, h, w = x.shape
    out = _correlate_layer(layer, x)
    out = reshape(out, (layer.c_out, n, t, h, w))
    return _add_bias(layer, out)


def _group_to_group(layer, f) -> Tensor:
    n = layer.group.order
    c, ng, t, h, w = f.shape
    if ng != n:
        raise ValueError(f"feature map group axis {ng} does not match layer group order {n}")
    out = _correlate_layer(layer, reshape(f, (c * n, t, h, w)))
    out = reshape(out, (layer.c_out, n, t, h, w))
    return _add_bias(layer, out)


def intermediate_layer_forward(layer: SrecLayer, f) -> Tensor:
    """(C_in, N_G, T, H, W) -> (C_out, N_G, T, H, W), spatial group correlation."""
    _check_kind(layer, "intermediate")
    return _group_to_group(layer, f)


def temporal_layer_forward(layer: SrecLayer, f) -> Tensor:
    """(C_in, N_G, T, H, W) -> (C_out, N_G, T, H, W), 1D temporal filters mixing group offsets."""
    _check_kind(layer, "temporal", "temporal_naive")
    return _group_to_group(layer, f)


def output_layer_forward(layer: SrecLayer, f) -> Tensor:
    """(C_in, N_G, T, H, W) -> (C_out, T, H, W) without group pooling."""
    _check_kind(layer, "output")
    n = layer.group.order
    c, ng, t, h, w = f.shape
    if ng != n:
        raise ValueError(f"feature map group axis {ng} does not match layer group order {n}")
    out = _correlate_layer(layer, reshape(f, (c * n, t, h, w)))
    return _add_bias(layer, out)


_FORWARD = {
    "input": input_layer_forward,
    "intermediate": intermediate_layer_forward,
    "temporal": temporal_layer_forward,
    "temporal_naive": temporal_layer_forward,
    "output": output_layer_forward,
}


def layer_forward(layer: SrecLayer, x) -> Tensor:
    return _FORWARD[layer.kind](layer, x)


@dataclass
class SrecBlock:
    layers: list[SrecLayer]
    slope: float = 0.1

    def __post_init__(self):
        kinds = [l.kind for l in self.layers]
        if len(kinds) < 2 or kinds[0] != "input" or kinds[-1] != "output":
            raise ValueError(f"block must start with an input layer and end with an output layer, got {kinds}")
        if any(k in ("input", "output") for k in kinds[1:-1]):
            raise ValueError(f"input/output layers may only appear at the block ends, got {kinds}")

    @property
    def params(self) -> list[Tensor]:
        return [p for l in self.layers for p in l.params]

    @property
    def n_params(self) -> int:
        return sum(l.n_params for l in self.layers)

    @property
    def expanded_size(self) -> int:
        return sum(l.expanded_size for l in self.layers)


def srec_block_forward(block: SrecBlock, x) -> Tensor:
    """Input -> (activation -> inner layer)* -> activation -> output."""
    h = x
    last = len(block.layers) - 1
    for i, layer in enumerate(block.layers):
        h = layer_forward(layer, h)
        if i != last:
            h = leaky_relu(h, block.slope)
    return h


def build_block(c_io: int, channels: int, group: RotationGroup, *, stages: int = 2, p: int = 3,
                p_t: int = 3, param_filters: bool = True, temporal: str = "temporal",
                slope: float = 0.1, seed: int = 0, out_scale: float = 1.0,
                circular_time: bool = False) -> SrecBlock:
    """input(c_io -> C) -> [intermediate -> temporal] * stages -> output(C -> c_io)."""
    rng = np.random.default_rng(seed)
    seeds = iter(rng.integers(0, 2 ** 31, size=2 + 2 * stages))
    kw = dict(p=p, p_t=p_t, param_filters=param_filters, circular_time=circular_time)
    layers = [make_layer("input", c_io, channels, group, seed=int(next(seeds)), **kw)]
    for _ in range(stages):
        layers.append(make_layer("intermediate", channels, channels, group, seed=int(next(seeds)), **kw))
        layers.append(make_layer(temporal, channels, channels, group, seed=int(next(seeds)), **kw))
    layers.append(make_layer("output", channels, c_io, group, seed=int(next(seeds)),
                             scale=out_scale, **kw))
    return SrecBlock(layers, slope)
