"""Rotation-closed filter bases and filter synthesis.

A 2D filter is a linear combination of continuous Fourier functions
``cos(2*pi/p * (k*u + l*v))`` and ``sin(...)`` restricted to the disc of radius
(p-1)/2. Frequencies above Nyquist are replaced by their mirrored
low-frequency counterparts, ``k -> k - p``, so all retained integer frequency
pairs lie in ``{-h..h}^2`` with ``h = (p-1)//2``; the set is further cut to the
frequency disc ``k^2 + l^2 <= h^2``. That set is closed under quarter turns
``(k, l) -> (-l, k)``, and every basis function is evaluated at the
inverse-rotated coordinates for each group element, so the filter synthesised
for orientation g is an exact resampling of the same continuous filter.

Raw-tap filters (no parameterisation) use :func:`build_delta_basis`: one
delta per tap, whose rotated copies are grid permutations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, contract
from .group import RotationGroup

__all__ = [
    "FourierBasis2D",
    "FourierBasis1D",
    "build_basis_2d",
    "build_basis_1d",
    "build_delta_basis",
    "build_delta_basis_1d",
    "synthesize_filters",
]


@dataclass(frozen=True)
class FourierBasis2D:
    size: int
    order: int
    functions: tuple          # (kind, k, l) with kind in {"const", "cos", "sin", "delta"}
    sampled: np.ndarray       # (N_basis, N_G, p, p)
    support: np.ndarray       # (p, p) boolean union of nonzero taps

    @property
    def n_basis(self) -> int:
        return self.sampled.shape[0]


@dataclass(frozen=True)
class FourierBasis1D:
    size: int
    functions: tuple          # (kind, k)
    sampled: np.ndarray       # (N_basis, p_t)

    @property
    def n_basis(self) -> int:
        return self.sampled.shape[0]


def _grid(p: int):
    h = (p - 1) / 2
    i, j = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")
    # x to the right, y up; row index grows downward
    return j - h, h - i


def _frequencies(h: int):
    out = [("const", 0, 0)]
    for l in range(0, h + 1):
        for k in range(-h, h + 1):
            if l == 0 and k <= 0:
                continue
            if k * k + l * l > h * h:
                continue
            out.append(("cos", k, l))
            out.append(("sin", k, l))
    return out


def build_basis_2d(p: int, group: RotationGroup) -> FourierBasis2D:
    if p < 1 or p % 2 == 0:
        raise ValueError(f"filter size must be odd and positive, got {p}")
    h = (p - 1) // 2
    x, y = _grid(p)
    disc = x ** 2 + y ** 2 <= h * h + 1e-9
    funcs = _frequencies(h)
    omega = 2 * np.pi / p
    sampled = np.zeros((len(funcs), group.order, p, p))
    for g in group.elements:
        theta = group.angle(g)
        c, s = np.cos(theta), np.sin(theta)
        if (4 * g) % group.order == 0:
            # quarter turns: use the exact integer rotation matrix
            c, s = round(c), round(s)
        # inverse rotation of the sampling coordinates
        u = c * x + s * y
        v = -s * x + c * y
        for n, (kind, k, l) in enumerate(funcs):
            phase = omega * (k * u + l * v)
            if kind == "const":
                val = np.ones_like(u)
            elif kind == "cos":
                val = np.cos(phase)
            else:
                val = np.sin(phase)
            sampled[n, g] = np.where(disc, val, 0.0)
    norms = np.sqrt((sampled[:, 0] ** 2).sum(axis=(-2, -1)))
    sampled /= norms[:, None, None, None]
    return FourierBasis2D(p, group.order, tuple(funcs), sampled, disc)


def build_delta_basis(p: int, group: RotationGroup) -> FourierBasis2D:
    """One basis element per tap; rotated copies are exact grid rotations."""
    if p < 1 or p % 2 == 0:
        raise ValueError(f"filter size must be odd and positive, got {p}")
    if not group.grid_exact:
        raise ValueError("raw-tap filters need group order in {1, 2, 4}")
    eye = np.eye(p * p).reshape(p * p, p, p)
    sampled = np.stack([np.rot90(eye, group.quarter_turns(g), axes=(-2, -1))
                        for g in group.elements], axis=1)
    funcs = tuple(("delta", int(i), int(j)) for i in range(p) for j in range(p))
    return FourierBasis2D(p, group.order, funcs, np.ascontiguousarray(sampled),
                          np.ones((p, p), bool))


def build_basis_1d(p_t: int) -> FourierBasis1D:
    if p_t < 1 or p_t % 2 == 0:
        raise ValueError(f"temporal filter size must be odd and positive, got {p_t}")
    h = (p_t - 1) // 2
    t = np.arange(p_t) - h
    funcs = [("const", 0)]
    rows = [np.ones(p_t)]
    for k in range(1, h + 1):
        funcs += [("cos", k), ("sin", k)]
        rows += [np.cos(2 * np.pi * k * t / p_t), np.sin(2 * np.pi * k * t / p_t)]
    sampled = np.array(rows)
    sampled /= np.linalg.norm(sampled, axis=1, keepdims=True)
    return FourierBasis1D(p_t, tuple(funcs), sampled)


def build_delta_basis_1d(p_t: int) -> FourierBasis1D:
    if p_t < 1 or p_t % 2 == 0:
        raise ValueError(f"temporal filter size must be odd and positive, got {p_t}")
    return FourierBasis1D(p_t, tuple(("delta", i) for i in range(p_t)), np.eye(p_t))


def synthesize_filters(coeffs, basis) -> Tensor:
    """Contract coefficients (..., N_basis) with the sampled basis.

    Returns (..., N_G, p, p) for a 2D basis and (..., p_t) for a 1D basis.
    """
    n = coeffs.shape[-1]
    if n != basis.n_basis:
        raise ValueError(f"coefficients carry {n} basis weights, basis has {basis.n_basis}")
    nd = len(coeffs.shape)
    return contract(coeffs, basis.sampled, axes=([nd - 1], [0]))
