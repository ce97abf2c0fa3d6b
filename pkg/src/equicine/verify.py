"""Numerical checks of the rotation-equivariance, adjoint and filter identities.

Each check returns a :class:`Check` with the measured discrepancy and the
tolerance it was held to. :func:`run_suite` bundles them for one network
variant; the CLI prints the result as PASS/FAIL lines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import build_basis_2d, build_delta_basis, synthesize_filters
from .group import RotationGroup, cyclic_shift_group
from .layers import layer_forward, make_layer
from .mri import (ForwardOperator, adjoint_AH, forward_A, generate_test_mask_2d,
                  normal_AHA, rotate_kspace, synth_coil_maps)
from .unroll import UnrollModel, build_model, dc_update, prox_apply, unrolled_forward, variant_config

__all__ = [
    "Check",
    "rel_sup",
    "rotate_image",
    "rotate_features",
    "rotate_problem",
    "layer_equivariance",
    "filter_exactness",
    "adjoint_mismatch",
    "pipeline_equivariance",
    "random_problem",
    "run_suite",
]


@dataclass
class Check:
    name: str
    value: float
    tol: float
    expect_pass: bool = True

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: discrepancy {self.value:.3e} (tol {self.tol:.0e})"


def rel_sup(a, b) -> float:
    a = np.asarray(getattr(a, "data", a))
    b = np.asarray(getattr(b, "data", b))
    scale = np.max(np.abs(b))
    return float(np.max(np.abs(a - b)) / scale) if scale > 0 else float(np.max(np.abs(a - b)))


def rotate_image(x, k: int) -> np.ndarray:
    return np.rot90(np.asarray(getattr(x, "data", x)), k, axes=(-2, -1))


def rotate_features(f, k: int) -> np.ndarray:
    """Act with the quarter turn ``k`` on a (C, N_G, T, H, W) map; N_G = 1 carries the trivial action."""
    f = np.asarray(getattr(f, "data", f))
    n = f.shape[1]
    shift = 0 if n == 1 else k * n // 4
    return np.rot90(cyclic_shift_group(f, shift), k, axes=(-2, -1))


def rotate_problem(image, sens, mask, k: int):
    """Rotate ground truth, coil maps and a 2D mask by ``k`` quarter turns."""
    return rotate_image(image, k), np.rot90(sens, k, axes=(-2, -1)), rotate_kspace(mask, k)


def _turns(order: int):
    if order == 1:
        return range(4)
    return [g * 4 // order for g in range(order)]


def layer_equivariance(kind: str, seed: int, n_group: int = 4, channels: int = 2, T: int = 5, H: int = 8,
                       p: int = 3, param_filters: bool = True) -> float:
    """Worst relative sup-norm gap between act-then-layer and layer-then-act."""
    group = RotationGroup(n_group)
    rng = np.random.default_rng(seed)
    layer = make_layer(kind, channels, channels, group, p=p, param_filters=param_filters, seed=seed)
    layer.bias.data[...] = rng.normal(size=layer.bias.shape)
    if kind == "input":
        x = rng.normal(size=(channels, T, H, H))
        act_in = rotate_image
    else:
        x = rng.normal(size=(channels, n_group, T, H, H))
        act_in = rotate_features
    act_out = rotate_image if kind == "output" else rotate_features
    y = layer_forward(layer, x).data
    worst = 0.0
    for k in _turns(n_group):
        worst = max(worst, rel_sup(layer_forward(layer, act_in(x, k)).data, act_out(y, k)))
    return worst


def filter_exactness(p: int, seed: int, n_group: int = 4, param_filters: bool = True) -> float:
    """Largest absolute gap between the filter at orientation g and the rotated base filter."""
    group = RotationGroup(n_group)
    basis = build_basis_2d(p, group) if param_filters else build_delta_basis(p, group)
    coeffs = np.random.default_rng(seed).normal(size=(2, 3, basis.n_basis))
    filt = synthesize_filters(coeffs, basis).data            # (2, 3, N_G, p, p)
    return max(float(np.max(np.abs(filt[:, :, g] - np.rot90(filt[:, :, 0], group.quarter_turns(g), axes=(-2, -1)))))
               for g in group.elements)


def random_problem(seed: int, T: int = 3, H: int = 8, n_coils: int = 3, R: float = 3.0):
    """Random complex cine, coil maps and a 2D variable-density mask."""
    rng = np.random.default_rng(seed)
    image = rng.normal(size=(T, H, H)) + 1j * rng.normal(size=(T, H, H))
    sens = synth_coil_maps(n_coils, H, H, seed=seed)
    mask = generate_test_mask_2d(H, H, T, R, seed=seed)
    return image, sens, mask


def adjoint_mismatch(seed: int, T: int = 3, H: int = 8, n_coils: int = 3, line_mask: bool = False) -> float:
    """``|<Ax, y> - <x, A^H y>| / (||Ax|| ||y||)`` for random x, y."""
    rng = np.random.default_rng(seed)
    _, sens, mask = random_problem(seed, T, H, n_coils)
    if line_mask:
        mask = (rng.random((T, H)) < 0.5).astype(float)
    op = ForwardOperator(mask, sens)
    x = rng.normal(size=op.image_shape())
    y = rng.normal(size=op.kspace_shape())
    ax = forward_A(op, x).data
    ahy = adjoint_AH(op, y).data
    # real inner products on the (re, im) layout equal Re<., .> of the complex vectors
    lhs = np.vdot(ax, y)
    rhs = np.vdot(x, ahy)
    return float(abs(lhs - rhs) / (np.linalg.norm(ax) * np.linalg.norm(y)))


def _as_channels(z):
    return np.stack([z.real, z.imag])


def pipeline_equivariance(model: UnrollModel, image, sens, mask, stage: str = "full") -> float:
    """Worst relative gap between rotating the reconstruction and reconstructing the rotated problem.

    ``stage`` selects the map under test: ``normal`` (A^H A), ``dc``
    (first data-consistency step), ``prox`` (first proximal map) or
    ``full`` (the whole rollout from the measurements).
    """
    def run(img, s, m):
        op = ForwardOperator(m, s)
        x = _as_channels(img)
        if stage == "normal":
            return normal_AHA(op, x).data
        y = forward_A(op, x).data
        dc, prox, le = model.iteration(0)
        if stage == "dc":
            return dc_update(adjoint_AH(op, y), y, op, dc, le).data
        if stage == "prox":
            return prox_apply(x, prox).data
        return unrolled_forward(y, op, model).data

    ref = run(image, sens, mask)
    worst = 0.0
    for k in range(1, 4):
        out = run(*rotate_problem(image, sens, mask, k))
        worst = max(worst, rel_sup(out, rotate_image(ref, k)))
    return worst


def _layer_kinds(model: UnrollModel):
    kinds = []
    for block in [model.prox_blocks[0]] + [b for b in model.dc_blocks[:1] if b is not None]:
        for layer in block.layers:
            key = (layer.kind, layer.group.order, layer.basis.functions[0][0] != "delta")
            if key not in kinds:
                kinds.append(key)
    return kinds


def run_suite(variant: str = "srec", seed: int = 0, K: int = 5, channels: int = 2) -> list[Check]:
    """All invariant checks for one variant.

    Equivariance checks are expected to pass for the srec variants and to
    fail, with a clearly nonzero discrepancy, for vcnn and ecnn2d_naive.
    """
    cfg = variant_config(variant, K=K, channels=channels)
    model = build_model(cfg, seed=seed)
    rng = np.random.default_rng(seed)
    # move away from the near-identity initialisation so every block contributes
    for p in model.params:
        p.data[...] = p.data + 0.3 * rng.normal(size=p.shape) * (p.ndim > 0)
    equi_expected = cfg.prox_kind == "srec" and cfg.dc_kind in ("srec", "l2_grad")
    checks = []
    for p in (3, 5):
        checks.append(Check(f"filter exactness p={p}",
                            max(filter_exactness(p, s, cfg.n_group, cfg.param_filters) for s in range(3)), 1e-12))
    for kind, order, param in _layer_kinds(model):
        checks.append(Check(f"layer equivariance {kind} (N_G={order})",
                            max(layer_equivariance(kind, s, order, param_filters=param) for s in range(3)),
                            1e-10, expect_pass=kind != "temporal_naive" and (order > 1 or kind == "temporal")))
    checks.append(Check("adjoint identity", max(adjoint_mismatch(s) for s in range(5)), 1e-12))
    image, sens, mask = random_problem(seed)
    checks.append(Check("normal operator equivariance", pipeline_equivariance(model, image, sens, mask, "normal"), 1e-10))
    checks.append(Check("data-consistency equivariance", pipeline_equivariance(model, image, sens, mask, "dc"),
                        1e-8, expect_pass=cfg.dc_kind in ("srec", "l2_grad")))
    checks.append(Check("proximal equivariance", pipeline_equivariance(model, image, sens, mask, "prox"),
                        1e-8, expect_pass=cfg.prox_kind == "srec"))
    checks.append(Check(f"global pipeline equivariance (K={K})", pipeline_equivariance(model, image, sens, mask),
                        1e-8, expect_pass=equi_expected))
    return checks
