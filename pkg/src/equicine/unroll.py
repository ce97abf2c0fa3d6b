"""Unrolled proximal-gradient reconstructor.

Each of the K iterations applies a data-consistency step followed by a
residual proximal network::

    r        = A^H (A x - y)
    x_half   = x - eta_k * D_k(r)        D_k = identity (l2_grad) or identity + block
    x_next   = x_half + P_k(x_half)

With equivariant blocks for D_k and P_k the whole rollout commutes with
quarter-turn rotations of (image, coil maps, mask).
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .autodiff import NonFiniteError, Tensor, add, as_tensor, init_params, mul, scalar_mul, sub, texp
from .group import RotationGroup
from .layers import SrecBlock, build_block, srec_block_forward
from .mri import ForwardOperator, adjoint_AH, normal_AHA
from .phantom import DatasetFormatError, _read_header

__all__ = [
    "UnrollConfig",
    "UnrollModel",
    "VARIANTS",
    "variant_config",
    "build_model",
    "dc_update",
    "prox_apply",
    "unrolled_forward",
    "DivergenceError",
    "save_checkpoint",
    "load_checkpoint",
]

NET_KINDS = ("vcnn", "ecnn2d_naive", "srec")
DC_KINDS = ("l2_grad",) + NET_KINDS


class DivergenceError(RuntimeError):
    pass


@dataclass
class UnrollConfig:
    K: int = 10
    prox_kind: str = "srec"
    dc_kind: str = "srec"
    param_filters: bool = True
    n_group: int = 4
    channels: int = 2
    p: int = 3
    p_t: int = 3
    stages: int = 2              # (2+1)D stages in each proximal block
    dc_stages: int = 1           # (2+1)D stages in each learned DC block
    shared_weights: bool = False
    eta0: float = 1.0
    slope: float = 0.1
    vcnn_widen: int = 0          # 0 means "widen by n_group"
    circular_time: bool = False
    out_scale: float = 0.1       # initial scale of each block's output layer

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.prox_kind not in NET_KINDS:
            raise ValueError(f"unknown prox_kind {self.prox_kind!r}")
        if self.dc_kind not in DC_KINDS:
            raise ValueError(f"unknown dc_kind {self.dc_kind!r}")
        if self.n_group < 1 or 4 % self.n_group:
            raise ValueError("feature-map rotation is exact only for n_group in {1, 2, 4}")
        if self.eta0 <= 0:
            raise ValueError("eta0 must be positive")

    @property
    def widen(self) -> int:
        return self.vcnn_widen or self.n_group

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "UnrollConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown model keys: {sorted(unknown)}")
        return cls(**d)


VARIANTS = {
    "baseline": dict(prox_kind="vcnn", dc_kind="vcnn", param_filters=False),
    "2d-ecnn": dict(prox_kind="ecnn2d_naive", dc_kind="ecnn2d_naive", param_filters=False),
    "srec-prox": dict(prox_kind="srec", dc_kind="vcnn", param_filters=False),
    "srec-proxdc": dict(prox_kind="srec", dc_kind="srec", param_filters=False),
    "dun-sre": dict(prox_kind="srec", dc_kind="srec", param_filters=True),
    # aliases used by the CLI
    "vcnn": dict(prox_kind="vcnn", dc_kind="vcnn", param_filters=False),
    "ecnn2d_naive": dict(prox_kind="ecnn2d_naive", dc_kind="ecnn2d_naive", param_filters=False),
    "srec": dict(prox_kind="srec", dc_kind="srec", param_filters=True),
}


def variant_config(name: str, **overrides) -> UnrollConfig:
    try:
        base = dict(VARIANTS[name])
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}") from None
    base.update(overrides)
    return UnrollConfig(**base)


@dataclass
class UnrollModel:
    config: UnrollConfig
    dc_blocks: list           # SrecBlock or None per iteration
    prox_blocks: list         # SrecBlock per iteration
    log_eta: list             # Tensor scalars, eta_k = exp(log_eta_k)
    seed: int = 0
    epoch: int = 0

    def iteration(self, k: int):
        j = 0 if self.config.shared_weights else k
        return self.dc_blocks[j], self.prox_blocks[j], self.log_eta[j]

    @property
    def params(self) -> list[Tensor]:
        out = []
        for dc, prox, le in zip(self.dc_blocks, self.prox_blocks, self.log_eta):
            if dc is not None:
                out += dc.params
            out += prox.params
            out.append(le)
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    @property
    def expanded_size(self) -> int:
        """Size of all dense filter banks the coefficients expand into."""
        total = 0
        for dc, prox, le in zip(self.dc_blocks, self.prox_blocks, self.log_eta):
            total += le.size + prox.expanded_size + (dc.expanded_size if dc is not None else 0)
        return total

    def named_arrays(self):
        for i, p in enumerate(self.params):
            yield f"p{i:04d}", p

    @property
    def etas(self) -> list[float]:
        return [float(np.exp(le.data)) for le in self.log_eta]


def _net(kind: str, cfg: UnrollConfig, stages: int, seed: int) -> SrecBlock:
    if kind == "vcnn":
        group = RotationGroup(1)
        channels = cfg.channels * cfg.widen
        temporal, param = "temporal", False
    else:
        group = RotationGroup(cfg.n_group)
        channels = cfg.channels
        temporal = "temporal" if kind == "srec" else "temporal_naive"
        param = cfg.param_filters
    return build_block(2, channels, group, stages=stages, p=cfg.p, p_t=cfg.p_t, param_filters=param,
                       temporal=temporal, slope=cfg.slope, seed=seed, out_scale=cfg.out_scale,
                       circular_time=cfg.circular_time)


def build_model(config: UnrollConfig, seed: int = 0) -> UnrollModel:
    """Deterministically initialised model for ``config``."""
    n_sets = 1 if config.shared_weights else config.K
    seeds = np.random.SeedSequence(seed).generate_state(2 * n_sets)
    dc_blocks, prox_blocks, etas = [], [], []
    for k in range(n_sets):
        if config.dc_kind == "l2_grad":
            dc_blocks.append(None)
        else:
            dc_blocks.append(_net(config.dc_kind, config, config.dc_stages, int(seeds[2 * k])))
        prox_blocks.append(_net(config.prox_kind, config, config.stages, int(seeds[2 * k + 1])))
        etas.append(init_params((), "constant", c=float(np.log(config.eta0))))
    return UnrollModel(config, dc_blocks, prox_blocks, etas, seed=seed)


def dc_update(x, y, op: ForwardOperator, dc_block: SrecBlock | None, eta, AHy=None) -> Tensor:
    """``x - eta * D(A^H(Ax - y))`` with ``D`` the identity or identity + block.

    ``eta`` is a float (used as is) or a log-step tensor.
    """
    x = as_tensor(x)
    if AHy is None:
        AHy = adjoint_AH(op, y)
    r = sub(normal_AHA(op, x), AHy)
    if dc_block is not None:
        r = add(r, srec_block_forward(dc_block, r))
    if isinstance(eta, Tensor):
        step = mul(texp(eta), r)
    else:
        step = scalar_mul(r, float(eta))
    return sub(x, step)


def prox_apply(x_half, prox_block: SrecBlock) -> Tensor:
    """Residual proximal map ``x + P(x)``."""
    x_half = as_tensor(x_half)
    return add(x_half, srec_block_forward(prox_block, x_half))


def unrolled_forward(y, op: ForwardOperator, model: UnrollModel, return_all: bool = False):
    """Zero-filled start ``A^H y`` followed by K (DC, prox) alternations."""
    AHy = adjoint_AH(op, y)
    x = AHy
    history = [x]
    for k in range(model.config.K):
        dc, prox, le = model.iteration(k)
        try:
            x = dc_update(x, y, op, dc, le, AHy=AHy)
            x = prox_apply(x, prox)
        except NonFiniteError as exc:
            raise DivergenceError(f"non-finite values in unrolled iteration {k}: {exc}") from exc
        history.append(x)
    return history if return_all else x


# ---------------------------------------------------------------------------
# DSRM1 checkpoints

CKPT_MAGIC = b"DSRM1"


def save_checkpoint(path, model: UnrollModel) -> None:
    arrays = [{"name": name, "shape": list(p.shape)} for name, p in model.named_arrays()]
    total = sum(int(np.prod(a["shape"])) for a in arrays)
    header = {"config": model.config.to_dict(), "seed": model.seed, "epoch": model.epoch,
              "dtype": "<f8", "arrays": arrays, "element_count": total}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, p in model.named_arrays():
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> UnrollModel:
    buf = Path(path).read_bytes()
    header, off = _read_header(buf, CKPT_MAGIC, str(path))
    payload = buf[off:]
    expected = int(header["element_count"])
    if len(payload) != expected * 8:
        raise DatasetFormatError(
            f"{path}: payload holds {len(payload) / 8:g} elements, header declares {expected}")
    config = UnrollConfig.from_dict(header["config"])
    model = build_model(config, seed=int(header["seed"]))
    model.epoch = int(header["epoch"])
    data = np.frombuffer(payload, dtype="<f8")
    pos = 0
    params = dict(model.named_arrays())
    for entry in header["arrays"]:
        p = params.get(entry["name"])
        shape = tuple(entry["shape"])
        if p is None or p.shape != shape:
            raise DatasetFormatError(f"{path}: array {entry['name']} {shape} does not fit the model")
        n = int(np.prod(shape))
        p.data[...] = data[pos:pos + n].reshape(shape)
        pos += n
    return model
