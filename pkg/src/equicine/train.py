"""Training with an l1 loss and Adam, and batch evaluation."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .autodiff import NonFiniteError, Tape, tabs, tsum, sub, scalar_mul
from .metrics import PSNR_CAP, psnr, ssim, hfen
from .mri import (ForwardOperator, add_noise, adjoint_AH, forward_A, generate_mask,
                  generate_test_mask_2d, mask_seed, to_channels, to_complex)
from .phantom import Sample
from .unroll import DivergenceError, UnrollModel, unrolled_forward

__all__ = [
    "TrainConfig",
    "AdamState",
    "MetricsReport",
    "l1_loss",
    "adam_step",
    "lr_at",
    "sample_operator",
    "measure",
    "train",
    "reconstruct",
    "evaluate",
    "score_pair",
    "TrainingDivergedError",
]


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 50
    lr: float = 1e-3
    gamma: float = 0.95
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 1
    seed: int = 0
    train_R: tuple = (8.0,)
    test_R: tuple = (8.0,)
    noise_sigma: float = 0.0
    shuffle: bool = True

    def __post_init__(self):
        # None stands for "the mask stored with the sample"
        self.train_R = tuple(None if r is None else float(r) for r in self.train_R)
        self.test_R = tuple(None if r is None else float(r) for r in self.test_R)
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not self.train_R or not self.test_R:
            raise ValueError("R lists must be nonempty")


def lr_at(config: TrainConfig, epoch: int) -> float:
    return config.lr * config.gamma ** epoch


def l1_loss(pred, target):
    """Mean absolute difference over every real and imaginary entry."""
    if tuple(pred.shape) != tuple(np.shape(getattr(target, "data", target))):
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {np.shape(getattr(target, 'data', target))}")
    d = sub(pred, target)
    return scalar_mul(tsum(tabs(d)), 1.0 / d.size)


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros(p.shape) for p in params], [np.zeros(p.shape) for p in params])


def adam_step(params, grads, state: AdamState, lr: float, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    """Bias-corrected Adam update applied in place to ``params``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimiser state disagree in length")
    state.t += 1
    c1 = 1 - beta1 ** state.t
    c2 = 1 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if m.shape != p.shape:
            raise ValueError(f"optimiser state {m.shape} does not match parameter {p.shape}")
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


def sample_operator(sample: Sample, R: float | None = None, mode: str = "lines") -> ForwardOperator:
    """Operator for ``sample``; a new mask is drawn from the sample seed when ``R`` is given."""
    if R is None:
        return ForwardOperator(sample.mask, sample.sens, R=float("nan"))
    t, h, w = sample.image.shape
    if mode == "lines":
        mask = generate_mask(h, t, R, seed=mask_seed(sample.seed, R, 0))
    elif mode == "2d":
        mask = generate_test_mask_2d(h, w, t, R, seed=mask_seed(sample.seed, R, 1))
    else:
        raise ValueError(f"unknown mask mode {mode!r}")
    return ForwardOperator(mask, sample.sens, R=R)


def measure(sample: Sample, op: ForwardOperator, sigma: float = 0.0, seed: int = 0) -> np.ndarray:
    y = forward_A(op, to_channels(sample.image)).data
    return add_noise(y, sigma, seed=seed, mask=op.mask)


def train(model: UnrollModel, samples, config: TrainConfig, log=None):
    """Train in place. Returns ``(model, curve)``, one curve record per epoch.

    ``log`` is called with each record as it is produced.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("cannot train on an empty dataset")
    params = model.params
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng(config.seed)
    n_r = len(config.train_R)
    # measurements are fixed per (sample, R) so every epoch sees the same data
    cache = {}
    curve = []
    for epoch in range(config.epochs):
        lr = lr_at(config, epoch)
        order = rng.permutation(len(samples)) if config.shuffle else np.arange(len(samples))
        t0 = time.perf_counter()
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            total = [np.zeros(p.shape) for p in params]
            for i in batch:
                R = config.train_R[(epoch * len(samples) + int(i)) % n_r]
                key = (int(i), R)
                if key not in cache:
                    op = sample_operator(samples[i], R)
                    cache[key] = (op, measure(samples[i], op, config.noise_sigma, seed=samples[i].seed))
                op, y = cache[key]
                target = to_channels(samples[i].image)
                try:
                    with Tape() as tape:
                        loss = l1_loss(unrolled_forward(y, op, model), target)
                        gmap = tape.backward(loss, params)
                    grads = [gmap[p].data for p in params]
                except (DivergenceError, NonFiniteError) as exc:
                    raise TrainingDivergedError(
                        f"training diverged at epoch {epoch}, sample {int(i)} (seed {samples[i].seed}): {exc}") from exc
                if not all(np.all(np.isfinite(g)) for g in grads):
                    raise TrainingDivergedError(
                        f"non-finite gradient at epoch {epoch}, sample {int(i)} (seed {samples[i].seed})")
                for acc, g in zip(total, grads):
                    acc += g
                losses.append(float(loss.data))
            grads = [g / len(batch) for g in total]
            adam_step(params, grads, state, lr, config.beta1, config.beta2, config.eps)
        model.epoch += 1
        rec = {"epoch": epoch, "lr": lr, "loss": float(np.mean(losses)),
               "seconds": time.perf_counter() - t0}
        curve.append(rec)
        if log is not None:
            log(rec)
    return model, curve


def reconstruct(model: UnrollModel, sample: Sample, R: float | None, sigma: float = 0.0,
                mode: str = "lines"):
    """(reconstruction, zero-filled) complex images for one sample."""
    op = sample_operator(sample, R, mode)
    y = measure(sample, op, sigma, seed=sample.seed)
    zf = to_complex(adjoint_AH(op, y))
    if model is None:
        return zf, zf
    return to_complex(unrolled_forward(y, op, model)), zf


def score_pair(rec, ref) -> dict:
    """PSNR on the complex images, SSIM and HFEN on their magnitudes."""
    return {"psnr_db": psnr(rec, ref), "ssim": ssim(np.abs(rec), np.abs(ref)),
            "hfen": hfen(np.abs(rec), np.abs(ref))}


@dataclass
class MetricsReport:
    rows: list = field(default_factory=list)    # dicts: sample_id, R, variant, psnr_db, ssim, hfen

    def values(self, variant: str, R: float, metric: str) -> np.ndarray:
        return np.array([r[metric] for r in self.rows if r["variant"] == variant and r["R"] == R])

    def summary(self) -> list[dict]:
        out = []
        keys = sorted({(r["R"], r["variant"]) for r in self.rows}, key=lambda k: (k[0], k[1]))
        for R, variant in keys:
            entry = {"R": R, "variant": variant}
            for metric in ("psnr_db", "ssim", "hfen"):
                v = self.values(variant, R, metric)
                if metric == "psnr_db":
                    v = np.minimum(v, PSNR_CAP)
                entry[metric + "_mean"] = float(np.mean(v))
                entry[metric + "_std"] = float(np.std(v))
                entry[metric + "_median"] = float(np.median(v))
            entry["n"] = int(len(self.values(variant, R, "psnr_db")))
            out.append(entry)
        return out

    def csv_lines(self) -> list[str]:
        lines = ["sample_id,R,variant,psnr_db,ssim,hfen"]
        for r in self.rows:
            p = min(r["psnr_db"], PSNR_CAP)
            lines.append(f"{r['sample_id']},{r['R']:g},{r['variant']},{p:.6f},{r['ssim']:.8f},{r['hfen']:.8f}")
        return lines


def _eval_one(args):
    model, sample, sid, R, sigma, variant, mode = args
    rec, zf = reconstruct(model, sample, R, sigma, mode)
    rows = [{"sample_id": sid, "R": R, "variant": "zero-filled", **score_pair(zf, sample.image)}]
    if model is not None:
        rows.append({"sample_id": sid, "R": R, "variant": variant, **score_pair(rec, sample.image)})
    return rows


def evaluate(model: UnrollModel | None, samples, R_list, variant: str = "model", sigma: float = 0.0,
             jobs: int = 1, mode: str = "lines") -> MetricsReport:
    """Reconstruct every sample at every R and score it against the ground truth.

    Zero-filled rows are always included. With ``jobs > 1`` samples are
    scored in worker processes; rows come back in the serial order.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("cannot evaluate an empty dataset")
    tasks = [(model, s, sid, float(R), sigma, variant, mode) for R in R_list for sid, s in enumerate(samples)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_eval_one, tasks))
    else:
        results = [_eval_one(t) for t in tasks]
    return MetricsReport([row for rows in results for row in rows])
