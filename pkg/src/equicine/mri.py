"""Multi-coil Cartesian encoding operator, sampling masks, coil maps and noise.

Layouts (real tensors, leading axis = real/imag):

* image  (2, T, H, W)
* k-space (2, N_c, T, H, W)

The Fourier transform is the orthonormal centred 2D DFT over (H, W), so a
fully sampled single flat coil gives an isometry. Phase encoding runs along
H; a line mask (T, H) is broadcast along the readout axis W.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor, cmul, fft2c, ifft2c, mul, tsum, reshape

__all__ = [
    "ForwardOperator",
    "to_channels",
    "to_complex",
    "fft2c_np",
    "ifft2c_np",
    "forward_A",
    "adjoint_AH",
    "normal_AHA",
    "generate_mask",
    "generate_test_mask_2d",
    "effective_acceleration",
    "rotate_kspace",
    "synth_coil_maps",
    "add_noise",
    "mask_seed",
]

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def to_channels(z: np.ndarray) -> np.ndarray:
    """Complex array -> real array with a leading (real, imag) axis."""
    return np.stack([z.real, z.imag]).astype(np.float64)


def to_complex(x) -> np.ndarray:
    x = x.data if isinstance(x, Tensor) else np.asarray(x)
    return x[0] + 1j * x[1]


def fft2c_np(z: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(z, axes=(-2, -1)), norm="ortho"), axes=(-2, -1))


def ifft2c_np(z: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(z, axes=(-2, -1)), norm="ortho"), axes=(-2, -1))


@dataclass
class ForwardOperator:
    """Mask M, coil sensitivities S and target acceleration R of y = M F S x."""

    mask: np.ndarray          # (T, H) line mask or (T, H, W) full 2D mask
    sens: np.ndarray          # complex (N_c, H, W)
    R: float = 1.0

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=np.float64)
        self.sens = np.asarray(self.sens, dtype=np.complex128)
        if self.sens.ndim != 3:
            raise ValueError(f"sensitivities must be (N_c, H, W), got {self.sens.shape}")
        if self.mask.ndim not in (2, 3):
            raise ValueError(f"mask must be (T, H) or (T, H, W), got {self.mask.shape}")
        _, h, w = self.sens.shape
        if self.mask.shape[1] != h or (self.mask.ndim == 3 and self.mask.shape[2] != w):
            raise ValueError(f"mask {self.mask.shape} does not match coil maps {self.sens.shape}")

    @property
    def n_coils(self) -> int:
        return self.sens.shape[0]

    @property
    def frames(self) -> int:
        return self.mask.shape[0]

    @property
    def mask3d(self) -> np.ndarray:
        if self.mask.ndim == 3:
            return self.mask
        w = self.sens.shape[2]
        return np.repeat(self.mask[:, :, None], w, axis=2)

    def image_shape(self) -> tuple[int, ...]:
        return (2, self.frames) + self.sens.shape[1:]

    def kspace_shape(self) -> tuple[int, ...]:
        return (2, self.n_coils, self.frames) + self.sens.shape[1:]


def _check(shape, expected, what):
    if tuple(shape) != tuple(expected):
        raise ValueError(f"{what} has shape {tuple(shape)}, operator expects {tuple(expected)}")


def forward_A(op: ForwardOperator, x) -> Tensor:
    """Coil weighting, centred orthonormal FFT per frame, then masking."""
    x = as_tensor(x)
    _check(x.shape, op.image_shape(), "image")
    _, t, h, w = x.shape
    coil_imgs = cmul(reshape(x, (2, 1, t, h, w)), op.sens[:, None])
    return mul(fft2c(coil_imgs), op.mask3d[None, None])


def adjoint_AH(op: ForwardOperator, y) -> Tensor:
    """Masking, inverse FFT, conjugate coil weighting, coil sum."""
    y = as_tensor(y)
    _check(y.shape, op.kspace_shape(), "k-space")
    coil_imgs = ifft2c(mul(y, op.mask3d[None, None]))
    return tsum(cmul(coil_imgs, op.sens[:, None], conj=True), axis=1)


def normal_AHA(op: ForwardOperator, x) -> Tensor:
    return adjoint_AH(op, forward_A(op, x))


def _line_counts(H: int, T: int, R: float) -> np.ndarray:
    # cumulative rounding keeps the mean lines per frame at H/R as closely as T allows
    target = H / R
    edges = np.round(np.arange(T + 1) * target + 1e-9).astype(int)
    return np.diff(edges)


def generate_mask(H: int, T: int, R: float, seed: int = 0) -> np.ndarray:
    """Golden-ratio interleaved Cartesian line mask of shape (T, H).

    Every frame keeps the two central lines. The remaining lines follow a
    golden-ratio sequence with a seed-dependent start, warped toward the
    centre of k-space, and advance from frame to frame so the time-averaged
    union fills the centre.
    """
    if R < 1:
        raise ValueError(f"acceleration must be >= 1, got {R}")
    if H / R < 2:
        raise ValueError(f"acceleration {R} leaves fewer than 2 lines of {H}")
    mask = np.zeros((T, H))
    if R == 1:
        return mask + 1.0
    counts = _line_counts(H, T, R)
    centre = (H // 2 - 1, H // 2)
    others = np.array([i for i in range(H) if i not in centre])
    # positions of the non-central lines measured from the k-space centre, in [-1, 1]
    rel = (others - (H - 1) / 2) / ((H - 1) / 2)
    order = np.argsort(rel)
    rel_sorted = rel[order]
    start = np.random.default_rng(seed).random()
    step = 0
    for t in range(T):
        mask[t, list(centre)] = 1.0
        need = counts[t] - 2
        while need > 0:
            u = (start + step * GOLDEN) % 1.0
            step += 1
            # variable density: odd power warp concentrates draws near the centre
            v = 2 * u - 1
            target = np.sign(v) * abs(v) ** 1.5
            j = int(np.argmin(np.abs(rel_sorted - target)))
            line = others[order[j]]
            k = 0
            while mask[t, line]:
                k += 1
                jj = j + (k + 1) // 2 * (1 if k % 2 else -1)
                if 0 <= jj < len(others):
                    line = others[order[jj]]
            mask[t, line] = 1.0
            need -= 1
    return mask


def mask_seed(sample_seed: int, R: float, salt: int = 0) -> int:
    """Seed of the mask drawn for one sample at acceleration ``R``."""
    return int(np.random.SeedSequence([int(sample_seed), int(round(R * 1000)), salt]).generate_state(1)[0])


def generate_test_mask_2d(H: int, W: int, T: int, R: float, seed: int = 0) -> np.ndarray:
    """Random variable-density 2D mask (T, H, W) for rotation tests.

    Fully samples a small central square and draws the remaining points with a
    radially decaying density, so the mask has no preferred orientation.
    """
    if R < 1:
        raise ValueError(f"acceleration must be >= 1, got {R}")
    rng = np.random.default_rng(seed)
    ky, kx = np.meshgrid(np.arange(H) - H // 2, np.arange(W) - W // 2, indexing="ij")
    r = np.sqrt(kx ** 2 + ky ** 2) / (max(H, W) / 2)
    density = (1 - np.clip(r, 0, 1)) ** 2 + 0.02
    budget = H * W / R
    density *= budget / density.sum()
    mask = (rng.random((T, H, W)) < np.clip(density, 0, 1)).astype(np.float64)
    mask[:, H // 2 - 1:H // 2 + 1, W // 2 - 1:W // 2 + 1] = 1.0
    return mask


def effective_acceleration(mask: np.ndarray) -> float:
    """H / mean sampled lines per frame for a (T, H) mask."""
    mask = np.asarray(mask)
    if mask.ndim == 3:
        return mask[0].size / mask.sum(axis=(1, 2)).mean()
    return mask.shape[1] / mask.sum(axis=1).mean()


def rotate_kspace(m: np.ndarray, k: int) -> np.ndarray:
    """Quarter-turn rotation of centred k-space arrays about the DC sample.

    This is the k-space companion of ``np.rot90`` on the image grid: for the
    centred DFT, rotating an image by ``np.rot90`` rotates its spectrum about
    index (H//2, W//2) with periodic wrap, up to a unit-modulus phase that
    masks and adjoints never see. For odd sizes this equals ``np.rot90``.
    """
    k %= 4
    h, w = m.shape[-2:]
    if h != w:
        raise ValueError("k-space rotation needs square planes")
    a = np.fft.ifftshift(m, axes=(-2, -1))   # DC at index 0
    # np.rot90 turns about index (n-1)/2; the roll moves the turn centre back to index 0
    a = np.rot90(a, k, axes=(-2, -1))
    a = np.roll(a, (int(k in (1, 2)), int(k in (2, 3))), axis=(-2, -1))
    return np.fft.fftshift(a, axes=(-2, -1))


def synth_coil_maps(n_coils: int, H: int, W: int, seed: int = 0) -> np.ndarray:
    """Smooth synthetic coil sensitivities with sum_c |S_c|^2 = 1 everywhere."""
    if n_coils < 1:
        raise ValueError("need at least one coil")
    rng = np.random.default_rng(seed)
    y, x = np.meshgrid(np.linspace(-1, 1, H), np.linspace(-1, 1, W), indexing="ij")
    maps = np.empty((n_coils, H, W), dtype=np.complex128)
    base = rng.uniform(0, 2 * np.pi)
    for c in range(n_coils):
        ang = base + 2 * np.pi * c / n_coils
        cx, cy = 1.2 * np.cos(ang), 1.2 * np.sin(ang)
        width = rng.uniform(0.8, 1.2)
        mag = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * width ** 2))
        a, b, q = rng.normal(0, 0.5, size=3)
        phase = a * x + b * y + q * x * y + rng.uniform(0, 2 * np.pi)
        maps[c] = mag * np.exp(1j * phase)
    norm = np.sqrt((np.abs(maps) ** 2).sum(axis=0))
    return maps / norm


def add_noise(y, sigma: float, seed: int = 0, mask: np.ndarray | None = None) -> np.ndarray:
    """Add i.i.d. Gaussian noise (std ``sigma`` per real/imag part) on sampled entries.

    ``y`` is (2, N_c, T, H, W). Without ``mask`` the sampled set is taken as
    the nonzero entries of ``y``.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    y = y.data if isinstance(y, Tensor) else np.asarray(y, dtype=np.float64)
    if sigma == 0:
        return y.copy()
    if mask is None:
        sampled = np.any(y != 0, axis=0)
    else:
        mask = np.asarray(mask)
        if mask.ndim == 2:
            mask = np.repeat(mask[:, :, None], y.shape[-1], axis=2)
        sampled = np.broadcast_to(mask[None] != 0, y.shape[1:])
    noise = np.random.default_rng(seed).normal(0.0, sigma, size=y.shape)
    return y + noise * sampled[None]
