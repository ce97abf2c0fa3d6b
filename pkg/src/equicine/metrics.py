"""Image quality metrics: PSNR on complex data, SSIM and HFEN on magnitudes.

All spatial filters use reflect padding and kernels with exact 4-fold
symmetry, so every metric is unchanged when both arguments are rotated by
the same quarter turn.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

__all__ = ["psnr", "ssim", "hfen", "log_kernel", "as_complex_image", "PSNR_CAP"]

PSNR_CAP = 300.0

_SSIM_SIGMA = 1.5
_SSIM_RADIUS = 5          # 11x11 window
_K1, _K2 = 0.01, 0.03


def as_complex_image(x) -> np.ndarray:
    """Accept complex (T, H, W) or real (2, T, H, W) channel arrays."""
    x = getattr(x, "data", x)
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return x
    if x.ndim == 4 and x.shape[0] == 2:
        return x[0] + 1j * x[1]
    return x.astype(np.float64)


def _frames(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[None]
    if x.ndim != 3:
        raise ValueError(f"expected (H, W) or (T, H, W) magnitudes, got shape {x.shape}")
    return x


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr(rec, ref) -> float:
    """``20 log10(max|ref| / RMSE)`` over complex voxels; ``inf`` on exact match."""
    rec, ref = as_complex_image(rec), as_complex_image(ref)
    _same_shape(rec, ref)
    peak = np.max(np.abs(ref))
    if peak == 0:
        raise ValueError("psnr needs a nonzero reference")
    mse = np.mean(np.abs(rec - ref) ** 2)
    if mse == 0:
        return float("inf")
    return float(20 * np.log10(peak / np.sqrt(mse)))


def _gauss(x):
    return ndimage.gaussian_filter(x, _SSIM_SIGMA, mode="reflect", truncate=_SSIM_RADIUS / _SSIM_SIGMA)


def ssim(rec, ref) -> float:
    """Mean local SSIM per frame (Gaussian window, border-cropped), averaged over frames.

    The dynamic range is ``max(ref) - min(ref)`` over the whole sequence.
    """
    rec, ref = _frames(rec), _frames(ref)
    _same_shape(rec, ref)
    if not np.any(ref):
        raise ValueError("ssim needs a non-constant-zero reference")
    if min(ref.shape[1:]) < 2 * _SSIM_RADIUS + 1:
        raise ValueError(f"ssim needs frames of at least {2 * _SSIM_RADIUS + 1} pixels per side, got {ref.shape[1:]}")
    data_range = ref.max() - ref.min()
    if data_range == 0:
        data_range = abs(ref.max())
    c1 = (_K1 * data_range) ** 2
    c2 = (_K2 * data_range) ** 2
    r = _SSIM_RADIUS
    scores = []
    for x, y in zip(rec, ref):
        mx, my = _gauss(x), _gauss(y)
        vx = _gauss(x * x) - mx * mx
        vy = _gauss(y * y) - my * my
        cxy = _gauss(x * y) - mx * my
        s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2))
        scores.append(s[r:-r, r:-r].mean())
    return float(np.mean(scores))


def log_kernel(size: int = 15, sigma: float = 1.5) -> np.ndarray:
    """Zero-sum Laplacian-of-Gaussian kernel."""
    h = size // 2
    y, x = np.mgrid[-h:h + 1, -h:h + 1].astype(np.float64)
    r2 = x * x + y * y
    g = np.exp(-r2 / (2 * sigma ** 2))
    k = (r2 - 2 * sigma ** 2) / sigma ** 4 * g / g.sum()
    k -= k.mean()
    # restore exact 4-fold symmetry after the subtraction
    k = (k + np.rot90(k) + np.rot90(k, 2) + np.rot90(k, 3)) / 4
    return k


_LOG = log_kernel()


def _log(x):
    return ndimage.correlate(x, _LOG, mode="reflect")


def hfen(rec, ref) -> float:
    """``||LoG(rec) - LoG(ref)|| / ||LoG(ref)||`` per frame, averaged over frames."""
    rec, ref = _frames(rec), _frames(ref)
    _same_shape(rec, ref)
    vals = []
    for t, (x, y) in enumerate(zip(rec, ref)):
        ly = _log(y)
        den = np.linalg.norm(ly)
        # a flat frame leaves only rounding residue after the zero-sum kernel
        if den <= 1e-12 * np.linalg.norm(y):
            raise ValueError(f"LoG of the reference frame {t} is identically zero")
        vals.append(np.linalg.norm(_log(x) - ly) / den)
    return float(np.mean(vals))
