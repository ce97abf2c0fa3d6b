"""16-bit grayscale PGM export with a sidecar file recording the scaling bounds."""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["export_image", "image_slice", "MODES"]

MODES = ("magnitude", "error-map", "yt-profile")


def image_slice(image, mode: str, frame: int = 0, column: int | None = None, ref=None) -> np.ndarray:
    """2D slice of a complex (T, H, W) cine for ``mode``.

    ``magnitude`` and ``error-map`` give frame ``frame``; ``yt-profile``
    stacks column ``column`` (default: centre) of every frame into a (H, T)
    y-t image. ``error-map`` needs ``ref`` and shows ``|image - ref|``.
    """
    image = np.asarray(image)
    if image.ndim != 3:
        raise ValueError(f"expected a (T, H, W) cine, got shape {image.shape}")
    if mode not in MODES:
        raise ValueError(f"unknown export mode {mode!r}; choose from {MODES}")
    if mode == "error-map":
        if ref is None:
            raise ValueError("error-map export needs a reference image")
        return np.abs(image[frame] - np.asarray(ref)[frame])
    if mode == "magnitude":
        return np.abs(image[frame])
    col = image.shape[2] // 2 if column is None else column
    return np.abs(image[:, :, col]).T


def export_image(data, path, mode: str = "magnitude") -> tuple[float, float]:
    """Write a min-max scaled 16-bit PGM of the 2D array ``data``.

    The bounds go to ``<path>.bounds.txt``. A constant image becomes uniform
    mid-gray. Returns the (low, high) bounds.
    """
    if mode not in MODES:
        raise ValueError(f"unknown export mode {mode!r}; choose from {MODES}")
    a = np.asarray(data, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"export needs a 2D slice, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("export needs finite values")
    lo, hi = float(a.min()), float(a.max())
    if hi > lo:
        q = np.round((a - lo) / (hi - lo) * 65535.0)
    else:
        q = np.full(a.shape, 32768.0)
    pixels = q.astype(">u2")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{a.shape[1]} {a.shape[0]}\n65535\n".encode("ascii"))
        fh.write(pixels.tobytes())
    with open(str(path) + ".bounds.txt", "w", encoding="utf-8") as fh:
        fh.write(f"mode {mode}\nmin {lo!r}\nmax {hi!r}\n")
    return lo, hi
