"""Synthetic dynamic cine phantoms and the DSRE1 dataset file format."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Feature",
    "PhantomSpec",
    "Sample",
    "generate_cine_phantom",
    "random_phantom_spec",
    "make_sample",
    "write_dataset",
    "read_dataset",
    "DatasetFormatError",
]

SHAPES = ("ellipse", "ring", "L-blob")
MAGIC = b"DSRE1"


class DatasetFormatError(ValueError):
    pass


@dataclass
class Feature:
    shape: str = "ellipse"
    center: tuple[float, float] = (0.0, 0.0)   # (x, y) in pixels from the grid centre, y up
    axes: tuple[float, float] = (4.0, 4.0)     # semi-axes in pixels
    angle: float = 0.0                         # base orientation, radians
    intensity: float = 1.0
    omega: float = 0.0                         # radians per frame
    alpha: float = 0.0                         # pulsation amplitude
    phase: float = 0.0                         # pulsation phase

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown feature shape {self.shape!r}")
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError(f"intensity must be in [0, 1], got {self.intensity}")
        self.center = tuple(float(c) for c in self.center)
        self.axes = tuple(float(a) for a in self.axes)


@dataclass
class PhantomSpec:
    T: int = 8
    H: int = 64
    W: int = 64
    features: list[Feature] = field(default_factory=list)
    copies: int = 1            # rotational copies of each feature about the grid centre
    phase_order: int = 1       # total degree of the smooth phase polynomial
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        d = dict(d)
        d["features"] = [Feature(**f) for f in d.get("features", [])]
        return cls(**d)


def _indicator(kind, u, v, a, b):
    """Membership of local coordinates (u, v) in a shape with semi-axes (a, b)."""
    if kind == "ellipse":
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0
    if kind == "ring":
        r = (u / a) ** 2 + (v / b) ** 2
        return (r <= 1.0) & (r >= 0.45)
    # L-blob: a bar along u plus a bar along v sharing the lower-left corner
    t = 0.45
    bar1 = (np.abs(u) <= a) & (v >= -b) & (v <= -b + 2 * t * b)
    bar2 = (u >= -a) & (u <= -a + 2 * t * a) & (np.abs(v) <= b)
    return bar1 | bar2


def _extent(f: Feature) -> float:
    scale = 1 + abs(f.alpha)
    reach = np.hypot(*f.axes) if f.shape == "L-blob" else max(f.axes)
    return np.hypot(*f.center) + reach * scale


def generate_cine_phantom(spec: PhantomSpec) -> np.ndarray:
    """Complex (T, H, W) cine sequence.

    Frame t draws each feature rotated to ``angle + omega*t`` with semi-axes
    scaled by ``1 + alpha*sin(2*pi*t/T + phase)``. Coverage is estimated with
    2x2 cell-centred supersampling; later features are painted over earlier
    ones. A smooth polynomial phase is applied at the end.
    """
    T, H, W = spec.T, spec.H, spec.W
    half = min(H, W) / 2
    for f in spec.features:
        if _extent(f) > half:
            raise ValueError(f"feature {f.shape} at {f.center} leaves the field of view")
    ss = 2
    offs = (np.arange(ss) + 0.5) / ss - 0.5
    rows = (np.arange(H)[:, None] + offs[None, :]).reshape(-1)
    cols = (np.arange(W)[:, None] + offs[None, :]).reshape(-1)
    ii, jj = np.meshgrid(rows, cols, indexing="ij")
    x = jj - (W - 1) / 2
    y = (H - 1) / 2 - ii
    img = np.zeros((T, H, W))
    for t in range(T):
        frame = np.zeros((H * ss, W * ss))
        for f in spec.features:
            s = 1 + f.alpha * np.sin(2 * np.pi * t / T + f.phase)
            a, b = f.axes[0] * s, f.axes[1] * s
            for j in range(spec.copies):
                rot = 2 * np.pi * j / spec.copies
                cr, sr = np.cos(rot), np.sin(rot)
                cx = cr * f.center[0] - sr * f.center[1]
                cy = sr * f.center[0] + cr * f.center[1]
                th = f.angle + rot + f.omega * t
                c, sn = np.cos(th), np.sin(th)
                u = c * (x - cx) + sn * (y - cy)
                v = -sn * (x - cx) + c * (y - cy)
                inside = _indicator(f.shape, u, v, a, b)
                frame = np.where(inside, f.intensity, frame)
        img[t] = frame.reshape(H, ss, W, ss).mean(axis=(1, 3))
    rng = np.random.default_rng(spec.seed)
    yy, xx = np.meshgrid(np.linspace(-1, 1, H), np.linspace(-1, 1, W), indexing="ij")
    phase = np.zeros((H, W))
    for deg in range(1, spec.phase_order + 1):
        for p in range(deg + 1):
            phase += rng.normal(0, 0.6 / deg) * xx ** p * yy ** (deg - p)
    return img * np.exp(1j * phase)[None]


def random_phantom_spec(seed: int, T: int = 8, H: int = 64, W: int = 64) -> PhantomSpec:
    """A body ellipse with rotating, pulsating inner structures.

    Inner structures come in 1, 2 or 4 rotational copies so the same pattern
    appears at several orientations within a frame and across frames.
    """
    rng = np.random.default_rng(seed)
    half = min(H, W) / 2
    feats = [Feature("ellipse", (0.0, 0.0), (half * rng.uniform(0.78, 0.88), half * rng.uniform(0.7, 0.85)),
                     angle=rng.uniform(0, np.pi), intensity=float(rng.uniform(0.25, 0.4)))]
    copies = int(rng.choice([2, 4, 4]))
    for _ in range(int(rng.integers(2, 4))):
        kind = str(rng.choice(SHAPES))
        r = half * rng.uniform(0.2, 0.45)
        ang = rng.uniform(0, 2 * np.pi)
        size = half * rng.uniform(0.08, 0.16)
        feats.append(Feature(kind, (r * np.cos(ang), r * np.sin(ang)),
                             (size, size * rng.uniform(0.5, 1.0)),
                             angle=rng.uniform(0, 2 * np.pi), intensity=float(rng.uniform(0.6, 1.0)),
                             omega=float(rng.uniform(-0.15, 0.15)),
                             alpha=float(rng.uniform(0.0, 0.15)), phase=rng.uniform(0, 2 * np.pi)))
    # a pulsating central disk, the "ventricle"
    feats.append(Feature("ellipse", (0.0, 0.0), (half * 0.12, half * 0.12), intensity=float(rng.uniform(0.7, 1.0)),
                         alpha=float(rng.uniform(0.1, 0.2)), phase=rng.uniform(0, 2 * np.pi)))
    return PhantomSpec(T, H, W, feats, copies=copies, phase_order=2, seed=seed)


def make_sample(seed: int, T: int = 8, H: int = 64, W: int = 64, n_coils: int = 4, R: float = 8.0) -> "Sample":
    """Phantom, coil maps and line mask, all drawn from one sample seed."""
    from .mri import generate_mask, mask_seed, synth_coil_maps

    image = generate_cine_phantom(random_phantom_spec(seed, T, H, W))
    sens = synth_coil_maps(n_coils, H, W, seed=seed)
    mask = generate_mask(H, T, R, seed=mask_seed(seed, R))
    return Sample(image, sens, mask, seed)


# ---------------------------------------------------------------------------
# DSRE1: magic, uint64 header length, UTF-8 JSON header, little-endian float64 payload

@dataclass
class Sample:
    image: np.ndarray    # complex (T, H, W)
    sens: np.ndarray     # complex (N_c, H, W)
    mask: np.ndarray     # (T, H) or (T, H, W)
    seed: int = 0


FIELDS = ("image_re", "image_im", "sens_re", "sens_im", "mask")


def _arrays(s: Sample):
    return [s.image.real, s.image.imag, s.sens.real, s.sens.imag, s.mask]


def write_dataset(path, samples, meta: dict | None = None) -> None:
    entries = []
    total = 0
    for s in samples:
        shapes = {name: list(a.shape) for name, a in zip(FIELDS, _arrays(s))}
        entries.append({"seed": int(s.seed), "shapes": shapes})
        total += sum(int(np.prod(v)) for v in shapes.values())
    header = {"dtype": "<f8", "fields": list(FIELDS), "samples": entries,
              "element_count": total, "meta": meta or {}}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for s in samples:
            for a in _arrays(s):
                fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_header(buf: bytes, magic: bytes, what: str):
    if buf[:len(magic)] != magic:
        raise DatasetFormatError(f"{what}: bad magic {buf[:len(magic)]!r}, expected {magic!r}")
    off = len(magic)
    if len(buf) < off + 8:
        raise DatasetFormatError(f"{what}: truncated header")
    (n,) = struct.unpack("<Q", buf[off:off + 8])
    off += 8
    try:
        header = json.loads(buf[off:off + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"{what}: unreadable header ({exc})") from None
    return header, off + n


def _cplx(re, im):
    # assemble without arithmetic so signed zeros survive the round trip
    z = np.empty(re.shape, dtype=np.complex128)
    z.real = re
    z.imag = im
    return z


def read_dataset(path) -> tuple[list[Sample], dict]:
    buf = Path(path).read_bytes()
    header, off = _read_header(buf, MAGIC, str(path))
    payload = buf[off:]
    expected = int(header["element_count"])
    found_elems = len(payload) / 8
    if len(payload) != expected * 8:
        raise DatasetFormatError(
            f"{path}: payload holds {found_elems:g} elements, header declares {expected}")
    declared = sum(int(np.prod(v)) for e in header["samples"] for v in e["shapes"].values())
    if declared != expected:
        raise DatasetFormatError(
            f"{path}: sample shapes sum to {declared} elements, header declares {expected}")
    data = np.frombuffer(payload, dtype="<f8")
    samples = []
    pos = 0
    for e in header["samples"]:
        arrs = []
        for name in FIELDS:
            shape = tuple(e["shapes"][name])
            n = int(np.prod(shape))
            arrs.append(data[pos:pos + n].reshape(shape).astype(np.float64))
            pos += n
        if arrs[0].shape != arrs[1].shape or arrs[2].shape != arrs[3].shape:
            raise DatasetFormatError(f"{path}: real/imaginary shape disagreement")
        samples.append(Sample(_cplx(arrs[0], arrs[1]), _cplx(arrs[2], arrs[3]), arrs[4], int(e["seed"])))
    return samples, header.get("meta", {})
