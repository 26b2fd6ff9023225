"""Dense flow-field warping and feature-space losses.

The warp operator is a backward (gather) warp: every output pixel p samples
the source at p + flow(p) with bilinear interpolation, clamped to the image
border.  That convention keeps the output well defined everywhere and avoids
injecting synthetic black borders into loss computations.  The sign
convention is that flow(p) points from an output pixel to its source sample
location.

Losses operate on pluggable per-level feature maps; :func:`feature_pyramid`
provides a deterministic extractor (blurred intensities plus Sobel gradient
magnitudes per pyramid level) for use where a learned network is not wanted.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._filters import blur5, decimate2, sample_plane, sobel_gradients
from .images import ColorImage, GrayImage


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement map; ``u`` horizontal, ``v`` vertical, in pixels."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.ascontiguousarray(self.u, dtype=np.float64)
        v = np.ascontiguousarray(self.v, dtype=np.float64)
        if u.ndim != 2 or u.shape != v.shape:
            raise ValueError(f"u and v must be equal-shaped 2-D arrays, got {u.shape} and {v.shape}")
        u.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @classmethod
    def constant(cls, width: int, height: int, u: float, v: float) -> "FlowField":
        return cls(np.full((height, width), float(u)), np.full((height, width), float(v)))


@dataclass(frozen=True)
class FeatureMap:
    """A stack of equally sized planes; ``data`` has shape (channels, h, w)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"FeatureMap data must have shape (c, h, w), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValueError("FeatureMap must have at least one channel and one pixel")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @classmethod
    def from_color(cls, img: ColorImage) -> "FeatureMap":
        return cls(np.moveaxis(img.data, 2, 0))

    @classmethod
    def from_gray(cls, img: GrayImage) -> "FeatureMap":
        return cls(img.data[None, :, :])

    def to_color(self) -> ColorImage:
        if self.channels != 3:
            raise ValueError(f"need exactly 3 channels to form a color image, got {self.channels}")
        return ColorImage(np.clip(np.moveaxis(self.data, 0, 2), 0.0, 1.0))


@dataclass(frozen=True)
class LayerWeights:
    """Per-level nonnegative loss weights; at least one must be positive."""

    lambdas: tuple[float, ...]

    def __post_init__(self):
        lam = tuple(float(x) for x in self.lambdas)
        if not lam:
            raise ValueError("LayerWeights requires at least one weight")
        if any(x < 0.0 or not np.isfinite(x) for x in lam):
            raise ValueError("layer weights must be finite and nonnegative")
        if not any(x > 0.0 for x in lam):
            raise ValueError("at least one layer weight must be positive")
        object.__setattr__(self, "lambdas", lam)

    @classmethod
    def uniform(cls, levels: int, value: float = 1.0) -> "LayerWeights":
        return cls((float(value),) * levels)


def bilinear_sample(img: FeatureMap, x: float, y: float) -> np.ndarray:
    """Per-channel bilinear read at (x, y), clamped to the image rectangle."""
    xs = np.asarray(float(x))
    ys = np.asarray(float(y))
    return np.array([sample_plane(ch, xs, ys) for ch in img.data])


def warp_image(img: FeatureMap, flow: FlowField) -> FeatureMap:
    """Backward-warp ``img`` by ``flow``: out(p) = img(p + flow(p)) bilinearly."""
    if flow.width != img.width or flow.height != img.height:
        raise ValueError(
            f"flow size {flow.width}x{flow.height} does not match "
            f"image size {img.width}x{img.height}"
        )
    yy, xx = np.meshgrid(
        np.arange(img.height, dtype=np.float64),
        np.arange(img.width, dtype=np.float64),
        indexing="ij",
    )
    xs = xx + flow.u
    ys = yy + flow.v
    out = np.stack([sample_plane(ch, xs, ys) for ch in img.data])
    return FeatureMap(out)


def perceptual_loss(
    feats_a: list[FeatureMap] | tuple[FeatureMap, ...],
    feats_b: list[FeatureMap] | tuple[FeatureMap, ...],
    weights: LayerWeights,
) -> float:
    """Weighted sum over levels of squared Frobenius feature distances.

    loss = sum_k lambda_k * ||feats_a[k] - feats_b[k]||_F^2, the norm taken
    over every entry of the level.
    """
    if len(feats_a) != len(feats_b):
        raise ValueError(f"feature lists differ in length: {len(feats_a)} vs {len(feats_b)}")
    if len(weights.lambdas) != len(feats_a):
        raise ValueError(
            f"got {len(weights.lambdas)} weights for {len(feats_a)} feature levels"
        )
    total = 0.0
    for k, (fa, fb) in enumerate(zip(feats_a, feats_b)):
        if fa.data.shape != fb.data.shape:
            raise ValueError(
                f"level {k} shapes differ: {fa.data.shape} vs {fb.data.shape}"
            )
        d = fa.data - fb.data
        total += weights.lambdas[k] * float(np.sum(d * d))
    return total


def total_loss(l_ldm: float, l_p: float, lambda_p: float) -> float:
    """Weighted sum of the denoising loss and the perceptual loss."""
    if l_p < 0.0:
        raise ValueError("perceptual loss must be nonnegative")
    if lambda_p < 0.0:
        raise ValueError("perceptual weight must be nonnegative")
    return l_ldm + lambda_p * l_p


def feature_pyramid(img: FeatureMap, levels: int) -> list[FeatureMap]:
    """Deterministic multi-level features: intensities plus edge strength.

    Level 0 intensities are the input planes themselves; level l+1 halves
    the resolution via 5-tap Gaussian blur and 2x decimation.  Each level
    carries the intensity channels followed by one Sobel gradient-magnitude
    channel per input channel, capturing structure at that scale.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if min(img.width, img.height) < 2 ** (levels - 1):
        raise ValueError(
            f"image {img.width}x{img.height} too small for {levels} pyramid levels"
        )
    out = []
    planes = [np.asarray(ch) for ch in img.data]
    for level in range(levels):
        if level > 0:
            planes = [decimate2(blur5(p)) for p in planes]
        grads = []
        for p in planes:
            gx, gy = sobel_gradients(p)
            grads.append(np.sqrt(gx * gx + gy * gy))
        out.append(FeatureMap(np.stack(planes + grads)))
    return out


# ---------------------------------------------------------------------------
# Middlebury .flo flow files: b"PIEH", int32 width, int32 height, then
# row-major interleaved float32 (u, v) pairs, all little-endian.
# ---------------------------------------------------------------------------

FLO_MAGIC = b"PIEH"


def write_flo(flow: FlowField, path: str | Path) -> None:
    """Write a flow field in Middlebury .flo format."""
    header = FLO_MAGIC + struct.pack("<ii", flow.width, flow.height)
    interleaved = np.empty((flow.height, flow.width, 2), dtype="<f4")
    interleaved[:, :, 0] = flow.u
    interleaved[:, :, 1] = flow.v
    Path(path).write_bytes(header + interleaved.tobytes())


def read_flo(path: str | Path) -> FlowField:
    """Read a Middlebury .flo flow field."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12:
        raise ValueError(f"{path.name}: too short for a .flo header")
    if raw[:4] != FLO_MAGIC:
        raise ValueError(f"{path.name}: bad .flo magic {raw[:4]!r}, expected {FLO_MAGIC!r}")
    width, height = struct.unpack("<ii", raw[4:12])
    if width < 1 or height < 1:
        raise ValueError(f"{path.name}: bad .flo dimensions {width}x{height}")
    n = width * height * 2
    body = np.frombuffer(raw[12:], dtype="<f4")
    if body.size != n:
        raise ValueError(f"{path.name}: expected {n} float32 values, found {body.size}")
    grid = body.reshape(height, width, 2).astype(np.float64)
    return FlowField(grid[:, :, 0], grid[:, :, 1])
