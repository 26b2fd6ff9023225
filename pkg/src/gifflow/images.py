"""Raster frame types and basic image I/O.

All pixel data lives in float64 numpy arrays normalized to [0, 1]; integer
pixel formats are converted at the I/O boundary and never leak downstream.
Images are immutable after construction (the backing arrays are marked
read-only), so they can be shared freely across threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# ITU-R BT.601 luma coefficients, applied in this exact term order so the
# result is reproducible by scalar recomputation.
LUMA_R = 0.299
LUMA_G = 0.587
LUMA_B = 0.114


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ColorImage:
    """An RGB frame; ``data`` has shape (height, width, 3), channels in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"ColorImage data must have shape (h, w, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("ColorImage must have at least one pixel")
        if not np.isfinite(arr).all():
            raise ValueError("ColorImage data must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("ColorImage channel values must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class GrayImage:
    """A single-channel frame; ``data`` has shape (height, width), values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"GrayImage data must have shape (h, w), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("GrayImage must have at least one pixel")
        if not np.isfinite(arr).all():
            raise ValueError("GrayImage data must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("GrayImage intensities must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class FrameSequence:
    """An ordered clip of equally sized color frames.

    ``frame_delays`` carries per-frame delays in centiseconds when the source
    container provided them (animated GIFs do); otherwise it is None.  Frame
    indices are preserved as-is; no resampling to a common frame rate happens
    anywhere in this package.
    """

    clip_id: str
    frames: tuple[ColorImage, ...]
    frame_delays: tuple[int, ...] | None = field(default=None)

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("FrameSequence requires at least one frame")
        w, h = frames[0].width, frames[0].height
        for i, f in enumerate(frames):
            if f.width != w or f.height != h:
                raise ValueError(
                    f"frame {i} has size {f.width}x{f.height}, expected {w}x{h}"
                )
        object.__setattr__(self, "frames", frames)
        if self.frame_delays is not None:
            delays = tuple(int(d) for d in self.frame_delays)
            if len(delays) != len(frames):
                raise ValueError("frame_delays length must match frame count")
            object.__setattr__(self, "frame_delays", delays)

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    def __len__(self) -> int:
        return len(self.frames)


def to_grayscale(img: ColorImage) -> GrayImage:
    """BT.601 luma: 0.299 R + 0.587 G + 0.114 B per pixel.

    The weighted sum is evaluated as ((R*cr + G*cg) + B*cb) and clamped to
    [0, 1]; the clamp only ever absorbs sub-ulp overshoot of the float64 sum.
    """
    r = img.data[:, :, 0]
    g = img.data[:, :, 1]
    b = img.data[:, :, 2]
    luma = (r * LUMA_R + g * LUMA_G) + b * LUMA_B
    return GrayImage(np.clip(luma, 0.0, 1.0))


def gray_to_color(img: GrayImage) -> ColorImage:
    """Replicate a gray plane into R=G=B."""
    return ColorImage(np.repeat(img.data[:, :, None], 3, axis=2))


# ---------------------------------------------------------------------------
# PPM (P6) / PGM (P5) binary formats, maxval 255
# ---------------------------------------------------------------------------

_PNM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _parse_pnm(data: bytes, name: str) -> np.ndarray:
    """Parse binary PPM/PGM bytes into a (h, w, 3) or (h, w) uint8 array."""
    if data[:2] not in (b"P5", b"P6"):
        raise ValueError(f"{name}: not a binary PGM/PPM file (magic {data[:2]!r})")
    channels = 3 if data[:2] == b"P6" else 1
    pos = 2
    fields = []
    for _ in range(3):
        m = _PNM_TOKEN.match(data, pos)
        if not m:
            raise ValueError(f"{name}: truncated header")
        try:
            fields.append(int(m.group(1)))
        except ValueError:
            raise ValueError(f"{name}: bad header token {m.group(1)!r}") from None
        pos = m.end()
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ValueError(f"{name}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise ValueError(f"{name}: only maxval 255 is supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    n = width * height * channels
    raw = data[pos : pos + n]
    if len(raw) != n:
        raise ValueError(f"{name}: expected {n} pixel bytes, found {len(raw)}")
    arr = np.frombuffer(raw, dtype=np.uint8)
    if channels == 3:
        return arr.reshape(height, width, 3)
    return arr.reshape(height, width)


def read_image(path: str | Path) -> ColorImage:
    """Read one frame from a .ppm (P6), .pgm (P5) or .png file.

    PNG support requires Pillow; PPM/PGM are parsed natively.  Gray inputs
    are promoted to R=G=B color frames.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".ppm", ".pgm"):
        arr = _parse_pnm(path.read_bytes(), path.name)
        if arr.ndim == 2:
            arr = np.repeat(arr[:, :, None], 3, axis=2)
        return ColorImage(arr / 255.0)
    if suffix == ".png":
        try:
            from PIL import Image
        except ImportError:
            raise ValueError(
                f"{path.name}: PNG support requires Pillow (pip install Pillow)"
            ) from None
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        return ColorImage(arr / 255.0)
    raise ValueError(f"{path.name}: unsupported image format {suffix!r}")


def write_ppm(img: ColorImage, path: str | Path) -> None:
    """Write a frame as binary PPM (P6), maxval 255."""
    arr = np.rint(img.data * 255.0).astype(np.uint8)
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + arr.tobytes())


def write_pgm(img: GrayImage, path: str | Path) -> None:
    """Write a gray frame as binary PGM (P5), maxval 255."""
    arr = np.rint(img.data * 255.0).astype(np.uint8)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + arr.tobytes())


_FRAME_SUFFIXES = (".ppm", ".pgm", ".png")


def load_frame_dir(path: str | Path) -> FrameSequence:
    """Load a directory of frames named with zero-padded integer stems.

    Frames are ordered by the numeric value of the filename stem regardless
    of filesystem listing order.  All frames must share one size.
    """
    path = Path(path)
    if not path.is_dir():
        raise ValueError(f"{path}: not a directory")
    entries = []
    for p in sorted(path.iterdir()):
        if p.suffix.lower() not in _FRAME_SUFFIXES or not p.is_file():
            continue
        if not p.stem.isdigit():
            raise ValueError(f"{p.name}: frame files must have integer stems")
        entries.append((int(p.stem), p))
    if not entries:
        raise ValueError(f"{path}: no frame files found (expected {_FRAME_SUFFIXES})")
    entries.sort(key=lambda e: (e[0], e[1].name))
    seen: dict[int, Path] = {}
    for idx, p in entries:
        if idx in seen:
            raise ValueError(f"{p.name}: duplicate frame index {idx} (also {seen[idx].name})")
        seen[idx] = p
    frames = []
    for idx, p in entries:
        frame = read_image(p)
        if frames and (frame.width != frames[0].width or frame.height != frames[0].height):
            raise ValueError(
                f"{p.name}: size {frame.width}x{frame.height} does not match "
                f"{frames[0].width}x{frames[0].height} of the first frame"
            )
        frames.append(frame)
    return FrameSequence(clip_id=path.name, frames=tuple(frames))
