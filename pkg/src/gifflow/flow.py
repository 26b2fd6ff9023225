"""Sparse optical flow and scalar motion scoring between two frames.

The pipeline follows the classic sparse-tracking recipe:

1. Detect trackable corners on the first frame with the Shi-Tomasi
   criterion: the score of a pixel is the smaller eigenvalue of the 2x2
   structure tensor accumulated over a 3x3 neighborhood of Sobel gradients.
   Candidates at or above quality_level * (best score) are accepted greedily
   in score order, skipping any candidate closer than min_distance to an
   already accepted corner.
2. Track each corner into the second frame with pyramidal Lucas-Kanade:
   on each level of a 5-tap Gaussian pyramid, iterate the 2x2 normal
   equations of the brightness-constancy residual over a square window,
   sampling with the shared bilinear interpolator (clamp-to-edge), until the
   update norm drops below eps or max_iters is reached.  The displacement is
   doubled when moving to the next finer level.  A point is lost when its
   window center leaves the image or the normal matrix is near-singular
   (smaller eigenvalue below 1e-4 times the window area).
3. Reduce the surviving displacement vectors to one scalar: vector lengths
   above noise_threshold are averaged; if none survive, the motion score of
   the pair is 0.

All functions are pure; images are immutable, so concurrent calls are safe.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from ._filters import (
    blur5,
    box_sum3,
    central_gradients,
    decimate2,
    sample_plane,
    sobel_gradients,
)
from .images import GrayImage

# a point is lost when min-eig(normal matrix) < this factor * window area
SINGULARITY_FACTOR = 1e-4


@dataclass(frozen=True)
class FlowParams:
    """Tunables for detection, tracking and noise filtering.

    The defaults put pair scores in the familiar numeric regime of
    mainstream sparse-LK implementations; noise_threshold rejects subpixel
    jitter while sitting well below any magnitude range worth curating.
    """

    max_corners: int = 200
    quality_level: float = 0.01
    min_distance: float = 7.0
    window: int = 15
    pyramid_levels: int = 3
    max_iters: int = 30
    eps: float = 0.01
    noise_threshold: float = 0.5

    def __post_init__(self):
        if self.max_corners < 1:
            raise ValueError("max_corners must be >= 1")
        if not 0.0 < self.quality_level <= 1.0:
            raise ValueError("quality_level must lie in (0, 1]")
        if self.min_distance < 0.0:
            raise ValueError("min_distance must be >= 0")
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("window must be odd and >= 3")
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.eps <= 0.0:
            raise ValueError("eps must be > 0")
        if self.noise_threshold < 0.0:
            raise ValueError("noise_threshold must be >= 0")

    def to_config_text(self) -> str:
        lines = [f"{f.name} = {getattr(self, f.name)}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_config_text(cls, text: str) -> "FlowParams":
        known = {f.name: f.type for f in fields(cls)}
        ints = {"max_corners", "window", "pyramid_levels", "max_iters"}
        values: dict[str, int | float] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key not in known:
                raise ValueError(f"line {lineno}: unknown flow parameter {key!r}")
            if key in values:
                raise ValueError(f"line {lineno}: duplicate flow parameter {key!r}")
            try:
                values[key] = int(val) if key in ints else float(val)
            except ValueError:
                raise ValueError(f"line {lineno}: bad value {val!r} for {key!r}") from None
        return cls(**values)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_config_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FlowParams":
        return cls.from_config_text(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class FeaturePoint:
    """Subpixel image location, x rightward, y downward."""

    x: float
    y: float


@dataclass(frozen=True)
class TrackedPoint:
    """Where a feature went; ``displaced`` is meaningless when lost."""

    origin: FeaturePoint
    displaced: FeaturePoint
    status: str  # "tracked" | "lost"

    def __post_init__(self):
        if self.status not in ("tracked", "lost"):
            raise ValueError(f"status must be 'tracked' or 'lost', got {self.status!r}")


@dataclass(frozen=True)
class FlowVectorSet:
    """Displacement vectors of the successfully tracked points."""

    vectors: tuple[tuple[float, float], ...]

    @classmethod
    def from_tracked(cls, tracked: list[TrackedPoint]) -> "FlowVectorSet":
        vecs = tuple(
            (t.displaced.x - t.origin.x, t.displaced.y - t.origin.y)
            for t in tracked
            if t.status == "tracked"
        )
        return cls(vecs)

    def magnitudes(self) -> np.ndarray:
        if not self.vectors:
            return np.zeros(0)
        arr = np.asarray(self.vectors)
        return np.hypot(arr[:, 0], arr[:, 1])


@dataclass(frozen=True)
class FlowMagnitudeResult:
    """Aggregate motion score of one frame pair plus survival counters."""

    magnitude: float
    n_features_detected: int
    n_tracked: int
    n_above_threshold: int

    def __post_init__(self):
        if not 0 <= self.n_above_threshold <= self.n_tracked <= self.n_features_detected:
            raise ValueError(
                "expected n_above_threshold <= n_tracked <= n_features_detected, got "
                f"{self.n_above_threshold}/{self.n_tracked}/{self.n_features_detected}"
            )
        if self.magnitude < 0.0:
            raise ValueError("magnitude must be nonnegative")
        if self.n_above_threshold == 0 and self.magnitude != 0.0:
            raise ValueError("magnitude must be 0 when no vectors survive the threshold")


def gaussian_pyramid(img: GrayImage, levels: int) -> list[GrayImage]:
    """Coarse-to-fine image stack; level 0 is the input, each level halves.

    Level l+1 is the 5-tap Gaussian blur of level l decimated by 2, so its
    dimensions are ceil(previous / 2).
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if min(img.width, img.height) < 2 ** (levels - 1):
        raise ValueError(
            f"image {img.width}x{img.height} too small for {levels} pyramid levels"
        )
    out = [img]
    plane = img.data
    for _ in range(levels - 1):
        plane = decimate2(blur5(plane))
        out.append(GrayImage(np.clip(plane, 0.0, 1.0)))
    return out


def _pyramid_planes(img: GrayImage, levels: int) -> list[np.ndarray]:
    if min(img.width, img.height) < 2 ** (levels - 1):
        raise ValueError(
            f"image {img.width}x{img.height} too small for {levels} pyramid levels"
        )
    planes = [img.data]
    for _ in range(levels - 1):
        planes.append(decimate2(blur5(planes[-1])))
    return planes


def shi_tomasi_scores(img: GrayImage) -> np.ndarray:
    """Per-pixel min-eigenvalue corner scores (Sobel gradients, 3x3 window)."""
    gx, gy = sobel_gradients(img.data)
    a = box_sum3(gx * gx)
    b = box_sum3(gx * gy)
    c = box_sum3(gy * gy)
    return 0.5 * ((a + c) - np.sqrt((a - c) ** 2 + 4.0 * b * b))


def good_features_to_track(
    img: GrayImage,
    max_corners: int = 200,
    quality_level: float = 0.01,
    min_distance: float = 7.0,
) -> list[FeaturePoint]:
    """Strongest Shi-Tomasi corners with greedy min-distance suppression.

    Returns at most max_corners points sorted by descending score.  A flat
    image has no positive scores and yields an empty list.
    """
    if img.width < 3 or img.height < 3:
        raise ValueError("image must be at least 3x3 for corner detection")
    if max_corners < 1:
        raise ValueError("max_corners must be >= 1")
    if not 0.0 < quality_level <= 1.0:
        raise ValueError("quality_level must lie in (0, 1]")
    if min_distance < 0.0:
        raise ValueError("min_distance must be >= 0")

    scores = shi_tomasi_scores(img)
    best = float(scores.max())
    if best <= 0.0:
        return []
    threshold = quality_level * best
    ys, xs = np.nonzero(scores >= threshold)
    cand_scores = scores[ys, xs]
    # score-descending order with (y, x) tie-breaking for determinism
    order = np.lexsort((xs, ys, -cand_scores))
    xs = xs[order].astype(np.float64)
    ys = ys[order].astype(np.float64)

    min_d2 = min_distance * min_distance
    acc_x = np.empty(max_corners)
    acc_y = np.empty(max_corners)
    n_acc = 0
    for x, y in zip(xs, ys):
        if n_acc:
            dx = acc_x[:n_acc] - x
            dy = acc_y[:n_acc] - y
            if (dx * dx + dy * dy).min() < min_d2:
                continue
        acc_x[n_acc] = x
        acc_y[n_acc] = y
        n_acc += 1
        if n_acc == max_corners:
            break
    return [FeaturePoint(float(acc_x[i]), float(acc_y[i])) for i in range(n_acc)]


def lucas_kanade(
    prev: GrayImage,
    next: GrayImage,
    points: list[FeaturePoint],
    window: int = 15,
    pyramid_levels: int = 3,
    max_iters: int = 30,
    eps: float = 0.01,
) -> list[TrackedPoint]:
    """Track ``points`` from ``prev`` into ``next`` (pyramidal Lucas-Kanade).

    See the module docstring for the algorithm; displacements are solved per
    point from the windowed normal equations, coarse-to-fine.
    """
    if prev.width != next.width or prev.height != next.height:
        raise ValueError(
            f"frame sizes differ: {prev.width}x{prev.height} vs {next.width}x{next.height}"
        )
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    if not points:
        return []

    pyr_prev = _pyramid_planes(prev, pyramid_levels)
    pyr_next = _pyramid_planes(next, pyramid_levels)

    n = len(points)
    px = np.array([p.x for p in points])
    py = np.array([p.y for p in points])
    half = window // 2
    win_area = float(window * window)
    oy, ox = np.meshgrid(np.arange(-half, half + 1), np.arange(-half, half + 1), indexing="ij")
    ox = ox.ravel().astype(np.float64)
    oy = oy.ravel().astype(np.float64)

    lost = np.zeros(n, dtype=bool)
    g = np.zeros((n, 2))  # accumulated displacement, in current-level pixels

    for level in reversed(range(pyramid_levels)):
        i0 = pyr_prev[level]
        i1 = pyr_next[level]
        h, w = i0.shape
        gx_plane, gy_plane = central_gradients(i0)

        scale = 1.0 / (1 << level)
        cx = px * scale
        cy = py * scale

        base_x = cx[:, None] + ox[None, :]
        base_y = cy[:, None] + oy[None, :]
        patch0 = sample_plane(i0, base_x, base_y)
        gxp = sample_plane(gx_plane, base_x, base_y)
        gyp = sample_plane(gy_plane, base_x, base_y)

        a = np.sum(gxp * gxp, axis=1)
        b = np.sum(gxp * gyp, axis=1)
        c = np.sum(gyp * gyp, axis=1)
        min_eig = 0.5 * ((a + c) - np.sqrt((a - c) ** 2 + 4.0 * b * b))
        lost |= min_eig < SINGULARITY_FACTOR * win_area
        det = a * c - b * b

        d = np.zeros((n, 2))
        active = ~lost
        for _ in range(max_iters):
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            shift_x = (g[idx, 0] + d[idx, 0])[:, None]
            shift_y = (g[idx, 1] + d[idx, 1])[:, None]
            patch1 = sample_plane(i1, base_x[idx] + shift_x, base_y[idx] + shift_y)
            diff = patch0[idx] - patch1
            b1 = np.sum(diff * gxp[idx], axis=1)
            b2 = np.sum(diff * gyp[idx], axis=1)
            inv_det = 1.0 / det[idx]
            nu_x = (c[idx] * b1 - b[idx] * b2) * inv_det
            nu_y = (a[idx] * b2 - b[idx] * b1) * inv_det
            d[idx, 0] += nu_x
            d[idx, 1] += nu_y

            center_x = cx[idx] + g[idx, 0] + d[idx, 0]
            center_y = cy[idx] + g[idx, 1] + d[idx, 1]
            exited = (
                (center_x < 0.0) | (center_x > w - 1.0) | (center_y < 0.0) | (center_y > h - 1.0)
            )
            lost[idx[exited]] = True
            converged = np.hypot(nu_x, nu_y) < eps
            active[idx[exited | converged]] = False

        g = g + d
        if level > 0:
            g *= 2.0

    out_x = px + g[:, 0]
    out_y = py + g[:, 1]
    w0, h0 = prev.width, prev.height
    lost |= (out_x < 0.0) | (out_x > w0 - 1.0) | (out_y < 0.0) | (out_y > h0 - 1.0)

    results = []
    for i, p in enumerate(points):
        if lost[i]:
            results.append(TrackedPoint(p, p, "lost"))
        else:
            results.append(TrackedPoint(p, FeaturePoint(float(out_x[i]), float(out_y[i])), "tracked"))
    return results


def flow_magnitude(
    prev: GrayImage, next: GrayImage, params: FlowParams = FlowParams()
) -> FlowMagnitudeResult:
    """Score the motion between two frames as one scalar magnitude.

    Detect corners on ``prev``, track them into ``next``, take the lengths of
    the surviving displacement vectors, drop those at or below
    params.noise_threshold, and average the rest; with nothing left the
    score is 0.  Lost tracks never contribute.
    """
    if prev.width != next.width or prev.height != next.height:
        raise ValueError(
            f"frame sizes differ: {prev.width}x{prev.height} vs {next.width}x{next.height}"
        )
    points = good_features_to_track(
        prev, params.max_corners, params.quality_level, params.min_distance
    )
    if not points:
        return FlowMagnitudeResult(0.0, 0, 0, 0)
    tracked = lucas_kanade(
        prev,
        next,
        points,
        window=params.window,
        pyramid_levels=params.pyramid_levels,
        max_iters=params.max_iters,
        eps=params.eps,
    )
    mags = FlowVectorSet.from_tracked(tracked).magnitudes()
    surviving = mags[mags > params.noise_threshold]
    magnitude = float(surviving.mean()) if surviving.size else 0.0
    return FlowMagnitudeResult(
        magnitude=magnitude,
        n_features_detected=len(points),
        n_tracked=int(mags.size),
        n_above_threshold=int(surviving.size),
    )
