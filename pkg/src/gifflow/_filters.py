"""Array-level filtering and sampling primitives shared across modules.

Everything here operates on bare 2-D float64 planes.  One convention

throughout: out-of-bounds reads clamp to the nearest edge pixel, both for
subpixel sampling and for convolution padding.
"""

from __future__ import annotations

import numpy as np

# 5-tap binomial approximation of a Gaussian, the classic pyramid kernel
GAUSS5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

SOBEL = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])


def sample_plane(plane: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear lookup of ``plane`` at real coordinates, clamped to the image.

    Exact at integer coordinates: the off-knot neighbors enter with weight
    exactly 0.0, so no rounding is introduced.
    """
    h, w = plane.shape
    x = np.clip(xs, 0.0, float(w - 1))
    y = np.clip(ys, 0.0, float(h - 1))
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = plane[y0, x0] * (1.0 - fx) + plane[y0, x1] * fx
    bot = plane[y1, x0] * (1.0 - fx) + plane[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def blur5(plane: np.ndarray) -> np.ndarray:
    """Separable 5-tap Gaussian blur with clamp-to-edge padding."""
    k = GAUSS5
    p = np.pad(plane, ((0, 0), (2, 2)), mode="edge")
    horiz = (
        p[:, 0:-4] * k[0]
        + p[:, 1:-3] * k[1]
        + p[:, 2:-2] * k[2]
        + p[:, 3:-1] * k[3]
        + p[:, 4:] * k[4]
    )
    p = np.pad(horiz, ((2, 2), (0, 0)), mode="edge")
    return (
        p[0:-4, :] * k[0]
        + p[1:-3, :] * k[1]
        + p[2:-2, :] * k[2]
        + p[3:-1, :] * k[3]
        + p[4:, :] * k[4]
    )


def decimate2(plane: np.ndarray) -> np.ndarray:
    """Keep every second row/column starting at 0; output dims are ceil(n/2)."""
    return plane[::2, ::2]


def sobel_gradients(plane: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel x/y gradients with clamp-to-edge padding (unnormalized)."""
    p = np.pad(plane, 1, mode="edge")
    gx = (
        (p[0:-2, 2:] - p[0:-2, 0:-2])
        + 2.0 * (p[1:-1, 2:] - p[1:-1, 0:-2])
        + (p[2:, 2:] - p[2:, 0:-2])
    )
    gy = (
        (p[2:, 0:-2] - p[0:-2, 0:-2])
        + 2.0 * (p[2:, 1:-1] - p[0:-2, 1:-1])
        + (p[2:, 2:] - p[0:-2, 2:])
    )
    return gx, gy


def central_gradients(plane: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradients (f(x+1) - f(x-1))/2 with edge clamping."""
    p = np.pad(plane, 1, mode="edge")
    gx = (p[1:-1, 2:] - p[1:-1, 0:-2]) * 0.5
    gy = (p[2:, 1:-1] - p[0:-2, 1:-1]) * 0.5
    return gx, gy


def box_sum3(plane: np.ndarray) -> np.ndarray:
    """Sum over each pixel's 3x3 neighborhood with clamp-to-edge padding."""
    p = np.pad(plane, 1, mode="edge")
    rows = p[0:-2, :] + p[1:-1, :] + p[2:, :]
    return rows[:, 0:-2] + rows[:, 1:-1] + rows[:, 2:]
