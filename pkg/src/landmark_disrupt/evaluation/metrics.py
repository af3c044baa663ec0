"""Landmark error and image-quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..faces import LEFT_OUTER, RIGHT_OUTER, LandmarkSet

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DATA_RANGE = 255.0
GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


def interocular(gt: LandmarkSet) -> float:
    return float(np.linalg.norm(gt.point(LEFT_OUTER) - gt.point(RIGHT_OUTER)))


def nme(pred: LandmarkSet, gt: LandmarkSet) -> float:
    """Mean point-to-point error normalised by the outer-eye-corner distance of ``gt``."""
    if pred.names != gt.names:
        raise ValueError("prediction and ground truth use different schemas")
    d = interocular(gt)
    if d <= 0:
        raise ValueError("degenerate ground truth: eye corners coincide")
    err = np.linalg.norm(pred.coords - gt.coords, axis=1)
    return float(err.mean() / d)


def to_gray(image) -> np.ndarray:
    a = np.asarray(image, dtype=np.float64)
    if a.ndim == 3:
        if a.shape[2] == 1:
            return a[..., 0]
        return a[..., :3] @ GRAY_WEIGHTS
    if a.ndim != 2:
        raise ValueError(f"expected an (H, W) or (H, W, C) image, got shape {a.shape}")
    return a


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def ssim_map(a, b) -> np.ndarray:
    """Per-window SSIM over all fully contained 11x11 windows ('valid' region)."""
    x, y = to_gray(a), to_gray(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if min(x.shape) < SSIM_WINDOW:
        raise ValueError(f"image {x.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    g = gaussian_window()
    r = SSIM_WINDOW // 2

    def filt(z):
        z = ndimage.correlate1d(z, g, axis=0, mode="reflect")
        z = ndimage.correlate1d(z, g, axis=1, mode="reflect")
        return z[r:-r, r:-r]

    c1 = (SSIM_K1 * DATA_RANGE) ** 2
    c2 = (SSIM_K2 * DATA_RANGE) ** 2
    mx, my = filt(x), filt(y)
    vx = filt(x * x) - mx * mx
    vy = filt(y * y) - my * my
    cxy = filt(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return num / den


def ssim(a, b) -> float:
    """Mean structural similarity of two images (grayscale, Gaussian window)."""
    return float(ssim_map(a, b).mean())


@dataclass(frozen=True)
class ROI:
    """Half-open pixel box ``[x0, x1) x [y0, y1)``."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError(f"empty ROI {self}")

    def crop(self, image) -> np.ndarray:
        return np.asarray(image)[self.y0 : self.y1, self.x0 : self.x1]

    @property
    def size(self) -> tuple[int, int]:
        return self.y1 - self.y0, self.x1 - self.x0


def landmark_roi(gt: LandmarkSet, margin_frac: float = 0.25, image_size=(128, 128)) -> ROI:
    """Landmark bounding box grown by ``margin_frac`` of its diagonal, clipped to the image."""
    if margin_frac < 0:
        raise ValueError("margin_frac must be non-negative")
    H, W = image_size
    lo = gt.coords.min(axis=0)
    hi = gt.coords.max(axis=0)
    pad = margin_frac * float(np.hypot(*(hi - lo)))
    x0 = max(0, math.floor(lo[0] - pad))
    y0 = max(0, math.floor(lo[1] - pad))
    x1 = min(W, math.ceil(hi[0] + pad) + 1)
    y1 = min(H, math.ceil(hi[1] + pad) + 1)
    return ROI(x0, y0, x1, y1)


def mask_ssim(a, b, roi: ROI) -> float:
    """SSIM restricted to ``roi``."""
    if min(roi.size) < SSIM_WINDOW:
        raise ValueError(f"ROI {roi.size} is smaller than the SSIM window")
    return ssim(roi.crop(a), roi.crop(b))
