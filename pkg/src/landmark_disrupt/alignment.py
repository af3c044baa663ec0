"""Similarity alignment of faces to a canonical landmark template."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .faces import LANDMARK_NAMES, FaceParams, LandmarkSet, _local_landmarks

DEFAULT_CROP = 64
# fraction of the crop height spanned by forehead-to-chin
_TEMPLATE_SPAN = 0.7


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class SimilarityTransform:
    """``p -> scale * R(rotation) p + (tx, ty)``; rotation in radians."""

    scale: float = 1.0
    rotation: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @property
    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        k = self.scale
        return np.array([[k * c, -k * s, self.tx], [k * s, k * c, self.ty], [0.0, 0.0, 1.0]])

    @classmethod
    def from_matrix(cls, m) -> "SimilarityTransform":
        m = np.asarray(m, dtype=np.float64)
        scale = math.hypot(m[0, 0], m[1, 0])
        return cls(scale, math.atan2(m[1, 0], m[0, 0]), m[0, 2], m[1, 2])

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        m = self.matrix
        return p @ m[:2, :2].T + m[:2, 2]

    def inverse(self) -> "SimilarityTransform":
        return SimilarityTransform.from_matrix(np.linalg.inv(self.matrix))

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """``self`` after ``other``."""
        return SimilarityTransform.from_matrix(self.matrix @ other.matrix)


def _mean_face() -> FaceParams:
    return FaceParams(
        center=(0.0, 0.0),
        axes=(38.0, 38.0 * 1.215),
        rotation=0.0,
        eye_spacing=31.0,
        eye_half_width=8.0,
        eye_aperture=3.25,
        brow_offset=8.0,
        mouth_width=25.0,
        mouth_curvature=0.0,
        nose_length=17.0,
    )


def canonical_template(k: int = len(LANDMARK_NAMES), crop_size=DEFAULT_CROP) -> LandmarkSet:
    """Fixed landmark layout of an average upright face, centred in the crop."""
    if k != len(LANDMARK_NAMES):
        raise ValueError(f"the canonical template is defined for the {len(LANDMARK_NAMES)}-point schema, got k={k}")
    h, w = (crop_size, crop_size) if np.isscalar(crop_size) else crop_size
    pts = _local_landmarks(_mean_face())
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    scale = _TEMPLATE_SPAN * h / (hi[1] - lo[1])
    centre = (lo + hi) / 2
    out = (pts - centre) * scale + np.array([(w - 1) / 2, (h - 1) / 2])
    return LandmarkSet(out)


def similarity_transform(src: LandmarkSet, dst: LandmarkSet) -> SimilarityTransform:
    """Least-squares similarity mapping ``src`` onto ``dst`` (closed form, no reflection)."""
    s = np.asarray(getattr(src, "coords", src), dtype=np.float64)
    d = np.asarray(getattr(dst, "coords", dst), dtype=np.float64)
    if s.shape != d.shape:
        raise AlignmentError(f"point sets differ in shape: {s.shape} vs {d.shape}")
    mu_s, mu_d = s.mean(axis=0), d.mean(axis=0)
    sc, dc = s - mu_s, d - mu_d
    var_s = (sc**2).sum() / len(s)
    if var_s < 1e-12:
        raise AlignmentError("source landmarks are coincident; alignment is undefined")
    cov = dc.T @ sc / len(s)
    U, sig, Vt = np.linalg.svd(cov)
    flip = np.sign(np.linalg.det(U) * np.linalg.det(Vt)) or 1.0
    D = np.diag([1.0, flip])
    R = U @ D @ Vt
    scale = float((sig * np.diag(D)).sum() / var_s)
    if scale <= 0:
        raise AlignmentError("degenerate alignment (non-positive scale)")
    t = mu_d - scale * R @ mu_s
    return SimilarityTransform(scale, math.atan2(R[1, 0], R[0, 0]), float(t[0]), float(t[1]))


def warp_crop(image, transform: SimilarityTransform, crop_size=DEFAULT_CROP) -> np.ndarray:
    """Resample ``image`` into crop space (``transform`` maps image -> crop).

    Bilinear interpolation; samples falling outside the image are zero.
    """
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    H, W = img.shape[:2]
    h, w = (crop_size, crop_size) if np.isscalar(crop_size) else crop_size
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    src = transform.inverse().apply(np.stack([xs.ravel(), ys.ravel()], axis=1))
    sx, sy = src[:, 0], src[:, 1]
    valid = (sx >= 0) & (sx <= W - 1) & (sy >= 0) & (sy <= H - 1)
    x0 = np.clip(np.floor(sx), 0, max(W - 2, 0)).astype(int)
    y0 = np.clip(np.floor(sy), 0, max(H - 2, 0)).astype(int)
    x1, y1 = np.minimum(x0 + 1, W - 1), np.minimum(y0 + 1, H - 1)
    wx = np.clip(sx - x0, 0, 1)[:, None]
    wy = np.clip(sy - y0, 0, 1)[:, None]
    out = (
        img[y0, x0] * (1 - wx) * (1 - wy)
        + img[y0, x1] * wx * (1 - wy)
        + img[y1, x0] * (1 - wx) * wy
        + img[y1, x1] * wx * wy
    )
    out[~valid] = 0.0
    out = out.reshape(h, w, -1)
    return out[..., 0] if squeeze else out


def align_face(image, landmarks: LandmarkSet, crop_size=DEFAULT_CROP) -> np.ndarray:
    """Warp ``image`` so that ``landmarks`` best match the canonical template."""
    template = canonical_template(len(landmarks), crop_size)
    return warp_crop(image, similarity_transform(landmarks, template), crop_size)
