"""Procedural face images with exact landmark ground truth.

Faces are drawn analytically in a face-local frame (u to the right, v
downward, origin at the head center) and then rotated/translated into the
image.  Landmarks are computed from the same geometry, so the ground truth is
exact by construction.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

LANDMARK_NAMES: tuple[str, ...] = (
    "left brow center",
    "right brow center",
    "left eye outer corner",
    "left eye inner corner",
    "right eye inner corner",
    "right eye outer corner",
    "nose tip",
    "mouth left corner",
    "mouth right corner",
    "mouth top center",
    "mouth bottom center",
    "chin",
    "forehead center",
)

# NME normalisation pair
LEFT_OUTER = "left eye outer corner"
RIGHT_OUTER = "right eye outer corner"

DEFAULT_SIZE = (128, 128)
DEFAULT_STRIDE = 4
DEFAULT_SIGMA = 1.5

# fixed fractions of the vertical head axis
_EYE_LEVEL = -0.12
_HAIRLINE = -0.55
_LIP_FRAC = 0.15


@dataclass(frozen=True)
class LandmarkSet:
    """k ordered (x, y) image coordinates plus the names of each index."""

    coords: np.ndarray
    names: tuple[str, ...] = LANDMARK_NAMES

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError(f"coords must have shape (k, 2), got {coords.shape}")
        if len(coords) != len(self.names):
            raise ValueError(
                f"{len(coords)} coordinates for a schema of {len(self.names)} names"
            )
        missing = {LEFT_OUTER, RIGHT_OUTER} - set(self.names)
        if missing:
            raise ValueError(f"schema lacks normalisation points: {sorted(missing)}")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "names", tuple(self.names))

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def point(self, name: str) -> np.ndarray:
        return self.coords[self.index(name)]

    def with_coords(self, coords) -> "LandmarkSet":
        return LandmarkSet(np.asarray(coords, dtype=np.float64), self.names)


@dataclass(frozen=True)
class HeatmapSet:
    """k maps at stride-reduced resolution.

    ``clamped`` flags landmarks that fell outside the map and were pulled to
    the border when the targets were rendered.
    """

    maps: np.ndarray
    stride: int = DEFAULT_STRIDE
    clamped: np.ndarray | None = None

    def __post_init__(self):
        if np.ndim(self.maps) != 3:
            raise ValueError(f"maps must have shape (k, Hm, Wm), got {np.shape(self.maps)}")

    @property
    def k(self) -> int:
        return self.maps.shape[0]

    @property
    def map_size(self) -> tuple[int, int]:
        return self.maps.shape[1], self.maps.shape[2]


@dataclass(frozen=True)
class FaceParams:
    center: tuple[float, float]
    axes: tuple[float, float]
    rotation: float
    eye_spacing: float
    eye_half_width: float
    eye_aperture: float
    brow_offset: float
    mouth_width: float
    mouth_curvature: float
    nose_length: float
    colors: dict = field(default_factory=dict)
    background_noise: float = 4.0
    texture_amplitude: float = 14.0
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _uniform(rng, lo, hi):
    return float(rng.uniform(lo, hi))


def _color(rng, base, spread):
    c = np.clip(np.asarray(base) + rng.uniform(-spread, spread, 3), 0, 255)
    return tuple(float(round(x, 1)) for x in c)


def sample_face_params(seed: int) -> FaceParams:
    """Draw face parameters deterministically from ``seed``.

    The ranges are chosen so every landmark of the default 128x128 render
    sits at least a few pixels inside the frame.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    ax = _uniform(rng, 34.0, 42.0)
    ay = ax * _uniform(rng, 1.15, 1.28)
    skin = _color(rng, (200, 160, 130), 45)
    colors = {
        "skin": skin,
        "hair": _color(rng, (70, 50, 35), 40),
        "brow": _color(rng, (60, 45, 35), 25),
        "iris": _color(rng, (60, 70, 80), 40),
        "sclera": _color(rng, (235, 235, 230), 15),
        "nose": tuple(float(round(0.8 * c, 1)) for c in skin),
        "mouth": _color(rng, (170, 60, 70), 30),
        "bg_a": _color(rng, (128, 128, 128), 110),
        "bg_b": _color(rng, (128, 128, 128), 110),
    }
    return FaceParams(
        center=(_uniform(rng, 59.0, 69.0), _uniform(rng, 59.0, 69.0)),
        axes=(ax, ay),
        rotation=_uniform(rng, -15.0, 15.0),
        eye_spacing=_uniform(rng, 28.0, 34.0),
        eye_half_width=_uniform(rng, 7.0, 9.0),
        eye_aperture=_uniform(rng, 2.5, 4.0),
        brow_offset=_uniform(rng, 6.0, 10.0),
        mouth_width=_uniform(rng, 20.0, 30.0),
        mouth_curvature=_uniform(rng, -0.15, 0.15),
        nose_length=_uniform(rng, 14.0, 20.0),
        colors=colors,
        background_noise=_uniform(rng, 2.0, 6.0),
        texture_amplitude=_uniform(rng, 12.0, 20.0),
        seed=int(rng.integers(0, 2**31 - 1)),
    )


def _local_geometry(p: FaceParams) -> dict:
    ax, ay = p.axes
    eye_v = _EYE_LEVEL * ay
    half = p.eye_spacing / 2
    mouth_v = eye_v + p.nose_length + 0.22 * ay
    m = p.mouth_width / 2
    lip = _LIP_FRAC * p.mouth_width
    bend = p.mouth_curvature * m
    return {
        "eye_v": eye_v,
        "eye_u": (-half, half),
        "mouth_v": mouth_v,
        "mouth_half": m,
        "lip": lip,
        "bend": bend,
        "nose_v": eye_v + p.nose_length,
        "brow_v": eye_v - p.brow_offset,
        "hair_v": _HAIRLINE * ay,
    }


def _local_landmarks(p: FaceParams) -> np.ndarray:
    g = _local_geometry(p)
    ax, ay = p.axes
    w = p.eye_half_width
    lu, ru = g["eye_u"]
    ev, mv, m = g["eye_v"], g["mouth_v"], g["mouth_half"]
    return np.array(
        [
            [lu, g["brow_v"]],
            [ru, g["brow_v"]],
            [lu - w, ev],
            [lu + w, ev],
            [ru - w, ev],
            [ru + w, ev],
            [0.0, g["nose_v"]],
            [-m, mv],
            [m, mv],
            [0.0, mv + g["bend"] - g["lip"]],
            [0.0, mv + g["bend"] + g["lip"]],
            [0.0, ay],
            [0.0, g["hair_v"]],
        ]
    )


def _to_image(p: FaceParams, local: np.ndarray) -> np.ndarray:
    t = np.deg2rad(p.rotation)
    c, s = np.cos(t), np.sin(t)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.asarray(p.center)


def face_landmarks(params: FaceParams) -> LandmarkSet:
    """Landmarks implied by ``params`` (no rendering involved)."""
    return LandmarkSet(_to_image(params, _local_landmarks(params)))


def _cover(signed_dist):
    # 1px antialiasing ramp
    return np.clip(0.5 - signed_dist, 0.0, 1.0)


def _ellipse(u, v, cu, cv, a, b):
    r = np.sqrt(((u - cu) / a) ** 2 + ((v - cv) / b) ** 2)
    return _cover((r - 1.0) * min(a, b))


def _blend(img, color, cover):
    color = np.asarray(color, dtype=np.float64)
    return img * (1.0 - cover[..., None]) + color * cover[..., None]


def _smooth_noise(rng, shape, scale):
    field = rng.standard_normal(shape)
    field = ndimage.gaussian_filter(field, scale, mode="wrap")
    return field / (field.std() + 1e-12)


def render_face(params: FaceParams, size: tuple[int, int] = DEFAULT_SIZE):
    """Render ``params`` into an ``(H, W, 3)`` float image of integer values in [0, 255].

    Returns the image and its ``LandmarkSet``.  Raises ``ValueError`` when the
    canvas is smaller than 64x64 or cannot hold the face.
    """
    H, W = int(size[0]), int(size[1])
    if H < 64 or W < 64:
        raise ValueError(f"canvas {H}x{W} is below the 64x64 minimum")
    landmarks = face_landmarks(params)
    xy = landmarks.coords
    margin = 1.0
    if (xy[:, 0] < margin).any() or (xy[:, 0] > W - 1 - margin).any() or (
        xy[:, 1] < margin
    ).any() or (xy[:, 1] > H - 1 - margin).any():
        bad = [n for n, (x, y) in zip(landmarks.names, xy) if not (margin <= x <= W - 1 - margin and margin <= y <= H - 1 - margin)]
        raise ValueError(f"face geometry does not fit a {H}x{W} canvas: {bad} out of bounds")

    rng = np.random.default_rng(params.seed)
    col = params.colors
    ys, xs = np.mgrid[0:H, 0:W].astype(np.float64)
    t = np.deg2rad(params.rotation)
    c, s = np.cos(t), np.sin(t)
    dx, dy = xs - params.center[0], ys - params.center[1]
    u = c * dx + s * dy
    v = -s * dx + c * dy

    # background: random linear gradient plus fine noise
    ang = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(ang) * (xs / W - 0.5) + np.sin(ang) * (ys / H - 0.5)) + 0.5
    ramp = np.clip(ramp, 0, 1)[..., None]
    img = (1 - ramp) * np.asarray(col["bg_a"]) + ramp * np.asarray(col["bg_b"])
    img = img + 0.6 * params.texture_amplitude * _smooth_noise(rng, (H, W), 3.0)[..., None]

    ax, ay = params.axes
    g = _local_geometry(params)
    head = _ellipse(u, v, 0.0, 0.0, ax, ay)
    skin_tex = params.texture_amplitude * _smooth_noise(rng, (H, W), 2.0)
    skin = np.asarray(col["skin"]) + skin_tex[..., None]
    img = img * (1 - head[..., None]) + skin * head[..., None]

    hair = head * _cover(v - g["hair_v"])
    hair_tex = 0.8 * params.texture_amplitude * _smooth_noise(rng, (H, W), 1.0)
    img = img * (1 - hair[..., None]) + (np.asarray(col["hair"]) + hair_tex[..., None]) * hair[..., None]

    w, ap = params.eye_half_width, params.eye_aperture
    for eu in g["eye_u"]:
        img = _blend(img, col["brow"], _ellipse(u, v, eu, g["brow_v"], w + 2.0, 1.7))
        sclera = _ellipse(u, v, eu, g["eye_v"], w, ap)
        img = _blend(img, col["sclera"], sclera)
        iris = sclera * _ellipse(u, v, eu, g["eye_v"], 0.9 * ap, 0.9 * ap)
        img = _blend(img, col["iris"], iris)

    bridge = _cover(np.maximum(np.abs(u) - 1.2, np.maximum(g["eye_v"] - v, v - g["nose_v"])))
    img = _blend(img, col["nose"], 0.5 * bridge)
    img = _blend(img, col["nose"], _ellipse(u, v, 0.0, g["nose_v"], 4.5, 3.0))

    m, lip = g["mouth_half"], g["lip"]
    q = np.clip(1.0 - (u / m) ** 2, 0.0, None)
    centerline = g["mouth_v"] + g["bend"] * q
    thickness = lip * np.sqrt(q)
    mouth = _cover(np.abs(v - centerline) - thickness) * _cover(np.abs(u) - m)
    img = _blend(img, col["mouth"], mouth)

    img = img + params.background_noise * rng.standard_normal((H, W, 3))
    return np.clip(np.rint(img), 0.0, 255.0), landmarks


def render_heatmap_targets(
    landmarks: LandmarkSet,
    map_size: tuple[int, int],
    sigma: float = DEFAULT_SIGMA,
    stride: int = DEFAULT_STRIDE,
) -> HeatmapSet:
    """Unnormalised Gaussian targets, one per landmark.

    Each landmark is scaled by ``1 / stride`` into map coordinates and the
    Gaussian is centred on the nearest grid point, so its peak is exactly 1.
    Points outside the map are clamped to the border and flagged.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    Hm, Wm = map_size
    scaled = landmarks.coords / stride
    grid = np.rint(scaled)
    clamped_xy = np.clip(grid, 0, [Wm - 1, Hm - 1])
    clamped = (clamped_xy != grid).any(axis=1)
    ys = np.arange(Hm, dtype=np.float64)[None, :, None]
    xs = np.arange(Wm, dtype=np.float64)[None, None, :]
    cx = clamped_xy[:, 0][:, None, None]
    cy = clamped_xy[:, 1][:, None, None]
    maps = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma**2))
    return HeatmapSet(maps=maps, stride=stride, clamped=clamped)
