"""Extractor checkpoints, forward pass, peak decoding and input gradients."""

from __future__ import annotations

import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .. import archive
from ..faces import DEFAULT_SIZE, DEFAULT_STRIDE, LANDMARK_NAMES, HeatmapSet, LandmarkSet
from ..losses import DELTA, cosine_loss_torch
from .architectures import ARCHITECTURES, build_network, graph_fingerprint

CHECKPOINT_TYPE = "extractor"


class GradientError(RuntimeError):
    """The attack loss or its gradient is not finite."""


@dataclass(frozen=True)
class ExtractorSpec:
    arch: str
    k: int = len(LANDMARK_NAMES)
    input_size: tuple[int, int] = DEFAULT_SIZE
    stride: int = DEFAULT_STRIDE
    names: tuple[str, ...] = LANDMARK_NAMES

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}")
        H, W = self.input_size
        if H % self.stride or W % self.stride:
            raise ValueError(f"stride {self.stride} does not divide input size {self.input_size}")
        if len(self.names) != self.k:
            raise ValueError(f"k={self.k} but schema has {len(self.names)} names")
        object.__setattr__(self, "input_size", tuple(self.input_size))
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def map_size(self) -> tuple[int, int]:
        return self.input_size[0] // self.stride, self.input_size[1] // self.stride

    @property
    def param_count(self) -> int:
        return sum(p.numel() for p in build_network(self.arch, self.k).parameters())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_size"] = list(self.input_size)
        d["names"] = list(self.names)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractorSpec":
        return cls(d["arch"], int(d["k"]), tuple(d["input_size"]), int(d["stride"]), tuple(d["names"]))


@dataclass
class Checkpoint:
    """Extractor weights plus metadata.  Treat as immutable once built."""

    spec: ExtractorSpec
    weights: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self._nets: dict[torch.dtype, torch.nn.Module] = {}
        self._lock = threading.Lock()

    @property
    def name(self) -> str:
        return self.metadata.get("name", self.spec.arch)

    @classmethod
    def from_network(cls, spec: ExtractorSpec, net: torch.nn.Module, metadata=None) -> "Checkpoint":
        weights = {k: v.detach().cpu().numpy().copy() for k, v in net.state_dict().items()}
        return cls(spec, weights, dict(metadata or {}))

    def network(self, dtype: torch.dtype = torch.float32) -> torch.nn.Module:
        """Inference-mode network (cached per dtype, parameters frozen)."""
        with self._lock:
            net = self._nets.get(dtype)
            if net is None:
                net = build_network(self.spec.arch, self.spec.k)
                net.load_state_dict({k: torch.from_numpy(np.array(v)) for k, v in self.weights.items()})
                net = net.to(dtype).eval()
                for p in net.parameters():
                    p.requires_grad_(False)
                self._nets[dtype] = net
            return net

    def fingerprint(self) -> tuple:
        return graph_fingerprint(self.network())

    def to_bytes(self) -> bytes:
        header = {"spec": self.spec.to_dict(), "metadata": self.metadata}
        return archive.pack(CHECKPOINT_TYPE, header, self.weights)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        head, arrays = archive.unpack(data, CHECKPOINT_TYPE)
        return cls(ExtractorSpec.from_dict(head["spec"]), arrays, head.get("metadata", {}))

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())


def init_checkpoint(spec: ExtractorSpec, seed: int = 0) -> Checkpoint:
    torch.manual_seed(seed)
    return Checkpoint.from_network(spec, build_network(spec.arch, spec.k), {"epochs": 0, "seed": seed})


def _check_image(spec: ExtractorSpec, image) -> np.ndarray:
    a = np.asarray(image, dtype=np.float64)
    want = (*spec.input_size, 3)
    if a.shape[-3:] != want:
        raise ValueError(f"expected image shape {want}, got {a.shape}")
    return a


def to_tensor(images, dtype=torch.float32) -> torch.Tensor:
    """``(..., H, W, 3)`` pixels in [0, 255] -> ``(N, 3, H, W)`` network input in [0, 1]."""
    a = np.asarray(images, dtype=np.float64)
    if a.ndim == 3:
        a = a[None]
    return torch.from_numpy(a).to(dtype).permute(0, 3, 1, 2) / 255.0


def forward_batch(ckpt: Checkpoint, images, batch_size: int = 64) -> np.ndarray:
    """Raw heat-maps for a stack of images, shape ``(N, k, Hm, Wm)``."""
    imgs = _check_image(ckpt.spec, images)
    if imgs.ndim == 3:
        imgs = imgs[None]
    net = ckpt.network()
    out = []
    with torch.no_grad():
        for i in range(0, len(imgs), batch_size):
            out.append(net(to_tensor(imgs[i : i + batch_size])).numpy())
    return np.concatenate(out).astype(np.float64)


def forward(ckpt: Checkpoint, image) -> HeatmapSet:
    """Heat-maps of one ``(H, W, 3)`` image."""
    image = _check_image(ckpt.spec, image)
    if image.ndim != 3:
        raise ValueError(f"forward takes a single image, got shape {image.shape}")
    return HeatmapSet(forward_batch(ckpt, image)[0], stride=ckpt.spec.stride)


def decode_coords(maps: np.ndarray, scale=(DEFAULT_STRIDE, DEFAULT_STRIDE)) -> np.ndarray:
    """Peak locations for ``(..., Hm, Wm)`` maps, returned as ``(..., 2)`` image (x, y).

    Takes the first row-major maximum, nudges it a quarter cell toward the
    larger of its two neighbours along each axis, then scales by ``scale``.
    """
    maps = np.asarray(maps, dtype=np.float64)
    Hm, Wm = maps.shape[-2:]
    flat = maps.reshape(-1, Hm * Wm)
    idx = flat.argmax(axis=1)
    r, c = np.divmod(idx, Wm)
    m = maps.reshape(-1, Hm, Wm)
    n = np.arange(len(m))
    x, y = c.astype(np.float64), r.astype(np.float64)

    inner = (c > 0) & (c < Wm - 1)
    right = m[n, r, np.minimum(c + 1, Wm - 1)]
    left = m[n, r, np.maximum(c - 1, 0)]
    x += np.where(inner, 0.25 * np.sign(right - left), 0.0)

    inner = (r > 0) & (r < Hm - 1)
    down = m[n, np.minimum(r + 1, Hm - 1), c]
    up = m[n, np.maximum(r - 1, 0), c]
    y += np.where(inner, 0.25 * np.sign(down - up), 0.0)

    xy = np.stack([x * scale[0], y * scale[1]], axis=-1)
    return xy.reshape(*maps.shape[:-2], 2)


def decode_landmarks(maps: HeatmapSet, image_size=DEFAULT_SIZE, names=None) -> LandmarkSet:
    """Landmark coordinates from the heat-map peaks."""
    arr = np.asarray(getattr(maps, "maps", maps))
    if arr.size == 0:
        raise ValueError("cannot decode an empty heat-map set")
    Hm, Wm = arr.shape[-2:]
    scale = (image_size[1] / Wm, image_size[0] / Hm)
    coords = decode_coords(arr, scale)
    return LandmarkSet(coords, tuple(names) if names is not None else LANDMARK_NAMES)


def predict_landmarks(ckpt: Checkpoint, images) -> np.ndarray:
    """Decoded ``(N, k, 2)`` coordinates for a stack of images."""
    maps = forward_batch(ckpt, images)
    H, W = ckpt.spec.input_size
    return decode_coords(maps, (W / maps.shape[-1], H / maps.shape[-2]))


def predict(ckpt: Checkpoint, image) -> LandmarkSet:
    return LandmarkSet(predict_landmarks(ckpt, image)[0], ckpt.spec.names)


def input_gradient(
    ckpt: Checkpoint,
    image,
    ref_maps,
    transform=None,
    dtype: torch.dtype = torch.float32,
    delta: float = DELTA,
):
    """Cosine loss against ``ref_maps`` and its gradient w.r.t. the pixels.

    ``transform`` is an optional differentiable map applied to the normalised
    ``(1, 3, H, W)`` input before the network.  The gradient is in pixel
    units, i.e. d loss / d pixel for pixels in [0, 255].
    """
    image = _check_image(ckpt.spec, image)
    ref = np.asarray(getattr(ref_maps, "maps", ref_maps))
    net = ckpt.network(dtype)
    x = torch.from_numpy(image).to(dtype).permute(2, 0, 1)[None].requires_grad_(True)
    inp = x / 255.0
    if transform is not None:
        inp = transform(inp)
    pred = net(inp)
    ref_t = torch.from_numpy(ref).to(dtype)[None]
    if pred.shape != ref_t.shape:
        raise ValueError(f"reference maps {tuple(ref_t.shape)} do not match predictions {tuple(pred.shape)}")
    loss = cosine_loss_torch(pred, ref_t, delta).sum()
    if not torch.isfinite(loss):
        raise GradientError(f"non-finite attack loss {loss.item()}")
    (grad,) = torch.autograd.grad(loss, x)
    g = grad[0].permute(1, 2, 0).detach().numpy().astype(np.float64)
    if not np.isfinite(g).all():
        raise GradientError("non-finite entries in the input gradient")
    return float(loss.item()), g
