"""Reconstruction autoencoder standing in for the face-swap generator.

The synthesiser is trained to reproduce canonically aligned crops; SSIM_W
compares its output for a crop aligned with clean landmarks against its
output for a crop aligned with attacked landmarks.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import archive
from .alignment import DEFAULT_CROP, canonical_template, similarity_transform, warp_crop
from .evaluation.metrics import ssim
from .faces import LandmarkSet

log = logging.getLogger(__name__)

CHECKPOINT_TYPE = "synthesizer"
MIN_CROPS = 200


class AutoEncoder(nn.Module):
    def __init__(self, width=32, code=24):
        super().__init__()

        def down(cin, cout):
            return nn.Sequential(nn.Conv2d(cin, cout, 4, 2, 1), nn.SiLU(), nn.Conv2d(cout, cout, 3, 1, 1), nn.SiLU())

        def up(cin, cout):
            return nn.Sequential(nn.ConvTranspose2d(cin, cout, 4, 2, 1), nn.SiLU(), nn.Conv2d(cout, cout, 3, 1, 1), nn.SiLU())

        # 64x64x3 crop -> 16x16xcode bottleneck
        self.encoder = nn.Sequential(down(3, width), down(width, 2 * width), nn.Conv2d(2 * width, code, 3, 1, 1))
        self.decoder = nn.Sequential(
            nn.SiLU(), up(code, 2 * width), up(2 * width, width), nn.Conv2d(width, 3, 3, 1, 1), nn.Sigmoid()
        )

    def forward(self, x):
        return self.decoder(self.encoder(x))


@dataclass
class SynthCheckpoint:
    weights: dict[str, np.ndarray]
    crop_size: int = DEFAULT_CROP
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self._net = None
        self._lock = threading.Lock()

    def network(self) -> AutoEncoder:
        with self._lock:
            if self._net is None:
                net = AutoEncoder()
                net.load_state_dict({k: torch.from_numpy(np.array(v)) for k, v in self.weights.items()})
                net.eval()
                for p in net.parameters():
                    p.requires_grad_(False)
                self._net = net
            return self._net

    def to_bytes(self) -> bytes:
        return archive.pack(CHECKPOINT_TYPE, {"crop_size": self.crop_size, "metadata": self.metadata}, self.weights)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def from_bytes(cls, data: bytes) -> "SynthCheckpoint":
        head, arrays = archive.unpack(data, CHECKPOINT_TYPE)
        return cls(arrays, int(head["crop_size"]), head.get("metadata", {}))

    @classmethod
    def load(cls, path) -> "SynthCheckpoint":
        return cls.from_bytes(Path(path).read_bytes())


def _to_tensor(crops) -> torch.Tensor:
    a = np.asarray(crops, dtype=np.float32)
    if a.ndim == 3:
        a = a[None]
    return torch.from_numpy(a).permute(0, 3, 1, 2) / 255.0


def synthesize(synth: SynthCheckpoint, crops) -> np.ndarray:
    """Reconstruct one crop ``(h, w, 3)`` or a stack ``(N, h, w, 3)``; output in [0, 255]."""
    a = np.asarray(crops)
    single = a.ndim == 3
    with torch.no_grad():
        out = synth.network()(_to_tensor(a)).permute(0, 2, 3, 1).numpy().astype(np.float64) * 255.0
    return out[0] if single else out


def _mse(net, x) -> float:
    net.eval()
    with torch.no_grad():
        return float(torch.cat([((net(x[i : i + 128]) - x[i : i + 128]) ** 2).flatten(1).mean(1) for i in range(0, len(x), 128)]).mean())


def train_synthesizer(
    aligned_crops,
    val_crops=None,
    epochs: int = 40,
    batch_size: int = 32,
    lr: float = 2e-3,
    seed: int = 0,
) -> SynthCheckpoint:
    """Fit the autoencoder on aligned crops; keeps the best held-out-MSE weights."""
    crops = np.asarray(aligned_crops)
    if crops.ndim != 4 or len(crops) < MIN_CROPS:
        raise ValueError(f"need at least {MIN_CROPS} crops of shape (h, w, 3), got {crops.shape}")
    if crops.shape[1] != crops.shape[2]:
        raise ValueError("crops must be square")
    if val_crops is None:
        n_val = max(1, len(crops) // 10)
        crops, val_crops = crops[n_val:], crops[:n_val]
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    net = AutoEncoder()
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(epochs, 1))
    x = _to_tensor(crops)
    xv = _to_tensor(val_crops)
    baseline = _mse(net, xv)
    best, best_state, history = baseline, {k: v.clone() for k, v in net.state_dict().items()}, [baseline]
    for epoch in range(1, epochs + 1):
        net.train()
        for idx in np.array_split(rng.permutation(len(x)), max(1, len(x) // batch_size)):
            loss = torch.mean((net(x[idx]) - x[idx]) ** 2)
            if not torch.isfinite(loss):
                raise FloatingPointError(f"synthesizer training diverged at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
        sched.step()
        score = _mse(net, xv)
        history.append(score)
        log.info("synthesizer epoch %d: val mse %.5f", epoch, score)
        if score < best:
            best, best_state = score, {k: v.clone() for k, v in net.state_dict().items()}
    net.load_state_dict(best_state)
    weights = {k: v.detach().numpy().copy() for k, v in net.state_dict().items()}
    meta = {"epochs": epochs, "seed": seed, "baseline_mse": baseline, "val_mse": best, "history": history, "n_train": len(crops)}
    return SynthCheckpoint(weights, int(crops.shape[1]), meta)


def ssim_w_pipeline(
    image,
    clean_landmarks: LandmarkSet,
    attacked_landmarks: LandmarkSet,
    synth: SynthCheckpoint,
    attacked_image=None,
) -> float:
    """SSIM between syntheses of the clean-aligned and attack-aligned crops.

    ``attacked_image`` defaults to ``image``; pass the adversarial image to
    let the perturbation itself flow through the synthesiser as well.
    """
    crop = synth.crop_size
    template = canonical_template(len(clean_landmarks), crop)
    clean_crop = warp_crop(image, similarity_transform(clean_landmarks, template), crop)
    adv_src = image if attacked_image is None else attacked_image
    adv_crop = warp_crop(adv_src, similarity_transform(attacked_landmarks, template), crop)
    return ssim(synthesize(synth, clean_crop), synthesize(synth, adv_crop))
