"""Heat-map regression training with best-validation-NME selection."""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import asdict, dataclass

import numpy as np
import torch

from ..datasets import DatasetHandle
from ..evaluation.metrics import nme
from ..faces import DEFAULT_SIGMA, LEFT_OUTER, RIGHT_OUTER, LandmarkSet, render_heatmap_targets
from .architectures import build_network
from .core import Checkpoint, ExtractorSpec, decode_coords, predict_landmarks, to_tensor

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 2e-3
    weight_decay: float = 0.0
    sigma: float = DEFAULT_SIGMA
    seed: int = 0
    target_nme: float | None = None  # stop early once val NME drops below this


def dataset_hash(data: DatasetHandle) -> str:
    h = hashlib.sha256()
    h.update(data.landmark_array().round(4).tobytes())
    h.update(np.ascontiguousarray(data.image_array()).tobytes())
    return h.hexdigest()[:16]


def heatmap_targets(data: DatasetHandle, spec: ExtractorSpec, sigma: float) -> np.ndarray:
    out = np.empty((len(data), spec.k, *spec.map_size), dtype=np.float32)
    for i, rec in enumerate(data.records):
        out[i] = render_heatmap_targets(rec.landmarks, spec.map_size, sigma, spec.stride).maps
    return out


def dataset_nme(pred: np.ndarray, gt: np.ndarray, names) -> np.ndarray:
    """Per-record NME for ``(N, k, 2)`` prediction and ground-truth arrays."""
    li, ri = names.index(LEFT_OUTER), names.index(RIGHT_OUTER)
    d = np.linalg.norm(gt[:, li] - gt[:, ri], axis=-1)
    return np.linalg.norm(pred - gt, axis=-1).mean(axis=-1) / d


def evaluate_extractor(ckpt: Checkpoint, data: DatasetHandle) -> float:
    """Mean NME of the extractor's decoded landmarks over ``data``."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    pred = predict_landmarks(ckpt, data.image_array())
    scores = [nme(LandmarkSet(p, rec.landmarks.names), rec.landmarks) for p, rec in zip(pred, data.records)]
    return float(np.mean(scores))


def _val_nme(net, data, images, spec) -> float:
    net.eval()
    with torch.no_grad():
        maps = torch.cat([net(to_tensor(images[i : i + 128])) for i in range(0, len(images), 128)]).numpy()
    H, W = spec.input_size
    pred = decode_coords(maps, (W / maps.shape[-1], H / maps.shape[-2]))
    return float(dataset_nme(pred, data.landmark_array(), data.names).mean())


def train_extractor(
    spec: ExtractorSpec,
    train: DatasetHandle,
    val: DatasetHandle,
    config: TrainConfig | None = None,
    name: str | None = None,
) -> Checkpoint:
    """Fit ``spec`` with MSE on Gaussian targets; return the best-val-NME weights."""
    cfg = config or TrainConfig()
    for d in (train, val):
        if tuple(d.names) != spec.names:
            raise ValueError(f"{d.split} schema does not match the extractor's {spec.k}-point schema")
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    net = build_network(spec.arch, spec.k)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(cfg.epochs, 1))

    x_train = train.image_array()
    y_train = torch.from_numpy(heatmap_targets(train, spec, cfg.sigma))
    x_val = val.image_array()

    best = _val_nme(net, val, x_val, spec)
    best_state = {k: v.clone() for k, v in net.state_dict().items()}
    best_epoch, history = 0, [{"epoch": 0, "train_mse": None, "val_nme": best}]
    t0 = time.time()
    for epoch in range(1, cfg.epochs + 1):
        net.train()
        order = rng.permutation(len(x_train))
        total, count = 0.0, 0
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            if len(idx) < 2:
                continue
            pred = net(to_tensor(x_train[idx]))
            loss = torch.mean((pred - y_train[idx]) ** 2)
            if not torch.isfinite(loss):
                raise FloatingPointError(f"training diverged at epoch {epoch}: loss {loss.item()}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            count += len(idx)
        sched.step()
        score = _val_nme(net, val, x_val, spec)
        history.append({"epoch": epoch, "train_mse": total / count, "val_nme": score})
        log.info("%s epoch %d: train mse %.3e, val NME %.4f (%.0fs)", spec.arch, epoch, total / count, score, time.time() - t0)
        if score < best:
            best, best_epoch = score, epoch
            best_state = {k: v.clone() for k, v in net.state_dict().items()}
        if cfg.target_nme is not None and best < cfg.target_nme:
            break

    net.load_state_dict(best_state)
    meta = {
        "name": name or spec.arch,
        "dataset_hash": dataset_hash(train),
        "epochs": len(history) - 1,
        "best_epoch": best_epoch,
        "val_nme": best,
        "history": history,
        "train_config": asdict(cfg),
        "train_seconds": round(time.time() - t0, 1),
    }
    return Checkpoint.from_network(spec, net, meta)
