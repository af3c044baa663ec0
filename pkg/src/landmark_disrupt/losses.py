"""Per-map cosine similarity between two heat-map stacks.

Each of the k maps is flattened to a vector; the loss is the sum of the k
cosine similarities, so it lies in [-k, k] and equals k for identical maps.
"""

from __future__ import annotations

import numpy as np
import torch

DELTA = 1e-8


def heatmap_cosine_loss(pred, ref, delta: float = DELTA) -> float:
    """Sum over maps of ``<p, r> / (|p| |r| + delta)``; accepts arrays or HeatmapSets."""
    p = np.asarray(getattr(pred, "maps", pred), dtype=np.float64)
    r = np.asarray(getattr(ref, "maps", ref), dtype=np.float64)
    if p.shape != r.shape:
        raise ValueError(f"heat-map shapes differ: {p.shape} vs {r.shape}")
    p = p.reshape(p.shape[0], -1)
    r = r.reshape(r.shape[0], -1)
    num = (p * r).sum(axis=1)
    den = np.linalg.norm(p, axis=1) * np.linalg.norm(r, axis=1) + delta
    return float((num / den).sum())


def cosine_loss_torch(pred: torch.Tensor, ref: torch.Tensor, delta: float = DELTA) -> torch.Tensor:
    """Differentiable version for a batch: ``(N, k, Hm, Wm)`` -> ``(N,)``."""
    p = pred.flatten(2)
    r = ref.flatten(2)
    num = (p * r).sum(-1)
    den = p.norm(dim=-1) * r.norm(dim=-1) + delta
    return (num / den).sum(-1)
