"""L-infinity bounded attacks on heat-map landmark extractors.

All variants minimise the summed per-map cosine similarity between the
heat-maps of the perturbed image and those of the clean image.  Budgets and
step sizes are in pixel units ([0, 255]).

Update rules
------------
momentum (LB):  m <- decay * m + g / |g|_1 ;  x <- clip(x - alpha * sign(m))
sign (I-FGSM):  x <- clip(x - alpha * sign(g))

``budget_mode="project"`` clamps every iterate into the epsilon ball;
``"literal"`` only stops once an update has left the ball, so the returned
image can exceed epsilon by at most one step.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import torch
import torch.nn.functional as F

from .extractors.core import Checkpoint, forward, input_gradient
from .losses import heatmap_cosine_loss

VARIANTS = ("LB", "FGSM", "IFGSM", "LB_trans", "LB_mix")
BUDGET_MODES = ("project", "literal")
CONFIG_FIELDS = ("epsilon", "alpha", "max_iters", "momentum_decay", "variant", "budget_mode", "seed")

__all__ = [
    "AttackConfig",
    "AttackResult",
    "OptimizerState",
    "heatmap_cosine_loss",
    "project_linf",
    "mifgsm_attack",
    "fgsm_attack",
    "ifgsm_attack",
    "lbtrans_attack",
    "lbmix_attack",
    "run_attack",
]


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = 15.0
    alpha: float = 1.0
    max_iters: int = 20
    momentum_decay: float = 0.5
    variant: str = "LB"
    budget_mode: str = "project"
    seed: int = 0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be >= 0, got {self.max_iters}")
        if not 0 <= self.momentum_decay <= 1:
            raise ValueError(f"momentum_decay must lie in [0, 1], got {self.momentum_decay}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.budget_mode not in BUDGET_MODES:
            raise ValueError(f"unknown budget_mode {self.budget_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        unknown = set(d) - set(CONFIG_FIELDS)
        if unknown:
            raise ValueError(f"unknown attack config fields: {sorted(unknown)}")
        kw = dict(d)
        for key, typ in (("epsilon", float), ("alpha", float), ("momentum_decay", float), ("max_iters", int), ("seed", int)):
            if key in kw:
                kw[key] = typ(kw[key])
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "AttackConfig":
        return cls.from_dict(json.loads(text))


@dataclass
class OptimizerState:
    m: np.ndarray
    t: int = 0


@dataclass
class AttackResult:
    image: np.ndarray
    loss_trace: list[float]
    iterations: int
    linf: float
    config: AttackConfig
    status: str = "completed"
    trajectory: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def initial_loss(self) -> float:
        return self.loss_trace[0]

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1]


def project_linf(candidate, origin, epsilon: float) -> np.ndarray:
    """Clamp ``candidate`` into ``[origin - eps, origin + eps]`` intersected with [0, 255]."""
    c = np.asarray(candidate, dtype=np.float64)
    o = np.asarray(origin, dtype=np.float64)
    if c.shape != o.shape:
        raise ValueError(f"shape mismatch: {c.shape} vs {o.shape}")
    lo = np.maximum(o - epsilon, 0.0)
    hi = np.minimum(o + epsilon, 255.0)
    out = np.minimum(np.maximum(c, lo), hi)
    # o - eps can round to a value one ulp outside the ball; pull it back in
    over = np.abs(out - o) > epsilon
    while over.any():
        out[over] = np.nextafter(out[over], o[over])
        over = np.abs(out - o) > epsilon
    return out


def _resize_pad(inp: torch.Tensor, scale: float, rng: np.random.Generator) -> torch.Tensor:
    _, _, H, W = inp.shape
    h, w = max(1, int(round(scale * H))), max(1, int(round(scale * W)))
    if (h, w) == (H, W):
        return inp
    small = F.interpolate(inp, size=(h, w), mode="bilinear", align_corners=False)
    top = int(rng.integers(0, H - h + 1))
    left = int(rng.integers(0, W - w + 1))
    return F.pad(small, (left, W - w - left, top, H - h - top))


def _optimise(ckpt: Checkpoint, image, config: AttackConfig, schedule, transforms=None, keep_trajectory=False) -> AttackResult:
    """Shared iteration loop.

    ``schedule(t)`` returns "momentum" or "sign" for iteration ``t``;
    ``transforms(t)`` optionally returns a differentiable input transform.
    """
    origin = np.asarray(image, dtype=np.float64)
    ref = forward(ckpt, origin).maps
    x = origin.copy()
    state = OptimizerState(np.zeros_like(origin))
    eps, alpha, decay = config.epsilon, config.alpha, config.momentum_decay
    trace, status, path = [], "completed", []
    while state.t < config.max_iters:
        transform = transforms(state.t) if transforms is not None else None
        loss, g = input_gradient(ckpt, x, ref, transform=transform)
        trace.append(loss)
        l1 = np.abs(g).sum()
        if l1 == 0:
            status = "flat gradient"
            break
        rule = schedule(state.t)
        state.m = decay * state.m + g / l1
        direction = np.sign(state.m) if rule == "momentum" else np.sign(g)
        x = np.clip(x - alpha * direction, 0.0, 255.0)
        state.t += 1
        if config.budget_mode == "project":
            x = project_linf(x, origin, eps)
        if keep_trajectory:
            path.append(x.copy())
        if config.budget_mode == "literal" and np.abs(x - origin).max() > eps:
            status = "budget exhausted"
            break
    trace.append(heatmap_cosine_loss(forward(ckpt, x), ref))
    return AttackResult(
        image=x,
        loss_trace=trace,
        iterations=state.t,
        linf=float(np.abs(x - origin).max()),
        config=config,
        status=status,
        trajectory=path,
    )


def mifgsm_attack(ckpt: Checkpoint, image, config: AttackConfig = AttackConfig(), keep_trajectory=False) -> AttackResult:
    """Momentum iterative sign-gradient attack (the LB variant)."""
    return _optimise(ckpt, image, config, lambda t: "momentum", keep_trajectory=keep_trajectory)


def fgsm_attack(ckpt: Checkpoint, image, config: AttackConfig = AttackConfig(variant="FGSM"), keep_trajectory=False) -> AttackResult:
    """One sign-gradient step of size epsilon."""
    if config.epsilon == 0 or config.max_iters == 0:
        cfg = replace(config, max_iters=0)
    else:
        cfg = replace(config, alpha=config.epsilon, max_iters=1)
    return _optimise(ckpt, image, cfg, lambda t: "sign", keep_trajectory=keep_trajectory)


def ifgsm_attack(ckpt: Checkpoint, image, config: AttackConfig = AttackConfig(variant="IFGSM"), keep_trajectory=False) -> AttackResult:
    """Iterative sign-gradient attack without momentum or L1 normalisation."""
    return _optimise(ckpt, image, config, lambda t: "sign", keep_trajectory=keep_trajectory)


def lbtrans_attack(
    ckpt: Checkpoint,
    image,
    config: AttackConfig = AttackConfig(variant="LB_trans"),
    scale_range=(0.9, 1.0),
    keep_trajectory=False,
) -> AttackResult:
    """Momentum attack with a random resize + zero-pad applied before every gradient."""
    rng = np.random.default_rng(config.seed)
    lo, hi = scale_range

    def transforms(t):
        scale = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
        return lambda inp: _resize_pad(inp, scale, rng)

    return _optimise(ckpt, image, config, lambda t: "momentum", transforms, keep_trajectory=keep_trajectory)


def lbmix_attack(ckpt: Checkpoint, image, config: AttackConfig = AttackConfig(variant="LB_mix"), keep_trajectory=False) -> AttackResult:
    """Alternate sign steps (even iterations) and momentum steps (odd iterations)."""
    return _optimise(ckpt, image, config, lambda t: "sign" if t % 2 == 0 else "momentum", keep_trajectory=keep_trajectory)


_DISPATCH = {
    "LB": mifgsm_attack,
    "FGSM": fgsm_attack,
    "IFGSM": ifgsm_attack,
    "LB_trans": lbtrans_attack,
    "LB_mix": lbmix_attack,
}


def run_attack(ckpt: Checkpoint, image, config: AttackConfig, keep_trajectory=False) -> AttackResult:
    return _DISPATCH[config.variant](ckpt, image, config, keep_trajectory=keep_trajectory)
