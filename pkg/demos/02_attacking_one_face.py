"""
Disrupting the landmarks of one face
====================================

Craft the momentum attack and the two sign baselines against one extractor
and compare how far the landmarks move, how much the image changes and what
the loss trace looks like.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from pathlib import Path

import numpy as np

from landmark_disrupt import AttackConfig, run_attack, split_dataset, synthetic_dataset
from landmark_disrupt.evaluation import nme, ssim
from landmark_disrupt.extractors import Checkpoint, ExtractorSpec, TrainConfig, predict, train_extractor

train, val, test = split_dataset(synthetic_dataset(2500, seed=0), (0.8, 0.1, 0.1), seed=0)

# reuse the extractor from the first demo when it is around
if Path("demo_hourglass.ckpt").exists():
    ckpt = Checkpoint.load("demo_hourglass.ckpt")
else:
    ckpt = train_extractor(ExtractorSpec("hourglass-mini"), train, val, TrainConfig(epochs=5, seed=0))

img = test.image(0).astype(np.float64)
gt = test.records[0].landmarks
print("clean NME", nme(predict(ckpt, img), gt))

# epsilon and alpha are in 0..255 pixel units
configs = {
    "FGSM": AttackConfig(variant="FGSM", epsilon=15),
    "I-FGSM": AttackConfig(variant="IFGSM", epsilon=15, alpha=1, max_iters=20),
    "momentum": AttackConfig(epsilon=15, alpha=1, max_iters=20, momentum_decay=0.5),
}
results = {name: run_attack(ckpt, img, cfg) for name, cfg in configs.items()}
for name, res in results.items():
    print(f"{name:9s} NME {nme(predict(ckpt, res.image), gt):.3f}  SSIM {ssim(res.image, img):.3f}  "
          f"Linf {res.linf:.1f}  iterations {res.iterations}  status {res.status}")

# Algorithm-style literal budget: stops right after the deviation passes epsilon
lit = run_attack(ckpt, img, AttackConfig(epsilon=15, alpha=1, max_iters=40, budget_mode="literal"))
print("literal mode stops after", lit.iterations, "iterations with Linf", lit.linf)

fig, axes = plt.subplots(1, 3, figsize=(10, 3.2))
axes[0].imshow(img.astype(np.uint8))
axes[0].scatter(*predict(ckpt, img).coords.T, s=10, c="lime")
axes[0].set_title("clean")
adv = results["momentum"].image
axes[1].imshow(adv.astype(np.uint8))
axes[1].scatter(*predict(ckpt, adv).coords.T, s=10, c="red")
axes[1].set_title("attacked")
for name, res in results.items():
    axes[2].plot(res.loss_trace, marker=".", label=name)
axes[2].set_xlabel("iteration")
axes[2].set_ylabel("cosine loss")
axes[2].legend(fontsize=7)
for ax in axes[:2]:
    ax.axis("off")
fig.tight_layout()
fig.savefig("demo_attack.png", dpi=100)
print("wrote demo_attack.png")
