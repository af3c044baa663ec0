"""
Synthetic faces and a miniature landmark extractor
==================================================

Render a few procedural faces, look at their exact landmarks and heat-map
targets, then fit a small extractor for a handful of epochs and decode its
predictions.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from landmark_disrupt import split_dataset, synthetic_dataset
from landmark_disrupt.extractors import ExtractorSpec, TrainConfig, evaluate_extractor, predict, train_extractor
from landmark_disrupt.faces import render_heatmap_targets

# 2500 faces, the same scale as the acceptance run
data = synthetic_dataset(2500, seed=0)
train, val, test = split_dataset(data, (0.8, 0.1, 0.1), seed=0)
print(len(train), len(val), len(test))

# every face comes with 13 named points, exact by construction
rec = test.records[0]
for name, (x, y) in zip(rec.landmarks.names, rec.landmarks.coords):
    print(f"{name:24s} {x:6.1f} {y:6.1f}")

# training targets: one Gaussian bump per landmark on a 32x32 grid
targets = render_heatmap_targets(rec.landmarks, (32, 32), 1.5, 4)
print("target maps", targets.maps.shape)

spec = ExtractorSpec("hourglass-mini")
ckpt = train_extractor(spec, train, val, TrainConfig(epochs=5, seed=0))
ckpt.save("demo_hourglass.ckpt")
print("val NME by epoch", [round(h["val_nme"], 3) for h in ckpt.metadata["history"]])
print("test NME", evaluate_extractor(ckpt, test))

fig, axes = plt.subplots(1, 3, figsize=(9, 3))
for i, ax in enumerate(axes):
    img, r = test.image(i), test.records[i]
    pred = predict(ckpt, img)
    ax.imshow(img)
    ax.scatter(*r.landmarks.coords.T, s=10, c="lime", label="truth")
    ax.scatter(*pred.coords.T, s=10, c="red", marker="x", label="predicted")
    ax.axis("off")
axes[0].legend(fontsize=7)
fig.tight_layout()
fig.savefig("demo_predictions.png", dpi=100)
print("wrote demo_predictions.png")
