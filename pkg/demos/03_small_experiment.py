"""
A small end-to-end experiment
=============================

Drive the harness from a config dictionary: two extractors, two attacks,
JPEG degradation, transfer matrices and the report files.  The same config
saved as JSON works with the ``landmark-disrupt`` command.
"""

import json
from pathlib import Path

from landmark_disrupt import harness

out = Path("demo_run")
config = {
    "dataset": {"n": 1500, "seed": 0},
    "extractors": [
        {"name": "hourglass-mini", "arch": "hourglass-mini", "train": {"epochs": 5}},
        {"name": "encdec-mini", "arch": "encdec-mini", "train": {"epochs": 5}},
    ],
    "attacks": [
        {"name": "Base2", "config": {"variant": "IFGSM", "max_iters": 10}},
        {"name": "LB", "config": {"variant": "LB", "max_iters": 10}},
    ],
    "degradations": ["none", "jpeg75"],
    "n_test": 10,
    "synthesizer": {"train": {"n_crops": 300, "n_val": 40, "epochs": 3}},
    "output_dir": str(out),
}
(out).mkdir(exist_ok=True)
(out / "config.json").write_text(json.dumps(config, indent=1))

ws = harness.prepare_workspace(config)
table = harness.run_experiment(ws.config, ws)
print(len(table), "records")

# rows: where the perturbation was crafted; columns: which extractor reads it
print(harness.transfer_matrix(table, "LB").round(3))
print(harness.transfer_matrix(table, "LB", "ssim_w").round(3))

cells = table.cell_means()
print(cells[cells["source"] == cells["extractor"]].round(3).to_string(index=False))

for path in harness.emit_report(table, out):
    print("wrote", path)
harness.write_manifest(out)
