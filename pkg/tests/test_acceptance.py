"""End-to-end acceptance run on the desk-scale synthetic setup.

Extractors and the synthesiser are trained once and cached under
``.cache/acceptance`` (override with ``LANDMARK_DISRUPT_CACHE``); every run
crafts its adversarial images afresh.  Each criterion records a PASS/FAIL
line that is printed at the end of the session.
"""

import math
import os
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from conftest import record_criterion
from oracles import clamp_loop, fd_check_mid_attack, loop_loss, nme_loop, ssim_direct
from scipy.stats import spearmanr

from landmark_disrupt import harness
from landmark_disrupt.alignment import align_face
from landmark_disrupt.attacks import VARIANTS, AttackConfig, project_linf, run_attack
from landmark_disrupt.evaluation import nme, ssim
from landmark_disrupt.faces import LEFT_OUTER, LANDMARK_NAMES, RIGHT_OUTER, LandmarkSet
from landmark_disrupt.losses import heatmap_cosine_loss
from landmark_disrupt.synthesis import synthesize

pytestmark = pytest.mark.acceptance

CACHE = Path(os.environ.get("LANDMARK_DISRUPT_CACHE", Path(__file__).resolve().parents[1] / ".cache" / "acceptance"))
ARCHS = ("hourglass-mini", "hires-parallel-mini", "encdec-mini")
EPS, ALPHA, ITERS = 15.0, 1.0, 20
EPOCHS = 12
ATTACKS = [
    {"name": "Base1", "config": {"variant": "FGSM", "epsilon": EPS}},
    {"name": "Base2", "config": {"variant": "IFGSM", "epsilon": EPS, "alpha": ALPHA, "max_iters": ITERS}},
    {"name": "LB", "config": {"variant": "LB", "epsilon": EPS, "alpha": ALPHA, "max_iters": ITERS, "momentum_decay": 0.5}},
]
DEGRADATIONS = ["none", "jpeg75", "jpeg50", "video_c", "video_c2"]


def config_doc(out):
    return {
        "dataset": {"n": 2500, "seed": 1, "ratios": [0.8, 0.1, 0.1]},
        "extractors": [{"name": a, "arch": a, "train": {"epochs": EPOCHS}} for a in ARCHS],
        "attacks": ATTACKS,
        "degradations": DEGRADATIONS,
        "n_test": 50,
        "include_clean": True,
        "output_dir": str(out),
        "seed": 0,
    }


@pytest.fixture(scope="module")
def workspace():
    return harness.prepare_workspace(config_doc(CACHE))


@pytest.fixture(scope="module")
def experiment(workspace, tmp_path_factory):
    ws = replace(workspace, config=workspace.config.with_overrides(output_dir=tmp_path_factory.mktemp("acceptance")))
    t0 = time.time()
    table = harness.run_experiment(ws.config, ws, reuse=False)
    assert not table.failures, table.failures
    return ws, table.to_frame(), time.time() - t0


def _report(key, ok, detail):
    record_criterion(key, ok, detail)
    print(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")
    assert ok, detail


def _cell(df, attack, source, target, degradation="none", metric="nme"):
    sel = df[(df["attack"] == attack) & (df["source"] == source) & (df["extractor"] == target) & (df["degradation"] == degradation)]
    assert len(sel) == 50, (attack, source, target, degradation, len(sel))
    return float(sel[metric].mean())


def _clean(df, target, degradation="none", metric="nme"):
    return _cell(df, harness.CLEAN, harness.NO_SOURCE, target, degradation, metric)


def _tag(df, prefix):
    tags = [d for d in dict.fromkeys(df["degradation"]) if d == prefix or d.startswith(prefix + "+")]
    assert len(tags) == 1, tags
    return tags[0]


# ---------------------------------------------------------------- C1


def test_c1_gradient_matches_finite_differences(workspace):
    rng = np.random.default_rng(2024)
    images = workspace.test_images
    t0 = time.time()
    worst = {}
    for name, ckpt in workspace.extractors.items():
        picks = rng.choice(len(images), 5, replace=False)
        worst[name] = max(fd_check_mid_attack(ckpt, images[i], 20, rng) for i in picks)
    elapsed = time.time() - t0
    ok = max(worst.values()) < 1e-4 and elapsed < 120
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f" (max rel err, bound 1e-4; {elapsed:.0f}s)"
    _report("C1 gradient correctness", ok, detail)


# ---------------------------------------------------------------- C2


def _random_config(rng, mode):
    return AttackConfig(
        epsilon=float(rng.uniform(0, 30)),
        alpha=float(rng.uniform(0.1, 5)),
        max_iters=int(rng.integers(0, 7)),
        momentum_decay=float(rng.uniform(0, 1)),
        variant=str(rng.choice(VARIANTS)),
        budget_mode=mode,
        seed=int(rng.integers(2**31)),
    )


def test_c2_budget_invariant_fuzz(workspace):
    rng = np.random.default_rng(7)
    images = workspace.test_images
    ckpts = list(workspace.extractors.values())
    t0 = time.time()
    bad = []
    for mode, runs in (("project", 500), ("literal", 100)):
        for _ in range(runs):
            cfg = _random_config(rng, mode)
            img = images[rng.integers(len(images))]
            out = run_attack(ckpts[rng.integers(len(ckpts))], img, cfg).image
            dev = np.abs(out - img).max()
            bound = cfg.epsilon if mode == "project" else cfg.epsilon + cfg.alpha
            if dev > bound or out.min() < 0 or out.max() > 255:
                bad.append((cfg, dev))
    elapsed = time.time() - t0
    ok = not bad and elapsed < 600
    _report("C2 budget invariant", ok, f"{len(bad)} violations in 500 project + 100 literal runs ({elapsed:.0f}s)")


# ---------------------------------------------------------------- C3


def test_c3_extractors_train(workspace):
    meta = {n: c.metadata for n, c in workspace.extractors.items()}
    seconds = sum(m.get("train_seconds", 0.0) for m in meta.values())
    ok = all(m["val_nme"] < 0.05 and m["epochs"] <= 30 for m in meta.values()) and seconds < 1800
    detail = ", ".join(f"{n} {m['val_nme']:.4f}@{m['epochs']}ep" for n, m in meta.items()) + f" (bound 0.05; {seconds:.0f}s training)"
    _report("C3 trainability", ok, detail)


# ---------------------------------------------------------------- C4 .. C9


def test_c4_white_box_efficacy(experiment):
    ws, df, elapsed = experiment
    ratios = {n: _cell(df, "LB", n, n) / _clean(df, n) for n in ws.extractors}
    ok = min(ratios.values()) >= 10 and elapsed < 900
    detail = ", ".join(f"{n} {_clean(df, n):.3f}->{_cell(df, 'LB', n, n):.3f} (x{r:.1f})" for n, r in ratios.items())
    _report("C4 white-box efficacy", ok, detail + f" (bound x10; full grid {elapsed:.0f}s)")


def test_c5_baseline_ordering(experiment):
    ws, df, _ = experiment
    parts, ok = [], True
    for n in ws.extractors:
        b1, b2, lb = (_cell(df, a, n, n) for a in ("Base1", "Base2", "LB"))
        ok &= b1 < 0.5 * b2 and abs(lb - b2) < 0.15
        parts.append(f"{n} {b1:.3f}/{b2:.3f}/{lb:.3f}")
    _report("C5 baseline ordering", ok, "Base1/Base2/LB " + ", ".join(parts))


def test_c6_transfer_weakness(experiment):
    ws, df, _ = experiment
    worst, parts = -math.inf, []
    for s in ws.extractors:
        for t in ws.extractors:
            if s == t:
                continue
            v, bound = _cell(df, "LB", s, t), 2 * _clean(df, t) + 0.02
            worst = max(worst, v - bound)
            parts.append(f"{s}->{t} {v:.3f}/{bound:.3f}")
    _report("C6 transfer weakness", worst <= 0, "cell/bound " + ", ".join(parts))


def test_c7_input_quality(experiment):
    ws, df, _ = experiment
    vals = {n: _cell(df, "LB", n, n, metric="ssim_i") for n in ws.extractors}
    ok = min(vals.values()) >= 0.70
    _report("C7 input quality", ok, ", ".join(f"{n} {v:.3f}" for n, v in vals.items()) + " (bound 0.70)")


def test_c8_synthesis_degradation(experiment):
    ws, df, _ = experiment
    ok, parts = True, []
    names = list(ws.extractors)
    for s in names:
        diag = _cell(df, "LB", s, s, metric="ssim_w")
        off = float(np.mean([_cell(df, "LB", s, t, metric="ssim_w") for t in names if t != s]))
        ok &= diag < off - 0.05
        parts.append(f"{s} {diag:.3f} vs {off:.3f}")
    lb = df[(df["attack"] == "LB") & (df["degradation"] == "none")]
    rho = spearmanr(lb["nme"], lb["ssim_w"]).statistic
    ok &= rho < 0
    _report("C8 synthesis degradation", ok, "diag vs off-diag SSIM_W " + ", ".join(parts) + f"; spearman {rho:.3f}")


def test_c9_compression_trend(experiment):
    ws, df, _ = experiment
    degs = ["none", "jpeg75", "jpeg50", _tag(df, "video_c"), _tag(df, "video_c2")]
    ok, parts = True, []
    for n in ws.extractors:
        nm = {(a, d): _cell(df, a, n, n, d) for a in ("Base1", "Base2", "LB") for d in degs}
        for d in degs[1:]:
            ok &= nm["LB", d] >= nm["Base2", d] - 0.05
        for a in ("Base1", "Base2", "LB"):
            ok &= nm[a, "jpeg75"] <= nm[a, "none"] + 0.05 and nm[a, "jpeg50"] <= nm[a, "jpeg75"] + 0.05
        parts.append(f"{n} LB " + "/".join(f"{nm['LB', d]:.2f}" for d in degs) + " Base2 " + "/".join(f"{nm['Base2', d]:.2f}" for d in degs))
    _report("C9 compression robustness", ok, "; ".join(parts) + f" [{', '.join(degs)}]")


def test_trained_peaks_match_training_targets(workspace):
    from landmark_disrupt.extractors.core import forward_batch
    from landmark_disrupt.extractors.training import heatmap_targets

    train = workspace.train.subset(range(100))
    for name, ckpt in workspace.extractors.items():
        maps = forward_batch(ckpt, train.image_array())
        targets = heatmap_targets(train, ckpt.spec, 1.5)

        def peaks(m):
            flat = m.reshape(*m.shape[:2], -1).argmax(-1)
            return np.stack(np.unravel_index(flat, m.shape[2:]), -1)

        dist = np.abs(peaks(maps) - peaks(targets)).max(-1)
        frac = float((dist <= 2).mean())
        print(f"{name}: {frac:.3f} of training peaks within 2 map cells")
        assert frac >= 0.9


def test_synthesizer_reconstructs_held_out_crops(workspace):
    test = workspace.test
    imgs = workspace.test_images
    crops = np.stack([align_face(imgs[i], test.records[i].landmarks, workspace.synth.crop_size) for i in range(len(test))])
    scores = [ssim(r, c) for r, c in zip(synthesize(workspace.synth, crops), crops)]
    print(f"synthesiser held-out SSIM mean {np.mean(scores):.3f}, min {np.min(scores):.3f}")
    assert np.mean(scores) > 0.7


# ---------------------------------------------------------------- C10


def test_c10_iteration_ablation(workspace, experiment, tmp_path):
    _, df, _ = experiment
    ws = replace(workspace, config=workspace.config.with_overrides(output_dir=tmp_path))
    values = list(range(0, 31))
    attack = {"epsilon": EPS, "alpha": ALPHA, "momentum_decay": 0.5, "variant": "LB"}
    sweep = harness.ablation_sweep(ws.config, "max_iters", values, ws, budget_mode="literal", attack=attack)
    # literal mode keeps the step that leaves the ball, so the earliest exit is iteration floor(eps/alpha) + 1
    knee = math.floor(EPS / ALPHA) + 1
    ok, parts = True, []
    for n in ws.extractors:
        curve = sweep[sweep["extractor"] == n].set_index("value")["nme"]
        clean = df[(df["attack"] == harness.CLEAN) & (df["extractor"] == n) & (df["degradation"] == "none")]
        start_ok = curve.loc[0] == float(np.mean(clean["nme"].to_numpy()))
        if not start_ok:
            print(f"{n}: T=0 {curve.loc[0]!r} vs clean {float(np.mean(clean['nme'].to_numpy()))!r}")
        rising = np.diff(curve.loc[:knee].to_numpy())
        tail = curve.loc[knee:].to_numpy()
        ok &= bool(start_ok) and (rising >= 0).all() and tail.max() - tail.min() < 0.02
        parts.append(f"{n} T0 {'=' if start_ok else '!='} clean, min rise {rising.min():+.4f}, tail spread {tail.max() - tail.min():.4f}")
    _report("C10 ablation shape", ok, "; ".join(parts) + f" (knee T={knee}, literal budget)")


# ---------------------------------------------------------------- C11


def test_c11_oracle_equivalences():
    rng = np.random.default_rng(11)
    li, ri = LANDMARK_NAMES.index(LEFT_OUTER), LANDMARK_NAMES.index(RIGHT_OUTER)
    err = {"loss": 0.0, "projection": 0.0, "nme": 0.0, "ssim": 0.0}
    for _ in range(100):
        k, h, w = rng.integers(1, 5), rng.integers(2, 7), rng.integers(2, 7)
        p, r = rng.normal(size=(k, h, w)), rng.normal(size=(k, h, w))
        err["loss"] = max(err["loss"], abs(heatmap_cosine_loss(p, r) - loop_loss(p, r)))

        shape = (rng.integers(1, 6), rng.integers(1, 6), 3)
        o = rng.uniform(0, 255, shape)
        c = o + rng.uniform(-60, 60, shape)
        eps = rng.uniform(0, 30)
        err["projection"] = max(err["projection"], np.abs(project_linf(c, o, eps) - clamp_loop(c, o, eps)).max())

        gt = rng.uniform(0, 128, (13, 2))
        pred = gt + rng.normal(0, 5, (13, 2))
        ours = nme(LandmarkSet(pred), LandmarkSet(gt))
        err["nme"] = max(err["nme"], abs(ours - nme_loop(pred.tolist(), gt.tolist(), li, ri)))

    for _ in range(20):
        size = rng.integers(11, 17)
        a = rng.uniform(0, 255, (size, size, 3))
        b = np.clip(a + rng.normal(0, rng.uniform(1, 40), a.shape), 0, 255)
        err["ssim"] = max(err["ssim"], abs(ssim(a, b) - ssim_direct(a, b)))
    ok = max(err.values()) < 1e-6
    _report("C11 oracle equivalences", ok, ", ".join(f"{k} {v:.1e}" for k, v in err.items()) + " (max abs diff, bound 1e-6)")
