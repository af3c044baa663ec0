import json
from dataclasses import replace

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from oracles import clamp_loop

from landmark_disrupt.attacks import (
    CONFIG_FIELDS,
    AttackConfig,
    fgsm_attack,
    ifgsm_attack,
    lbmix_attack,
    lbtrans_attack,
    mifgsm_attack,
    project_linf,
    run_attack,
)
from landmark_disrupt.extractors.core import Checkpoint, forward, input_gradient

pixels = st.floats(0, 255, allow_nan=False)


@pytest.fixture(scope="module")
def setup(tiny_ckpts, faces):
    return tiny_ckpts["hourglass-mini"], faces.image(4)


# ---- configuration


def test_config_defaults_and_json_roundtrip():
    c = AttackConfig()
    assert (c.epsilon, c.alpha, c.max_iters, c.momentum_decay, c.variant, c.budget_mode) == (15.0, 1.0, 20, 0.5, "LB", "project")
    assert tuple(json.loads(c.to_json())) == tuple(sorted(CONFIG_FIELDS))
    d = AttackConfig(epsilon=8, alpha=0.5, max_iters=3, variant="LB_mix", budget_mode="literal", seed=4)
    assert AttackConfig.from_json(d.to_json()) == d


@pytest.mark.parametrize(
    "kw",
    [{"epsilon": -1}, {"alpha": 0}, {"max_iters": -2}, {"momentum_decay": 1.5}, {"variant": "PGD"}, {"budget_mode": "soft"}],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        AttackConfig(**kw)


def test_config_rejects_unknown_fields():
    with pytest.raises(ValueError, match="steps"):
        AttackConfig.from_dict({"epsilon": 3, "steps": 4})


# ---- projection


def test_projection_examples():
    o = np.full((1, 1, 3), 100.0)
    assert project_linf(np.full((1, 1, 3), 130.0), o, 15)[0, 0, 0] == 115
    assert np.array_equal(project_linf(o, o, 15), o)
    assert project_linf(np.full((1, 1, 1), -40.0), np.full((1, 1, 1), 5.0), 15)[0, 0, 0] == 0


@given(arrays(np.float64, (4, 5, 3), elements=st.floats(-60, 320)), arrays(np.float64, (4, 5, 3), elements=pixels), st.floats(0, 40))
def test_projection_matches_scalar_loop(cand, origin, eps):
    out = project_linf(cand, origin, eps)
    np.testing.assert_allclose(out, clamp_loop(cand, origin, eps), rtol=0, atol=1e-9)
    assert np.abs(out - origin).max() <= eps
    assert out.min() >= 0 and out.max() <= 255
    assert np.array_equal(project_linf(out, origin, eps), out)


# ---- attack behaviour


def test_no_op_configs_return_the_input(setup):
    ck, img = setup
    for cfg in (AttackConfig(max_iters=0), AttackConfig(epsilon=0), AttackConfig(variant="FGSM", epsilon=0)):
        res = run_attack(ck, img, cfg)
        assert np.array_equal(res.image, img)
        assert res.linf == 0.0


def test_loss_decreases_from_k(setup):
    ck, img = setup
    res = mifgsm_attack(ck, img, AttackConfig(max_iters=8))
    assert res.initial_loss == pytest.approx(13, abs=1e-4)
    assert res.final_loss < res.initial_loss
    assert len(res.loss_trace) == res.iterations + 1
    assert res.linf <= 15


def test_fgsm_is_one_epsilon_sign_step(setup):
    ck, img = setup
    res = fgsm_attack(ck, img, AttackConfig(variant="FGSM", epsilon=6))
    ref = forward(ck, img).maps
    _, g = input_gradient(ck, img, ref)
    expected = np.clip(img - 6 * np.sign(g), 0, 255)
    assert np.array_equal(res.image, expected)
    d = res.image - img
    interior = (img >= 6) & (img <= 249)
    assert set(np.unique(d[interior])) <= {-6.0, 0.0, 6.0}
    assert res.iterations == 1


def _manual_momentum(ck, img, steps, alpha, eps, decay, rule):
    ref = forward(ck, img).maps
    x, m = img.copy(), np.zeros_like(img)
    out = []
    for t in range(steps):
        _, g = input_gradient(ck, x, ref)
        m = decay * m + g / np.abs(g).sum()
        use = rule(t)
        x = np.clip(x - alpha * np.sign(m if use == "momentum" else g), 0, 255)
        x = np.clip(x, np.maximum(img - eps, 0), np.minimum(img + eps, 255))
        out.append(x.copy())
    return out


def test_momentum_iterates_match_hand_rolled_loop(setup):
    ck, img = setup
    res = mifgsm_attack(ck, img, AttackConfig(max_iters=4, alpha=2, epsilon=5), keep_trajectory=True)
    manual = _manual_momentum(ck, img, 4, 2, 5, 0.5, lambda t: "momentum")
    for a, b in zip(res.trajectory, manual):
        assert np.array_equal(a, b)


def test_zero_decay_momentum_equals_ifgsm(setup):
    ck, img = setup
    cfg = AttackConfig(max_iters=5, momentum_decay=0.0)
    a = mifgsm_attack(ck, img, cfg, keep_trajectory=True)
    b = ifgsm_attack(ck, img, replace(cfg, variant="IFGSM"), keep_trajectory=True)
    for x, y in zip(a.trajectory, b.trajectory):
        assert np.array_equal(x, y)


def test_unit_scale_lbtrans_equals_lb(setup):
    ck, img = setup
    cfg = AttackConfig(max_iters=4)
    a = mifgsm_attack(ck, img, cfg)
    b = lbtrans_attack(ck, img, replace(cfg, variant="LB_trans"), scale_range=(1.0, 1.0))
    assert np.array_equal(a.image, b.image)
    assert a.loss_trace == b.loss_trace


def test_lbtrans_seeded_determinism(setup):
    ck, img = setup
    cfg = AttackConfig(variant="LB_trans", max_iters=3, seed=11)
    a, b = lbtrans_attack(ck, img, cfg), lbtrans_attack(ck, img, cfg)
    assert np.array_equal(a.image, b.image) and a.loss_trace == b.loss_trace
    c = lbtrans_attack(ck, img, replace(cfg, seed=12))
    assert not np.array_equal(a.image, c.image)


def test_lbmix_schedule(setup):
    ck, img = setup
    one = lbmix_attack(ck, img, AttackConfig(variant="LB_mix", max_iters=1))
    step = ifgsm_attack(ck, img, AttackConfig(variant="IFGSM", max_iters=1))
    assert np.array_equal(one.image, step.image)
    zero = lbmix_attack(ck, img, AttackConfig(variant="LB_mix", max_iters=4, momentum_decay=0.0), keep_trajectory=True)
    base = ifgsm_attack(ck, img, AttackConfig(variant="IFGSM", max_iters=4), keep_trajectory=True)
    for x, y in zip(zero.trajectory, base.trajectory):
        assert np.array_equal(x, y)
    mixed = lbmix_attack(ck, img, AttackConfig(variant="LB_mix", max_iters=4, alpha=2, epsilon=6), keep_trajectory=True)
    manual = _manual_momentum(ck, img, 4, 2, 6, 0.5, lambda t: "sign" if t % 2 == 0 else "momentum")
    for x, y in zip(mixed.trajectory, manual):
        assert np.array_equal(x, y)


def test_literal_mode_stops_after_leaving_the_ball(setup):
    ck, img = setup
    res = mifgsm_attack(ck, img, AttackConfig(epsilon=3, alpha=2, max_iters=10, budget_mode="literal"))
    assert res.status == "budget exhausted"
    assert 3 < res.linf <= 5
    assert res.iterations == 2


def test_flat_gradient_stops(setup):
    ck, img = setup
    dead = Checkpoint(ck.spec, {k: np.zeros_like(v) if k.endswith(("weight", "bias")) else v for k, v in ck.weights.items()})
    res = mifgsm_attack(dead, img, AttackConfig(max_iters=5))
    assert res.status == "flat gradient"
    assert res.iterations == 0 and np.array_equal(res.image, img)


@given(
    st.sampled_from(["LB", "FGSM", "IFGSM", "LB_trans", "LB_mix"]),
    st.floats(0, 20),
    st.floats(0.25, 6),
    st.integers(0, 4),
    st.floats(0, 1),
    st.sampled_from(["project", "literal"]),
)
def test_budget_invariant(tiny_ckpts, faces, variant, eps, alpha, iters, decay, mode):
    ck = tiny_ckpts["encdec-mini"]
    img = faces.image(5)
    cfg = AttackConfig(eps, alpha, iters, decay, variant, mode, seed=1)
    res = run_attack(ck, img, cfg)
    assert res.image.min() >= 0 and res.image.max() <= 255
    step = eps if variant == "FGSM" else alpha
    bound = eps if mode == "project" else eps + step
    assert np.abs(res.image - img).max() <= bound + 1e-9


def test_gradient_tensor_dtype(setup):
    ck, img = setup
    loss, g = input_gradient(ck, img, forward(ck, img), dtype=torch.float64)
    assert g.dtype == np.float64 and np.isfinite(g).all()
