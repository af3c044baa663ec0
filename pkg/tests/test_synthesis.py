import numpy as np
import pytest

from landmark_disrupt.alignment import align_face
from landmark_disrupt.datasets import synthetic_dataset
from landmark_disrupt.faces import LandmarkSet
from landmark_disrupt.synthesis import SynthCheckpoint, ssim_w_pipeline, synthesize, train_synthesizer


@pytest.fixture(scope="module")
def crops():
    ds = synthetic_dataset(240, seed=21)
    imgs = ds.image_array().astype(np.float64)
    return np.stack([align_face(imgs[i], ds.records[i].landmarks, 32) for i in range(len(ds))])


@pytest.fixture(scope="module")
def synth(crops):
    return train_synthesizer(crops[:200], crops[200:], epochs=4, seed=0)


def test_zero_epochs_keeps_untrained_baseline(crops):
    ck = train_synthesizer(crops[:200], crops[200:], epochs=0, seed=3)
    assert ck.metadata["val_mse"] == ck.metadata["baseline_mse"]
    assert ck.metadata["history"] == [ck.metadata["baseline_mse"]]


def test_training_improves_and_repeats(crops, synth):
    assert synth.metadata["val_mse"] < synth.metadata["baseline_mse"]
    again = train_synthesizer(crops[:200], crops[200:], epochs=4, seed=0)
    assert again.metadata["val_mse"] == pytest.approx(synth.metadata["val_mse"], abs=1e-6)


def test_checkpoint_roundtrip(tmp_path, synth, crops):
    back = SynthCheckpoint.load(synth.save(tmp_path / "s.ckpt"))
    assert back.crop_size == synth.crop_size == 32
    assert back.metadata == synth.metadata
    for k, v in synth.weights.items():
        assert np.array_equal(back.weights[k], v)
    assert np.array_equal(synthesize(back, crops[:3]), synthesize(synth, crops[:3]))


def test_synthesize_range_and_shapes(synth, crops):
    one = synthesize(synth, crops[0])
    many = synthesize(synth, crops[:4])
    assert one.shape == (32, 32, 3) and many.shape == (4, 32, 32, 3)
    assert many.min() >= 0 and many.max() <= 255
    np.testing.assert_allclose(one, many[0], atol=1e-4)


@pytest.mark.parametrize("n, shape", [(150, (32, 32, 3)), (220, (32, 30, 3))])
def test_training_input_validation(n, shape):
    with pytest.raises(ValueError):
        train_synthesizer(np.zeros((n, *shape)), epochs=0)


def test_ssim_w_identical_landmarks_is_one(synth, faces):
    img, lm = faces.image(0).astype(np.float64), faces.records[0].landmarks
    assert ssim_w_pipeline(img, lm, lm, synth) == 1.0
    assert ssim_w_pipeline(img, lm, lm, synth, attacked_image=img) == 1.0


def test_ssim_w_falls_with_jitter(synth, faces):
    rng = np.random.default_rng(0)
    small, large = [], []
    for i in range(len(faces)):
        img, lm = faces.image(i).astype(np.float64), faces.records[i].landmarks
        small.append(ssim_w_pipeline(img, lm, lm.with_coords(lm.coords + rng.uniform(-1, 1, lm.coords.shape)), synth))
        large.append(ssim_w_pipeline(img, lm, lm.with_coords(lm.coords + rng.uniform(-20, 20, lm.coords.shape)), synth))
    assert np.mean(small) > np.mean(large)


def test_ssim_w_degenerate_alignment_fails(synth, faces):
    img, lm = faces.image(0).astype(np.float64), faces.records[0].landmarks
    with pytest.raises(ValueError):
        ssim_w_pipeline(img, lm, LandmarkSet(np.full((13, 2), 40.0)), synth)
