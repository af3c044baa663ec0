import json

import numpy as np
import pytest

from landmark_disrupt.datasets import (
    DatasetError,
    export_dataset,
    load_annotated_dataset,
    split_dataset,
    synthetic_dataset,
)


@pytest.fixture
def exported(tmp_path):
    ds = synthetic_dataset(3, seed=9)
    export_dataset(ds, tmp_path / "d")
    return ds, tmp_path / "d"


def test_export_import_roundtrip(exported):
    ds, root = exported
    back = load_annotated_dataset(root)
    assert len(back) == 3
    assert back.names == ds.names
    # coordinates are stored with two decimals
    assert np.abs(back.landmark_array() - ds.landmark_array()).max() <= 0.005 + 1e-9
    assert np.array_equal(back.landmark_array(), np.round(ds.landmark_array(), 2))
    assert np.array_equal(back.image_array(), ds.image_array())


def test_export_is_byte_stable(tmp_path):
    ds = synthetic_dataset(2, seed=4)
    export_dataset(ds, tmp_path / "a")
    export_dataset(ds, tmp_path / "b")
    for rel in ["annotations.json", *[f"images/{r.image_id}.png" for r in ds.records]]:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def _edit(root, fn):
    path = root / "annotations.json"
    doc = json.loads(path.read_text())
    fn(doc)
    path.write_text(json.dumps(doc))


def test_missing_image_is_named(exported):
    _, root = exported
    _edit(root, lambda d: d["records"][1].update(image="images/nowhere.png"))
    back = load_annotated_dataset(root)
    assert len(back) == 2
    assert any("nowhere.png" in msg for msg in back.diagnostics)
    with pytest.raises(DatasetError, match="nowhere.png"):
        load_annotated_dataset(root, strict=True)


def test_bad_coordinates_are_reported(exported):
    _, root = exported
    _edit(root, lambda d: d["records"][0].update(landmarks=[[1, 2]] * 5))
    back = load_annotated_dataset(root)
    assert len(back) == 2 and "13" in back.diagnostics[0]


def test_schema_without_eye_corners_fails(exported):
    _, root = exported
    _edit(root, lambda d: d.update(schema=[f"p{i}" for i in range(13)]))
    with pytest.raises(DatasetError, match="normalisation"):
        load_annotated_dataset(root)


def test_empty_result_fails(exported):
    _, root = exported
    _edit(root, lambda d: d.update(records=[]))
    with pytest.raises(DatasetError, match="no valid records"):
        load_annotated_dataset(root)


def test_split_sizes_partition_and_determinism():
    ds = synthetic_dataset(100, seed=0)
    a = split_dataset(ds, (0.8, 0.1, 0.1), seed=5)
    b = split_dataset(ds, (0.8, 0.1, 0.1), seed=5)
    assert [len(s) for s in a] == [80, 10, 10]
    assert [s.split for s in a] == ["train", "val", "test"]
    ids = [[r.image_id for r in s.records] for s in a]
    assert ids == [[r.image_id for r in s.records] for s in b]
    flat = sum(ids, [])
    assert sorted(flat) == sorted(r.image_id for r in ds.records)
    assert len(set(flat)) == 100
    c = split_dataset(ds, (0.8, 0.1, 0.1), seed=6)
    assert [r.image_id for r in c[0].records] != ids[0]


@pytest.mark.parametrize("ratios", [(0.5, 0.5), (0.8, 0.3, 0.1), (1.0, 0.0, 0.0)])
def test_split_rejects_bad_ratios(ratios):
    with pytest.raises(ValueError):
        split_dataset(synthetic_dataset(10, seed=0), ratios)


def test_synthetic_dataset_deterministic():
    a, b = synthetic_dataset(4, seed=2), synthetic_dataset(4, seed=2)
    assert np.array_equal(a.image_array(), b.image_array())
    assert a.image_array().dtype == np.uint8
    assert np.array_equal(a.image(2), a.image_array()[2])
