"""Dataset directory IO: lossless round trips, splits, corruption."""

import numpy as np
import pytest

from nailtrace.dataset import (
    _split_for_index,
    load_sample,
    read_dataset,
    read_field,
    write_dataset,
    write_field,
)
from nailtrace.synthetic import SceneSpec, generate_sample, scene_for_index


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    manifest = write_dataset(root, 12, base_seed=0, size=(64, 64),
                             nail_half_length=(5.0, 7.0), nail_half_width=(2.5, 3.5))
    return root, manifest


class TestFieldFile:
    def test_round_trip(self, tmp_path):
        fld = np.random.default_rng(0).standard_normal((5, 7, 2)).astype(np.float32)
        write_field(tmp_path / "f.ntfd", fld)
        np.testing.assert_array_equal(read_field(tmp_path / "f.ntfd"), fld)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "f.ntfd").write_bytes(b"NOPE" + b"\x00" * 12)
        with pytest.raises(IOError, match="magic"):
            read_field(tmp_path / "f.ntfd")

    def test_truncated(self, tmp_path):
        fld = np.zeros((4, 4, 2), dtype=np.float32)
        write_field(tmp_path / "f.ntfd", fld)
        data = (tmp_path / "f.ntfd").read_bytes()
        (tmp_path / "f.ntfd").write_bytes(data[:-4])
        with pytest.raises(IOError, match="truncated"):
            read_field(tmp_path / "f.ntfd")


class TestWriteRead:
    def test_manifest_round_trip(self, dataset):
        root, manifest = dataset
        loaded = read_dataset(root)
        assert [s.id for s in loaded.scenes] == [s.id for s in manifest.scenes]
        assert loaded.fg_fraction == pytest.approx(manifest.fg_fraction)
        rec = loaded.record(loaded.scenes[0].id)
        assert rec.directions == manifest.scenes[0].directions

    def test_splits_cover_and_disjoint(self, dataset):
        _, manifest = dataset
        ids = {s: set(manifest.ids(s)) for s in ("train", "val", "test")}
        assert ids["train"] | ids["val"] | ids["test"] == {s.id for s in manifest.scenes}
        assert not ids["train"] & ids["val"]
        assert not ids["val"] & ids["test"]

    def test_sample_round_trip_lossless(self, dataset):
        root, manifest = dataset
        rec = manifest.scenes[0]
        spec = scene_for_index(0, 0, size=(64, 64),
                               nail_half_length=(5.0, 7.0), nail_half_width=(2.5, 3.5))
        want = generate_sample(spec)
        got = load_sample(root, rec.id, rec.directions)
        np.testing.assert_array_equal(got.image, want.image)
        np.testing.assert_array_equal(got.fgbg, want.fgbg)
        np.testing.assert_array_equal(got.classes, want.classes)
        np.testing.assert_array_equal(got.field, want.field)
        got.validate()

    def test_split_proportions_at_full_size(self):
        total = 1438
        counts = {"train": 0, "val": 0, "test": 0}
        for i in range(total):
            counts[_split_for_index(i, total)] += 1
        assert counts == {"train": 941, "val": 254, "test": 243}

    def test_missing_manifest_raises(self, tmp_path):
        with pytest.raises(IOError, match="manifest"):
            read_dataset(tmp_path)

    def test_corrupt_sample_raises(self, dataset, tmp_path):
        root, manifest = dataset
        sid = manifest.scenes[1].id
        bad_root = tmp_path / "bad"
        for sub in ("images", "fgbg", "classes", "fields"):
            (bad_root / sub).mkdir(parents=True)
            for f in (root / sub).glob(f"{sid}.*"):
                (bad_root / sub / f.name).write_bytes(f.read_bytes())
        img = bad_root / "images" / f"{sid}.png"
        img.write_bytes(img.read_bytes()[:20])
        with pytest.raises(IOError, match=sid):
            load_sample(bad_root, sid)
