"""Component labeling, instance extraction and tip-ward mask stretching."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nailtrace.errors import ContractViolation
from nailtrace.model import SegOutput
from nailtrace.postprocess import (
    NailInstance,
    UnionFind,
    extract_instances,
    label_components,
    stretch_mask,
)
from nailtrace.tensor import Tensor
from oracles import flood_fill_components, partition_signature


def _output(fg_prob, class_map=None, field=None):
    """SegOutput whose softmax fg probability / argmax class match the inputs."""
    fg_prob = np.asarray(fg_prob, dtype=np.float64)
    h, w = fg_prob.shape
    p = np.clip(fg_prob, 1e-6, 1 - 1e-6)
    fgbg = np.zeros((1, 2, h, w))
    fgbg[0, 1] = np.log(p / (1 - p))
    if class_map is None:
        class_map = np.ones((h, w), dtype=int)
    classes = np.full((1, 10, h, w), -10.0)
    for c in range(1, 11):
        classes[0, c - 1][class_map == c] = 10.0
    if field is None:
        field = np.zeros((2, h, w))
        field[0] = 1.0
    return SegOutput(
        fgbg_logits=Tensor(fgbg),
        class_logits=Tensor(classes),
        field=Tensor(np.asarray(field, dtype=np.float64)[None]),
        aux=[],
    )


class TestUnionFind:
    def test_union_by_smaller_root(self):
        uf = UnionFind()
        for _ in range(4):
            uf.make()
        uf.union(3, 1)
        uf.union(2, 3)
        assert uf.find(2) == uf.find(1) == 1
        assert uf.find(0) == 0


class TestLabelComponents:
    def test_empty_mask(self):
        labels, count = label_components(np.zeros((4, 4), dtype=bool))
        assert count == 0 and (labels == 0).all()

    def test_diagonal_connectivity(self):
        mask = np.eye(5, dtype=bool)
        _, c4 = label_components(mask, connectivity=4)
        _, c8 = label_components(mask, connectivity=8)
        assert c4 == 5 and c8 == 1

    def test_u_shape_merges(self):
        mask = np.zeros((4, 5), dtype=bool)
        mask[0, :] = True
        mask[1:, 0] = True
        mask[1:, 4] = True
        _, count = label_components(mask, connectivity=4)
        assert count == 1

    def test_labels_dense_from_one(self):
        mask = np.zeros((3, 7), dtype=bool)
        mask[0, 0] = mask[0, 3] = mask[2, 5] = True
        labels, count = label_components(mask)
        assert count == 3
        assert set(np.unique(labels)) == {0, 1, 2, 3}

    def test_bad_connectivity_raises(self):
        with pytest.raises(ContractViolation):
            label_components(np.zeros((2, 2), dtype=bool), connectivity=6)

    @settings(deadline=None, max_examples=40)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([4, 8]), st.floats(0.2, 0.7))
    def test_matches_flood_fill(self, seed, connectivity, density):
        mask = np.random.default_rng(seed).uniform(size=(14, 17)) < density
        labels, count = label_components(mask, connectivity)
        ref_labels, ref_count = flood_fill_components(mask, connectivity)
        assert count == ref_count
        assert partition_signature(labels) == partition_signature(ref_labels)

    def test_transpose_invariant_count(self):
        mask = np.random.default_rng(7).uniform(size=(20, 11)) < 0.45
        _, a = label_components(mask, 4)
        _, b = label_components(mask.T, 4)
        assert a == b


class TestExtractInstances:
    def test_two_nails_two_instances(self):
        fg = np.zeros((32, 32))
        fg[4:10, 4:12] = 0.9
        fg[20:26, 18:28] = 0.8
        cls = np.zeros((32, 32), dtype=int)
        cls[4:10, 4:12] = 2
        cls[20:26, 18:28] = 5
        insts = extract_instances(_output(fg, cls), min_area=4)
        assert [i.class_label for i in insts] == [2, 5]
        assert insts[0].area == 48 and insts[1].area == 60
        m = insts[0].pixel_mask()
        assert m[5, 5] and not m[20, 20]
        assert insts[0].bbox == (4, 4, 11, 9)
        assert insts[0].centroid == (pytest.approx(7.5), pytest.approx(6.5))

    def test_score_weighted_orientation(self):
        fg = np.zeros((16, 16))
        field = np.zeros((2, 16, 16))
        fg[8, 8] = 0.9
        field[:, 8, 8] = (1.0, 0.0)
        fg[8, 9] = 0.1 + 1e-4  # above threshold 0.1 used below
        field[:, 8, 9] = (0.0, 1.0)
        insts = extract_instances(_output(fg, field=field), min_area=1, fg_threshold=0.1)
        assert len(insts) == 1
        ox, oy = insts[0].orientation
        v = np.array([0.9 * 1.0, (0.1 + 1e-4) * 1.0])
        v /= np.linalg.norm(v)
        assert ox == pytest.approx(v[0], abs=1e-3)
        assert oy == pytest.approx(v[1], abs=1e-3)

    def test_min_area_filters(self):
        fg = np.zeros((32, 32))
        fg[2:4, 2:4] = 0.9  # 4 px
        fg[10:20, 10:20] = 0.9  # 100 px
        insts = extract_instances(_output(fg), min_area=10)
        assert len(insts) == 1 and insts[0].area == 100

    def test_degenerate_orientation(self):
        fg = np.zeros((16, 16))
        fg[4:8, 4:8] = 0.9
        field = np.zeros((2, 16, 16))
        insts = extract_instances(_output(fg, field=field), min_area=1)
        assert insts[0].degenerate
        assert insts[0].orientation == (0.0, -1.0)

    def test_json_round_trip(self):
        fg = np.zeros((16, 16))
        fg[4:8, 4:9] = 0.9
        inst = extract_instances(_output(fg), min_area=1)[0]
        back = NailInstance.from_json_dict(inst.to_json_dict(), frame_size=(16, 16))
        np.testing.assert_array_equal(back.pixel_mask(), inst.pixel_mask())
        assert back.orientation == inst.orientation

    def test_all_background(self):
        assert extract_instances(_output(np.zeros((16, 16)))) == []


class TestStretchMask:
    def _instance(self, mask, orientation, centroid):
        ys, xs = np.nonzero(mask)
        rle = []
        for y in np.unique(ys):
            row = np.flatnonzero(mask[y])
            rle.append((int(y), int(row.min()), int(row.max() - row.min() + 1)))
        return NailInstance(
            id=1, class_label=1, rle=rle,
            bbox=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
            centroid=centroid, orientation=orientation,
            area=int(mask.sum()), mean_score=1.0, frame_size=mask.shape,
        )

    def test_horizontal_bar_stretches_right(self):
        mask = np.zeros((9, 12), dtype=bool)
        mask[3:6, 2:7] = True
        inst = self._instance(mask, (1.0, 0.0), (4.0, 4.0))
        out = stretch_mask(inst, 3)
        assert out[3:6, 7:10].all()  # grown toward the tip
        assert not out[:, :2].any()  # base side untouched
        assert (out & mask).sum() == mask.sum()  # superset

    def test_zero_length_identity(self):
        mask = np.zeros((5, 5), dtype=bool)
        mask[2, 2] = True
        inst = self._instance(mask, (0.0, 1.0), (2.0, 2.0))
        np.testing.assert_array_equal(stretch_mask(inst, 0), mask)

    def test_stays_in_frame(self):
        mask = np.zeros((6, 6), dtype=bool)
        mask[2:4, 3:6] = True
        inst = self._instance(mask, (1.0, 0.0), (4.0, 2.5))
        out = stretch_mask(inst, 10)
        assert out.shape == mask.shape

    def test_negative_raises(self):
        mask = np.zeros((4, 4), dtype=bool)
        mask[1, 1] = True
        inst = self._instance(mask, (1.0, 0.0), (1.0, 1.0))
        with pytest.raises(ContractViolation):
            stretch_mask(inst, -1)
