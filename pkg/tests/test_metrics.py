"""Metrics: IoU, angular error, input normalization, evaluation loop."""

import numpy as np
import pytest

from nailtrace.errors import ContractViolation
from nailtrace.metrics import angular_error, evaluate, miou, predict, to_input
from nailtrace.model import ModelConfig, build_model
from nailtrace.synthetic import SceneSpec, generate_sample


class TestMiou:
    def test_perfect_match(self):
        m = np.zeros((4, 4), dtype=bool)
        m[1:3, 1:3] = True
        assert miou(m, m) == 1.0

    def test_half_overlap(self):
        a = np.zeros((1, 4), dtype=bool)
        b = np.zeros((1, 4), dtype=bool)
        a[0, :2] = True
        b[0, 1:3] = True
        # fg IoU = 1/3; bg IoU = 1/3
        assert miou(a, b) == pytest.approx(1 / 3)

    def test_both_empty_counts_as_one(self):
        z = np.zeros((3, 3), dtype=bool)
        assert miou(z, z) == 1.0

    def test_disjoint(self):
        a = np.zeros((2, 2), dtype=bool)
        b = np.zeros((2, 2), dtype=bool)
        a[0, 0] = True
        b[1, 1] = True
        assert miou(a, b) == pytest.approx(0.5 * (0.0 + 2 / 4))

    def test_shape_mismatch_raises(self):
        with pytest.raises(ContractViolation):
            miou(np.zeros((2, 2)), np.zeros((3, 3)))


class TestAngularError:
    @pytest.mark.parametrize("b, want", [
        ((1.0, 0.0), 0.0),
        ((0.0, 1.0), 90.0),
        ((-1.0, 0.0), 180.0),
        ((np.cos(0.3), np.sin(0.3)), np.degrees(0.3)),
    ])
    def test_known_angles(self, b, want):
        assert angular_error((1.0, 0.0), b) == pytest.approx(want, abs=1e-9)

    def test_non_unit_raises(self):
        with pytest.raises(ContractViolation):
            angular_error((2.0, 0.0), (1.0, 0.0))


class TestToInput:
    def test_range_and_layout(self):
        img = np.zeros((4, 6, 3), dtype=np.uint8)
        img[..., 0] = 255
        x = to_input(img)
        assert x.shape == (1, 3, 4, 6)
        np.testing.assert_allclose(x.data[0, 0], 1.0)
        np.testing.assert_allclose(x.data[0, 1], -1.0)


@pytest.fixture(scope="module")
def model():
    return build_model(ModelConfig(input_size=(96, 96), width_multiplier=0.25), seed=0)


class TestEvaluate:
    def test_predict_at_native_resolution(self, model):
        sample = generate_sample(SceneSpec(rng_seed=1, size=(64, 64), nail_count=2,
                                           nail_half_length=(6.0, 8.0),
                                           nail_half_width=(3.0, 4.0)))
        out = predict(model, sample.image)
        assert out.fgbg_logits.shape == (1, 2, 64, 64)

    def test_report_fields_finite(self, model):
        samples = [
            generate_sample(SceneSpec(rng_seed=s, size=(64, 64), nail_count=2,
                                      nail_half_length=(6.0, 8.0),
                                      nail_half_width=(3.0, 4.0)))
            for s in (0, 1)
        ]
        rep = evaluate(model, samples)
        assert rep.num_images == 2
        assert 0.0 <= rep.binary_miou <= 1.0
        assert 0.0 <= rep.pixel_accuracy <= 1.0
        assert 0.0 <= rep.mean_angular_error_deg <= 180.0
        assert len(rep.per_class_iou) == 10
        d = rep.to_dict()
        assert set(d) >= {"binary_miou", "per_class_iou", "mean_angular_error_deg"}
