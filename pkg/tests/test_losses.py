"""Objective terms: NLL, hardest-pixel pooling, field L2, combined loss."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nailtrace import tensor as T
from nailtrace.errors import ContractViolation, DataValidationError
from nailtrace.losses import (
    downsample_labels,
    field_loss,
    lmp_loss,
    lmp_select,
    nll_loss,
    total_loss,
    weighted_ce_loss,
)
from nailtrace.model import SegOutput
from nailtrace.tensor import Tensor
from oracles import lmp_naive, total_loss_naive


def _logits_for_prob(p, shape_hw):
    """2-channel logit map whose softmax class-1 probability is p everywhere."""
    h, w = shape_hw
    z = np.zeros((1, 2, h, w), dtype=np.float64)
    z[:, 1] = np.log(p / (1 - p))
    return Tensor(z)


class TestNLL:
    def test_uniform_logits_give_log2(self):
        logits = Tensor(np.zeros((1, 2, 3, 3)))
        target = np.zeros((1, 3, 3), dtype=np.int64)
        pp = nll_loss(logits, target)
        np.testing.assert_allclose(pp.data, np.log(2.0), rtol=1e-12)

    def test_confident_correct_prediction(self):
        logits = _logits_for_prob(0.9, (2, 2))
        target = np.ones((1, 2, 2), dtype=np.int64)
        pp = nll_loss(logits, target)
        np.testing.assert_allclose(pp.data, -np.log(0.9), rtol=1e-10)

    def test_mask_zeroes_contributions(self):
        logits = Tensor(np.random.default_rng(0).standard_normal((1, 2, 4, 4)))
        target = np.zeros((1, 4, 4), dtype=np.int64)
        mask = np.zeros((1, 4, 4))
        mask[0, 1, 2] = 1
        pp = nll_loss(logits, target, valid_mask=mask)
        assert (pp.data != 0).sum() == 1

    def test_mask_shape_mismatch_raises(self):
        logits = Tensor(np.zeros((1, 2, 4, 4)))
        with pytest.raises(ContractViolation):
            nll_loss(logits, np.zeros((1, 4, 4), dtype=np.int64), np.zeros((1, 3, 3)))


class TestLMP:
    def test_one_to_twenty(self):
        vals = np.arange(1.0, 21.0)  # k = floor(0.1 * 20) = 2 -> keep {20, 19}
        kept, tau = lmp_select(vals, 0.1)
        assert sorted(vals[kept]) == [19.0, 20.0]
        assert tau == 19.0
        loss, tau2 = lmp_loss(Tensor(vals), 0.1)
        assert loss.data.item() == 19.5
        assert tau2 == 19.0

    def test_tie_break_by_flat_index(self):
        vals = np.array([5.0, 5.0, 5.0, 5.0, 1.0])
        kept, tau = lmp_select(vals, 0.4)  # k = 2
        assert list(kept) == [0, 1]
        assert tau == 5.0

    def test_k_at_least_one(self):
        kept, _ = lmp_select(np.array([1.0, 2.0]), 0.01)
        assert kept.size == 1

    def test_empty_raises(self):
        with pytest.raises(ContractViolation):
            lmp_select(np.zeros(0), 0.1)

    @settings(deadline=None, max_examples=30)
    @given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.9))
    def test_matches_naive(self, seed, fraction):
        vals = np.random.default_rng(seed).standard_normal(37)
        kept, tau = lmp_select(vals, fraction)
        mean_naive, tau_naive, kept_naive = lmp_naive(vals, fraction)
        assert sorted(kept) == sorted(kept_naive)
        assert tau == pytest.approx(tau_naive)
        loss, _ = lmp_loss(Tensor(vals), fraction)
        assert loss.data.item() == pytest.approx(mean_naive)

    def test_gradient_only_on_kept(self):
        vals = Tensor(np.arange(1.0, 21.0), requires_grad=True)
        loss, _ = lmp_loss(vals, 0.1)
        loss.backward()
        grad = vals.grad
        np.testing.assert_allclose(grad[-2:], 0.5)  # 1/k on kept entries
        np.testing.assert_allclose(grad[:-2], 0.0)


class TestWeightedCE:
    def test_matches_manual_weighting(self):
        rng = np.random.default_rng(1)
        pp = rng.uniform(0.1, 2.0, size=(1, 4, 4))
        fg = np.zeros((1, 4, 4))
        fg[0, :2] = 1
        w = np.where(fg > 0, 20.0, 1.0)
        want = (pp * w).sum() / w.sum()
        got = weighted_ce_loss(Tensor(pp), fg, fg_weight=20.0)
        assert got.data.item() == pytest.approx(want)


class TestFieldLoss:
    def test_perfect_prediction_is_zero(self):
        t = np.zeros((1, 2, 3, 3))
        t[:, 0] = 1.0
        valid = np.ones((1, 3, 3))
        loss = field_loss(Tensor(t.copy()), t, valid)
        assert loss.data.item() == 0.0

    def test_opposite_vectors(self):
        t = np.zeros((1, 2, 1, 1))
        t[:, 0] = 1.0
        pred = Tensor(-t)
        loss = field_loss(pred, t, np.ones((1, 1, 1)))
        assert loss.data.item() == pytest.approx(4.0)  # |(-1,0)-(1,0)|^2

    def test_normalized_by_full_pixel_count(self):
        h = w = 4
        t = np.zeros((1, 2, h, w))
        valid = np.zeros((1, h, w))
        t[0, 0, 0, 0] = 1.0
        valid[0, 0, 0] = 1
        loss = field_loss(Tensor(np.zeros_like(t)), t, valid)
        assert loss.data.item() == pytest.approx(1.0 / (h * w))

    def test_rotation_invariance(self):
        rng = np.random.default_rng(3)
        ang = rng.uniform(0, 2 * np.pi, size=(1, 5, 5))
        t = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        delta = 0.7
        pred_ang = ang + delta
        pred = np.stack([np.cos(pred_ang), np.sin(pred_ang)], axis=1)
        valid = np.ones((1, 5, 5))
        base = field_loss(Tensor(pred), t, valid).data.item()
        # rotating both prediction and target leaves the loss unchanged
        rot = 1.2
        t2 = np.stack([np.cos(ang + rot), np.sin(ang + rot)], axis=1)
        pred2 = np.stack([np.cos(pred_ang + rot), np.sin(pred_ang + rot)], axis=1)
        again = field_loss(Tensor(pred2), t2, valid).data.item()
        assert again == pytest.approx(base, rel=1e-10)

    def test_non_unit_target_raises(self):
        t = np.full((1, 2, 2, 2), 0.9)
        with pytest.raises(DataValidationError):
            field_loss(Tensor(np.zeros_like(t)), t, np.ones((1, 2, 2)))


class TestDownsampleLabels:
    def test_nearest_masks_and_unit_fields(self):
        fg = np.zeros((1, 8, 8))
        fg[0, 2:6, 2:6] = 1
        cl = fg * 4
        ang = np.full((1, 8, 8), 0.3)
        fld = np.stack([np.cos(ang), np.sin(ang)], axis=1) * fg[:, None]
        fg_s, cl_s, fld_s = downsample_labels(fg, cl, fld, 2)
        assert fg_s.shape == (1, 4, 4)
        assert set(np.unique(cl_s)) <= {0.0, 4.0}
        norms = np.sqrt((fld_s ** 2).sum(axis=1))
        np.testing.assert_allclose(norms[fg_s > 0], 1.0, atol=1e-6)
        assert (norms[fg_s == 0] == 0).all()

    def test_factor_one_identity(self):
        fg = np.ones((1, 4, 4))
        out = downsample_labels(fg, fg, np.zeros((1, 2, 4, 4)), 1)
        assert out[0] is fg


class TestTotalLoss:
    def _random_case(self, seed, h=6, w=6, k=4):
        rng = np.random.default_rng(seed)
        fgbg_logits = rng.standard_normal((1, 2, h, w))
        class_logits = rng.standard_normal((1, k, h, w))
        field_pred = rng.standard_normal((1, 2, h, w))
        fg = (rng.uniform(size=(1, h, w)) < 0.3).astype(np.int64)
        cl = np.where(fg > 0, rng.integers(1, k + 1, size=(1, h, w)), 0)
        ang = rng.uniform(0, 2 * np.pi, size=(1, h, w))
        fld = np.stack([np.cos(ang), np.sin(ang)], axis=1) * (fg[:, None] > 0)
        return fgbg_logits, class_logits, field_pred, fg, cl, fld

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_naive_single_scale(self, seed):
        fz, cz, fp, fg, cl, fld = self._random_case(seed)
        out = SegOutput(
            fgbg_logits=Tensor(fz), class_logits=Tensor(cz), field=Tensor(fp), aux=[]
        )
        bundle = total_loss(out, fg, cl, fld)
        want_total, want_tau = total_loss_naive(fz, cz, fp, fg, cl, fld)
        assert bundle.total == pytest.approx(want_total, rel=1e-5)
        assert bundle.tau == pytest.approx(want_tau, rel=1e-6)

    def test_aux_scales_sum(self):
        fz, cz, fp, fg, cl, fld = self._random_case(7, h=8, w=8)
        rng = np.random.default_rng(17)
        az = rng.standard_normal((1, 2, 4, 4))
        ac = rng.standard_normal((1, 4, 4, 4))
        af = rng.standard_normal((1, 2, 4, 4))
        full = SegOutput(Tensor(fz), Tensor(cz), Tensor(fp), aux=[])
        aux = SegOutput(
            Tensor(fz), Tensor(cz), Tensor(fp),
            aux=[(2, Tensor(az), Tensor(ac), Tensor(af))],
        )
        fg_s, cl_s, fld_s = downsample_labels(fg, cl, fld, 2)
        aux_alone = SegOutput(Tensor(az), Tensor(ac), Tensor(af), aux=[])
        t_full = total_loss(full, fg, cl, fld).total
        t_aux_alone = total_loss(aux_alone, fg_s, cl_s, fld_s).total
        t_both = total_loss(aux, fg, cl, fld).total
        assert t_both == pytest.approx(t_full + t_aux_alone, rel=1e-6)

    def test_all_background_sample(self):
        rng = np.random.default_rng(5)
        out = SegOutput(
            Tensor(rng.standard_normal((1, 2, 4, 4))),
            Tensor(rng.standard_normal((1, 4, 4, 4))),
            Tensor(rng.standard_normal((1, 2, 4, 4))),
            aux=[],
        )
        fg = np.zeros((1, 4, 4), dtype=np.int64)
        bundle = total_loss(out, fg, fg, np.zeros((1, 2, 4, 4)))
        assert bundle.class_ == 0.0
        assert bundle.field == 0.0
        assert np.isfinite(bundle.total)

    def test_baseline_differs_from_lmp(self):
        fz, cz, fp, fg, cl, fld = self._random_case(11)
        out = SegOutput(Tensor(fz), Tensor(cz), Tensor(fp), aux=[])
        a = total_loss(out, fg, cl, fld, use_lmp=True).fgbg
        b = total_loss(out, fg, cl, fld, use_lmp=False).fgbg
        assert a != b

    def test_label_shape_mismatch_raises(self):
        out = SegOutput(
            Tensor(np.zeros((1, 2, 4, 4))),
            Tensor(np.zeros((1, 4, 4, 4))),
            Tensor(np.zeros((1, 2, 4, 4))),
            aux=[],
        )
        with pytest.raises(ContractViolation):
            total_loss(out, np.zeros((1, 5, 5), dtype=np.int64),
                       np.zeros((1, 5, 5), dtype=np.int64), np.zeros((1, 2, 5, 5)))
