"""Ablation bookkeeping and a minimal end-to-end run."""

import csv

import pytest

from nailtrace.ablation import AblationResult, AblationRow, SETTINGS, run_ablation
from nailtrace.model import ModelConfig
from nailtrace.train import TrainConfig


def _result(rows):
    return AblationResult(rows=[AblationRow(*r) for r in rows])


class TestTrend:
    def test_monotone_seed_holds(self):
        r = _result([(0, "baseline", 0.5, 0.1), (0, "+lmp", 0.6, 0.2),
                     (0, "+lmp+cascade", 0.7, 0.2)])
        assert r.seed_trend(0)

    def test_violation_detected(self):
        r = _result([(0, "baseline", 0.7, 0.1), (0, "+lmp", 0.6, 0.2),
                     (0, "+lmp+cascade", 0.9, 0.2)])
        assert not r.seed_trend(0)

    def test_majority_two_of_three(self):
        rows = []
        for seed, vals in [(0, (0.5, 0.6, 0.7)), (1, (0.5, 0.4, 0.7)), (2, (0.4, 0.5, 0.6))]:
            rows += [(seed, s, v, 0.0) for s, v in zip(SETTINGS, vals)]
        r = _result(rows)
        assert r.seed_trend(0) and not r.seed_trend(1) and r.seed_trend(2)
        assert r.majority_trend()

    def test_majority_fails_on_one_of_three(self):
        rows = []
        for seed, vals in [(0, (0.5, 0.6, 0.7)), (1, (0.5, 0.4, 0.7)), (2, (0.6, 0.5, 0.6))]:
            rows += [(seed, s, v, 0.0) for s, v in zip(SETTINGS, vals)]
        assert not _result(rows).majority_trend()

    def test_missing_cell_raises(self):
        with pytest.raises(KeyError):
            _result([(0, "baseline", 0.5, 0.1)]).miou(0, "+lmp")


class TestCsv:
    def test_header_and_rows(self, tmp_path):
        r = _result([(0, s, 0.5 + i * 0.1, 0.2) for i, s in enumerate(SETTINGS)])
        path = tmp_path / "ablation.csv"
        r.write_csv(path)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["seed", "setting", "binary_miou", "mean_tau", "trend_ok"]
        assert len(rows) == 4
        assert rows[1][1] == "baseline" and rows[1][4] == "True"


class TestRun:
    def test_tiny_budget_produces_grid(self, small_dataset):
        mc = ModelConfig(input_size=(48, 48), width_multiplier=0.25)
        hp = TrainConfig(epochs=1, batch_size=4, crop=48, max_train=4, max_val=2)
        result = run_ablation(small_dataset, mc, hp, seeds=(0,))
        assert [r.setting for r in result.rows] == list(SETTINGS)
        assert all(0.0 <= r.binary_miou <= 1.0 for r in result.rows)
        # the baseline does not use hardest-pixel pooling, so records no tau
        assert result.rows[0].mean_tau == 0.0
        assert result.rows[1].mean_tau > 0.0
