"""Ablation harness: weighted-CE baseline vs +LMP vs +LMP+cascade.

All three settings share the seed (identical data order and crops) and
an equal training budget; only the objective and architecture differ.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import Manifest
from .model import ModelConfig
from .train import TrainConfig, train

SETTINGS = ("baseline", "+lmp", "+lmp+cascade")


@dataclass
class AblationRow:
    seed: int
    setting: str
    binary_miou: float
    mean_tau: float


@dataclass
class AblationResult:
    rows: list[AblationRow] = field(default_factory=list)

    def miou(self, seed: int, setting: str) -> float:
        for r in self.rows:
            if r.seed == seed and r.setting == setting:
                return r.binary_miou
        raise KeyError((seed, setting))

    def seed_trend(self, seed: int) -> bool:
        vals = [self.miou(seed, s) for s in SETTINGS]
        return vals[0] <= vals[1] <= vals[2]

    @property
    def seeds(self) -> list[int]:
        return sorted({r.seed for r in self.rows})

    def majority_trend(self) -> bool:
        ok = sum(self.seed_trend(s) for s in self.seeds)
        return ok * 2 > len(self.seeds)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["seed", "setting", "binary_miou", "mean_tau", "trend_ok"])
            for r in self.rows:
                writer.writerow(
                    [r.seed, r.setting, f"{r.binary_miou:.4f}", f"{r.mean_tau:.4f}",
                     self.seed_trend(r.seed)]
                )


def _setting_config(setting: str, base_model: ModelConfig, base_hp: TrainConfig):
    if setting == "baseline":
        return replace(base_model, cascade_enabled=False), replace(base_hp, use_lmp=False)
    if setting == "+lmp":
        return replace(base_model, cascade_enabled=False), replace(base_hp, use_lmp=True)
    if setting == "+lmp+cascade":
        return replace(base_model, cascade_enabled=True), replace(base_hp, use_lmp=True)
    raise ValueError(setting)


def run_ablation(
    manifest: Manifest,
    model_config: ModelConfig,
    hp: TrainConfig,
    seeds: tuple[int, ...] = (0, 1, 2),
) -> AblationResult:
    result = AblationResult()
    for seed in seeds:
        for setting in SETTINGS:
            mc, shp = _setting_config(setting, model_config, hp)
            shp = replace(shp, seed=seed)
            _, tr = train(mc, manifest, shp)
            taus = [rec["tau"] for rec in tr.log if rec["tau"] > 0]
            result.rows.append(
                AblationRow(
                    seed=seed,
                    setting=setting,
                    binary_miou=tr.best_miou,
                    mean_tau=float(np.mean(taus)) if taus else 0.0,
                )
            )
    return result
