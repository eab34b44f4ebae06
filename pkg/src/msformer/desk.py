"""Dataset-scale runs on C-MAPSS FD001 shared by the scripts and acceptance tests."""

from __future__ import annotations

import dataclasses
import os
from pathlib import Path

import numpy as np

from .config import DataConfig, ModelConfig, RunSpec, TrainConfig
from .harness import RunReport, load_dataset, train
from .model import MsFormer

DESK_EPOCHS = 40
DESK_RMSE, DESK_SCORE = 16.0, 600.0
EXTENDED_EPOCHS, EXTENDED_RMSE = 300, 13.0
DIRECTION_SEEDS = (0, 1, 2)

# variants of one study share the loaded, normalized windows
_DATASETS: dict = {}


def fd001_spec(cmapss_dir, epochs: int = DESK_EPOCHS, seed: int = 0, **model_kw) -> RunSpec:
    return RunSpec(
        data=DataConfig(kind="cmapss", path=str(cmapss_dir), subset="FD001"),
        model=ModelConfig(**model_kw),
        train=TrainConfig(epochs=epochs, seed=seed),
    )


def run_spec(spec: RunSpec) -> RunReport:
    key = (spec.data.path, spec.data.subset, spec.model.window_len, spec.data.rul_cap)
    if key not in _DATASETS:
        _DATASETS[key] = load_dataset(spec.data, spec.model.window_len)
    ds = _DATASETS[key]
    mcfg = dataclasses.replace(spec.model, input_dim=ds.stats.n_retained)
    model = MsFormer(mcfg, seed=spec.train.seed)
    return train(model, ds.train, spec.train, ds.test, fingerprint=spec.fingerprint())


def direction_study(cmapss_dir, epochs: int = DESK_EPOCHS, seeds=DIRECTION_SEEDS) -> dict[str, dict[str, float]]:
    """Mean RMSE / Score over seeds for the default, fixed-4 and no-RPE variants."""
    variants = {
        "default": {},
        "fixed-4": {"lambda_schedule": (4, 4, 4, 1)},
        "rpe-off": {"rpe_mode": "off"},
    }
    out = {}
    for name, kw in variants.items():
        reps = [run_spec(fd001_spec(cmapss_dir, epochs, s, **kw)) for s in seeds]
        out[name] = {"rmse": float(np.mean([r.rmse for r in reps])), "score": float(np.mean([r.score for r in reps]))}
    return out


def default_dir() -> Path | None:
    d = os.environ.get("CMAPSS_DIR")
    return Path(d) if d else None
