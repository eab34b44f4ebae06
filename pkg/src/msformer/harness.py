"""Training loop, evaluation and run reports."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .checkpoint import save_params
from .config import DataConfig, TrainConfig
from .data import (
    NormStats,
    WindowSet,
    batch_iter,
    build_test_windows,
    build_train_windows,
    fit_norm_stats,
    load_cmapss,
    load_csv_split,
    normalize,
    synth_degradation,
    synth_test_set,
)
from .errors import NonFiniteError
from .metrics import mae, rmse, score
from .optim import AdamState, adam_step, zero_grad

log = logging.getLogger(__name__)

PREDICTIONS_HEADER = ["unit_id", "end_cycle", "true_rul", "pred_rul"]


@dataclass
class RunReport:
    train_loss: list[float] = field(default_factory=list)
    rmse: float = float("nan")
    mae: float = float("nan")
    score: float = float("nan")
    predictions: list[tuple[int, int, float, float]] = field(default_factory=list)
    fingerprint: str = ""
    seconds: float = 0.0
    eval_history: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    score_reduction: str = "sum"

    def metrics(self) -> dict:
        return {"rmse": self.rmse, "mae": self.mae, "score": self.score}

    def recompute(self) -> dict:
        y = [p[2] for p in self.predictions]
        y_hat = [p[3] for p in self.predictions]
        return {"rmse": rmse(y, y_hat), "mae": mae(y, y_hat), "score": score(y, y_hat, self.score_reduction)}

    def to_dict(self) -> dict:
        return {
            **self.metrics(),
            "score_reduction": self.score_reduction,
            "n_units": len(self.predictions),
            "train_loss": self.train_loss,
            "eval_history": self.eval_history,
            "best_epoch": self.best_epoch,
            "fingerprint": self.fingerprint,
            "seconds": self.seconds,
        }

    def write(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "metrics.json").write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        write_predictions(self.predictions, d / "predictions.csv")


def write_predictions(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PREDICTIONS_HEADER)
        for uid, cyc, y, y_hat in rows:
            w.writerow([int(uid), int(cyc), repr(float(y)), repr(float(y_hat))])


def read_predictions(path) -> list[tuple[int, int, float, float]]:
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        return [(int(row["unit_id"]), int(row["end_cycle"]), float(row["true_rul"]), float(row["pred_rul"])) for row in r]


# --- data wiring -------------------------------------------------------------


@dataclass
class Dataset:
    train: WindowSet
    test: WindowSet
    stats: NormStats


def load_dataset(dcfg: DataConfig, window_len: int, stats: NormStats | None = None) -> Dataset:
    """Load, normalize (training-split statistics) and window a dataset."""
    if dcfg.kind == "cmapss":
        train, test, test_rul = load_cmapss(dcfg.path, dcfg.subset)
    elif dcfg.kind == "csv":
        train, test, test_rul = load_csv_split(dcfg.path, dcfg.test_path, dcfg.test_rul_path)
    else:
        train = synth_degradation(dcfg.data_seed, dcfg.n_units, dcfg.n_features, dcfg.noise)
        test, test_rul = synth_test_set(dcfg.data_seed + 1_000_003, dcfg.n_test_units, dcfg.n_features, dcfg.noise)
    if stats is None:
        stats = fit_norm_stats(train, condition_norm=dcfg.condition_norm)
    train_n, test_n = normalize(train, stats), normalize(test, stats)
    return Dataset(
        train=build_train_windows(train_n, window_len, dcfg.rul_cap),
        test=build_test_windows(test_n, test_rul, window_len, dcfg.rul_cap),
        stats=stats,
    )


# --- evaluation and training -------------------------------------------------


def evaluate(model, test_windows: WindowSet, reduction: str = "sum") -> RunReport:
    """Score one window per unit (callers pass last-window test sets)."""
    pred = np.asarray(model.predict(test_windows.x), dtype=np.float64)
    y = test_windows.rul
    rows = [
        (int(u), int(c), float(t), float(p))
        for u, c, t, p in zip(test_windows.unit_ids, test_windows.end_cycles, y, pred)
    ]
    return RunReport(
        rmse=rmse(y, pred), mae=mae(y, pred), score=score(y, pred, reduction),
        predictions=rows, score_reduction=reduction,
    )


def train(
    model,
    train_windows: WindowSet,
    cfg: TrainConfig,
    test_windows: WindowSet | None = None,
    fingerprint: str = "",
) -> RunReport:
    """Adam on MSE of RUL / rul_cap; per-epoch loss is reported in cycles^2."""
    if len(train_windows) == 0:
        raise ValueError("train: no training windows")
    t0 = time.perf_counter()
    cap = model.cfg.rul_cap
    params = model.parameters()
    state = AdamState(lr=cfg.lr)
    report = RunReport(fingerprint=fingerprint, score_reduction=cfg.score_reduction)
    best_rmse, best_state = float("inf"), None
    model.train()
    for epoch in range(1, cfg.epochs + 1):
        total, seen = 0.0, 0
        batches = batch_iter(train_windows, cfg.batch_size, shuffle=True, seed=cfg.seed * 100_003 + epoch)
        for b, batch in enumerate(batches):
            zero_grad(params)
            loss = ad.mse(model(batch.x), batch.rul / cap)
            if not np.isfinite(loss.data):
                raise NonFiniteError(f"non-finite loss at epoch {epoch}, batch {b}")
            ad.backward(loss)
            adam_step(params, state)
            total += float(loss.data) * len(batch)
            seen += len(batch)
        report.train_loss.append(total / seen * cap * cap)
        if cfg.eval_every and test_windows is not None and len(test_windows) and epoch % cfg.eval_every == 0:
            ev = evaluate(model, test_windows, cfg.score_reduction)
            model.train()
            report.eval_history.append({"epoch": epoch, **ev.metrics()})
            log.info("epoch %d loss %.3f test rmse %.3f score %.2f", epoch, report.train_loss[-1], ev.rmse, ev.score)
            if ev.rmse < best_rmse:
                best_rmse, report.best_epoch = ev.rmse, epoch
                best_state = model.state_dict()
                if cfg.checkpoint_dir:
                    save_params(Path(cfg.checkpoint_dir) / "best", best_state)
        else:
            log.info("epoch %d loss %.3f", epoch, report.train_loss[-1])
    if cfg.keep_best and best_state is not None:
        model.load_state_dict(best_state)
    if test_windows is not None and len(test_windows):
        ev = evaluate(model, test_windows, cfg.score_reduction)
        report.rmse, report.mae, report.score, report.predictions = ev.rmse, ev.mae, ev.score, ev.predictions
    model.eval()
    report.seconds = time.perf_counter() - t0
    return report


def summarize(reports: Sequence[RunReport]) -> dict:
    """mean / std over seeds."""
    out = {}
    for key in ("rmse", "mae", "score"):
        vals = np.array([getattr(r, key) for r in reports])
        out[key] = {"mean": float(vals.mean()), "std": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0}
    out["n"] = len(reports)
    return out
