"""RUL evaluation metrics: RMSE, MAE and the asymmetric prognostics score."""

from __future__ import annotations

import numpy as np

from .errors import ContractError

EARLY_SCALE = 13.0
LATE_SCALE = 10.0


def _pair(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    y_hat = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    if y.shape != y_hat.shape:
        raise ContractError(f"metric inputs differ in length: {y.size} vs {y_hat.size}")
    if y.size == 0:
        raise ContractError("metric inputs are empty")
    return y, y_hat


def rmse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def score_terms(y, y_hat) -> np.ndarray:
    y, y_hat = _pair(y, y_hat)
    d = y_hat - y
    # late predictions (d >= 0) are penalized harder
    return np.where(d < 0, np.expm1(-d / EARLY_SCALE), np.expm1(d / LATE_SCALE))


def score(y, y_hat, reduction: str = "sum") -> float:
    terms = score_terms(y, y_hat)
    if reduction == "sum":
        return float(terms.sum())
    if reduction == "mean":
        return float(terms.mean())
    raise ContractError(f"unknown score reduction {reduction!r}")
