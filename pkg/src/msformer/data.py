"""C-MAPSS / CSV ingestion, normalization, sliding windows and synthetic fixtures."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, DataError

CMAPSS_COLUMNS = 26
SENSOR_NAMES = [f"s{i}" for i in range(1, 22)]
SETTING_NAMES = ["setting1", "setting2", "setting3"]
# op-setting rounding that collapses the six FD002/FD004 regimes onto exact keys
REGIME_DECIMALS = (0, 2, 0)


@dataclass
class Trajectory:
    unit_id: int
    cycles: np.ndarray
    features: np.ndarray
    settings: np.ndarray | None = None
    subset: str = ""
    feature_names: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.cycles)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass
class WindowSet:
    """Stacked windows ``x`` [M, L, D] with labels and per-window provenance."""

    x: np.ndarray
    rul: np.ndarray
    unit_ids: np.ndarray
    end_cycles: np.ndarray

    def __len__(self) -> int:
        return len(self.rul)

    def __getitem__(self, idx):
        return WindowSet(self.x[idx], self.rul[idx], self.unit_ids[idx], self.end_cycles[idx])

    @classmethod
    def concat(cls, parts: Sequence["WindowSet"], window_len: int, n_features: int) -> "WindowSet":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls(
                np.zeros((0, window_len, n_features)), np.zeros(0), np.zeros(0, np.int64), np.zeros(0, np.int64)
            )
        return cls(
            np.concatenate([p.x for p in parts]),
            np.concatenate([p.rul for p in parts]),
            np.concatenate([p.unit_ids for p in parts]),
            np.concatenate([p.end_cycles for p in parts]),
        )


# WindowSet doubles as the batch record
WindowBatch = WindowSet


# --- parsing -----------------------------------------------------------------


def _read_rows(path: Path, ncols: int | None) -> np.ndarray:
    if not path.is_file():
        raise FileNotFoundError(f"missing data file: {path}")
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if ncols is not None and len(parts) != ncols:
                raise DataError(f"{path}:{lineno}: expected {ncols} columns, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.asarray(rows)


def _group_units(
    table: np.ndarray, path: Path, subset: str, names: list[str], settings_cols: slice | None, feat_cols: slice
) -> list[Trajectory]:
    units: dict[int, list[int]] = {}
    for r, uid in enumerate(table[:, 0].astype(np.int64)):
        units.setdefault(int(uid), []).append(r)
    out = []
    for uid, rows in units.items():
        block = table[rows]
        block = block[np.argsort(block[:, 1], kind="stable")]
        cycles = block[:, 1].astype(np.int64)
        if cycles[0] != 1 or np.any(np.diff(cycles) != 1):
            raise DataError(f"{path}: unit {uid} cycles are not contiguous from 1")
        out.append(
            Trajectory(
                unit_id=uid,
                cycles=cycles,
                features=block[:, feat_cols].copy(),
                settings=None if settings_cols is None else block[:, settings_cols].copy(),
                subset=subset,
                feature_names=list(names),
            )
        )
    return out


def _read_rul(path: Path, n_units: int) -> list[float]:
    rul = _read_rows(path, 1)[:, 0]
    if len(rul) != n_units:
        raise DataError(f"{path}: {len(rul)} RUL values for {n_units} test units")
    return [float(v) for v in rul]


def load_cmapss(directory, subset: str = "FD001"):
    """Read ``train_/test_/RUL_<subset>.txt``; returns (train, test, test_rul)."""
    d = Path(directory)
    tables = {}
    for kind in ("train", "test"):
        p = d / f"{kind}_{subset}.txt"
        tables[kind] = _group_units(
            _read_rows(p, CMAPSS_COLUMNS), p, subset, SENSOR_NAMES, slice(2, 5), slice(5, 26)
        )
    test_rul = _read_rul(d / f"RUL_{subset}.txt", len(tables["test"]))
    return tables["train"], tables["test"], test_rul


def load_csv(path, subset: str = "csv") -> list[Trajectory]:
    """Generic adapter: header ``unit,cycle,f1..fk``; one row per cycle."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"missing data file: {p}")
    with open(p, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{p}: empty file")
        header = [h.strip() for h in header]
        if len(header) < 3 or header[0].lower() != "unit" or header[1].lower() != "cycle":
            raise DataError(f"{p}:1: header must start with unit,cycle and name >= 1 feature")
        rows = []
        for lineno, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{p}:{lineno}: expected {len(header)} columns, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise DataError(f"{p}:{lineno}: {exc}") from exc
    if not rows:
        raise DataError(f"{p}: no data rows")
    return _group_units(np.asarray(rows), p, subset, header[2:], None, slice(2, len(header)))


def load_csv_split(train_path, test_path, test_rul_path=""):
    """CSV train/test pair. Without a RUL file, test units are taken as run to failure."""
    train = load_csv(train_path)
    test = load_csv(test_path)
    if test_rul_path:
        test_rul = _read_rul(Path(test_rul_path), len(test))
    else:
        test_rul = [0.0] * len(test)
    return train, test, test_rul


# --- feature selection and normalization -------------------------------------


def select_features(train: Sequence[Trajectory], threshold: float = 1e-12) -> np.ndarray:
    if not train:
        raise ConfigError("select_features: empty training set")
    stacked = np.concatenate([t.features for t in train])
    mask = stacked.var(axis=0) > threshold
    if not mask.any():
        raise ConfigError("select_features: every feature has (near) zero variance")
    return mask


def regime_key(setting_row, decimals=REGIME_DECIMALS) -> str:
    return "|".join(f"{round(float(v), d) + 0.0:.{d}f}" for v, d in zip(setting_row, decimals))


@dataclass
class NormStats:
    mask: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    feature_names: list[str] = field(default_factory=list)
    regimes: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @property
    def n_retained(self) -> int:
        return int(self.mask.sum())

    def to_json(self) -> str:
        payload = {
            "mask": [bool(m) for m in self.mask],
            "feature_names": self.feature_names,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "regimes": {k: {"mean": m.tolist(), "std": s.tolist()} for k, (m, s) in self.regimes.items()},
        }
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "NormStats":
        d = json.loads(text)
        return cls(
            mask=np.asarray(d["mask"], dtype=bool),
            mean=np.asarray(d["mean"], dtype=np.float64),
            std=np.asarray(d["std"], dtype=np.float64),
            feature_names=list(d.get("feature_names", [])),
            regimes={k: (np.asarray(v["mean"]), np.asarray(v["std"])) for k, v in d.get("regimes", {}).items()},
        )

    def save(self, path) -> Path:
        p = Path(path)
        p.write_text(self.to_json())
        return p

    @classmethod
    def load(cls, path) -> "NormStats":
        return cls.from_json(Path(path).read_text())


def _safe_std(x: np.ndarray) -> np.ndarray:
    s = x.std(axis=0)
    return np.where(s > 1e-12, s, 1.0)


def fit_norm_stats(
    train: Sequence[Trajectory], mask: np.ndarray | None = None, condition_norm: bool = False
) -> NormStats:
    """Per-feature z-score statistics from the training split only."""
    if mask is None:
        mask = select_features(train)
    stacked = np.concatenate([t.features for t in train])[:, mask]
    names = [n for n, m in zip(train[0].feature_names, mask) if m] if train[0].feature_names else []
    stats = NormStats(mask=mask, mean=stacked.mean(axis=0), std=_safe_std(stacked), feature_names=names)
    if condition_norm:
        if any(t.settings is None for t in train):
            raise ConfigError("condition_norm needs operating settings (C-MAPSS data)")
        keys = np.array([regime_key(r) for t in train for r in t.settings])
        for k in np.unique(keys):
            rows = stacked[keys == k]
            stats.regimes[str(k)] = (rows.mean(axis=0), _safe_std(rows))
    return stats


def _row_stats(traj: Trajectory, stats: NormStats) -> tuple[np.ndarray, np.ndarray]:
    if not stats.regimes:
        return stats.mean, stats.std
    means = np.empty((len(traj), stats.n_retained))
    stds = np.empty_like(means)
    for r, setting in enumerate(traj.settings):
        # unseen regime falls back to the global statistics
        m, s = stats.regimes.get(regime_key(setting), (stats.mean, stats.std))
        means[r], stds[r] = m, s
    return means, stds


def normalize(trajectories: Sequence[Trajectory], stats: NormStats) -> list[Trajectory]:
    out = []
    for t in trajectories:
        mean, std = _row_stats(t, stats)
        out.append(
            replace(
                t,
                features=(t.features[:, stats.mask] - mean) / std,
                feature_names=list(stats.feature_names),
            )
        )
    return out


def denormalize(trajectories: Sequence[Trajectory], stats: NormStats) -> list[Trajectory]:
    """Inverse of ``normalize`` on the retained features."""
    out = []
    for t in trajectories:
        mean, std = _row_stats(t, stats)
        out.append(replace(t, features=t.features * std + mean))
    return out


# --- windows -----------------------------------------------------------------


def make_windows(
    traj: Trajectory,
    window_len: int,
    rul_cap: float = 125.0,
    final_rul: float = 0.0,
    pad: bool = False,
    last_only: bool = False,
) -> WindowSet:
    """Stride-1 windows ending at every cycle t in [L, T].

    Label is ``min(T_fail - t, rul_cap)`` with ``T_fail = last cycle + final_rul``.
    With ``pad`` a trajectory shorter than L is left-padded by repeating its
    first cycle (test-time protocol).
    """
    feats, cycles = traj.features, traj.cycles
    short = len(traj) < window_len
    if short and pad:
        fill = window_len - len(traj)
        feats = np.concatenate([np.repeat(feats[:1], fill, axis=0), feats])
        cycles = np.concatenate([np.full(fill, cycles[0]), cycles])
    n = len(cycles) - window_len + 1
    d = feats.shape[1]
    if n <= 0:
        return WindowSet(np.zeros((0, window_len, d)), np.zeros(0), np.zeros(0, np.int64), np.zeros(0, np.int64))
    starts = np.arange(n - 1, n) if last_only else np.arange(n)
    x = np.stack([feats[s : s + window_len] for s in starts])
    end = cycles[starts + window_len - 1].astype(np.int64)
    t_fail = float(traj.cycles[-1]) + final_rul
    rul = np.minimum(t_fail - end, rul_cap).astype(np.float64)
    return WindowSet(x, rul, np.full(len(starts), traj.unit_id, dtype=np.int64), end)


def build_train_windows(trajs: Sequence[Trajectory], window_len: int, rul_cap: float) -> WindowSet:
    d = trajs[0].n_features if trajs else 0
    return WindowSet.concat([make_windows(t, window_len, rul_cap) for t in trajs], window_len, d)


def build_test_windows(
    trajs: Sequence[Trajectory], test_rul: Sequence[float], window_len: int, rul_cap: float
) -> WindowSet:
    """Last window per unit, labelled with the capped ground-truth RUL."""
    if len(trajs) != len(test_rul):
        raise DataError(f"{len(trajs)} test units but {len(test_rul)} RUL values")
    d = trajs[0].n_features if trajs else 0
    parts = [
        make_windows(t, window_len, rul_cap, final_rul=r, pad=True, last_only=True) for t, r in zip(trajs, test_rul)
    ]
    return WindowSet.concat(parts, window_len, d)


def batch_iter(windows: WindowSet, batch_size: int, shuffle: bool = False, seed: int = 0) -> Iterator[WindowSet]:
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    order = np.random.default_rng(seed).permutation(len(windows)) if shuffle else np.arange(len(windows))
    for start in range(0, len(order), batch_size):
        yield windows[order[start : start + batch_size]]


# --- synthetic fixtures ------------------------------------------------------


def synth_degradation(
    seed: int,
    n_units: int,
    n_features: int,
    noise: float = 0.1,
    min_len: int = 60,
    max_len: int = 200,
) -> list[Trajectory]:
    """Run-to-failure units: monotone wear + a periodic term at a random scale + noise."""
    if n_units < 1:
        raise ConfigError("synth_degradation: n_units must be >= 1")
    rng = np.random.default_rng(seed)
    units = []
    for uid in range(1, n_units + 1):
        T = int(rng.integers(min_len, max_len + 1))
        t = np.arange(1, T + 1, dtype=np.float64)
        power = rng.uniform(1.5, 3.0)
        wear = (t / T) ** power
        gain = rng.uniform(0.5, 2.0, n_features) * rng.choice([-1.0, 1.0], n_features)
        offset = rng.normal(0.0, 1.0, n_features)
        period = rng.uniform(4.0, 32.0, n_features)
        phase = rng.uniform(0.0, 2 * np.pi, n_features)
        amp = rng.uniform(0.05, 0.3, n_features)
        feats = offset + wear[:, None] * gain + amp * np.sin(2 * np.pi * t[:, None] / period + phase)
        if noise > 0:
            feats = feats + noise * rng.normal(size=feats.shape)
        units.append(
            Trajectory(
                unit_id=uid,
                cycles=np.arange(1, T + 1, dtype=np.int64),
                features=feats,
                subset="synthetic",
                feature_names=[f"f{k}" for k in range(1, n_features + 1)],
            )
        )
    return units


def synth_test_set(
    seed: int, n_units: int, n_features: int, noise: float = 0.1, min_keep: int = 30
) -> tuple[list[Trajectory], list[float]]:
    """Truncated synthetic units and their true remaining life."""
    full = synth_degradation(seed, n_units, n_features, noise)
    rng = np.random.default_rng(seed + 7919)
    cut, rul = [], []
    for t in full:
        keep = int(rng.integers(min(min_keep, len(t)), len(t) + 1))
        cut.append(replace(t, cycles=t.cycles[:keep], features=t.features[:keep]))
        rul.append(float(len(t) - keep))
    return cut, rul
