import os
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msformer.data import (
    NormStats,
    Trajectory,
    batch_iter,
    build_test_windows,
    build_train_windows,
    denormalize,
    fit_norm_stats,
    load_cmapss,
    load_csv,
    load_csv_split,
    make_windows,
    normalize,
    regime_key,
    select_features,
    synth_degradation,
    synth_test_set,
)
from msformer.errors import ConfigError, DataError

CMAPSS_DIR = os.environ.get("CMAPSS_DIR")
needs_cmapss = pytest.mark.skipif(not CMAPSS_DIR, reason="set CMAPSS_DIR to the C-MAPSS text files")


def traj(T, d=2, uid=1, start=0.0):
    feats = start + np.arange(T * d, dtype=np.float64).reshape(T, d)
    return Trajectory(unit_id=uid, cycles=np.arange(1, T + 1), features=feats, feature_names=[f"f{i}" for i in range(d)])


def write_cmapss(directory: Path, subset="FD001", units=((1, 5), (2, 4)), test_units=((1, 3),), rul=(7,)):
    rng = np.random.default_rng(0)

    def rows(spec):
        out = []
        for uid, T in spec:
            for c in range(1, T + 1):
                vals = [uid, c, *rng.normal(size=3).round(4), *rng.normal(size=21).round(4)]
                vals[5 + 4] = 518.67  # a constant sensor
                out.append(" ".join(str(v) for v in vals))
        return "\n".join(out) + "\n"

    (directory / f"train_{subset}.txt").write_text(rows(units))
    (directory / f"test_{subset}.txt").write_text(rows(test_units))
    (directory / f"RUL_{subset}.txt").write_text("\n".join(map(str, rul)) + "\n")


# --- parsing --------------------------------------------------------------------


def test_load_cmapss_tiny(tmp_path):
    write_cmapss(tmp_path)
    train, test, rul = load_cmapss(tmp_path, "FD001")
    assert [len(t) for t in train] == [5, 4]
    assert len(test) == 1 and rul == [7.0]
    assert train[0].features.shape == (5, 21) and train[0].settings.shape == (5, 3)
    assert train[0].feature_names[0] == "s1"


def test_empty_file_rejected(tmp_path):
    write_cmapss(tmp_path)
    (tmp_path / "train_FD001.txt").write_text("")
    with pytest.raises(DataError, match="no data rows"):
        load_cmapss(tmp_path)


def test_bad_row_reports_line(tmp_path):
    write_cmapss(tmp_path)
    p = tmp_path / "train_FD001.txt"
    lines = p.read_text().splitlines()
    lines[2] = lines[2] + " 1.0"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match=r"train_FD001.txt:3"):
        load_cmapss(tmp_path)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_cmapss(tmp_path)


def test_rul_count_mismatch(tmp_path):
    write_cmapss(tmp_path, rul=(1, 2))
    with pytest.raises(DataError, match="2 RUL values for 1"):
        load_cmapss(tmp_path)


def test_loader_does_not_touch_input_dir(tmp_path):
    write_cmapss(tmp_path)
    before = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    load_cmapss(tmp_path)
    assert {p.name: p.read_bytes() for p in tmp_path.iterdir()} == before


def test_csv_adapter(tmp_path):
    (tmp_path / "tr.csv").write_text("unit,cycle,a,b\n1,1,0.5,1\n1,2,0.7,2\n2,1,0.1,3\n")
    (tmp_path / "te.csv").write_text("unit,cycle,a,b\n9,1,0.2,1\n")
    train, test, rul = load_csv_split(tmp_path / "tr.csv", tmp_path / "te.csv")
    assert [t.unit_id for t in train] == [1, 2] and train[0].feature_names == ["a", "b"]
    assert rul == [0.0]


def test_csv_bad_header(tmp_path):
    (tmp_path / "x.csv").write_text("id,t,a\n1,1,0\n")
    with pytest.raises(DataError, match="header"):
        load_csv(tmp_path / "x.csv")


def test_noncontiguous_cycles(tmp_path):
    (tmp_path / "x.csv").write_text("unit,cycle,a\n1,1,0\n1,3,0\n")
    with pytest.raises(DataError, match="contiguous"):
        load_csv(tmp_path / "x.csv")


# --- feature selection & normalization -------------------------------------------


def test_constant_column_excluded():
    t = traj(10, 3)
    t.features[:, 1] = 4.0
    assert select_features([t]).tolist() == [True, False, True]


def test_all_varying_identity_mask():
    assert select_features(synth_degradation(0, 3, 5)).all()


def test_normalize_fit_data_is_standard():
    units = synth_degradation(1, 6, 4)
    stats = fit_norm_stats(units)
    z = np.concatenate([t.features for t in normalize(units, stats)])
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-9)


def test_shifted_copy_mean_is_shift_over_std():
    units = synth_degradation(2, 4, 3)
    stats = fit_norm_stats(units)
    shifted = [replace(t, features=t.features + 2.5) for t in units]
    z = np.concatenate([t.features for t in normalize(shifted, stats)])
    np.testing.assert_allclose(z.mean(axis=0), 2.5 / stats.std, atol=1e-9)


def test_masked_feature_never_appears():
    t = traj(12, 3)
    t.features[:, 0] = -1.0
    stats = fit_norm_stats([t])
    out = normalize([t], stats)[0]
    assert out.features.shape[1] == 2 and out.feature_names == ["f1", "f2"]


def test_norm_stats_json_round_trip(tmp_path):
    stats = fit_norm_stats(synth_degradation(0, 3, 4))
    back = NormStats.load(stats.save(tmp_path / "s.json"))
    assert back.mean.tobytes() == stats.mean.tobytes() and back.std.tobytes() == stats.std.tobytes()
    assert back.mask.tolist() == stats.mask.tolist()


def test_condition_norm_per_regime():
    rng = np.random.default_rng(0)
    units = []
    for uid in (1, 2):
        T = 40
        settings = np.where(rng.uniform(size=(T, 1)) < 0.5, [[10.0, 0.25, 100.0]], [[35.0, 0.84, 60.0]])
        feats = rng.normal(size=(T, 2)) + 50.0 * (settings[:, :1] > 20)
        units.append(Trajectory(uid, np.arange(1, T + 1), feats, settings=settings, feature_names=["a", "b"]))
    stats = fit_norm_stats(units, condition_norm=True)
    assert set(stats.regimes) == {regime_key([10, 0.25, 100]), regime_key([35, 0.84, 60])}
    z = normalize(units, stats)
    for key in stats.regimes:
        rows = np.concatenate(
            [t.features[[regime_key(s) == key for s in t.settings]] for t in z]
        )
        np.testing.assert_allclose(rows.mean(axis=0), 0.0, atol=1e-9)
    back = denormalize(z, stats)
    np.testing.assert_allclose(back[0].features, units[0].features, atol=1e-9)


def test_condition_norm_requires_settings():
    with pytest.raises(ConfigError):
        fit_norm_stats([traj(5)], condition_norm=True)


# --- windows --------------------------------------------------------------------


def test_window_count_and_labels():
    w = make_windows(traj(30), 28, 125.0)
    assert len(w) == 3
    assert w.rul.tolist() == [2.0, 1.0, 0.0]
    assert w.end_cycles.tolist() == [28, 29, 30]


def test_early_cycle_capped():
    w = make_windows(traj(200), 10, 125.0)
    assert w.rul[0] == 125.0  # window ending at cycle 10 has 190 cycles left
    assert w.rul[-1] == 0.0


def test_short_training_unit_yields_nothing():
    assert len(make_windows(traj(5), 8)) == 0


def test_short_test_unit_is_padded():
    t = traj(5)
    ws = build_test_windows([t], [40.0], 8, 125.0)
    assert ws.x.shape == (1, 8, 2)
    np.testing.assert_array_equal(ws.x[0, :4], np.repeat(t.features[:1], 4, axis=0))
    np.testing.assert_array_equal(ws.x[0, 3:], t.features)
    assert ws.rul.tolist() == [40.0] and ws.end_cycles.tolist() == [5]


def test_test_label_capped():
    assert build_test_windows([traj(30)], [300.0], 28, 125.0).rul.tolist() == [125.0]


def test_windows_match_slices():
    t = traj(12, 3)
    w = make_windows(t, 5)
    for k in range(len(w)):
        np.testing.assert_array_equal(w.x[k], t.features[k : k + 5])


@given(st.integers(1, 60), st.integers(1, 20))
def test_window_labels_step_down(T, L):
    w = make_windows(traj(T), L, rul_cap=1e9)
    assert len(w) == max(0, T - L + 1)
    if len(w) > 1:
        assert np.all(np.diff(w.rul) == -1.0)


def test_batches_300_by_128():
    ws = build_train_windows([traj(327)], 28, 125.0)
    assert len(ws) == 300
    assert [len(b) for b in batch_iter(ws, 128)] == [128, 128, 44]


def test_no_shuffle_keeps_order():
    ws = build_train_windows([traj(40)], 5, 125.0)
    got = np.concatenate([b.end_cycles for b in batch_iter(ws, 7)])
    np.testing.assert_array_equal(got, ws.end_cycles)


def test_shuffle_same_seed_same_permutation():
    ws = build_train_windows([traj(60)], 5, 125.0)
    a = [b.end_cycles.tolist() for b in batch_iter(ws, 16, shuffle=True, seed=3)]
    b = [b.end_cycles.tolist() for b in batch_iter(ws, 16, shuffle=True, seed=3)]
    assert a == b and sorted(sum(a, [])) == ws.end_cycles.tolist()


def test_batch_size_zero_rejected():
    ws = build_train_windows([traj(10)], 5, 125.0)
    with pytest.raises(ConfigError):
        list(batch_iter(ws, 0))


# --- synthetic ------------------------------------------------------------------


def test_synth_deterministic():
    a, b = synth_degradation(4, 3, 5), synth_degradation(4, 3, 5)
    assert all(x.features.tobytes() == y.features.tobytes() for x, y in zip(a, b))


def test_synth_noise_zero_is_smooth():
    u = synth_degradation(0, 1, 3, noise=0.0)[0]
    # second differences of a smooth signal are tiny compared to the noisy version
    noisy = synth_degradation(0, 1, 3, noise=0.5)[0]
    assert np.abs(np.diff(u.features, 2, axis=0)).max() < 0.2 * np.abs(np.diff(noisy.features, 2, axis=0)).max()
    assert np.array_equal(u.features, synth_degradation(0, 1, 3, noise=0.0)[0].features)


def test_synth_labels_count_down_to_zero():
    u = synth_degradation(5, 1, 2)[0]
    w = make_windows(u, 10, rul_cap=1e9)
    assert w.rul[-1] == 0.0 and np.all(np.diff(w.rul) == -1.0)


def test_synth_test_set_rul():
    full = synth_degradation(9, 4, 2)
    cut, rul = synth_test_set(9, 4, 2)
    for f, c, r in zip(full, cut, rul):
        assert len(c) + r == len(f)


# --- real C-MAPSS (only when the files are available) --------------------------


@needs_cmapss
@pytest.mark.parametrize("subset, n_train, n_test", [("FD001", 100, 100), ("FD004", 248, 249)])
def test_cmapss_unit_counts(subset, n_train, n_test):
    train, test, _ = load_cmapss(CMAPSS_DIR, subset)
    assert (len(train), len(test)) == (n_train, n_test)


@needs_cmapss
def test_fd001_retained_features_by_variance_scan():
    train, _, _ = load_cmapss(CMAPSS_DIR, "FD001")
    stacked = np.concatenate([t.features for t in train])
    brute = sum(1 for k in range(stacked.shape[1]) if np.var(stacked[:, k]) > 1e-12)
    assert select_features(train).sum() == brute
