"""Dataset-free property suite behind ``msformer selfcheck``.

Each check returns a ``CheckResult``; a failing check names the op or
invariant that broke. The oracles here (finite differences, brute-force
enumeration, Decimal recomputation) never call the code path they verify.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal, localcontext
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ModelConfig, TrainConfig
from .data import build_train_windows, fit_norm_stats, normalize, synth_degradation
from .gradcheck import check_gradients
from .harness import train
from .metrics import mae, rmse, score
from .model import (
    Block,
    Linear,
    MsFormer,
    PoolingMixer,
    RelPosAttention,
    count_params,
    ms_sample,
    relpos_index_matrix,
    window_reverse,
)

GRAD_TOL = 1e-4
METRIC_TOL = 1e-9
BATCH_TOL = 1e-9
OVERFIT_MSE = 1.0
OVERFIT_STEPS = 500
PARAM_RANGE = (400_000, 1_000_000)
REFERENCE_PARAMS = 660_000
# sensor count the default C-MAPSS pipeline typically retains
DEFAULT_INPUT_DIM = 14


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failed invariant, reported by name
        ok, detail = False, f"raised {type(exc).__name__}: {exc}"
    return CheckResult(name, ok, detail, time.perf_counter() - t0)


def tiny_config(**kw) -> ModelConfig:
    base = dict(window_len=8, input_dim=3, embed_dim=8, heads=2, lambda_schedule=(2, 2, 2, 1), c1=2, c2=4)
    base.update(kw)
    return ModelConfig(**base)


# --- 1. gradient fidelity ------------------------------------------------------


def _leaf(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def _op_cases(rng) -> dict[str, tuple[Callable[[], Tensor], list[Tensor]]]:
    cases = {}
    a, b = _leaf(rng, 2, 3, 4), _leaf(rng, 4, 5)
    wa = rng.normal(size=(2, 3, 5))
    cases["matmul"] = (lambda: (ad.matmul(a, b) * wa).sum(), [a, b])
    x = _leaf(rng, 3, 4, 5)
    wx = rng.normal(size=(3, 4, 5))
    cases["softmax"] = (lambda: (ad.softmax(x, -1) * wx).sum(), [x])
    g, be = _leaf(rng, 5), _leaf(rng, 5)
    cases["layer_norm"] = (lambda: (ad.layer_norm(x, g, be) * wx).sum(), [x, g, be])
    cases["avg_pool1d"] = (lambda: (ad.avg_pool1d(x, 3, axis=1) * wx).sum(), [x])
    cases["gelu"] = (lambda: (ad.gelu(x) * wx).sum(), [x])
    idx = np.array([3, 0, 3, 1])
    wg = rng.normal(size=(3, 4, 5))
    cases["gather"] = (lambda: (ad.gather(x, idx, axis=1) * wg).sum(), [x])
    y = _leaf(rng, 3, 2, 5)
    wc = rng.normal(size=(3, 6, 5))
    cases["concat"] = (lambda: (ad.concat([x, y], axis=1) * wc).sum(), [x, y])
    wm = rng.normal(size=(3, 5))
    cases["mean"] = (lambda: (x.mean(axis=1) * wm).sum(), [x])
    t = rng.normal(size=(3, 4, 5))
    cases["mse"] = (lambda: ad.mse(x, t), [x])
    d = Tensor(rng.uniform(1.0, 2.0, size=(4, 5)), requires_grad=True)
    cases["add/sub/mul/div"] = (lambda: (((x + d) * d - x) / d * wx).sum(), [x, d])
    wt = rng.normal(size=(5, 3, 4))
    cases["reshape/transpose"] = (lambda: (x.reshape(4, 3, 5).transpose(2, 1, 0).reshape(5, 3, 4) * wt).sum(), [x])
    return cases


def _params_fd(fn: Callable[[], Tensor], params) -> float:
    errs = check_gradients(fn, params)
    return max(errs.values()) if errs else 0.0


def _component_cases(rng) -> dict[str, tuple[Callable[[], Tensor], list[Tensor]]]:
    cases = {}
    cfg = tiny_config()
    emb = Linear(3, 8, rng)
    xe = Tensor(rng.normal(size=(2, 8, 3)), requires_grad=True)
    we = rng.normal(size=(2, 8, 8))
    cases["input_embed"] = (lambda: (emb(xe) * we).sum(), [xe, *emb.parameters()])

    la = Block(PoolingMixer(8, 3), 8, 16, rng)
    x7 = Tensor(rng.normal(size=(2, 7, 8)), requires_grad=True)
    w7 = rng.normal(size=(2, 7, 8))
    cases["la_block"] = (lambda: (la(x7) * w7).sum(), [x7, *la.parameters()])

    att = RelPosAttention(tiny_config(c1=2, c2=4), lam=1, rng=rng)
    cases["rpe_attention"] = (lambda: (att(x7) * w7).sum(), [x7, *att.parameters()])

    att_s = RelPosAttention(cfg, lam=2, rng=rng)
    wb = rng.normal(size=(2, 7, 7))
    cases["relpos_bias_scatter"] = (lambda: (att_s.position_bias(7) * wb).sum(), [att_s.rel_bias])

    tokens = Tensor(rng.normal(size=(2, 8, 8)), requires_grad=True)
    wt = rng.normal(size=(2, 8, 8))
    cases["ms_sample/window_reverse"] = (
        lambda: (window_reverse(ms_sample(tokens, 4)) * wt + ms_sample(tokens, 2).tokens.sum()).sum(),
        [tokens],
    )
    return cases


def check_gradient_fidelity(seed: int = 0, tol: float = GRAD_TOL) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        worst, failures = 0.0, []
        for group in (_op_cases(rng), _component_cases(rng)):
            for name, (fn, inputs) in group.items():
                err = _params_fd(fn, inputs)
                worst = max(worst, err)
                if not err < tol:
                    failures.append(f"{name} (rel-err {err:.2e})")
        model = MsFormer(tiny_config(), seed=seed)
        x = rng.normal(size=(2, 8, 3))
        r = rng.normal(size=2)
        err = _params_fd(lambda: (model(x) * r).sum(), model.parameters())
        worst = max(worst, err)
        if not err < tol:
            failures.append(f"full model (rel-err {err:.2e})")
        if failures:
            return False, "gradient mismatch in " + ", ".join(failures)
        return True, f"all ops + tiny model ({count_params(model)} params) max rel-err {worst:.2e} < {tol:g}"

    return _timed("gradient fidelity", run)


# --- 2. MS / WR round trip -----------------------------------------------------


def check_ms_round_trip(L: int = 28) -> CheckResult:
    def run():
        rng = np.random.default_rng(0)
        x = rng.normal(size=(3, L, 5))
        divisors = [d for d in range(1, L + 1) if L % d == 0]
        for lam in divisors:
            back = window_reverse(ms_sample(Tensor(x), lam)).data
            if back.tobytes() != x.tobytes():
                return False, f"round trip not bitwise identical at lambda={lam}"
            s = ms_sample(Tensor(x), lam).tokens.data
            for i in range(lam):
                for n in range(3):
                    if not np.array_equal(s[i * 3 + n], x[n, i::lam]):
                        return False, f"sub-sequence {i} of sample {n} wrong at lambda={lam}"
        return True, f"bitwise identity for lambda in {divisors}"

    return _timed("MS/WR round trip", run)


# --- 3. relative position index ------------------------------------------------

def oracle_bucket(i: int, j: int, lam: int, c1: int, c2: int, log_range: int, mode: str) -> int:
    """Direct evaluation of the piecewise index rule in 50-digit decimal arithmetic."""
    with localcontext() as ctx:
        ctx.prec = 50
        return _oracle_bucket(i, j, lam, c1, c2, log_range, mode)


def _oracle_bucket(i, j, lam, c1, c2, log_range, mode) -> int:
    a = (i - j) * lam
    A = abs(a)
    if A < c1:
        mag = A
    else:
        in_log = A < c2 if mode == "literal" else A < log_range
        if in_log:
            v = Decimal(c1) + Decimal(c1) * (Decimal(A) / Decimal(c1)).ln() / (Decimal(log_range) / Decimal(c1)).ln()
            mag = int(v.quantize(Decimal(1), rounding=ROUND_HALF_UP))
            if mode == "continuous":
                mag = min(mag, c2)
        else:
            mag = c2
    return mag + c2 if a >= 0 else mag


def check_relpos_index(c1: int = 8, c2: int = 16, log_range: int = 128) -> CheckResult:
    def run():
        n = 0
        for mode in ("literal", "continuous"):
            for W in (7, 14, 28):
                for lam in (1, 2, 4):
                    got = relpos_index_matrix(W, lam, c1, c2, log_range, mode)
                    for i in range(W):
                        for j in range(W):
                            if got[i, j] != oracle_bucket(i, j, lam, c1, c2, log_range, mode):
                                return False, f"bucket mismatch mode={mode} W={W} lambda={lam} (i,j)=({i},{j})"
                            n += 1
                    if not (got.min() >= 0 and got.max() <= 2 * c2):
                        return False, f"index out of [0, {2 * c2}]"
                    if np.any(np.diag(got) != c2):
                        return False, "zero offset does not map to c2"
            # magnitude: symmetric, nondecreasing, bounded
            mags = []
            for A in range(0, 200):
                pos = relpos_index_matrix(A + 1, 1, c1, c2, log_range, mode)[A, 0] - c2
                neg = relpos_index_matrix(A + 1, 1, c1, c2, log_range, mode)[0, A] if A else 0
                if A and pos != neg:
                    return False, f"|p| asymmetric at |a|={A} ({mode})"
                mags.append(pos)
            if np.any(np.diff(mags) < 0) or max(mags) > c2:
                return False, f"|p| not monotone / bounded ({mode})"
        return True, f"{n} (i,j) pairs match brute force; symmetry, monotonicity, bounds hold"

    return _timed("relpos index", run)


# --- 4. metrics ----------------------------------------------------------------


def _dec_metrics(y, y_hat) -> tuple[Decimal, Decimal, Decimal]:
    with localcontext() as ctx:
        ctx.prec = 50
        return _dec_metrics_inner(y, y_hat)


def _dec_metrics_inner(y, y_hat):
    ys = [Decimal(float(v)) for v in y]
    hs = [Decimal(float(v)) for v in y_hat]
    n = Decimal(len(ys))
    se = sum((a - b) * (a - b) for a, b in zip(ys, hs))
    ab = sum(abs(a - b) for a, b in zip(ys, hs))
    sc = Decimal(0)
    for a, b in zip(ys, hs):
        sc += ((a - b) / 13).exp() - 1 if b < a else ((b - a) / 10).exp() - 1
    return (se / n).sqrt(), ab / n, sc


def check_metrics(n_vectors: int = 1000, seed: int = 0) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for k in range(n_vectors):
            m = int(rng.integers(1, 50))
            y = rng.uniform(0, 150, m)
            y_hat = y + rng.normal(0, 20, m)
            got = (rmse(y, y_hat), mae(y, y_hat), score(y, y_hat))
            for name, g, e in zip(("rmse", "mae", "score"), got, _dec_metrics(y, y_hat)):
                err = abs(Decimal(g) - e) / max(Decimal(1), abs(e))
                worst = max(worst, float(err))
                if err > Decimal(METRIC_TOL):
                    return False, f"{name} off by {float(err):.2e} on vector {k}"
        for e in np.concatenate([np.linspace(0, 50, 5001)[1:], rng.uniform(0, 50, 1000)]):
            if e <= 0:
                continue
            if not score([0.0], [e]) > score([e], [0.0]):
                return False, f"late penalty not above early penalty at e={e}"
        return True, f"{n_vectors} vectors within {METRIC_TOL:g} (worst {worst:.1e}); late > early on (0, 50]"

    return _timed("metric oracles", run)


# --- 5. batch independence -----------------------------------------------------


def check_batch_independence(seed: int = 0) -> CheckResult:
    def run():
        cfg = ModelConfig(input_dim=5, embed_dim=16, heads=4)
        model = MsFormer(cfg, seed=seed).eval()
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(6, cfg.window_len, 5))
        with ad.no_grad():
            batched = model(x).data
            single = np.array([model(x[k : k + 1]).data[0] for k in range(len(x))])
            halves = np.concatenate([model(x[:2]).data, model(x[2:]).data])
            perm = np.array([3, 0, 5, 1, 4, 2])
            permuted = model(x[perm]).data
        err = max(
            np.max(np.abs(batched - single)), np.max(np.abs(batched - halves)), np.max(np.abs(permuted - batched[perm]))
        )
        return bool(err < BATCH_TOL), f"max |batched - per-sample| = {err:.1e} (tol {BATCH_TOL:g})"

    return _timed("batch independence", run)


# --- 6. overfit smoke ----------------------------------------------------------


def overfit_fixture(seed: int = 0):
    units = synth_degradation(seed, n_units=8, n_features=8, noise=0.05)
    stats = fit_norm_stats(units)
    w = build_train_windows(normalize(units, stats), 28, 125.0)
    pick = np.sort(np.random.default_rng(seed).choice(len(w), 64, replace=False))
    return w[pick]


def check_overfit(steps: int = OVERFIT_STEPS, seed: int = 0) -> CheckResult:
    def run():
        w = overfit_fixture(seed)
        model = MsFormer(ModelConfig(input_dim=w.x.shape[2], embed_dim=32, heads=4), seed=seed)
        # full batch: one Adam step per epoch
        train(model, w, TrainConfig(epochs=steps, batch_size=len(w), lr=2e-3, seed=seed))
        mse_cycles = float(np.mean((model.predict(w.x) - w.rul) ** 2))
        return mse_cycles < OVERFIT_MSE, f"{len(w)} windows, {steps} Adam steps -> MSE {mse_cycles:.3f} cycles^2 (< {OVERFIT_MSE})"

    return _timed("overfit smoke", run)


# --- 7. parameter count ----------------------------------------------------------


def check_param_count(input_dim: int = DEFAULT_INPUT_DIM) -> CheckResult:
    def run():
        n = count_params(MsFormer(ModelConfig(input_dim=input_dim)))
        lo, hi = PARAM_RANGE
        return lo <= n <= hi, f"default config: {n} params ({n / 1e6:.3f}M vs {REFERENCE_PARAMS / 1e6:.2f}M reference)"

    return _timed("parameter count", run)


CHECKS: dict[str, Callable[[], CheckResult]] = {
    "gradients": check_gradient_fidelity,
    "ms_round_trip": check_ms_round_trip,
    "relpos": check_relpos_index,
    "metrics": check_metrics,
    "batch_independence": check_batch_independence,
    "overfit": check_overfit,
    "param_count": check_param_count,
}


def run_all(names=None, echo: Callable[[str], None] | None = print) -> list[CheckResult]:
    results = []
    for name in names or CHECKS:
        res = CHECKS[name]()
        if echo:
            echo(res.line())
        results.append(res)
    return results
