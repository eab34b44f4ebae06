"""MsFormer: four stages of multi-scale sampling -> blocks -> window reverse.

Stages 1-2 use pooling-mixer (LA) blocks, stages 3-4 use attention blocks whose
logits carry a learned relative-position bias indexed by the dilation-scaled
offset ``(i - j) * lambda``. Sampling stacks the ``lambda`` interleaved
sub-sequences along the batch axis, so a row of the restructured batch only
ever holds tokens from one input sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .config import ModelConfig
from .errors import ConfigError, ContractError


# --- relative position buckets -----------------------------------------------


def _round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def relpos_magnitude(a_abs: float, c1: int, c2: int, log_range: int = 128, mode: str = "literal") -> int:
    """Bucket magnitude for an absolute offset: exact, then logarithmic, then clipped."""
    if a_abs < c1:
        return int(a_abs)
    if mode == "continuous":
        if a_abs >= log_range:
            return c2
        p = c1 + c1 * math.log(a_abs / c1) / math.log(log_range / c1)
        return min(_round_half_away(p), c2)
    if a_abs < c2:
        return _round_half_away(c1 + c1 * math.log(a_abs / c1) / math.log(log_range / c1))
    return c2


def relpos_index(i: int, j: int, lam: int, c1: int, c2: int, log_range: int = 128, mode: str = "literal") -> int:
    a = (i - j) * lam
    mag = relpos_magnitude(abs(a), c1, c2, log_range, mode)
    return mag + c2 if a >= 0 else mag


def relpos_index_matrix(W: int, lam: int, c1: int, c2: int, log_range: int = 128, mode: str = "literal") -> np.ndarray:
    # bucket depends on i - j only: evaluate each offset once, then broadcast
    offsets = np.arange(-(W - 1), W)
    lut = np.array([relpos_index(int(d), 0, lam, c1, c2, log_range, mode) for d in offsets], dtype=np.int64)
    ii, jj = np.meshgrid(np.arange(W), np.arange(W), indexing="ij")
    return lut[ii - jj + W - 1]


# --- multi-scale sampling ------------------------------------------------------


@dataclass
class StageIO:
    tokens: Tensor
    batch: int
    lam: int


def ms_sample(x: Tensor, lam: int) -> StageIO:
    """Split [N, L, C] into ``lam`` stride-``lam`` sub-sequences stacked along axis 0.

    Row ``i * N + n`` of the result holds tokens ``i, i + lam, i + 2 lam, ...``
    of sample ``n``.
    """
    N, L, _ = x.shape
    if lam < 1 or L % lam:
        raise ConfigError(f"down-sampling factor {lam} does not divide window length {L}")
    if lam == 1:
        return StageIO(x, N, 1)
    subs = [ad.gather(x, np.arange(i, L, lam), axis=1) for i in range(lam)]
    return StageIO(ad.concat(subs, axis=0), N, lam)


def window_reverse(s: StageIO) -> Tensor:
    """Exact inverse of ``ms_sample``."""
    Np, W, C = s.tokens.shape
    if Np != s.batch * s.lam:
        raise ContractError(f"stage tokens have {Np} rows, expected batch {s.batch} x lambda {s.lam}")
    if s.lam == 1:
        return s.tokens
    # (lam, N, W, C) -> (N, W, lam, C): position k of sub-sequence i lands at k * lam + i
    t = s.tokens.reshape(s.lam, s.batch, W, C).transpose(1, 2, 0, 3)
    return t.reshape(s.batch, W * s.lam, C)


# --- modules -------------------------------------------------------------------


class Module:
    training = True

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self._params[key] = value
        elif isinstance(value, Module):
            self._children[key] = value
        object.__setattr__(self, key, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for k, p in self._params.items():
            yield prefix + k, p
        for k, m in self._children.items():
            yield from m.named_parameters(f"{prefix}{k}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for m in self._children.values():
            yield from m.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            object.__setattr__(m, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        bound = 1.0 / math.sqrt(d_in)
        self.weight = Parameter(rng.uniform(-bound, bound, (d_in, d_out)))
        self.bias = Parameter(np.zeros(d_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        lead = x.shape[:-1]
        y = ad.matmul(x.reshape(-1, x.shape[-1]), self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y.reshape(*lead, y.shape[-1])


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.weight = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.weight, self.bias, self.eps)


class Dropout(Module):
    def __init__(self, p: float, rng: np.random.Generator):
        super().__init__()
        self.p = p
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        return ad.dropout(x, self.p, self.rng) if self.training and self.p > 0 else x


class MLP(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator, p_drop: float = 0.0):
        super().__init__()
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)
        self.drop = Dropout(p_drop, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.drop(self.fc2(self.drop(ad.gelu(self.fc1(x)))))


class PoolingMixer(Module):
    """``AvgPool(LayerNorm(x)) + x`` along the token axis."""

    def __init__(self, dim: int, kernel: int = 3):
        super().__init__()
        self.norm = LayerNorm(dim)
        self.kernel = kernel

    def forward(self, x: Tensor) -> Tensor:
        return ad.avg_pool1d(self.norm(x), self.kernel, axis=1) + x


class RelPosAttention(Module):
    """Pre-norm multi-head self-attention with a per-head relative-position bias."""

    def __init__(self, cfg: ModelConfig, lam: int, rng: np.random.Generator):
        super().__init__()
        C = cfg.embed_dim
        self.heads, self.head_dim, self.lam = cfg.heads, cfg.head_dim, lam
        self.c1, self.c2, self.log_range, self.mode = cfg.c1, cfg.c2, cfg.log_range, cfg.rpe_mode
        self.norm = LayerNorm(C)
        self.wq = Linear(C, C, rng)
        self.wk = Linear(C, C, rng)
        self.wv = Linear(C, C, rng)
        self.wo = Linear(C, C, rng)
        self.attn_drop = Dropout(cfg.dropout, rng)
        if cfg.rpe_mode != "off":
            self.rel_bias = Parameter(0.02 * rng.standard_normal((cfg.heads, 2 * cfg.c2 + 1)))
        else:
            self.rel_bias = None
        self._index_cache: dict[int, np.ndarray] = {}

    def bucket_map(self, W: int) -> np.ndarray:
        if W not in self._index_cache:
            mode = "literal" if self.mode == "off" else self.mode
            self._index_cache[W] = relpos_index_matrix(W, self.lam, self.c1, self.c2, self.log_range, mode)
        return self._index_cache[W]

    def position_bias(self, W: int) -> Tensor:
        """[h, W, W] bias; buckets shared by equal offsets receive summed gradients."""
        if self.rel_bias is None:
            return Tensor(np.zeros((self.heads, W, W)))
        idx = self.bucket_map(W)
        return ad.gather(self.rel_bias, idx.reshape(-1), axis=1).reshape(self.heads, W, W)

    def attention_weights(self, xn: Tensor) -> tuple[Tensor, Tensor]:
        B, W, C = xn.shape
        h, d = self.heads, self.head_dim

        def split(t):
            return t.reshape(B, W, h, d).transpose(0, 2, 1, 3)

        q, k, v = split(self.wq(xn)), split(self.wk(xn)), split(self.wv(xn))
        logits = ad.matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(d)) + self.position_bias(W)
        return ad.softmax(logits, axis=-1), v

    def mix(self, xn: Tensor) -> Tensor:
        """Concatenated head outputs ``sum_j alpha_ij v_j`` before the output projection."""
        B, W, C = xn.shape
        alpha, v = self.attention_weights(xn)
        z = ad.matmul(self.attn_drop(alpha), v)
        return z.transpose(0, 2, 1, 3).reshape(B, W, C)

    def forward(self, x: Tensor) -> Tensor:
        return self.wo(self.mix(self.norm(x))) + x


class Block(Module):
    def __init__(self, mixer: Module, dim: int, hidden: int, rng: np.random.Generator, p_drop: float = 0.0):
        super().__init__()
        self.mixer = mixer
        self.norm = LayerNorm(dim)
        self.mlp = MLP(dim, hidden, rng, p_drop)

    def forward(self, x: Tensor) -> Tensor:
        xh = self.mixer(x)
        return self.mlp(self.norm(xh)) + xh


class Stage(Module):
    def __init__(self, cfg: ModelConfig, kind: str, n_blocks: int, lam: int, rng: np.random.Generator):
        super().__init__()
        self.kind, self.lam = kind, lam
        self.blocks = []
        for b in range(n_blocks):
            if kind == "LA":
                mixer = PoolingMixer(cfg.embed_dim, cfg.pool_kernel)
            else:
                mixer = RelPosAttention(cfg, lam, rng)
            blk = Block(mixer, cfg.embed_dim, cfg.mlp_hidden, rng, cfg.dropout)
            setattr(self, f"block{b}", blk)
            self.blocks.append(blk)

    def forward(self, x: Tensor) -> Tensor:
        s = ms_sample(x, self.lam)
        t = s.tokens
        for blk in self.blocks:
            t = blk(t)
        return window_reverse(StageIO(t, s.batch, s.lam))


class MsFormer(Module):
    """Forward returns RUL / rul_cap; ``predict`` returns clamped cycles."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        if cfg.input_dim is None:
            raise ConfigError("model.input_dim must be resolved before building the model")
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        C = cfg.embed_dim
        self.embed = Linear(cfg.input_dim, C, rng)
        self.stages = []
        for s, ((kind, n), lam) in enumerate(zip(cfg.stage_layout, cfg.lambda_schedule), 1):
            st = Stage(cfg, kind, n, lam, rng)
            setattr(self, f"stage{s}", st)
            self.stages.append(st)
        self.head_norm = LayerNorm(C)
        self.head = Linear(C, 1, rng)
        for name, p in self.named_parameters():
            p.name = name

    def forward(self, x) -> Tensor:
        x = ad.as_tensor(x)
        cfg = self.cfg
        if x.ndim != 3 or x.shape[1] != cfg.window_len or x.shape[2] != cfg.input_dim:
            raise ConfigError(
                f"input shape {x.shape} does not match (N, {cfg.window_len}, {cfg.input_dim})"
            )
        h = self.embed(x)
        for st in self.stages:
            h = st(h)
        pooled = self.head_norm(h).mean(axis=1)
        return self.head(pooled).reshape(x.shape[0])

    def predict(self, x, batch_size: int = 1024) -> np.ndarray:
        """Inference in RUL cycles, clamped at zero."""
        was_training = self.training
        self.eval()
        x = np.asarray(x, dtype=np.float64)
        out = []
        with ad.no_grad():
            for s in range(0, len(x), batch_size):
                out.append(self.forward(x[s : s + batch_size]).data * self.cfg.rul_cap)
        self.train(was_training)
        pred = np.concatenate(out) if out else np.zeros(0)
        return np.maximum(pred, 0.0)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise ContractError(
                f"checkpoint/model mismatch: missing {sorted(missing)[:3]}, unexpected {sorted(extra)[:3]}"
            )
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise ContractError(f"checkpoint/model mismatch at {name}: {state[name].shape} vs {p.shape}")
            p.data = np.array(state[name], dtype=np.float64)


def count_params(model: Module) -> int:
    return int(sum(p.size for p in model.parameters()))
