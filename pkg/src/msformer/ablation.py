"""Ablation study grids. Each study maps a base model config to labelled variants."""

from __future__ import annotations

import dataclasses
from itertools import product
from typing import Callable

from .config import ModelConfig
from .errors import ConfigError

Variant = tuple[str, dict]


def _ms_stages(base: ModelConfig) -> list[Variant]:
    # "disabled" at a stage means lambda = 1 there (sampling becomes the identity)
    on = base.lambda_schedule
    combos = sorted(product((0, 1), repeat=3), key=lambda c: (sum(c), [-v for v in c]))
    out = []
    for c in combos:
        sched = tuple(on[s] if c[s] else 1 for s in range(3)) + (1,)
        label = "MS@" + ("+".join(str(s + 1) for s in range(3) if c[s]) or "none")
        out.append((label, {"lambda_schedule": sched}))
    return out


def _lambda_fixed(base: ModelConfig) -> list[Variant]:
    L = base.window_len
    out = [(f"fixed-{lam}", {"lambda_schedule": (lam, lam, lam, 1)}) for lam in range(1, L) if L % lam == 0]
    out.append(("default", {"lambda_schedule": base.lambda_schedule}))
    return out


LAMBDA_SCHEDULES = [
    ("default", (4, 4, 2, 1)),
    ("fixed-2", (2, 2, 2, 1)),
    ("fixed-4", (4, 4, 4, 1)),
    ("increasing", (2, 4, 4, 1)),
    ("early-drop", (4, 2, 2, 1)),
    ("wide-first", (7, 4, 2, 1)),
    ("mixed", (2, 4, 2, 1)),
]


def _lambda_schedule(base: ModelConfig) -> list[Variant]:
    L = base.window_len
    return [(n, {"lambda_schedule": s}) for n, s in LAMBDA_SCHEDULES if all(L % v == 0 for v in s)]


def _pe_variant(base: ModelConfig) -> list[Variant]:
    return [("default (literal)", {"rpe_mode": "literal"}), ("continuous", {"rpe_mode": "continuous"}), ("w/o RPE", {"rpe_mode": "off"})]


def _c1_sweep(base: ModelConfig) -> list[Variant]:
    return [(f"c1={c}", {"c1": c, "c2": 2 * c}) for c in (2, 4, 8, 16, 32) if 2 * c <= base.log_range]


ATTN_LAYOUTS = [
    ("LA,LA,RPE:2,RPE:2", "LA,LA,RPE:2,RPE:2"),
    ("LA,LA,RPE:3,RPE", "LA,LA,RPE:3,RPE"),
    ("LA,RPE,RPE:2,RPE", "LA,RPE,RPE:2,RPE"),
    ("RPE,RPE,RPE:2,RPE", "RPE,RPE,RPE:2,RPE"),
    ("default", "LA,LA,RPE:2,RPE"),
]


def _attn_layout(base: ModelConfig) -> list[Variant]:
    return [(n, {"stage_layout": s}) for n, s in ATTN_LAYOUTS]


STUDIES: dict[str, Callable[[ModelConfig], list[Variant]]] = {
    "ms-stages": _ms_stages,
    "lambda-fixed": _lambda_fixed,
    "lambda-schedule": _lambda_schedule,
    "pe-variant": _pe_variant,
    "c1-sweep": _c1_sweep,
    "attn-layout": _attn_layout,
}


def variants(study: str, base: ModelConfig) -> list[tuple[str, ModelConfig]]:
    if study not in STUDIES:
        raise ConfigError(f"unknown study {study!r}; expected one of {sorted(STUDIES)}")
    out = []
    for label, changes in STUDIES[study](base):
        fields = dataclasses.asdict(base)
        fields.update(changes)
        out.append((label, ModelConfig(**fields)))
    return out
