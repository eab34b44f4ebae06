"""``msformer`` command line: train, eval, ablate, selfcheck.

Exit codes: 0 ok, 1 selfcheck failure, 2 invalid spec / unknown study,
3 data error, 4 checkpoint or normalization-stats problem.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

from . import ablation, selfcheck
from .checkpoint import load_params, save_params
from .config import RunSpec, apply_overrides, dump_spec, format_layout, load_spec, read_raw, spec_from_raw
from .data import NormStats
from .errors import ConfigError, ContractError, DataError
from .harness import evaluate, load_dataset, summarize, train, write_predictions
from .model import MsFormer, count_params

log = logging.getLogger("msformer")

EXIT_OK, EXIT_CHECK, EXIT_SPEC, EXIT_DATA, EXIT_CKPT = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def parse_seeds(text: str | None) -> list[int] | None:
    if text is None:
        return None
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise CliError(EXIT_SPEC, f"--seed {text!r}: expected N, N..M or N,M,...") from exc


def _load_spec(path, overrides) -> RunSpec:
    try:
        return load_spec(path, overrides)
    except ConfigError as exc:
        raise CliError(EXIT_SPEC, f"invalid spec: {exc}") from exc
    except OSError as exc:
        raise CliError(EXIT_SPEC, f"cannot read spec: {exc}") from exc


def _with_seed(spec: RunSpec, seed: int) -> RunSpec:
    return dataclasses.replace(spec, train=dataclasses.replace(spec.train, seed=seed))


def _load_data(spec: RunSpec, stats: NormStats | None = None):
    try:
        return load_dataset(spec.data, spec.model.window_len, stats)
    except (DataError, OSError) as exc:
        raise CliError(EXIT_DATA, f"data error: {exc}") from exc
    except ConfigError as exc:
        raise CliError(EXIT_SPEC, f"invalid spec: {exc}") from exc


def _resolve_input_dim(spec: RunSpec, n_features: int) -> RunSpec:
    if spec.model.input_dim is None:
        spec = dataclasses.replace(spec, model=dataclasses.replace(spec.model, input_dim=n_features))
    elif spec.model.input_dim != n_features:
        raise CliError(EXIT_SPEC, f"model.input_dim={spec.model.input_dim} but data has {n_features} features")
    return spec


def run_one(spec: RunSpec, out_root: Path, tag: str = "") -> tuple[Path, object]:
    """Train one configuration and write its run directory."""
    ds = _load_data(spec)
    spec = _resolve_input_dim(spec, ds.stats.n_retained)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    run_dir = out_root / f"{stamp}-{spec.fingerprint()}{tag}"
    suffix = 1
    while run_dir.exists():
        run_dir = out_root / f"{stamp}-{spec.fingerprint()}{tag}-{suffix}"
        suffix += 1
    ckpt = run_dir / "checkpoint"
    ckpt.mkdir(parents=True)
    train_cfg = spec.train
    if train_cfg.eval_every and not train_cfg.checkpoint_dir:
        train_cfg = dataclasses.replace(train_cfg, checkpoint_dir=str(run_dir))
    model = MsFormer(spec.model, seed=spec.train.seed)
    log.info("training %s: %d params, %d windows", run_dir.name, count_params(model), len(ds.train))
    try:
        report = train(model, ds.train, train_cfg, ds.test, fingerprint=spec.fingerprint())
    except FloatingPointError as exc:
        raise CliError(EXIT_CHECK, f"training aborted: {exc}") from exc
    (run_dir / "config.ini").write_text(dump_spec(spec))
    save_params(ckpt, model.state_dict())
    ds.stats.save(ckpt / "normstats.json")
    (ckpt / "config.ini").write_text(dump_spec(spec))
    report.write(run_dir)
    return run_dir, report


def cmd_train(args) -> int:
    spec = _load_spec(args.config, args.override)
    out_root = Path(args.out or spec.out)
    seeds = parse_seeds(args.seed) or [spec.train.seed]
    reports = []
    for seed in seeds:
        tag = f"-seed{seed}" if len(seeds) > 1 else ""
        run_dir, report = run_one(_with_seed(spec, seed), out_root, tag)
        reports.append(report)
        print(f"{run_dir}: RMSE {report.rmse:.4f}  MAE {report.mae:.4f}  Score {report.score:.4f}")
    if len(seeds) > 1:
        summary = summarize(reports)
        out_root.mkdir(parents=True, exist_ok=True)
        (out_root / "summary.json").write_text(json.dumps({"seeds": seeds, **summary}, indent=2) + "\n")
        print(
            f"{len(seeds)} seeds: RMSE {summary['rmse']['mean']:.4f} ± {summary['rmse']['std']:.4f}  "
            f"Score {summary['score']['mean']:.4f} ± {summary['score']['std']:.4f}"
        )
    return EXIT_OK


def _checkpoint_dir(path: Path) -> Path:
    return path / "checkpoint" if (path / "checkpoint").is_dir() else path


def cmd_eval(args) -> int:
    ckpt = _checkpoint_dir(Path(args.checkpoint))
    stats_path, snap_path = ckpt / "normstats.json", ckpt / "config.ini"
    if not stats_path.is_file():
        raise CliError(EXIT_CKPT, f"missing normalization stats: {stats_path}")
    if not snap_path.is_file():
        raise CliError(EXIT_CKPT, f"missing config snapshot: {snap_path}")
    try:
        raw = read_raw(snap_path)
        if args.config:
            # a supplied spec replaces the snapshot's data and model sections
            user = read_raw(args.config)
            raw.update({k: v for k, v in user.items() if k in ("data", "model")})
        apply_overrides(raw, args.override)
        spec = spec_from_raw(raw)
        stats = NormStats.load(stats_path)
    except ConfigError as exc:
        raise CliError(EXIT_SPEC, f"invalid spec: {exc}") from exc
    ds = _load_data(spec, stats)
    spec = _resolve_input_dim(spec, stats.n_retained)
    try:
        model = MsFormer(spec.model)
        model.load_state_dict(load_params(ckpt))
    except (ContractError, FileNotFoundError, ConfigError) as exc:
        raise CliError(EXIT_CKPT, f"checkpoint/config mismatch: {exc}") from exc
    report = evaluate(model, ds.test, spec.train.score_reduction)
    out = Path(args.out) if args.out else ckpt.parent / "eval"
    out.mkdir(parents=True, exist_ok=True)
    write_predictions(report.predictions, out / "predictions.csv")
    (out / "metrics.json").write_text(json.dumps({**report.metrics(), "n_units": len(report.predictions)}, indent=2) + "\n")
    print(f"RMSE {report.rmse:.4f}  MAE {report.mae:.4f}  Score {report.score:.4f}  ({len(report.predictions)} units)")
    return EXIT_OK


def cmd_ablate(args) -> int:
    spec = _load_spec(args.config, args.override)
    try:
        grid = ablation.variants(args.study, spec.model)
    except ConfigError as exc:
        raise CliError(EXIT_SPEC, str(exc)) from exc
    seeds = parse_seeds(args.seed) or [spec.train.seed]
    out_root = Path(args.out or spec.out) / f"ablate-{args.study}-{time.strftime('%Y%m%d-%H%M%S')}"
    rows = []
    for label, mcfg in grid:
        reports = []
        for seed in seeds:
            vspec = _with_seed(dataclasses.replace(spec, model=mcfg), seed)
            _, rep = run_one(vspec, out_root, f"-{_slug(label)}-seed{seed}")
            reports.append(rep)
        s = summarize(reports)
        rows.append(
            {
                "variant": label,
                "lambda_schedule": "-".join(map(str, mcfg.lambda_schedule)),
                "stage_layout": format_layout(mcfg.stage_layout),
                "rpe_mode": mcfg.rpe_mode,
                "c1": mcfg.c1,
                "rmse_mean": s["rmse"]["mean"],
                "rmse_std": s["rmse"]["std"],
                "mae_mean": s["mae"]["mean"],
                "score_mean": s["score"]["mean"],
                "score_std": s["score"]["std"],
                "seeds": len(seeds),
            }
        )
    table = format_table(rows)
    (out_root / "comparison.json").write_text(json.dumps(rows, indent=2) + "\n")
    (out_root / "comparison.md").write_text(table + "\n")
    print(table)
    return EXIT_OK


def _slug(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-=" else "_" for c in label).strip("_")


def format_table(rows: list[dict]) -> str:
    head = "| variant | lambda | layout | rpe | c1 | RMSE | MAE | Score |"
    lines = [head, "|" + "---|" * 8]
    for r in rows:
        lines.append(
            f"| {r['variant']} | {r['lambda_schedule']} | {r['stage_layout']} | {r['rpe_mode']} | {r['c1']} "
            f"| {r['rmse_mean']:.3f} ± {r['rmse_std']:.3f} | {r['mae_mean']:.3f} "
            f"| {r['score_mean']:.2f} ± {r['score_std']:.2f} |"
        )
    return "\n".join(lines)


def cmd_selfcheck(args) -> int:
    names = args.only or None
    unknown = [n for n in names or () if n not in selfcheck.CHECKS]
    if unknown:
        raise CliError(EXIT_SPEC, f"unknown check(s) {unknown}; expected {sorted(selfcheck.CHECKS)}")
    results = selfcheck.run_all(names)
    failed = [r for r in results if not r.passed]
    for r in failed:
        print(f"FAILED invariant: {r.name}: {r.detail}")
    print(f"selfcheck: {len(results) - len(failed)}/{len(results)} passed")
    return EXIT_CHECK if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msformer", description=__doc__.splitlines()[0])
    p.add_argument("-q", "--quiet", action="store_true", help="only warnings and results")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="run spec (INI)")
        sp.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE")
        sp.add_argument("--out", help="output root (default: output.dir from the spec)")

    t = sub.add_parser("train", help="train and evaluate one configuration")
    common(t)
    t.add_argument("--seed", help="seed, range N..M or list N,M")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on its test split")
    common(e, config_required=False)
    e.add_argument("--checkpoint", required=True, help="run directory or its checkpoint/ subdirectory")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="train every variant of an ablation study")
    a.add_argument("study", help=", ".join(sorted(ablation.STUDIES)))
    common(a)
    a.add_argument("--seed", help="seed, range N..M or list N,M")
    a.set_defaults(func=cmd_ablate)

    s = sub.add_parser("selfcheck", help="dataset-free property suite")
    s.add_argument("--only", action="append", choices=sorted(selfcheck.CHECKS))
    s.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO, format="%(asctime)s %(name)s %(message)s"
    )
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
