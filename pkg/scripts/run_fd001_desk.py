"""Desk-scale FD001 run: default config, 40 epochs (``--epochs 300`` for the extended check)."""

import argparse
import json

from msformer import desk


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("cmapss_dir")
    ap.add_argument("--epochs", type=int, default=desk.DESK_EPOCHS)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="write the run report here")
    args = ap.parse_args()

    rep = desk.run_spec(desk.fd001_spec(args.cmapss_dir, args.epochs, args.seed))
    print(json.dumps(rep.metrics(), indent=2))
    target = desk.DESK_RMSE if args.epochs <= desk.DESK_EPOCHS else desk.EXTENDED_RMSE
    print(f"RMSE {rep.rmse:.3f} (target <= {target}), Score {rep.score:.2f}")
    if args.out:
        rep.write(args.out)


if __name__ == "__main__":
    main()
