"""Qualitative ablation ordering on FD001: default vs fixed-4 schedule vs no relative bias."""

import argparse

from msformer import desk


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("cmapss_dir")
    ap.add_argument("--epochs", type=int, default=desk.DESK_EPOCHS)
    ap.add_argument("--seeds", type=int, default=len(desk.DIRECTION_SEEDS))
    args = ap.parse_args()

    res = desk.direction_study(args.cmapss_dir, args.epochs, tuple(range(args.seeds)))
    for name, m in res.items():
        print(f"{name:>8}: mean RMSE {m['rmse']:.3f}  mean Score {m['score']:.2f}")
    print("schedule ordering holds:", res["default"]["score"] <= res["fixed-4"]["score"])
    print("rpe-off degrades RMSE:", res["rpe-off"]["rmse"] > res["default"]["rmse"])


if __name__ == "__main__":
    main()
