"""Training-MSE curve on the 64-window synthetic overfit fixture."""

import argparse

from msformer import selfcheck


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=selfcheck.OVERFIT_STEPS)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(selfcheck.check_overfit(args.steps, args.seed).line())


if __name__ == "__main__":
    main()
