"""Parameter breakdown for a model config (default: 14 input features)."""

import argparse
from collections import defaultdict

from msformer import ModelConfig, MsFormer, count_params
from msformer.config import load_spec


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--input-dim", type=int, default=14)
    ap.add_argument("--override", action="append", default=[])
    args = ap.parse_args()

    mcfg = load_spec(args.config, args.override).model if (args.config or args.override) else ModelConfig()
    if mcfg.input_dim is None:
        mcfg.input_dim = args.input_dim
    model = MsFormer(mcfg)
    groups = defaultdict(int)
    for name, p in model.named_parameters():
        groups[name.split(".")[0]] += p.size
    for g, n in groups.items():
        print(f"{g:>10}: {n:>8,}")
    print(f"{'total':>10}: {count_params(model):>8,}")


if __name__ == "__main__":
    main()
