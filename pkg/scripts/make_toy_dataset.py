"""Write a synthetic dataset (images, masks, daytime labels) for smoke runs.

    python3 scripts/make_toy_dataset.py --out /tmp/toy --count 16 --size 64
"""

import argparse
import json

from relight.synthetic import write_toy_dataset


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True)
    parser.add_argument("--count", type=int, default=16)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    info = write_toy_dataset(args.out, count=args.count, size=args.size, seed=args.seed)
    print(json.dumps(info, indent=2))


if __name__ == "__main__":
    main()
