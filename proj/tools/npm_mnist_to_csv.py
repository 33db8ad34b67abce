#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package to a Kaggle-style CSV.

The package stores each digit as 784 intensities p/255 rounded to three
decimals; rounding back to the nearest integer recovers p exactly.

    npm pack mnist && tar xzf mnist-*.tgz
    tools/npm_mnist_to_csv.py package/src/digits data/mnist_10k.csv
"""
import argparse
import json
import pathlib
import sys


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("digits_dir", type=pathlib.Path)
    ap.add_argument("out_csv", type=pathlib.Path)
    ap.add_argument("--no-header", action="store_true")
    args = ap.parse_args()

    rows = 0
    with args.out_csv.open("w", newline="\n") as out:
        if not args.no_header:
            out.write("label," + ",".join(f"pixel{i}" for i in range(784)) + "\n")
        for label in range(10):
            data = json.loads((args.digits_dir / f"{label}.json").read_text())["data"]
            if len(data) % 784:
                print(f"{label}.json: length {len(data)} is not a multiple of 784", file=sys.stderr)
                return 1
            for start in range(0, len(data), 784):
                pixels = [round(v * 255) for v in data[start:start + 784]]
                if any(p < 0 or p > 255 for p in pixels):
                    print(f"{label}.json: pixel out of range", file=sys.stderr)
                    return 1
                out.write(f"{label}," + ",".join(map(str, pixels)) + "\n")
                rows += 1
    print(f"wrote {rows} rows to {args.out_csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
