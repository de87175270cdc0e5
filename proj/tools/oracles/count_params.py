#!/usr/bin/env python3
"""Per-block enumeration of convolution weights for bottleneck ResNets.

Walks every layer explicitly (no closed form) and prints the table rows.
With --check TOOL it also runs `TOOL count-params` for each row and fails on
any disagreement.
"""
import argparse
import math
import subprocess
import sys

BASE_WIDTHS = (64, 128, 256, 512)
EXPANSION = 4


def inner(p, w):
    # floor(p * w); the small offset absorbs binary representation of p
    return math.floor(p * w + 1e-9)


def layers(depths, p):
    """Yields (name, out, in, k) for every convolution."""
    yield ("stem", 64, 3, 7)
    cin = 64
    for s, (depth, w) in enumerate(zip(depths, BASE_WIDTHS)):
        mid = inner(p, w)
        cout = EXPANSION * w
        for b in range(depth):
            tag = f"layer{s + 1}.{b}"
            yield (tag + ".conv1", mid, cin, 1)
            yield (tag + ".conv2", mid, mid, 3)
            yield (tag + ".conv3", cout, mid, 1)
            stride = 2 if (b == 0 and s > 0) else 1
            if cin != cout or stride != 1:
                yield (tag + ".downsample", cout, cin, 1)
            cin = cout


def count(depths, p):
    return sum(o * i * k * k for _, o, i, k in layers(depths, p))


ROWS = [
    ("baseline", (3, 8, 36, 3), 1.0, 57992384),
    ("p=0.3", (3, 4, 6, 3), 0.3, 6573806),
    ("p=0.5", (3, 4, 6, 3), 0.5, 10287296),
    ("p=0.7", (3, 4, 6, 3), 0.7, 14847686),
]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--check", metavar="TOOL")
    args = ap.parse_args()
    bad = 0
    for name, depths, p, published in ROWS:
        n = count(depths, p)
        line = f"{name:9s} depths={','.join(map(str, depths))} p={p}: {n}"
        if n != published:
            line += f"  MISMATCH published {published}"
            bad += 1
        if args.check:
            cmd = [args.check, "count-params", "--depths", ",".join(map(str, depths))]
            if p != 1.0:
                cmd += ["--p", str(p)]
            got = int(subprocess.run(cmd, check=True, capture_output=True, text=True).stdout)
            line += f"  tool={got}"
            if got != n:
                line += "  MISMATCH tool"
                bad += 1
        print(line)
    widths = {p: [inner(p, w) for w in BASE_WIDTHS] for p in (0.3, 0.5, 0.7)}
    for p, ws in widths.items():
        print(f"inner widths p={p}: {ws}")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
