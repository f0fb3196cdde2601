#!/usr/bin/env python3
"""Regenerates data/ps_glyph.pbm: the 256x128 "PS" glyph mask (plain PBM)."""
import math
import sys

W, H = 256, 128


def letter_p(x, y):
    cx, cy = 60.5, 38.5
    if 26 <= x < 44 and 8 <= y < 120:
        return True
    if 44 <= x < 60 and (8 <= y < 27 or 50 <= y < 69):
        return True
    r = math.hypot(x + 0.5 - cx, y + 0.5 - cy)
    return x >= 60 and 11.5 <= r < 30.5


def letter_s(x, y):
    px, py = x + 0.5, y + 0.5
    cx = 188.0
    up, lo = (cx, 35.0), (cx, 93.0)
    r_out, r_in = 30.0, 10.0
    ru = math.hypot(px - up[0], py - up[1])
    rl = math.hypot(px - lo[0], py - lo[1])
    upper = r_in <= ru < r_out and not (px > cx and py > up[1])
    lower = r_in <= rl < r_out and not (px < cx and py < lo[1])
    return upper or lower


def main(path):
    rows = []
    for y in range(H):
        rows.append("".join("1" if (letter_p(x, y) if x < W // 2 else letter_s(x, y)) else "0"
                            for x in range(W)))
    with open(path, "w", newline="\n") as f:
        f.write("P1\n# PS glyph mask, columns < 128 are P, >= 128 are S\n")
        f.write(f"{W} {H}\n")
        for row in rows:
            for i in range(0, W, 64):
                f.write(" ".join(row[i:i + 64]) + "\n")
    p = sum(r[:W // 2].count("1") for r in rows)
    s = sum(r[W // 2:].count("1") for r in rows)
    print(f"P cells {p}, S cells {s}, P fraction {p / (p + s):.4f}", file=sys.stderr)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/ps_glyph.pbm")
