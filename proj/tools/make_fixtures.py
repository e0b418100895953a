#!/usr/bin/env python3
"""Writes the small bundled fixtures under tests/data.

Packing is done here with struct on purpose, so the C++ readers are checked
against an encoder they do not share code with.
"""
import argparse
import pathlib
import struct


def emb_bytes(rows, img_w, img_h, seg_raw):
    n_t, d = len(rows), len(rows[0])
    out = b"SASPEMB1" + struct.pack("<4I", n_t, d, img_w, img_h)
    for row in rows:
        out += struct.pack(f"<{d}f", *row)
    out += struct.pack("<I", len(seg_raw)) + struct.pack(f"<{len(seg_raw)}f", *seg_raw)
    return out


def mlp_bytes(layers):
    out = b"SASPMLP1" + struct.pack("<I", len(layers))
    for weight, bias in layers:
        rows, cols = len(weight), len(weight[0])
        out += struct.pack("<2I", rows, cols)
        for r in weight:
            out += struct.pack(f"<{cols}f", *r)
        out += struct.pack(f"<{cols}f", *bias)
    return out


def pgm_bytes(w, h, on):
    pix = bytes(255 if (x, y) in on else 0 for y in range(h) for x in range(w))
    return f"P5\n{w} {h}\n255\n".encode() + pix


def basis(i, d):
    return [1.0 if k == i else 0.0 for k in range(d)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "tests" / "data"))
    out = pathlib.Path(ap.parse_args().out)
    (out / "eval" / "pred").mkdir(parents=True, exist_ok=True)
    (out / "eval" / "gt").mkdir(parents=True, exist_ok=True)

    # 2x2 tokens over a 4x4 image; seg = [1, 1] gives scores [0, 1, 1, 6], peak at token 3
    tiny = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [3.0, 3.0]]
    (out / "tiny.emb").write_bytes(emb_bytes(tiny, 4, 4, [1.0, 1.0]))
    (out / "identity.mlp").write_bytes(mlp_bytes([([basis(0, 2), basis(1, 2)], [0.0, 0.0])]))
    # bottom-right quadrant, i.e. the pixels of token 3
    (out / "tiny_gt.pgm").write_bytes(pgm_bytes(4, 4, {(x, y) for x in (2, 3) for y in (2, 3)}))

    (out / "flat.emb").write_bytes(emb_bytes([[1.0, 2.0]] * 4, 4, 4, [1.0, 1.0]))

    eye9 = [basis(i, 9) for i in range(9)]
    (out / "onehot.emb").write_bytes(emb_bytes(eye9, 9, 9, basis(4, 9)))
    twohot = [a + b for a, b in zip(basis(1, 9), basis(5, 9))]
    (out / "twohot.emb").write_bytes(emb_bytes(eye9, 9, 9, twohot))

    # (intersection, union) per image: (1, 2), (3, 4), (6, 6)
    masks = {
        "a.pgm": ({(0, 0)}, {(0, 0), (1, 0)}),
        "b.pgm": ({(0, 1), (1, 1), (2, 1)}, {(0, 1), (1, 1), (2, 1), (3, 1)}),
        "c.pgm": ({(x, y) for x in range(3) for y in range(2)}, {(x, y) for x in range(3) for y in range(2)}),
    }
    for name, (pred, gt) in masks.items():
        (out / "eval" / "pred" / name).write_bytes(pgm_bytes(4, 4, pred))
        (out / "eval" / "gt" / name).write_bytes(pgm_bytes(4, 4, gt))


if __name__ == "__main__":
    main()
