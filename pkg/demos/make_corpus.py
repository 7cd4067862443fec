"""Regenerate the bundled grayscale corpora under ``data/``.

Crops come from the photographs that ship with scikit-image, converted to
luma (Rec. 601 weights, rounded). Grid cells are 128x128 and the three sets
never share a cell:

    data/corpus/  20 held-out images for codec and refinement checks
    data/train/   8 images for desk-scale training
    data/toy/     4 small 64x64 images for quick CLI smoke runs

Run from the repository root:  python demos/make_corpus.py
"""

import os

import numpy as np
import skimage.data

from ledd.imageio import GrayImage, write_pgm

CELL = 128

CORPUS = {
    "camera": [(1, 1), (2, 1), (2, 2), (3, 1)],
    "astronaut": [(0, 1), (1, 0), (2, 1), (3, 0)],
    "coffee": [(0, 0), (1, 1), (2, 1), (2, 3)],
    "chelsea": [(0, 0), (1, 1)],
    "rocket": [(1, 0), (2, 4)],
    "coins": [(0, 1), (1, 1)],
    "brick": [(0, 0)],
    "clock": [(1, 1)],
}

TRAIN = {
    "camera": [(1, 2), (2, 3)],
    "astronaut": [(0, 2), (2, 2)],
    "coffee": [(0, 1), (1, 2)],
    "chelsea": [(0, 2)],
    "coins": [(1, 2)],
}

# (source, cell, quadrant) -> 64x64 quarter of a cell used by neither set above
TOY = [("rocket", (2, 0), (0, 0)), ("astronaut", (3, 1), (1, 1)),
       ("coffee", (0, 3), (0, 1)), ("brick", (1, 1), (1, 0))]


def luma(rgb):
    if rgb.ndim == 2:
        return rgb.astype(np.uint8)
    y = rgb[..., :3].astype(np.float64) @ np.array([0.299, 0.587, 0.114])
    return np.floor(y + 0.5).astype(np.uint8)


def cell(img, rc):
    r, c = rc
    return img[r * CELL:(r + 1) * CELL, c * CELL:(c + 1) * CELL]


def dump(sets, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    for name, cells in sets.items():
        src = luma(getattr(skimage.data, name)())
        for rc in cells:
            path = os.path.join(out_dir, f"{name}_{rc[0]}{rc[1]}.pgm")
            write_pgm(GrayImage(cell(src, rc).copy()), path)
            print(path)


def main(root="data"):
    dump(CORPUS, os.path.join(root, "corpus"))
    dump(TRAIN, os.path.join(root, "train"))
    toy_dir = os.path.join(root, "toy")
    os.makedirs(toy_dir, exist_ok=True)
    for name, rc, (qr, qc) in TOY:
        block = cell(luma(getattr(skimage.data, name)()), rc)
        quarter = block[qr * 64:(qr + 1) * 64, qc * 64:(qc + 1) * 64].copy()
        path = os.path.join(toy_dir, f"{name}_{rc[0]}{rc[1]}_{qr}{qc}.pgm")
        write_pgm(GrayImage(quarter), path)
        print(path)


if __name__ == "__main__":
    main()
