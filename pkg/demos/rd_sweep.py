"""Rate-distortion table for a directory of images, optionally with a refiner.

Without a model only the conventional decoder is measured. With a weight
file the refined decoder is added; its PSNR should sit above the
conventional one while its l-infinity column stays within 2*tau.

    python demos/rd_sweep.py [data_dir] [weights.lnw] [out.csv]
"""

import os
import sys

from ledd.evaluation import rd_sweep
from ledd.network import load_weights

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def main(data_dir=None, weights=None, csv_out=None):
    data_dir = data_dir or os.path.join(ROOT, "data", "corpus")
    model = load_weights(weights) if weights else None
    points = rd_sweep(data_dir, range(9), model, csv_out)
    print(f"{'tau':>3} {'decoder':>12} {'bpp':>7} {'psnr':>8} {'linf':>4}")
    for p in points:
        print(f"{p.tau:>3} {p.decoder:>12} {p.bpp:>7.3f} {p.psnr_db:>8.3f} {p.linf_bound:>4}")


if __name__ == "__main__":
    main(*sys.argv[1:4])
