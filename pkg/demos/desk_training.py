"""Train the base-16 refinement network at desk scale and score it on held-out images.

Every training image is coded at tau 1..8, cut into 64x64 patches and used
to fit one multi-rate model with the joint mse + l-infinity loss. Each
epoch prints the training loss and the held-out PSNR next to the
conventional decoder; the final table reports the gain at tau 4, 6 and 8.

    python demos/desk_training.py [--epochs-hi 20] [--epochs-lo 10] [--out desk.lnw]
"""

import argparse
import os

from ledd.evaluation import rd_sweep
from ledd.training import TrainConfig, train

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
TRAIN = os.path.join(ROOT, "data", "train")
CORPUS = os.path.join(ROOT, "data", "corpus")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs-hi", type=int, default=20)
    ap.add_argument("--epochs-lo", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="desk.lnw")
    args = ap.parse_args()

    cfg = TrainConfig(epochs_hi=args.epochs_hi, epochs_lo=args.epochs_lo, seed=args.seed)

    def show(e):
        print(f"epoch {e.epoch:2d}  lr {e.lr:g}  train {e.train_loss:.3e}  "
              f"held-out psnr {e.val_psnr:.3f} (conventional {e.conv_psnr:.3f})", flush=True)

    model = train(TRAIN, cfg, args.out, val_dir=CORPUS, on_epoch=show)
    print(f"weights written to {args.out}")
    points = rd_sweep(CORPUS, (4, 6, 8), model)
    for tau in (4, 6, 8):
        conv, ref = [p for p in points if p.tau == tau]
        print(f"tau {tau}: {conv.psnr_db:.3f} -> {ref.psnr_db:.3f} dB "
              f"({ref.psnr_db - conv.psnr_db:+.3f}), linf {ref.linf_bound} <= {2 * tau}")


if __name__ == "__main__":
    main()
