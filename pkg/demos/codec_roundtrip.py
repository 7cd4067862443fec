"""Walk one image through the near-lossless codec at every tolerance.

For each tau the image is encoded, the stream is parsed back from bytes
and decoded, and the script reports the rate, the PSNR and the largest
per-pixel error. The last column is the uniform-residual estimate
10*log10(3*255^2 / (tau*(tau+1))) that conventional decoding tracks.

    python demos/codec_roundtrip.py [image.pgm]
"""

import math
import os
import sys

from ledd.codec import bits_per_pixel, decode_image, encode_image
from ledd.evaluation import linf_bound, psnr
from ledd.imageio import list_pgms, read_pgm

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def main(path=None):
    path = path or list_pgms(os.path.join(ROOT, "data", "corpus"))[0]
    img = read_pgm(path)
    print(f"{os.path.basename(path)}: {img.width}x{img.height}")
    print(f"{'tau':>3} {'bytes':>6} {'bpp':>6} {'psnr':>7} {'linf':>4} {'model':>7}")
    for tau in range(9):
        stream, _ = encode_image(img, tau)
        y = decode_image(stream.to_bytes())
        assert linf_bound(y, img) <= tau
        model = math.inf if tau == 0 else 10 * math.log10(3 * 255 ** 2 / (tau * (tau + 1)))
        print(f"{tau:>3} {stream.nbytes:>6} {bits_per_pixel(stream):>6.3f} {psnr(y, img):>7.2f} "
              f"{linf_bound(y, img):>4} {model:>7.2f}")


if __name__ == "__main__":
    main(*sys.argv[1:2])
