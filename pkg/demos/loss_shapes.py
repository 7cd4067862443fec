"""Compare the three pixel losses as a single pixel leaves the tolerance band.

The l-infinity loss is zero inside the band and grows like -log(1 - excess),
so it is steeper than the truncated squared error for every positive
excess and diverges as the excess approaches 1 (a full intensity range).

    python demos/loss_shapes.py
"""

import numpy as np

from ledd.autodiff import Tensor, linf_loss, mse_loss, truncated_l2_loss

TAU = 4 / 255


def pixel(v):
    return Tensor(np.full((1, 1, 1, 1), v, dtype=np.float64), requires_grad=True)


def main():
    target = np.zeros((1, 1, 1, 1))
    print(f"tau = {TAU:.4f} (4 grey levels)")
    print(f"{'excess':>7} {'mse':>9} {'trunc_l2':>9} {'linf':>9} {'d linf/dx':>10}")
    for excess in (-0.01, 0.0, 0.01, 0.05, 0.1, 0.25, 0.5, 0.9, 0.99):
        x = pixel(TAU + excess)
        loss = linf_loss(x, target, TAU)
        loss.backward()
        print(f"{excess:>7.2f} {mse_loss(x, target).item():>9.5f} "
              f"{truncated_l2_loss(x, target, TAU).item():>9.5f} {loss.item():>9.5f} "
              f"{float(x.grad.ravel()[0]):>10.3f}")


if __name__ == "__main__":
    main()
