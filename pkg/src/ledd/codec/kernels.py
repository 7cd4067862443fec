"""Compiled per-pixel primitives and raster loops.

The scalar helpers are plain ``njit`` functions, so they are callable from
Python as well as from the raster loops below.
"""

import numpy as np
from numba import njit

NUM_CONTEXTS = 8
A_INIT = 4
N_INIT = 1
RESET_AT = 64
K_MAX = 16
ESCAPE_RUN = 24
RAW_BITS = 16

# decode status codes
OK = 0
EXHAUSTED = 1
BAD_UNARY = 2
TRAILING = 3
BAD_PADDING = 4


@njit(cache=True)
def predict_med(n, w, nw):
    lo = min(n, w)
    hi = max(n, w)
    if nw >= hi:
        return lo
    if nw <= lo:
        return hi
    return min(max(n + w - nw, 0), 255)


@njit(cache=True)
def quantize_index(e, tau):
    step = 2 * tau + 1
    if e >= 0:
        return (e + tau) // step
    return -((-e + tau) // step)


@njit(cache=True)
def context_index(n, w, ne):
    d = abs(n - w) + abs(n - ne)
    if d <= 2:
        return d
    if d <= 4:
        return 3
    if d <= 8:
        return 4
    if d <= 16:
        return 5
    if d <= 32:
        return 6
    return 7


@njit(cache=True)
def map_signed(q):
    if q >= 0:
        return 2 * q
    return -2 * q - 1


@njit(cache=True)
def unmap_signed(u):
    if u & 1:
        return -((u + 1) >> 1)
    return u >> 1


@njit(cache=True)
def choose_k(a, n):
    k = 0
    while (n << k) < a and k < K_MAX:
        k += 1
    return k


@njit(cache=True)
def neighbors(rec, r, c):
    """(n, w, nw, ne) from the reconstructed plane with border substitution.

    First pixel: everything 128. First row: everything equals w. First
    column: w = nw = n. Right edge: ne = n.
    """
    width = rec.shape[1]
    if r == 0:
        if c == 0:
            return 128, 128, 128, 128
        w = rec[0, c - 1]
        return w, w, w, w
    n = rec[r - 1, c]
    if c == 0:
        w = n
        nw = n
    else:
        w = rec[r, c - 1]
        nw = rec[r - 1, c - 1]
    ne = rec[r - 1, c + 1] if c + 1 < width else n
    return n, w, nw, ne


@njit(cache=True)
def _update(acc_a, acc_n, ctx, q):
    acc_a[ctx] = max(acc_a[ctx] + abs(q), 1)
    acc_n[ctx] += 1
    if acc_n[ctx] == RESET_AT:
        acc_a[ctx] = (acc_a[ctx] + 1) >> 1
        acc_n[ctx] = (acc_n[ctx] + 1) >> 1


@njit(cache=True, nogil=True)
def encode_plane(x, tau):
    """Encode a uint8 raster; returns (payload, reconstruction)."""
    height, width = x.shape
    rec = np.zeros((height, width), np.int64)
    out = np.zeros((height * width * (ESCAPE_RUN + 1 + RAW_BITS)) // 8 + 8, np.uint8)
    acc_a = np.full(NUM_CONTEXTS, A_INIT, np.int64)
    acc_n = np.full(NUM_CONTEXTS, N_INIT, np.int64)
    step = 2 * tau + 1
    bits = np.int64(0)  # pending bits, fewer than 8 after every flush
    nbits = 0
    pos = 0
    for r in range(height):
        for c in range(width):
            n, w, nw, ne = neighbors(rec, r, c)
            pred = predict_med(n, w, nw)
            q = quantize_index(np.int64(x[r, c]) - pred, tau)
            rec[r, c] = min(max(pred + q * step, 0), 255)

            ctx = context_index(n, w, ne)
            k = choose_k(acc_a[ctx], acc_n[ctx])
            u = map_signed(q)
            p = u >> k
            if p < ESCAPE_RUN:
                code = (((np.int64(1) << p) - 1) << (k + 1)) | (u & ((np.int64(1) << k) - 1))
                length = p + 1 + k
            else:
                code = (((np.int64(1) << ESCAPE_RUN) - 1) << (RAW_BITS + 1)) | u
                length = ESCAPE_RUN + 1 + RAW_BITS
            bits = (bits << length) | code
            nbits += length
            while nbits >= 8:
                nbits -= 8
                out[pos] = (bits >> nbits) & 0xFF
                pos += 1
            bits &= (np.int64(1) << nbits) - 1
            _update(acc_a, acc_n, ctx, q)
    if nbits:
        out[pos] = (bits << (8 - nbits)) & 0xFF
        pos += 1
    return out[:pos].copy(), rec.astype(np.uint8)


@njit(cache=True, nogil=True)
def decode_plane(payload, height, width, tau):
    """Inverse of :func:`encode_plane`; returns (reconstruction, status)."""
    rec = np.zeros((height, width), np.int64)
    acc_a = np.full(NUM_CONTEXTS, A_INIT, np.int64)
    acc_n = np.full(NUM_CONTEXTS, N_INIT, np.int64)
    step = 2 * tau + 1
    limit = payload.shape[0] * 8
    bp = 0
    for r in range(height):
        for c in range(width):
            n, w, nw, ne = neighbors(rec, r, c)
            pred = predict_med(n, w, nw)
            ctx = context_index(n, w, ne)
            k = choose_k(acc_a[ctx], acc_n[ctx])

            run = 0
            while True:
                if bp >= limit:
                    return rec.astype(np.uint8), EXHAUSTED
                bit = (payload[bp >> 3] >> (7 - (bp & 7))) & 1
                bp += 1
                if bit == 0:
                    break
                run += 1
                if run > ESCAPE_RUN:
                    return rec.astype(np.uint8), BAD_UNARY
            nread = RAW_BITS if run == ESCAPE_RUN else k
            if bp + nread > limit:
                return rec.astype(np.uint8), EXHAUSTED
            low = np.int64(0)
            for _ in range(nread):
                low = (low << 1) | ((payload[bp >> 3] >> (7 - (bp & 7))) & 1)
                bp += 1
            u = low if run == ESCAPE_RUN else (np.int64(run) << k) | low

            q = unmap_signed(u)
            rec[r, c] = min(max(pred + q * step, 0), 255)
            _update(acc_a, acc_n, ctx, q)
    used = (bp + 7) >> 3
    if used < payload.shape[0]:
        return rec.astype(np.uint8), TRAILING
    if bp & 7 and payload[used - 1] & ((1 << (8 - (bp & 7))) - 1):
        return rec.astype(np.uint8), BAD_PADDING
    return rec.astype(np.uint8), OK
