"""Fidelity metrics and rate-distortion sweeps."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .codec import bits_per_pixel, decode_image, encode_image
from .imageio import GrayImage, list_pgms, read_pgm
from .network import forward_refine

CSV_COLUMNS = ["tau", "bpp", "psnr_conv", "linf_conv", "psnr_refined", "linf_refined"]


def _check_dims(a: GrayImage, b: GrayImage):
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(f"image sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}")


def squared_error(a: GrayImage, b: GrayImage) -> float:
    _check_dims(a, b)
    d = a.pixels.astype(np.int64) - b.pixels.astype(np.int64)
    return float(np.sum(d * d))


def psnr_from_mse(mse: float) -> float:
    return math.inf if mse == 0 else 10.0 * math.log10(255.0 ** 2 / mse)


def psnr(a: GrayImage, b: GrayImage) -> float:
    """Peak signal-to-noise ratio in dB (peak 255); +inf for identical images."""
    return psnr_from_mse(squared_error(a, b) / a.pixels.size)


def linf_bound(a: GrayImage, b: GrayImage) -> int:
    """Largest absolute per-pixel difference."""
    _check_dims(a, b)
    return int(np.max(np.abs(a.pixels.astype(np.int16) - b.pixels.astype(np.int16))))


@dataclass(frozen=True)
class RDPoint:
    tau: int
    bpp: float
    psnr_db: float
    linf_bound: int
    decoder: str  # "conventional" or "refined"


@dataclass(frozen=True)
class ImageRecord:
    """Per-image, per-tau measurements before aggregation."""
    name: str
    tau: int
    pixels: int
    bpp: float
    sse_conv: float
    linf_conv: int
    sse_refined: float | None = None
    linf_refined: int | None = None


def threads() -> int:
    env = os.environ.get("LNL_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def sweep_image(img: GrayImage, taus, model=None, name: str = "") -> list:
    records = []
    for tau in taus:
        stream, _ = encode_image(img, tau)
        y = decode_image(stream)
        rec = dict(name=name, tau=tau, pixels=img.pixels.size, bpp=bits_per_pixel(stream, img),
                   sse_conv=squared_error(y, img), linf_conv=linf_bound(y, img))
        if model is not None:
            refined = forward_refine(model, y, tau)
            rec.update(sse_refined=squared_error(refined, img), linf_refined=linf_bound(refined, img))
        records.append(ImageRecord(**rec))
    return records


def aggregate(records) -> list:
    """Per-tau RD points: mean bpp, PSNR of the pooled MSE, max l-inf."""
    points = []
    for tau in sorted({r.tau for r in records}):
        group = [r for r in records if r.tau == tau]
        pixels = sum(r.pixels for r in group)
        bpp = round(float(np.mean([r.bpp for r in group])), 4)
        conv = psnr_from_mse(sum(r.sse_conv for r in group) / pixels)
        points.append(RDPoint(tau, bpp, _round4(conv), max(r.linf_conv for r in group), "conventional"))
        if all(r.sse_refined is not None for r in group):
            ref = psnr_from_mse(sum(r.sse_refined for r in group) / pixels)
            points.append(RDPoint(tau, bpp, _round4(ref), max(r.linf_refined for r in group), "refined"))
    return points


def _round4(v: float) -> float:
    return v if math.isinf(v) else round(v, 4)


def rd_sweep(data_dir, taus, model=None, csv_out=None) -> list:
    """Encode, decode (and optionally refine) every image at every tau."""
    paths = list_pgms(data_dir)
    if not paths:
        raise FileNotFoundError(f"no .pgm images in {data_dir}")

    def one(path):
        return sweep_image(read_pgm(path), list(taus), model, os.path.basename(path))

    with ThreadPoolExecutor(max_workers=threads()) as pool:
        records = [r for recs in pool.map(one, paths) for r in recs]
    points = aggregate(records)
    if csv_out is not None:
        write_rd_csv(points, csv_out)
    return points


def _fmt(v: float) -> str:
    return "inf" if math.isinf(v) else f"{v:.4f}"


def write_rd_csv(points, path) -> None:
    by_tau = {}
    for p in points:
        by_tau.setdefault(p.tau, {})[p.decoder] = p
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for tau in sorted(by_tau):
            conv = by_tau[tau]["conventional"]
            ref = by_tau[tau].get("refined")
            w.writerow([tau, _fmt(conv.bpp), _fmt(conv.psnr_db), conv.linf_bound,
                        "" if ref is None else _fmt(ref.psnr_db),
                        "" if ref is None else ref.linf_bound])


def read_rd_csv(path) -> list:
    points = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        for row in reader:
            tau, bpp = int(row["tau"]), float(row["bpp"])
            points.append(RDPoint(tau, bpp, float(row["psnr_conv"]), int(row["linf_conv"]),
                                  "conventional"))
            if row["psnr_refined"]:
                points.append(RDPoint(tau, bpp, float(row["psnr_refined"]),
                                      int(row["linf_refined"]), "refined"))
    return points
