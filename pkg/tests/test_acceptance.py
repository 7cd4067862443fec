"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the terminal summary. The training criteria take several minutes.
"""

import math
import time

import numpy as np
import pytest

from conftest import CORPUS, TRAIN, random_image, report
from ledd.autodiff import Tensor, linf_loss, truncated_l2_loss
from ledd.codec import (BitReader, BitWriter, bits_per_pixel, decode_image, encode_image,
                        golomb_rice_decode, golomb_rice_encode, quantize_residual)
from ledd.evaluation import linf_bound, psnr_from_mse, rd_sweep, squared_error
from ledd.gradsuite import run_suite
from ledd.imageio import list_pgms, read_pgm
from ledd.network import ModelConfig, build_model, forward_refine
from ledd.training import TrainConfig, build_dataset, evaluate_pairs, train

DESK = TrainConfig()
HELD_OUT_TAUS = (4, 6, 8)


@pytest.fixture(scope="module")
def corpus():
    return [read_pgm(p) for p in list_pgms(CORPUS)]


def test_criterion_01_hard_linf_bound(corpus):
    t0 = time.process_time()
    violations, tau0_exact = 0, True
    for img in corpus:
        for tau in range(9):
            y = decode_image(encode_image(img, tau)[0].to_bytes())
            violations += linf_bound(y, img) > tau
            if tau == 0:
                tau0_exact &= y == img
    dt = time.process_time() - t0
    ok = len(corpus) == 20 and violations == 0 and tau0_exact and dt < 60
    assert report(1, ok, f"{len(corpus)} images x tau 0..8, violations={violations}, "
                         f"tau0 exact={tau0_exact}, {dt:.1f}s cpu")


def test_criterion_02_quantizer_oracle():
    t0 = time.process_time()
    bad = 0
    for tau in range(9):
        for e in range(-255, 256):
            e_hat = quantize_residual(e, tau).e_hat
            bad += abs(e - e_hat) > tau or e_hat % (2 * tau + 1) != 0
    dt = time.process_time() - t0
    assert report(2, bad == 0 and dt < 1, f"511 x 9 residuals, failures={bad}, {dt:.2f}s cpu")


def test_criterion_03_psnr_matches_uniform_model(corpus):
    t0 = time.process_time()
    parts = []
    ok = True
    for tau in (1, 2, 3, 4):
        sse = pixels = 0
        for img in corpus:
            sse += squared_error(decode_image(encode_image(img, tau)[0]), img)
            pixels += img.pixels.size
        measured = psnr_from_mse(sse / pixels)
        model = 10 * math.log10(3 * 255 ** 2 / (tau * (tau + 1)))
        ok &= abs(measured - model) <= 0.7
        parts.append(f"tau{tau} {measured:.2f}/{model:.2f}")
    dt = time.process_time() - t0
    ok &= dt < 60
    assert report(3, ok, f"measured/model dB: {', '.join(parts)}, {dt:.1f}s cpu")


def test_criterion_04_rate_sanity(corpus):
    ratios, monotone, bpp1 = [], True, []
    for img in corpus:
        bpps = [bits_per_pixel(encode_image(img, tau)[0]) for tau in range(9)]
        ratios.append(8.0 / bpps[0])
        monotone &= all(a > b for a, b in zip(bpps, bpps[1:]))
        bpp1.append(bpps[1])
    ratio, mean_bpp1 = float(np.mean(ratios)), float(np.mean(bpp1))
    ok = 1.3 <= ratio <= 3.0 and monotone and mean_bpp1 <= 2.61 * 1.25
    assert report(4, ok, f"tau0 ratio {ratio:.2f}:1 (range {min(ratios):.2f}-{max(ratios):.2f}), "
                         f"strictly decreasing={monotone}, tau1 {mean_bpp1:.2f} bpp (limit 3.26)")


@pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-3), (np.float64, 1e-6)])
def test_criterion_05_gradient_checks(dtype, tol):
    t0 = time.process_time()
    results = list(run_suite(dtype))
    dt = time.process_time() - t0
    worst_name, worst = max(((n, r) for n, r in results), key=lambda nr: nr[1].max_rel_error)
    ok = all(r.passed and r.tolerance == tol for _, r in results) and dt < 120
    bits = np.finfo(dtype).bits
    assert report(5, ok, f"{bits}-bit: {len(results)} checks, worst {worst_name} "
                         f"{worst.max_rel_error:.2e} <= {tol:g}, {dt:.1f}s cpu")


def test_criterion_06_truncation_guarantee(corpus):
    t0 = time.process_time()
    fresh = build_model(ModelConfig.desk(), 0)
    wild = build_model(ModelConfig.desk(), 1)
    rng = np.random.default_rng(0)
    for p in wild.parameters():
        p.data = (rng.standard_normal(p.shape) * 0.05).astype(np.float32)
    violations = 0
    for model in (fresh, wild):
        for img in corpus:
            for tau in range(1, 9):
                y = decode_image(encode_image(img, tau)[0])
                out = forward_refine(model, y, tau)
                violations += linf_bound(out, y) > tau or linf_bound(out, img) > 2 * tau
    dt = time.process_time() - t0
    ok = violations == 0 and dt < 120
    assert report(6, ok, f"2 models x {len(corpus)} images x tau 1..8, violations={violations}, "
                         f"{dt:.1f}s cpu")


def test_criterion_07_loss_identities():
    def px(v):
        return Tensor(np.full((1, 1, 1, 1), v, dtype=np.float64))

    zero_px = np.zeros((1, 1, 1, 1))
    tau = 2.0 / 255
    x = np.full((1, 1, 4, 4), 0.5)
    inside = x + np.linspace(-tau, tau, 16).reshape(1, 1, 4, 4)
    zero = linf_loss(Tensor(inside), x, tau).item()
    outside = inside.copy()
    outside[0, 0, 3, 3] += 1.0 / 1024
    positive = linf_loss(Tensor(outside), x, tau).item()
    single = linf_loss(px(tau + 0.1), zero_px, tau).item()
    steeper = all(linf_loss(px(tau + e), zero_px, tau).item() > truncated_l2_loss(px(tau + e), zero_px, tau).item()
                  for e in np.linspace(0, 0.5, 1001)[1:])
    ok = zero == 0.0 and positive > 0 and abs(single - 0.105361) <= 1e-6 and steeper
    assert report(7, ok, f"in-band loss {zero}, out-of-band {positive:.3g}, excess 0.1 -> {single:.6f}, "
                         f"linf > truncated l2 on (0, 0.5]: {steeper}")


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk") / "desk.lnw"
    t0 = time.process_time()
    model = train(TRAIN, DESK, out)
    return model, out, time.process_time() - t0


@pytest.mark.slow
def test_criterion_08_desk_training_efficacy(desk_run):
    model, _, train_cpu = desk_run
    n_pairs = len(list_pgms(TRAIN)) * 4 * len(DESK.taus)
    t0 = time.process_time()
    points = rd_sweep(CORPUS, HELD_OUT_TAUS, model)
    dt = train_cpu + time.process_time() - t0
    held_out = build_dataset(CORPUS, DESK)
    loss0 = evaluate_pairs(build_model(DESK.model_config(), DESK.seed), held_out, DESK.lam)["loss"]
    loss1 = evaluate_pairs(model, held_out, DESK.lam)["loss"]
    ok = n_pairs >= 200 and dt < 30 * 60
    parts = []
    for tau in HELD_OUT_TAUS:
        conv, ref = [p for p in points if p.tau == tau]
        gain = ref.psnr_db - conv.psnr_db
        ok &= gain > 0 and ref.linf_bound <= 2 * tau
        parts.append(f"tau{tau} {conv.psnr_db:.2f}->{ref.psnr_db:.2f} dB ({gain:+.3f}, linf {ref.linf_bound})")
    assert report(8, ok, f"{n_pairs} pairs, held-out: {'; '.join(parts)}, joint loss {loss0:.5e} -> "
                         f"{loss1:.5e}, {dt / 60:.1f} min cpu")


@pytest.mark.slow
def test_criterion_09_determinism(desk_run, tmp_path):
    _, first, train_cpu = desk_run
    t0 = time.process_time()
    ck, second = tmp_path / "half.lnk", tmp_path / "second.lnw"
    # the second run stops halfway, then resumes from its checkpoint
    train(TRAIN, DESK, checkpoint_path=ck, stop_after=DESK.epochs // 2)
    train(TRAIN, DESK, second, resume_from=ck)
    dt = time.process_time() - t0
    same = first.read_bytes() == second.read_bytes()
    ok = same and dt < 2 * train_cpu
    assert report(9, ok, f"seed {DESK.seed} rerun with resume at epoch {DESK.epochs // 2}: "
                         f"weights identical={same}, {dt / 60:.1f} min cpu")


def test_criterion_10_entropy_coder_roundtrip():
    t0 = time.process_time()
    rng = np.random.default_rng(10)
    ks = rng.integers(0, 17, 100_000)
    us = (rng.integers(0, 1 << 16, 100_000) >> rng.integers(0, 16, 100_000)).tolist()
    wr = BitWriter()
    for u, k in zip(us, ks.tolist()):
        golomb_rice_encode(wr, u, k)
    rd = BitReader(wr.getvalue(), wr.nbits)
    values_ok = [golomb_rice_decode(rd, k) for k in ks.tolist()] == us and rd.remaining == 0
    images_ok = 0
    for i in range(50):
        img = random_image(rng, int(rng.integers(1, 96)), int(rng.integers(1, 96)), smooth=bool(i % 2))
        tau = i % 9
        stream, rec = encode_image(img, tau)
        images_ok += decode_image(stream.to_bytes()) == rec
    dt = time.process_time() - t0
    ok = values_ok and images_ok == 50 and dt < 10
    assert report(10, ok, f"1e5 Rice pairs exact={values_ok}, {images_ok}/50 images exact, {dt:.1f}s cpu")
