"""Multi-rate training of the refinement network."""

from __future__ import annotations

import dataclasses
import io
import json
import logging
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import joint_loss, no_grad
from .codec import decode_image, encode_image
from .imageio import GrayImage, extract_patches, list_pgms, read_pgm, round_half_away
from .network import (Model, ModelConfig, WeightFileError, build_model, read_model, read_named_arrays,
                      refine_batch, save_weights, write_model, write_named_arrays)

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"LNLK"
CHECKPOINT_VERSION = 1


class DatasetError(ValueError):
    pass


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    taus: tuple = (1, 2, 3, 4, 5, 6, 7, 8)
    patch: int = 64
    stride: int = 64
    batch: int = 8
    epochs_hi: int = 20
    epochs_lo: int = 10
    lr_hi: float = 1e-4
    lr_lo: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lam: float = 0.2
    seed: int = 0
    base_channels: int = 16
    num_body_blocks: int = 8

    def __post_init__(self):
        object.__setattr__(self, "taus", tuple(int(t) for t in self.taus))
        if not self.taus or any(not 1 <= t <= 8 for t in self.taus):
            raise ValueError(f"taus must be a non-empty subset of 1..8, got {self.taus}")
        if self.patch < 2 or self.patch % 2:
            raise ValueError("patch size must be even and >= 2")
        for name in ("stride", "batch", "base_channels", "num_body_blocks"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("epochs_hi", "epochs_lo"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("lr_hi", "lr_lo", "adam_eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.lam < 0:
            raise ValueError("betas must lie in [0, 1) and lam must be >= 0")

    @property
    def epochs(self) -> int:
        return self.epochs_hi + self.epochs_lo

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 1-based ``epoch``."""
        return self.lr_hi if epoch <= self.epochs_hi else self.lr_lo

    def model_config(self) -> ModelConfig:
        return ModelConfig(base_channels=self.base_channels, num_body_blocks=self.num_body_blocks)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_mapping(cls, values: dict) -> "TrainConfig":
        """Build from string values such as those of a key=value file."""
        kinds = {f.name: type(f.default) for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key == "lambda":
                key = "lam"
            if key not in kinds:
                raise ValueError(f"unknown training option {key!r}")
            if kinds[key] is tuple:
                kwargs[key] = parse_taus(raw) if isinstance(raw, str) else tuple(raw)
            else:
                kwargs[key] = kinds[key](raw)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        values = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value")
                key, value = line.split("=", 1)
                values[key.strip()] = value.strip()
        return cls.from_mapping(values)


def parse_taus(text: str) -> tuple:
    """'1,2,4' or '1-8' style lists."""
    taus = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            taus.extend(range(int(lo), int(hi) + 1))
        elif part:
            taus.append(int(part))
    return tuple(taus)


@dataclass(frozen=True)
class SamplePair:
    y_patch: GrayImage
    x_patch: GrayImage
    tau: int


def build_dataset(directory, cfg: TrainConfig) -> list:
    """Aligned (decoded, original) patches for every image and every tau.

    Whole images are coded before patching, so prediction contexts cross
    patch borders. Order: file name, then tau, then patch origin.
    """
    paths = list_pgms(directory)
    if not paths:
        raise DatasetError(f"no .pgm images in {directory}")
    pairs = []
    for path in paths:
        img = read_pgm(path)
        x_patches = extract_patches(img, cfg.patch, cfg.stride)
        for tau in cfg.taus:
            stream, _ = encode_image(img, tau)
            decoded = decode_image(stream)
            y_patches = extract_patches(decoded, cfg.patch, cfg.stride)
            pairs.extend(SamplePair(y, x, tau) for y, x in zip(y_patches, x_patches))
    if not pairs:
        raise DatasetError(f"images in {directory} are smaller than the {cfg.patch}px patch")
    return pairs


def stack_pairs(pairs):
    y = np.stack([p.y_patch.pixels for p in pairs])[:, None]
    x = np.stack([p.x_patch.pixels for p in pairs])[:, None]
    tau = np.array([p.tau for p in pairs])
    return y, x, tau


class Shuffler:
    """Fisher-Yates over raw PCG64 output with rejection sampling.

    Depends only on the PCG64 bit stream, not on numpy's Generator
    algorithms, so permutations stay fixed across numpy releases.
    """

    VERSION = 1

    def __init__(self, seed: int):
        self.bitgen = np.random.PCG64(seed)

    def _below(self, n: int) -> int:
        limit = (1 << 64) - (1 << 64) % n
        while True:
            r = int(self.bitgen.random_raw())
            if r < limit:
                return r % n

    def permutation(self, n: int) -> list:
        order = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self._below(i + 1)
            order[i], order[j] = order[j], order[i]
        return order

    @property
    def state(self) -> dict:
        return self.bitgen.state

    @state.setter
    def state(self, value: dict) -> None:
        self.bitgen.state = value


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros(cls, model: Model) -> "AdamState":
        return cls({n: np.zeros_like(p.data) for n, p in model.named_parameters()},
                   {n: np.zeros_like(p.data) for n, p in model.named_parameters()})


def adam_step(model: Model, grads: dict, state: AdamState, lr: float, cfg: TrainConfig) -> None:
    """One bias-corrected Adam update; parameters without a gradient see zero."""
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in model.named_parameters():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        step = (lr / c1) * m / (np.sqrt(v / c2) + cfg.adam_eps)
        p.data -= step.astype(p.data.dtype)


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    val_psnr: float
    conv_psnr: float


def _psnr_from_sse(sse: float, count: int) -> float:
    return math.inf if sse == 0 else 10.0 * math.log10(255.0 ** 2 * count / sse)


def evaluate_pairs(model: Model, pairs, lam: float, batch: int = 16) -> dict:
    """Joint loss and pooled PSNR (refined and conventional) over ``pairs``."""
    loss_sum = sse_ref = sse_conv = 0.0
    pixels = 0
    with no_grad():
        for start in range(0, len(pairs), batch):
            y, x, tau = stack_pairs(pairs[start:start + batch])
            out = refine_batch(model, y, tau)
            loss = joint_loss(out, x.astype(np.float32) / np.float32(255),
                              tau.reshape(-1, 1, 1, 1) / 255.0, lam)
            loss_sum += loss.item() * x.size
            refined = round_half_away(np.clip(out.data.astype(np.float64), 0, 1) * 255.0)
            sse_ref += float(np.sum((refined - x) ** 2))
            sse_conv += float(np.sum((y.astype(np.float64) - x) ** 2))
            pixels += x.size
    return {"loss": loss_sum / pixels, "psnr": _psnr_from_sse(sse_ref, pixels),
            "conv_psnr": _psnr_from_sse(sse_conv, pixels)}


def train_step(model: Model, pairs, state: AdamState, lr: float, cfg: TrainConfig) -> float:
    y, x, tau = stack_pairs(pairs)
    for p in model.parameters():
        p.grad = None
    out = refine_batch(model, y, tau)
    loss = joint_loss(out, x.astype(np.float32) / np.float32(255), tau.reshape(-1, 1, 1, 1) / 255.0,
                      cfg.lam)
    value = loss.item()
    if not math.isfinite(value):
        raise TrainingDivergedError(f"non-finite loss {value} at Adam step {state.step + 1}")
    loss.backward()
    adam_step(model, {n: p.grad for n, p in model.named_parameters()}, state, lr, cfg)
    return value


# --- checkpoints ----------------------------------------------------------

def save_checkpoint(path, model: Model, state: AdamState, epoch: int, shuffler: Shuffler,
                    cfg: TrainConfig) -> None:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC + struct.pack("<B", CHECKPOINT_VERSION))
    write_model(buf, model)
    buf.write(struct.pack("<IQ", epoch, state.step))
    names = [n for n, _ in model.named_parameters()]
    write_named_arrays(buf, [(f"m:{n}", state.m[n]) for n in names])
    write_named_arrays(buf, [(f"v:{n}", state.v[n]) for n in names])
    meta = json.dumps({"rng": shuffler.state, "shuffler_version": Shuffler.VERSION,
                       "config": json.loads(cfg.to_json())}, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(meta)) + meta)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


@dataclass
class Checkpoint:
    model: Model
    adam: AdamState
    epoch: int
    rng_state: dict
    config: dict = field(default_factory=dict)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        head = fh.read(5)
        if head[:4] != CHECKPOINT_MAGIC or len(head) < 5:
            raise WeightFileError(f"{path} is not a training checkpoint")
        if head[4] != CHECKPOINT_VERSION:
            raise WeightFileError(f"checkpoint version {head[4]} unsupported")
        model = read_model(fh)
        raw = fh.read(12)
        if len(raw) != 12:
            raise WeightFileError("checkpoint truncated")
        epoch, step = struct.unpack("<IQ", raw)
        m = {n[2:]: a for n, a in read_named_arrays(fh)}
        v = {n[2:]: a for n, a in read_named_arrays(fh)}
        raw = fh.read(4)
        if len(raw) != 4:
            raise WeightFileError("checkpoint truncated")
        (mlen,) = struct.unpack("<I", raw)
        meta_raw = fh.read(mlen)
        if len(meta_raw) != mlen:
            raise WeightFileError("checkpoint truncated")
        meta = json.loads(meta_raw.decode("utf-8"))
    if meta.get("shuffler_version") != Shuffler.VERSION:
        raise WeightFileError("checkpoint written by a different shuffler version")
    return Checkpoint(model, AdamState(m, v, step), epoch, meta["rng"], meta["config"])


# --- loops ----------------------------------------------------------------

def train(data_dir, cfg: TrainConfig, out_path=None, val_dir=None, checkpoint_path=None,
          resume_from=None, stop_after: int | None = None, on_epoch=None) -> Model:
    """Train on every (patch, tau) pair from ``data_dir``.

    Validation uses ``val_dir`` when given, otherwise the training pairs.
    A checkpoint is written after every epoch when ``checkpoint_path`` is
    set; ``resume_from`` continues such a checkpoint bit-exactly.
    ``stop_after`` halts once that many epochs are complete. ``on_epoch``
    receives an :class:`EpochLog`, starting with epoch 0 (before training).
    """
    pairs = build_dataset(data_dir, cfg)
    val_pairs = build_dataset(val_dir, cfg) if val_dir is not None else pairs
    log.info("training on %d pairs, validating on %d", len(pairs), len(val_pairs))

    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        if ckpt.config != json.loads(cfg.to_json()):
            raise ValueError("checkpoint was written with a different training config")
        model, state, done = ckpt.model, ckpt.adam, ckpt.epoch
        shuffler = Shuffler(cfg.seed)
        shuffler.state = ckpt.rng_state
    else:
        model = build_model(cfg.model_config(), cfg.seed)
        state = AdamState.zeros(model)
        shuffler = Shuffler(cfg.seed)
        done = 0
        if on_epoch is not None:
            train_eval = evaluate_pairs(model, pairs, cfg.lam)
            val = evaluate_pairs(model, val_pairs, cfg.lam) if val_dir is not None else train_eval
            on_epoch(EpochLog(0, 0.0, train_eval["loss"], val["loss"], val["psnr"], val["conv_psnr"]))

    last = cfg.epochs if stop_after is None else min(cfg.epochs, stop_after)
    for epoch in range(done + 1, last + 1):
        lr = cfg.lr_at(epoch)
        order = shuffler.permutation(len(pairs))
        total = 0.0
        for start in range(0, len(order), cfg.batch):
            chunk = [pairs[i] for i in order[start:start + cfg.batch]]
            total += train_step(model, chunk, state, lr, cfg) * len(chunk)
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, model, state, epoch, shuffler, cfg)
        if on_epoch is not None:
            val = evaluate_pairs(model, val_pairs, cfg.lam)
            on_epoch(EpochLog(epoch, lr, total / len(pairs), val["loss"], val["psnr"], val["conv_psnr"]))

    if out_path is not None:
        save_weights(model, out_path)
    return model


def train_single_rate(data_dir, cfg: TrainConfig, out_path=None, **kwargs) -> Model:
    """Rate-specific model: :func:`train` restricted to one tau."""
    if len(cfg.taus) != 1:
        raise ValueError(f"single-rate training needs exactly one tau, got {cfg.taus}")
    return train(data_dir, cfg, out_path, **kwargs)
