"""The l-infinity refinement CNN and its weight file format.

Layout: head conv -> downsampling residual block -> dilated residual body
-> upsampling residual block -> tail conv, plus a global skip from the
decoded input. The result is clamped into ``[y - tau, y + tau]``.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .autodiff import Tensor, TruncationBounds, add, conv2d, no_grad, relu, truncate, upsample_nearest2x
from .imageio import GrayImage, from_normalized

WEIGHT_MAGIC = b"LNLW"
WEIGHT_VERSION = 1
MAX_TAU = 8


class WeightFileError(ValueError):
    pass


class ConfigMismatchError(WeightFileError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    base_channels: int = 64
    num_body_blocks: int = 8
    dilation: int = 2
    kernel: int = 3

    def __post_init__(self):
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.num_body_blocks < 1:
            raise ValueError("num_body_blocks must be >= 1")
        if self.dilation != 2 or self.kernel != 3:
            raise ValueError("dilation is fixed at 2 and kernel at 3")

    @classmethod
    def desk(cls) -> "ModelConfig":
        return cls(base_channels=16)


class LayerSpec(NamedTuple):
    name: str
    in_ch: int
    out_ch: int
    kernel: int
    stride: int = 1
    dilation: int = 1


def layer_specs(cfg: ModelConfig) -> list:
    b, wide, k = cfg.base_channels, 2 * cfg.base_channels, cfg.kernel
    specs = [
        LayerSpec("head", 1, b, k),
        LayerSpec("down.conv1", b, wide, k, stride=2),
        LayerSpec("down.conv2", wide, wide, k),
        LayerSpec("down.skip", b, wide, 1, stride=2),
    ]
    for i in range(cfg.num_body_blocks):
        specs.append(LayerSpec(f"body.{i}.conv1", wide, wide, k, dilation=cfg.dilation))
        specs.append(LayerSpec(f"body.{i}.conv2", wide, wide, k, dilation=cfg.dilation))
    specs += [
        LayerSpec("up.conv1", wide, b, k),
        LayerSpec("up.conv2", b, b, k),
        LayerSpec("up.skip", wide, b, 1),
        LayerSpec("tail", b, 1, k),
    ]
    return specs


def parameter_shapes(cfg: ModelConfig) -> dict:
    shapes = {}
    for s in layer_specs(cfg):
        shapes[f"{s.name}.weight"] = (s.out_ch, s.in_ch, s.kernel, s.kernel)
        shapes[f"{s.name}.bias"] = (s.out_ch,)
    return shapes


class Model:
    def __init__(self, config: ModelConfig, params: dict):
        expected = parameter_shapes(config)
        if list(params) != list(expected):
            raise ValueError("parameter names do not match the configuration")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ValueError(f"{name}: shape {params[name].shape}, expected {shape}")
        self.config = config
        self.params = params
        self._specs = {s.name: s for s in layer_specs(config)}

    def parameters(self) -> list:
        return list(self.params.values())

    def named_parameters(self):
        return self.params.items()

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def _conv(self, name, x):
        s = self._specs[name]
        return conv2d(x, self.params[f"{name}.weight"], self.params[f"{name}.bias"],
                      stride=s.stride, dilation=s.dilation)

    def forward(self, y: Tensor) -> Tensor:
        """Pre-truncation output: tail features plus the input itself."""
        h = relu(self._conv("head", y))

        t = relu(self._conv("down.conv1", h))
        h = add(self._conv("down.conv2", t), self._conv("down.skip", h))

        for i in range(self.config.num_body_blocks):
            t = relu(self._conv(f"body.{i}.conv1", h))
            h = add(h, self._conv(f"body.{i}.conv2", t))

        u = upsample_nearest2x(h)
        t = relu(self._conv("up.conv1", u))
        h = add(self._conv("up.conv2", t), self._conv("up.skip", u))

        return add(self._conv("tail", h), y)

    __call__ = forward

    def state_equal(self, other: "Model") -> bool:
        return self.config == other.config and all(
            np.array_equal(a.data, b.data) and a.data.dtype == b.data.dtype
            for a, b in zip(self.parameters(), other.parameters()))


def build_model(cfg: ModelConfig | None = None, seed: int = 0) -> Model:
    """Kaiming-uniform weights (fan-in) and zero biases.

    The tail and the last conv of every residual branch start at zero, so a
    fresh model maps ``y`` to itself and the body starts as a chain of
    identity blocks.
    """
    cfg = cfg or ModelConfig.desk()
    rng = np.random.Generator(np.random.PCG64(seed))
    zero_init = {"tail", "down.conv2", "up.conv2"}
    zero_init.update(f"body.{i}.conv2" for i in range(cfg.num_body_blocks))
    params = {}
    for s in layer_specs(cfg):
        shape = (s.out_ch, s.in_ch, s.kernel, s.kernel)
        if s.name in zero_init:
            w = np.zeros(shape, np.float32)
        else:
            bound = np.sqrt(6.0 / (s.in_ch * s.kernel * s.kernel))
            w = rng.uniform(-bound, bound, size=shape).astype(np.float32)
        params[f"{s.name}.weight"] = Tensor(w, requires_grad=True, name=f"{s.name}.weight")
        params[f"{s.name}.bias"] = Tensor(np.zeros(s.out_ch, np.float32), requires_grad=True,
                                          name=f"{s.name}.bias")
    return Model(cfg, params)


def refine_batch(model: Model, y_pixels, tau) -> Tensor:
    """Truncated network output for integer inputs of shape (N, 1, H, W).

    ``tau`` is an int or one value per sample; the result lies in
    ``[(y - tau)/255, (y + tau)/255]`` elementwise.
    """
    y_pixels = np.asarray(y_pixels)
    tau = np.asarray(tau)
    if tau.ndim:
        tau = tau.reshape(-1, 1, 1, 1)
    y = Tensor(y_pixels.astype(np.float32) / np.float32(255))
    bounds = TruncationBounds.from_pixels(y_pixels, tau)
    return truncate(model(y), bounds)


def _pad_even(px: np.ndarray) -> np.ndarray:
    pads = [(0, px.shape[0] % 2), (0, px.shape[1] % 2)]
    if not any(p for _, p in pads):
        return px
    mode = "reflect" if min(px.shape) >= 2 else "edge"
    return np.pad(px, pads, mode=mode)


def forward_refine(model: Model, y_img: GrayImage, tau: int) -> GrayImage:
    """Restore a conventionally decoded image; output stays within tau of ``y_img``."""
    if not 0 <= int(tau) <= MAX_TAU:
        raise ValueError(f"tau must be in [0, {MAX_TAU}], got {tau}")
    px = _pad_even(y_img.pixels)
    with no_grad():
        out = refine_batch(model, px[None, None], int(tau))
    return from_normalized(out.data[:, :, :y_img.height, :y_img.width])


# --- weight files ---------------------------------------------------------

_CFG = struct.Struct("<IIII")


def write_named_arrays(fh, arrays) -> None:
    fh.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays:
        raw = name.encode("utf-8")
        fh.write(struct.pack("<H", len(raw)) + raw)
        fh.write(struct.pack("<B", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(fh, n):
    data = fh.read(n)
    if len(data) != n:
        raise WeightFileError("file truncated")
    return data


def read_named_arrays(fh) -> list:
    (count,) = struct.unpack("<I", _read_exact(fh, 4))
    arrays = []
    for _ in range(count):
        (nlen,) = struct.unpack("<H", _read_exact(fh, 2))
        name = _read_exact(fh, nlen).decode("utf-8")
        (rank,) = struct.unpack("<B", _read_exact(fh, 1))
        dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank))
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(_read_exact(fh, 4 * n), dtype="<f4").astype(np.float32).reshape(dims)
        arrays.append((name, arr))
    return arrays


def write_model(fh, model: Model) -> None:
    c = model.config
    fh.write(WEIGHT_MAGIC + struct.pack("<B", WEIGHT_VERSION))
    fh.write(_CFG.pack(c.base_channels, c.num_body_blocks, c.dilation, c.kernel))
    write_named_arrays(fh, [(n, p.data) for n, p in model.named_parameters()])


def read_model(fh, expected: ModelConfig | None = None) -> Model:
    head = _read_exact(fh, 5)
    if head[:4] != WEIGHT_MAGIC:
        raise WeightFileError(f"bad magic {head[:4]!r}")
    if head[4] != WEIGHT_VERSION:
        raise WeightFileError(f"weight file version {head[4]}, expected {WEIGHT_VERSION}")
    try:
        cfg = ModelConfig(*_CFG.unpack(_read_exact(fh, _CFG.size)))
    except ValueError as exc:
        if isinstance(exc, WeightFileError):
            raise
        raise WeightFileError(f"invalid embedded config: {exc}") from None
    if expected is not None and cfg != expected:
        raise ConfigMismatchError(f"file holds {cfg}, expected {expected}")
    arrays = read_named_arrays(fh)
    shapes = parameter_shapes(cfg)
    if [n for n, _ in arrays] != list(shapes):
        raise WeightFileError("parameter names do not match the embedded config")
    params = {}
    for name, arr in arrays:
        if arr.shape != shapes[name]:
            raise WeightFileError(f"{name}: shape {arr.shape}, config implies {shapes[name]}")
        params[name] = Tensor(arr.copy(), requires_grad=True, name=name)
    return Model(cfg, params)


def save_weights(model: Model, path) -> None:
    buf = io.BytesIO()
    write_model(buf, model)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_weights(path, expected: ModelConfig | None = None) -> Model:
    with open(path, "rb") as fh:
        model = read_model(fh, expected)
        if fh.read(1):
            raise WeightFileError("trailing bytes after the last parameter")
    return model
