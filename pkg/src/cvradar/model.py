"""Assembles the complex-valued material classifier and accounts for its size.

The network is two complex 5x5 convolution blocks (conv, batch norm, cReLU),
one 2x2 modulus max pool, an amplitude/phase flatten, and a single real
dense layer producing the five class logits.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .cvnn.layers import (
    ComplexBatchNorm,
    ComplexConv2d,
    DenseReal,
    complex_dtype,
    crelu,
    flatten_amp_phase,
    max_pool2d,
    real_dtype,
)
from .cvnn.tensor import CTensor, RTensor
from .errors import ConfigError, ConfigMismatchError, ShapeError, WeightsFormatError

WEIGHTS_MAGIC = b"SMCW"
WEIGHTS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Layer hyperparameters and seed for one classifier build.

    The reference configuration (the defaults) takes a full 400-channel,
    100-sample capture; desk-scale runs override ``input_height`` and
    ``input_width`` to match their reduced cubes.
    """

    in_channels: int = 1
    conv1_filters: int = 8
    conv2_filters: int = 3
    kernel_size: int = 5
    pool_size: int = 2
    input_height: int = 400
    input_width: int = 100
    num_classes: int = 5
    seed: int = 0
    precision: str = "f32"

    def __post_init__(self):
        for name in ("in_channels", "conv1_filters", "conv2_filters", "kernel_size",
                     "pool_size", "input_height", "input_width", "num_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"precision must be 'f32' or 'f64', got {self.precision!r}")

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.in_channels, self.input_height, self.input_width)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def stage_shapes(cfg: ModelConfig) -> list[tuple[str, tuple]]:
    """Shapes after each stage of the pipeline; raises naming the failing stage."""
    k, p = cfg.kernel_size, cfg.pool_size
    c, h, w = cfg.input_shape
    stages = [("input", (c, h, w))]

    def conv_stage(name, out_ch, h, w):
        if h < k or w < k:
            raise ShapeError(
                f"stage {name}: spatial input {h}x{w} is smaller than the {k}x{k} kernel"
            )
        return out_ch, h - k + 1, w - k + 1

    c, h, w = conv_stage("conv1", cfg.conv1_filters, h, w)
    stages.append(("conv1", (c, h, w)))
    c, h, w = conv_stage("conv2", cfg.conv2_filters, h, w)
    stages.append(("conv2", (c, h, w)))
    if h < p or w < p:
        raise ShapeError(f"stage pool: spatial input {h}x{w} is smaller than the {p}x{p} window")
    h, w = h // p, w // p
    stages.append(("pool", (c, h, w)))
    flat = 2 * c * h * w
    stages.append(("flatten", (flat,)))
    stages.append(("logits", (cfg.num_classes,)))
    return stages


class MaterialNet:
    """The assembled classifier; build through :func:`build_model`."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.stages = stage_shapes(cfg)
        flat_features = self.stages[-2][1][0]
        cdtype = complex_dtype(cfg.precision)
        rdtype = real_dtype(cfg.precision)
        rng = np.random.default_rng(cfg.seed)
        self.conv1 = ComplexConv2d(cfg.in_channels, cfg.conv1_filters, cfg.kernel_size,
                                   rng=rng, dtype=cdtype)
        self.bn1 = ComplexBatchNorm(cfg.conv1_filters, dtype=cdtype)
        self.conv2 = ComplexConv2d(cfg.conv1_filters, cfg.conv2_filters, cfg.kernel_size,
                                   rng=rng, dtype=cdtype)
        self.bn2 = ComplexBatchNorm(cfg.conv2_filters, dtype=cdtype)
        self.dense = DenseReal(flat_features, cfg.num_classes, rng=rng, dtype=rdtype)
        self._cdtype = np.dtype(cdtype)
        self._rdtype = np.dtype(rdtype)

    @property
    def num_classes(self) -> int:
        return self.cfg.num_classes

    @property
    def input_dtype(self) -> np.dtype:
        return self._cdtype

    def parameters(self) -> list:
        return (self.conv1.params() + self.bn1.params()
                + self.conv2.params() + self.bn2.params() + self.dense.params())

    def named_parameters(self) -> list[tuple[str, object]]:
        names = ["conv1.weight", "conv1.bias", "bn1.gamma", "bn1.beta",
                 "conv2.weight", "conv2.bias", "bn2.gamma", "bn2.beta",
                 "dense.weight", "dense.bias"]
        return list(zip(names, self.parameters()))

    def buffers(self) -> list[np.ndarray]:
        return self.bn1.buffers() + self.bn2.buffers()

    def train_mode(self) -> "MaterialNet":
        self.bn1.training = True
        self.bn2.training = True
        return self

    def eval_mode(self) -> "MaterialNet":
        self.bn1.training = False
        self.bn2.training = False
        return self

    @property
    def training(self) -> bool:
        return self.bn1.training

    def forward(self, x: CTensor) -> RTensor:
        expected = self.cfg.input_shape
        if x.data.ndim != 4 or x.shape[1:] != expected:
            raise ShapeError(
                f"model expects input (B, {expected[0]}, {expected[1]}, {expected[2]}), "
                f"got {x.shape}"
            )
        z = crelu(self.bn1(self.conv1(x)))
        z = crelu(self.bn2(self.conv2(z)))
        z = max_pool2d(z, self.cfg.pool_size)
        return self.dense(flatten_amp_phase(z))

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        """Eval-mode logits for a (B, C, H, W) input array; weights untouched."""
        arr = np.asarray(inputs).astype(self._cdtype, copy=False)
        was_training = self.training
        self.eval_mode()
        try:
            logits = self.forward(CTensor(arr)).data.copy()
        finally:
            if was_training:
                self.train_mode()
        return logits

    def state_arrays(self) -> list[np.ndarray]:
        return [p.data for p in self.parameters()] + list(self.buffers())

    def state_bytes(self) -> bytes:
        return b"".join(a.tobytes() for a in self.state_arrays())

    def set_buffers(self, arrays: list[np.ndarray]) -> None:
        self.bn1.running_mean, self.bn1.running_var = arrays[0], arrays[1]
        self.bn2.running_mean, self.bn2.running_var = arrays[2], arrays[3]


def build_model(cfg: ModelConfig) -> MaterialNet:
    """Build the network with seed-deterministic initial weights."""
    return MaterialNet(cfg)


def parameter_count(model: MaterialNet) -> int:
    """Total trainable real scalars; a complex scalar counts as two.

    Batch-norm running statistics are state, not parameters, and are
    excluded.
    """
    total = 0
    for p in model.parameters():
        total += 2 * p.size if np.iscomplexobj(p.data) else p.size
    return total


def save_weights(model: MaterialNet, sink: BinaryIO) -> int:
    """Write config plus all parameters and batch-norm buffers as f32."""
    cfg_blob = json.dumps(model.cfg.to_dict(), sort_keys=True).encode("utf-8")
    sink.write(WEIGHTS_MAGIC)
    sink.write(struct.pack("<II", WEIGHTS_FORMAT_VERSION, len(cfg_blob)))
    sink.write(cfg_blob)
    written = len(WEIGHTS_MAGIC) + 8 + len(cfg_blob)
    for arr in model.state_arrays():
        dtype = "<c8" if np.iscomplexobj(arr) else "<f4"
        blob = arr.astype(dtype).tobytes(order="C")
        sink.write(blob)
        written += len(blob)
    return written


def read_weights_config(source: BinaryIO) -> ModelConfig:
    """Parse the embedded model config from a weight stream header."""
    magic = source.read(4)
    if len(magic) < 4:
        raise WeightsFormatError("truncated weight stream: missing magic")
    if magic != WEIGHTS_MAGIC:
        raise WeightsFormatError(f"bad magic {magic!r}, expected {WEIGHTS_MAGIC!r}")
    head = source.read(8)
    if len(head) < 8:
        raise WeightsFormatError("truncated weight stream: incomplete header")
    version, cfg_len = struct.unpack("<II", head)
    if version != WEIGHTS_FORMAT_VERSION:
        raise WeightsFormatError(f"unsupported weight format version {version}")
    cfg_blob = source.read(cfg_len)
    if len(cfg_blob) < cfg_len:
        raise WeightsFormatError("truncated weight stream: incomplete config")
    try:
        return ModelConfig.from_dict(json.loads(cfg_blob.decode("utf-8")))
    except (ValueError, TypeError) as exc:
        raise WeightsFormatError(f"invalid embedded model config: {exc}") from None


def load_weights(model: MaterialNet, source: BinaryIO) -> None:
    """Restore parameters and buffers; rejects mismatched configurations."""
    file_cfg = read_weights_config(source)
    if file_cfg != model.cfg:
        diffs = [
            f"{name}: file={getattr(file_cfg, name)!r} model={getattr(model.cfg, name)!r}"
            for name in ModelConfig.__dataclass_fields__
            if getattr(file_cfg, name) != getattr(model.cfg, name)
        ]
        raise ConfigMismatchError(
            "weight file was produced under a different model config: " + "; ".join(diffs)
        )
    def read_array(like: np.ndarray) -> np.ndarray:
        dtype = "<c8" if np.iscomplexobj(like) else "<f4"
        nbytes = like.size * np.dtype(dtype).itemsize
        blob = source.read(nbytes)
        if len(blob) < nbytes:
            raise WeightsFormatError("truncated weight stream: incomplete tensor data")
        return np.frombuffer(blob, dtype=dtype).reshape(like.shape).astype(like.dtype)

    for param in model.parameters():
        param.data = read_array(param.data)
    new_buffers = [read_array(buf) for buf in model.buffers()]
    if source.read(1):
        raise WeightsFormatError("trailing bytes after final tensor")
    model.set_buffers(new_buffers)


def save_model(model: MaterialNet, path: str | Path) -> int:
    with open(path, "wb") as fh:
        return save_weights(model, fh)


def load_model(path: str | Path) -> MaterialNet:
    """Build a model from the config embedded in a weight file and load it."""
    with open(path, "rb") as fh:
        cfg = read_weights_config(fh)
        fh.seek(0)
        model = build_model(cfg)
        load_weights(model, fh)
    return model
