"""Supervised training loop: Adam over minibatches of preprocessed cubes.

Defaults follow the reference regimen: 10 epochs, batch size 16,
cross-entropy loss.  Inputs are scaled per sample by the maximum modulus
over the cube before entering the network; the d0 pool is split per
(class, distance) cell so every cell is trained and tested equally.
"""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .cvnn.layers import softmax_cross_entropy
from .cvnn.tensor import CTensor
from .datacube import DataCube, DatasetManifest, ManifestEntry, MaterialClass
from .dsp import PreprocMode, normalize_max_modulus, preprocess_cube
from .errors import ConfigError, SplitError, TrainingDivergedError
from .model import MaterialNet


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 16
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    preproc_mode: PreprocMode = PreprocMode.RANGE_FFT
    split_fraction: float = 0.8
    seed: int = 0
    precision: str = "f32"

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.split_fraction <= 1.0:
            raise ConfigError(f"split_fraction must be in (0, 1], got {self.split_fraction}")
        object.__setattr__(self, "preproc_mode", PreprocMode(self.preproc_mode))


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    train_acc: float
    wall_ms: float


class Adam:
    """Adam over the model parameters.

    Complex parameters are updated through their real and imaginary parts
    independently; the second-moment buffer packs the two component
    estimates into one complex array.
    """

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            if np.iscomplexobj(g):
                v += (1.0 - self.beta2) * (g.real ** 2 + 1j * (g.imag ** 2))
                m_hat = m / bc1
                v_hat = v / bc2
                update = (m_hat.real / (np.sqrt(v_hat.real) + self.eps)
                          + 1j * (m_hat.imag / (np.sqrt(v_hat.imag) + self.eps)))
            else:
                v += (1.0 - self.beta2) * (g ** 2)
                update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data = p.data - self.lr * update.astype(p.data.dtype, copy=False)


def stratified_split(manifest: DatasetManifest | Sequence[ManifestEntry],
                     fraction: float = 0.8, seed: int = 0
                     ) -> tuple[list[ManifestEntry], list[ManifestEntry]]:
    """Split the d0 pool per (class, distance) cell at ``fraction``.

    Entries tagged ``train`` or ``test_d0`` form the pool; ``test_d1``
    entries pass through untouched (they are simply not returned).  Cell
    membership is independent of input order: cells are sorted by path
    before the seeded shuffle.  Each cell keeps at least one test sample
    whenever ``fraction`` < 1.
    """
    entries = manifest.entries if isinstance(manifest, DatasetManifest) else list(manifest)
    if not 0.0 < fraction <= 1.0:
        raise SplitError(f"fraction must be in (0, 1], got {fraction}")
    cells: dict[tuple[int, int], list[ManifestEntry]] = {}
    for entry in entries:
        if entry.split in ("train", "test_d0"):
            cells.setdefault((int(entry.label), entry.distance_mm), []).append(entry)
    train_out: list[ManifestEntry] = []
    test_out: list[ManifestEntry] = []
    for key in sorted(cells):
        members = sorted(cells[key], key=lambda e: e.path)
        if len(members) < 2:
            label, distance = key
            raise SplitError(
                f"cell (class={MaterialClass(label).name.lower()}, distance={distance} mm) "
                f"has only {len(members)} sample(s); need >= 2 to split"
            )
        rng = np.random.default_rng([seed, key[0], key[1]])
        perm = rng.permutation(len(members))
        n_train = int(round(fraction * len(members)))
        if fraction < 1.0:
            n_train = min(n_train, len(members) - 1)
        n_train = max(n_train, 1)
        train_out += [replace(members[i], split="train") for i in perm[:n_train]]
        test_out += [replace(members[i], split="test_d0") for i in perm[n_train:]]
    if not test_out:
        warnings.warn("stratified_split produced an empty d0 test set (fraction = 1.0)")
    return train_out, test_out


def prepare_inputs(cubes: Sequence[DataCube], mode: PreprocMode, precision: str = "f32"
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Preprocess, max-modulus normalize, and stack cubes into (N, 1, H, W)."""
    if not cubes:
        raise ValueError("no cubes to prepare")
    dtype = np.complex64 if precision == "f32" else np.complex128
    mats = [normalize_max_modulus(preprocess_cube(c, mode)) for c in cubes]
    x = np.stack(mats).astype(dtype)[:, None, :, :]
    y = np.array([int(c.label) for c in cubes], dtype=np.int64)
    return x, y


def iter_batches(n: int, batch_size: int, rng: np.random.Generator):
    """Seeded epoch shuffle; yields every index exactly once, last batch kept."""
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def _divergence_diagnostics(model: MaterialNet, cfg: TrainConfig, epoch: int) -> str:
    norms = ", ".join(
        f"{name}={float(np.linalg.norm(p.data.ravel())):.3e}"
        for name, p in model.named_parameters()
    )
    return (f"non-finite loss in epoch {epoch} (lr={cfg.learning_rate}); "
            f"parameter norms: {norms}")


def train(model: MaterialNet, cubes: Sequence[DataCube], cfg: TrainConfig,
          log_path: str | Path | None = None) -> list[EpochRecord]:
    """Train in place; returns one record per epoch (mean loss, accuracy).

    Epoch batches are seeded and the whole run is deterministic for a
    fixed (model seed, config, corpus).
    """
    if not cubes:
        raise ConfigError("training set is empty")
    if cfg.precision != model.cfg.precision:
        raise ConfigError(
            f"train precision {cfg.precision!r} differs from model precision "
            f"{model.cfg.precision!r}"
        )
    x_all, y_all = prepare_inputs(cubes, cfg.preproc_mode, cfg.precision)
    n = len(y_all)
    rng = np.random.default_rng([cfg.seed, 1])
    optimizer = Adam(model.parameters(), lr=cfg.learning_rate,
                     beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
    model.train_mode()
    records: list[EpochRecord] = []
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        loss_sum = 0.0
        correct = 0
        for idx in iter_batches(n, cfg.batch_size, rng):
            xb = CTensor(x_all[idx])
            yb = y_all[idx]
            logits = model.forward(xb)
            loss = softmax_cross_entropy(logits, yb)
            loss_value = float(loss.data)
            if not np.isfinite(loss_value):
                raise TrainingDivergedError(_divergence_diagnostics(model, cfg, epoch))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            loss_sum += loss_value * len(idx)
            correct += int((np.argmax(logits.data, axis=1) == yb).sum())
        records.append(EpochRecord(
            epoch=epoch,
            loss=loss_sum / n,
            train_acc=correct / n,
            wall_ms=(time.perf_counter() - t0) * 1000.0,
        ))
    if log_path is not None:
        write_log(records, log_path)
    return records


def write_log(records: Sequence[EpochRecord], path: str | Path) -> None:
    """Training log as CSV: epoch, loss, train_acc, wall_ms."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "train_acc", "wall_ms"])
        for r in records:
            writer.writerow([r.epoch, f"{r.loss:.9g}", f"{r.train_acc:.6f}", f"{r.wall_ms:.1f}"])
