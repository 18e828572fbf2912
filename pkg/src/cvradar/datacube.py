"""Radar capture data model, binary serialization, and dataset manifests.

A capture ("datacube") holds the complex IQ samples of one single-shot
measurement from a MIMO FMCW radar: one row per virtual Rx-Tx channel,
one column per fast-time sample.  Cubes serialize to a small self-describing
binary format ("RDC1") and datasets are described by JSON-lines manifests.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .errors import CubeFormatError, ManifestError, ShapeError

CUBE_MAGIC = b"RDC1"
CUBE_FORMAT_VERSION = 1

# Reference sensor geometry: 20x20 virtual array, 100 fast-time samples.
REFERENCE_RX = 20
REFERENCE_TX = 20
REFERENCE_FAST_TIME = 100

_HEADER_STRUCT = struct.Struct("<8I")
_MAX_CUBE_ELEMENTS = 1 << 26  # 64M complex samples; guards absurd headers

SPLIT_TAGS = ("train", "test_d0", "test_d1")


class MaterialClass(IntEnum):
    """The five surface classes, with stable integer ids."""

    CONCRETE = 0
    DRYWALL = 1
    GLASS = 2
    METAL = 3
    WOOD = 4

    @classmethod
    def from_name(cls, name: str) -> "MaterialClass":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ManifestError(f"unknown material class {name!r}") from None


NUM_CLASSES = len(MaterialClass)


@dataclass(frozen=True, eq=False)
class DataCube:
    """One radar capture: (rx_count*tx_count) x fast_time_len complex IQ matrix.

    IQ samples are stored as complex64; arrays of other complex dtypes are
    converted on construction.  Instances are immutable after construction
    and safe to share across threads.
    """

    rx_count: int
    tx_count: int
    fast_time_len: int
    iq: np.ndarray
    label: MaterialClass
    distance_mm: int
    session_id: int = 0
    sample_id: int = 0

    def __post_init__(self):
        iq = np.asarray(self.iq, dtype=np.complex64)
        expected = (self.rx_count * self.tx_count, self.fast_time_len)
        if iq.shape != expected:
            raise ShapeError(
                f"iq matrix has shape {iq.shape}, expected {expected} "
                f"for rx={self.rx_count}, tx={self.tx_count}, n={self.fast_time_len}"
            )
        if self.distance_mm <= 0:
            raise ValueError(f"distance_mm must be positive, got {self.distance_mm}")
        iq = np.ascontiguousarray(iq)
        iq.flags.writeable = False
        object.__setattr__(self, "iq", iq)
        object.__setattr__(self, "label", MaterialClass(self.label))

    @property
    def channel_count(self) -> int:
        return self.rx_count * self.tx_count

    def __eq__(self, other) -> bool:
        if not isinstance(other, DataCube):
            return NotImplemented
        return (
            self.rx_count == other.rx_count
            and self.tx_count == other.tx_count
            and self.fast_time_len == other.fast_time_len
            and self.label == other.label
            and self.distance_mm == other.distance_mm
            and self.session_id == other.session_id
            and self.sample_id == other.sample_id
            and self.iq.tobytes() == other.iq.tobytes()
        )


def reshape_cube(raw: np.ndarray, rx_count: int, tx_count: int, fast_time_len: int) -> np.ndarray:
    """Flatten a raw (Rx, Tx, N) capture into the (Rx*Tx, N) channel matrix.

    Channel row ``l = rx * tx_count + tx`` holds the fast-time samples of the
    (rx, tx) antenna pair; the mapping is bijective and lossless.
    """
    raw = np.asarray(raw)
    expected = (rx_count, tx_count, fast_time_len)
    if raw.shape != expected:
        raise ShapeError(f"raw cube has shape {raw.shape}, expected {expected}")
    return raw.reshape(rx_count * tx_count, fast_time_len)


def write_cube(cube: DataCube, sink: BinaryIO) -> int:
    """Serialize a cube to ``sink`` in the RDC1 format; returns bytes written.

    Layout: magic "RDC1", eight little-endian u32 header fields (version,
    rx_count, tx_count, fast_time_len, label_id, distance_mm, session_id,
    sample_id), then interleaved (I, Q) float32 pairs, channel-major.
    """
    header = _HEADER_STRUCT.pack(
        CUBE_FORMAT_VERSION,
        cube.rx_count,
        cube.tx_count,
        cube.fast_time_len,
        int(cube.label),
        cube.distance_mm,
        cube.session_id,
        cube.sample_id,
    )
    payload = cube.iq.astype("<c8", copy=False).tobytes(order="C")
    sink.write(CUBE_MAGIC)
    sink.write(header)
    sink.write(payload)
    return len(CUBE_MAGIC) + len(header) + len(payload)


def read_cube(source: BinaryIO) -> DataCube:
    """Parse one RDC1 cube from ``source``; inverse of :func:`write_cube`."""
    magic = source.read(4)
    if len(magic) < 4:
        raise CubeFormatError("truncated stream: missing magic")
    if magic != CUBE_MAGIC:
        raise CubeFormatError(f"bad magic {magic!r}, expected {CUBE_MAGIC!r}")
    raw_header = source.read(_HEADER_STRUCT.size)
    if len(raw_header) < _HEADER_STRUCT.size:
        raise CubeFormatError("truncated stream: incomplete header")
    version, rx, tx, n, label_id, distance_mm, session_id, sample_id = _HEADER_STRUCT.unpack(raw_header)
    if version != CUBE_FORMAT_VERSION:
        raise CubeFormatError(f"unsupported format version {version}")
    if min(rx, tx, n) < 1:
        raise CubeFormatError(f"invalid dimensions rx={rx}, tx={tx}, n={n}")
    if rx * tx * n > _MAX_CUBE_ELEMENTS:
        raise CubeFormatError(f"dimension overflow: rx*tx*n = {rx * tx * n} exceeds limit")
    if label_id >= NUM_CLASSES:
        raise CubeFormatError(f"label id {label_id} out of range")
    count = rx * tx * n
    payload = source.read(8 * count)
    if len(payload) < 8 * count:
        raise CubeFormatError(
            f"truncated stream: expected {8 * count} payload bytes, got {len(payload)}"
        )
    iq = np.frombuffer(payload, dtype="<c8").reshape(rx * tx, n)
    return DataCube(
        rx_count=rx,
        tx_count=tx,
        fast_time_len=n,
        iq=iq,
        label=MaterialClass(label_id),
        distance_mm=distance_mm,
        session_id=session_id,
        sample_id=sample_id,
    )


def save_cube(cube: DataCube, path: str | Path) -> int:
    with open(path, "wb") as fh:
        return write_cube(cube, fh)


def load_cube(path: str | Path) -> DataCube:
    with open(path, "rb") as fh:
        return read_cube(fh)


@dataclass(frozen=True)
class ManifestEntry:
    """One manifest row: a cube file plus the metadata it must match."""

    path: str
    label: MaterialClass
    distance_mm: int
    session_id: int
    split: str

    def __post_init__(self):
        if self.split not in SPLIT_TAGS:
            raise ManifestError(f"unknown split tag {self.split!r} (expected one of {SPLIT_TAGS})")
        object.__setattr__(self, "label", MaterialClass(self.label))


@dataclass(frozen=True)
class DatasetManifest:
    """All entries of one dataset, with the directory paths are relative to."""

    entries: tuple[ManifestEntry, ...]
    root: Path = field(default_factory=Path)

    def by_split(self, split: str) -> list[ManifestEntry]:
        if split not in SPLIT_TAGS:
            raise ManifestError(f"unknown split tag {split!r}")
        return [e for e in self.entries if e.split == split]

    def distances(self, split: str) -> set[int]:
        return {e.distance_mm for e in self.by_split(split)}

    def full_path(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p

    def __len__(self) -> int:
        return len(self.entries)


_MANIFEST_KEYS = {"path", "label", "distance_mm", "session_id", "split"}


def _check_distance_disjointness(entries: Sequence[ManifestEntry]) -> None:
    train_d = {e.distance_mm for e in entries if e.split == "train"}
    d1 = {e.distance_mm for e in entries if e.split == "test_d1"}
    overlap = train_d & d1
    if overlap:
        raise ManifestError(
            f"test_d1 distances {sorted(overlap)} also appear in train entries; "
            "unknown-distance entries must be disjoint from training distances"
        )


def load_manifest(path: str | Path, verify_files: bool = True) -> DatasetManifest:
    """Load and eagerly validate a JSON-lines manifest.

    Checks that split tags are known, that test_d1 distances never occur in
    train entries, and (unless ``verify_files`` is disabled) that every
    referenced file parses as a cube whose metadata matches its row.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest file not found: {path}")
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            if not isinstance(row, dict) or set(row) != _MANIFEST_KEYS:
                raise ManifestError(
                    f"{path}:{lineno}: expected keys {sorted(_MANIFEST_KEYS)}, got {sorted(row)}"
                )
            entries.append(
                ManifestEntry(
                    path=row["path"],
                    label=MaterialClass.from_name(str(row["label"])),
                    distance_mm=int(row["distance_mm"]),
                    session_id=int(row["session_id"]),
                    split=row["split"],
                )
            )
    _check_distance_disjointness(entries)
    manifest = DatasetManifest(entries=tuple(entries), root=path.parent)
    if verify_files:
        for entry in manifest.entries:
            cube_path = manifest.full_path(entry)
            if not cube_path.is_file():
                raise ManifestError(f"manifest references missing file: {cube_path}")
            try:
                cube = load_cube(cube_path)
            except CubeFormatError as exc:
                raise ManifestError(f"{cube_path}: {exc}") from None
            if (
                cube.label != entry.label
                or cube.distance_mm != entry.distance_mm
                or cube.session_id != entry.session_id
            ):
                raise ManifestError(
                    f"{cube_path}: cube metadata (label={cube.label.name.lower()}, "
                    f"distance_mm={cube.distance_mm}, session_id={cube.session_id}) "
                    f"does not match manifest row (label={entry.label.name.lower()}, "
                    f"distance_mm={entry.distance_mm}, session_id={entry.session_id})"
                )
    return manifest


def save_manifest(entries: Iterable[ManifestEntry], path: str | Path) -> None:
    """Write entries as one JSON object per line, validating disjointness."""
    entries = list(entries)
    _check_distance_disjointness(entries)
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(
                json.dumps(
                    {
                        "path": e.path,
                        "label": e.label.name.lower(),
                        "distance_mm": e.distance_mm,
                        "session_id": e.session_id,
                        "split": e.split,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_cubes(manifest: DatasetManifest, entries: Sequence[ManifestEntry]) -> list[DataCube]:
    """Read the cube files for ``entries`` resolved against the manifest root."""
    return [load_cube(manifest.full_path(e)) for e in entries]
