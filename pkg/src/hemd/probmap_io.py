"""Probability-map sequences in and label-map sequences out.

A :class:`ProbMap` stores probabilities as integer hundredths (0..100), which
makes the two-decimal quantization exact and lets every threshold comparison
downstream run on integers.

File formats
------------
pgm16
    Binary PGM (``P5``), maxval 65535, big-endian samples. Probability is
    ``pixel / 65535``. Label maps are written in the same format with raw
    label values.
rawf32
    16-byte little-endian header: magic ``b"HPRB"``, u32 height, u32 width,
    u32 reserved (0); then ``height * width`` float32 values, row-major.
"""

from __future__ import annotations

import json
import re
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hemd.errors import EmptyError, FormatError, LabelOverflowError, RangeError, ShapeError

RAW_MAGIC = b"HPRB"
RAW_HEADER = struct.Struct("<4sIII")
FORMATS = ("pgm16", "rawf32")
_EXT = {"pgm16": ".pgm", "rawf32": ".raw"}
_BOUND_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class ProbMap:
    """One frame of foreground probability, quantized to 0.01 steps."""

    levels: np.ndarray  # int16 hundredths, shape (H, W)

    def __post_init__(self):
        lv = np.asarray(self.levels)
        if lv.ndim != 2 or lv.shape[0] < 1 or lv.shape[1] < 1:
            raise ShapeError(f"probability map must be a non-empty 2D grid, got shape {lv.shape}")
        if lv.size and (lv.min() < 0 or lv.max() > 100):
            raise RangeError("quantized levels must lie in 0..100")
        lv = lv.astype(np.int16, copy=True)
        lv.flags.writeable = False
        object.__setattr__(self, "levels", lv)

    @classmethod
    def from_values(cls, values) -> "ProbMap":
        return quantize(values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.levels.shape

    @property
    def values(self) -> np.ndarray:
        return self.levels / 100.0

    def __eq__(self, other):
        if not isinstance(other, ProbMap):
            return NotImplemented
        return np.array_equal(self.levels, other.levels)


def to_level(p: float) -> int:
    """Smallest level (hundredths) whose probability is >= ``p``."""
    return int(np.ceil(round(float(p) * 100, 6)))


def quantize(raw) -> ProbMap:
    """Round probabilities half-up to two decimals.

    The product ``x * 100`` is first rounded to 6 decimals to strip binary
    representation noise, so ``0.005`` and ``0.015`` both round up as their
    decimal spelling suggests. Values within 1e-9 outside [0, 1] are clamped.
    """
    if isinstance(raw, ProbMap):
        return raw
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if not np.all(np.isfinite(arr)):
        raise RangeError("probabilities must be finite")
    if arr.size and (arr.min() < -_BOUND_EPS or arr.max() > 1 + _BOUND_EPS):
        raise RangeError(f"probabilities outside [0, 1]: min {arr.min()}, max {arr.max()}")
    scaled = np.round(np.clip(arr, 0.0, 1.0) * 100.0, 6)
    return ProbMap(np.floor(scaled + 0.5).astype(np.int16))


# -- PGM -------------------------------------------------------------------

_PGM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def read_pgm16(path) -> np.ndarray:
    """Decode a binary 16-bit PGM into a uint16 array."""
    data = Path(path).read_bytes()
    pos = 0
    fields = []
    for _ in range(4):
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise FormatError(f"{path}: truncated PGM header")
        fields.append(m.group(1))
        pos = m.end()
    magic, w, h, maxval = fields
    if magic != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {magic!r})")
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PGM header") from exc
    if maxval != 65535:
        raise FormatError(f"{path}: expected maxval 65535, got {maxval}")
    if w < 1 or h < 1:
        raise FormatError(f"{path}: empty image")
    pos += 1  # single whitespace byte after maxval
    payload = data[pos:pos + 2 * w * h]
    if len(payload) != 2 * w * h:
        raise FormatError(f"{path}: expected {2 * w * h} payload bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype=">u2").reshape(h, w).astype(np.uint16)


def write_pgm16(path, array: np.ndarray) -> None:
    arr = np.asarray(array)
    if arr.ndim != 2:
        raise ShapeError("PGM images are 2D")
    if arr.size and (arr.min() < 0 or arr.max() > 65535):
        raise LabelOverflowError(f"{path}: values outside 0..65535")
    h, w = arr.shape
    header = f"P5\n{w} {h}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + arr.astype(">u2").tobytes())


# -- rawf32 ----------------------------------------------------------------

def read_rawf32(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < RAW_HEADER.size:
        raise FormatError(f"{path}: truncated rawf32 header")
    magic, h, w, _ = RAW_HEADER.unpack_from(data)
    if magic != RAW_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if h < 1 or w < 1:
        raise FormatError(f"{path}: empty image")
    payload = data[RAW_HEADER.size:]
    if len(payload) != 4 * h * w:
        raise FormatError(f"{path}: expected {4 * h * w} payload bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype="<f4").reshape(h, w)


def write_rawf32(path, array: np.ndarray) -> None:
    arr = np.asarray(array, dtype="<f4")
    if arr.ndim != 2:
        raise ShapeError("rawf32 images are 2D")
    h, w = arr.shape
    Path(path).write_bytes(RAW_HEADER.pack(RAW_MAGIC, h, w, 0) + arr.tobytes())


# -- sequences -------------------------------------------------------------

def frame_files(path, fmt: str) -> list[Path]:
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    directory = Path(path)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory} is not a directory")
    return sorted(directory.glob(f"frame_*{_EXT[fmt]}"))


def _decode_prob(path: Path, fmt: str) -> ProbMap:
    if fmt == "pgm16":
        return quantize(read_pgm16(path) / 65535.0)
    return quantize(read_rawf32(path).astype(np.float64))


def load_sequence(path, fmt: str = "pgm16", threads: int | None = None) -> list[ProbMap]:
    """Read ``frame_*.pgm`` / ``frame_*.raw`` in filename order."""
    files = frame_files(path, fmt)
    if not files:
        raise EmptyError(f"no {fmt} frames found in {path}")
    with ThreadPoolExecutor(max_workers=threads) as pool:
        frames = list(pool.map(lambda f: _decode_prob(f, fmt), files))
    check_sequence(frames)
    return frames


def check_sequence(frames: list[ProbMap]) -> None:
    if not frames:
        raise EmptyError("a sequence needs at least one frame")
    shape = frames[0].shape
    for i, f in enumerate(frames):
        if f.shape != shape:
            raise ShapeError(f"frame {i} has shape {f.shape}, expected {shape}")


def save_sequence(frames: list[ProbMap], path, fmt: str = "pgm16") -> list[Path]:
    """Write probability frames; the inverse of :func:`load_sequence`."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, f in enumerate(frames):
        target = out / f"frame_{i:04d}{_EXT[fmt]}"
        if fmt == "pgm16":
            write_pgm16(target, np.round(f.levels.astype(np.float64) * 655.35).astype(np.uint16))
        else:
            write_rawf32(target, f.values)
        written.append(target)
    return written


def save_labels(labels: list[np.ndarray], path) -> list[Path]:
    """Write one 16-bit PGM per frame plus ``instances.json`` with per-frame counts."""
    out = Path(path)
    for i, lab in enumerate(labels):
        lab = np.asarray(lab)
        if lab.size and lab.max() > 65535:
            raise LabelOverflowError(f"frame {i}: label {int(lab.max())} does not fit in 16 bits")
    out.mkdir(parents=True, exist_ok=True)
    written = []
    counts = []
    for i, lab in enumerate(labels):
        target = out / f"frame_{i:04d}.pgm"
        write_pgm16(target, np.asarray(lab))
        counts.append(int(np.unique(lab[lab > 0]).size))
        written.append(target)
    sidecar = {"frames": len(labels), "instances": counts}
    (out / "instances.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    return written


def load_labels(path) -> list[np.ndarray]:
    files = frame_files(path, "pgm16")
    if not files:
        raise EmptyError(f"no label frames found in {path}")
    labels = [read_pgm16(f).astype(np.int32) for f in files]
    shape = labels[0].shape
    for f, lab in zip(files, labels):
        if lab.shape != shape:
            raise ShapeError(f"{f.name} has shape {lab.shape}, expected {shape}")
    return labels
