"""2D float image container, bit-exact file formats, and dataset manifests.

The on-disk formats are deliberately minimal so that every value round-trips
bit-exactly through float32:

  .f32g   magic ``F32G`` | u32 version=1 | u32 height | u32 width | float32[h*w]
  .maskg  same layout, magic ``MSKG``, payload values restricted to {0.0, 1.0}

All multi-byte fields are little-endian; pixels are row-major.

Manifests are UTF-8 text files, one entry per line: either a single relative
image path or ``<image>\t<mask>``.  Blank lines and ``#`` comments are skipped.
Entry order is the canonical iteration order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GRID_MAGIC = b"F32G"
MASK_MAGIC = b"MSKG"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIII")  # magic, version, height, width


class GridIOError(Exception):
    """Base class for grid/mask file format errors."""


class BadMagicError(GridIOError):
    """File does not start with the expected magic bytes."""


class TruncatedPayloadError(GridIOError):
    """File is shorter than its header declares."""


class NonFiniteValueError(GridIOError):
    """Payload contains NaN or infinity."""


class MaskValueError(GridIOError):
    """Mask payload contains a value other than 0.0 or 1.0."""


@dataclass(eq=False)
class Grid:
    """A 2D float32 image, row-major, nominal value range [0, 1].

    Pixels are frozen after construction; share grids across threads freely.
    """

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.pixels, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"grid must be 2D with positive dims, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("grid pixels must all be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass(eq=False)
class BinaryMask:
    """A {0,1} mask with the same shape as the grid it annotates."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values)
        if arr.dtype != np.bool_:
            fl = arr.astype(np.float64)
            if not np.all((fl == 0.0) | (fl == 1.0)):
                raise MaskValueError("mask values must be exactly 0 or 1")
            arr = arr.astype(np.bool_)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"mask must be 2D with positive dims, got shape {arr.shape}")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def count(self) -> int:
        """Number of set pixels."""
        return int(np.count_nonzero(self.values))


def _read_payload(path: Path, magic: bytes) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: {len(raw)} bytes is shorter than the header")
    got_magic, version, height, width = _HEADER.unpack_from(raw, 0)
    if got_magic != magic:
        raise BadMagicError(f"{path}: expected magic {magic!r}, found {got_magic!r}")
    if version != FORMAT_VERSION:
        raise GridIOError(f"{path}: unsupported format version {version}")
    if height < 1 or width < 1:
        raise GridIOError(f"{path}: invalid dimensions {height}x{width}")
    expected = _HEADER.size + 4 * height * width
    if len(raw) != expected:
        raise TruncatedPayloadError(
            f"{path}: declares {height}x{width} ({expected} bytes) but file has {len(raw)}"
        )
    flat = np.frombuffer(raw, dtype="<f4", count=height * width, offset=_HEADER.size)
    if not np.all(np.isfinite(flat)):
        raise NonFiniteValueError(f"{path}: payload contains non-finite values")
    return flat.reshape(height, width)


def read_grid(path: str | Path) -> Grid:
    """Read a ``.f32g`` file.  ``read_grid(write_grid(g))`` is bit-identical to g."""
    return Grid(_read_payload(Path(path), GRID_MAGIC).copy())


def write_grid(grid: Grid, path: str | Path) -> None:
    """Write a ``.f32g`` file.  Byte-identical output for equal grids."""
    path = Path(path)
    header = _HEADER.pack(GRID_MAGIC, FORMAT_VERSION, grid.height, grid.width)
    payload = np.ascontiguousarray(grid.pixels, dtype="<f4").tobytes()
    path.write_bytes(header + payload)


def read_mask(path: str | Path) -> BinaryMask:
    """Read a ``.maskg`` file; rejects payload values outside {0.0, 1.0}."""
    vals = _read_payload(Path(path), MASK_MAGIC)
    if not np.all((vals == 0.0) | (vals == 1.0)):
        raise MaskValueError(f"{path}: mask payload has values outside {{0, 1}}")
    return BinaryMask(vals != 0.0)


def write_mask(mask: BinaryMask, path: str | Path) -> None:
    """Write a ``.maskg`` file (float32 payload of 0.0/1.0)."""
    path = Path(path)
    header = _HEADER.pack(MASK_MAGIC, FORMAT_VERSION, mask.height, mask.width)
    payload = np.ascontiguousarray(mask.values, dtype="<f4").tobytes()
    path.write_bytes(header + payload)


@dataclass
class DatasetManifest:
    """Ordered list of (image path, optional mask path) anchored at a base dir.

    Entry order is the canonical iteration order used by every sweep, so two
    runs over the same manifest always see images in the same sequence.
    """

    role: str  # "train" or "test"
    base_dir: Path
    entries: list[tuple[Path, Path | None]] = field(default_factory=list)

    def __post_init__(self):
        if self.role not in ("train", "test"):
            raise ValueError(f"manifest role must be 'train' or 'test', got {self.role!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def image_path(self, index: int) -> Path:
        return self.base_dir / self.entries[index][0]

    def mask_path(self, index: int) -> Path | None:
        rel = self.entries[index][1]
        return None if rel is None else self.base_dir / rel

    def stem(self, index: int) -> str:
        return self.entries[index][0].stem

    def load_image(self, index: int) -> Grid:
        return read_grid(self.image_path(index))

    def load_mask(self, index: int) -> BinaryMask | None:
        p = self.mask_path(index)
        return None if p is None else read_mask(p)


def read_manifest(path: str | Path, role: str) -> DatasetManifest:
    """Parse a manifest file and verify every referenced file exists."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such manifest: {path}")
    base = path.parent
    entries: list[tuple[Path, Path | None]] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) > 2:
            raise GridIOError(f"{path}:{lineno}: expected at most one tab separator")
        img = Path(parts[0].strip())
        msk = Path(parts[1].strip()) if len(parts) == 2 and parts[1].strip() else None
        if not (base / img).exists():
            raise FileNotFoundError(f"{path}:{lineno}: missing image file {base / img}")
        if msk is not None and not (base / msk).exists():
            raise FileNotFoundError(f"{path}:{lineno}: missing mask file {base / msk}")
        entries.append((img, msk))
    return DatasetManifest(role=role, base_dir=base, entries=entries)


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    lines = []
    for img, msk in manifest.entries:
        lines.append(img.as_posix() if msk is None else f"{img.as_posix()}\t{msk.as_posix()}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
