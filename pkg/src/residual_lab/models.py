"""Reconstruction sources: blur oracle, linear subspace, external files, identity.

The blur oracle simulates an imperfect generator by Gaussian-smoothing its
input.  The subspace model reconstructs through a truncated PCA basis fitted
on training images (the native capacity-sweep family).  External sources read
pre-computed reconstructions from disk, keyed by image stem and mode.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .grid import BinaryMask, DatasetManifest, Grid, read_grid, write_grid

MODES = ("healthy", "anomalous")


class MissingReconstructionError(FileNotFoundError):
    """An external reconstruction file is absent for a (key, mode) pair."""


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1D kernel sampled at integer offsets |d| <= max(1, ceil(4*sigma)), sum 1."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    radius = max(1, int(math.ceil(4.0 * sigma)))
    d = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(d * d) / (2.0 * sigma * sigma))
    return w / w.sum()


def gaussian_blur(grid: Grid, sigma: float) -> Grid:
    """Separable Gaussian blur with reflect padding; sigma=0 is the identity."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        return grid
    kernel = gaussian_kernel(sigma)
    out = grid.pixels.astype(np.float64)
    out = ndimage.correlate1d(out, kernel, axis=0, mode="reflect")
    out = ndimage.correlate1d(out, kernel, axis=1, mode="reflect")
    return Grid(out.astype(np.float32))


@dataclass(frozen=True)
class BlurOracle:
    """Simulated imperfect generator: reconstruction = blur(input, sigma)."""

    sigma: float

    def __post_init__(self):
        if not math.isfinite(self.sigma) or self.sigma < 0:
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")

    def describe(self) -> str:
        return f"blur(sigma={self.sigma:g})"

    def reconstruct(self, grid: Grid, key: str | None = None, mode: str = "healthy") -> Grid:
        return gaussian_blur(grid, self.sigma)


@dataclass(frozen=True)
class IdentityModel:
    """Perfect reconstructor; residual maps are identically zero."""

    def describe(self) -> str:
        return "identity"

    def reconstruct(self, grid: Grid, key: str | None = None, mode: str = "healthy") -> Grid:
        return grid


@dataclass(eq=False)
class SubspaceModel:
    """Truncated-PCA reconstructor: mean image + k orthonormal components.

    `basis` holds the kept principal directions as columns, shape
    (pixels, k_eff) with k_eff <= k (rank-deficient training sets keep fewer).
    """

    shape: tuple[int, int]
    mean: np.ndarray  # float64, flat (pixels,)
    basis: np.ndarray  # float64, (pixels, k_eff), orthonormal columns
    k: int
    fingerprint: str = ""

    def describe(self) -> str:
        return f"subspace(k={self.k})"

    def reconstruct(self, grid: Grid, key: str | None = None, mode: str = "healthy") -> Grid:
        if grid.shape != self.shape:
            raise ValueError(f"shape mismatch: model {self.shape} vs input {grid.shape}")
        x = grid.pixels.astype(np.float64).ravel() - self.mean
        coeffs = self.basis.T @ x
        recon = self.mean + self.basis @ coeffs
        recon = np.clip(recon, 0.0, 1.0)
        return Grid(recon.reshape(self.shape).astype(np.float32))


@dataclass(frozen=True)
class ExternalReconSource:
    """Directory of reconstructions laid out as `<dir>/<stem>.<mode>.f32g`."""

    directory: Path

    def describe(self) -> str:
        return f"external({Path(self.directory).name})"

    def path_for(self, key: str, mode: str) -> Path:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        return Path(self.directory) / f"{key}.{mode}.f32g"

    def missing_keys(self, keys: list[str], mode: str) -> list[str]:
        return [k for k in keys if not self.path_for(k, mode).exists()]

    def reconstruct(self, grid: Grid, key: str | None = None, mode: str = "healthy") -> Grid:
        if key is None:
            raise ValueError("external reconstruction requires an image key")
        path = self.path_for(key, mode)
        if not path.exists():
            raise MissingReconstructionError(f"no reconstruction for ({key}, {mode}): {path}")
        recon = read_grid(path)
        if recon.shape != grid.shape:
            raise ValueError(f"shape mismatch: {path} is {recon.shape}, input is {grid.shape}")
        return recon


Reconstructor = BlurOracle | IdentityModel | SubspaceModel | ExternalReconSource


def reconstruct(model: Reconstructor, grid: Grid, key: str | None = None,
                mode: str = "healthy") -> Grid:
    """Uniform entry point over all reconstructor kinds."""
    return model.reconstruct(grid, key=key, mode=mode)


def manifest_fingerprint(manifest: DatasetManifest) -> str:
    """SHA-256 over entry order and image file bytes; pins a fitted model to its data."""
    h = hashlib.sha256()
    h.update(manifest.role.encode())
    for i in range(len(manifest)):
        h.update(manifest.entries[i][0].as_posix().encode())
        h.update(manifest.image_path(i).read_bytes())
    return h.hexdigest()


def fit_subspace(train: DatasetManifest, k: int, seed: int = 0) -> SubspaceModel:
    """Fit mean + top-k principal directions of the training images.

    Uses the Gram-matrix eigendecomposition (images x images), which is exact
    and bit-deterministic for a fixed environment; `seed` is accepted for
    interface stability but the solve is direct.  Component signs follow a
    fixed convention: the largest-magnitude entry of each column is positive.
    """
    n = len(train)
    if n == 0:
        raise ValueError("training manifest is empty")
    if k < 0 or k > n:
        raise ValueError(f"k must be in [0, {n}], got {k}")
    first = train.load_image(0)
    shape = first.shape
    data = np.empty((n, shape[0] * shape[1]), dtype=np.float64)
    data[0] = first.pixels.ravel()
    for i in range(1, n):
        img = train.load_image(i)
        if img.shape != shape:
            raise ValueError(
                f"training image {train.stem(i)} is {img.shape}, expected {shape}"
            )
        data[i] = img.pixels.ravel()
    mean = data.mean(axis=0)
    centered = data - mean
    fingerprint = manifest_fingerprint(train)
    if k == 0:
        basis = np.zeros((shape[0] * shape[1], 0), dtype=np.float64)
        return SubspaceModel(shape=shape, mean=mean, basis=basis, k=0, fingerprint=fingerprint)

    gram = centered @ centered.T
    eigvals, eigvecs = np.linalg.eigh(gram)
    order = np.argsort(eigvals)[::-1][:k]
    lam = eigvals[order]
    keep = lam > max(1e-12, 1e-12 * float(lam[0])) if lam.size else np.array([], dtype=bool)
    lam = lam[keep]
    vecs = eigvecs[:, order][:, keep]
    basis = centered.T @ (vecs / np.sqrt(lam))
    # Deterministic sign convention.
    for j in range(basis.shape[1]):
        col = basis[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            basis[:, j] = -col
    return SubspaceModel(shape=shape, mean=mean, basis=basis, k=k, fingerprint=fingerprint)


@dataclass
class ReconstructionErrorStats:
    """Mean absolute healthy-input residual per image, plus the dataset mean."""

    per_image: list[tuple[str, float]] = field(default_factory=list)
    mean: float = 0.0


def healthy_recon_error(model: Reconstructor, test: DatasetManifest) -> ReconstructionErrorStats:
    """Mean |x - reconstruct(x)| over object-mask pixels, per test image.

    Entries without an object mask fall back to the full image.
    """
    if len(test) == 0:
        raise ValueError("test manifest is empty")
    per_image = []
    for i in range(len(test)):
        img = test.load_image(i)
        recon = model.reconstruct(img, key=test.stem(i), mode="healthy")
        err = np.abs(img.pixels.astype(np.float64) - recon.pixels.astype(np.float64))
        mask = test.load_mask(i)
        value = float(err[mask.values].mean()) if mask is not None else float(err.mean())
        per_image.append((test.stem(i), value))
    return ReconstructionErrorStats(
        per_image=per_image, mean=float(np.mean([v for _, v in per_image]))
    )


_SUBSPACE_MAGIC = b"SSP1"


def save_subspace(model: SubspaceModel, path: str | Path) -> None:
    """Persist as a length-prefixed JSON header + mean/basis `.f32g` payloads."""
    header = json.dumps(
        {
            "k": model.k,
            "k_eff": model.basis.shape[1],
            "shape": list(model.shape),
            "fingerprint": model.fingerprint,
        }
    ).encode("utf-8")
    chunks = [_SUBSPACE_MAGIC, struct.pack("<I", len(header)), header]
    h, w = model.shape
    chunks.append(_grid_bytes(model.mean, h, w))
    for j in range(model.basis.shape[1]):
        chunks.append(_grid_bytes(model.basis[:, j], h, w))
    Path(path).write_bytes(b"".join(chunks))


def _grid_bytes(flat: np.ndarray, h: int, w: int) -> bytes:
    from .grid import FORMAT_VERSION, GRID_MAGIC

    head = struct.pack("<4sIII", GRID_MAGIC, FORMAT_VERSION, h, w)
    return head + flat.astype("<f4").tobytes()


def load_subspace(path: str | Path) -> SubspaceModel:
    raw = Path(path).read_bytes()
    if raw[:4] != _SUBSPACE_MAGIC:
        raise ValueError(f"{path}: not a subspace model file")
    (hlen,) = struct.unpack_from("<I", raw, 4)
    meta = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    h, w = meta["shape"]
    p = h * w
    offset = 8 + hlen
    grids = []
    for _ in range(meta["k_eff"] + 1):
        offset += 16  # per-payload .f32g header
        grids.append(np.frombuffer(raw, dtype="<f4", count=p, offset=offset).astype(np.float64))
        offset += 4 * p
    basis = np.stack(grids[1:], axis=1) if meta["k_eff"] else np.zeros((p, 0))
    return SubspaceModel(
        shape=(h, w), mean=grids[0], basis=basis, k=meta["k"], fingerprint=meta["fingerprint"]
    )
