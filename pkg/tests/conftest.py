import time
from pathlib import Path

import pytest

from residual_lab.grid import DatasetManifest, write_grid, write_mask
from residual_lab.phantom import make_phantom

SESSION_T0 = time.monotonic()


def build_phantom_manifest(
    directory: Path, n: int, seed0: int, role: str = "test", size: int = 128,
    with_masks: bool = True,
) -> DatasetManifest:
    """Write n phantom image/mask pairs and return their manifest."""
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n):
        grid, mask = make_phantom(seed0 + i, size, size)
        img_rel = Path(f"img_{i:04d}.f32g")
        write_grid(grid, directory / img_rel)
        if with_masks:
            mask_rel = Path(f"img_{i:04d}.maskg")
            write_mask(mask, directory / mask_rel)
            entries.append((img_rel, mask_rel))
        else:
            entries.append((img_rel, None))
    return DatasetManifest(role=role, base_dir=directory, entries=entries)


@pytest.fixture(scope="session")
def tiny_test_manifest(tmp_path_factory) -> DatasetManifest:
    """Six 128x128 phantoms with masks; enough for fast sweep tests."""
    return build_phantom_manifest(tmp_path_factory.mktemp("tiny_test"), 6, seed0=0)


@pytest.fixture(scope="session")
def tiny_train_manifest(tmp_path_factory) -> DatasetManifest:
    return build_phantom_manifest(tmp_path_factory.mktemp("tiny_train"), 12, seed0=5000,
                                  role="train")
