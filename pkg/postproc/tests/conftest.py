"""Session fixtures: desk-scale datasets produced by the generator CLI.

The datasets are written and read through the dcm-ds-1 file format only,
which is the integration surface between the two packages.
"""

import subprocess
import sys
import time

import pytest

from eit_unet import data


def generate_dataset(out_dir, case: str, n: int, seed: int,
                     pixels: int = 64, mesh_edge: float = 0.05,
                     workers: int = 4) -> float:
    """Invoke the dataset generator CLI; returns wall time in seconds."""
    start = time.monotonic()
    subprocess.run(
        [sys.executable, "-m", "calderon_eit.cli", "gen-dataset",
         "--case", case, "--n", str(n), "--seed", str(seed),
         "--pixels", str(pixels), "--mesh-edge", str(mesh_edge),
         "--workers", str(workers), "--out", str(out_dir)],
        check=True, capture_output=True)
    return time.monotonic() - start


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds") / "tiny_a"
    generate_dataset(out, "A", 8, 11, pixels=32, mesh_edge=0.08, workers=1)
    return out


@pytest.fixture(scope="session")
def tiny_bundle(tiny_dataset_dir):
    return data.load_dataset(tiny_dataset_dir)


@pytest.fixture(scope="session")
def tiny_mixed_dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds") / "tiny_b"
    generate_dataset(out, "B", 8, 17, pixels=32, mesh_edge=0.08, workers=1)
    return out


@pytest.fixture(scope="session")
def smoke_dataset_dir(tmp_path_factory):
    """36 samples at 32 px for the quick training tests."""
    out = tmp_path_factory.mktemp("ds") / "smoke_a"
    generate_dataset(out, "A", 36, 41, pixels=32, mesh_edge=0.08)
    return out


@pytest.fixture(scope="session")
def smoke_bundle(smoke_dataset_dir):
    return data.load_dataset(smoke_dataset_dir)
