"""Reader for the "dcm-ds-1" paired-image dataset format.

A dataset directory holds one text manifest plus two little-endian float32
blobs (inputs and truths), sample-major, real plane then imaginary plane
per sample, all planes normalized to [0, 1] with the inverse affine
parameters recorded in the manifest.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT_VERSION = "dcm-ds-1"
MANIFEST_NAME = "manifest.txt"
INPUTS_NAME = "inputs.f32"
TRUTHS_NAME = "truths.f32"

NORM_KEYS = ("input_re", "input_im", "truth_re", "truth_im")


class DatasetFormatError(ValueError):
    """Manifest or blob violates the dcm-ds-1 contract."""


@dataclass(frozen=True)
class DatasetBundle:
    """Normalized planes (N, 2, n, n) float32 plus manifest metadata."""

    inputs: np.ndarray
    truths: np.ndarray
    case: str
    pixels: int
    seed: int
    normalization: dict
    train_indices: np.ndarray
    val_indices: np.ndarray
    sample_seeds: np.ndarray
    kinds: tuple | None
    checksums: dict
    fields: dict

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    def denorm(self, planes: np.ndarray, which: str) -> np.ndarray:
        """Invert the recorded [0, 1] normalization for one plane kind."""
        lo, hi = self.normalization[which]
        return planes.astype(float) * (hi - lo) + lo

    def physical_input(self, index: int) -> np.ndarray:
        return (self.denorm(self.inputs[index, 0], "input_re")
                + 1j * self.denorm(self.inputs[index, 1], "input_im"))

    def physical_truth(self, index: int) -> np.ndarray:
        return (self.denorm(self.truths[index, 0], "truth_re")
                + 1j * self.denorm(self.truths[index, 1], "truth_im"))


def read_manifest(path) -> dict:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if not lines or lines[0] != FORMAT_VERSION:
        raise DatasetFormatError(
            f"expected a {FORMAT_VERSION} manifest, got {lines[:1]}")
    if lines[-1] != "end":
        raise DatasetFormatError("manifest truncated (missing end marker)")
    return dict(line.split(None, 1) for line in lines[1:-1])


def load_dataset(directory) -> DatasetBundle:
    root = Path(directory)
    fields = read_manifest(root / MANIFEST_NAME)
    pixels = int(fields["pixels"])
    n_samples = int(fields["samples"])

    planes = {}
    checksums = {}
    for name, sha_key in ((INPUTS_NAME, "inputs_sha256"),
                          (TRUTHS_NAME, "truths_sha256")):
        raw = (root / name).read_bytes()
        digest = hashlib.sha256(raw).hexdigest()
        if digest != fields[sha_key]:
            raise DatasetFormatError(f"checksum mismatch for {name}")
        arr = np.frombuffer(raw, dtype="<f4")
        expected = n_samples * 2 * pixels * pixels
        if arr.size != expected:
            raise DatasetFormatError(
                f"{name} holds {arr.size} floats, expected {expected}")
        planes[name] = arr.reshape(n_samples, 2, pixels, pixels)
        checksums[sha_key] = digest

    normalization = {}
    for key in NORM_KEYS:
        lo, hi = fields[f"norm_{key}"].split()
        normalization[key] = (float(lo), float(hi))

    return DatasetBundle(
        inputs=planes[INPUTS_NAME],
        truths=planes[TRUTHS_NAME],
        case=fields["case"],
        pixels=pixels,
        seed=int(fields["seed"]),
        normalization=normalization,
        train_indices=np.array([int(i) for i in fields["train"].split(",")]),
        val_indices=np.array([int(i) for i in fields["val"].split(",")]),
        sample_seeds=np.array([int(s) for s in fields["sample_seeds"].split(",")]),
        kinds=tuple(fields["kinds"].split(",")) if "kinds" in fields else None,
        checksums=checksums,
        fields=fields,
    )
