"""Inference on single planes and complex images.

The network is real-valued and single-channel: complex images are
processed as two independent passes through the same weights. Each plane
is normalized to [0, 1] before the pass (with the dataset record, or its
own min/max for planes outside the training distribution) and the output
is denormalized with the truth-side record.
"""

from __future__ import annotations

import numpy as np
import torch

from eit_unet.model import UNet


class InferenceError(ValueError):
    """Plane shape or normalization unusable for inference."""


def normalize_plane(plane: np.ndarray, record: tuple[float, float] | None = None):
    """Map a plane to [0, 1]; without a record, use the plane's own range."""
    plane = np.asarray(plane, dtype=float)
    if record is None:
        lo, hi = float(plane.min()), float(plane.max())
        if hi == lo:
            raise InferenceError("constant plane has no usable range")
        record = (lo, hi)
    lo, hi = record
    return (plane - lo) / (hi - lo), record


def denormalize_plane(plane: np.ndarray, record: tuple[float, float]) -> np.ndarray:
    lo, hi = record
    return plane * (hi - lo) + lo


def infer_plane(model: UNet, plane: np.ndarray) -> np.ndarray:
    """One normalized plane through the network; output stays normalized."""
    plane = np.array(plane, dtype=np.float32)
    n = model.config.resolution
    if plane.shape != (n, n):
        raise InferenceError(
            f"plane shape {plane.shape} does not match trained resolution {n}")
    with torch.no_grad():
        out = model(torch.from_numpy(plane)[None, None])
    return out[0, 0].numpy().astype(float)


def enhance_complex(model: UNet, image: np.ndarray,
                    truth_records: dict) -> np.ndarray:
    """Two independent passes (real, imaginary) through real-trained weights.

    Each plane is normalized with its own min/max; outputs are mapped to
    physical units with the truth-side records ("re" and "im").
    """
    results = {}
    for key, plane in (("re", np.asarray(image).real),
                       ("im", np.asarray(image).imag)):
        norm, _ = normalize_plane(plane)
        out = infer_plane(model, norm)
        results[key] = denormalize_plane(out, truth_records[key])
    return results["re"] + 1j * results["im"]
