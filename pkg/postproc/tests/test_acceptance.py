"""Acceptance suite for the post-processor, one PASS/FAIL line per
criterion. Desk-scale datasets come from the generator CLI through the
dcm-ds-1 format; run with `pytest tests/test_acceptance.py -v -s`.
"""

import time

import numpy as np
import pytest
import torch

from conftest import generate_dataset
from eit_unet import data, evaluate, infer, model, training


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"{name}: {detail}"


def _enhanced_plane(net, bundle, index: int) -> np.ndarray:
    out = infer.infer_plane(net, bundle.inputs[index, 0])
    return infer.denormalize_plane(out, bundle.normalization["truth_re"])


def test_desk_scale_improvement(tmp_path):
    """Case A, N=256 at 64x64: 3-level base-16 net, 12 epochs, batch 32,
    Adam 1e-4 beats the direct reconstruction on validation MSE and cuts
    the low-conductivity-region mean error by at least 30%."""
    start = time.monotonic()
    out = tmp_path / "case_a"
    gen_seconds = generate_dataset(out, "A", 256, 101, pixels=64)
    bundle = data.load_dataset(out)
    net, _ = training.train(
        bundle,
        unet_cfg=model.UNetConfig(levels=3, base_channels=16, resolution=64),
        train_cfg=training.TrainConfig(learning_rate=1e-4, batch_size=32,
                                       epochs=12, seed=0))
    mse_in, mse_out, mae_in, mae_out = [], [], [], []
    for i in bundle.val_indices:
        truth = bundle.physical_truth(i).real
        recon = bundle.physical_input(i).real
        enhanced = _enhanced_plane(net, bundle, i)
        mse_in.append(evaluate.mse(recon, truth))
        mse_out.append(evaluate.mse(enhanced, truth))
        lung = truth < 0.2  # low-conductivity tissue (lungs and spine)
        mae_in.append(abs(recon[lung].mean() - truth[lung].mean()))
        mae_out.append(abs(enhanced[lung].mean() - truth[lung].mean()))
    elapsed = time.monotonic() - start
    improv = 1.0 - np.mean(mae_out) / np.mean(mae_in)
    ok = (np.mean(mse_out) < np.mean(mse_in) and improv >= 0.30
          and elapsed < 900)
    _report("desk-scale-improvement", ok,
            f"val MSE {np.mean(mse_in):.5f} -> {np.mean(mse_out):.5f}, "
            f"lung-region MAE reduced {improv:.0%} (need >= 30%), "
            f"{elapsed:.0f}s total incl. {gen_seconds:.0f}s generation "
            f"(limit 900s)")


def test_pathology_visibility(tmp_path):
    """A low-conductivity pathology deviates from the surrounding lung more
    strongly after post-processing than in the direct reconstruction."""
    out = tmp_path / "case_c"
    generate_dataset(out, "C", 256, 202, pixels=64)
    bundle = data.load_dataset(out)
    net, _ = training.train(
        bundle,
        unet_cfg=model.UNetConfig(levels=3, base_channels=16, resolution=64),
        train_cfg=training.TrainConfig(learning_rate=1e-4, batch_size=32,
                                       epochs=14, seed=0))
    low_val = [i for i in bundle.val_indices if bundle.kinds[i] == "low"]
    assert low_val, "no low-pathology sample in the validation split"
    index = low_val[0]
    truth = bundle.physical_truth(index).real
    recon = bundle.physical_input(index).real
    enhanced = _enhanced_plane(net, bundle, index)
    pathology = truth < 0.05
    lung = (truth > 0.05) & (truth < 0.17)
    margin_in = abs(recon[pathology].mean() - recon[lung].mean())
    margin_out = abs(enhanced[pathology].mean() - enhanced[lung].mean())
    _report("pathology-visibility", margin_out > margin_in,
            f"sample {index}: pathology-vs-lung margin "
            f"{margin_in:.4f} -> {margin_out:.4f}")


def test_real_trained_imaginary_applied(tmp_path):
    """Case D: weights trained on real planes reduce the imaginary-plane
    MSE versus no post-processing."""
    out = tmp_path / "case_d"
    generate_dataset(out, "D", 256, 303, pixels=64)
    bundle = data.load_dataset(out)
    net, _ = training.train(
        bundle,
        unet_cfg=model.UNetConfig(levels=3, base_channels=16, resolution=64),
        train_cfg=training.TrainConfig(learning_rate=1e-4, batch_size=32,
                                       epochs=12, seed=0))
    mse_in, mse_out = [], []
    for i in bundle.val_indices:
        truth_im = bundle.physical_truth(i).imag
        recon_im = bundle.physical_input(i).imag
        norm, _ = infer.normalize_plane(recon_im)
        out_norm = infer.infer_plane(net, norm)
        enhanced_im = infer.denormalize_plane(out_norm,
                                              bundle.normalization["truth_im"])
        mse_in.append(evaluate.mse(recon_im, truth_im))
        mse_out.append(evaluate.mse(enhanced_im, truth_im))
    _report("real-trained-imaginary-applied",
            np.mean(mse_out) < np.mean(mse_in),
            f"imaginary-plane MSE {np.mean(mse_in):.3e} -> "
            f"{np.mean(mse_out):.3e} over {len(mse_in)} validation samples")


def test_loss_unit():
    """Implemented loss equals the hand-computed Frobenius MSE exactly."""
    pred = torch.tensor([[[[1.0, 2.0], [3.0, 4.0]]],
                         [[[1.0, 0.0], [0.0, 1.0]]]])
    target = torch.tensor([[[[0.0, 2.0], [3.0, 2.0]]],
                           [[[1.0, 0.0], [0.0, 0.0]]]])
    value = float(model.frobenius_mse(pred, target))
    _report("loss-unit", value == 3.0,
            f"loss on 2x2 fixture = {value} (hand-computed 3.0)")
