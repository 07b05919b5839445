"""Training loop: Adam on the Frobenius MSE between enhanced and true images.

Training is deterministic given the seeds up to backend nondeterminism in
the convolution kernels. Checkpoints are a torch state dict plus a text
sidecar recording the network configuration, the dataset normalization
records and the dataset checksums.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from eit_unet.data import DatasetBundle
from eit_unet.model import UNet, UNetConfig, build_model, frobenius_mse


class TrainingError(RuntimeError):
    """Training diverged or was misconfigured."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 12
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise TrainingError("learning rate must be nonnegative")
        if self.optimizer not in ("adam", "sgd"):
            raise TrainingError(f"unknown optimizer {self.optimizer!r}")


def _plane_tensors(bundle: DatasetBundle, indices: np.ndarray, plane: int):
    x = torch.from_numpy(bundle.inputs[indices, plane:plane + 1].copy()).float()
    y = torch.from_numpy(bundle.truths[indices, plane:plane + 1].copy()).float()
    return x, y


def _epoch_mse(model: UNet, x: torch.Tensor, y: torch.Tensor,
               batch_size: int) -> float:
    model.eval()
    total = 0.0
    with torch.no_grad():
        for start in range(0, len(x), batch_size):
            xb = x[start:start + batch_size]
            yb = y[start:start + batch_size]
            total += float(frobenius_mse(model(xb), yb)) * len(xb)
    return total / len(x)


def train(bundle: DatasetBundle, unet_cfg: UNetConfig | None = None,
          train_cfg: TrainConfig | None = None):
    """Fit the network on the real planes of the dataset's training split.

    Returns ``(model, log)`` where the log holds the pre-training baseline
    and per-epoch train/validation MSE (Frobenius, normalized units).
    """
    train_cfg = train_cfg or TrainConfig()
    unet_cfg = unet_cfg or UNetConfig(resolution=bundle.pixels)
    if unet_cfg.resolution != bundle.pixels:
        raise TrainingError(
            f"network resolution {unet_cfg.resolution} != dataset "
            f"{bundle.pixels}")

    torch.manual_seed(train_cfg.seed)
    model = build_model(unet_cfg)
    x_train, y_train = _plane_tensors(bundle, bundle.train_indices, 0)
    x_val, y_val = _plane_tensors(bundle, bundle.val_indices, 0)

    if train_cfg.optimizer == "adam":
        optimizer = torch.optim.Adam(model.parameters(),
                                     lr=train_cfg.learning_rate)
    else:
        optimizer = torch.optim.SGD(model.parameters(),
                                    lr=train_cfg.learning_rate)

    log = {
        "baseline_train_mse": _epoch_mse(model, x_train, y_train,
                                         train_cfg.batch_size),
        "baseline_val_mse": _epoch_mse(model, x_val, y_val,
                                       train_cfg.batch_size),
        "train_mse": [],
        "val_mse": [],
    }
    shuffler = torch.Generator().manual_seed(train_cfg.seed)
    for _ in range(train_cfg.epochs):
        model.train()
        order = torch.randperm(len(x_train), generator=shuffler)
        for start in range(0, len(order), train_cfg.batch_size):
            batch = order[start:start + train_cfg.batch_size]
            optimizer.zero_grad()
            loss = frobenius_mse(model(x_train[batch]), y_train[batch])
            if not torch.isfinite(loss):
                raise TrainingError("training diverged: non-finite loss")
            loss.backward()
            optimizer.step()
        log["train_mse"].append(
            _epoch_mse(model, x_train, y_train, train_cfg.batch_size))
        val = _epoch_mse(model, x_val, y_val, train_cfg.batch_size)
        if not np.isfinite(val):
            raise TrainingError("training diverged: non-finite validation MSE")
        log["val_mse"].append(val)
    model.eval()
    return model, log


def save_checkpoint(path, model: UNet, bundle: DatasetBundle | None = None,
                    extra: dict | None = None) -> None:
    """State dict plus a text sidecar with config and dataset provenance."""
    path = Path(path)
    torch.save(model.state_dict(), path)
    meta = {"unet_config": asdict(model.config)}
    if bundle is not None:
        meta["normalization"] = {k: list(v)
                                 for k, v in bundle.normalization.items()}
        meta["dataset_checksums"] = bundle.checksums
        meta["dataset_case"] = bundle.case
    meta.update(extra or {})
    path.with_suffix(path.suffix + ".txt").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path) -> tuple[UNet, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".txt").read_text())
    cfg_fields = dict(meta["unet_config"])
    cfg_fields["channel_multipliers"] = tuple(cfg_fields["channel_multipliers"])
    config = UNetConfig(**cfg_fields)
    model = build_model(config)
    model.load_state_dict(torch.load(path, weights_only=True))
    model.eval()
    return model, meta
