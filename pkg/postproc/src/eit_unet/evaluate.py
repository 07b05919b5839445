"""Metrics and probe-table reports comparing images against ground truth."""

from __future__ import annotations

import numpy as np


def mse(pred: np.ndarray, truth: np.ndarray) -> float:
    return float(np.mean(np.abs(np.asarray(pred) - np.asarray(truth)) ** 2))


def evaluate_report(pred: np.ndarray, truth: np.ndarray,
                    probes: list[tuple[int, int]],
                    input_image: np.ndarray | None = None,
                    labels: list[str] | None = None) -> dict:
    """Global MSE plus per-probe values at (row, col) positions."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    labels = labels or [f"probe{i}" for i in range(len(probes))]
    rows = []
    for label, (r, c) in zip(labels, probes):
        row = {"region": label, "row": r, "col": c,
               "truth": float(truth.real[r, c]),
               "enhanced": float(pred.real[r, c])}
        if input_image is not None:
            row["input"] = float(np.asarray(input_image).real[r, c])
        rows.append(row)
    return {"mse": mse(pred, truth), "probes": rows}


def format_report(report: dict) -> str:
    """Fixed-column table: region, location, truth, input, enhanced."""
    has_input = report["probes"] and "input" in report["probes"][0]
    header = f"{'region':<12} {'location':<10} {'truth':>8}"
    if has_input:
        header += f" {'input':>8}"
    header += f" {'enhanced':>8}"
    lines = [header]
    for row in report["probes"]:
        line = (f"{row['region']:<12} "
                f"({row['row']},{row['col']})".ljust(10 + 1)
                + f" {row['truth']:>8.3f}")
        if has_input:
            line += f" {row['input']:>8.3f}"
        line += f" {row['enhanced']:>8.3f}"
        lines.append(line)
    lines.append(f"mse {report['mse']:.8g}")
    return "\n".join(lines)
