"""Metric and report tests, including the four-probe comparison table."""

import numpy as np
import pytest

from eit_unet import evaluate

PROBES = [(41, 62), (123, 65), (71, 30), (89, 89)]
LABELS = ["Heart", "Background", "Lung", "Pipe"]

# Probe values of the tank reference experiments, reused here purely as
# fixture data to pin the report layout.
CASE_B = {"truth": [0.323, 0.190, 0.123, 0.8],
          "input": [0.224, 0.169, 0.136, 0.174],
          "enhanced": [0.261, 0.167, 0.127, 0.672]}
CASE_C = {"truth": [0.323, 0.190, 0.123, 0.01],
          "input": [0.199, 0.157, 0.141, 0.134],
          "enhanced": [0.223, 0.152, 0.130, 0.105]}


def _planted(values):
    img = np.zeros((124, 124))
    for (r, c), v in zip(PROBES, values):
        img[r, c] = v
    return img


class TestMse:
    def test_zero_for_equal(self):
        x = np.random.default_rng(0).normal(size=(8, 8))
        assert evaluate.mse(x, x) == 0.0

    def test_constant_offset(self):
        x = np.zeros((16, 16))
        assert evaluate.mse(x + 0.25, x) == pytest.approx(0.0625)

    def test_complex_magnitude(self):
        x = np.zeros((4, 4), complex)
        assert evaluate.mse(x + 1j, x) == pytest.approx(1.0)


class TestEvaluateReport:
    def test_equal_images_zero_deltas(self):
        truth = _planted(CASE_B["truth"])
        report = evaluate.evaluate_report(truth, truth, PROBES, labels=LABELS)
        assert report["mse"] == 0.0
        for row in report["probes"]:
            assert row["enhanced"] == row["truth"]

    @pytest.mark.parametrize("case", [CASE_B, CASE_C])
    def test_probe_table_layout(self, case):
        truth = _planted(case["truth"])
        pred = _planted(case["enhanced"])
        inp = _planted(case["input"])
        report = evaluate.evaluate_report(pred, truth, PROBES,
                                          input_image=inp, labels=LABELS)
        text = evaluate.format_report(report)
        lines = text.splitlines()
        header = lines[0].split()
        assert header == ["region", "location", "truth", "input", "enhanced"]
        for line, label, (r, c), t, i, e in zip(
                lines[1:], LABELS, PROBES, case["truth"], case["input"],
                case["enhanced"]):
            cells = line.split()
            assert cells[0] == label
            assert cells[1] == f"({r},{c})"
            assert cells[2] == f"{t:.3f}"
            assert cells[3] == f"{i:.3f}"
            assert cells[4] == f"{e:.3f}"

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            evaluate.evaluate_report(np.zeros((8, 8)), np.zeros((4, 4)), [])

    def test_report_without_input_column(self):
        truth = _planted(CASE_B["truth"])
        report = evaluate.evaluate_report(truth, truth, PROBES, labels=LABELS)
        header = evaluate.format_report(report).splitlines()[0].split()
        assert header == ["region", "location", "truth", "enhanced"]
