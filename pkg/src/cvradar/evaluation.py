"""Two-phase evaluation: known distances (d0) and unseen distances (d1).

Reports carry the raw prediction counts next to the row-percentage
confusion matrix so accuracy can always be recounted independently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datacube import DataCube, MaterialClass
from .dsp import PreprocMode
from .errors import EvaluationError
from .trainer import prepare_inputs

_EVAL_BATCH = 64

# Accuracies reported for this architecture and protocol on the original
# full-scale hardware dataset (not public, so shown for context only;
# synthetic corpora are not expected to reproduce them).
FULL_SCALE_REFERENCE = {
    ("raw_iq", "d0"): 99.53,
    ("range_fft", "d0"): 99.12,
    ("raw_iq", "d1"): 25.25,
    ("range_fft", "d1"): 58.82,
}


@dataclass(frozen=True)
class EvalReport:
    """Confusion matrix (row percentages), raw counts, and overall accuracy."""

    split: str
    preproc_mode: str
    n_samples: int
    counts: np.ndarray
    confusion: np.ndarray
    overall_accuracy: float
    class_names: tuple[str, ...]

    @classmethod
    def from_counts(cls, counts: np.ndarray, split: str, mode: PreprocMode,
                    class_names: Sequence[str] | None = None) -> "EvalReport":
        counts = np.asarray(counts, dtype=np.int64)
        c = counts.shape[0]
        if class_names is None:
            class_names = tuple(m.name.lower() for m in MaterialClass) if c == len(MaterialClass) \
                else tuple(f"class{i}" for i in range(c))
        row_sums = counts.sum(axis=1, keepdims=True)
        confusion = np.zeros_like(counts, dtype=np.float64)
        np.divide(counts * 100.0, row_sums, out=confusion, where=row_sums > 0)
        total = int(counts.sum())
        accuracy = 100.0 * int(np.trace(counts)) / total if total else 0.0
        counts.flags.writeable = False
        confusion.flags.writeable = False
        return cls(split=split, preproc_mode=PreprocMode(mode).value, n_samples=total,
                   counts=counts, confusion=confusion, overall_accuracy=accuracy,
                   class_names=tuple(class_names))

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "preproc_mode": self.preproc_mode,
            "n_samples": self.n_samples,
            "class_names": list(self.class_names),
            "counts": self.counts.tolist(),
            "confusion_row_percent": [[round(v, 2) for v in row] for row in self.confusion],
            "overall_accuracy": round(self.overall_accuracy, 2),
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def to_csv(self) -> str:
        lines = ["truth\\prediction," + ",".join(self.class_names)]
        for name, row in zip(self.class_names, self.confusion):
            lines.append(name + "," + ",".join(f"{v:.2f}" for v in row))
        return "\n".join(lines) + "\n"


def predictions(model, cubes: Sequence[DataCube], mode: PreprocMode) -> np.ndarray:
    """Argmax class ids for each cube; ties break toward the lowest id."""
    x, _ = prepare_inputs(cubes, mode, model.cfg.precision)
    preds = np.empty(len(cubes), dtype=np.int64)
    for start in range(0, len(cubes), _EVAL_BATCH):
        logits = model.predict(x[start:start + _EVAL_BATCH])
        preds[start:start + _EVAL_BATCH] = np.argmax(logits, axis=1)
    return preds


def evaluate(model, cubes: Sequence[DataCube], mode: PreprocMode, split: str) -> EvalReport:
    """Pure inference over ``cubes``; model weights and buffers untouched."""
    if not cubes:
        raise EvaluationError("cannot evaluate an empty sample set")
    mode = PreprocMode(mode)
    c = model.num_classes
    preds = predictions(model, cubes, mode)
    counts = np.zeros((c, c), dtype=np.int64)
    for cube, pred in zip(cubes, preds):
        counts[int(cube.label), int(pred)] += 1
    return EvalReport.from_counts(counts, split=split, mode=mode)


def render_report(report: EvalReport) -> str:
    """Aligned plain-text confusion table, matching the row-percent format."""
    width = max(10, max(len(n) for n in report.class_names) + 2)
    header = " " * width + "".join(n.rjust(width) for n in report.class_names)
    lines = [
        f"split={report.split}  mode={report.preproc_mode}  n={report.n_samples}",
        header,
    ]
    for name, row in zip(report.class_names, report.confusion):
        lines.append(name.ljust(width) + "".join(f"{v:.2f}".rjust(width) for v in row))
    lines.append(f"overall accuracy: {report.overall_accuracy:.2f}%")
    return "\n".join(lines)


@dataclass(frozen=True)
class ModeComparison:
    """The four-cell {raw IQ, range FFT} x {d0, d1} accuracy table."""

    reports: dict
    fft_d1_at_least_iq_d1: bool

    def accuracy(self, mode: str, split: str) -> float:
        return self.reports[(mode, split)].overall_accuracy

    def to_dict(self) -> dict:
        return {
            "cells": {
                f"{mode}_{split}": round(rep.overall_accuracy, 2)
                for (mode, split), rep in self.reports.items()
            },
            "fft_d1_at_least_iq_d1": self.fft_d1_at_least_iq_d1,
            "reports": {f"{m}_{s}": r.to_dict() for (m, s), r in self.reports.items()},
        }


def compare_modes(model_iq, model_fft, d0_cubes: Sequence[DataCube],
                  d1_cubes: Sequence[DataCube]) -> ModeComparison:
    """Evaluate both models on both splits, each with its own input variant.

    Flags whether the range-FFT model holds at least the raw-IQ accuracy on
    the unseen distances, the effect this pipeline exists to measure.
    """
    if model_iq.num_classes != model_fft.num_classes:
        raise EvaluationError(
            f"models disagree on the class set: {model_iq.num_classes} vs {model_fft.num_classes}"
        )
    reports = {
        ("raw_iq", "d0"): evaluate(model_iq, d0_cubes, PreprocMode.RAW_IQ, "d0"),
        ("raw_iq", "d1"): evaluate(model_iq, d1_cubes, PreprocMode.RAW_IQ, "d1"),
        ("range_fft", "d0"): evaluate(model_fft, d0_cubes, PreprocMode.RANGE_FFT, "d0"),
        ("range_fft", "d1"): evaluate(model_fft, d1_cubes, PreprocMode.RANGE_FFT, "d1"),
    }
    flag = (reports[("range_fft", "d1")].overall_accuracy
            >= reports[("raw_iq", "d1")].overall_accuracy)
    return ModeComparison(reports=reports, fft_d1_at_least_iq_d1=flag)


def render_comparison(cmp: ModeComparison, show_reference: bool = True) -> str:
    lines = [
        "            IQ d0    FFT d0    IQ d1    FFT d1",
        "accuracy  " + "".join(
            f"{cmp.accuracy(m, s):>9.2f}"
            for m, s in (("raw_iq", "d0"), ("range_fft", "d0"), ("raw_iq", "d1"), ("range_fft", "d1"))
        ),
        f"range FFT holds raw-IQ accuracy on unseen distances: {'yes' if cmp.fft_d1_at_least_iq_d1 else 'no'}",
    ]
    if show_reference:
        ref = FULL_SCALE_REFERENCE
        lines.append(
            "reference (full-scale hardware dataset): "
            f"{ref[('raw_iq', 'd0')]:.2f}  {ref[('range_fft', 'd0')]:.2f}  "
            f"{ref[('raw_iq', 'd1')]:.2f}  {ref[('range_fft', 'd1')]:.2f}"
        )
    return "\n".join(lines)
