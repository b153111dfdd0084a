"""Airspeed prediction accuracy (RMSE and range-normalised RMSE)."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


class EmptyAfterGate(ValueError):
    pass


@dataclass(frozen=True)
class EvalReport:
    rmse: float
    nrmse: float
    normalization_range: float
    n_samples: int
    gated_fraction: float

    def to_json(self):
        return asdict(self)


def evaluate(predictions, truth, range_override=None, gated_fraction=1.0):
    """RMSE, and RMSE divided by the truth range (or ``range_override``)."""
    pred = np.asarray(predictions, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError("predictions and truth must have the same length")
    if pred.size == 0:
        raise EmptyAfterGate("no samples left to evaluate")
    if not 0 <= gated_fraction <= 1:
        raise ValueError("gated_fraction must lie in [0, 1]")
    rmse = float(np.sqrt(np.mean((pred - truth) ** 2)))
    span = float(range_override) if range_override is not None else float(truth.max() - truth.min())
    nrmse = rmse / span if span > 0 else float("nan")
    return EvalReport(rmse=rmse, nrmse=nrmse, normalization_range=span,
                      n_samples=int(pred.size), gated_fraction=float(gated_fraction))
