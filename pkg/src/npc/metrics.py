"""Evaluation metrics: accuracy, RMSE, MAPE with a small-denominator guard."""

import numpy as np

MAPE_GUARD = 1e-6


def accuracy(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError("predictions and truth must be same nonempty shape")
    return float((pred == truth).mean())


def rmse(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError("predictions and truth must be same nonempty shape")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def mape(pred, truth, guard=MAPE_GUARD):
    """Mean absolute percentage error over |truth| > guard entries.

    Returns (value_percent, n_excluded); value is nan if nothing is left.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError("predictions and truth must be same nonempty shape")
    ok = np.abs(truth) > guard
    excluded = int((~ok).sum())
    if not ok.any():
        return float("nan"), excluded
    value = float(np.mean(np.abs(pred[ok] - truth[ok]) / np.abs(truth[ok])) * 100.0)
    return value, excluded
