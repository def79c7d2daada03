"""Forecast quality metrics."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError
from .model import hard_decision

NORM_ERROR_THRESHOLD = 0.5


def _pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ContractError(f"prediction {pred.shape} and target {target.shape} differ")
    return pred, target


def rmse(pred, target) -> float:
    """Root mean squared error over every cell (dB when inputs are dBm)."""
    pred, target = _pair(pred, target)
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def norm_error_accuracy(pred_norm, target_norm, threshold: float = NORM_ERROR_THRESHOLD) -> float:
    """Fraction of cells whose normalized absolute error is at most ``threshold``."""
    pred_norm, target_norm = _pair(pred_norm, target_norm)
    return float(np.mean(np.abs(pred_norm - target_norm) <= threshold))


def availability_accuracy(pred_dbm, target_dbm, threshold_dbm: float) -> float:
    """Fraction of cells where the predicted and true hard decisions agree."""
    pred_dbm, target_dbm = _pair(pred_dbm, target_dbm)
    return float(np.mean(hard_decision(pred_dbm, threshold_dbm) == hard_decision(target_dbm, threshold_dbm)))


def accuracy_metrics(pred_dbm, target_dbm, norm_stats, threshold_dbm: float) -> tuple[float, float]:
    """``(norm_error_accuracy, availability_accuracy)`` for dBm inputs."""
    pred_dbm, target_dbm = _pair(pred_dbm, target_dbm)
    scale = norm_stats.std
    nea = norm_error_accuracy((pred_dbm - norm_stats.mean) / scale, (target_dbm - norm_stats.mean) / scale)
    return nea, availability_accuracy(pred_dbm, target_dbm, threshold_dbm)


def spearman_kappa(pred_series, target_series) -> float:
    """``1 - 6 sum d_k^2 / (M (M^2 - 1))`` with average ranks for ties."""
    pred_series, target_series = _pair(pred_series, target_series)
    if pred_series.ndim != 1:
        raise ContractError("spearman_kappa expects 1-D series")
    m = pred_series.size
    if m < 2:
        raise ContractError("spearman_kappa needs at least two slots")
    d = rankdata(pred_series) - rankdata(target_series)
    return float(1.0 - 6.0 * np.sum(d * d) / (m * (m * m - 1)))


def per_channel_kappa(pred, target) -> np.ndarray:
    """Kappa of each channel's horizon series; inputs are ``(..., M, F)``.

    Leading batch axes are averaged after computing one kappa per window.
    """
    pred, target = _pair(pred, target)
    p = pred.reshape((-1,) + pred.shape[-2:])
    t = target.reshape((-1,) + target.shape[-2:])
    kappas = np.array(
        [[spearman_kappa(p[b, :, f], t[b, :, f]) for f in range(p.shape[-1])] for b in range(p.shape[0])]
    )
    return kappas.mean(axis=0)


@dataclass
class MetricsReport:
    horizon: int
    rmse: float
    norm_error_accuracy: float
    availability_accuracy: float
    spearman_kappa_per_channel: list[float]
    spearman_kappa_mean: float
    theta_mean: float
    theta_max_abs: float
    windows: int = 0
    baselines: dict[str, dict[str, float]] = field(default_factory=dict)
    config_hash: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def evaluate_predictions(pred_dbm, target_dbm, norm_stats, threshold_dbm: float) -> MetricsReport:
    """Full report for predictions shaped ``(windows, M, F)`` or ``(M, F)`` in dBm."""
    pred_dbm, target_dbm = _pair(pred_dbm, target_dbm)
    theta = pred_dbm - target_dbm
    nea, aa = accuracy_metrics(pred_dbm, target_dbm, norm_stats, threshold_dbm)
    kappas = per_channel_kappa(pred_dbm, target_dbm)
    return MetricsReport(
        horizon=pred_dbm.shape[-2],
        rmse=rmse(pred_dbm, target_dbm),
        norm_error_accuracy=nea,
        availability_accuracy=aa,
        spearman_kappa_per_channel=[float(k) for k in kappas],
        spearman_kappa_mean=float(kappas.mean()),
        theta_mean=float(theta.mean()),
        theta_max_abs=float(np.abs(theta).max()),
        windows=int(np.prod(pred_dbm.shape[:-2])) if pred_dbm.ndim > 2 else 1,
    )


def write_error_csv(pred_norm, target_norm, path, run_hash: str | None = None) -> Path:
    """Plot-ready ``slot, channel, error`` rows of normalized errors.

    For several windows the errors are averaged over windows per horizon slot.
    """
    pred_norm, target_norm = _pair(pred_norm, target_norm)
    err = pred_norm - target_norm
    if err.ndim > 2:
        err = err.reshape((-1,) + err.shape[-2:]).mean(axis=0)
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if run_hash:
            fh.write(f"# config_hash={run_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slot", "channel", "error"])
        for m in range(err.shape[0]):
            for f in range(err.shape[1]):
                w.writerow([m, f, f"{err[m, f]:.6f}"])
    return path
