"""Reference forecasters: persistence and a per-channel AR(1)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def persistence_forecast(enc_in: np.ndarray, horizon: int) -> np.ndarray:
    """Repeat the last observed row ``horizon`` times; ``(..., T, F) -> (..., M, F)``."""
    enc_in = np.asarray(enc_in, dtype=np.float64)
    last = enc_in[..., -1:, :]
    return np.repeat(last, horizon, axis=-2)


@dataclass(frozen=True)
class AR1:
    """``x[t+1] = intercept + coef * x[t]`` fitted per channel by least squares."""

    coef: np.ndarray
    intercept: np.ndarray

    @classmethod
    def fit(cls, segments) -> "AR1":
        """``segments`` is an iterable of ``(slots, F)`` arrays (contiguous stretches)."""
        xs, ys = [], []
        for seg in segments:
            seg = np.asarray(seg, dtype=np.float64)
            xs.append(seg[:-1])
            ys.append(seg[1:])
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        xm, ym = x.mean(axis=0), y.mean(axis=0)
        var = ((x - xm) ** 2).sum(axis=0)
        cov = ((x - xm) * (y - ym)).sum(axis=0)
        coef = np.divide(cov, var, out=np.zeros_like(cov), where=var > 0)
        return cls(coef, ym - coef * xm)

    def forecast(self, enc_in: np.ndarray, horizon: int) -> np.ndarray:
        enc_in = np.asarray(enc_in, dtype=np.float64)
        x = enc_in[..., -1, :]
        rows = []
        for _ in range(horizon):
            x = self.intercept + self.coef * x
            rows.append(x)
        return np.stack(rows, axis=-2)
