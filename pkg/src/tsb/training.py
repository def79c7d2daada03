"""Loss, optimizers, chronological fold splits and the offline training loop."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import tensor as tt
from .errors import ConfigError, ContractError, NumericError
from .model import ModelConfig, TsbModel, decode, decoder_inputs, encode, predict_one_step
from .tensor import Tensor

log = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "sgdm", "sgd")
DECODER_LOSSES = ("prefix", "full")
VALID_MODES = ("one_step", "autoregressive", "teacher_forced")
N_PARTS = 7
TRAIN_PARTS, VALID_PARTS, TEST_PARTS = 5, 1, 1


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 0.001
    l2: float = 1e-6
    batch_size: int = 32
    epochs: int = 20
    patience: int = 6
    seed: int = 0
    folds: int = 5
    momentum: float = 0.9
    clip_norm: float | None = 5.0
    window_stride: int = 1
    valid_mode: str = "autoregressive"
    valid_max_windows: int = 32
    decoder_loss: str = "prefix"
    prefix_samples: int = 2

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"TrainConfig.optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if not self.lr > 0:
            raise ConfigError("TrainConfig.lr must be > 0")
        if self.l2 < 0:
            raise ConfigError("TrainConfig.l2 must be >= 0")
        for name in (
            "batch_size", "epochs", "patience", "folds", "window_stride", "valid_max_windows", "prefix_samples",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"TrainConfig.{name} must be >= 1")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("TrainConfig.clip_norm must be positive or None")
        if self.valid_mode not in VALID_MODES:
            raise ConfigError(f"TrainConfig.valid_mode must be one of {VALID_MODES}")
        if self.decoder_loss not in DECODER_LOSSES:
            raise ConfigError(f"TrainConfig.decoder_loss must be one of {DECODER_LOSSES}")


# -- normalization -------------------------------------------------------------


@dataclass(frozen=True)
class NormStats:
    mean: float
    std: float

    def __post_init__(self):
        if self.std < 1e-8:
            object.__setattr__(self, "std", 1.0)

    @classmethod
    def fit(cls, values: np.ndarray) -> "NormStats":
        values = np.asarray(values, dtype=np.float64)
        return cls(float(values.mean()), float(values.std()))

    def to_dict(self) -> dict:
        return asdict(self)


def zscore_normalize(x, stats: NormStats) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - stats.mean) / stats.std


def denormalize(x, stats: NormStats) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) * stats.std + stats.mean


# -- loss ------------------------------------------------------------------------


def l2_penalty(weights: Iterable[Tensor], eta: float) -> Tensor:
    """``(eta / 2) * sum ||W||^2``."""
    total = None
    for w in weights:
        term = tt.sum(tt.square(w))
        total = term if total is None else total + term
    if total is None:
        return Tensor(0.0)
    return total * (0.5 * eta)


def mse_l2_loss(pred, target, weights: Iterable[Tensor] = (), eta: float = 0.0) -> Tensor:
    """Mean squared error over all cells plus the L2 weight penalty."""
    pred = tt._as_tensor(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ContractError(f"prediction {pred.shape} and target {target.shape} differ")
    loss = tt.mean(tt.square(pred - target))
    if eta > 0:
        loss = loss + l2_penalty(weights, eta)
    return loss


# -- optimizers ------------------------------------------------------------------


@dataclass
class OptimizerState:
    kind: str
    step: int = 0
    slots: dict[str, list[np.ndarray]] = field(default_factory=dict)


def init_optimizer_state(kind: str, params: Sequence[Tensor]) -> OptimizerState:
    if kind not in OPTIMIZERS:
        raise ConfigError(f"unknown optimizer {kind!r}")
    state = OptimizerState(kind)
    if kind == "adam":
        state.slots["m"] = [np.zeros_like(p.data) for p in params]
        state.slots["v"] = [np.zeros_like(p.data) for p in params]
    elif kind == "sgdm":
        state.slots["velocity"] = [np.zeros_like(p.data) for p in params]
    return state


def optimizer_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray | None],
    state: OptimizerState,
    lr: float,
    momentum: float = 0.9,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> OptimizerState:
    """Update ``params`` in place.

    sgd:  ``w -= lr * g``
    sgdm: ``v = momentum * v + g``; ``w -= lr * v``
    adam: bias-corrected first/second moments.
    """
    if len(grads) != len(params):
        raise ContractError("optimizer_step: one gradient per parameter is required")
    for k, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            raise ContractError(f"optimizer_step: parameter {p.name or k} has no gradient")
        if g.shape != p.shape:
            raise ContractError(f"optimizer_step: gradient {g.shape} does not match parameter {p.shape}")
    state.step += 1
    if state.kind == "sgd":
        for p, g in zip(params, grads):
            p.data = p.data - lr * g
    elif state.kind == "sgdm":
        for p, g, v in zip(params, grads, state.slots["velocity"]):
            v *= momentum
            v += g
            p.data = p.data - lr * v
    else:
        b1, b2 = betas
        c1 = 1.0 - b1**state.step
        c2 = 1.0 - b2**state.step
        for p, g, m, v in zip(params, grads, state.slots["m"], state.slots["v"]):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


def clip_global_norm(grads: list[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    norm = float(np.sqrt(np.sum([np.sum(g * g) for g in grads])))
    if norm > max_norm:
        grads = [g * (max_norm / norm) for g in grads]
    return grads, norm


# -- splitting -------------------------------------------------------------------


@dataclass(frozen=True)
class Split:
    """Slot ranges ``[start, stop)`` of each role for one fold."""

    parts: tuple[tuple[int, int], ...]
    train: tuple[tuple[int, int], ...]
    valid: tuple[tuple[int, int], ...]
    test: tuple[tuple[int, int], ...]
    fold: int


def min_series_length(window: int) -> int:
    return N_PARTS * window


def kfold_split(slots: int, window: int, folds: int = 5, fold: int = 0) -> Split:
    """Cut ``slots`` into 7 contiguous parts and assign 5:1:1 train/valid/test roles.

    ``fold`` rotates the roles: validation is part ``(5 + fold) % 7`` and test
    is part ``(6 + fold) % 7``.  ``window`` is input length plus horizon; every
    part must hold at least one window.
    """
    if not 0 <= fold < folds:
        raise ConfigError(f"fold {fold} outside [0, {folds})")
    if folds > N_PARTS:
        raise ConfigError(f"at most {N_PARTS} folds are possible")
    need = min_series_length(window)
    if slots < need:
        raise ConfigError(
            f"series of {slots} slots is too short: need at least {need} (7 x window of {window})"
        )
    edges = [0] + [int(a[-1]) + 1 for a in np.array_split(np.arange(slots), N_PARTS)]
    parts = tuple((edges[k], edges[k + 1]) for k in range(N_PARTS))
    valid_idx = (TRAIN_PARTS + fold) % N_PARTS
    test_idx = (TRAIN_PARTS + VALID_PARTS + fold) % N_PARTS
    train = tuple(p for k, p in enumerate(parts) if k not in (valid_idx, test_idx))
    return Split(parts, train, (parts[valid_idx],), (parts[test_idx],), fold)


def window_starts(ranges: Iterable[tuple[int, int]], window: int, stride: int = 1) -> np.ndarray:
    """Start slots of every length-``window`` span that fits inside a single range."""
    starts = [np.arange(lo, hi - window + 1, stride) for lo, hi in ranges]
    starts = [s for s in starts if s.size]
    return np.concatenate(starts) if starts else np.zeros(0, dtype=int)


def gather_windows(series: np.ndarray, starts: np.ndarray, input_len: int, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """``series`` is ``(slots, F)``; returns inputs ``(n, T, F)`` and targets ``(n, M, F)``."""
    idx = starts[:, None] + np.arange(input_len + horizon)[None, :]
    win = series[idx]
    return win[:, :input_len], win[:, input_len:]


# -- training loop ---------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_loss: float
    lr: float
    wall_seconds: float


@dataclass
class TrainResult:
    model: TsbModel
    norm_stats: NormStats
    split: Split
    history: list[EpochRecord]
    best_epoch: int
    steps: int
    stopped_early: bool
    diverged: bool = False


def _batched_predict(model: TsbModel, x: np.ndarray, y: np.ndarray, mode: str, chunk: int = 128) -> np.ndarray:
    outs = []
    for k in range(0, len(x), chunk):
        xb, yb = x[k : k + chunk], y[k : k + chunk]
        if mode == "autoregressive":
            outs.append(model.predict(xb, horizon=yb.shape[-2]))
        elif mode == "one_step":
            outs.append(predict_one_step(xb, yb, model.params))
        else:
            with tt.no_grad():
                outs.append(model(xb, decoder_inputs(xb, yb)).data)
    return np.concatenate(outs)


def validation_loss(model: TsbModel, x: np.ndarray, y: np.ndarray, mode: str = "autoregressive") -> float:
    """Normalized MSE on validation windows (no penalty term)."""
    pred = _batched_predict(model, x, y, mode)
    return float(np.mean((pred - y) ** 2))


def _subsample(starts: np.ndarray, limit: int) -> np.ndarray:
    if len(starts) <= limit:
        return starts
    pick = np.linspace(0, len(starts) - 1, limit).round().astype(int)
    return starts[pick]


def _teacher_forced_batch(model: TsbModel, xb, yb, config: TrainConfig, rng: np.random.Generator):
    """Prediction and target pair for one training step.

    ``full`` scores all M decoder outputs.  Because the decoder's Bi-LSTM
    reads the whole decoder sequence in both directions, output ``i`` can see
    decoder input ``i + 1``, which is target ``i``.  ``prefix`` avoids that:
    it feeds ``prefix_samples`` random-length true prefixes (sharing one
    encoder pass) and scores only the last output of each, the same position
    autoregressive inference reads at each step.
    """
    dec = decoder_inputs(xb, yb)
    if config.decoder_loss == "full":
        return model(xb, dec), yb
    horizon = yb.shape[-2]
    lengths = np.sort(rng.choice(horizon, size=min(config.prefix_samples, horizon), replace=False) + 1)
    enc_out = encode(xb, model.params)
    preds = [decode(dec[..., :m, :], enc_out, model.params)[..., m - 1 : m, :] for m in lengths]
    pred = preds[0] if len(preds) == 1 else tt.concat(preds, axis=-2)
    return pred, yb[..., lengths - 1, :]


def fit(
    model: TsbModel,
    x_train: np.ndarray,
    y_train: np.ndarray,
    config: TrainConfig,
    validate: Callable[[TsbModel], float],
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[list[EpochRecord], int, int, bool, bool]:
    """Mini-batch teacher-forced training with early stopping on ``validate(model)``.

    Returns ``(history, best_epoch, steps, stopped_early, diverged)``; the
    model is left holding its best-validation weights (its initial weights
    if no epoch finished).
    """
    params = model.parameters()
    weights = [model.params.named_parameters()[k] for k in model.params.weight_names()]
    opt = init_optimizer_state(config.optimizer, params)
    rng = np.random.default_rng(config.seed)

    history: list[EpochRecord] = []
    best_loss, best_state, best_epoch = np.inf, model.params.state_dict(), 0
    bad_epochs = 0
    steps = 0
    stopped_early = diverged = False
    t0 = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(x_train))
        total, count = 0.0, 0
        try:
            for k in range(0, len(order), config.batch_size):
                idx = order[k : k + config.batch_size]
                xb, yb = x_train[idx], y_train[idx]
                model.params.zero_grad()
                pred, target = _teacher_forced_batch(model, xb, yb, config, rng)
                loss = mse_l2_loss(pred, target, weights, config.l2)
                value = loss.item()
                if not np.isfinite(value):
                    raise NumericError("training loss is not finite")
                loss.backward()
                grads = [p.grad for p in params]
                if config.clip_norm is not None:
                    grads, _ = clip_global_norm(grads, config.clip_norm)
                optimizer_step(params, grads, opt, config.lr, momentum=config.momentum)
                steps += 1
                total += value * len(idx)
                count += len(idx)
            valid = float(validate(model))
            if not np.isfinite(valid):
                raise NumericError("validation loss is not finite")
        except NumericError as exc:
            log.warning("epoch %d diverged (%s); restoring epoch %d weights", epoch, exc, best_epoch)
            diverged = True
            break
        rec = EpochRecord(epoch, total / count, valid, config.lr, time.perf_counter() - t0)
        history.append(rec)
        log.info("epoch %d train %.5f valid %.5f", epoch, rec.train_loss, rec.valid_loss)
        if on_epoch is not None:
            on_epoch(rec)
        if valid < best_loss:
            best_loss, best_state, best_epoch = valid, model.params.state_dict(), epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                stopped_early = True
                break
    model.params.load_state_dict(best_state)
    return history, best_epoch, steps, stopped_early, diverged


def train(
    power: np.ndarray,
    model_config: ModelConfig,
    config: TrainConfig,
    fold: int = 0,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainResult:
    """Fit a TSB model on a ``channels x slots`` power matrix (dBm).

    Normalization statistics come from the training parts only.  Validation
    loss is the normalized MSE on (up to ``valid_max_windows``) validation
    windows, decoded as configured by ``valid_mode``.
    """
    power = np.asarray(power, dtype=np.float64)
    if power.shape[0] != model_config.channels:
        raise ConfigError(
            f"data has {power.shape[0]} channels, model expects {model_config.channels}"
        )
    t_in, m = model_config.input_len, model_config.horizon
    split = kfold_split(power.shape[1], t_in + m, config.folds, fold)
    train_slots = np.concatenate([power[:, lo:hi] for lo, hi in split.train], axis=1)
    stats = NormStats.fit(train_slots)
    series = zscore_normalize(power, stats).T

    xt, yt = gather_windows(series, window_starts(split.train, t_in + m, config.window_stride), t_in, m)
    valid_starts = _subsample(window_starts(split.valid, t_in + m), config.valid_max_windows)
    xv, yv = gather_windows(series, valid_starts, t_in, m)

    model = TsbModel(model_config, seed=config.seed)
    history, best_epoch, steps, stopped_early, diverged = fit(
        model, xt, yt, config, lambda mdl: validation_loss(mdl, xv, yv, config.valid_mode), on_epoch
    )
    return TrainResult(model, stats, split, history, best_epoch, steps, stopped_early, diverged)


def write_history(history: Sequence[EpochRecord], path, run_hash: str | None = None) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if run_hash:
            fh.write(f"# config_hash={run_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "valid_loss", "lr", "wall_seconds"])
        for r in history:
            w.writerow(
                [r.epoch, f"{r.train_loss:.6f}", f"{r.valid_loss:.6f}", f"{r.lr:.6f}", f"{r.wall_seconds:.6f}"]
            )
    return path
