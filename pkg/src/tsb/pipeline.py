"""End-to-end runs: generate -> train -> evaluate -> predict, and the ablation grid.

Every artifact records the hash of the run configuration that produced it.
The hash covers scenario, model, training settings, fold and seed but not
output paths, so identical experiments in different directories share it.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .baselines import AR1, persistence_forecast
from .errors import ConfigError
from .metrics import evaluate_predictions, write_error_csv
from .model import ModelConfig, TsbModel, hard_decision, load_checkpoint, save_checkpoint
from .specgen import ScenarioConfig, config_hash, generate_frame, read_dataset, write_dataset
from .training import (
    NormStats,
    TrainConfig,
    denormalize,
    gather_windows,
    kfold_split,
    train,
    window_starts,
    write_history,
    zscore_normalize,
)

log = logging.getLogger(__name__)

DATASET = "dataset.csv"
CHECKPOINT = "model.npz"
HISTORY = "history.csv"
METRICS = "metrics.json"
ERRORS = "errors.csv"
PREDICTION = "prediction.csv"
AVAILABILITY = "availability.csv"
ABLATION = "ablation.csv"

ABLATION_GRID: dict[str, tuple] = {
    "layers": (2, 3, 4),
    "heads": (8, 10, 12),
    "lstm_layers": (1, 2, 3),
    "lr": (0.01, 0.001, 0.0001),
}


def _model_fields() -> set[str]:
    return {f.name for f in fields(ModelConfig)} - {"channels"}


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    model: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    fold: int = 0
    seed: int = 0
    out: str = "runs/default"
    dataset: str | None = None
    checkpoint: str | None = None
    eval_stride: int = 1

    def __post_init__(self):
        unknown = set(self.model) - _model_fields()
        if unknown:
            raise ConfigError(f"unknown model field(s): {sorted(unknown)}")
        if self.eval_stride < 1:
            raise ConfigError("eval_stride must be >= 1")
        # store every model field so equal configs compare equal
        full = asdict(self.model_config())
        full.pop("channels")
        object.__setattr__(self, "model", full)

    def model_config(self) -> ModelConfig:
        return ModelConfig(channels=self.scenario.channels, **self.model)

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def dataset_path(self) -> Path:
        return Path(self.dataset) if self.dataset else self.out_dir / DATASET

    @property
    def checkpoint_path(self) -> Path:
        return Path(self.checkpoint) if self.checkpoint else self.out_dir / CHECKPOINT

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "model": asdict(self.model_config()),
            "train": asdict(self.train),
            "fold": self.fold,
            "seed": self.seed,
            "out": self.out,
            "dataset": self.dataset,
            "checkpoint": self.checkpoint,
            "eval_stride": self.eval_stride,
        }

    def hash(self) -> str:
        d = self.to_dict()
        for key in ("out", "dataset", "checkpoint"):
            d.pop(key)
        return config_hash(d)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        d = dict(d)
        try:
            if "scenario" in d:
                d["scenario"] = ScenarioConfig.from_dict(d["scenario"])
            if "train" in d:
                d["train"] = TrainConfig(**d["train"])
            if "model" in d:
                d["model"] = {k: v for k, v in d["model"].items() if k != "channels"}
        except TypeError as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        return cls(**d)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(
            self,
            seed=seed,
            scenario=replace(self.scenario, seed=seed),
            train=replace(self.train, seed=seed),
        )


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    return RunConfig.from_dict(json.loads(path.read_text(encoding="utf-8")))


def _write_matrix_csv(path: Path, matrix: np.ndarray, run_hash: str, integer: bool = False) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={run_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"ch{f}" for f in range(matrix.shape[1])])
        for row in matrix:
            w.writerow([str(int(v)) for v in row] if integer else [f"{v:.6f}" for v in row])
    return path


def read_matrix_csv(path) -> np.ndarray:
    """Read a prediction/availability CSV back into an ``M x F`` array."""
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    return np.array([[float(v) for v in r] for r in rows[1:]])


# -- commands ----------------------------------------------------------------------


def run_generate(cfg: RunConfig) -> Path:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    frame = generate_frame(cfg.scenario)
    path, _ = write_dataset(frame, cfg.dataset_path, cfg.hash())
    log.info("wrote %s (%d channels x %d slots)", path, frame.channels, frame.slots)
    return path


def run_train(cfg: RunConfig) -> Path:
    frame = read_dataset(cfg.dataset_path)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    result = train(frame.power, cfg.model_config(), cfg.train, fold=cfg.fold)
    run_hash = cfg.hash()
    steps_per_epoch = result.steps / max(len(result.history), 1)
    extra = {
        "config_hash": run_hash,
        "fold": cfg.fold,
        "threshold_dbm": frame.config.threshold_dbm,
        "best_epoch": result.best_epoch,
        "epochs_run": len(result.history),
        "training_steps": result.steps,
        "steps_per_epoch": steps_per_epoch,
        "stopped_early": result.stopped_early,
        "diverged": result.diverged,
    }
    save_checkpoint(cfg.checkpoint_path, result.model, result.norm_stats.to_dict(), extra)
    write_history(result.history, cfg.out_dir / HISTORY, run_hash)
    return cfg.checkpoint_path


def _load_trained(cfg: RunConfig) -> tuple[TsbModel, NormStats, dict]:
    model, header = load_checkpoint(cfg.checkpoint_path)
    return model, NormStats(**header["norm_stats"]), header["extra"]


def holdout_windows(power: np.ndarray, model_config: ModelConfig, train_config: TrainConfig, fold: int, stride: int = 1):
    """Input/target windows (dBm) of the test part of ``fold``, plus the split."""
    window = model_config.input_len + model_config.horizon
    split = kfold_split(power.shape[1], window, train_config.folds, fold)
    starts = window_starts(split.test, window, stride)
    x, y = gather_windows(power.T, starts, model_config.input_len, model_config.horizon)
    return x, y, split


def baseline_scores(power: np.ndarray, model_config: ModelConfig, train_config: TrainConfig, fold: int, threshold_dbm: float, stride: int = 1) -> dict:
    """Persistence and AR(1) scores on the test windows of ``fold``."""
    x, y, split = holdout_windows(power, model_config, train_config, fold, stride)
    stats = NormStats.fit(np.concatenate([power[:, lo:hi] for lo, hi in split.train], axis=1))
    horizon = model_config.horizon
    forecasts = {
        "persistence": persistence_forecast(x, horizon),
        "ar1": AR1.fit([power.T[lo:hi] for lo, hi in split.train]).forecast(x, horizon),
    }
    scores = {}
    for name, pred in forecasts.items():
        b = evaluate_predictions(pred, y, stats, threshold_dbm)
        scores[name] = {
            "rmse": b.rmse,
            "norm_error_accuracy": b.norm_error_accuracy,
            "availability_accuracy": b.availability_accuracy,
            "spearman_kappa_mean": b.spearman_kappa_mean,
        }
    return scores


def evaluate_model(model: TsbModel, stats: NormStats, power: np.ndarray, train_config: TrainConfig, fold: int, threshold_dbm: float, stride: int = 1):
    """Metrics of autoregressive forecasts over the test windows, plus baseline scores."""
    mc = model.config
    x, y, _ = holdout_windows(power, mc, train_config, fold, stride)
    pred_norm = np.concatenate(
        [model.predict(zscore_normalize(x[k : k + 128], stats)) for k in range(0, len(x), 128)]
    )
    pred = denormalize(pred_norm, stats)
    report = evaluate_predictions(pred, y, stats, threshold_dbm)
    report.baselines.update(baseline_scores(power, mc, train_config, fold, threshold_dbm, stride))
    return report, pred, y


def run_evaluate(cfg: RunConfig) -> Path:
    model, stats, extra = _load_trained(cfg)
    frame = read_dataset(cfg.dataset_path)
    report, pred, target = evaluate_model(
        model, stats, frame.power, cfg.train, extra.get("fold", cfg.fold), frame.config.threshold_dbm, cfg.eval_stride
    )
    report.config_hash = cfg.hash()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = report.write_json(cfg.out_dir / METRICS)
    write_error_csv(zscore_normalize(pred, stats), zscore_normalize(target, stats), cfg.out_dir / ERRORS, report.config_hash)
    return path


def run_predict(cfg: RunConfig) -> tuple[Path, Path]:
    """Forecast the ``M`` slots following the end of the dataset."""
    model, stats, _ = _load_trained(cfg)
    frame = read_dataset(cfg.dataset_path)
    t_in = model.config.input_len
    if frame.slots < t_in:
        raise ConfigError(f"dataset has {frame.slots} slots, model needs {t_in}")
    enc = zscore_normalize(frame.power[:, -t_in:].T, stats)
    pred = denormalize(model.predict(enc), stats)
    run_hash = cfg.hash()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    p1 = _write_matrix_csv(cfg.out_dir / PREDICTION, pred, run_hash)
    p2 = _write_matrix_csv(cfg.out_dir / AVAILABILITY, hard_decision(pred, frame.config.threshold_dbm), run_hash, integer=True)
    return p1, p2


def ablation_cells(cfg: RunConfig) -> list[tuple[str, object, RunConfig]]:
    """One-factor-at-a-time variants of ``cfg`` (12 cells)."""
    cells = []
    base_model = asdict(cfg.model_config())
    base_model.pop("channels")
    for axis, values in ABLATION_GRID.items():
        for value in values:
            model = dict(base_model)
            train_cfg = cfg.train
            if axis == "layers":
                model["encoder_layers"] = model["decoder_layers"] = value
            elif axis == "heads":
                model["heads"] = value
                # keep d_model divisible by the head count (and even)
                step = value if value % 2 == 0 else 2 * value
                model["d_model"] = -(-base_model["d_model"] // step) * step
            elif axis == "lstm_layers":
                model["lstm_layers"] = value
            elif axis == "lr":
                train_cfg = replace(train_cfg, lr=value)
            out = str(cfg.out_dir / "ablation" / f"{axis}_{value}")
            cells.append(
                (axis, value, replace(cfg, model=model, train=train_cfg, out=out, dataset=str(cfg.dataset_path), checkpoint=None))
            )
    return cells


def _ablation_cell(args) -> tuple[str, object, float, int]:
    axis, value, cell_cfg = args
    run_train(cell_cfg)
    model, stats, extra = _load_trained(cell_cfg)
    frame = read_dataset(cell_cfg.dataset_path)
    report, _, _ = evaluate_model(
        model, stats, frame.power, cell_cfg.train, cell_cfg.fold, frame.config.threshold_dbm, cell_cfg.eval_stride
    )
    return axis, value, report.rmse, model.config.d_model


def max_workers() -> int:
    raw = os.environ.get("TSB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"TSB_THREADS must be an integer, got {raw!r}") from None
    return max(n, 1)


def run_ablate(cfg: RunConfig) -> Path:
    if not cfg.dataset_path.exists():
        raise FileNotFoundError(f"dataset not found: {cfg.dataset_path}")
    cells = ablation_cells(cfg)
    workers = max_workers()
    if workers == 1:
        rows = [_ablation_cell(c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_ablation_cell, cells))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / ABLATION
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={cfg.hash()}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["axis", "value", "d_model", "horizon", "rmse_db"])
        for axis, value, score, d_model in rows:
            w.writerow([axis, value, d_model, cfg.model_config().horizon, f"{score:.6f}"])
    return path


COMMANDS = {
    "generate": run_generate,
    "train": run_train,
    "evaluate": run_evaluate,
    "predict": run_predict,
    "ablate": run_ablate,
}


def run(command: str, cfg: RunConfig):
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; choose from {sorted(COMMANDS)}")
    return COMMANDS[command](cfg)


def mode_override(cfg: RunConfig, kind: str) -> RunConfig:
    return replace(cfg, scenario=replace(cfg.scenario, mode=replace(cfg.scenario.mode, kind=kind)))

