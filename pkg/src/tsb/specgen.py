"""Synthetic multi-channel spectrum under jamming.

Each cell's received power is the linear-domain sum of an honest-user
signal, a jammer signal and thermal noise, expressed in dBm.  Honest users
hold a fixed random set of channels; the jammer follows one of four
schedules (sweep, fixed, hopping, comb) with period ``P`` slots.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError

MODES = ("sweep", "fixed", "hopping", "comb")

# independent RNG stream tags; per-channel noise uses (seed, NOISE_STREAM, channel)
HU_STREAM = 1
NOISE_STREAM = 2
HOP_STREAM = 3
MU_POWER_STREAM = 4


@dataclass(frozen=True)
class InterferenceMode:
    """Jammer schedule and its parameters.

    ``sweep``: channel ``floor(start + step * (t mod P)) mod F``.
    ``fixed``: the channels in ``channels`` are jammed in every slot.
    ``hopping``: one uniformly drawn channel per period, held for the period.
    ``comb``: every ``spacing``-th channel from ``start`` is always jammed.
    """

    kind: str = "sweep"
    start: float = 0.0
    step: float = 1.0
    channels: tuple[int, ...] = (3,)
    spacing: int = 4

    def __post_init__(self):
        if self.kind not in MODES:
            raise ConfigError(f"unknown interference mode {self.kind!r}; choose from {MODES}")
        if self.spacing < 1:
            raise ConfigError("comb spacing must be >= 1")
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))

    def validate(self, channels: int) -> None:
        if self.kind == "fixed" and any(not 0 <= c < channels for c in self.channels):
            raise ConfigError(f"fixed channels {self.channels} outside [0, {channels})")
        if self.kind in ("sweep", "comb") and not 0 <= self.start < channels:
            raise ConfigError(f"start channel {self.start} outside [0, {channels})")


@dataclass(frozen=True)
class ScenarioConfig:
    channels: int = 32
    slots: int = 4000
    slot_seconds: float = 0.1
    period: int = 20
    noise_floor_dbm: float = -90.0
    noise_looks: int = 16
    hu_count: int = 4
    hu_power_dbm: tuple[float, float] = (-48.0, -40.0)
    mu_power_dbm: tuple[float, float] = (-45.0, -30.0)
    threshold_dbm: float = -50.0
    mode: InterferenceMode = field(default_factory=InterferenceMode)
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.mode, dict):
            object.__setattr__(self, "mode", InterferenceMode(**self.mode))
        elif isinstance(self.mode, str):
            object.__setattr__(self, "mode", InterferenceMode(kind=self.mode))
        object.__setattr__(self, "hu_power_dbm", tuple(float(v) for v in self.hu_power_dbm))
        object.__setattr__(self, "mu_power_dbm", tuple(float(v) for v in self.mu_power_dbm))
        for name in ("channels", "slots", "period", "noise_looks"):
            if getattr(self, name) < 1:
                raise ConfigError(f"ScenarioConfig.{name} must be >= 1")
        if not 0 <= self.hu_count <= self.channels:
            raise ConfigError("hu_count must lie in [0, channels]")
        for name in ("hu_power_dbm", "mu_power_dbm"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"ScenarioConfig.{name} range is reversed: {(lo, hi)}")
        if self.mu_power_dbm[0] <= self.threshold_dbm:
            raise ConfigError(
                f"jammer power {self.mu_power_dbm} must exceed the threshold {self.threshold_dbm} dBm"
            )
        self.mode.validate(self.channels)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"]["channels"] = list(d["mode"]["channels"])
        d["hu_power_dbm"] = list(d["hu_power_dbm"])
        d["mu_power_dbm"] = list(d["mu_power_dbm"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        return cls(**d)

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


@dataclass
class SpectrumFrame:
    """Power matrix (channels x slots, dBm), occupancy labels and the indicator traces."""

    power: np.ndarray
    occupancy: np.ndarray
    hu_active: np.ndarray
    mu_active: np.ndarray
    config: ScenarioConfig

    @property
    def channels(self) -> int:
        return self.power.shape[0]

    @property
    def slots(self) -> int:
        return self.power.shape[1]


def combine_powers_dbm(components) -> np.ndarray:
    """Superpose powers given in dBm: ``10 log10(sum 10^(x/10))``.

    ``components`` is a sequence of scalars or equally-shaped arrays.
    """
    comps = [np.asarray(c, dtype=np.float64) for c in components]
    if not comps:
        raise ContractError("combine_powers_dbm needs at least one component")
    if len(comps) == 1:
        return comps[0].copy()
    stacked = np.stack(np.broadcast_arrays(*comps))
    if not np.isfinite(stacked).all():
        raise ContractError("combine_powers_dbm: components must be finite")
    peak = stacked.max(axis=0)
    return peak + 10.0 * np.log10(np.sum(10.0 ** ((stacked - peak) / 10.0), axis=0))


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=np.float64) / 10.0)


def mw_to_dbm(mw):
    return 10.0 * np.log10(mw)


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, *stream])


def interference_schedule(mode: InterferenceMode, channels: int, slots: int, period: int, seed: int = 0) -> np.ndarray:
    """Boolean ``channels x slots`` jammer activity mask."""
    mode.validate(channels)
    mask = np.zeros((channels, slots), dtype=bool)
    t = np.arange(slots)
    if mode.kind == "sweep":
        ch = np.floor(mode.start + mode.step * (t % period)).astype(int) % channels
        mask[ch, t] = True
    elif mode.kind == "fixed":
        mask[list(mode.channels), :] = True
    elif mode.kind == "hopping":
        n_periods = -(-slots // period)
        hops = _rng(seed, HOP_STREAM).integers(0, channels, size=n_periods)
        mask[hops[t // period], t] = True
    elif mode.kind == "comb":
        mask[int(mode.start) :: mode.spacing, :] = True
    return mask


def honest_user_channels(config: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    """Channels held by honest users and their (fixed) received powers in dBm."""
    rng = _rng(config.seed, HU_STREAM)
    chans = np.sort(rng.choice(config.channels, size=config.hu_count, replace=False))
    lo, hi = config.hu_power_dbm
    return chans, rng.uniform(lo, hi, size=config.hu_count)


def noise_power_mw(config: ScenarioConfig, channel: int) -> np.ndarray:
    """Per-slot noise power of one channel.

    Complex AWGN with variance ``sigma_d^2`` (the noise floor in mW) gives an
    exponentially distributed periodogram; ``noise_looks`` of them are
    averaged as a spectrum analyser would.
    """
    rng = _rng(config.seed, NOISE_STREAM, channel)
    sigma2 = dbm_to_mw(config.noise_floor_dbm)
    k = config.noise_looks
    return rng.gamma(shape=k, scale=sigma2 / k, size=config.slots)


def generate_frame(config: ScenarioConfig) -> SpectrumFrame:
    f_n, t_n = config.channels, config.slots
    hu_active = np.zeros((f_n, t_n), dtype=bool)
    hu_mw = np.zeros((f_n, t_n))
    chans, powers = honest_user_channels(config)
    hu_active[chans, :] = True
    hu_mw[chans, :] = dbm_to_mw(powers)[:, None]

    mu_active = interference_schedule(config.mode, f_n, t_n, config.period, config.seed)
    lo, hi = config.mu_power_dbm
    mu_dbm = _rng(config.seed, MU_POWER_STREAM).uniform(lo, hi, size=(f_n, t_n))
    mu_mw = np.where(mu_active, dbm_to_mw(mu_dbm), 0.0)

    noise = np.stack([noise_power_mw(config, ch) for ch in range(f_n)])
    power = mw_to_dbm(hu_mw + mu_mw + noise)
    occupancy = (power >= config.threshold_dbm).astype(np.int8)
    return SpectrumFrame(power, occupancy, hu_active, mu_active, config)


# -- dataset files ---------------------------------------------------------------


def config_hash(payload: dict) -> str:
    """Short stable hash of a JSON-serializable configuration."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_dataset(frame: SpectrumFrame, csv_path, run_hash: str | None = None) -> tuple[Path, Path]:
    """Write ``<name>.csv`` (slot + one dBm column per channel) and ``<name>.json``."""
    csv_path = Path(csv_path)
    cfg = frame.config.to_dict()
    run_hash = run_hash or config_hash(cfg)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={run_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slot"] + [f"ch{f}" for f in range(frame.channels)])
        for t in range(frame.slots):
            w.writerow([t] + [f"{v:.6f}" for v in frame.power[:, t]])
    meta_path = csv_path.with_suffix(".json")
    meta = {
        "config_hash": run_hash,
        "scenario": cfg,
        "threshold_dbm": frame.config.threshold_dbm,
        "channels": frame.channels,
        "slots": frame.slots,
    }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, meta_path


def read_dataset(csv_path) -> SpectrumFrame:
    """Load a dataset CSV plus its JSON sidecar; validates the channel count."""
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise FileNotFoundError(f"dataset not found: {csv_path}")
    meta_path = csv_path.with_suffix(".json")
    if not meta_path.exists():
        raise FileNotFoundError(f"dataset sidecar not found: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    config = ScenarioConfig.from_dict(meta["scenario"])
    with open(csv_path, encoding="utf-8") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    header, body = rows[0], rows[1:]
    if len(header) - 1 != meta["channels"]:
        raise ContractError(
            f"{csv_path}: {len(header) - 1} power columns but sidecar declares {meta['channels']}"
        )
    power = np.array([[float(v) for v in r[1:]] for r in body]).T
    occupancy = (power >= meta["threshold_dbm"]).astype(np.int8)
    # indicator traces are not stored; regenerate them from the scenario
    mu = interference_schedule(config.mode, config.channels, power.shape[1], config.period, config.seed)
    hu = np.zeros_like(mu)
    hu[honest_user_channels(config)[0], :] = True
    return SpectrumFrame(power, occupancy, hu, mu, config.with_(slots=power.shape[1]))
