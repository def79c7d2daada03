"""The TSB encoder-decoder: attention for mixing positions, stacked Bi-LSTMs in
place of the position-wise feed-forward blocks."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import tensor as tt
from .attention import HeadProjections, make_causal_mask, multi_head_attention
from .errors import ConfigError, ContractError, DimensionError
from .recurrent import StackedBiLstm, stacked_bilstm_forward
from .tensor import Tensor

CHECKPOINT_FORMAT = "tsb-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    channels: int
    input_len: int = 96
    horizon: int = 48
    d_model: int = 64
    encoder_layers: int = 3
    decoder_layers: int = 3
    heads: int = 8
    lstm_layers: int = 2
    positional_encoding: bool = True

    def __post_init__(self):
        for name in (
            "channels",
            "input_len",
            "horizon",
            "d_model",
            "encoder_layers",
            "decoder_layers",
            "heads",
            "lstm_layers",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"ModelConfig.{name} must be >= 1, got {getattr(self, name)}")
        if self.d_model % 2:
            raise ConfigError(f"ModelConfig.d_model must be even, got {self.d_model}")
        if self.d_model % self.heads:
            raise ConfigError(
                f"ModelConfig.d_model={self.d_model} is not divisible by heads={self.heads}"
            )

    def parameter_count(self) -> int:
        """Closed-form number of scalar parameters."""
        d, f, hidden = self.d_model, self.channels, self.d_model // 2
        bilstm = 2 * 4 * (hidden * d + hidden * hidden + hidden)
        attn = 4 * d * d
        enc = attn + self.lstm_layers * bilstm + 2 * (2 * d)
        dec = 2 * attn + self.lstm_layers * bilstm + 3 * (2 * d)
        return (
            f * d
            + d
            + self.encoder_layers * enc
            + self.decoder_layers * dec
            + 2 * d
            + d * f
            + f
        )


class Norm:
    def __init__(self, d: int):
        self.gamma = Tensor(np.ones(d), requires_grad=True)
        self.beta = Tensor(np.zeros(d), requires_grad=True)

    def __call__(self, x) -> Tensor:
        return tt.layer_norm(x, self.gamma, self.beta)

    def named_parameters(self) -> dict[str, Tensor]:
        return {"gamma": self.gamma, "beta": self.beta}


class EncoderLayer:
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.attn = HeadProjections.init(cfg.d_model, cfg.heads, rng)
        self.lstm = StackedBiLstm.init(cfg.d_model, cfg.lstm_layers, rng)
        self.norm1 = Norm(cfg.d_model)
        self.norm2 = Norm(cfg.d_model)

    def named_parameters(self) -> dict[str, Tensor]:
        return _prefixed(attn=self.attn, lstm=self.lstm, norm1=self.norm1, norm2=self.norm2)


class DecoderLayer:
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.self_attn = HeadProjections.init(cfg.d_model, cfg.heads, rng)
        self.cross_attn = HeadProjections.init(cfg.d_model, cfg.heads, rng)
        self.lstm = StackedBiLstm.init(cfg.d_model, cfg.lstm_layers, rng)
        self.norm1 = Norm(cfg.d_model)
        self.norm2 = Norm(cfg.d_model)
        self.norm3 = Norm(cfg.d_model)

    def named_parameters(self) -> dict[str, Tensor]:
        return _prefixed(
            self_attn=self.self_attn,
            cross_attn=self.cross_attn,
            lstm=self.lstm,
            norm1=self.norm1,
            norm2=self.norm2,
            norm3=self.norm3,
        )


def _prefixed(**modules) -> dict[str, Tensor]:
    out = {}
    for prefix, mod in modules.items():
        for name, p in mod.named_parameters().items():
            out[f"{prefix}.{name}"] = p
    return out


class TsbParams:
    """Every learnable tensor of the network, addressable by dotted name."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        rng = np.random.default_rng(seed)
        d, f = cfg.d_model, cfg.channels
        self.config = cfg
        bound = 1.0 / math.sqrt(f)
        self.embed_w = Tensor(rng.uniform(-bound, bound, (f, d)), requires_grad=True)
        self.embed_b = Tensor(np.zeros(d), requires_grad=True)
        self.encoder = [EncoderLayer(cfg, rng) for _ in range(cfg.encoder_layers)]
        self.decoder = [DecoderLayer(cfg, rng) for _ in range(cfg.decoder_layers)]
        self.final_norm = Norm(d)
        bound = 1.0 / math.sqrt(d)
        self.out_w = Tensor(rng.uniform(-bound, bound, (d, f)), requires_grad=True)
        self.out_b = Tensor(np.zeros(f), requires_grad=True)

    def named_parameters(self) -> dict[str, Tensor]:
        out = {"embed.w": self.embed_w, "embed.b": self.embed_b}
        for n, layer in enumerate(self.encoder):
            for name, p in layer.named_parameters().items():
                out[f"encoder{n}.{name}"] = p
        for e, layer in enumerate(self.decoder):
            for name, p in layer.named_parameters().items():
                out[f"decoder{e}.{name}"] = p
        for name, p in self.final_norm.named_parameters().items():
            out[f"final_norm.{name}"] = p
        out["head.w"] = self.out_w
        out["head.b"] = self.out_b
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def weight_names(self) -> list[str]:
        """Names of the weight matrices (the L2-regularized set)."""
        return [k for k, p in self.named_parameters().items() if p.ndim == 2]

    def count(self) -> int:
        return int(np.sum([p.size for p in self.parameters()]))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = self.named_parameters()
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ContractError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in own.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise DimensionError(f"{k}: checkpoint shape {arr.shape} != {p.shape}")
            p.data = arr.copy()


def sinusoidal_encoding(length: int, d_model: int) -> np.ndarray:
    """``PE[pos, 2i] = sin(pos / 10000^(2i/d))``, ``PE[pos, 2i+1] = cos(...)``."""
    pos = np.arange(length)[:, None]
    two_i = np.arange(0, d_model, 2)[None, :]
    angle = pos / np.power(10000.0, two_i / d_model)
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return pe


def embed_with_positional_encoding(x, params: TsbParams) -> Tensor:
    """``(..., L, F) -> (..., L, d_model)``: linear embedding plus sinusoidal positions."""
    x = tt._as_tensor(x)
    cfg = params.config
    if x.shape[-1] != cfg.channels:
        raise DimensionError(f"input has {x.shape[-1]} channels, model expects {cfg.channels}")
    out = tt.matmul(x, params.embed_w) + params.embed_b
    if cfg.positional_encoding:
        out = out + sinusoidal_encoding(x.shape[-2], cfg.d_model)
    return out


def encoder_layer_forward(p_prev, layer: EncoderLayer) -> Tensor:
    s1 = layer.norm1(multi_head_attention(p_prev, p_prev, layer.attn) + p_prev)
    return layer.norm2(stacked_bilstm_forward(s1, layer.lstm) + s1)


def decoder_self_attention(q_prev, layer: DecoderLayer) -> Tensor:
    """First decoder sublayer: causally masked self-attention plus residual norm."""
    mask = make_causal_mask(q_prev.shape[-2])
    return layer.norm1(multi_head_attention(q_prev, q_prev, layer.self_attn, mask) + q_prev)


def decoder_layer_forward(q_prev, enc_out, layer: DecoderLayer) -> Tensor:
    s1 = decoder_self_attention(q_prev, layer)
    s2 = layer.norm2(multi_head_attention(s1, enc_out, layer.cross_attn) + s1)
    return layer.norm3(stacked_bilstm_forward(s2, layer.lstm) + s2)


def encode(enc_in, params: TsbParams) -> Tensor:
    h = embed_with_positional_encoding(enc_in, params)
    for layer in params.encoder:
        h = encoder_layer_forward(h, layer)
    return h


def decode(dec_in, enc_out, params: TsbParams) -> Tensor:
    h = embed_with_positional_encoding(dec_in, params)
    for layer in params.decoder:
        h = decoder_layer_forward(h, enc_out, layer)
    return tt.matmul(params.final_norm(h), params.out_w) + params.out_b


def model_forward_teacher_forced(enc_in, dec_in, params: TsbParams) -> Tensor:
    """``(..., T, F), (..., M, F) -> (..., M, F)`` with ground-truth decoder inputs."""
    return decode(dec_in, encode(enc_in, params), params)


def decoder_inputs(enc_in: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Right-shifted targets: the last encoder row followed by targets ``0..M-2``."""
    enc_in = np.asarray(enc_in, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    return np.concatenate([enc_in[..., -1:, :], target[..., :-1, :]], axis=-2)


def predict_autoregressive(enc_in, params: TsbParams, horizon: int | None = None) -> np.ndarray:
    """Generate ``horizon`` rows, feeding each prediction back as the next decoder input."""
    horizon = params.config.horizon if horizon is None else horizon
    enc_in = np.asarray(tt._as_tensor(enc_in).data)
    with tt.no_grad():
        enc_out = encode(enc_in, params)
        dec = enc_in[..., -1:, :]
        rows = []
        for _ in range(horizon):
            nxt = decode(dec, enc_out, params).data[..., -1:, :]
            rows.append(nxt)
            dec = np.concatenate([dec, nxt], axis=-2)
    return np.concatenate(rows, axis=-2)


def predict_one_step(enc_in, target, params: TsbParams) -> np.ndarray:
    """Row ``k`` is the prediction made from the true prefix of length ``k + 1``.

    This is what autoregressive decoding would output if every fed-back row
    were exact, so no decoder position ever sees its own target.
    """
    enc_in = np.asarray(tt._as_tensor(enc_in).data)
    dec_all = decoder_inputs(enc_in, target)
    with tt.no_grad():
        enc_out = encode(enc_in, params)
        rows = [
            decode(dec_all[..., : k + 1, :], enc_out, params).data[..., -1:, :]
            for k in range(dec_all.shape[-2])
        ]
    return np.concatenate(rows, axis=-2)


def hard_decision(pred_dbm, threshold_dbm: float) -> np.ndarray:
    """0 where the channel is available (power below threshold), else 1."""
    pred = np.asarray(pred_dbm.data if isinstance(pred_dbm, Tensor) else pred_dbm)
    return (pred >= threshold_dbm).astype(np.int8)


class TsbModel:
    """Configuration plus parameters, with the forward passes as methods."""

    def __init__(self, config: ModelConfig, seed: int = 0, params: TsbParams | None = None):
        self.config = config
        self.params = params if params is not None else TsbParams(config, seed)

    def forward(self, enc_in, dec_in) -> Tensor:
        return model_forward_teacher_forced(enc_in, dec_in, self.params)

    __call__ = forward

    def predict(self, enc_in, horizon: int | None = None) -> np.ndarray:
        return predict_autoregressive(enc_in, self.params, horizon)

    def parameters(self) -> list[Tensor]:
        return self.params.parameters()


def save_checkpoint(path, model: TsbModel, norm_stats: dict | None = None, extra: dict | None = None) -> Path:
    """Write config, normalization statistics and every parameter to one ``.npz`` file."""
    path = Path(path)
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": asdict(model.config),
        "norm_stats": norm_stats or {},
        "parameters": {k: list(p.shape) for k, p in model.params.named_parameters().items()},
        "extra": extra or {},
    }
    arrays = {f"param/{k}": v for k, v in model.params.state_dict().items()}
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path) -> tuple[TsbModel, dict]:
    """Inverse of :func:`save_checkpoint`; returns the model and the header dict."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as npz:
        header = json.loads(str(npz["header"]))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ContractError(f"{path} is not a TSB checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ContractError(f"unsupported checkpoint version {header.get('version')}")
        state = {k[len("param/"):]: npz[k] for k in npz.files if k.startswith("param/")}
    model = TsbModel(ModelConfig(**header["model_config"]))
    model.params.load_state_dict(state)
    return model, header
