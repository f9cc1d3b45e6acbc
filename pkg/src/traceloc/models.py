"""Dual autoencoders over a shared latent space.

The fingerprint branch is a sequence autoencoder (attention backbone by
default, with recurrent and per-token feedforward variants for ablations).
The displacement branch is strictly linear with no bias terms anywhere, so
decoding is exactly additive: decode(a + b) = decode(a) + decode(b) and
decode(0) = 0. That exactness is what relative-displacement inference leans
on, so the whole model runs in float64.

Public encode/decode functions take and return numpy arrays; the underlying
``DualCodec`` is a torch module used directly by the training loop.
"""

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from traceloc.exceptions import ConfigError, DataIntegrityError

DTYPE = torch.float64
_CKPT_MAGIC = b"TRACELOC-CKPT-1\n"

BACKBONES = ("attention", "recurrent", "feedforward")
D_CODECS = ("linear", "nonlinear")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of both codecs; the two branches share ``latent_dim``."""

    latent_dim: int = 64
    backbone: str = "attention"
    depth: int = 3
    heads: int = 4
    ffn_dim: int = 128
    d_codec: str = "linear"
    n_aps: int = 20

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ConfigError(f"unknown backbone {self.backbone!r}, expected one of {BACKBONES}")
        if self.d_codec not in D_CODECS:
            raise ConfigError(f"unknown d_codec {self.d_codec!r}, expected one of {D_CODECS}")
        if self.latent_dim % self.heads != 0:
            raise ConfigError(
                f"latent_dim {self.latent_dim} must be divisible by heads {self.heads}"
            )
        if min(self.latent_dim, self.depth, self.heads, self.ffn_dim, self.n_aps) < 1:
            raise ConfigError("model dimensions must be positive")


class FingerprintNormalizer:
    """Affine map of the dBm clamp range [floor, p0] onto [0, 1].

    Inputs are clamped into the range first, so noisy readings outside it
    saturate instead of leaving the unit interval.
    """

    def __init__(self, floor_dbm: float = -95.0, p0_dbm: float = -40.0):
        if floor_dbm >= p0_dbm:
            raise ValueError("floor_dbm must be below p0_dbm")
        self.floor_dbm = float(floor_dbm)
        self.p0_dbm = float(p0_dbm)

    @property
    def span(self) -> float:
        return self.p0_dbm - self.floor_dbm

    def normalize(self, x):
        clip = torch.clamp if isinstance(x, torch.Tensor) else np.clip
        return (clip(x, self.floor_dbm, self.p0_dbm) - self.floor_dbm) / self.span

    def denormalize(self, x):
        return x * self.span + self.floor_dbm


def sinusoidal_positions(length: int, dim: int) -> torch.Tensor:
    """Classic fixed sin/cos position table of shape (length, dim)."""
    pos = torch.arange(length, dtype=DTYPE).unsqueeze(1)
    div = torch.exp(torch.arange(0, dim, 2, dtype=DTYPE) * (-math.log(10000.0) / dim))
    table = torch.zeros(length, dim, dtype=DTYPE)
    table[:, 0::2] = torch.sin(pos * div)
    table[:, 1::2] = torch.cos(pos * div[: dim // 2])
    return table


class AttentionFTraceCodec(nn.Module):
    """Transformer-style sequence autoencoder for fingerprint traces.

    Encoder: input projection + positional encoding + self-attention stack.
    Decoder: same-shape non-autoregressive self-attention stack over the
    latent sequence, followed by a per-token output head.
    """

    max_len = 512

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.latent_dim
        self.input_proj = nn.Linear(config.n_aps, d)
        self.encoder = nn.TransformerEncoder(
            nn.TransformerEncoderLayer(
                d, config.heads, config.ffn_dim, dropout=0.0, batch_first=True
            ),
            config.depth,
            enable_nested_tensor=False,
        )
        self.decoder = nn.TransformerEncoder(
            nn.TransformerEncoderLayer(
                d, config.heads, config.ffn_dim, dropout=0.0, batch_first=True
            ),
            config.depth,
            enable_nested_tensor=False,
        )
        # latent head frees the code norm: the stack's final layer norm would
        # otherwise pin every code onto a constant-norm shell, which conflicts
        # with additive latent structure over long displacements
        self.latent_head = nn.Linear(d, d)
        # per-token path from the raw fingerprint into the code; speeds up the
        # content-to-code mapping that the attention stack refines
        self.content_skip = nn.Linear(config.n_aps, d)
        self.output_head = nn.Linear(d, config.n_aps)
        self.register_buffer("posenc", sinusoidal_positions(self.max_len, d), persistent=False)

    def _positions(self, m: int) -> torch.Tensor:
        if m > self.max_len:
            raise ValueError(f"trace length {m} exceeds positional table ({self.max_len})")
        return self.posenc[:m]

    def encode(self, f: torch.Tensor) -> torch.Tensor:
        context = self.encoder(self.input_proj(f) + self._positions(f.shape[-2]))
        return self.latent_head(context) + self.content_skip(f)

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        return self.output_head(self.decoder(latents + self._positions(latents.shape[-2])))


class RecurrentFTraceCodec(nn.Module):
    """Two-layer recurrent encoder/decoder; context flows forward only."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.latent_dim
        self.input_proj = nn.Linear(config.n_aps, d)
        self.encoder_rnn = nn.LSTM(d, d, num_layers=2, batch_first=True)
        self.decoder_rnn = nn.LSTM(d, d, num_layers=2, batch_first=True)
        self.output_head = nn.Linear(d, config.n_aps)

    def encode(self, f: torch.Tensor) -> torch.Tensor:
        out, _ = self.encoder_rnn(self.input_proj(f))
        return out

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        out, _ = self.decoder_rnn(latents)
        return self.output_head(out)


class FeedforwardFTraceCodec(nn.Module):
    """Per-token perceptron codec: deliberately context-free."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        d, w = config.latent_dim, config.ffn_dim
        self.encoder_mlp = nn.Sequential(
            nn.Linear(config.n_aps, w), nn.ReLU(), nn.Linear(w, w), nn.ReLU(), nn.Linear(w, d)
        )
        self.decoder_mlp = nn.Sequential(
            nn.Linear(d, w), nn.ReLU(), nn.Linear(w, w), nn.ReLU(), nn.Linear(w, config.n_aps)
        )

    def encode(self, f: torch.Tensor) -> torch.Tensor:
        return self.encoder_mlp(f)

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        return self.decoder_mlp(latents)


class LinearDTraceCodec(nn.Module):
    """Bias-free linear maps 2 -> latent -> 2; exactly additive by design."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.enc = nn.Linear(2, config.latent_dim, bias=False)
        self.dec = nn.Linear(config.latent_dim, 2, bias=False)

    def encode(self, d: torch.Tensor) -> torch.Tensor:
        return self.enc(d)

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        return self.dec(latents)


class NonlinearDTraceCodec(nn.Module):
    """Two-layer tanh perceptrons with biases; ablation of the linear branch."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.latent_dim
        self.enc = nn.Sequential(nn.Linear(2, d), nn.Tanh(), nn.Linear(d, d))
        self.dec = nn.Sequential(nn.Linear(d, d), nn.Tanh(), nn.Linear(d, 2))

    def encode(self, d: torch.Tensor) -> torch.Tensor:
        return self.enc(d)

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        return self.dec(latents)


_F_CODECS = {
    "attention": AttentionFTraceCodec,
    "recurrent": RecurrentFTraceCodec,
    "feedforward": FeedforwardFTraceCodec,
}
_D_CODECS = {"linear": LinearDTraceCodec, "nonlinear": NonlinearDTraceCodec}


class DualCodec(nn.Module):
    """The fingerprint codec and displacement codec, trained together."""

    def __init__(self, config: ModelConfig, normalizer: FingerprintNormalizer | None = None,
                 trace_len: int = 9):
        super().__init__()
        self.config = config
        self.normalizer = normalizer or FingerprintNormalizer()
        self.trace_len = int(trace_len)
        self.stage = 0
        self.f_codec = _F_CODECS[config.backbone](config)
        self.d_codec = _D_CODECS[config.d_codec](config)
        self.to(DTYPE)

    def encode_f(self, f: torch.Tensor) -> torch.Tensor:
        return self.f_codec.encode(f)

    def decode_f(self, latents: torch.Tensor) -> torch.Tensor:
        return self.f_codec.decode(latents)

    def encode_d(self, d: torch.Tensor) -> torch.Tensor:
        return self.d_codec.encode(d)

    def decode_d(self, latents: torch.Tensor) -> torch.Tensor:
        return self.d_codec.decode(latents)


def init_params(config: ModelConfig, seed: int,
                normalizer: FingerprintNormalizer | None = None,
                trace_len: int = 9) -> DualCodec:
    """Build a ``DualCodec`` with seed-deterministic parameters.

    Weight matrices get uniform Glorot-style values from a dedicated torch
    generator; biases start at zero, norm gains at one. The linear
    displacement codec allocates no biases at all.
    """
    model = DualCodec(config, normalizer=normalizer, trace_len=trace_len)
    gen = torch.Generator()
    gen.manual_seed(seed % (2**63))
    with torch.no_grad():
        for name, p in model.named_parameters():
            if p.dim() >= 2:
                fan_out, fan_in = p.shape[0], p.shape[1]
                bound = math.sqrt(6.0 / (fan_in + fan_out))
                p.uniform_(-bound, bound, generator=gen)
            elif "bias" in name:
                p.zero_()
            else:
                p.fill_(1.0)
    return model


def _to_tensor(x, name: str, last_dim: int | None = None) -> torch.Tensor:
    t = torch.as_tensor(np.ascontiguousarray(x), dtype=DTYPE)
    if last_dim is not None and (t.ndim == 0 or t.shape[-1] != last_dim):
        raise ValueError(f"{name}: expected trailing dimension {last_dim}, got shape {tuple(t.shape)}")
    return t


def _sequence_arg(x, name: str, last_dim: int) -> tuple[torch.Tensor, bool]:
    t = _to_tensor(x, name, last_dim)
    if t.ndim == 2:
        return t.unsqueeze(0), True
    if t.ndim == 3:
        return t, False
    raise ValueError(f"{name}: expected (m, {last_dim}) or (batch, m, {last_dim}), got {tuple(t.shape)}")


def encode_ftrace(model: DualCodec, ftrace) -> np.ndarray:
    """Latent codes of a normalized fingerprint trace: (m, n) -> (m, latent)."""
    t, squeeze = _sequence_arg(ftrace, "ftrace", model.config.n_aps)
    if t.shape[1] < 1:
        raise ValueError("ftrace must contain at least one fingerprint")
    model.eval()
    with torch.no_grad():
        out = model.encode_f(t)
    return (out[0] if squeeze else out).numpy()


def decode_ftrace(model: DualCodec, latents) -> np.ndarray:
    """Reconstructed (normalized) fingerprints from latent codes."""
    t, squeeze = _sequence_arg(latents, "latents", model.config.latent_dim)
    model.eval()
    with torch.no_grad():
        out = model.decode_f(t)
    return (out[0] if squeeze else out).numpy()


def encode_dtrace(model: DualCodec, dtrace) -> np.ndarray:
    """Per-step latent codes of a displacement trace (meters)."""
    t = _to_tensor(dtrace, "dtrace", 2)
    model.eval()
    with torch.no_grad():
        out = model.encode_d(t)
    return out.numpy()


def decode_dtrace(model: DualCodec, latents) -> np.ndarray:
    """Displacements (meters) decoded from latent codes; accepts any leading
    shape, including a single (latent,) vector."""
    t = _to_tensor(latents, "latents", model.config.latent_dim)
    model.eval()
    with torch.no_grad():
        out = model.decode_d(t)
    return out.numpy()


def _array_entries(arrays: dict) -> tuple[list, bytes]:
    entries, blobs = [], []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        entries.append({"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    return entries, b"".join(blobs)


def save_checkpoint(model: DualCodec, path, extra_arrays: dict | None = None) -> None:
    """Write parameters (and optional optimizer arrays) in a deterministic
    binary format: magic, JSON header, then raw little-endian buffers."""
    arrays = {f"model/{k}": v.detach().numpy() for k, v in model.state_dict().items()}
    for k, v in (extra_arrays or {}).items():
        arrays[f"extra/{k}"] = np.asarray(v)
    entries, payload = _array_entries(arrays)
    header = json.dumps(
        {
            "model_config": asdict(model.config),
            "normalizer": {"floor_dbm": model.normalizer.floor_dbm,
                           "p0_dbm": model.normalizer.p0_dbm},
            "trace_len": model.trace_len,
            "stage": model.stage,
            "arrays": entries,
        },
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        fh.write(payload)


@dataclass
class CheckpointBundle:
    model: DualCodec
    stage: int
    extra_arrays: dict


def load_checkpoint(path) -> CheckpointBundle:
    """Rebuild a model (and any extra arrays) from ``save_checkpoint`` output."""
    raw = Path(path).read_bytes()
    if not raw.startswith(_CKPT_MAGIC):
        raise DataIntegrityError(f"{path}: not a checkpoint file")
    off = len(_CKPT_MAGIC)
    header_len = int.from_bytes(raw[off : off + 8], "little")
    off += 8
    try:
        header = json.loads(raw[off : off + header_len])
    except json.JSONDecodeError as exc:
        raise DataIntegrityError(f"{path}: corrupt checkpoint header: {exc}") from exc
    off += header_len

    arrays = {}
    for entry in header["arrays"]:
        arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"]), offset=off,
                            count=int(np.prod(entry["shape"], dtype=int)))
        off += arr.nbytes
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    if off != len(raw):
        raise DataIntegrityError(f"{path}: checkpoint payload size mismatch")

    config = ModelConfig(**header["model_config"])
    normalizer = FingerprintNormalizer(**header["normalizer"])
    model = DualCodec(config, normalizer=normalizer, trace_len=header["trace_len"])
    state = {k[len("model/"):]: torch.as_tensor(v)
             for k, v in arrays.items() if k.startswith("model/")}
    model.load_state_dict(state)
    model.stage = header["stage"]
    extra = {k[len("extra/"):]: v for k, v in arrays.items() if k.startswith("extra/")}
    return CheckpointBundle(model=model, stage=header["stage"], extra_arrays=extra)
