"""Relative-displacement inference and few-shot absolute localization.

The displacement between two traces is decoded from the difference of their
endpoint fingerprint codes. Because the displacement decoder is linear with
no bias, the prediction is exactly antisymmetric, exactly zero on identical
inputs, and additive along chains (up to float rounding) regardless of how
well the model is trained.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import torch

from traceloc.models import DTYPE, DualCodec

_CHUNK = 1024


@dataclass(frozen=True)
class RelLocResult:
    """Predicted endpoint displacement plus the latent endpoint distance."""

    delta_hat: np.ndarray
    latent_distance: float


@dataclass(frozen=True)
class AnchorSet:
    """Reference traces with known endpoints for absolute localization.

    ``ftraces``: (K, m, n) normalized fingerprint traces;
    ``endpoints``: (K, 2) positions in meters.
    """

    ftraces: np.ndarray
    endpoints: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ftraces", np.asarray(self.ftraces, dtype=float))
        object.__setattr__(self, "endpoints", np.asarray(self.endpoints, dtype=float))
        if len(self.ftraces) < 1:
            raise ValueError("anchor set must contain at least one trace")
        if len(self.ftraces) != len(self.endpoints):
            raise ValueError("ftraces and endpoints disagree on anchor count")

    @property
    def k(self) -> int:
        return len(self.ftraces)


def _check_trace_len(model: DualCodec, m: int, name: str) -> None:
    if m == model.trace_len:
        return
    if model.config.backbone == "attention":
        warnings.warn(
            f"{name} has length {m} but the model was trained on length "
            f"{model.trace_len}; the positional table extends but accuracy "
            "is untested",
            stacklevel=3,
        )
    else:
        raise ValueError(
            f"{name} has length {m} but the {model.config.backbone} backbone "
            f"requires the trained length {model.trace_len}"
        )


def endpoint_codes(model: DualCodec, ftraces) -> np.ndarray:
    """Latent codes of the final fingerprint of each trace: (B, m, n) -> (B, latent)."""
    f = np.asarray(ftraces, dtype=float)
    if f.ndim != 3 or f.shape[-1] != model.config.n_aps:
        raise ValueError(f"expected (batch, m, {model.config.n_aps}), got {f.shape}")
    model.eval()
    chunks = []
    with torch.no_grad():
        for start in range(0, len(f), _CHUNK):
            t = torch.as_tensor(f[start : start + _CHUNK], dtype=DTYPE)
            chunks.append(model.encode_f(t)[:, -1].numpy())
    return np.concatenate(chunks, axis=0)


def relloc(model: DualCodec, f_a, f_b) -> RelLocResult:
    """Displacement from the endpoint of trace A to the endpoint of trace B.

    Both traces must be normalized and of equal length. The prediction is
    the displacement decode of (endpoint code of B) - (endpoint code of A).
    """
    f_a = np.asarray(f_a, dtype=float)
    f_b = np.asarray(f_b, dtype=float)
    if f_a.ndim != 2 or f_b.ndim != 2:
        raise ValueError("traces must be 2-D arrays (m, n)")
    if f_a.shape != f_b.shape:
        raise ValueError(f"trace shapes disagree: {f_a.shape} vs {f_b.shape}")
    _check_trace_len(model, len(f_a), "trace")
    model.eval()
    with torch.no_grad():
        pair = torch.as_tensor(np.stack([f_a, f_b]), dtype=DTYPE)
        ends = model.encode_f(pair)[:, -1]
        diff = ends[1] - ends[0]
        delta = model.decode_d(diff).numpy()
        dist = float(torch.linalg.vector_norm(diff))
    return RelLocResult(delta_hat=delta, latent_distance=dist)


def pair_deltas(model: DualCodec, codes_a, codes_b) -> tuple[np.ndarray, np.ndarray]:
    """Batched displacement decode between precomputed endpoint codes.

    Returns (deltas (N, 2), latent distances (N,)). Useful when many pairs
    share traces: encode once, subtract cheaply.
    """
    a = torch.as_tensor(np.asarray(codes_a), dtype=DTYPE)
    b = torch.as_tensor(np.asarray(codes_b), dtype=DTYPE)
    with torch.no_grad():
        diff = b - a
        deltas = model.decode_d(diff).numpy()
        dists = torch.linalg.vector_norm(diff, dim=-1).numpy()
    return deltas, dists


def fewshot_absolute(model: DualCodec, f_b, anchors: AnchorSet) -> np.ndarray:
    """Absolute endpoint estimate of a query trace from sparse anchors.

    Predicts the displacement from every anchor to the query, picks the
    anchor with the shortest predicted displacement (ties break toward the
    lowest anchor index), and offsets that anchor's known endpoint by it.
    """
    f_b = np.asarray(f_b, dtype=float)
    if f_b.ndim != 2:
        raise ValueError("query trace must be a 2-D array (m, n)")
    _check_trace_len(model, len(f_b), "query trace")
    query_code = endpoint_codes(model, f_b[None])[0]
    anchor_codes = endpoint_codes(model, anchors.ftraces)
    deltas, _ = pair_deltas(model, anchor_codes, np.tile(query_code, (len(anchor_codes), 1)))
    best = int(np.argmin(np.linalg.norm(deltas, axis=1)))
    return anchors.endpoints[best] + deltas[best]
