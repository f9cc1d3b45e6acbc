"""Paired-trace dataset synthesis, noise injection, and JSONL persistence.

Each trace pairs a fingerprint sequence (queried from the radio map along a
placed trajectory) with a stepwise displacement sequence whose first entry is
the zero placeholder. Deployment noise is injected once, at build time, into
both modalities of every trace. Every trace owns a derived seed, so builds
are reproducible trace-by-trace and trivially parallelizable.
"""

import hashlib
import json
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

import numpy as np

from traceloc.exceptions import ConfigError, DataIntegrityError
from traceloc.field import FieldLayout
from traceloc.radiomap import GprRadioMap
from traceloc.seeding import rng_from, stable_seed
from traceloc.trajectory import collides, crop_subtrajectory, place_and_rotate

_FORMAT_VERSION = 1


@dataclass(frozen=True)
class NoiseConfig:
    """Deployment-noise strengths; ``lam`` scales all three at once."""

    sigma_f: float = 0.05
    sigma_r: float = 0.2
    sigma_theta: float = 0.15
    lam: float = 1.0

    def __post_init__(self):
        if min(self.sigma_f, self.sigma_r, self.sigma_theta, self.lam) < 0:
            raise ValueError("noise strengths must be nonnegative")


@dataclass(frozen=True)
class PairedTrace:
    """One trajectory with its fingerprint trace and displacement trace.

    ``positions`` (m, 2) are the noiseless ground-truth points; ``ftrace``
    (m, n) and ``dtrace`` (m, 2) carry whatever noise the build injected.
    """

    positions: np.ndarray
    ftrace: np.ndarray
    dtrace: np.ndarray
    trace_id: int = 0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float))
        object.__setattr__(self, "ftrace", np.asarray(self.ftrace, dtype=float))
        object.__setattr__(self, "dtrace", np.asarray(self.dtrace, dtype=float))
        m = len(self.positions)
        if not (len(self.ftrace) == len(self.dtrace) == m):
            raise ValueError("positions, ftrace, and dtrace must share the same length")

    @property
    def m(self) -> int:
        return len(self.positions)

    @property
    def endpoint(self) -> np.ndarray:
        return self.positions[-1]


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "train", np.asarray(self.train, dtype=int))
        object.__setattr__(self, "test", np.asarray(self.test, dtype=int))
        overlap = np.intersect1d(self.train, self.test)
        if overlap.size:
            raise ValueError("train/test splits overlap")


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of paired traces plus its build manifest."""

    traces: tuple
    manifest: dict
    split: SplitIndices | None = None

    def __post_init__(self):
        object.__setattr__(self, "traces", tuple(self.traces))

    @property
    def size(self) -> int:
        return len(self.traces)

    @property
    def m(self) -> int:
        return int(self.manifest["m"])

    @property
    def n_aps(self) -> int:
        return int(self.manifest["n"])

    def subset(self, indices) -> list[PairedTrace]:
        return [self.traces[i] for i in indices]

    def train_traces(self) -> list[PairedTrace]:
        if self.split is None:
            raise ValueError("dataset has no split")
        return self.subset(self.split.train)

    def test_traces(self) -> list[PairedTrace]:
        if self.split is None:
            raise ValueError("dataset has no split")
        return self.subset(self.split.test)


def derive_traces(trajectory, radio_map: GprRadioMap, trace_id: int = 0, seed: int = 0) -> PairedTrace:
    """Noise-free paired trace from an in-bounds trajectory.

    d_1 is the zero placeholder; d_i = p_i - p_{i-1} exactly for i >= 2.
    Fingerprints come from the radio map at each position.
    """
    positions = np.asarray(trajectory, dtype=float)
    ftrace = radio_map.query(positions)
    dtrace = np.zeros_like(positions)
    dtrace[1:] = positions[1:] - positions[:-1]
    return PairedTrace(positions=positions, ftrace=ftrace, dtrace=dtrace,
                       trace_id=trace_id, seed=seed)


def inject_rssi_noise(ftrace, sigma: float, rng) -> np.ndarray:
    """Multiplicative Gaussian noise per entry: f -> f * (1 + N(0, sigma)).

    Operates on dBm values directly, so negative readings scale in magnitude.
    """
    ftrace = np.asarray(ftrace, dtype=float)
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return ftrace.copy()
    return ftrace * (1.0 + rng.normal(0.0, sigma, size=ftrace.shape))


def inject_displacement_noise(dtrace, sigma_r: float, sigma_theta: float, rng) -> np.ndarray:
    """Polar noise on each step: length scales by (1 + N(0, sigma_r)), angle
    shifts by N(0, sigma_theta). The first (placeholder) entry and zero-length
    steps pass through unchanged; noise draws are consumed either way so the
    stream does not depend on step values."""
    dtrace = np.asarray(dtrace, dtype=float)
    if sigma_r < 0 or sigma_theta < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma_r == 0 and sigma_theta == 0:
        return dtrace.copy()  # exact passthrough, no polar round-trip error
    out = dtrace.copy()
    steps = dtrace[1:]
    eps_r = rng.normal(0.0, sigma_r, size=len(steps)) if sigma_r > 0 else np.zeros(len(steps))
    eps_t = rng.normal(0.0, sigma_theta, size=len(steps)) if sigma_theta > 0 else np.zeros(len(steps))
    r = np.hypot(steps[:, 0], steps[:, 1])
    moving = r > 0
    theta = np.arctan2(steps[:, 1], steps[:, 0])
    r_hat = r * (1.0 + eps_r)
    t_hat = theta + eps_t
    noisy = np.stack([r_hat * np.cos(t_hat), r_hat * np.sin(t_hat)], axis=1)
    out[1:][moving] = noisy[moving]
    return out


def _propose_trajectory(layout: FieldLayout, bank, m: int, rng):
    """One placement attempt: sampled walk, crop, uniform position, uniform
    rotation. Returns the placed trajectory; caller checks collision."""
    walk = bank[int(rng.integers(0, len(bank)))]
    cropped = crop_subtrajectory(walk, m, rng)
    p = np.array([rng.uniform(0.0, layout.width_m), rng.uniform(0.0, layout.height_m)])
    angle = rng.uniform(0.0, 2.0 * np.pi)
    return place_and_rotate(cropped, p, angle)


def _build_one_trace(layout, radio_map, bank, m, noise, dataset_seed, trace_id,
                     max_attempts: int = 100_000) -> PairedTrace:
    trace_seed = stable_seed(dataset_seed, trace_id)
    rng = np.random.default_rng(trace_seed)
    for _ in range(max_attempts):
        candidate = _propose_trajectory(layout, bank, m, rng)
        if not collides(layout, candidate):
            break
    else:
        raise ConfigError(f"trace {trace_id}: no collision-free placement in {max_attempts} attempts")
    trace = derive_traces(candidate, radio_map, trace_id=trace_id, seed=trace_seed)
    ftrace = inject_rssi_noise(trace.ftrace, noise.sigma_f * noise.lam, rng)
    dtrace = inject_displacement_noise(
        trace.dtrace, noise.sigma_r * noise.lam, noise.sigma_theta * noise.lam, rng
    )
    return replace(trace, ftrace=ftrace, dtrace=dtrace)


def build_dataset(layout: FieldLayout, radio_map: GprRadioMap, bank, size: int, m: int,
                  noise: NoiseConfig, seed: int, field_ref: str = "",
                  probe_size: int = 2000) -> Dataset:
    """Rejection-sample ``size`` collision-free traces and inject noise.

    A probe batch estimates the rejection rate first; a rate above 99.9%
    means the field is too cluttered for this walk geometry and aborts the
    build instead of looping forever.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    if m < 2:
        raise ValueError("m must be >= 2")
    probe_rng = rng_from(seed, "probe")
    accepted = sum(
        not collides(layout, _propose_trajectory(layout, bank, m, probe_rng))
        for _ in range(probe_size)
    )
    if accepted / probe_size < 0.001:
        raise ConfigError(
            f"placement acceptance rate {accepted / probe_size:.2%} below 0.1%; "
            "field too cluttered for this walk geometry"
        )

    traces = [
        _build_one_trace(layout, radio_map, bank, m, noise, seed, trace_id)
        for trace_id in range(size)
    ]
    manifest = {
        "format_version": _FORMAT_VERSION,
        "size": size,
        "m": m,
        "n": radio_map.n_aps,
        "seed": seed,
        "noise": {
            "sigma_f": noise.sigma_f,
            "sigma_r": noise.sigma_r,
            "sigma_theta": noise.sigma_theta,
            "lam": noise.lam,
        },
        "pathloss": {
            "floor_dbm": radio_map.pathloss.floor_dbm,
            "p0_dbm": radio_map.pathloss.p0_dbm,
        },
        "field_ref": field_ref,
    }
    return Dataset(traces=tuple(traces), manifest=manifest, split=None)


def split_dataset(dataset: Dataset, ratio: float = 0.8, seed: int = 0) -> Dataset:
    """Random disjoint train/test split; train size is floor(ratio * N)."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    rng = rng_from(seed, "split")
    perm = rng.permutation(dataset.size)
    n_train = int(np.floor(ratio * dataset.size))
    split = SplitIndices(train=np.sort(perm[:n_train]), test=np.sort(perm[n_train:]))
    manifest = dict(dataset.manifest)
    manifest["split"] = {"ratio": ratio, "seed": seed,
                         "n_train": int(n_train), "n_test": int(dataset.size - n_train)}
    return Dataset(traces=dataset.traces, manifest=manifest, split=split)


def _manifest_doc(dataset: Dataset) -> dict:
    doc = dict(dataset.manifest)
    if dataset.split is not None:
        doc = dict(doc)
        doc.setdefault("split", {})
        doc["split"] = dict(doc["split"])
        doc["split"]["train"] = dataset.split.train.tolist()
        doc["split"]["test"] = dataset.split.test.tolist()
    return doc


def _trace_record(trace: PairedTrace) -> dict:
    return {
        "trace_id": trace.trace_id,
        "seed": trace.seed,
        "positions": trace.positions.tolist(),
        "dtrace": trace.dtrace.tolist(),
        "ftrace": trace.ftrace.tolist(),
    }


def save_dataset(dataset: Dataset, directory) -> None:
    """Write ``manifest.json`` and one-trace-per-line ``traces.jsonl``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "manifest.json").write_text(
        json.dumps(_manifest_doc(dataset), sort_keys=True, indent=1)
    )
    with open(directory / "traces.jsonl", "w") as fh:
        for trace in dataset.traces:
            fh.write(json.dumps(_trace_record(trace), sort_keys=True))
            fh.write("\n")


def load_dataset(directory) -> Dataset:
    """Reload a saved dataset, validating version, counts, and records."""
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataIntegrityError(f"cannot read dataset manifest: {exc}") from exc
    if manifest.get("format_version") != _FORMAT_VERSION:
        raise DataIntegrityError(
            f"dataset version mismatch: got {manifest.get('format_version')}, "
            f"expected {_FORMAT_VERSION}"
        )
    split_doc = manifest.get("split")
    split = None
    if split_doc is not None and "train" in split_doc:
        split = SplitIndices(train=split_doc["train"], test=split_doc["test"])

    traces = []
    with open(directory / "traces.jsonl") as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                traces.append(PairedTrace(
                    positions=rec["positions"], ftrace=rec["ftrace"],
                    dtrace=rec["dtrace"], trace_id=rec["trace_id"], seed=rec["seed"],
                ))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise DataIntegrityError(
                    f"malformed trace record at line {i} "
                    f"(last good record: {i - 1 if i else 'none'}): {exc}"
                ) from exc
    if len(traces) != manifest["size"]:
        raise DataIntegrityError(
            f"manifest names {manifest['size']} traces but file holds {len(traces)} "
            f"(last good record: {len(traces) - 1 if traces else 'none'})"
        )
    return Dataset(traces=tuple(traces), manifest=manifest, split=split)


def dataset_hash(directory) -> str:
    """SHA-256 over the manifest and trace files, for manifest pinning."""
    directory = Path(directory)
    h = hashlib.sha256()
    for name in ("manifest.json", "traces.jsonl"):
        h.update((directory / name).read_bytes())
    return h.hexdigest()
