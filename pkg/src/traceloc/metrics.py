"""Evaluation metrics: displacement error, latent consistency, projections.

DE(k) averages the Euclidean error of predicted endpoint displacements over
sampled test-trace pairs whose true displacement length is at most k meters.
LCDR(k) checks that latent endpoint distances, normalized by true
displacement length, agree between pairs of similar displacement length;
1 is perfect consistency. Targets always come from noiseless ground-truth
positions, never from the (noisy) weak labels.
"""

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from traceloc.dataset import Dataset
from traceloc.inference import endpoint_codes, pair_deltas
from traceloc.models import DualCodec
from traceloc.seeding import rng_from
from traceloc.training import normalizer_from_manifest

DEFAULT_KS = (5.0, 10.0, math.inf)


@dataclass(frozen=True)
class PairSample:
    """Two test-trace indices with their ground-truth displacement."""

    idx_a: int
    idx_b: int
    target: np.ndarray
    target_len: float

    def __post_init__(self):
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))
        if self.idx_a == self.idx_b:
            raise ValueError("pair must reference two distinct traces")


@dataclass(frozen=True)
class LatentProjection:
    """Top-2 principal projection of endpoint codes, with true positions."""

    pca: np.ndarray
    true_endpoints: np.ndarray
    explained_variance: np.ndarray
    total_variance: float


@dataclass
class MetricsReport:
    """DE(k) and LCDR(k) values with sample counts and a config echo."""

    de: dict
    de_counts: dict
    lcdr: dict
    lcdr_couples: dict
    n_pairs: int
    eval_seed: int
    config_echo: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "de": self.de,
            "de_counts": self.de_counts,
            "lcdr": self.lcdr,
            "lcdr_couples": self.lcdr_couples,
            "n_pairs": self.n_pairs,
            "eval_seed": self.eval_seed,
            "config_echo": self.config_echo,
        }


def _k_key(k: float) -> str:
    return "all" if math.isinf(k) else format(k, "g")


def sample_pairs(dataset: Dataset, n_pairs: int, seed: int) -> list[PairSample]:
    """Draw ``n_pairs`` distinct test-trace pairs, orientation randomized.

    Pairs are distinct as unordered pairs; each is returned in one random
    orientation. Targets are recomputed from noiseless positions.
    """
    if dataset.split is None or len(dataset.split.test) < 2:
        raise ValueError("dataset needs a test split with at least two traces")
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    test = np.asarray(dataset.split.test)
    t = len(test)
    total = t * (t - 1) // 2
    if n_pairs > total:
        raise ValueError(f"requested {n_pairs} pairs but only {total} distinct pairs exist")

    rng = rng_from(seed, "pairs")
    chosen: list[tuple[int, int]] = []
    if total <= 4 * n_pairs:
        # few enough distinct pairs to enumerate outright
        unordered = [(i, j) for i in range(t) for j in range(i + 1, t)]
        for f in rng.choice(total, size=n_pairs, replace=False):
            i, j = unordered[int(f)]
            chosen.append((i, j) if rng.random() < 0.5 else (j, i))
    else:
        seen = set()
        while len(chosen) < n_pairs:
            i, j = int(rng.integers(0, t)), int(rng.integers(0, t))
            if i == j:
                continue
            key = (i, j) if i < j else (j, i)
            if key in seen:
                continue
            seen.add(key)
            chosen.append((i, j))

    pairs = []
    for ia, ib in chosen:
        a, b = int(test[ia]), int(test[ib])
        target = dataset.traces[b].endpoint - dataset.traces[a].endpoint
        pairs.append(PairSample(idx_a=a, idx_b=b, target=target,
                                target_len=float(np.linalg.norm(target))))
    return pairs


def pair_predictions(model: DualCodec, dataset: Dataset,
                     pairs: list[PairSample]) -> tuple[np.ndarray, np.ndarray]:
    """Predicted deltas (N, 2) and latent distances (N,) for sampled pairs.

    Each involved trace is encoded once regardless of how many pairs use it.
    """
    normalizer = normalizer_from_manifest(dataset.manifest)
    unique = sorted({p.idx_a for p in pairs} | {p.idx_b for p in pairs})
    lookup = {t: i for i, t in enumerate(unique)}
    f = np.stack([normalizer.normalize(dataset.traces[t].ftrace) for t in unique])
    codes = endpoint_codes(model, f)
    codes_a = codes[[lookup[p.idx_a] for p in pairs]]
    codes_b = codes[[lookup[p.idx_b] for p in pairs]]
    return pair_deltas(model, codes_a, codes_b)


def _de_filter(pairs, k):
    return np.array([p.target_len <= k for p in pairs], dtype=bool)


def displacement_error(model: DualCodec, dataset: Dataset, pairs: list[PairSample],
                       k: float = math.inf) -> tuple[float, int]:
    """Mean Euclidean displacement error over pairs with target length <= k.

    Returns (DE(k), surviving pair count). Raises if no pair survives.
    """
    deltas, _ = pair_predictions(model, dataset, pairs)
    return de_from_predictions(deltas, pairs, k)


def de_from_predictions(deltas: np.ndarray, pairs: list[PairSample],
                        k: float) -> tuple[float, int]:
    if len(pairs) == 0:
        raise ValueError("no pairs given")
    mask = _de_filter(pairs, k)
    if not mask.any():
        raise ValueError(f"no pairs with target length <= {k}; DE({k}) is undefined")
    targets = np.stack([p.target for p in pairs])
    errors = np.linalg.norm(deltas[mask] - targets[mask], axis=1)
    return float(errors.mean()), int(mask.sum())


def lcdr(model: DualCodec, dataset: Dataset, pairs: list[PairSample],
         k: float = math.inf, length_bin_width: float = 0.5,
         seed: int = 0) -> tuple[float, int]:
    """Latent code-distance ratio over length-matched pair couples.

    Pairs are bucketed by target length (bin width ``length_bin_width``) and
    randomly matched into disjoint couples within each bucket; couples whose
    targets exceed ``k`` are dropped. Returns (mean ratio, couple count).
    """
    _, latent_dists = pair_predictions(model, dataset, pairs)
    return lcdr_from_predictions(latent_dists, pairs, k, length_bin_width, seed)


def lcdr_from_predictions(latent_dists: np.ndarray, pairs: list[PairSample], k: float,
                          length_bin_width: float, seed: int) -> tuple[float, int]:
    if length_bin_width <= 0:
        raise ValueError("length_bin_width must be positive")
    rng = rng_from(seed, "lcdr")
    usable = [i for i, p in enumerate(pairs) if p.target_len > 0]
    bins: dict[int, list[int]] = {}
    for i in usable:
        bins.setdefault(int(pairs[i].target_len // length_bin_width), []).append(i)

    ratios = []
    for key in sorted(bins):
        members = bins[key]
        order = rng.permutation(len(members))
        for a_pos, b_pos in zip(order[0::2], order[1::2]):
            ia, ib = members[a_pos], members[b_pos]
            if max(pairs[ia].target_len, pairs[ib].target_len) > k:
                continue
            r_a = latent_dists[ia] / pairs[ia].target_len
            r_b = latent_dists[ib] / pairs[ib].target_len
            hi = max(r_a, r_b)
            ratios.append(min(r_a, r_b) / hi if hi > 0 else 1.0)
    if not ratios:
        raise ValueError(f"no length-matched couples with target length <= {k}")
    return float(np.mean(ratios)), len(ratios)


def latent_projection(model: DualCodec, dataset: Dataset) -> LatentProjection:
    """Top-2 PCA of test-trace endpoint codes, paired with true endpoints."""
    if dataset.split is None or len(dataset.split.test) < 3:
        raise ValueError("projection needs at least three test traces")
    normalizer = normalizer_from_manifest(dataset.manifest)
    traces = dataset.test_traces()
    f = np.stack([normalizer.normalize(t.ftrace) for t in traces])
    codes = endpoint_codes(model, f)
    centered = codes - codes.mean(axis=0)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    # fix component signs so the dominant loading is positive
    for comp in range(2):
        pivot = np.argmax(np.abs(vt[comp]))
        if vt[comp, pivot] < 0:
            u[:, comp] = -u[:, comp]
            vt[comp] = -vt[comp]
    scores = u[:, :2] * s[:2]
    denom = max(len(traces) - 1, 1)
    return LatentProjection(
        pca=scores,
        true_endpoints=np.stack([t.endpoint for t in traces]),
        explained_variance=(s[:2] ** 2) / denom,
        total_variance=float((s**2).sum() / denom),
    )


def procrustes_rms(proj: np.ndarray, target: np.ndarray) -> float:
    """RMS distance (meters) between projection and target after the best
    similarity alignment (rotation/reflection, scale, translation)."""
    proj = np.asarray(proj, dtype=float)
    target = np.asarray(target, dtype=float)
    if proj.shape != target.shape:
        raise ValueError("projection and target must have matching shapes")
    xc = proj - proj.mean(axis=0)
    yc = target - target.mean(axis=0)
    u, s, vt = np.linalg.svd(xc.T @ yc)
    rot = u @ vt
    norm_sq = (xc**2).sum()
    scale = s.sum() / norm_sq if norm_sq > 0 else 0.0
    residual = scale * (xc @ rot) - yc
    return float(np.sqrt((residual**2).sum(axis=1).mean()))


def evaluate_model(model: DualCodec, dataset: Dataset, n_pairs: int = 10_000,
                   lcdr_bin_width: float = 0.5, seed: int = 0,
                   ks=DEFAULT_KS, config_echo: dict | None = None) -> MetricsReport:
    """Full metric pass: one pair sample, one encoding, all DE/LCDR buckets."""
    pairs = sample_pairs(dataset, n_pairs, seed)
    deltas, latent_dists = pair_predictions(model, dataset, pairs)
    de, de_counts, lc, lc_counts = {}, {}, {}, {}
    for k in ks:
        key = _k_key(k)
        de[key], de_counts[key] = de_from_predictions(deltas, pairs, k)
        lc[key], lc_counts[key] = lcdr_from_predictions(
            latent_dists, pairs, k, lcdr_bin_width, seed
        )
    return MetricsReport(
        de=de, de_counts=de_counts, lcdr=lc, lcdr_couples=lc_counts,
        n_pairs=len(pairs), eval_seed=seed, config_echo=config_echo or {},
    )


def fewshot_eval(model: DualCodec, dataset: Dataset, k_anchors: int = 32,
                 n_queries: int = 256, seed: int = 0) -> dict:
    """Mean absolute endpoint error using k anchors sampled from the test split.

    Queries are test traces disjoint from the anchors; every query is located
    against all anchors by shortest predicted displacement.
    """
    if dataset.split is None:
        raise ValueError("dataset has no split")
    if k_anchors < 1:
        raise ValueError("need at least one anchor")
    test = np.asarray(dataset.split.test)
    if len(test) < k_anchors + 1:
        raise ValueError("not enough test traces for anchors plus queries")
    rng = rng_from(seed, "fewshot")
    perm = rng.permutation(len(test))
    anchor_idx = test[perm[:k_anchors]]
    query_idx = test[perm[k_anchors : k_anchors + n_queries]]

    normalizer = normalizer_from_manifest(dataset.manifest)
    anchor_f = np.stack([normalizer.normalize(dataset.traces[i].ftrace) for i in anchor_idx])
    query_f = np.stack([normalizer.normalize(dataset.traces[i].ftrace) for i in query_idx])
    anchor_codes = endpoint_codes(model, anchor_f)
    query_codes = endpoint_codes(model, query_f)
    anchor_ends = np.stack([dataset.traces[i].endpoint for i in anchor_idx])

    errors = []
    for qi, code in zip(query_idx, query_codes):
        deltas, _ = pair_deltas(model, anchor_codes, np.tile(code, (len(anchor_codes), 1)))
        best = int(np.argmin(np.linalg.norm(deltas, axis=1)))
        pred = anchor_ends[best] + deltas[best]
        errors.append(np.linalg.norm(pred - dataset.traces[qi].endpoint))
    return {
        "k_anchors": int(k_anchors),
        "n_queries": int(len(query_idx)),
        "mean_error": float(np.mean(errors)),
        "seed": int(seed),
    }
