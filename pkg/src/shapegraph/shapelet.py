"""Time-aware shapelet extraction.

Candidates are drawn from the segment pool by a greedy max-peer-distance
sweep, then each candidate learns two timing factors: per-element local
weights (length l) applied along the warp alignment, and per-segment
global weights (length m) scaling the segment distances. Training
minimizes ``-KL(pos || neg)`` between Gaussian fits of the soft series
distances of the two classes, plus L2 penalties on both factors, with
mini-batch Adam. The K candidates with smallest final loss survive.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .warp import WarpConfig, alignment_coefficients

log = logging.getLogger(__name__)

SCHEMA_VERSION = "shapegraph/1"
VARIANCE_FLOOR = 1e-4

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingDataError(ValueError):
    """Raised when the labeled data cannot support the training objective."""


class TrainingError(RuntimeError):
    """Raised when optimization diverges (non-finite loss)."""


@dataclass(frozen=True)
class GaussianFit:
    mu: float
    sigma2: float  # floored at VARIANCE_FLOOR


@dataclass
class Shapelet:
    """A candidate segment together with its learned timing factors."""

    values: np.ndarray
    local_weights: np.ndarray  # length l, non-negative
    segment_weights: np.ndarray  # length m, non-negative
    loss: float = math.nan
    rank: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.local_weights = np.asarray(self.local_weights, dtype=np.float64)
        self.segment_weights = np.asarray(self.segment_weights, dtype=np.float64)
        if self.local_weights.shape != self.values.shape:
            raise ValueError("local weights must match values in length")
        if np.any(self.local_weights < 0) or np.any(self.segment_weights < 0):
            raise ValueError("timing factors must be non-negative")


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for candidate generation and timing-factor training."""

    num_shapelets: int
    segment_length: int
    local_penalty: float = 0.5
    global_penalty: float = 0.1
    epochs: int = 50
    learning_rate: float = 0.01
    batch_size: int = 50
    softmin_temperature: float = 1.0
    candidate_size: int | None = None  # default: 100 * num_shapelets
    prefilter: bool = False
    prefilter_multiple: int = 10
    kl_direction: str = "pos-neg"  # or "neg-pos"
    warp: WarpConfig = field(default_factory=WarpConfig)
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.local_penalty < 0 or self.global_penalty < 0:
            raise ValueError("penalties must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.kl_direction not in ("pos-neg", "neg-pos"):
            raise ValueError(f"unknown kl direction {self.kl_direction!r}")

    @property
    def pool_size(self) -> int:
        return self.candidate_size or 100 * self.num_shapelets


def fit_gaussian(xs: np.ndarray) -> GaussianFit:
    xs = np.asarray(xs, dtype=np.float64)
    if xs.size < 2:
        raise TrainingDataError("need at least 2 samples per class to fit a Gaussian")
    return GaussianFit(float(xs.mean()), max(float(xs.var()), VARIANCE_FLOOR))


def gaussian_kl(p: GaussianFit, q: GaussianFit) -> float:
    """KL divergence between two univariate Gaussians, KL(p || q)."""
    return float(
        0.5 * math.log(q.sigma2 / p.sigma2)
        + (p.sigma2 + (p.mu - q.mu) ** 2) / (2.0 * q.sigma2)
        - 0.5
    )


def generate_candidates(pool: np.ndarray, size: int) -> np.ndarray:
    """Greedy candidate selection maximizing accumulated peer distance.

    Seeds with the pool row closest to the pool centroid, then repeatedly
    takes the row whose summed Euclidean distance to everything already
    selected is largest. Ties resolve to the lowest pool index, so the
    selection is deterministic for a pool ordered by (series, position).
    """
    pool = np.asarray(pool, dtype=np.float64)
    n = pool.shape[0]
    if size < 1 or size > n:
        raise ValueError(f"candidate pool size {size} not in [1, {n}]")
    centroid = pool.mean(axis=0)
    score = np.zeros(n)
    score[np.argmin(((pool - centroid) ** 2).sum(axis=1))] = 1.0
    taken = np.zeros(n, dtype=bool)
    order: list[int] = []
    for _ in range(size):
        i = int(np.argmax(score))
        order.append(i)
        taken[i] = True
        score[i] = -1.0
        d = np.sqrt(((pool - pool[i]) ** 2).sum(axis=1))
        score[~taken] += d[~taken]
    return pool[order].copy()


# ---------------------------------------------------------------------------
# Training objective.
# ---------------------------------------------------------------------------


class CandidateObjective:
    """Loss and gradients of one candidate's timing factors.

    The warp alignments depend only on the fixed candidate and segment
    values, so their per-element squared-difference coefficients are
    computed once; the loss is then smooth in (w, u) through
    ``sqrt(coeffs @ w)``, the segment scaling, the softmin, and the
    closed-form Gaussian moments.
    """

    def __init__(self, values, segments, labels, cfg: TrainConfig):
        segments = np.asarray(segments, dtype=np.float64)
        if segments.ndim != 3:
            raise ValueError("segments must be a (series, m, l) array")
        self.num_series, self.m, _ = segments.shape
        self.values = np.asarray(values, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.cfg = cfg
        flat = segments.reshape(self.num_series * self.m, -1)
        self.coeffs = alignment_coefficients(self.values, flat, cfg.warp).reshape(
            self.num_series, self.m, len(self.values)
        )

    def _check_classes(self, idx: np.ndarray):
        y = self.labels[idx]
        if (y == 1).sum() < 2 or (y == 0).sum() < 2:
            raise TrainingDataError("each class needs at least 2 series")

    def soft_distances(self, w, u, idx=None):
        """Per-series softmin distances plus the intermediates backprop needs."""
        idx = np.arange(self.num_series) if idx is None else idx
        coeffs = self.coeffs[idx]
        d = np.sqrt(np.maximum(coeffs @ w, 0.0))  # (S, m)
        e = d * u[None, :]
        tau = self.cfg.softmin_temperature
        g = np.exp(-(e - e.min(axis=1, keepdims=True)) / tau)
        gsum = g.sum(axis=1, keepdims=True)
        dist = (e * g).sum(axis=1) / gsum[:, 0]
        return dist, (coeffs, d, e, g, gsum)

    def loss(self, w, u, idx=None) -> float:
        idx = np.arange(self.num_series) if idx is None else idx
        self._check_classes(idx)
        dist, _ = self.soft_distances(w, u, idx)
        y = self.labels[idx]
        kl = self._kl(fit_gaussian(dist[y == 1]), fit_gaussian(dist[y == 0]))
        return -kl + self.cfg.local_penalty * _l2(w) + self.cfg.global_penalty * _l2(u)

    def loss_grad(self, w, u, idx=None):
        idx = np.arange(self.num_series) if idx is None else idx
        self._check_classes(idx)
        dist, (coeffs, d, e, g, gsum) = self.soft_distances(w, u, idx)
        y = self.labels[idx]
        pos, neg = dist[y == 1], dist[y == 0]
        fp, fq = fit_gaussian(pos), fit_gaussian(neg)
        if self.cfg.kl_direction == "pos-neg":
            p, q = fp, fq
        else:
            p, q = fq, fp
        kl = gaussian_kl(p, q)

        # closed-form KL partials; variance flooring zeroes that branch
        dmu_p = (p.mu - q.mu) / q.sigma2
        dmu_q = -dmu_p
        ds2_p = 0.0 if p.sigma2 <= VARIANCE_FLOOR else -0.5 / p.sigma2 + 0.5 / q.sigma2
        ds2_q = (
            0.0
            if q.sigma2 <= VARIANCE_FLOOR
            else 0.5 / q.sigma2 - (p.sigma2 + (p.mu - q.mu) ** 2) / (2.0 * q.sigma2**2)
        )
        if self.cfg.kl_direction == "pos-neg":
            dmu_pos, ds2_pos, dmu_neg, ds2_neg = dmu_p, ds2_p, dmu_q, ds2_q
        else:
            dmu_pos, ds2_pos, dmu_neg, ds2_neg = dmu_q, ds2_q, dmu_p, ds2_p

        # d(-KL)/dD per series through the class mean and variance
        dl_ddist = np.zeros_like(dist)
        mpos, mneg = y == 1, y == 0
        npos, nneg = mpos.sum(), mneg.sum()
        dl_ddist[mpos] = -(dmu_pos / npos + ds2_pos * 2.0 * (pos - fp.mu) / npos)
        dl_ddist[mneg] = -(dmu_neg / nneg + ds2_neg * 2.0 * (neg - fq.mu) / nneg)

        tau = self.cfg.softmin_temperature
        ddist_de = (g / gsum) * (1.0 + (dist[:, None] - e) / tau)
        de = dl_ddist[:, None] * ddist_de  # (S, m)

        d_safe = np.maximum(d, 1e-12)
        aw = de * u[None, :] / (2.0 * d_safe)  # (S, m)
        grad_w = np.einsum("sm,sml->l", aw, coeffs)
        grad_u = (de * d).sum(axis=0)

        wn, un = _l2(w), _l2(u)
        if wn > 0:
            grad_w = grad_w + self.cfg.local_penalty * w / wn
        if un > 0:
            grad_u = grad_u + self.cfg.global_penalty * u / un
        loss = -kl + self.cfg.local_penalty * wn + self.cfg.global_penalty * un
        return loss, grad_w, grad_u

    def static_loss(self) -> float:
        """Unpenalized -KL of the hard-min distances at all-ones factors."""
        self._check_classes(np.arange(self.num_series))
        d = np.sqrt(np.maximum(self.coeffs.sum(axis=2), 0.0)).min(axis=1)
        kl = self._kl(fit_gaussian(d[self.labels == 1]), fit_gaussian(d[self.labels == 0]))
        return -kl

    def _kl(self, pos: GaussianFit, neg: GaussianFit) -> float:
        if self.cfg.kl_direction == "pos-neg":
            return gaussian_kl(pos, neg)
        return gaussian_kl(neg, pos)


def _l2(x) -> float:
    return float(np.sqrt(np.sum(np.square(x))))


def candidate_loss(
    values,
    segments,
    labels,
    cfg: TrainConfig,
    local_weights=None,
    segment_weights=None,
) -> float:
    """Training loss of one candidate at the given (default all-ones) factors."""
    obj = CandidateObjective(values, segments, labels, cfg)
    w = np.ones(len(obj.values)) if local_weights is None else np.asarray(local_weights, float)
    u = np.ones(obj.m) if segment_weights is None else np.asarray(segment_weights, float)
    return obj.loss(w, u)


def _stratified_batches(labels: np.ndarray, batch_size: int, rng: np.random.Generator):
    """Yield index batches that keep at least two members of each class."""
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    rng.shuffle(pos)
    rng.shuffle(neg)
    wanted = math.ceil(len(labels) / batch_size)
    num_batches = max(1, min(wanted, len(pos) // 2, len(neg) // 2))
    for pc, nc in zip(np.array_split(pos, num_batches), np.array_split(neg, num_batches)):
        yield np.concatenate([pc, nc])


def train_timing_factors(values, segments, labels, cfg: TrainConfig, seed=None) -> Shapelet:
    """Learn the two timing factors of one candidate with mini-batch Adam.

    Factors start at all-ones (the static distances) and are projected to
    be non-negative after every step. Raises :class:`TrainingError` with
    the epoch and learning rate if the loss turns non-finite.
    """
    obj = CandidateObjective(values, segments, labels, cfg)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    l = len(obj.values)
    w = np.ones(l)
    u = np.ones(obj.m)
    mw, vw = np.zeros(l), np.zeros(l)
    mu_, vu = np.zeros(obj.m), np.zeros(obj.m)
    t = 0
    for epoch in range(cfg.epochs):
        for batch in _stratified_batches(obj.labels, cfg.batch_size, rng):
            loss, gw, gu = obj.loss_grad(w, u, batch)
            if not math.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch} (lr={cfg.learning_rate})"
                )
            t += 1
            mw = ADAM_BETA1 * mw + (1 - ADAM_BETA1) * gw
            vw = ADAM_BETA2 * vw + (1 - ADAM_BETA2) * gw**2
            mu_ = ADAM_BETA1 * mu_ + (1 - ADAM_BETA1) * gu
            vu = ADAM_BETA2 * vu + (1 - ADAM_BETA2) * gu**2
            bc1 = 1 - ADAM_BETA1**t
            bc2 = 1 - ADAM_BETA2**t
            w = w - cfg.learning_rate * (mw / bc1) / (np.sqrt(vw / bc2) + ADAM_EPS)
            u = u - cfg.learning_rate * (mu_ / bc1) / (np.sqrt(vu / bc2) + ADAM_EPS)
            np.maximum(w, 0.0, out=w)
            np.maximum(u, 0.0, out=u)
    final = obj.loss(w, u)
    if not math.isfinite(final):
        raise TrainingError(f"non-finite final loss (lr={cfg.learning_rate})")
    return Shapelet(obj.values, w, u, loss=float(final))


def _segment_tensor(dataset) -> tuple[np.ndarray, np.ndarray]:
    from .data import segment_matrix

    return segment_matrix(dataset), dataset.labels


def _train_chunk(args):
    candidates, segments, labels, cfg, seeds = args
    out = []
    for cand, seed in zip(candidates, seeds):
        out.append(train_timing_factors(cand, segments, labels, cfg, seed=seed))
    return out


def _static_chunk(args):
    candidates, segments, labels, cfg = args
    return [
        CandidateObjective(cand, segments, labels, cfg).static_loss() for cand in candidates
    ]


def _run_chunked(fn, payloads, workers: int):
    if workers <= 1 or len(payloads) <= 1:
        results = [fn(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, payloads))
    return [item for chunk in results for item in chunk]


def _chunk(items, workers: int):
    per = math.ceil(len(items) / max(1, workers * 4))
    return [items[i : i + per] for i in range(0, len(items), per)]


def extract_shapelets(dataset, cfg: TrainConfig) -> list[Shapelet]:
    """Full extraction: candidates, optional prefilter, training, top-K.

    Returns the ``num_shapelets`` trained shapelets with smallest final
    loss, losses non-decreasing and ranks 1..K assigned in that order.
    """
    segments, labels = _segment_tensor(dataset)
    pool = segments.reshape(-1, segments.shape[2])
    candidates = generate_candidates(pool, cfg.pool_size)
    if cfg.prefilter:
        keep = min(len(candidates), cfg.prefilter_multiple * cfg.num_shapelets)
        static = _static_scores(candidates, segments, labels, cfg)
        candidates = candidates[np.argsort(static, kind="stable")[:keep]]
        log.info("prefilter kept %d of %d candidates", keep, cfg.pool_size)

    seeds = [np.random.SeedSequence([cfg.seed, i]).generate_state(1)[0] for i in range(len(candidates))]
    payloads = [
        (chunk_c, segments, labels, cfg, chunk_s)
        for chunk_c, chunk_s in zip(_chunk(candidates, cfg.workers), _chunk(seeds, cfg.workers))
    ]
    trained = _run_chunked(_train_chunk, payloads, cfg.workers)
    if log.isEnabledFor(logging.INFO):
        log.info(
            "candidate loss histogram (%d trained):\n%s",
            len(trained),
            loss_histogram([s.loss for s in trained]),
        )
    return _top_k(trained, cfg.num_shapelets)


def extract_static_shapelets(dataset, cfg: TrainConfig) -> list[Shapelet]:
    """Extraction variant with both timing factors frozen at all-ones."""
    segments, labels = _segment_tensor(dataset)
    pool = segments.reshape(-1, segments.shape[2])
    candidates = generate_candidates(pool, cfg.pool_size)
    losses = _static_scores(candidates, segments, labels, cfg)
    if log.isEnabledFor(logging.INFO):
        log.info(
            "candidate loss histogram (%d static):\n%s", len(losses), loss_histogram(losses)
        )
    m = segments.shape[1]
    shapelets = [
        Shapelet(c, np.ones(len(c)), np.ones(m), loss=float(loss))
        for c, loss in zip(candidates, losses)
    ]
    return _top_k(shapelets, cfg.num_shapelets)


def _static_scores(candidates, segments, labels, cfg) -> np.ndarray:
    payloads = [(chunk, segments, labels, cfg) for chunk in _chunk(candidates, cfg.workers)]
    return np.array(_run_chunked(_static_chunk, payloads, cfg.workers))


def _top_k(shapelets: list[Shapelet], k: int) -> list[Shapelet]:
    if k > len(shapelets):
        raise ValueError(f"requested {k} shapelets from {len(shapelets)} candidates")
    order = np.argsort([s.loss for s in shapelets], kind="stable")[:k]
    out = []
    for rank, idx in enumerate(order, start=1):
        out.append(replace_rank(shapelets[idx], rank))
    return out


def replace_rank(s: Shapelet, rank: int) -> Shapelet:
    return Shapelet(s.values, s.local_weights, s.segment_weights, loss=s.loss, rank=rank)


def loss_histogram(losses, bins: int = 10) -> str:
    """Terse ASCII histogram of candidate losses for run logs."""
    losses = np.asarray(losses, dtype=np.float64)
    counts, edges = np.histogram(losses, bins=bins)
    peak = max(1, counts.max())
    lines = [
        f"  [{edges[i]:+10.4f}, {edges[i+1]:+10.4f}) {'#' * int(40 * counts[i] / peak):<40} {counts[i]}"
        for i in range(bins)
    ]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Serialization. The JSON layout is the shared model artifact consumed by
# the graph and embedding stages.
# ---------------------------------------------------------------------------


def shapelets_to_dict(shapelets: list[Shapelet], l: int, m: int) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "l": l,
        "m": m,
        "K": len(shapelets),
        "shapelets": [
            {
                "rank": s.rank,
                "loss": float(s.loss),
                "values": s.values.tolist(),
                "w": s.local_weights.tolist(),
                "u": s.segment_weights.tolist(),
            }
            for s in shapelets
        ],
    }


def shapelets_from_dict(doc: dict) -> tuple[list[Shapelet], int, int]:
    check_schema_version(doc.get("version"))
    shapelets = [
        Shapelet(
            np.array(rec["values"], dtype=np.float64),
            np.array(rec["w"], dtype=np.float64),
            np.array(rec["u"], dtype=np.float64),
            loss=float(rec["loss"]),
            rank=int(rec["rank"]),
        )
        for rec in doc["shapelets"]
    ]
    return shapelets, int(doc["l"]), int(doc["m"])


def save_shapelets(path, shapelets: list[Shapelet], l: int, m: int):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(shapelets_to_dict(shapelets, l, m), fh)
        fh.write("\n")


def load_shapelets(path) -> tuple[list[Shapelet], int, int]:
    with open(path, "r", encoding="utf-8") as fh:
        return shapelets_from_dict(json.load(fh))


def check_schema_version(version):
    if not isinstance(version, str) or "/" not in version:
        raise ValueError(f"artifact missing schema version (got {version!r})")
    name, major = version.split("/", 1)
    expected_name, expected_major = SCHEMA_VERSION.split("/", 1)
    if name != expected_name or major.split(".")[0] != expected_major:
        raise ValueError(
            f"artifact schema {version!r} incompatible with {SCHEMA_VERSION!r}"
        )
