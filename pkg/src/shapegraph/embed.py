"""Shapelet embeddings by weighted random walks plus skip-gram.

Walks follow the evolution graph's transition probabilities and halt at
vertices without outgoing edges. The walk corpus trains skip-gram with
negative sampling (negatives from the unigram^(3/4) distribution, SGD
with a linearly decaying rate); the resulting vertex vectors are L2
normalized, so they are never zero. A series is represented by the
concatenation of its m segment blocks, each the probability-weighted sum
of its assigned shapelet vectors (a zero block when nothing qualifies),
followed by per-segment mean/std features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import EvolutionGraph, assignment_probabilities, scaled_distances
from .shapelet import Shapelet
from .warp import WarpConfig


@dataclass(frozen=True)
class WalkConfig:
    walks_per_vertex: int = 10
    walk_length: int = 40
    window_size: int = 5
    embedding_dim: int = 32
    negative_samples: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    seed: int = 0

    def __post_init__(self):
        counts = (
            self.walks_per_vertex,
            self.walk_length,
            self.window_size,
            self.embedding_dim,
            self.negative_samples,
            self.epochs,
        )
        if any(c < 1 for c in counts):
            raise ValueError("walk configuration counts must all be >= 1")


@dataclass
class EmbeddingModel:
    vectors: np.ndarray  # (K, B), rows unit length
    objective_history: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class SeriesRepresentation:
    phi: np.ndarray  # m * B concatenated segment blocks
    handcrafted: np.ndarray  # (mean, std) per segment, length 2 * m

    @property
    def features(self) -> np.ndarray:
        return np.concatenate([self.phi, self.handcrafted])


def random_walks(g: EvolutionGraph, cfg: WalkConfig, rng: np.random.Generator | None = None) -> list[np.ndarray]:
    """Truncated weighted random walks, one batch per vertex per pass.

    The next vertex is drawn proportionally to outgoing edge weight; a
    walk stops early at a sink. Vertex start order is shuffled per pass.
    Reproducible for a fixed seed.
    """
    rng = rng or np.random.default_rng(cfg.seed)
    transitions = g.transitions()
    walks = []
    for _ in range(cfg.walks_per_vertex):
        for start in rng.permutation(g.vertex_count):
            walk = [int(start)]
            while len(walk) < cfg.walk_length:
                ids, cum = transitions[walk[-1]]
                if ids.size == 0:
                    break
                r = rng.random() * cum[-1]
                walk.append(int(ids[np.searchsorted(cum, r, side="right").clip(max=ids.size - 1)]))
            walks.append(np.array(walk, dtype=np.int64))
    return walks


def _noise_distribution(corpus: list[np.ndarray], num_vertices: int) -> np.ndarray:
    counts = np.zeros(num_vertices)
    for walk in corpus:
        np.add.at(counts, walk, 1.0)
    weights = counts**0.75
    total = weights.sum()
    if total <= 0:
        raise ValueError("empty corpus: no vertices to train on")
    return weights / total


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -30.0, 30.0)))


def train_skipgram(corpus: list[np.ndarray], num_vertices: int, cfg: WalkConfig) -> EmbeddingModel:
    """Skip-gram with negative sampling over the walk corpus.

    Trains input and output vector tables; returns the input table with
    rows L2 normalized. ``objective_history`` holds the mean sampled
    log-likelihood per epoch, measured before each update.
    """
    if not corpus or all(len(w) == 0 for w in corpus):
        raise ValueError("empty corpus: no vertices to train on")
    rng = np.random.default_rng(cfg.seed + 1)
    noise = _noise_distribution(corpus, num_vertices)
    b = cfg.embedding_dim
    w_in = rng.uniform(-0.5 / b, 0.5 / b, size=(num_vertices, b))
    w_out = np.zeros((num_vertices, b))

    centers_per_epoch = sum(len(w) for w in corpus)
    total = cfg.epochs * centers_per_epoch
    step = 0
    history = []
    for _ in range(cfg.epochs):
        ll_sum, ll_terms = 0.0, 0
        for wi in rng.permutation(len(corpus)):
            walk = corpus[wi]
            for pos, center in enumerate(walk):
                lr = cfg.learning_rate * max(1.0 - step / total, 1e-4)
                step += 1
                lo = max(0, pos - cfg.window_size)
                contexts = np.concatenate([walk[lo:pos], walk[pos + 1 : pos + 1 + cfg.window_size]])
                if contexts.size == 0:
                    continue
                negatives = rng.choice(num_vertices, size=(contexts.size, cfg.negative_samples), p=noise)
                live = negatives != contexts[:, None]

                v_c = w_in[center]
                pos_scores = _sigmoid(w_out[contexts] @ v_c)
                neg_scores = _sigmoid(w_out[negatives] @ v_c)
                ll_sum += float(np.sum(np.log(np.maximum(pos_scores, 1e-12))))
                ll_sum += float(np.sum(np.log(np.maximum(1.0 - neg_scores, 1e-12)) * live))
                ll_terms += contexts.size + int(live.sum())

                g_pos = pos_scores - 1.0  # d(-loglik)/dscore
                g_neg = neg_scores * live
                grad_c = g_pos @ w_out[contexts] + np.einsum("cn,cnb->b", g_neg, w_out[negatives])
                np.add.at(w_out, contexts, -lr * g_pos[:, None] * v_c[None, :])
                np.add.at(
                    w_out,
                    negatives.ravel(),
                    (-lr * g_neg[:, :, None] * v_c[None, None, :]).reshape(-1, b),
                )
                w_in[center] = v_c - lr * grad_c
        history.append(ll_sum / max(1, ll_terms))

    norms = np.linalg.norm(w_in, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("skip-gram produced a zero embedding row")
    return EmbeddingModel(vectors=w_in / norms[:, None], objective_history=history)


def train_embeddings(g: EvolutionGraph, cfg: WalkConfig) -> EmbeddingModel:
    walks = random_walks(g, cfg)
    return train_skipgram(walks, g.vertex_count, cfg)


def weighted_block(model: EmbeddingModel, ids: np.ndarray, probabilities: np.ndarray) -> np.ndarray:
    """Probability-weighted sum of the given shapelet vectors (linear in p)."""
    return probabilities @ model.vectors[ids]


def segment_blocks(distances: np.ndarray, delta: float, model: EmbeddingModel) -> np.ndarray:
    """Per-segment embedding blocks from an (m, K) scaled distance matrix."""
    m, k = distances.shape
    if k != model.vectors.shape[0]:
        raise ValueError(
            f"distance matrix has {k} shapelets but the model has {model.vectors.shape[0]}"
        )
    blocks = np.zeros((m, model.dim))
    for i in range(m):
        ids, probs = assignment_probabilities(distances[i], delta)
        if ids.size:
            blocks[i] = weighted_block(model, ids, probs)
    return blocks


def embed_series(
    segments: np.ndarray,
    shapelets: list[Shapelet],
    delta: float,
    model: EmbeddingModel,
    cfg: WarpConfig | None = None,
) -> SeriesRepresentation:
    """Representation of one segmented series: phi blocks plus mean/std."""
    segments = np.asarray(segments, dtype=np.float64)
    d = scaled_distances(segments[None, :, :], shapelets, cfg)[0]
    blocks = segment_blocks(d, delta, model)
    stats = np.stack([segments.mean(axis=1), segments.std(axis=1)], axis=1)
    return SeriesRepresentation(phi=blocks.ravel(), handcrafted=stats.ravel())


def embed_dataset(
    segments: np.ndarray,
    shapelets: list[Shapelet],
    delta: float,
    model: EmbeddingModel,
    cfg: WarpConfig | None = None,
    distances: np.ndarray | None = None,
) -> np.ndarray:
    """Feature matrix for a (series, m, l) tensor: rows are phi | stats."""
    segments = np.asarray(segments, dtype=np.float64)
    if distances is None:
        distances = scaled_distances(segments, shapelets, cfg)
    rows = []
    for s in range(segments.shape[0]):
        blocks = segment_blocks(distances[s], delta, model)
        stats = np.stack([segments[s].mean(axis=1), segments[s].std(axis=1)], axis=1)
        rows.append(np.concatenate([blocks.ravel(), stats.ravel()]))
    return np.stack(rows)


def save_embeddings(path, vectors: np.ndarray):
    """Plain text matrix: 'K B' header then one row of floats per vertex."""
    k, b = vectors.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{k} {b}\n")
        for row in vectors:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def load_embeddings(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        k, b = int(header[0]), int(header[1])
        rows = [np.array([float(x) for x in fh.readline().split()]) for _ in range(k)]
    vectors = np.stack(rows)
    if vectors.shape != (k, b):
        raise ValueError("embedding file shape does not match its header")
    return vectors


def representations_to_csv(path, labels, representations: list[SeriesRepresentation]):
    """CSV export: label first, then the m*B phi and 2*m stat columns."""
    with open(path, "w", encoding="utf-8") as fh:
        for label, rep in zip(labels, representations):
            cells = [str(int(label))] + [repr(float(x)) for x in rep.features]
            fh.write(",".join(cells) + "\n")
