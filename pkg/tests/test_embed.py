import numpy as np
import pytest

from shapegraph import embed as em
from shapegraph import graph as gr
from shapegraph.shapelet import Shapelet


def chain_graph():
    return gr.EvolutionGraph(3, {(0, 1): 1.0, (1, 2): 1.0})


def three_vertex_graph():
    return gr.EvolutionGraph(
        3,
        {(0, 0): 0.2, (0, 1): 0.3, (0, 2): 0.5, (1, 0): 0.6, (1, 2): 0.4, (2, 1): 1.0},
    )


def barbell_graph():
    edges = {}
    for group in ([0, 1, 2, 3], [4, 5, 6, 7]):
        for a in group:
            for b in group:
                if a != b:
                    edges[(a, b)] = 1.0
    edges[(3, 4)] = 0.08
    edges[(4, 3)] = 0.08
    totals = {}
    for (s, _), w in edges.items():
        totals[s] = totals.get(s, 0.0) + w
    return gr.EvolutionGraph(8, {k: w / totals[k[0]] for k, w in edges.items()})


class TestRandomWalks:
    def test_deterministic_chain(self):
        cfg = em.WalkConfig(walks_per_vertex=3, walk_length=5, embedding_dim=4, seed=0)
        for walk in em.random_walks(chain_graph(), cfg):
            expected = {0: [0, 1, 2], 1: [1, 2], 2: [2]}[int(walk[0])]
            assert walk.tolist() == expected

    def test_sink_halts_walk(self):
        g = gr.EvolutionGraph(2, {(0, 1): 1.0})
        cfg = em.WalkConfig(walks_per_vertex=2, walk_length=10, embedding_dim=4, seed=1)
        for walk in em.random_walks(g, cfg):
            if walk[0] == 1:
                assert walk.tolist() == [1]

    def test_walk_counts_and_length_bound(self):
        cfg = em.WalkConfig(walks_per_vertex=4, walk_length=7, embedding_dim=4, seed=2)
        walks = em.random_walks(three_vertex_graph(), cfg)
        assert len(walks) == 3 * 4
        assert all(1 <= len(w) <= 7 for w in walks)

    def test_reproducible_under_seed(self):
        cfg = em.WalkConfig(walks_per_vertex=5, walk_length=9, embedding_dim=4, seed=13)
        a = em.random_walks(three_vertex_graph(), cfg)
        b = em.random_walks(three_vertex_graph(), cfg)
        assert len(a) == len(b)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_transition_frequencies_match_weights(self):
        g = three_vertex_graph()
        cfg = em.WalkConfig(walks_per_vertex=900, walk_length=40, embedding_dim=4, seed=5)
        counts = np.zeros((3, 3))
        for walk in em.random_walks(g, cfg):
            for a, b in zip(walk[:-1], walk[1:]):
                counts[a, b] += 1
        assert counts.sum() >= 1e5
        freq = counts / counts.sum(axis=1, keepdims=True)
        expected = np.zeros((3, 3))
        for (s, t), w in g.edges.items():
            expected[s, t] = w
        assert np.abs(freq - expected).max() < 1e-2


class TestSkipgram:
    def test_rows_unit_norm_and_nonzero(self):
        cfg = em.WalkConfig(walks_per_vertex=5, walk_length=10, embedding_dim=8, seed=3)
        model = em.train_embeddings(three_vertex_graph(), cfg)
        norms = np.linalg.norm(model.vectors, axis=1)
        assert np.allclose(norms, 1.0, atol=1e-6)

    def test_barbell_clusters_in_cosine_space(self):
        cfg = em.WalkConfig(
            walks_per_vertex=12, walk_length=30, window_size=4, embedding_dim=16, epochs=6, seed=3
        )
        model = em.train_embeddings(barbell_graph(), cfg)
        v = model.vectors
        intra, inter = [], []
        for a in range(8):
            for b in range(a + 1, 8):
                (intra if (a < 4) == (b < 4) else inter).append(float(v[a] @ v[b]))
        assert np.mean(intra) > np.mean(inter)

    def test_objective_improves(self):
        cfg = em.WalkConfig(
            walks_per_vertex=12, walk_length=30, window_size=4, embedding_dim=16, epochs=6, seed=3
        )
        model = em.train_embeddings(barbell_graph(), cfg)
        assert model.objective_history[-1] > model.objective_history[0]

    def test_training_deterministic(self):
        cfg = em.WalkConfig(walks_per_vertex=6, walk_length=12, embedding_dim=8, seed=11)
        a = em.train_embeddings(three_vertex_graph(), cfg)
        b = em.train_embeddings(three_vertex_graph(), cfg)
        assert np.array_equal(a.vectors, b.vectors)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            em.train_skipgram([], 3, em.WalkConfig(embedding_dim=4))


class TestSeriesRepresentation:
    def unit_model(self, k, b, seed=0):
        rng = np.random.default_rng(seed)
        v = rng.normal(size=(k, b))
        return em.EmbeddingModel(v / np.linalg.norm(v, axis=1, keepdims=True))

    def test_single_assignment_copies_vector(self):
        model = self.unit_model(2, 4)
        # segment 0 near shapelet 0 only; segment 1 matches nothing
        distances = np.array([[0.1, 9.0], [9.0, 9.0]])
        blocks = em.segment_blocks(distances, delta=1.0, model=model)
        assert np.array_equal(blocks[0], model.vectors[0])
        assert np.array_equal(blocks[1], np.zeros(4))

    def test_zero_probability_contributes_nothing(self):
        model = self.unit_model(2, 4)
        distances = np.array([[0.1, 0.9]])  # both qualify: p = (1, 0)
        blocks = em.segment_blocks(distances, delta=1.0, model=model)
        assert np.array_equal(blocks[0], model.vectors[0])

    def test_zero_block_iff_empty_assignment(self):
        model = self.unit_model(3, 5, seed=4)
        distances = np.array([[0.2, 0.3, 0.4], [5.0, 5.0, 5.0]])
        blocks = em.segment_blocks(distances, delta=1.0, model=model)
        assert np.linalg.norm(blocks[0]) > 0
        assert np.array_equal(blocks[1], np.zeros(5))

    def test_block_linear_in_probabilities(self):
        model = self.unit_model(3, 6, seed=5)
        ids = np.array([0, 2])
        probs = np.array([1.0, 0.4])
        base = em.weighted_block(model, ids, probs)
        scaled = em.weighted_block(model, ids, 0.3 * probs)
        assert np.allclose(scaled, 0.3 * base, atol=1e-15)

    def test_embed_series_layout(self):
        model = self.unit_model(2, 3)
        shapelets = [
            Shapelet(np.zeros(4), np.ones(4), np.ones(2)),
            Shapelet(np.ones(4), np.ones(4), np.ones(2)),
        ]
        segments = np.array([[0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0]])
        rep = em.embed_series(segments, shapelets, delta=0.5, model=model)
        assert rep.phi.shape == (2 * 3,)
        assert rep.handcrafted.shape == (2 * 2,)
        assert np.array_equal(rep.phi[:3], model.vectors[0])
        assert np.array_equal(rep.phi[3:], model.vectors[1])
        assert np.allclose(rep.handcrafted, [0.0, 0.0, 1.0, 0.0])  # per-segment mean, std
        assert rep.features.shape == (10,)

    def test_model_size_mismatch_rejected(self):
        model = self.unit_model(3, 4)
        with pytest.raises(ValueError, match="shapelets"):
            em.segment_blocks(np.zeros((2, 2)), 1.0, model)

    def test_embed_dataset_rows(self, gradient_fixture):
        segments, labels = gradient_fixture
        shapelets = [
            Shapelet(segments[0, 0], np.ones(6), np.ones(4)),
            Shapelet(segments[3, 3], np.ones(6), np.ones(4)),
        ]
        model = self.unit_model(2, 5)
        feats = em.embed_dataset(segments, shapelets, 0.5, model)
        assert feats.shape == (6, 4 * 5 + 2 * 4)


class TestEmbeddingIo:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        v = rng.normal(size=(5, 7))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        path = tmp_path / "emb.txt"
        em.save_embeddings(path, v)
        header = path.read_text().splitlines()[0]
        assert header == "5 7"
        assert np.array_equal(em.load_embeddings(path), v)

    def test_header_mismatch_rejected(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("2 3\n0.1 0.2 0.3\n")
        with pytest.raises((ValueError, IndexError)):
            em.load_embeddings(path)

    def test_representation_csv(self, tmp_path):
        reps = [
            em.SeriesRepresentation(np.array([0.5, 0.25]), np.array([0.1, 0.2])),
            em.SeriesRepresentation(np.array([1.0, 2.0]), np.array([0.3, 0.4])),
        ]
        path = tmp_path / "reps.csv"
        em.representations_to_csv(path, [1, 0], reps)
        lines = path.read_text().splitlines()
        assert lines[0].split(",")[0] == "1"
        assert [float(x) for x in lines[0].split(",")[1:]] == [0.5, 0.25, 0.1, 0.2]
        assert len(lines) == 2
