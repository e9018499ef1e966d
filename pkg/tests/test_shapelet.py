import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_labeled_segments
from shapegraph import shapelet as sh
from shapegraph import warp
from shapegraph.data import Dataset, TimeSeries

# Frozen outputs of the straight-line loss oracle below on the golden
# fixture (candidate = segments[0, 2], all-ones factors, penalties
# 0.5 / 0.1, softmin temperature 1.0).
GOLDEN_LOSS = {"greedy": -209.55679886684774, "exact": -270.1958309768029}


def oracle_loss(values, segments, labels, lam, eps, temp, cfg, w=None, u=None):
    """Independent re-implementation: explicit loops over the scalar warp path."""
    num_series, m, _ = segments.shape
    w = np.ones(len(values)) if w is None else w
    u = np.ones(m) if u is None else u
    dists = []
    for s in range(num_series):
        per_seg = []
        for i in range(m):
            if cfg.mode == "exact":
                _, a = warp.dtw_exact(values, segments[s, i])
            else:
                _, a = warp.dtw_greedy(values, segments[s, i], cfg)
            total = 0.0
            for k in range(len(a)):
                total += w[a.idx1[k]] * (values[a.idx1[k]] - segments[s, i][a.idx2[k]]) ** 2
            per_seg.append(u[i] * math.sqrt(total))
        num = sum(d * math.exp(-d / temp) for d in per_seg)
        den = sum(math.exp(-d / temp) for d in per_seg)
        dists.append(num / den)
    dists = np.array(dists)
    pos, neg = dists[labels == 1], dists[labels == 0]
    mu_p, s2_p = pos.mean(), max(pos.var(), 1e-4)
    mu_n, s2_n = neg.mean(), max(neg.var(), 1e-4)
    kl = 0.5 * math.log(s2_n / s2_p) + (s2_p + (mu_p - mu_n) ** 2) / (2 * s2_n) - 0.5
    return -kl + lam * math.sqrt(np.sum(w**2)) + eps * math.sqrt(np.sum(u**2))


def config(l, m=None, **kw):
    kw.setdefault("num_shapelets", 1)
    return sh.TrainConfig(segment_length=l, **kw)


class TestGenerateCandidates:
    def test_hand_trace(self):
        pool = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
        out = sh.generate_candidates(pool, 2)
        assert np.array_equal(out[0], [1.0, 1.0])  # closest to the centroid
        assert np.array_equal(out[1], [0.0, 0.0])  # accumulated-distance tie, lowest index

    def test_exhaustion_returns_everything(self):
        pool = np.array([[0.0, 1.0], [3.0, 1.0], [1.0, 2.0], [9.0, 9.0]])
        out = sh.generate_candidates(pool, 4)
        assert {tuple(r) for r in out} == {tuple(r) for r in pool}

    def test_deterministic(self, golden_fixture):
        segments, _ = golden_fixture
        pool = segments.reshape(-1, segments.shape[2])
        a = sh.generate_candidates(pool, 12)
        b = sh.generate_candidates(pool, 12)
        assert np.array_equal(a, b)

    def test_oversized_request_rejected(self):
        with pytest.raises(ValueError):
            sh.generate_candidates(np.zeros((3, 2)), 4)


class TestGaussianKl:
    def test_identical_is_zero(self):
        p = sh.GaussianFit(0.3, 1.7)
        assert sh.gaussian_kl(p, p) == 0.0

    def test_unit_shift_spot_value(self):
        assert sh.gaussian_kl(sh.GaussianFit(0, 1), sh.GaussianFit(1, 1)) == pytest.approx(
            0.5, abs=1e-12
        )

    @given(
        st.floats(-10, 10),
        st.floats(1e-4, 20),
        st.floats(-10, 10),
        st.floats(1e-4, 20),
    )
    @settings(max_examples=100, deadline=None)
    def test_non_negative(self, mu1, s1, mu2, s2):
        assert sh.gaussian_kl(sh.GaussianFit(mu1, s1), sh.GaussianFit(mu2, s2)) >= -1e-12

    def test_variance_floor_applied(self):
        fit = sh.fit_gaussian(np.array([1.0, 1.0, 1.0]))
        assert fit.sigma2 == sh.VARIANCE_FLOOR

    def test_single_sample_rejected(self):
        with pytest.raises(sh.TrainingDataError):
            sh.fit_gaussian(np.array([1.0]))


class TestCandidateLoss:
    def test_symmetric_classes_leave_only_penalties(self):
        rng = np.random.default_rng(5)
        base = rng.normal(size=(3, 4, 5))
        segments = np.concatenate([base, base])  # positives mirror negatives
        labels = np.array([1, 1, 1, 0, 0, 0])
        cfg = config(5, local_penalty=0.5, global_penalty=0.1)
        loss = sh.candidate_loss(base[0, 0], segments, labels, cfg)
        assert loss == pytest.approx(0.5 * math.sqrt(5) + 0.1 * math.sqrt(4), abs=1e-12)

    def test_separated_classes_give_negative_loss(self, gradient_fixture):
        segments, labels = gradient_fixture
        cfg = config(6, local_penalty=0.0, global_penalty=0.0)
        assert sh.candidate_loss(segments[0, 2], segments, labels, cfg) < 0.0

    @pytest.mark.parametrize("mode", ["greedy", "exact"])
    def test_golden_value_against_oracle(self, golden_fixture, mode):
        segments, labels = golden_fixture
        wcfg = warp.WarpConfig(mode=mode)
        candidate = segments[0, 2]
        expected = oracle_loss(candidate, segments, labels, 0.5, 0.1, 1.0, wcfg)
        cfg = config(5, local_penalty=0.5, global_penalty=0.1, warp=wcfg)
        got = sh.candidate_loss(candidate, segments, labels, cfg)
        assert got == pytest.approx(expected, abs=1e-9)
        assert got == pytest.approx(GOLDEN_LOSS[mode], abs=1e-9)

    def test_small_class_rejected(self):
        segments = np.random.default_rng(0).normal(size=(3, 2, 4))
        with pytest.raises(sh.TrainingDataError):
            sh.candidate_loss(segments[0, 0], segments, np.array([1, 0, 0]), config(4))

    def test_soft_loss_converges_to_hard_min_loss(self, golden_fixture):
        # unpenalized soft loss sweeps down to the hard-min objective
        segments, labels = golden_fixture
        candidate = segments[1, 1]
        obj = sh.CandidateObjective(candidate, segments, labels, config(5))
        hard = obj.static_loss()
        losses = []
        for temp in (1.0, 0.3, 0.1, 0.03, 0.01, 0.003):
            cfg = config(5, local_penalty=0.0, global_penalty=0.0, softmin_temperature=temp)
            losses.append(sh.candidate_loss(candidate, segments, labels, cfg))
        gaps = [abs(l - hard) for l in losses]
        assert gaps[-1] < 1e-3 * max(1.0, abs(hard))
        assert gaps[-1] <= gaps[0]


class TestGradients:
    def test_analytic_matches_finite_differences(self, gradient_fixture):
        segments, labels = gradient_fixture
        cfg = config(6, local_penalty=0.5, global_penalty=0.1)
        rng = np.random.default_rng(0)
        pool = segments.reshape(-1, 6)
        h = 1e-5
        for _ in range(5):
            candidate = pool[rng.integers(len(pool))]
            obj = sh.CandidateObjective(candidate, segments, labels, cfg)
            w = np.ones(6) + rng.uniform(-0.3, 0.4, 6)
            u = np.ones(4) + rng.uniform(-0.3, 0.4, 4)
            _, gw, gu = obj.loss_grad(w, u)
            for idx in range(6):
                wp, wm = w.copy(), w.copy()
                wp[idx] += h
                wm[idx] -= h
                fd = (obj.loss(wp, u) - obj.loss(wm, u)) / (2 * h)
                assert abs(gw[idx] - fd) / max(1.0, abs(fd)) < 1e-3
            for idx in range(4):
                up, um = u.copy(), u.copy()
                up[idx] += h
                um[idx] -= h
                fd = (obj.loss(w, up) - obj.loss(w, um)) / (2 * h)
                assert abs(gu[idx] - fd) / max(1.0, abs(fd)) < 1e-3


class TestTraining:
    def test_loss_improves_and_factors_stay_non_negative(self, gradient_fixture):
        segments, labels = gradient_fixture
        cfg = config(
            6, epochs=40, learning_rate=0.01, local_penalty=0.01, global_penalty=0.01, seed=3
        )
        candidate = segments[0, 2]
        obj = sh.CandidateObjective(candidate, segments, labels, cfg)
        initial = obj.loss(np.ones(6), np.ones(4))
        trained = sh.train_timing_factors(candidate, segments, labels, cfg)
        assert trained.loss < initial
        assert np.all(trained.local_weights >= 0)
        assert np.all(trained.segment_weights >= 0)

    def test_huge_penalties_drive_factors_to_zero(self, gradient_fixture):
        segments, labels = gradient_fixture
        cfg = config(
            6, epochs=60, learning_rate=0.05, local_penalty=1e6, global_penalty=1e6, seed=3
        )
        trained = sh.train_timing_factors(segments[1, 1], segments, labels, cfg)
        assert np.linalg.norm(trained.local_weights) < 0.05
        assert np.linalg.norm(trained.segment_weights) < 0.05

    def test_training_deterministic_for_seed(self, gradient_fixture):
        segments, labels = gradient_fixture
        cfg = config(6, epochs=10, seed=9)
        a = sh.train_timing_factors(segments[2, 0], segments, labels, cfg)
        b = sh.train_timing_factors(segments[2, 0], segments, labels, cfg)
        assert a.loss == b.loss
        assert np.array_equal(a.local_weights, b.local_weights)
        assert np.array_equal(a.segment_weights, b.segment_weights)


def tiny_dataset(segments, labels):
    series = [
        TimeSeries(segments[i].ravel(), int(labels[i])) for i in range(segments.shape[0])
    ]
    return Dataset(series, segment_length=segments.shape[2])


class TestExtraction:
    def test_top_k_sorted_with_ranks(self, gradient_fixture):
        segments, labels = gradient_fixture
        ds = tiny_dataset(segments, labels)
        cfg = config(6, num_shapelets=4, candidate_size=10, epochs=5, seed=1)
        out = sh.extract_shapelets(ds, cfg)
        assert len(out) == 4
        assert [s.rank for s in out] == [1, 2, 3, 4]
        losses = [s.loss for s in out]
        assert losses == sorted(losses)

    def test_pool_equals_candidates_when_k_is_pool_size(self, gradient_fixture):
        segments, labels = gradient_fixture
        ds = tiny_dataset(segments, labels)
        cfg = config(6, num_shapelets=6, candidate_size=6, epochs=3, seed=1)
        out = sh.extract_shapelets(ds, cfg)
        assert len(out) == 6

    def test_extraction_deterministic(self, gradient_fixture):
        segments, labels = gradient_fixture
        ds = tiny_dataset(segments, labels)
        cfg = config(6, num_shapelets=3, candidate_size=8, epochs=4, seed=5)
        a = sh.extract_shapelets(ds, cfg)
        b = sh.extract_shapelets(ds, cfg)
        for x, y in zip(a, b):
            assert x.loss == y.loss and x.rank == y.rank
            assert np.array_equal(x.values, y.values)

    def test_prefilter_matches_contract(self, gradient_fixture):
        segments, labels = gradient_fixture
        ds = tiny_dataset(segments, labels)
        cfg = config(
            6, num_shapelets=2, candidate_size=12, epochs=3, seed=5,
            prefilter=True, prefilter_multiple=3,
        )
        out = sh.extract_shapelets(ds, cfg)
        assert len(out) == 2 and [s.rank for s in out] == [1, 2]

    def test_parallel_workers_match_serial(self, gradient_fixture):
        segments, labels = gradient_fixture
        ds = tiny_dataset(segments, labels)
        serial = sh.extract_shapelets(ds, config(6, num_shapelets=3, candidate_size=8, epochs=3, seed=2, workers=1))
        parallel = sh.extract_shapelets(ds, config(6, num_shapelets=3, candidate_size=8, epochs=3, seed=2, workers=2))
        for x, y in zip(serial, parallel):
            assert x.loss == y.loss
            assert np.array_equal(x.values, y.values)


class TestStaticExtraction:
    def test_factors_frozen_at_ones(self, gradient_fixture):
        segments, labels = gradient_fixture
        ds = tiny_dataset(segments, labels)
        cfg = config(6, num_shapelets=3, candidate_size=8)
        out = sh.extract_static_shapelets(ds, cfg)
        for s in out:
            assert np.array_equal(s.local_weights, np.ones(6))
            assert np.array_equal(s.segment_weights, np.ones(4))

    def test_static_ranking_deterministic(self, gradient_fixture):
        segments, labels = gradient_fixture
        ds = tiny_dataset(segments, labels)
        cfg = config(6, num_shapelets=3, candidate_size=8, seed=4)
        a = sh.extract_static_shapelets(ds, cfg)
        b = sh.extract_static_shapelets(ds, cfg)
        assert [s.loss for s in a] == [s.loss for s in b]

    def test_static_loss_not_below_trained_time_aware(self, gradient_fixture):
        # training the timing factors buys at least as good an objective
        segments, labels = gradient_fixture
        cfg = config(
            6, epochs=40, learning_rate=0.01, local_penalty=0.01, global_penalty=0.01, seed=3
        )
        candidate = segments[0, 2]
        static = sh.CandidateObjective(candidate, segments, labels, cfg).static_loss()
        trained = sh.train_timing_factors(candidate, segments, labels, cfg)
        assert static >= trained.loss


class TestSerialization:
    def test_round_trip(self, tmp_path, gradient_fixture):
        segments, labels = gradient_fixture
        ds = tiny_dataset(segments, labels)
        cfg = config(6, num_shapelets=3, candidate_size=8, epochs=3, seed=5)
        out = sh.extract_shapelets(ds, cfg)
        path = tmp_path / "shapelets.json"
        sh.save_shapelets(path, out, 6, 4)
        loaded, l, m = sh.load_shapelets(path)
        assert (l, m) == (6, 4)
        for a, b in zip(out, loaded):
            assert a.rank == b.rank and a.loss == b.loss
            assert np.array_equal(a.values, b.values)
            assert np.array_equal(a.local_weights, b.local_weights)
            assert np.array_equal(a.segment_weights, b.segment_weights)

    def test_schema_keys(self, gradient_fixture, tmp_path):
        segments, labels = gradient_fixture
        shp = sh.Shapelet(segments[0, 0], np.ones(6), np.ones(4), loss=-1.0, rank=1)
        doc = sh.shapelets_to_dict([shp], 6, 4)
        assert set(doc) == {"version", "l", "m", "K", "shapelets"}
        assert set(doc["shapelets"][0]) == {"rank", "loss", "values", "w", "u"}
        json.dumps(doc)  # serializable without numpy leftovers

    def test_unknown_version_rejected(self):
        with pytest.raises(ValueError, match="schema"):
            sh.shapelets_from_dict({"version": "shapegraph/9", "shapelets": []})
        with pytest.raises(ValueError, match="schema"):
            sh.check_schema_version(None)
