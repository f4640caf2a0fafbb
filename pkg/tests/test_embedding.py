import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyclenet.embedding import (
    DesignCostEmbedding,
    FollowerFeatures,
    WalkConfig,
    cost_matrix,
    embeddable_mask,
    pair_similarity,
    random_walks,
    sample_designs,
    similarity_row,
    skipgram_embed,
    train_skipgram,
)
from cyclenet.routing import TravelTimeEvaluator, full_design


class TestDesignSampling:
    def test_degenerate_bounds_give_singletons(self, small_grid):
        designs = sample_designs(small_grid, 30, max_projects=1, max_nodes=1, seed=4)
        assert all(len(d.projects) == 1 and len(d.nodes) == 1 for d in designs)

    def test_counts_within_bounds(self, small_grid):
        designs = sample_designs(small_grid, 200, max_projects=7, max_nodes=5, seed=1)
        for d in designs:
            assert 1 <= len(d.projects) <= 7
            assert 1 <= len(d.nodes) <= 5
            assert all(0 <= p < small_grid.n_projects for p in d.projects)
            assert all(v in small_grid.node_costs for v in d.nodes)

    def test_same_seed_identical(self, small_grid):
        a = sample_designs(small_grid, 25, seed=9, max_projects=6, max_nodes=3)
        b = sample_designs(small_grid, 25, seed=9, max_projects=6, max_nodes=3)
        assert a == b

    def test_infeasible_bounds_rejected(self, small_grid):
        with pytest.raises(ValueError):
            sample_designs(small_grid, 5, max_projects=small_grid.n_projects + 1)
        with pytest.raises(ValueError):
            sample_designs(small_grid, 5, max_nodes=10**6)


class TestCostMatrix:
    def test_full_build_column_matches_full_network(self, small_grid):
        built = full_design(small_grid)
        costs = cost_matrix(small_grid, [built], "exp")
        expected = TravelTimeEvaluator(small_grid, "exp").od_accessibility(built)
        assert np.allclose(costs[:, 0], expected, atol=1e-12)

    def test_entries_in_unit_interval(self, small_grid):
        designs = sample_designs(small_grid, 10, max_projects=4, max_nodes=2, seed=0)
        costs = cost_matrix(small_grid, designs, "exp")
        assert costs.shape == (small_grid.n_od_pairs, 10)
        assert (costs >= 0).all() and (costs <= 1).all()

    def test_permuted_designs_permute_columns(self, small_grid):
        designs = sample_designs(small_grid, 6, max_projects=4, max_nodes=2, seed=2)
        costs = cost_matrix(small_grid, designs, "exp")
        perm = [3, 0, 5, 1, 4, 2]
        permuted = cost_matrix(small_grid, [designs[j] for j in perm], "exp")
        assert np.array_equal(permuted, costs[:, perm])


class TestSimilarity:
    def test_identical_positive_rows_give_one(self):
        row = np.array([0.5, 0.7, 0.9])
        assert pair_similarity(row, row, epsilon=1e-9) == pytest.approx(1.0, abs=1e-6)

    def test_disjoint_support_gives_zero(self):
        a = np.zeros(4)
        b = np.full(4, 0.5)
        assert pair_similarity(a, b) == pytest.approx(0.0, abs=1e-5)

    def test_hand_value(self):
        # min(0.2/0.4, 0.4/0.2) = 0.5 and min(0.3/0.3, ...) = 1 (eps -> 0)
        a, b = np.array([0.2, 0.3]), np.array([0.4, 0.3])
        assert pair_similarity(a, b, epsilon=1e-12) == pytest.approx(0.75, abs=1e-6)

    @given(st.integers(0, 10**6))
    @settings(max_examples=40, deadline=None)
    def test_symmetric_and_bounded(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.uniform(0, 1, size=6), rng.uniform(0, 1, size=6)
        pi = pair_similarity(a, b)
        assert pi == pair_similarity(b, a)
        assert 0.0 <= pi <= 1.0

    def test_row_matches_pairwise(self):
        rng = np.random.default_rng(5)
        costs = rng.uniform(0, 1, size=(5, 7))
        row = similarity_row(costs, 2)
        for t in range(5):
            expected = 0.0 if t == 2 else pair_similarity(costs[2], costs[t])
            assert row[t] == pytest.approx(expected, abs=1e-12)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            pair_similarity(np.ones(3), np.ones(4))


class TestRandomWalks:
    def test_two_followers_alternate(self):
        costs = np.array([[0.5, 0.6], [0.4, 0.7]])
        corpus, idx = random_walks(costs, WalkConfig(n_walks=2, walk_length=5), seed=0)
        assert list(idx) == [0, 1]
        for walk in corpus:
            assert all(walk[i] != walk[i + 1] for i in range(len(walk) - 1))

    def test_walk_count_and_length(self):
        rng = np.random.default_rng(0)
        costs = rng.uniform(0.1, 1.0, size=(7, 5))
        cfg = WalkConfig(n_walks=3, walk_length=6)
        corpus, idx = random_walks(costs, cfg, seed=1)
        assert len(corpus) == 3 * 7
        assert all(len(w) == 7 for w in corpus)

    def test_zero_row_followers_excluded(self):
        rng = np.random.default_rng(1)
        costs = rng.uniform(0.1, 1.0, size=(6, 4))
        costs[2] = 0.0
        corpus, idx = random_walks(costs, WalkConfig(n_walks=2, walk_length=4), seed=0)
        assert 2 not in set(idx)
        assert len(corpus) == 2 * 5

    def test_all_zero_graph_rejected(self):
        with pytest.raises(ValueError, match="all-zero"):
            random_walks(np.zeros((4, 3)), WalkConfig(n_walks=1, walk_length=2), seed=0)

    def test_transition_frequencies_match_weights(self):
        # Three followers with known similarities; empirical transitions from
        # follower 0 should match pi_01/(pi_01 + pi_02) within 3 sigma.
        costs = np.array(
            [
                [0.8, 0.8, 0.8, 0.8],
                [0.8, 0.8, 0.8, 0.4],
                [0.1, 0.8, 0.1, 0.1],
            ]
        )
        pi_01 = pair_similarity(costs[0], costs[1])
        pi_02 = pair_similarity(costs[0], costs[2])
        expected = pi_01 / (pi_01 + pi_02)
        corpus, _ = random_walks(costs, WalkConfig(n_walks=320, walk_length=32), seed=3)
        from_zero = []
        for walk in corpus:
            for a, b in zip(walk[:-1], walk[1:]):
                if a == 0:
                    from_zero.append(b)
        from_zero = np.array(from_zero)
        n = from_zero.size
        assert n > 10**4
        freq = float((from_zero == 1).mean())
        sigma = np.sqrt(expected * (1 - expected) / n)
        assert abs(freq - expected) <= 3 * sigma

    def test_embeddable_mask_matches_definition(self):
        rng = np.random.default_rng(2)
        costs = rng.uniform(0, 1, size=(8, 5)) * (rng.random((8, 5)) < 0.5)
        costs[3] = 0.0
        mask = embeddable_mask(costs)
        for s in range(8):
            row = similarity_row(costs, s)
            assert mask[s] == bool((row > 1e-15).any())


class TestSkipgram:
    def _toy_corpus(self, seed=0):
        # Two tight communities: {0,1,2} and {3,4}; walks stay inside.
        rng = np.random.default_rng(seed)
        corpus = []
        for _ in range(60):
            group = [0, 1, 2] if rng.random() < 0.6 else [3, 4]
            corpus.append(rng.choice(group, size=8))
        return corpus

    def test_loss_nonincreasing_after_smoothing(self):
        cfg = WalkConfig(n_walks=1, walk_length=8, window=3, epochs=30, learning_rate=0.05)
        _, losses = train_skipgram(self._toy_corpus(), 5, dim=8, config=cfg, seed=0, batch_size=256)
        assert len(losses) == 30
        smooth = np.convolve(losses, np.ones(10) / 10, mode="valid")
        assert (np.diff(smooth) <= 1e-6).all()

    def test_identical_cost_rows_embed_close(self):
        # Followers with identical cost rows should land nearer each other
        # than a follower with near-orthogonal support, in most seeds.
        wins = 0
        for seed in range(10):
            costs = np.array(
                [
                    [0.9, 0.1, 0.8, 0.2, 0.7, 0.3],
                    [0.9, 0.1, 0.8, 0.2, 0.7, 0.3],
                    [0.0, 0.9, 0.0, 0.9, 0.0, 0.9],
                ]
            )
            cfg = WalkConfig(n_walks=50, walk_length=20, window=3, epochs=30, learning_rate=0.1)
            corpus, idx = random_walks(costs, cfg, seed=seed)
            feats = skipgram_embed(corpus, idx, 3, dim=6, config=cfg, seed=seed, batch_size=128)
            d01 = np.linalg.norm(feats.values[0] - feats.values[1])
            d02 = np.linalg.norm(feats.values[0] - feats.values[2])
            wins += int(d01 < d02)
        assert wins >= 8

    def test_unembedded_followers_get_zero_vector_and_flag(self):
        rng = np.random.default_rng(4)
        costs = rng.uniform(0.2, 1.0, size=(6, 4))
        costs[4] = 0.0
        cfg = WalkConfig(n_walks=3, walk_length=5, epochs=2)
        corpus, idx = random_walks(costs, cfg, seed=0)
        feats = skipgram_embed(corpus, idx, 6, dim=4, config=cfg, seed=0)
        assert feats.unembedded[4]
        assert not feats.unembedded[[0, 1, 2, 3, 5]].any()
        assert np.array_equal(feats.values[4], np.zeros(4))

    def test_normalized_coordinates_in_unit_box(self, small_features):
        assert (small_features.values >= 0).all()
        assert (small_features.values <= 1).all()

    def test_normalization_can_be_disabled(self):
        rng = np.random.default_rng(0)
        costs = rng.uniform(0.2, 1.0, size=(5, 4))
        cfg = WalkConfig(n_walks=4, walk_length=5, epochs=2)
        corpus, idx = random_walks(costs, cfg, seed=0)
        raw = skipgram_embed(corpus, idx, 5, dim=4, config=cfg, seed=0, normalize=False)
        assert raw.values.min() < 0  # raw skip-gram vectors straddle zero


class TestEndToEnd:
    def test_deterministic_under_fixed_seed(self, small_grid):
        kwargs = dict(n_sim=30, dim=4, max_projects=5, max_nodes=3, n_walks=3,
                      walk_length=6, epochs=2, seed=17, batch_size=512)
        a = DesignCostEmbedding(**kwargs).fit_transform(small_grid)
        b = DesignCostEmbedding(**kwargs).fit_transform(small_grid)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.unembedded, b.unembedded)

    def test_get_params_round_trip(self):
        est = DesignCostEmbedding(n_sim=10, dim=4)
        params = est.get_params()
        assert params["n_sim"] == 10 and params["dim"] == 4
        est.set_params(dim=8)
        assert est.dim == 8
        with pytest.raises(ValueError):
            est.set_params(bogus=1)

    def test_transform_requires_fit(self):
        with pytest.raises(RuntimeError, match="not fitted"):
            DesignCostEmbedding(n_sim=5).transform()

    def test_csv_round_trip(self, small_features, tmp_path):
        path = tmp_path / "features.csv"
        small_features.save_csv(path)
        loaded = FollowerFeatures.load_csv(path)
        assert np.array_equal(loaded.values, small_features.values)
        assert np.array_equal(loaded.unembedded, small_features.unembedded)
        assert np.array_equal(loaded.feature_min, small_features.feature_min)
