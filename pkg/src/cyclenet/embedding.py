"""Follower representation learning from costs under sampled designs.

Pipeline: sample leader designs, evaluate every follower's accessibility
under each (the cost matrix), turn per-design cost similarity into edge
weights of a complete relationship graph over followers, run weighted
random walks on it, and train a skip-gram model with negative sampling on
the walk corpus.  Followers whose similarity to everyone is zero cannot be
walked and are flagged ``unembedded`` (zero feature vector).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Network
from .routing import Design, TravelTimeEvaluator, get_impedance
from .validation import ParamsMixin, check_array_2d, check_positive


@dataclass(frozen=True)
class WalkConfig:
    """Knobs of the walk/skip-gram stage (all counts positive)."""

    n_walks: int = 50
    walk_length: int = 20
    window: int = 5
    epsilon: float = 1e-6
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025

    def validate(self):
        for name in ("n_walks", "walk_length", "window", "negatives", "epochs"):
            check_positive(getattr(self, name), name)
        check_positive(self.epsilon, "epsilon")
        check_positive(self.learning_rate, "learning_rate")


@dataclass
class FollowerFeatures:
    """Per-follower feature vectors plus normalization metadata.

    ``values`` has one row per follower.  When normalized, every coordinate
    of an embedded row lies in [0, 1]; unembedded followers keep the zero
    vector and are flagged in ``unembedded``.
    """

    values: np.ndarray
    unembedded: np.ndarray
    feature_min: np.ndarray
    feature_max: np.ndarray

    @property
    def n_followers(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]

    def save_csv(self, path):
        header = ["od_id"] + [f"f_{j + 1}" for j in range(self.dim)] + ["unembedded"]
        lines = [",".join(header)]
        for i in range(self.n_followers):
            row = [str(i)] + [repr(float(v)) for v in self.values[i]] + [str(int(self.unembedded[i]))]
            lines.append(",".join(row))
        meta_min = ",".join(repr(float(v)) for v in self.feature_min)
        meta_max = ",".join(repr(float(v)) for v in self.feature_max)
        lines.append(f"# min,{meta_min}")
        lines.append(f"# max,{meta_max}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @staticmethod
    def load_csv(path) -> "FollowerFeatures":
        rows, mins, maxs = [], None, None
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            dim = len(header) - 2
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    parts = line[1:].strip().split(",")
                    if parts[0] == "min":
                        mins = np.array([float(v) for v in parts[1:]])
                    elif parts[0] == "max":
                        maxs = np.array([float(v) for v in parts[1:]])
                    continue
                rows.append(line.split(","))
        rows.sort(key=lambda r: int(r[0]))
        values = np.array([[float(v) for v in r[1 : 1 + dim]] for r in rows])
        unemb = np.array([bool(int(r[-1])) for r in rows])
        if mins is None:
            mins = values.min(axis=0) if len(values) else np.zeros(dim)
        if maxs is None:
            maxs = values.max(axis=0) if len(values) else np.zeros(dim)
        return FollowerFeatures(values, unemb, mins, maxs)


def as_feature_matrix(features):
    """Accept a FollowerFeatures or a bare array; return (values, unembedded)."""
    if isinstance(features, FollowerFeatures):
        return features.values, features.unembedded
    values = check_array_2d(features, "features")
    return values, np.zeros(values.shape[0], dtype=bool)


# -- stage 1: designs and the cost matrix ------------------------------------


def sample_designs(network: Network, n_sim: int, max_projects: int = 25,
                   max_nodes: int = 10, seed: int = 0) -> list[Design]:
    """Draw ``n_sim`` unbudgeted designs: a uniform count of projects in
    [1, max_projects] and of high-stress nodes in [1, max_nodes], each
    chosen uniformly without replacement."""
    check_positive(n_sim, "n_sim")
    high_nodes = np.array(network.high_stress_nodes, dtype=np.int64)
    if not 1 <= max_projects <= network.n_projects:
        raise ValueError(
            f"max_projects must lie in [1, {network.n_projects}], got {max_projects}"
        )
    if not 0 <= max_nodes <= high_nodes.size:
        raise ValueError(
            f"max_nodes must lie in [0, {high_nodes.size}], got {max_nodes}"
        )
    rng = np.random.default_rng(seed)
    designs = []
    for _ in range(n_sim):
        p = int(rng.integers(1, max_projects + 1))
        projects = rng.choice(network.n_projects, size=p, replace=False)
        nodes = ()
        if max_nodes:
            q = int(rng.integers(1, max_nodes + 1))
            nodes = high_nodes[rng.choice(high_nodes.size, size=q, replace=False)]
        designs.append(Design.of(projects, nodes))
    return designs


def cost_matrix(network: Network, designs, impedance="exp") -> np.ndarray:
    """Accessibility of every follower under every design: shape (|S|, n_sim)."""
    evaluator = TravelTimeEvaluator(network, impedance)
    out = np.empty((network.n_od_pairs, len(designs)))
    for j, design in enumerate(designs):
        out[:, j] = evaluator.od_accessibility(design)
    return out


# -- stage 2: relationship graph ---------------------------------------------


def pair_similarity(row_s, row_t, epsilon: float = 1e-6) -> float:
    """Average cost similarity of two followers across sampled designs.

    Each design contributes min(a/(b+eps), b/(a+eps)), a symmetric ratio in
    [0, 1] for nonnegative costs, so no single design can dominate."""
    a = np.asarray(row_s, dtype=np.float64)
    b = np.asarray(row_t, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("cost rows must have equal length")
    return float(np.mean(np.minimum(a / (b + epsilon), b / (a + epsilon))))


def similarity_row(costs: np.ndarray, s: int, epsilon: float = 1e-6) -> np.ndarray:
    """Edge weights from follower ``s`` to every follower (self weight 0)."""
    a = costs[s]
    row = np.minimum(a / (costs + epsilon), costs / (a + epsilon)).mean(axis=1)
    row[s] = 0.0
    return row


def embeddable_mask(costs: np.ndarray) -> np.ndarray:
    """True where a follower has nonzero similarity to someone.

    pi_st > 0 iff some design gives both followers positive cost, so the
    mask is computable without materializing the similarity matrix."""
    positive = costs > 0
    shared = positive.sum(axis=0) >= 2
    return positive[:, shared].any(axis=1)


class _RowCache:
    """Lazily computed cumulative-probability rows of the walk transition
    matrix, restricted to embeddable followers.  ``max_rows`` caps memory
    (first-in evicted), for instances too large to hold |S'| rows.

    Rows use a float32 fast path with precomputed reciprocals; the walk
    sampler only needs relative weights, so the reduced precision is
    immaterial (and deterministic)."""

    def __init__(self, costs, embed_idx, epsilon, max_rows=None):
        self.costs = costs[embed_idx].astype(np.float32)
        self.inv = (1.0 / (costs[embed_idx] + epsilon)).astype(np.float32)
        self.max_rows = max_rows
        self._cache: dict[int, np.ndarray] = {}

    def cumulative(self, i: int) -> np.ndarray:
        row = self._cache.get(i)
        if row is None:
            ratios = np.minimum(self.costs[i] * self.inv, self.costs * self.inv[i])
            weights = ratios.mean(axis=1, dtype=np.float64)
            weights[i] = 0.0
            row = np.cumsum(weights)
            if self.max_rows is not None and len(self._cache) >= self.max_rows:
                self._cache.pop(next(iter(self._cache)))
            self._cache[i] = row
        return row


def random_walks(costs: np.ndarray, config: WalkConfig = WalkConfig(), seed: int = 0,
                 row_cache_size=None):
    """Weighted random walks over the follower relationship graph.

    Returns ``(corpus, embed_idx)`` where the corpus holds
    ``n_walks * |S'|`` walks of ``walk_length + 1`` tokens over the compact
    index space of the embeddable followers ``embed_idx``.  Walk draws come
    from one RNG stream per round keyed by (seed, round), one row per start
    node, so corpus content is independent of generation order.
    """
    config.validate()
    costs = check_array_2d(costs, "costs")
    if costs.shape[0] < 2:
        raise ValueError("need at least 2 followers to build a relationship graph")
    mask = embeddable_mask(costs)
    embed_idx = np.flatnonzero(mask)
    if embed_idx.size == 0:
        raise ValueError("all-zero similarity graph: no follower can be embedded")
    rows = _RowCache(costs, embed_idx, config.epsilon, row_cache_size)
    corpus = []
    last = embed_idx.size - 1
    for walk_round in range(config.n_walks):
        draws = np.random.default_rng([seed, walk_round]).random(
            (embed_idx.size, config.walk_length)
        )
        for start in range(embed_idx.size):
            walk = np.empty(config.walk_length + 1, dtype=np.int64)
            walk[0] = start
            current = start
            for j in range(config.walk_length):
                cum = rows.cumulative(current)
                current = min(
                    int(np.searchsorted(cum, draws[start, j] * cum[-1], side="right")),
                    last,
                )
                walk[j + 1] = current
            corpus.append(walk)
    return corpus, embed_idx


# -- stage 3: skip-gram embedding ---------------------------------------------


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -30.0, 30.0)))


def _scatter_mean(target, idx, grads):
    """target[idx] += mean of grads per unique index.

    Averaging (rather than summing) repeated-index gradients keeps the
    effective step size independent of how often a token recurs within a
    batch, so training is stable for any vocabulary/batch-size ratio."""
    n, dim = target.shape
    counts = np.bincount(idx, minlength=n)
    flat = (idx[:, None] * dim + np.arange(dim)[None, :]).ravel()
    sums = np.bincount(flat, weights=grads.ravel(), minlength=n * dim).reshape(n, dim)
    target += sums / np.maximum(counts, 1)[:, None]


def train_skipgram(corpus, n_vocab: int, dim: int, config: WalkConfig = WalkConfig(),
                   seed: int = 0, batch_size: int = 4096):
    """Skip-gram with negative sampling over (center, context) pairs.

    Noise distribution is the standard unigram^0.75.  The learning rate
    decays linearly over all batches from ``config.learning_rate``.
    Returns (vectors, per-epoch mean loss history).
    """
    if not corpus:
        raise ValueError("empty walk corpus")
    rng = np.random.default_rng(seed)
    centers, contexts = [], []
    counts = np.zeros(n_vocab)
    for walk in corpus:
        walk = np.asarray(walk, dtype=np.int64)
        np.add.at(counts, walk, 1)
        for off in range(1, config.window + 1):
            if walk.size <= off:
                break
            centers.append(walk[:-off])
            contexts.append(walk[off:])
            centers.append(walk[off:])
            contexts.append(walk[:-off])
    centers = np.concatenate(centers)
    contexts = np.concatenate(contexts)
    noise = counts**0.75
    noise_cdf = np.cumsum(noise / noise.sum())

    w_in = rng.uniform(-0.5 / dim, 0.5 / dim, size=(n_vocab, dim))
    w_out = np.zeros((n_vocab, dim))
    n_pairs = centers.size
    batches_per_epoch = max(1, int(np.ceil(n_pairs / batch_size)))
    total_batches = config.epochs * batches_per_epoch
    lr0 = config.learning_rate
    losses = []
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(n_pairs)
        epoch_loss = 0.0
        for lo in range(0, n_pairs, batch_size):
            idx = order[lo : lo + batch_size]
            c, o = centers[idx], contexts[idx]
            neg = np.searchsorted(noise_cdf, rng.random((idx.size, config.negatives)))
            lr = lr0 * max(1e-4, 1.0 - step / total_batches)
            step += 1

            v = w_in[c]
            u = w_out[o]
            un = w_out[neg]
            pos_score = _sigmoid(np.einsum("bd,bd->b", v, u))
            neg_score = _sigmoid(np.einsum("bkd,bd->bk", un, v))
            epoch_loss += float(
                -np.sum(np.log(np.maximum(pos_score, 1e-12)))
                - np.sum(np.log(np.maximum(1.0 - neg_score, 1e-12)))
            )
            g_pos = pos_score - 1.0
            grad_v = g_pos[:, None] * u + np.einsum("bk,bkd->bd", neg_score, un)
            grad_u = g_pos[:, None] * v
            grad_un = neg_score[:, :, None] * v[:, None, :]
            _scatter_mean(w_in, c, -lr * grad_v)
            _scatter_mean(w_out, o, -lr * grad_u)
            _scatter_mean(w_out, neg.ravel(), -lr * grad_un.reshape(-1, dim))
        losses.append(epoch_loss / n_pairs)
    return w_in, losses


def skipgram_embed(corpus, embed_idx, n_followers: int, dim: int = 16,
                   config: WalkConfig = WalkConfig(), seed: int = 0,
                   normalize: bool = True, batch_size: int = 4096) -> FollowerFeatures:
    """Embed walk tokens and scatter back to follower ids.

    Followers absent from the walks get the zero vector and the
    ``unembedded`` flag.  With ``normalize`` (default), embedded rows are
    min-max scaled per dimension into [0, 1]."""
    vectors, _ = train_skipgram(corpus, len(embed_idx), dim, config, seed, batch_size)
    feature_min = vectors.min(axis=0)
    feature_max = vectors.max(axis=0)
    if normalize:
        span = np.where(feature_max > feature_min, feature_max - feature_min, 1.0)
        vectors = (vectors - feature_min) / span
    values = np.zeros((n_followers, dim))
    values[embed_idx] = vectors
    unembedded = np.ones(n_followers, dtype=bool)
    unembedded[embed_idx] = False
    return FollowerFeatures(values, unembedded, feature_min, feature_max)


class DesignCostEmbedding(ParamsMixin):
    """End-to-end follower embedding estimator (fit/transform style).

    fit(network) samples designs, evaluates the cost matrix, and trains the
    walk + skip-gram pipeline; transform() returns the learned
    FollowerFeatures.  Deterministic for a fixed seed.
    """

    def __init__(self, n_sim=5000, dim=16, max_projects=25, max_nodes=10,
                 n_walks=50, walk_length=20, window=5, epsilon=1e-6, negatives=5,
                 epochs=5, learning_rate=0.025, impedance="exp", normalize=True,
                 seed=0, row_cache_size=None, batch_size=4096):
        self.n_sim = n_sim
        self.dim = dim
        self.max_projects = max_projects
        self.max_nodes = max_nodes
        self.n_walks = n_walks
        self.walk_length = walk_length
        self.window = window
        self.epsilon = epsilon
        self.negatives = negatives
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.impedance = impedance
        self.normalize = normalize
        self.seed = seed
        self.row_cache_size = row_cache_size
        self.batch_size = batch_size
        self.features_ = None

    def _walk_config(self):
        return WalkConfig(
            n_walks=self.n_walks,
            walk_length=self.walk_length,
            window=self.window,
            epsilon=self.epsilon,
            negatives=self.negatives,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
        )

    def fit(self, network: Network):
        max_projects = min(self.max_projects, network.n_projects)
        max_nodes = min(self.max_nodes, len(network.high_stress_nodes))
        designs = sample_designs(network, self.n_sim, max_projects, max_nodes, self.seed)
        costs = cost_matrix(network, designs, self.impedance)
        config = self._walk_config()
        corpus, embed_idx = random_walks(costs, config, self.seed, self.row_cache_size)
        self.features_ = skipgram_embed(
            corpus, embed_idx, network.n_od_pairs, self.dim, config,
            seed=self.seed, normalize=self.normalize, batch_size=self.batch_size,
        )
        self.cost_matrix_ = costs
        self.embeddable_ = np.zeros(network.n_od_pairs, dtype=bool)
        self.embeddable_[embed_idx] = True
        return self

    def transform(self, network: Network | None = None) -> FollowerFeatures:
        from .validation import check_fitted

        check_fitted(self, "features_")
        return self.features_

    def fit_transform(self, network: Network) -> FollowerFeatures:
        return self.fit(network).transform()
