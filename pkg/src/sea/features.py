"""Embedding-space utilities: cosine similarity, spherical k-means, and a
small contrastive trainer for the place encoder.

Feature vectors are plain numpy arrays kept at unit L2 norm. Conventional
dimensions: place features 128, image features 512, object features 32.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

PLACE_DIM = 128
IMAGE_DIM = 512
OBJECT_DIM = 32

CLUSTER_SCHEMA_VERSION = 1

_KMEANS_MAX_ITER = 300
_KMEANS_SHIFT_TOL = 1e-6


def unit(v: np.ndarray) -> np.ndarray:
    """Return v scaled to unit L2 norm. Raises on a zero vector."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity between two nonzero vectors of equal dimension."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    return float(np.dot(a, b) / (na * nb))


@dataclass
class ClusterModel:
    """Spherical k-means model: unit-norm centroids plus final inertia."""

    k: int
    centroids: np.ndarray  # (k, dim), rows unit-norm
    inertia: float

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def assign(self, x: np.ndarray) -> int:
        """Index of the most cosine-similar centroid (ties go to the lowest)."""
        x = unit(x)
        return int(np.argmax(self.centroids @ x))

    def to_json(self) -> dict:
        return {
            "schema_version": CLUSTER_SCHEMA_VERSION,
            "K": self.k,
            "dim": self.dim,
            "centroids": self.centroids.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ClusterModel":
        c = np.asarray(obj["centroids"], dtype=np.float64)
        return cls(k=int(obj["K"]), centroids=c, inertia=float(obj.get("inertia", 0.0)))

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f)

    @classmethod
    def load(cls, path) -> "ClusterModel":
        with open(path) as f:
            return cls.from_json(json.load(f))


def _plus_plus_seed(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: D^2-weighted draws from the data."""
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining points coincide with a chosen centroid
            centroids[j] = points[rng.integers(n)]
            continue
        idx = rng.choice(n, p=d2 / total)
        centroids[j] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centroids[j]) ** 2, axis=1))
    return centroids


def kmeans(points: list | np.ndarray, k: int, seed: int) -> ClusterModel:
    """Cluster unit-norm features into k groups.

    Lloyd iterations run until the max centroid shift falls below 1e-6 or
    300 iterations elapse. Assignment uses cosine similarity; centroid
    updates take the arithmetic mean and re-normalize, so the model stays
    on the unit sphere. An emptied cluster is re-seeded from the point
    farthest from its current centroid. Deterministic for a fixed seed.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be a 2-d array of row vectors")
    n = pts.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"need 1 <= k <= {n}, got k={k}")
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)

    rng = np.random.default_rng(seed)
    centroids = _plus_plus_seed(pts, k, rng)
    centroids = centroids / np.linalg.norm(centroids, axis=1, keepdims=True)

    assign = np.zeros(n, dtype=np.int64)
    for _ in range(_KMEANS_MAX_ITER):
        sims = pts @ centroids.T  # (n, k)
        assign = np.argmax(sims, axis=1)
        new_centroids = centroids.copy()
        for j in range(k):
            members = pts[assign == j]
            if members.shape[0] == 0:
                # farthest point from its own centroid restarts the cluster
                d2 = np.sum((pts - centroids[assign]) ** 2, axis=1)
                far = int(np.argmax(d2))
                new_centroids[j] = pts[far]
                assign[far] = j
            else:
                m = members.mean(axis=0)
                norm = np.linalg.norm(m)
                new_centroids[j] = m / norm if norm > 0 else centroids[j]
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < _KMEANS_SHIFT_TOL:
            break

    sims = pts @ centroids.T
    assign = np.argmax(sims, axis=1)
    inertia = float(np.sum((pts - centroids[assign]) ** 2))
    return ClusterModel(k=k, centroids=centroids, inertia=inertia)


@dataclass
class ContrastiveBatch:
    """One InfoNCE-style comparison: a query against one positive and r
    negatives, with softmax temperature > 0."""

    query: np.ndarray
    positive: np.ndarray
    negatives: np.ndarray  # (r, dim)
    temperature: float

    def validate(self) -> None:
        if self.negatives.ndim != 2 or self.negatives.shape[0] < 1:
            raise ValueError("need at least one negative")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")


def _logits(batch: ContrastiveBatch) -> np.ndarray:
    keys = np.vstack([batch.positive[None, :], batch.negatives])
    return (keys @ batch.query) / batch.temperature


def contrastive_loss(batch: ContrastiveBatch) -> float:
    """-log softmax of the positive logit against positive + negatives.

    Logit j is query . key_j / temperature with key_0 the positive.
    """
    batch.validate()
    z = _logits(batch)
    zmax = np.max(z)
    return float(-(z[0] - zmax) + np.log(np.sum(np.exp(z - zmax))))


def contrastive_grad(batch: ContrastiveBatch) -> tuple[float, np.ndarray]:
    """Loss and its analytic gradient with respect to the query vector."""
    batch.validate()
    keys = np.vstack([batch.positive[None, :], batch.negatives])
    z = (keys @ batch.query) / batch.temperature
    zmax = np.max(z)
    ez = np.exp(z - zmax)
    w = ez / ez.sum()
    loss = float(-(z[0] - zmax) + np.log(ez.sum()))
    grad = (w @ keys - keys[0]) / batch.temperature
    return loss, grad


@dataclass
class PlaceSample:
    """Toy training sample: a raw feature, its rotation-augmented twin, and
    the room-type label used for positive mining."""

    raw: np.ndarray
    aug: np.ndarray
    label: int


@dataclass
class TrainConfig:
    epochs: int = 50
    lr: float = 0.05
    temp_place: float = 0.2
    temp_near: float = 0.7
    negatives: int = 16
    clusters: int = 4
    out_dim: int = PLACE_DIM
    seed: int = 0


@dataclass
class PlaceEmbedder:
    """Linear projection followed by L2 normalization."""

    weight: np.ndarray  # (out_dim, raw_dim)
    loss_trace: list = field(default_factory=list)

    def embed(self, raw: np.ndarray) -> np.ndarray:
        return unit(self.weight @ np.asarray(raw, dtype=np.float64))

    def embed_all(self, raws: np.ndarray) -> np.ndarray:
        z = raws @ self.weight.T
        return z / np.linalg.norm(z, axis=1, keepdims=True)


def _pull_back(grad_q: np.ndarray, u: np.ndarray, q: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Gradient through q = u/|u|, u = W x, given dL/dq."""
    gu = (grad_q - np.dot(grad_q, q) * q) / np.linalg.norm(u)
    return np.outer(gu, x)


def train_place_embedder(samples: list[PlaceSample], config: TrainConfig) -> PlaceEmbedder:
    """Fit the linear place encoder by SGD on the combined metric loss.

    Per epoch, k-means runs on the current embeddings and its assignments
    feed the cluster term; each sample then contributes a same-label term,
    a rotation-augmentation term, and a cluster-centroid term. Keys are
    treated as constants; only the query path carries gradient.
    """
    if not samples:
        raise ValueError("no training samples")
    rng = np.random.default_rng(config.seed)
    raws = np.stack([s.raw for s in samples]).astype(np.float64)
    augs = np.stack([s.aug for s in samples]).astype(np.float64)
    labels = np.array([s.label for s in samples])
    n, raw_dim = raws.shape

    weight = rng.normal(0.0, 1.0 / np.sqrt(raw_dim), size=(config.out_dim, raw_dim))
    emb = PlaceEmbedder(weight=weight)

    by_label: dict[int, np.ndarray] = {
        lab: np.flatnonzero(labels == lab) for lab in np.unique(labels)
    }

    for _ in range(config.epochs):
        z = emb.embed_all(raws)
        z_aug = emb.embed_all(augs)
        model = kmeans(z, min(config.clusters, n), seed=config.seed)
        assign = np.array([int(np.argmax(model.centroids @ v)) for v in z])

        order = rng.permutation(n)
        epoch_loss = 0.0
        grad_w = np.zeros_like(emb.weight)
        for i in order:
            u = emb.weight @ raws[i]
            q = u / np.linalg.norm(u)
            terms = 0.0
            g_q = np.zeros_like(q)

            same = by_label[labels[i]]
            same = same[same != i]
            diff = np.flatnonzero(labels != labels[i])
            if same.size and diff.size:
                pos = z[rng.choice(same)]
                negs = z[rng.choice(diff, size=min(config.negatives, diff.size), replace=False)]
                l, g = contrastive_grad(ContrastiveBatch(q, pos, negs, config.temp_place))
                terms += l
                g_q += g

            # nearby-rotation term: the augmented twin is the positive
            neg_pool = np.flatnonzero(np.arange(n) != i)
            negs = z[rng.choice(neg_pool, size=min(config.negatives, neg_pool.size), replace=False)]
            l, g = contrastive_grad(ContrastiveBatch(q, z_aug[i], negs, config.temp_near))
            terms += l
            g_q += g

            if model.k > 1:
                c_pos = model.centroids[assign[i]]
                c_neg = np.delete(model.centroids, assign[i], axis=0)
                l, g = contrastive_grad(ContrastiveBatch(q, c_pos, c_neg, config.temp_place))
                terms += l
                g_q += g

            if not np.isfinite(terms):
                raise FloatingPointError(
                    f"non-finite metric loss at sample {i}: {terms}"
                )
            epoch_loss += terms
            grad_w += _pull_back(g_q, u, q, raws[i])

        emb.weight = emb.weight - config.lr * grad_w / n
        emb.loss_trace.append(epoch_loss / n)

    return emb
