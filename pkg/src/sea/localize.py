"""Graph-based localization over a built semantic graph map.

A query image feature is matched to the most similar image node, optionally
with place and object context appended to the matching vector. Distances
between nodes are estimated from graph hops scaled by the mean observed
edge length, which is calibrated from node poses recorded at map build
time.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .features import unit
from .sgm import SemanticGraphMap

CONTEXT_WEIGHTS = (1.0, 0.25, 0.25)


@dataclass
class LocalizationResult:
    matched_node: int
    position_estimate: tuple[float, float] | None
    confidence: float


def _node_context(sgm: SemanticGraphMap, node_id: int) -> tuple[np.ndarray, np.ndarray]:
    place = np.zeros(sgm.n_places)
    place[sgm.image_nodes[node_id].place_cluster] = 1.0
    hist = np.zeros(sgm.n_categories)
    for i, o in sgm.io_edges:
        if i == node_id:
            hist[sgm.object_nodes[o].category] += 1.0
    n = np.linalg.norm(hist)
    if n > 0:
        hist = hist / n
    return place, hist


def _stack(feature: np.ndarray, place: np.ndarray | None, hist: np.ndarray | None,
           weights: tuple[float, float, float]) -> np.ndarray:
    parts = [weights[0] * unit(feature)]
    if place is not None:
        parts.append(weights[1] * place)
    if hist is not None:
        parts.append(weights[2] * hist)
    return np.concatenate(parts)


def localize_query(
    sgm: SemanticGraphMap,
    query_feature: np.ndarray,
    place_cluster: int | None = None,
    object_histogram: np.ndarray | None = None,
    weights: tuple[float, float, float] = CONTEXT_WEIGHTS,
) -> LocalizationResult:
    """Best-matching image node for a query.

    With place_cluster and/or object_histogram given, the corresponding
    context channels are appended to both sides of the comparison. The
    histogram is normalized before weighting. Confidence is the cosine
    similarity of the winning match.
    """
    if sgm.n_images == 0:
        raise ValueError("cannot localize against an empty graph")
    q_place = None
    if place_cluster is not None:
        q_place = np.zeros(sgm.n_places)
        q_place[place_cluster] = 1.0
    q_hist = None
    if object_histogram is not None:
        q_hist = np.asarray(object_histogram, dtype=np.float64)
        n = np.linalg.norm(q_hist)
        if n > 0:
            q_hist = q_hist / n
    q = _stack(query_feature, q_place, q_hist, weights)
    qn = np.linalg.norm(q)

    best_id, best_sim = 0, -2.0
    for node in sgm.image_nodes:
        n_place, n_hist = None, None
        if q_place is not None or q_hist is not None:
            n_place, n_hist = _node_context(sgm, node.id)
        v = _stack(
            node.feature,
            n_place if q_place is not None else None,
            n_hist if q_hist is not None else None,
            weights,
        )
        sim = float(q @ v) / (qn * np.linalg.norm(v))
        if sim > best_sim:
            best_id, best_sim = node.id, sim
    return LocalizationResult(
        matched_node=best_id,
        position_estimate=sgm.image_nodes[best_id].debug_pose,
        confidence=best_sim,
    )


def mean_edge_length(sgm: SemanticGraphMap) -> float:
    """Average pose distance across image edges; 0.4 m when no edge carries
    pose information (one forward step)."""
    lengths = []
    for i, j in sgm.im_edges:
        pa = sgm.image_nodes[i].debug_pose
        pb = sgm.image_nodes[j].debug_pose
        if pa is not None and pb is not None:
            lengths.append(math.hypot(pa[0] - pb[0], pa[1] - pb[1]))
    return float(np.mean(lengths)) if lengths else 0.4


def node_distance_estimate(sgm: SemanticGraphMap, src: int, dst: int) -> float:
    """Graph-hop distance between two image nodes in meters: BFS hop count
    times the calibrated mean edge length. Infinity when disconnected."""
    if src == dst:
        return 0.0
    adj: dict[int, list[int]] = {}
    for i, j in sgm.im_edges:
        adj.setdefault(i, []).append(j)
        adj.setdefault(j, []).append(i)
    seen = {src}
    queue = deque([(src, 0)])
    while queue:
        node, hops = queue.popleft()
        for nxt in adj.get(node, ()):
            if nxt == dst:
                return (hops + 1) * mean_edge_length(sgm)
            if nxt not in seen:
                seen.add(nxt)
                queue.append((nxt, hops + 1))
    return float("inf")


def accuracy_at(results: list[tuple[float, float]], radius: float) -> float:
    """Fraction of (estimate, truth) pairs with |estimate - truth| <= radius."""
    if not results:
        raise ValueError("no results to score")
    hits = sum(1 for est, truth in results if abs(est - truth) <= radius)
    return hits / len(results)
