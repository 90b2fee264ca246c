"""Global navigation policy: pick the target place for a goal category,
rank directional subgoal candidates by object importance, and plan
semantic paths over the place reachability graph.

All operations are pure functions of detections, an atlas working copy,
and a seeded RNG. None of them takes a pose, which is what makes the
decision layer immune to odometry noise.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .atlas import Atlas, p_object_given_place, p_place_given_object

ENTROPY_FLOOR = 1e-6

SECTORS = ("front", "left", "right")


@dataclass
class PolicyConfig:
    tie_break: str = "lowest_index"
    importance_weighting: str = "posterior"  # or "uniform"
    rng_seed: int = 0

    def validate(self) -> None:
        if self.tie_break != "lowest_index":
            raise ValueError(f"unsupported tie_break: {self.tie_break}")
        if self.importance_weighting not in ("posterior", "uniform"):
            raise ValueError(f"unsupported weighting: {self.importance_weighting}")


@dataclass
class SubgoalCandidate:
    sector: str  # front | left | right
    anchor_object: int | None = None
    place: int | None = None
    # agent-relative cell offset (ahead, lateral-left), in local-map cells
    world_cell: tuple[int, int] | None = None
    reachable: bool = True


@dataclass
class SemanticPath:
    clusters: list[int] = field(default_factory=list)
    cost: float = 0.0
    product: float = 1.0


def target_place(atlas: Atlas, goal: int, rng: np.random.Generator) -> tuple[int, str]:
    """Cluster with the highest probability of containing the goal category.

    Ties break to the lowest index. An unseen category falls back to a
    seeded uniform draw over clusters observed during training, flagged by
    status 'fallback_uniform'.
    """
    dist = p_place_given_object(atlas, goal)
    if dist is None:
        seen = atlas.seen_places()
        if seen.size == 0:
            seen = np.arange(atlas.n_places)
        return int(rng.choice(seen)), "fallback_uniform"
    return int(np.argmax(dist)), "ok"


def object_importance(atlas: Atlas, weighting: str = "posterior") -> np.ndarray:
    """Per-category importance: inverse entropy of where the category lives.

    For category j the entropy sums -log p(O_j | P_i) over places with
    positive conditional mass, weighted either by the place posterior
    p(P_i | O_j) or uniformly. Zero entropy is floored at 1e-6 so a
    single-place category gets the capped maximum; a never-seen category
    scores zero.
    """
    n_p, n_c = atlas.r_po.shape
    importance = np.zeros(n_c)
    cond = np.zeros((n_p, n_c))
    for i in range(n_p):
        row = p_object_given_place(atlas, i)
        if row is not None:
            cond[i] = row
    for j in range(n_c):
        posterior = p_place_given_object(atlas, j)
        if posterior is None:
            continue
        support = np.flatnonzero(cond[:, j] > 0)
        if support.size == 0:
            continue
        if weighting == "posterior":
            w = posterior[support]
        else:
            w = np.full(support.size, 1.0 / support.size)
        h = float(np.sum(w * -np.log(cond[support, j])))
        importance[j] = 1.0 / max(h, ENTROPY_FLOOR)
    return importance


def _sector_of(bearing_deg: float) -> str | None:
    if -60.0 <= bearing_deg < -20.0:
        return "left"
    if -20.0 <= bearing_deg <= 20.0:
        return "front"
    if 20.0 < bearing_deg <= 60.0:
        return "right"
    return None


# bearing of each sector's center, used when a sector has no anchor
SECTOR_CENTER_DEG = {"front": 0.0, "left": -40.0, "right": 40.0}


def _offset_cell(bearing_deg: float, range_m: float, resolution: float) -> tuple[int, int]:
    b = math.radians(bearing_deg)
    ahead = range_m * math.cos(b)
    lateral = -range_m * math.sin(b)  # +lateral = left of heading
    return int(round(ahead / resolution)), int(round(lateral / resolution))


def subgoal_candidates(
    detections: list[dict],
    atlas: Atlas,
    config: PolicyConfig | None = None,
    resolution: float = 0.1,
    default_range: float = 3.0,
) -> list[SubgoalCandidate]:
    """One candidate per 40-degree sector of the 120-degree forward view.

    Detections carry 'category', 'bearing' (degrees, relative to heading,
    negative left of axis by screen convention: here negative means left),
    and 'range' (meters). Within a sector, the detection whose category has
    the highest importance anchors the candidate; the candidate's place is
    the most probable cluster for that category. Empty sectors yield
    anchorless candidates aimed at the sector center.
    """
    cfg = config or PolicyConfig()
    cfg.validate()
    importance = object_importance(atlas, cfg.importance_weighting)

    best: dict[str, dict] = {}
    for det in detections:
        sector = _sector_of(float(det["bearing"]))
        if sector is None:
            continue
        cat = int(det["category"])
        score = importance[cat] if cat < importance.size else 0.0
        cur = best.get(sector)
        if cur is None or score > cur["importance"]:
            best[sector] = {"det": det, "importance": score}

    candidates = []
    for sector in SECTORS:
        if sector in best:
            det = best[sector]["det"]
            cat = int(det["category"])
            dist = p_place_given_object(atlas, cat)
            place = int(np.argmax(dist)) if dist is not None else None
            cell = _offset_cell(float(det["bearing"]), float(det["range"]), resolution)
            candidates.append(
                SubgoalCandidate(
                    sector=sector,
                    anchor_object=cat,
                    place=place,
                    world_cell=cell,
                )
            )
        else:
            cell = _offset_cell(SECTOR_CENTER_DEG[sector], default_range, resolution)
            candidates.append(SubgoalCandidate(sector=sector, world_cell=cell))
    return candidates


def semantic_shortest_path(gamma: np.ndarray, src: int, dst: int) -> SemanticPath | None:
    """Most reliable cluster route: maximize the product of reachabilities.

    Equivalent to a shortest path under -log gamma edge weights. Ties in
    product resolve to the lexicographically smallest cluster sequence.
    Returns None when no route exists; src == dst is the empty path with
    product 1.
    """
    n = gamma.shape[0]
    if not (0 <= src < n and 0 <= dst < n):
        raise ValueError("cluster index out of range")
    if src == dst:
        return SemanticPath(clusters=[src], cost=0.0, product=1.0)

    # heap entries sort by (-product, path): highest product first, then
    # lexicographically smallest route
    heap: list[tuple[float, tuple[int, ...]]] = [(-1.0, (src,))]
    finalized = np.zeros(n, dtype=bool)
    while heap:
        neg_prod, path = heapq.heappop(heap)
        v = path[-1]
        if finalized[v]:
            continue
        finalized[v] = True
        if v == dst:
            product = -neg_prod
            cost = -sum(
                math.log(gamma[a, b]) for a, b in zip(path[:-1], path[1:])
            )
            return SemanticPath(clusters=list(path), cost=cost, product=product)
        for u in range(n):
            if gamma[v, u] > 0.0 and not finalized[u]:
                heapq.heappush(heap, (neg_prod * gamma[v, u], path + (u,)))
    return None


def select_subgoal(
    candidates: list[SubgoalCandidate],
    gamma: np.ndarray,
    k_star: int,
    rng: np.random.Generator,
) -> tuple[SubgoalCandidate, SemanticPath | None]:
    """Choose the candidate whose place routes best to the target cluster.

    Unreachable candidates are dropped first. If the survivors' places are
    all equal or no candidate has an anchor, the choice is a seeded uniform
    draw over the surviving sector directions. A candidate already at the
    target cluster carries the empty path with product 1 and beats any
    strictly smaller product.
    """
    pool = [c for c in candidates if c.reachable] or list(candidates)
    anchored = [c for c in pool if c.place is not None]

    distinct_places = {c.place for c in anchored}
    if not anchored or (len(anchored) >= 2 and len(distinct_places) == 1):
        pick = pool[int(rng.integers(len(pool)))]
        path = semantic_shortest_path(gamma, pick.place, k_star) if pick.place is not None else None
        return pick, path

    best_c, best_path, best_product = None, None, -1.0
    for c in anchored:
        path = semantic_shortest_path(gamma, c.place, k_star)
        product = path.product if path is not None else 0.0
        if product > best_product:
            best_c, best_path, best_product = c, path, product
    if best_product <= 0.0:
        pick = pool[int(rng.integers(len(pool)))]
        return pick, None
    return best_c, best_path
