"""Per-episode semantic graph map: image and object nodes tied to place
clusters through three affinity structures.

The map grows monotonically while an agent moves: image nodes are deduped
by cosine similarity against a 0.8 threshold, object nodes by similarity
plus a category match. Affinities are kept as edge sets and assignment
lists; dense matrices are materialized on demand.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .features import ClusterModel, cosine_sim, unit

SIM_THRESHOLD_IMAGE = 0.8
SIM_THRESHOLD_OBJECT = 0.8

SGM_SCHEMA_VERSION = 1

# Guard for analysis-only node poses. Policy code runs inside
# guard_debug_pose(), where any read of ImageNode.debug_pose raises.
_POSE_READS_FORBIDDEN = False


@contextmanager
def guard_debug_pose():
    """Forbid debug_pose reads for the duration of the context."""
    global _POSE_READS_FORBIDDEN
    prev = _POSE_READS_FORBIDDEN
    _POSE_READS_FORBIDDEN = True
    try:
        yield
    finally:
        _POSE_READS_FORBIDDEN = prev


@dataclass
class ImageNode:
    id: int
    feature: np.ndarray  # (512,), unit norm
    place_cluster: int
    last_update_step: int = 0
    _debug_pose: tuple[float, float] | None = None

    @property
    def debug_pose(self) -> tuple[float, float] | None:
        """Pose recorded for visualization and evaluation only."""
        if _POSE_READS_FORBIDDEN:
            raise RuntimeError("debug_pose read inside a policy context")
        return self._debug_pose


@dataclass
class ObjectNode:
    id: int
    feature: np.ndarray  # (32,), unit norm
    category: int
    detection_score: float


@dataclass
class SemanticGraphMap:
    n_places: int
    n_categories: int
    image_nodes: list[ImageNode] = field(default_factory=list)
    object_nodes: list[ObjectNode] = field(default_factory=list)
    im_edges: set[tuple[int, int]] = field(default_factory=set)  # (i<j)
    io_edges: set[tuple[int, int]] = field(default_factory=set)  # (image, object)
    current_node: int | None = None

    @property
    def n_images(self) -> int:
        return len(self.image_nodes)

    @property
    def n_objects(self) -> int:
        return len(self.object_nodes)

    def a_im(self) -> np.ndarray:
        """Symmetric zero-diagonal image adjacency."""
        a = np.zeros((self.n_images, self.n_images), dtype=np.int64)
        for i, j in self.im_edges:
            a[i, j] = 1
            a[j, i] = 1
        return a

    def a_io(self) -> np.ndarray:
        a = np.zeros((self.n_images, self.n_objects), dtype=np.int64)
        for i, o in self.io_edges:
            a[i, o] = 1
        return a

    def a_pi(self) -> np.ndarray:
        """One-hot column per image node mapping it to its place cluster."""
        a = np.zeros((self.n_places, self.n_images), dtype=np.int64)
        for node in self.image_nodes:
            a[node.place_cluster, node.id] = 1
        return a

    def place_presence(self) -> np.ndarray:
        """Binary vector: cluster has at least one image node in this map."""
        p = np.zeros(self.n_places, dtype=np.int64)
        for node in self.image_nodes:
            p[node.place_cluster] = 1
        return p

    def to_json(self, clusters_ref: str = "") -> dict:
        return {
            "schema_version": SGM_SCHEMA_VERSION,
            "clusters_ref": clusters_ref,
            "n_places": self.n_places,
            "n_categories": self.n_categories,
            "image_nodes": [
                {
                    "id": n.id,
                    "feature": n.feature.tolist(),
                    "place_cluster": n.place_cluster,
                    "last_update_step": n.last_update_step,
                    "debug_pose": list(n._debug_pose) if n._debug_pose else None,
                }
                for n in self.image_nodes
            ],
            "object_nodes": [
                {
                    "id": n.id,
                    "feature": n.feature.tolist(),
                    "category": n.category,
                    "detection_score": n.detection_score,
                }
                for n in self.object_nodes
            ],
            "a_im": sorted(self.im_edges),
            "a_io": sorted(self.io_edges),
            "a_pi": [n.place_cluster for n in self.image_nodes],
            "current_node": self.current_node,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SemanticGraphMap":
        sgm = cls(n_places=int(obj["n_places"]), n_categories=int(obj["n_categories"]))
        for rec in obj["image_nodes"]:
            pose = tuple(rec["debug_pose"]) if rec.get("debug_pose") else None
            sgm.image_nodes.append(
                ImageNode(
                    id=int(rec["id"]),
                    feature=np.asarray(rec["feature"], dtype=np.float64),
                    place_cluster=int(rec["place_cluster"]),
                    last_update_step=int(rec["last_update_step"]),
                    _debug_pose=pose,
                )
            )
        for rec in obj["object_nodes"]:
            sgm.object_nodes.append(
                ObjectNode(
                    id=int(rec["id"]),
                    feature=np.asarray(rec["feature"], dtype=np.float64),
                    category=int(rec["category"]),
                    detection_score=float(rec["detection_score"]),
                )
            )
        sgm.im_edges = {tuple(e) for e in obj["a_im"]}
        sgm.io_edges = {tuple(e) for e in obj["a_io"]}
        sgm.current_node = obj.get("current_node")
        return sgm

    def save(self, path, clusters_ref: str = "") -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(clusters_ref), f)

    @classmethod
    def load(cls, path) -> "SemanticGraphMap":
        with open(path) as f:
            return cls.from_json(json.load(f))


def assign_place(feature: np.ndarray, clusters: ClusterModel) -> int:
    """Nearest place cluster by cosine similarity, lowest index on ties."""
    if clusters.k < 1:
        raise ValueError("empty cluster model")
    return clusters.assign(feature)


def update_graph(
    sgm: SemanticGraphMap,
    image_feature: np.ndarray,
    place_feature: np.ndarray,
    clusters: ClusterModel,
    step: int = 0,
    debug_pose: tuple[float, float] | None = None,
) -> tuple[int, bool]:
    """Advance the image graph with one observation.

    Returns (node id, was_new). Similarity at or above 0.8 to the current
    node keeps the graph unchanged. Otherwise the closest existing node is
    re-localized to (feature replaced, edge added from the previous node)
    when it clears the threshold, else a fresh node is created and linked
    to the previous node. A re-localized node keeps its original place
    cluster; only new nodes get an assignment.
    """
    image_feature = unit(image_feature)
    prev = sgm.current_node

    if prev is not None:
        cur_sim = cosine_sim(sgm.image_nodes[prev].feature, image_feature)
        if cur_sim >= SIM_THRESHOLD_IMAGE:
            return prev, False

    if sgm.n_images > 0:
        sims = np.array([float(n.feature @ image_feature) for n in sgm.image_nodes])
        best = int(np.argmax(sims))
        if sims[best] >= SIM_THRESHOLD_IMAGE:
            node = sgm.image_nodes[best]
            node.feature = image_feature
            node.last_update_step = step
            if prev is not None and best != prev:
                sgm.im_edges.add((min(prev, best), max(prev, best)))
            sgm.current_node = best
            return best, False

    node_id = sgm.n_images
    sgm.image_nodes.append(
        ImageNode(
            id=node_id,
            feature=image_feature,
            place_cluster=assign_place(place_feature, clusters),
            last_update_step=step,
            _debug_pose=debug_pose,
        )
    )
    if prev is not None:
        sgm.im_edges.add((min(prev, node_id), max(prev, node_id)))
    sgm.current_node = node_id
    return node_id, True


def register_objects(
    sgm: SemanticGraphMap,
    detections: list[dict],
    at_node: int,
) -> dict:
    """Merge detections into the object graph at the given image node.

    A detection matches an existing object when similarity exceeds 0.8 and
    the categories agree; the stored feature and score are replaced only by
    a strictly higher score. Every processed detection links the image node
    to the object. Returns counts plus the ids of objects whose image link
    is new (used by relation updates downstream).
    """
    if at_node < 0 or at_node >= sgm.n_images:
        raise ValueError(f"image node {at_node} does not exist")
    counts = {"added": 0, "updated": 0, "matched": 0, "skipped": 0}
    new_links: list[int] = []
    for det in detections:
        cat = int(det["category"])
        if cat < 0 or cat >= sgm.n_categories:
            counts["skipped"] += 1
            continue
        feat = unit(np.asarray(det["feature"], dtype=np.float64))
        score = float(det["score"])

        best_id, best_sim = -1, SIM_THRESHOLD_OBJECT
        for obj in sgm.object_nodes:
            if obj.category != cat:
                continue
            s = float(obj.feature @ feat)
            if s > best_sim:
                best_id, best_sim = obj.id, s

        if best_id >= 0:
            obj = sgm.object_nodes[best_id]
            if score > obj.detection_score:
                obj.feature = feat
                obj.detection_score = score
                counts["updated"] += 1
            else:
                counts["matched"] += 1
            obj_id = best_id
        else:
            obj_id = sgm.n_objects
            sgm.object_nodes.append(
                ObjectNode(id=obj_id, feature=feat, category=cat, detection_score=score)
            )
            counts["added"] += 1

        edge = (at_node, obj_id)
        if edge not in sgm.io_edges:
            sgm.io_edges.add(edge)
            new_links.append(obj_id)
    counts["new_links"] = new_links
    return counts


def connectivity_matrix(sgm: SemanticGraphMap) -> np.ndarray:
    """Place-to-place connection counts: A_pi . A_im . A_pi^T."""
    a_pi = sgm.a_pi()
    return a_pi @ sgm.a_im() @ a_pi.T


def place_object_matrix(sgm: SemanticGraphMap, a_oc: np.ndarray) -> np.ndarray:
    """Place-to-category link counts: A_pi . A_io . A_oc.

    a_oc maps each object node to its category as one-hot rows.
    """
    a_oc = np.asarray(a_oc)
    if a_oc.shape[0] != sgm.n_objects:
        raise ValueError(f"a_oc has {a_oc.shape[0]} rows, expected {sgm.n_objects}")
    if sgm.n_objects and not np.all(a_oc.sum(axis=1) == 1):
        raise ValueError("a_oc rows must be one-hot")
    return sgm.a_pi() @ sgm.a_io() @ a_oc


def category_onehot(sgm: SemanticGraphMap) -> np.ndarray:
    """One-hot category matrix for the map's own object nodes."""
    a = np.zeros((sgm.n_objects, sgm.n_categories), dtype=np.int64)
    for obj in sgm.object_nodes:
        a[obj.id, obj.category] = 1
    return a
