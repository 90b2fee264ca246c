"""Semantic environment atlas: place reachability and place-object counts
aggregated across scenes, with in-episode Bayesian relation updates.

The atlas holds two matrices. gamma[i, j] is the fraction of scenes that
contain both place clusters i and j in which the two are connected; its
diagonal is zero and rows of never-seen clusters are zero. r_po[i, j]
counts image-mediated links between place cluster i and object category j,
summed over scenes. Conditional distributions over places or categories
come from normalizing r_po columns or rows.

Relation updates mutate an episode's working copy only; the step size is
0.1 of the current maximum of r_po.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .sgm import SemanticGraphMap, connectivity_matrix, place_object_matrix

ATLAS_SCHEMA_VERSION = 1

UPDATE_RATE = 0.1


@dataclass
class Atlas:
    gamma: np.ndarray  # (n_p, n_p) in [0, 1], symmetric, zero diagonal
    r_po: np.ndarray  # (n_p, n_c) non-negative reals
    n_scenes: int
    presence: np.ndarray  # (n_scenes, n_p) binary

    @property
    def n_places(self) -> int:
        return self.gamma.shape[0]

    @property
    def n_categories(self) -> int:
        return self.r_po.shape[1]

    def seen_places(self) -> np.ndarray:
        """Indices of clusters present in at least one training scene."""
        return np.flatnonzero(self.presence.any(axis=0))

    def copy(self) -> "Atlas":
        return Atlas(
            gamma=self.gamma.copy(),
            r_po=self.r_po.copy(),
            n_scenes=self.n_scenes,
            presence=self.presence.copy(),
        )

    def check_invariants(self) -> None:
        g = self.gamma
        assert np.allclose(g, g.T), "gamma must be symmetric"
        assert np.all(np.diag(g) == 0), "gamma diagonal must be zero"
        assert np.all((g >= 0) & (g <= 1)), "gamma must lie in [0, 1]"
        assert np.all(self.r_po >= 0), "r_po must be non-negative"

    def to_json(self) -> dict:
        return {
            "schema_version": ATLAS_SCHEMA_VERSION,
            "n_p": self.n_places,
            "n_c": self.n_categories,
            "n_scenes": self.n_scenes,
            "gamma": self.gamma.tolist(),
            "r": self.r_po.tolist(),
            "presence": self.presence.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Atlas":
        return cls(
            gamma=np.asarray(obj["gamma"], dtype=np.float64),
            r_po=np.asarray(obj["r"], dtype=np.float64),
            n_scenes=int(obj["n_scenes"]),
            presence=np.asarray(obj["presence"], dtype=np.int64),
        )

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f)

    @classmethod
    def load(cls, path) -> "Atlas":
        with open(path) as f:
            return cls.from_json(json.load(f))


def aggregate_reachability(sgms: list[SemanticGraphMap]) -> tuple[np.ndarray, np.ndarray]:
    """Reachability matrix from one semantic graph map per scene.

    Entry [i, j], i != j, is (number of scenes where clusters i and j are
    connected) / (number of scenes where both appear); zero when no scene
    contains both. Also returns the per-scene presence record.
    """
    if not sgms:
        raise ValueError("need at least one scene map")
    n_p = sgms[0].n_places
    connected = np.zeros((n_p, n_p), dtype=np.float64)
    both_present = np.zeros((n_p, n_p), dtype=np.float64)
    presence = np.zeros((len(sgms), n_p), dtype=np.int64)
    for n, sgm in enumerate(sgms):
        if sgm.n_places != n_p:
            raise ValueError("scene maps must share the cluster model")
        a_c = connectivity_matrix(sgm)
        pres = sgm.place_presence()
        presence[n] = pres
        connected += (a_c > 0).astype(np.float64)
        both_present += np.outer(pres, pres)
    gamma = np.zeros_like(connected)
    np.divide(connected, both_present, out=gamma, where=both_present > 0)
    np.fill_diagonal(gamma, 0.0)
    return gamma, presence


def aggregate_place_object(sgms: list[SemanticGraphMap], a_ocs: list[np.ndarray]) -> np.ndarray:
    """Sum of per-scene place-object matrices."""
    if len(sgms) != len(a_ocs):
        raise ValueError("one category map per scene map required")
    total = None
    for sgm, a_oc in zip(sgms, a_ocs):
        m = place_object_matrix(sgm, a_oc).astype(np.float64)
        total = m if total is None else total + m
    return total


def build_atlas(sgms: list[SemanticGraphMap], a_ocs: list[np.ndarray]) -> Atlas:
    gamma, presence = aggregate_reachability(sgms)
    r_po = aggregate_place_object(sgms, a_ocs)
    return Atlas(gamma=gamma, r_po=r_po, n_scenes=len(sgms), presence=presence)


def p_place_given_object(atlas: Atlas, category: int) -> np.ndarray | None:
    """Column-normalized place distribution, or None for an unseen category."""
    col = atlas.r_po[:, category]
    total = col.sum()
    if total <= 0.0:
        return None
    return col / total


def p_object_given_place(atlas: Atlas, place: int) -> np.ndarray | None:
    """Row-normalized category distribution, or None for an unseen place."""
    row = atlas.r_po[place, :]
    total = row.sum()
    if total <= 0.0:
        return None
    return row / total


@dataclass
class RelationEvent:
    """In-episode evidence about the environment.

    kind is one of 'observed_connection' (place i now linked to category j),
    'target_not_found' (goal category j absent at place i), or 'place_link'
    (clusters i and j seen connected).
    """

    kind: str
    i: int
    j: int
    step: int = 0


def update_relation(atlas: Atlas, event: RelationEvent) -> None:
    """Apply one event to a working copy of the atlas, in place.

    The step size is 0.1 of max(r_po) computed before the update. A failed
    search decrements with a floor at zero; a new place link raises gamma
    to at least 1/n_scenes, one virtual supporting scene.
    """
    delta = UPDATE_RATE * float(atlas.r_po.max())
    if event.kind == "observed_connection":
        atlas.r_po[event.i, event.j] += delta
    elif event.kind == "target_not_found":
        atlas.r_po[event.i, event.j] = max(0.0, atlas.r_po[event.i, event.j] - delta)
    elif event.kind == "place_link":
        if event.i == event.j:
            return
        eps = 1.0 / max(atlas.n_scenes, 1)
        bumped = max(atlas.gamma[event.i, event.j], eps)
        atlas.gamma[event.i, event.j] = bumped
        atlas.gamma[event.j, event.i] = bumped
    else:
        raise ValueError(f"unknown relation event kind: {event.kind}")
