import numpy as np
import pytest

from sea.features import ClusterModel, unit
from sea.sgm import (
    SemanticGraphMap,
    assign_place,
    category_onehot,
    connectivity_matrix,
    guard_debug_pose,
    place_object_matrix,
    register_objects,
    update_graph,
)


def make_clusters(n_p=8, dim=16, seed=0):
    rng = np.random.default_rng(seed)
    cents = rng.standard_normal((n_p, dim))
    cents /= np.linalg.norm(cents, axis=1, keepdims=True)
    return ClusterModel(k=n_p, centroids=cents, inertia=0.0)


def basis(dim, i):
    v = np.zeros(dim)
    v[i] = 1.0
    return v


class TestAssignPlace:
    def test_exact_centroid_match(self):
        clusters = make_clusters()
        assert assign_place(clusters.centroids[7], clusters) == 7

    def test_tie_breaks_to_lowest_index(self):
        dim = 8
        cents = np.stack([basis(dim, i) for i in range(6)])
        clusters = ClusterModel(k=6, centroids=cents, inertia=0.0)
        q = unit(basis(dim, 2) + basis(dim, 5))  # equidistant from 2 and 5
        assert assign_place(q, clusters) == 2

    def test_matches_brute_force(self):
        clusters = make_clusters(n_p=12, seed=3)
        rng = np.random.default_rng(4)
        for _ in range(50):
            q = unit(rng.standard_normal(16))
            sims = [float(c @ q) for c in clusters.centroids]
            assert assign_place(q, clusters) == int(np.argmax(sims))


def obs_feature(rng, dim=32):
    return unit(rng.standard_normal(dim))


class TestUpdateGraph:
    def setup_method(self):
        self.clusters = make_clusters(n_p=4, dim=8, seed=1)
        self.place = self.clusters.centroids[2]

    def test_first_observation_creates_node(self):
        sgm = SemanticGraphMap(n_places=4, n_categories=5)
        rng = np.random.default_rng(0)
        nid, was_new = update_graph(sgm, obs_feature(rng), self.place, self.clusters)
        assert was_new and nid == 0
        assert sgm.n_images == 1 and len(sgm.im_edges) == 0
        assert sgm.a_pi().sum(axis=0).tolist() == [1]

    def test_dissimilar_observation_adds_linked_node(self):
        sgm = SemanticGraphMap(n_places=4, n_categories=5)
        f0 = unit(basis(32, 0))
        f1 = unit(basis(32, 0) * 0.5 + basis(32, 1) * np.sqrt(1 - 0.25))  # sim 0.5
        update_graph(sgm, f0, self.place, self.clusters)
        nid, was_new = update_graph(sgm, f1, self.place, self.clusters)
        assert was_new and nid == 1
        assert sgm.im_edges == {(0, 1)}
        a = sgm.a_im()
        assert a[0, 1] == 1 and a[1, 0] == 1

    def test_relocalization_updates_feature_and_links(self):
        sgm = SemanticGraphMap(n_places=4, n_categories=5)
        f0 = unit(basis(32, 0))
        f1 = unit(basis(32, 1))
        update_graph(sgm, f0, self.place, self.clusters)
        update_graph(sgm, f1, self.place, self.clusters)
        assert sgm.current_node == 1
        # similar to node 0 (sim ~0.95), dissimilar to current node 1
        f2 = unit(basis(32, 0) + 0.33 * basis(32, 2))
        assert float(f2 @ f0) > 0.8
        nid, was_new = update_graph(sgm, f2, self.place, self.clusters)
        assert not was_new and nid == 0
        assert sgm.n_images == 2
        assert np.allclose(sgm.image_nodes[0].feature, f2)
        assert sgm.im_edges == {(0, 1)}

    def test_same_node_observation_is_idempotent(self):
        sgm = SemanticGraphMap(n_places=4, n_categories=5)
        f0 = unit(basis(32, 0))
        update_graph(sgm, f0, self.place, self.clusters)
        before = (sgm.n_images, set(sgm.im_edges), sgm.current_node)
        nid, was_new = update_graph(sgm, f0, self.place, self.clusters)
        assert not was_new and nid == 0
        assert (sgm.n_images, set(sgm.im_edges), sgm.current_node) == before

    def test_invariants_over_random_stream(self):
        rng = np.random.default_rng(9)
        sgm = SemanticGraphMap(n_places=4, n_categories=5)
        for t in range(100):
            f = obs_feature(rng, 32)
            p = unit(rng.standard_normal(8))
            update_graph(sgm, f, p, self.clusters, step=t)
            a = sgm.a_im()
            assert np.array_equal(a, a.T)
            assert np.all(np.diag(a) == 0)
            cols = sgm.a_pi().sum(axis=0)
            assert np.all(cols == 1)
        assert sgm.n_images <= 100


class TestRegisterObjects:
    def setup_method(self):
        self.clusters = make_clusters(n_p=4, dim=8, seed=1)
        self.sgm = SemanticGraphMap(n_places=4, n_categories=6)
        update_graph(self.sgm, unit(basis(32, 0)), self.clusters.centroids[0], self.clusters)

    def test_first_detection_added(self):
        f = unit(basis(32, 3))
        counts = register_objects(self.sgm, [{"feature": f, "category": 3, "score": 0.7}], 0)
        assert counts["added"] == 1
        assert (0, 0) in self.sgm.io_edges

    def test_redetection_lower_score_keeps_feature(self):
        f = unit(basis(32, 3))
        register_objects(self.sgm, [{"feature": f, "category": 3, "score": 0.8}], 0)
        f2 = unit(basis(32, 3) + 0.3 * basis(32, 4))
        assert float(f2 @ f) > 0.8
        counts = register_objects(self.sgm, [{"feature": f2, "category": 3, "score": 0.6}], 0)
        assert counts["matched"] == 1 and counts["added"] == 0
        assert np.allclose(self.sgm.object_nodes[0].feature, f)
        assert self.sgm.object_nodes[0].detection_score == 0.8

    def test_redetection_higher_score_replaces(self):
        f = unit(basis(32, 3))
        register_objects(self.sgm, [{"feature": f, "category": 3, "score": 0.5}], 0)
        f2 = unit(basis(32, 3) + 0.3 * basis(32, 4))
        counts = register_objects(self.sgm, [{"feature": f2, "category": 3, "score": 0.9}], 0)
        assert counts["updated"] == 1
        assert np.allclose(self.sgm.object_nodes[0].feature, f2)

    def test_category_gate(self):
        f = unit(basis(32, 3))
        register_objects(self.sgm, [{"feature": f, "category": 3, "score": 0.8}], 0)
        counts = register_objects(self.sgm, [{"feature": f, "category": 4, "score": 0.8}], 0)
        assert counts["added"] == 1
        assert self.sgm.n_objects == 2

    def test_invalid_category_skipped(self):
        f = unit(basis(32, 3))
        counts = register_objects(self.sgm, [{"feature": f, "category": 99, "score": 0.8}], 0)
        assert counts["skipped"] == 1 and self.sgm.n_objects == 0

    def test_every_object_has_an_edge(self):
        rng = np.random.default_rng(3)
        for t in range(30):
            dets = [
                {"feature": obs_feature(rng), "category": int(rng.integers(0, 6)), "score": float(rng.uniform(0, 1))}
                for _ in range(rng.integers(0, 4))
            ]
            register_objects(self.sgm, dets, 0)
        linked = {o for _, o in self.sgm.io_edges}
        assert linked == set(range(self.sgm.n_objects))


def random_sgm(rng, n_places=5, n_categories=4, n_nodes=10):
    """Build a random structural graph directly (no similarity logic)."""
    sgm = SemanticGraphMap(n_places=n_places, n_categories=n_categories)
    clusters = make_clusters(n_p=n_places, dim=8, seed=int(rng.integers(1 << 30)))
    for t in range(n_nodes):
        f = unit(rng.standard_normal(32) * 10)  # far apart, always new
        p = clusters.centroids[int(rng.integers(n_places))]
        update_graph(sgm, f, p, clusters, step=t)
    # rewire with random extra edges
    for _ in range(n_nodes):
        i, j = rng.integers(0, n_nodes, size=2)
        if i != j:
            sgm.im_edges.add((min(int(i), int(j)), max(int(i), int(j))))
    for _ in range(int(rng.integers(0, 8))):
        at = int(rng.integers(0, n_nodes))
        register_objects(
            sgm,
            [{"feature": unit(rng.standard_normal(32) * 10), "category": int(rng.integers(n_categories)), "score": 0.5}],
            at,
        )
    return sgm


class TestMatrices:
    def test_single_node_zero_connectivity(self):
        clusters = make_clusters(n_p=4, dim=8)
        sgm = SemanticGraphMap(n_places=4, n_categories=3)
        update_graph(sgm, unit(basis(32, 0)), clusters.centroids[1], clusters)
        assert np.all(connectivity_matrix(sgm) == 0)

    def test_two_linked_nodes_hand_product(self):
        sgm = SemanticGraphMap(n_places=8, n_categories=3)
        cents = np.stack([basis(8, i) for i in range(8)])
        clusters = ClusterModel(k=8, centroids=cents, inertia=0.0)
        update_graph(sgm, unit(basis(32, 0)), basis(8, 3), clusters)
        update_graph(sgm, unit(basis(32, 1)), basis(8, 7), clusters)
        a_c = connectivity_matrix(sgm)
        assert a_c[3, 7] == 1 and a_c[7, 3] == 1
        assert a_c.sum() == 2

    def test_place_object_hand_counts(self):
        sgm = SemanticGraphMap(n_places=8, n_categories=4)
        cents = np.stack([basis(8, i) for i in range(8)])
        clusters = ClusterModel(k=8, centroids=cents, inertia=0.0)
        update_graph(sgm, unit(basis(32, 0)), basis(8, 5), clusters)
        f = unit(basis(32, 9))
        register_objects(sgm, [{"feature": f, "category": 2, "score": 0.5}], 0)
        a_po = place_object_matrix(sgm, category_onehot(sgm))
        expect = np.zeros((8, 4))
        expect[5, 2] = 1
        assert np.array_equal(a_po, expect)
        # second image node in the same cluster links the same object
        update_graph(sgm, unit(basis(32, 1)), basis(8, 5), clusters)
        register_objects(sgm, [{"feature": f, "category": 2, "score": 0.4}], 1)
        a_po = place_object_matrix(sgm, category_onehot(sgm))
        assert a_po[5, 2] == 2

    def test_no_objects_zero_matrix(self):
        clusters = make_clusters(n_p=4, dim=8)
        sgm = SemanticGraphMap(n_places=4, n_categories=3)
        update_graph(sgm, unit(basis(32, 0)), clusters.centroids[0], clusters)
        a_po = place_object_matrix(sgm, category_onehot(sgm))
        assert a_po.shape == (4, 3) and np.all(a_po == 0)

    def test_random_graphs_match_enumeration_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            n_nodes = int(rng.integers(2, 31))
            sgm = random_sgm(rng, n_nodes=n_nodes)
            a_c = connectivity_matrix(sgm)
            # oracle: enumerate image edges grouped by cluster pair
            expect = np.zeros_like(a_c)
            place_of = [n.place_cluster for n in sgm.image_nodes]
            for i, j in sgm.im_edges:
                expect[place_of[i], place_of[j]] += 1
                expect[place_of[j], place_of[i]] += 1
            assert np.array_equal(a_c, expect)
            assert np.array_equal(a_c, a_c.T)
            a_po = place_object_matrix(sgm, category_onehot(sgm))
            expect_po = np.zeros_like(a_po)
            for i, o in sgm.io_edges:
                expect_po[place_of[i], sgm.object_nodes[o].category] += 1
            assert np.array_equal(a_po, expect_po)

    def test_a_oc_shape_mismatch(self):
        clusters = make_clusters(n_p=4, dim=8)
        sgm = SemanticGraphMap(n_places=4, n_categories=3)
        update_graph(sgm, unit(basis(32, 0)), clusters.centroids[0], clusters)
        with pytest.raises(ValueError):
            place_object_matrix(sgm, np.ones((3, 3)))


class TestSerializationAndGuard:
    def test_json_roundtrip(self, tmp_path):
        rng = np.random.default_rng(11)
        sgm = random_sgm(rng, n_nodes=8)
        path = tmp_path / "map.json"
        sgm.save(path, clusters_ref="clusters.json")
        loaded = SemanticGraphMap.load(path)
        assert loaded.n_images == sgm.n_images
        assert loaded.im_edges == sgm.im_edges
        assert loaded.io_edges == sgm.io_edges
        assert np.array_equal(connectivity_matrix(loaded), connectivity_matrix(sgm))

    def test_debug_pose_guard(self):
        clusters = make_clusters(n_p=4, dim=8)
        sgm = SemanticGraphMap(n_places=4, n_categories=3)
        update_graph(sgm, unit(basis(32, 0)), clusters.centroids[0], clusters,
                     debug_pose=(1.0, 2.0))
        assert sgm.image_nodes[0].debug_pose == (1.0, 2.0)
        with guard_debug_pose():
            with pytest.raises(RuntimeError):
                _ = sgm.image_nodes[0].debug_pose
        assert sgm.image_nodes[0].debug_pose == (1.0, 2.0)
