"""Episode orchestration, evaluation metrics, and experiment suites.

An episode interleaves semantic-graph construction, atlas queries on a
working copy, target-approach behavior with a checked-object memory, and
local navigation over fast-marching fields. Success means the agent
pressed stop within 1.0 m line-of-sight of a true goal instance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import simworld
from .atlas import Atlas, RelationEvent, build_atlas, update_relation
from .features import ClusterModel, PlaceEmbedder, kmeans, unit
from .global_policy import (
    PolicyConfig,
    SECTOR_CENTER_DEG,
    SECTORS,
    select_subgoal,
    subgoal_candidates,
    target_place,
)
from .local_policy import (
    LocalConfig,
    LocalMap,
    fmm_field,
    integrate_depth,
    local_budget,
    mark_contact,
    next_action,
    straight_line_clear,
)
from .sgm import (
    SemanticGraphMap,
    assign_place,
    category_onehot,
    guard_debug_pose,
    register_objects,
    update_graph,
)
from .simworld import (
    AgentState,
    GenConfig,
    GridWorld,
    NoiseModel,
    Observation,
    generate_house,
    goal_visible_within,
    nearest_goal_distance,
    observe,
    sample_start,
    shortest_success_path,
    step,
)


@dataclass
class EpisodeFlags:
    update_relations: bool = True
    place_stop: bool = True
    place_subgoal: bool = True


@dataclass
class NavConfig:
    detection_threshold: float = 0.75
    checked_sim_threshold: float = 0.8
    arrival_radius: float = 0.95
    field_refresh_every: int = 3
    approach_cooldown: int = 15
    unseen_reject_streak: int = 3
    # place verification accepts any cluster whose goal posterior is at
    # least this fraction of the target cluster's (clusters can split one
    # room concept, so exact identity is too brittle)
    place_match_ratio: float = 0.5
    min_subgoal_dist: float = 1.0
    # only nearby detections become graph memory; distant sightings through
    # doorways would smear place-object statistics across rooms
    register_range: float = 2.5
    approach_standoff: float = 0.4
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    local: LocalConfig = field(default_factory=LocalConfig)


@dataclass
class EpisodeSpec:
    scene_seed: int
    start: tuple[float, float, float]
    goal_category: int
    seed: int

    def to_json(self) -> dict:
        return {
            "scene": self.scene_seed,
            "start": list(self.start),
            "goal_category": self.goal_category,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EpisodeSpec":
        return cls(
            scene_seed=int(obj["scene"]),
            start=tuple(obj["start"]),
            goal_category=int(obj["goal_category"]),
            seed=int(obj["seed"]),
        )


@dataclass
class EpisodeResult:
    success: bool
    path_length: float
    shortest_length: float
    final_dist: float
    steps: int
    stop_reason: str  # agent_stop | timeout | blocked
    goal_category: int = -1
    scene_seed: int = -1


@dataclass
class CheckedObject:
    feature: np.ndarray
    category: int
    best_score: float


def _checked_blocks(checked: list[CheckedObject], det: dict, threshold: float) -> bool:
    f = det["feature"]
    for c in checked:
        if c.category == det["category"] and float(c.feature @ f) > threshold:
            return True
    return False


def _detection_cell(local_map: LocalMap, det: dict, standoff: float = 0.0) -> tuple[int, int]:
    """Detection position in local-map cells, from the tracked pose.
    Sensor bearings run negative = left; a standoff aims short of the
    object so the field goal stays in free space."""
    rng_m = max(det["range"] - standoff, 0.1)
    ang = math.radians(local_map.heading_deg - det["bearing"])
    x = local_map.x + rng_m * math.cos(ang)
    y = local_map.y + rng_m * math.sin(ang)
    res = local_map.resolution
    r = min(max(int(y / res), 0), local_map.size - 1)
    c = min(max(int(x / res), 0), local_map.size - 1)
    return r, c


class _EpisodeLoop:
    """Mutable episode state; run() drives it to completion."""

    def __init__(self, world, atlas_prior, clusters, spec, flags, noise, nav,
                 embedder=None, allow_absent_goal=False, max_steps=simworld.MAX_STEPS):
        self.world = world
        self.clusters = clusters
        self.spec = spec
        self.flags = flags
        self.noise = noise
        self.nav = nav
        self.embedder = embedder
        self.max_steps = max_steps

        present = world.categories_present()
        if spec.goal_category not in present and not allow_absent_goal:
            raise ValueError(f"goal category {spec.goal_category} not in scene")

        self.rng_pose = np.random.default_rng([spec.seed, 1])
        self.rng_perception = np.random.default_rng([spec.seed, 2])
        self.rng_policy = np.random.default_rng([spec.seed, 3])

        self.agent = AgentState(*spec.start)
        self.working = atlas_prior.copy()
        self.sgm = SemanticGraphMap(
            n_places=atlas_prior.n_places, n_categories=atlas_prior.n_categories
        )
        self.checked: list[CheckedObject] = []
        self.goal = spec.goal_category

        self.mode = "explore"
        self.local_map: LocalMap | None = None
        self.goal_cell: tuple[int, int] | None = None
        self.budget_left = 0
        self.fieldmap = None
        self.steps_since_field = 0
        self.approach_cooldown_left = 0
        self.goal_unseen_streak = 0
        self.best_feature = None
        self.best_score = -1.0
        self.blocked_replans = 0
        self.k_star = 0
        self.k_status = "ok"

        self.trace: list[dict] = []
        self.decisions: list[tuple] = []

    def place_feature(self, obs: Observation) -> np.ndarray:
        if self.embedder is not None:
            return self.embedder.embed(obs.place_raw)
        return obs.place_raw

    # ---- graph and relation updates -------------------------------------

    def ingest(self, obs: Observation) -> int:
        prev_node = self.sgm.current_node
        node_id, _was_new = update_graph(
            self.sgm, obs.image_raw, self.place_feature(obs), self.clusters,
            step=self.agent.steps, debug_pose=(self.agent.x, self.agent.y),
        )
        near = [
            d for d in obs.panoramic_detections
            if d["range"] <= self.nav.register_range
        ]
        reg = register_objects(self.sgm, near, node_id)
        if self.flags.update_relations:
            node_place = self.sgm.image_nodes[node_id].place_cluster
            for obj_id in reg["new_links"]:
                cat = self.sgm.object_nodes[obj_id].category
                update_relation(
                    self.working,
                    RelationEvent("observed_connection", node_place, cat, self.agent.steps),
                )
            if prev_node is not None and node_id != prev_node:
                pa = self.sgm.image_nodes[prev_node].place_cluster
                pb = node_place
                if pa != pb:
                    update_relation(
                        self.working,
                        RelationEvent("place_link", pa, pb, self.agent.steps),
                    )
        return node_id

    def fire_not_found(self, obs: Observation, current_place: int) -> None:
        if not self.flags.update_relations:
            return
        goal_seen = any(d["category"] == self.goal for d in obs.panoramic_detections)
        if current_place == self.k_star and not goal_seen:
            update_relation(
                self.working,
                RelationEvent("target_not_found", self.k_star, self.goal, self.agent.steps),
            )

    # ---- subgoal planning ------------------------------------------------

    def _stretch_offset(self, cell: tuple[int, int]) -> tuple[int, int]:
        """Subgoals too close to the agent cause replanning churn; push them
        out along their bearing to a useful leg length."""
        res = self.local_map.resolution
        ahead, left = cell
        dist = math.hypot(ahead, left) * res
        target = max(self.nav.min_subgoal_dist, 0.6 * self.local_map.d_m)
        if dist >= target or dist == 0.0:
            return cell
        scale = target / dist
        return int(round(ahead * scale)), int(round(left * scale))

    def replan(self, obs: Observation) -> None:
        self.local_map = LocalMap(d_m=obs.d_m, config=self.nav.local)
        integrate_depth(self.local_map, obs.depth_scan, (0.0, 0.0, 0.0))
        self.budget_left = local_budget(obs.d_m)
        self.fieldmap = None

        if not self.flags.place_subgoal:
            sector = SECTORS[int(self.rng_policy.integers(len(SECTORS)))]
            ang = math.radians(SECTOR_CENTER_DEG[sector])
            ahead = int(round(0.8 * obs.d_m * math.cos(ang) / self.local_map.resolution))
            left = int(round(-0.8 * obs.d_m * math.sin(ang) / self.local_map.resolution))
            self.goal_cell = self.local_map.cell_from_offset(*self._stretch_offset((ahead, left)))
            self.decisions.append(
                (self.agent.steps, self.k_star, self.k_status, "random", sector, None, None)
            )
            return

        cands = subgoal_candidates(
            obs.directional_detections, self.working, self.nav.policy,
            resolution=self.local_map.resolution, default_range=obs.d_m,
        )
        agent_cell = self.local_map.agent_cell
        for c in cands:
            cell = self.local_map.cell_from_offset(*c.world_cell)
            c.reachable = straight_line_clear(self.local_map.grid, agent_cell, cell)
        pick, path = select_subgoal(cands, self.working.gamma, self.k_star, self.rng_policy)
        self.goal_cell = self.local_map.cell_from_offset(*self._stretch_offset(pick.world_cell))
        self.decisions.append(
            (
                self.agent.steps,
                self.k_star,
                self.k_status,
                "semantic",
                pick.sector,
                pick.place,
                tuple(path.clusters) if path is not None else None,
            )
        )

    def begin_approach(self, obs: Observation, det: dict) -> None:
        self.mode = "approach"
        horizon = max(obs.d_m, det["range"])
        self.local_map = LocalMap(d_m=horizon, config=self.nav.local)
        integrate_depth(self.local_map, obs.depth_scan, (0.0, 0.0, 0.0))
        self.goal_cell = _detection_cell(self.local_map, det, self.nav.approach_standoff)
        self.budget_left = local_budget(horizon)
        self.fieldmap = None
        self.best_feature = det["feature"]
        self.best_score = det["score"]
        self.goal_unseen_streak = 0

    def place_matches(self, current_place: int) -> bool:
        """Stop verification: the current cluster must be the target place
        or carry a comparable share of the goal's place posterior."""
        if current_place == self.k_star:
            return True
        from .atlas import p_place_given_object

        dist = p_place_given_object(self.working, self.goal)
        if dist is None:
            return True  # no prior to verify against
        return dist[current_place] >= self.nav.place_match_ratio * dist[self.k_star]

    def reject_target(self) -> None:
        if self.best_feature is not None:
            self.checked.append(
                CheckedObject(self.best_feature, self.goal, self.best_score)
            )
        self.mode = "explore"
        self.goal_cell = None
        self.approach_cooldown_left = self.nav.approach_cooldown

    # ---- main loop --------------------------------------------------------

    def run(self) -> tuple[EpisodeResult, list[dict]]:
        obs = observe(self.world, self.agent, self.noise, self.rng_perception)
        stop_reason = "timeout"

        while not self.agent.done:
            with guard_debug_pose():
                node_id = self.ingest(obs)
                current_place = assign_place(self.place_feature(obs), self.clusters)
                self.k_star, self.k_status = target_place(
                    self.working, self.goal, self.rng_policy
                )
                self.fire_not_found(obs, current_place)
                action = self.decide(obs, current_place)

            if action == "stop":
                stop_reason = "agent_stop"
                step(self.world, self.agent, "stop", self.noise,
                     self.rng_pose, self.rng_perception)
                break
            if action is None:
                stop_reason = "blocked"
                break

            obs, done = step(self.world, self.agent, action, self.noise,
                             self.rng_pose, self.rng_perception)
            if self.local_map is not None:
                integrate_depth(self.local_map, obs.depth_scan, obs.pose_delta)
                self.budget_left -= 1
                self.steps_since_field += 1
                if action == "forward" and abs(obs.pose_delta[0]) < 0.05:
                    # bumped something: record the contact and refresh now
                    mark_contact(self.local_map)
                    self.steps_since_field = self.nav.field_refresh_every
                if not self.local_map.in_bounds_pose():
                    self.goal_cell = None
            if self.approach_cooldown_left > 0:
                self.approach_cooldown_left -= 1

            self.trace.append(
                {
                    "step": self.agent.steps,
                    "action": action,
                    "mode": self.mode,
                    "place": int(current_place),
                    "k_star": int(self.k_star),
                    "x": round(self.agent.x, 4),
                    "y": round(self.agent.y, 4),
                    "odom_x": round(self.agent.odom_x, 4),
                    "odom_y": round(self.agent.odom_y, 4),
                    "detections": len(obs.panoramic_detections),
                }
            )
            if self.agent.steps >= self.max_steps:
                break

        final_dist = nearest_goal_distance(self.world, self.agent.x, self.agent.y, self.goal)
        success = stop_reason == "agent_stop" and goal_visible_within(
            self.world, self.agent.x, self.agent.y, self.goal, simworld.SUCCESS_DIST_M
        )
        l_i = shortest_success_path(self.world, self.spec.start[:2], self.goal)
        result = EpisodeResult(
            success=success,
            path_length=self.agent.path_length,
            shortest_length=l_i,
            final_dist=final_dist,
            steps=self.agent.steps,
            stop_reason=stop_reason,
            goal_category=self.goal,
            scene_seed=self.spec.scene_seed,
        )
        return result, self.trace

    # ---- per-step decision -------------------------------------------------

    def decide(self, obs: Observation, current_place: int) -> str | None:
        """One world action, 'stop' to finish, or None when irrecoverably
        stuck."""
        goal_dets = [
            d for d in obs.panoramic_detections if d["category"] == self.goal
        ]
        trigger = None
        if self.mode == "explore" and self.approach_cooldown_left == 0:
            viable = [
                d for d in goal_dets
                if d["score"] >= self.nav.detection_threshold
                and not _checked_blocks(self.checked, d, self.nav.checked_sim_threshold)
            ]
            if viable:
                trigger = max(viable, key=lambda d: d["score"])

        if trigger is not None:
            self.begin_approach(obs, trigger)

        if self.mode == "approach":
            return self.approach_action(obs, goal_dets, current_place)
        return self.explore_action(obs)

    def approach_action(self, obs: Observation, goal_dets: list[dict],
                        current_place: int) -> str | None:
        # track the object being approached by continuity with the predicted
        # cell; score-based re-selection would let a different instance steal
        # the approach and corrupt the checked-object record
        target = None
        if goal_dets and self.goal_cell is not None:
            def cell_gap(d):
                cell = _detection_cell(self.local_map, d)
                return math.hypot(cell[0] - self.goal_cell[0], cell[1] - self.goal_cell[1])

            nearest = min(goal_dets, key=cell_gap)
            if cell_gap(nearest) <= 12:
                target = nearest
        if target is not None:
            self.goal_unseen_streak = 0
            if target["score"] > self.best_score:
                self.best_score = target["score"]
                self.best_feature = target["feature"]
            self.goal_cell = _detection_cell(self.local_map, target,
                                             self.nav.approach_standoff)

            if target["range"] <= self.nav.arrival_radius:
                if target["score"] < self.nav.detection_threshold:
                    self.reject_target()
                    return "turn_left"
                if self.flags.place_stop and not self.place_matches(current_place):
                    # verified object, wrong place: walk away and keep looking
                    self.mode = "explore"
                    self.goal_cell = None
                    self.approach_cooldown_left = self.nav.approach_cooldown
                    return "turn_left"
                return "stop"
        else:
            self.goal_unseen_streak += 1

        arrived_blind = (
            self.fieldmap is not None
            and np.isfinite(self.fieldmap[self.local_map.agent_cell])
            and self.fieldmap[self.local_map.agent_cell] < 0.3
        )
        if self.goal_unseen_streak >= self.nav.unseen_reject_streak and (
            arrived_blind or self.goal_unseen_streak >= 3 * self.nav.unseen_reject_streak
        ):
            self.reject_target()
            return "turn_left"
        if self.budget_left <= 0:
            self.mode = "explore"
            self.goal_cell = None
            return "turn_left"
        return self.follow_field()

    def explore_action(self, obs: Observation) -> str | None:
        if self.goal_cell is None or self.budget_left <= 0:
            self.replan(obs)
        return self.follow_field()

    def follow_field(self) -> str | None:
        if self.steps_since_field >= self.nav.field_refresh_every or self.fieldmap is None:
            self.fieldmap = fmm_field(self.local_map, self.goal_cell)
            self.steps_since_field = 0
        action, status = next_action(
            self.fieldmap, self.local_map.agent_cell, self.local_map.heading_deg
        )
        if action == "stop_local":
            self.goal_cell = None
            if status == "blocked":
                self.blocked_replans += 1
                if self.blocked_replans >= 3:
                    return None
            else:
                self.blocked_replans = 0
            if self.mode == "approach":
                self.mode = "explore"
            return "turn_left"
        self.blocked_replans = 0
        return action


def run_episode(
    world: GridWorld,
    atlas_prior: Atlas,
    clusters: ClusterModel,
    spec: EpisodeSpec,
    flags: EpisodeFlags | None = None,
    noise: NoiseModel | None = None,
    nav: NavConfig | None = None,
    embedder: PlaceEmbedder | None = None,
    allow_absent_goal: bool = False,
    max_steps: int = simworld.MAX_STEPS,
) -> tuple[EpisodeResult, list[dict]]:
    """Run one object-goal episode and return its result and step trace."""
    loop = _EpisodeLoop(
        world, atlas_prior, clusters, spec,
        flags or EpisodeFlags(), noise or NoiseModel(), nav or NavConfig(),
        embedder=embedder, allow_absent_goal=allow_absent_goal, max_steps=max_steps,
    )
    return loop.run()


def compute_metrics(results: list[EpisodeResult]) -> dict:
    """Success rate, success weighted by path length, distance to success."""
    if not results:
        raise ValueError("no episode results")
    m = len(results)
    success = sum(1.0 for r in results if r.success) / m
    spl = sum(
        (r.shortest_length / max(r.path_length, r.shortest_length)) if r.success else 0.0
        for r in results
    ) / m
    dts = sum(max(0.0, r.final_dist - simworld.SUCCESS_DIST_M) for r in results) / m
    return {"success_rate": success, "spl": spl, "dts": dts}


# ---- exploration, logging, atlas construction ------------------------------


def explore_scene(
    world: GridWorld, steps: int, seed: int, noise: NoiseModel | None = None
) -> list[dict]:
    """Bounce-walk observation log: one JSONL-ready record per step.

    The walker holds a heading until it hits something, then turns away in
    a short burst; occasional spontaneous turns keep it from looping. This
    covers rooms and crosses doorways far faster than a diffusive walk.
    """
    noise = noise or NoiseModel()
    rng = np.random.default_rng([seed, 7])
    x, y, h = sample_start(world, rng)
    agent = AgentState(x, y, h)
    rng_pose = np.random.default_rng([seed, 8])
    rng_perc = np.random.default_rng([seed, 9])
    obs = observe(world, agent, noise, rng_perc)
    rows = []
    turns_left = 0
    turn_dir = "turn_left"
    for t in range(steps):
        rows.append(
            {
                "step": t,
                "scene": world.seed,
                "image_raw": [round(float(v), 5) for v in obs.image_raw],
                "place_raw": [round(float(v), 5) for v in obs.place_raw],
                "pose": [round(agent.x, 4), round(agent.y, 4)],
                "detections": [
                    {
                        "feature": [round(float(v), 5) for v in d["feature"]],
                        "category": d["category"],
                        "score": round(d["score"], 4),
                        "range": round(d["range"], 3),
                    }
                    for d in obs.panoramic_detections
                ],
            }
        )
        if turns_left > 0:
            action = turn_dir
            turns_left -= 1
        elif rng.random() < 0.06:
            turns_left = int(rng.integers(1, 3))
            turn_dir = "turn_left" if rng.random() < 0.5 else "turn_right"
            action = turn_dir
        else:
            action = "forward"
        x0, y0 = agent.x, agent.y
        obs, done = step(world, agent, action, noise, rng_pose, rng_perc)
        if action == "forward" and math.hypot(agent.x - x0, agent.y - y0) < 0.02:
            turns_left = int(rng.integers(2, 6))
            turn_dir = "turn_left" if rng.random() < 0.5 else "turn_right"
        if done:
            break
    return rows


def replay_into_sgm(sgm: SemanticGraphMap, rows: list[dict], clusters: ClusterModel,
                    embedder: PlaceEmbedder | None = None,
                    register_range: float = 2.5) -> None:
    """Feed one episode log into a scene graph. The node chain restarts so
    episodes never get stitched together with a false edge; only nearby
    detections register, matching the navigation-time ingest rule."""
    sgm.current_node = None
    for t, row in enumerate(rows):
        place_raw = np.asarray(row["place_raw"], dtype=np.float64)
        place_feat = embedder.embed(place_raw) if embedder is not None else unit(place_raw)
        pose = tuple(row.get("pose", ())) or None
        node_id, _ = update_graph(
            sgm, np.asarray(row["image_raw"], dtype=np.float64), place_feat,
            clusters, step=t, debug_pose=pose,
        )
        dets = [
            {
                "feature": np.asarray(d["feature"], dtype=np.float64),
                "category": d["category"],
                "score": d["score"],
            }
            for d in row["detections"]
            if d.get("range", 0.0) <= register_range
        ]
        register_objects(sgm, dets, node_id)


def build_scene_maps(
    logs_by_scene: dict[int, list[list[dict]]],
    clusters: ClusterModel,
    n_categories: int = simworld.N_CATEGORIES,
    embedder: PlaceEmbedder | None = None,
) -> list[SemanticGraphMap]:
    """One semantic graph map per scene, accumulated over that scene's
    episode logs."""
    maps = []
    for scene_seed in sorted(logs_by_scene):
        sgm = SemanticGraphMap(n_places=clusters.k, n_categories=n_categories)
        for rows in logs_by_scene[scene_seed]:
            replay_into_sgm(sgm, rows, clusters, embedder)
        maps.append(sgm)
    return maps


def cluster_from_logs(
    logs_by_scene: dict[int, list[list[dict]]],
    n_clusters: int,
    seed: int,
    max_samples: int = 4000,
) -> ClusterModel:
    feats = []
    for scene_seed in sorted(logs_by_scene):
        for rows in logs_by_scene[scene_seed]:
            for row in rows:
                feats.append(np.asarray(row["place_raw"], dtype=np.float64))
    feats = np.stack(feats)
    if feats.shape[0] > max_samples:
        idx = np.random.default_rng(seed).choice(feats.shape[0], max_samples, replace=False)
        feats = feats[idx]
    return kmeans(feats, n_clusters, seed=seed)


def atlas_from_logs(
    logs_by_scene: dict[int, list[list[dict]]],
    clusters: ClusterModel,
    n_categories: int = simworld.N_CATEGORIES,
) -> Atlas:
    maps = build_scene_maps(logs_by_scene, clusters, n_categories)
    a_ocs = [category_onehot(m) for m in maps]
    return build_atlas(maps, a_ocs)


# ---- pose-independence decision replay -------------------------------------


def decision_trace(
    world: GridWorld,
    atlas_prior: Atlas,
    clusters: ClusterModel,
    goal: int,
    start: tuple[float, float, float],
    actions: list[str],
    noise_level: int,
    seed: int,
    every: int = 5,
    nav: NavConfig | None = None,
) -> list[tuple]:
    """Global-policy decisions along a scripted trajectory.

    The script fixes the true trajectory (actuation noise stays zero), so
    runs differing only in pose-sensor noise level see identical
    observations and must produce identical decisions; nothing in this
    pipeline may read a pose.
    """
    nav = nav or NavConfig()
    noise = NoiseModel(level=noise_level)
    rng_pose = np.random.default_rng([seed, 1])
    rng_perc = np.random.default_rng([seed, 2])
    rng_policy = np.random.default_rng([seed, 3])
    agent = AgentState(*start)
    working = atlas_prior.copy()
    sgm = SemanticGraphMap(n_places=atlas_prior.n_places, n_categories=atlas_prior.n_categories)
    out = []
    obs = observe(world, agent, noise, rng_perc)
    for t, action in enumerate(actions):
        with guard_debug_pose():
            node_id, _ = update_graph(sgm, obs.image_raw, unit(obs.place_raw), clusters, step=t)
            near = [d for d in obs.panoramic_detections if d["range"] <= nav.register_range]
            reg = register_objects(sgm, near, node_id)
            node_place = sgm.image_nodes[node_id].place_cluster
            for obj_id in reg["new_links"]:
                cat = sgm.object_nodes[obj_id].category
                update_relation(working, RelationEvent("observed_connection", node_place, cat, t))
            k_star, status = target_place(working, goal, rng_policy)
            current_place = assign_place(unit(obs.place_raw), clusters)
            if current_place == k_star and not any(
                d["category"] == goal for d in obs.panoramic_detections
            ):
                update_relation(working, RelationEvent("target_not_found", k_star, goal, t))
            if t % every == 0:
                cands = subgoal_candidates(
                    obs.directional_detections, working, nav.policy, default_range=obs.d_m
                )
                pick, path = select_subgoal(cands, working.gamma, k_star, rng_policy)
                out.append(
                    (
                        t,
                        int(k_star),
                        status,
                        pick.sector,
                        pick.place,
                        tuple(path.clusters) if path is not None else None,
                    )
                )
        obs, done = step(world, agent, action, noise, rng_pose, rng_perc)
        if done:
            break
    return out


# ---- suite ------------------------------------------------------------------


FLAG_MATRIX = {
    "full": EpisodeFlags(update_relations=True, place_stop=True, place_subgoal=True),
    "no_update": EpisodeFlags(update_relations=False, place_stop=True, place_subgoal=True),
    "random_subgoal": EpisodeFlags(update_relations=True, place_stop=True, place_subgoal=False),
    "no_place_stop": EpisodeFlags(update_relations=True, place_stop=False, place_subgoal=True),
}


@dataclass
class SuiteConfig:
    train_seeds: tuple[int, ...] = tuple(range(100, 120))
    test_seeds: tuple[int, ...] = tuple(range(500, 520))
    episodes_per_scene: int = 10
    explore_episodes: int = 10
    explore_steps: int = 180
    n_place_clusters: int = 10
    noise_levels: tuple[int, ...] = (0, 1, 4, 10)
    configs: tuple[str, ...] = ("full", "no_update", "random_subgoal", "no_place_stop")
    seed: int = 0
    bootstrap_resamples: int = 1000
    gen: GenConfig = field(default_factory=GenConfig)

    @classmethod
    def from_json(cls, obj: dict) -> "SuiteConfig":
        kwargs = {}
        for key in ("train_seeds", "test_seeds", "noise_levels", "configs"):
            if key in obj:
                kwargs[key] = tuple(obj[key])
        for key in ("episodes_per_scene", "explore_episodes", "explore_steps",
                    "n_place_clusters", "seed", "bootstrap_resamples"):
            if key in obj:
                kwargs[key] = int(obj[key])
        if "gen" in obj:
            g = obj["gen"]
            kwargs["gen"] = GenConfig(
                rooms_min=int(g.get("rooms_min", 4)),
                rooms_max=int(g.get("rooms_max", 8)),
                decoy_prob=float(g.get("decoy_prob", 0.15)),
            )
        return cls(**kwargs)


def build_prior(config: SuiteConfig) -> tuple[ClusterModel, Atlas]:
    """Training phase: random walks over the training scenes, place
    clustering, then atlas aggregation."""
    logs: dict[int, list[list[dict]]] = {}
    for scene_seed in config.train_seeds:
        world = generate_house(scene_seed, config.gen)
        logs[scene_seed] = [
            explore_scene(world, config.explore_steps, seed=scene_seed * 1000 + e)
            for e in range(config.explore_episodes)
        ]
    clusters = cluster_from_logs(logs, config.n_place_clusters, seed=config.seed)
    atlas = atlas_from_logs(logs, clusters)
    return clusters, atlas


def make_episode_specs(config: SuiteConfig) -> list[EpisodeSpec]:
    specs = []
    for scene_seed in config.test_seeds:
        world = generate_house(scene_seed, config.gen)
        rng = np.random.default_rng([config.seed, scene_seed])
        present = [c for c in world.categories_present()
                   if c in simworld.GOAL_CATEGORIES]
        for e in range(config.episodes_per_scene):
            for _ in range(50):
                x, y, h = sample_start(world, rng)
                viable = [
                    c for c in present
                    if simworld.nearest_goal_distance(world, x, y, c) >= 1.5
                ]
                if viable:
                    goal = int(viable[int(rng.integers(len(viable)))])
                    specs.append(
                        EpisodeSpec(
                            scene_seed=scene_seed,
                            start=(x, y, h),
                            goal_category=goal,
                            seed=int(rng.integers(1 << 31)),
                        )
                    )
                    break
    return specs


def bootstrap_diff_ci(
    a: list[bool], b: list[bool], resamples: int, seed: int
) -> tuple[float, float, float]:
    """Paired bootstrap CI for mean(a) - mean(b) over shared episodes."""
    rng = np.random.default_rng(seed)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diffs = a - b
    n = len(diffs)
    means = np.empty(resamples)
    for i in range(resamples):
        idx = rng.integers(0, n, n)
        means[i] = diffs[idx].mean()
    return float(diffs.mean()), float(np.percentile(means, 2.5)), float(np.percentile(means, 97.5))


def run_suite(config: SuiteConfig, out_dir=None, progress=None) -> dict:
    """Train a prior, run the ablation flag matrix and the noise sweep, and
    assemble the report. Returns the report dict; when out_dir is given,
    writes results.csv, report.json, and figures."""
    clusters, atlas = build_prior(config)
    specs = make_episode_specs(config)

    rows: list[dict] = []
    success_by_config: dict[str, list[bool]] = {}
    results_by_config: dict[str, list[EpisodeResult]] = {}
    traces_sample: list[tuple[str, EpisodeSpec, list[dict]]] = []

    def run_arm(name: str, flags: EpisodeFlags, noise_level: int) -> list[EpisodeResult]:
        results = []
        for i, spec in enumerate(specs):
            world = generate_house(spec.scene_seed, config.gen)
            res, trace = run_episode(
                world, atlas, clusters, spec, flags=flags,
                noise=NoiseModel(level=noise_level),
            )
            results.append(res)
            rows.append(
                {
                    "config": name,
                    "noise_level": noise_level,
                    "scene_seed": spec.scene_seed,
                    "episode": i,
                    "goal_category": spec.goal_category,
                    "success": int(res.success),
                    "path_length": f"{res.path_length:.4f}",
                    "shortest_length": f"{res.shortest_length:.4f}",
                    "final_dist": f"{res.final_dist:.4f}",
                    "steps": res.steps,
                    "stop_reason": res.stop_reason,
                }
            )
            if name == "full" and noise_level == 0 and len(traces_sample) < 6:
                traces_sample.append((name, spec, trace))
            if progress is not None and (i + 1) % 50 == 0:
                progress(f"{name} level {noise_level}: {i + 1}/{len(specs)}")
        return results

    for name in config.configs:
        results = run_arm(name, FLAG_MATRIX[name], noise_level=0)
        results_by_config[name] = results
        success_by_config[name] = [r.success for r in results]

    noise_success = {}
    for level in config.noise_levels:
        if level == 0 and "full" in results_by_config:
            noise_success[0] = success_by_config["full"]
            continue
        results = run_arm("full", FLAG_MATRIX["full"], noise_level=level)
        noise_success[level] = [r.success for r in results]

    report = {
        "n_episodes": len(specs),
        "n_scenes": len(config.test_seeds),
        "metrics": {
            name: compute_metrics(results_by_config[name]) for name in config.configs
        },
        "noise_sweep": {
            str(level): float(np.mean(vals)) for level, vals in noise_success.items()
        },
        "orderings": {},
    }
    for other in ("no_update", "random_subgoal"):
        if other in success_by_config:
            mean, lo, hi = bootstrap_diff_ci(
                success_by_config["full"], success_by_config[other],
                config.bootstrap_resamples, seed=config.seed,
            )
            report["orderings"][f"full_minus_{other}"] = {
                "mean": mean, "ci95_low": lo, "ci95_high": hi,
            }

    if out_dir is not None:
        import csv
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        fieldnames = [
            "config", "noise_level", "scene_seed", "episode", "goal_category",
            "success", "path_length", "shortest_length", "final_dist", "steps",
            "stop_reason",
        ]
        with open(out / "results.csv", "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames)
            writer.writeheader()
            writer.writerows(rows)
        with open(out / "report.json", "w") as f:
            json.dump(report, f, indent=2, sort_keys=True)
        from . import plots

        plots.atlas_heatmaps(atlas, out)
        plots.noise_curve(
            {int(k): v for k, v in report["noise_sweep"].items()}, out / "noise_sweep.svg"
        )
        plots.ablation_bars(report["metrics"], out / "ablations.svg")
        if traces_sample:
            world = generate_house(traces_sample[0][1].scene_seed, config.gen)
            plots.trajectories(
                world, [(sp, tr) for _, sp, tr in traces_sample
                        if sp.scene_seed == traces_sample[0][1].scene_seed],
                out / "trajectories.svg",
            )
    return report
