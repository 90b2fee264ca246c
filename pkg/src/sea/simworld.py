"""Procedural grid-world houses with typed rooms, doors, and placed
objects, plus agent kinematics and synthetic panoramic sensing.

Worlds are deterministic in their seed. Rooms hang off a central hallway;
some room types (closet, toilet) are nested behind a parent room and are
only reachable through it, which gives place-to-place reachability real
structure. Feature prototypes for room types and object categories are
global constants so that statistics learned in training scenes transfer
to unseen ones.

Conventions: occupancy cell (row, col) covers y in [row*res, (row+1)*res),
x likewise; headings in degrees counterclockwise from +x; the agent is a
point. Cell codes: 0 free, 1 obstacle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from heapq import heappop, heappush

import numpy as np
from numba import njit

from .features import IMAGE_DIM, OBJECT_DIM, PLACE_DIM, unit

RESOLUTION = 0.1
SENSOR_RANGE_M = 5.0
FOV_DEG = 120.0
N_DEPTH_RAYS = 61
MAX_STEPS = 500
SUCCESS_DIST_M = 1.0

ROOM_TYPES = (
    "living_room",
    "bedroom",
    "kitchen",
    "closet",
    "dining_room",
    "bathroom",
    "toilet",
    "hallway",
)

CATEGORY_NAMES = (
    "sofa",
    "screen",
    "bed",
    "wardrobe",
    "clothes",
    "stove",
    "cooler",
    "big_table",
    "chair",
    "tub",
    "basin",
    "commode",
    "towel",
    "plant",
    "lamp",
)
N_CATEGORIES = len(CATEGORY_NAMES)

# categories used as navigation goals: the concentrated ones, where place
# statistics carry signal; ubiquitous clutter stays detectable as context
GOAL_CATEGORIES = (0, 2, 3, 4, 5, 6, 9, 10, 11, 12)

# room-type affinity for each category; rows sum to 1 over room types
# (living, bedroom, kitchen, closet, dining, bathroom, toilet, hallway)
CATEGORY_ROOM_PRIOR = np.array(
    [
        [1.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00],  # sofa
        [0.85, 0.15, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00],  # screen
        [0.00, 1.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00],  # bed
        [0.00, 0.60, 0.00, 0.40, 0.00, 0.00, 0.00, 0.00],  # wardrobe
        [0.00, 0.25, 0.00, 0.75, 0.00, 0.00, 0.00, 0.00],  # clothes
        [0.00, 0.00, 1.00, 0.00, 0.00, 0.00, 0.00, 0.00],  # stove
        [0.00, 0.00, 0.90, 0.00, 0.10, 0.00, 0.00, 0.00],  # cooler
        [0.15, 0.00, 0.25, 0.00, 0.60, 0.00, 0.00, 0.00],  # big_table
        [0.30, 0.10, 0.20, 0.00, 0.40, 0.00, 0.00, 0.00],  # chair
        [0.00, 0.00, 0.00, 0.00, 0.00, 1.00, 0.00, 0.00],  # tub
        [0.00, 0.00, 0.35, 0.00, 0.00, 0.55, 0.10, 0.00],  # basin
        [0.00, 0.00, 0.00, 0.00, 0.00, 0.30, 0.70, 0.00],  # commode
        [0.00, 0.20, 0.00, 0.20, 0.00, 0.60, 0.00, 0.00],  # towel
        [0.40, 0.10, 0.00, 0.00, 0.20, 0.00, 0.00, 0.30],  # plant
        [0.40, 0.40, 0.00, 0.00, 0.00, 0.00, 0.00, 0.20],  # lamp
    ]
)

_PROTO_SEED = 348201
_PATCH_SIZE_M = 1.2


def room_type_prototype(room_type: int) -> np.ndarray:
    rng = np.random.default_rng([_PROTO_SEED, 1, room_type])
    return unit(rng.standard_normal(PLACE_DIM))


def category_prototype(category: int) -> np.ndarray:
    rng = np.random.default_rng([_PROTO_SEED, 2, category])
    return unit(rng.standard_normal(OBJECT_DIM))


@dataclass
class NoiseModel:
    """Noise configuration. Pose-sensor sigmas scale with an integer level;
    level 0 reads exact odometry."""

    level: int = 0
    pose_trans_sigma: float = 0.01  # m per level unit, per step
    pose_rot_sigma: float = 0.5  # deg per level unit, per step
    actuation_sigma_d: float = 0.0
    actuation_sigma_theta: float = 0.0
    miss_rate: float = 0.05
    score_jitter: float = 0.03
    feature_sigma: float = 0.05
    place_sigma: float = 0.06
    image_sigma: float = 0.015


@dataclass
class WorldObject:
    category: int
    x: float
    y: float
    footprint: tuple[int, int, int, int]  # r0, r1, c0, c1 (exclusive)
    room_id: int
    instance: int
    decoy: bool = False


@dataclass
class Room:
    r0: int
    r1: int
    c0: int
    c1: int
    room_type: int

    def contains(self, r: int, c: int) -> bool:
        return self.r0 <= r < self.r1 and self.c0 <= c < self.c1


@dataclass
class GridWorld:
    seed: int
    occupancy: np.ndarray  # int8, 0 free / 1 obstacle
    rooms: list[Room]
    doors: list[tuple[tuple[int, int], tuple[int, int]]]
    objects: list[WorldObject]
    room_id_map: np.ndarray  # int16 room id per cell, -1 on obstacles

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupancy.shape

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return int(y / RESOLUTION), int(x / RESOLUTION)

    def is_free(self, x: float, y: float) -> bool:
        r, c = self.cell_of(x, y)
        if not (0 <= r < self.shape[0] and 0 <= c < self.shape[1]):
            return False
        return self.occupancy[r, c] == 0

    def room_type_at(self, x: float, y: float) -> int:
        r, c = self.cell_of(x, y)
        rid = int(self.room_id_map[r, c])
        if rid < 0:
            return ROOM_TYPES.index("hallway")
        return self.rooms[rid].room_type

    def categories_present(self) -> list[int]:
        return sorted({o.category for o in self.objects if not o.decoy})

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "seed": self.seed,
            "grid": ["".join("#" if v else "." for v in row) for row in self.occupancy],
            "rooms": [
                {"r0": r.r0, "r1": r.r1, "c0": r.c0, "c1": r.c1, "type": ROOM_TYPES[r.room_type]}
                for r in self.rooms
            ],
            "doors": [[list(a), list(b)] for a, b in self.doors],
            "objects": [
                {
                    "category": o.category,
                    "x": o.x,
                    "y": o.y,
                    "footprint": list(o.footprint),
                    "room_id": o.room_id,
                    "instance": o.instance,
                    "decoy": o.decoy,
                }
                for o in self.objects
            ],
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f)


@dataclass
class GenConfig:
    rooms_min: int = 5
    rooms_max: int = 9
    room_width: tuple[int, int] = (28, 42)  # cells
    room_depth: tuple[int, int] = (28, 38)  # cells
    objects_per_room: tuple[int, int] = (2, 4)
    decoy_prob: float = 0.15


@dataclass
class AgentState:
    x: float
    y: float
    heading_deg: float
    odom_x: float = 0.0
    odom_y: float = 0.0
    odom_heading_deg: float = 0.0
    steps: int = 0
    path_length: float = 0.0
    done: bool = False

    def __post_init__(self):
        self.odom_x = self.x
        self.odom_y = self.y
        self.odom_heading_deg = self.heading_deg


@dataclass
class Observation:
    panoramic_detections: list[dict]
    directional_detections: list[dict]
    depth_scan: list[tuple[float, float, bool]]
    place_raw: np.ndarray
    image_raw: np.ndarray
    pose_delta: tuple[float, float, float]
    d_m: float


@njit(cache=True)
def _ray_advance(occ: np.ndarray, x0: float, y0: float, ang: float,
                 max_dist: float, res: float) -> tuple[float, bool]:
    """Distance along the ray before hitting an obstacle cell, and whether
    a hit occurred within max_dist. Bisection refines the contact point."""
    dx, dy = math.cos(ang), math.sin(ang)
    step = res * 0.25
    n = int(max_dist / step) + 1
    hh, ww = occ.shape
    last_free = 0.0
    hit_at = -1.0
    for k in range(1, n + 1):
        d = min(step * k, max_dist)
        x = x0 + dx * d
        y = y0 + dy * d
        r = int(y / res)
        c = int(x / res)
        if r < 0 or r >= hh or c < 0 or c >= ww or occ[r, c] != 0:
            hit_at = d
            break
        last_free = d
        if d >= max_dist:
            break
    if hit_at < 0.0:
        return max_dist, False
    lo, hi = last_free, hit_at
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        x = x0 + dx * mid
        y = y0 + dy * mid
        r = int(y / res)
        c = int(x / res)
        if r < 0 or r >= hh or c < 0 or c >= ww or occ[r, c] != 0:
            hi = mid
        else:
            lo = mid
    return lo, True


@njit(cache=True)
def _los_clear(occ: np.ndarray, x0: float, y0: float, x1: float, y1: float,
               fr0: int, fr1: int, fc0: int, fc1: int, res: float) -> bool:
    """Line of sight check; cells inside the target footprint do not block."""
    dist = math.hypot(x1 - x0, y1 - y0)
    if dist == 0.0:
        return True
    n = int(dist / (res * 0.5)) + 1
    hh, ww = occ.shape
    for k in range(1, n + 1):
        t = min(k / n, 1.0)
        x = x0 + (x1 - x0) * t
        y = y0 + (y1 - y0) * t
        r = int(y / res)
        c = int(x / res)
        if r < 0 or r >= hh or c < 0 or c >= ww:
            return False
        if occ[r, c] != 0 and not (fr0 <= r < fr1 and fc0 <= c < fc1):
            return False
    return True


def _carve(occ: np.ndarray, r0: int, r1: int, c0: int, c1: int) -> None:
    occ[r0:r1, c0:c1] = 0


def _choose_room_types(rng: np.random.Generator, n_rooms: int) -> list[int]:
    base = ["living_room", "kitchen", "bedroom", "bathroom"]
    extras = ["closet", "toilet", "dining_room", "bedroom", "living_room", "bedroom"]
    order = rng.permutation(len(extras))
    picked = base + [extras[i] for i in order[: n_rooms - 4]]
    return [ROOM_TYPES.index(t) for t in picked]


def generate_house(seed: int, config: GenConfig | None = None) -> GridWorld:
    """Build a deterministic house: hallway spine, primary rooms with doors
    onto it, nested rooms behind their parents, then objects drawn from
    room-type priors. Raises after 100 failed attempts."""
    config = config or GenConfig()
    if not (1 <= config.rooms_min <= config.rooms_max):
        raise ValueError("invalid room count range")
    rng = np.random.default_rng(seed)
    for _ in range(100):
        world = _try_generate(rng, seed, config)
        if world is not None:
            return world
    raise RuntimeError(f"house generation failed for seed {seed}")


_CLOSET_T = ROOM_TYPES.index("closet")
_TOILET_T = ROOM_TYPES.index("toilet")
_BEDROOM_T = ROOM_TYPES.index("bedroom")
_BATHROOM_T = ROOM_TYPES.index("bathroom")
_HALLWAY_T = ROOM_TYPES.index("hallway")

WALL = 2  # wall thickness, cells
DOOR_W = 8  # door opening, cells


def _try_generate(rng: np.random.Generator, seed: int, config: GenConfig) -> GridWorld | None:
    n_rooms = int(rng.integers(config.rooms_min, config.rooms_max + 1))
    types = _choose_room_types(rng, n_rooms)

    # nested types attach behind a parent room of the matching type
    child_of = {_CLOSET_T: _BEDROOM_T, _TOILET_T: _BATHROOM_T}
    children = [t for t in types if t in child_of]
    primaries = [t for t in types if t not in child_of]
    pairs: list[tuple[int, int | None]] = []  # (primary type, child type or None)
    used = [False] * len(children)
    for p in primaries:
        child = None
        for i, ch in enumerate(children):
            if not used[i] and child_of[ch] == p:
                child = ch
                used[i] = True
                break
        pairs.append((p, child))
    # children without a parent slot are dropped (rare: closet with no bedroom)

    top = [pairs[i] for i in range(0, len(pairs), 2)]
    bottom = [pairs[i] for i in range(1, len(pairs), 2)]

    def band_specs(band):
        specs = []
        for p, ch in band:
            parent_w = int(rng.integers(config.room_width[0], config.room_width[1]))
            child_w = int(rng.integers(14, 18)) if ch is not None else 0
            specs.append((p, ch, parent_w, child_w))
        return specs

    def spec_width(spec):
        _, ch, parent_w, child_w = spec
        return parent_w + (WALL + child_w if ch is not None else 0)

    top_specs = band_specs(top)
    bottom_specs = band_specs(bottom)
    top_h = int(rng.integers(config.room_depth[0], config.room_depth[1]))
    bottom_h = int(rng.integers(config.room_depth[0], config.room_depth[1]))
    hall_h = int(rng.integers(10, 14))

    def band_total(specs):
        if not specs:
            return 0
        return sum(spec_width(s) for s in specs) + WALL * (len(specs) - 1)

    width = max(band_total(top_specs), band_total(bottom_specs)) + 2 * WALL
    height = 2 * WALL + bottom_h + WALL + hall_h + WALL + top_h
    occ = np.ones((height, width), dtype=np.int8)

    hall_r0 = WALL + bottom_h + WALL
    hall_r1 = hall_r0 + hall_h
    _carve(occ, hall_r0, hall_r1, WALL, width - WALL)

    rooms: list[Room] = [Room(hall_r0, hall_r1, WALL, width - WALL, _HALLWAY_T)]
    doors: list[tuple[tuple[int, int], tuple[int, int]]] = []

    def place_band(specs, r0, r1, hall_side_r):
        c = WALL
        for ptype, ctype, parent_w, child_w in specs:
            _carve(occ, r0, r1, c, c + parent_w)
            rooms.append(Room(r0, r1, c, c + parent_w, ptype))
            # door to hallway through the wall band adjacent to the hallway
            dc = int(rng.integers(c + 2, c + parent_w - DOOR_W - 1))
            if hall_side_r == "above":
                _carve(occ, r1, r1 + WALL, dc, dc + DOOR_W)
                doors.append(((r1 - 1, dc + DOOR_W // 2), (r1 + WALL, dc + DOOR_W // 2)))
            else:
                _carve(occ, r0 - WALL, r0, dc, dc + DOOR_W)
                doors.append(((r0 - WALL - 1, dc + DOOR_W // 2), (r0, dc + DOOR_W // 2)))
            if ctype is not None:
                cc0 = c + parent_w + WALL
                _carve(occ, r0, r1, cc0, cc0 + child_w)
                rooms.append(Room(r0, r1, cc0, cc0 + child_w, ctype))
                dr = int(rng.integers(r0 + 2, r1 - DOOR_W - 1))
                _carve(occ, dr, dr + DOOR_W, c + parent_w, cc0)
                doors.append(((dr + DOOR_W // 2, c + parent_w - 1), (dr + DOOR_W // 2, cc0)))
            c += spec_width((ptype, ctype, parent_w, child_w)) + WALL

    place_band(bottom_specs, WALL, WALL + bottom_h, "above")
    place_band(top_specs, hall_r1 + WALL, hall_r1 + WALL + top_h, "below")

    # objects
    objects: list[WorldObject] = []
    type_prior = CATEGORY_ROOM_PRIOR  # (cat, room_type)
    for rid, room in enumerate(rooms):
        if room.room_type == _HALLWAY_T:
            k = int(rng.integers(0, 3))
        else:
            k = int(rng.integers(config.objects_per_room[0], config.objects_per_room[1] + 1))
        weights = type_prior[:, room.room_type]
        if weights.sum() == 0:
            continue
        p = weights / weights.sum()
        decoy_used = False
        for _ in range(k):
            decoy = (not decoy_used) and room.room_type != _HALLWAY_T and rng.random() < config.decoy_prob
            if decoy:
                cat = int(rng.integers(0, N_CATEGORIES))
                decoy_used = True
            else:
                cat = int(rng.choice(N_CATEGORIES, p=p))
            placed = False
            for _attempt in range(30):
                rr = int(rng.integers(room.r0 + 3, room.r1 - 4))
                cc = int(rng.integers(room.c0 + 3, room.c1 - 4))
                fp = (rr, rr + 2, cc, cc + 2)
                if np.any(occ[fp[0]:fp[1], fp[2]:fp[3]] != 0):
                    continue
                ok = True
                for other in objects:
                    if abs(other.footprint[0] - rr) < 4 and abs(other.footprint[2] - cc) < 4:
                        ok = False
                        break
                for (da, db) in doors:
                    for (dr_, dc_) in (da, db):
                        if abs(dr_ - rr) < 6 and abs(dc_ - cc) < 6:
                            ok = False
                if not ok:
                    continue
                occ[fp[0]:fp[1], fp[2]:fp[3]] = 1
                x = (cc + 1.0) * RESOLUTION
                y = (rr + 1.0) * RESOLUTION
                objects.append(
                    WorldObject(
                        category=cat, x=x, y=y, footprint=fp, room_id=rid,
                        instance=len(objects), decoy=decoy,
                    )
                )
                placed = True
                break
            if not placed:
                continue

    # connectivity: every free cell reachable from the hallway center
    free = occ == 0
    start = ((hall_r0 + hall_r1) // 2, width // 2)
    if not free[start]:
        return None
    seen = np.zeros_like(free)
    stack = [start]
    seen[start] = True
    while stack:
        r, c = stack.pop()
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < height and 0 <= nc < width and free[nr, nc] and not seen[nr, nc]:
                seen[nr, nc] = True
                stack.append((nr, nc))
    if not np.array_equal(seen, free):
        return None

    room_id_map = np.full((height, width), -1, dtype=np.int16)
    for rid, room in enumerate(rooms):
        block = room_id_map[room.r0:room.r1, room.c0:room.c1]
        block[free[room.r0:room.r1, room.c0:room.c1]] = rid
    # door cells and other free slack take the id of the nearest labeled cell
    frontier = [
        (r, c)
        for r in range(height)
        for c in range(width)
        if room_id_map[r, c] >= 0
    ]
    qi = 0
    while qi < len(frontier):
        r, c = frontier[qi]
        qi += 1
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < height and 0 <= nc < width and free[nr, nc] and room_id_map[nr, nc] < 0:
                room_id_map[nr, nc] = room_id_map[r, c]
                frontier.append((nr, nc))

    return GridWorld(
        seed=seed, occupancy=occ, rooms=rooms, doors=doors, objects=objects,
        room_id_map=room_id_map,
    )


def sample_start(world: GridWorld, rng: np.random.Generator) -> tuple[float, float, float]:
    """Random free pose with 2 cells of clearance on all sides."""
    hh, ww = world.shape
    for _ in range(1000):
        r = int(rng.integers(3, hh - 3))
        c = int(rng.integers(3, ww - 3))
        if np.all(world.occupancy[r - 2:r + 3, c - 2:c + 3] == 0):
            heading = float(rng.integers(0, 12) * 30.0)
            return (c + 0.5) * RESOLUTION, (r + 0.5) * RESOLUTION, wrap_deg(heading)
    raise RuntimeError("no clear start pose found")


def wrap_deg(a: float) -> float:
    a = (a + 180.0) % 360.0 - 180.0
    return 180.0 if a == -180.0 else a


def _instance_feature(world_seed: int, obj: WorldObject) -> np.ndarray:
    rng = np.random.default_rng([_PROTO_SEED, 3, world_seed, obj.instance])
    base = category_prototype(obj.category)
    return unit(base + 0.12 * rng.standard_normal(OBJECT_DIM))


def _patch_feature(world_seed: int, x: float, y: float) -> np.ndarray:
    px = int(x / _PATCH_SIZE_M)
    py = int(y / _PATCH_SIZE_M)
    rng = np.random.default_rng([_PROTO_SEED, 4, world_seed, px, py])
    return unit(rng.standard_normal(IMAGE_DIM))


def detection_score(obj: WorldObject, range_m: float) -> float:
    """Decoys look convincing from afar and fall apart close up."""
    if obj.decoy:
        return 0.85 if range_m > 1.5 else 0.35
    return 0.88


def observe(
    world: GridWorld,
    agent: AgentState,
    noise: NoiseModel,
    rng_perception: np.random.Generator,
    pose_delta: tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> Observation:
    """Synthesize one observation from the true agent state.

    Detections cover 360 degrees within sensor range and line of sight;
    the directional subset is limited to the 120-degree forward view.
    Perception noise comes only from rng_perception, so runs that share a
    perception stream see identical detections regardless of pose noise.
    """
    detections = []
    for obj in world.objects:
        dx, dy = obj.x - agent.x, obj.y - agent.y
        rng_m = math.hypot(dx, dy)
        if rng_m > SENSOR_RANGE_M:
            continue
        fr0, fr1, fc0, fc1 = obj.footprint
        if not _los_clear(world.occupancy, agent.x, agent.y, obj.x, obj.y,
                          fr0, fr1, fc0, fc1, RESOLUTION):
            continue
        if rng_perception.random() < noise.miss_rate:
            continue
        feat = unit(
            _instance_feature(world.seed, obj)
            + noise.feature_sigma * rng_perception.standard_normal(OBJECT_DIM)
        )
        score = detection_score(obj, rng_m) + noise.score_jitter * float(
            rng_perception.standard_normal()
        )
        score = float(np.clip(score, 0.0, 1.0))
        # sensor bearing convention: negative = left of heading
        bearing = wrap_deg(agent.heading_deg - math.degrees(math.atan2(dy, dx)))
        detections.append(
            {
                "category": obj.category,
                "feature": feat,
                "score": score,
                "bearing": bearing,
                "range": rng_m,
                "instance": obj.instance,  # debug/eval only
            }
        )

    directional = [d for d in detections if abs(d["bearing"]) <= FOV_DEG / 2]

    scan = []
    half = FOV_DEG / 2
    for i in range(N_DEPTH_RAYS):
        bearing = -half + i * (FOV_DEG / (N_DEPTH_RAYS - 1))
        ang = math.radians(agent.heading_deg - bearing)
        dist, hit = _ray_advance(world.occupancy, agent.x, agent.y, ang,
                                 SENSOR_RANGE_M, RESOLUTION)
        scan.append((bearing, dist, hit))
    d_m = max(max(d for _, d, _ in scan), 0.4)

    rt = world.room_type_at(agent.x, agent.y)
    place_raw = unit(
        room_type_prototype(rt)
        + noise.place_sigma * rng_perception.standard_normal(PLACE_DIM)
    )
    image_raw = unit(
        _patch_feature(world.seed, agent.x, agent.y)
        + noise.image_sigma * rng_perception.standard_normal(IMAGE_DIM)
    )
    return Observation(
        panoramic_detections=detections,
        directional_detections=directional,
        depth_scan=scan,
        place_raw=place_raw,
        image_raw=image_raw,
        pose_delta=pose_delta,
        d_m=d_m,
    )


def step(
    world: GridWorld,
    agent: AgentState,
    action: str,
    noise: NoiseModel,
    rng_pose: np.random.Generator,
    rng_perception: np.random.Generator,
) -> tuple[Observation, bool]:
    """Execute one action: forward 0.4 m (stopping at contact with an
    obstacle), a 30-degree turn, or stop. Odometry readings add pose-sensor
    noise scaled by the noise level; the true state never sees it."""
    if agent.done:
        raise RuntimeError("step called after episode end")
    if agent.steps >= MAX_STEPS:
        raise RuntimeError("step budget exhausted")

    true_d, true_dtheta = 0.0, 0.0
    act_d = float(rng_pose.standard_normal()) * noise.actuation_sigma_d
    act_t = float(rng_pose.standard_normal()) * noise.actuation_sigma_theta
    if action == "forward":
        intended = max(0.4 + act_d, 0.0)
        ang = math.radians(agent.heading_deg)
        avail, hit = _ray_advance(world.occupancy, agent.x, agent.y, ang,
                                  intended, RESOLUTION)
        true_d = avail if hit else intended
        agent.x += true_d * math.cos(ang)
        agent.y += true_d * math.sin(ang)
        agent.path_length += true_d
    elif action == "turn_left":
        true_dtheta = 30.0 + act_t
        agent.heading_deg = wrap_deg(agent.heading_deg + true_dtheta)
    elif action == "turn_right":
        true_dtheta = -30.0 - act_t
        agent.heading_deg = wrap_deg(agent.heading_deg + true_dtheta)
    elif action == "stop":
        agent.done = True
    else:
        raise ValueError(f"unknown action: {action}")
    agent.steps += 1

    sigma_t = noise.pose_trans_sigma * noise.level
    sigma_r = noise.pose_rot_sigma * noise.level
    noise_xyt = rng_pose.standard_normal(3)
    odo_dx = true_d + sigma_t * float(noise_xyt[0])
    odo_dy = sigma_t * float(noise_xyt[1])
    odo_dtheta = true_dtheta + sigma_r * float(noise_xyt[2])

    h = math.radians(agent.odom_heading_deg)
    agent.odom_x += odo_dx * math.cos(h) - odo_dy * math.sin(h)
    agent.odom_y += odo_dx * math.sin(h) + odo_dy * math.cos(h)
    agent.odom_heading_deg = wrap_deg(agent.odom_heading_deg + odo_dtheta)

    if agent.steps >= MAX_STEPS:
        agent.done = True
    obs = observe(world, agent, noise, rng_perception, (odo_dx, odo_dy, odo_dtheta))
    return obs, agent.done


def geodesic(world: GridWorld, a: tuple[float, float], b: tuple[float, float]) -> float:
    """8-neighbor shortest path length in meters between two free positions,
    infinity when disconnected."""
    ra, ca = world.cell_of(*a)
    rb, cb = world.cell_of(*b)
    hh, ww = world.shape
    occ = world.occupancy
    if occ[ra, ca] != 0 or occ[rb, cb] != 0:
        raise ValueError("geodesic endpoints must be free cells")
    if (ra, ca) == (rb, cb):
        return 0.0
    dist = np.full((hh, ww), np.inf)
    dist[ra, ca] = 0.0
    heap = [(0.0, ra, ca)]
    diag = math.sqrt(2.0)
    while heap:
        d, r, c = heappop(heap)
        if (r, c) == (rb, cb):
            return d * RESOLUTION
        if d > dist[r, c]:
            continue
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                nr, nc = r + dr, c + dc
                if not (0 <= nr < hh and 0 <= nc < ww) or occ[nr, nc] != 0:
                    continue
                nd = d + (diag if dr and dc else 1.0)
                if nd < dist[nr, nc]:
                    dist[nr, nc] = nd
                    heappush(heap, (nd, nr, nc))
    return float("inf")


def shortest_success_path(world: GridWorld, start: tuple[float, float], category: int) -> float:
    """Length in meters of the shortest path from start into the success
    region: any free cell within 1.0 m of a true instance of the category.
    Infinity when unreachable; floored at one cell for a start already
    inside the region."""
    goals = [(o.x, o.y) for o in world.objects if o.category == category and not o.decoy]
    if not goals:
        return float("inf")
    hh, ww = world.shape
    occ = world.occupancy
    target = np.zeros((hh, ww), dtype=bool)
    rad_cells = int(SUCCESS_DIST_M / RESOLUTION) + 1
    for gx, gy in goals:
        gr, gc = world.cell_of(gx, gy)
        for r in range(max(gr - rad_cells, 0), min(gr + rad_cells + 1, hh)):
            for c in range(max(gc - rad_cells, 0), min(gc + rad_cells + 1, ww)):
                if occ[r, c] != 0:
                    continue
                cx, cy = (c + 0.5) * RESOLUTION, (r + 0.5) * RESOLUTION
                if math.hypot(cx - gx, cy - gy) <= SUCCESS_DIST_M:
                    target[r, c] = True
    ra, ca = world.cell_of(*start)
    if occ[ra, ca] != 0:
        raise ValueError("start must be a free cell")
    if target[ra, ca]:
        return RESOLUTION
    dist = np.full((hh, ww), np.inf)
    dist[ra, ca] = 0.0
    heap = [(0.0, ra, ca)]
    diag = math.sqrt(2.0)
    while heap:
        d, r, c = heappop(heap)
        if target[r, c]:
            return max(d * RESOLUTION, RESOLUTION)
        if d > dist[r, c]:
            continue
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                nr, nc = r + dr, c + dc
                if not (0 <= nr < hh and 0 <= nc < ww) or occ[nr, nc] != 0:
                    continue
                nd = d + (diag if dr and dc else 1.0)
                if nd < dist[nr, nc]:
                    dist[nr, nc] = nd
                    heappush(heap, (nd, nr, nc))
    return float("inf")


def nearest_goal_distance(world: GridWorld, x: float, y: float, category: int) -> float:
    """Euclidean distance to the closest true instance of a category."""
    best = float("inf")
    for obj in world.objects:
        if obj.category == category and not obj.decoy:
            best = min(best, math.hypot(obj.x - x, obj.y - y))
    return best


def goal_visible_within(world: GridWorld, x: float, y: float, category: int,
                        radius: float) -> bool:
    """True when a true instance of the category is within radius and in
    line of sight, the success test."""
    for obj in world.objects:
        if obj.category != category or obj.decoy:
            continue
        if math.hypot(obj.x - x, obj.y - y) > radius:
            continue
        fr0, fr1, fc0, fc1 = obj.footprint
        if _los_clear(world.occupancy, x, y, obj.x, obj.y, fr0, fr1, fc0, fc1, RESOLUTION):
            return True
    return False


def synth_features(
    world: GridWorld, agent: AgentState, rng: np.random.Generator,
    noise: NoiseModel | None = None,
) -> dict:
    """Raw place feature and per-visible-object features at the current
    pose, the same construction observe() uses."""
    noise = noise or NoiseModel()
    rt = world.room_type_at(agent.x, agent.y)
    place_raw = unit(
        room_type_prototype(rt) + noise.place_sigma * rng.standard_normal(PLACE_DIM)
    )
    feats = {}
    for obj in world.objects:
        if math.hypot(obj.x - agent.x, obj.y - agent.y) > SENSOR_RANGE_M:
            continue
        feats[obj.instance] = unit(
            _instance_feature(world.seed, obj)
            + noise.feature_sigma * rng.standard_normal(OBJECT_DIM)
        )
    return {"place_raw": place_raw, "object_features": feats}
