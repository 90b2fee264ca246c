"""Local navigation: an agent-centric occupancy map built from depth scans
and dead reckoning, an eikonal distance field solved by fast marching, and
deterministic action selection toward a goal cell.

Grid convention: cell (row, col) maps to local coordinates y = row * res,
x = col * res. Headings and bearings are degrees, counterclockwise,
0 along +x. Cell codes: 0 unknown, 1 free, 2 obstacle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

UNKNOWN, FREE, OBSTACLE = 0, 1, 2

STEP_FORWARD_M = 0.4
TURN_DEG = 30.0
ALIGN_TOL_DEG = 15.0
STOP_RADIUS_M = 0.2
GOAL_SNAP_CELLS = 5


@dataclass
class LocalConfig:
    resolution: float = 0.1
    unknown_traversable: bool = True


class LocalMap:
    """Occupancy window sized to the current depth horizon.

    The frame is fixed at creation with the agent at the center cell,
    heading along +x. Subsequent odometry deltas move the tracked pose
    inside this frame; scans are carved relative to the tracked pose.
    """

    def __init__(self, d_m: float, config: LocalConfig | None = None):
        self.config = config or LocalConfig()
        if self.config.resolution <= 0:
            raise ValueError("resolution must be positive")
        self.d_m = float(d_m)
        res = self.config.resolution
        half = int(round(min(max(d_m, 1.0), 5.0) / res))
        self.size = 2 * half + 1
        self.grid = np.zeros((self.size, self.size), dtype=np.int8)
        center = (half + 0.5) * res
        self.x = center
        self.y = center
        self.heading_deg = 0.0
        self.grid[self.cell_of(self.x, self.y)] = FREE

    @property
    def resolution(self) -> float:
        return self.config.resolution

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        res = self.resolution
        r = min(max(int(y / res), 0), self.size - 1)
        c = min(max(int(x / res), 0), self.size - 1)
        return r, c

    @property
    def agent_cell(self) -> tuple[int, int]:
        return self.cell_of(self.x, self.y)

    def in_bounds_pose(self) -> bool:
        lim = self.size * self.resolution
        return 0.0 <= self.x < lim and 0.0 <= self.y < lim

    def cell_from_offset(self, ahead_cells: int, left_cells: int) -> tuple[int, int]:
        """Map an (ahead, left) offset in the creation frame to a grid cell,
        clamped to bounds."""
        r0, c0 = self.size // 2, self.size // 2
        r = min(max(r0 + left_cells, 0), self.size - 1)
        c = min(max(c0 + ahead_cells, 0), self.size - 1)
        return r, c

    def apply_odometry(self, dx: float, dy: float, dtheta_deg: float) -> None:
        """Advance the tracked pose by one odometry increment given in the
        pre-step body frame (dx forward, dy left)."""
        h = math.radians(self.heading_deg)
        self.x += dx * math.cos(h) - dy * math.sin(h)
        self.y += dx * math.sin(h) + dy * math.cos(h)
        self.heading_deg = self.heading_deg + dtheta_deg


def integrate_depth(
    local_map: LocalMap,
    depth_scan: list[tuple[float, float, bool]],
    pose_delta: tuple[float, float, float],
) -> LocalMap:
    """Carve one depth scan into the map after applying the odometry delta.

    Scan entries are (bearing_deg relative to heading, range_m, hit). Cells
    crossed by a ray become free; the cell holding a hit endpoint becomes
    an obstacle. Hits override carving within the scan; the agent's own
    cell is never an obstacle.
    """
    local_map.apply_odometry(*pose_delta)
    res = local_map.resolution
    lim = local_map.size * res
    free_cells: list[tuple[int, int]] = []
    hit_cells: list[tuple[int, int]] = []
    for bearing_deg, rng, hit in depth_scan:
        # sensor bearings run negative = left; map angles run CCW
        ang = math.radians(local_map.heading_deg - bearing_deg)
        dx, dy = math.cos(ang), math.sin(ang)
        if rng > 0.0:
            n_steps = max(int(rng / (res * 0.5)), 1)
            step = rng / n_steps
            for k in range(1, n_steps + 1):
                px = local_map.x + dx * step * k
                py = local_map.y + dy * step * k
                if not (0 <= px < lim and 0 <= py < lim):
                    break
                free_cells.append(local_map.cell_of(px, py))
        if hit:
            # the range reading measures free space; mark the first cell
            # past the contact that is not the agent's own (oblique rays at
            # contact would otherwise fold back into it)
            agent_cell = local_map.agent_cell
            d_hit = rng + 0.25 * res
            while d_hit <= rng + 2.0 * res:
                px = local_map.x + dx * d_hit
                py = local_map.y + dy * d_hit
                if not (0 <= px < lim and 0 <= py < lim):
                    break
                cell = local_map.cell_of(px, py)
                if cell != agent_cell:
                    hit_cells.append(cell)
                    break
                d_hit += 0.25 * res
    for cell in free_cells:
        local_map.grid[cell] = FREE
    for cell in hit_cells:
        local_map.grid[cell] = OBSTACLE
    local_map.grid[local_map.agent_cell] = FREE
    return local_map


@njit(cache=True)
def _solve_pair(a: float, b: float, h: float) -> float:
    if a > b:
        a, b = b, a
    if a == np.inf:
        return np.inf
    if b - a >= h:
        return a + h
    return 0.5 * (a + b + math.sqrt(2.0 * h * h - (b - a) * (b - a)))


@njit(cache=True)
def _value_at(t: np.ndarray, trav: np.ndarray, r: int, c: int, dr: int, dc: int) -> float:
    """Neighbor value for a stencil arm, infinity when out of bounds or when
    a knight-move arm would cut through blocked cells."""
    hh, ww = t.shape
    nr, nc = r + dr, c + dc
    if nr < 0 or nr >= hh or nc < 0 or nc >= ww:
        return np.inf
    if abs(dr) + abs(dc) == 3:  # knight arm: guard the two crossed cells
        sr = 1 if dr > 0 else -1
        sc = 1 if dc > 0 else -1
        if abs(dc) == 2:
            if not trav[r, c + sc] or not trav[r + sr, c + sc]:
                return np.inf
        else:
            if not trav[r + sr, c] or not trav[r + sr, c + sc]:
                return np.inf
    return t[nr, nc]


@njit(cache=True)
def _update_cell(t: np.ndarray, trav: np.ndarray, r: int, c: int, h: float) -> float:
    inf = np.inf
    # axis stencil
    a = min(_value_at(t, trav, r, c, 0, -1), _value_at(t, trav, r, c, 0, 1))
    b = min(_value_at(t, trav, r, c, -1, 0), _value_at(t, trav, r, c, 1, 0))
    cand = _solve_pair(a, b, h)
    # diagonal stencil, spacing sqrt(2) h
    a = min(_value_at(t, trav, r, c, -1, -1), _value_at(t, trav, r, c, 1, 1))
    b = min(_value_at(t, trav, r, c, -1, 1), _value_at(t, trav, r, c, 1, -1))
    v = _solve_pair(a, b, h * math.sqrt(2.0))
    if v < cand:
        cand = v
    # knight stencils, spacing sqrt(5) h; each pair of arms is orthogonal
    s5 = h * math.sqrt(5.0)
    a = min(_value_at(t, trav, r, c, 1, 2), _value_at(t, trav, r, c, -1, -2))
    b = min(_value_at(t, trav, r, c, -2, 1), _value_at(t, trav, r, c, 2, -1))
    v = _solve_pair(a, b, s5)
    if v < cand:
        cand = v
    a = min(_value_at(t, trav, r, c, 2, 1), _value_at(t, trav, r, c, -2, -1))
    b = min(_value_at(t, trav, r, c, -1, 2), _value_at(t, trav, r, c, 1, -2))
    v = _solve_pair(a, b, s5)
    if v < cand:
        cand = v
    return cand


@njit(cache=True)
def _eikonal(trav: np.ndarray, goal_r: int, goal_c: int, h: float) -> np.ndarray:
    hh, ww = trav.shape
    t = np.full((hh, ww), np.inf)
    frozen = np.zeros((hh, ww), dtype=np.uint8)

    cap = 16 * hh * ww + 64
    heap_t = np.empty(cap)
    heap_i = np.empty(cap, dtype=np.int64)
    size = 0

    # exact seeding near the goal removes the large curvature error of the
    # first-order scheme close to a point source
    block_clear = True
    for dr in range(-2, 3):
        for dc in range(-2, 3):
            r, c = goal_r + dr, goal_c + dc
            if r < 0 or r >= hh or c < 0 or c >= ww or not trav[r, c]:
                block_clear = False
    radius = 2 if block_clear else 1
    for dr in range(-radius, radius + 1):
        for dc in range(-radius, radius + 1):
            r, c = goal_r + dr, goal_c + dc
            if 0 <= r < hh and 0 <= c < ww and trav[r, c]:
                t[r, c] = h * math.sqrt(dr * dr + dc * dc)
                # push
                i = size
                heap_t[i] = t[r, c]
                heap_i[i] = r * ww + c
                size += 1
                while i > 0:
                    p = (i - 1) // 2
                    if (heap_t[p] > heap_t[i]) or (
                        heap_t[p] == heap_t[i] and heap_i[p] > heap_i[i]
                    ):
                        heap_t[p], heap_t[i] = heap_t[i], heap_t[p]
                        heap_i[p], heap_i[i] = heap_i[i], heap_i[p]
                        i = p
                    else:
                        break

    while size > 0:
        top_t = heap_t[0]
        top_i = heap_i[0]
        size -= 1
        heap_t[0] = heap_t[size]
        heap_i[0] = heap_i[size]
        i = 0
        while True:
            l, rr = 2 * i + 1, 2 * i + 2
            m = i
            if l < size and (
                heap_t[l] < heap_t[m] or (heap_t[l] == heap_t[m] and heap_i[l] < heap_i[m])
            ):
                m = l
            if rr < size and (
                heap_t[rr] < heap_t[m] or (heap_t[rr] == heap_t[m] and heap_i[rr] < heap_i[m])
            ):
                m = rr
            if m == i:
                break
            heap_t[m], heap_t[i] = heap_t[i], heap_t[m]
            heap_i[m], heap_i[i] = heap_i[i], heap_i[m]
            i = m

        r = top_i // ww
        c = top_i % ww
        if frozen[r, c] or top_t > t[r, c]:
            continue
        frozen[r, c] = 1
        for dr in range(-1, 2):
            for dc in range(-1, 2):
                if dr == 0 and dc == 0:
                    continue
                nr, nc = r + dr, c + dc
                if nr < 0 or nr >= hh or nc < 0 or nc >= ww:
                    continue
                if not trav[nr, nc] or frozen[nr, nc]:
                    continue
                cand = _update_cell(t, trav, nr, nc, h)
                if cand < t[nr, nc] - 1e-12:
                    t[nr, nc] = cand
                    if size >= cap:
                        continue
                    i = size
                    heap_t[i] = cand
                    heap_i[i] = nr * ww + nc
                    size += 1
                    while i > 0:
                        p = (i - 1) // 2
                        if (heap_t[p] > heap_t[i]) or (
                            heap_t[p] == heap_t[i] and heap_i[p] > heap_i[i]
                        ):
                            heap_t[p], heap_t[i] = heap_t[i], heap_t[p]
                            heap_i[p], heap_i[i] = heap_i[i], heap_i[p]
                            i = p
                        else:
                            break
    return t


def eikonal_field(
    traversable: np.ndarray, goal: tuple[int, int], resolution: float
) -> np.ndarray:
    """Unit-speed eikonal distance field in meters over a traversability
    mask, infinite on blocked or unreachable cells."""
    trav = np.ascontiguousarray(traversable.astype(np.bool_))
    return _eikonal(trav, int(goal[0]), int(goal[1]), float(resolution))


def _snap_goal(trav: np.ndarray, goal: tuple[int, int]) -> tuple[int, int] | None:
    r0, c0 = goal
    if trav[r0, c0]:
        return goal
    best = None
    best_key = None
    hh, ww = trav.shape
    for dr in range(-GOAL_SNAP_CELLS, GOAL_SNAP_CELLS + 1):
        for dc in range(-GOAL_SNAP_CELLS, GOAL_SNAP_CELLS + 1):
            r, c = r0 + dr, c0 + dc
            if 0 <= r < hh and 0 <= c < ww and trav[r, c]:
                key = (dr * dr + dc * dc, r, c)
                if best_key is None or key < best_key:
                    best, best_key = (r, c), key
    return best


def fmm_field(local_map: LocalMap, goal_cell: tuple[int, int]) -> np.ndarray:
    """Distance field over the local map toward a goal cell.

    A goal on an obstacle snaps to the nearest traversable cell within 5
    cells; with no such cell the whole field is infinite.
    """
    if local_map.config.unknown_traversable:
        trav = local_map.grid != OBSTACLE
    else:
        trav = local_map.grid == FREE
    r, c = goal_cell
    if not (0 <= r < local_map.size and 0 <= c < local_map.size):
        raise ValueError(f"goal cell {goal_cell} outside grid")
    snapped = _snap_goal(trav, (r, c))
    if snapped is None:
        return np.full_like(local_map.grid, np.inf, dtype=np.float64)
    return eikonal_field(trav, snapped, local_map.resolution)


_NEIGHBOR_ORDER = [(-1, 0), (0, 1), (1, 0), (0, -1), (-1, 1), (1, 1), (1, -1), (-1, -1)]


def wrap_angle_deg(a: float) -> float:
    """Wrap to (-180, 180]."""
    a = (a + 180.0) % 360.0 - 180.0
    return 180.0 if a == -180.0 else a


def next_action(
    field: np.ndarray, agent_cell: tuple[int, int], agent_heading_deg: float
) -> tuple[str, str]:
    """Steepest-descent step: forward when aligned within 15 degrees of the
    best neighbor's bearing, otherwise a 30-degree turn toward it.

    Returns (action, status); status is 'goal' at the goal cell, 'blocked'
    when no neighbor is finite, else 'ok'.
    """
    r, c = agent_cell
    if np.isfinite(field[r, c]) and field[r, c] < STOP_RADIUS_M:
        return "stop_local", "goal"
    hh, ww = field.shape
    best = None
    best_val = np.inf
    for dr, dc in _NEIGHBOR_ORDER:
        nr, nc = r + dr, c + dc
        if 0 <= nr < hh and 0 <= nc < ww and field[nr, nc] < best_val:
            best_val = field[nr, nc]
            best = (dr, dc)
    if best is None or not np.isfinite(best_val):
        return "stop_local", "blocked"
    bearing = math.degrees(math.atan2(best[0], best[1]))
    diff = wrap_angle_deg(bearing - agent_heading_deg)
    if abs(diff) <= ALIGN_TOL_DEG:
        return "forward", "ok"
    return ("turn_left", "ok") if diff > 0 else ("turn_right", "ok")


def local_budget(d_m: float) -> int:
    """Step budget for one local goal pursuit: ceil(2 d_m / step length)."""
    if d_m <= 0:
        raise ValueError("depth horizon must be positive")
    return math.ceil(2.0 * d_m / STEP_FORWARD_M - 1e-9)


def mark_contact(local_map: LocalMap) -> None:
    """Bump signal: a blocked forward means an obstacle starts at the first
    cell ahead of the agent, even if the scan geometry missed it."""
    ang = math.radians(local_map.heading_deg)
    dx, dy = math.cos(ang), math.sin(ang)
    res = local_map.resolution
    lim = local_map.size * res
    agent_cell = local_map.agent_cell
    d = 0.25 * res
    while d <= 2.0 * res:
        px = local_map.x + dx * d
        py = local_map.y + dy * d
        if not (0 <= px < lim and 0 <= py < lim):
            return
        cell = local_map.cell_of(px, py)
        if cell != agent_cell:
            local_map.grid[cell] = OBSTACLE
            return
        d += 0.25 * res


def straight_line_clear(
    grid: np.ndarray, a: tuple[int, int], b: tuple[int, int]
) -> bool:
    """True when the discrete segment from a to b crosses no obstacle cell.
    Unknown cells do not block."""
    r0, c0 = a
    r1, c1 = b
    n = max(abs(r1 - r0), abs(c1 - c0))
    if n == 0:
        return grid[r0, c0] != OBSTACLE
    for k in range(n + 1):
        r = round(r0 + (r1 - r0) * k / n)
        c = round(c0 + (c1 - c0) * k / n)
        if 0 <= r < grid.shape[0] and 0 <= c < grid.shape[1]:
            if grid[r, c] == OBSTACLE:
                return False
    return True


def dump_field_csv(field: np.ndarray, path) -> None:
    """Debug dump of a distance field as a CSV grid."""
    np.savetxt(path, field, delimiter=",", fmt="%.4f")
