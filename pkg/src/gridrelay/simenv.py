"""Seeded apartment generator plus sensor and actuation models.

Scenarios are built by binary-space-partition room splitting with doorways
carved into every internal wall, objects drawn from per-room cluster
templates (so category co-occurrence has real structure), and a precomputed
ground-truth shortest path to the goal. All randomness flows from per-purpose
streams derived from the scenario seed, so identical seeds and action
sequences replay bit-identically.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .cooccurrence import RelayConfig, best_relay_chain, build_from_corpus
from .embeddings import label_embedding
from .errors import GenerationFailedError, InvalidPoseError, NoDemoError
from .grid import Pose, RangeScan, SemanticGrid, wrap_heading
from .scene_graph import SceneNode
from .subgoal import Subgoal, SubgoalAction

SCENARIO_VERSION = "SCENARIO v1"

ROOM_TEMPLATES: dict[str, tuple[str, ...]] = {
    "kitchen": ("Counter", "Fridge", "Microwave", "Sink", "Kettle", "Mug", "Toaster"),
    "bedroom": ("Bed", "Wardrobe", "Nightstand", "Lamp", "AlarmClock"),
    "office": ("Desk", "Chair", "Stool", "Laptop", "Monitor", "Bookshelf"),
    "living": ("Sofa", "TV", "CoffeeTable", "Plant", "Shelf"),
}

SYNONYM_GROUPS: tuple[tuple[str, ...], ...] = (("Chair", "Stool"), ("Sofa", "CoffeeTable"))

# Small items make natural goals; furniture makes natural relay anchors.
SMALL_ITEMS = {
    "Mug", "Kettle", "Toaster", "Lamp", "AlarmClock", "Laptop", "Monitor", "Plant", "TV",
}
_FOOT_LARGE = 0.30
_FOOT_SMALL = 0.12


def vocabulary() -> tuple[str, ...]:
    cats: set[str] = set()
    for members in ROOM_TEMPLATES.values():
        cats.update(members)
    return tuple(sorted(cats))


def synonym_table() -> dict[str, tuple[str, ...]]:
    table: dict[str, tuple[str, ...]] = {}
    for group in SYNONYM_GROUPS:
        for cat in group:
            table[cat] = tuple(sorted(c for c in group if c != cat))
    return table


def _stream(seed: int, purpose: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{purpose}".encode("utf-8")).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "big")))


@dataclass
class Room:
    x0: float
    y0: float
    x1: float
    y1: float
    template: str

    def contains(self, x: float, y: float, margin: float = 0.0) -> bool:
        return (
            self.x0 + margin <= x <= self.x1 - margin
            and self.y0 + margin <= y <= self.y1 - margin
        )

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


@dataclass
class Doorway:
    x: float
    y: float
    width: float
    orientation: str  # "h": gap in a horizontal wall, "v": in a vertical wall


@dataclass
class SceneObject:
    category: str
    position: tuple[float, float]
    z: float
    facing: float
    traversable: bool
    footprint: float


@dataclass
class Scenario:
    seed: int
    world_size: tuple[float, float]
    resolution: float
    rooms: list[Room]
    doorways: list[Doorway]
    objects: list[SceneObject]
    vocabulary: tuple[str, ...]
    synonyms: dict[str, tuple[str, ...]]
    start: Pose
    goal: str
    shortest_path_m: float
    _blocked: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def grid_shape(self) -> tuple[int, int]:
        h = int(round(self.world_size[1] / self.resolution))
        w = int(round(self.world_size[0] / self.resolution))
        return h, w

    def blocked_raster(self) -> np.ndarray:
        if self._blocked is None:
            self._blocked = rasterize(self)
        return self._blocked

    def goal_positions(self) -> list[tuple[float, float]]:
        return [o.position for o in self.objects if o.category == self.goal]

    def goal_distance(self, point: Sequence[float]) -> float:
        return min(
            math.hypot(point[0] - gx, point[1] - gy) for gx, gy in self.goal_positions()
        )

    def room_scenes(self) -> list[set[str]]:
        """Per-room category sets; the unit of co-occurrence counting."""
        scenes = []
        for room in self.rooms:
            cats = {
                o.category
                for o in self.objects
                if room.contains(o.position[0], o.position[1])
            }
            if cats:
                scenes.append(cats)
        return scenes

    def to_json(self) -> str:
        payload = {
            "version": SCENARIO_VERSION,
            "seed": self.seed,
            "world_size": [self.world_size[0], self.world_size[1]],
            "resolution": self.resolution,
            "rooms": [
                {"x0": r.x0, "y0": r.y0, "x1": r.x1, "y1": r.y1, "template": r.template}
                for r in self.rooms
            ],
            "doorways": [
                {"x": d.x, "y": d.y, "width": d.width, "orientation": d.orientation}
                for d in self.doorways
            ],
            "objects": [
                {
                    "category": o.category,
                    "position": [o.position[0], o.position[1]],
                    "z": o.z,
                    "facing": o.facing,
                    "traversable": o.traversable,
                    "footprint": o.footprint,
                }
                for o in self.objects
            ],
            "vocabulary": list(self.vocabulary),
            "synonyms": {k: list(v) for k, v in sorted(self.synonyms.items())},
            "start": {
                "position": [float(self.start.position[0]), float(self.start.position[1])],
                "heading": self.start.heading,
            },
            "goal": self.goal,
            "shortest_path_m": self.shortest_path_m,
        }
        return json.dumps(payload, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "Scenario":
        data = json.loads(text)
        if data.get("version") != SCENARIO_VERSION:
            raise ValueError(f"unsupported scenario version: {data.get('version')!r}")
        return Scenario(
            seed=int(data["seed"]),
            world_size=(float(data["world_size"][0]), float(data["world_size"][1])),
            resolution=float(data["resolution"]),
            rooms=[Room(**r) for r in data["rooms"]],
            doorways=[Doorway(**d) for d in data["doorways"]],
            objects=[
                SceneObject(
                    category=o["category"],
                    position=(float(o["position"][0]), float(o["position"][1])),
                    z=float(o["z"]),
                    facing=float(o["facing"]),
                    traversable=bool(o["traversable"]),
                    footprint=float(o["footprint"]),
                )
                for o in data["objects"]
            ],
            vocabulary=tuple(data["vocabulary"]),
            synonyms={k: tuple(v) for k, v in data["synonyms"].items()},
            start=Pose(
                position=np.array(data["start"]["position"], dtype=float),
                heading=float(data["start"]["heading"]),
            ),
            goal=data["goal"],
            shortest_path_m=float(data["shortest_path_m"]),
        )

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


@dataclass
class GenConfig:
    n_rooms: Optional[int] = None  # None: seeded draw from [4, 6]
    n_objects: Optional[int] = None  # None: seeded draw from [14, 20]
    world_size: tuple[float, float] = (11.0, 11.0)
    resolution: float = 0.05
    door_width: float = 1.0
    min_room_side: float = 2.2
    object_margin: float = 0.45
    object_separation: float = 0.55
    stray_rate: float = 0.12  # chance an object ignores its room's template
    min_goal_distance: float = 1.4  # Euclidean floor between start and goal
    min_geodesic: float = 2.5  # meters along the ground-truth shortest path


@dataclass
class SensorConfig:
    # Range scan sweeps the full circle (spinning lidar); object detections
    # come from the forward camera cone only.
    scan_fov: float = 2.0 * math.pi
    fov: float = math.pi / 2.0
    max_range: float = 5.0
    # Small items resolve only up close; furniture is visible at full range.
    # This is what makes relay anchors informative for occluded targets.
    small_item_range: float = 1.6
    n_rays: int = 96
    pos_noise: float = 0.05
    # Embedding noise calibrated so two sightings of one category only match
    # when the position gate also fires: same-label dot ~0.82 at sigma 0.15.
    emb_noise: float = 0.15
    emb_dim: int = 16
    confidence_slope: float = 0.12

    def detection_range(self, category: str) -> float:
        return self.small_item_range if category in SMALL_ITEMS else self.max_range


@dataclass
class Observation:
    scan: RangeScan
    detections: list[SceneNode]
    pose: Pose


STEP_LENGTH = 0.25  # meters per forward primitive (robot deploys at 0.10)
TURN_ANGLE = math.pi / 2.0


# --------------------------------------------------------------------------
# rasterization and ground-truth geometry


def rasterize(scenario: Scenario) -> np.ndarray:
    """Ground-truth blocked mask: walls plus non-traversable footprints.

    Walls are two cells thick so a segment sampled at half-cell stride can
    never corner-skip through one.
    """
    h, w = scenario.grid_shape
    res = scenario.resolution
    blocked = np.zeros((h, w), dtype=bool)
    blocked[:2, :] = blocked[-2:, :] = True
    blocked[:, :2] = blocked[:, -2:] = True

    for room in scenario.rooms:
        for edge, orient in (
            ((room.x0, room.y0, room.x1, room.y0), "h"),
            ((room.x0, room.y1, room.x1, room.y1), "h"),
            ((room.x0, room.y0, room.x0, room.y1), "v"),
            ((room.x1, room.y0, room.x1, room.y1), "v"),
        ):
            x0, y0, x1, y1 = edge
            if orient == "h":
                row = min(h - 2, max(0, int(round(y0 / res))))
                c0 = max(0, int(math.floor(x0 / res)))
                c1 = min(w - 1, int(math.ceil(x1 / res)))
                blocked[row : row + 2, c0 : c1 + 1] = True
            else:
                col = min(w - 2, max(0, int(round(x0 / res))))
                r0 = max(0, int(math.floor(y0 / res)))
                r1 = min(h - 1, int(math.ceil(y1 / res)))
                blocked[r0 : r1 + 1, col : col + 2] = True

    for door in scenario.doorways:
        half = door.width / 2.0
        if door.orientation == "h":
            row = min(h - 2, max(0, int(round(door.y / res))))
            c0 = max(2, int(math.floor((door.x - half) / res)))
            c1 = min(w - 3, int(math.ceil((door.x + half) / res)))
            blocked[row : row + 2, c0 : c1 + 1] = False
        else:
            col = min(w - 2, max(0, int(round(door.x / res))))
            r0 = max(2, int(math.floor((door.y - half) / res)))
            r1 = min(h - 3, int(math.ceil((door.y + half) / res)))
            blocked[r0 : r1 + 1, col : col + 2] = False

    for obj in scenario.objects:
        if obj.traversable:
            continue
        _mark_disk(blocked, scenario, obj.position, obj.footprint, True)
    return blocked


def _mark_disk(
    mask: np.ndarray, scenario: Scenario, center: Sequence[float], radius: float, value: bool
) -> None:
    res = scenario.resolution
    h, w = mask.shape
    cx, cy = float(center[0]), float(center[1])
    r0 = max(0, int(math.floor((cy - radius) / res)))
    r1 = min(h - 1, int(math.floor((cy + radius) / res)))
    c0 = max(0, int(math.floor((cx - radius) / res)))
    c1 = min(w - 1, int(math.floor((cx + radius) / res)))
    for row in range(r0, r1 + 1):
        yc = (row + 0.5) * res
        for col in range(c0, c1 + 1):
            xc = (col + 0.5) * res
            if (xc - cx) ** 2 + (yc - cy) ** 2 <= radius * radius:
                mask[row, col] = value


def bfs_distances(
    blocked: np.ndarray,
    start_cell: tuple[int, int],
    targets: Optional[np.ndarray] = None,
) -> np.ndarray:
    """4-connected hop counts from the start over unblocked cells (-1 apart).

    With a target mask the sweep stops as soon as every reachable target has
    a distance, which keeps frontier scoring cheap.
    """
    h, w = blocked.shape
    dist = np.full((h, w), -1, dtype=np.int32)
    if blocked[start_cell]:
        return dist
    dist[start_cell] = 0
    frontier = np.zeros((h, w), dtype=bool)
    frontier[start_cell] = True
    free = ~blocked
    d = 0
    while frontier.any():
        d += 1
        grown = np.zeros((h, w), dtype=bool)
        grown[1:, :] |= frontier[:-1, :]
        grown[:-1, :] |= frontier[1:, :]
        grown[:, 1:] |= frontier[:, :-1]
        grown[:, :-1] |= frontier[:, 1:]
        nxt = grown & free & (dist < 0)
        dist[nxt] = d
        frontier = nxt
        if targets is not None and d % 8 == 0 and (dist[targets] >= 0).all():
            break
    return dist


def goal_ring_cells(scenario: Scenario, blocked: np.ndarray) -> list[tuple[int, int]]:
    """Free cells hugging a goal-instance footprint."""
    res = scenario.resolution
    h, w = blocked.shape
    cells: set[tuple[int, int]] = set()
    for obj in scenario.objects:
        if obj.category != scenario.goal:
            continue
        outer = obj.footprint + 3.0 * res
        cx, cy = obj.position
        r0 = max(0, int(math.floor((cy - outer) / res)))
        r1 = min(h - 1, int(math.floor((cy + outer) / res)))
        c0 = max(0, int(math.floor((cx - outer) / res)))
        c1 = min(w - 1, int(math.floor((cx + outer) / res)))
        for row in range(r0, r1 + 1):
            yc = (row + 0.5) * res
            for col in range(c0, c1 + 1):
                xc = (col + 0.5) * res
                if blocked[row, col]:
                    continue
                if (xc - cx) ** 2 + (yc - cy) ** 2 <= outer * outer:
                    cells.add((row, col))
    return sorted(cells)


def shortest_goal_distance(scenario: Scenario) -> float:
    """Geodesic meters from the start to the nearest goal instance."""
    blocked = scenario.blocked_raster()
    res = scenario.resolution
    start_cell = (
        int(math.floor(float(scenario.start.position[1]) / res)),
        int(math.floor(float(scenario.start.position[0]) / res)),
    )
    dist = bfs_distances(blocked, start_cell)
    ring = goal_ring_cells(scenario, blocked)
    best = min((int(dist[c]) for c in ring if dist[c] >= 0), default=-1)
    if best < 0:
        return math.inf
    return best * res


# --------------------------------------------------------------------------
# generation


def _bsp_rooms(rng: np.random.Generator, cfg: GenConfig, n_rooms: int) -> tuple[list[Room], list[Doorway]]:
    w, h = cfg.world_size
    leaves: list[tuple[float, float, float, float]] = [(0.0, 0.0, w, h)]
    doorways: list[Doorway] = []
    while len(leaves) < n_rooms:
        # Split the largest splittable leaf along its longer side.
        order = sorted(
            range(len(leaves)),
            key=lambda i: -((leaves[i][2] - leaves[i][0]) * (leaves[i][3] - leaves[i][1])),
        )
        split_done = False
        for idx in order:
            x0, y0, x1, y1 = leaves[idx]
            width, height = x1 - x0, y1 - y0
            axis = "v" if width >= height else "h"
            span = width if axis == "v" else height
            if span < 2.0 * cfg.min_room_side:
                continue
            frac = rng.uniform(0.38, 0.62)
            cut = (x0 if axis == "v" else y0) + span * frac
            if axis == "v":
                a = (x0, y0, cut, y1)
                b = (cut, y0, x1, y1)
                door_span = y1 - y0
                door_pos = y0 + rng.uniform(0.28, 0.72) * door_span
                doorways.append(Doorway(x=cut, y=door_pos, width=cfg.door_width, orientation="v"))
            else:
                a = (x0, y0, x1, cut)
                b = (x0, cut, x1, y1)
                door_span = x1 - x0
                door_pos = x0 + rng.uniform(0.28, 0.72) * door_span
                doorways.append(Doorway(x=door_pos, y=cut, width=cfg.door_width, orientation="h"))
            leaves[idx] = a
            leaves.append(b)
            split_done = True
            break
        if not split_done:
            raise GenerationFailedError(
                f"cannot split {cfg.world_size} world into {n_rooms} rooms "
                f"of side >= {cfg.min_room_side}"
            )
    names = list(ROOM_TEMPLATES)
    perm = rng.permutation(len(names))
    rooms = []
    for i, (x0, y0, x1, y1) in enumerate(leaves):
        template = names[perm[i % len(names)]] if i < len(names) else names[int(rng.integers(len(names)))]
        rooms.append(Room(x0=x0, y0=y0, x1=x1, y1=y1, template=template))
    return rooms, doorways


def _place_objects(
    rng: np.random.Generator, cfg: GenConfig, rooms: list[Room], n_objects: int
) -> list[SceneObject]:
    areas = np.array([r.area for r in rooms])
    weights = areas / areas.sum()
    objects: list[SceneObject] = []
    positions: list[tuple[float, float]] = []
    # Seed each room with its template's anchor piece first so every room
    # contributes co-occurrence structure, then fill by area.
    room_order = list(range(len(rooms)))
    assignments: list[int] = [room_order[i % len(rooms)] for i in range(n_objects)]
    if n_objects > len(rooms):
        extra = rng.choice(len(rooms), size=n_objects - len(rooms), p=weights)
        assignments = room_order + [int(e) for e in extra]
        assignments = assignments[:n_objects]
    used_in_room: dict[int, set[str]] = {i: set() for i in range(len(rooms))}
    vocab = vocabulary()
    for room_idx in assignments:
        room = rooms[room_idx]
        template = ROOM_TEMPLATES[room.template]
        if not used_in_room[room_idx]:
            # Each room opens with its template's anchor furniture piece.
            category = template[0]
        elif rng.random() < cfg.stray_rate:
            category = vocab[int(rng.integers(len(vocab)))]
        else:
            remaining = [c for c in template if c not in used_in_room[room_idx]]
            if not remaining:
                remaining = list(template)
            category = remaining[int(rng.integers(len(remaining)))]
        used_in_room[room_idx].add(category)
        footprint = _FOOT_SMALL if category in SMALL_ITEMS else _FOOT_LARGE
        placed = False
        for _ in range(40):
            x = rng.uniform(room.x0 + cfg.object_margin, room.x1 - cfg.object_margin)
            y = rng.uniform(room.y0 + cfg.object_margin, room.y1 - cfg.object_margin)
            if all(
                (x - px) ** 2 + (y - py) ** 2 >= cfg.object_separation**2
                for px, py in positions
            ):
                placed = True
                break
        if not placed:
            continue  # crowded room; drop this object
        positions.append((x, y))
        objects.append(
            SceneObject(
                category=category,
                position=(x, y),
                z=0.85 if category in SMALL_ITEMS else 0.4,
                facing=float(rng.uniform(-math.pi, math.pi)),
                traversable=False,
                footprint=footprint,
            )
        )
    return objects


def generate(seed: int, cfg: Optional[GenConfig] = None) -> Scenario:
    """Deterministic scenario from a seed; same seed, same bits."""
    cfg = cfg or GenConfig()
    if cfg.n_rooms is not None and not 2 <= cfg.n_rooms <= 6:
        raise ValueError(f"n_rooms must be in [2, 6], got {cfg.n_rooms}")
    if cfg.n_objects is not None and not 8 <= cfg.n_objects <= 30:
        raise ValueError(f"n_objects must be in [8, 30], got {cfg.n_objects}")
    rng = _stream(seed, "generate")
    n_rooms = cfg.n_rooms if cfg.n_rooms is not None else int(rng.integers(4, 7))
    n_objects = cfg.n_objects if cfg.n_objects is not None else int(rng.integers(14, 21))
    capacity = (cfg.world_size[0] * cfg.world_size[1]) / (cfg.object_separation**2 * 4.0)
    if n_objects > capacity:
        raise GenerationFailedError(
            f"{n_objects} objects cannot fit a {cfg.world_size} world"
        )

    for _ in range(12):
        rooms, doorways = _bsp_rooms(rng, cfg, n_rooms)
        objects = _place_objects(rng, cfg, rooms, n_objects)
        if len(objects) < max(4, n_objects // 2):
            continue

        def _conventional(obj: SceneObject) -> bool:
            # Placed according to its room's template (not a stray).
            for room in rooms:
                if room.contains(obj.position[0], obj.position[1]):
                    return obj.category in ROOM_TEMPLATES[room.template]
            return False

        goal_pool = sorted(
            {o.category for o in objects if o.category in SMALL_ITEMS and _conventional(o)}
        )
        if not goal_pool:
            goal_pool = sorted({o.category for o in objects})
        goal = goal_pool[int(rng.integers(len(goal_pool)))]

        scenario = Scenario(
            seed=seed,
            world_size=cfg.world_size,
            resolution=cfg.resolution,
            rooms=rooms,
            doorways=doorways,
            objects=objects,
            vocabulary=vocabulary(),
            synonyms=synonym_table(),
            start=Pose(position=np.zeros(2), heading=0.0),
            goal=goal,
            shortest_path_m=0.0,
        )
        blocked = scenario.blocked_raster()
        free_cells = np.argwhere(~blocked)
        headings = (0.0, math.pi / 2.0, math.pi, -math.pi / 2.0)
        placed = False
        for _ in range(60):
            pick = free_cells[int(rng.integers(len(free_cells)))]
            x = (pick[1] + 0.5) * cfg.resolution
            y = (pick[0] + 0.5) * cfg.resolution
            if any(not r.contains(x, y, margin=0.3) and r.contains(x, y) for r in rooms):
                continue
            if not any(r.contains(x, y, margin=0.3) for r in rooms):
                continue
            if scenario.goal_distance((x, y)) < cfg.min_goal_distance:
                continue
            heading = headings[int(rng.integers(4))]
            scenario.start = Pose(position=np.array([x, y]), heading=heading)
            geo = shortest_goal_distance(scenario)
            if not math.isfinite(geo) or geo < cfg.min_geodesic:
                continue
            scenario.shortest_path_m = geo
            placed = True
            break
        if placed:
            return scenario
    raise GenerationFailedError(f"no valid scenario for seed {seed} under {cfg}")


# --------------------------------------------------------------------------
# sensing and actuation


class Simulator:
    """Owns the seeded sensor stream and the primitive-step counter."""

    def __init__(self, scenario: Scenario, sensor: Optional[SensorConfig] = None):
        self.scenario = scenario
        self.sensor = sensor or SensorConfig()
        self.blocked = scenario.blocked_raster()
        self.rng = _stream(scenario.seed, "sensor")
        self.t = 0

    def _cell(self, point: Sequence[float]) -> tuple[int, int]:
        res = self.scenario.resolution
        return (
            int(math.floor(float(point[1]) / res)),
            int(math.floor(float(point[0]) / res)),
        )

    def _is_blocked_point(self, point: Sequence[float]) -> bool:
        h, w = self.blocked.shape
        row, col = self._cell(point)
        if not (0 <= row < h and 0 <= col < w):
            return True
        return bool(self.blocked[row, col])

    def _segment_clear(
        self, a: Sequence[float], b: Sequence[float], ignore_near: Optional[tuple[float, float, float]] = None
    ) -> bool:
        ax, ay = float(a[0]), float(a[1])
        bx, by = float(b[0]), float(b[1])
        length = math.hypot(bx - ax, by - ay)
        n = max(2, int(math.ceil(length / (self.scenario.resolution * 0.5))) + 1)
        ts = np.linspace(0.0, 1.0, n)
        xs = ax + ts * (bx - ax)
        ys = ay + ts * (by - ay)
        if ignore_near is not None:
            ox, oy, orad = ignore_near
            keep = (xs - ox) ** 2 + (ys - oy) ** 2 > (orad + self.scenario.resolution) ** 2
            xs, ys = xs[keep], ys[keep]
        res = self.scenario.resolution
        h, w = self.blocked.shape
        cols = np.floor(xs / res).astype(int)
        rows = np.floor(ys / res).astype(int)
        ok = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
        if not ok.all():
            return False
        return not self.blocked[rows[ok], cols[ok]].any()

    def _first_blocked(self, a: Sequence[float], b: Sequence[float]) -> Optional[tuple[float, float]]:
        """World point of the first blocked sample along a segment (bumper)."""
        ax, ay = float(a[0]), float(a[1])
        bx, by = float(b[0]), float(b[1])
        length = math.hypot(bx - ax, by - ay)
        n = max(2, int(math.ceil(length / (self.scenario.resolution * 0.5))) + 1)
        for t in np.linspace(0.0, 1.0, n):
            x, y = ax + t * (bx - ax), ay + t * (by - ay)
            if self._is_blocked_point((x, y)):
                return (x, y)
        return (bx, by)

    def observe(self, pose: Pose) -> Observation:
        if self._is_blocked_point(pose.position):
            raise InvalidPoseError(f"pose {pose.position} is inside an obstacle")
        self.t += 1
        cfg = self.sensor
        if cfg.scan_fov >= 2.0 * math.pi - 1e-9:
            angles = pose.heading + np.linspace(0.0, 2.0 * math.pi, cfg.n_rays, endpoint=False)
        else:
            angles = pose.heading + np.linspace(-cfg.scan_fov / 2.0, cfg.scan_fov / 2.0, cfg.n_rays)
        step = self.scenario.resolution * 0.5
        n_samples = int(math.ceil(cfg.max_range / step)) + 1
        ts = np.linspace(0.0, cfg.max_range, n_samples)
        xs = pose.position[0] + np.outer(np.cos(angles), ts)
        ys = pose.position[1] + np.outer(np.sin(angles), ts)
        res = self.scenario.resolution
        h, w = self.blocked.shape
        cols = np.floor(xs / res).astype(int)
        rows = np.floor(ys / res).astype(int)
        outside = (rows < 0) | (rows >= h) | (cols < 0) | (cols >= w)
        rows_c = np.clip(rows, 0, h - 1)
        cols_c = np.clip(cols, 0, w - 1)
        hit_grid = self.blocked[rows_c, cols_c] | outside
        hit_grid[:, 0] = False  # the agent's own cell never terminates a ray
        first = hit_grid.argmax(axis=1)
        has_hit = hit_grid.any(axis=1)
        distances = np.where(has_hit, ts[first], cfg.max_range)
        scan = RangeScan(angles=angles, distances=distances, hits=has_hit)

        detections: list[SceneNode] = []
        for obj in self.scenario.objects:
            dx = obj.position[0] - float(pose.position[0])
            dy = obj.position[1] - float(pose.position[1])
            dist = math.hypot(dx, dy)
            if dist > cfg.detection_range(obj.category) or dist < 1e-9:
                continue
            bearing = wrap_heading(math.atan2(dy, dx) - pose.heading)
            if abs(bearing) > cfg.fov / 2.0:
                continue
            if not self._segment_clear(
                pose.position,
                obj.position,
                ignore_near=(obj.position[0], obj.position[1], obj.footprint),
            ):
                continue
            noise = self.rng.normal(0.0, cfg.pos_noise, size=2)
            px, py = obj.position[0] + noise[0], obj.position[1] + noise[1]
            emb = label_embedding(obj.category, cfg.emb_dim)
            emb = emb + self.rng.normal(0.0, cfg.emb_noise, size=cfg.emb_dim)
            emb = emb / np.linalg.norm(emb)
            conf = 1.0 - cfg.confidence_slope * dist + float(self.rng.normal(0.0, 0.02))
            conf = min(1.0, max(0.25, conf))
            half = obj.footprint
            center = np.array([px, py, obj.z])
            bbox = np.stack([center - (half, half, 0.4), center + (half, half, 0.4)])
            detections.append(
                SceneNode(
                    node_id="det",
                    label=obj.category,
                    embedding=emb,
                    position=center,
                    bbox=bbox,
                    confidence=conf,
                    last_seen=self.t,
                    facing=obj.facing,
                )
            )
        return Observation(scan=scan, detections=detections, pose=pose)

    def act(self, pose: Pose, action: str) -> tuple[Pose, bool]:
        self.last_contact = None
        if action == "forward":
            target = np.array(
                [
                    float(pose.position[0]) + STEP_LENGTH * math.cos(pose.heading),
                    float(pose.position[1]) + STEP_LENGTH * math.sin(pose.heading),
                ]
            )
            if self._is_blocked_point(target) or not self._segment_clear(pose.position, target):
                self.last_contact = self._first_blocked(pose.position, target)
                return Pose(position=pose.position.copy(), heading=pose.heading), True
            return Pose(position=target, heading=pose.heading), False
        if action == "turn-left":
            return Pose(position=pose.position.copy(), heading=pose.heading + TURN_ANGLE), False
        if action == "turn-right":
            return Pose(position=pose.position.copy(), heading=pose.heading - TURN_ANGLE), False
        if action in ("interact", "stop"):
            return Pose(position=pose.position.copy(), heading=pose.heading), False
        raise ValueError(f"unknown primitive action: {action!r}")


def observe(scenario: Scenario, pose: Pose, sensor: Optional[SensorConfig] = None) -> Observation:
    """One-shot observation with a fresh per-scenario sensor stream."""
    return Simulator(scenario, sensor).observe(pose)


def act(scenario: Scenario, pose: Pose, action: str) -> tuple[Pose, bool]:
    return Simulator(scenario).act(pose, action)


# --------------------------------------------------------------------------
# privileged expert


def expert_demonstration(
    scenario: Scenario, relay_cfg: Optional[RelayConfig] = None
) -> tuple[str, list[Subgoal]]:
    """Privileged relay demonstration: the beacon beside the goal, then the goal.

    The expert knows the true layout and the sensor model, so its relay
    anchor is the far-visible furniture piece sharing the goal instance's
    room; chains fall back to relay search on the room co-location graph
    when no such beacon exists. Goals already visible from the start get a
    direct demonstration.
    """
    relay_cfg = relay_cfg or RelayConfig()
    if not math.isfinite(shortest_goal_distance(scenario)):
        raise NoDemoError(f"goal {scenario.goal!r} unreachable in scenario {scenario.seed}")
    sim = Simulator(scenario)
    start_xy = scenario.start.position
    goal_objs = [o for o in scenario.objects if o.category == scenario.goal]
    visible = False
    for obj in goal_objs:
        if math.hypot(
            obj.position[0] - start_xy[0], obj.position[1] - start_xy[1]
        ) <= sim.sensor.detection_range(obj.category) and sim._segment_clear(
            start_xy, obj.position, ignore_near=(obj.position[0], obj.position[1], obj.footprint)
        ):
            visible = True
            break

    anchors: tuple[str, ...] = ()
    if not visible and goal_objs:
        target = min(
            goal_objs,
            key=lambda o: math.hypot(o.position[0] - start_xy[0], o.position[1] - start_xy[1]),
        )
        room = next(
            (r for r in scenario.rooms if r.contains(target.position[0], target.position[1])),
            None,
        )
        beacons = []
        if room is not None:
            for o in scenario.objects:
                if o.category == scenario.goal or o.category in SMALL_ITEMS:
                    continue
                if room.contains(o.position[0], o.position[1]):
                    d = math.hypot(
                        o.position[0] - target.position[0], o.position[1] - target.position[1]
                    )
                    beacons.append((d, o.category))
        if beacons:
            beacons.sort(key=lambda e: (e[0], e[1]))
            anchors = (beacons[0][1],)
        else:
            graph = build_from_corpus(scenario.room_scenes())
            others = sorted(
                (math.hypot(o.position[0] - start_xy[0], o.position[1] - start_xy[1]), o.category)
                for o in scenario.objects
                if o.category != scenario.goal
            )
            if others and scenario.goal in graph.categories:
                anchors = best_relay_chain(
                    graph, others[0][1], scenario.goal, relay_cfg
                ).anchors
    subgoals = [Subgoal(action=SubgoalAction.GOTO, anchor=a) for a in anchors]
    subgoals.append(Subgoal(action=SubgoalAction.GOTO, anchor=scenario.goal))
    subgoals.append(Subgoal(action=SubgoalAction.INTERACT, anchor=scenario.goal))
    return scenario.goal, subgoals


def ground_truth_grid(scenario: Scenario, categories: Optional[Sequence[str]] = None) -> SemanticGrid:
    """Fully observed semantic grid for the static-map oracle variant."""
    blocked = scenario.blocked_raster()
    h, w = blocked.shape
    grid = SemanticGrid(
        width=w,
        height=h,
        resolution=scenario.resolution,
        categories=categories if categories is not None else scenario.vocabulary,
    )
    from .grid import EVIDENCE_MAX, FREE, OBSTACLE  # local to avoid name clutter

    grid.bits[:, :, FREE] = ~blocked
    grid.bits[:, :, OBSTACLE] = blocked
    grid.evidence[:, :, FREE] = np.where(~blocked, EVIDENCE_MAX, 0)
    grid.evidence[:, :, OBSTACLE] = np.where(blocked, EVIDENCE_MAX, 0)
    for obj in scenario.objects:
        if obj.category not in grid._cat_index:
            continue
        ch = grid._cat_index[obj.category]
        mask = np.zeros((h, w), dtype=bool)
        _mark_disk(mask, scenario, obj.position, max(obj.footprint, scenario.resolution), True)
        grid.bits[:, :, ch] |= mask
        grid.evidence[:, :, ch] = np.where(mask, EVIDENCE_MAX, grid.evidence[:, :, ch])
    grid.version += 1
    return grid


def ground_truth_scene(scenario: Scenario, emb_dim: int = 16):
    """Noise-free scene graph with one node per object instance."""
    from .scene_graph import MatchConfig, SceneGraph, _rebuild_edges

    graph = SceneGraph()
    for obj in scenario.objects:
        emb = label_embedding(obj.category, emb_dim)
        center = np.array([obj.position[0], obj.position[1], obj.z])
        half = obj.footprint
        bbox = np.stack([center - (half, half, 0.4), center + (half, half, 0.4)])
        node = SceneNode(
            node_id=graph._new_id(),
            label=obj.category,
            embedding=emb,
            position=center,
            bbox=bbox,
            confidence=1.0,
            last_seen=1,
            facing=obj.facing,
        )
        graph.nodes[node.node_id] = node
    graph.timestep = 1
    _rebuild_edges(graph, MatchConfig())
    return graph
