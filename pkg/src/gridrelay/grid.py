"""Semantic occupancy grid with evidence counters.

Cells carry a multi-hot bit vector over [free, obstacle, category...] backed
by saturating per-channel evidence. Ray sweeps reinforce free space, hits
reinforce obstacles, detections reinforce category channels; counters inside
the sensed region that received no reinforcement decay by one, so stale
entries fade only where the sensor can contradict them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import AgentEmbeddedError, OutOfBoundsError

FREE = 0
OBSTACLE = 1

EVIDENCE_MAX = 15
BIT_THRESHOLD = 2

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_BLOCK = np.ones((3, 3), dtype=bool)


@dataclass
class Pose:
    position: np.ndarray  # (2,) meters
    heading: float  # radians in [-pi, pi)

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=float)
        self.heading = wrap_heading(self.heading)


def wrap_heading(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


@dataclass
class RangeScan:
    angles: np.ndarray  # absolute world-frame ray angles, radians
    distances: np.ndarray  # meters, clipped at sensor range
    hits: np.ndarray  # bool; True when the ray ended on an obstacle


class SemanticGrid:
    def __init__(
        self,
        width: int,
        height: int,
        resolution: float,
        categories: Sequence[str],
        origin: tuple[float, float] = (0.0, 0.0),
        traversable: Sequence[str] = (),
    ) -> None:
        if resolution <= 0:
            raise ValueError(f"resolution must be positive, got {resolution}")
        self.width = int(width)
        self.height = int(height)
        self.resolution = float(resolution)
        self.origin = (float(origin[0]), float(origin[1]))
        self.channels: list[str] = ["free", "obstacle", *categories]
        self.traversable = set(traversable)
        self._cat_index = {c: i + 2 for i, c in enumerate(categories)}
        shape = (self.height, self.width, len(self.channels))
        self.bits = np.zeros(shape, dtype=bool)
        self.evidence = np.zeros(shape, dtype=np.uint8)
        self.last_changed: list[tuple[int, int]] = []  # free/obstacle flips
        self.version = 0
        self._free_labels: Optional[np.ndarray] = None
        self._free_labels_version = -1
        self._penalty: Optional[np.ndarray] = None
        self._penalty_version = -1
        self._nav_free: dict[int, np.ndarray] = {}
        self._nav_free_version = -1

    # -- coordinate transforms -------------------------------------------------

    def world_to_cell(self, point: Sequence[float]) -> tuple[int, int]:
        """Floor-quantize a world (x, y) point; column tracks x, row tracks y."""
        x, y = float(point[0]), float(point[1])
        col = math.floor((x - self.origin[0]) / self.resolution)
        row = math.floor((y - self.origin[1]) / self.resolution)
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise OutOfBoundsError(f"point ({x}, {y}) outside grid extent")
        return row, col

    def cell_to_world(self, cell: tuple[int, int]) -> tuple[float, float]:
        row, col = cell
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise OutOfBoundsError(f"cell {cell} outside grid extent")
        x = self.origin[0] + (col + 0.5) * self.resolution
        y = self.origin[1] + (row + 0.5) * self.resolution
        return x, y

    def in_bounds(self, cell: tuple[int, int]) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    # -- masks ------------------------------------------------------------------

    def free_mask(self) -> np.ndarray:
        return self.bits[:, :, FREE]

    def obstacle_mask(self) -> np.ndarray:
        return self.bits[:, :, OBSTACLE]

    def category_mask(self, category: str) -> np.ndarray:
        return self.bits[:, :, self._cat_index[category]]

    def unknown_mask(self) -> np.ndarray:
        return ~(self.bits[:, :, FREE] | self.bits[:, :, OBSTACLE])

    def _labels(self) -> np.ndarray:
        if self._free_labels_version != self.version or self._free_labels is None:
            self._free_labels, _ = ndimage.label(self.free_mask(), structure=_CROSS)
            self._free_labels_version = self.version
        return self._free_labels

    def clearance_penalty(self) -> np.ndarray:
        """True where a cell touches an obstacle (8-neighborhood)."""
        if self._penalty_version != self.version or self._penalty is None:
            self._penalty = ndimage.binary_dilation(self.obstacle_mask(), structure=_BLOCK)
            self._penalty_version = self.version
        return self._penalty

    def nav_free_mask(self, inflate: int = 0) -> np.ndarray:
        """Free cells minus an obstacle inflation band (configuration space)."""
        if inflate <= 0:
            return self.free_mask()
        if self._nav_free_version != self.version:
            self._nav_free = {}
            self._nav_free_version = self.version
        mask = self._nav_free.get(inflate)
        if mask is None:
            grown = ndimage.binary_dilation(
                self.obstacle_mask(), structure=_BLOCK, iterations=inflate
            )
            mask = self.free_mask() & ~grown
            self._nav_free[inflate] = mask
        return mask

    def nav_labels(self, inflate: int = 0) -> np.ndarray:
        """4-connected components of the navigation mask (cached per version)."""
        if inflate <= 0:
            return self._labels()
        key = -(inflate + 1)
        if self._nav_free_version != self.version:
            self._nav_free = {}
            self._nav_free_version = self.version
        labels = self._nav_free.get(key)
        if labels is None:
            labels, _ = ndimage.label(self.nav_free_mask(inflate), structure=_CROSS)
            self._nav_free[key] = labels
        return labels

    # -- the update rule ----------------------------------------------------------

    def update(
        self,
        scan: RangeScan,
        detections: Sequence[tuple[str, Sequence[float]]],
        pose: Pose,
    ) -> "SemanticGrid":
        """Fold one scan plus detections into evidence and refresh the bits."""
        self.world_to_cell(pose.position)  # raises OutOfBoundsError if outside

        angles = np.asarray(scan.angles, dtype=float)
        dists = np.asarray(scan.distances, dtype=float)
        hits = np.asarray(scan.hits, dtype=bool)

        # 0.7 cells per sample still lands twice inside any two-cell band.
        step = self.resolution * 0.7
        max_dist = float(dists.max()) if dists.size else 0.0
        n_samples = max(1, int(math.ceil(max_dist / step)) + 1)
        ts = (
            np.linspace(0.0, max_dist, n_samples, dtype=np.float32)
            if max_dist > 0
            else np.zeros(1, dtype=np.float32)
        )
        xs = np.float32(pose.position[0]) + np.outer(np.cos(angles).astype(np.float32), ts)
        ys = np.float32(pose.position[1]) + np.outer(np.sin(angles).astype(np.float32), ts)
        cols = np.floor((xs - np.float32(self.origin[0])) / np.float32(self.resolution)).astype(
            np.int64
        )
        rows = np.floor((ys - np.float32(self.origin[1])) / np.float32(self.resolution)).astype(
            np.int64
        )
        within = ts[None, :] <= dists[:, None] + 1e-12
        inside = (rows >= 0) & (rows < self.height) & (cols >= 0) & (cols < self.width)
        valid = within & inside
        flat_all = rows * self.width + cols

        # Endpoint cells of hit rays carry obstacle evidence.
        end_x = pose.position[0] + np.cos(angles) * dists
        end_y = pose.position[1] + np.sin(angles) * dists
        end_cols = np.floor((end_x - self.origin[0]) / self.resolution).astype(np.int64)
        end_rows = np.floor((end_y - self.origin[1]) / self.resolution).astype(np.int64)
        end_ok = (
            hits
            & (end_rows >= 0)
            & (end_rows < self.height)
            & (end_cols >= 0)
            & (end_cols < self.width)
        )
        hit_flat = np.unique(end_rows[end_ok] * self.width + end_cols[end_ok])

        swept = np.unique(flat_all[valid])
        free_flat = np.setdiff1d(swept, hit_flat, assume_unique=True)
        region_flat = np.union1d(swept, hit_flat)

        det_by_channel: dict[int, list[int]] = {}
        for category, point in detections:
            ch = self._cat_index.get(category)
            if ch is None:
                continue
            try:
                row, col = self.world_to_cell(point)
            except OutOfBoundsError:
                continue
            flat = row * self.width + col
            if np.searchsorted(region_flat, flat) < region_flat.size and region_flat[
                np.searchsorted(region_flat, flat)
            ] == flat:
                det_by_channel.setdefault(ch, []).append(flat)

        if region_flat.size == 0:
            self.last_changed = []
            self.version += 1
            return self

        rows = region_flat // self.width
        cols = region_flat % self.width

        n_ch = len(self.channels)
        bump = np.zeros((region_flat.size, n_ch), dtype=bool)
        bump[np.searchsorted(region_flat, free_flat), FREE] = True
        if hit_flat.size:
            bump[np.searchsorted(region_flat, hit_flat), OBSTACLE] = True
        for ch, flats in det_by_channel.items():
            bump[np.searchsorted(region_flat, np.unique(flats)), ch] = True

        ev = self.evidence[rows, cols, :].astype(np.int16)
        ev[bump] = np.minimum(ev[bump] + 1, EVIDENCE_MAX)
        ev[~bump] = np.maximum(ev[~bump] - 1, 0)
        self.evidence[rows, cols, :] = ev.astype(np.uint8)

        bits = self.bits[rows, cols, :]
        bits = np.where(ev >= BIT_THRESHOLD, True, np.where(ev == 0, False, bits))

        # Free/obstacle exclusivity: higher evidence wins, ties go to obstacle.
        both = bits[:, FREE] & bits[:, OBSTACLE]
        free_wins = both & (ev[:, FREE] > ev[:, OBSTACLE])
        bits[both, OBSTACLE] = False
        bits[both, FREE] = False
        bits[free_wins, FREE] = True
        bits[both & ~free_wins, OBSTACLE] = True

        # Non-traversable category presence implies the obstacle bit.
        blocking = [
            self._cat_index[c] for c in self._cat_index if c not in self.traversable
        ]
        if blocking:
            occupied = bits[:, blocking].any(axis=1)
            bits[occupied, OBSTACLE] = True
            bits[occupied, FREE] = False

        old_nav = self.bits[rows, cols, :][:, [FREE, OBSTACLE]]
        flipped = (old_nav != bits[:, [FREE, OBSTACLE]]).any(axis=1)
        self.last_changed = [
            (int(r), int(c)) for r, c in zip(rows[flipped], cols[flipped])
        ]
        self.last_region = (rows, cols)  # cells swept by this scan
        self.bits[rows, cols, :] = bits
        self.version += 1
        return self

    def mark_contact(self, point: Sequence[float]) -> None:
        """Bumper feedback: the cell at a contact point is an obstacle."""
        try:
            row, col = self.world_to_cell(point)
        except OutOfBoundsError:
            return
        ev = min(EVIDENCE_MAX, int(self.evidence[row, col, OBSTACLE]) + BIT_THRESHOLD)
        self.evidence[row, col, OBSTACLE] = ev
        changed = not self.bits[row, col, OBSTACLE]
        self.bits[row, col, OBSTACLE] = True
        self.bits[row, col, FREE] = False
        self.last_changed = [(row, col)] if changed else []
        self.version += 1

    # -- queries -------------------------------------------------------------------

    def reachable(
        self,
        anchor_pos: Sequence[float],
        agent_pos: Sequence[float],
        eps: float,
        connectivity: int = 4,
    ) -> bool:
        """True iff a free cell within eps of the anchor connects to the agent."""
        if eps < self.resolution:
            raise ValueError(f"eps must be at least one cell ({self.resolution}), got {eps}")
        agent_cell = self.world_to_cell(agent_pos)
        if not self.bits[agent_cell[0], agent_cell[1], FREE]:
            raise AgentEmbeddedError(f"agent cell {agent_cell} is not free")
        if connectivity == 4:
            labels = self._labels()
        else:
            labels, _ = ndimage.label(self.free_mask(), structure=_BLOCK)
        target_label = labels[agent_cell[0], agent_cell[1]]
        for row, col in self.cells_within(anchor_pos, eps):
            if self.bits[row, col, FREE] and labels[row, col] == target_label:
                return True
        return False

    def cells_within(self, point: Sequence[float], radius: float) -> list[tuple[int, int]]:
        """Cells whose centers lie within a world-space radius of the point."""
        x, y = float(point[0]), float(point[1])
        lo_col = max(0, math.floor((x - radius - self.origin[0]) / self.resolution))
        hi_col = min(self.width - 1, math.floor((x + radius - self.origin[0]) / self.resolution))
        lo_row = max(0, math.floor((y - radius - self.origin[1]) / self.resolution))
        hi_row = min(self.height - 1, math.floor((y + radius - self.origin[1]) / self.resolution))
        out = []
        for row in range(lo_row, hi_row + 1):
            cy = self.origin[1] + (row + 0.5) * self.resolution
            for col in range(lo_col, hi_col + 1):
                cx = self.origin[0] + (col + 0.5) * self.resolution
                if (cx - x) ** 2 + (cy - y) ** 2 <= radius * radius:
                    out.append((row, col))
        return out

    # -- serialization ----------------------------------------------------------------

    def dump(self) -> str:
        """Graymap-style text raster per channel, for debugging."""
        lines = [f"GRID v1 {self.width} {self.height} {len(self.channels)} {self.resolution}"]
        for ch, name in enumerate(self.channels):
            lines.append(f"# {name}")
            for row in range(self.height):
                lines.append("".join("1" if b else "0" for b in self.bits[row, :, ch]))
        return "\n".join(lines) + "\n"

    def content_hash_fields(self) -> tuple[bytes, bytes]:
        return self.bits.tobytes(), self.evidence.tobytes()
