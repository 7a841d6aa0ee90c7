"""Grid path planning: A* baseline plus incremental D*-Lite repair.

Costs are integers in tenth-of-a-step units (orthogonal 10, diagonal 14,
clearance penalty 2 for cells hugging an obstacle) so that A* and D*-Lite
agree bit-for-bit on path cost regardless of expansion order. Reported path
costs are scaled back to step units.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import NoPathError
from .grid import SemanticGrid

INF = 1 << 40
ORTHO_COST = 10
DIAG_COST = 14
CLEARANCE_COST = 2

Cell = tuple[int, int]

_N4 = ((-1, 0), (1, 0), (0, -1), (0, 1))
_N8 = _N4 + ((-1, -1), (-1, 1), (1, -1), (1, 1))


@dataclass
class PlannerConfig:
    connectivity: int = 4  # 4 or 8
    clearance_shaping: bool = True
    # Cells of obstacle inflation applied to semantic-grid free space before
    # planning; the start's immediate bubble stays traversable so an agent
    # caught inside the band can walk out.
    inflate_cells: int = 0


@dataclass
class Path:
    cells: list[Cell]
    cost: float  # step units; diagonals count sqrt(2)/1.4 internally

    def __len__(self) -> int:
        return len(self.cells)


class ReplanCause(str, Enum):
    NEW_OBSTACLE = "new-obstacle"
    PATH_DEVIATION = "path-deviation"
    ANCHOR_UPDATE = "anchor-update"
    ANCHOR_UNREACHABLE = "anchor-unreachable"


@dataclass
class ReplanEvent:
    cause: ReplanCause
    timestep: int = 0


class _Masks:
    """Live free/penalty views over a semantic grid or a raw boolean array."""

    def __init__(self, source, cfg: PlannerConfig, bubble: Optional[Cell] = None) -> None:
        self.cfg = cfg
        self.bubble = bubble
        if isinstance(source, SemanticGrid):
            self._grid = source
            self._free_arr = None
        else:
            self._grid = None
            self._free_arr = np.asarray(source, dtype=bool)
            self._penalty_arr = _dilate(~self._free_arr)

    @property
    def shape(self) -> tuple[int, int]:
        if self._grid is not None:
            return self._grid.height, self._grid.width
        return self._free_arr.shape

    def free(self) -> np.ndarray:
        if self._grid is not None:
            base = self._grid.nav_free_mask(self.cfg.inflate_cells)
            if self.bubble is not None and self.cfg.inflate_cells > 0:
                raw = self._grid.free_mask()
                if raw[self.bubble] and not base[self.bubble]:
                    base = base.copy()
                    k = self.cfg.inflate_cells + 1  # must bridge the whole band
                    r, c = self.bubble
                    h, w = base.shape
                    r0, r1 = max(0, r - k), min(h, r + k + 1)
                    c0, c1 = max(0, c - k), min(w, c + k + 1)
                    base[r0:r1, c0:c1] |= raw[r0:r1, c0:c1]
            return base
        return self._free_arr

    def penalty(self) -> np.ndarray:
        if self._grid is not None:
            return self._grid.clearance_penalty()
        return self._penalty_arr

    def refresh(self) -> None:
        if self._grid is None:
            self._penalty_arr = _dilate(~self._free_arr)


def _dilate(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    out[1:, 1:] |= mask[:-1, :-1]
    out[1:, :-1] |= mask[:-1, 1:]
    out[:-1, 1:] |= mask[1:, :-1]
    out[:-1, :-1] |= mask[1:, 1:]
    return out


def _heuristic(a: Cell, b: Cell, connectivity: int) -> int:
    dr = abs(a[0] - b[0])
    dc = abs(a[1] - b[1])
    if connectivity == 4:
        return ORTHO_COST * (dr + dc)
    lo, hi = min(dr, dc), max(dr, dc)
    return DIAG_COST * lo + ORTHO_COST * (hi - lo)


def _neighbors(cell: Cell, shape: tuple[int, int], connectivity: int):
    offsets = _N4 if connectivity == 4 else _N8
    r, c = cell
    h, w = shape
    for dr, dc in offsets:
        nr, nc = r + dr, c + dc
        if 0 <= nr < h and 0 <= nc < w:
            yield nr, nc, ORTHO_COST if dr == 0 or dc == 0 else DIAG_COST


def astar(source, start: Cell, goal: Cell, cfg: Optional[PlannerConfig] = None) -> Path:
    """Optimal path over free cells; ties break on (f, h, row, col)."""
    cfg = cfg or PlannerConfig()
    masks = _Masks(source, cfg, bubble=start)
    free = masks.free()
    penalty = masks.penalty() if cfg.clearance_shaping else None
    shape = masks.shape
    if not free[start]:
        raise NoPathError(f"start cell {start} is not free")
    if not free[goal]:
        raise NoPathError(f"goal cell {goal} is not free")

    g = np.full(shape, INF, dtype=np.int64)
    parent = np.full(shape, -1, dtype=np.int64)
    closed = np.zeros(shape, dtype=bool)
    g[start] = 0
    h0 = _heuristic(start, goal, cfg.connectivity)
    heap: list[tuple[int, int, int, int]] = [(h0, h0, start[0], start[1])]
    while heap:
        f, h, r, c = heapq.heappop(heap)
        if closed[r, c]:
            continue
        closed[r, c] = True
        if (r, c) == goal:
            cells: list[Cell] = []
            cur = r * shape[1] + c
            while cur >= 0:
                cells.append((cur // shape[1], cur % shape[1]))
                cur = parent[cells[-1]]
            cells.reverse()
            return Path(cells=cells, cost=g[goal] / 10.0)
        base = g[r, c]
        for nr, nc, move in _neighbors((r, c), shape, cfg.connectivity):
            if closed[nr, nc] or not free[nr, nc]:
                continue
            step = move + (CLEARANCE_COST if penalty is not None and penalty[nr, nc] else 0)
            cand = base + step
            if cand < g[nr, nc]:
                g[nr, nc] = cand
                parent[nr, nc] = r * shape[1] + c
                nh = _heuristic((nr, nc), goal, cfg.connectivity)
                heapq.heappush(heap, (cand + nh, nh, nr, nc))
    raise NoPathError(f"goal cell {goal} unreachable from {start}")


class DStarState:
    """Incremental shortest-path state (D*-Lite with lazy queue removal)."""

    def __init__(self, source, start: Cell, goal: Cell, cfg: Optional[PlannerConfig] = None):
        self.cfg = cfg or PlannerConfig()
        self.masks = _Masks(source, self.cfg, bubble=start)
        self.start = start
        self.goal = goal
        self.last = start
        self.km = 0
        self.g: dict[Cell, int] = {}
        self.rhs: dict[Cell, int] = {goal: 0}
        self.heap: list[tuple[int, int, int, int]] = []
        self.key_of: dict[Cell, tuple[int, int]] = {}
        self._push(goal)

    def _key(self, s: Cell) -> tuple[int, int]:
        v = min(self.g.get(s, INF), self.rhs.get(s, INF))
        if v >= INF:
            return (INF, INF)
        return (v + _heuristic(self.start, s, self.cfg.connectivity) + self.km, v)

    def _push(self, s: Cell) -> None:
        key = self._key(s)
        self.key_of[s] = key
        heapq.heappush(self.heap, (key[0], key[1], s[0], s[1]))

    def _edge_cost(self, u: Cell, v: Cell, move: int, free: np.ndarray, penalty) -> int:
        if not free[u] or not free[v]:
            return INF
        return move + (CLEARANCE_COST if penalty is not None and penalty[v] else 0)

    def _update_vertex(self, u: Cell, free: np.ndarray, penalty) -> None:
        if u != self.goal:
            best = INF
            if free[u]:
                for nr, nc, move in _neighbors(u, self.masks.shape, self.cfg.connectivity):
                    gv = self.g.get((nr, nc), INF)
                    if gv >= INF:
                        continue
                    cost = self._edge_cost(u, (nr, nc), move, free, penalty)
                    if cost < INF and gv + cost < best:
                        best = gv + cost
            self.rhs[u] = best
        if self.g.get(u, INF) != self.rhs.get(u, INF):
            self._push(u)
        else:
            self.key_of.pop(u, None)

    def _compute(self) -> None:
        free = self.masks.free()
        penalty = self.masks.penalty() if self.cfg.clearance_shaping else None
        while self.heap:
            k1, k2, r, c = self.heap[0]
            u = (r, c)
            start_key = self._key(self.start)
            if (k1, k2) >= start_key and self.rhs.get(self.start, INF) == self.g.get(
                self.start, INF
            ):
                break
            heapq.heappop(self.heap)
            if self.key_of.get(u) != (k1, k2):
                continue  # stale entry
            del self.key_of[u]
            k_new = self._key(u)
            if (k1, k2) < k_new:
                self._push(u)
                continue
            if self.g.get(u, INF) > self.rhs.get(u, INF):
                self.g[u] = self.rhs[u]
                for nr, nc, _ in _neighbors(u, self.masks.shape, self.cfg.connectivity):
                    self._update_vertex((nr, nc), free, penalty)
            else:
                self.g[u] = INF
                self._update_vertex(u, free, penalty)
                for nr, nc, _ in _neighbors(u, self.masks.shape, self.cfg.connectivity):
                    self._update_vertex((nr, nc), free, penalty)


def dstar_init(source, start: Cell, goal: Cell, cfg: Optional[PlannerConfig] = None) -> DStarState:
    state = DStarState(source, start, goal, cfg)
    free = state.masks.free()
    if not free[start]:
        raise NoPathError(f"start cell {start} is not free")
    return state


def dstar_move(state: DStarState, new_start: Cell) -> DStarState:
    """Advance the agent; the key offset absorbs the heuristic drift."""
    if new_start != state.start:
        state.km += _heuristic(state.last, new_start, state.cfg.connectivity)
        state.last = new_start
        state.start = new_start
    return state


def dstar_update(state: DStarState, changed_cells: Iterable[Cell]) -> DStarState:
    """Repair after traversability flips; clearance couples a 5x5 block."""
    state.masks.refresh()
    free = state.masks.free()
    penalty = state.masks.penalty() if state.cfg.clearance_shaping else None
    h, w = state.masks.shape
    affected: set[Cell] = set()
    for r, c in changed_cells:
        for dr in range(-2, 3):
            for dc in range(-2, 3):
                nr, nc = r + dr, c + dc
                if 0 <= nr < h and 0 <= nc < w:
                    affected.add((nr, nc))
    for u in sorted(affected):
        state._update_vertex(u, free, penalty)
    return state


def dstar_extract(state: DStarState) -> Path:
    """Current shortest path; exact cost parity with a fresh A* search."""
    state._compute()
    free = state.masks.free()
    penalty = state.masks.penalty() if state.cfg.clearance_shaping else None
    if not free[state.start]:
        raise NoPathError(f"start cell {state.start} is not free")
    if state.rhs.get(state.start, INF) >= INF:
        raise NoPathError(f"goal {state.goal} unreachable from {state.start}")
    cells = [state.start]
    total = 0
    cur = state.start
    guard = state.masks.shape[0] * state.masks.shape[1] + 1
    while cur != state.goal:
        best: Optional[tuple[int, int, int]] = None
        best_cell: Optional[Cell] = None
        for nr, nc, move in _neighbors(cur, state.masks.shape, state.cfg.connectivity):
            gv = state.g.get((nr, nc), INF)
            if gv >= INF:
                continue
            cost = state._edge_cost(cur, (nr, nc), move, free, penalty)
            if cost >= INF:
                continue
            key = (gv + cost, nr, nc)
            if best is None or key < best:
                best = key
                best_cell = (nr, nc)
        if best_cell is None:
            raise NoPathError("path extraction failed: no viable successor")
        total += best[0] - state.g[best_cell]
        cur = best_cell
        cells.append(cur)
        guard -= 1
        if guard <= 0:
            raise NoPathError("path extraction failed: cycle detected")
    return Path(cells=cells, cost=total / 10.0)


def check_replan(
    path: Path, source, agent_cell: Cell, timestep: int = 0, cfg: Optional[PlannerConfig] = None
) -> Optional[ReplanEvent]:
    """Trigger replanning on blocked path cells or off-path drift (>1 cell).

    Blockage is judged against raw free bits: a newly observed obstacle on
    any remaining path cell forces a replan.
    """
    if isinstance(source, SemanticGrid):
        free = source.free_mask()
    else:
        free = np.asarray(source, dtype=bool)
    cells = np.asarray(path.cells, dtype=np.int64)
    cheb = np.maximum(
        np.abs(cells[:, 0] - agent_cell[0]), np.abs(cells[:, 1] - agent_cell[1])
    )
    nearest = int(cheb.argmin())
    remaining = cells[nearest:]
    if not free[remaining[:, 0], remaining[:, 1]].all():
        return ReplanEvent(cause=ReplanCause.NEW_OBSTACLE, timestep=timestep)
    if cheb[nearest] > 1:
        return ReplanEvent(cause=ReplanCause.PATH_DEVIATION, timestep=timestep)
    return None


def agent_component(grid: SemanticGrid, agent_cell: Cell, inflate: int = 0) -> int:
    """Navigation component the agent can act in; 0 if none nearby.

    An agent standing inside the inflation band is mapped to the nearest
    navigable cell within a small neighborhood.
    """
    labels = grid.nav_labels(inflate)
    label = labels[agent_cell[0], agent_cell[1]]
    if label != 0:
        return int(label)
    h, w = labels.shape
    best: Optional[tuple[int, int, int, int]] = None
    for dr in range(-3, 4):
        for dc in range(-3, 4):
            r, c = agent_cell[0] + dr, agent_cell[1] + dc
            if 0 <= r < h and 0 <= c < w and labels[r, c] != 0:
                key = (max(abs(dr), abs(dc)), abs(dr) + abs(dc), r, c)
                if best is None or key < best:
                    best = (*key[:2], r, c)
    if best is None:
        return 0
    return int(labels[best[2], best[3]])


def nearest_reachable_cell(
    grid: SemanticGrid,
    point: Sequence[float],
    agent_cell: Cell,
    eps: float,
    cfg: Optional[PlannerConfig] = None,
) -> Optional[Cell]:
    """Navigable cell within eps of a world point, in the agent's component,
    closest to the point (ties by row then column)."""
    cfg = cfg or PlannerConfig()
    labels = grid.nav_labels(cfg.inflate_cells)
    target_label = agent_component(grid, agent_cell, cfg.inflate_cells)
    if target_label == 0:
        return None
    best: Optional[tuple[float, int, int]] = None
    for row, col in grid.cells_within(point, eps):
        if labels[row, col] != target_label:
            continue
        cx, cy = grid.cell_to_world((row, col))
        d = (cx - float(point[0])) ** 2 + (cy - float(point[1])) ** 2
        key = (d, row, col)
        if best is None or key < best:
            best = key
    if best is None:
        return None
    return best[1], best[2]
