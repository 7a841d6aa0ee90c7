import heapq

import numpy as np
import pytest

from gridrelay.errors import NoPathError
from gridrelay.grid import FREE, OBSTACLE, SemanticGrid
from gridrelay.planner import (
    CLEARANCE_COST,
    DIAG_COST,
    ORTHO_COST,
    PlannerConfig,
    ReplanCause,
    astar,
    check_replan,
    dstar_extract,
    dstar_init,
    dstar_move,
    dstar_update,
    nearest_reachable_cell,
)


def dijkstra_cost(free, start, goal, cfg):
    """Uniform-cost-search oracle sharing only the cost model constants."""
    h, w = free.shape
    if not free[start] or not free[goal]:
        return None
    penalty = np.zeros_like(free)
    obst = ~free
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            rows = slice(max(0, dr), h + min(0, dr))
            cols = slice(max(0, dc), w + min(0, dc))
            src_rows = slice(max(0, -dr), h + min(0, -dr))
            src_cols = slice(max(0, -dc), w + min(0, -dc))
            penalty[rows, cols] |= obst[src_rows, src_cols]
    moves = [(-1, 0, ORTHO_COST), (1, 0, ORTHO_COST), (0, -1, ORTHO_COST), (0, 1, ORTHO_COST)]
    if cfg.connectivity == 8:
        moves += [(-1, -1, DIAG_COST), (-1, 1, DIAG_COST), (1, -1, DIAG_COST), (1, 1, DIAG_COST)]
    dist = {start: 0}
    heap = [(0, start)]
    while heap:
        d, cell = heapq.heappop(heap)
        if cell == goal:
            return d
        if d > dist.get(cell, 1 << 40):
            continue
        for dr, dc, base in moves:
            nr, nc = cell[0] + dr, cell[1] + dc
            if not (0 <= nr < h and 0 <= nc < w) or not free[nr, nc]:
                continue
            step = base + (CLEARANCE_COST if cfg.clearance_shaping and penalty[nr, nc] else 0)
            nd = d + step
            if nd < dist.get((nr, nc), 1 << 40):
                dist[(nr, nc)] = nd
                heapq.heappush(heap, (nd, (nr, nc)))
    return None


def random_grid(rng, h=20, w=20, p=0.3):
    free = rng.random((h, w)) > p
    return free


class TestAstar:
    def test_straight_corridor(self):
        free = np.ones((3, 10), dtype=bool)
        path = astar(free, (1, 2), (1, 7), PlannerConfig(clearance_shaping=False))
        assert len(path.cells) == 6
        assert path.cost == pytest.approx(5.0, rel=1e-9)

    def test_open_corridor_with_shaping_still_costs_steps(self):
        free = np.ones((9, 12), dtype=bool)
        path = astar(free, (4, 2), (4, 7))
        assert path.cost == pytest.approx(5.0, rel=1e-9)

    def test_walled_goal(self):
        free = np.ones((8, 8), dtype=bool)
        free[3:6, 3:6] = False
        free[4, 4] = True
        with pytest.raises(NoPathError):
            astar(free, (0, 0), (4, 4))

    def test_matches_dijkstra_oracle(self):
        rng = np.random.default_rng(13)
        cfg = PlannerConfig()
        checked = 0
        while checked < 300:
            free = random_grid(rng)
            cells = np.argwhere(free)
            if len(cells) < 2:
                continue
            start = tuple(cells[rng.integers(len(cells))])
            goal = tuple(cells[rng.integers(len(cells))])
            oracle = dijkstra_cost(free, start, goal, cfg)
            try:
                got = astar(free, start, goal, cfg)
                assert oracle is not None
                assert got.cost * 10 == pytest.approx(oracle, abs=1e-9)
                assert got.cells[0] == start and got.cells[-1] == goal
                for a, b in zip(got.cells, got.cells[1:]):
                    assert abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1
                    assert free[b]
            except NoPathError:
                assert oracle is None
            checked += 1

    def test_eight_connected_matches_oracle(self):
        rng = np.random.default_rng(29)
        cfg = PlannerConfig(connectivity=8)
        for _ in range(100):
            free = random_grid(rng, h=15, w=15)
            cells = np.argwhere(free)
            start = tuple(cells[rng.integers(len(cells))])
            goal = tuple(cells[rng.integers(len(cells))])
            oracle = dijkstra_cost(free, start, goal, cfg)
            try:
                got = astar(free, start, goal, cfg)
                assert got.cost * 10 == pytest.approx(oracle, abs=1e-9)
            except NoPathError:
                assert oracle is None

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        free = random_grid(rng)
        cells = np.argwhere(free)
        start, goal = tuple(cells[0]), tuple(cells[-1])
        try:
            p1 = astar(free, start, goal)
            p2 = astar(free, start, goal)
            assert p1.cells == p2.cells
        except NoPathError:
            pass


class TestDStar:
    def test_no_changes_equals_astar(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            free = random_grid(rng, 15, 15, 0.25)
            cells = np.argwhere(free)
            start = tuple(cells[rng.integers(len(cells))])
            goal = tuple(cells[rng.integers(len(cells))])
            try:
                fresh = astar(free, start, goal)
            except NoPathError:
                fresh = None
            state = dstar_init(free, start, goal)
            try:
                inc = dstar_extract(state)
                assert fresh is not None
                assert inc.cost == pytest.approx(fresh.cost, abs=1e-12)
            except NoPathError:
                assert fresh is None

    def test_wall_insertion_and_removal(self):
        free = np.ones((10, 14), dtype=bool)
        state = dstar_init(free, (5, 1), (5, 12))
        base = dstar_extract(state)
        assert base.cost == pytest.approx(11.0, rel=1e-9)
        # Wall across the corridor except one gap.
        free[1:9, 6] = False
        free[8, 6] = True
        dstar_update(state, [(r, 6) for r in range(1, 9)])
        blocked_cost = dstar_extract(state).cost
        fresh = astar(free, (5, 1), (5, 12))
        assert blocked_cost == pytest.approx(fresh.cost, abs=1e-12)
        assert blocked_cost > base.cost
        # Reopen: cost must drop back to the fresh optimum.
        free[5, 6] = True
        dstar_update(state, [(5, 6)])
        reopened = dstar_extract(state).cost
        fresh2 = astar(free, (5, 1), (5, 12))
        assert reopened == pytest.approx(fresh2.cost, abs=1e-12)
        assert reopened < blocked_cost

    def test_random_change_sequences_match_astar(self):
        rng = np.random.default_rng(21)
        cases = 0
        while cases < 120:
            free = random_grid(rng, 14, 14, 0.22)
            cells = np.argwhere(free)
            start = tuple(cells[rng.integers(len(cells))])
            goal = tuple(cells[rng.integers(len(cells))])
            if start == goal:
                continue
            try:
                astar(free, start, goal)
            except NoPathError:
                continue
            state = dstar_init(free, start, goal)
            agent = start
            for _ in range(6):
                flips = rng.integers(0, 14 * 14, size=rng.integers(1, 4))
                changed = []
                for flat in flips:
                    cell = (int(flat // 14), int(flat % 14))
                    if cell in (agent, goal):
                        continue
                    free[cell] = ~free[cell]
                    changed.append(cell)
                dstar_update(state, changed)
                try:
                    fresh = astar(free, agent, goal)
                except NoPathError:
                    fresh = None
                try:
                    inc = dstar_extract(state)
                    assert fresh is not None
                    assert inc.cost == pytest.approx(fresh.cost, abs=1e-12)
                    if len(inc.cells) > 1 and free[inc.cells[1]]:
                        agent = inc.cells[1]
                        dstar_move(state, agent)
                except NoPathError:
                    assert fresh is None
                cases += 1

    def test_unreachable_goal_raises(self):
        free = np.ones((8, 8), dtype=bool)
        free[4, :] = False
        state = dstar_init(free, (2, 2), (6, 6))
        with pytest.raises(NoPathError):
            dstar_extract(state)


class TestCheckReplan:
    def make_grid_path(self):
        grid = SemanticGrid(width=20, height=20, resolution=0.05, categories=())
        grid.bits[:, :, FREE] = True
        grid.version += 1
        path = astar(grid, (5, 2), (5, 12), PlannerConfig(inflate_cells=0))
        return grid, path

    def test_clean_run(self):
        grid, path = self.make_grid_path()
        assert check_replan(path, grid, (5, 2)) is None

    def test_new_obstacle_ahead(self):
        grid, path = self.make_grid_path()
        grid.bits[5, 8, FREE] = False
        grid.bits[5, 8, OBSTACLE] = True
        grid.version += 1
        event = check_replan(path, grid, (5, 4))
        assert event is not None and event.cause == ReplanCause.NEW_OBSTACLE

    def test_lateral_deviation(self):
        grid, path = self.make_grid_path()
        event = check_replan(path, grid, (7, 4))
        assert event is not None and event.cause == ReplanCause.PATH_DEVIATION

    def test_passed_obstacle_ignored(self):
        grid, path = self.make_grid_path()
        grid.bits[5, 2, FREE] = False
        grid.bits[5, 2, OBSTACLE] = True
        grid.version += 1
        assert check_replan(path, grid, (5, 10)) is None


class TestNearestReachableCell:
    def test_prefers_component_of_agent(self):
        grid = SemanticGrid(width=20, height=20, resolution=0.05, categories=())
        grid.bits[2:6, 2:10, FREE] = True
        grid.bits[10:14, 2:10, FREE] = True  # disconnected block
        grid.version += 1
        target = grid.cell_to_world((11, 5))
        got = nearest_reachable_cell(grid, target, (3, 3), eps=0.6, cfg=PlannerConfig(inflate_cells=0))
        if got is not None:
            assert 2 <= got[0] < 6  # stays in the agent's component

    def test_inflation_respected(self):
        grid = SemanticGrid(width=30, height=30, resolution=0.05, categories=())
        grid.bits[:, :, FREE] = True
        grid.bits[10, 10, FREE] = False
        grid.bits[10, 10, OBSTACLE] = True
        grid.version += 1
        target = grid.cell_to_world((10, 11))
        cfg = PlannerConfig(inflate_cells=2)
        got = nearest_reachable_cell(grid, target, (20, 20), eps=0.4, cfg=cfg)
        assert got is not None
        assert max(abs(got[0] - 10), abs(got[1] - 10)) > 2
