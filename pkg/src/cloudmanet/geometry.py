"""Positions, the fixed-area cell grid and the cell transition matrix."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class OutOfRegion(ValueError):
    pass


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"non-finite position {self.x, self.y, self.z}")


@dataclass(frozen=True, order=True)
class CellIndex:
    col: int
    row: int


@dataclass(frozen=True)
class CellGrid:
    origin: Position
    cell_size: float
    cols: int
    rows: int

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError("cell_size must be > 0")
        if self.cols < 1 or self.rows < 1:
            raise ValueError("grid needs at least one column and one row")

    @property
    def n_cells(self) -> int:
        return self.cols * self.rows

    @property
    def width(self) -> float:
        return self.cols * self.cell_size

    @property
    def height(self) -> float:
        return self.rows * self.cell_size

    def contains(self, p: Position) -> bool:
        dx = p.x - self.origin.x
        dy = p.y - self.origin.y
        return 0 <= dx < self.width and 0 <= dy < self.height

    def index(self, c: CellIndex) -> int:
        """Row-major flat index; this is the order used by the transition matrix."""
        return c.row * self.cols + c.col

    def cell(self, i: int) -> CellIndex:
        return CellIndex(i % self.cols, i // self.cols)

    def center(self, c: CellIndex) -> Position:
        return Position(
            self.origin.x + (c.col + 0.5) * self.cell_size,
            self.origin.y + (c.row + 0.5) * self.cell_size,
        )

    def clamp(self, p: Position) -> Position:
        # Region is half-open, so the upper edge maps to the largest float below it.
        hi_x = math.nextafter(self.origin.x + self.width, -math.inf)
        hi_y = math.nextafter(self.origin.y + self.height, -math.inf)
        return Position(
            min(max(p.x, self.origin.x), hi_x),
            min(max(p.y, self.origin.y), hi_y),
            p.z,
        )


def distance(a: Position, b: Position) -> float:
    dx = b.x - a.x
    dy = b.y - a.y
    dz = b.z - a.z
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def cell_of(p: Position, g: CellGrid) -> CellIndex:
    if not g.contains(p):
        raise OutOfRegion(f"{p} lies outside the grid region")
    col = math.floor((p.x - g.origin.x) / g.cell_size)
    row = math.floor((p.y - g.origin.y) / g.cell_size)
    # Division can round up onto the next cell for points just below an edge.
    return CellIndex(min(col, g.cols - 1), min(row, g.rows - 1))


def neighbors(c: CellIndex, g: CellGrid) -> set[CellIndex]:
    out = set()
    for dc, dr in ((0, 1), (0, -1), (-1, 0), (1, 0)):
        col, row = c.col + dc, c.row + dr
        if 0 <= col < g.cols and 0 <= row < g.rows:
            out.add(CellIndex(col, row))
    return out


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    grid: CellGrid
    p: np.ndarray

    @property
    def n(self) -> int:
        return self.p.shape[0]


def build_transition_matrix(g: CellGrid, self_weight: float = 0.2) -> TransitionMatrix:
    """Row-stochastic matrix: ``self_weight`` on the diagonal, the rest split
    evenly over the cell's existing up/down/left/right neighbours.

    A cell without neighbours (1x1 grid) keeps all its mass on itself.
    """
    if not 0.0 <= self_weight <= 1.0:
        raise ValueError("self_weight must be a probability")
    n = g.n_cells
    p = np.zeros((n, n))
    for i in range(n):
        nbrs = neighbors(g.cell(i), g)
        if not nbrs:
            p[i, i] = 1.0
            continue
        p[i, i] = self_weight
        share = (1.0 - self_weight) / len(nbrs)
        for c in nbrs:
            p[i, g.index(c)] = share
    p.setflags(write=False)
    return TransitionMatrix(g, p)
