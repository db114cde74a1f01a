"""Discretized control-point grid and candidate validity.

Control points live on a finite grid: layer coordinates with step 1 and
scale coordinates with step 0.1 (eleven values from 1.0 to 2.0 by default).
Candidates are curves whose points all sit on the grid with strictly
increasing layer coordinates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .curve import BezierCurve, ControlPoint


@dataclass(frozen=True)
class SearchGrid:
    n_layers: int
    y_min: float = 1.0
    y_max: float = 2.0
    y_step: float = 0.1

    def __post_init__(self) -> None:
        if self.n_layers < 1:
            raise ValueError("grid needs at least 1 layer")
        if not self.y_min < self.y_max:
            raise ValueError("y_min must be below y_max")

    @property
    def x_values(self) -> tuple[float, ...]:
        return tuple(float(i) for i in range(self.n_layers))

    @property
    def y_values(self) -> tuple[float, ...]:
        n = round((self.y_max - self.y_min) / self.y_step) + 1
        return tuple(round(self.y_min + k * self.y_step, 12) for k in range(n))

    def contains(self, point: ControlPoint, tol: float = 1e-9) -> bool:
        on_x = any(abs(point.x - gx) <= tol for gx in self.x_values)
        on_y = any(abs(point.y - gy) <= tol for gy in self.y_values)
        return on_x and on_y


def _nearest(value: float, grid_values: tuple[float, ...]) -> float:
    """Nearest grid value, ties broken toward the smaller one."""
    best = grid_values[0]
    best_d = abs(value - best)
    for g in grid_values[1:]:
        d = abs(value - g)
        if d < best_d - 1e-12:
            best, best_d = g, d
        # tie: earlier (smaller) value already held, keep it
    return best


def snap(point: tuple[float, float], grid: SearchGrid) -> ControlPoint:
    """Snap an off-grid point to the nearest grid point."""
    x, y = point
    if not (grid.x_values[0] <= x <= grid.x_values[-1]):
        raise ValueError(f"x={x} outside grid box [0, {grid.n_layers - 1}]")
    if not (grid.y_min <= y <= grid.y_max):
        raise ValueError(f"y={y} outside grid box [{grid.y_min}, {grid.y_max}]")
    return ControlPoint(_nearest(x, grid.x_values), _nearest(y, grid.y_values))


@dataclass(frozen=True)
class Individual:
    """A candidate curve plus its (optional) fitness record and lineage."""

    curve: BezierCurve
    id: int = -1
    parent_ids: tuple[int, ...] = ()
    fitness: dict | None = field(default=None, compare=False)
    pre_snap_points: tuple[tuple[float, float], ...] | None = field(default=None, compare=False)

    def with_fitness(self, fitness: dict) -> "Individual":
        return replace(self, fitness=fitness)

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "parent_ids": list(self.parent_ids),
            "points": self.curve.to_pairs(),
        }
        if self.fitness is not None:
            out["fitness"] = self.fitness
        if self.pre_snap_points is not None:
            out["pre_snap_points"] = [list(p) for p in self.pre_snap_points]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @staticmethod
    def from_dict(obj: dict) -> "Individual":
        pre = obj.get("pre_snap_points")
        return Individual(
            curve=BezierCurve.from_pairs(obj["points"]),
            id=int(obj["id"]),
            parent_ids=tuple(int(p) for p in obj.get("parent_ids", [])),
            fitness=obj.get("fitness"),
            pre_snap_points=tuple(tuple(p) for p in pre) if pre else None,
        )


def validate(ind: Individual, grid: SearchGrid) -> list[str]:
    """Constraint report for a candidate; empty list means valid.

    Never raises: invalid candidates are described, one message per
    violated constraint.
    """
    problems: list[str] = []
    pts = ind.curve.points
    for i, p in enumerate(pts):
        if not (0.0 <= p.x <= grid.n_layers - 1):
            problems.append(f"point {i}: x={p.x} outside [0, {grid.n_layers - 1}]")
        if not (grid.y_min <= p.y <= grid.y_max):
            problems.append(f"point {i}: y={p.y} outside [{grid.y_min}, {grid.y_max}]")
        if not grid.contains(p):
            problems.append(f"point {i}: ({p.x}, {p.y}) not on the grid")
    for i in range(len(pts) - 1):
        if not pts[i].x < pts[i + 1].x:
            problems.append(f"x not strictly increasing at points {i},{i + 1}")
    return problems


def is_valid(ind: Individual, grid: SearchGrid) -> bool:
    return not validate(ind, grid)


def space_size(grid: SearchGrid, n_control: int) -> int:
    """Number of candidate curves: (|x| * |y|) ** n_control, exact."""
    if n_control < 1:
        raise ValueError("need at least one control point")
    return (len(grid.x_values) * len(grid.y_values)) ** n_control


def brute_force_size(grid: SearchGrid) -> int:
    """Number of unconstrained per-layer assignments: |y| ** n_layers, exact."""
    return len(grid.y_values) ** grid.n_layers
