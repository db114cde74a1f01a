"""Bezier curves over the (layer index, scaling factor) plane.

A curve is an ordered list of control points ``(x, y)`` where ``x`` is a
layer coordinate and ``y`` a positional-encoding scaling factor. Sampling
the curve turns it into a per-layer schedule of scaling factors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field


class CoverageError(ValueError):
    """The curve's x-span does not cover the requested layer range."""


@dataclass(frozen=True)
class ControlPoint:
    x: float
    y: float

    def as_pair(self) -> list[float]:
        return [self.x, self.y]


@dataclass(frozen=True)
class BezierCurve:
    """Control polygon of a Bezier curve of degree ``len(points) - 1``.

    The container itself accepts any point list with at least two points;
    structural constraints (monotone x, bounds, grid membership) are checked
    by ``search_space.validate`` so that invalid candidates can be inspected
    rather than rejected at construction time.
    """

    points: tuple[ControlPoint, ...]

    def __post_init__(self) -> None:
        if len(self.points) < 2:
            raise ValueError("a Bezier curve needs at least 2 control points")

    @property
    def degree(self) -> int:
        return len(self.points) - 1

    @property
    def is_x_monotone(self) -> bool:
        xs = [p.x for p in self.points]
        return all(a < b for a, b in zip(xs, xs[1:]))

    @staticmethod
    def from_pairs(pairs) -> "BezierCurve":
        return BezierCurve(tuple(ControlPoint(float(x), float(y)) for x, y in pairs))

    def to_pairs(self) -> list[list[float]]:
        return [p.as_pair() for p in self.points]

    def to_json(self) -> str:
        return json.dumps(self.to_pairs())

    @staticmethod
    def from_json(text: str) -> "BezierCurve":
        return BezierCurve.from_pairs(json.loads(text))


@dataclass(frozen=True)
class ScaleSchedule:
    """Per-layer scaling factors for the scaled portion of a model.

    ``scales[k]`` applies to model layer ``first_scaled_layer + k``; layers
    before ``first_scaled_layer`` stay unscaled. ``n_clamped`` counts sampled
    values that had to be lifted to the 1.0 floor.
    """

    scales: tuple[float, ...]
    first_scaled_layer: int = 0
    n_clamped: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        if any(s < 1.0 for s in self.scales):
            raise ValueError("every scaling factor must be >= 1.0")

    def __len__(self) -> int:
        return len(self.scales)

    def to_dict(self) -> dict:
        return {"scales": list(self.scales), "first_scaled_layer": self.first_scaled_layer}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @staticmethod
    def from_dict(obj: dict) -> "ScaleSchedule":
        return ScaleSchedule(
            tuple(float(s) for s in obj["scales"]),
            int(obj.get("first_scaled_layer", 0)),
        )

    @staticmethod
    def from_json(text: str) -> "ScaleSchedule":
        return ScaleSchedule.from_dict(json.loads(text))


def bernstein_weight(i: int, n: int, t: float) -> float:
    """Bernstein basis polynomial C(n,i) * (1-t)^(n-i) * t^i."""
    if not 0 <= i <= n:
        raise ValueError(f"basis index {i} outside 0..{n}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"parameter t={t} outside [0, 1]")
    return math.comb(n, i) * (1.0 - t) ** (n - i) * t**i


def evaluate(curve: BezierCurve, t: float) -> tuple[float, float]:
    """Evaluate the curve at parameter ``t`` via the Bernstein form."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"parameter t={t} outside [0, 1]")
    n = curve.degree
    x = 0.0
    y = 0.0
    for i, p in enumerate(curve.points):
        w = bernstein_weight(i, n, t)
        x += w * p.x
        y += w * p.y
    return x, y


def de_casteljau(curve: BezierCurve, t: float) -> tuple[float, float]:
    """Evaluate by repeated linear interpolation.

    Independent of :func:`evaluate`; the two must agree to 1e-12 relative
    error, which the test suite checks over random curves.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"parameter t={t} outside [0, 1]")
    xs = [p.x for p in curve.points]
    ys = [p.y for p in curve.points]
    while len(xs) > 1:
        xs = [(1.0 - t) * a + t * b for a, b in zip(xs, xs[1:])]
        ys = [(1.0 - t) * a + t * b for a, b in zip(ys, ys[1:])]
    return xs[0], ys[0]


def solve_t_for_x(curve: BezierCurve, x_target: float, tol: float = 1e-9, max_iter: int = 80) -> float:
    """Invert the x-component of a monotone-x curve by bisection.

    Monotone control x makes x(t) non-decreasing (its derivative is a
    Bernstein combination of the forward differences), so bisection is exact.
    """
    if not curve.is_x_monotone:
        raise ValueError("x-inversion requires strictly increasing control x")
    x_lo = curve.points[0].x
    x_hi = curve.points[-1].x
    if not x_lo <= x_target <= x_hi:
        raise CoverageError(f"x={x_target} outside curve span [{x_lo}, {x_hi}]")
    if x_target == x_lo:
        return 0.0
    if x_target == x_hi:
        return 1.0
    lo, hi = 0.0, 1.0
    t = 0.5
    for _ in range(max_iter):
        t = 0.5 * (lo + hi)
        x, _ = evaluate(curve, t)
        if abs(x - x_target) <= tol:
            return t
        if x < x_target:
            lo = t
        else:
            hi = t
    return t


def sample_layer_scales(
    curve: BezierCurve,
    n_layers: int,
    mode: str = "uniform_t",
    first_scaled_layer: int = 0,
) -> ScaleSchedule:
    """Turn a curve into one scaling factor per layer slot.

    ``uniform_t`` samples y at t = k/(n_layers-1); ``x_resolved`` samples y
    at the t whose x-component equals the layer index k. Values below 1.0
    are clamped to 1.0 and counted in ``n_clamped``.
    """
    if n_layers < 2:
        raise ValueError("need at least 2 layers to sample")
    if mode == "uniform_t":
        ys = [evaluate(curve, k / (n_layers - 1))[1] for k in range(n_layers)]
    elif mode == "x_resolved":
        span_lo, span_hi = curve.points[0].x, curve.points[-1].x
        if span_lo > 0.0 or span_hi < n_layers - 1:
            raise CoverageError(
                f"curve x-span [{span_lo}, {span_hi}] does not cover [0, {n_layers - 1}]"
            )
        ys = [evaluate(curve, solve_t_for_x(curve, float(k)))[1] for k in range(n_layers)]
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    clamped = sum(1 for y in ys if y < 1.0)
    scales = tuple(max(1.0, y) for y in ys)
    return ScaleSchedule(scales, first_scaled_layer, n_clamped=clamped)
