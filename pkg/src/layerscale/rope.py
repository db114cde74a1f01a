"""Rotary position embedding numerics and analysis helpers.

Covers plane rotation with an optional position-compression scale,
relative-distance attention scores, long-range decay curves, attention
entropy, and the rise-then-fall scaling schedule used when extending a
context window beyond its pretrained length.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .curve import ScaleSchedule


@dataclass(frozen=True)
class RotaryConfig:
    head_dim: int
    base: float = 10000.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.head_dim < 2 or self.head_dim % 2 != 0:
            raise ValueError("head_dim must be even and >= 2")
        if self.base <= 1.0:
            raise ValueError("base must exceed 1")
        if self.scale < 1.0:
            raise ValueError("scale must be >= 1")


def frequencies(config: RotaryConfig) -> np.ndarray:
    """Per-plane angular frequencies base^(-2j/d), j = 0..d/2-1."""
    j = np.arange(config.head_dim // 2)
    return config.base ** (-2.0 * j / config.head_dim)


def rotate(v: Sequence[float], position: int, config: RotaryConfig) -> np.ndarray:
    """Rotate each 2-plane (v[2j], v[2j+1]) by (position / scale) * theta_j."""
    v = np.asarray(v, dtype=float)
    if v.shape != (config.head_dim,):
        raise ValueError(f"vector length {v.shape} does not match head_dim {config.head_dim}")
    ang = (position / config.scale) * frequencies(config)
    c, s = np.cos(ang), np.sin(ang)
    out = np.empty_like(v)
    out[0::2] = v[0::2] * c - v[1::2] * s
    out[1::2] = v[0::2] * s + v[1::2] * c
    return out


def attention_score(
    q: Sequence[float], k: Sequence[float], m: int, n: int, config: RotaryConfig
) -> float:
    """Dot product of the rotated query at m and rotated key at n.

    Depends on (m, n) only through m - n, which is the property that makes
    the rotation a relative position encoding.
    """
    return float(rotate(q, m, config) @ rotate(k, n, config))


@dataclass(frozen=True)
class DecayCurve:
    distances: tuple[int, ...]
    scores: tuple[float, ...]
    envelope: tuple[float, ...]
    config: RotaryConfig

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["distance", "score", "envelope"])
            for d, s, e in zip(self.distances, self.scores, self.envelope):
                w.writerow([d, repr(s), repr(e)])


def decay_curve(
    config: RotaryConfig, max_distance: int, probe: Sequence[float] | None = None
) -> DecayCurve:
    """Score of a probe against itself at every relative distance.

    The raw scores oscillate, so a monotone upper envelope is emitted
    alongside them: envelope[d] is the running maximum of the scores from
    distance d onward, computed over an internally extended range (twice
    max_distance) so the hull is not biased by truncation at the right edge.
    """
    if max_distance < 1:
        raise ValueError("max_distance must be >= 1")
    if probe is None:
        probe = np.ones(config.head_dim)
    probe = np.asarray(probe, dtype=float)
    if probe.shape != (config.head_dim,):
        raise ValueError("probe length does not match head_dim")

    theta = frequencies(config)
    extended = 2 * max_distance
    dist = np.arange(extended + 1)
    ang = np.outer(dist / config.scale, theta)
    # R(a)u . u per plane is (ue^2 + uo^2) cos a; cross terms cancel
    ue, uo = probe[0::2], probe[1::2]
    scores = (np.cos(ang) * (ue * ue + uo * uo)).sum(axis=1)
    env = np.maximum.accumulate(scores[::-1])[::-1]
    keep = max_distance + 1
    return DecayCurve(
        distances=tuple(int(d) for d in dist[:keep]),
        scores=tuple(float(v) for v in scores[:keep]),
        envelope=tuple(float(v) for v in env[:keep]),
        config=config,
    )


def entropy(weights: Sequence[float]) -> float:
    """Shannon entropy in nats of a nonnegative weight vector.

    Weights are normalized to sum to one first; zero weights contribute
    nothing (0 log 0 = 0).
    """
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or np.any(w < 0):
        raise ValueError("weights must be nonnegative and nonempty")
    total = w.sum()
    if total <= 0:
        raise ValueError("at least one weight must be positive")
    p = w / total
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


@dataclass(frozen=True)
class EntropyProfile:
    layers: tuple[int, ...]
    values: tuple[float, ...]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["layer", "entropy"])
            for l, v in zip(self.layers, self.values):
                w.writerow([l, repr(v)])


def extrapolation_schedule(
    n_layers: int,
    pretrained_window: int,
    target_window: int,
    interval: float = 0.3,
    peak_layer: int | None = None,
    first_scaled_layer: int = 0,
) -> ScaleSchedule:
    """Rise-then-fall schedule for extending the context window.

    The base factor is s = target / pretrained. The schedule climbs linearly
    from s at layer 0 to s + interval at ``peak_layer`` (default: the middle
    layer), then falls linearly back to s at the last layer.
    """
    if target_window < pretrained_window:
        raise ValueError("target window must be at least the pretrained window")
    if n_layers < 1:
        raise ValueError("need at least one layer")
    if interval < 0:
        raise ValueError("interval must be nonnegative")
    if peak_layer is None:
        peak_layer = n_layers // 2
    if not 0 <= peak_layer < n_layers:
        raise ValueError(f"peak layer {peak_layer} outside 0..{n_layers - 1}")

    s = target_window / pretrained_window
    values = []
    for k in range(n_layers):
        if k <= peak_layer:
            frac = k / peak_layer if peak_layer > 0 else 1.0
        else:
            frac = (n_layers - 1 - k) / (n_layers - 1 - peak_layer)
        values.append(s + interval * frac)
    return ScaleSchedule(tuple(values), first_scaled_layer)


def ntk_base(config: RotaryConfig, factor: float) -> float:
    """Adjusted rotary base for context extension by base scaling.

    Uses the common convention base' = base * factor^(d / (d - 2)), which
    leaves the fastest plane untouched while slowing the others.
    """
    if config.head_dim <= 2:
        raise ValueError("base scaling needs head_dim > 2")
    if factor < 1.0:
        raise ValueError("extension factor must be >= 1")
    d = config.head_dim
    return config.base * factor ** (d / (d - 2))


def write_csv_rows(path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow(list(row))
