"""Constrained genetic search over Bezier-parameterized scale schedules.

The loop: evaluate the population's context utilization, keep the best k,
breed the next generation from them by bounded mutation and point-swap
crossover, and repeat. All candidates stay on the search grid and keep
strictly increasing layer coordinates, so every individual that ever enters
a population is valid by construction.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .curve import BezierCurve, ControlPoint, sample_layer_scales, ScaleSchedule
from .fitness import AccuracyTriple, Evaluator, EvaluatorError
from .search_space import Individual, SearchGrid, is_valid, snap, validate


class ConfigError(ValueError):
    """A search configuration violates its own constraints."""


class InitializationError(RuntimeError):
    """Could not build a valid, distinct initial population."""


@dataclass(frozen=True)
class UtilizationWeights:
    lambda_first: float = 0.2
    lambda_middle: float = 0.3
    lambda_last: float = 0.5

    def __post_init__(self) -> None:
        if not (0 < self.lambda_first < self.lambda_middle < self.lambda_last):
            raise ConfigError(
                "weights must satisfy 0 < lambda_first < lambda_middle < lambda_last "
                f"(got {self.lambda_first}, {self.lambda_middle}, {self.lambda_last})"
            )


def utilization(acc: AccuracyTriple, weights: UtilizationWeights) -> float:
    """Weighted context utilization of a first/middle/last accuracy triple."""
    return (
        weights.lambda_first * acc.first
        + weights.lambda_middle * acc.middle
        + weights.lambda_last * acc.last
    )


@dataclass(frozen=True)
class GAConfig:
    n_layers: int = 30
    first_scaled_layer: int = 0
    population_size: int = 32
    mutation_size: int = 16
    crossover_size: int = 8
    top_k: int = 8
    max_iterations: int = 20
    mutate_probability: float = 0.3
    amplitude_x: float = 3.0
    amplitude_y: float = 0.3
    n_control: int = 4
    weights: UtilizationWeights = field(default_factory=UtilizationWeights)
    rng_seed: int = 0
    y_min: float = 1.0
    y_max: float = 2.0
    y_step: float = 0.1
    sampling_mode: str = "uniform_t"
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.top_k > self.population_size:
            raise ConfigError("top_k cannot exceed the population size")
        if not 0.0 <= self.mutate_probability <= 1.0:
            raise ConfigError("mutate probability must lie in [0, 1]")
        if self.n_control < 2:
            raise ConfigError("need at least 2 control points")
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be nonnegative")

    def grid(self) -> SearchGrid:
        return SearchGrid(self.n_layers, self.y_min, self.y_max, self.y_step)

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(obj: dict) -> "GAConfig":
        obj = dict(obj)
        w = obj.pop("weights")
        return GAConfig(weights=UtilizationWeights(**w), **obj)


def schedule_of(ind: Individual, config: GAConfig) -> ScaleSchedule:
    return sample_layer_scales(
        ind.curve, config.n_layers, config.sampling_mode, config.first_scaled_layer
    )


def cache_key(schedule: ScaleSchedule) -> tuple[int, ...]:
    # grid resolution is 0.1, finer distinctions carry no information
    return tuple(int(round(s * 10)) for s in schedule.scales)


def seed_individual(config: GAConfig, grid: SearchGrid) -> Individual:
    """First individual: evenly spread layer coordinates, all scales 1.5."""
    k = config.n_control - 1
    raw = [((grid.n_layers - 1) * i / k, 1.5) for i in range(config.n_control)]
    pts = tuple(snap(p, grid) for p in raw)
    ind = Individual(
        curve=BezierCurve(pts),
        id=0,
        pre_snap_points=tuple((x, y) for x, y in raw),
    )
    problems = validate(ind, grid)
    if problems:
        raise InitializationError(f"seed individual invalid: {problems}")
    return ind


def _y_index(y: float, grid: SearchGrid) -> int:
    return int(round((y - grid.y_min) / grid.y_step))


def mutate(
    ind: Individual,
    config: GAConfig,
    rng: np.random.Generator,
    new_id: int = -1,
) -> Individual:
    """Mutate each control point independently with the configured probability.

    New layer coordinates are drawn uniformly from grid points within
    amplitude_x of the old value, bounded exclusively by the neighboring
    points (processed left to right, so the result is always valid); new
    scale coordinates likewise within amplitude_y, clipped to the grid range.
    """
    grid = config.grid()
    nx = max(1, int(round(config.amplitude_x)))
    ny = max(1, int(round(config.amplitude_y / grid.y_step)))
    n_yvals = len(grid.y_values)
    xs = [int(round(p.x)) for p in ind.curve.points]
    ys = [_y_index(p.y, grid) for p in ind.curve.points]
    last = len(xs) - 1
    # x-resolution needs the curve to span the full layer range, so the end
    # points' layer coordinates stay pinned in that mode
    pin_ends = config.sampling_mode == "x_resolved"
    for i in range(len(xs)):
        if rng.random() >= config.mutate_probability:
            continue
        if not (pin_ends and i in (0, last)):
            left_excl = xs[i - 1] if i > 0 else -1
            right_excl = xs[i + 1] if i < last else grid.n_layers
            lo = max(left_excl + 1, xs[i] - nx)
            hi = min(right_excl - 1, xs[i] + nx)
            xs[i] = int(rng.integers(lo, hi + 1))
        y_lo = max(0, ys[i] - ny)
        y_hi = min(n_yvals - 1, ys[i] + ny)
        ys[i] = int(rng.integers(y_lo, y_hi + 1))
    pts = tuple(
        ControlPoint(float(x), grid.y_values[yi]) for x, yi in zip(xs, ys)
    )
    return Individual(curve=BezierCurve(pts), id=new_id, parent_ids=(ind.id,))


def crossover(
    a: Individual,
    b: Individual,
    config: GAConfig,
    rng: np.random.Generator,
    ids: tuple[int, int] = (-1, -1),
) -> tuple[Individual, Individual] | None:
    """Swap control points between two parents index-wise with probability 1/2.

    A swap that breaks the monotone-x constraint in either child is
    discarded and redrawn; after 2 * crossover_size failed draws the
    crossover is abandoned and None is returned.
    """
    grid = config.grid()
    pa, pb = a.curve.points, b.curve.points
    if len(pa) != len(pb):
        raise ValueError("parents must have the same number of control points")
    max_attempts = 2 * config.crossover_size
    for _ in range(max_attempts):
        mask = rng.random(len(pa)) < 0.5
        ca = tuple(pb[i] if mask[i] else pa[i] for i in range(len(pa)))
        cb = tuple(pa[i] if mask[i] else pb[i] for i in range(len(pb)))
        child_a = Individual(curve=BezierCurve(ca), id=ids[0], parent_ids=(a.id, b.id))
        child_b = Individual(curve=BezierCurve(cb), id=ids[1], parent_ids=(a.id, b.id))
        if is_valid(child_a, grid) and is_valid(child_b, grid):
            return child_a, child_b
    return None


def init_population(
    config: GAConfig, grid: SearchGrid, rng: np.random.Generator
) -> list[Individual]:
    """Seed individual plus population_size - 1 distinct mutations of it."""
    def curve_key(ind: Individual) -> tuple:
        return tuple((p.x, p.y) for p in ind.curve.points)

    seed = seed_individual(config, grid)
    pop = [seed]
    seen = {curve_key(seed)}
    attempts = 0
    budget = config.population_size * 20
    while len(pop) < config.population_size:
        if attempts >= budget:
            raise InitializationError(
                f"could not build {config.population_size} distinct valid individuals "
                f"in {budget} mutation attempts"
            )
        attempts += 1
        cand = mutate(seed, config, rng, new_id=len(pop))
        key = curve_key(cand)
        if key in seen:
            continue
        seen.add(key)
        pop.append(cand)
    return pop


@dataclass
class SearchResult:
    best: Individual | None
    top_k: list[Individual]
    history: list[dict]
    config: GAConfig
    evaluations: int
    complete: bool
    wall_time_s: float

    def to_dict(self) -> dict:
        return {
            "best": self.best.to_dict() if self.best else None,
            "top_k": [i.to_dict() for i in self.top_k],
            "history": self.history,
            "config": self.config.to_dict(),
            "evaluations": self.evaluations,
            "complete": self.complete,
            "wall_time_s": self.wall_time_s,
        }

    def best_schedule(self) -> ScaleSchedule | None:
        if self.best is None:
            return None
        return schedule_of(self.best, self.config)


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state

def _restore_rng(state: dict) -> np.random.Generator:
    rng = np.random.default_rng()
    rng.bit_generator.state = state
    return rng


class _Run:
    """Mutable state of one search run, checkpointable between generations."""

    def __init__(self, config: GAConfig, evaluator: Evaluator,
                 checkpoint_path: str | None = None):
        self.config = config
        self.evaluator = evaluator
        self.checkpoint_path = checkpoint_path
        self.grid = config.grid()
        self.rng = np.random.default_rng(config.rng_seed)
        self.cache: dict[tuple[int, ...], AccuracyTriple] = {}
        self.topk: list[Individual] = []
        self.history: list[dict] = []
        self.generation = 0
        self.evaluations = 0
        self.population = init_population(config, self.grid, self.rng)
        self.next_id = len(self.population)

    # -- persistence ------------------------------------------------------

    def checkpoint_dict(self) -> dict:
        return {
            "generation": self.generation,
            "rng_state": _rng_state(self.rng),
            "population": [i.to_dict() for i in self.population],
            "top_k": [i.to_dict() for i in self.topk],
            "history": self.history,
            "config": self.config.to_dict(),
            "next_id": self.next_id,
            "evaluations": self.evaluations,
            "cache": [[list(k), t.to_dict()] for k, t in self.cache.items()],
        }

    def write_checkpoint(self) -> None:
        if not self.checkpoint_path:
            return
        tmp = self.checkpoint_path + ".tmp"
        with open(tmp, "w") as f:
            json.dump(self.checkpoint_dict(), f)
        os.replace(tmp, self.checkpoint_path)

    @staticmethod
    def from_checkpoint(path: str, evaluator: Evaluator,
                        checkpoint_path: str | None = None) -> "_Run":
        with open(path) as f:
            obj = json.load(f)
        config = GAConfig.from_dict(obj["config"])
        run = _Run.__new__(_Run)
        run.config = config
        run.evaluator = evaluator
        run.checkpoint_path = checkpoint_path if checkpoint_path is not None else path
        run.grid = config.grid()
        run.rng = _restore_rng(obj["rng_state"])
        run.cache = {
            tuple(int(v) for v in k): AccuracyTriple.from_dict(t) for k, t in obj["cache"]
        }
        run.topk = [Individual.from_dict(d) for d in obj["top_k"]]
        run.history = obj["history"]
        run.generation = int(obj["generation"])
        run.evaluations = int(obj["evaluations"])
        run.population = [Individual.from_dict(d) for d in obj["population"]]
        run.next_id = int(obj["next_id"])
        return run

    # -- the loop ---------------------------------------------------------

    def _take_id(self) -> int:
        i = self.next_id
        self.next_id += 1
        return i

    def _evaluate_population(self) -> int:
        """Attach fitness to every individual, calling the backend only for
        schedules not seen before in this run. Returns new backend calls."""
        pending: list[tuple[tuple[int, ...], ScaleSchedule]] = []
        seen_keys: set[tuple[int, ...]] = set()
        for ind in self.population:
            if ind.fitness is not None:
                continue
            sched = schedule_of(ind, self.config)
            key = cache_key(sched)
            if key not in self.cache and key not in seen_keys:
                seen_keys.add(key)
                pending.append((key, sched))

        if self.config.jobs > 1 and len(pending) > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=self.config.jobs) as pool:
                triples = list(pool.map(lambda p: self.evaluator.evaluate(p[1]), pending))
            for (key, _), triple in zip(pending, triples):
                self.cache[key] = triple
        else:
            for key, sched in pending:
                self.cache[key] = self.evaluator.evaluate(sched)

        new_calls = len(pending)
        self.evaluations += new_calls
        for idx, ind in enumerate(self.population):
            if ind.fitness is not None:
                continue
            sched = schedule_of(ind, self.config)
            triple = self.cache[cache_key(sched)]
            record = triple.to_dict()
            record["utilization"] = utilization(triple, self.config.weights)
            self.population[idx] = ind.with_fitness(record)
        return new_calls

    def _update_topk(self) -> None:
        merged = {i.id: i for i in self.topk}
        for ind in self.population:
            merged[ind.id] = ind
        ranked = sorted(
            merged.values(), key=lambda i: (-i.fitness["utilization"], i.id)
        )
        self.topk = ranked[: self.config.top_k]

    def _record_history(self, new_calls: int) -> None:
        us = [i.fitness["utilization"] for i in self.population]
        self.history.append(
            {
                "generation": self.generation,
                "best_utilization": self.topk[0].fitness["utilization"],
                "mean_utilization": sum(us) / len(us),
                "new_evaluations": new_calls,
                "total_evaluations": self.evaluations,
            }
        )

    def _next_generation(self) -> list[Individual]:
        cfg = self.config
        k = len(self.topk)
        mutants = []
        for _ in range(cfg.mutation_size):
            parent = self.topk[int(self.rng.integers(k))]
            mutants.append(mutate(parent, cfg, self.rng, new_id=self._take_id()))
        children: list[Individual] = []
        pair_draws = 0
        while len(children) < cfg.crossover_size and pair_draws < 2 * cfg.crossover_size:
            pair_draws += 1
            if k >= 2:
                i = int(self.rng.integers(k))
                j = int(self.rng.integers(k - 1))
                if j >= i:
                    j += 1
            else:
                i = j = 0
            pair = crossover(
                self.topk[i], self.topk[j], cfg, self.rng,
                ids=(self.next_id, self.next_id + 1),
            )
            if pair is None:
                continue
            self.next_id += 2
            children.extend(pair)
        children = children[: cfg.crossover_size]
        return mutants + children + list(self.topk)

    def step(self) -> None:
        new_calls = self._evaluate_population()
        self._update_topk()
        self._record_history(new_calls)
        self.population = self._next_generation()
        self.generation += 1
        self.write_checkpoint()

    def finish(self, complete: bool, t0: float) -> SearchResult:
        best = self.topk[0] if self.topk else None
        return SearchResult(
            best=best,
            top_k=list(self.topk),
            history=self.history,
            config=self.config,
            evaluations=self.evaluations,
            complete=complete,
            wall_time_s=time.perf_counter() - t0,
        )

    def run_to_completion(self) -> SearchResult:
        t0 = time.perf_counter()
        cfg = self.config
        try:
            if cfg.max_iterations == 0:
                # degenerate search: grade the initial population only
                if not self.history:
                    new_calls = self._evaluate_population()
                    self._update_topk()
                    self._record_history(new_calls)
                    self.write_checkpoint()
                return self.finish(True, t0)
            while self.generation < cfg.max_iterations:
                self.step()
            return self.finish(True, t0)
        except EvaluatorError:
            return self.finish(False, t0)


def run(
    config: GAConfig,
    evaluator: Evaluator,
    checkpoint_path: str | None = None,
) -> SearchResult:
    """Run the full search loop; deterministic given the config's rng seed
    and a deterministic evaluator."""
    return _Run(config, evaluator, checkpoint_path).run_to_completion()


def resume(
    checkpoint: str,
    evaluator: Evaluator,
    checkpoint_path: str | None = None,
) -> SearchResult:
    """Continue a checkpointed search; the final result matches what the
    uninterrupted run would have produced."""
    return _Run.from_checkpoint(checkpoint, evaluator, checkpoint_path).run_to_completion()
