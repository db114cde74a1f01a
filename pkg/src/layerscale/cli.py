"""Command-line interface: search, analyze, eval.

Configuration precedence is flags > config file > defaults. The config file
is an INI document whose sections mirror the library's config objects. Every
run writes a manifest listing its outputs, seeds, and tool version so results
can be reproduced byte for byte (timestamps aside).

Exit codes: 0 success, 2 usage or configuration error, 3 evaluator failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import shlex
import sys
import time
from dataclasses import fields, replace

from . import __version__
from .curve import BezierCurve, ScaleSchedule, sample_layer_scales
from .evolution import ConfigError, GAConfig, UtilizationWeights, resume, run, utilization
from .fitness import (
    AccuracyTriple,
    ConstantEvaluator,
    EvaluatorError,
    PlantedCurveEvaluator,
    subprocess_evaluator,
    tcp_evaluator,
)
from .rope import (
    EntropyProfile,
    RotaryConfig,
    decay_curve,
    entropy,
    extrapolation_schedule,
)
from .toy_attention import (
    RetrievalTask,
    ToyModel,
    ToyModelConfig,
    ToyRetrievalEvaluator,
    forward,
    token_stream,
)

# hidden schedule used when a planted oracle is requested without an explicit
# target: a rise-then-fall grid curve over the scaled layers
DEFAULT_HIDDEN_POINTS = [[0.0, 1.2], [8.0, 1.8], [20.0, 1.6], [29.0, 1.1]]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EVALUATOR = 3


def _read_config_file(path: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"config file {path!r} not found or unreadable")
    return parser


_GA_FIELD_TYPES = {f.name: f.type for f in fields(GAConfig)}


def _ga_config_from(file_cfg: configparser.ConfigParser | None, args) -> GAConfig:
    values: dict = {}
    if file_cfg and file_cfg.has_section("search"):
        sec = file_cfg["search"]
        for name in _GA_FIELD_TYPES:
            if name in ("weights",) or name not in sec:
                continue
            raw = sec[name]
            if name in ("mutate_probability", "amplitude_x", "amplitude_y",
                        "y_min", "y_max", "y_step"):
                values[name] = float(raw)
            elif name == "sampling_mode":
                values[name] = raw
            else:
                values[name] = int(raw)
    weights = {}
    if file_cfg and file_cfg.has_section("weights"):
        for key in ("lambda_first", "lambda_middle", "lambda_last"):
            if key in file_cfg["weights"]:
                weights[key] = float(file_cfg["weights"][key])

    flag_map = {
        "n_layers": args.n_layers,
        "first_scaled_layer": args.first_scaled_layer,
        "population_size": args.population,
        "mutation_size": args.mutation_size,
        "crossover_size": args.crossover_size,
        "top_k": args.top_k,
        "max_iterations": args.generations,
        "mutate_probability": args.mutate_probability,
        "amplitude_x": args.amplitude_x,
        "amplitude_y": args.amplitude_y,
        "n_control": args.control_points,
        "rng_seed": args.seed,
        "sampling_mode": args.sampling_mode,
        "jobs": args.jobs,
    }
    for name, val in flag_map.items():
        if val is not None:
            values[name] = val
    if args.weights is not None:
        lf, lm, ll = (float(x) for x in args.weights.split(","))
        weights = {"lambda_first": lf, "lambda_middle": lm, "lambda_last": ll}
    if weights:
        values["weights"] = UtilizationWeights(**weights)
    return GAConfig(**values)


def _toy_config_from(file_cfg: configparser.ConfigParser | None) -> ToyModelConfig:
    if not (file_cfg and file_cfg.has_section("toy_model")):
        return ToyModelConfig()
    sec = file_cfg["toy_model"]
    kwargs: dict = {}
    for f in fields(ToyModelConfig):
        if f.name not in sec:
            continue
        raw = sec[f.name]
        if f.name == "causal":
            kwargs[f.name] = sec.getboolean(f.name)
        elif f.name in ("base", "qk_gain", "value_gain", "token_mean_weight"):
            kwargs[f.name] = float(raw)
        else:
            kwargs[f.name] = int(raw)
    return ToyModelConfig(**kwargs)


def _parse_weights(text: str) -> UtilizationWeights:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise ConfigError("weights must be three comma-separated numbers")
    return UtilizationWeights(*parts)


def make_evaluator(spec: str, ga: GAConfig, args, file_cfg=None):
    """Resolve an evaluator spec string to a live evaluator."""
    if spec == "planted":
        if args.hidden_schedule:
            with open(args.hidden_schedule) as f:
                hidden = ScaleSchedule.from_dict(json.load(f))
        else:
            curve = BezierCurve.from_pairs(DEFAULT_HIDDEN_POINTS)
            if ga.n_layers - 1 < curve.points[-1].x:
                raise ConfigError(
                    "default hidden curve spans 30 layers; pass --hidden-schedule "
                    f"for n_layers={ga.n_layers}"
                )
            hidden = sample_layer_scales(curve, ga.n_layers, ga.sampling_mode,
                                         ga.first_scaled_layer)
        return PlantedCurveEvaluator(hidden, sharpness=args.sharpness)
    if spec == "toy":
        toy_cfg = _toy_config_from(file_cfg)
        if toy_cfg.n_layers != ga.first_scaled_layer + ga.n_layers:
            raise ConfigError(
                f"toy model has {toy_cfg.n_layers} layers but the schedule covers "
                f"{ga.first_scaled_layer} + {ga.n_layers}"
            )
        model = ToyModel(toy_cfg)
        task = RetrievalTask.default_for(toy_cfg, content_margin=args.margin)
        return ToyRetrievalEvaluator(model, task, trials=args.trials)
    if spec.startswith("constant:"):
        a, b, c = (float(x) for x in spec[len("constant:"):].split(","))
        return ConstantEvaluator(AccuracyTriple(a, b, c))
    if spec.startswith("external-cmd:"):
        argv = shlex.split(spec[len("external-cmd:"):])
        if not argv:
            raise ConfigError("external-cmd needs a command line")
        return subprocess_evaluator(argv, ga.n_layers, ga.first_scaled_layer,
                                    timeout=args.timeout)
    if spec.startswith("external:"):
        addr = spec[len("external:"):]
        host, _, port = addr.rpartition(":")
        if not host or not port.isdigit():
            raise ConfigError(f"bad external address {addr!r}, expected host:port")
        return tcp_evaluator(host, int(port), ga.n_layers, ga.first_scaled_layer,
                             timeout=args.timeout)
    raise ConfigError(f"unknown evaluator spec {spec!r}")


def _write_manifest(out_dir: str, config: dict, seed, evaluator_spec: str,
                    artifacts: dict[str, str]) -> str:
    path = os.path.join(out_dir, "run_manifest.json")
    manifest = {
        "tool": "layerscale",
        "version": __version__,
        "created_unix": time.time(),
        "rng_seed": seed,
        "evaluator": evaluator_spec,
        "config": config,
        "argv": sys.argv[1:],
        "artifacts": artifacts,
    }
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2)
    return path


def _write_history_csv(path: str, history: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["generation", "best_utilization", "mean_utilization",
                    "new_evaluations", "total_evaluations"])
        for h in history:
            w.writerow([h["generation"], repr(h["best_utilization"]),
                        repr(h["mean_utilization"]), h["new_evaluations"],
                        h["total_evaluations"]])


def cmd_search(args) -> int:
    file_cfg = _read_config_file(args.config) if args.config else None
    if args.jobs is None and not (file_cfg and file_cfg.has_option("search", "jobs")):
        args.jobs = os.cpu_count() or 1
    ga = _ga_config_from(file_cfg, args)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    checkpoint_path = os.path.join(out_dir, "checkpoint.json")
    evaluator = make_evaluator(args.evaluator, ga, args, file_cfg)
    try:
        if args.resume:
            result = resume(args.resume, evaluator, checkpoint_path)
        else:
            result = run(ga, evaluator, checkpoint_path)
    finally:
        evaluator.close()

    result_path = os.path.join(out_dir, "result.json")
    with open(result_path, "w") as f:
        json.dump(result.to_dict(), f, indent=2)
    history_path = os.path.join(out_dir, "history.csv")
    _write_history_csv(history_path, result.history)
    artifacts = {"result": result_path, "history": history_path,
                 "checkpoint": checkpoint_path}
    schedule_path = None
    if result.best is not None:
        schedule_path = os.path.join(out_dir, "best_schedule.json")
        with open(schedule_path, "w") as f:
            f.write(result.best_schedule().to_json())
        artifacts["best_schedule"] = schedule_path
    _write_manifest(out_dir, result.config.to_dict(), result.config.rng_seed,
                    args.evaluator, artifacts)

    if not result.complete:
        print("search incomplete: evaluator failed; partial results written",
              file=sys.stderr)
        return EXIT_EVALUATOR
    best_u = result.best.fitness["utilization"]
    print(f"best utilization {best_u:.4f} after {result.evaluations} evaluations")
    print(f"results in {out_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    with open(args.schedule) as f:
        schedule = ScaleSchedule.from_dict(json.load(f))
    weights = _parse_weights(args.weights) if args.weights else UtilizationWeights()
    ga = GAConfig(n_layers=len(schedule), first_scaled_layer=schedule.first_scaled_layer)
    file_cfg = _read_config_file(args.config) if args.config else None
    evaluator = make_evaluator(args.evaluator, ga, args, file_cfg)
    try:
        triple = evaluator.evaluate(schedule)
    finally:
        evaluator.close()
    u = utilization(triple, weights)
    if args.json:
        out = triple.to_dict()
        out["utilization"] = u
        print(json.dumps(out))
    else:
        print(f"first={triple.first:.4f} middle={triple.middle:.4f} "
              f"last={triple.last:.4f}")
        print(f"utilization={u:.4f}")
    return EXIT_OK


def cmd_analyze_decay(args) -> int:
    scales = [float(s) for s in args.scales.split(",")]
    os.makedirs(args.out, exist_ok=True)
    artifacts = {}
    for s in scales:
        cfg = RotaryConfig(head_dim=args.dim, base=args.base, scale=s)
        curve = decay_curve(cfg, args.max_dist)
        path = os.path.join(args.out, f"decay_scale{s:g}.csv")
        curve.write_csv(path)
        artifacts[f"decay_scale_{s:g}"] = path
        print(path)
    _write_manifest(args.out, {"head_dim": args.dim, "base": args.base,
                               "scales": scales, "max_dist": args.max_dist},
                    None, "none", artifacts)
    return EXIT_OK


def cmd_analyze_entropy(args) -> int:
    file_cfg = _read_config_file(args.config) if args.config else None
    toy_cfg = _toy_config_from(file_cfg)
    if args.seq is not None:
        toy_cfg = replace(toy_cfg, seq_len=args.seq)
    model = ToyModel(toy_cfg)
    tokens = token_stream(toy_cfg, (args.stream_seed, 0))
    sched = ScaleSchedule(tuple([args.scale] * toy_cfg.n_layers))
    fwd = forward(model, tokens, sched)
    layers, values = [], []
    for l, attn in enumerate(fwd.attentions):
        rows = []
        for h in range(attn.shape[0]):
            for i in range(attn.shape[1]):
                rows.append(entropy(attn[h, i, : i + 1]))
        layers.append(l)
        values.append(sum(rows) / len(rows))
    profile = EntropyProfile(tuple(layers), tuple(values))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"entropy_scale{args.scale:g}.csv")
    profile.write_csv(path)
    _write_manifest(args.out, {"scale": args.scale, "seq_len": toy_cfg.seq_len,
                               "weight_seed": toy_cfg.weight_seed},
                    toy_cfg.weight_seed, "none", {"entropy": path})
    print(path)
    return EXIT_OK


def cmd_analyze_schedule(args) -> int:
    sched = extrapolation_schedule(
        args.layers, args.pretrained_window, args.target_window,
        interval=args.interval, peak_layer=args.peak,
    )
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "extrapolation_schedule.json")
    with open(path, "w") as f:
        f.write(sched.to_json())
    _write_manifest(args.out, {"layers": args.layers, "L": args.pretrained_window,
                               "L_prime": args.target_window,
                               "interval": args.interval, "peak": args.peak},
                    None, "none", {"schedule": path})
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="layerscale",
                                description="Layer-specific positional scaling toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("search", help="run the genetic search")
    sp.add_argument("--config", help="INI config file")
    sp.add_argument("--out", default="runs/search", help="output directory")
    sp.add_argument("--evaluator", default="planted",
                    help="planted | toy | constant:a,b,c | external:host:port | "
                         "external-cmd:<argv>")
    sp.add_argument("--resume", help="checkpoint file to continue from")
    sp.add_argument("--n-layers", dest="n_layers", type=int)
    sp.add_argument("--first-scaled-layer", dest="first_scaled_layer", type=int)
    sp.add_argument("--population", type=int)
    sp.add_argument("--mutation-size", dest="mutation_size", type=int)
    sp.add_argument("--crossover-size", dest="crossover_size", type=int)
    sp.add_argument("--top-k", dest="top_k", type=int)
    sp.add_argument("--generations", type=int)
    sp.add_argument("--mutate-probability", dest="mutate_probability", type=float)
    sp.add_argument("--amplitude-x", dest="amplitude_x", type=float)
    sp.add_argument("--amplitude-y", dest="amplitude_y", type=float)
    sp.add_argument("--control-points", dest="control_points", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--sampling-mode", dest="sampling_mode",
                    choices=["uniform_t", "x_resolved"])
    sp.add_argument("--weights", help="lambda_first,lambda_middle,lambda_last")
    sp.add_argument("--jobs", type=int, default=None,
                    help=f"parallel evaluations (default {os.cpu_count()})")
    sp.add_argument("--sharpness", type=float, default=5.0)
    sp.add_argument("--hidden-schedule", help="JSON schedule for the planted oracle")
    sp.add_argument("--margin", type=float, default=64.0,
                    help="content margin for the toy oracle")
    sp.add_argument("--trials", type=int, default=8)
    sp.add_argument("--timeout", type=float, default=300.0)
    sp.set_defaults(func=cmd_search)

    ep = sub.add_parser("eval", help="score one schedule")
    ep.add_argument("--schedule", required=True, help="JSON schedule file")
    ep.add_argument("--evaluator", default="planted")
    ep.add_argument("--weights", help="lambda_first,lambda_middle,lambda_last")
    ep.add_argument("--config", help="INI config file")
    ep.add_argument("--json", action="store_true")
    ep.add_argument("--sharpness", type=float, default=5.0)
    ep.add_argument("--hidden-schedule")
    ep.add_argument("--margin", type=float, default=64.0)
    ep.add_argument("--trials", type=int, default=8)
    ep.add_argument("--timeout", type=float, default=300.0)
    ep.set_defaults(func=cmd_eval)

    ap = sub.add_parser("analyze", help="decay, entropy, and schedule analysis")
    asub = ap.add_subparsers(dest="analysis", required=True)

    dp = asub.add_parser("decay", help="long-range decay curves")
    dp.add_argument("--dim", type=int, default=64)
    dp.add_argument("--base", type=float, default=10000.0)
    dp.add_argument("--scales", default="1.0,1.5")
    dp.add_argument("--max-dist", dest="max_dist", type=int, default=4096)
    dp.add_argument("--out", default="runs/decay")
    dp.set_defaults(func=cmd_analyze_decay)

    np_ = asub.add_parser("entropy", help="per-layer attention entropy")
    np_.add_argument("--scale", type=float, default=1.0)
    np_.add_argument("--seq", type=int, default=None)
    np_.add_argument("--config", help="INI config file")
    np_.add_argument("--stream-seed", dest="stream_seed", type=int, default=0)
    np_.add_argument("--out", default="runs/entropy")
    np_.set_defaults(func=cmd_analyze_entropy)

    xp = asub.add_parser("schedule", help="extrapolation scale schedule")
    xp.add_argument("--L", dest="pretrained_window", type=int, required=True)
    xp.add_argument("--Lp", dest="target_window", type=int, required=True)
    xp.add_argument("--interval", type=float, default=0.3)
    xp.add_argument("--layers", type=int, required=True)
    xp.add_argument("--peak", type=int, default=None)
    xp.add_argument("--out", default="runs/schedule")
    xp.set_defaults(func=cmd_analyze_schedule)

    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except EvaluatorError as e:
        print(f"evaluator failure: {e}", file=sys.stderr)
        return EXIT_EVALUATOR


if __name__ == "__main__":
    sys.exit(main())
