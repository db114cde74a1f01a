"""A small deterministic attention stack for probing positional decay.

Pre-norm attention + MLP blocks with fixed random weights drawn once per
seed. Query and key projections are tied (Wk = Wq), which makes the
position-coherent part of every logit a positive combination of plane
cosines, so rotary decay shows up at initialization the same way it does in
trained models. Each layer applies its own positional scale from a
schedule, which is what the search optimizes.

The retrieval task plants a key whose content logit at the final layer
exceeds every distractor by a chosen margin; whether the final query still
finds it after rotary decay is the fitness signal.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .curve import ScaleSchedule
from .fitness import AccuracyTriple


@dataclass(frozen=True)
class ToyModelConfig:
    n_layers: int = 8
    n_heads: int = 4
    head_dim: int = 32
    seq_len: int = 512
    base: float = 10000.0
    weight_seed: int = 0
    causal: bool = True
    qk_gain: float = 2.5
    value_gain: float = 1.0
    token_mean_weight: float = 1.2

    def __post_init__(self) -> None:
        if self.head_dim % 2 != 0 or self.head_dim < 2:
            raise ValueError("head_dim must be even and >= 2")
        if min(self.n_layers, self.n_heads, self.seq_len) < 1:
            raise ValueError("all counts must be positive")

    @property
    def model_dim(self) -> int:
        return self.n_heads * self.head_dim


def _layer_norm(x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


class ToyModel:
    """Weight container; all randomness is fixed by the config seed."""

    def __init__(self, config: ToyModelConfig):
        self.config = config
        rng = np.random.default_rng(config.weight_seed)
        L, D = config.n_layers, config.model_dim
        self.w_qk = rng.normal(0.0, config.qk_gain / np.sqrt(D), (L, D, D))
        self.w_v = rng.normal(0.0, config.value_gain / np.sqrt(D), (L, D, D))
        self.w_o = rng.normal(0.0, config.value_gain / np.sqrt(D), (L, D, D))
        self.w_up = rng.normal(0.0, 1.0 / np.sqrt(D), (L, D, 4 * D))
        self.w_down = rng.normal(0.0, 0.5 / np.sqrt(4 * D), (L, 4 * D, D))
        self.theta = config.base ** (
            -2.0 * np.arange(config.head_dim // 2) / config.head_dim
        )

    def layer_scales(self, schedule: ScaleSchedule | None) -> np.ndarray:
        """Per-layer scale vector; layers before first_scaled_layer stay at 1."""
        L = self.config.n_layers
        out = np.ones(L)
        if schedule is None:
            return out
        off = schedule.first_scaled_layer
        if off + len(schedule) != L:
            raise ValueError(
                f"schedule covers layers {off}..{off + len(schedule) - 1}, "
                f"model has {L} layers"
            )
        out[off:] = schedule.scales
        return out


def _rotate_heads(x: np.ndarray, pos: np.ndarray, theta: np.ndarray, scale: float) -> np.ndarray:
    """Rotate (T, H, dh) per-plane by position-dependent angles."""
    ang = np.outer(pos / scale, theta)[:, None, :]
    c, s = np.cos(ang), np.sin(ang)
    out = np.empty_like(x)
    out[..., 0::2] = x[..., 0::2] * c - x[..., 1::2] * s
    out[..., 1::2] = x[..., 0::2] * s + x[..., 1::2] * c
    return out


@dataclass
class ForwardResult:
    states: list[np.ndarray]          # residual stream, states[0] = embeddings
    attentions: list[np.ndarray] | None  # per layer: (H, T, T) row-stochastic


def forward(
    model: ToyModel,
    tokens: np.ndarray,
    schedule: ScaleSchedule | None = None,
    rope_disabled_layers: frozenset[int] | set[int] = frozenset(),
    want_attention: bool = True,
) -> ForwardResult:
    """Run the stack; deterministic for fixed weights and inputs."""
    cfg = model.config
    T, D = tokens.shape
    if D != cfg.model_dim:
        raise ValueError(f"token dim {D} != model dim {cfg.model_dim}")
    if T > cfg.seq_len:
        raise ValueError(f"sequence length {T} exceeds configured {cfg.seq_len}")
    H, dh = cfg.n_heads, cfg.head_dim
    pos = np.arange(T, dtype=float)
    scales = model.layer_scales(schedule)
    neg_inf_mask = None
    if cfg.causal:
        neg_inf_mask = np.triu(np.full((T, T), -np.inf), k=1)

    h = tokens.astype(float).copy()
    states = [h.copy()]
    attentions: list[np.ndarray] | None = [] if want_attention else None
    for l in range(cfg.n_layers):
        x = _layer_norm(h)
        q = (x @ model.w_qk[l]).reshape(T, H, dh)
        k = q.copy()  # tied projections
        v = (x @ model.w_v[l]).reshape(T, H, dh)
        if l not in rope_disabled_layers:
            q = _rotate_heads(q, pos, model.theta, scales[l])
            k = _rotate_heads(k, pos, model.theta, scales[l])
        qh = q.transpose(1, 0, 2)
        kh = k.transpose(1, 0, 2)
        logits = qh @ kh.transpose(0, 2, 1) / np.sqrt(dh)
        if neg_inf_mask is not None:
            logits = logits + neg_inf_mask
        logits -= logits.max(axis=2, keepdims=True)
        attn = np.exp(logits)
        attn /= attn.sum(axis=2, keepdims=True)
        if attentions is not None:
            attentions.append(attn)
        mixed = (attn @ v.transpose(1, 0, 2)).transpose(1, 0, 2).reshape(T, D)
        h = h + mixed @ model.w_o[l]
        h = h + np.maximum(_layer_norm(h) @ model.w_up[l], 0.0) @ model.w_down[l]
        states.append(h.copy())
    return ForwardResult(states=states, attentions=attentions)


def token_stream(config: ToyModelConfig, stream_seed) -> np.ndarray:
    """Synthetic embeddings: per-stream shared direction plus iid noise.

    The shared direction is what gives queries and keys a position-coherent
    component for rotary decay to act on.
    """
    rng = np.random.default_rng(stream_seed)
    D = config.model_dim
    mean = rng.normal(0.0, 1.0, D)
    noise = rng.normal(0.0, 1.0, (config.seq_len, D))
    return config.token_mean_weight * mean + noise


# -- representation probes -------------------------------------------------


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return float("nan")
    return float(a @ b / (na * nb))


def probe_first_block_similarity(
    states: np.ndarray, block: int = 128
) -> tuple[np.ndarray, np.ndarray, int]:
    """Cosine similarity of each later token's state to the mean state of
    the first ``block`` tokens. Returns (positions, similarities, n_excluded);
    zero-norm states are excluded rather than reported as NaN."""
    T = states.shape[0]
    if T <= block:
        raise ValueError(f"sequence of {T} tokens is not longer than block {block}")
    block_mean = states[:block].mean(axis=0)
    positions, sims = [], []
    excluded = 0
    for i in range(block, T):
        c = _cosine(block_mean, states[i])
        if np.isnan(c):
            excluded += 1
            continue
        positions.append(i)
        sims.append(c)
    return np.array(positions), np.array(sims), excluded


def probe_middle_vs_last(states: np.ndarray) -> float:
    """Cosine similarity between the middle third's mean state and the
    final token's state."""
    T = states.shape[0]
    if T < 3:
        raise ValueError("need at least 3 tokens to take thirds")
    third = T // 3
    return _cosine(states[third : 2 * third].mean(axis=0), states[-1])


def middle_similarity_sweep(
    model: ToyModel,
    scales: list[float],
    n_streams: int = 10,
    stream_seed_base: int = 2000,
    probe_layer: int | None = None,
) -> list[float]:
    """Mean middle-vs-last similarity per uniform scale, averaged over
    independent token streams (per-stream phase noise averages out)."""
    cfg = model.config
    layer = cfg.n_layers if probe_layer is None else probe_layer
    out = []
    for scale in scales:
        sched = ScaleSchedule(tuple([float(scale)] * cfg.n_layers))
        total = 0.0
        for s_i in range(n_streams):
            tokens = token_stream(cfg, (stream_seed_base, s_i))
            fwd = forward(model, tokens, sched, want_attention=False)
            total += probe_middle_vs_last(fwd.states[layer])
        out.append(total / n_streams)
    return out


def write_position_similarity_csv(path, positions, similarities) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["position", "similarity"])
        for p, s in zip(positions, similarities):
            w.writerow([int(p), repr(float(s))])


def write_scale_similarity_csv(path, scales, similarities) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["scale", "similarity"])
        for sc, s in zip(scales, similarities):
            w.writerow([sc, repr(float(s))])


# -- planted retrieval task -------------------------------------------------


@dataclass(frozen=True)
class RetrievalTask:
    """Positions of the planted key for the first/middle/last slot, the
    content-logit margin over distractors, and the instance seed family."""

    planted_positions: tuple[int, int, int]
    content_margin: float
    instance_seed: int = 7

    def __post_init__(self) -> None:
        p = self.planted_positions
        if not (0 <= p[0] < p[1] < p[2]):
            raise ValueError("planted positions must be strictly ordered and nonnegative")

    @staticmethod
    def default_for(config: ToyModelConfig, content_margin: float = 64.0,
                    instance_seed: int = 7) -> "RetrievalTask":
        """Default slot positions for a model's sequence length.

        The middle slot sits at relative distance 264 from the final query
        (for the default 512-token stream that is position 247): a distance
        where the plane-averaged decay kernel is low unscaled but rises
        steeply under moderate position scaling, which keeps the task in the
        decay-dominant regime.
        """
        T = config.seq_len
        middle = T - 265
        if not T // 3 <= middle <= 2 * T // 3:
            middle = T // 2
        return RetrievalTask((10, middle, T - 12), content_margin, instance_seed)


@dataclass
class _ReadoutRows:
    """Final-query attention ingredients at the last layer."""

    logits: np.ndarray        # (H, T) rotated background logits
    content_max: np.ndarray   # (H,) max pre-rotation content logit
    decay: np.ndarray         # (n_slots,) planted-key decay factor per slot


def _readout_rows(
    model: ToyModel, fwd: ForwardResult, schedule: ScaleSchedule | None,
    positions: tuple[int, ...],
) -> _ReadoutRows:
    cfg = model.config
    H, dh = cfg.n_heads, cfg.head_dim
    last = cfg.n_layers - 1
    scale = model.layer_scales(schedule)[last]
    h_in = fwd.states[last]
    T = h_in.shape[0]
    x = _layer_norm(h_in)
    qk = (x @ model.w_qk[last]).reshape(T, H, dh)
    pos = np.arange(T, dtype=float)
    rot = _rotate_heads(qk, pos, model.theta, scale)
    q_rot = rot[T - 1]                       # (H, dh) final rotated query
    q_raw = qk[T - 1]                        # (H, dh) pre-rotation
    logits = np.einsum("thd,hd->ht", rot, q_rot) / np.sqrt(dh)
    content = np.einsum("thd,hd->ht", qk, q_raw) / np.sqrt(dh)
    # The planted key is phase-matched to the query with plane amplitudes
    # inversely proportional to the query's, so its rotated logit decays by
    # the plane-averaged cosine kernel: deterministic and head-independent.
    deltas = (T - 1 - np.asarray(positions)) / scale
    decay = np.cos(np.outer(deltas, model.theta)).mean(axis=1)
    return _ReadoutRows(logits=logits, content_max=content.max(axis=1), decay=decay)


def _slot_hits(rows: _ReadoutRows, positions: tuple[int, ...], margin: float) -> list[bool]:
    H = rows.logits.shape[0]
    hits = []
    for p_i, p in enumerate(positions):
        probs = None
        for h_i in range(H):
            row = rows.logits[h_i].copy()
            # content logit: the distractor max plus the margin, attenuated
            # by positional decay at the planted distance
            row[p] = (rows.content_max[h_i] + margin) * rows.decay[p_i]
            row -= row.max()
            e = np.exp(row)
            e /= e.sum()
            probs = e if probs is None else probs + e
        hits.append(int(np.argmax(probs)) == p)
    return hits


def readout_rows_for_trials(
    model: ToyModel, task: RetrievalTask, schedule: ScaleSchedule | None, trials: int
) -> list[_ReadoutRows]:
    rows = []
    for trial in range(trials):
        tokens = token_stream(model.config, (task.instance_seed, trial))
        fwd = forward(model, tokens, schedule, want_attention=False)
        rows.append(_readout_rows(model, fwd, schedule, task.planted_positions))
    return rows


def accuracy_from_rows(
    rows: list[_ReadoutRows], task: RetrievalTask, margin: float | None = None
) -> AccuracyTriple:
    m = task.content_margin if margin is None else margin
    hits = np.zeros(3)
    for r in rows:
        hits += _slot_hits(r, task.planted_positions, m)
    acc = 100.0 * hits / len(rows)
    return AccuracyTriple(acc[0], acc[1], acc[2], sample_count=len(rows))


def retrieval_accuracy(
    model: ToyModel, task: RetrievalTask, schedule: ScaleSchedule | None, trials: int = 16
) -> AccuracyTriple:
    """Fraction of trials where the final query's argmax attention (last
    layer, heads averaged) lands on the planted position, per slot."""
    return accuracy_from_rows(
        readout_rows_for_trials(model, task, schedule, trials), task
    )


def calibrate_content_margin(
    model: ToyModel,
    task: RetrievalTask,
    trials: int = 16,
    target: tuple[float, float] = (20.0, 60.0),
    hi: float = 4096.0,
    max_steps: int = 40,
) -> RetrievalTask:
    """Binary-search the content margin until middle accuracy under the
    all-ones schedule falls in ``target``; per-trial hits are monotone in
    the margin, so the search is well-posed."""
    unscaled = ScaleSchedule(tuple([1.0] * model.config.n_layers))
    rows = readout_rows_for_trials(model, task, unscaled, trials)
    lo_m, hi_m = 0.0, hi
    mid_acc = accuracy_from_rows(rows, task, hi_m).middle
    if mid_acc < target[0]:
        raise ValueError(
            f"middle accuracy {mid_acc} stays below target even at margin {hi}"
        )
    margin = hi_m
    for _ in range(max_steps):
        margin = 0.5 * (lo_m + hi_m)
        mid_acc = accuracy_from_rows(rows, task, margin).middle
        if target[0] <= mid_acc <= target[1]:
            return replace(task, content_margin=margin)
        if mid_acc < target[0]:
            lo_m = margin
        else:
            hi_m = margin
    raise ValueError("calibration did not land in the target window")


class ToyRetrievalEvaluator:
    """Schedule fitness backed by the planted retrieval task."""

    def __init__(self, model: ToyModel, task: RetrievalTask, trials: int = 16):
        self.model = model
        self.task = task
        self.trials = trials

    def evaluate(self, schedule: ScaleSchedule) -> AccuracyTriple:
        return retrieval_accuracy(self.model, self.task, schedule, self.trials)

    def close(self) -> None:
        pass
