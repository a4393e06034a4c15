"""Warm-up, hard-negative mining and the adversarial dual-encoder/discriminator loop."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import Model, disc_group, save_model
from .errors import (
    BatchTooSmall,
    CorpusTooSmall,
    EmptyNegatives,
    NumericalDivergence,
    PoolTooSmall,
)
from .pairgen import PositivePair

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("step", "phase", "loss", "lambda", "iteration")


@dataclass
class TrainConfig:
    lam: float = 0.2
    iterations: int = 4
    negative_size: int = 7
    top_k: int = 50
    batch_size: int = 8
    anchors_per_step: int = 4
    lr_dual: float = 1e-3
    lr_disc: float = 1e-3
    lr_adv: float | None = 2e-4  # dual-encoder rate inside the iterations; None reuses lr_dual
    weight_decay: float = 0.01
    warmup_steps: int = 500
    disc_steps: int = 50
    dual_steps: int = 50
    disc_init: str = "theta"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if self.negative_size > self.top_k:
            raise ValueError("negative_size must not exceed top_k")
        # warm-up and iteration counts may be zero (warm-up only / no warm-up)
        for name in ("warmup_steps", "iterations"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("negative_size", "top_k", "batch_size", "anchors_per_step", "disc_steps", "dual_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.disc_init not in ("random", "theta"):
            raise ValueError("disc_init must be 'random' or 'theta'")


# -- losses on score matrices ---------------------------------------------------

def in_batch_nll(scores: Tensor) -> Tensor:
    """Mean over rows of ``-log softmax(scores[i])[i]``."""
    b = scores.shape[0]
    if scores.ndim != 2 or scores.shape[1] != b:
        raise ValueError(f"expected a square score matrix, got {scores.shape}")
    if b < 2:
        raise BatchTooSmall("in-batch negatives need at least 2 pairs")
    return ad.scale(ad.dot(ad.log_softmax_rows(scores), Tensor(np.eye(b))), -1.0 / b)


def positive_nll(scores: Tensor) -> Tensor:
    """Mean over rows of ``-log softmax(scores[i])[0]``; column 0 holds the positive."""
    if scores.ndim != 2 or scores.shape[1] < 2:
        raise EmptyNegatives(f"need a positive and at least one negative per row, got {scores.shape}")
    onehot = np.zeros(scores.shape)
    onehot[:, 0] = 1.0
    return ad.scale(ad.dot(ad.log_softmax_rows(scores), Tensor(onehot)), -1.0 / scores.shape[0])


def adversarial_weights(disc_scores: np.ndarray) -> np.ndarray:
    """``w(x-) = -log p(x+ | {x+, x-})`` for every negative column.

    ``disc_scores`` has the positive in column 0; the result drops that
    column.  This is ``softplus(s- - s+)`` evaluated stably.
    """
    s = np.asarray(disc_scores, dtype=np.float64)
    if s.ndim == 1:
        s = s[None, :]
    return np.logaddexp(0.0, s[:, 1:] - s[:, :1])


def soft_labels(disc_scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax of discriminator scores (positive first)."""
    s = np.asarray(disc_scores, dtype=np.float64)
    z = np.exp(s - s.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def adversarial_loss(neg_logits: Tensor, w: np.ndarray) -> Tensor:
    """Mean over anchors of ``-sum_j w_j log softmax(neg_logits)_j`` (negatives only)."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != neg_logits.shape:
        raise ValueError(f"weights {w.shape} vs logits {neg_logits.shape}")
    return ad.scale(ad.dot(ad.log_softmax_rows(neg_logits), Tensor(w)), -1.0 / neg_logits.shape[0])


def dual_encoder_objective(logits: Tensor, soft: np.ndarray, w: np.ndarray, lam: float) -> Tensor:
    """``lam * L_adv + (1 - lam) * KL(soft || softmax(logits))``.

    ``logits`` are dual scores (n, 1+k) with the positive in column 0; the
    adversarial term only looks at the negative columns.
    """
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise EmptyNegatives(f"need at least one negative per anchor, got {logits.shape}")
    distill = ad.kl_divergence(soft, logits)
    adv = adversarial_loss(ad.take(logits, (slice(None), slice(1, None))), w)
    return ad.add(ad.scale(adv, lam), ad.scale(distill, 1.0 - lam))


# -- model-level losses -----------------------------------------------------------

def warmup_loss(model: Model, pairs: Sequence[PositivePair]) -> Tensor:
    """In-batch negative loss for a batch of positive pairs."""
    if len(pairs) < 2:
        raise BatchTooSmall(f"batch of {len(pairs)} pair(s); in-batch negatives need at least 2")
    a = model.embed([p.anchor for p in pairs])
    b = model.embed([p.positive for p in pairs])
    return in_batch_nll(ad.matmul(a, ad.transpose(b, (1, 0))))


def _candidate_lists(items) -> tuple[list[str], list[str], int]:
    xs, ys, k = [], [], None
    for x, pos, negs in items:
        if not negs:
            raise EmptyNegatives("discriminator step needs at least one negative")
        if k is None:
            k = len(negs)
        elif len(negs) != k:
            raise ValueError("all anchors in a batch must have the same number of negatives")
        for y in [pos, *negs]:
            xs.append(x)
            ys.append(y)
    return xs, ys, k + 1


def discriminator_scores(model: Model, group: str, items) -> Tensor:
    """Scores (n, 1+k) of ``(x, [x+, *negatives])`` triples under ``group``."""
    xs, ys, width = _candidate_lists(items)
    return ad.reshape(model.disc_scores(group, xs, ys), (len(items), width))


def discriminator_loss(model: Model, group: str, x: str, positive: str, negatives: Sequence[str]) -> Tensor:
    """NLL of the positive under the discriminator softmax over ``{x+} + negatives``."""
    return positive_nll(discriminator_scores(model, group, [(x, positive, list(negatives))]))


def dual_scores(model: Model, items) -> Tensor:
    """Dual-encoder scores (n, 1+k) for ``(x, x+, negatives)`` triples."""
    xs, ys, width = _candidate_lists(items)
    n, d = len(items), model.cfg.d_model
    emb = model.embed([it[0] for it in items] + ys)
    a = ad.take(emb, slice(0, n))
    c = ad.reshape(ad.take(emb, slice(n, None)), (n, width, d))
    return ad.reshape(ad.matmul(c, ad.reshape(a, (n, d, 1))), (n, width))


def dual_encoder_loss(model: Model, items, soft: np.ndarray, w: np.ndarray, lam: float) -> Tensor:
    return dual_encoder_objective(dual_scores(model, items), soft, w, lam)


def disc_targets(model: Model, group: str, items) -> tuple[np.ndarray, np.ndarray]:
    """Soft labels and adversarial weights from one no-grad discriminator pass."""
    xs, ys, width = _candidate_lists(items)
    s = model.disc_scores_numpy(group, xs, ys).reshape(len(items), width)
    return soft_labels(s), adversarial_weights(s)


# -- hard negatives ----------------------------------------------------------------

@dataclass
class HardNegativePool:
    """Top-k candidates per anchor (aligned with the pair list)."""

    rows: list[list[tuple[str, float]]]
    texts: dict[str, str]
    top_k: int

    def ids(self, i: int) -> list[str]:
        return [cid for cid, _ in self.rows[i]]


def mine_hard_negatives(model: Model, pairs: Sequence[PositivePair], corpus: dict[str, str], top_k: int) -> HardNegativePool:
    """Top-k corpus codes per anchor by dual score, skipping byte copies of the positive.

    Near-duplicates stay in on purpose: down-weighting them is the soft
    labels' job.
    """
    if len(corpus) <= top_k:
        raise CorpusTooSmall(f"corpus has {len(corpus)} items, top_k={top_k} needs more")
    ids = sorted(corpus)
    texts = [corpus[i] for i in ids]
    matrix = model.embed_numpy(texts)
    anchors = model.embed_numpy([p.anchor for p in pairs])
    return _pool_from_vectors(anchors, matrix, ids, texts, [p.positive for p in pairs], top_k)


def _pool_from_vectors(anchors, matrix, ids, texts, positives, top_k) -> HardNegativePool:
    id_rank = np.arange(len(ids))  # ids are already sorted
    rows = []
    for q, pos in zip(anchors, positives):
        scores = matrix @ q
        order = np.lexsort((id_rank, -scores))
        row = []
        for j in order:
            if texts[j] == pos:
                continue
            row.append((ids[j], float(scores[j])))
            if len(row) == top_k:
                break
        if len(row) < top_k:
            raise CorpusTooSmall(f"only {len(row)} candidates remain after excluding the positive")
        rows.append(row)
    return HardNegativePool(rows, dict(zip(ids, texts)), top_k)


def sample_negatives(row: Sequence, negative_size: int, seed: int, step: int = 0, anchor_id: int = 0) -> list:
    """Uniform sample without replacement, keyed by ``(seed, step, anchor_id)``."""
    if len(row) < negative_size:
        raise PoolTooSmall(f"pool row has {len(row)} candidates, need {negative_size}")
    rng = np.random.default_rng([seed, step, anchor_id])
    picks = np.sort(rng.choice(len(row), size=negative_size, replace=False))
    return [row[i] for i in picks]


def mining_corpus(codes: dict[str, str]) -> dict[str, str]:
    """Drop byte-identical codes (the smallest id survives)."""
    out, seen = {}, set()
    for cid in sorted(codes):
        if codes[cid] not in seen:
            out[cid] = codes[cid]
            seen.add(codes[cid])
    return out


# -- the training loop -------------------------------------------------------------

@dataclass
class TrainResult:
    model: Model
    metrics: list[dict] = field(default_factory=list)
    pool: HardNegativePool | None = None


class _Batcher:
    """Round-robin over pair kinds; each batch is drawn from one kind."""

    def __init__(self, pairs: Sequence[PositivePair], seed: int, tag: int):
        groups: dict[str, list[int]] = {}
        for i, p in enumerate(pairs):
            groups.setdefault(p.strategy, []).append(i)
        self.groups = [groups[k] for k in sorted(groups)]
        self.seed, self.tag = seed, tag

    def batch(self, step: int, size: int) -> list[int]:
        members = self.groups[step % len(self.groups)]
        rng = np.random.default_rng([self.seed, self.tag, step])
        size = min(size, len(members))
        return sorted(rng.choice(members, size=size, replace=False).tolist())


def _optim_state(model: Model) -> dict:
    return {g: {} for g in model.params.GROUPS}


def _apply(model: Model, group: str, state: dict, lr: float, wd: float) -> None:
    params = model.params.group(group)
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in params.items()}
    ad.adamw_step(params, grads, state[group], lr=lr, weight_decay=wd)
    for t in params.values():
        t.grad = None


def _check(loss: Tensor, phase: str, step: int) -> float:
    value = float(loss.data)
    if not np.isfinite(value):
        raise NumericalDivergence(f"{phase} loss became {value} at step {step}")
    return value


def warmup_steps(model: Model, pairs: Sequence[PositivePair], steps: int, cfg: TrainConfig, state=None, tag: int = 0, log_rows=None, start: int = 0) -> list[dict]:
    """Run ``steps`` in-batch updates of the dual-encoder; returns metric rows."""
    state = state if state is not None else _optim_state(model)
    rows = log_rows if log_rows is not None else []
    batcher = _Batcher(pairs, cfg.seed, tag)
    for s in range(steps):
        idx = batcher.batch(s, cfg.batch_size)
        ad.reset_tape()
        loss = warmup_loss(model, [pairs[i] for i in idx])
        value = _check(loss, "warmup", start + s)
        ad.backward(loss)
        _apply(model, "theta", state, cfg.lr_dual, cfg.weight_decay)
        rows.append({"step": start + s, "phase": "warmup", "loss": value, "lambda": cfg.lam, "iteration": 0})
    return rows


def _anchor_items(pairs, pool, idx, cfg, step, phase_tag):
    items = []
    for i in idx:
        negs = sample_negatives(pool.rows[i], cfg.negative_size, cfg.seed, step * 4 + phase_tag, i)
        items.append((pairs[i].anchor, pairs[i].positive, [pool.texts[cid] for cid, _ in negs]))
    return items


def _by_group(pairs, idx):
    out: dict[str, list[int]] = {}
    for i in idx:
        out.setdefault(disc_group(pairs[i].anchor_kind), []).append(i)
    return sorted(out.items())


def run_pretraining(
    corpus: dict[str, str],
    pairs: Sequence[PositivePair],
    cfg: TrainConfig,
    model: Model,
    out_dir=None,
    name: str = "model",
    after_warmup=None,
) -> TrainResult:
    """Warm-up followed by ``cfg.iterations`` rounds of discriminator and dual updates.

    ``corpus`` maps ids to candidate codes for hard-negative mining.  Pairs
    of both kinds may be mixed; discriminator ``phi`` handles text anchors
    and ``psi`` code anchors.  ``after_warmup(model)`` is called once the
    warm-up finishes (used to snapshot the warm-up model).
    """
    if not pairs:
        raise ValueError("no training pairs")
    if not corpus:
        raise ValueError("empty code corpus")
    pairs = list(pairs)
    state = _optim_state(model)
    rows: list[dict] = []
    warmup_steps(model, pairs, cfg.warmup_steps, cfg, state, tag=0, log_rows=rows)
    step = cfg.warmup_steps
    if after_warmup is not None:
        after_warmup(model)
    pool = mine_hard_negatives(model, pairs, corpus, cfg.top_k)
    if cfg.iterations and cfg.disc_init == "theta":
        model.params.copy_encoder("theta", "phi")
        model.params.copy_encoder("theta", "psi")
    # the adversarial phase optimises a different objective at its own rate;
    # warm-up moments would otherwise dominate its first updates
    state = _optim_state(model)
    batcher = _Batcher(pairs, cfg.seed, 1)
    for it in range(1, cfg.iterations + 1):
        for _ in range(cfg.disc_steps):
            idx = batcher.batch(step, cfg.anchors_per_step)
            items = _anchor_items(pairs, pool, idx, cfg, step, 1)
            ad.reset_tape()
            total = 0.0
            for group, members in _by_group(pairs, idx):
                sub = [items[idx.index(i)] for i in members]
                loss = discriminator_scores(model, group, sub)
                loss = ad.scale(positive_nll(loss), len(members) / len(idx))
                total += _check(loss, "disc", step)
                ad.backward(loss)
                _apply(model, group, state, cfg.lr_disc, cfg.weight_decay)
            rows.append({"step": step, "phase": "disc", "loss": total, "lambda": cfg.lam, "iteration": it})
            step += 1
        for _ in range(cfg.dual_steps):
            idx = batcher.batch(step, cfg.anchors_per_step)
            items = _anchor_items(pairs, pool, idx, cfg, step, 2)
            soft = np.zeros((len(idx), cfg.negative_size + 1))
            w = np.zeros((len(idx), cfg.negative_size))
            for group, members in _by_group(pairs, idx):
                pos = [idx.index(i) for i in members]
                soft[pos], w[pos] = disc_targets(model, group, [items[p] for p in pos])
            ad.reset_tape()
            loss = dual_encoder_loss(model, items, soft, w, cfg.lam)
            value = _check(loss, "dual", step)
            ad.backward(loss)
            _apply(model, "theta", state, cfg.lr_dual if cfg.lr_adv is None else cfg.lr_adv, cfg.weight_decay)
            rows.append({"step": step, "phase": "dual", "loss": value, "lambda": cfg.lam, "iteration": it})
            step += 1
        pool = mine_hard_negatives(model, pairs, corpus, cfg.top_k)
        mean_top = float(np.mean([r[0][1] for r in pool.rows]))
        rows.append({"step": step, "phase": "refresh", "loss": mean_top, "lambda": cfg.lam, "iteration": it})
        if out_dir is not None:
            save_model(model, out_dir, f"{name}.iter{it}")
        log.info("iteration %d done at step %d", it, step)
    if out_dir is not None:
        save_model(model, out_dir, name)
        write_metrics(Path(out_dir) / "metrics.csv", rows)
    return TrainResult(model, rows, pool)


def write_metrics(path, rows: Sequence[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        for r in rows:
            writer.writerow([r["step"], r["phase"], repr(float(r["loss"])), repr(float(r["lambda"])), r["iteration"]])


def read_metrics(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return [
            {"step": int(r["step"]), "phase": r["phase"], "loss": float(r["loss"]), "lambda": float(r["lambda"]), "iteration": int(r["iteration"])}
            for r in csv.DictReader(fh)
        ]


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
