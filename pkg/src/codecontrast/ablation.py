"""Ablation ladder on the toy corpus.

Every rung pre-trains a fresh model differently and then receives the same
short comment-pair fine-tuning before the held-out comment-to-code
evaluation:

    warmup_only   no pre-training
    asst          in-batch pre-training on ASST pairs
    asst_comment  in-batch pre-training on ASST and comment pairs
    soft_labeled  the same warm-up followed by the adversarial iterations

The structure-only comparison pre-trains on ASST pairs or on token-level
ICT pairs and scores zero-shot code-to-code MAP@R without fine-tuning.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .encoder import Model, build_vocab
from .pairgen import AsstConfig, PairConfig, build_pair_corpus
from .retrieval import run_eval, toy_tasks
from .toycorpus import code_of, gen_toy_corpus
from .training import TrainConfig, mining_corpus, run_pretraining, warmup_steps

log = logging.getLogger(__name__)

RUNGS = ("warmup_only", "asst", "asst_comment", "soft_labeled")


@dataclass
class AblationConfig:
    families: int = 4
    per_family: int = 50
    toy_seed: int = 0
    seeds: tuple = (0, 1, 2)
    pretrain_steps: int = 300
    finetune_steps: int = 300
    iterations: int = 1
    disc_steps: int = 300
    dual_steps: int = 200
    batch_size: int = 16
    anchors_per_step: int = 8
    lr: float = 1e-3
    lr_disc: float = 3e-3
    lr_adv: float = 2e-4
    lam: float = 0.2
    negative_size: int = 7
    top_k: int = 20
    draws: int = 1
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 128


@dataclass
class SeedResult:
    seed: int
    mrr: dict[str, float]
    code_map: dict[str, float]
    seconds: float


@dataclass
class AblationResult:
    config: AblationConfig
    seeds: list[SeedResult] = field(default_factory=list)

    def median_mrr(self) -> dict[str, float]:
        return {r: float(np.median([s.mrr[r] for s in self.seeds])) for r in RUNGS}

    def median_code_map(self) -> dict[str, float]:
        return {k: float(np.median([s.code_map[k] for s in self.seeds])) for k in ("asst", "ict_token")}

    def checks(self) -> dict[str, bool]:
        m, c = self.median_mrr(), self.median_code_map()
        out = {}
        for lo, hi in zip(RUNGS, RUNGS[1:]):
            out[f"{lo}<={hi}"] = m[lo] <= m[hi]
        out["soft_labeled-warmup_only>=0.02"] = m["soft_labeled"] - m["warmup_only"] >= 0.02
        out["asst>=ict_token(code MAP)"] = c["asst"] >= c["ict_token"]
        return out

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "ablation.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seed", "measure", "variant", "score"])
            for s in self.seeds:
                for r in RUNGS:
                    w.writerow([s.seed, "heldout_mrr", r, repr(s.mrr[r])])
                for k in ("asst", "ict_token"):
                    w.writerow([s.seed, "code_map_at_r", k, repr(s.code_map[k])])
            for r, v in self.median_mrr().items():
                w.writerow(["median", "heldout_mrr", r, repr(v)])
            for k, v in self.median_code_map().items():
                w.writerow(["median", "code_map_at_r", k, repr(v)])
        return path


def _train_config(cfg: AblationConfig, seed: int, **kw) -> TrainConfig:
    return TrainConfig(
        lam=cfg.lam,
        iterations=kw.pop("iterations", 0),
        negative_size=cfg.negative_size,
        top_k=cfg.top_k,
        batch_size=cfg.batch_size,
        anchors_per_step=cfg.anchors_per_step,
        lr_dual=cfg.lr,
        lr_disc=cfg.lr_disc,
        lr_adv=cfg.lr_adv,
        warmup_steps=kw.pop("warmup_steps", cfg.pretrain_steps),
        disc_steps=cfg.disc_steps,
        dual_steps=cfg.dual_steps,
        seed=seed,
        **kw,
    )


def run_seed(cfg: AblationConfig, seed: int) -> SeedResult:
    start = time.perf_counter()
    toy = gen_toy_corpus(cfg.families, cfg.per_family, cfg.toy_seed)
    train = toy.train
    pcfg = PairConfig(AsstConfig(l_min=20, seed=seed), draws=cfg.draws)
    comment = build_pair_corpus(train, "comment", pcfg, seed).pairs
    asst = build_pair_corpus(train, "asst", pcfg, seed).pairs
    ict = build_pair_corpus(train, "ict-token", pcfg, seed).pairs
    vocab = build_vocab([r.code for r in train], 4096)
    dims = dict(d_model=cfg.d_model, n_layers=cfg.n_layers, n_heads=cfg.n_heads, d_ff=cfg.d_ff, max_len=cfg.max_len)
    base = Model.create(vocab, seed=seed, **dims)
    comment_task, code_task = toy_tasks(toy)
    tcfg = _train_config(cfg, seed)

    def finetune(model: Model) -> float:
        warmup_steps(model, comment, cfg.finetune_steps, tcfg, tag=7)
        return run_eval(model, comment_task).score

    mrr, code_map = {}, {}
    mrr["warmup_only"] = finetune(base.copy())

    m = base.copy()
    warmup_steps(m, asst, cfg.pretrain_steps, tcfg, tag=0)
    code_map["asst"] = run_eval(m, code_task).score
    mrr["asst"] = finetune(m)

    m = base.copy()
    warmup_steps(m, ict, cfg.pretrain_steps, tcfg, tag=0)
    code_map["ict_token"] = run_eval(m, code_task).score

    corpus = mining_corpus({r.id: code_of(r) for r in train})
    snapshot = {}
    full = run_pretraining(
        corpus,
        asst + comment,
        _train_config(cfg, seed, iterations=cfg.iterations),
        base.copy(),
        after_warmup=lambda model: snapshot.setdefault("m", model.copy()),
    ).model
    mrr["asst_comment"] = finetune(snapshot["m"])
    mrr["soft_labeled"] = finetune(full)
    secs = time.perf_counter() - start
    log.info("seed %d: %s code %s (%.1fs)", seed, mrr, code_map, secs)
    return SeedResult(seed, mrr, code_map, secs)


def run_ablation(cfg: AblationConfig = AblationConfig(), out_dir=None, workers: int = 1) -> AblationResult:
    """Run every seed; with ``workers > 1`` seeds go to separate processes.

    Seeds are independent, so the result does not depend on ``workers``.
    """
    res = AblationResult(cfg)
    if workers > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(cfg.seeds))) as pool:
            res.seeds.extend(pool.map(run_seed, [cfg] * len(cfg.seeds), cfg.seeds))
    else:
        for seed in cfg.seeds:
            res.seeds.append(run_seed(cfg, seed))
    if out_dir is not None:
        res.write(out_dir)
    return res


def config_from_dict(d: dict) -> AblationConfig:
    d = dict(d)
    if "seeds" in d:
        d["seeds"] = tuple(d["seeds"])
    return replace(AblationConfig(), **d)


def config_dict(cfg: AblationConfig) -> dict:
    return asdict(cfg)
