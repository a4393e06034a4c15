"""Command line entry points.

    codecontrast gen-toy      synthetic corpus plus held-out evaluation tasks
    codecontrast build-pairs  positive pairs from a records file
    codecontrast train        warm-up and adversarial iterations
    codecontrast eval         score a model on a task file
    codecontrast search       top-k corpus codes for free-text queries
    codecontrast ablation     the toy ablation ladder with its report

Failures print one ``ErrorCode: message`` line on stderr and exit non-zero.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .ablation import AblationConfig
from .config import load_config
from .errors import CodeContrastError, ConfigError, EmptyOutput
from .pairgen import (
    STRATEGIES,
    PairConfig,
    build_pair_corpus,
    read_pairs,
    read_records,
    strip_docstring,
    write_jsonl,
)

log = logging.getLogger("codecontrast")

SEED_ENV = "SCODER_SEED"
EXIT_DATA = 2
EXIT_INTERNAL = 3


def effective_seed(flag):
    """``$SCODER_SEED`` beats ``--seed``; ``None`` means "leave the config alone"."""
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return flag


def _records_to_corpus(records) -> dict[str, str]:
    return {r.id: strip_docstring(r.code) for r in records}


# -- commands ---------------------------------------------------------------------

def cmd_gen_toy(args) -> int:
    from .retrieval import toy_tasks
    from .toycorpus import gen_toy_corpus

    seed = effective_seed(args.seed)
    toy = gen_toy_corpus(args.families, args.per_family, seed)
    out = Path(args.out)
    write_jsonl(out / "records.jsonl", [r.to_json() for r in toy.records])
    write_jsonl(out / "train.jsonl", [r.to_json() for r in toy.train])
    write_jsonl(out / "heldout.jsonl", [r.to_json() for r in toy.heldout])
    (out / "families.tsv").write_text("".join(f"{rid}\t{toy.family[rid]}\n" for rid in sorted(toy.family)))
    c2c, k2k = toy_tasks(toy)
    c2c.save(out / "task_comment_to_code.jsonl")
    k2k.save(out / "task_code_to_code.jsonl")
    print(f"{len(toy.records)} records ({len(toy.train_ids)} train, {len(toy.heldout_ids)} held out) -> {out}")
    return 0


def cmd_build_pairs(args) -> int:
    seed = effective_seed(args.seed)
    cfg = load_config(args.config, seed=seed, l_min=args.lmin, draws=args.draws)
    records = read_records(args.input)
    corpus = build_pair_corpus(records, args.strategy, cfg.pair_config(), cfg.seed)
    write_jsonl(args.out, [p.to_json() for p in corpus.pairs])
    print(corpus.report())
    return 0


def cmd_train(args) -> int:
    from .encoder import Model, build_vocab
    from .plotting import plot_training_curves
    from .training import mining_corpus, run_pretraining

    cfg = load_config(args.config, seed=effective_seed(args.seed))
    pairs = read_pairs(args.pairs)
    records = read_records(args.corpus)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    vocab = build_vocab([r.code for r in records] + [p.anchor for p in pairs], cfg.vocab_size)
    model = Model.create(vocab, seed=cfg.seed, **cfg.model_overrides())
    corpus = mining_corpus(_records_to_corpus(records))
    start = time.perf_counter()
    result = run_pretraining(corpus, pairs, cfg.train_config(), model, out_dir=out)
    log.info("trained in %.1fs", time.perf_counter() - start)
    plot_training_curves(result.metrics, out / "training_curves.png")
    print(f"model -> {out / 'model.ckpt'}; {len(result.metrics)} metric rows -> {out / 'metrics.csv'}")
    return 0


def cmd_eval(args) -> int:
    from .encoder import load_model
    from .plotting import plot_rank_histogram
    from .retrieval import EvalTask, run_eval

    model = load_model(args.model, args.name)
    task = EvalTask.load(args.task)
    report = run_eval(model, task)
    stem = args.stem or task.kind
    paths = report.write(args.out, stem)
    plot_rank_histogram([r["first_relevant_rank"] for r in report.per_query], Path(args.out) / f"{stem}.ranks.png", f"{task.kind} ({report.metric})")
    print(report.summary_table(), end="")
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    return 0


def cmd_search(args) -> int:
    from .encoder import load_model
    from .retrieval import embed_corpus, knn_search

    model = load_model(args.model, args.name)
    corpus = _records_to_corpus(read_records(args.corpus))
    ids = sorted(corpus)
    index = embed_corpus(model, [corpus[i] for i in ids], ids)
    queries = [q.strip() for q in Path(args.query_file).read_text(encoding="utf-8").splitlines() if q.strip()]
    if not queries:
        raise EmptyOutput(f"{args.query_file}: no queries")
    vecs = model.embed_numpy(queries)
    lines = ["query\trank\tid\tscore"]
    for qi, vec in enumerate(vecs):
        scores = index.matrix @ vec
        pos = {cid: j for j, cid in enumerate(index.ids)}
        for rank, cid in enumerate(knn_search(index, vec, args.k), 1):
            lines.append(f"{qi}\t{rank}\t{cid}\t{scores[pos[cid]]:.6f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_ablation(args) -> int:
    from .ablation import RUNGS, run_ablation
    from .plotting import plot_ablation

    seeds = tuple(args.seeds)
    cfg = AblationConfig(
        families=args.families, per_family=args.per_family, seeds=seeds,
        pretrain_steps=args.pretrain_steps, finetune_steps=args.finetune_steps,
        iterations=args.iterations,
    )
    start = time.perf_counter()
    res = run_ablation(cfg, args.out, workers=args.workers)
    out = Path(args.out)
    plot_ablation({r: [s.mrr[r] for s in res.seeds] for r in RUNGS}, out / "ablation_mrr.png")
    plot_ablation({k: [s.code_map[k] for s in res.seeds] for k in ("asst", "ict_token")}, out / "ablation_code_map.png", "code-to-code MAP@R")
    for name, ok in res.checks().items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(json.dumps({"median_mrr": res.median_mrr(), "median_code_map": res.median_code_map(), "seconds": round(time.perf_counter() - start, 1)}, sort_keys=True))
    return 0


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="codecontrast", description="Soft-labeled contrastive code pre-training toolkit.", formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=1, help="cap on BLAS worker threads")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="logging verbosity")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-toy", help="generate the synthetic function corpus", formatter_class=fmt)
    p.add_argument("--families", type=int, default=4, help="number of function families")
    p.add_argument("--per-family", type=int, default=50, help="functions per family")
    p.add_argument("--seed", type=int, default=0, help=f"generator seed (overridden by ${SEED_ENV})")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_toy)

    p = sub.add_parser("build-pairs", help="construct positive pairs", formatter_class=fmt)
    p.add_argument("--input", required=True, help="records JSONL")
    p.add_argument("--strategy", default="asst", help=f"one or more of {', '.join(STRATEGIES)} joined by '+'")
    p.add_argument("--seed", type=int, default=0, help=f"sampling seed (overridden by ${SEED_ENV})")
    p.add_argument("--lmin", type=int, default=20, help="minimum byte length of an extracted subtree")
    p.add_argument("--draws", type=int, default=PairConfig().draws, help="pairs drawn per function for sampled strategies")
    p.add_argument("--config", default=None, help="optional key=value config (other pair settings)")
    p.add_argument("--out", required=True, help="output pairs JSONL")
    p.set_defaults(func=cmd_build_pairs)

    p = sub.add_parser("train", help="pre-train the dual-encoder", formatter_class=fmt)
    p.add_argument("--pairs", required=True, help="pairs JSONL")
    p.add_argument("--corpus", required=True, help="records JSONL used for hard-negative mining")
    p.add_argument("--config", default=None, help="key=value config; missing keys keep defaults")
    p.add_argument("--seed", type=int, default=None, help=f"overrides the config seed (itself overridden by ${SEED_ENV})")
    p.add_argument("--out-dir", required=True, help="directory for checkpoints, vocab and metrics")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a task file", formatter_class=fmt)
    p.add_argument("--model", required=True, help="model directory")
    p.add_argument("--name", default="model", help="checkpoint name inside the model directory")
    p.add_argument("--task", required=True, help="task JSONL")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--stem", default=None, help="report file stem (defaults to the task kind)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("search", help="nearest corpus codes for each query line", formatter_class=fmt)
    p.add_argument("--model", required=True, help="model directory")
    p.add_argument("--name", default="model", help="checkpoint name inside the model directory")
    p.add_argument("--corpus", required=True, help="records JSONL to index")
    p.add_argument("--query-file", required=True, help="one query per line")
    p.add_argument("--k", type=int, default=5, help="results per query")
    p.add_argument("--out", default=None, help="write TSV here instead of stdout")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("ablation", help="run the toy ablation ladder", formatter_class=fmt)
    p.add_argument("--families", type=int, default=4, help="number of function families")
    p.add_argument("--per-family", type=int, default=50, help="functions per family")
    p.add_argument("--seeds", type=int, nargs="+", default=list(AblationConfig.seeds), help="training seeds")
    p.add_argument("--pretrain-steps", type=int, default=AblationConfig.pretrain_steps, help="in-batch pre-training steps per rung")
    p.add_argument("--finetune-steps", type=int, default=AblationConfig.finetune_steps, help="comment fine-tuning steps per rung")
    p.add_argument("--iterations", type=int, default=AblationConfig.iterations, help="adversarial iterations of the soft-labeled rung")
    p.add_argument("--workers", type=int, default=1, help="seeds trained in parallel processes")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_ablation)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except CodeContrastError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"FileNotFound: {exc.filename}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError) as exc:
        print(f"InvalidInput: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # keep the one-line contract even for bugs
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
