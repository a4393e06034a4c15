"""Embedding index, exact nearest-neighbour search, MRR / MAP@R and the eval harness."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoder import Model
from .errors import KTooLarge, MissingRelevance
from .toycorpus import ToyCorpus, code_of

TASK_KINDS = ("comment_to_code", "code_to_code")


@dataclass
class EmbeddingIndex:
    ids: list[str]
    matrix: np.ndarray
    version: str = ""

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.ids):
            raise ValueError(f"matrix {self.matrix.shape} does not match {len(self.ids)} ids")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("index contains non-finite vectors")
        # position of each row in ascending-id order, used for tie-breaking
        self._id_rank = np.empty(len(self.ids), dtype=np.int64)
        self._id_rank[np.argsort(np.array(self.ids, dtype=object), kind="stable")] = np.arange(len(self.ids))

    def __len__(self) -> int:
        return len(self.ids)


def params_digest(model: Model) -> str:
    h = hashlib.sha256()
    for name, arr in sorted(model.params.flat().items()):
        if name.startswith("theta."):
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


def embed_corpus(model: Model, codes: Sequence[str], ids: Sequence[str] | None = None) -> EmbeddingIndex:
    """One pooled dual-encoder vector per code."""
    if not codes:
        raise ValueError("nothing to embed")
    ids = [str(i) for i in range(len(codes))] if ids is None else list(ids)
    return EmbeddingIndex(ids, model.embed_numpy(list(codes)), params_digest(model))


def knn_search(index: EmbeddingIndex, query: np.ndarray, k: int, exclude: Sequence[str] = ()) -> list[str]:
    """Top-``k`` ids by dot product, descending; ties go to the smaller id."""
    banned = set(exclude)
    n = len(index) - sum(1 for i in index.ids if i in banned)
    if k > n:
        raise KTooLarge(f"k={k} exceeds the {n} searchable items")
    if k < 0:
        raise ValueError("k must be non-negative")
    scores = index.matrix @ np.asarray(query, dtype=np.float64)
    order = np.lexsort((index._id_rank, -scores))
    out = []
    for j in order:
        if len(out) == k:
            break
        if index.ids[j] not in banned:
            out.append(index.ids[j])
    return out


def reciprocal_ranks(rankings: dict[str, list[str]], relevance: dict[str, set]) -> dict[str, float]:
    out = {}
    for q, ranked in rankings.items():
        if q not in relevance or not relevance[q]:
            raise MissingRelevance(f"query {q!r} has no relevant id")
        if len(relevance[q]) != 1:
            raise MissingRelevance(f"query {q!r} needs exactly one relevant id, has {len(relevance[q])}")
        (target,) = relevance[q]
        out[q] = 1.0 / (ranked.index(target) + 1) if target in ranked else 0.0
    return out


def mrr(rankings: dict[str, list[str]], relevance: dict[str, set]) -> float:
    """Mean reciprocal rank of the single relevant id per query."""
    rr = reciprocal_ranks(rankings, relevance)
    return float(np.mean([rr[q] for q in sorted(rr)])) if rr else 0.0


def average_precisions_at_r(rankings: dict[str, list[str]], relevance: dict[str, set]) -> dict[str, float]:
    out = {}
    for q, ranked in rankings.items():
        rel = relevance.get(q)
        if not rel:
            raise MissingRelevance(f"query {q!r} has no relevant id")
        r = len(rel)
        if len(ranked) < r:
            raise ValueError(f"query {q!r}: ranking of length {len(ranked)} is shorter than R={r}")
        hits, total = 0, 0.0
        for pos, cid in enumerate(ranked[:r], start=1):
            if cid in rel:
                hits += 1
                total += hits / pos
        out[q] = total / r
    return out


def map_at_r(rankings: dict[str, list[str]], relevance: dict[str, set]) -> float:
    """Mean over queries of average precision within the first R results."""
    ap = average_precisions_at_r(rankings, relevance)
    return float(np.mean([ap[q] for q in sorted(ap)])) if ap else 0.0


# -- tasks -------------------------------------------------------------------------

@dataclass
class EvalTask:
    kind: str
    queries: dict[str, str]
    candidates: dict[str, str]
    relevance: dict[str, set] = field(default_factory=dict)
    exclude_self: bool = False

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        self.relevance = {q: set(r) for q, r in self.relevance.items()}
        for q in self.queries:
            rel = self.relevance.get(q)
            if not rel:
                raise MissingRelevance(f"query {q!r} has no relevant id")
            missing = sorted(rel - set(self.candidates))
            if missing:
                raise MissingRelevance(f"query {q!r}: relevant id {missing[0]!r} is not in the pool")

    @property
    def metric(self) -> str:
        return "mrr" if self.kind == "comment_to_code" else "map_at_r"

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as fh:
            fh.write(json.dumps({"type": "task", "kind": self.kind, "exclude_self": self.exclude_self}, sort_keys=True) + "\n")
            for q in sorted(self.queries):
                row = {"type": "query", "id": q, "text": self.queries[q], "relevant": sorted(self.relevance[q])}
                fh.write(json.dumps(row, sort_keys=True) + "\n")
            for c in sorted(self.candidates):
                fh.write(json.dumps({"type": "candidate", "id": c, "text": self.candidates[c]}, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "EvalTask":
        head, queries, cands, rel = None, {}, {}, {}
        with Path(path).open() as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                    kind = row["type"]
                except (json.JSONDecodeError, KeyError) as exc:
                    raise ValueError(f"{path}:{lineno}: malformed task line ({exc})") from None
                if kind == "task":
                    head = row
                elif kind == "query":
                    queries[row["id"]] = row["text"]
                    rel[row["id"]] = set(row["relevant"])
                elif kind == "candidate":
                    cands[row["id"]] = row["text"]
                else:
                    raise ValueError(f"{path}:{lineno}: unknown line type {kind!r}")
        if head is None:
            raise ValueError(f"{path}: missing task header line")
        return cls(head["kind"], queries, cands, rel, bool(head.get("exclude_self", False)))


def toy_tasks(toy: ToyCorpus, split: str = "heldout") -> tuple[EvalTask, EvalTask]:
    """Comment-to-code (exact pairing) and code-to-code (same family) tasks."""
    records = toy.heldout if split == "heldout" else toy.train
    codes = {r.id: code_of(r) for r in records}
    c2c = EvalTask(
        "comment_to_code",
        {r.id: r.docstring for r in records},
        codes,
        {r.id: {r.id} for r in records},
    )
    fam_rel = {r.id: {o.id for o in records if o.id != r.id and toy.family[o.id] == toy.family[r.id]} for r in records}
    k2k = EvalTask("code_to_code", dict(codes), codes, fam_rel, exclude_self=True)
    return c2c, k2k


# -- evaluation --------------------------------------------------------------------

@dataclass
class EvalReport:
    kind: str
    metric: str
    score: float
    per_query: list[dict]
    n_queries: int
    n_candidates: int
    model_version: str = ""

    def summary_table(self) -> str:
        lines = [
            f"{'task':<16} {'metric':<9} {'score':>8} {'queries':>8} {'pool':>6}",
            f"{self.kind:<16} {self.metric:<9} {self.score:>8.4f} {self.n_queries:>8d} {self.n_candidates:>6d}",
        ]
        return "\n".join(lines) + "\n"

    def write(self, out_dir, stem: str = "eval") -> dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"{stem}.csv"
        with csv_path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["query_id", "score", "first_relevant_rank", "top1"])
            for row in self.per_query:
                w.writerow([row["query_id"], repr(row["score"]), row["first_relevant_rank"], row["top1"]])
        txt = out_dir / f"{stem}.summary.txt"
        txt.write_text(self.summary_table())
        return {"csv": csv_path, "summary": txt}


def rank_all(model: Model, task: EvalTask) -> dict[str, list[str]]:
    cids = sorted(task.candidates)
    index = embed_corpus(model, [task.candidates[c] for c in cids], cids)
    qids = sorted(task.queries)
    qvecs = model.embed_numpy([task.queries[q] for q in qids])
    out = {}
    for q, vec in zip(qids, qvecs):
        excl = (q,) if task.exclude_self and q in task.candidates else ()
        out[q] = knn_search(index, vec, len(index) - len(excl), exclude=excl)
    return out


def run_eval(model: Model, task: EvalTask) -> EvalReport:
    """Embed, rank the full pool for every query and score with the task's metric."""
    rankings = rank_all(model, task)
    if task.metric == "mrr":
        per = reciprocal_ranks(rankings, task.relevance)
    else:
        per = average_precisions_at_r(rankings, task.relevance)
    rows = []
    for q in sorted(rankings):
        ranked = rankings[q]
        first = next((i + 1 for i, c in enumerate(ranked) if c in task.relevance[q]), 0)
        rows.append({"query_id": q, "score": float(per[q]), "first_relevant_rank": first, "top1": ranked[0] if ranked else ""})
    score = float(np.mean([r["score"] for r in rows])) if rows else 0.0
    return EvalReport(task.kind, task.metric, score, rows, len(task.queries), len(task.candidates), params_digest(model))
