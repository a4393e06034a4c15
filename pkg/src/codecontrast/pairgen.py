"""Positive-pair construction.

Five strategies share one output type, :class:`PositivePair`:

* ``comment``   - (docstring, code without the docstring)
* ``asst``      - (extracted statement subtree, remaining code)
* ``transform`` - (code, renamed or dead-code-augmented code)
* ``ict_token`` - (random contiguous token span, remaining code)
* ``ict_line``  - (random consecutive lines, remaining code)

Code-side strategies operate on the docstring-stripped function, and every
split strategy records the byte offset where the extracted piece was removed,
so ``splice(pair)`` gives back that source exactly.
"""

from __future__ import annotations

import json
import random
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import CodeContrastError, EmptyOutput, NoEligibleNode, ParseError, TooShort, TransformNoop
from .syntax import (
    DEFAULT_NODE_TYPES,
    INDIVISIBLE_TYPES,
    Node,
    NodeTypeSet,
    eligible_leaves,
    is_selectable,
    parse,
    tokenize_source,
)

STRATEGIES = ("comment", "asst", "transform-rename", "transform-deadcode", "ict-token", "ict-line")
SENTINEL = "<extracted>"
DEAD_MARKER = "# dead-code"
# Fixed pool, one entry per template; "{ind}" is the statement indentation.
DEAD_CODE_TEMPLATES = (
    "_unused = 0  " + DEAD_MARKER,
    "_unused = None  " + DEAD_MARKER,
    "if False:  " + DEAD_MARKER + "\n{ind}    pass  " + DEAD_MARKER,
    "while False:  " + DEAD_MARKER + "\n{ind}    break  " + DEAD_MARKER,
)


@dataclass(frozen=True)
class FunctionRecord:
    id: str
    language: str
    code: str
    docstring: str | None = None

    def __post_init__(self) -> None:
        if not self.code:
            raise ValueError(f"record {self.id}: empty code")
        if self.docstring is not None and not self.docstring.strip():
            object.__setattr__(self, "docstring", None)

    @classmethod
    def from_json(cls, obj: dict) -> "FunctionRecord":
        return cls(str(obj["id"]), obj.get("language", "python"), obj["code"], obj.get("docstring"))

    def to_json(self) -> dict:
        return {"id": self.id, "language": self.language, "code": self.code, "docstring": self.docstring}


@dataclass(frozen=True)
class PositivePair:
    anchor: str
    positive: str
    strategy: str
    anchor_kind: str  # "text" or "code"
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.anchor == self.positive:
            raise TransformNoop("anchor and positive are identical")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "PositivePair":
        return cls(obj["anchor"], obj["positive"], obj["strategy"], obj["anchor_kind"], obj.get("provenance", {}))


@dataclass(frozen=True)
class AsstConfig:
    node_types: frozenset = DEFAULT_NODE_TYPES
    l_min: int = 20
    seed: int = 0
    sentinel: bool = False
    indivisible: frozenset = INDIVISIBLE_TYPES
    max_tries: int = 8

    def __post_init__(self) -> None:
        if self.l_min < 1:
            raise ValueError("l_min must be >= 1")
        if self.max_tries < 1:
            raise ValueError("max_tries must be >= 1")
        object.__setattr__(self, "node_types", NodeTypeSet(self.node_types))


@dataclass(frozen=True)
class PairConfig:
    asst: AsstConfig = AsstConfig()
    span_len: int = 10
    line_cnt: int = 2
    draws: int = 1
    min_doc_tokens: int = 3


@dataclass
class PairCorpus:
    pairs: list[PositivePair]
    skipped: Counter
    attempted: int

    def report(self) -> str:
        lines = [f"attempted={self.attempted} produced={len(self.pairs)} skipped={sum(self.skipped.values())}"]
        for reason, count in sorted(self.skipped.items()):
            lines.append(f"  {reason}: {count}")
        return "\n".join(lines)


# -- helpers ---------------------------------------------------------------

def _rng(seed) -> random.Random:
    return seed if isinstance(seed, random.Random) else random.Random(seed)


def _splice_bytes(context: bytes, extracted: bytes, offset: int) -> bytes:
    return context[:offset] + extracted + context[offset:]


def splice(context: str, extracted: str, offset: int, sentinel: bool = False) -> str:
    """Re-insert ``extracted`` at byte ``offset`` of ``context``."""
    ctx = context.encode("utf-8")
    if sentinel:
        marker = SENTINEL.encode()
        if ctx[offset : offset + len(marker)] != marker:
            raise ValueError("sentinel not found at offset")
        ctx = ctx[:offset] + ctx[offset + len(marker) :]
    return _splice_bytes(ctx, extracted.encode("utf-8"), offset).decode("utf-8")


def reconstruct(pair: PositivePair) -> str:
    """Original (docstring-stripped) source for a split-style pair."""
    prov = pair.provenance
    return splice(pair.positive, pair.anchor, prov["offset"], prov.get("sentinel", False))


def _docstring_node(tree) -> Node | None:
    stmts = tree.root.children
    for stmt in stmts:
        if stmt.kind == "function_definition":
            stmts = stmt.children[-1].children
            break
    if stmts and stmts[0].kind == "expression_statement":
        expr = stmts[0].children[0]
        if expr.kind in ("string", "concatenated_string"):
            return stmts[0]
    return None


def strip_docstring(code: str) -> str:
    """Remove the leading docstring statement (with its line) if there is one."""
    tree = parse(code)
    node = _docstring_node(tree)
    if node is None:
        return code
    data = tree.source
    start, end = node.start, node.end
    line_start = data.rfind(b"\n", 0, start) + 1
    line_end = data.find(b"\n", end)
    line_end = len(data) if line_end < 0 else line_end + 1
    if not data[line_start:start].strip() and not data[end:line_end].split(b"#")[0].strip():
        start, end = line_start, line_end
    return (data[:start] + data[end:]).decode("utf-8")


def normalize_docstring(doc: str) -> str:
    return " ".join(doc.split())


# -- comment pairs ---------------------------------------------------------

def comment_pair(rec: FunctionRecord, min_tokens: int = 3) -> PositivePair | None:
    """(docstring, code) or None when the docstring is missing or too short."""
    if rec.docstring is None:
        return None
    doc = normalize_docstring(rec.docstring)
    if len(doc.split()) < min_tokens:
        return None
    code = strip_docstring(rec.code)
    return PositivePair(doc, code, "comment", "text", {"record_id": rec.id})


# -- ASST ------------------------------------------------------------------

def extract_asst_pair(rec: FunctionRecord, cfg: AsstConfig = AsstConfig(), seed=None) -> PositivePair:
    """Pick a random statement-level subtree and pair it with the rest of the code.

    A leaf is sampled uniformly among those below some node of
    ``cfg.node_types``; we then walk towards the root and stop at the first
    selectable node whose text is at least ``cfg.l_min`` bytes long.  A
    climb that reaches the root resamples the leaf, up to ``cfg.max_tries``
    times.
    """
    rng = _rng(cfg.seed if seed is None else seed)
    code = strip_docstring(rec.code)
    tree = parse(code)
    candidates = eligible_leaves(tree, cfg.node_types)
    if not candidates:
        raise NoEligibleNode(f"record {rec.id}: no leaf below a selectable node")
    data = tree.source
    for _ in range(cfg.max_tries):
        node = candidates[rng.randrange(len(candidates))]
        while node is not None and not (node.end - node.start >= cfg.l_min and is_selectable(node, cfg.node_types, cfg.indivisible)):
            node = node.parent
        if node is not None:
            break
    else:
        raise NoEligibleNode(f"record {rec.id}: climb reached the root in {cfg.max_tries} tries")
    before, span, after = data[: node.start], data[node.start : node.end], data[node.end :]
    middle = SENTINEL.encode() if cfg.sentinel else b""
    context = before + middle + after
    if not (before + after).strip():
        raise NoEligibleNode(f"record {rec.id}: extraction would leave no context")
    column = node.start - (data.rfind(b"\n", 0, node.start) + 1)
    return PositivePair(
        span.decode("utf-8"),
        context.decode("utf-8"),
        "asst",
        "code",
        {"record_id": rec.id, "offset": node.start, "column": column, "node_kind": node.kind, "sentinel": cfg.sentinel},
    )


# -- semantic-preserving transforms ------------------------------------------

def _binding_identifiers(node: Node) -> Iterable[Node]:
    """Identifiers bound by a target expression (not attribute/subscript bases)."""
    if node.kind == "identifier":
        yield node
    elif node.kind in ("expression_list", "pattern_list", "tuple", "list", "parenthesized_expression"):
        for child in node.named_children:
            yield from _binding_identifiers(child)
    elif node.kind in ("list_splat", "list_splat_pattern", "dictionary_splat_pattern"):
        yield from _binding_identifiers(node.children[1])


def _bound_names(tree) -> set[str]:
    data = tree.source
    names: set[str] = set()

    def add(ident: Node) -> None:
        names.add(data[ident.start : ident.end].decode())

    for node in tree.root.walk():
        kind = node.kind
        if kind == "parameters":
            for p in node.named_children:
                while p.kind in ("typed_parameter", "default_parameter"):
                    p = p.children[0]
                for ident in _binding_identifiers(p):
                    add(ident)
        elif kind == "assignment_statement":
            for target in node.children[:-1:2]:
                for ident in _binding_identifiers(target):
                    add(ident)
        elif kind in ("for_statement", "for_in_clause"):
            for ident in _binding_identifiers(node.children[1]):
                add(ident)
        elif kind == "with_item" and len(node.children) == 3:
            for ident in _binding_identifiers(node.children[2]):
                add(ident)
        elif kind == "except_clause":
            kids = node.children
            for i, child in enumerate(kids):
                if child.kind == "as":
                    add(kids[i + 1])
    return names


def _renameable_occurrences(tree) -> list[Node]:
    """Identifier leaves that refer to variables (not attributes, kwargs, def names)."""
    out = []
    for leaf in tree.leaves:
        if leaf.kind != "identifier":
            continue
        parent = leaf.parent
        if parent.kind == "attribute" and parent.children[-1] is leaf:
            continue
        if parent.kind == "keyword_argument" and parent.children[0] is leaf:
            continue
        if parent.kind == "function_definition":
            continue
        out.append(leaf)
    return out


def rename_identifiers(code: str, mapping: dict[str, str]) -> str:
    """Apply ``mapping`` to every variable occurrence whose name it contains."""
    tree = parse(code)
    data = tree.source
    pieces = []
    prev = 0
    for leaf in _renameable_occurrences(tree):
        name = data[leaf.start : leaf.end].decode()
        if name in mapping:
            pieces.append(data[prev : leaf.start])
            pieces.append(mapping[name].encode())
            prev = leaf.end
    pieces.append(data[prev:])
    return b"".join(pieces).decode("utf-8")


def local_names(code: str) -> list[str]:
    """Locally bound names in order of first occurrence."""
    tree = parse(code)
    bound = _bound_names(tree)
    data = tree.source
    seen: dict[str, None] = {}
    for leaf in _renameable_occurrences(tree):
        name = data[leaf.start : leaf.end].decode()
        if name in bound:
            seen.setdefault(name)
    return list(seen)


def renaming_map(code: str, seed=None, prefix: str = "var_") -> dict[str, str]:
    """Map local names to fresh ``var_<k>`` names.

    ``seed=None`` keeps first-occurrence order; otherwise the order is a
    seeded permutation.  Fresh names never collide with names already present.
    """
    names = local_names(code)
    tree = parse(code)
    taken = {tree.source[l.start : l.end].decode() for l in tree.leaves if l.kind == "identifier"}
    fresh = []
    k = 0
    while len(fresh) < len(names):
        cand = f"{prefix}{k}"
        if cand not in taken:
            fresh.append(cand)
        k += 1
    order = list(range(len(names)))
    if seed is not None:
        _rng(seed).shuffle(order)
    return {name: fresh[order[i]] for i, name in enumerate(names)}


def transform_rename_variables(rec: FunctionRecord, seed=None) -> PositivePair:
    code = strip_docstring(rec.code)
    mapping = renaming_map(code, seed)
    if not mapping:
        raise TransformNoop(f"record {rec.id}: no local identifiers")
    renamed = rename_identifiers(code, mapping)
    if renamed == code:
        raise TransformNoop(f"record {rec.id}: renaming changed nothing")
    return PositivePair(code, renamed, "transform", "code", {"record_id": rec.id, "kind": "rename", "mapping": mapping})


def _target_block(tree) -> list[Node]:
    for stmt in tree.root.children:
        if stmt.kind == "function_definition":
            return stmt.children[-1].children
    return tree.root.children


def transform_insert_dead_code(rec: FunctionRecord, seed=None, boundary: int | None = None, template: int | None = None) -> PositivePair:
    """Insert one never-executed statement at a statement boundary of the body.

    Inserted lines carry a trailing ``# dead-code`` marker so
    :func:`strip_dead_code` can undo the change.
    """
    rng = _rng(seed)
    code = strip_docstring(rec.code)
    tree = parse(code)
    data = tree.source
    stmts = _target_block(tree)
    if not stmts:
        raise TransformNoop(f"record {rec.id}: no statements")
    b = rng.randrange(len(stmts) + 1) if boundary is None else boundary
    t = rng.randrange(len(DEAD_CODE_TEMPLATES)) if template is None else template
    anchor = stmts[min(b, len(stmts) - 1)]
    line_start = data.rfind(b"\n", 0, anchor.start) + 1
    indent = data[line_start : anchor.start]
    if indent.strip():
        raise TransformNoop(f"record {rec.id}: statement shares a line with its header")
    text = DEAD_CODE_TEMPLATES[t].format(ind=indent.decode()).encode()
    if b < len(stmts):
        offset = line_start
        out = data[:offset] + indent + text + b"\n" + data[offset:]
    else:
        eol = data.find(b"\n", anchor.end)
        if eol < 0:
            data = data + b"\n"
            eol = len(data) - 1
        offset = eol + 1
        out = data[:offset] + indent + text + b"\n" + data[offset:]
    result = out.decode("utf-8")
    parse(result)  # the grammar is closed under insertion; a failure here is a bug
    return PositivePair(code, result, "transform", "code", {"record_id": rec.id, "kind": "deadcode", "boundary": b, "template": t, "offset": offset})


def strip_dead_code(code: str) -> str:
    return "".join(line for line in code.splitlines(keepends=True) if not line.rstrip("\r\n").endswith(DEAD_MARKER))


# -- ICT baselines ------------------------------------------------------------

def ict_token_split(rec: FunctionRecord, seed=None, span_len: int = 10) -> PositivePair:
    """Remove ``span_len`` consecutive lexical tokens; may be ungrammatical."""
    rng = _rng(seed)
    code = strip_docstring(rec.code)
    data = code.encode("utf-8")
    toks = [t for t in tokenize_source(data) if t.kind in ("NAME", "NUMBER", "STRING", "OP")]
    if len(toks) <= span_len:
        raise TooShort(f"record {rec.id}: {len(toks)} tokens <= span_len {span_len}")
    i = rng.randrange(len(toks) - span_len + 1)
    start, end = toks[i].start, toks[i + span_len - 1].end
    return PositivePair(
        data[start:end].decode("utf-8"),
        (data[:start] + data[end:]).decode("utf-8"),
        "ict_token",
        "code",
        {"record_id": rec.id, "offset": start},
    )


def ict_line_split(rec: FunctionRecord, seed=None, line_cnt: int = 2, start_line: int | None = None) -> PositivePair:
    """Remove ``line_cnt`` consecutive lines (newlines included)."""
    rng = _rng(seed)
    code = strip_docstring(rec.code)
    lines = code.encode("utf-8").splitlines(keepends=True)
    if len(lines) <= line_cnt:
        raise TooShort(f"record {rec.id}: {len(lines)} lines <= line_cnt {line_cnt}")
    i = rng.randrange(len(lines) - line_cnt + 1) if start_line is None else start_line
    offset = sum(len(l) for l in lines[:i])
    removed = b"".join(lines[i : i + line_cnt])
    rest = b"".join(lines[:i] + lines[i + line_cnt :])
    return PositivePair(removed.decode("utf-8"), rest.decode("utf-8"), "ict_line", "code", {"record_id": rec.id, "offset": offset})


# -- corpus building ----------------------------------------------------------

def parse_strategies(spec: str) -> list[str]:
    names = [s.strip() for s in re.split(r"[+,]", spec) if s.strip()]
    for name in names:
        if name not in STRATEGIES:
            raise ValueError(f"unknown strategy {name!r}; expected one of {', '.join(STRATEGIES)}")
    return names


def make_pair(rec: FunctionRecord, strategy: str, cfg: PairConfig, seed) -> PositivePair | None:
    if strategy == "comment":
        return comment_pair(rec, cfg.min_doc_tokens)
    if strategy == "asst":
        return extract_asst_pair(rec, cfg.asst, seed)
    if strategy == "transform-rename":
        return transform_rename_variables(rec, seed)
    if strategy == "transform-deadcode":
        return transform_insert_dead_code(rec, seed)
    if strategy == "ict-token":
        return ict_token_split(rec, seed, cfg.span_len)
    if strategy == "ict-line":
        return ict_line_split(rec, seed, cfg.line_cnt)
    raise ValueError(f"unknown strategy {strategy!r}")


def build_pair_corpus(records: Sequence[FunctionRecord], strategy: str | Sequence[str], cfg: PairConfig = PairConfig(), seed: int = 0) -> PairCorpus:
    """Run one or more strategies over ``records`` (ordered by id).

    Records that fail a strategy's preconditions are skipped and counted by
    error type.  Raises :class:`EmptyOutput` when nothing is produced.
    """
    strategies = parse_strategies(strategy) if isinstance(strategy, str) else list(strategy)
    pairs: list[PositivePair] = []
    skipped: Counter = Counter()
    attempted = 0
    for name in strategies:
        for rec in sorted(records, key=lambda r: r.id):
            for draw in range(cfg.draws if name != "comment" else 1):
                attempted += 1
                try:
                    pair = make_pair(rec, name, cfg, f"{seed}:{name}:{rec.id}:{draw}")
                except (CodeContrastError, ParseError) as exc:
                    skipped[f"{name}:{type(exc).__name__}"] += 1
                    continue
                if pair is None:
                    skipped[f"{name}:NoDocstring"] += 1
                    continue
                pairs.append(pair)
    if not pairs:
        raise EmptyOutput(f"no pairs produced from {len(records)} records")
    return PairCorpus(pairs, skipped, attempted)


# -- JSONL -------------------------------------------------------------------

def read_jsonl(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
    return rows


def write_jsonl(path, rows: Iterable[dict]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def read_records(path) -> list[FunctionRecord]:
    out = []
    for i, obj in enumerate(read_jsonl(path), 1):
        try:
            out.append(FunctionRecord.from_json(obj))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{path}: record {obj.get('id', f'line {i}')}: {exc}") from None
    return out


def read_pairs(path) -> list[PositivePair]:
    return [PositivePair.from_json(obj) for obj in read_jsonl(path)]
