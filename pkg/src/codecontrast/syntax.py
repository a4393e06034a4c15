"""Byte-exact parser for a small Python-like language.

The grammar covers what function-level snippets in the toy corpus use:
``def``, ``if/elif/else``, ``for``, ``while``, ``with``, ``try/except/finally``,
``return``/``pass``/``break``/``continue``/``raise``, plain and augmented
assignment, expression statements, calls, subscripts, attributes, literals and
list comprehensions.  Blocks are delimited by indentation.

Every token becomes a leaf :class:`Node` with a half-open byte span.  Whitespace,
newlines and comments between tokens are kept as *trivia* on the
:class:`SyntaxTree`, so ``tree.reconstruct() == src`` for any parsed input.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Protocol, Sequence

from .errors import ParseError

__all__ = [
    "DEFAULT_NODE_TYPES",
    "INDIVISIBLE_TYPES",
    "Node",
    "NodeTypeSet",
    "SourceText",
    "SubsetParser",
    "SyntaxTree",
    "SyntaxTreeProvider",
    "Token",
    "eligible_leaves",
    "node_text",
    "parse",
    "parse_fragment",
    "tokenize_source",
]

# Statement-level kinds whose subtrees may be extracted.
DEFAULT_NODE_TYPES = frozenset(
    {
        "for_statement",
        "while_statement",
        "if_statement",
        "with_statement",
        "try_statement",
        "assignment_statement",
        "function_call",
    }
)
# A function_call below one of these is not selectable on its own.
INDIVISIBLE_TYPES = frozenset({"assignment_statement", "return_statement"})

KEYWORDS = frozenset(
    """False None True and as assert async await break class continue def del
    elif else except finally for from global if import in is lambda nonlocal
    not or pass raise return try while with yield""".split()
)
UNSUPPORTED_KEYWORDS = frozenset(
    "assert async await class del from global import lambda nonlocal yield".split()
)

_OPERATORS = sorted(
    """** // >> << -> += -= *= /= %= &= |= ^= == != <= >= := **= //= >>= <<=
    ( ) [ ] { } : , ; . + - * / % < > = & | ^ ~ @""".split(),
    key=len,
    reverse=True,
)
_AUGMENTED = frozenset("+= -= *= /= %= &= |= ^= **= //= >>= <<=".split())
_COMPARISON = frozenset("< > == >= <= !=".split())

_NAME_RE = re.compile(rb"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(
    rb"0[xX][0-9a-fA-F_]+|0[bB][01_]+|0[oO][0-7_]+"
    rb"|(?:\d[\d_]*\.?[\d_]*|\.\d[\d_]*)(?:[eE][+-]?\d+)?j?"
)
_STRING_START_RE = re.compile(rb"(?i:[rbuf]|rb|br|fr|rf)?('''|\"\"\"|'|\")")
_WS_RE = re.compile(rb"[ \t\f]*")


@dataclass(frozen=True)
class SourceText:
    """UTF-8 source bytes plus a stable identifier."""

    data: bytes
    id: str = "<source>"

    def __post_init__(self) -> None:
        if isinstance(self.data, str):
            object.__setattr__(self, "data", self.data.encode("utf-8"))
        if not self.data:
            raise ValueError("source text must be non-empty")
        self.data.decode("utf-8")  # raises UnicodeDecodeError on invalid input

    @property
    def text(self) -> str:
        return self.data.decode("utf-8")


class NodeTypeSet(frozenset):
    """Set of node kinds an extraction may stop at (never empty)."""

    def __new__(cls, members=DEFAULT_NODE_TYPES):
        self = super().__new__(cls, members)
        if not self:
            raise ValueError("node type set must not be empty")
        return self


@dataclass(frozen=True)
class Token:
    kind: str  # NAME NUMBER STRING OP NEWLINE INDENT DEDENT ENDMARKER
    start: int
    end: int
    value: str


@dataclass(eq=False)
class Node:
    kind: str
    start: int
    end: int
    children: list["Node"] = field(default_factory=list)
    parent: "Node | None" = field(default=None, repr=False)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    @property
    def named_children(self) -> list["Node"]:
        return [c for c in self.children if _is_named(c.kind)]

    def walk(self) -> Iterator["Node"]:
        """Pre-order traversal."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def ancestors(self) -> Iterator["Node"]:
        node = self.parent
        while node is not None:
            yield node
            node = node.parent

    def structure(self):
        """Nested ``(kind, start, end, children)`` tuples for equality checks."""
        return (self.kind, self.start, self.end, tuple(c.structure() for c in self.children))

    def sexp(self) -> str:
        if not self.children:
            return self.kind
        return f"{self.kind}({', '.join(c.sexp() for c in self.named_children)})"


def _is_named(kind: str) -> bool:
    # keyword and operator leaves take their literal text as kind
    return kind[0].isalpha() and kind not in KEYWORDS


@dataclass(eq=False)
class SyntaxTree:
    source: bytes
    root: Node
    leaves: list[Node]
    trivia: list[bytes]  # trivia[i] precedes leaves[i]; trivia[-1] trails the last leaf

    def reconstruct(self) -> bytes:
        parts = []
        for gap, leaf in zip(self.trivia, self.leaves):
            parts.append(gap)
            parts.append(self.source[leaf.start : leaf.end])
        parts.append(self.trivia[-1])
        return b"".join(parts)

    def text(self, node: Node) -> str:
        return self.source[node.start : node.end].decode("utf-8")

    def find(self, kind: str) -> list[Node]:
        return [n for n in self.root.walk() if n.kind == kind]


class SyntaxTreeProvider(Protocol):
    def parse(self, src: SourceText) -> SyntaxTree: ...


def _line_col(data: bytes, pos: int) -> tuple[int, int]:
    line = data.count(b"\n", 0, pos) + 1
    col = pos - (data.rfind(b"\n", 0, pos) + 1) + 1
    return line, col


def tokenize_source(data: bytes, tabsize: int = 8) -> list[Token]:
    """Split source bytes into tokens, synthesising NEWLINE/INDENT/DEDENT.

    Tabs in indentation advance to the next multiple of ``tabsize`` columns.
    Blank and comment-only lines never affect indentation.
    """
    tokens: list[Token] = []
    indents = [0]
    depth = 0
    pos = 0
    n = len(data)
    at_line_start = True
    line_has_tokens = False

    def fail(msg: str, at: int):
        line, col = _line_col(data, at)
        raise ParseError(msg, line, col)

    while pos < n:
        if at_line_start and depth == 0:
            col = 0
            p = pos
            while p < n and data[p] in b" \t\f":
                col = (col // tabsize + 1) * tabsize if data[p] == 9 else col + 1
                p += 1
            if p >= n or data[p] in b"#\r\n":
                # blank or comment-only line
                eol = data.find(b"\n", p)
                pos = n if eol < 0 else eol + 1
                continue
            if col > indents[-1]:
                indents.append(col)
                tokens.append(Token("INDENT", p, p, ""))
            else:
                while col < indents[-1]:
                    indents.pop()
                    tokens.append(Token("DEDENT", p, p, ""))
                if col != indents[-1]:
                    fail("inconsistent dedent", p)
            pos = p
            at_line_start = False
            line_has_tokens = False
        c = data[pos]
        if c in b" \t\f":
            pos = _WS_RE.match(data, pos).end()
            continue
        if c == 0x23:  # '#'
            eol = data.find(b"\n", pos)
            pos = n if eol < 0 else eol
            continue
        if c == 0x5C:  # backslash continuation
            if data.startswith(b"\\\n", pos) or data.startswith(b"\\\r\n", pos):
                pos = data.index(b"\n", pos) + 1
                continue
            fail("unexpected backslash", pos)
        if c in b"\r\n":
            eol = pos + 1 if c == 0x0A else (pos + 2 if data.startswith(b"\r\n", pos) else pos + 1)
            if depth == 0:
                tokens.append(Token("NEWLINE", pos, eol, "\n"))
                at_line_start = True
            pos = eol
            continue
        line_has_tokens = True
        m = _STRING_START_RE.match(data, pos)
        if m:
            quote = m.group(1)
            end = _scan_string(data, m.end(), quote)
            if end < 0:
                fail("unterminated string", pos)
            tokens.append(Token("STRING", pos, end, data[pos:end].decode("utf-8")))
            pos = end
            continue
        m = _NAME_RE.match(data, pos)
        if m:
            tokens.append(Token("NAME", pos, m.end(), m.group().decode()))
            pos = m.end()
            continue
        if c >= 0x80:
            fail("non-ASCII identifiers are not supported", pos)
        m = _NUMBER_RE.match(data, pos)
        if m and m.end() > pos and not (c == 0x2E and m.end() == pos + 1):
            tokens.append(Token("NUMBER", pos, m.end(), m.group().decode()))
            pos = m.end()
            continue
        for op in _OPERATORS:
            if data.startswith(op.encode(), pos):
                if op in "([{":
                    depth += 1
                elif op in ")]}":
                    depth -= 1
                    if depth < 0:
                        fail(f"unmatched {op!r}", pos)
                tokens.append(Token("OP", pos, pos + len(op), op))
                pos += len(op)
                break
        else:
            fail(f"unexpected character {chr(c)!r}", pos)
    if depth:
        fail("unclosed bracket at end of input", n)
    if tokens and tokens[-1].kind not in ("NEWLINE", "INDENT", "DEDENT") and line_has_tokens:
        tokens.append(Token("NEWLINE", n, n, ""))
    while len(indents) > 1:
        indents.pop()
        tokens.append(Token("DEDENT", n, n, ""))
    tokens.append(Token("ENDMARKER", n, n, ""))
    return tokens


def _scan_string(data: bytes, pos: int, quote: bytes) -> int:
    n = len(data)
    triple = len(quote) == 3
    while pos < n:
        c = data[pos]
        if c == 0x5C:
            pos += 2
            continue
        if data.startswith(quote, pos):
            return pos + len(quote)
        if not triple and c == 0x0A:
            return -1
        pos += 1
    return -1


class _Parser:
    def __init__(self, data: bytes, tabsize: int = 8):
        self.data = data
        self.toks = tokenize_source(data, tabsize)
        self.i = 0
        self.leaves: list[Node] = []

    # token helpers -------------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, value: str) -> bool:
        t = self.tok
        return t.kind in ("OP", "NAME") and t.value == value

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        line, col = _line_col(self.data, tok.start)
        raise ParseError(msg, line, col)

    def leaf(self) -> Node:
        t = self.tok
        if t.kind == "NAME":
            if t.value in UNSUPPORTED_KEYWORDS:
                self.error(f"unsupported syntax {t.value!r}")
            kind = t.value.lower() if t.value in ("True", "False", "None") else (
                t.value if t.value in KEYWORDS else "identifier"
            )
        elif t.kind == "NUMBER":
            kind = "number"
        elif t.kind == "STRING":
            kind = "string"
        elif t.kind == "OP":
            kind = t.value
        else:
            self.error(f"unexpected {t.kind}")
        node = Node(kind, t.start, t.end)
        self.leaves.append(node)
        self.i += 1
        return node

    def expect(self, value: str) -> Node:
        if not self.at(value):
            self.error(f"expected {value!r}")
        return self.leaf()

    def expect_kind(self, kind: str) -> Token:
        if self.tok.kind != kind:
            self.error(f"expected {kind}")
        t = self.tok
        self.i += 1
        return t

    def name(self) -> Node:
        t = self.tok
        if t.kind != "NAME" or t.value in KEYWORDS:
            self.error("expected identifier")
        return self.leaf()

    @staticmethod
    def node(kind: str, children: Sequence[Node]) -> Node:
        node = Node(kind, children[0].start, children[-1].end, list(children))
        for child in children:
            child.parent = node
        return node

    # statements ----------------------------------------------------------
    def module(self) -> Node:
        stmts = []
        while self.tok.kind != "ENDMARKER":
            if self.tok.kind == "INDENT":
                self.error("unexpected indent")
            stmts.append(self.statement())
        root = Node("module", 0, len(self.data), stmts)
        for s in stmts:
            s.parent = root
        return root

    def statement(self) -> Node:
        t = self.tok
        if t.kind == "NAME":
            handler = {
                "def": self.function_definition,
                "if": self.if_statement,
                "for": self.for_statement,
                "while": self.while_statement,
                "with": self.with_statement,
                "try": self.try_statement,
            }.get(t.value)
            if handler:
                return handler()
            if t.value in ("elif", "else", "except", "finally"):
                self.error(f"{t.value!r} without a matching block")
        stmt = self.simple_statement()
        self.end_of_line()
        return stmt

    def end_of_line(self) -> None:
        if self.tok.kind != "NEWLINE":
            self.error("expected end of line")
        self.i += 1

    def block(self) -> Node:
        if self.tok.kind == "NEWLINE":
            self.i += 1
            if self.tok.kind != "INDENT":
                self.error("expected an indented block")
            self.i += 1
            stmts = []
            while self.tok.kind != "DEDENT":
                if self.tok.kind == "ENDMARKER":
                    self.error("unexpected end of input")
                stmts.append(self.statement())
            self.i += 1
            return self.node("block", stmts)
        stmt = self.simple_statement()
        self.end_of_line()
        return self.node("block", [stmt])

    def header_colon_block(self, parts: list[Node]) -> list[Node]:
        parts.append(self.expect(":"))
        parts.append(self.block())
        return parts

    def function_definition(self) -> Node:
        parts = [self.leaf(), self.name(), self.parameters()]
        if self.at("->"):
            parts += [self.leaf(), self.expression()]
        return self.node("function_definition", self.header_colon_block(parts))

    def parameters(self) -> Node:
        parts = [self.expect("(")]
        while not self.at(")"):
            if self.at("*") or self.at("**"):
                star = self.leaf()
                param = self.node("list_splat_pattern" if star.kind == "*" else "dictionary_splat_pattern", [star, self.name()])
            else:
                ident = self.name()
                param = ident
                if self.at(":"):
                    param = self.node("typed_parameter", [ident, self.leaf(), self.expression()])
                if self.at("="):
                    param = self.node("default_parameter", [param, self.leaf(), self.expression()])
            parts.append(param)
            if not self.at(")"):
                parts.append(self.expect(","))
        parts.append(self.leaf())
        return self.node("parameters", parts)

    def if_statement(self) -> Node:
        parts = self.header_colon_block([self.leaf(), self.expression()])
        while self.at("elif"):
            parts.append(self.node("elif_clause", self.header_colon_block([self.leaf(), self.expression()])))
        if self.at("else"):
            parts.append(self.else_clause())
        return self.node("if_statement", parts)

    def else_clause(self) -> Node:
        return self.node("else_clause", self.header_colon_block([self.leaf()]))

    def for_statement(self) -> Node:
        parts = [self.leaf(), self.target_list(), self.expect("in"), self.expression_list()]
        self.header_colon_block(parts)
        if self.at("else"):
            parts.append(self.else_clause())
        return self.node("for_statement", parts)

    def while_statement(self) -> Node:
        parts = self.header_colon_block([self.leaf(), self.expression()])
        if self.at("else"):
            parts.append(self.else_clause())
        return self.node("while_statement", parts)

    def with_statement(self) -> Node:
        parts = [self.leaf()]
        while True:
            item = [self.expression()]
            if self.at("as"):
                item += [self.leaf(), self.target()]
            parts.append(self.node("with_item", item))
            if not self.at(","):
                break
            parts.append(self.leaf())
        return self.node("with_statement", self.header_colon_block(parts))

    def try_statement(self) -> Node:
        parts = self.header_colon_block([self.leaf()])
        handlers = 0
        while self.at("except"):
            clause = [self.leaf()]
            if not self.at(":"):
                clause.append(self.expression())
                if self.at("as"):
                    clause += [self.leaf(), self.name()]
            parts.append(self.node("except_clause", self.header_colon_block(clause)))
            handlers += 1
        if handlers and self.at("else"):
            parts.append(self.else_clause())
        if self.at("finally"):
            parts.append(self.node("finally_clause", self.header_colon_block([self.leaf()])))
            handlers += 1
        if not handlers:
            self.error("try without except or finally")
        return self.node("try_statement", parts)

    def simple_statement(self) -> Node:
        t = self.tok
        if t.kind == "NAME":
            if t.value == "return":
                parts = [self.leaf()]
                if self.tok.kind != "NEWLINE":
                    parts.append(self.expression_list())
                return self.node("return_statement", parts)
            if t.value in ("pass", "break", "continue"):
                return self.node(f"{t.value}_statement", [self.leaf()])
            if t.value == "raise":
                parts = [self.leaf()]
                if self.tok.kind != "NEWLINE":
                    parts.append(self.expression())
                return self.node("raise_statement", parts)
        if t.kind == "NEWLINE":
            self.error("expected a statement")
        first = self.expression_list()
        if self.at("="):
            parts = [first]
            while self.at("="):
                parts.append(self.leaf())
                parts.append(self.expression_list())
            for target in parts[:-1:2]:
                self.check_target(target)
            return self.node("assignment_statement", parts)
        if self.tok.kind == "OP" and self.tok.value in _AUGMENTED:
            self.check_target(first)
            return self.node("assignment_statement", [first, self.leaf(), self.expression_list()])
        return self.node("expression_statement", [first])

    def check_target(self, node: Node) -> None:
        if node.kind in ("identifier", "attribute", "subscript"):
            return
        if node.kind in ("expression_list", "tuple", "list", "parenthesized_expression"):
            for child in node.named_children:
                self.check_target(child)
            return
        if node.kind == "list_splat":
            self.check_target(node.children[1])
            return
        line, col = _line_col(self.data, node.start)
        raise ParseError(f"cannot assign to {node.kind}", line, col)

    # expressions ---------------------------------------------------------
    def target(self) -> Node:
        node = self.bitor()
        self.check_target(node)
        return node

    def target_list(self) -> Node:
        items = [self.target()]
        while self.at(","):
            items.append(self.leaf())
            if self.at("in") or self.at("="):
                break
            items.append(self.target())
        return items[0] if len(items) == 1 else self.node("pattern_list", items)

    def expression_list(self) -> Node:
        items = [self.star_or_expression()]
        while self.at(","):
            items.append(self.leaf())
            if not self.starts_expression():
                break
            items.append(self.star_or_expression())
        return items[0] if len(items) == 1 else self.node("expression_list", items)

    def star_or_expression(self) -> Node:
        if self.at("*"):
            return self.node("list_splat", [self.leaf(), self.bitor()])
        return self.expression()

    def starts_expression(self) -> bool:
        t = self.tok
        if t.kind in ("NUMBER", "STRING"):
            return True
        if t.kind == "NAME":
            return t.value not in KEYWORDS or t.value in ("not", "True", "False", "None")
        return t.kind == "OP" and t.value in ("(", "[", "{", "-", "+", "~", "*")

    def expression(self) -> Node:
        body = self.or_test()
        if self.at("if"):
            cond = [body, self.leaf(), self.or_test(), self.expect("else"), self.expression()]
            return self.node("conditional_expression", cond)
        return body

    def or_test(self) -> Node:
        left = self.and_test()
        while self.at("or"):
            left = self.node("boolean_operator", [left, self.leaf(), self.and_test()])
        return left

    def and_test(self) -> Node:
        left = self.not_test()
        while self.at("and"):
            left = self.node("boolean_operator", [left, self.leaf(), self.not_test()])
        return left

    def not_test(self) -> Node:
        if self.at("not"):
            return self.node("not_operator", [self.leaf(), self.not_test()])
        return self.comparison()

    def comparison(self) -> Node:
        parts = [self.bitor()]
        while True:
            t = self.tok
            if t.kind == "OP" and t.value in _COMPARISON:
                parts += [self.leaf(), self.bitor()]
            elif self.at("in"):
                parts += [self.leaf(), self.bitor()]
            elif self.at("not") and self.peek().value == "in":
                parts += [self.leaf(), self.leaf(), self.bitor()]
            elif self.at("is"):
                parts.append(self.leaf())
                if self.at("not"):
                    parts.append(self.leaf())
                parts.append(self.bitor())
            else:
                break
        return parts[0] if len(parts) == 1 else self.node("comparison_operator", parts)

    def _binary(self, ops: tuple[str, ...], operand) -> Node:
        left = operand()
        while self.tok.kind == "OP" and self.tok.value in ops:
            left = self.node("binary_operator", [left, self.leaf(), operand()])
        return left

    def bitor(self) -> Node:
        return self._binary(("|",), self.bitxor)

    def bitxor(self) -> Node:
        return self._binary(("^",), self.bitand)

    def bitand(self) -> Node:
        return self._binary(("&",), self.shift)

    def shift(self) -> Node:
        return self._binary(("<<", ">>"), self.arith)

    def arith(self) -> Node:
        return self._binary(("+", "-"), self.term)

    def term(self) -> Node:
        return self._binary(("*", "/", "//", "%", "@"), self.factor)

    def factor(self) -> Node:
        if self.tok.kind == "OP" and self.tok.value in ("-", "+", "~"):
            return self.node("unary_operator", [self.leaf(), self.factor()])
        return self.power()

    def power(self) -> Node:
        base = self.primary()
        if self.at("**"):
            return self.node("binary_operator", [base, self.leaf(), self.factor()])
        return base

    def primary(self) -> Node:
        node = self.atom()
        while True:
            if self.at("("):
                node = self.node("function_call", [node, self.argument_list()])
            elif self.at("["):
                node = self.node("subscript", [node, self.leaf(), self.subscript_body(), self.expect("]")])
            elif self.at("."):
                node = self.node("attribute", [node, self.leaf(), self.name()])
            else:
                return node

    def argument_list(self) -> Node:
        parts = [self.leaf()]
        while not self.at(")"):
            if self.tok.kind == "NAME" and self.peek().kind == "OP" and self.peek().value == "=":
                arg = self.node("keyword_argument", [self.name(), self.leaf(), self.expression()])
            elif self.at("*") or self.at("**"):
                star = self.leaf()
                kind = "list_splat" if star.kind == "*" else "dictionary_splat"
                arg = self.node(kind, [star, self.expression()])
            else:
                arg = self.expression()
                if self.at("for"):
                    arg = self.node("generator_expression", [arg, *self.comprehension_clauses()])
            parts.append(arg)
            if not self.at(")"):
                parts.append(self.expect(","))
        parts.append(self.leaf())
        return self.node("argument_list", parts)

    def subscript_body(self) -> Node:
        items = [self.slice_item()]
        while self.at(","):
            items.append(self.leaf())
            if self.at("]"):
                break
            items.append(self.slice_item())
        return items[0] if len(items) == 1 else self.node("expression_list", items)

    def slice_item(self) -> Node:
        parts = []
        if not self.at(":"):
            parts.append(self.expression())
            if not self.at(":"):
                return parts[0]
        for _ in range(2):
            if not self.at(":"):
                break
            parts.append(self.leaf())
            if not (self.at(":") or self.at("]") or self.at(",")):
                parts.append(self.expression())
        return self.node("slice", parts)

    def comprehension_clauses(self) -> list[Node]:
        clauses = []
        while self.at("for") or self.at("if"):
            if self.at("for"):
                clauses.append(self.node("for_in_clause", [self.leaf(), self.target_list(), self.expect("in"), self.or_test()]))
            else:
                clauses.append(self.node("if_clause", [self.leaf(), self.or_test()]))
        return clauses

    def atom(self) -> Node:
        t = self.tok
        if t.kind == "NAME":
            if t.value in ("True", "False", "None"):
                return self.leaf()
            return self.name()
        if t.kind == "NUMBER":
            return self.leaf()
        if t.kind == "STRING":
            parts = [self.leaf()]
            while self.tok.kind == "STRING":
                parts.append(self.leaf())
            return parts[0] if len(parts) == 1 else self.node("concatenated_string", parts)
        if t.kind == "OP":
            if t.value == "(":
                return self.paren()
            if t.value == "[":
                return self.bracket()
            if t.value == "{":
                return self.brace()
        self.error("expected an expression")

    def paren(self) -> Node:
        open_ = self.leaf()
        if self.at(")"):
            return self.node("tuple", [open_, self.leaf()])
        first = self.star_or_expression()
        if self.at("for"):
            return self.node("generator_expression", [open_, first, *self.comprehension_clauses(), self.expect(")")])
        if self.at(")"):
            return self.node("parenthesized_expression", [open_, first, self.leaf()])
        parts = [open_, first]
        while self.at(","):
            parts.append(self.leaf())
            if self.at(")"):
                break
            parts.append(self.star_or_expression())
        parts.append(self.expect(")"))
        return self.node("tuple", parts)

    def bracket(self) -> Node:
        open_ = self.leaf()
        if self.at("]"):
            return self.node("list", [open_, self.leaf()])
        first = self.star_or_expression()
        if self.at("for"):
            return self.node("list_comprehension", [open_, first, *self.comprehension_clauses(), self.expect("]")])
        parts = [open_, first]
        while self.at(","):
            parts.append(self.leaf())
            if self.at("]"):
                break
            parts.append(self.star_or_expression())
        parts.append(self.expect("]"))
        return self.node("list", parts)

    def brace(self) -> Node:
        open_ = self.leaf()
        if self.at("}"):
            return self.node("dictionary", [open_, self.leaf()])
        first = self.expression()
        if self.at(":"):
            parts = [open_, self.node("pair", [first, self.leaf(), self.expression()])]
            while self.at(","):
                parts.append(self.leaf())
                if self.at("}"):
                    break
                key = self.expression()
                parts.append(self.node("pair", [key, self.expect(":"), self.expression()]))
            parts.append(self.expect("}"))
            return self.node("dictionary", parts)
        parts = [open_, first]
        while self.at(","):
            parts.append(self.leaf())
            if self.at("}"):
                break
            parts.append(self.expression())
        parts.append(self.expect("}"))
        return self.node("set", parts)


class SubsetParser:
    """Default :class:`SyntaxTreeProvider` for the built-in grammar."""

    def __init__(self, tabsize: int = 8):
        self.tabsize = tabsize

    def parse(self, src: SourceText) -> SyntaxTree:
        data = src.data
        p = _Parser(data, self.tabsize)
        root = p.module()
        leaves = p.leaves
        trivia = []
        prev = 0
        for leaf in leaves:
            trivia.append(data[prev : leaf.start])
            prev = leaf.end
        trivia.append(data[prev:])
        return SyntaxTree(data, root, leaves, trivia)


_DEFAULT_PARSER = SubsetParser()


def _as_source(src) -> SourceText:
    if isinstance(src, SourceText):
        return src
    return SourceText(src)


def parse(src: SourceText | str | bytes, provider: SyntaxTreeProvider | None = None) -> SyntaxTree:
    """Parse ``src`` into a :class:`SyntaxTree`; raises :class:`ParseError`."""
    return (provider or _DEFAULT_PARSER).parse(_as_source(src))


def parse_fragment(text: str, column: int = 0) -> SyntaxTree:
    """Parse a snippet cut out of a larger file.

    ``column`` is the byte column the snippet started at in its original file;
    continuation lines are dedented by that amount so nested blocks line up.
    """
    lines = text.split("\n")
    out = [lines[0]]
    for line in lines[1:]:
        head = line[:column]
        if head.strip():
            raise ParseError("fragment line is indented less than its first line", len(out) + 1, 1)
        out.append(line[column:])
    return parse("\n".join(out))


def node_text(src: SourceText | str | bytes, node: Node) -> str:
    """Exact source text covered by ``node``."""
    data = _as_source(src).data
    return data[node.start : node.end].decode("utf-8")


def eligible_leaves(tree: SyntaxTree, n: NodeTypeSet | frozenset = DEFAULT_NODE_TYPES) -> list[Node]:
    """Leaves with at least one ancestor whose kind is in ``n``, in source order."""
    if not n:
        raise ValueError("node type set must not be empty")
    return [leaf for leaf in tree.leaves if any(a.kind in n for a in leaf.ancestors())]


def is_selectable(node: Node, n: frozenset = DEFAULT_NODE_TYPES, indivisible: frozenset = INDIVISIBLE_TYPES) -> bool:
    """Whether extraction may stop at ``node``.

    ``function_call`` is only selectable when no ancestor is indivisible
    (a call inside an assignment or return stays with its statement).
    """
    if node.kind not in n:
        return False
    if node.kind == "function_call":
        return not any(a.kind in indivisible for a in node.ancestors())
    return True
