import json
from pathlib import Path

import pytest
from hypothesis import given

from codecontrast.errors import ParseError
from codecontrast.syntax import (
    DEFAULT_NODE_TYPES,
    NodeTypeSet,
    SourceText,
    eligible_leaves,
    is_selectable,
    node_text,
    parse,
    parse_fragment,
)
from strategies import functions

GOLDEN = json.loads((Path(__file__).parent / "data" / "golden_if_block.json").read_text())


def check_structure(node):
    for child in node.children:
        assert node.start <= child.start <= child.end <= node.end
        assert child.parent is node
        check_structure(child)
    for left, right in zip(node.children, node.children[1:]):
        assert left.end <= right.start


def test_minimal_assignment():
    tree = parse("x = 1\n")
    assert tree.root.kind == "module"
    assert tree.root.sexp() == "module(assignment_statement(identifier, number))"


def test_bubble_sort_has_if_inside_for(bubble):
    tree = parse(bubble)
    fors = tree.find("for_statement")
    assert fors
    assert any(n.kind == "if_statement" for n in fors[0].walk())


def test_incomplete_for_raises_with_position():
    with pytest.raises(ParseError) as exc:
        parse("for i\n")
    assert exc.value.line == 1
    assert exc.value.column >= 1


@pytest.mark.parametrize("src", ["class A:\n    pass\n", "x = (1\n", "if x\n    y = 1\n", "lambda: 0\n", "def f(:\n    pass\n"])
def test_unsupported_or_malformed(src):
    with pytest.raises(ParseError):
        parse(src)


def test_bad_dedent():
    with pytest.raises(ParseError):
        parse("if x:\n        y = 1\n    z = 2\n")


def test_source_text_validation():
    with pytest.raises(ValueError):
        SourceText(b"")
    with pytest.raises(UnicodeDecodeError):
        SourceText(b"\xff\xfe")
    assert SourceText("x = 1\n").data == b"x = 1\n"


def test_node_type_set_defaults_and_nonempty():
    assert NodeTypeSet() == DEFAULT_NODE_TYPES
    assert DEFAULT_NODE_TYPES == {
        "for_statement", "while_statement", "if_statement", "with_statement",
        "try_statement", "assignment_statement", "function_call",
    }
    with pytest.raises(ValueError):
        NodeTypeSet(set())


def test_node_text_root_and_identifier():
    src = SourceText("x = 1")
    tree = parse(src)
    assert node_text(src, tree.root) == "x = 1"
    assert node_text(src, tree.leaves[0]) == "x"
    assert tree.leaves[0].span == (0, 1)


def test_if_block_text_matches_golden():
    tree = parse(GOLDEN["source"])
    (node,) = tree.find(GOLDEN["kind"])
    assert tree.text(node) == GOLDEN["text"]


def test_eligible_leaves_by_hand():
    tree = parse(GOLDEN["source"])
    assert [tree.text(l) for l in eligible_leaves(tree)] == GOLDEN["eligible_leaves"]


def test_eligible_leaves_empty_when_no_member():
    assert eligible_leaves(parse("def f(x):\n    return x\n")) == []


def test_nested_for_if_leaves_listed_once():
    src = "for i in xs:\n    if i:\n        pass\n"
    tree = parse(src)
    leaves = eligible_leaves(tree)
    assert [tree.text(l) for l in leaves] == ["for", "i", "in", "xs", ":", "if", "i", ":", "pass"]
    assert len({id(l) for l in leaves}) == len(leaves)


def test_function_call_under_assignment_not_selectable():
    tree = parse("n = len(xs)\nprint(n)\n")
    calls = tree.find("function_call")
    assert [is_selectable(c) for c in calls] == [False, True]


def test_augmented_assignment_kind():
    assert parse("x += 1\n").root.sexp() == "module(assignment_statement(identifier, number))"


def test_comments_and_blank_lines_are_trivia():
    src = "# head\n\nx = 1  # trailing\n\n\ny = [1,\n     2]\n"
    tree = parse(src)
    assert tree.reconstruct() == src.encode()
    assert [n.kind for n in tree.root.named_children] == ["assignment_statement", "assignment_statement"]


def test_tabs_expand_to_eight_columns():
    src = "if x:\n\ty = 1\n        z = 2\n"
    tree = parse(src)
    (block,) = tree.find("block")
    assert len(block.named_children) == 2


def test_fragment_reparse_dedents_continuation_lines(bubble):
    tree = parse(bubble)
    node = tree.find("if_statement")[0]
    col = node.start - (bubble.rfind("\n", 0, node.start) + 1)
    frag = parse_fragment(tree.text(node), col)
    assert frag.root.named_children[0].kind == "if_statement"


def test_parse_deterministic(bubble):
    assert parse(bubble).root.structure() == parse(bubble).root.structure()


@given(functions())
def test_generated_programs_round_trip(code):
    tree = parse(code)
    assert tree.reconstruct() == code.encode()
    assert tree.root.span == (0, len(code.encode()))
    check_structure(tree.root)
    assert all(l.is_leaf for l in tree.leaves)
    assert parse(code).root.structure() == tree.root.structure()
