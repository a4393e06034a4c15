"""Hypothesis strategies producing programs in the supported subset."""

from hypothesis import strategies as st

NAMES = st.sampled_from(["a", "b", "x", "y", "total", "items", "n", "i", "acc", "value"])
FUNCS = st.sampled_from(["f", "len", "range", "print", "helper"])


@st.composite
def expressions(draw, depth=0):
    leaf = st.one_of(NAMES, st.integers(0, 999).map(str), st.sampled_from(["'s'", '"t"', "None", "True"]))
    if depth >= 2:
        return draw(leaf)
    choice = draw(st.integers(0, 5))
    if choice == 0:
        return draw(leaf)
    sub = expressions(depth + 1)
    if choice == 1:
        return f"{draw(sub)} {draw(st.sampled_from(['+', '-', '*', '<', '==', 'and']))} {draw(sub)}"
    if choice == 2:
        args = draw(st.lists(sub, max_size=3))
        return f"{draw(FUNCS)}({', '.join(args)})"
    if choice == 3:
        return f"{draw(NAMES)}[{draw(sub)}]"
    if choice == 4:
        return f"[{', '.join(draw(st.lists(sub, max_size=3)))}]"
    return f"({draw(sub)})"


@st.composite
def statements(draw, indent=0, depth=0):
    pad = "    " * indent
    kinds = ["assign", "aug", "call", "pass"] + (["if", "for", "while"] if depth < 2 else [])
    kind = draw(st.sampled_from(kinds))
    if kind == "assign":
        return [f"{pad}{draw(NAMES)} = {draw(expressions())}"]
    if kind == "aug":
        return [f"{pad}{draw(NAMES)} += {draw(expressions())}"]
    if kind == "call":
        return [f"{pad}{draw(FUNCS)}({draw(expressions())})"]
    if kind == "pass":
        return [f"{pad}pass"]
    body = draw(blocks(indent + 1, depth + 1))
    if kind == "if":
        head = f"{pad}if {draw(expressions())}:"
    elif kind == "for":
        head = f"{pad}for {draw(NAMES)} in {draw(expressions())}:"
    else:
        head = f"{pad}while {draw(expressions())}:"
    lines = [head] + body
    if kind == "if" and draw(st.booleans()):
        lines += [f"{pad}else:"] + draw(blocks(indent + 1, depth + 1))
    return lines


@st.composite
def blocks(draw, indent=0, depth=0):
    lines = []
    for stmt in draw(st.lists(statements(indent, depth), min_size=1, max_size=3)):
        lines += stmt
        if draw(st.integers(0, 5)) == 0:
            lines.append("    " * indent + "# note")
    return lines


@st.composite
def functions(draw):
    params = draw(st.lists(NAMES, min_size=1, max_size=3, unique=True))
    body = draw(blocks(1, 0))
    ret = [f"    return {draw(NAMES)}"] if draw(st.booleans()) else []
    return "\n".join([f"def fn({', '.join(params)}):"] + body + ret) + "\n"
