"""Synthetic function corpus with known semantic families.

Each family has a few structurally different implementations.  An instance
draws an implementation, fresh variable names, a random order for its
independent initialisation lines and a paraphrased docstring that mentions
the instance's parameter name.  Docstrings are embedded in the code (as in
real repositories) and also stored on the record.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .pairgen import FunctionRecord, strip_docstring

# Each variant: (helper lines, body lines).  Helper lines are mutually
# independent and get shuffled; "{...}" slots are variable names.
_FAMILIES: dict[str, dict] = {
    "sort": {
        "names": ["sort_list", "bubble_sort", "order_values", "sort_items", "arrange", "sort_in_place"],
        "docs": [
            "Sort the list {a} in ascending order.",
            "Return {a} arranged from smallest to largest.",
            "Order the elements of {a} so that they increase.",
            "Sort {a} in place and return it.",
        ],
        "detail": "The number of passes is counted in {c}.",
        "variants": [
            (["{n} = len({a})", "{c} = 0"], [
                "for {i} in range({n}):",
                "    for {j} in range({n} - {i} - 1):",
                "        if {a}[{j}] > {a}[{j} + 1]:",
                "            {a}[{j}], {a}[{j} + 1] = {a}[{j} + 1], {a}[{j}]",
                "    {c} += 1",
                "return {a}",
            ]),
            (["{n} = len({a})", "{c} = 0"], [
                "for {i} in range({n}):",
                "    {m} = {i}",
                "    for {j} in range({i} + 1, {n}):",
                "        if {a}[{j}] < {a}[{m}]:",
                "            {m} = {j}",
                "    {a}[{i}], {a}[{m}] = {a}[{m}], {a}[{i}]",
                "    {c} += 1",
                "return {a}",
            ]),
            (["{n} = len({a})", "{c} = 0"], [
                "for {i} in range(1, {n}):",
                "    {k} = {a}[{i}]",
                "    {j} = {i} - 1",
                "    while {j} >= 0 and {a}[{j}] > {k}:",
                "        {a}[{j} + 1] = {a}[{j}]",
                "        {j} -= 1",
                "    {a}[{j} + 1] = {k}",
                "    {c} += 1",
                "return {a}",
            ]),
        ],
    },
    "sum": {
        "names": ["total", "sum_values", "add_all", "accumulate", "sum_list", "compute_total"],
        "docs": [
            "Return the sum of all numbers in {a}.",
            "Add up every value of {a}.",
            "Compute the total of the elements in {a}.",
            "Accumulate the values in {a} into a single total.",
        ],
        "detail": "The number of added items is kept in {c}.",
        "variants": [
            (["{t} = 0", "{c} = 0"], [
                "for {x} in {a}:",
                "    {t} += {x}",
                "    {c} += 1",
                "return {t}",
            ]),
            (["{t} = 0", "{c} = 0", "{n} = len({a})"], [
                "while {c} < {n}:",
                "    {t} = {t} + {a}[{c}]",
                "    {c} += 1",
                "return {t}",
            ]),
            (["{t} = 0", "{c} = 0"], [
                "for {x} in {a}:",
                "    if {x} is None:",
                "        continue",
                "    {t} += {x}",
                "    {c} += 1",
                "return {t}",
            ]),
        ],
    },
    "max": {
        "names": ["find_max", "largest", "max_value", "maximum", "biggest", "top_value"],
        "docs": [
            "Return the largest value in {a}.",
            "Find the maximum element of {a}.",
            "Get the biggest number stored in {a}.",
            "Scan {a} and return its maximum.",
        ],
        "detail": "The best value so far lives in {b}.",
        "variants": [
            (["{b} = {a}[0]", "{c} = 0"], [
                "for {x} in {a}:",
                "    if {x} > {b}:",
                "        {b} = {x}",
                "        {c} += 1",
                "return {b}",
            ]),
            (["{b} = {a}[0]", "{n} = len({a})"], [
                "for {i} in range(1, {n}):",
                "    if {a}[{i}] > {b}:",
                "        {b} = {a}[{i}]",
                "return {b}",
            ]),
            (["{b} = None", "{c} = 0"], [
                "for {x} in {a}:",
                "    if {b} is None or {x} > {b}:",
                "        {b} = {x}",
                "    {c} += 1",
                "return {b}",
            ]),
        ],
    },
    "reverse": {
        "names": ["reverse", "reverse_list", "flip", "backwards", "invert_order", "mirror"],
        "docs": [
            "Reverse the order of the elements in {a}.",
            "Return the items of {a} backwards.",
            "Flip {a} so that the last item comes first.",
            "Produce the reversed sequence of {a}.",
        ],
        "detail": "The reversed items are collected in {r}.",
        "variants": [
            (["{i} = 0", "{j} = len({a}) - 1", "{r} = {a}"], [
                "while {i} < {j}:",
                "    {r}[{i}], {r}[{j}] = {r}[{j}], {r}[{i}]",
                "    {i} += 1",
                "    {j} -= 1",
                "return {r}",
            ]),
            (["{r} = []", "{n} = len({a})"], [
                "for {i} in range({n} - 1, -1, -1):",
                "    {r}.append({a}[{i}])",
                "return {r}",
            ]),
            (["{r} = []", "{c} = 0"], [
                "for {x} in {a}:",
                "    {r}.insert(0, {x})",
                "    {c} += 1",
                "return {r}",
            ]),
        ],
    },
    "count": {
        "names": ["count", "count_matches", "occurrences", "tally", "frequency", "count_value"],
        "docs": [
            "Count how many times {v} appears in {a}.",
            "Return the number of occurrences of {v} in {a}.",
            "Tally the elements of {a} equal to {v}.",
            "Find how often {v} occurs within {a}.",
        ],
        "detail": "The running count is stored in {c}.",
        "params": ["{v}"],
        "variants": [
            (["{c} = 0", "{n} = len({a})"], [
                "for {i} in range({n}):",
                "    if {a}[{i}] == {v}:",
                "        {c} += 1",
                "return {c}",
            ]),
            (["{c} = 0"], [
                "for {x} in {a}:",
                "    if {x} == {v}:",
                "        {c} = {c} + 1",
                "return {c}",
            ]),
            (["{c} = 0", "{i} = 0"], [
                "while {i} < len({a}):",
                "    if {a}[{i}] == {v}:",
                "        {c} += 1",
                "    {i} += 1",
                "return {c}",
            ]),
        ],
    },
    "filter": {
        "names": ["filter_above", "select", "keep_larger", "above_threshold", "filter_values", "pick"],
        "docs": [
            "Keep only the elements of {a} that are greater than {v}.",
            "Return the items of {a} above the threshold {v}.",
            "Select values from {a} larger than {v}.",
            "Filter {a}, dropping everything not exceeding {v}.",
        ],
        "detail": "Selected items are appended to {r}.",
        "params": ["{v}"],
        "variants": [
            (["{r} = []", "{c} = 0"], [
                "for {x} in {a}:",
                "    if {x} > {v}:",
                "        {r}.append({x})",
                "        {c} += 1",
                "return {r}",
            ]),
            (["{c} = len({a})"], [
                "{r} = [{x} for {x} in {a} if {x} > {v}]",
                "print({c}, len({r}))",
                "return {r}",
            ]),
            (["{r} = []", "{i} = 0"], [
                "while {i} < len({a}):",
                "    if {a}[{i}] > {v}:",
                "        {r}.append({a}[{i}])",
                "    {i} += 1",
                "return {r}",
            ]),
        ],
    },
    "min": {
        "names": ["find_min", "smallest", "min_value", "minimum", "lowest", "least"],
        "docs": [
            "Return the smallest value in {a}.",
            "Find the minimum element of {a}.",
            "Get the lowest number stored in {a}.",
            "Scan {a} and return its minimum.",
        ],
        "detail": "The best value so far lives in {b}.",
        "variants": [
            (["{b} = {a}[0]", "{c} = 0"], [
                "for {x} in {a}:",
                "    if {x} < {b}:",
                "        {b} = {x}",
                "        {c} += 1",
                "return {b}",
            ]),
            (["{b} = {a}[0]", "{n} = len({a})"], [
                "for {i} in range(1, {n}):",
                "    if {a}[{i}] < {b}:",
                "        {b} = {a}[{i}]",
                "return {b}",
            ]),
        ],
    },
    "mean": {
        "names": ["mean", "average", "avg", "mean_value", "compute_mean", "arithmetic_mean"],
        "docs": [
            "Compute the average of the numbers in {a}.",
            "Return the arithmetic mean of {a}.",
            "Average all values found in {a}.",
            "Find the mean value of the elements of {a}.",
        ],
        "detail": "The intermediate sum is kept in {t}.",
        "variants": [
            (["{t} = 0", "{n} = len({a})"], [
                "if {n} == 0:",
                "    return 0",
                "for {x} in {a}:",
                "    {t} += {x}",
                "return {t} / {n}",
            ]),
            (["{t} = 0", "{c} = 0"], [
                "for {x} in {a}:",
                "    {t} = {t} + {x}",
                "    {c} += 1",
                "if {c} == 0:",
                "    return 0",
                "return {t} / {c}",
            ]),
        ],
    },
}
FAMILY_NAMES = tuple(_FAMILIES)

_PARAM_NAMES = [
    "arr", "items", "values", "data", "nums", "seq", "elements", "numbers", "lst", "xs",
    "records", "entries", "vals", "buffer", "series", "row", "scores", "weights", "prices", "points",
    "samples", "readings", "costs", "ages", "heights", "grades", "marks", "sizes", "counts", "levels",
]
# Deliberately small: locals recur across functions (as i, n, tmp do in real
# code), so shared names alone cannot tell two functions apart.
_LOCAL_NAMES = ["i", "j", "k", "n", "m", "x", "tmp", "res", "idx", "val", "acc", "cnt"]
_SLOTS = ("n", "c", "i", "j", "m", "k", "t", "x", "b", "r", "v")


@dataclass
class ToyCorpus:
    records: list[FunctionRecord]
    family: dict[str, str]
    train_ids: list[str]
    heldout_ids: list[str]
    variant: dict[str, int] = field(default_factory=dict)

    def subset(self, ids) -> list[FunctionRecord]:
        wanted = set(ids)
        return [r for r in self.records if r.id in wanted]

    @property
    def train(self) -> list[FunctionRecord]:
        return self.subset(self.train_ids)

    @property
    def heldout(self) -> list[FunctionRecord]:
        return self.subset(self.heldout_ids)


def _instance(family: str, spec: dict, rng: random.Random, fn_name: str) -> tuple[str, str, int]:
    names = {"a": rng.choice(_PARAM_NAMES)}
    pool = [n for n in _LOCAL_NAMES]
    rng.shuffle(pool)
    for slot in _SLOTS:
        names[slot] = pool.pop()
    k = rng.randrange(len(spec["variants"]))
    helpers, body = spec["variants"][k]
    helpers = list(helpers)
    rng.shuffle(helpers)
    params = ", ".join(["{a}"] + spec.get("params", [])).format(**names)
    doc = rng.choice(spec["docs"]).format(**names)
    if rng.random() < 0.5:
        doc += " " + spec["detail"].format(**names)
    lines = [f"def {fn_name}({params}):", f'    """{doc}"""']
    lines += ["    " + h.format(**names) for h in helpers]
    lines += ["    " + b.format(**names) for b in body]
    return "\n".join(lines) + "\n", doc, k


def gen_toy_corpus(families: int = 4, per_family: int = 50, seed: int = 0, heldout_fraction: float = 0.2) -> ToyCorpus:
    """Generate ``families * per_family`` records with a stratified held-out split."""
    if families < 2 or per_family < 2:
        raise ValueError("need at least 2 families and 2 instances per family")
    if families > len(_FAMILIES):
        raise ValueError(f"at most {len(_FAMILIES)} families are available")
    rng = random.Random(f"toy:{seed}")
    records, family, variant = [], {}, {}
    train_ids, heldout_ids = [], []
    for fam in FAMILY_NAMES[:families]:
        spec = _FAMILIES[fam]
        ids = []
        for k in range(per_family):
            fn_name = rng.choice(spec["names"] + ["process", "helper", "compute", "run", "apply", "handle"])
            code, doc, var = _instance(fam, spec, rng, fn_name)
            rid = f"{fam}-{k:03d}"
            records.append(FunctionRecord(rid, "python", code, doc))
            family[rid] = fam
            variant[rid] = var
            ids.append(rid)
        rng.shuffle(ids)
        n_held = max(1, round(per_family * heldout_fraction))
        heldout_ids += sorted(ids[:n_held])
        train_ids += sorted(ids[n_held:])
    return ToyCorpus(records, family, sorted(train_ids), sorted(heldout_ids), variant)


def code_of(rec: FunctionRecord) -> str:
    """Function code without its docstring (what retrieval indexes)."""
    return strip_docstring(rec.code)
