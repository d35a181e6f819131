#!/usr/bin/env python3
"""Regenerate data/mini_corpus.json.

Outputs are computed with a small Python re-implementation of the list DSL
that shares no code with the C++ interpreter, so the bundled examples serve
as an independent oracle for it.
"""

import json
import random
import sys

SAT = 2**31 - 1


def sat(v):
    return max(-SAT, min(SAT, v))


def run(program, xs):
    for stage in program.split("|"):
        name, *args = stage.split()
        a = [int(t) for t in args]
        n = len(xs)
        if name == "identity":
            pass
        elif name == "reverse":
            xs = xs[::-1]
        elif name == "sort":
            xs = sorted(xs)
        elif name == "unique":
            seen, out = set(), []
            for x in xs:
                if x not in seen:
                    seen.add(x)
                    out.append(x)
            xs = out
        elif name == "head":
            xs = xs[:1]
        elif name == "tail":
            xs = xs[1:]
        elif name == "last":
            xs = xs[-1:]
        elif name == "init":
            xs = xs[:-1]
        elif name == "length":
            xs = [n]
        elif name == "sum":
            xs = [sat(sum(xs))]
        elif name == "max":
            xs = [max(xs)] if xs else []
        elif name == "min":
            xs = [min(xs)] if xs else []
        elif name == "take":
            xs = xs[: max(a[0], 0)]
        elif name == "drop":
            xs = xs[max(a[0], 0):]
        elif name == "append":
            xs = xs + [a[0]]
        elif name == "prepend":
            xs = [a[0]] + xs
        elif name == "remove":
            xs = [x for x in xs if x != a[0]]
        elif name == "count":
            xs = [xs.count(a[0])]
        elif name == "add":
            xs = [sat(x + a[0]) for x in xs]
        elif name == "sub":
            xs = [sat(x - a[0]) for x in xs]
        elif name == "mul":
            xs = [sat(x * a[0]) for x in xs]
        elif name == "mod":
            xs = [x % a[0] for x in xs]
        elif name == "rotate_left":
            xs = xs[a[0] % n:] + xs[: a[0] % n] if n else []
        elif name == "rotate_right":
            xs = xs[-(a[0] % n):] + xs[: -(a[0] % n)] if n and a[0] % n else xs
        elif name == "repeat":
            xs = xs * a[0]
        elif name == "filter_even":
            xs = [x for x in xs if x % 2 == 0]
        elif name == "filter_odd":
            xs = [x for x in xs if x % 2 != 0]
        elif name == "filter_gt":
            xs = [x for x in xs if x > a[0]]
        elif name == "filter_lt":
            xs = [x for x in xs if x < a[0]]
        elif name == "index":
            xs = [xs[a[0] - 1]] if 1 <= a[0] <= n else []
        elif name == "slice":
            lo, hi = max(a[0], 1), min(a[1], n)
            xs = xs[lo - 1: hi] if lo <= hi else []
        elif name == "replace":
            xs = [a[1] if x == a[0] else x for x in xs]
        elif name == "insert":
            pos = min(max(a[0], 1), n + 1)
            xs = xs[: pos - 1] + [a[1]] + xs[pos - 1:]
        elif name == "concat_self":
            xs = xs + xs
        else:
            raise ValueError(name)
    return xs


TASKS = [
    ("c001", "Reverse the order of the elements.", "reverse"),
    ("c002", "Keep only the first two elements.", "take 2"),
    ("c003", "Sort the elements in ascending order.", "sort"),
    ("c004", "Add 3 to every element.", "add 3"),
    ("c005", "Keep the even elements and list them from largest to smallest.",
     "filter_even | sort | reverse"),
    ("c006", "Remove every 0 from the list.", "remove 0"),
    ("c007", "Output the number of elements in the list.", "length"),
    ("c008", "Remove repeated elements, keeping the first occurrence of each.", "unique"),
    ("c009", "Put a 7 at both the beginning and the end of the list.", "prepend 7 | append 7"),
    ("c010", "Move the first element to the end of the list.", "rotate_left 1"),
]


def make_input(rng, task_id):
    length = rng.randint(2, 7) if task_id != "c007" else rng.randint(0, 9)
    values = [rng.randint(0, 20) for _ in range(length)]
    if task_id == "c006":
        values = [0 if rng.random() < 0.35 else v for v in values]
    if task_id == "c008" and values:
        values.append(rng.choice(values))
    return values


def main(path):
    rng = random.Random(20240521)
    tasks = []
    for task_id, description, program in TASKS:
        examples = []
        while len(examples) < 11:
            xs = make_input(rng, task_id)
            ys = run(program, xs)
            # Skip fixed points so an identity guess never scores by accident.
            if ys == xs:
                continue
            examples.append({"input": xs, "output": ys})
        tasks.append({"id": task_id, "description": description,
                      "examples": examples, "reference_program": program})
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"tasks": tasks}, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/mini_corpus.json")
