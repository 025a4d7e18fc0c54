"""Synthetic Java-like corpus for desk-scale pilots and tests.

Generated methods use a small identifier pool so a desk-size student can
learn the mock teacher's summarization behavior from a few thousand
examples; the generator is a pure function of its seed.
"""

from __future__ import annotations

import random

from .corpus import CodeSample, Corpus

VERBS = ["get", "set", "is", "has", "compute", "find", "count", "clear", "load", "save", "update", "remove"]
NOUNS = [
    "user", "count", "index", "buffer", "name", "value", "size", "item",
    "node", "cache", "token", "limit", "state", "flag", "path", "key",
    "list", "map", "time", "color", "width", "height", "offset", "total",
]
TYPES = ["int", "long", "boolean", "String", "double"]


def _camel(words: list[str]) -> str:
    return words[0] + "".join(w.capitalize() for w in words[1:])


def _make_method(rng: random.Random) -> str:
    verb = rng.choice(VERBS)
    name_nouns = rng.sample(NOUNS, rng.choice([1, 1, 2]))
    method = _camel([verb] + name_nouns)
    field = _camel(name_nouns)

    params = []
    for _ in range(rng.choice([0, 1, 1, 2])):
        p_nouns = rng.sample(NOUNS, rng.choice([1, 2]))
        params.append((rng.choice(TYPES), _camel(p_nouns)))
    params_src = ", ".join(f"{t} {n}" for t, n in params)

    rtype = {"is": "boolean", "has": "boolean", "set": "void", "clear": "void",
             "save": "void", "update": "void", "remove": "void"}.get(verb, rng.choice(["int", "long", "double"]))

    arg = params[0][1] if params else str(rng.randint(0, 99))
    other = rng.choice(NOUNS)
    bodies = {
        "get": f"return this.{field};",
        "set": f"this.{field} = {arg};",
        "is": f"return this.{field} > 0;",
        "has": f"return this.{field} != null;",
        "compute": f"return this.{field} * {arg} + {rng.randint(1, 9)};",
        "find": f"return this.{_camel([other, 'map'])}.get({arg});",
        "count": f"return this.{_camel([field, 'list'])}.size();",
        "clear": f"this.{field} = 0;",
        "load": f"this.{field} = {arg};",
        "save": f"this.{_camel([other, 'cache'])}.put({arg}, this.{field});",
        "update": f"this.{field} = this.{field} + {arg};",
        "remove": f"this.{_camel([field, 'list'])}.remove({arg});",
    }
    body = bodies[verb]
    visibility = rng.choice(["public", "public", "private", "protected"])
    return f"{visibility} {rtype} {method}({params_src}) {{ {body} }}"


def _reference_summary(code: str) -> str:
    """Imperative-mood stand-in for a human-written summary."""
    import re

    name = re.search(r"(\w+)\s*\(", code)
    if not name:
        return "do the thing"
    from .teacher import split_identifier

    words = split_identifier(name.group(1))
    return f"{words[0]} the {' '.join(words[1:])}" if len(words) > 1 else words[0]


def make_demo_corpus(
    n: int,
    seed: int = 0,
    base_count: int = 0,
    id_prefix: str = "demo",
    exclude_code: set[str] | None = None,
) -> Corpus:
    """Generate n distinct synthetic methods with reference summaries.

    The first base_count samples carry the base flag (the common tier core).
    exclude_code keeps a held-out split disjoint from a training split.
    """
    rng = random.Random(seed)
    seen: set[str] = set(exclude_code or ())
    corpus = Corpus()
    attempts = 0
    made = 0
    while made < n:
        attempts += 1
        if attempts > 50 * n:
            raise RuntimeError("demo generator exhausted; identifier pool too small for n")
        code = _make_method(rng)
        if code in seen:
            continue
        seen.add(code)
        corpus.add(
            CodeSample(
                id=f"{id_prefix}-{made:05d}",
                code=code,
                reference=_reference_summary(code),
                base=made < base_count,
            )
        )
        made += 1
    return corpus
