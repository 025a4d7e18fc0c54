"""METEOR and embedding-similarity scoring, per pair and corpus-aggregated."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MetricsError(ValueError):
    """Invalid metric inputs (id mismatches, undefined similarity, bad files)."""


_TOKEN_RE = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")


def metric_tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace and punctuation."""
    return _TOKEN_RE.findall(text.lower())


# ---------------------------------------------------------------------------
# Porter stemmer (the classic 1980 algorithm), used for the stem match stage.
# ---------------------------------------------------------------------------

_VOWELS = "aeiou"


def _is_cons(word: str, i: int) -> bool:
    c = word[i]
    if c in _VOWELS:
        return False
    if c == "y":
        return i == 0 or not _is_cons(word, i - 1)
    return True


def _measure(stem: str) -> int:
    """Number of vowel-consonant sequences: [C](VC){m}[V]."""
    m = 0
    prev_vowel = False
    for i in range(len(stem)):
        if _is_cons(stem, i):
            if prev_vowel:
                m += 1
            prev_vowel = False
        else:
            prev_vowel = True
    return m


def _has_vowel(stem: str) -> bool:
    return any(not _is_cons(stem, i) for i in range(len(stem)))


def _ends_double_cons(word: str) -> bool:
    return len(word) >= 2 and word[-1] == word[-2] and _is_cons(word, len(word) - 1)


def _ends_cvc(word: str) -> bool:
    if len(word) < 3:
        return False
    if not (_is_cons(word, len(word) - 3) and not _is_cons(word, len(word) - 2) and _is_cons(word, len(word) - 1)):
        return False
    return word[-1] not in "wxy"


def _replace(word: str, suffix: str, repl: str, min_measure: int) -> str | None:
    if not word.endswith(suffix):
        return None
    stem = word[: len(word) - len(suffix)]
    if _measure(stem) > min_measure:
        return stem + repl
    return word  # suffix matched but the condition failed: stop this step


_STEP2 = [
    ("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
    ("izer", "ize"), ("abli", "able"), ("alli", "al"), ("entli", "ent"),
    ("eli", "e"), ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
    ("ator", "ate"), ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
    ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"), ("biliti", "ble"),
]
_STEP3 = [
    ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
    ("ical", "ic"), ("ful", ""), ("ness", ""),
]
_STEP4 = [
    "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
    "ment", "ent", "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
]


def porter_stem(word: str) -> str:
    """Stem one lowercase word with the classic five-step suffix stripper."""
    if len(word) <= 2 or not word.isalpha():
        return word
    w = word

    # step 1a
    if w.endswith("sses"):
        w = w[:-2]
    elif w.endswith("ies"):
        w = w[:-2]
    elif not w.endswith("ss") and w.endswith("s"):
        w = w[:-1]

    # step 1b
    if w.endswith("eed"):
        if _measure(w[:-3]) > 0:
            w = w[:-1]
    else:
        stripped = None
        if w.endswith("ed") and _has_vowel(w[:-2]):
            stripped = w[:-2]
        elif w.endswith("ing") and _has_vowel(w[:-3]):
            stripped = w[:-3]
        if stripped is not None:
            w = stripped
            if w.endswith(("at", "bl", "iz")):
                w += "e"
            elif _ends_double_cons(w) and not w.endswith(("l", "s", "z")):
                w = w[:-1]
            elif _measure(w) == 1 and _ends_cvc(w):
                w += "e"

    # step 1c
    if w.endswith("y") and _has_vowel(w[:-1]):
        w = w[:-1] + "i"

    # step 2
    for suffix, repl in _STEP2:
        if w.endswith(suffix):
            stem = w[: len(w) - len(suffix)]
            if _measure(stem) > 0:
                w = stem + repl
            break

    # step 3
    for suffix, repl in _STEP3:
        if w.endswith(suffix):
            stem = w[: len(w) - len(suffix)]
            if _measure(stem) > 0:
                w = stem + repl
            break

    # step 4
    for suffix in _STEP4:
        if w.endswith(suffix):
            stem = w[: len(w) - len(suffix)]
            if _measure(stem) > 1:
                if suffix == "ion" and not stem.endswith(("s", "t")):
                    break
                w = stem
            break

    # step 5a
    if w.endswith("e"):
        stem = w[:-1]
        m = _measure(stem)
        if m > 1 or (m == 1 and not _ends_cvc(stem)):
            w = stem

    # step 5b
    if _measure(w) > 1 and _ends_double_cons(w) and w.endswith("l"):
        w = w[:-1]

    return w


# ---------------------------------------------------------------------------
# Unigram alignment: exact matches first, Porter-stem matches on leftovers,
# instance assignment chosen to minimize the chunk count.
# ---------------------------------------------------------------------------

_EXACT_SEARCH_LIMIT = 20
_SEARCH_NODE_CAP = 200_000


@dataclass
class Alignment:
    matches: int
    chunks: int
    precision: float
    recall: float
    pairs: list[tuple[int, int]] = field(default_factory=list)


def _stage_budgets(cand: list[str], ref: list[str]) -> tuple[int, int]:
    """Max exact matches, then max stem matches on the leftovers."""

    def class_overlap(a: list[str], b: list[str]) -> int:
        counts: dict[str, int] = {}
        for w in a:
            counts[w] = counts.get(w, 0) + 1
        got = 0
        for w in b:
            if counts.get(w, 0) > 0:
                counts[w] -= 1
                got += 1
        return got

    m1 = class_overlap(cand, ref)
    # leftovers per side after removing the exact overlap, by word class
    def leftovers(side: list[str], other: list[str]) -> list[str]:
        counts: dict[str, int] = {}
        for w in other:
            counts[w] = counts.get(w, 0) + 1
        out = []
        for w in side:
            if counts.get(w, 0) > 0:
                counts[w] -= 1
            else:
                out.append(w)
        return out

    cand_left = [porter_stem(w) for w in leftovers(cand, ref)]
    ref_left = [porter_stem(w) for w in leftovers(ref, cand)]
    m2 = class_overlap(cand_left, ref_left)
    return m1, m2


def _count_chunks(pairs: list[tuple[int, int]]) -> int:
    if not pairs:
        return 0
    pairs = sorted(pairs)
    chunks = 1
    for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
        if not (i1 == i0 + 1 and j1 == j0 + 1):
            chunks += 1
    return chunks


def _greedy_pairs(cand, ref, exact_budget, stem_budget):
    """Left-to-right assignment preferring chunk continuation."""
    cand_stem = [porter_stem(w) for w in cand]
    ref_stem = [porter_stem(w) for w in ref]
    used = [False] * len(ref)
    pairs: list[tuple[int, int]] = []

    for stage in (1, 2):
        budget = exact_budget if stage == 1 else stem_budget
        matched_cand = {i for i, _ in pairs}
        prev_j = None
        for i in range(len(cand)):
            if budget == 0:
                break
            if i in matched_cand:
                prev_j = dict(pairs).get(i)
                continue
            def ok(j):
                if used[j]:
                    return False
                if stage == 1:
                    return cand[i] == ref[j]
                return cand[i] != ref[j] and cand_stem[i] == ref_stem[j]
            choice = None
            if prev_j is not None and prev_j + 1 < len(ref) and ok(prev_j + 1):
                choice = prev_j + 1
            else:
                for j in range(len(ref)):
                    if ok(j):
                        choice = j
                        break
            if choice is not None:
                used[choice] = True
                pairs.append((i, choice))
                budget -= 1
                prev_j = choice
            else:
                prev_j = None
    return pairs


def _exact_min_chunk_pairs(cand, ref, exact_budget, stem_budget):
    """Branch-and-bound over one-to-one assignments; falls back to greedy on blowup."""
    cand_stem = [porter_stem(w) for w in cand]
    ref_stem = [porter_stem(w) for w in ref]
    n_ref = len(ref)
    options: list[list[tuple[int, int]]] = []  # per cand index: (ref index, stage)
    for i in range(len(cand)):
        opts = []
        for j in range(n_ref):
            if cand[i] == ref[j]:
                opts.append((j, 1))
            elif cand_stem[i] == ref_stem[j]:
                opts.append((j, 2))
        options.append(opts)

    best = {"chunks": None, "pairs": []}
    total_needed = exact_budget + stem_budget
    nodes = {"n": 0}

    def dfs(i, used_mask, exact_left, stem_left, pairs, chunks, last):
        if nodes["n"] > _SEARCH_NODE_CAP:
            return
        nodes["n"] += 1
        if exact_left + stem_left == 0:
            if best["chunks"] is None or chunks < best["chunks"]:
                best["chunks"] = chunks
                best["pairs"] = list(pairs)
            return
        if i >= len(cand) or len(cand) - i < exact_left + stem_left:
            return
        if best["chunks"] is not None and chunks >= best["chunks"]:
            return
        # try matching cand i
        for j, stage in options[i]:
            if used_mask & (1 << j):
                continue
            if stage == 1 and exact_left == 0:
                continue
            if stage == 2 and stem_left == 0:
                continue
            new_chunks = chunks + (0 if last == (i - 1, j - 1) else 1)
            pairs.append((i, j))
            dfs(
                i + 1,
                used_mask | (1 << j),
                exact_left - (stage == 1),
                stem_left - (stage == 2),
                pairs,
                new_chunks,
                (i, j),
            )
            pairs.pop()
        # or leave cand i unmatched
        dfs(i + 1, used_mask, exact_left, stem_left, pairs, chunks, last)

    dfs(0, 0, exact_budget, stem_budget, [], 0, None)
    if best["chunks"] is None or nodes["n"] > _SEARCH_NODE_CAP:
        return _greedy_pairs(cand, ref, exact_budget, stem_budget)
    return best["pairs"]


def align_unigrams(candidate: list[str], reference: list[str]) -> Alignment:
    """Match candidate to reference unigrams; exact stage then stem stage.

    The one-to-one instance assignment minimizes the chunk count (exactly for
    sentences up to 20 tokens, greedily beyond).
    """
    if not candidate or not reference:
        return Alignment(matches=0, chunks=0, precision=0.0, recall=0.0)
    exact_budget, stem_budget = _stage_budgets(candidate, reference)
    m = exact_budget + stem_budget
    if m == 0:
        return Alignment(matches=0, chunks=0, precision=0.0, recall=0.0)
    if max(len(candidate), len(reference)) <= _EXACT_SEARCH_LIMIT:
        pairs = _exact_min_chunk_pairs(candidate, reference, exact_budget, stem_budget)
    else:
        pairs = _greedy_pairs(candidate, reference, exact_budget, stem_budget)
    chunks = _count_chunks(pairs)
    return Alignment(
        matches=m,
        chunks=chunks,
        precision=m / len(candidate),
        recall=m / len(reference),
        pairs=sorted(pairs),
    )


METEOR_GAMMA = 0.5
METEOR_BETA = 3


def meteor(candidate: str, reference: str) -> float:
    """Unigram-alignment score: F-mean 10PR/(R+9P) times the fragmentation penalty."""
    a = align_unigrams(metric_tokenize(candidate), metric_tokenize(reference))
    if a.matches == 0:
        return 0.0
    f_mean = 10.0 * a.precision * a.recall / (a.recall + 9.0 * a.precision)
    penalty = METEOR_GAMMA * (a.chunks / a.matches) ** METEOR_BETA
    return f_mean * (1.0 - penalty)


# ---------------------------------------------------------------------------
# Embedding similarity (the sentence-encoder stand-in).
# ---------------------------------------------------------------------------


class Embedder:
    """Maps sentences to fixed-length vectors.

    Two providers: a bag-of-token-embeddings table (sentence vector is the
    mean of its token vectors) or a file of precomputed sentence vectors
    keyed by exact text.
    """

    def __init__(self, kind: str, dimension: int, vectors: dict[str, np.ndarray]):
        if kind not in ("token", "sentence"):
            raise MetricsError(f"unknown embedder kind {kind!r}")
        self.kind = kind
        self.dimension = dimension
        self.vectors = vectors

    @classmethod
    def from_token_table(cls, vectors: dict[str, np.ndarray]) -> "Embedder":
        dims = {v.shape for v in vectors.values()}
        if len(dims) != 1:
            raise MetricsError("token vectors must share one dimension")
        (dim,) = dims
        return cls("token", dim[0], dict(vectors))

    @classmethod
    def from_token_file(cls, path: str | Path) -> "Embedder":
        """Header '<dimension> <count>' then one 'token v1 v2 ...' line per token."""
        path = Path(path)
        vectors: dict[str, np.ndarray] = {}
        with path.open(encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise MetricsError(f"{path}: malformed embedding header")
            dim, count = int(header[0]), int(header[1])
            for line in fh:
                parts = line.split()
                if not parts:
                    continue
                token, vals = parts[0], parts[1:]
                if len(vals) != dim:
                    raise MetricsError(f"{path}: token {token!r} has {len(vals)} values, expected {dim}")
                vec = np.asarray([float(v) for v in vals], dtype=np.float32)
                if not np.isfinite(vec).all():
                    raise MetricsError(f"{path}: non-finite vector for token {token!r}")
                vectors[token] = vec
        if len(vectors) != count:
            raise MetricsError(f"{path}: header count {count} != {len(vectors)} vectors")
        return cls("token", dim, vectors)

    @classmethod
    def hashed_token_table(cls, dimension: int = 64) -> "Embedder":
        """Deterministic token vectors derived from a hash; no file needed."""
        return _HashedEmbedder(dimension)

    @classmethod
    def from_sentence_vectors(cls, vectors: dict[str, np.ndarray]) -> "Embedder":
        dims = {v.shape for v in vectors.values()}
        if len(dims) > 1:
            raise MetricsError("sentence vectors must share one dimension")
        dim = next(iter(dims))[0] if dims else 0
        return cls("sentence", dim, dict(vectors))

    def _token_vector(self, token: str) -> np.ndarray | None:
        return self.vectors.get(token)

    def embed(self, text: str) -> np.ndarray:
        if self.kind == "sentence":
            vec = self.vectors.get(text)
            if vec is None:
                raise MetricsError(f"no precomputed vector for text {text[:60]!r}")
            return vec
        toks = metric_tokenize(text)
        vecs = [v for v in (self._token_vector(t) for t in toks) if v is not None]
        if not vecs:
            return np.zeros(self.dimension, dtype=np.float32)
        out = np.mean(vecs, axis=0)
        if not np.isfinite(out).all():
            raise MetricsError("non-finite sentence vector")
        return out


class _HashedEmbedder(Embedder):
    def __init__(self, dimension: int):
        super().__init__("token", dimension, {})

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self.vectors.get(token)
        if vec is None:
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            seed = int.from_bytes(digest[:8], "little")
            vec = np.random.default_rng(seed).normal(size=self.dimension).astype(np.float32)
            self.vectors[token] = vec
        return vec


def use_similarity(candidate: str, reference: str, emb: Embedder) -> float:
    """Cosine similarity of the two sentence vectors, in [-1, 1]."""
    a = emb.embed(candidate).astype(np.float64)
    b = emb.embed(reference).astype(np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise MetricsError("undefined similarity: zero-norm sentence vector")
    return float(np.dot(a, b) / (na * nb))


# ---------------------------------------------------------------------------
# Corpus aggregation and the grid report.
# ---------------------------------------------------------------------------


@dataclass
class PairScore:
    id: str
    meteor: float
    use: float | None = None


@dataclass
class CellScores:
    """Scores for one (model, dataset) cell: per-pair detail plus means."""

    pairs: list[PairScore]
    meteor_mean: float
    use_mean: float | None

    @property
    def meteor_x100(self) -> float:
        return round(self.meteor_mean * 100.0, 2)

    @property
    def use_x100(self) -> float | None:
        return None if self.use_mean is None else round(self.use_mean * 100.0, 2)


def corpus_scores(
    predictions: dict[str, str],
    references: dict[str, str],
    emb: Embedder | None = None,
) -> CellScores:
    """Mean per-pair METEOR (and similarity when an embedder is given).

    A pair whose similarity is undefined (zero-norm vector, e.g. an empty
    prediction) contributes 0.0 so corpus aggregation stays total.
    """
    if not references:
        raise MetricsError("empty reference set")
    missing = sorted(set(references) ^ set(predictions))
    if missing:
        raise MetricsError(f"prediction/reference id mismatch: {missing[:5]}")
    pairs = []
    for sample_id in sorted(references):
        pred, ref = predictions[sample_id], references[sample_id]
        score = PairScore(id=sample_id, meteor=meteor(pred, ref))
        if emb is not None:
            try:
                score.use = use_similarity(pred, ref, emb)
            except MetricsError:
                score.use = 0.0
        pairs.append(score)
    meteor_mean = sum(p.meteor for p in pairs) / len(pairs)
    use_mean = sum(p.use for p in pairs) / len(pairs) if emb is not None else None
    return CellScores(pairs=pairs, meteor_mean=meteor_mean, use_mean=use_mean)


def load_text_map(path: str | Path) -> dict[str, str]:
    """Read a line-delimited {"id", "text"} file into a dict."""
    path = Path(path)
    out: dict[str, str] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out[str(obj["id"])] = str(obj["text"])
            except (json.JSONDecodeError, KeyError) as exc:
                raise MetricsError(f"{path}: bad record on line {lineno}: {exc}") from exc
    return out


def save_text_map(texts: dict[str, str], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for key in sorted(texts):
            fh.write(json.dumps({"id": key, "text": texts[key]}, ensure_ascii=False) + "\n")


def render_score_grid(
    row_labels: list[str],
    col_labels: list[str],
    values: dict[tuple[str, str], float | None],
    corner: str = "dataset",
) -> str:
    """Fixed-width text table: rows are dataset tiers, columns are model variants."""
    row_w = max(len(corner), max((len(r) for r in row_labels), default=0))
    col_ws = [max(len(c), 8) for c in col_labels]
    lines = [
        " | ".join([corner.ljust(row_w)] + [c.rjust(w) for c, w in zip(col_labels, col_ws)])
    ]
    for r in row_labels:
        cells = []
        for c, w in zip(col_labels, col_ws):
            v = values.get((r, c))
            cells.append(("-" if v is None else f"{v:.2f}").rjust(w))
        lines.append(" | ".join([r.ljust(row_w)] + cells))
    return "\n".join(lines) + "\n"
