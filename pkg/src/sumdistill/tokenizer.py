"""Byte-level BPE for decoder-only students and bounded word vocabularies for the encoder-decoder baseline."""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Iterable

from .corpus import CODE_MARKER, COMMENT_MARKER, EOS_TEXT, PAD_TEXT

SPECIAL_TOKENS = (CODE_MARKER, COMMENT_MARKER, EOS_TEXT, PAD_TEXT)

# Merges never cross these category boundaries (letters / digits / whitespace /
# other), which keeps segment encodings independent of their neighbors.
_SEGMENT_RE = re.compile(r"[A-Za-z]+|[0-9]+|\s+|[^A-Za-z0-9\s]+")

_WORD_RE = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")


class TokenizerError(ValueError):
    """Invalid tokenizer configuration or file."""


class SubwordTokenizer:
    """Byte-level BPE tokenizer with four reserved special tokens.

    Ids 0..255 are raw bytes, merge ids follow from 256, and the special
    tokens sit at the top of the id space (vocab_size - 4 ..). Plain encode
    never emits special ids; special literals in text are just bytes.
    """

    FORMAT_VERSION = 1

    def __init__(self, vocab_size: int, merges: list[tuple[int, int]]):
        n_special = len(SPECIAL_TOKENS)
        if vocab_size < 256 + n_special:
            raise TokenizerError(f"vocab_size must be >= {256 + n_special}, got {vocab_size}")
        if len(merges) > vocab_size - 256 - n_special:
            raise TokenizerError("more merges than the vocab budget allows")
        self.vocab_size = vocab_size
        self.merges = list(merges)
        self._ranks = {pair: 256 + k for k, pair in enumerate(self.merges)}
        self._token_bytes: list[bytes] = [bytes([b]) for b in range(256)]
        for left, right in self.merges:
            self._token_bytes.append(self._token_bytes[left] + self._token_bytes[right])
        base = vocab_size - n_special
        self.special_ids = {tok: base + i for i, tok in enumerate(SPECIAL_TOKENS)}
        self._cache: dict[str, list[int]] = {}

    @property
    def eos_id(self) -> int:
        return self.special_ids[EOS_TEXT]

    @property
    def pad_id(self) -> int:
        return self.special_ids[PAD_TEXT]

    @property
    def n_learned(self) -> int:
        return 256 + len(self.merges)

    def _bpe(self, ids: list[int]) -> list[int]:
        while len(ids) >= 2:
            best = None
            best_rank = None
            for pair in zip(ids, ids[1:]):
                rank = self._ranks.get(pair)
                if rank is not None and (best_rank is None or rank < best_rank):
                    best, best_rank = pair, rank
            if best is None:
                break
            merged: list[int] = []
            i = 0
            while i < len(ids):
                if i + 1 < len(ids) and (ids[i], ids[i + 1]) == best:
                    merged.append(best_rank)
                    i += 2
                else:
                    merged.append(ids[i])
                    i += 1
            ids = merged
        return ids

    def encode(self, text: str) -> list[int]:
        out: list[int] = []
        for m in _SEGMENT_RE.finditer(text):
            seg = m.group(0)
            ids = self._cache.get(seg)
            if ids is None:
                ids = self._bpe(list(seg.encode("utf-8")))
                if len(self._cache) < 65536:
                    self._cache[seg] = ids
            out.extend(ids)
        return out

    def decode(self, ids: Iterable[int]) -> str:
        parts: list[bytes] = []
        for i in ids:
            if i < self.n_learned:
                parts.append(self._token_bytes[i])
            else:
                literal = _special_for_id(self.special_ids, i)
                parts.append(literal.encode("utf-8"))
        return b"".join(parts).decode("utf-8", errors="replace")

    def save(self, path: str | Path) -> None:
        path = Path(path)
        header = {
            "kind": "bpe",
            "version": self.FORMAT_VERSION,
            "vocab_size": self.vocab_size,
            "specials": list(SPECIAL_TOKENS),
            "merges": len(self.merges),
        }
        with path.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, ensure_ascii=False) + "\n")
            for left, right in self.merges:
                fh.write(f"{left} {right}\n")

    @classmethod
    def load(cls, path: str | Path) -> "SubwordTokenizer":
        path = Path(path)
        with path.open(encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            if header.get("kind") != "bpe":
                raise TokenizerError(f"{path}: not a subword tokenizer file")
            if header.get("version") != cls.FORMAT_VERSION:
                raise TokenizerError(
                    f"{path}: version {header.get('version')} != supported {cls.FORMAT_VERSION}"
                )
            merges = []
            for line in fh:
                left, right = line.split()
                merges.append((int(left), int(right)))
        if len(merges) != header["merges"]:
            raise TokenizerError(f"{path}: truncated merge list")
        return cls(vocab_size=header["vocab_size"], merges=merges)


def _special_for_id(special_ids: dict[str, int], i: int) -> str:
    for literal, sid in special_ids.items():
        if sid == i:
            return literal
    raise TokenizerError(f"token id {i} out of range")


def train_bpe(corpus: Iterable[str], vocab_size: int) -> SubwordTokenizer:
    """Learn byte-pair merges from text, most frequent pair first.

    Ties between equally frequent candidate pairs break lexicographically on
    the pair's byte sequences, so retraining is reproducible.
    """
    n_special = len(SPECIAL_TOKENS)
    if vocab_size < 256 + n_special:
        raise TokenizerError(f"vocab_size must be >= {256 + n_special}, got {vocab_size}")
    budget = vocab_size - 256 - n_special

    word_freq: dict[tuple[int, ...], int] = {}
    for text in corpus:
        for m in _SEGMENT_RE.finditer(text):
            key = tuple(m.group(0).encode("utf-8"))
            word_freq[key] = word_freq.get(key, 0) + 1

    token_bytes: list[bytes] = [bytes([b]) for b in range(256)]
    merges: list[tuple[int, int]] = []
    words = [(list(w), f) for w, f in word_freq.items()]

    for _ in range(budget):
        pair_freq: dict[tuple[int, int], int] = {}
        for ids, f in words:
            for pair in zip(ids, ids[1:]):
                pair_freq[pair] = pair_freq.get(pair, 0) + f
        if not pair_freq:
            break
        best = min(
            pair_freq.items(),
            key=lambda kv: (-kv[1], token_bytes[kv[0][0]], token_bytes[kv[0][1]]),
        )[0]
        if pair_freq[best] < 2:
            break
        new_id = 256 + len(merges)
        merges.append(best)
        token_bytes.append(token_bytes[best[0]] + token_bytes[best[1]])
        for ids, _ in words:
            i = 0
            while i + 1 < len(ids):
                if (ids[i], ids[i + 1]) == best:
                    ids[i : i + 2] = [new_id]
                else:
                    i += 1
    return SubwordTokenizer(vocab_size=vocab_size, merges=merges)


class WordVocab:
    """Bounded word-level vocabulary with fixed-length encoding.

    Tokens are lowercased words split on whitespace and punctuation. Encoding
    always returns exactly `limit` ids: the summary side appends the
    end-of-sequence marker and both sides pad with the pad id.
    """

    FORMAT_VERSION = 1
    PAD, UNK, BOS, EOS = 0, 1, 2, 3
    _SPECIAL_WORDS = ("<pad>", "<unk>", "<s>", "</s>")

    def __init__(self, words: list[str], limit: int, side: str):
        if side not in ("code", "summary"):
            raise TokenizerError(f"side must be 'code' or 'summary', got {side!r}")
        if limit < 2:
            raise TokenizerError("token limit must be >= 2")
        self.side = side
        self.limit = limit
        self.words = list(words)
        self._ids = {w: i + len(self._SPECIAL_WORDS) for i, w in enumerate(self.words)}

    @property
    def n_words(self) -> int:
        return len(self.words)

    def __len__(self) -> int:
        """Total id space including the special tokens."""
        return len(self.words) + len(self._SPECIAL_WORDS)

    @staticmethod
    def tokenize(text: str) -> list[str]:
        return _WORD_RE.findall(text.lower())

    def word_id(self, word: str) -> int:
        return self._ids.get(word, self.UNK)

    def encode(self, text: str) -> list[int]:
        toks = [self.word_id(w) for w in self.tokenize(text)]
        if self.side == "summary":
            toks = toks[: self.limit - 1] + [self.EOS]
        else:
            toks = toks[: self.limit]
        toks += [self.PAD] * (self.limit - len(toks))
        return toks

    def decode(self, ids: Iterable[int]) -> str:
        out = []
        for i in ids:
            if i in (self.EOS, self.PAD):
                break
            if i == self.BOS:
                continue
            word_idx = i - len(self._SPECIAL_WORDS)
            if i == self.UNK or not 0 <= word_idx < len(self.words):
                out.append("<unk>")
            else:
                out.append(self.words[word_idx])
        return " ".join(out)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        header = {
            "kind": "word_vocab",
            "version": self.FORMAT_VERSION,
            "side": self.side,
            "limit": self.limit,
            "specials": list(self._SPECIAL_WORDS),
            "words": len(self.words),
        }
        with path.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, ensure_ascii=False) + "\n")
            for w in self.words:
                fh.write(w + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "WordVocab":
        path = Path(path)
        with path.open(encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            if header.get("kind") != "word_vocab":
                raise TokenizerError(f"{path}: not a word vocab file")
            if header.get("version") != cls.FORMAT_VERSION:
                raise TokenizerError(f"{path}: unsupported version {header.get('version')}")
            words = [line.rstrip("\n") for line in fh]
        if len(words) != header["words"]:
            raise TokenizerError(f"{path}: truncated word list")
        return cls(words, limit=header["limit"], side=header["side"])


def build_word_vocab(
    corpus: Iterable[str],
    side: str,
    size_bound: int | None = None,
    limit: int | None = None,
) -> WordVocab:
    """Keep the most frequent words up to the side's size bound.

    Defaults follow the encoder-decoder settings: 70k words / 50 tokens on
    the code side, 10,908 words / 13 tokens on the summary side. Frequency
    ties break lexicographically.
    """
    if side == "code":
        size_bound = 70_000 if size_bound is None else size_bound
        limit = 50 if limit is None else limit
    elif side == "summary":
        size_bound = 10_908 if size_bound is None else size_bound
        limit = 13 if limit is None else limit
    else:
        raise TokenizerError(f"side must be 'code' or 'summary', got {side!r}")

    freq: dict[str, int] = {}
    n_texts = 0
    for text in corpus:
        n_texts += 1
        for w in WordVocab.tokenize(text):
            freq[w] = freq.get(w, 0) + 1
    if n_texts == 0:
        raise TokenizerError("empty corpus")
    ranked = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))[:size_bound]
    return WordVocab([w for w, _ in ranked], limit=limit, side=side)
