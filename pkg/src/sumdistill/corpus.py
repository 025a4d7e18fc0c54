"""Corpus ingestion, summary filtering, tiered subsampling, and training-record formatting."""

from __future__ import annotations

import json
import random
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

CODE_MARKER = "TDAT: "
COMMENT_MARKER = "COM: "
EOS_TEXT = "<|endoftext|>"
PAD_TEXT = "<|pad|>"

# Characters counted as "English-looking" by the language heuristic.
_LATIN_OK = frozenset(string.ascii_letters + string.digits + string.punctuation)
_LATIN_RATIO_MIN = 0.9


class CorpusError(ValueError):
    """Raised for malformed dataset files or invalid corpus operations."""


@dataclass
class CodeSample:
    """One source method with its optional reference and teacher summaries."""

    id: str
    code: str
    reference: str | None = None
    teacher: str | None = None
    project: str | None = None
    base: bool = False

    def summary(self, source: str) -> str | None:
        if source not in ("reference", "teacher"):
            raise ValueError(f"unknown summary source {source!r}")
        return self.reference if source == "reference" else self.teacher


class Corpus:
    """Ordered collection of CodeSamples with unique ids."""

    def __init__(self, samples: Iterable[CodeSample] = ()):
        self.samples: list[CodeSample] = []
        self._by_id: dict[str, CodeSample] = {}
        for s in samples:
            self.add(s)

    def add(self, sample: CodeSample) -> None:
        if not sample.id:
            raise CorpusError("sample id must be nonempty")
        if not sample.code:
            raise CorpusError(f"sample {sample.id!r}: code must be nonempty")
        if sample.id in self._by_id:
            raise CorpusError(f"duplicate sample id {sample.id!r}")
        self.samples.append(sample)
        self._by_id[sample.id] = sample

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[CodeSample]:
        return iter(self.samples)

    def __getitem__(self, i: int) -> CodeSample:
        return self.samples[i]

    def get(self, sample_id: str) -> CodeSample | None:
        return self._by_id.get(sample_id)

    def ids(self) -> list[str]:
        return [s.id for s in self.samples]


def is_valid_summary(text: str | None) -> bool:
    """True when the summary is nonempty and passes the English heuristic.

    A summary is rejected when it is empty/whitespace, when fewer than 90% of
    its non-whitespace characters are basic Latin letters, digits, or ASCII
    punctuation, or when it contains no alphabetic word.
    """
    return summary_drop_reason(text) is None


def summary_drop_reason(text: str | None) -> str | None:
    """Why a summary would be filtered: 'missing', 'empty', 'non_english', or None."""
    if text is None:
        return "missing"
    if not text.strip():
        return "empty"
    chars = [c for c in text if not c.isspace()]
    latin = sum(1 for c in chars if c in _LATIN_OK)
    if latin < _LATIN_RATIO_MIN * len(chars):
        return "non_english"
    has_alpha_word = any(
        w.strip(string.punctuation).isascii() and w.strip(string.punctuation).isalpha()
        for w in text.split()
        if w.strip(string.punctuation)
    )
    if not has_alpha_word:
        return "non_english"
    return None


def load_corpus(path: str | Path) -> Corpus:
    """Load a line-delimited dataset file into a Corpus.

    Each line is a JSON object {"id", "code", "reference"?, "teacher"?,
    "project"?, "base"?}. Errors name the offending line number.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"dataset file not found: {path}")
    corpus = Corpus()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: malformed record on line {lineno}: {exc}") from exc
            try:
                sample = CodeSample(
                    id=str(obj["id"]),
                    code=str(obj["code"]),
                    reference=obj.get("reference"),
                    teacher=obj.get("teacher"),
                    project=obj.get("project"),
                    base=bool(obj.get("base", False)),
                )
                corpus.add(sample)
            except KeyError as exc:
                raise CorpusError(f"{path}: line {lineno}: missing field {exc}") from exc
            except CorpusError as exc:
                raise CorpusError(f"{path}: line {lineno}: {exc}") from exc
    return corpus


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a Corpus back out as line-delimited records."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for s in corpus:
            obj: dict = {"id": s.id, "code": s.code}
            if s.reference is not None:
                obj["reference"] = s.reference
            if s.teacher is not None:
                obj["teacher"] = s.teacher
            if s.project is not None:
                obj["project"] = s.project
            obj["base"] = s.base
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def filter_samples(corpus: Corpus, field_name: str) -> tuple[Corpus, dict[str, int]]:
    """Keep samples whose selected summary is valid; tally drops by reason.

    field_name selects which summary to validate ('reference' or 'teacher').
    Returns (kept corpus, {"missing": n, "empty": n, "non_english": n}).
    """
    if field_name not in ("reference", "teacher"):
        raise CorpusError(f"field must be 'reference' or 'teacher', got {field_name!r}")
    kept = Corpus()
    report = {"missing": 0, "empty": 0, "non_english": 0}
    for s in corpus:
        reason = summary_drop_reason(s.summary(field_name))
        if reason is None:
            kept.add(s)
        else:
            report[reason] += 1
    return kept, report


@dataclass
class TierSpec:
    """Ascending dataset sizes plus the seed controlling subsampling."""

    sizes: list[int]
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.sizes:
            raise CorpusError("TierSpec needs at least one size")
        if any(n < 1 for n in self.sizes):
            raise CorpusError("tier sizes must be >= 1")
        if any(a >= b for a, b in zip(self.sizes, self.sizes[1:])):
            raise CorpusError(f"tier sizes must be strictly ascending: {self.sizes}")


def subsample_tiers(corpus: Corpus, spec: TierSpec) -> list[Corpus]:
    """Draw nested tiers of the requested sizes from the corpus.

    Samples flagged base=True form the common core and come first; remaining
    ids are shuffled by the seed and appended, so every tier is a prefix of
    the same ordering and tiers nest. Membership is a pure function of
    (ids, base flags, seed); each tier preserves corpus order.
    """
    if spec.sizes[-1] > len(corpus):
        raise CorpusError(
            f"largest tier size {spec.sizes[-1]} exceeds corpus size {len(corpus)}"
        )
    base_ids = sorted(s.id for s in corpus if s.base)
    other_ids = sorted(s.id for s in corpus if not s.base)
    random.Random(spec.seed).shuffle(other_ids)
    ordering = base_ids + other_ids
    tiers = []
    for size in spec.sizes:
        member = set(ordering[:size])
        tiers.append(Corpus(s for s in corpus if s.id in member))
    return tiers


@dataclass
class PromptRecord:
    """One fine-tuning record in code-marker/comment-marker form."""

    text: str
    code_span: tuple[int, int] = field(default=(0, 0))
    summary_span: tuple[int, int] = field(default=(0, 0))

    @property
    def code(self) -> str:
        return self.text[self.code_span[0] : self.code_span[1]]

    @property
    def summary(self) -> str:
        return self.text[self.summary_span[0] : self.summary_span[1]]


def _has_line_initial_marker(code: str) -> bool:
    return any(line.startswith(COMMENT_MARKER.rstrip()) for line in code.split("\n")[1:])


def format_training_record(sample: CodeSample, source: str) -> PromptRecord:
    """Build the training text: code marker + code, newline, comment marker + summary + EOS.

    Newlines inside the summary are replaced by single spaces so records stay
    line-parseable. Code containing a line-initial comment marker is rejected
    because the record format would become ambiguous.
    """
    summary = sample.summary(source)
    if summary is None or not summary.strip():
        raise CorpusError(f"sample {sample.id!r}: missing {source} summary")
    summary = " ".join(summary.split("\n"))
    if _has_line_initial_marker(sample.code):
        raise CorpusError(
            f"sample {sample.id!r}: code contains a line-initial comment marker"
        )
    text = f"{CODE_MARKER}{sample.code}\n{COMMENT_MARKER}{summary}{EOS_TEXT}"
    code_start = len(CODE_MARKER)
    code_end = code_start + len(sample.code)
    sum_start = code_end + 1 + len(COMMENT_MARKER)
    sum_end = sum_start + len(summary)
    return PromptRecord(text=text, code_span=(code_start, code_end), summary_span=(sum_start, sum_end))


def parse_training_record(text: str) -> tuple[str, str]:
    """Recover (code, summary) from record text; exact inverse of formatting.

    Splits on the first line-initial comment marker, so a literal comment
    marker inside a code line is preserved as code.
    """
    if not text.startswith(CODE_MARKER):
        raise CorpusError("record does not start with the code marker")
    sep = "\n" + COMMENT_MARKER
    pos = text.find(sep)
    if pos < 0:
        raise CorpusError("record has no comment marker")
    code = text[len(CODE_MARKER) : pos]
    summary = text[pos + len(sep) :]
    if summary.endswith(EOS_TEXT):
        summary = summary[: -len(EOS_TEXT)]
    return code, summary
