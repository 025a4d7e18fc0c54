"""Teacher-LLM harvesting: prompt construction, cached collection, and a deterministic mock."""

from __future__ import annotations

import json
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .corpus import CodeSample, Corpus, is_valid_summary  # noqa: F401  (shared validity check)

PROMPT_INSTRUCTION = "Write a one sentence description of this Java method:"


class TeacherError(RuntimeError):
    """Permanent teacher failure; not retried."""


class TransientTeacherError(TeacherError):
    """Transport error or rate-limit signal; retried per policy."""


@dataclass
class RetryPolicy:
    max_attempts: int = 3
    backoff_seconds: tuple[float, ...] = (1.0, 4.0, 16.0)

    def backoff(self, attempt: int) -> float:
        if not self.backoff_seconds:
            return 0.0
        return self.backoff_seconds[min(attempt, len(self.backoff_seconds) - 1)]


def build_teacher_prompt(code: str) -> str:
    """Instruction line, a newline, then the method code byte-for-byte."""
    if not code:
        raise TeacherError("code must be nonempty")
    return f"{PROMPT_INSTRUCTION}\n{code}"


@dataclass
class TeacherClient:
    """HTTP chat-completion-style client for a real teacher endpoint.

    The request body is {"model", "messages": [single user message]} plus
    payload_extra; the summary is extracted from the response JSON by
    walking response_path. 429 and 5xx responses and transport errors are
    retried; other errors fail the sample immediately.
    """

    endpoint: str
    model: str
    auth_token: str = ""
    max_parallel: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    timeout: float = 60.0
    payload_extra: dict = field(default_factory=dict)
    response_path: str = "choices.0.message.content"
    transport: httpx.BaseTransport | None = None  # injectable for tests

    def __post_init__(self) -> None:
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")

    def complete(self, prompt: str) -> str:
        headers = {}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            **self.payload_extra,
        }
        try:
            with httpx.Client(transport=self.transport, timeout=self.timeout) as client:
                resp = client.post(self.endpoint, json=body, headers=headers)
        except httpx.TransportError as exc:
            raise TransientTeacherError(f"transport error: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientTeacherError(f"teacher returned status {resp.status_code}")
        if resp.status_code >= 400:
            raise TeacherError(f"teacher returned status {resp.status_code}: {resp.text[:200]}")
        node = resp.json()
        for part in self.response_path.split("."):
            try:
                node = node[int(part)] if part.isdigit() else node[part]
            except (KeyError, IndexError, TypeError) as exc:
                raise TeacherError(f"response missing path {self.response_path!r}") from exc
        return str(node)


_JAVA_KEYWORDS = frozenset(
    """abstract assert boolean break byte case catch char class const continue
    default do double else enum extends final finally float for goto if
    implements import instanceof int interface long native new package private
    protected public return short static strictfp super switch synchronized
    this throw throws transient try void volatile while true false null
    String Object Integer Long Double Float Boolean List Map Set ArrayList
    HashMap Exception override Override""".split()
)

_ACTION_WORDS = {
    "get": "gets", "set": "sets", "is": "checks", "has": "checks",
    "compute": "computes", "calc": "calculates", "find": "finds",
    "create": "creates", "make": "creates", "remove": "removes",
    "delete": "deletes", "update": "updates", "load": "loads",
    "save": "saves", "read": "reads", "write": "writes", "add": "adds",
    "count": "counts", "build": "builds", "init": "initializes",
    "reset": "resets", "clear": "clears", "close": "closes", "open": "opens",
    "send": "sends", "parse": "parses", "convert": "converts",
    "apply": "applies", "run": "runs", "start": "starts", "stop": "stops",
    "merge": "merges", "sort": "sorts", "copy": "copies", "check": "checks",
    "print": "prints", "format": "formats", "append": "appends",
    "fetch": "fetches", "handle": "handles", "process": "processes",
    "validate": "validates", "fill": "fills", "flush": "flushes",
    "push": "pushes", "pop": "removes", "put": "puts", "next": "advances",
}

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_CAMEL_RE = re.compile(r"[A-Z]?[a-z]+|[A-Z]+(?![a-z])|[0-9]+")


def split_identifier(ident: str) -> list[str]:
    """Split a camelCase/snake_case identifier into lowercase words."""
    words = []
    for chunk in ident.split("_"):
        words.extend(m.group(0).lower() for m in _CAMEL_RE.finditer(chunk))
    return words


def mock_summary(code: str) -> str:
    """Deterministic template summary: action word + up to 8 identifier words.

    The action word is picked from the leading word of the method name; the
    rest are the distinct identifier words in order of appearance. Pure
    function of the code text, so harvests are reproducible.
    """
    idents = [w for w in _IDENT_RE.findall(code) if w not in _JAVA_KEYWORDS]
    name_match = re.search(r"([A-Za-z_][A-Za-z0-9_]*)\s*\(", code)
    lead = split_identifier(name_match.group(1))[0] if name_match else ""
    action = _ACTION_WORDS.get(lead, "returns")
    tokens: list[str] = []
    for ident in idents:
        for word in split_identifier(ident):
            if word != lead and word not in tokens:
                tokens.append(word)
    tokens = tokens[:8]
    return action + (" " + " ".join(tokens) if tokens else " a value")


class MockTeacher:
    """In-process teacher with the TeacherClient interface.

    Deterministic (summary is a pure function of the code text), optionally
    failing selected prompts, and instrumented so tests can assert the
    bounded-concurrency contract.
    """

    def __init__(
        self,
        max_parallel: int = 4,
        retry: RetryPolicy | None = None,
        fail_codes: set[str] | None = None,
        delay: float = 0.0,
    ):
        self.model = "mock-teacher"
        self.max_parallel = max_parallel
        self.retry = retry or RetryPolicy(backoff_seconds=(0.0,))
        self.fail_codes = fail_codes or set()
        self.delay = delay
        self.calls = 0
        self.in_flight = 0
        self.max_in_flight = 0
        self._lock = threading.Lock()

    def complete(self, prompt: str) -> str:
        with self._lock:
            self.calls += 1
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
        try:
            if self.delay:
                time.sleep(self.delay)
            code = prompt.split("\n", 1)[1] if "\n" in prompt else prompt
            if code in self.fail_codes:
                raise TransientTeacherError("mock failure")
            return mock_summary(code)
        finally:
            with self._lock:
                self.in_flight -= 1


class HarvestCache:
    """Append-only line-delimited cache of {"id", "summary", "ts", "model"}.

    Loaded fully into memory; writes are serialized through one lock. On
    load, the last entry for an id wins.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.entries: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        obj = json.loads(line)
                        self.entries[obj["id"]] = obj

    def get(self, sample_id: str) -> str | None:
        entry = self.entries.get(sample_id)
        return entry["summary"] if entry else None

    def put(self, sample_id: str, summary: str, model: str) -> None:
        entry = {"id": sample_id, "summary": summary, "ts": time.time(), "model": model}
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
                fh.flush()
            self.entries[sample_id] = entry

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class HarvestReport:
    total: int = 0
    fresh: int = 0
    from_cache: int = 0
    failed: list[str] = field(default_factory=list)


def _fetch_with_retry(client, code: str, sleep=time.sleep) -> str:
    prompt = build_teacher_prompt(code)
    last_exc: Exception | None = None
    for attempt in range(client.retry.max_attempts):
        try:
            return client.complete(prompt)
        except TransientTeacherError as exc:
            last_exc = exc
            if attempt + 1 < client.retry.max_attempts:
                sleep(client.retry.backoff(attempt))
        except TeacherError:
            raise
    raise TeacherError(f"retries exhausted: {last_exc}")


def harvest(
    corpus: Corpus,
    client,
    cache: HarvestCache,
    sleep=time.sleep,
) -> tuple[Corpus, HarvestReport]:
    """Populate teacher summaries for every sample, via cache or fresh calls.

    Fresh results are written to the cache before the run returns, so a
    re-run with a warm cache makes zero network calls. Per-sample failures
    are collected in the report and the run continues; only cache write
    failures abort.
    """
    report = HarvestReport(total=len(corpus))
    results: dict[str, str] = {}
    todo: list[CodeSample] = []
    for s in corpus:
        cached = cache.get(s.id)
        if cached is not None:
            results[s.id] = cached
            report.from_cache += 1
        else:
            todo.append(s)

    def work(sample: CodeSample) -> tuple[str, str | None]:
        try:
            return sample.id, _fetch_with_retry(client, sample.code, sleep=sleep)
        except TeacherError:
            return sample.id, None

    if todo:
        with ThreadPoolExecutor(max_workers=client.max_parallel) as pool:
            for sample_id, summary in pool.map(work, todo):
                if summary is None:
                    report.failed.append(sample_id)
                else:
                    cache.put(sample_id, summary, client.model)
                    results[sample_id] = summary
                    report.fresh += 1

    out = Corpus()
    for s in corpus:
        out.add(
            CodeSample(
                id=s.id,
                code=s.code,
                reference=s.reference,
                teacher=results.get(s.id, s.teacher),
                project=s.project,
                base=s.base,
            )
        )
    return out, report
