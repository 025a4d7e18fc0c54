"""Teacher harvesting: prompt format, caching, retries, bounded concurrency."""

import json

import httpx
import pytest

from sumdistill.corpus import CodeSample, Corpus
from sumdistill.teacher import (
    HarvestCache,
    MockTeacher,
    RetryPolicy,
    TeacherClient,
    TeacherError,
    build_teacher_prompt,
    harvest,
    is_valid_summary,
    mock_summary,
)

PROMPT_LINE = "Write a one sentence description of this Java method:"


def corpus_of(n):
    return Corpus(CodeSample(id=f"s{i}", code=f"int getValue{i}() {{ return v{i}; }}") for i in range(n))


class TestPrompt:
    def test_verbatim_instruction_then_code(self):
        code = "int f(){return 1;}"
        assert build_teacher_prompt(code) == f"{PROMPT_LINE}\n{code}"

    def test_trailing_newline_preserved(self):
        code = "int f(){}\n"
        prompt = build_teacher_prompt(code)
        assert prompt == f"{PROMPT_LINE}\n{code}"
        assert prompt.endswith("\n")

    def test_empty_code_rejected(self):
        with pytest.raises(TeacherError):
            build_teacher_prompt("")


class TestValiditySharedWithCorpus:
    def test_empty_false(self):
        assert is_valid_summary("") is False

    def test_english_true(self):
        assert is_valid_summary("gets the current user id") is True

    def test_non_english_false(self):
        assert is_valid_summary("メソッドの説明") is False


class TestMockTeacher:
    def test_pure_function_of_code(self):
        code = "public int getUserCount(int maxLimit) { return this.userCount; }"
        assert mock_summary(code) == mock_summary(code)
        assert mock_summary(code).startswith("gets ")

    def test_action_word_from_leading_identifier(self):
        assert mock_summary("void setName(String name) { this.name = name; }").startswith("sets ")
        assert mock_summary("boolean frobnicate() { return true; }").startswith("returns ")

    def test_identifier_tokens_capped_at_eight(self):
        code = "void doAll(int aOne, int bTwo, int cThree, int dFour, int eFive, int fSix, int gSeven) {}"
        words = mock_summary(code).split()
        assert len(words) <= 9  # action word + at most 8 tokens


class TestHarvest:
    def test_cold_cache_calls_once_per_sample(self, tmp_path):
        corpus = corpus_of(5)
        teacher = MockTeacher()
        cache = HarvestCache(tmp_path / "cache.jsonl")
        out, report = harvest(corpus, teacher, cache)
        assert teacher.calls == 5
        assert report.fresh == 5 and report.from_cache == 0 and not report.failed
        assert len(cache) == 5
        assert all(s.teacher for s in out)

    def test_warm_cache_makes_zero_calls(self, tmp_path):
        corpus = corpus_of(5)
        cache_path = tmp_path / "cache.jsonl"
        first, _ = harvest(corpus, MockTeacher(), HarvestCache(cache_path))
        teacher = MockTeacher()
        second, report = harvest(corpus, teacher, HarvestCache(cache_path))
        assert teacher.calls == 0
        assert report.from_cache == 5 and report.fresh == 0
        assert [s.teacher for s in second] == [s.teacher for s in first]

    def test_cached_values_used_byte_for_byte(self, tmp_path):
        cache = HarvestCache(tmp_path / "cache.jsonl")
        cache.put("s0", "returns the exact cached thing", "other-model")
        out, _ = harvest(corpus_of(1), MockTeacher(), cache)
        assert out[0].teacher == "returns the exact cached thing"

    def test_permanent_failure_flags_sample_and_continues(self, tmp_path):
        corpus = corpus_of(5)
        failing_code = corpus[2].code
        teacher = MockTeacher(fail_codes={failing_code}, retry=RetryPolicy(max_attempts=2, backoff_seconds=(0.0,)))
        out, report = harvest(corpus, teacher, HarvestCache(tmp_path / "c.jsonl"))
        assert report.failed == ["s2"]
        assert out[2].teacher is None
        assert sum(1 for s in out if s.teacher) == 4
        # two attempts for the failing sample, one for each of the others
        assert teacher.calls == 4 + 2

    def test_bounded_concurrency(self, tmp_path):
        corpus = corpus_of(12)
        teacher = MockTeacher(max_parallel=3, delay=0.02)
        harvest(corpus, teacher, HarvestCache(tmp_path / "c.jsonl"))
        assert teacher.max_in_flight <= 3

    def test_harvest_idempotent(self, tmp_path):
        corpus = corpus_of(4)
        cache = HarvestCache(tmp_path / "c.jsonl")
        once, _ = harvest(corpus, MockTeacher(), cache)
        twice, _ = harvest(once, MockTeacher(), cache)
        assert [s.teacher for s in once] == [s.teacher for s in twice]


class TestHarvestCache:
    def test_last_entry_wins_on_load(self, tmp_path):
        p = tmp_path / "c.jsonl"
        with open(p, "w") as fh:
            fh.write(json.dumps({"id": "a", "summary": "old", "ts": 1, "model": "m"}) + "\n")
            fh.write(json.dumps({"id": "a", "summary": "new", "ts": 2, "model": "m"}) + "\n")
        assert HarvestCache(p).get("a") == "new"

    def test_persists_across_instances(self, tmp_path):
        p = tmp_path / "c.jsonl"
        HarvestCache(p).put("a", "gets things", "m")
        assert HarvestCache(p).get("a") == "gets things"


class TestHttpClient:
    def make_client(self, handler, **kw):
        return TeacherClient(
            endpoint="https://teacher.example/v1/chat",
            model="big-model",
            auth_token="tok",
            transport=httpx.MockTransport(handler),
            retry=RetryPolicy(max_attempts=3, backoff_seconds=(0.0,)),
            **kw,
        )

    def test_happy_path_extracts_summary(self):
        seen = {}

        def handler(request):
            seen["body"] = json.loads(request.content)
            seen["auth"] = request.headers.get("authorization")
            return httpx.Response(200, json={"choices": [{"message": {"content": "returns one"}}]})

        client = self.make_client(handler)
        assert client.complete(build_teacher_prompt("int f(){}")) == "returns one"
        assert seen["body"]["model"] == "big-model"
        assert seen["body"]["messages"] == [{"role": "user", "content": f"{PROMPT_LINE}\nint f(){{}}"}]
        assert seen["auth"] == "Bearer tok"

    def test_rate_limit_retried_then_succeeds(self, tmp_path):
        attempts = {"n": 0}

        def handler(request):
            attempts["n"] += 1
            if attempts["n"] < 3:
                return httpx.Response(429)
            return httpx.Response(200, json={"choices": [{"message": {"content": "ok fine"}}]})

        client = self.make_client(handler)
        out, report = harvest(corpus_of(1), client, HarvestCache(tmp_path / "c.jsonl"), sleep=lambda s: None)
        assert attempts["n"] == 3
        assert out[0].teacher == "ok fine"
        assert not report.failed

    def test_client_error_fails_without_retry(self, tmp_path):
        attempts = {"n": 0}

        def handler(request):
            attempts["n"] += 1
            return httpx.Response(400, text="bad request")

        out, report = harvest(corpus_of(1), self.make_client(handler), HarvestCache(tmp_path / "c.jsonl"))
        assert attempts["n"] == 1
        assert report.failed == ["s0"]
