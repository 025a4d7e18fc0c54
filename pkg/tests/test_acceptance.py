"""Acceptance criteria, one test per criterion, each printing a pass line.

The slow criteria (memorization, distillation pilot) train real models on
the synthetic corpus with the deterministic mock teacher; budgets are
asserted alongside the quality thresholds.
"""

import itertools
import math
import random
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from sumdistill import tensor as T
from sumdistill.corpus import (
    CodeSample,
    Corpus,
    TierSpec,
    format_training_record,
    parse_training_record,
    subsample_tiers,
)
from sumdistill.demo import make_demo_corpus
from sumdistill.grid import CellResult, ExperimentGrid, GridReport, run_experiment_grid
from sumdistill.metrics import CellScores, PairScore, meteor
from sumdistill.model import (
    DecodeConfig,
    ModelConfig,
    forward_logits,
    generate_summary,
    init_model,
    load_checkpoint,
    save_checkpoint,
    train,
)
from sumdistill.service import SurveyContent, create_app
from sumdistill.stats import mann_whitney, preference_tally, sample_size, PreferenceChoice
from sumdistill.survey import (
    ResponseStore,
    create_session,
    export_responses,
    flag_low_effort,
    import_responses,
)
from sumdistill.teacher import HarvestCache, MockTeacher, harvest, mock_summary
from sumdistill.tokenizer import train_bpe


def _pass(name: str, detail: str = "") -> None:
    print(f"[ACCEPTANCE] {name}: PASS {detail}".rstrip())


def mock_corpus(n, seed, id_prefix="demo", exclude=None, tmp_path=None):
    """Demo corpus with teacher summaries filled by a real harvest over the mock."""
    corpus = make_demo_corpus(n, seed=seed, id_prefix=id_prefix, exclude_code=exclude,
                              base_count=0 if id_prefix != "demo" else min(n, 1024))
    if tmp_path is None:
        out = Corpus()
        for s in corpus:
            out.add(CodeSample(id=s.id, code=s.code, reference=s.reference,
                               teacher=mock_summary(s.code), base=s.base))
        return out
    harvested, report = harvest(corpus, MockTeacher(), HarvestCache(tmp_path / f"{id_prefix}.cache"))
    assert not report.failed
    return harvested


class TestGradientCorrectness:
    def test_gradient_correctness(self):
        start = time.time()
        rng = np.random.default_rng(0)

        def t(shape, scale=1.0):
            return T.Tensor(scale * rng.normal(size=shape).astype(np.float32), requires_grad=True)

        worst = {}
        a, b = t(6), t(6)
        worst["mul+sum (dot)"] = T.grad_check(lambda: T.sum_all(T.mul(a, b)), [a, b])
        m1, m2 = t((3, 4)), t((4, 2))
        w = rng.normal(size=(3, 2)).astype(np.float32)
        worst["matmul"] = T.grad_check(lambda: T.sum_all(T.mul(T.matmul(m1, m2), w)), [m1, m2])
        bm1, bm2 = t((2, 3, 4)), t((2, 4, 3))
        wb = rng.normal(size=(2, 3, 3)).astype(np.float32)
        worst["batched matmul"] = T.grad_check(lambda: T.sum_all(T.mul(T.matmul(bm1, bm2), wb)), [bm1, bm2])
        x, bias = t((3, 4)), t(4)
        wa = rng.normal(size=(3, 4)).astype(np.float32)
        worst["add"] = T.grad_check(lambda: T.sum_all(T.mul(T.add(x, bias), wa)), [x, bias])
        g = t((2, 5))
        worst["gelu"] = T.grad_check(lambda: T.sum_all(T.gelu(g)), [g])
        ln_x, gamma, beta = t((3, 8)), t(8, 0.2), t(8, 0.1)
        wl = rng.normal(size=(3, 8)).astype(np.float32)
        worst["layer_norm"] = T.grad_check(
            lambda: T.sum_all(T.mul(T.layer_norm(ln_x, gamma, beta), wl)), [ln_x, gamma, beta]
        )
        sm = t((2, 6))
        ws = rng.normal(size=(2, 6)).astype(np.float32)
        worst["softmax"] = T.grad_check(lambda: T.sum_all(T.mul(T.softmax_rows(sm), ws)), [sm])
        table = t((5, 3))
        ids = np.array([0, 2, 2, 4])
        we = rng.normal(size=(4, 3)).astype(np.float32)
        worst["embedding"] = T.grad_check(lambda: T.sum_all(T.mul(T.embedding(table, ids), we)), [table])
        logits = t((3, 5))
        worst["cross_entropy"] = T.grad_check(
            lambda: T.cross_entropy_next_token(logits, [1, 0, 4], [True, False, True]), [logits]
        )
        rsh = t((2, 3, 4))
        wr = rng.normal(size=(4, 3, 2)).astype(np.float32)
        worst["reshape+transpose"] = T.grad_check(
            lambda: T.sum_all(T.mul(T.transpose(rsh, (2, 1, 0)), wr)), [rsh]
        )

        w1, b1, w2 = t((4, 6), 0.5), t(6, 0.1), t((6, 3), 0.5)
        g2, bt2 = t(4, 0.05), t(4, 0.05)
        xin = rng.normal(size=(3, 4)).astype(np.float32)
        gamma_full = T.Tensor(np.ones(4, dtype=np.float32) + g2.array, requires_grad=True)

        def composite():
            h = T.layer_norm(T.Tensor(xin), gamma_full, bt2)
            h = T.gelu(T.add(T.matmul(h, w1), b1))
            return T.cross_entropy_next_token(T.matmul(h, w2), [0, 2, 1], [True, True, False])

        worst["2-layer composite"] = T.grad_check(composite, [w1, b1, w2, gamma_full, bt2])

        elapsed = time.time() - start
        for name, err in worst.items():
            assert err < 1e-4, f"{name}: max relative error {err}"
        assert elapsed < 60, f"gradient checks took {elapsed:.1f}s"
        _pass("gradient correctness", f"(worst {max(worst.values()):.2e}, {elapsed:.1f}s)")


class TestCausality:
    def test_causality(self):
        start = time.time()
        config = ModelConfig(d=32, L=2, h=2, r=1e-3, e=1, o=0.1, vocab_size=300, context_length=64)
        model = init_model(config, seed=4)
        rng = np.random.default_rng(7)
        trials = 0
        while trials < 100:
            n = int(rng.integers(2, 24))
            ids = rng.integers(0, 296, size=n).tolist()
            t_cut = int(rng.integers(0, n - 1))
            base = forward_logits(model, ids).array
            mutated = list(ids)
            mutated[t_cut + 1] = int((mutated[t_cut + 1] + 1 + rng.integers(0, 294)) % 296)
            out = forward_logits(model, mutated).array
            np.testing.assert_array_equal(base[: t_cut + 1], out[: t_cut + 1])
            trials += 1
        elapsed = time.time() - start
        assert elapsed < 60, f"causality trials took {elapsed:.1f}s"
        _pass("causality", f"(100 trials, {elapsed:.1f}s)")


class TestMemorizationOracle:
    def test_memorization_oracle(self, tmp_path):
        start = time.time()
        corpus = mock_corpus(32, seed=11, tmp_path=tmp_path)
        records = [format_training_record(s, "teacher") for s in corpus]
        config = ModelConfig(d=64, L=2, h=2, r=2e-3, e=200, o=0.0,
                             vocab_size=512, context_length=256, batch_size=8)
        tok = train_bpe((r.text for r in records), config.vocab_size)
        model = init_model(config, seed=0)
        log = train(model, records, tok, seed=0)
        final_loss = log.epoch_losses[-1]
        assert final_loss < 0.1, f"final mean loss {final_loss:.4f}"

        dc = DecodeConfig(max_new_tokens=32, eos_id=tok.eos_id)
        verbatim = sum(generate_summary(model, s.code, tok, dc) == s.teacher for s in corpus)
        assert verbatim >= 30, f"only {verbatim}/32 verbatim"
        elapsed = time.time() - start
        assert elapsed < 600, f"memorization oracle took {elapsed:.1f}s"
        _pass("memorization oracle", f"(loss {final_loss:.4f}, {verbatim}/32 verbatim, {elapsed:.0f}s)")


class TestDistillationPilot:
    def test_distillation_pilot(self, tmp_path):
        start = time.time()
        train_corpus = mock_corpus(4096, seed=1, tmp_path=tmp_path)
        test_corpus = mock_corpus(64, seed=2, id_prefix="test",
                                  exclude={s.code for s in train_corpus}, tmp_path=tmp_path)
        tiers = dict(zip(["1k", "4k"], subsample_tiers(train_corpus, TierSpec(sizes=[1024, 4096], seed=0))))
        pilot = ModelConfig(d=128, L=4, h=4, r=1e-3, e=10, o=0.0,
                            vocab_size=512, context_length=256, batch_size=16)
        grid = ExperimentGrid(
            configs={"pilot": pilot},
            tiers=tiers,
            test_codes={s.id: s.code for s in test_corpus},
            test_refs={s.id: s.teacher for s in test_corpus},
            seed=0,
            out_dir=tmp_path / "grid",
        )
        report = run_experiment_grid(grid)
        small = report.cells[("1k", "pilot")]
        large = report.cells[("4k", "pilot")]
        assert small.ok, small.error
        assert large.ok, large.error
        meteor_1k = small.scores.meteor_mean
        meteor_4k = large.scores.meteor_mean
        assert meteor_4k >= 0.60, f"held-out METEOR at 4k is {meteor_4k:.3f}"
        assert meteor_4k > meteor_1k, f"4k ({meteor_4k:.3f}) not above 1k ({meteor_1k:.3f})"
        elapsed = time.time() - start
        assert elapsed < 2700, f"pilot took {elapsed:.0f}s"
        _pass(
            "distillation pilot",
            f"(METEOR 1k {meteor_1k:.3f} -> 4k {meteor_4k:.3f}, {elapsed:.0f}s)",
        )


class TestMeteorFixtures:
    def test_meteor_fixtures(self):
        assert meteor("value", "value") == pytest.approx(0.5, abs=1e-6)
        assert meteor("returns one", "returns one") == pytest.approx(0.9375, abs=1e-6)
        assert meteor("alpha beta", "gamma delta") == 0.0
        rng = random.Random(123)
        vocab = [f"w{i}" for i in range(60)]
        for _ in range(200):
            m = rng.randint(1, 14)
            s = " ".join(rng.sample(vocab, m))
            assert meteor(s, s) == pytest.approx(1.0 - 0.5 / m**3, abs=1e-9)
        _pass("METEOR fixtures", "(0.5 / 0.9375 / 0 and 200-sentence self-score property)")


class TestStatistics:
    def test_statistics(self):
        res = mann_whitney([1, 2, 3], [4, 5, 6])
        assert res.u == 0

        # exhaustive-enumeration oracle over all 20 rank assignments
        pooled = [1, 2, 3, 4, 5, 6]
        us = []
        for combo in itertools.combinations(range(6), 3):
            a = [pooled[i] for i in combo]
            b = [pooled[i] for i in range(6) if i not in combo]
            us.append(mann_whitney(a, b).u)
        mean_u = sum(us) / len(us)
        std_u = math.sqrt(sum((u - mean_u) ** 2 for u in us) / len(us))
        assert res.z == pytest.approx((res.u - mean_u) / std_u, abs=1e-9)
        assert res.z == pytest.approx(-1.964, abs=1e-3)

        rng = random.Random(5)
        a = [rng.randint(1, 4) for _ in range(9)]
        b = [rng.randint(1, 4) for _ in range(11)]
        base = mann_whitney(a, b)
        for _ in range(100):
            uniq = sorted(set(a + b))
            acc, mapping = rng.uniform(-10, 10), {}
            for v in uniq:
                acc += rng.uniform(0.05, 3.0)
                mapping[v] = acc
            res2 = mann_whitney([mapping[v] for v in a], [mapping[v] for v in b])
            assert res2.u == pytest.approx(base.u, abs=1e-9)
            assert res2.z == pytest.approx(base.z, abs=1e-9)
            assert res2.p == pytest.approx(base.p, abs=1e-9)

        assert sample_size(8000, 0.05) == 381

        choices = (
            [PreferenceChoice("first", "teacher", "reference")] * 360
            + [PreferenceChoice("second", "teacher", "reference")] * 81
            + [PreferenceChoice("undecided", "teacher", "reference")] * 9
        )
        tally = preference_tally(choices)
        assert tally.percent("teacher") == pytest.approx(80.0, abs=1e-9)
        assert tally.percent("reference") == pytest.approx(18.0, abs=1e-9)
        assert tally.percent("undecided") == pytest.approx(2.0, abs=1e-9)
        _pass("statistics", "(MW oracle, rank invariance, sample size 381, tally 80/18/2)")


class TestReportRendering:
    def test_report_rendering(self):
        report = GridReport(tier_labels=["170k", "620k", "1.25m", "2.15m"], config_names=["350m"])
        for tier, value in [("170k", 0.4073), ("620k", 0.4157), ("1.25m", 0.4263), ("2.15m", 0.4477)]:
            report.cells[(tier, "350m")] = CellResult(
                config_name="350m", tier_label=tier,
                scores=CellScores(pairs=[PairScore(id="x", meteor=value)], meteor_mean=value, use_mean=None),
            )
        expected = (
            "dataset |     350m\n"
            "170k    |    40.73\n"
            "620k    |    41.57\n"
            "1.25m   |    42.63\n"
            "2.15m   |    44.77\n"
        )
        assert report.render_meteor() == expected
        _pass("report rendering", "(published column reproduced byte-for-byte)")


class TestRoundTrips:
    def test_round_trips(self, tmp_path):
        # tokenizer: decode(encode(s)) over 1000 random UTF-8 strings
        tok = train_bpe((s.code for s in make_demo_corpus(64, seed=3)), vocab_size=400)
        rng = random.Random(31337)
        for _ in range(1000):
            chars = []
            for _ in range(rng.randint(0, 50)):
                r = rng.random()
                if r < 0.6:
                    cp = rng.randint(32, 126)
                elif r < 0.85:
                    cp = rng.randint(0x80, 0x7FF)
                else:
                    cp = rng.randint(0x800, 0xFFFF)
                    if 0xD800 <= cp <= 0xDFFF:
                        cp = 0x2603
                chars.append(chr(cp))
            s = "".join(chars)
            assert tok.decode(tok.encode(s)) == s

        # checkpoint: bit-identical logits after save/load
        config = ModelConfig(d=32, L=1, h=2, vocab_size=300, context_length=64)
        model = init_model(config, seed=9)
        save_checkpoint(model, tmp_path / "m.ckpt")
        loaded = load_checkpoint(tmp_path / "m.ckpt")
        nrng = np.random.default_rng(1)
        for _ in range(10):
            ids = nrng.integers(0, 296, size=int(nrng.integers(1, 30))).tolist()
            np.testing.assert_array_equal(forward_logits(model, ids).array, forward_logits(loaded, ids).array)

        # survey export/import identity
        store = ResponseStore(tmp_path / "store.jsonl")
        session = create_session("p1", [f"m{i}" for i in range(40)], seed=2, items_per_session=3)
        store.add_session(session)
        for item in (1, 2, 3):
            store.record_page1(session.token, item, {"accurate": 3, "complete": 2, "concise": 1}, 40)
            store.record_page2(session.token, item, "second", f"reason {item}", 20)
        assert import_responses(export_responses(store)) == [r.to_record() for r in store.responses()]

        # prompt format/parse identity
        sample = CodeSample(id="a", code="int f(){\n  return 1;\n}", teacher="returns one")
        rec = format_training_record(sample, "teacher")
        assert rec.text == "TDAT: int f(){\n  return 1;\n}\nCOM: returns one<|endoftext|>"
        assert parse_training_record(rec.text) == (sample.code, "returns one")
        for s in make_demo_corpus(200, seed=6):
            rec = format_training_record(CodeSample(id=s.id, code=s.code, teacher=mock_summary(s.code)), "teacher")
            assert parse_training_record(rec.text) == (s.code, mock_summary(s.code))
        _pass("round-trips", "(tokenizer x1000, checkpoint, survey export, prompt records)")


class TestSurveyServiceHeadless:
    def test_survey_service(self, tmp_path):
        # 30 distinct items per session
        pool = [f"m{i:03d}" for i in range(60)]
        session = create_session("p0", pool, seed=0)
        assert session.item_count == 30
        assert len({i.method_id for i in session.items}) == 30

        # fair first-shown source over 1000 seeded sessions
        shown_first = total = 0
        for seed in range(1000):
            s = create_session(f"p{seed}", pool, seed=seed)
            for item in s.items:
                shown_first += item.first_source == "reference"
                total += 1
        fraction = shown_first / total
        assert 0.45 <= fraction <= 0.55, f"first-shown fraction {fraction:.4f}"

        # HTTP validations: Likert range and required rationale
        methods = {m: f"int f_{m}() {{ return 0; }}" for m in pool}
        content = SurveyContent(
            methods=methods,
            summaries={
                "reference": {m: f"returns zero for {m}" for m in methods},
                "teacher": {m: f"returns the stored zero of {m}" for m in methods},
            },
            items_per_session=3,
        )
        client = TestClient(create_app(ResponseStore(tmp_path / "svc.jsonl"), content))
        token = client.post("/api/session", json={"participant_id": "p1", "seed": 7}).json()["token"]
        bad_likert = client.post(
            f"/api/session/{token}/item/1/page1",
            json={"accurate": 0, "complete": 2, "concise": 2, "elapsed_seconds": 4},
        )
        assert bad_likert.status_code == 422
        ok = client.post(
            f"/api/session/{token}/item/1/page1",
            json={"accurate": 4, "complete": 2, "concise": 2, "elapsed_seconds": 30},
        )
        assert ok.status_code == 200
        no_rationale = client.post(
            f"/api/session/{token}/item/1/page2",
            json={"preference": "first", "rationale": " ", "elapsed_seconds": 5},
        )
        assert no_rationale.status_code == 400

        # low-effort flag at the 30-second threshold
        store = ResponseStore(tmp_path / "flags.jsonl")
        fast = create_session("fast", pool, seed=1, items_per_session=4)
        slow = create_session("slow", pool, seed=2, items_per_session=4)
        store.add_session(fast)
        store.add_session(slow)
        for item in range(1, 5):
            store.record_page1(fast.token, item, {"accurate": 3, "complete": 2, "concise": 2}, 15.0)
            store.record_page2(fast.token, item, "first", "ok", 10.0)  # 25 s per item
            store.record_page1(slow.token, item, {"accurate": 3, "complete": 2, "concise": 2}, 80.0)
            store.record_page2(slow.token, item, "first", "ok", 40.0)  # 120 s per item
        flagged = flag_low_effort(store.mean_item_seconds(), 30.0)
        assert flagged == [fast.token]
        _pass("survey service", f"(first-shown fraction {fraction:.3f}, validations, low-effort flag)")
