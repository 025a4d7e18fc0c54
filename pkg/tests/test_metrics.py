"""METEOR, the stemmer, embedding similarity, and corpus aggregation."""

import numpy as np
import pytest

from sumdistill.metrics import (
    Embedder,
    MetricsError,
    align_unigrams,
    corpus_scores,
    meteor,
    metric_tokenize,
    porter_stem,
    render_score_grid,
    use_similarity,
)


class TestPorterStemmer:
    @pytest.mark.parametrize(
        "word,stem",
        [
            ("caresses", "caress"),
            ("ponies", "poni"),
            ("cats", "cat"),
            ("agreed", "agre"),
            ("plastered", "plaster"),
            ("motoring", "motor"),
            ("sing", "sing"),
            ("running", "run"),
            ("runs", "run"),
            ("happy", "happi"),
            ("conditional", "condit"),
            ("generalization", "gener"),
            ("oscillators", "oscil"),
            ("returns", "return"),
        ],
    )
    def test_classic_examples(self, word, stem):
        assert porter_stem(word) == stem

    def test_short_words_untouched(self):
        assert porter_stem("is") == "is"
        assert porter_stem("a") == "a"


class TestAlignment:
    def test_identity_two_words(self):
        a = align_unigrams(["returns", "one"], ["returns", "one"])
        assert (a.matches, a.chunks) == (2, 1)
        assert a.precision == 1.0 and a.recall == 1.0

    def test_stem_stage_matches_inflections(self):
        # porter_stem("running") == porter_stem("runs") == "run"
        a = align_unigrams(["running"], ["runs"])
        assert a.matches == 1

    def test_disjoint_tokens(self):
        a = align_unigrams(["alpha", "beta"], ["gamma", "delta"])
        assert a.matches == 0

    def test_chunks_never_exceed_matches(self):
        a = align_unigrams(["the", "cat", "sat"], ["cat", "the", "sat"])
        assert a.matches == 3
        assert a.chunks <= a.matches

    def test_assignment_minimizes_chunks_with_duplicates(self):
        # "a b a" vs "a a b": matching (0->1, 1->2, 2->0) leaves (0,1),(1,2)
        # adjacent in both strings, so two chunks beat the naive three.
        a = align_unigrams(["a", "b", "a"], ["a", "a", "b"])
        assert a.matches == 3
        assert a.chunks == 2

    def test_empty_inputs_give_zero(self):
        assert align_unigrams([], ["x"]).matches == 0
        assert align_unigrams(["x"], []).matches == 0


class TestMeteor:
    def test_identical_two_word_sentences(self):
        # F = 1, penalty = 0.5*(1/2)^3 = 0.0625, score = 0.9375
        assert meteor("returns one", "returns one") == pytest.approx(0.9375, abs=1e-9)

    def test_identical_one_word_sentences(self):
        # penalty = 0.5*(1/1)^3 = 0.5
        assert meteor("value", "value") == pytest.approx(0.5, abs=1e-9)

    def test_disjoint_sentences(self):
        assert meteor("alpha beta", "gamma delta") == 0.0

    def test_case_invariance(self):
        assert meteor("Returns One", "returns one") == pytest.approx(0.9375, abs=1e-9)

    def test_self_score_property_random_sentences(self):
        # meteor(s, s) = 1 - 0.5/m^3 for sentences of m distinct tokens.
        import random

        rng = random.Random(99)
        vocab = [f"tok{i}" for i in range(40)]
        for _ in range(100):
            m = rng.randint(1, 12)
            words = rng.sample(vocab, m)
            s = " ".join(words)
            assert meteor(s, s) == pytest.approx(1.0 - 0.5 / m**3, abs=1e-9)

    def test_score_bounds(self):
        import random

        rng = random.Random(5)
        vocab = ["gets", "sets", "the", "value", "name", "count", "id", "returns"]
        for _ in range(200):
            cand = " ".join(rng.choices(vocab, k=rng.randint(1, 10)))
            ref = " ".join(rng.choices(vocab, k=rng.randint(1, 10)))
            score = meteor(cand, ref)
            assert 0.0 <= score <= 1.0

    def test_tokenize_splits_punct_and_lowercases(self):
        assert metric_tokenize("Gets the user-id!") == ["gets", "the", "user", "-", "id", "!"]


class TestUseSimilarity:
    def orthogonal_embedder(self):
        return Embedder.from_token_table(
            {
                "alpha": np.array([1.0, 0.0], dtype=np.float32),
                "beta": np.array([0.0, 1.0], dtype=np.float32),
            }
        )

    def test_identical_sentences(self):
        emb = Embedder.hashed_token_table(32)
        assert use_similarity("gets the value", "gets the value", emb) == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_fixture_vectors(self):
        emb = self.orthogonal_embedder()
        assert use_similarity("alpha", "beta", emb) == pytest.approx(0.0, abs=1e-9)

    def test_scale_invariance(self):
        emb = Embedder.from_token_table(
            {
                "a": np.array([1.0, 2.0], dtype=np.float32),
                "b": np.array([3.0, 6.0], dtype=np.float32),  # 3x the direction of "a"
                "c": np.array([2.0, -1.0], dtype=np.float32),
            }
        )
        assert use_similarity("a", "c", emb) == pytest.approx(use_similarity("b", "c", emb), abs=1e-6)

    def test_zero_norm_reported(self):
        emb = self.orthogonal_embedder()
        with pytest.raises(MetricsError, match="zero-norm"):
            use_similarity("unknown words only", "alpha", emb)

    def test_sentence_vector_provider(self):
        emb = Embedder.from_sentence_vectors(
            {"s one": np.array([1.0, 0.0]), "s two": np.array([1.0, 0.0])}
        )
        assert use_similarity("s one", "s two", emb) == pytest.approx(1.0, abs=1e-9)

    def test_token_file_round_trip(self, tmp_path):
        p = tmp_path / "emb.txt"
        p.write_text("2 2\nalpha 1.0 0.0\nbeta 0.0 1.0\n")
        emb = Embedder.from_token_file(p)
        assert emb.dimension == 2
        assert use_similarity("alpha", "alpha beta", emb) == pytest.approx(np.cos(np.pi / 4), abs=1e-6)


class TestCorpusScores:
    def test_three_identical_pairs_hand_aggregate(self):
        # Each pair is identical two-word text: meteor 0.9375 -> mean 93.75.
        preds = {f"s{i}": "returns one" for i in range(3)}
        refs = {f"s{i}": "returns one" for i in range(3)}
        cell = corpus_scores(preds, refs, emb=Embedder.hashed_token_table(16))
        assert cell.meteor_x100 == pytest.approx(93.75, abs=1e-9)
        assert cell.use_x100 == pytest.approx(100.0, abs=1e-6)

    def test_mean_equals_mean_of_pairs(self):
        preds = {"a": "gets the value", "b": "sets a name", "c": "alpha beta"}
        refs = {"a": "gets the value of x", "b": "sets the name", "c": "gamma delta"}
        cell = corpus_scores(preds, refs)
        assert cell.meteor_mean == pytest.approx(sum(p.meteor for p in cell.pairs) / 3, abs=1e-12)

    def test_disjoint_predictions_zero(self):
        cell = corpus_scores({"a": "xx yy"}, {"a": "zz ww"})
        assert cell.meteor_x100 == 0.0

    def test_id_mismatch_lists_offender(self):
        with pytest.raises(MetricsError, match="extra"):
            corpus_scores({"a": "x", "extra": "y"}, {"a": "x"})

    def test_empty_rejected(self):
        with pytest.raises(MetricsError):
            corpus_scores({}, {})


class TestRenderGrid:
    def test_column_layout(self):
        rows = ["170k", "620k", "1.25m", "2.15m"]
        values = {
            ("170k", "350m"): 40.73,
            ("620k", "350m"): 41.57,
            ("1.25m", "350m"): 42.63,
            ("2.15m", "350m"): 44.77,
        }
        text = render_score_grid(rows, ["350m"], values)
        lines = text.splitlines()
        assert lines[0] == "dataset |     350m"
        assert lines[1] == "170k    |    40.73"
        assert lines[2] == "620k    |    41.57"
        assert lines[3] == "1.25m   |    42.63"
        assert lines[4] == "2.15m   |    44.77"

    def test_missing_cell_dash(self):
        text = render_score_grid(["r"], ["c1", "c2"], {("r", "c1"): 1.0})
        assert "-" in text.splitlines()[1]
