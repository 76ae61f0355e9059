"""Metric tests: ROUGE-L/N against brute-force oracles, BERTScore against the
unigram-membership reduction, plus provider plumbing."""

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import lcs_bruteforce, rouge_n_naive, unigram_membership_bertscore
from radprep.errors import (
    AlignmentError,
    ConfigError,
    DimensionMismatchError,
    EmptyCorpusError,
    EmptyInputError,
    InvalidNError,
    ZeroVectorError,
)
from radprep.metrics import (
    DeterministicHashEmbedder,
    EmbeddingServiceClient,
    OneHotEmbedder,
    bertscore,
    lcs_length,
    metric_tokenize,
    rouge_l,
    rouge_n,
    score_corpus,
    write_scores_csv,
)

words = st.lists(st.sampled_from(["a", "b", "c", "d", "e", "f"]), max_size=8)


class TestMetricTokenize:
    def test_examples(self):
        assert metric_tokenize("No acute findings.") == ["no", "acute", "findings"]
        assert metric_tokenize("") == []
        assert metric_tokenize("T2-weighted MRI") == ["t2", "weighted", "mri"]

    def test_underscore_splits(self):
        assert metric_tokenize("left_lower lobe") == ["left", "lower", "lobe"]

    def test_unicode_letters_kept(self):
        assert metric_tokenize("Café au lait") == ["café", "au", "lait"]

    def test_punctuation_only(self):
        assert metric_tokenize("... --- !!!") == []


class TestLcsLength:
    def test_examples(self):
        assert lcs_length(["a", "c", "e"], ["a", "b", "c", "d", "e"]) == 3
        x = ["q", "w", "e", "r"]
        assert lcs_length(x, x) == 4
        assert lcs_length(["a", "b"], ["x", "y", "z"]) == 0
        assert lcs_length([], ["a"]) == 0

    @given(words, words)
    def test_matches_bruteforce(self, a, b):
        assert lcs_length(a, b) == lcs_bruteforce(a, b)

    @given(words, words)
    def test_bounds_and_symmetry(self, a, b):
        L = lcs_length(a, b)
        assert 0 <= L <= min(len(a), len(b))
        assert L == lcs_length(b, a)

    def test_subsequence_gives_equality(self):
        assert lcs_length(["a", "c"], ["a", "b", "c"]) == 2


class TestRougeL:
    def test_worked_example(self):
        s = rouge_l("a c e", "a b c d e")
        assert s.precision == pytest.approx(1.0)
        assert s.recall == pytest.approx(0.6)
        assert s.f1 == pytest.approx(0.75)

    def test_identical(self):
        s = rouge_l("No acute findings.", "no ACUTE findings")
        assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)

    def test_empty_sides(self):
        for cand, ref in [("", "x"), ("x", ""), ("", "")]:
            s = rouge_l(cand, ref)
            assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)

    def test_beta_weighting(self):
        s = rouge_l("a c e", "a b c d e", beta=2.0)
        assert s.f1 == pytest.approx(5 * 1.0 * 0.6 / (4 * 1.0 + 0.6))

    @given(words, words)
    def test_precision_recall_symmetry(self, a, b):
        x, y = " ".join(a), " ".join(b)
        assert rouge_l(x, y).precision == pytest.approx(rouge_l(y, x).recall)
        assert rouge_l(x, y).recall == pytest.approx(rouge_l(y, x).precision)

    @given(words, words)
    def test_range(self, a, b):
        s = rouge_l(" ".join(a), " ".join(b))
        for v in (s.precision, s.recall, s.f1):
            assert 0.0 <= v <= 1.0


class TestRougeN:
    def test_bigram_example(self):
        s = rouge_n("the cat sat", "the cat slept", 2)
        assert (s.precision, s.recall, s.f1) == (0.5, 0.5, 0.5)

    def test_identity_unigram(self):
        s = rouge_n("stable exam", "stable exam", 1)
        assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)

    def test_too_short_for_trigrams(self):
        s = rouge_n("two tokens", "three tokens here", 3)
        assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)

    def test_invalid_n(self):
        with pytest.raises(InvalidNError):
            rouge_n("a", "a", 0)

    def test_clipping(self):
        # candidate repeats "a" three times; reference has it once
        s = rouge_n("a a a", "a b c", 1)
        assert s.precision == pytest.approx(1 / 3)
        assert s.recall == pytest.approx(1 / 3)

    @given(words, words, st.integers(1, 3))
    @settings(max_examples=200)
    def test_matches_naive_oracle(self, a, b, n):
        s = rouge_n(" ".join(a), " ".join(b), n)
        p, r, f1 = rouge_n_naive(a, b, n)
        assert abs(s.precision - p) < 1e-12
        assert abs(s.recall - r) < 1e-12
        assert abs(s.f1 - f1) < 1e-12

    @given(st.lists(st.sampled_from(["a", "b", "c"]), min_size=2, max_size=8))
    def test_self_identity(self, toks):
        s = rouge_n(" ".join(toks), " ".join(toks), 2)
        assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)


class TestBertScore:
    def test_identical_any_embedder(self):
        for embedder in (OneHotEmbedder(dim=16), DeterministicHashEmbedder(dim=8)):
            s = bertscore("no acute findings", "no acute findings", embedder)
            assert s.precision == pytest.approx(1.0, abs=1e-12)
            assert s.recall == pytest.approx(1.0, abs=1e-12)
            assert s.f1 == pytest.approx(1.0, abs=1e-12)

    def test_onehot_worked_example(self):
        s = bertscore("a b", "a c", OneHotEmbedder(dim=8))
        assert s.precision == pytest.approx(0.5, abs=1e-12)
        assert s.recall == pytest.approx(0.5, abs=1e-12)
        assert s.f1 == pytest.approx(0.5, abs=1e-12)

    def test_idf_zeroes_the_only_match(self):
        s = bertscore("a b", "a c", OneHotEmbedder(dim=8),
                      idf_weights={"a": 0.0, "b": 1.0, "c": 1.0})
        assert s.precision == pytest.approx(0.0, abs=1e-12)
        assert s.recall == pytest.approx(0.0, abs=1e-12)
        assert s.f1 == 0.0

    @given(st.lists(st.sampled_from("abcdef"), min_size=1, max_size=10),
           st.lists(st.sampled_from("abcdef"), min_size=1, max_size=10))
    @settings(max_examples=200)
    def test_onehot_matches_membership_oracle(self, a, b):
        s = bertscore(" ".join(a), " ".join(b), OneHotEmbedder(dim=16))
        p, r, f1 = unigram_membership_bertscore(a, b)
        assert abs(s.precision - p) < 1e-12
        assert abs(s.recall - r) < 1e-12
        assert abs(s.f1 - f1) < 1e-12

    def test_empty_input_raises(self):
        with pytest.raises(EmptyInputError):
            bertscore("", "ref text", OneHotEmbedder())
        with pytest.raises(EmptyInputError):
            bertscore("cand", "...", OneHotEmbedder())

    def test_ragged_vectors_rejected(self):
        class Ragged:
            provider_id = "ragged"
            def embed(self, tokens):
                return [[1.0] * (i + 1) for i in range(len(tokens))]
        with pytest.raises(DimensionMismatchError):
            bertscore("a b", "a b", Ragged())

    def test_zero_vector_rejected(self):
        class Zero:
            provider_id = "zero"
            def embed(self, tokens):
                return [[0.0, 0.0] for _ in tokens]
        with pytest.raises(ZeroVectorError):
            bertscore("a", "a", Zero())

    def test_nonfinite_rejected(self):
        class Nan:
            provider_id = "nan"
            def embed(self, tokens):
                return [[float("nan"), 1.0] for _ in tokens]
        with pytest.raises(ZeroVectorError):
            bertscore("a", "a", Nan())

    def test_misaligned_count_rejected(self):
        class Short:
            provider_id = "short"
            def embed(self, tokens):
                return [[1.0, 0.0]] * (len(tokens) - 1) if len(tokens) > 1 else [[1.0, 0.0]]
        with pytest.raises(AlignmentError):
            bertscore("a b c", "a b c", Short())

    def test_hash_embedder_deterministic(self):
        a = DeterministicHashEmbedder(dim=32).embed(["lung", "mass"])
        b = DeterministicHashEmbedder(dim=32).embed(["lung", "mass"])
        assert a == b
        for v in a:
            assert math.fsum(x * x for x in v) == pytest.approx(1.0)

    def test_onehot_orthogonality(self):
        emb = OneHotEmbedder(dim=8)
        vs = np.array(emb.embed(["x", "y", "x", "z"]))
        gram = vs @ vs.T
        assert gram[0, 2] == 1.0  # same token, same axis
        assert gram[0, 1] == gram[1, 3] == 0.0

    def test_onehot_overflow(self):
        emb = OneHotEmbedder(dim=2)
        with pytest.raises(ValueError):
            emb.embed(["a", "b", "c"])


class TestScoreCorpus:
    def test_mean_is_arithmetic(self):
        pairs = [("a c e", "a b c d e"), ("x y", "x y")]
        rows, means = score_corpus(pairs)
        assert means["rougeL_f1"] == pytest.approx((0.75 + 1.0) / 2)

    def test_all_identical(self):
        rows, means = score_corpus([("same text", "same text")] * 3,
                                   embedder=OneHotEmbedder(dim=8))
        for key in ("rouge1_f1", "rouge2_f1", "rougeL_f1", "bert_f1"):
            assert means[key] == pytest.approx(1.0)

    def test_rows_match_single_calls(self):
        pairs = [("no acute disease", "no acute findings"),
                 ("stable exam", "stable chest exam"),
                 ("mass in right lobe", "right lobe mass"),
                 ("clear lungs", "lungs are clear"),
                 ("effusion present", "no effusion")]
        rows, _ = score_corpus(pairs, embedder=OneHotEmbedder(dim=64))
        for (gen, ref), row in zip(pairs, rows):
            assert row.rouge_l == rouge_l(gen, ref)
            assert row.rouge1 == rouge_n(gen, ref, 1)
            assert row.rouge2 == rouge_n(gen, ref, 2)
            direct = bertscore(gen, ref, OneHotEmbedder(dim=64))
            assert row.bert.f1 == pytest.approx(direct.f1, abs=1e-12)

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpusError):
            score_corpus([])

    def test_no_embedder_skips_bert(self):
        rows, means = score_corpus([("a", "a")])
        assert rows[0].bert is None
        assert "bert_f1" not in means

    def test_means_equal_recomputation(self):
        rng = random.Random(3)
        vocab = ["lung", "mass", "clear", "no", "acute", "stable"]
        pairs = [(" ".join(rng.choices(vocab, k=rng.randrange(1, 9))),
                  " ".join(rng.choices(vocab, k=rng.randrange(1, 9))))
                 for _ in range(50)]
        rows, means = score_corpus(pairs)
        assert means["rougeL_f1"] == pytest.approx(
            math.fsum(r.rouge_l.f1 for r in rows) / len(rows), abs=1e-12)


class TestScoresCsv:
    def test_columns_and_round_trip(self, tmp_path):
        pairs = [("no acute disease", "no acute findings"), ("x", "x")]
        rows, _ = score_corpus(pairs, embedder=OneHotEmbedder(dim=16))
        p = tmp_path / "scores.csv"
        n = write_scores_csv([(f"r{i}", s) for i, s in enumerate(rows)], p)
        assert n == 2
        import csv
        with p.open() as fh:
            got = list(csv.reader(fh))
        assert got[0] == ["record_id", "rouge1_f1", "rouge2_f1", "rougeL_p",
                          "rougeL_r", "rougeL_f1", "bert_p", "bert_r", "bert_f1"]
        assert float(got[1][5]) == rows[0].rouge_l.f1
        assert float(got[2][8]) == 1.0

    def test_bert_columns_empty_without_embedder(self, tmp_path):
        rows, _ = score_corpus([("a", "b a")])
        p = tmp_path / "scores.csv"
        write_scores_csv([("r0", rows[0])], p)
        line = p.read_text().splitlines()[1]
        assert line.endswith(",,,")


class TestEmbeddingServiceClient:
    def test_url_from_env(self, monkeypatch):
        monkeypatch.setenv("RADPREP_EMBED_URL", "http://svc.local/embed")
        client = EmbeddingServiceClient(transport=lambda payload: {"vectors": []})
        assert client.url == "http://svc.local/embed"

    def test_missing_url_is_config_error(self, monkeypatch):
        monkeypatch.delenv("RADPREP_EMBED_URL", raising=False)
        with pytest.raises(ConfigError):
            EmbeddingServiceClient()

    def test_batching_and_order(self):
        calls = []
        def transport(payload):
            calls.append(payload["tokens"])
            return {"vectors": [[float(len(t)), 1.0] for t in payload["tokens"]]}
        client = EmbeddingServiceClient(url="http://x", batch_size=2,
                                        transport=transport)
        vectors = client.embed(["aa", "b", "cccc", "dd", "e"])
        assert calls == [["aa", "b"], ["cccc", "dd"], ["e"]]
        assert [v[0] for v in vectors] == [2.0, 1.0, 4.0, 2.0, 1.0]

    def test_short_reply_rejected(self):
        client = EmbeddingServiceClient(url="http://x",
                                        transport=lambda p: {"vectors": [[1.0]]})
        with pytest.raises(AlignmentError):
            client.embed(["a", "b"])

    def test_usable_as_bertscore_provider(self):
        def transport(payload):
            # token length as a 1-d feature plus a constant axis
            return {"vectors": [[float(len(t)), 1.0] for t in payload["tokens"]]}
        client = EmbeddingServiceClient(url="http://x", transport=transport)
        s = bertscore("aa bb", "aa bb", client)
        assert s.f1 == pytest.approx(1.0)
