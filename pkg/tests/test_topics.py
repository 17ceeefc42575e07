"""LDA sampler, coherence oracle, k selection, keyword localization."""

import itertools
import math

import numpy as np
import pytest

from clav.errors import ClavError
from clav.topics import (
    CoherenceReport,
    GibbsState,
    TopicModel,
    coherence,
    fit_lda,
    load_keywords,
    load_model,
    locate_keywords,
    save_model,
    select_k,
    top_terms,
)


def planted_two_doc_corpus():
    """Two documents, each repeating one distinct word 50 times."""
    return [["aaa"] * 50, ["bbb"] * 50]


def hand_model(phi_rows, theta_rows, vocabulary):
    phi = np.array(phi_rows, dtype=float)
    theta = np.array(theta_rows, dtype=float)
    return TopicModel(
        k=phi.shape[0], vocabulary=vocabulary, phi=phi, theta=theta,
        alpha=0.1, beta=0.01, seed=0, iterations=0,
    )


class TestFitLda:
    def test_planted_two_topics(self):
        """Each document's argmax-theta topic is distinct and its topic's
        argmax-phi term is that document's word, up to relabeling."""
        model = fit_lda(planted_two_doc_corpus(), 2, alpha=0.1, beta=0.01,
                        iterations=200, seed=7)
        t0 = int(np.argmax(model.theta[0]))
        t1 = int(np.argmax(model.theta[1]))
        assert t0 != t1
        assert top_terms(model, t0, 1)[0][0] == "aaa"
        assert top_terms(model, t1, 1)[0][0] == "bbb"

    def test_k_exceeding_token_count(self):
        with pytest.raises(ClavError):
            fit_lda([["one"]], 2, iterations=10, seed=1)

    def test_same_seed_identical(self):
        docs = planted_two_doc_corpus()
        a = fit_lda(docs, 2, alpha=0.5, beta=0.1, iterations=50, seed=3)
        b = fit_lda(docs, 2, alpha=0.5, beta=0.1, iterations=50, seed=3)
        assert np.array_equal(a.phi, b.phi)
        assert np.array_equal(a.theta, b.theta)

    def test_batch_equals_incremental_sweeps(self):
        """fit_lda(iterations=N) is the same chain as N single sweeps."""
        docs = planted_two_doc_corpus()
        model = fit_lda(docs, 2, alpha=0.5, beta=0.1, iterations=25, seed=9)
        state = GibbsState(docs, 2, seed=9)
        for _ in range(25):
            state.sweep(0.5, 0.1, 1)
        phi, theta = state.point_estimate(0.5, 0.1)
        assert np.array_equal(model.phi, phi)
        assert np.array_equal(model.theta, theta)

    def test_row_stochastic(self):
        model = fit_lda(planted_two_doc_corpus(), 2, iterations=20, seed=1)
        assert np.allclose(model.phi.sum(axis=1), 1.0, atol=1e-9)
        assert np.allclose(model.theta.sum(axis=1), 1.0, atol=1e-9)

    def test_empty_corpus(self):
        with pytest.raises(ClavError):
            fit_lda([], 2, iterations=10)

    def test_count_conservation_every_sweep(self):
        rng = np.random.default_rng(0)
        vocab = [f"w{i}" for i in range(30)]
        docs = [list(rng.choice(vocab, size=rng.integers(5, 40))) for _ in range(12)]
        doc_lengths = [len(d) for d in docs]
        total = sum(doc_lengths)
        state = GibbsState(docs, 4, seed=5)
        for _ in range(30):
            state.sweep(0.1, 0.01, 1)
            assert int(state.n_kw.sum()) == total
            assert int(state.n_k.sum()) == total
            assert state.n_dk.sum(axis=1).tolist() == doc_lengths
            assert np.array_equal(state.n_kw.sum(axis=1), state.n_k)


class TestTopTerms:
    def test_planted_word_on_top(self):
        model = fit_lda(planted_two_doc_corpus(), 2, alpha=0.1, beta=0.01,
                        iterations=200, seed=7)
        words = {top_terms(model, t, 1)[0][0] for t in range(2)}
        assert words == {"aaa", "bbb"}

    def test_n_larger_than_vocabulary_clamps(self):
        model = fit_lda(planted_two_doc_corpus(), 2, iterations=20, seed=1)
        assert len(top_terms(model, 0, 99)) == 2

    def test_probabilities_non_increasing(self):
        model = fit_lda(planted_two_doc_corpus(), 2, iterations=20, seed=1)
        probs = [p for _, p in top_terms(model, 0, 2)]
        assert probs == sorted(probs, reverse=True)

    def test_tie_break_by_vocabulary_order(self):
        model = hand_model(
            [[0.25, 0.25, 0.25, 0.25], [0.1, 0.2, 0.3, 0.4]],
            [[0.5, 0.5]],
            ["a", "b", "c", "d"],
        )
        assert [w for w, _ in top_terms(model, 0, 4)] == ["a", "b", "c", "d"]

    def test_index_out_of_range(self):
        model = fit_lda(planted_two_doc_corpus(), 2, iterations=10, seed=1)
        with pytest.raises(ClavError):
            top_terms(model, 5, 1)


class TestCoherence:
    # 4-document corpus with hand-tabulated document frequencies:
    #   D(apple)=3 D(banana)=3 D(cherry)=2 D(date)=1
    #   D(apple,banana)=2 D(apple,cherry)=2 D(banana,cherry)=1
    #   D(apple,date)=0 D(banana,date)=1 D(cherry,date)=0
    DOCS = [
        ["apple", "banana"],
        ["apple", "banana", "cherry"],
        ["apple", "cherry"],
        ["banana", "date"],
    ]

    def test_hand_computed_scores(self):
        model = hand_model(
            [[0.4, 0.3, 0.2, 0.1], [0.1, 0.2, 0.3, 0.4]],
            [[0.5, 0.5]] * 4,
            ["apple", "banana", "cherry", "date"],
        )
        report = coherence(model, self.DOCS, top_n=4)
        # topic 0 order apple,banana,cherry,date:
        #   log(3/3) + [log(3/3)+log(2/3)] + [log(1/3)+log(2/3)+log(1/2)]
        expected0 = math.log(2 / 3) + math.log(1 / 3) + math.log(2 / 3) + math.log(1 / 2)
        # topic 1 order date,cherry,banana,apple:
        #   log(1/1) + [log(2/1)+log(2/2)] + [log(1/1)+log(3/2)+log(3/3)]
        expected1 = math.log(2.0) + math.log(3 / 2)
        assert report.per_topic[0] == pytest.approx(expected0, abs=1e-12)
        assert report.per_topic[1] == pytest.approx(expected1, abs=1e-12)
        assert report.mean == pytest.approx((expected0 + expected1) / 2, abs=1e-12)

    def test_full_cooccurrence_is_positive(self):
        docs = [["x", "y"], ["x", "y"], ["x", "y"]]
        model = hand_model([[0.6, 0.4], [0.4, 0.6]], [[0.5, 0.5]] * 3, ["x", "y"])
        report = coherence(model, docs, top_n=2)
        assert report.per_topic[0] == pytest.approx(math.log(4 / 3), abs=1e-12)
        assert report.per_topic[0] > 0

    def test_never_cooccurring_is_negative(self):
        docs = [["x"], ["x"], ["y"]]
        model = hand_model([[0.6, 0.4], [0.4, 0.6]], [[0.5, 0.5]] * 3, ["x", "y"])
        report = coherence(model, docs, top_n=2)
        # pair (y, x): log((0+1)/D(x)) = log(1/2) < 0
        assert report.per_topic[0] == pytest.approx(math.log(1 / 2), abs=1e-12)

    def test_top_n_validation(self):
        model = hand_model([[0.6, 0.4], [0.4, 0.6]], [[0.5, 0.5]], ["x", "y"])
        with pytest.raises(ClavError):
            coherence(model, self.DOCS, top_n=1)


def planted_three_topic_corpus(n_docs=60, doc_len=30, vocab_per=20, seed=0):
    """Three single-topic document groups over disjoint, name-interleaved
    vocabularies."""
    rng = np.random.default_rng(seed)
    vocabs = [
        [f"w{w:03d}" for w in range(3 * vocab_per) if w % 3 == t] for t in range(3)
    ]
    docs = []
    for d in range(n_docs):
        docs.append(list(rng.choice(vocabs[d % 3], size=doc_len)))
    return docs, vocabs


class TestSelectK:
    def test_planted_three_topics(self):
        docs, _ = planted_three_topic_corpus()
        best_k, scores = select_k(docs, 2, 5, alpha=0.1, beta=0.01,
                                  iterations=120, seed=0, top_n=10)
        assert best_k == 3
        assert [k for k, _ in scores] == [2, 3, 4, 5]

    def test_degenerate_range(self):
        docs, _ = planted_three_topic_corpus(n_docs=12, doc_len=20)
        best_k, scores = select_k(docs, 4, 4, alpha=0.1, beta=0.01,
                                  iterations=30, seed=1)
        assert best_k == 4 and len(scores) == 1

    def test_per_k_seed_derivation(self):
        """The k-th fit inside select_k is fit_lda with seed + k."""
        docs, _ = planted_three_topic_corpus(n_docs=12, doc_len=20)
        _, scores = select_k(docs, 3, 3, alpha=0.1, beta=0.01,
                             iterations=30, seed=10, top_n=5)
        model = fit_lda(docs, 3, alpha=0.1, beta=0.01, iterations=30, seed=13)
        assert scores[0][1] == pytest.approx(
            coherence(model, docs, 5).mean, abs=1e-12
        )


class TestLocateKeywords:
    @pytest.fixture(scope="class")
    def planted(self):
        docs, vocabs = planted_three_topic_corpus()
        model = fit_lda(docs, 3, alpha=0.1, beta=0.01, iterations=200, seed=4)
        return docs, vocabs, model

    def test_planted_word_maps_to_its_topic_and_documents(self, planted):
        docs, vocabs, model = planted
        keyword = vocabs[0][0]
        (loc,) = locate_keywords(model, [keyword], top_n=8, theta_threshold=0.5)
        assert not loc.out_of_vocabulary
        assert len(loc.topics) == 1
        generating = {d for d in range(len(docs)) if keyword in set(docs[d])}
        group = {d for d in range(len(docs)) if d % 3 == 0}
        assert generating <= set(loc.documents) <= group

    def test_out_of_vocabulary_flagged(self, planted):
        _, _, model = planted
        (loc,) = locate_keywords(model, ["zzz"], top_n=5)
        assert loc.out_of_vocabulary and loc.topics == [] and loc.documents == []

    def test_seventeen_keywords_in_one_call(self, planted, tmp_path):
        docs, vocabs, model = planted
        words = (vocabs[0] + vocabs[1] + vocabs[2])[:17]
        path = tmp_path / "keywords.txt"
        path.write_text("\n".join(words) + "\n", encoding="utf-8")
        keywords = load_keywords(path)
        assert len(keywords) == 17
        locations = locate_keywords(model, keywords, top_n=8)
        assert len(locations) == 17


class TestSerialization:
    def test_round_trip(self, tmp_path):
        model = fit_lda(planted_two_doc_corpus(), 2, alpha=0.3, beta=0.05,
                        iterations=40, seed=11)
        path = save_model(model, tmp_path / "model.bin")
        again = load_model(path)
        assert again.k == model.k
        assert again.vocabulary == model.vocabulary
        assert np.array_equal(again.phi, model.phi)
        assert np.array_equal(again.theta, model.theta)
        assert (again.alpha, again.beta, again.seed) == (
            model.alpha, model.beta, model.seed,
        )

    def test_label_permutation_equivalence_of_recovery_check(self):
        """The planted-recovery assertion itself must accept any topic
        relabeling: permuting phi/theta rows keeps the match valid."""
        docs, vocabs = planted_three_topic_corpus(n_docs=30, doc_len=30)
        model = fit_lda(docs, 3, alpha=0.1, beta=0.01, iterations=150, seed=2)
        sets = [set(v) for v in vocabs]
        for perm in itertools.permutations(range(3)):
            phi = model.phi[list(perm)]
            tops = [
                {model.vocabulary[w] for w in np.argsort(-phi[t])[:8]}
                for t in range(3)
            ]
            best = max(
                min(len(tops[t] & sets[assign[t]]) / 8 for t in range(3))
                for assign in itertools.permutations(range(3))
            )
            assert best >= 0.8
