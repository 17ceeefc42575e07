"""Endpoint payloads must be pure serializations of library outputs."""

import json
import threading

import pytest
from fastapi.testclient import TestClient

from clav import embed, simsearch, termmatch
from clav.config import RunConfig
from clav.corpus import IngestOptions, ingest_corpus
from clav.evaluation import JudgmentStore, compile_report
from clav.service import create_app
from clav.simsearch import Query
from clav.topics import fit_lda, save_model
from clav.workspace import Workspace


@pytest.fixture
def workspace(corpus_dir, tmp_path):
    """A populated workspace: corpus, tfidf index, bundle, heatmap, topics."""
    config = RunConfig(min_chars=1, stem=False, min_len=1, stopwords="none",
                       top_k=5, backend="tfidf")
    ws = Workspace(tmp_path / "ws", config)
    ws.initialize()
    corpus = ingest_corpus(corpus_dir, IngestOptions(min_chars=1))
    ws.store_corpus(corpus)
    norm = config.normalizer()

    backend = embed.fit_tfidf([norm.prep(p.text) for p in corpus.paragraphs])
    index = embed.build_index(corpus, backend, norm)
    embed.save_index(index, ws.index_path("tfidf"))

    queries = [
        Query("q1", "semesteravdrag", "Semesteravdrag sker med 4,6 % av månadslönen."),
        Query("q2", "sjuklön", "Sjuklönen utges under de första fjorton dagarna."),
    ]
    ws.queries_path.write_text(
        "\n".join(
            json.dumps({"id": q.id, "keyword": q.keyword, "sentence": q.variant_sentence},
                       ensure_ascii=False)
            for q in queries
        ),
        encoding="utf-8",
    )
    simsearch.run_query_set(corpus, index, backend, queries, norm, 5,
                            ws.bundle_path("tfidf"))

    configs = [termmatch.FeatureConfig("c1", "deduction", frozenset({"avdrag", "4,6", "%"}))]
    matrix = termmatch.match_matrix(configs, "alpha", corpus, norm, {("c1", 1)})
    termmatch.emit_heatmap(matrix, ws.heatmap_dir)

    doc_tokens = []
    for doc in corpus.documents:
        toks = []
        for para in corpus.paragraphs_for(doc.id):
            toks.extend(norm.prep(para.text))
        doc_tokens.append(toks)
    model = fit_lda(doc_tokens, 2, alpha=0.1, beta=0.01, iterations=50, seed=1)
    save_model(model, ws.lda_path(2))
    return ws


@pytest.fixture
def client(workspace):
    return TestClient(create_app(workspace))


class TestCorpusEndpoints:
    def test_stats(self, client, workspace):
        body = client.get("/api/corpus/stats").json()
        assert body == workspace.load_corpus().stats()

    def test_documents(self, client):
        body = client.get("/api/documents").json()
        assert [d["id"] for d in body] == ["alpha", "beta"]
        assert body[0]["page_count"] == 2

    def test_paragraphs_filtered_by_page(self, client, workspace):
        body = client.get("/api/documents/beta/paragraphs", params={"page": 2}).json()
        expected = workspace.load_corpus().paragraphs_for("beta", 2)
        assert [p["text"] for p in body] == [p.text for p in expected]

    def test_unknown_document_404(self, client):
        response = client.get("/api/documents/nope/paragraphs")
        assert response.status_code == 404
        body = response.json()
        assert body["code"] == 404 and "nope" in body["message"]


class TestSearchEndpoint:
    def test_equals_library_search(self, client, workspace):
        response = client.post("/api/search", json={
            "query_id": "q1", "backend": "tfidf", "top_k": 5,
        })
        assert response.status_code == 200
        got = response.json()["hits"]

        config = workspace.config
        corpus = workspace.load_corpus()
        backend = workspace.load_backend("tfidf")
        index = workspace.load_index("tfidf")
        query = simsearch.load_queries(workspace.queries_path)[0]
        expected = simsearch.search(corpus, index, backend, query,
                                    config.normalizer(), 5)
        assert len(got) == len(expected)
        for payload, hit in zip(got, expected):
            assert payload["doc"] == hit.ref.doc_id
            assert payload["page"] == hit.ref.page
            assert payload["para"] == hit.ref.index
            assert payload["score"] == hit.score
            assert payload["text"] == hit.text
            assert payload["diff"] == [
                {"kind": s.kind, "tokens": s.tokens} for s in hit.diff
            ]

    def test_inline_query(self, client):
        response = client.post("/api/search", json={
            "sentence": "Sjuklönen utges under fjorton dagar",
            "backend": "tfidf", "top_k": 3,
        })
        assert response.status_code == 200
        assert len(response.json()["hits"]) == 3

    def test_unknown_backend_404(self, client):
        response = client.post("/api/search", json={
            "sentence": "x", "backend": "nope",
        })
        assert response.status_code == 404

    def test_malformed_body_422(self, client):
        response = client.post("/api/search", json={"top_k": "twenty"})
        assert response.status_code == 422
        assert response.json()["code"] == 422

    def test_unknown_query_id_404(self, client):
        response = client.post("/api/search", json={"query_id": "zz", "backend": "tfidf"})
        assert response.status_code == 404


class TestJudgmentsAndEval:
    def test_eval_equals_compile_report(self, client, workspace):
        for rank, relevant in [(1, True), (2, False), (3, True)]:
            response = client.post("/api/judgments", json={
                "query_id": "q1", "backend": "tfidf",
                "rank": rank, "relevant": relevant,
            })
            assert response.status_code == 200
        body = client.get("/api/eval").json()

        store = workspace.judgment_store()
        expected = compile_report(store)
        assert body["map_per_backend"] == expected.map_per_backend
        assert [
            (r["query_id"], r["backend_id"], r["ap"]) for r in body["rows"]
        ] == expected.rows

    def test_unknown_judgment_key_404(self, client):
        response = client.post("/api/judgments", json={
            "query_id": "zz", "backend": "tfidf", "rank": 1, "relevant": True,
        })
        assert response.status_code == 404

    def test_judgments_survive_restart(self, workspace):
        with TestClient(create_app(workspace)) as client:
            client.post("/api/judgments", json={
                "query_id": "q1", "backend": "tfidf", "rank": 1, "relevant": True,
            })
        with TestClient(create_app(workspace)) as reborn:
            body = reborn.get("/api/eval").json()
        assert body["rows"] == [{"query_id": "q1", "backend_id": "tfidf", "ap": 1.0}]


class TestHeatmapEndpoint:
    def test_body_equals_emitted_files(self, client, workspace):
        response = client.get("/api/heatmap/alpha")
        assert response.status_code == 200
        assert response.content == (workspace.heatmap_dir / "alpha.heatmap.csv").read_bytes()
        truth = client.get("/api/heatmap/alpha/truth")
        assert truth.content == (workspace.heatmap_dir / "alpha.truth.json").read_bytes()

    def test_missing_heatmap_404(self, client):
        assert client.get("/api/heatmap/nope").status_code == 404


class TestTopicsEndpoints:
    def test_list_and_terms(self, client):
        listed = client.get("/api/topics").json()
        assert [entry["k"] for entry in listed] == [2]
        assert "mean_coherence" in listed[0]
        terms = client.get("/api/topics/2/terms", params={"top_n": 3}).json()
        assert len(terms) == 2
        assert len(terms[0]["terms"]) == 3
        probs = [t["probability"] for t in terms[0]["terms"]]
        assert probs == sorted(probs, reverse=True)

    def test_unknown_k_404(self, client):
        assert client.get("/api/topics/9/terms").status_code == 404

    def test_locate(self, client):
        body = client.get("/api/topics/2/locate", params={"kw": "sjuklön,zzz"}).json()
        assert body[0]["keyword"] == "sjuklön"
        assert body[1]["out_of_vocabulary"] is True


class TestQueriesEndpoint:
    def test_lists_queries_with_bundles(self, client):
        body = client.get("/api/queries").json()
        assert {q["id"] for q in body} == {"q1", "q2"}
        assert all(q["judged_backends"] == ["tfidf"] for q in body)


class TestReload:
    def test_409_when_reload_in_progress(self, client):
        app = client.app
        assert app.state.reload_lock.acquire(blocking=False)
        try:
            response = client.post("/api/admin/reload")
            assert response.status_code == 409
            assert response.json()["code"] == 409
        finally:
            app.state.reload_lock.release()

    def test_search_finishes_on_old_snapshot_during_reload(self, workspace, corpus_dir):
        """A search that started before the swap serves the old corpus; the
        next search sees the new one."""
        app = create_app(workspace)
        client = TestClient(app)
        snap = app.state.snapshot
        entered = threading.Event()
        release = threading.Event()
        inner = snap.backends["tfidf"]

        class GatedBackend:
            backend_id = inner.backend_id
            dim = inner.dim
            normalized = inner.normalized

            def query_vector(self, query_id, tokens):
                entered.set()
                assert release.wait(timeout=10)
                return inner.query_vector(query_id, tokens)

        snap.backends["tfidf"] = GatedBackend()

        result = {}

        def do_search():
            response = client.post("/api/search", json={
                "sentence": "Semesteravdrag sker med 4,6 % av månadslönen",
                "backend": "tfidf", "top_k": 1,
            })
            result["hits"] = response.json()["hits"]

        worker = threading.Thread(target=do_search)
        worker.start()
        assert entered.wait(timeout=10)

        # rewrite the corpus on disk and swap snapshots mid-flight
        new_text = "HELT NY TEXT om semesteravdrag med 4,6 % av månadslönen."
        (corpus_dir / "alpha.txt").write_text(new_text, encoding="utf-8")
        corpus = ingest_corpus(corpus_dir, IngestOptions(min_chars=1))
        workspace.store_corpus(corpus)
        norm = workspace.config.normalizer()
        backend = embed.fit_tfidf([norm.prep(p.text) for p in corpus.paragraphs])
        index = embed.build_index(corpus, backend, norm)
        embed.save_index(index, workspace.index_path("tfidf"))
        assert client.post("/api/admin/reload").status_code == 200

        release.set()
        worker.join(timeout=10)
        assert not worker.is_alive()
        old_texts = {h["text"] for h in result["hits"]}
        assert any("Semesteravdrag sker" in t for t in old_texts)

        fresh = client.post("/api/search", json={
            "sentence": "Semesteravdrag med 4,6 % av månadslönen",
            "backend": "tfidf", "top_k": 5,
        }).json()["hits"]
        assert any("HELT NY TEXT" in h["text"] for h in fresh)
