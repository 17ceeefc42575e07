"""HTTP facade over the workspace artifacts.

Every endpoint is a pure serialization of the corresponding library
operation; no endpoint computes anything the library does not. Reads run
against an immutable snapshot of the workspace; POST /api/admin/reload
builds a fresh snapshot offline and swaps it in atomically, so in-flight
requests finish on the snapshot they started with.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import simsearch
from .corpus import Corpus
from .embed import EmbeddingBackend, VectorIndex
from .errors import ClavError, NotFoundError, UnembeddableError
from .evaluation import JudgmentStore, compile_report
from .simsearch import Query, QueryResult, SearchHit
from .textprep import Normalizer
from .topics import TopicModel, coherence, top_terms
from .workspace import Workspace


@dataclass
class Snapshot:
    """Immutable view of the workspace artifacts a request may touch."""

    corpus: Corpus | None = None
    normalizer: Normalizer | None = None
    backends: dict[str, EmbeddingBackend] = field(default_factory=dict)
    indexes: dict[str, VectorIndex] = field(default_factory=dict)
    queries: dict[str, Query] = field(default_factory=dict)
    bundles: dict[str, list[QueryResult]] = field(default_factory=dict)
    models: dict[int, TopicModel] = field(default_factory=dict)
    doc_tokens: list[list[str]] = field(default_factory=list)
    heatmap_dir: Path | None = None
    config_hash: str = ""


def build_snapshot(workspace: Workspace) -> Snapshot:
    """Load whatever artifacts exist; missing pieces surface as 404 later."""
    snap = Snapshot(config_hash=workspace.config.config_hash())
    snap.heatmap_dir = workspace.heatmap_dir
    try:
        snap.corpus = workspace.load_corpus()
    except ClavError:
        return snap
    snap.normalizer = workspace.config.normalizer()
    per_doc: dict[str, list[str]] = {d.id: [] for d in snap.corpus.documents}
    for para in snap.corpus.paragraphs:
        per_doc[para.ref.doc_id].extend(snap.normalizer.prep(para.text))
    snap.doc_tokens = [per_doc[d.id] for d in snap.corpus.documents]
    for backend_id in _available_backends(workspace):
        try:
            snap.backends[backend_id] = workspace.load_backend(backend_id)
            snap.indexes[backend_id] = workspace.load_index(backend_id)
        except ClavError:
            continue
    if workspace.queries_path.exists():
        for query in simsearch.load_queries(workspace.queries_path):
            snap.queries[query.id] = query
    snap.bundles = workspace.load_bundles()
    for k, path in workspace.list_lda_models().items():
        try:
            snap.models[k] = workspace.load_lda(k)
        except ClavError:
            continue
    return snap


def _available_backends(workspace: Workspace) -> list[str]:
    out = ["tfidf"]
    if workspace.pvdbow_path().exists():
        out.append("pvdbow")
    if workspace.index_dir.exists():
        for path in sorted(workspace.index_dir.glob("import-*.imported.vec")):
            name = path.name.removeprefix("import-").removesuffix(".imported.vec")
            out.append(f"import:{name}")
    return out


class SearchBody(BaseModel):
    query_id: str | None = None
    keyword: str | None = None
    sentence: str | None = None
    backend: str = "tfidf"
    top_k: int = 20


class JudgmentBody(BaseModel):
    query_id: str
    backend: str
    rank: int
    relevant: bool


def _http_error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": status, "message": message})


def _ref_payload(hit: SearchHit) -> dict:
    return {
        "doc": hit.ref.doc_id,
        "page": hit.ref.page,
        "para": hit.ref.index,
        "score": hit.score,
        "text": hit.text,
        "prev": hit.context_prev,
        "next": hit.context_next,
        "diff": [{"kind": s.kind, "tokens": s.tokens} for s in hit.diff],
    }


def create_app(workspace: Workspace, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="clav", docs_url=None, redoc_url=None)
    app.state.workspace = workspace
    app.state.snapshot = build_snapshot(workspace)
    app.state.judgments = workspace.judgment_store()
    app.state.reload_lock = threading.Lock()
    app.state.judgment_write_lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    def _validation_handler(request: Request, exc: RequestValidationError):
        return _http_error(422, str(exc.errors()))

    @app.exception_handler(ClavError)
    def _clav_handler(request: Request, exc: ClavError):
        status = 404 if isinstance(exc, NotFoundError) else 422
        return _http_error(status, str(exc))

    def _snap() -> Snapshot:
        return app.state.snapshot

    def _corpus(snap: Snapshot) -> Corpus:
        if snap.corpus is None:
            raise NotFoundError("no corpus ingested yet; run `clav ingest`")
        return snap.corpus

    @app.get("/api/corpus/stats")
    def corpus_stats():
        return _corpus(_snap()).stats()

    @app.get("/api/documents")
    def documents():
        corpus = _corpus(_snap())
        return [
            {
                "id": d.id,
                "title": d.title,
                "page_count": d.page_count,
                "paragraphs": len(corpus.paragraphs_for(d.id)),
            }
            for d in corpus.documents
        ]

    @app.get("/api/documents/{doc_id}/paragraphs")
    def document_paragraphs(doc_id: str, page: int | None = None):
        corpus = _corpus(_snap())
        paras = corpus.paragraphs_for(doc_id, page)
        return [
            {"doc": p.ref.doc_id, "page": p.ref.page, "para": p.ref.index, "text": p.text}
            for p in paras
        ]

    @app.get("/api/heatmap/{doc_id}")
    def heatmap(doc_id: str):
        snap = _snap()
        path = (snap.heatmap_dir or Path()) / f"{doc_id}.heatmap.csv"
        if not path.exists():
            raise NotFoundError(f"no heatmap for document {doc_id!r}; run `clav heatmap`")
        return Response(content=path.read_bytes(), media_type="text/csv")

    @app.get("/api/heatmap/{doc_id}/truth")
    def heatmap_truth(doc_id: str):
        snap = _snap()
        path = (snap.heatmap_dir or Path()) / f"{doc_id}.truth.json"
        if not path.exists():
            raise NotFoundError(f"no truth marks for document {doc_id!r}")
        return Response(content=path.read_bytes(), media_type="application/json")

    @app.get("/api/topics")
    def topics_list():
        snap = _snap()
        out = []
        for k, model in sorted(snap.models.items()):
            entry = {"k": k, "iterations": model.iterations, "seed": model.seed}
            if snap.doc_tokens:
                entry["mean_coherence"] = coherence(model, snap.doc_tokens).mean
            out.append(entry)
        return out

    @app.get("/api/topics/{k}/terms")
    def topic_terms(k: int, top_n: int = 10):
        snap = _snap()
        model = snap.models.get(k)
        if model is None:
            raise NotFoundError(f"no fitted model with k={k}")
        report = coherence(model, snap.doc_tokens, max(2, top_n)) if snap.doc_tokens else None
        return [
            {
                "topic": t,
                "terms": [
                    {"term": w, "probability": p} for w, p in top_terms(model, t, top_n)
                ],
                "coherence": report.per_topic[t] if report else None,
            }
            for t in range(model.k)
        ]

    @app.get("/api/topics/{k}/locate")
    def topic_locate(k: int, kw: str, top_n: int = 10, theta_threshold: float = 0.2):
        from .topics import locate_keywords

        snap = _snap()
        model = snap.models.get(k)
        if model is None:
            raise NotFoundError(f"no fitted model with k={k}")
        corpus = _corpus(snap)
        doc_ids = [d.id for d in corpus.documents]
        keywords = [w.strip() for w in kw.split(",") if w.strip()]
        out = []
        for loc in locate_keywords(model, keywords, top_n, theta_threshold):
            out.append({
                "keyword": loc.keyword,
                "out_of_vocabulary": loc.out_of_vocabulary,
                "topics": loc.topics,
                "documents": [doc_ids[d] for d in loc.documents],
            })
        return out

    @app.get("/api/queries")
    def queries():
        snap = _snap()
        return [
            {
                "id": q.id,
                "keyword": q.keyword,
                "sentence": q.variant_sentence,
                "judged_backends": sorted(
                    b for b, results in snap.bundles.items()
                    if any(r.query_id == q.id for r in results)
                ),
            }
            for q in snap.queries.values()
        ]

    @app.post("/api/search")
    def search_endpoint(body: SearchBody):
        snap = _snap()
        corpus = _corpus(snap)
        backend = snap.backends.get(body.backend)
        index = snap.indexes.get(body.backend)
        if backend is None or index is None:
            raise NotFoundError(f"backend {body.backend!r} has no index loaded")
        if body.query_id is not None:
            query = snap.queries.get(body.query_id)
            if query is None:
                raise NotFoundError(f"unknown query id {body.query_id!r}")
        elif body.sentence:
            query = Query(
                id=body.query_id or "inline",
                keyword=body.keyword or "",
                variant_sentence=body.sentence,
            )
        else:
            raise ClavError("request needs query_id or an inline sentence")
        try:
            hits = simsearch.search(
                corpus, index, backend, query, snap.normalizer, body.top_k
            )
        except UnembeddableError as exc:
            raise ClavError(str(exc)) from exc
        return {
            "query_id": query.id,
            "backend": body.backend,
            "hits": [dict(_ref_payload(h), rank=i + 1) for i, h in enumerate(hits)],
        }

    @app.get("/api/results/{backend_id}/{query_id}")
    def stored_results(backend_id: str, query_id: str):
        snap = _snap()
        results = snap.bundles.get(backend_id)
        if results is None:
            raise NotFoundError(f"no result bundle for backend {backend_id!r}")
        for result in results:
            if result.query_id == query_id:
                if result.error is not None:
                    return {"query_id": query_id, "error": result.error, "hits": []}
                return {
                    "query_id": query_id,
                    "backend": backend_id,
                    "hits": [
                        dict(_ref_payload(h), rank=i + 1)
                        for i, h in enumerate(result.hits)
                    ],
                }
        raise NotFoundError(f"query {query_id!r} not in bundle {backend_id!r}")

    @app.post("/api/judgments")
    def post_judgment(body: JudgmentBody):
        store: JudgmentStore = app.state.judgments
        with app.state.judgment_write_lock:
            store.record(body.query_id, body.backend, body.rank, body.relevant)
        return {"ok": True}

    @app.get("/api/eval")
    def eval_report():
        report = compile_report(app.state.judgments)
        return {
            "rows": [
                {"query_id": q, "backend_id": b, "ap": ap} for q, b, ap in report.rows
            ],
            "map_per_backend": report.map_per_backend,
        }

    @app.post("/api/admin/reload")
    def reload():
        lock: threading.Lock = app.state.reload_lock
        if not lock.acquire(blocking=False):
            return _http_error(409, "a reload is already in progress")
        try:
            fresh = build_snapshot(workspace)
            app.state.snapshot = fresh
            app.state.judgments = workspace.judgment_store()
            return {"ok": True, "config_hash": fresh.config_hash}
        finally:
            lock.release()

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
