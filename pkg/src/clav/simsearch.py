"""Similarity retrieval over the paragraph index.

Queries are keyword + variant-sentence pairs; the whole sentence is
embedded and scored against every indexed paragraph by cosine (exact
scan, no approximation). Hits come back with previous/next context and a
token-level diff against the query sentence. Near-duplicate paragraphs
can be grouped by thresholded cosine communities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus, ParagraphRef
from .errors import ClavError, IngestError, UnembeddableError
from .embed import EmbeddingBackend, VectorIndex
from .textprep import Normalizer, tokenize


@dataclass(frozen=True)
class Query:
    id: str
    keyword: str
    variant_sentence: str
    source: ParagraphRef | None = None

    def __post_init__(self) -> None:
        if not self.variant_sentence:
            raise ClavError(f"query {self.id!r} has an empty variant sentence")


@dataclass
class DiffSpan:
    kind: str  # equal | only_query | only_hit
    tokens: list[str]


@dataclass
class SearchHit:
    ref: ParagraphRef
    score: float
    text: str
    context_prev: str | None
    context_next: str | None
    diff: list[DiffSpan]


@dataclass
class Community:
    members: list[ParagraphRef]
    centroid_ref: ParagraphRef


@dataclass
class QueryResult:
    query_id: str
    hits: list[SearchHit] = field(default_factory=list)
    error: str | None = None


def _surface_tokens(text: str) -> list[str]:
    return [t.surface for t in tokenize(text)]


def diff_highlight(query_text: str, hit_text: str) -> list[DiffSpan]:
    """Token-level LCS alignment of the two texts, merged into maximal
    spans: shared runs are 'equal', query-only runs precede hit-only runs."""
    a = _surface_tokens(query_text)
    b = _surface_tokens(hit_text)
    n, m = len(a), len(b)
    dp = np.zeros((n + 1, m + 1), dtype=np.int32)
    for i in range(1, n + 1):
        ai = a[i - 1]
        row = dp[i]
        prev = dp[i - 1]
        for j in range(1, m + 1):
            if ai == b[j - 1]:
                row[j] = prev[j - 1] + 1
            else:
                row[j] = max(prev[j], row[j - 1])
    ops: list[tuple[str, str]] = []  # collected backward
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and a[i - 1] == b[j - 1]:
            ops.append(("equal", a[i - 1]))
            i -= 1
            j -= 1
        elif j > 0 and (i == 0 or dp[i][j - 1] >= dp[i - 1][j]):
            ops.append(("only_hit", b[j - 1]))
            j -= 1
        else:
            ops.append(("only_query", a[i - 1]))
            i -= 1
    spans: list[DiffSpan] = []
    for kind, token in reversed(ops):
        if spans and spans[-1].kind == kind:
            spans[-1].tokens.append(token)
        else:
            spans.append(DiffSpan(kind, [token]))
    return spans


def search(
    corpus: Corpus,
    index: VectorIndex,
    backend: EmbeddingBackend,
    query: Query,
    norm: Normalizer,
    top_k: int = 20,
) -> list[SearchHit]:
    """Rank all indexed paragraphs against the query's variant sentence.

    Descending cosine, ties broken by (doc_id, page, index); context is
    attached from the corpus and a diff is computed per hit.
    """
    tokens = norm.prep(query.variant_sentence)
    try:
        qvec = backend.query_vector(query.id, tokens)
        scores = index.cosines(np.asarray(qvec, dtype=np.float64))
    except UnembeddableError as exc:
        raise UnembeddableError(f"query {query.id!r}: {exc}") from exc
    order = sorted(
        range(len(index.refs)),
        key=lambda r: (
            -scores[r],
            index.refs[r].doc_id,
            index.refs[r].page,
            index.refs[r].index,
        ),
    )
    hits = []
    for r in order[: min(top_k, len(order))]:
        para = corpus.find(index.refs[r].doc_id, index.refs[r].index)
        window = corpus.get_context(para.ref)
        hits.append(
            SearchHit(
                ref=para.ref,
                score=float(scores[r]),
                text=para.text,
                context_prev=window.previous.text if window.previous else None,
                context_next=window.next.text if window.next else None,
                diff=diff_highlight(query.variant_sentence, para.text),
            )
        )
    return hits


def detect_communities(
    index: VectorIndex, threshold: float, min_size: int
) -> list[Community]:
    """Group rows whose cosine to a seed row reaches the threshold.

    Every row's neighbor set (rows with cosine >= threshold, itself
    included) is a candidate; candidates are processed in descending size
    (ties by seed row order) and each row belongs to the first community
    that claims it, so communities are disjoint.
    """
    if not 0.0 < threshold <= 1.0:
        raise ClavError(f"threshold must be in (0, 1], got {threshold}")
    if min_size < 1:
        raise ClavError(f"min_size must be >= 1, got {min_size}")
    n = len(index.refs)
    if n == 0:
        return []
    norms = index.row_norms()
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = index.matrix / safe[:, None]
    sims = np.clip(unit @ unit.T, -1.0, 1.0)
    neighbor_sets = []
    for i in range(n):
        members = set(np.nonzero(sims[i] >= threshold)[0].tolist())
        members.add(i)  # self-similarity is 1 by definition
        if len(members) >= min_size:
            neighbor_sets.append((i, members))
    neighbor_sets.sort(key=lambda c: (-len(c[1]), c[0]))
    claimed: set[int] = set()
    communities = []
    for seed, members in neighbor_sets:
        if seed in claimed:
            continue
        free = sorted(m for m in members if m not in claimed)
        if len(free) < min_size:
            continue
        claimed.update(free)
        communities.append(
            Community([index.refs[m] for m in free], index.refs[seed])
        )
    return communities


# -- query files and result bundles -------------------------------------------


def load_queries(path: str | Path) -> list[Query]:
    """Line-delimited records {id, keyword, sentence, doc?, page?}."""
    path = Path(path)
    queries = []
    seen = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(f"{path}:{lineno}: invalid query record: {exc}") from exc
        try:
            qid = obj["id"]
            keyword = obj["keyword"]
            sentence = obj["sentence"]
        except (KeyError, TypeError) as exc:
            raise IngestError(f"{path}:{lineno}: query needs id/keyword/sentence") from exc
        if qid in seen:
            raise IngestError(f"{path}:{lineno}: duplicate query id {qid!r}")
        seen.add(qid)
        source = None
        if "doc" in obj:
            source = ParagraphRef(obj["doc"], int(obj.get("page", 0)), int(obj.get("para", 0)))
        queries.append(Query(qid, keyword, sentence, source))
    return queries


def _span_payload(span: DiffSpan) -> dict:
    return {"kind": span.kind, "tokens": span.tokens}


def _hit_record(query_id: str, rank: int, hit: SearchHit) -> dict:
    rec = {
        "query_id": query_id,
        "rank": rank,
        "doc": hit.ref.doc_id,
        "page": hit.ref.page,
        "para": hit.ref.index,
        "score": hit.score,
        "text": hit.text,
    }
    if hit.context_prev is not None:
        rec["prev"] = hit.context_prev
    if hit.context_next is not None:
        rec["next"] = hit.context_next
    rec["diff"] = [_span_payload(s) for s in hit.diff]
    return rec


def run_query_set(
    corpus: Corpus,
    index: VectorIndex,
    backend: EmbeddingBackend,
    queries: list[Query],
    norm: Normalizer,
    top_k: int = 20,
    out_path: str | Path | None = None,
) -> list[QueryResult]:
    """Execute every query; per-query errors are recorded and the batch
    continues. Writes the review bundle when out_path is given."""
    results = []
    for query in queries:
        try:
            hits = search(corpus, index, backend, query, norm, top_k)
            results.append(QueryResult(query.id, hits))
        except ClavError as exc:
            results.append(QueryResult(query.id, [], error=str(exc)))
    if out_path is not None:
        write_bundle(results, out_path)
    return results


def write_bundle(results: list[QueryResult], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for result in results:
            if result.error is not None:
                rec = {"query_id": result.query_id, "error": result.error}
                fh.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")) + "\n")
                continue
            for rank, hit in enumerate(result.hits, start=1):
                rec = _hit_record(result.query_id, rank, hit)
                fh.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")) + "\n")
    return path


def read_bundle(path: str | Path) -> list[QueryResult]:
    """Inverse of :func:`write_bundle`; hit order follows the stored ranks."""
    path = Path(path)
    by_id: dict[str, QueryResult] = {}
    order: list[str] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        obj = json.loads(line)
        qid = obj["query_id"]
        if qid not in by_id:
            by_id[qid] = QueryResult(qid)
            order.append(qid)
        if "error" in obj:
            by_id[qid].error = obj["error"]
            continue
        hit = SearchHit(
            ref=ParagraphRef(obj["doc"], obj["page"], obj["para"]),
            score=obj["score"],
            text=obj["text"],
            context_prev=obj.get("prev"),
            context_next=obj.get("next"),
            diff=[DiffSpan(s["kind"], list(s["tokens"])) for s in obj.get("diff", [])],
        )
        result = by_id[qid]
        if obj["rank"] != len(result.hits) + 1:
            raise IngestError(f"{path}:{lineno}: ranks out of order for {qid!r}")
        result.hits.append(hit)
    return [by_id[qid] for qid in order]
