"""Paged plain-text ingestion into an addressable paragraph store.

Two source layouts are supported:

* a directory of UTF-8 ``*.txt`` files, form-feed (0x0C) page breaks,
  one-or-more blank lines between paragraphs;
* a line-delimited record file (``*.plex.jsonl``) with one JSON object
  per line: ``{"doc": str, "page": int >= 1, "para": int >= 0, "text": str}``.

A serialized corpus cache is the record format preceded by a header line
carrying a checksum and the document table, so ingest -> save -> ingest is
an exact round trip.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import IngestError, NotFoundError

CACHE_FORMAT = "clav-corpus"
CACHE_VERSION = 1


@dataclass(frozen=True)
class ParagraphRef:
    """Stable provenance of one paragraph: document, 1-based page, 0-based index."""

    doc_id: str
    page: int
    index: int

    def key(self) -> str:
        return f"{self.doc_id}:{self.index}"


@dataclass(frozen=True)
class Paragraph:
    ref: ParagraphRef
    text: str


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    page_count: int


@dataclass(frozen=True)
class ContextWindow:
    previous: Paragraph | None
    target: Paragraph
    next: Paragraph | None


@dataclass
class IngestOptions:
    min_chars: int = 20


@dataclass
class Corpus:
    """Immutable paragraph store; iteration order is (doc_id, index)."""

    documents: list[Document]
    paragraphs: list[Paragraph]
    _positions: dict[tuple[str, int], int] = field(
        init=False, repr=False, compare=False
    )
    _documents_by_id: dict[str, Document] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.documents = sorted(self.documents, key=lambda d: d.id)
        self.paragraphs = sorted(
            self.paragraphs, key=lambda p: (p.ref.doc_id, p.ref.index)
        )
        self._documents_by_id = {d.id: d for d in self.documents}
        if len(self._documents_by_id) != len(self.documents):
            raise IngestError("duplicate document id in corpus")
        self._positions = {}
        for pos, para in enumerate(self.paragraphs):
            key = (para.ref.doc_id, para.ref.index)
            if key in self._positions:
                raise IngestError(f"duplicate paragraph key {key}")
            self._positions[key] = pos
        self._validate()

    def _validate(self) -> None:
        last: dict[str, tuple[int, int]] = {}
        for para in self.paragraphs:
            ref = para.ref
            doc = self._documents_by_id.get(ref.doc_id)
            if doc is None:
                raise IngestError(f"paragraph references unknown document {ref.doc_id}")
            if not 1 <= ref.page <= doc.page_count:
                raise IngestError(
                    f"paragraph {ref} outside page range 1..{doc.page_count}"
                )
            if not para.text.strip():
                raise IngestError(f"empty paragraph text at {ref}")
            if "\x0c" in para.text:
                raise IngestError(f"page-break character inside paragraph {ref}")
            prev = last.get(ref.doc_id)
            if prev is not None and ref.page < prev[1]:
                raise IngestError(
                    f"paragraph index order inconsistent with page order in {ref.doc_id}"
                )
            last[ref.doc_id] = (ref.index, ref.page)

    # -- lookups ----------------------------------------------------------

    def document(self, doc_id: str) -> Document:
        doc = self._documents_by_id.get(doc_id)
        if doc is None:
            raise NotFoundError(f"unknown document {doc_id!r}")
        return doc

    def resolve(self, ref: ParagraphRef) -> Paragraph:
        pos = self._positions.get((ref.doc_id, ref.index))
        if pos is None:
            raise NotFoundError(f"paragraph {ref.doc_id}:{ref.index} not in corpus")
        return self.paragraphs[pos]

    def find(self, doc_id: str, index: int) -> Paragraph:
        return self.resolve(ParagraphRef(doc_id, 0, index))

    def get_context(self, ref: ParagraphRef) -> ContextWindow:
        """The paragraph plus its neighbors in the same document.

        Context may cross page boundaries but never document boundaries.
        """
        pos = self._positions.get((ref.doc_id, ref.index))
        if pos is None:
            raise NotFoundError(f"paragraph {ref.doc_id}:{ref.index} not in corpus")
        target = self.paragraphs[pos]
        previous = self.paragraphs[pos - 1] if pos > 0 else None
        if previous is not None and previous.ref.doc_id != ref.doc_id:
            previous = None
        nxt = self.paragraphs[pos + 1] if pos + 1 < len(self.paragraphs) else None
        if nxt is not None and nxt.ref.doc_id != ref.doc_id:
            nxt = None
        return ContextWindow(previous, target, nxt)

    def paragraphs_for(self, doc_id: str, page: int | None = None) -> list[Paragraph]:
        self.document(doc_id)
        out = [p for p in self.paragraphs if p.ref.doc_id == doc_id]
        if page is not None:
            out = [p for p in out if p.ref.page == page]
        return out

    def stats(self) -> dict[str, int]:
        return {
            "documents": len(self.documents),
            "paragraphs": len(self.paragraphs),
            "pages": sum(d.page_count for d in self.documents),
        }


def get_context(corpus: Corpus, ref: ParagraphRef) -> ContextWindow:
    """Functional alias for :meth:`Corpus.get_context`."""
    return corpus.get_context(ref)


# -- directory ingestion ---------------------------------------------------


def _split_pages(raw: str) -> list[str]:
    pages = raw.split("\x0c")
    # A trailing form-feed is a page terminator (pdftotext convention),
    # not an extra blank page.
    if len(pages) > 1 and pages[-1] == "":
        pages.pop()
    return pages


def _split_paragraph_blocks(page_text: str) -> list[str]:
    blocks: list[str] = []
    current: list[str] = []
    for line in page_text.splitlines():
        if line.strip():
            current.append(line)
        elif current:
            blocks.append("\n".join(current).strip())
            current = []
    if current:
        blocks.append("\n".join(current).strip())
    return [b for b in blocks if b]


def _ingest_text_file(path: Path, options: IngestOptions) -> tuple[Document, list[Paragraph]]:
    try:
        raw = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    doc_id = path.stem
    pages = _split_pages(raw)
    paragraphs: list[Paragraph] = []
    index = 0
    for page_no, page_text in enumerate(pages, start=1):
        for block in _split_paragraph_blocks(page_text):
            if len(block) < options.min_chars:
                continue
            paragraphs.append(Paragraph(ParagraphRef(doc_id, page_no, index), block))
            index += 1
    return Document(doc_id, doc_id, max(1, len(pages))), paragraphs


# -- record ingestion ------------------------------------------------------


def _parse_record(line: str, lineno: int, source: str) -> tuple[str, int, int, str]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise IngestError(f"{source}:{lineno}: invalid record: {exc}") from exc
    if not isinstance(obj, dict):
        raise IngestError(f"{source}:{lineno}: record is not an object")
    try:
        doc = obj["doc"]
        page = obj["page"]
        para = obj["para"]
        text = obj["text"]
    except KeyError as exc:
        raise IngestError(f"{source}:{lineno}: missing field {exc}") from exc
    if not isinstance(doc, str) or not doc:
        raise IngestError(f"{source}:{lineno}: doc must be a non-empty string")
    if not isinstance(page, int) or page < 1:
        raise IngestError(f"{source}:{lineno}: page must be an integer >= 1")
    if not isinstance(para, int) or para < 0:
        raise IngestError(f"{source}:{lineno}: para must be an integer >= 0")
    if not isinstance(text, str):
        raise IngestError(f"{source}:{lineno}: text must be a string")
    return doc, page, para, text


def _ingest_record_file(path: Path, options: IngestOptions) -> Corpus:
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc

    header_docs: list[Document] | None = None
    start = 0
    if lines:
        try:
            first = json.loads(lines[0])
        except json.JSONDecodeError:
            first = None
        if isinstance(first, dict) and first.get("format") == CACHE_FORMAT:
            start = 1
            body = "\n".join(lines[1:])
            if lines[1:]:
                body += "\n"
            checksum = hashlib.sha256(body.encode("utf-8")).hexdigest()
            if first.get("checksum") != checksum:
                raise IngestError(f"{path}: corpus cache checksum mismatch")
            header_docs = [
                Document(d["id"], d["title"], d["page_count"])
                for d in first.get("documents", [])
            ]

    paragraphs: list[Paragraph] = []
    max_page: dict[str, int] = {}
    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        doc, page, para, text = _parse_record(line, lineno, str(path))
        text = text.strip()
        if len(text) < options.min_chars or not text:
            continue
        paragraphs.append(Paragraph(ParagraphRef(doc, page, para), text))
        max_page[doc] = max(max_page.get(doc, 1), page)

    if header_docs is not None:
        documents = header_docs
    else:
        documents = [Document(doc, doc, pages) for doc, pages in max_page.items()]
    return Corpus(documents, paragraphs)


def ingest_corpus(source: str | Path, options: IngestOptions | None = None) -> Corpus:
    """Build a Corpus from a directory of paged text files or a record file."""
    options = options or IngestOptions()
    source = Path(source)
    if source.is_dir():
        documents: list[Document] = []
        paragraphs: list[Paragraph] = []
        seen: set[str] = set()
        for path in sorted(source.glob("*.txt")):
            doc, paras = _ingest_text_file(path, options)
            if doc.id in seen:
                raise IngestError(f"duplicate document id {doc.id!r}")
            seen.add(doc.id)
            documents.append(doc)
            paragraphs.extend(paras)
        return Corpus(documents, paragraphs)
    if source.is_file():
        return _ingest_record_file(source, options)
    raise IngestError(f"source {source} does not exist")


# -- serialization ---------------------------------------------------------


def _record_lines(corpus: Corpus) -> list[str]:
    lines = []
    for para in corpus.paragraphs:
        rec = {
            "doc": para.ref.doc_id,
            "page": para.ref.page,
            "para": para.ref.index,
            "text": para.text,
        }
        lines.append(json.dumps(rec, ensure_ascii=False, separators=(",", ":")))
    return lines


def save_corpus(corpus: Corpus, path: str | Path) -> Path:
    """Write the corpus cache: header line (checksum + documents) + records."""
    path = Path(path)
    lines = _record_lines(corpus)
    body = "\n".join(lines)
    if lines:
        body += "\n"
    header = {
        "format": CACHE_FORMAT,
        "version": CACHE_VERSION,
        "checksum": hashlib.sha256(body.encode("utf-8")).hexdigest(),
        "documents": [
            {"id": d.id, "title": d.title, "page_count": d.page_count}
            for d in corpus.documents
        ],
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, ensure_ascii=False, separators=(",", ":")) + "\n")
        fh.write(body)
    return path


def load_corpus(path: str | Path) -> Corpus:
    """Read back a corpus cache; paragraphs are kept regardless of length."""
    return ingest_corpus(Path(path), IngestOptions(min_chars=1))
