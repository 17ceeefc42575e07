"""Per-page term-frequency matrices for feature configurations.

Each matrix row is one feature configuration, each column one page of a
document; cells count how often any of the configuration's terms occurs
on the page. Ground-truth marks (the page a configuration was derived
from) ride along as a sidecar so a renderer can overlay them.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus
from .errors import ClavError, IngestError
from .textprep import Normalizer, tokenize

TruthMark = tuple[str, int]


@dataclass(frozen=True)
class FeatureConfig:
    """A software feature configuration reduced to its normalized term set."""

    id: str
    name: str
    terms: frozenset[str]

    def __post_init__(self) -> None:
        if not self.terms:
            raise ClavError(f"feature configuration {self.id!r} has no terms")


@dataclass
class TermMatchMatrix:
    config_ids: list[str]
    doc_id: str
    page_count: int
    cells: np.ndarray  # |config_ids| x page_count, non-negative ints
    truth_marks: set[TruthMark] = field(default_factory=set)

    def __post_init__(self) -> None:
        self.cells = np.asarray(self.cells, dtype=np.int64)
        if self.cells.shape != (len(self.config_ids), self.page_count):
            raise ClavError(
                f"matrix shape {self.cells.shape} != "
                f"({len(self.config_ids)}, {self.page_count})"
            )
        if (self.cells < 0).any():
            raise ClavError("negative cell in term-match matrix")
        for config_id, page in self.truth_marks:
            if config_id not in self.config_ids:
                raise ClavError(f"truth mark for unknown config {config_id!r}")
            if not 1 <= page <= self.page_count:
                raise ClavError(f"truth mark page {page} out of range")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TermMatchMatrix):
            return NotImplemented
        return (
            self.config_ids == other.config_ids
            and self.doc_id == other.doc_id
            and self.page_count == other.page_count
            and np.array_equal(self.cells, other.cells)
            and self.truth_marks == other.truth_marks
        )


def extract_terms(config_text: str, norm: Normalizer) -> frozenset[str]:
    """Tokenize + normalize + deduplicate a configuration's text."""
    return frozenset(t.normalized for t in norm.normalize(tokenize(config_text)))


def load_feature_configs(path: str | Path, norm: Normalizer) -> list[FeatureConfig]:
    """Read line-delimited records {id, name, text} into FeatureConfigs."""
    path = Path(path)
    configs = []
    seen = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(f"{path}:{lineno}: invalid config record: {exc}") from exc
        try:
            config_id, name, text = obj["id"], obj["name"], obj["text"]
        except (KeyError, TypeError) as exc:
            raise IngestError(f"{path}:{lineno}: config record needs id/name/text") from exc
        if config_id in seen:
            raise IngestError(f"{path}:{lineno}: duplicate config id {config_id!r}")
        seen.add(config_id)
        terms = extract_terms(text, norm)
        if not terms:
            raise IngestError(f"{path}:{lineno}: config {config_id!r} yields no terms")
        configs.append(FeatureConfig(config_id, name, terms))
    return configs


def match_matrix(
    configs: list[FeatureConfig],
    doc_id: str,
    corpus: Corpus,
    norm: Normalizer,
    truth_marks: set[TruthMark] | None = None,
) -> TermMatchMatrix:
    """Count term occurrences per configuration and page.

    Counts token occurrences, not distinct terms: a term appearing twice
    on a page contributes 2.
    """
    doc = corpus.document(doc_id)
    cells = np.zeros((len(configs), doc.page_count), dtype=np.int64)
    page_tokens: dict[int, list[str]] = {}
    for para in corpus.paragraphs_for(doc_id):
        page_tokens.setdefault(para.ref.page, []).extend(norm.prep(para.text))
    for i, config in enumerate(configs):
        for page, toks in page_tokens.items():
            cells[i, page - 1] = sum(1 for t in toks if t in config.terms)
    return TermMatchMatrix(
        [c.id for c in configs], doc_id, doc.page_count, cells, truth_marks or set()
    )


def emit_heatmap(matrix: TermMatchMatrix, out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``<doc_id>.heatmap.csv`` and ``<doc_id>.truth.json``.

    The CSV has a header row of page numbers and one labeled row per
    configuration; re-reading it reconstructs the matrix exactly.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{matrix.doc_id}.heatmap.csv"
    truth_path = out_dir / f"{matrix.doc_id}.truth.json"
    try:
        with csv_path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["config"] + [str(p) for p in range(1, matrix.page_count + 1)])
            for i, config_id in enumerate(matrix.config_ids):
                writer.writerow([config_id] + [int(v) for v in matrix.cells[i]])
        marks = sorted(matrix.truth_marks)
        truth_payload = {
            "doc": matrix.doc_id,
            "marks": [{"config": c, "page": p} for c, p in marks],
        }
        truth_path.write_text(
            json.dumps(truth_payload, ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )
    except OSError as exc:
        raise ClavError(f"cannot write heatmap output: {exc}") from exc
    return csv_path, truth_path


def read_heatmap(csv_path: str | Path, truth_path: str | Path | None = None) -> TermMatchMatrix:
    """Reconstruct a TermMatchMatrix from emitted files."""
    csv_path = Path(csv_path)
    with csv_path.open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["config"]:
        raise ClavError(f"{csv_path}: not a heatmap CSV")
    pages = [int(p) for p in rows[0][1:]]
    config_ids = [row[0] for row in rows[1:]]
    cells = np.array([[int(v) for v in row[1:]] for row in rows[1:]], dtype=np.int64)
    cells = cells.reshape((len(config_ids), len(pages)))
    doc_id = csv_path.name.removesuffix(".heatmap.csv")
    truth_marks: set[TruthMark] = set()
    if truth_path is not None:
        payload = json.loads(Path(truth_path).read_text(encoding="utf-8"))
        doc_id = payload.get("doc", doc_id)
        truth_marks = {(m["config"], m["page"]) for m in payload.get("marks", [])}
    return TermMatchMatrix(config_ids, doc_id, len(pages), cells, truth_marks)


def load_truth_marks(path: str | Path, doc_id: str | None = None) -> set[TruthMark]:
    """Read user-supplied ground-truth marks: JSON {"marks": [{config, page, doc?}]}.

    When doc_id is given, marks carrying a different doc are dropped.
    """
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    marks = payload["marks"] if isinstance(payload, dict) else payload
    out: set[TruthMark] = set()
    for m in marks:
        if doc_id is not None and m.get("doc") not in (None, doc_id):
            continue
        out.add((m["config"], int(m["page"])))
    return out
