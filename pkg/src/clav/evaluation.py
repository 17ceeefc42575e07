"""Relevance judgments and average-precision summaries.

Judgments are appended to a durable line-delimited log; the latest
judgment per (query, backend, rank) wins. Compilation truncates each
ranked list at the last judged rank (the judged-prefix rule) and treats
unjudged ranks inside that prefix as non-relevant. AP normalizes by the
number of relevant hits within the judged list.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import ClavError, IngestError, NotFoundError
from .simsearch import QueryResult


def average_precision(flags: list[bool]) -> float:
    """Mean of precision@k over the relevant ranks; 0 when nothing is relevant."""
    relevant = sum(1 for f in flags if f)
    if relevant == 0:
        return 0.0
    hits = 0
    total = 0.0
    for k, flag in enumerate(flags, start=1):
        if flag:
            hits += 1
            total += hits / k
    return total / relevant


def mean_average_precision(aps: list[float]) -> float:
    if not aps:
        raise ClavError("cannot average an empty AP list")
    return math.fsum(aps) / len(aps)


@dataclass
class EvalReport:
    rows: list[tuple[str, str, float]]  # (query_id, backend_id, ap)
    map_per_backend: dict[str, float]


@dataclass
class JudgedRun:
    query_id: str
    backend_id: str
    flags: list[bool]


class JudgmentStore:
    """Append-only judgment log bound to the result bundles it judges.

    Bundles register the valid (query_id, rank) keys per backend; a
    judgment for an unknown key is rejected. Acknowledged judgments are
    flushed to disk immediately and survive restarts.
    """

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._known: dict[tuple[str, str], int] = {}  # (backend, query) -> hit count
        self._entries: list[dict] = []
        if self.path.exists():
            for lineno, line in enumerate(
                self.path.read_text(encoding="utf-8").splitlines(), 1
            ):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise IngestError(f"{self.path}:{lineno}: bad judgment: {exc}") from exc
                self._entries.append(obj)

    def register_bundle(self, backend_id: str, results: list[QueryResult]) -> None:
        for result in results:
            if result.error is None:
                self._known[(backend_id, result.query_id)] = len(result.hits)

    def record(
        self, query_id: str, backend_id: str, rank: int, relevant: bool
    ) -> None:
        limit = self._known.get((backend_id, query_id))
        if limit is None:
            raise NotFoundError(
                f"no result bundle for query {query_id!r} / backend {backend_id!r}"
            )
        if not 1 <= rank <= limit:
            raise NotFoundError(
                f"rank {rank} outside 1..{limit} for query {query_id!r}"
            )
        entry = {
            "ts": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "query_id": query_id,
            "backend_id": backend_id,
            "rank": rank,
            "relevant": bool(relevant),
        }
        self._entries.append(entry)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False, separators=(",", ":")) + "\n")
            fh.flush()

    def compile_runs(self) -> list[JudgedRun]:
        """Fold the log into one flag list per (query, backend); last
        judgment per rank wins, lists end at the last judged rank."""
        latest: dict[tuple[str, str], dict[int, bool]] = {}
        order: list[tuple[str, str]] = []
        for entry in self._entries:
            key = (entry["query_id"], entry["backend_id"])
            if key not in latest:
                latest[key] = {}
                order.append(key)
            latest[key][int(entry["rank"])] = bool(entry["relevant"])
        runs = []
        for query_id, backend_id in sorted(order):
            by_rank = latest[(query_id, backend_id)]
            max_rank = max(by_rank)
            flags = [by_rank.get(r, False) for r in range(1, max_rank + 1)]
            runs.append(JudgedRun(query_id, backend_id, flags))
        return runs


def record_judgment(
    store: JudgmentStore, query_id: str, backend_id: str, rank: int, relevant: bool
) -> JudgmentStore:
    """Functional wrapper around :meth:`JudgmentStore.record`."""
    store.record(query_id, backend_id, rank, relevant)
    return store


def compile_report(store: JudgmentStore) -> EvalReport:
    """AP per (query, backend) and MAP per backend, ordered by query then
    backend, matching the published comparison-table layout."""
    rows = []
    per_backend: dict[str, list[float]] = {}
    for run in store.compile_runs():
        ap = average_precision(run.flags)
        rows.append((run.query_id, run.backend_id, ap))
        per_backend.setdefault(run.backend_id, []).append(ap)
    rows.sort(key=lambda r: (r[0], r[1]))
    map_per_backend = {
        backend: mean_average_precision(aps)
        for backend, aps in sorted(per_backend.items())
    }
    return EvalReport(rows, map_per_backend)


def report_from_aps(aps: dict[str, list[tuple[str, float]]]) -> EvalReport:
    """Build a report from precomputed APs: {backend: [(query_id, ap)]}.

    Supports evaluation-arithmetic reproduction when only the AP column of
    a published table is available, not the underlying flags.
    """
    rows = []
    map_per_backend = {}
    for backend_id, pairs in sorted(aps.items()):
        for query_id, ap in pairs:
            if not 0.0 <= ap <= 1.0:
                raise ClavError(f"AP {ap} for {query_id!r} outside [0, 1]")
            rows.append((query_id, backend_id, float(ap)))
        map_per_backend[backend_id] = mean_average_precision([ap for _, ap in pairs])
    rows.sort(key=lambda r: (r[0], r[1]))
    return EvalReport(rows, map_per_backend)


def format_map(value: float) -> str:
    """MAP rendered at 12 significant digits, matching table-print style."""
    return f"{value:.12g}"


def write_report_csv(report: EvalReport, path: str | Path) -> Path:
    """CSV of query_id,backend_id,ap rows plus one MAP footer row per
    backend. AP rows use exact repr; MAP footers are display-rounded to 12
    significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["query_id,backend_id,ap"]
    for query_id, backend_id, ap in report.rows:
        lines.append(f"{query_id},{backend_id},{ap!r}")
    for backend_id, value in sorted(report.map_per_backend.items()):
        lines.append(f"MAP,{backend_id},{format_map(value)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_report_csv(path: str | Path) -> EvalReport:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "query_id,backend_id,ap":
        raise IngestError(f"{path}: not an evaluation report")
    rows = []
    map_per_backend = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        query_id, backend_id, value = line.split(",", 2)
        if query_id == "MAP":
            map_per_backend[backend_id] = float(value)
        else:
            rows.append((query_id, backend_id, float(value)))
    return EvalReport(rows, map_per_backend)
