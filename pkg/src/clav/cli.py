"""Command-line driver for the full pipeline.

Every subcommand delegates to the module of the same concern and writes
its artifacts under the workspace. Exit codes: 0 success, 1 usage error,
2 data error. All randomized commands accept --seed and reproduce
bit-identical artifacts for identical config + seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import embed, simsearch, termmatch, topics
from .config import RunConfig, load_config
from .corpus import IngestOptions, ingest_corpus
from .errors import ClavError
from .evaluation import compile_report, format_map, report_from_aps, write_report_csv
from .workspace import (
    HEATMAP_KEYS,
    KEYWORDS_KEYS,
    LDA_KEYS,
    PVDBOW_KEYS,
    SELECT_K_KEYS,
    Workspace,
    backend_keys,
    bundle_keys,
    community_keys,
)

DEFAULT_WORKSPACE = "./clav-workspace"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="clav", description=__doc__)
    parser.add_argument(
        "--workspace", "-w",
        default=None,
        help=f"workspace root (env CLAV_WORKSPACE, default {DEFAULT_WORKSPACE})",
    )
    parser.add_argument("--config", default=None, help="flat key=value config file")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest a corpus directory or record file")
    p.add_argument("source")
    p.add_argument("--min-chars", type=int, default=None)

    p = sub.add_parser("heatmap", help="term-match heatmap per document")
    p.add_argument("--configs", required=True, help="feature config records (jsonl)")
    p.add_argument("--doc", default=None, help="document id (default: all)")
    p.add_argument("--truth", default=None, help="ground-truth marks (json)")

    p = sub.add_parser("topics", help="LDA topic modeling")
    tsub = p.add_subparsers(dest="topics_command", required=True)
    t = tsub.add_parser("fit", help="fit one model")
    t.add_argument("--k", type=int, default=None)
    t.add_argument("--alpha", type=float, default=None)
    t.add_argument("--beta", type=float, default=None)
    t.add_argument("--iterations", type=int, default=None)
    t = tsub.add_parser("select-k", help="pick k by mean coherence")
    t.add_argument("--min", type=int, default=None, dest="k_min")
    t.add_argument("--max", type=int, default=None, dest="k_max")
    t.add_argument("--alpha", type=float, default=None)
    t.add_argument("--beta", type=float, default=None)
    t.add_argument("--iterations", type=int, default=None)
    t.add_argument("--top-n", type=int, default=None)
    t = tsub.add_parser("keywords", help="locate keywords in topics/documents")
    t.add_argument("--file", required=True, help="one keyword per line")
    t.add_argument("--k", type=int, default=None, help="which fitted model")
    t.add_argument("--top-n", type=int, default=None)
    t.add_argument("--theta-threshold", type=float, default=None)

    p = sub.add_parser("embed", help="embedding backends")
    esub = p.add_subparsers(dest="embed_command", required=True)
    e = esub.add_parser("train", help="train paragraph vectors")
    e.add_argument("--dim", type=int, default=None)
    e.add_argument("--epochs", type=int, default=None)
    e.add_argument("--negative", type=int, default=None)
    e.add_argument("--lr0", type=float, default=None)
    e.add_argument("--min-count", type=int, default=None)
    e = esub.add_parser("import", help="register externally computed vectors")
    e.add_argument("file")
    e.add_argument("--name", default=None, help="backend name (default: file stem)")

    p = sub.add_parser("index", help="build the paragraph vector index")
    p.add_argument("--backend", default=None)

    p = sub.add_parser("search", help="run a query set against the index")
    p.add_argument("--queries", required=True)
    p.add_argument("--backend", default=None)
    p.add_argument("--top-k", type=int, default=None)

    p = sub.add_parser("communities", help="near-duplicate paragraph groups")
    p.add_argument("--backend", default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--min-size", type=int, default=None)

    p = sub.add_parser("eval", help="relevance evaluation")
    vsub = p.add_subparsers(dest="eval_command", required=True)
    v = vsub.add_parser("report", help="AP per query, MAP per backend")
    v.add_argument(
        "--aps", default=None,
        help="precomputed APs (jsonl {backend, query, ap}) instead of judgments",
    )

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--bind", default="127.0.0.1:8000")
    p.add_argument("--ui", default=None, help="static UI bundle directory")

    return parser


def _resolve_workspace(args: argparse.Namespace) -> Workspace:
    root = args.workspace or os.environ.get("CLAV_WORKSPACE") or DEFAULT_WORKSPACE
    config = load_config(args.config)
    overrides = {
        "seed": args.seed,
        "min_chars": getattr(args, "min_chars", None),
        "alpha": getattr(args, "alpha", None),
        "beta": getattr(args, "beta", None),
        "iterations": getattr(args, "iterations", None),
        "k": getattr(args, "k", None),
        "k_min": getattr(args, "k_min", None),
        "k_max": getattr(args, "k_max", None),
        "top_n": getattr(args, "top_n", None),
        "theta_threshold": getattr(args, "theta_threshold", None),
        "dim": getattr(args, "dim", None),
        "epochs": getattr(args, "epochs", None),
        "negative": getattr(args, "negative", None),
        "lr0": getattr(args, "lr0", None),
        "min_count": getattr(args, "min_count", None),
        "backend": getattr(args, "backend", None),
        "top_k": getattr(args, "top_k", None),
        "threshold": getattr(args, "threshold", None),
        "min_size": getattr(args, "min_size", None),
    }
    for name, value in overrides.items():
        if value is not None:
            setattr(config, name, value)
    workspace = Workspace(root, config)
    workspace.initialize()
    return workspace


def _doc_tokens(workspace: Workspace) -> list[list[str]]:
    """Normalized tokens concatenated per document (topic-model units)."""
    corpus = workspace.load_corpus()
    norm = workspace.config.normalizer()
    per_doc: dict[str, list[str]] = {d.id: [] for d in corpus.documents}
    for para in corpus.paragraphs:
        per_doc[para.ref.doc_id].extend(norm.prep(para.text))
    return [per_doc[d.id] for d in corpus.documents]


def _paragraph_tokens(workspace: Workspace) -> list[list[str]]:
    corpus = workspace.load_corpus()
    norm = workspace.config.normalizer()
    return [norm.prep(p.text) for p in corpus.paragraphs]


# -- command implementations -------------------------------------------------


def _cmd_ingest(workspace: Workspace, args: argparse.Namespace) -> int:
    corpus = ingest_corpus(
        args.source, IngestOptions(min_chars=workspace.config.min_chars)
    )
    workspace.store_corpus(corpus)
    stats = corpus.stats()
    print(
        f"ingested {stats['documents']} documents, {stats['paragraphs']} paragraphs, "
        f"{stats['pages']} pages -> {workspace.corpus_path}"
    )
    return 0


def _cmd_heatmap(workspace: Workspace, args: argparse.Namespace) -> int:
    corpus = workspace.load_corpus()
    norm = workspace.config.normalizer()
    configs = termmatch.load_feature_configs(args.configs, norm)
    doc_ids = [args.doc] if args.doc else [d.id for d in corpus.documents]
    for doc_id in doc_ids:
        doc_truth = (
            termmatch.load_truth_marks(args.truth, doc_id) if args.truth else set()
        )
        matrix = termmatch.match_matrix(configs, doc_id, corpus, norm, doc_truth)
        csv_path, truth_path = termmatch.emit_heatmap(matrix, workspace.heatmap_dir)
        workspace.stamp(csv_path, HEATMAP_KEYS)
        print(f"wrote {csv_path} and {truth_path}")
    return 0


def _cmd_topics(workspace: Workspace, args: argparse.Namespace) -> int:
    cfg = workspace.config
    alpha = cfg.alpha if cfg.alpha > 0 else None
    if args.topics_command == "fit":
        doc_tokens = _doc_tokens(workspace)
        model = topics.fit_lda(
            doc_tokens, cfg.k, alpha=alpha, beta=cfg.beta,
            iterations=cfg.iterations, seed=cfg.seed,
        )
        path = topics.save_model(model, workspace.lda_path(cfg.k))
        workspace.stamp(path, LDA_KEYS)
        report = topics.coherence(model, doc_tokens, cfg.top_n)
        print(f"fitted k={cfg.k} ({cfg.iterations} sweeps) -> {path}")
        print(f"mean coherence (top {report.top_n}): {report.mean:.4f}")
        return 0
    if args.topics_command == "select-k":
        doc_tokens = _doc_tokens(workspace)
        best_k, scores = topics.select_k(
            doc_tokens, cfg.k_min, cfg.k_max, alpha=alpha, beta=cfg.beta,
            iterations=cfg.iterations, seed=cfg.seed, top_n=cfg.top_n,
        )
        for k, mean in scores:
            print(f"k={k} mean_coherence={mean:.6f}")
        print(f"best_k={best_k}")
        workspace.write_json(
            workspace.topics_dir / "select_k.json",
            {"best_k": best_k, "scores": [{"k": k, "mean": m} for k, m in scores]},
            SELECT_K_KEYS,
        )
        return 0
    # keywords
    model = workspace.load_lda(args.k or cfg.k)
    keywords = topics.load_keywords(args.file)
    corpus = workspace.load_corpus()
    locations = topics.locate_keywords(
        model, keywords, top_n=cfg.top_n, theta_threshold=cfg.theta_threshold
    )
    doc_ids = [d.id for d in corpus.documents]
    payload = []
    for loc in locations:
        payload.append({
            "keyword": loc.keyword,
            "out_of_vocabulary": loc.out_of_vocabulary,
            "topics": loc.topics,
            "documents": [doc_ids[d] for d in loc.documents],
        })
        status = "OOV" if loc.out_of_vocabulary else (
            f"topics {loc.topics} in {len(loc.documents)} documents"
        )
        print(f"{loc.keyword}: {status}")
    workspace.write_json(workspace.topics_dir / "keywords.json", payload, KEYWORDS_KEYS)
    return 0


def _cmd_embed(workspace: Workspace, args: argparse.Namespace) -> int:
    cfg = workspace.config
    if args.embed_command == "train":
        backend = embed.train_pvdbow(
            _paragraph_tokens(workspace),
            dim=cfg.dim, epochs=cfg.epochs, negative=cfg.negative,
            lr0=cfg.lr0, min_count=cfg.min_count, seed=cfg.seed,
        )
        path = embed.save_pvdbow(backend, workspace.pvdbow_path())
        workspace.stamp(path, PVDBOW_KEYS)
        print(
            f"trained pvdbow dim={cfg.dim} epochs={cfg.epochs} "
            f"(final epoch loss {backend.epoch_losses[-1]:.4f}) -> {path}"
        )
        return 0
    # import
    corpus = workspace.load_corpus()
    name = args.name or Path(args.file).stem
    backend, index = embed.load_import_backend(args.file, corpus, name)
    dest = workspace.import_path(name)
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_bytes(Path(args.file).read_bytes())
    workspace.stamp(dest, ("min_chars",))
    print(
        f"imported {len(index.refs)} paragraph vectors "
        f"({len(backend.vectors) - len(index.refs) - len(index.skipped)} queries, "
        f"{len(index.skipped)} unresolved) as backend {backend.backend_id}"
    )
    return 0


def _cmd_index(workspace: Workspace, args: argparse.Namespace) -> int:
    cfg = workspace.config
    if cfg.backend.startswith("import:"):
        raise ClavError("import backends come with their index; nothing to build")
    corpus = workspace.load_corpus()
    backend = workspace.load_backend(cfg.backend)
    index = embed.build_index(corpus, backend, cfg.normalizer())
    path = embed.save_index(index, workspace.index_path(cfg.backend))
    workspace.stamp(path, backend_keys(cfg.backend))
    print(
        f"indexed {len(index.refs)} paragraphs under {cfg.backend} "
        f"({len(index.skipped)} skipped) -> {path}"
    )
    return 0


def _cmd_search(workspace: Workspace, args: argparse.Namespace) -> int:
    cfg = workspace.config
    corpus = workspace.load_corpus()
    backend = workspace.load_backend(cfg.backend)
    index = workspace.load_index(cfg.backend)
    queries = simsearch.load_queries(args.queries)
    out_path = workspace.bundle_path(cfg.backend)
    results = simsearch.run_query_set(
        corpus, index, backend, queries, cfg.normalizer(),
        top_k=cfg.top_k, out_path=out_path,
    )
    workspace.stamp(out_path, bundle_keys(cfg.backend))
    # keep the query set for the service's /api/queries
    workspace.queries_path.write_bytes(Path(args.queries).read_bytes())
    errors = [r for r in results if r.error is not None]
    print(f"ran {len(results)} queries ({len(errors)} errors) -> {out_path}")
    for result in errors:
        print(f"  {result.query_id}: {result.error}")
    return 0


def _cmd_communities(workspace: Workspace, args: argparse.Namespace) -> int:
    cfg = workspace.config
    index = workspace.load_index(cfg.backend)
    communities = simsearch.detect_communities(index, cfg.threshold, cfg.min_size)
    payload = []
    for i, community in enumerate(communities):
        members = [
            {"doc": r.doc_id, "page": r.page, "para": r.index}
            for r in community.members
        ]
        payload.append({
            "centroid": {
                "doc": community.centroid_ref.doc_id,
                "page": community.centroid_ref.page,
                "para": community.centroid_ref.index,
            },
            "members": members,
        })
        print(f"community {i}: {len(members)} paragraphs, "
              f"seed {community.centroid_ref.doc_id}:{community.centroid_ref.index}")
    workspace.write_json(
        workspace.topics_dir / "communities.json", payload, community_keys(cfg.backend)
    )
    return 0


def _cmd_eval(workspace: Workspace, args: argparse.Namespace) -> int:
    if args.aps:
        by_backend: dict[str, list[tuple[str, float]]] = {}
        for lineno, line in enumerate(
            Path(args.aps).read_text(encoding="utf-8").splitlines(), 1
        ):
            if not line.strip():
                continue
            obj = json.loads(line)
            by_backend.setdefault(obj["backend"], []).append(
                (obj["query"], float(obj["ap"]))
            )
        report = report_from_aps(by_backend)
    else:
        report = compile_report(workspace.judgment_store())
    path = write_report_csv(report, workspace.report_path)
    workspace.stamp(path, ())
    for query_id, backend_id, ap in report.rows:
        print(f"{query_id},{backend_id},{ap!r}")
    for backend_id, value in sorted(report.map_per_backend.items()):
        print(f"MAP,{backend_id},{format_map(value)}")
    print(f"wrote {path}")
    return 0


def _cmd_serve(workspace: Workspace, args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    host, _, port = args.bind.rpartition(":")
    app = create_app(workspace, ui_dir=args.ui)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "heatmap": _cmd_heatmap,
    "topics": _cmd_topics,
    "embed": _cmd_embed,
    "index": _cmd_index,
    "search": _cmd_search,
    "communities": _cmd_communities,
    "eval": _cmd_eval,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse --help (0) or usage error (1)
        return int(exc.code or 0)
    try:
        workspace = _resolve_workspace(args)
        return _COMMANDS[args.command](workspace, args)
    except ClavError as exc:
        print(f"clav: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
