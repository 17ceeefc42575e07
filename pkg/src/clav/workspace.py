"""On-disk workspace: the single root under which every artifact lives.

Layout::

    <root>/
      config.snapshot            effective run configuration
      corpus.plex.jsonl          serialized corpus cache
      heatmaps/<doc>.heatmap.csv + <doc>.truth.json
      models/lda-k<k>.bin, models/pvdbow.bin
      indexes/<backend>.vec
      bundles/<backend>.results.jsonl
      topics/select_k.json, topics/keywords.json
      reports/eval.csv
      judgments.jsonl

Every derived artifact gets a ``.stamp`` sidecar holding the config hash
it was built under; a mismatch marks the artifact stale.
"""

from __future__ import annotations

import json
from pathlib import Path

from .config import RunConfig, save_config
from .corpus import Corpus, load_corpus, save_corpus
from .errors import ClavError, NotFoundError
from . import embed
from .evaluation import JudgmentStore
from .simsearch import QueryResult, read_bundle
from . import topics as topics_mod


def _safe_name(backend_id: str) -> str:
    return backend_id.replace(":", "-")


# Config-key groups per artifact class; downstream groups include their
# upstream dependencies so a change anywhere in the chain marks the
# artifact stale, while unrelated knobs leave it valid.
CORPUS_KEYS = ("min_chars",)
NORM_KEYS = CORPUS_KEYS + (
    "lowercase", "stopwords", "stem", "stem_rules",
    "min_len", "keep_numeric", "lexicon", "lexicon_strict",
)
HEATMAP_KEYS = NORM_KEYS
LDA_KEYS = NORM_KEYS + ("alpha", "beta", "iterations", "seed")
SELECT_K_KEYS = LDA_KEYS + ("k_min", "k_max", "top_n")
KEYWORDS_KEYS = LDA_KEYS + ("top_n", "theta_threshold")
PVDBOW_KEYS = NORM_KEYS + ("dim", "epochs", "negative", "lr0", "min_count", "seed")


def backend_keys(backend_id: str) -> tuple[str, ...]:
    if backend_id == "pvdbow":
        return PVDBOW_KEYS
    if backend_id.startswith("import:"):
        return CORPUS_KEYS
    return NORM_KEYS


def bundle_keys(backend_id: str) -> tuple[str, ...]:
    return backend_keys(backend_id) + ("top_k", "infer_steps")


def community_keys(backend_id: str) -> tuple[str, ...]:
    return backend_keys(backend_id) + ("threshold", "min_size")


class Workspace:
    def __init__(self, root: str | Path, config: RunConfig | None = None) -> None:
        self.root = Path(root)
        self.config = config or RunConfig()

    # -- paths ------------------------------------------------------------

    @property
    def corpus_path(self) -> Path:
        return self.root / "corpus.plex.jsonl"

    @property
    def heatmap_dir(self) -> Path:
        return self.root / "heatmaps"

    @property
    def model_dir(self) -> Path:
        return self.root / "models"

    @property
    def index_dir(self) -> Path:
        return self.root / "indexes"

    @property
    def bundle_dir(self) -> Path:
        return self.root / "bundles"

    @property
    def topics_dir(self) -> Path:
        return self.root / "topics"

    @property
    def report_path(self) -> Path:
        return self.root / "reports" / "eval.csv"

    @property
    def judgment_path(self) -> Path:
        return self.root / "judgments.jsonl"

    @property
    def queries_path(self) -> Path:
        return self.root / "queries.jsonl"

    def pvdbow_path(self) -> Path:
        return self.model_dir / "pvdbow.bin"

    def lda_path(self, k: int) -> Path:
        return self.model_dir / f"lda-k{k}.bin"

    def index_path(self, backend_id: str) -> Path:
        return self.index_dir / f"{_safe_name(backend_id)}.vec"

    def bundle_path(self, backend_id: str) -> Path:
        return self.bundle_dir / f"{_safe_name(backend_id)}.results.jsonl"

    def import_path(self, name: str) -> Path:
        return self.index_dir / f"import-{name}.imported.vec"

    # -- config stamps ------------------------------------------------------

    def initialize(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        save_config(self.config, self.root / "config.snapshot")

    def stamp(self, artifact: Path, keys: tuple[str, ...] | None = None) -> None:
        artifact.with_suffix(artifact.suffix + ".stamp").write_text(
            self.config.config_hash(keys) + "\n", encoding="utf-8"
        )

    def is_stale(self, artifact: Path, keys: tuple[str, ...] | None = None) -> bool:
        stamp = artifact.with_suffix(artifact.suffix + ".stamp")
        if not stamp.exists():
            return False
        return stamp.read_text(encoding="utf-8").strip() != self.config.config_hash(keys)

    def require(
        self, artifact: Path, producer: str, keys: tuple[str, ...] | None = None
    ) -> Path:
        if not artifact.exists():
            raise NotFoundError(
                f"missing artifact {artifact.name}; run `clav {producer}` first"
            )
        if self.is_stale(artifact, keys):
            raise ClavError(
                f"artifact {artifact.name} is stale (config changed); "
                f"re-run `clav {producer}`"
            )
        return artifact

    # -- loaders ------------------------------------------------------------

    def load_corpus(self) -> Corpus:
        self.require(self.corpus_path, "ingest", CORPUS_KEYS)
        return load_corpus(self.corpus_path)

    def store_corpus(self, corpus: Corpus) -> Path:
        path = save_corpus(corpus, self.corpus_path)
        self.stamp(path, CORPUS_KEYS)
        return path

    def load_backend(self, backend_id: str | None = None):
        """Instantiate the configured backend from its on-disk artifacts."""
        backend_id = backend_id or self.config.backend
        corpus = self.load_corpus()
        norm = self.config.normalizer()
        if backend_id == "tfidf":
            corpus_tokens = [norm.prep(p.text) for p in corpus.paragraphs]
            return embed.fit_tfidf(corpus_tokens)
        if backend_id == "pvdbow":
            path = self.require(self.pvdbow_path(), "embed train", PVDBOW_KEYS)
            return embed.load_pvdbow(path)
        if backend_id.startswith("import:"):
            name = backend_id.split(":", 1)[1]
            path = self.require(
                self.import_path(name), f"embed import --name {name}", CORPUS_KEYS
            )
            backend, _ = embed.load_import_backend(path, corpus, name)
            return backend
        raise ClavError(f"unknown backend {backend_id!r}")

    def load_index(self, backend_id: str | None = None) -> embed.VectorIndex:
        backend_id = backend_id or self.config.backend
        corpus = self.load_corpus()
        if backend_id.startswith("import:"):
            name = backend_id.split(":", 1)[1]
            path = self.require(
                self.import_path(name), f"embed import --name {name}", CORPUS_KEYS
            )
            _, index = embed.load_import_backend(path, corpus, name)
            return index
        path = self.require(self.index_path(backend_id), "index", backend_keys(backend_id))
        return embed.load_index(path, backend_id, corpus)

    def load_bundles(self) -> dict[str, list[QueryResult]]:
        bundles = {}
        if self.bundle_dir.exists():
            for path in sorted(self.bundle_dir.glob("*.results.jsonl")):
                backend_id = path.name.removesuffix(".results.jsonl")
                if backend_id.startswith("import-"):
                    backend_id = "import:" + backend_id.removeprefix("import-")
                bundles[backend_id] = read_bundle(path)
        return bundles

    def judgment_store(self) -> JudgmentStore:
        store = JudgmentStore(self.judgment_path)
        for backend_id, results in self.load_bundles().items():
            store.register_bundle(backend_id, results)
        return store

    def list_lda_models(self) -> dict[int, Path]:
        out = {}
        if self.model_dir.exists():
            for path in sorted(self.model_dir.glob("lda-k*.bin")):
                try:
                    k = int(path.stem.removeprefix("lda-k"))
                except ValueError:
                    continue
                out[k] = path
        return out

    def load_lda(self, k: int) -> topics_mod.TopicModel:
        path = self.require(self.lda_path(k), f"topics fit --k {k}", LDA_KEYS)
        return topics_mod.load_model(path)

    def write_json(
        self, path: Path, payload: object, keys: tuple[str, ...] | None = None
    ) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        self.stamp(path, keys)
        return path
