"""clav: traceability toolkit for collective-labour-agreement corpora.

Locates, ranks, and presents semantically similar passages across paged
contract documents; supports topic-level exploration, term-match
heatmaps, and retrieval-quality evaluation against analyst judgments.
"""

from .corpus import (
    ContextWindow,
    Corpus,
    Document,
    IngestOptions,
    Paragraph,
    ParagraphRef,
    get_context,
    ingest_corpus,
    load_corpus,
    save_corpus,
)
from .embed import (
    EmbeddingBackend,
    ImportBackend,
    PvDbowBackend,
    TfidfBackend,
    VectorIndex,
    build_index,
    cosine,
    fit_tfidf,
    infer_vector,
    load_import_backend,
    train_pvdbow,
)
from .errors import (
    ClavError,
    ConfigError,
    FormatError,
    IngestError,
    NotFoundError,
    UnembeddableError,
)
from .evaluation import (
    EvalReport,
    JudgmentStore,
    average_precision,
    compile_report,
    mean_average_precision,
    record_judgment,
)
from .simsearch import (
    Community,
    DiffSpan,
    Query,
    SearchHit,
    detect_communities,
    diff_highlight,
    run_query_set,
    search,
)
from .termmatch import (
    FeatureConfig,
    TermMatchMatrix,
    emit_heatmap,
    extract_terms,
    match_matrix,
    read_heatmap,
)
from .textprep import NormalizationConfig, Normalizer, Token, content_filter, normalize, tokenize
from .topics import (
    CoherenceReport,
    TopicModel,
    coherence,
    fit_lda,
    locate_keywords,
    select_k,
    top_terms,
)

__version__ = "0.1.0"
