"""Paragraph embeddings behind one interface, three backends.

* ``tfidf`` — deterministic bag-of-words baseline; idf(w) = ln((1+D)/(1+df)) + 1,
  vectors L2-normalized.
* ``pvdbow`` — paragraph vectors trained with negative sampling: each step
  samples a paragraph and one of its tokens, pushes the paragraph vector
  toward that token's output vector (target 1) and away from noise tokens
  drawn from the unigram^0.75 distribution (target 0).
* ``import:<name>`` — externally computed vectors (e.g. transformer
  sentence embeddings) served verbatim from a binary file.

All backends produce float64 vectors internally; the binary boundary
format stores float32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus, ParagraphRef
from .errors import ClavError, FormatError, UnembeddableError
from .textprep import Normalizer

TokenLists = list[list[str]]

IMPORT_MAGIC = b"CLAV"
IMPORT_VERSION = 1


def sigmoid(x: np.ndarray | float) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """dot(u, v) / (|u||v|), clamped to [-1, 1] against rounding."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ClavError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ClavError("cosine similarity undefined for a zero vector")
    return float(np.clip(float(u @ v) / (nu * nv), -1.0, 1.0))


# -- vector index ------------------------------------------------------------


@dataclass(eq=False)
class VectorIndex:
    """Paragraph vectors row-aligned with their provenance refs."""

    refs: list[ParagraphRef]
    matrix: np.ndarray  # |refs| x dim, float64
    backend_id: str
    skipped: list[ParagraphRef] = field(default_factory=list)
    _norms: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.refs):
            raise ClavError(
                f"index matrix shape {self.matrix.shape} does not match "
                f"{len(self.refs)} refs"
            )
        if not np.isfinite(self.matrix).all():
            raise ClavError("non-finite value in index matrix")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def row_norms(self) -> np.ndarray:
        if self._norms is None:
            self._norms = np.linalg.norm(self.matrix, axis=1)
        return self._norms

    def cosines(self, query: np.ndarray) -> np.ndarray:
        qnorm = float(np.linalg.norm(query))
        if qnorm == 0.0:
            raise UnembeddableError("query vector is all zeros")
        norms = self.row_norms()
        safe = np.where(norms == 0.0, 1.0, norms)
        return np.clip((self.matrix @ query) / (safe * qnorm), -1.0, 1.0)


# -- backend interface -------------------------------------------------------


class EmbeddingBackend:
    """Common surface over the three vectorization strategies."""

    backend_id: str = ""
    dim: int = 0
    normalized: bool = False  # True when embed output is L2-normalized

    def embed_tokens(self, tokens: list[str]) -> np.ndarray:
        raise NotImplementedError

    def query_vector(self, query_id: str, tokens: list[str]) -> np.ndarray:
        """Vector for a query; defaults to embedding its tokens."""
        return self.embed_tokens(tokens)


# -- tf-idf ------------------------------------------------------------------


class TfidfBackend(EmbeddingBackend):
    normalized = True

    def __init__(self, vocabulary: list[str], idf: np.ndarray) -> None:
        self.backend_id = "tfidf"
        self.vocabulary = vocabulary
        self.word_ids = {w: i for i, w in enumerate(vocabulary)}
        self.idf = np.asarray(idf, dtype=np.float64)
        self.dim = len(vocabulary)

    def embed_tokens(self, tokens: list[str]) -> np.ndarray:
        vec = np.zeros(self.dim)
        for t in tokens:
            i = self.word_ids.get(t)
            if i is not None:
                vec[i] += 1.0
        vec *= self.idf
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
        return vec


def fit_tfidf(corpus_tokens: TokenLists) -> TfidfBackend:
    """Vocabulary and smoothed idf from the corpus' token lists."""
    if not corpus_tokens:
        raise ClavError("cannot fit tf-idf on an empty corpus")
    vocabulary = sorted({t for toks in corpus_tokens for t in toks})
    df = np.zeros(len(vocabulary))
    word_ids = {w: i for i, w in enumerate(vocabulary)}
    for toks in corpus_tokens:
        for t in set(toks):
            df[word_ids[t]] += 1
    n_docs = len(corpus_tokens)
    idf = np.log((1.0 + n_docs) / (1.0 + df)) + 1.0
    return TfidfBackend(vocabulary, idf)


# -- PV-DBOW -----------------------------------------------------------------


def ns_loss_and_grads(
    doc_vec: np.ndarray, ctx_vecs: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Sigmoid negative-sampling loss and its gradients.

    loss = Σ_i [ -label_i·log σ(s_i) - (1-label_i)·log σ(-s_i) ] with
    s = ctx_vecs @ doc_vec. Returns (loss, dloss/ddoc_vec, dloss/dctx_vecs);
    the training step descends both gradients.
    """
    scores = ctx_vecs @ doc_vec
    # softplus(x) = log(1 + e^x), computed stably
    loss = float(
        np.sum(np.logaddexp(0.0, -scores) * labels)
        + np.sum(np.logaddexp(0.0, scores) * (1.0 - labels))
    )
    g = sigmoid(scores) - labels  # dloss/dscores
    grad_doc = g @ ctx_vecs
    grad_ctx = np.outer(g, doc_vec)
    return loss, grad_doc, grad_ctx


class PvDbowBackend(EmbeddingBackend):
    def __init__(
        self,
        vocabulary: list[str],
        word_vecs: np.ndarray,
        doc_vecs: np.ndarray,
        word_counts: np.ndarray,
        negative: int,
        lr0: float,
        min_count: int,
        seed: int,
        infer_steps: int = 50,
        epoch_losses: list[float] | None = None,
    ) -> None:
        self.backend_id = "pvdbow"
        self.vocabulary = vocabulary
        self.word_ids = {w: i for i, w in enumerate(vocabulary)}
        self.word_vecs = np.asarray(word_vecs, dtype=np.float64)
        self.doc_vecs = np.asarray(doc_vecs, dtype=np.float64)
        self.word_counts = np.asarray(word_counts, dtype=np.int64)
        self.negative = negative
        self.lr0 = lr0
        self.min_count = min_count
        self.seed = seed
        self.infer_steps = infer_steps
        self.epoch_losses = epoch_losses or []
        self.dim = self.word_vecs.shape[1]
        self.noise_cum = _noise_table(self.word_counts)

    @property
    def n_paragraphs(self) -> int:
        return self.doc_vecs.shape[0]

    def token_ids(self, tokens: list[str]) -> list[int]:
        return [self.word_ids[t] for t in tokens if t in self.word_ids]

    def trainable_mask(self, corpus_tokens: TokenLists) -> np.ndarray:
        return np.array([bool(self.token_ids(toks)) for toks in corpus_tokens])

    def embed_tokens(self, tokens: list[str]) -> np.ndarray:
        # Inference with a backend-fixed seed: identical token lists always
        # embed to identical vectors.
        return infer_vector(self, tokens, self.infer_steps, seed=self.seed)


def _noise_table(word_counts: np.ndarray) -> np.ndarray:
    noise = word_counts.astype(np.float64) ** 0.75
    return np.cumsum(noise / noise.sum())


def _draw_noise(noise_cum: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    # clip guards against cum[-1] rounding slightly below 1.0
    return np.minimum(np.searchsorted(noise_cum, uniforms), len(noise_cum) - 1)


def _lr_at(step: int, total: int, lr0: float) -> float:
    lr_min = lr0 / 100.0
    if total <= 1:
        return lr_min
    return lr0 + (lr_min - lr0) * (step / (total - 1))


def train_pvdbow(
    corpus_tokens: TokenLists,
    dim: int = 100,
    epochs: int = 50,
    negative: int = 5,
    lr0: float = 0.025,
    min_count: int = 2,
    seed: int = 1,
) -> PvDbowBackend:
    """Train paragraph vectors with negative sampling.

    One epoch makes as many steps as there are trainable token
    occurrences; each step samples a paragraph uniformly, then one of its
    in-vocabulary tokens. The learning rate decays linearly from lr0 to
    lr0/100 over the whole run. Deterministic per seed.
    """
    counts: dict[str, int] = {}
    for toks in corpus_tokens:
        for t in toks:
            counts[t] = counts.get(t, 0) + 1
    vocabulary = sorted(w for w, c in counts.items() if c >= min_count)
    if not vocabulary:
        raise ClavError("no token passes the min_count filter")
    word_ids = {w: i for i, w in enumerate(vocabulary)}
    doc_token_ids = [
        np.array([word_ids[t] for t in toks if t in word_ids], dtype=np.int64)
        for toks in corpus_tokens
    ]
    trainable = [p for p, ids in enumerate(doc_token_ids) if len(ids) > 0]
    if len(trainable) < 2:
        raise ClavError(
            "corpus must keep >= 2 paragraphs after min_count filtering"
        )

    rng = np.random.default_rng(seed)
    n_paragraphs = len(corpus_tokens)
    doc_vecs = (rng.random((n_paragraphs, dim)) - 0.5) / dim
    word_vecs = np.zeros((len(vocabulary), dim))
    word_counts = np.array([counts[w] for w in vocabulary], dtype=np.int64)
    noise_cum = _noise_table(word_counts)

    steps_per_epoch = int(sum(len(doc_token_ids[p]) for p in trainable))
    total_steps = epochs * steps_per_epoch
    epoch_losses: list[float] = []
    step = 0
    for _epoch in range(epochs):
        pick_doc = rng.integers(0, len(trainable), steps_per_epoch)
        pick_tok = rng.random(steps_per_epoch)
        pick_neg = rng.random((steps_per_epoch, negative))
        loss_sum = 0.0
        for s in range(steps_per_epoch):
            p = trainable[int(pick_doc[s])]
            ids = doc_token_ids[p]
            w = int(ids[int(pick_tok[s] * len(ids))])
            negs = _draw_noise(noise_cum, pick_neg[s])
            negs = negs[negs != w]  # a noise draw hitting the target is skipped
            ctx_ids = np.concatenate(([w], negs))
            labels = np.zeros(len(ctx_ids))
            labels[0] = 1.0
            lr = _lr_at(step, total_steps, lr0)
            loss, grad_doc, grad_ctx = ns_loss_and_grads(
                doc_vecs[p], word_vecs[ctx_ids], labels
            )
            doc_vecs[p] -= lr * grad_doc
            word_vecs[ctx_ids] -= lr * grad_ctx
            loss_sum += loss
            step += 1
        epoch_losses.append(loss_sum / steps_per_epoch)

    return PvDbowBackend(
        vocabulary, word_vecs, doc_vecs, word_counts,
        negative, lr0, min_count, seed, epoch_losses=epoch_losses,
    )


def infer_vector(
    backend: PvDbowBackend,
    tokens: list[str],
    infer_steps: int = 50,
    seed: int = 1,
) -> np.ndarray:
    """Optimize a fresh paragraph vector against frozen token vectors.

    Each step visits the in-vocabulary tokens in order, each with
    ``negative`` noise draws. Deterministic per seed.
    """
    if not tokens:
        raise UnembeddableError("cannot infer a vector for an empty token list")
    ids = backend.token_ids(tokens)
    if not ids:
        raise UnembeddableError("all tokens are out of vocabulary")
    rng = np.random.default_rng(seed)
    vec = (rng.random(backend.dim) - 0.5) / backend.dim
    for step in range(infer_steps):
        lr = _lr_at(step, infer_steps, backend.lr0)
        for w in ids:
            negs = _draw_noise(backend.noise_cum, rng.random(backend.negative))
            negs = negs[negs != w]
            ctx_ids = np.concatenate(([w], negs))
            labels = np.zeros(len(ctx_ids))
            labels[0] = 1.0
            _, grad_doc, _ = ns_loss_and_grads(vec, backend.word_vecs[ctx_ids], labels)
            vec -= lr * grad_doc
    return vec


# -- import backend ----------------------------------------------------------


class ImportBackend(EmbeddingBackend):
    """Externally computed vectors; queries must be present in the file
    under the key ``query:<id>``."""

    normalized = False

    def __init__(self, name: str, dim: int, vectors: dict[str, np.ndarray]) -> None:
        self.backend_id = f"import:{name}"
        self.dim = dim
        self.vectors = vectors

    def embed_tokens(self, tokens: list[str]) -> np.ndarray:
        raise UnembeddableError(
            "import backends serve stored vectors and cannot embed new text"
        )

    def query_vector(self, query_id: str, tokens: list[str]) -> np.ndarray:
        key = f"query:{query_id}"
        vec = self.vectors.get(key)
        if vec is None:
            raise UnembeddableError(f"no imported vector for key {key!r}")
        return vec


def write_import_file(
    path: str | Path, dim: int, records: list[tuple[str, np.ndarray]]
) -> Path:
    """Binary import format: magic 'CLAV', version u8, dim u32, count u32,
    then per record u16 key length + UTF-8 key + dim float32 values."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(IMPORT_MAGIC)
        fh.write(struct.pack("<BII", IMPORT_VERSION, dim, len(records)))
        for key, vec in records:
            vec = np.asarray(vec)
            if vec.shape != (dim,):
                raise FormatError(
                    f"vector for {key!r} has dim {vec.shape}, expected ({dim},)"
                )
            raw = key.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(np.ascontiguousarray(vec, dtype="<f4").tobytes())
    return path


def read_import_file(path: str | Path) -> tuple[int, list[tuple[str, np.ndarray]]]:
    path = Path(path)
    raw = path.read_bytes()
    head = struct.Struct("<4sBII")
    if len(raw) < head.size:
        raise FormatError(f"{path}: truncated import file")
    magic, version, dim, count = head.unpack_from(raw, 0)
    if magic != IMPORT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != IMPORT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = head.size
    records: list[tuple[str, np.ndarray]] = []
    vec_bytes = dim * 4
    for i in range(count):
        if offset + 2 > len(raw):
            raise FormatError(f"{path}: record {i}: truncated key length")
        (key_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        if offset + key_len > len(raw):
            raise FormatError(f"{path}: record {i}: truncated key")
        key = raw[offset : offset + key_len].decode("utf-8")
        offset += key_len
        if offset + vec_bytes > len(raw):
            raise FormatError(
                f"{path}: record {i} ({key!r}): expected {dim} float32 values, "
                "file ends early (dimension mismatch?)"
            )
        vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset)
        offset += vec_bytes
        records.append((key, vec.astype(np.float64)))
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes after records")
    return dim, records


def _parse_doc_key(key: str) -> tuple[str, int]:
    doc_id, sep, index = key.rpartition(":")
    if not sep or not index.isdigit():
        raise FormatError(f"import key {key!r} is not 'doc_id:index' or 'query:<id>'")
    return doc_id, int(index)


def load_import_backend(
    path: str | Path, corpus: Corpus | None = None, name: str | None = None
) -> tuple[ImportBackend, VectorIndex]:
    """Load an import file into a backend plus a paragraph index.

    Keys starting with 'query:' become query vectors; the rest must be
    'doc_id:index'. Pages resolve through the corpus when one is given
    (unresolvable keys go to the skip report); otherwise refs carry page 0.
    """
    path = Path(path)
    dim, records = read_import_file(path)
    if name is None:
        name = path.stem.removesuffix(".vec")
    vectors: dict[str, np.ndarray] = {}
    refs: list[ParagraphRef] = []
    rows: list[np.ndarray] = []
    skipped: list[ParagraphRef] = []
    for key, vec in records:
        if key in vectors:
            raise FormatError(f"{path}: duplicate key {key!r}")
        vectors[key] = vec
        if key.startswith("query:"):
            continue
        doc_id, index = _parse_doc_key(key)
        if corpus is not None:
            try:
                para = corpus.find(doc_id, index)
            except Exception:
                skipped.append(ParagraphRef(doc_id, 0, index))
                continue
            ref = para.ref
        else:
            ref = ParagraphRef(doc_id, 0, index)
        refs.append(ref)
        rows.append(vec)
    backend = ImportBackend(name, dim, vectors)
    matrix = np.vstack(rows) if rows else np.zeros((0, dim))
    index = VectorIndex(refs, matrix, backend.backend_id, skipped)
    return backend, index


def save_pvdbow(backend: PvDbowBackend, path: str | Path) -> Path:
    """Persist a trained model: the import layout for paragraph vectors
    (keys ``p:<position>``) followed by a token-matrix section with the
    hyperparameters, word output vectors, and word counts."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(IMPORT_MAGIC)
        fh.write(struct.pack("<BII", IMPORT_VERSION, backend.dim, backend.n_paragraphs))
        for i in range(backend.n_paragraphs):
            key = f"p:{i}".encode("utf-8")
            fh.write(struct.pack("<H", len(key)))
            fh.write(key)
            fh.write(np.ascontiguousarray(backend.doc_vecs[i], dtype="<f4").tobytes())
        fh.write(struct.pack(
            "<IIdIqI",
            len(backend.vocabulary), backend.negative, backend.lr0,
            backend.min_count, backend.seed, backend.infer_steps,
        ))
        for i, word in enumerate(backend.vocabulary):
            raw = word.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(np.ascontiguousarray(backend.word_vecs[i], dtype="<f4").tobytes())
            fh.write(struct.pack("<q", int(backend.word_counts[i])))
    return path


def load_pvdbow(path: str | Path) -> PvDbowBackend:
    path = Path(path)
    raw = path.read_bytes()
    head = struct.Struct("<4sBII")
    if len(raw) < head.size:
        raise FormatError(f"{path}: truncated model file")
    magic, version, dim, p_count = head.unpack_from(raw, 0)
    if magic != IMPORT_MAGIC or version != IMPORT_VERSION:
        raise FormatError(f"{path}: not a pvdbow model file")
    offset = head.size
    doc_vecs = np.zeros((p_count, dim))
    for i in range(p_count):
        (key_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2 + key_len
        doc_vecs[i] = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset)
        offset += dim * 4
    meta = struct.Struct("<IIdIqI")
    w_count, negative, lr0, min_count, seed, infer_steps = meta.unpack_from(raw, offset)
    offset += meta.size
    vocabulary: list[str] = []
    word_vecs = np.zeros((w_count, dim))
    word_counts = np.zeros(w_count, dtype=np.int64)
    for i in range(w_count):
        (key_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        vocabulary.append(raw[offset : offset + key_len].decode("utf-8"))
        offset += key_len
        word_vecs[i] = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset)
        offset += dim * 4
        (word_counts[i],) = struct.unpack_from("<q", raw, offset)
        offset += 8
    if offset != len(raw):
        raise FormatError(f"{path}: trailing bytes in model file")
    return PvDbowBackend(
        vocabulary, word_vecs, doc_vecs, word_counts,
        negative, lr0, min_count, seed, infer_steps=infer_steps,
    )


# -- index construction and persistence ---------------------------------------


def build_index(
    corpus: Corpus, backend: EmbeddingBackend, norm: Normalizer
) -> VectorIndex:
    """One row per embeddable paragraph, in corpus order; paragraphs that
    cannot be embedded are excluded and listed in the skip report."""
    refs: list[ParagraphRef] = []
    rows: list[np.ndarray] = []
    skipped: list[ParagraphRef] = []
    if isinstance(backend, PvDbowBackend):
        if backend.n_paragraphs != len(corpus.paragraphs):
            raise ClavError(
                f"pvdbow backend was trained on {backend.n_paragraphs} paragraphs "
                f"but the corpus has {len(corpus.paragraphs)}; retrain on this corpus"
            )
        for i, para in enumerate(corpus.paragraphs):
            if backend.token_ids(norm.prep(para.text)):
                refs.append(para.ref)
                rows.append(backend.doc_vecs[i])
            else:
                skipped.append(para.ref)
    elif isinstance(backend, ImportBackend):
        raise ClavError(
            "import backends come with their index; use load_import_backend"
        )
    else:
        for para in corpus.paragraphs:
            vec = backend.embed_tokens(norm.prep(para.text))
            if float(np.linalg.norm(vec)) == 0.0:
                skipped.append(para.ref)
            else:
                refs.append(para.ref)
                rows.append(vec)
    matrix = np.vstack(rows) if rows else np.zeros((0, backend.dim))
    return VectorIndex(refs, matrix, backend.backend_id, skipped)


def save_index(index: VectorIndex, path: str | Path) -> Path:
    """Persist an index in the import format (float32 at the boundary)."""
    records = [(ref.key(), row) for ref, row in zip(index.refs, index.matrix)]
    return write_import_file(path, index.dim, records)


def load_index(
    path: str | Path, backend_id: str, corpus: Corpus | None = None
) -> VectorIndex:
    """Read back a saved index; pages resolve through the corpus if given."""
    dim, records = read_import_file(path)
    refs = []
    rows = []
    for key, vec in records:
        doc_id, index = _parse_doc_key(key)
        if corpus is not None:
            refs.append(corpus.find(doc_id, index).ref)
        else:
            refs.append(ParagraphRef(doc_id, 0, index))
        rows.append(vec)
    matrix = np.vstack(rows) if rows else np.zeros((0, dim))
    return VectorIndex(refs, matrix, backend_id)
