"""Topic modeling: collapsed Gibbs LDA, UMass coherence, topic-count
selection, and keyword localization.

The sampler keeps the usual count tables (topic-term, topic, doc-topic)
and reassigns every token each sweep from the collapsed conditional

    p(z = t) ∝ (n_tw + β) / (n_t + V·β) · (n_dt + α).

Point estimates come from the final sample's smoothed counts. All
randomness flows through one explicitly seeded generator, so a fixed seed
reproduces the model bit-for-bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .errors import ClavError, FormatError

TokenLists = list[list[str]]


@njit(cache=True)
def _seed_rng(seed):
    np.random.seed(seed)


@njit(cache=True)
def _init_assignments(token_words, token_docs, k, n_kw, n_k, n_dk):
    n = token_words.shape[0]
    z = np.empty(n, dtype=np.int32)
    for i in range(n):
        t = np.random.randint(0, k)
        z[i] = t
        n_kw[t, token_words[i]] += 1
        n_k[t] += 1
        n_dk[token_docs[i], t] += 1
    return z


@njit(cache=True)
def _run_sweeps(z, token_words, token_docs, n_kw, n_k, n_dk, alpha, beta, sweeps):
    n = token_words.shape[0]
    k = n_kw.shape[0]
    v = n_kw.shape[1]
    v_beta = v * beta
    p = np.empty(k)
    for _ in range(sweeps):
        for i in range(n):
            w = token_words[i]
            d = token_docs[i]
            t = z[i]
            n_kw[t, w] -= 1
            n_k[t] -= 1
            n_dk[d, t] -= 1

            total = 0.0
            for tt in range(k):
                p[tt] = (n_kw[tt, w] + beta) / (n_k[tt] + v_beta) * (n_dk[d, tt] + alpha)
                total += p[tt]
            r = np.random.random() * total
            acc = 0.0
            new_t = k - 1
            for tt in range(k):
                acc += p[tt]
                if r < acc:
                    new_t = tt
                    break

            z[i] = new_t
            n_kw[new_t, w] += 1
            n_k[new_t] += 1
            n_dk[d, new_t] += 1


@dataclass
class TopicModel:
    k: int
    vocabulary: list[str]
    phi: np.ndarray  # K x V, row-stochastic
    theta: np.ndarray  # D x K, row-stochastic
    alpha: float
    beta: float
    seed: int
    iterations: int

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ClavError(f"topic count must be >= 2, got {self.k}")
        if not np.allclose(self.phi.sum(axis=1), 1.0, atol=1e-9):
            raise ClavError("phi rows do not sum to 1")
        if not np.allclose(self.theta.sum(axis=1), 1.0, atol=1e-9):
            raise ClavError("theta rows do not sum to 1")
        if (self.phi < 0).any() or (self.theta < 0).any():
            raise ClavError("negative probability in topic model")


@dataclass
class CoherenceReport:
    per_topic: list[float]
    mean: float
    top_n: int


@dataclass
class KeywordLocation:
    keyword: str
    out_of_vocabulary: bool
    topics: list[int]
    documents: list[int]


class GibbsState:
    """Mutable sampler state; drives :func:`fit_lda` and the count-
    conservation checks, one sweep at a time."""

    def __init__(self, corpus_tokens: TokenLists, k: int, seed: int) -> None:
        if not corpus_tokens:
            raise ClavError("empty corpus")
        for d, toks in enumerate(corpus_tokens):
            if not toks:
                raise ClavError(f"document {d} has no tokens")
        self.vocabulary = sorted({t for toks in corpus_tokens for t in toks})
        word_ids = {w: i for i, w in enumerate(self.vocabulary)}
        flat_words: list[int] = []
        flat_docs: list[int] = []
        for d, toks in enumerate(corpus_tokens):
            for t in toks:
                flat_words.append(word_ids[t])
                flat_docs.append(d)
        if k > len(flat_words):
            raise ClavError(
                f"k={k} exceeds total token count {len(flat_words)}"
            )
        self.k = k
        self.n_docs = len(corpus_tokens)
        self.seed = seed
        self.token_words = np.asarray(flat_words, dtype=np.int32)
        self.token_docs = np.asarray(flat_docs, dtype=np.int32)
        self.n_kw = np.zeros((k, len(self.vocabulary)), dtype=np.int64)
        self.n_k = np.zeros(k, dtype=np.int64)
        self.n_dk = np.zeros((self.n_docs, k), dtype=np.int64)
        _seed_rng(seed)
        self.z = _init_assignments(
            self.token_words, self.token_docs, k, self.n_kw, self.n_k, self.n_dk
        )
        self.sweeps_done = 0

    def sweep(self, alpha: float, beta: float, n: int = 1) -> None:
        _run_sweeps(
            self.z, self.token_words, self.token_docs,
            self.n_kw, self.n_k, self.n_dk, alpha, beta, n,
        )
        self.sweeps_done += n

    def point_estimate(self, alpha: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
        v = len(self.vocabulary)
        phi = (self.n_kw + beta) / (self.n_k[:, None] + v * beta)
        doc_len = self.n_dk.sum(axis=1)
        theta = (self.n_dk + alpha) / (doc_len[:, None] + self.k * alpha)
        return phi, theta


def fit_lda(
    corpus_tokens: TokenLists,
    k: int,
    alpha: float | None = None,
    beta: float = 0.01,
    iterations: int = 1000,
    seed: int = 1,
    burn_in: int = 0,
) -> TopicModel:
    """Collapsed Gibbs sampling; deterministic for a fixed seed.

    alpha defaults to the symmetric 50/k heuristic. burn_in adds extra
    sweeps before the counted iterations; the point estimate is always
    taken from the final sample.
    """
    if iterations < 1:
        raise ClavError(f"iterations must be >= 1, got {iterations}")
    if alpha is None:
        alpha = 50.0 / k
    state = GibbsState(corpus_tokens, k, seed)
    total = burn_in + iterations
    state.sweep(alpha, beta, total)
    phi, theta = state.point_estimate(alpha, beta)
    return TopicModel(
        k=k,
        vocabulary=state.vocabulary,
        phi=phi,
        theta=theta,
        alpha=alpha,
        beta=beta,
        seed=seed,
        iterations=total,
    )


def top_terms(model: TopicModel, topic: int, n: int) -> list[tuple[str, float]]:
    """Top-n terms of one topic, descending probability, ties by vocabulary order."""
    if not 0 <= topic < model.k:
        raise ClavError(f"topic index {topic} out of range 0..{model.k - 1}")
    if n < 1:
        raise ClavError(f"n must be >= 1, got {n}")
    row = model.phi[topic]
    order = sorted(range(len(row)), key=lambda w: (-row[w], w))
    return [(model.vocabulary[w], float(row[w])) for w in order[:n]]


def coherence(
    model: TopicModel, corpus_tokens: TokenLists, top_n: int = 10
) -> CoherenceReport:
    """UMass coherence per topic over the corpus' document frequencies.

    score = Σ_{i=2..N} Σ_{j<i} log((D(w_i, w_j) + 1) / D(w_j)) for the
    topic's top terms in phi order; pairs with D(w_j) = 0 are skipped.
    """
    if top_n < 2:
        raise ClavError(f"top_n must be >= 2, got {top_n}")
    doc_sets: dict[str, set[int]] = {}
    for d, toks in enumerate(corpus_tokens):
        for t in set(toks):
            doc_sets.setdefault(t, set()).add(d)
    per_topic = []
    for topic in range(model.k):
        terms = [w for w, _ in top_terms(model, topic, top_n)]
        score = 0.0
        for i in range(1, len(terms)):
            docs_i = doc_sets.get(terms[i], set())
            for j in range(i):
                docs_j = doc_sets.get(terms[j], set())
                d_j = len(docs_j)
                if d_j == 0:
                    continue
                d_ij = len(docs_i & docs_j)
                score += np.log((d_ij + 1) / d_j)
        per_topic.append(float(score))
    return CoherenceReport(per_topic, float(np.mean(per_topic)), top_n)


def select_k(
    corpus_tokens: TokenLists,
    k_min: int,
    k_max: int,
    alpha: float | None = None,
    beta: float = 0.01,
    iterations: int = 1000,
    seed: int = 1,
    top_n: int = 10,
) -> tuple[int, list[tuple[int, float]]]:
    """Fit one model per k (seed derived as seed + k) and pick the k with
    the highest mean coherence; ties go to the smallest k."""
    if k_min > k_max:
        raise ClavError(f"empty k range {k_min}..{k_max}")
    if k_min < 2:
        raise ClavError(f"k range must start at >= 2, got {k_min}")
    scores: list[tuple[int, float]] = []
    best_k = None
    best_score = -np.inf
    for k in range(k_min, k_max + 1):
        model = fit_lda(
            corpus_tokens, k, alpha=alpha, beta=beta,
            iterations=iterations, seed=seed + k,
        )
        mean = coherence(model, corpus_tokens, top_n).mean
        scores.append((k, mean))
        if mean > best_score:
            best_score = mean
            best_k = k
    assert best_k is not None
    return best_k, scores


def locate_keywords(
    model: TopicModel,
    keywords: list[str],
    top_n: int = 10,
    theta_threshold: float = 0.2,
) -> list[KeywordLocation]:
    """Map keywords to the topics whose top terms contain them, and to the
    documents loading those topics above the theta threshold."""
    vocab = set(model.vocabulary)
    topic_terms = [
        {w for w, _ in top_terms(model, t, top_n)} for t in range(model.k)
    ]
    out = []
    for keyword in keywords:
        if keyword not in vocab:
            out.append(KeywordLocation(keyword, True, [], []))
            continue
        topics = [t for t in range(model.k) if keyword in topic_terms[t]]
        docs: set[int] = set()
        for t in topics:
            docs.update(np.nonzero(model.theta[:, t] > theta_threshold)[0].tolist())
        out.append(KeywordLocation(keyword, False, topics, sorted(docs)))
    return out


def load_keywords(path: str | Path) -> list[str]:
    """One keyword per line, '#' comments."""
    lines = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            lines.append(line)
    return lines


# -- serialization ---------------------------------------------------------

_HEADER = struct.Struct("<IIIddq")  # k, V, D, alpha, beta, seed


def save_model(model: TopicModel, path: str | Path) -> Path:
    """Binary layout: header, phi then theta as row-major little-endian
    float64, then the vocabulary as length-prefixed UTF-8 strings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = model.theta.shape[0]
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(
            model.k, len(model.vocabulary), d, model.alpha, model.beta, model.seed
        ))
        fh.write(np.ascontiguousarray(model.phi, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.theta, dtype="<f8").tobytes())
        for term in model.vocabulary:
            raw = term.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
    return path


def load_model(path: str | Path) -> TopicModel:
    """Inverse of :func:`save_model`. The sweep count is not persisted, so
    the loaded model reports iterations=0."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated topic model")
    k, v, d, alpha, beta, seed = _HEADER.unpack_from(raw, 0)
    offset = _HEADER.size
    phi_bytes = k * v * 8
    theta_bytes = d * k * 8
    if len(raw) < offset + phi_bytes + theta_bytes:
        raise FormatError(f"{path}: truncated topic model matrices")
    phi = np.frombuffer(raw, dtype="<f8", count=k * v, offset=offset).reshape(k, v)
    offset += phi_bytes
    theta = np.frombuffer(raw, dtype="<f8", count=d * k, offset=offset).reshape(d, k)
    offset += theta_bytes
    vocabulary = []
    for _ in range(v):
        if offset + 2 > len(raw):
            raise FormatError(f"{path}: truncated vocabulary")
        (length,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        if offset + length > len(raw):
            raise FormatError(f"{path}: truncated vocabulary entry")
        vocabulary.append(raw[offset : offset + length].decode("utf-8"))
        offset += length
    if offset != len(raw):
        raise FormatError(f"{path}: trailing bytes in topic model")
    return TopicModel(
        k=k,
        vocabulary=vocabulary,
        phi=phi.copy(),
        theta=theta.copy(),
        alpha=alpha,
        beta=beta,
        seed=seed,
        iterations=0,
    )
