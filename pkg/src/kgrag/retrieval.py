"""Hybrid passage retrieval: BM25 sparse search, hashed dense search, RRF fusion."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

# (passage_id, score) pairs, descending score, ties by ascending id.
RankedList = list[tuple[str, float]]

INDEX_FORMAT = "kgrag-corpus-index"
INDEX_VERSION = 1

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class IngestError(ValueError):
    """Raised when a corpus record cannot be indexed (duplicate or missing id)."""


def tokenize(text: str) -> list[str]:
    """Lowercase Unicode-alphanumeric word segmentation; no stemming, no stopwords."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Passage:
    """A retrievable text chunk."""

    id: str
    text: str


class Bm25Index:
    """Inverted-index BM25 scorer (k1=1.2, b=0.75 defaults).

    Keys are caller-defined (passage ids or triple offsets). Query tokens are
    scored with multiplicity and idf is the non-negative Lucene variant
    ln((N - df + 0.5) / (df + 0.5) + 1), so any term match yields a positive
    contribution and unmatched documents never appear in the score map.
    """

    def __init__(self, k1: float = 1.2, b: float = 0.75) -> None:
        self.k1 = k1
        self.b = b
        self.postings: dict[str, list[tuple[object, int]]] = {}
        self.doc_lengths: dict[object, int] = {}
        self.total_length = 0

    def add(self, key: object, tokens: Sequence[str]) -> None:
        if key in self.doc_lengths:
            raise IngestError(f"duplicate index key: {key!r}")
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for tok, tf in counts.items():
            self.postings.setdefault(tok, []).append((key, tf))
        self.doc_lengths[key] = len(tokens)
        self.total_length += len(tokens)

    @property
    def size(self) -> int:
        return len(self.doc_lengths)

    @property
    def avg_doc_length(self) -> float:
        return self.total_length / self.size if self.size else 0.0

    def idf(self, token: str) -> float:
        df = len(self.postings.get(token, ()))
        if df == 0:
            return 0.0
        return math.log((self.size - df + 0.5) / (df + 0.5) + 1.0)

    def scores(self, query_tokens: Sequence[str]) -> dict[object, float]:
        """Accumulated BM25 scores for every document sharing a term with the query."""
        acc: dict[object, float] = {}
        if not self.size:
            return acc
        avgdl = self.avg_doc_length
        for tok in query_tokens:
            posting = self.postings.get(tok)
            if not posting:
                continue
            idf = self.idf(tok)
            for key, tf in posting:
                dl = self.doc_lengths[key]
                norm = self.k1 * (1.0 - self.b + self.b * (dl / avgdl if avgdl else 0.0))
                acc[key] = acc.get(key, 0.0) + idf * (tf * (self.k1 + 1.0)) / (tf + norm)
        return acc


class HashedTfEmbedder:
    """Deterministic feature-hashed term-frequency embedder.

    Buckets come from blake2b(token) mod dim, so vectors are stable across
    processes and platforms (the builtin hash() is salted per process and
    must not be used here).
    """

    def __init__(self, dim: int = 512) -> None:
        if dim <= 0:
            raise ValueError("embedding dim must be positive")
        self.dim = dim

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.dim

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for tok in tokenize(text):
            vec[self._bucket(tok)] += 1.0
        return vec


@dataclass
class CorpusIndex:
    """In-memory corpus index: passages, BM25 postings, unit dense vectors."""

    passages: dict[str, Passage]
    bm25: Bm25Index
    embedder: HashedTfEmbedder
    dense_ids: list[str]
    dense_matrix: np.ndarray
    rejected_empty: int = 0

    @property
    def size(self) -> int:
        return len(self.passages)

    def get(self, passage_id: str) -> Passage:
        return self.passages[passage_id]


def ingest_corpus(
    records: Iterable[Mapping[str, object]],
    *,
    k1: float = 1.2,
    b: float = 0.75,
    dim: int = 512,
) -> CorpusIndex:
    """Build a CorpusIndex from id/text records.

    Records with empty or whitespace-only text are rejected and counted on
    the returned index. A duplicate or missing id raises IngestError naming
    the offender. Unknown record fields are ignored.
    """
    embedder = HashedTfEmbedder(dim=dim)
    bm25 = Bm25Index(k1=k1, b=b)
    passages: dict[str, Passage] = {}
    vectors: list[np.ndarray] = []
    rejected = 0
    for record in records:
        pid = record.get("id")
        if not isinstance(pid, str) or not pid:
            raise IngestError(f"record is missing a non-empty string id: {record!r}")
        text = record.get("text")
        if not isinstance(text, str):
            raise IngestError(f"record {pid!r} is missing a string text field")
        if pid in passages:
            raise IngestError(f"duplicate passage id: {pid!r}")
        if not text.strip():
            rejected += 1
            continue
        passages[pid] = Passage(id=pid, text=text)
        bm25.add(pid, tokenize(text))
        vectors.append(embedder.embed(text))
    if vectors:
        matrix = np.stack(vectors)
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        np.divide(matrix, norms, out=matrix, where=norms > 0)
    else:
        matrix = np.zeros((0, dim), dtype=np.float64)
    if rejected:
        logger.info("ingest rejected %d empty-text record(s)", rejected)
    return CorpusIndex(
        passages=passages,
        bm25=bm25,
        embedder=embedder,
        dense_ids=list(passages.keys()),
        dense_matrix=matrix,
        rejected_empty=rejected,
    )


def load_corpus_file(path: str) -> list[dict]:
    """Read UTF-8 line-delimited JSON records, skipping blank lines."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON record: {exc}") from exc
    return records


def save_index(index: CorpusIndex, path: str) -> None:
    """Persist an index as a versioned, self-describing JSON document."""
    doc = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "bm25": {"k1": index.bm25.k1, "b": index.bm25.b},
        "embedder": {"kind": "hashed_tf", "dim": index.embedder.dim},
        "rejected_empty": index.rejected_empty,
        "passages": [{"id": p.id, "text": p.text} for p in index.passages.values()],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, ensure_ascii=False)
        fh.write("\n")


def load_index(path: str) -> CorpusIndex:
    """Load a persisted index; postings and vectors are rebuilt deterministically."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != INDEX_FORMAT:
        raise ValueError(f"{path}: not a corpus index file")
    if doc.get("version") != INDEX_VERSION:
        raise ValueError(f"{path}: unsupported index version {doc.get('version')!r}")
    index = ingest_corpus(
        doc["passages"],
        k1=doc["bm25"]["k1"],
        b=doc["bm25"]["b"],
        dim=doc["embedder"]["dim"],
    )
    index.rejected_empty = doc.get("rejected_empty", 0)
    return index


def _ranked(scores: Mapping[str, float], k: int) -> RankedList:
    ordered = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return ordered[:k]


def sparse_search(index: CorpusIndex, query: str, k: int) -> RankedList:
    """Top-k BM25 passages; only passages sharing a term with the query appear."""
    if k <= 0:
        return []
    tokens = tokenize(query)
    if not tokens:
        return []
    return _ranked(index.bm25.scores(tokens), k)  # type: ignore[arg-type]


def dense_search(index: CorpusIndex, query: str, k: int) -> RankedList:
    """Top-k passages by cosine similarity of hashed-TF vectors.

    Passages with zero similarity are dropped; a query with no hashed
    features (zero vector) yields an empty list.
    """
    if k <= 0 or not index.dense_ids:
        return []
    qvec = index.embedder.embed(query)
    qnorm = np.linalg.norm(qvec)
    if qnorm == 0.0:
        return []
    sims = index.dense_matrix @ (qvec / qnorm)
    scores = {pid: float(s) for pid, s in zip(index.dense_ids, sims) if s > 0.0}
    return _ranked(scores, k)


def rrf_fuse(ranked_lists: Sequence[RankedList], kappa: float = 60.0) -> RankedList:
    """Reciprocal rank fusion: score(p) = sum over lists of 1 / (kappa + rank).

    Ranks start at 1 within each list; input scores are ignored, only
    positions matter. Output is descending by fused score, ties broken by
    ascending passage id.
    """
    fused: dict[str, float] = {}
    for ranked in ranked_lists:
        for rank, (pid, _score) in enumerate(ranked, start=1):
            fused[pid] = fused.get(pid, 0.0) + 1.0 / (kappa + rank)
    return sorted(fused.items(), key=lambda item: (-item[1], item[0]))


def hybrid_search(
    index: CorpusIndex,
    query: str,
    k: int,
    *,
    kappa: float = 60.0,
    k_pool: int | None = None,
) -> RankedList:
    """Dense and sparse top-k_pool lists fused by RRF, truncated to k.

    k_pool defaults to 2*k; holding it fixed makes hybrid_search(q, k) a
    prefix of hybrid_search(q, k+1).
    """
    if k <= 0:
        return []
    pool = 2 * k if k_pool is None else k_pool
    dense = dense_search(index, query, pool)
    sparse = sparse_search(index, query, pool)
    return rrf_fuse([dense, sparse], kappa)[:k]
